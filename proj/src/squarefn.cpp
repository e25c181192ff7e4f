#include "sqfn/squarefn.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "sqfn/parallel.hpp"

namespace sqfn {

namespace {

Vector tderiv_multiplier(const SpectralDecomposition& dec, double t) {
    const auto sq = dec.eigenvalues().array().sqrt();
    return (-t * sq * (-t * sq).exp()).matrix();  // t * d/dt e^{-t sqrt(lambda)}
}

double accumulate_norm_pow(const BanachSurrogate& X, const double* row, Index stride, double q) {
    // ||row||_X^q with components strided over the column-major block
    double nrm;
    if (X.is_sup_norm()) {
        nrm = 0.0;
        for (int c = 0; c < X.n; ++c) nrm = std::max(nrm, std::abs(row[c * stride]));
    } else if (X.r == 2.0) {
        double s = 0.0;
        for (int c = 0; c < X.n; ++c) s += row[c * stride] * row[c * stride];
        nrm = std::sqrt(s);
    } else if (X.r == 1.0) {
        nrm = 0.0;
        for (int c = 0; c < X.n; ++c) nrm += std::abs(row[c * stride]);
    } else {
        double s = 0.0;
        for (int c = 0; c < X.n; ++c) s += std::pow(std::abs(row[c * stride]), X.r);
        nrm = std::pow(s, 1.0 / X.r);
    }
    return std::pow(nrm, q);
}

}  // namespace

SquareFunctionConfig SquareFunctionConfig::make(double q, double t_min, double t_max, int count,
                                                SemigroupKind kind, double alpha) {
    if (!(q >= 2.0)) throw std::invalid_argument("square function: q must be >= 2");
    if (!(t_min > 0.0 && t_max > t_min)) throw std::invalid_argument("square function: bad t range");
    if (count < 64) throw std::invalid_argument("square function: t grid needs >= 64 nodes");
    if (!(alpha > 0.0)) throw std::invalid_argument("square function: alpha must be > 0");
    SquareFunctionConfig cfg;
    cfg.q = q;
    cfg.kind = kind;
    cfg.alpha = alpha;
    cfg.t_grid.resize(count);
    for (int i = 0; i < count; ++i)
        cfg.t_grid[i] = t_min * std::pow(t_max / t_min, static_cast<double>(i) / (count - 1));
    return cfg;
}

SquareFunctionConfig SquareFunctionConfig::make_for_spectrum(double q,
                                                             const SpectralDecomposition& dec,
                                                             double s_min, double s_max, int count,
                                                             SemigroupKind kind) {
    const Vector& lam = dec.eigenvalues();
    double lo = 0.0, hi = 0.0;
    for (Index j = 0; j < lam.size(); ++j) {
        if (lam[j] > 1e-12) {
            lo = lam[j];
            break;
        }
    }
    hi = lam[lam.size() - 1];
    if (lo == 0.0) throw std::invalid_argument("spectrum has no positive eigenvalue");
    return make(q, s_min / std::sqrt(hi), s_max / std::sqrt(lo), count, kind);
}

void SquareFunctionConfig::validate_coverage(const SpectralDecomposition& dec) const {
    const Vector& lam = dec.eigenvalues();
    double lam_min_pos = 0.0;
    for (Index j = 0; j < lam.size(); ++j)
        if (lam[j] > 1e-12) {
            lam_min_pos = lam[j];
            break;
        }
    const double lam_max = lam[lam.size() - 1];
    if (lam_min_pos == 0.0) throw std::invalid_argument("spectrum has no positive eigenvalue");
    if (t_grid[0] * std::sqrt(lam_max) > 10.0)
        throw std::invalid_argument("t grid misses the high-frequency end of the spectrum");
    if (t_grid[t_grid.size() - 1] * std::sqrt(lam_min_pos) < 10.0)
        throw std::invalid_argument("t grid misses the low-frequency end of the spectrum");
}

Vector SquareFunctionConfig::log_weights() const {
    const Index n = t_grid.size();
    Vector w(n);
    if (n == 1) {
        w[0] = 1.0;
        return w;
    }
    const double dv = std::log(t_grid[1] / t_grid[0]);
    w.setConstant(dv);
    w[0] *= 0.5;
    w[n - 1] *= 0.5;
    return w;
}

std::vector<Vector> g_function_batch(const SquareFunctionConfig& cfg, const Matrix& columns,
                                     const std::vector<BanachSurrogate>& blocks,
                                     const SpectralDecomposition& dec) {
    cfg.validate_coverage(dec);
    Index total = 0;
    for (const auto& X : blocks) total += X.n;
    if (total != columns.cols()) throw std::invalid_argument("g_function_batch: block widths mismatch");

    const Index nodes = columns.rows();
    const Vector w = cfg.log_weights();
    Matrix coef = dec.coefficients(columns);
    std::vector<Vector> acc(blocks.size(), Vector::Zero(nodes));

    Matrix scaled(coef.rows(), coef.cols());
    for (Index ti = 0; ti < cfg.t_grid.size(); ++ti) {
        const Vector mult = tderiv_multiplier(dec, cfg.t_grid[ti]);
        scaled = coef;
        scaled.array().colwise() *= mult.array();
        const Matrix u = dec.modes() * scaled;  // node x total
        const double wt = w[ti];
        const double q = cfg.q;
        parallel_for(0, nodes, [&](Index x) {
            Index off = 0;
            for (std::size_t b = 0; b < blocks.size(); ++b) {
                acc[b][x] += wt * accumulate_norm_pow(blocks[b], u.data() + off * nodes + x, nodes, q);
                off += blocks[b].n;
            }
        });
    }
    for (auto& a : acc)
        for (Index x = 0; x < nodes; ++x) a[x] = std::pow(a[x], 1.0 / cfg.q);
    return acc;
}

Vector g_function(const SquareFunctionConfig& cfg, const VectorField& f,
                  const SpectralDecomposition& dec) {
    if (f.values.rows() != dec.grid().node_count())
        throw std::invalid_argument("g_function: field length mismatch");
    return g_function_batch(cfg, f.values, {f.space}, dec)[0];
}

SplitFields g_split(const SquareFunctionConfig& cfg, const VectorField& f,
                    const SpectralDecomposition& dec, const PotentialProfile& profile) {
    cfg.validate_coverage(dec);
    const Grid& g = dec.grid();
    const Index nodes = g.node_count();
    if (f.values.rows() != nodes) throw std::invalid_argument("g_split: field length mismatch");
    const int n = f.space.n;
    const double hd = g.cell_volume();
    const Vector w = cfg.log_weights();

    // Row neighborhoods of N: y with |x - y| <= rho(x).
    std::vector<std::vector<Index>> nbr(static_cast<std::size_t>(nodes));
    parallel_for(0, nodes, [&](Index x) {
        nbr[static_cast<std::size_t>(x)] = g.nodes_in_ball(Ball(g.node(x), profile.rho(x)));
    });

    Vector acc_full = Vector::Zero(nodes);
    Vector acc_mask = Vector::Zero(nodes);
    Vector acc_glob = Vector::Zero(nodes);

    Matrix masked(nodes, n), global(nodes, n);
    for (Index ti = 0; ti < cfg.t_grid.size(); ++ti) {
        const Vector mult = tderiv_multiplier(dec, cfg.t_grid[ti]);
        const Matrix kt = dec.kernel_matrix(mult);
        const Matrix full = hd * (kt * f.values);
        const double wt = w[ti];
        const double q = cfg.q;
        parallel_for(0, nodes, [&](Index x) {
            const auto& ys = nbr[static_cast<std::size_t>(x)];
            for (int c = 0; c < n; ++c) {
                double s = 0.0;
                for (Index y : ys) s += kt(x, y) * f.values(y, c);
                const double masked_v = hd * s;
                masked(x, c) = masked_v;
                global(x, c) = full(x, c) - masked_v;  // exact complement split
            }
            acc_full[x] += wt * accumulate_norm_pow(f.space, full.data() + x, nodes, q);
            acc_mask[x] += wt * accumulate_norm_pow(f.space, masked.data() + x, nodes, q);
            acc_glob[x] += wt * accumulate_norm_pow(f.space, global.data() + x, nodes, q);
        });
    }

    SplitFields out;
    out.g = acc_full.array().pow(1.0 / cfg.q);
    out.g_masked = acc_mask.array().pow(1.0 / cfg.q);
    out.g_global = acc_glob.array().pow(1.0 / cfg.q);
    out.g_local = out.g - out.g_global;
    return out;
}

double pointwise_cut_gap(const SplitFields& s) {
    double worst = -std::numeric_limits<double>::infinity();
    for (Index x = 0; x < s.g.size(); ++x)
        worst = std::max(worst, std::abs(s.g[x] - s.g_masked[x]) - s.g_global[x]);
    return worst;
}

double unit_sphere_area(int d) {
    return 2.0 * std::pow(M_PI, 0.5 * d) / std::tgamma(0.5 * d);
}

double kernel_L_value(double rho_x, double dist, int d, double alpha) {
    if (dist == 0.0) throw std::domain_error("kernel L is singular at x = y");
    return std::pow(rho_x, alpha) / std::pow(dist, d + alpha);
}

double kernel_M_value(double rho_x, double dist, int d, double delta) {
    if (dist == 0.0) throw std::domain_error("kernel M is singular at x = y");
    return std::pow(rho_x, -delta) / std::pow(dist, d - delta);
}

double kernel_L(const PotentialProfile& p, Index x, Index y, double alpha) {
    return kernel_L_value(p.rho(x), p.grid().dist(x, y), p.grid().dimension(), alpha);
}

double kernel_M(const PotentialProfile& p, Index x, Index y, double delta) {
    return kernel_M_value(p.rho(x), p.grid().dist(x, y), p.grid().dimension(), delta);
}

double kernel_L_row_integral(const Grid& g, const Vector& x, double rho_x, double alpha) {
    double r_in = g.half_width() - 0.0;
    for (int k = 0; k < g.dimension(); ++k) r_in = std::min(r_in, g.half_width() - std::abs(x[k]));
    if (!(rho_x < r_in))
        throw std::invalid_argument("kernel_L_row_integral: rho must fit inside the box");
    const auto inner = g.nodes_in_ball(Ball(x, r_in));
    double lat = 0.0;
    for (Index y : inner) {
        const double dist = g.dist(y, x);
        if (dist > rho_x) lat += kernel_L_value(rho_x, dist, g.dimension(), alpha);
    }
    lat *= g.cell_volume();
    const double tail = unit_sphere_area(g.dimension()) * std::pow(rho_x / r_in, alpha) / alpha;
    return lat + tail;
}

double kernel_M_row_integral(const Grid& g, const Vector& x, double rho_x, double delta) {
    const double r0 = 2.0 * g.spacing();
    if (!(rho_x > r0))
        throw std::invalid_argument("kernel_M_row_integral: rho must exceed the lattice cutoff");
    const auto nodes = g.nodes_in_ball(Ball(x, rho_x));
    double lat = 0.0;
    for (Index y : nodes) {
        const double dist = g.dist(y, x);
        if (dist > r0) lat += kernel_M_value(rho_x, dist, g.dimension(), delta);
    }
    lat *= g.cell_volume();
    const double head =
        unit_sphere_area(g.dimension()) * std::pow(r0 / rho_x, delta) / delta;
    return lat + head;
}

double annulus_row_integral(const Grid& g, const Vector& x, double rho_x, double C1) {
    if (!(C1 > 0.0 && C1 < 1.0)) throw std::invalid_argument("annulus: C1 must be in (0,1)");
    const double a = C1 / (1.0 + C1) * rho_x;
    const double b = 3.0 / C1 * rho_x;
    const auto nodes = g.nodes_in_ball(Ball(x, b));
    double lat = 0.0;
    for (Index y : nodes) {
        const double dist = g.dist(y, x);
        if (dist >= a) lat += std::pow(dist, -static_cast<double>(g.dimension()));
    }
    return lat * g.cell_volume();
}

namespace {

DominationReport fit_domination(const Vector& lhs, const Vector& rhs) {
    DominationReport rep;
    double best = 0.0;
    for (Index x = 0; x < lhs.size(); ++x) {
        if (rhs[x] > 0.0) {
            const double c = lhs[x] / rhs[x];
            if (c > best) {
                best = c;
                rep.argmax = x;
                rep.lhs_at_argmax = lhs[x];
                rep.rhs_at_argmax = rhs[x];
            }
        } else if (lhs[x] > 1e-14) {
            rep.finite = false;
            rep.argmax = x;
            rep.lhs_at_argmax = lhs[x];
            rep.rhs_at_argmax = 0.0;
        }
    }
    rep.constant = best;
    if (!std::isfinite(best)) rep.finite = false;
    return rep;
}

}  // namespace

DominationReport check_global_domination(const SquareFunctionConfig& cfg, const VectorField& f,
                                         const SpectralDecomposition& dec,
                                         const PotentialProfile& profile) {
    const Grid& g = dec.grid();
    const auto split = g_split(cfg, f, dec, profile);
    const Vector norms = node_norms(f);
    Vector rhs = Vector::Zero(g.node_count());
    const double hd = g.cell_volume();
    parallel_for(0, g.node_count(), [&](Index x) {
        const double rho = profile.rho(x);
        double s = 0.0;
        for (Index y = 0; y < g.node_count(); ++y) {
            const double dist = g.dist(x, y);
            if (dist > rho) s += kernel_L_value(rho, dist, g.dimension(), cfg.alpha) * norms[y];
        }
        rhs[x] = hd * s;
    });
    return fit_domination(split.g_global, rhs);
}

DominationReport check_local_difference(const SquareFunctionConfig& cfg, const VectorField& f,
                                        const SpectralDecomposition& dec_schrodinger,
                                        const SpectralDecomposition& dec_laplacian,
                                        const PotentialProfile& profile) {
    const Grid& g = dec_schrodinger.grid();
    const auto split_l = g_split(cfg, f, dec_schrodinger, profile);
    const auto split_d = g_split(cfg, f, dec_laplacian, profile);
    const Vector lhs = (split_l.g_local - split_d.g_local).cwiseAbs();
    const Vector norms = node_norms(f);
    Vector rhs = Vector::Zero(g.node_count());
    const double hd = g.cell_volume();
    const double delta = profile.delta();
    parallel_for(0, g.node_count(), [&](Index x) {
        const double rho = profile.rho(x);
        double s = 0.0;
        for (Index y = 0; y < g.node_count(); ++y) {
            if (y == x) continue;  // singular cell excluded; absorbed by the fitted constant
            const double dist = g.dist(x, y);
            if (dist <= rho) s += kernel_M_value(rho, dist, g.dimension(), delta) * norms[y];
        }
        rhs[x] = hd * s;
    });
    return fit_domination(lhs, rhs);
}

namespace {

double pt_qnorm_on_grid(const Vector& z, double q, int n_nodes, bool simpson) {
    const int d = static_cast<int>(z.size());
    const double zn = z.norm();
    if (zn == 0.0) throw std::domain_error("pt_deriv_qnorm: z must be nonzero");
    const double s_lo = 1e-4, s_hi = 1e4;
    const double dv = std::log(s_hi / s_lo) / (n_nodes - 1);
    double acc = 0.0;
    for (int i = 0; i < n_nodes; ++i) {
        const double s = s_lo * std::exp(dv * i);
        double w = dv;
        if (simpson) {
            if (i == 0 || i == n_nodes - 1)
                w = dv / 3.0;
            else
                w = (i % 2 == 1) ? 4.0 * dv / 3.0 : 2.0 * dv / 3.0;
        } else if (i == 0 || i == n_nodes - 1) {
            w *= 0.5;
        }
        acc += w * std::pow(std::abs(classical_poisson_tderiv_kernel(z, zn * s, d)), q);
    }
    return std::pow(acc, 1.0 / q);
}

}  // namespace

double pt_deriv_qnorm(const Vector& z, double q, QuadratureScheme scheme) {
    if (!(q >= 1.0)) throw std::invalid_argument("pt_deriv_qnorm: q must be >= 1");
    return scheme == QuadratureScheme::trapezoid_log ? pt_qnorm_on_grid(z, q, 1024, false)
                                                     : pt_qnorm_on_grid(z, q, 1025, true);
}

double pt_deriv_qnorm_constant(double q, int d, QuadratureScheme scheme) {
    Vector z = Vector::Zero(d);
    z[0] = 1.0;
    return pt_deriv_qnorm(z, q, scheme);
}

Vector operator_S(const VectorField& f, const CriticalCovering& covering,
                  const SpectralDecomposition& dec, const SquareFunctionConfig& cfg) {
    cfg.validate_coverage(dec);
    const Grid& g = dec.grid();
    const Index nodes = g.node_count();
    if (f.values.rows() != nodes) throw std::invalid_argument("operator_S: field length mismatch");
    const int n = f.space.n;
    const double hd = g.cell_volume();
    const Vector w = cfg.log_weights();

    std::vector<std::vector<Index>> doubled(covering.balls.size());
    for (std::size_t k = 0; k < covering.balls.size(); ++k)
        doubled[k] = g.nodes_in_ball(covering.balls[k].scaled(2.0));

    Vector acc = Vector::Zero(nodes);
    for (Index ti = 0; ti < cfg.t_grid.size(); ++ti) {
        const Vector mult = tderiv_multiplier(dec, cfg.t_grid[ti]);
        const Matrix kt = dec.kernel_matrix(mult);
        const double wt = w[ti];
        parallel_for(0, nodes, [&](Index x) {
            Vector u = Vector::Zero(n);
            for (int k : covering.balls_containing[static_cast<std::size_t>(x)]) {
                for (int c = 0; c < n; ++c) {
                    double s = 0.0;
                    for (Index y : doubled[static_cast<std::size_t>(k)]) s += kt(x, y) * f.values(y, c);
                    u[c] += hd * s;
                }
            }
            acc[x] += wt * std::pow(x_norm(f.space, u), cfg.q);
        });
    }
    return acc.array().pow(1.0 / cfg.q);
}

AnnulusAudit annulus_support_audit(const CriticalCovering& covering,
                                   const PotentialProfile& profile, double C1) {
    if (!(C1 > 0.0 && C1 < 1.0)) throw std::invalid_argument("annulus audit: C1 must be in (0,1)");
    const Grid& g = profile.grid();
    const Index nodes = g.node_count();

    std::vector<std::vector<bool>> in_doubled(covering.balls.size());
    for (std::size_t k = 0; k < covering.balls.size(); ++k) {
        in_doubled[k].assign(static_cast<std::size_t>(nodes), false);
        for (Index y : g.nodes_in_ball(covering.balls[k].scaled(2.0)))
            in_doubled[k][static_cast<std::size_t>(y)] = true;
    }

    std::vector<AnnulusAudit> partial(static_cast<std::size_t>(nodes));
    parallel_for(0, nodes, [&](Index x) {
        AnnulusAudit a;
        const double rho = profile.rho(x);
        const double lo = C1 / (1.0 + C1) * rho;
        const double hi = 3.0 / C1 * rho;
        for (int k : covering.balls_containing[static_cast<std::size_t>(x)]) {
            for (Index y = 0; y < nodes; ++y) {
                ++a.pairs_checked;
                const bool in_n = g.dist(x, y) <= rho;
                if (in_n == in_doubled[static_cast<std::size_t>(k)][static_cast<std::size_t>(y)])
                    continue;
                ++a.disagreements;
                const double dist = g.dist(x, y);
                if (!(lo <= dist && dist <= hi)) ++a.violations;
            }
        }
        partial[static_cast<std::size_t>(x)] = a;
    });
    AnnulusAudit total;
    for (const auto& a : partial) {
        total.pairs_checked += a.pairs_checked;
        total.disagreements += a.disagreements;
        total.violations += a.violations;
    }
    return total;
}

double scaling_identity_check(const SquareFunctionConfig& cfg, const Vector& f, double R,
                              const SpectralDecomposition& dec) {
    if (cfg.kind != SemigroupKind::laplacian)
        throw std::invalid_argument("scaling identity: Laplacian side only");
    if (!(R > 0.0)) throw std::invalid_argument("scaling identity: R must be > 0");
    const Grid& g = dec.grid();

    const double floor = 1e-13 * f.cwiseAbs().maxCoeff();
    double support_radius = 0.0;
    double pa[4];
    for (Index i = 0; i < g.node_count(); ++i) {
        if (std::abs(f[i]) <= floor) continue;
        g.node_coords(i, pa);
        for (int k = 0; k < g.dimension(); ++k)
            support_radius = std::max(support_radius, std::abs(pa[k]));
    }
    if (support_radius / R > g.half_width())
        throw std::domain_error("scaling identity: support escapes the box after dilation");

    const BanachSurrogate scalar(2.0, 1);
    const Vector g_f = g_function(cfg, VectorField(f, scalar), dec);

    SquareFunctionConfig cfg_r = cfg;
    cfg_r.t_grid = cfg.t_grid / R;  // same scale window after t -> tR
    const Vector f_r = dilate(g, f, R);
    const Vector g_fr = g_function(cfg_r, VectorField(f_r, scalar), dec);

    double worst = 0.0;
    Vector p(g.dimension());
    for (Index i = 0; i < g.node_count(); ++i) {
        g.node_coords(i, pa);
        bool interior = true;
        for (int k = 0; k < g.dimension(); ++k) {
            if (std::abs(pa[k]) > 0.75 * g.half_width()) interior = false;
            p[k] = pa[k] / R;
        }
        if (!interior || !g.inside_box(p)) continue;
        worst = std::max(worst, std::abs(g_f[i] - g.interpolate(g_fr, p)));
    }
    return worst;
}

}  // namespace sqfn
