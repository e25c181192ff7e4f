#include "sqfn/spaces.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "sqfn/parallel.hpp"

namespace sqfn {

BanachSurrogate::BanachSurrogate(double r_, int n_) : r(r_), n(n_) {
    if (!(r >= 1.0)) throw std::invalid_argument("BanachSurrogate: r must be >= 1");
    if (n < 1) throw std::invalid_argument("BanachSurrogate: n must be >= 1");
}

bool BanachSurrogate::is_sup_norm() const { return std::isinf(r); }

double x_norm(const BanachSurrogate& X, const Vector& v) {
    if (v.size() != X.n) throw std::invalid_argument("x_norm: component count mismatch");
    if (X.is_sup_norm()) return v.cwiseAbs().maxCoeff();
    if (X.r == 1.0) return v.cwiseAbs().sum();
    if (X.r == 2.0) return v.norm();
    double s = 0.0;
    for (Index i = 0; i < v.size(); ++i) s += std::pow(std::abs(v[i]), X.r);
    return std::pow(s, 1.0 / X.r);
}

VectorField::VectorField(Matrix v, BanachSurrogate X) : values(std::move(v)), space(X) {
    if (values.cols() != X.n) throw std::invalid_argument("VectorField: component count mismatch");
}

Vector node_norms(const VectorField& f) {
    const BanachSurrogate& X = f.space;
    Vector out(f.values.rows());
    if (X.is_sup_norm())
        out = f.values.cwiseAbs().rowwise().maxCoeff();
    else if (X.r == 1.0)
        out = f.values.cwiseAbs().rowwise().sum();
    else if (X.r == 2.0)
        out = f.values.rowwise().norm();
    else
        for (Index i = 0; i < f.values.rows(); ++i)
            out[i] = x_norm(X, f.values.row(i).transpose());
    return out;
}

namespace {

double lp_of_norms(const Grid& g, const Vector& norms, double p) {
    if (!(p >= 1.0)) throw std::invalid_argument("lp_norm: p must be >= 1");
    if (std::isinf(p)) return norms.maxCoeff();
    if (p == 1.0) return norms.sum() * g.cell_volume();
    if (p == 2.0) return norms.norm() * std::sqrt(g.cell_volume());
    double s = 0.0;
    for (Index i = 0; i < norms.size(); ++i) s += std::pow(norms[i], p);
    return std::pow(s * g.cell_volume(), 1.0 / p);
}

double weak_l1_of_norms(const Grid& g, Vector norms) {
    std::sort(norms.data(), norms.data() + norms.size(), std::greater<double>());
    double best = 0.0;
    for (Index i = 0; i < norms.size(); ++i) {
        if (i + 1 < norms.size() && norms[i + 1] == norms[i]) continue;  // group ties
        best = std::max(best, norms[i] * static_cast<double>(i + 1) * g.cell_volume());
    }
    return best;
}

}  // namespace

double lp_norm(const Grid& g, const VectorField& f, double p) {
    if (f.values.rows() != g.node_count()) throw std::invalid_argument("field length mismatch");
    return lp_of_norms(g, node_norms(f), p);
}

double lp_norm(const Grid& g, const Vector& scalar_field, double p) {
    return lp_of_norms(g, scalar_field.cwiseAbs(), p);
}

double weak_l1(const Grid& g, const VectorField& f) { return weak_l1_of_norms(g, node_norms(f)); }

double weak_l1(const Grid& g, const Vector& scalar_field) {
    return weak_l1_of_norms(g, scalar_field.cwiseAbs());
}

namespace {

Vector normalized(const BanachSurrogate& X, Vector v) {
    const double n = x_norm(X, v);
    if (n == 0.0) throw std::runtime_error("cannot normalize the zero vector");
    return v / n;
}

// y(s) = normalize(x + s w); solve ||x - y(s)|| = eps by expanding bisection.
// Returns false when the direction cannot reach distance eps.
bool pair_at_distance(const BanachSurrogate& X, const Vector& x, const Vector& w, double eps,
                      Vector& y_out) {
    auto dist = [&](double s) { return x_norm(X, x - normalized(X, x + s * w)); };
    double hi = 1.0;
    for (int k = 0; k < 60 && dist(hi) < eps; ++k) hi *= 2.0;
    if (dist(hi) < eps) return false;
    double lo = 0.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        (dist(mid) < eps ? lo : hi) = mid;
    }
    y_out = normalized(X, x + 0.5 * (lo + hi) * w);
    return true;
}

double midpoint_objective(const BanachSurrogate& X, const Vector& x, const Vector& y) {
    return 1.0 - x_norm(X, 0.5 * (x + y));
}

}  // namespace

double modulus_of_convexity(const BanachSurrogate& X, double eps, int n_samples,
                            std::uint64_t seed) {
    if (!(eps > 0.0 && eps < 2.0)) throw std::invalid_argument("modulus: eps must be in (0,2)");
    double best = 1.0;

    // Structured pairs: two coordinates, antisymmetric in the second. For
    // l^r with r >= 2 these attain the modulus; for r in {1, inf} they expose
    // the flat faces.
    if (X.n >= 2) {
        const double b = eps / 2.0;
        double a;
        if (X.is_sup_norm())
            a = 1.0;
        else if (b < 1.0)
            a = std::pow(1.0 - std::pow(b, X.r), 1.0 / X.r);
        else
            a = 0.0;
        if (X.is_sup_norm() || b <= 1.0) {
            Vector x = Vector::Zero(X.n), y = Vector::Zero(X.n);
            x[0] = a; x[1] = b;
            y[0] = a; y[1] = -b;
            if (std::abs(x_norm(X, x) - 1.0) < 1e-12 && std::abs(x_norm(X, x - y) - eps) < 1e-12)
                best = std::min(best, midpoint_objective(X, x, y));
        }
        if (X.r == 1.0 && eps <= 2.0) {
            // Both points on the face {v : v >= 0, sum v = 1}.
            const double av = std::min(1.0, 0.5 + eps / 4.0);
            Vector x = Vector::Zero(X.n), y = Vector::Zero(X.n);
            x[0] = av; x[1] = 1.0 - av;
            y[0] = av - eps / 2.0; y[1] = 1.0 - av + eps / 2.0;
            if (y[0] >= 0.0) best = std::min(best, midpoint_objective(X, x, y));
        }
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto random_vec = [&] {
        Vector v(X.n);
        for (int i = 0; i < X.n; ++i) v[i] = gauss(rng);
        return v;
    };

    for (int s = 0; s < n_samples; ++s) {
        Vector x, w, y;
        try {
            x = normalized(X, random_vec());
        } catch (const std::runtime_error&) {
            continue;
        }
        w = random_vec();
        if (!pair_at_distance(X, x, w, eps, y)) continue;
        double val = midpoint_objective(X, x, y);
        // Local descent: perturb the pair, keep improvements.
        double sigma = 0.3;
        Vector bx = x, bw = w;
        for (int it = 0; it < 40; ++it) {
            Vector px = normalized(X, bx + sigma * random_vec());
            Vector pw = bw + sigma * random_vec();
            Vector py;
            if (!pair_at_distance(X, px, pw, eps, py)) {
                sigma *= 0.7;
                continue;
            }
            const double pv = midpoint_objective(X, px, py);
            if (pv < val) {
                val = pv;
                bx = px;
                bw = pw;
            } else {
                sigma *= 0.85;
            }
        }
        best = std::min(best, val);
    }
    return std::max(best, 0.0);
}

BallFamily make_default_ball_family(const Grid& g, const PotentialProfile& p, int ladder_steps,
                                    int center_stride) {
    if (ladder_steps < 1) throw std::invalid_argument("ball family: ladder_steps must be >= 1");
    if (center_stride < 1) throw std::invalid_argument("ball family: center_stride must be >= 1");
    BallFamily fam;
    const double r_min = 1.5 * g.spacing();
    const double r_max = g.half_width();
    for (Index i = 0; i < g.node_count(); ++i) {
        bool keep = true;
        Index rem = i;
        for (int k = g.dimension() - 1; k >= 0; --k) {
            if (static_cast<int>(rem % g.points_per_axis()) % center_stride != 0) {
                keep = false;
                break;
            }
            rem /= g.points_per_axis();
        }
        if (!keep) continue;
        const double rho = p.rho(i);
        const Vector c = g.node(i);
        for (int j = 0; j < ladder_steps; ++j) {
            const double r =
                ladder_steps == 1
                    ? r_max
                    : r_min * std::pow(r_max / r_min, static_cast<double>(j) / (ladder_steps - 1));
            fam.balls.emplace_back(c, r);
            fam.big.push_back(r >= rho);
        }
    }
    return fam;
}

namespace {

double bmo_of_norm_field(const Grid& g, const Matrix& comps, const BanachSurrogate& X,
                         const BallFamily& family, std::vector<BmoRow>* rows) {
    if (family.balls.empty()) throw std::invalid_argument("bmo_L_norm: empty ball family");
    if (std::find(family.big.begin(), family.big.end(), true) == family.big.end())
        throw std::invalid_argument("bmo_L_norm: family has no big ball (seminorm only)");

    const auto n_balls = static_cast<Index>(family.balls.size());
    std::vector<BmoRow> local(n_balls);
    parallel_for(0, n_balls, [&](Index b) {
        const auto nodes = g.nodes_in_ball(family.balls[static_cast<std::size_t>(b)]);
        BmoRow row;
        row.ball = static_cast<int>(b);
        row.big = family.big[static_cast<std::size_t>(b)];
        if (nodes.empty()) throw std::invalid_argument("bmo_L_norm: ball without nodes");
        Vector mean = Vector::Zero(comps.cols());
        for (Index i : nodes) mean += comps.row(i).transpose();
        mean /= static_cast<double>(nodes.size());
        double osc = 0.0, avg = 0.0;
        for (Index i : nodes) {
            osc += x_norm(X, comps.row(i).transpose() - mean);
            avg += x_norm(X, comps.row(i).transpose());
        }
        row.oscillation = osc / static_cast<double>(nodes.size());
        row.average = avg / static_cast<double>(nodes.size());
        local[static_cast<std::size_t>(b)] = row;
    });

    double norm = 0.0;
    for (const auto& row : local) {
        norm = std::max(norm, row.oscillation);
        if (row.big) norm = std::max(norm, row.average);
    }
    for (auto& row : local)
        row.binding = (row.oscillation == norm) || (row.big && row.average == norm);
    if (rows) *rows = std::move(local);
    return norm;
}

}  // namespace

double bmo_L_norm(const Grid& g, const VectorField& f, const BallFamily& family,
                  std::vector<BmoRow>* rows) {
    if (f.values.rows() != g.node_count()) throw std::invalid_argument("field length mismatch");
    return bmo_of_norm_field(g, f.values, f.space, family, rows);
}

double bmo_L_norm(const Grid& g, const Vector& scalar_field, const BallFamily& family,
                  std::vector<BmoRow>* rows) {
    return bmo_of_norm_field(g, scalar_field, BanachSurrogate(2.0, 1), family, rows);
}

Atom make_atom(const Grid& g, const BanachSurrogate& X, const Ball& ball, AtomKind kind,
               const PotentialProfile& p, std::uint64_t seed) {
    const auto nodes = g.nodes_in_ball(ball);
    if (nodes.empty()) throw std::invalid_argument("make_atom: ball contains no node");
    const bool small_geom = ball.radius < p.rho_at(ball.center).value;
    if ((kind == AtomKind::small) != small_geom)
        throw std::invalid_argument("make_atom: kind inconsistent with the critical radius");
    if (kind == AtomKind::small && nodes.size() < 2)
        throw std::invalid_argument("make_atom: small atom needs at least two nodes");

    const auto m = static_cast<Index>(nodes.size());
    const double cap = 1.0 / (static_cast<double>(m) * g.cell_volume());

    // Integer-valued construction: mean projection in exact integer arithmetic,
    // then one power-of-two scale. Partial sums stay exact in double, so the
    // componentwise node sums of a small atom are exactly zero.
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::int64_t> coin(-(1 << 20), 1 << 20);
    Eigen::Matrix<std::int64_t, Eigen::Dynamic, Eigen::Dynamic> k(m, X.n);
    for (Index i = 0; i < m; ++i)
        for (int c = 0; c < X.n; ++c) k(i, c) = coin(rng);
    if (kind == AtomKind::small) {
        for (int c = 0; c < X.n; ++c) {
            std::int64_t s = 0;
            for (Index i = 0; i < m; ++i) s += k(i, c);
            std::int64_t q = s / m;
            std::int64_t r = s - q * m;
            if (r < 0) {
                q -= 1;
                r += m;
            }
            for (Index i = 0; i < m; ++i) k(i, c) -= q;
            for (Index i = 0; i < r; ++i) k(i, c) -= 1;
        }
    }
    double max_norm = 0.0;
    Vector row(X.n);
    for (Index i = 0; i < m; ++i) {
        for (int c = 0; c < X.n; ++c) row[c] = static_cast<double>(k(i, c));
        max_norm = std::max(max_norm, x_norm(X, row));
    }
    if (max_norm == 0.0) {
        k(0, 0) = 1;
        if (kind == AtomKind::small) k(1, 0) = -1;
        max_norm = 1.0;
    }
    const double scale = std::exp2(std::floor(std::log2(cap / max_norm)));

    Atom a;
    a.ball = ball;
    a.kind = kind;
    a.values = VectorField(Matrix::Zero(g.node_count(), X.n), X);
    for (Index i = 0; i < m; ++i)
        for (int c = 0; c < X.n; ++c)
            a.values.values(nodes[static_cast<std::size_t>(i)], c) =
                static_cast<double>(k(i, c)) * scale;
    return a;
}

bool is_atom(const Grid& g, const Atom& a, const PotentialProfile& p) {
    if (a.values.values.rows() != g.node_count()) return false;
    const auto nodes = g.nodes_in_ball(a.ball);
    if (nodes.empty()) return false;
    std::vector<bool> inside(static_cast<std::size_t>(g.node_count()), false);
    for (Index i : nodes) inside[static_cast<std::size_t>(i)] = true;

    const double cap = 1.0 / (static_cast<double>(nodes.size()) * g.cell_volume());
    const BanachSurrogate& X = a.values.space;
    for (Index i = 0; i < g.node_count(); ++i) {
        if (!inside[static_cast<std::size_t>(i)]) {
            if (a.values.values.row(i).cwiseAbs().maxCoeff() != 0.0) return false;
        } else if (x_norm(X, a.values.values.row(i).transpose()) > cap * (1.0 + 1e-12)) {
            return false;
        }
    }

    const bool small_geom = a.ball.radius < p.rho_at(a.ball.center).value;
    if ((a.kind == AtomKind::small) != small_geom) return false;
    if (a.kind == AtomKind::small) {
        // Componentwise integral in fixed node order; the construction above
        // makes this exactly zero, so the gate can be tight.
        for (int c = 0; c < X.n; ++c) {
            double s = 0.0;
            for (Index i : nodes) s += a.values.values(i, c);
            if (std::abs(s * g.cell_volume()) > 1e-12) return false;
        }
    }
    return true;
}

double h1_norm_upper(const Grid& g, const VectorField& f,
                     const std::vector<std::pair<double, Atom>>& decomposition) {
    Matrix recon = Matrix::Zero(f.values.rows(), f.values.cols());
    double sum = 0.0;
    for (const auto& [lambda, atom] : decomposition) {
        if (atom.values.values.rows() != f.values.rows() ||
            atom.values.values.cols() != f.values.cols())
            throw std::invalid_argument("h1_norm_upper: atom shape mismatch");
        recon += lambda * atom.values.values;
        sum += std::abs(lambda);
    }
    const VectorField diff(f.values - recon, f.space);
    const double err = lp_norm(g, diff, 1.0);
    if (err > 1e-8 * std::max(1.0, lp_norm(g, f, 1.0)))
        throw std::runtime_error("h1_norm_upper: decomposition does not reconstruct the field");
    return sum;
}

}  // namespace sqfn
