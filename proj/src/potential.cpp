#include "sqfn/potential.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "sqfn/parallel.hpp"

namespace sqfn {

namespace {

// F(x, r) evaluated through a distance-sorted prefix table, so the ladder scan
// and the bisection cost O(log n) per query.
struct RadialMass {
    std::vector<double> dist;  // ascending
    std::vector<double> mass;  // prefix sums of V * h^d

    RadialMass(const Grid& g, const Vector& v, const Vector& x) {
        auto dp = g.distance_profile(x);
        dist = std::move(dp.dist);
        mass.resize(dist.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < dp.order.size(); ++i) {
            acc += v[dp.order[i]];
            mass[i] = acc * g.cell_volume();
        }
    }

    double integral(double r) const {
        auto it = std::upper_bound(dist.begin(), dist.end(), r);
        if (it == dist.begin()) return 0.0;
        return mass[static_cast<std::size_t>(it - dist.begin()) - 1];
    }
};

double subcritical_F(const RadialMass& rm, double r, int d) {
    return std::pow(r, 2 - d) * rm.integral(r);
}

CriticalRadius critical_radius_impl(const RadialMass& rm, int d, double h, double r_max) {
    constexpr int kLadder = 64;
    const double r_lo = h / 2;
    int last_ok = -1;
    double ladder[kLadder];
    for (int i = 0; i < kLadder; ++i) {
        ladder[i] = r_lo * std::pow(r_max / r_lo, static_cast<double>(i) / (kLadder - 1));
        if (subcritical_F(rm, ladder[i], d) <= 1.0) last_ok = i;
    }
    if (last_ok == kLadder - 1) return {r_max, true};
    double lo, hi;
    if (last_ok < 0) {
        lo = 0.0;  // F vanishes below the first node distance
        hi = ladder[0];
    } else {
        lo = ladder[last_ok];
        hi = ladder[last_ok + 1];
    }
    const double tol = 1e-3 * h;
    while (hi - lo > tol) {
        const double mid = 0.5 * (lo + hi);
        if (subcritical_F(rm, mid, d) <= 1.0)
            lo = mid;
        else
            hi = mid;
    }
    return {0.5 * (lo + hi), false};
}

}  // namespace

CriticalRadius critical_radius(const Grid& g, const Vector& v, const Vector& x, double r_max) {
    if (!(r_max > 0.0)) throw std::invalid_argument("critical_radius: r_max must be > 0");
    if (!g.inside_box(x)) throw std::domain_error("critical_radius: point outside the box");
    RadialMass rm(g, v, x);
    return critical_radius_impl(rm, g.dimension(), g.spacing(), r_max);
}

PotentialProfile::PotentialProfile(const Grid& g, PotentialKind kind, Vector values, double s)
    : grid_(&g), kind_(kind), values_(std::move(values)), s_(s), r_max_(g.half_width()) {
    if (values_.size() != g.node_count()) throw std::invalid_argument("potential length mismatch");
    if (values_.minCoeff() < 0.0) throw std::invalid_argument("potential must be nonnegative");
    if (!(s_ > g.dimension() / 2.0))
        throw std::invalid_argument("reverse Holder exponent must satisfy s > d/2");
}

PotentialProfile PotentialProfile::constant(const Grid& g, double c, double s) {
    return PotentialProfile(g, PotentialKind::constant, Vector::Constant(g.node_count(), c), s);
}

PotentialProfile PotentialProfile::power(const Grid& g, double beta, double s) {
    if (beta < 0.0) throw std::invalid_argument("power potential needs beta >= 0");
    Vector v(g.node_count());
    double pa[4];
    for (Index i = 0; i < g.node_count(); ++i) {
        g.node_coords(i, pa);
        double n2 = 0.0;
        for (int k = 0; k < g.dimension(); ++k) n2 += pa[k] * pa[k];
        v[i] = std::pow(std::sqrt(n2), beta);
    }
    return PotentialProfile(g, PotentialKind::power, std::move(v), s);
}

PotentialProfile PotentialProfile::table(const Grid& g, Vector values, double s) {
    return PotentialProfile(g, PotentialKind::table, std::move(values), s);
}

void PotentialProfile::set_r_max(double r) {
    if (!(r > 0.0)) throw std::invalid_argument("r_max must be > 0");
    r_max_ = r;
    rho_.reset();
    capped_.clear();
}

CriticalRadius PotentialProfile::rho_at(const Vector& x) const {
    return critical_radius(*grid_, values_, x, r_max_);
}

void PotentialProfile::build_rho_table() {
    Vector rho(grid_->node_count());
    std::vector<bool> capped(grid_->node_count());
    std::vector<std::uint8_t> capped_raw(grid_->node_count());
    const Grid& g = *grid_;
    const Vector& v = values_;
    const double rmax = r_max_;
    parallel_for(0, g.node_count(), [&](Index i) {
        auto cr = critical_radius(g, v, g.node(i), rmax);
        rho[i] = cr.value;
        capped_raw[i] = cr.capped ? 1 : 0;
    });
    for (Index i = 0; i < g.node_count(); ++i) capped[i] = capped_raw[i] != 0;
    rho_ = std::move(rho);
    capped_ = std::move(capped);
}

const Vector& PotentialProfile::rho_table() const {
    if (!rho_) throw std::logic_error("rho table not built");
    return *rho_;
}

double PotentialProfile::rho(Index node) const { return rho_table()[node]; }

bool PotentialProfile::capped(Index node) const {
    if (!rho_) throw std::logic_error("rho table not built");
    return capped_[node];
}

bool PotentialProfile::in_region_N(Index x, Index y) const {
    return grid_->dist(x, y) <= rho(x);
}

bool PotentialProfile::in_region_N(const Vector& x, const Vector& y) const {
    const double r = rho_at(x).value;
    return (x - y).norm() <= r;
}

double reverse_holder_constant(const PotentialProfile& p, double s,
                               const std::vector<Ball>& family) {
    if (family.empty()) throw std::invalid_argument("reverse_holder_constant: empty ball family");
    if (!(s > p.grid().dimension() / 2.0))
        throw std::invalid_argument("reverse_holder_constant: s must exceed d/2");
    const Grid& g = p.grid();
    double worst = 1.0;
    for (const Ball& b : family) {
        const auto nodes = g.nodes_in_ball(b);
        if (nodes.empty()) throw std::invalid_argument("reverse_holder_constant: empty ball");
        double m1 = 0.0, ms = 0.0;
        for (Index i : nodes) {
            m1 += p.values()[i];
            ms += std::pow(p.values()[i], s);
        }
        m1 /= static_cast<double>(nodes.size());
        ms /= static_cast<double>(nodes.size());
        if (m1 == 0.0) continue;  // both sides vanish, ratio 1
        worst = std::max(worst, std::pow(ms, 1.0 / s) / m1);
    }
    return worst;
}

RhoComparison fit_rho_comparison(const PotentialProfile& p,
                                 const std::vector<std::pair<Index, Index>>& pairs) {
    if (pairs.size() < 100)
        throw std::invalid_argument("fit_rho_comparison: need at least 100 pairs");
    const Grid& g = p.grid();
    const double k0_ladder[4] = {1.0, 2.0, 4.0, 8.0};

    double best_c = -1.0, best_k0 = 0.0;
    Index worst_x = -1, worst_y = -1;
    for (double k0 : k0_ladder) {
        for (double c = 1.0; c <= 16.0 + 1e-12; c += 0.25) {
            bool ok = true;
            for (const auto& [xi, yi] : pairs) {
                const double rx = p.rho(xi), ry = p.rho(yi);
                const double grow = 1.0 + g.dist(xi, yi) / rx;
                const double lower = rx * std::pow(grow, -k0) / c;
                const double upper = c * rx * std::pow(grow, k0 / (k0 + 1.0));
                if (!(lower <= ry && ry <= upper)) {
                    ok = false;
                    worst_x = xi;
                    worst_y = yi;
                    break;
                }
            }
            if (ok) {
                if (best_c < 0.0 || c < best_c) {
                    best_c = c;
                    best_k0 = k0;
                }
                break;  // smallest c for this k0 found
            }
        }
    }
    if (best_c < 0.0) {
        std::ostringstream os;
        os << "fit_rho_comparison: no (c, k0) on the ladder validates; worst pair ("
           << worst_x << ", " << worst_y << ")";
        throw std::runtime_error(os.str());
    }

    double m = 1.0;
    for (const auto& [xi, yi] : pairs) {
        if (g.dist(xi, yi) > p.rho(xi)) continue;
        const double ratio = p.rho(yi) / p.rho(xi);
        m = std::min(m, std::min(ratio, 1.0 / ratio));
    }
    RhoComparison out;
    out.c = best_c;
    out.k0 = best_k0;
    out.C1 = m * (1.0 - 1e-6);
    return out;
}

double exhaustive_c1(const PotentialProfile& p) {
    const Grid& g = p.grid();
    std::vector<double> per_node(static_cast<std::size_t>(g.node_count()), 1.0);
    parallel_for(0, g.node_count(), [&](Index x) {
        double m = 1.0;
        for (Index y : g.nodes_in_ball(Ball(g.node(x), p.rho(x)))) {
            const double ratio = p.rho(y) / p.rho(x);
            m = std::min(m, std::min(ratio, 1.0 / ratio));
        }
        per_node[static_cast<std::size_t>(x)] = m;
    });
    double m = 1.0;
    for (double v : per_node) m = std::min(m, v);
    return m * (1.0 - 1e-6);
}

CriticalCovering build_covering(const PotentialProfile& p) {
    const Grid& g = p.grid();
    CriticalCovering cov;
    // Greedy in index (lexicographic) order: accept a node unless a previously
    // accepted ball already contains it.
    for (Index i = 0; i < g.node_count(); ++i) {
        bool contained = false;
        for (std::size_t k = 0; k < cov.centers.size(); ++k) {
            if (g.dist(cov.centers[k], i) <= cov.balls[k].radius) {
                contained = true;
                break;
            }
        }
        if (!contained) {
            cov.centers.push_back(i);
            cov.balls.emplace_back(g.node(i), p.rho(i));
        }
    }
    cov.balls_containing.assign(static_cast<std::size_t>(g.node_count()), {});
    bool all = true;
    for (Index i = 0; i < g.node_count(); ++i) {
        for (std::size_t k = 0; k < cov.centers.size(); ++k)
            if (g.dist(cov.centers[k], i) <= cov.balls[k].radius)
                cov.balls_containing[i].push_back(static_cast<int>(k));
        if (cov.balls_containing[i].empty()) all = false;
    }
    cov.covers_all_nodes = all;

    int n_max = 0;
    for (std::size_t k = 0; k < cov.centers.size(); ++k) {
        int cnt = 0;
        for (std::size_t j = 0; j < cov.centers.size(); ++j) {
            const double sep = g.dist(cov.centers[k], cov.centers[j]);
            if (sep <= 2.0 * (cov.balls[k].radius + cov.balls[j].radius)) ++cnt;
        }
        n_max = std::max(n_max, cnt);
    }
    cov.overlap_bound = n_max;
    return cov;
}

}  // namespace sqfn
