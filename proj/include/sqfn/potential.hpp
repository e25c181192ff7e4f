#pragma once

#include <optional>
#include <utility>
#include <vector>

#include "sqfn/grid.hpp"

namespace sqfn {

struct CriticalRadius {
    double value = 0.0;
    bool capped = false;
};

// Largest r <= r_max with F(x,r) = r^(2-d) * integral of V over B(x,r) <= 1,
// located by a 64-point log-spaced scan followed by bisection to 1e-3*h.
// Returns r_max with the capped flag when F <= 1 on the whole ladder.
CriticalRadius critical_radius(const Grid& g, const Vector& v, const Vector& x, double r_max);

enum class PotentialKind { constant, power, table };

// Nonnegative potential together with its reverse Holder exponent s and the
// critical-radius table. delta = 2 - d/s > 0 is required at construction.
class PotentialProfile {
public:
    static PotentialProfile constant(const Grid& g, double c, double s);
    static PotentialProfile power(const Grid& g, double beta, double s);  // V(x) = |x|^beta
    static PotentialProfile table(const Grid& g, Vector values, double s);

    const Grid& grid() const { return *grid_; }
    PotentialKind kind() const { return kind_; }
    double s() const { return s_; }
    double delta() const { return 2.0 - grid_->dimension() / s_; }
    double r_max() const { return r_max_; }
    void set_r_max(double r);  // resets any built table

    const Vector& values() const { return values_; }

    CriticalRadius rho_at(const Vector& x) const;  // direct computation
    void build_rho_table();                        // parallel over nodes
    bool has_rho_table() const { return rho_.has_value(); }
    const Vector& rho_table() const;
    double rho(Index node) const;
    bool capped(Index node) const;

    // (x,y) in N  iff  |x - y| <= rho(x); rho of the FIRST argument.
    bool in_region_N(Index x, Index y) const;
    bool in_region_N(const Vector& x, const Vector& y) const;

private:
    PotentialProfile(const Grid& g, PotentialKind kind, Vector values, double s);

    const Grid* grid_;
    PotentialKind kind_;
    Vector values_;
    double s_;
    double r_max_;
    std::optional<Vector> rho_;
    std::vector<bool> capped_;
};

// sup over the family of (mean of V^s)^(1/s) / (mean of V); balls where both
// sides vanish contribute 1.
double reverse_holder_constant(const PotentialProfile& p, double s, const std::vector<Ball>& family);

struct RhoComparison {
    double c = 1.0;
    double k0 = 1.0;
    double C1 = 0.0;  // in (0,1)
};

// Smallest c on the ladder {1, 1.25, ..., 16} (k0 scanned over {1,2,4,8}) such
// that the two-sided comparison bound holds on every pair; C1 is derived from
// the pairs with |x-y| <= rho(x).
RhoComparison fit_rho_comparison(const PotentialProfile& p,
                                 const std::vector<std::pair<Index, Index>>& pairs);

struct CriticalCovering {
    std::vector<Index> centers;
    std::vector<Ball> balls;           // Q_k = B(x_k, rho(x_k))
    int overlap_bound = 0;             // max_k card{j : 2Q_j meets 2Q_k}
    std::vector<std::vector<int>> balls_containing;  // per node, indices k with node in Q_k
    bool covers_all_nodes = false;
};

// Greedy maximal rho-packing in lexicographic node order; the overlap bound is
// verified by exhaustive pair enumeration on the doubled balls.
CriticalCovering build_covering(const PotentialProfile& p);

// Largest constant < 1 with C1 rho(x) < rho(y) < rho(x)/C1 on EVERY node pair
// with |x - y| <= rho(x).
double exhaustive_c1(const PotentialProfile& p);

}  // namespace sqfn
