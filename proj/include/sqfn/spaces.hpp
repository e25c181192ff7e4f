#pragma once

#include <cstdint>
#include <vector>

#include "sqfn/grid.hpp"
#include "sqfn/potential.hpp"

namespace sqfn {

// Finite-dimensional surrogate X = l^r_n; r = infinity is allowed.
struct BanachSurrogate {
    double r = 2.0;
    int n = 1;

    BanachSurrogate() = default;
    BanachSurrogate(double r_, int n_);
    bool is_sup_norm() const;
};

double x_norm(const BanachSurrogate& X, const Vector& v);

// X-valued function on the grid; one row of components per node.
struct VectorField {
    Matrix values;  // node_count x n
    BanachSurrogate space;

    VectorField() = default;
    VectorField(Matrix v, BanachSurrogate X);
    Index nodes() const { return values.rows(); }
};

// Per-node X-norms.
Vector node_norms(const VectorField& f);

double lp_norm(const Grid& g, const VectorField& f, double p);
double lp_norm(const Grid& g, const Vector& scalar_field, double p);

// sup_{lambda>0} lambda * measure{ ||f||_X > lambda }; the sup is attained on
// the finite set of node values.
double weak_l1(const Grid& g, const VectorField& f);
double weak_l1(const Grid& g, const Vector& scalar_field);

// Randomized upper estimate of the modulus of convexity
//   inf { 1 - ||(x+y)/2|| : ||x||=||y||=1, ||x-y||=eps },
// from structured starts plus random pairs with local descent. Deterministic
// per seed.
double modulus_of_convexity(const BanachSurrogate& X, double eps, int n_samples, std::uint64_t seed);

struct BallFamily {
    std::vector<Ball> balls;
    std::vector<bool> big;  // radius >= rho(center)
};

// Balls centered at every stride-th node with radii on a log ladder up to the
// box half-width; flags are set from the profile's critical radius.
BallFamily make_default_ball_family(const Grid& g, const PotentialProfile& p,
                                    int ladder_steps = 16, int center_stride = 1);

struct BmoRow {
    int ball = 0;
    double oscillation = 0.0;
    double average = 0.0;  // only meaningful on big balls
    bool big = false;
    bool binding = false;  // attains the norm
};

// max over the family of: oscillation averages on all balls, plain averages on
// big balls. The family must contain a big ball.
double bmo_L_norm(const Grid& g, const VectorField& f, const BallFamily& family,
                  std::vector<BmoRow>* rows = nullptr);
double bmo_L_norm(const Grid& g, const Vector& scalar_field, const BallFamily& family,
                  std::vector<BmoRow>* rows = nullptr);

enum class AtomKind { small, big };

struct Atom {
    VectorField values;
    Ball ball;
    AtomKind kind = AtomKind::small;
};

// Random field supported on the ball, sup-norm clipped to 1/|B| and, for small
// atoms, projected to exact mean zero componentwise. |B| = node count * h^d.
Atom make_atom(const Grid& g, const BanachSurrogate& X, const Ball& ball, AtomKind kind,
               const PotentialProfile& p, std::uint64_t seed);

bool is_atom(const Grid& g, const Atom& a, const PotentialProfile& p);

// Sum of |lambda_j| for a given decomposition; an upper bound for the atomic
// norm. The decomposition must reconstruct f within 1e-8 in L^1_X.
double h1_norm_upper(const Grid& g, const VectorField& f,
                     const std::vector<std::pair<double, Atom>>& decomposition);

}  // namespace sqfn
