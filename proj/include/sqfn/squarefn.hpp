#pragma once

#include <cstdint>
#include <vector>

#include "sqfn/grid.hpp"
#include "sqfn/potential.hpp"
#include "sqfn/semigroup.hpp"
#include "sqfn/spaces.hpp"

namespace sqfn {

enum class SemigroupKind { schrodinger, laplacian };

struct SquareFunctionConfig {
    double q = 2.0;
    Vector t_grid;  // strictly increasing, >= 64 log-spaced nodes
    SemigroupKind kind = SemigroupKind::schrodinger;
    double alpha = 1.0;  // exponent of the far-field dominating kernel

    static SquareFunctionConfig make(double q, double t_min, double t_max, int count,
                                     SemigroupKind kind = SemigroupKind::schrodinger,
                                     double alpha = 1.0);
    // A t-grid adapted to the spectrum: s = t*sqrt(lambda) spans
    // [s_min, s_max] for every eigenvalue in [lambda_lo, lambda_hi].
    static SquareFunctionConfig make_for_spectrum(double q, const SpectralDecomposition& dec,
                                                  double s_min = 1e-3, double s_max = 40.0,
                                                  int count = 64,
                                                  SemigroupKind kind = SemigroupKind::schrodinger);

    // Truncating the dt/t integral is only allowed when the grid covers the
    // spectral content; violations raise a configuration error.
    void validate_coverage(const SpectralDecomposition& dec) const;

    Vector log_weights() const;  // trapezoid weights for integrals against dt/t
};

// g(x) = ( sum_i w_i || t_i dP_{t_i} f (x) ||_X^q )^(1/q)
Vector g_function(const SquareFunctionConfig& cfg, const VectorField& f,
                  const SpectralDecomposition& dec);

// Batched evaluation over column blocks sharing one decomposition and t-grid.
std::vector<Vector> g_function_batch(const SquareFunctionConfig& cfg, const Matrix& columns,
                                     const std::vector<BanachSurrogate>& blocks,
                                     const SpectralDecomposition& dec);

struct SplitFields {
    Vector g;         // full square function
    Vector g_masked;  // g applied to chi_N(x,.) f
    Vector g_global;  // g applied to chi_{N^c}(x,.) f
    Vector g_local;   // g - g_global (defining subtraction)
};

// One kernel sweep produces the full, masked, and global evaluations; the
// complement application is formed as full minus masked so the decomposition
// is exact in floating point.
SplitFields g_split(const SquareFunctionConfig& cfg, const VectorField& f,
                    const SpectralDecomposition& dec, const PotentialProfile& profile);

// max over nodes of |g f - g(chi_N f)| - g_glob f  (nonpositive when the
// pointwise triangle inequality holds).
double pointwise_cut_gap(const SplitFields& s);

double unit_sphere_area(int d);  // sigma_{d-1}

double kernel_L_value(double rho_x, double dist, int d, double alpha);
double kernel_M_value(double rho_x, double dist, int d, double delta);
double kernel_L(const PotentialProfile& p, Index x, Index y, double alpha);
double kernel_M(const PotentialProfile& p, Index x, Index y, double delta);

// Lattice quadrature of the masked row integrals. The radial integrand is
// exact calculus outside the inscribed sphere (kernel L) and inside r0 = 2h
// (kernel M); only the resolved shell is summed on the lattice.
double kernel_L_row_integral(const Grid& g, const Vector& x, double rho_x, double alpha);
double kernel_M_row_integral(const Grid& g, const Vector& x, double rho_x, double delta);
// Row integral of |x-y|^-d over the comparison annulus
// C1/(1+C1) rho <= |x-y| <= 3 rho / C1.
double annulus_row_integral(const Grid& g, const Vector& x, double rho_x, double C1);

struct DominationReport {
    double constant = 0.0;  // smallest C valid at every node
    bool finite = true;
    Index argmax = -1;
    double lhs_at_argmax = 0.0;
    double rhs_at_argmax = 0.0;
};

// Fit of g_glob f(x) <= C * integral of L(x,y) chi_{N^c} ||f(y)|| dy.
DominationReport check_global_domination(const SquareFunctionConfig& cfg, const VectorField& f,
                                         const SpectralDecomposition& dec,
                                         const PotentialProfile& profile);

// Fit of |g^L_loc f - g^D_loc f|(x) <= C * integral of M(x,y) chi_N ||f(y)|| dy.
DominationReport check_local_difference(const SquareFunctionConfig& cfg, const VectorField& f,
                                        const SpectralDecomposition& dec_schrodinger,
                                        const SpectralDecomposition& dec_laplacian,
                                        const PotentialProfile& profile);

enum class QuadratureScheme { trapezoid_log, simpson_log };

// || t d_t P_t(z) ||_{L^q((0,inf), dt/t)} via quadrature on a grid scaled by
// |z|, so the |z|^-d homogeneity is exact by substitution.
double pt_deriv_qnorm(const Vector& z, double q,
                      QuadratureScheme scheme = QuadratureScheme::trapezoid_log);
double pt_deriv_qnorm_constant(double q, int d,
                               QuadratureScheme scheme = QuadratureScheme::trapezoid_log);

// S f(x) = sum_k chi_{Q_k}(x) t dP_t (chi_{2Q_k} f)(x), L^q(dt/t)-normed.
Vector operator_S(const VectorField& f, const CriticalCovering& covering,
                  const SpectralDecomposition& dec, const SquareFunctionConfig& cfg);

struct AnnulusAudit {
    long long pairs_checked = 0;
    long long disagreements = 0;  // pairs where the S-mask and the N-mask differ
    long long violations = 0;     // disagreements outside the annulus
};

// Exhaustive audit: wherever the covering mask and the N mask disagree, the
// pair must lie in the comparison annulus determined by C1.
AnnulusAudit annulus_support_audit(const CriticalCovering& covering,
                                   const PotentialProfile& profile, double C1);

// max over interior nodes of |g f (x) - g f^R (x/R)| on the Laplacian side;
// the second evaluation runs on the t-grid scaled by 1/R so both sides
// integrate the same scale range.
double scaling_identity_check(const SquareFunctionConfig& cfg, const Vector& f, double R,
                              const SpectralDecomposition& dec);

}  // namespace sqfn
