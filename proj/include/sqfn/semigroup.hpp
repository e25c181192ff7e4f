#pragma once

#include "sqfn/grid.hpp"
#include "sqfn/potential.hpp"

namespace sqfn {

struct OperatorMatrix {
    Matrix m;  // dense symmetric, (2d+1)-point Laplacian stencil + diag(V)
    const Grid* grid = nullptr;
};

// Discrete -Laplace + V with Dirichlet walls one spacing outside the box.
// Node count above the cap is refused.
OperatorMatrix assemble_operator(const PotentialProfile& p, Index node_cap = 8000);
OperatorMatrix assemble_operator(const Grid& g, const Vector& v, Index node_cap = 8000);

// Eigenpairs of the discretized operator; eigenvalues ascending, eigenvectors
// orthonormal in the h^d-weighted inner product.
class SpectralDecomposition {
public:
    SpectralDecomposition(const Grid& g, Vector eigenvalues, Matrix modes);

    const Grid& grid() const { return *grid_; }
    const Vector& eigenvalues() const { return eigenvalues_; }
    const Matrix& modes() const { return modes_; }  // columns phi_j, node x mode
    Index count() const { return eigenvalues_.size(); }
    double cell_volume() const { return cell_volume_; }

    // c_j = h^d <phi_j, f>, one column per input field.
    Matrix coefficients(const Matrix& fields) const;
    // sum_j m_j c_j phi_j
    Matrix apply_multiplier(const Vector& multiplier, const Matrix& fields) const;
    // K(x,y) = sum_j m_j phi_j(x) phi_j(y); application convention h^d K f.
    Matrix kernel_matrix(const Vector& multiplier) const;
    double kernel_entry(Index x, Index y, const Vector& multiplier) const;

private:
    const Grid* grid_;
    Vector eigenvalues_;
    Matrix modes_;
    double cell_volume_;
};

SpectralDecomposition spectral_decompose(const OperatorMatrix& op);

enum class KernelKind { heat_schrodinger, heat_classical, poisson_schrodinger, poisson_classical, poisson_t_derivative };

struct KernelMatrix {
    Matrix k;
    double t = 0.0;
    KernelKind kind = KernelKind::heat_schrodinger;
    double subordination_mismatch = 0.0;  // set by the quadrature route
};

KernelMatrix heat_kernel(const SpectralDecomposition& dec, double t);

// h_t(x - y) = (4 pi t)^(-d/2) exp(-|x-y|^2 / 4t)
double classical_heat_kernel(const Vector& x, const Vector& y, double t, int d);

// Closed-form heat kernel of -Laplace + |x|^2.
double mehler_kernel(const Vector& x, const Vector& y, double t, int d);

struct SubordinationRule {
    Vector u;  // quadrature nodes in the heat variable
    Vector w;  // weights, trapezoid in log u
};

// Log-spaced window [t^2 1e-4, t^2 1e4].
SubordinationRule make_subordination_rule(double t, int n_quad);

// The subordination weight integral over (0, infinity), evaluated through the
// substitution u = t^2 / (4 v^2) which maps it to a Gaussian integral.
double subordination_weight_total(double t, int n_nodes = 400);

// Windowed trapezoid mass of the same weight (diagnostic for the rule above).
double subordination_window_mass(double t, int n_quad);

// e^{-t sqrt(L)} assembled by quadrature of the heat semigroup; verified
// against the spectral multiplier e^{-t sqrt(lambda)} in relative operator
// norm. Mismatch beyond 1e-3 raises a consistency error.
KernelMatrix poisson_subordinated(const SpectralDecomposition& dec, double t, int n_quad = 96);

// Spectral -sqrt(L) e^{-t sqrt(L)}, cross-checked against the centered finite
// difference of the subordinated route.
KernelMatrix poisson_t_derivative(const SpectralDecomposition& dec, double t);

// t d/dt [ c_d t (t^2+|z|^2)^(-(d+1)/2) ], c_d = Gamma((d+1)/2) / pi^((d+1)/2)
double classical_poisson_tderiv_kernel(const Vector& z, double t, int d);
double classical_poisson_kernel(const Vector& z, double t, int d);

}  // namespace sqfn
