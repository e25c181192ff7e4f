#include "sqfn/semigroup.hpp"

#include <cblas.h>
#include <lapacke.h>

#include <cmath>
#include <stdexcept>

namespace sqfn {

namespace {

Index axis_stride(const Grid& g, int axis) {
    Index s = 1;
    for (int k = g.dimension() - 1; k > axis; --k) s *= g.points_per_axis();
    return s;
}

// K = sign * G G^T with G = modes * diag(sqrt(|m|)), for a sign-definite
// multiplier; falls back to the two-sided product otherwise.
Matrix kernel_from_multiplier(const Matrix& modes, const Vector& mult) {
    const Index n = modes.rows();
    const bool nonneg = (mult.array() >= 0.0).all();
    const bool nonpos = (mult.array() <= 0.0).all();
    if (nonneg || nonpos) {
        Matrix G = modes;
        for (Index j = 0; j < mult.size(); ++j) G.col(j) *= std::sqrt(std::abs(mult[j]));
        Matrix K(n, n);
        cblas_dsyrk(CblasColMajor, CblasLower, CblasNoTrans, static_cast<int>(n),
                    static_cast<int>(mult.size()), nonneg ? 1.0 : -1.0, G.data(),
                    static_cast<int>(n), 0.0, K.data(), static_cast<int>(n));
        K.triangularView<Eigen::StrictlyUpper>() = K.transpose();
        return K;
    }
    Matrix G = modes;
    for (Index j = 0; j < mult.size(); ++j) G.col(j) *= mult[j];
    Matrix K(n, n);
    cblas_dgemm(CblasColMajor, CblasNoTrans, CblasTrans, static_cast<int>(n),
                static_cast<int>(n), static_cast<int>(mult.size()), 1.0, G.data(),
                static_cast<int>(n), modes.data(), static_cast<int>(n), 0.0, K.data(),
                static_cast<int>(n));
    return K;
}

}  // namespace

OperatorMatrix assemble_operator(const Grid& g, const Vector& v, Index node_cap) {
    if (v.size() != g.node_count()) throw std::invalid_argument("potential length mismatch");
    if (g.node_count() > node_cap)
        throw std::runtime_error("assemble_operator: node count exceeds the configured cap");
    const Index n = g.node_count();
    const double ih2 = 1.0 / (g.spacing() * g.spacing());
    OperatorMatrix op;
    op.grid = &g;
    op.m = Matrix::Zero(n, n);
    for (Index i = 0; i < n; ++i) {
        op.m(i, i) = 2.0 * g.dimension() * ih2 + v[i];
        Index rem = i;
        for (int axis = g.dimension() - 1; axis >= 0; --axis) {
            const int pos = static_cast<int>(rem % g.points_per_axis());
            rem /= g.points_per_axis();
            const Index stride = axis_stride(g, axis);
            if (pos > 0) op.m(i, i - stride) = -ih2;
            if (pos < g.points_per_axis() - 1) op.m(i, i + stride) = -ih2;
        }
    }
    return op;
}

OperatorMatrix assemble_operator(const PotentialProfile& p, Index node_cap) {
    return assemble_operator(p.grid(), p.values(), node_cap);
}

SpectralDecomposition::SpectralDecomposition(const Grid& g, Vector eigenvalues, Matrix modes)
    : grid_(&g),
      eigenvalues_(std::move(eigenvalues)),
      modes_(std::move(modes)),
      cell_volume_(g.cell_volume()) {}

Matrix SpectralDecomposition::coefficients(const Matrix& fields) const {
    return cell_volume_ * (modes_.transpose() * fields);
}

Matrix SpectralDecomposition::apply_multiplier(const Vector& multiplier, const Matrix& fields) const {
    Matrix c = coefficients(fields);
    c.array().colwise() *= multiplier.array();
    return modes_ * c;
}

Matrix SpectralDecomposition::kernel_matrix(const Vector& multiplier) const {
    return kernel_from_multiplier(modes_, multiplier);
}

double SpectralDecomposition::kernel_entry(Index x, Index y, const Vector& multiplier) const {
    double s = 0.0;
    for (Index j = 0; j < count(); ++j) s += multiplier[j] * modes_(x, j) * modes_(y, j);
    return s;
}

SpectralDecomposition spectral_decompose(const OperatorMatrix& op) {
    const Index n = op.m.rows();
    Matrix work = op.m;
    Vector lam(n);
    const lapack_int info =
        LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', static_cast<lapack_int>(n), work.data(),
                       static_cast<lapack_int>(n), lam.data());
    if (info != 0) throw std::runtime_error("spectral_decompose: eigensolver did not converge");
    // LAPACK returns unit-l2 eigenvectors; rescale to h^d-weighted orthonormality.
    work *= 1.0 / std::sqrt(op.grid->cell_volume());
    return SpectralDecomposition(*op.grid, std::move(lam), std::move(work));
}

KernelMatrix heat_kernel(const SpectralDecomposition& dec, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("heat_kernel: t must be > 0");
    KernelMatrix km;
    km.t = t;
    km.kind = KernelKind::heat_schrodinger;
    km.k = dec.kernel_matrix((-t * dec.eigenvalues().array()).exp().matrix());
    return km;
}

double classical_heat_kernel(const Vector& x, const Vector& y, double t, int d) {
    if (!(t > 0.0)) throw std::invalid_argument("classical_heat_kernel: t must be > 0");
    const double z2 = (x - y).squaredNorm();
    return std::pow(4.0 * M_PI * t, -0.5 * d) * std::exp(-z2 / (4.0 * t));
}

double mehler_kernel(const Vector& x, const Vector& y, double t, int d) {
    if (!(t > 0.0)) throw std::invalid_argument("mehler_kernel: t must be > 0");
    const double sh = std::sinh(2.0 * t);
    const double ch = std::cosh(2.0 * t);
    const double quad = ch * (x.squaredNorm() + y.squaredNorm()) - 2.0 * x.dot(y);
    return std::pow(2.0 * M_PI * sh, -0.5 * d) * std::exp(-quad / (2.0 * sh));
}

SubordinationRule make_subordination_rule(double t, int n_quad) {
    if (!(t > 0.0)) throw std::invalid_argument("subordination: t must be > 0");
    if (n_quad < 32) throw std::invalid_argument("subordination: n_quad must be >= 32");
    SubordinationRule rule;
    rule.u.resize(n_quad);
    rule.w.resize(n_quad);
    const double lo = std::log(t * t * 1e-4);
    const double hi = std::log(t * t * 1e4);
    const double dv = (hi - lo) / (n_quad - 1);
    for (int i = 0; i < n_quad; ++i) {
        const double u = std::exp(lo + dv * i);
        double w = dv;
        if (i == 0 || i == n_quad - 1) w *= 0.5;
        // weight density (t / 2 sqrt(pi)) e^{-t^2/4u} u^{-3/2}, du = u dv
        rule.u[i] = u;
        rule.w[i] = w * (t / (2.0 * std::sqrt(M_PI))) * std::exp(-t * t / (4.0 * u)) / std::sqrt(u);
    }
    return rule;
}

double subordination_weight_total(double t, int n_nodes) {
    if (!(t > 0.0)) throw std::invalid_argument("subordination: t must be > 0");
    // u = t^2/(4 v^2) turns the weight into (2/sqrt(pi)) e^{-v^2} dv on (0, inf).
    const double v_max = 8.0;
    const double dv = v_max / (n_nodes - 1);
    double acc = 0.0;
    for (int i = 0; i < n_nodes; ++i) {
        const double v = dv * i;
        double w = dv;
        if (i == 0 || i == n_nodes - 1) w *= 0.5;
        acc += w * (2.0 / std::sqrt(M_PI)) * std::exp(-v * v);
    }
    return acc;
}

double subordination_window_mass(double t, int n_quad) {
    return make_subordination_rule(t, n_quad).w.sum();
}

KernelMatrix poisson_subordinated(const SpectralDecomposition& dec, double t, int n_quad) {
    const auto rule = make_subordination_rule(t, n_quad);
    const Vector& lam = dec.eigenvalues();
    Vector mult = Vector::Zero(lam.size());
    for (int i = 0; i < rule.u.size(); ++i)
        mult.array() += rule.w[i] * (-rule.u[i] * lam.array()).exp();
    const Vector exact = (-t * lam.array().sqrt()).exp().matrix();
    const double mismatch = (mult - exact).cwiseAbs().maxCoeff() / exact.cwiseAbs().maxCoeff();
    if (mismatch > 1e-3)
        throw std::runtime_error("poisson_subordinated: quadrature disagrees with the spectral multiplier");
    KernelMatrix km;
    km.t = t;
    km.kind = KernelKind::poisson_schrodinger;
    km.subordination_mismatch = mismatch;
    km.k = dec.kernel_matrix(mult);
    return km;
}

KernelMatrix poisson_t_derivative(const SpectralDecomposition& dec, double t) {
    if (!(t > 0.0)) throw std::invalid_argument("poisson_t_derivative: t must be > 0");
    const Vector& lam = dec.eigenvalues();
    const Vector sq = lam.array().sqrt().matrix();
    const Vector mult = (-sq.array() * (-t * sq.array()).exp()).matrix();

    // Centered finite difference of the subordinated route in multiplier space.
    const double eps = 1e-3 * t;
    const auto lo = make_subordination_rule(t - eps, 96);
    const auto hi = make_subordination_rule(t + eps, 96);
    Vector m_lo = Vector::Zero(lam.size());
    Vector m_hi = Vector::Zero(lam.size());
    for (int i = 0; i < lo.u.size(); ++i) m_lo.array() += lo.w[i] * (-lo.u[i] * lam.array()).exp();
    for (int i = 0; i < hi.u.size(); ++i) m_hi.array() += hi.w[i] * (-hi.u[i] * lam.array()).exp();
    const Vector fd = (m_hi - m_lo) / (2.0 * eps);
    const double scale = mult.cwiseAbs().maxCoeff();
    if (scale > 0.0 && (fd - mult).cwiseAbs().maxCoeff() / scale > 1e-3)
        throw std::runtime_error("poisson_t_derivative: finite-difference cross-check failed");

    KernelMatrix km;
    km.t = t;
    km.kind = KernelKind::poisson_t_derivative;
    km.k = dec.kernel_matrix(mult);
    return km;
}

double classical_poisson_kernel(const Vector& z, double t, int d) {
    if (!(t > 0.0)) throw std::invalid_argument("classical_poisson_kernel: t must be > 0");
    const double cd = std::tgamma(0.5 * (d + 1)) / std::pow(M_PI, 0.5 * (d + 1));
    return cd * t * std::pow(t * t + z.squaredNorm(), -0.5 * (d + 1));
}

double classical_poisson_tderiv_kernel(const Vector& z, double t, int d) {
    if (!(t > 0.0)) throw std::invalid_argument("classical_poisson_tderiv_kernel: t must be > 0");
    const double cd = std::tgamma(0.5 * (d + 1)) / std::pow(M_PI, 0.5 * (d + 1));
    const double r2 = t * t + z.squaredNorm();
    // t d/dt [c_d t r^-(d+1)/... ] = c_d t (|z|^2 - d t^2) (t^2+|z|^2)^(-(d+3)/2)
    return cd * t * (z.squaredNorm() - d * t * t) * std::pow(r2, -0.5 * (d + 3));
}

}  // namespace sqfn
