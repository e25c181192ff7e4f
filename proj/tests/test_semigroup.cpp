#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sqfn/semigroup.hpp"

using namespace sqfn;

namespace {

SpectralDecomposition decompose(const Grid& g, const Vector& v) {
    return spectral_decompose(assemble_operator(g, v, 1 << 20));
}

}  // namespace

TEST_CASE("assemble_operator: 1-d stencil, diagonal shift, symmetry, cap") {
    Grid g(1, 1.0, 3);
    const double ih2 = 1.0 / (g.spacing() * g.spacing());
    auto op = assemble_operator(g, Vector::Zero(3), 100);
    CHECK(op.m(0, 0) == doctest::Approx(2.0 * ih2));
    CHECK(op.m(0, 1) == doctest::Approx(-ih2));
    CHECK(op.m(1, 0) == doctest::Approx(-ih2));
    CHECK(op.m(0, 2) == 0.0);

    auto op_c = assemble_operator(g, Vector::Constant(3, 2.5), 100);
    CHECK(((op_c.m - op.m) - 2.5 * Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);

    Grid g3(3, 1.0, 7);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 3.0);
    Vector v(g3.node_count());
    for (Index i = 0; i < v.size(); ++i) v[i] = u(rng);
    auto op3 = assemble_operator(g3, v, 1000);
    CHECK((op3.m - op3.m.transpose()).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(assemble_operator(g3, v, 100), std::runtime_error);
}

TEST_CASE("spectral_decompose: Dirichlet spectrum closed form in d=1") {
    const int n = 24;
    Grid g(1, 1.0, n);
    const double h = g.spacing();
    auto dec = decompose(g, Vector::Zero(n));
    for (int j = 1; j <= n; ++j) {
        const double expected = 4.0 / (h * h) * std::pow(std::sin(j * M_PI / (2.0 * (n + 1))), 2);
        CHECK(dec.eigenvalues()[j - 1] == doctest::Approx(expected).epsilon(1e-10));
    }
}

TEST_CASE("spectral_decompose: shift, positivity, reconstruction, Gram defect") {
    Grid g(2, 0.8, 9);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 5.0);
    Vector v(g.node_count());
    for (Index i = 0; i < v.size(); ++i) v[i] = u(rng);

    auto dec0 = decompose(g, Vector::Zero(g.node_count()));
    auto decc = decompose(g, Vector::Constant(g.node_count(), 1.75));
    for (Index j = 0; j < dec0.count(); ++j)
        CHECK(decc.eigenvalues()[j] ==
              doctest::Approx(dec0.eigenvalues()[j] + 1.75).epsilon(1e-12));

    auto decv = decompose(g, v);
    CHECK(decv.eigenvalues()[0] >= -1e-9);
    for (Index j = 1; j < decv.count(); ++j)
        CHECK(decv.eigenvalues()[j] >= decv.eigenvalues()[j - 1]);

    const double hd = g.cell_volume();
    const Matrix gram = hd * (decv.modes().transpose() * decv.modes());
    CHECK((gram - Matrix::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() < 1e-10);

    auto op = assemble_operator(g, v, 1 << 20);
    const Matrix recon =
        hd * (decv.modes() * decv.eigenvalues().asDiagonal() * decv.modes().transpose());
    CHECK((recon - op.m).cwiseAbs().maxCoeff() / op.m.cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("heat kernel: constant potential is a pure exponential shift") {
    Grid g(2, 0.9, 11);
    auto dec0 = decompose(g, Vector::Zero(g.node_count()));
    auto dec1 = decompose(g, Vector::Ones(g.node_count()));
    for (double t : {0.05, 0.3}) {
        const auto k0 = heat_kernel(dec0, t);
        const auto k1 = heat_kernel(dec1, t);
        CHECK((k1.k - std::exp(-t) * k0.k).cwiseAbs().maxCoeff() <
              1e-8 * k0.k.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("heat kernel: free-space closed form away from walls (d=1)") {
    Grid g(1, 10.0, 512);
    auto dec = decompose(g, Vector::Zero(512));
    for (double t : {0.05, 0.2, 0.5}) {
        const auto km = heat_kernel(dec, t);
        double worst = 0.0;
        for (Index i = 0; i < 512; i += 7) {
            for (Index j = i; j < 512; j += 7) {
                const Vector xi = g.node(i), xj = g.node(j);
                if (std::abs(xi[0]) > 5.0 || std::abs(xj[0]) > 5.0) continue;
                const double hv = classical_heat_kernel(xi, xj, t, 1);
                if (hv < 1e-2 * classical_heat_kernel(xi, xi, t, 1)) continue;
                worst = std::max(worst, std::abs(km.k(i, j) - hv) / hv);
            }
        }
        CHECK(worst < 0.02);
    }
}

TEST_CASE("heat kernel: semigroup law, mass bound, near-nonnegativity") {
    Grid g(2, 0.9, 10);
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 4.0);
    Vector v(g.node_count());
    for (Index i = 0; i < v.size(); ++i) v[i] = u(rng);
    auto dec = decompose(g, v);
    const double hd = g.cell_volume();

    const auto ka = heat_kernel(dec, 0.07);
    const auto kb = heat_kernel(dec, 0.11);
    const auto kc = heat_kernel(dec, 0.18);
    const Matrix comp = hd * (ka.k * kb.k);
    CHECK((comp - kc.k).cwiseAbs().maxCoeff() <= 1e-8 * kc.k.cwiseAbs().maxCoeff());

    CHECK(ka.k.minCoeff() > -1e-10 * ka.k.maxCoeff());

    auto dec0 = decompose(g, Vector::Zero(g.node_count()));
    const auto k0 = heat_kernel(dec0, 0.07);
    for (Index x = 0; x < g.node_count(); ++x) {
        const double mass_v = hd * ka.k.row(x).sum();
        const double mass_0 = hd * k0.k.row(x).sum();
        CHECK(mass_v <= mass_0 + 1e-8);
        CHECK(mass_0 <= 1.0 + 1e-8);
    }

    CHECK_THROWS_AS(heat_kernel(dec, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(heat_kernel(dec, -1.0), std::invalid_argument);
}

TEST_CASE("heat kernel: strong continuity as t -> 0 on a smooth field") {
    Grid g(1, 2.0, 64);
    auto dec = decompose(g, Vector::Zero(64));
    const Vector f = dec.modes().leftCols(5) * Vector::LinSpaced(5, 1.0, 0.2);
    const double hd = g.cell_volume();
    double prev = 1e300;
    for (double t : {0.1, 0.01, 0.001, 0.0001}) {
        const auto km = heat_kernel(dec, t);
        const double rel = (hd * (km.k * f) - f).norm() / f.norm();
        CHECK(rel < prev);
        prev = rel;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE("classical heat kernel closed form") {
    Vector x = Vector::Zero(3), y = Vector::Zero(3);
    CHECK(classical_heat_kernel(x, y, 0.3, 3) ==
          doctest::Approx(std::pow(4.0 * M_PI * 0.3, -1.5)));
    for (int d : {1, 3}) {  // unit mass via radial quadrature
        const double sigma = 2.0 * std::pow(M_PI, 0.5 * d) / std::tgamma(0.5 * d);
        const double t = 0.17;
        double acc = 0.0;
        const int n = 400000;
        const double smax = 40.0 * std::sqrt(t), ds = smax / n;
        for (int i = 0; i < n; ++i) {
            const double s = (i + 0.5) * ds;
            acc += std::pow(s, d - 1) * std::exp(-s * s / (4.0 * t));
        }
        acc *= sigma * ds * std::pow(4.0 * M_PI * t, -0.5 * d);
        CHECK(acc == doctest::Approx(1.0).epsilon(1e-6));
    }
    Vector x3 = Vector::Constant(3, 0.4);
    const double l = 1.7, t = 0.21;
    CHECK(classical_heat_kernel(l * x3, Vector::Zero(3), l * l * t, 3) ==
          doctest::Approx(std::pow(l, -3) * classical_heat_kernel(x3, Vector::Zero(3), t, 3))
              .epsilon(1e-12));
}

TEST_CASE("Mehler kernel: symmetry, small-t limit, spectral match in d=1") {
    Vector x = Vector::Constant(1, 0.3), y = Vector::Constant(1, -0.5);
    CHECK(mehler_kernel(x, y, 0.2, 1) == doctest::Approx(mehler_kernel(y, x, 0.2, 1)));
    for (int d : {1, 3}) {
        Vector z = Vector::Constant(d, 0.25);
        double prev = 1e300;
        for (double t : {0.1, 0.01, 0.001}) {
            const double ratio = mehler_kernel(z, z, t, d) / std::pow(4.0 * M_PI * t, -0.5 * d);
            CHECK(std::abs(ratio - 1.0) < prev);
            prev = std::abs(ratio - 1.0);
        }
        CHECK(prev < 2e-3);
    }

    Grid g(1, 8.0, 512);
    Vector v(g.node_count());
    for (Index i = 0; i < v.size(); ++i) v[i] = g.node(i).squaredNorm();
    auto dec = decompose(g, v);
    for (double t : {0.05, 0.2, 0.5}) {
        const auto km = heat_kernel(dec, t);
        double worst = 0.0;
        for (Index i = 0; i < 512; i += 5)
            for (Index j = i; j < 512; j += 5) {
                const Vector xi = g.node(i), xj = g.node(j);
                if (std::abs(xi[0]) > 6.0 || std::abs(xj[0]) > 6.0) continue;
                const double mv = mehler_kernel(xi, xj, t, 1);
                if (mv < std::exp(-4.0) * mehler_kernel(Vector::Zero(1), Vector::Zero(1), t, 1))
                    continue;
                worst = std::max(worst, std::abs(km.k(i, j) - mv) / mv);
            }
        CHECK(worst < 0.03);
    }
}

TEST_CASE("subordination: weight integral and windowed mass") {
    for (double t : {0.05, 0.3, 1.0, 4.0})
        CHECK(std::abs(subordination_weight_total(t) - 1.0) < 1e-8);
    const double mass = subordination_window_mass(0.3, 96);
    CHECK(mass > 0.99);  // the window intentionally leaves out the far heat tail
    CHECK(mass < 1.0);
}

TEST_CASE("poisson_subordinated: spectral match and eigenfunction action") {
    Grid g(3, 0.9, 10);
    auto dec = decompose(g, Vector::Ones(g.node_count()));
    for (double t : {0.1, 0.5, 1.5}) {
        const auto km = poisson_subordinated(dec, t, 96);
        CHECK(km.subordination_mismatch < 1e-4);
        const double hd = g.cell_volume();
        for (Index j : {Index{0}, dec.count() / 2}) {
            const Vector phi = dec.modes().col(j);
            const Vector out = hd * (km.k * phi);
            const double target = std::exp(-t * std::sqrt(dec.eigenvalues()[j]));
            CHECK((out - target * phi).norm() / phi.norm() < 1e-6);
        }
    }
}

TEST_CASE("poisson_subordinated: free closed form on a long 1-d grid") {
    Grid g(1, 20.0, 1024);
    auto dec = decompose(g, Vector::Zero(1024));
    for (double t : {0.2, 0.35, 0.5}) {
        const auto km = poisson_subordinated(dec, t, 96);
        double worst = 0.0;
        for (Index i = 0; i < 1024; i += 11)
            for (Index j = i; j < 1024; j += 11) {
                const Vector xi = g.node(i), xj = g.node(j);
                if (std::abs(xi[0]) > 5.0 || std::abs(xj[0]) > 5.0) continue;
                const double pv = classical_poisson_kernel(xi - xj, t, 1);
                if (pv < std::exp(-2.0) * classical_poisson_kernel(Vector::Zero(1), t, 1))
                    continue;
                worst = std::max(worst, std::abs(km.k(i, j) - pv) / pv);
            }
        CHECK(worst < 0.02);
    }
}

TEST_CASE("poisson_t_derivative: eigen action and finite-difference oracle") {
    Grid g(2, 0.9, 9);
    auto dec = decompose(g, Vector::Ones(g.node_count()));
    const double hd = g.cell_volume();
    const double t = 0.4;
    const auto kd = poisson_t_derivative(dec, t);
    for (Index j : {Index{0}, dec.count() / 3}) {
        const Vector phi = dec.modes().col(j);
        const double lam = dec.eigenvalues()[j];
        const Vector out = hd * (kd.k * phi);
        const double target = -std::sqrt(lam) * std::exp(-t * std::sqrt(lam));
        CHECK((out - target * phi).norm() < 1e-8 * std::abs(target) * phi.norm() + 1e-12);
    }
    // multiplier of t*(derivative) equals -exp(-1) at t*sqrt(lambda) = 1
    const double lam0 = dec.eigenvalues()[0];
    const double t1 = 1.0 / std::sqrt(lam0);
    const auto kd1 = poisson_t_derivative(dec, t1);
    const Vector phi0 = dec.modes().col(0);
    const double coef = t1 * hd * hd * (kd1.k * phi0).dot(phi0);
    CHECK(coef == doctest::Approx(-std::exp(-1.0)).epsilon(1e-9));

    double errs[2];
    int k = 0;
    for (double eps : {0.02, 0.01}) {
        const auto kp = poisson_subordinated(dec, t + eps, 192);
        const auto km = poisson_subordinated(dec, t - eps, 192);
        const Matrix fd = (kp.k - km.k) / (2.0 * eps);
        errs[k++] = (fd - kd.k).cwiseAbs().maxCoeff();
    }
    CHECK(errs[1] < 0.3 * errs[0]);
}

TEST_CASE("classical Poisson t-derivative closed form") {
    for (int d : {1, 2, 3}) {
        const double cd = std::tgamma(0.5 * (d + 1)) / std::pow(M_PI, 0.5 * (d + 1));
        for (double t : {0.3, 1.1})
            CHECK(classical_poisson_tderiv_kernel(Vector::Zero(d), t, d) ==
                  doctest::Approx(-d * cd * std::pow(t, -d)).epsilon(1e-12));
    }
    Vector z = Vector::Constant(2, 0.35);
    const double t = 0.6;
    double errs[2];
    int k = 0;
    for (double eps : {1e-3, 5e-4}) {
        const double fd = t *
                          (classical_poisson_kernel(z, t + eps, 2) -
                           classical_poisson_kernel(z, t - eps, 2)) /
                          (2.0 * eps);
        errs[k++] = std::abs(fd - classical_poisson_tderiv_kernel(z, t, 2));
    }
    CHECK(errs[1] < 0.3 * errs[0]);
    const double l = 2.3;
    CHECK(classical_poisson_tderiv_kernel(l * z, l * t, 2) ==
          doctest::Approx(std::pow(l, -2) * classical_poisson_tderiv_kernel(z, t, 2))
              .epsilon(1e-12));
}
