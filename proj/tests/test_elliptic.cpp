#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "ectrace/elliptic.hpp"
#include "ectrace/oracles.hpp"

using namespace ect;

namespace {

// independent 40-term theta oracle in long double precision
cx thetaOracle(cx z, cx tau) {
    std::complex<long double> s(0.0L);
    std::complex<long double> zl(z.real(), z.imag()), tl(tau.real(), tau.imag());
    const long double pi = 3.14159265358979323846264338327950288L;
    std::complex<long double> I(0.0L, 1.0L);
    for (int n = -40; n <= 40; ++n) {
        long double e = (n + 0.5L) * (n + 0.5L);
        std::complex<long double> term =
            std::exp(I * pi * tl * e) * std::exp(std::complex<long double>(0.0L, (2 * n + 1) * pi) * zl);
        if (n & 1) term = -term;
        s += term;
    }
    s *= std::complex<long double>(0.0L, -1.0L);
    return cx(double(s.real()), double(s.imag()));
}

}  // namespace

TEST_CASE("theta1 basics") {
    EllipticContext ctx(cx(0.0, 1.0));
    REQUIRE(std::abs(ctx.theta1(cx(0.0))) < 1e-14);

    std::mt19937 rng(3);
    std::uniform_real_distribution<double> U(-0.45, 0.45);
    for (int t = 0; t < 10; ++t) {
        cx z(U(rng), U(rng));
        REQUIRE(std::abs(ctx.theta1(-z) + ctx.theta1(z)) < 1e-12);
    }

    cx v = ctx.theta1(cx(0.3, 0.0));
    REQUIRE(std::abs(v - thetaOracle(cx(0.3, 0.0), cx(0.0, 1.0))) < 1e-14);
}

TEST_CASE("context rejects bad moduli") {
    REQUIRE_THROWS_AS(EllipticContext(cx(0.0, -1.0)), EllipticError);
    REQUIRE_THROWS_AS(EllipticContext(cx(0.0, 0.1)), EllipticError);
}

TEST_CASE("propagator oddness and periodicity") {
    EllipticContext ctx(cx(0.3, 1.7));
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> U(0.05, 0.45);
    for (int t = 0; t < 100; ++t) {
        cx z(U(rng), U(rng)), w(-U(rng), -U(rng));
        // antisymmetry of P makes the argument-and-label swap a pure -1
        for (int a = 0; a <= 2; ++a)
            for (int b = 0; a + b <= 2; ++b) {
                cx lhs = ctx.propagator(z, w, a, b);
                cx rhs = ctx.propagator(w, z, b, a);
                REQUIRE(std::abs(lhs + rhs) < 1e-10 * std::max(1.0, std::abs(lhs)));
            }
        // single-index flip convention P^{(a)}_{ji} = (-1)^{a+1} P^{(a)}_{ij}
        for (int a = 0; a <= 3; ++a) {
            cx lhs = ctx.propagator(z, w, a, 0);
            cx rhs = ctx.propagator(w, z, a, 0);
            double sign = (a % 2 == 0) ? -1.0 : 1.0;  // (-1)^{a+1}
            REQUIRE(std::abs(rhs - sign * lhs) < 1e-10 * std::max(1.0, std::abs(lhs)));
        }
    }
    for (int t = 0; t < 10; ++t) {
        cx z(U(rng), U(rng)), w(-U(rng), -U(rng));
        cx p = ctx.propagator(z, w);
        REQUIRE(std::abs(ctx.propagator(z + 1.0, w) - p) < 1e-10);
        REQUIRE(std::abs(ctx.propagator(z + ctx.tau(), w) - p) < 1e-10);
    }
}

TEST_CASE("propagator dbar equation via finite differences") {
    EllipticContext ctx(cx(0.1, 1.3));
    std::mt19937 rng(17);
    std::uniform_real_distribution<double> U(0.1, 0.4);
    const double h = 1e-5;
    for (int t = 0; t < 50; ++t) {
        cx z(U(rng), U(rng)), w(-U(rng), U(rng) + 0.45);
        auto P = [&](cx zz) { return ctx.propagator(zz, w); };
        cx dx = (P(z + h) - P(z - h)) / (2 * h);
        cx dy = (P(z + cx(0, h)) - P(z - cx(0, h))) / (2 * h);
        cx dzbar = 0.5 * (dx + cx(0, 1) * dy);
        REQUIRE(std::abs(dzbar - cx(0.0, -1.0 / ctx.imTau())) < 1e-7);
    }
}

TEST_CASE("propagator minus the bare pole stays bounded near the diagonal") {
    EllipticContext ctx(cx(0.0, 1.0));
    for (double eps : {1e-2, 1e-3, 1e-4}) {
        cx z(0.2 + eps, 0.1), w(0.2, 0.1);
        cx reg = ctx.propagator(z, w) - cx(0.0, 1.0 / kPi) / (z - w);
        REQUIRE(std::abs(reg) < 1.0);
    }
    REQUIRE_THROWS_WITH(EllipticContext(cx(0.0, 1.0)).propagator(cx(0.25, 0.0), cx(0.25, 0.0)),
                        Catch::Matchers::ContainsSubstring("diagonal"));
}

TEST_CASE("finite differences confirm the holomorphic derivative") {
    EllipticContext ctx(cx(0.2, 1.1));
    const double h = 1e-5;
    cx w(0.0, 0.0);
    for (cx z : {cx(0.31, 0.22), cx(-0.17, 0.4), cx(0.05, -0.33)}) {
        cx dz = (ctx.propagator(z + h, w) - ctx.propagator(z - h, w)) / (2 * h) +
                (ctx.propagator(z + cx(0, h), w) - ctx.propagator(z - cx(0, h), w)) /
                    (2 * h * cx(0, 1));
        dz *= 0.5;
        cx exact = ctx.propagator(z, w, 1, 0);
        REQUIRE(std::abs(dz - exact) < 1e-7 * std::max(1.0, std::abs(exact)));
    }
}

TEST_CASE("Q antisymmetry holds across the table") {
    EllipticContext ctx(cx(0.3, 1.7));
    for (int k = 0; k <= 8; ++k)
        for (int l = 0; k + l <= 8; ++l)
            REQUIRE(std::abs(ctx.qCoeff(k + 1, l) + ctx.qCoeff(k, l + 1)) < 1e-12);
    REQUIRE(std::abs(ctx.qCoeff(0, 0)) == 0.0);
}

TEST_CASE("Q(1,0) equals the modular completion, two independent routes") {
    for (cx tau : {cx(0.0, 1.0), cx(0.3, 1.7)}) {
        EllipticContext ctx(tau);
        // lattice route
        cx lattice = cx(0.0, -kPi / 3.0) * ctx.eisensteinHat2();
        REQUIRE(std::abs(ctx.qCoeff(1, 0) - lattice) < 1e-9);
        // theta-series route: c1 of (theta'/theta - 1/u), plus the Im-part
        auto reg = oracle::thetaRegularLogDeriv(ctx, 3);
        cx thetaRoute = cx(0.0, 1.0 / kPi) * reg[1] + cx(0.0, 1.0 / ctx.imTau());
        REQUIRE(std::abs(ctx.qCoeff(1, 0) - thetaRoute) < 1e-9);
    }
    EllipticContext ctxi(cx(0.0, 1.0));
    REQUIRE(std::abs(ctxi.eisensteinHat2()) < 1e-10);
}

TEST_CASE("Eisenstein series against the q-expansion oracle") {
    cx tau(0.3, 1.7);
    EllipticContext ctx(tau);
    REQUIRE(std::abs(ctx.eisenstein(2) - oracle::eisensteinQExp(2, tau)) < 1e-10);
    REQUIRE(std::abs(ctx.eisenstein(4) - oracle::eisensteinQExp(4, tau)) < 1e-10);
    REQUIRE(std::abs(ctx.eisenstein(6) - oracle::eisensteinQExp(6, tau)) < 1e-10);

    EllipticContext far(cx(0.0, 10.0));
    REQUIRE(std::abs(far.eisenstein(4) - 1.0) < 1e-10);

    REQUIRE_THROWS_AS(ctx.eisenstein(3), EllipticError);
}

TEST_CASE("diagonal Laurent jets") {
    EllipticContext ctx(cx(0.3, 1.7));
    LaurentJet j0 = ctx.laurentJet(0, 3);
    REQUIRE(j0.poleOrder == 1);
    REQUIRE(std::abs(j0.coeff(-1) - cx(0.0, 1.0 / kPi)) < 1e-15);
    REQUIRE(std::abs(j0.coeff(0)) < 1e-15);
    REQUIRE(std::abs(j0.coeff(1) - ctx.qCoeff(1, 0)) < 1e-12);

    LaurentJet j1 = ctx.laurentJet(1, 2);
    REQUIRE(std::abs(j1.coeff(-2) - cx(0.0, -1.0 / kPi)) < 1e-15);

    // u^3 coefficient against the theta-series oracle
    auto reg = oracle::thetaRegularLogDeriv(ctx, 4);
    REQUIRE(std::abs(j0.coeff(3) - cx(0.0, 1.0 / kPi) * reg[3]) < 1e-11);

    // jets of d^a P: leading coefficient (i/pi)(-1)^a a!
    for (int a = 0; a <= 4; ++a) {
        LaurentJet j = ctx.laurentJet(a, 0);
        double f = 1.0;
        for (int t = 2; t <= a; ++t) f *= t;
        cx expect = cx(0.0, 1.0 / kPi) * f * ((a % 2) ? -1.0 : 1.0);
        REQUIRE(std::abs(j.coeff(-a - 1) - expect) < 1e-14);
    }
}

TEST_CASE("propagator values agree with the jet near the diagonal") {
    // The jet stores the pole plus the d_z-Taylor data; the only piece it
    // cannot see is the antiholomorphic half -i ubar/Im(tau) of the zero-mode
    // part, which is linear. Adding it back reproduces P to the series tail.
    EllipticContext ctx(cx(0.0, 1.4));
    LaurentJet j = ctx.laurentJet(0, 5);
    cx w(0.13, 0.21);
    for (double e : {3e-2, 1e-2}) {
        cx u(e, 0.4 * e);
        cx z = w + u;
        cx approx(0.0);
        for (int p = -1; p <= 5; ++p) approx += j.coeff(p) * std::pow(u, p);
        approx += cx(0.0, -1.0 / ctx.imTau()) * std::conj(u);
        cx exact = ctx.propagator(z, w);
        REQUIRE(std::abs(exact - approx) < 1e-8);
    }
}
