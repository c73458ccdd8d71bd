#include <catch2/catch_amalgamated.hpp>

#include "ectrace/scalar.hpp"

using namespace ect;

TEST_CASE("rational arithmetic reduces") {
    Rational a(2, 4), b(1, 2);
    REQUIRE(a == b);
    REQUIRE((a + b) == Rational(1));
    REQUIRE((a * b) == Rational(1, 4));
    REQUIRE((Rational(1) / Rational(3)) == Rational(1, 3));
}

TEST_CASE("hbar window truncation flags overflow") {
    Scalar a = Scalar::monomial(3, cx(1.0, 0.0));
    Scalar b = Scalar::monomial(2, cx(1.0, 0.0));
    Scalar p = a * b;  // lands at hbar^5, outside [-4,4]
    REQUIRE(p.overflow());
    REQUIRE(p.isZero());

    Scalar z = Scalar::zero();
    REQUIRE(!z.overflow());
    REQUIRE(z.isZero());
}

TEST_CASE("series product matches direct convolution") {
    Scalar a = Scalar::monomial(-1, cx(2.0, 0.0)) + Scalar::monomial(1, cx(0.0, 1.0));
    Scalar b = Scalar::monomial(0, cx(1.0, 1.0));
    Scalar p = a * b;
    REQUIRE(p.coeff(-1) == cx(2.0, 2.0));
    REQUIRE(p.coeff(1) == cx(-1.0, 1.0));
    REQUIRE(!p.overflow());
}

TEST_CASE("exact series arithmetic is exact") {
    ExactScalar h = ExactScalar::monomial(1, GaussianRational(1));
    ExactScalar x = h * h + h;
    REQUIRE(x.coeff(2) == GaussianRational(1));
    ExactScalar y = x.divInt(3);
    REQUIRE(y.coeff(1) == GaussianRational(Rational(1, 3)));
}
