#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "ectrace/parse.hpp"

using namespace ect;

namespace {
using NF = FockElement<Scalar>;
const SymplecticSpace& mixedSp() {
    static SymplecticSpace sp =
        SymplecticSpace::directSum(SymplecticSpace::betagamma(2), SymplecticSpace::bc(1));
    return sp;
}
}  // namespace

TEST_CASE("fock grammar basics") {
    const auto& sp = mixedSp();
    REQUIRE(parseFock("b1*g1", sp) == NF::generator(sp, "b1") * NF::generator(sp, "g1"));

    NF s = parseFock("(i*hbar/pi)", sp);
    REQUIRE(s.termCount() == 1);
    REQUIRE(s.terms().begin()->first.empty());
    REQUIRE(std::abs(s.terms().begin()->second.coeff(1) - cx(0.0, 1.0 / kPi)) < 1e-16);

    REQUIRE(parseFock("D^2 g1!", sp) == NF::generator(sp, "g1", 2, true));

    NF lit = parseFock("1.5+2j", sp);
    REQUIRE(std::abs(lit.terms().begin()->second.coeff(0) - cx(1.5, 2.0)) < 1e-16);

    REQUIRE(parseFock("b1^2", sp) == NF::generator(sp, "b1") * NF::generator(sp, "b1"));
    REQUIRE(parseFock("c1*c1", sp).isZero());

    REQUIRE_THROWS_AS(parseFock("b1*", sp), ParseError);
    REQUIRE_THROWS_AS(parseFock("qq7", sp), ParseError);
    REQUIRE_THROWS_AS(parseFock("imtau", sp), ParseError);
    REQUIRE(std::abs(parseFock("imtau", sp, 1.7).terms().begin()->second.coeff(0) -
                     cx(1.7, 0.0)) < 1e-16);
}

TEST_CASE("print-parse round trip on random canonical forms") {
    const auto& sp = mixedSp();
    std::mt19937 rng(113);
    std::uniform_int_distribution<int> genD(0, int(sp.dim()) - 1);
    std::uniform_int_distribution<int> derD(0, 2);
    std::uniform_int_distribution<int> dagD(0, 1);
    std::uniform_real_distribution<double> C(-2.0, 2.0);
    for (int trial = 0; trial < 25; ++trial) {
        NF x(&sp);
        for (int t = 0; t < 3; ++t) {
            Monomial m;
            int len = 1 + (trial + t) % 3;
            for (int v = 0; v < len; ++v)
                m.push_back(makeVar(unsigned(genD(rng)), unsigned(derD(rng)), dagD(rng) != 0));
            std::sort(m.begin(), m.end());
            bool bad = false;
            for (size_t q = 1; q < m.size(); ++q)
                if (m[q] == m[q - 1] && varOdd(sp, m[q])) bad = true;
            if (bad) continue;
            Scalar c = Scalar::monomial((trial + t) % 3 - 1, cx(C(rng), C(rng)));
            x.addTerm(m, c);
        }
        NF back = parseFock(printFock(x), sp);
        INFO("printed: " << printFock(x));
        REQUIRE((back - x).maxAbs() < 1e-12);
    }
}

TEST_CASE("vector field grammar") {
    FormalVectorField v = parseVectorField("2 * y1^2 y2 d/dy1 - y2 d/dy2", 2);
    REQUIRE(v.vec.size() == 2);
    REQUIRE(v.vec.at({{2, 1}, 0}) == cx(2.0, 0.0));
    REQUIRE(v.vec.at({{0, 1}, 1}) == cx(-1.0, 0.0));

    FormalVectorField w = parseVectorField("[ y1 dy2 ]", 2);
    REQUIRE(w.form.size() == 1);
    REQUIRE(w.form.at({{1, 0}, 1}) == cx(1.0, 0.0));
}

TEST_CASE("chain json round trip against built-in chains") {
    const auto& sp = SymplecticSpace::betagamma(1);
    EllipticContext ell(cx(0.3, 1.7));
    ChainContext cc(sp, ell);

    nlohmann::json j = {
        {"points", {"z1"}},
        {"terms",
         {{{"coeff", {{"scalar", "-pi/imtau"}}},
           {"insertions", {{{"point", "z1"}, {"expr", "1"}, {"shift", true}, {"dzbar", true}}}}}}}};
    Chain c = chainFromJson(j, cc);
    Chain ref = unitChain(cc);
    REQUIRE(c.terms().size() == 1);
    REQUIRE(ref.terms().size() == 1);
    REQUIRE(c.terms().begin()->first == ref.terms().begin()->first);
    REQUIRE((c.terms().begin()->second - ref.terms().begin()->second).maxAbs() < 1e-14);

    // propagator coefficients
    nlohmann::json j2 = {
        {"points", {"z1", "z2"}},
        {"terms",
         {{{"coeff",
            {{"props", {{{"a", 0}, {"from", "z2"}, {"to", "z1"}}}}}},
           {"insertions",
            {{{"point", "z1"}, {"expr", "b1"}, {"shift", true}},
             {{"point", "z2"}, {"expr", "g1"}, {"shift", true}}}}}}}};
    Chain c2 = chainFromJson(j2, cc);
    REQUIRE(c2.terms().size() == 1);
    const auto& k2 = c2.terms().begin()->first;
    REQUIRE(k2.form.edges.size() == 1);
    REQUIRE(k2.form.edges[0] == PEdge{0, 1, 0});
    // orientation flip from (z2, z1) storage
    REQUIRE(std::abs(c2.terms().begin()->second.coeff(0) - cx(-1.0, 0.0)) < 1e-14);

    // schema errors carry json pointer paths
    nlohmann::json bad = {{"points", {"z1"}},
                          {"terms", {{{"insertions", {{{"point", "zX"}, {"expr", "b1"}}}}}}}};
    try {
        chainFromJson(bad, cc);
        FAIL("expected ChainJsonError");
    } catch (const ChainJsonError& e) {
        REQUIRE(e.path == "/terms/0/insertions/0/point");
    }
}
