#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "ectrace/fock.hpp"
#include "ectrace/oracles.hpp"

using namespace ect;

using EF = FockElement<ExactScalar>;

namespace {

const SymplecticSpace& bg1() {
    static SymplecticSpace sp = SymplecticSpace::betagamma(1);
    return sp;
}
const SymplecticSpace& bg2() {
    static SymplecticSpace sp = SymplecticSpace::betagamma(2);
    return sp;
}
const SymplecticSpace& mixed() {
    static SymplecticSpace sp =
        SymplecticSpace::directSum(SymplecticSpace::betagamma(2), SymplecticSpace::bc(1));
    return sp;
}

EF gen(const SymplecticSpace& sp, const std::string& n, unsigned k = 0, bool dag = false) {
    return EF::generator(sp, n, k, dag);
}

// random homogeneous-ish polynomial with word length <= maxLen
EF randomElement(const SymplecticSpace& sp, std::mt19937& rng, int maxLen, unsigned maxDeriv,
                 int nTerms = 2) {
    std::uniform_int_distribution<int> lenD(1, maxLen);
    std::uniform_int_distribution<int> genD(0, int(sp.dim()) - 1);
    std::uniform_int_distribution<int> derD(0, int(maxDeriv));
    std::uniform_int_distribution<long long> coefD(-3, 3);
    EF out(&sp);
    for (int t = 0; t < nTerms; ++t) {
        Monomial m;
        int len = lenD(rng);
        for (int i = 0; i < len; ++i)
            m.push_back(makeVar(unsigned(genD(rng)), unsigned(derD(rng)), false));
        std::sort(m.begin(), m.end());
        bool bad = false;
        for (size_t i = 1; i < m.size(); ++i)
            if (m[i] == m[i - 1] && varOdd(sp, m[i])) bad = true;
        if (bad) continue;
        long long c = coefD(rng);
        if (c == 0) c = 1;
        out.addTerm(m, ExactScalar::constant(GaussianRational(c)));
    }
    return out;
}

GaussianRational grInverse(const GaussianRational& v) {
    Rational d = v.re * v.re + v.im * v.im;
    return GaussianRational(v.re / d, -v.im / d);
}

// exact solve: is x in the image of L_{-1}?
bool inTranslateImage(const EF& x) {
    if (x.isZero()) return true;
    const SymplecticSpace& sp = x.space();
    // candidate preimage monomials: all single-variable lowerings of x's monomials
    std::vector<Monomial> pre;
    for (const auto& [m, c] : x.terms()) {
        for (size_t i = 0; i < m.size(); ++i) {
            if (varDeriv(m[i]) == 0) continue;
            Monomial low = m;
            low[i] = makeVar(varGen(m[i]), varDeriv(m[i]) - 1, varDag(m[i]), varPoint(m[i]));
            std::sort(low.begin(), low.end());
            if (std::find(pre.begin(), pre.end(), low) == pre.end()) pre.push_back(low);
        }
    }
    // target space: monomials of x plus everything L_{-1}(pre) reaches
    std::vector<Monomial> basis;
    auto basisIndex = [&](const Monomial& m) {
        auto it = std::find(basis.begin(), basis.end(), m);
        if (it == basis.end()) {
            basis.push_back(m);
            return basis.size() - 1;
        }
        return size_t(it - basis.begin());
    };
    for (const auto& [m, c] : x.terms()) basisIndex(m);
    std::vector<EF> images;
    for (const auto& m : pre) {
        EF e = EF::monomialElem(sp, m, ExactScalar::one()).translated();
        images.push_back(e);
        for (const auto& [mm, cc] : e.terms()) basisIndex(mm);
    }
    // per hbar power, solve the exact linear system
    for (int p = -4; p <= 4; ++p) {
        size_t rows = basis.size(), cols = images.size();
        std::vector<GaussianRational> A(rows * (cols + 1));
        bool any = false;
        for (size_t r = 0; r < rows; ++r) {
            for (size_t cI = 0; cI < cols; ++cI) {
                auto it = images[cI].terms().find(basis[r]);
                if (it != images[cI].terms().end()) A[r * (cols + 1) + cI] = it->second.coeff(0);
            }
            auto xt = x.terms().find(basis[r]);
            if (xt != x.terms().end()) {
                A[r * (cols + 1) + cols] = xt->second.coeff(p);
                if (!xt->second.coeff(p).isZero()) any = true;
            }
        }
        if (!any) continue;
        // Gaussian elimination; consistent iff no pivot in the RHS column
        size_t rank = 0;
        for (size_t c = 0; c < cols && rank < rows; ++c) {
            size_t piv = rank;
            while (piv < rows && A[piv * (cols + 1) + c].isZero()) ++piv;
            if (piv == rows) continue;
            for (size_t j = 0; j <= cols; ++j) std::swap(A[piv * (cols + 1) + j], A[rank * (cols + 1) + j]);
            GaussianRational inv = grInverse(A[rank * (cols + 1) + c]);
            for (size_t r = 0; r < rows; ++r) {
                if (r == rank) continue;
                GaussianRational f = A[r * (cols + 1) + c] * inv;
                if (f.isZero()) continue;
                for (size_t j = c; j <= cols; ++j)
                    A[r * (cols + 1) + j] = A[r * (cols + 1) + j] - f * A[rank * (cols + 1) + j];
            }
            ++rank;
        }
        for (size_t r = 0; r < rows; ++r) {
            bool allZero = true;
            for (size_t c = 0; c < cols; ++c)
                if (!A[r * (cols + 1) + c].isZero()) allZero = false;
            if (allZero && !A[r * (cols + 1) + cols].isZero()) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("betagamma pairing values") {
    const auto& sp = bg1();
    REQUIRE(sp.omega(sp.indexOf("b1"), sp.indexOf("g1")) == GaussianRational(1));
    REQUIRE(sp.omega(sp.indexOf("g1"), sp.indexOf("b1")) == GaussianRational(-1));
}

TEST_CASE("invalid pairings are rejected with the offending pair") {
    std::vector<GeneratorInfo> gens{{"b1", false, 0, 1, 1}};
    std::vector<GaussianRational> om{GaussianRational(1)};  // <b1,b1> = 1
    REQUIRE_THROWS_WITH(makeSpace(gens, om),
                        Catch::Matchers::ContainsSubstring("(b1, b1)"));

    // degenerate 2x2 even pairing
    std::vector<GeneratorInfo> g2{{"b1", false, 0, 1, 1}, {"g1", false, 0, 0, 1}};
    std::vector<GaussianRational> om2(4);
    REQUIRE_THROWS_WITH(makeSpace(g2, om2), Catch::Matchers::ContainsSubstring("degenerate"));

    // degree constraint: <x,y> nonzero with deg x + deg y != 0
    std::vector<GeneratorInfo> g3{{"x", false, 1, 1, 1}, {"y", false, 1, 0, 1}};
    std::vector<GaussianRational> om3{GaussianRational(0), GaussianRational(1), GaussianRational(-1),
                                      GaussianRational(0)};
    REQUIRE_THROWS_WITH(makeSpace(g3, om3), Catch::Matchers::ContainsSubstring("degree"));
}

TEST_CASE("bc preset is a valid odd symmetric pairing") {
    const auto& sp = SymplecticSpace::bc(1);
    REQUIRE(sp.omega(0, 1) == GaussianRational(1));
    REQUIRE(sp.omega(1, 0) == GaussianRational(1));
}

TEST_CASE("normal product: commutativity and odd squares") {
    const auto& sp = mixed();
    EF b = gen(sp, "b1"), g = gen(sp, "g1"), c = gen(sp, "c1"), d = gen(sp, "d1");
    REQUIRE(b * g == g * b);
    REQUIRE((c * c).isZero());
    REQUIRE(c * d == -(d * c));
    EF sum = b + g;
    REQUIRE(sum * g == b * g + g * g);
    // unit
    EF vac = EF::vacuum(sp);
    REQUIRE(vac * b == b);
}

TEST_CASE("translation operator is a derivation") {
    const auto& sp = bg1();
    EF b = gen(sp, "b1"), g = gen(sp, "g1");
    REQUIRE(b.translated() == gen(sp, "b1", 1));
    REQUIRE(EF::vacuum(sp).translated().isZero());
    REQUIRE((b * g).translated() == gen(sp, "b1", 1) * g + b * gen(sp, "g1", 1));
}

TEST_CASE("generator OPE table: only the simple pole survives") {
    const auto& sp = mixed();
    auto wp = defaultWickParams<ExactScalar>();
    ExactScalar kappa = wp.coupling;
    for (size_t p = 0; p < sp.dim(); ++p)
        for (size_t q = 0; q < sp.dim(); ++q) {
            EF a = EF::generator(sp, sp.gen(p).name);
            EF b = EF::generator(sp, sp.gen(q).name);
            EF zeroth = nthProduct(a, 0, b, wp);
            EF expect = EF::vacuum(sp).scaled(kappa.scaled(sp.omega(p, q).isZero()
                                                               ? GaussianRational(0)
                                                               : sp.omega(p, q)));
            REQUIRE(zeroth == expect);
            for (int n = 1; n <= 3; ++n) REQUIRE(nthProduct(a, n, b, wp).isZero());
        }
}

TEST_CASE("frozen examples: beta acting on gamma powers") {
    const auto& sp = bg1();
    auto wp = defaultWickParams<ExactScalar>();
    EF b = gen(sp, "b1"), g = gen(sp, "g1");
    // beta_(0) (gamma*gamma) = 2 kappa gamma, kappa the OPE coupling
    EF lhs = nthProduct(b, 0, g * g, wp);
    EF rhs = g.scaled(wp.coupling.scaled(GaussianRational(2)));
    REQUIRE(lhs == rhs);
    REQUIRE(lhs == oracle::nthOracle(b, 0, g * g, wp));
}

TEST_CASE("vacuum axioms for the derivation action") {
    const auto& sp = bg2();
    auto wp = defaultWickParams<ExactScalar>();
    std::mt19937 rng(11);
    for (int t = 0; t < 5; ++t) {
        EF a = randomElement(sp, rng, 3, 1);
        REQUIRE(derivationAction(a, EF::vacuum(sp), wp).isZero());
    }
}

TEST_CASE("Wick engine agrees with the mode-algebra oracle") {
    const auto& sp = mixed();
    auto wp = defaultWickParams<ExactScalar>();
    wp.derivCap = 32;  // deep contractions shift derivative orders well past the default
    std::mt19937 rng(7);
    for (int t = 0; t < 50; ++t) {
        EF a = randomElement(sp, rng, 3, 2);
        EF b = randomElement(sp, rng, 3, 2);
        for (int n = -1; n <= 2; ++n) {
            EF engine = nthProduct(a, n, b, wp);
            EF orc = oracle::nthOracle(a, n, b, wp);
            INFO("n=" << n << " a=" << a.str() << " b=" << b.str());
            REQUIRE(engine == orc);
        }
    }
}

TEST_CASE("Borcherds commutator identity, exact") {
    const auto& sp = bg2();
    auto wp = defaultWickParams<ExactScalar>();
    std::mt19937 rng(23);
    for (int t = 0; t < 12; ++t) {
        EF a = randomElement(sp, rng, 3, 1);
        EF b = randomElement(sp, rng, 3, 1);
        EF c = randomElement(sp, rng, 2, 1);
        EF lhs = derivationAction(a, derivationAction(b, c, wp), wp);
        bool pa = false, pb = false;  // bg2 is purely even
        EF rhs0 = derivationAction(b, derivationAction(a, c, wp), wp);
        if (pa && pb) rhs0 = -rhs0;
        EF lhsComm = lhs - rhs0;
        EF rhs = derivationAction(derivationAction(a, b, wp), c, wp);
        REQUIRE(lhsComm == rhs);
    }
}

TEST_CASE("skew-symmetry lands in the image of L_{-1}") {
    const auto& sp = bg2();
    auto wp = defaultWickParams<ExactScalar>();
    std::mt19937 rng(5);
    for (int t = 0; t < 8; ++t) {
        EF a = randomElement(sp, rng, 2, 1, 1);
        EF b = randomElement(sp, rng, 2, 1, 1);
        EF s = derivationAction(a, b, wp) + derivationAction(b, a, wp);  // even space
        INFO("a=" << a.str() << " b=" << b.str() << " s=" << s.str());
        REQUIRE(inTranslateImage(s));
    }
}

TEST_CASE("Koszul consistency: canonical forms are order independent") {
    const auto& sp = mixed();
    EF c = gen(sp, "c1"), d = gen(sp, "d1"), b = gen(sp, "b1");
    EF p1 = (c * d) * b;
    REQUIRE(p1 == b * (c * d));
    // -(b d) c = b c d since d, c are odd and b is even
    EF p2 = (b * d).scaled(ExactScalar::constant(GaussianRational(-1))) * c;
    REQUIRE(p2 == b * c * d);
    REQUIRE(d * c == -(c * d));
}
