#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "ectrace/chains.hpp"

using namespace ect;

namespace {

using NF = FockElement<Scalar>;

const SymplecticSpace& mixedSp() {
    static SymplecticSpace sp =
        SymplecticSpace::directSum(SymplecticSpace::betagamma(1), SymplecticSpace::bc(1));
    return sp;
}

double chainMaxAbs(const Chain& c) {
    double w = 0;
    for (const auto& [k, v] : c.terms()) w = std::max(w, v.maxAbs());
    return w;
}
double mixedMaxAbs(const MixedChain& m) {
    double w = 0;
    for (const auto& [n, c] : m.byPoints) w = std::max(w, chainMaxAbs(c));
    return w;
}

}  // namespace

TEST_CASE("unit chain traces to one") {
    const auto& sp = SymplecticSpace::betagamma(1);
    EllipticContext ell(cx(0.3, 1.7));
    ChainContext cc(sp, ell);
    TraceResult r = traceChain(unitChain(cc), cc);
    REQUIRE(r.bv.termCount() == 1);
    Scalar v = r.bv.terms().begin()->second;
    REQUIRE(r.bv.terms().begin()->first.empty());
    REQUIRE(std::abs(v.coeff(0) - cx(1.0, 0.0)) < 1e-12);
    REQUIRE(!r.numeric);
}

TEST_CASE("the two-point pairing chain differentiates to the paper value") {
    // d_tot( b dz[1] ⊠ g dw[1] ) = (i hbar / pi) dw[1]  (rescaled)
    const auto& sp = SymplecticSpace::betagamma(1);
    EllipticContext ell(cx(0.3, 1.7));
    ChainContext cc(sp, ell);
    Chain c = boxTensor(insertionChain(cc, NF::generator(sp, "b1"), false),
                        insertionChain(cc, NF::generator(sp, "g1"), false));
    MixedChain d = dTot(c, cc);
    REQUIRE(d.byPoints.count(1) == 1);
    const Chain& r = d.byPoints.at(1);
    REQUIRE(r.terms().size() == 1);
    const auto& [k, v] = *r.terms().begin();
    REQUIRE(k.ins.empty());
    REQUIRE(k.form.dz == 1u);
    REQUIRE(k.form.dzbar == 0u);
    REQUIRE(!k.hasJets());
    INFO("coefficient " << v.str());
    REQUIRE(std::abs(v.coeff(1) - cx(0.0, 1.0 / kPi)) < 1e-13);

    // swapping the factors transposes two odd-shifted slots: for even
    // insertions the chains differ by a sign, and so do their differentials
    Chain c2 = boxTensor(insertionChain(cc, NF::generator(sp, "g1"), false),
                         insertionChain(cc, NF::generator(sp, "b1"), false));
    MixedChain d2 = dTot(c2, cc);
    const auto& [k2, v2] = *d2.byPoints.at(1).terms().begin();
    REQUIRE(std::abs(v2.coeff(1) + v.coeff(1)) < 1e-13);
}

TEST_CASE("collapse with both dzbar flags dies") {
    const auto& sp = SymplecticSpace::betagamma(1);
    EllipticContext ell(cx(0.3, 1.7));
    ChainContext cc(sp, ell);
    Chain c = boxTensor(insertionChain(cc, NF::generator(sp, "b1"), true),
                        insertionChain(cc, NF::generator(sp, "g1"), true));
    Chain d = dChain(c, cc);
    REQUIRE(d.isZero());
}

TEST_CASE("a double-pole coefficient produces a jet tail") {
    const auto& sp = SymplecticSpace::betagamma(1);
    EllipticContext ell(cx(0.3, 1.7));
    ChainContext cc(sp, ell);
    Chain c = boxTensor(insertionChain(cc, NF::generator(sp, "b1"), false),
                        insertionChain(cc, NF::generator(sp, "g1"), false));
    // multiply the coefficient by P_{01}
    Chain withP(&sp, 2);
    for (const auto& [k, v] : c.terms()) {
        Chain::Key nk = k;
        PFKey tmp;
        appendEdge(tmp, 0, 1, 0);
        nk.form.edges.push_back(tmp.edges[0]);
        withP.addTerm(nk, v);
    }
    Chain d = dChain(withP, cc);
    bool sawJet = false;
    for (const auto& [k, v] : d.terms())
        if (k.hasJets() && v.maxAbs() > 1e-14) sawJet = true;
    REQUIRE(sawJet);
}

TEST_CASE("dbar squares to zero and dtot squares to zero") {
    const auto& sp = mixedSp();
    EllipticContext ell(cx(0.2, 1.4));
    ChainContext cc(sp, ell);
    std::mt19937 rng(83);
    std::uniform_int_distribution<int> genD(0, int(sp.dim()) - 1);
    std::uniform_int_distribution<int> derD(0, 1);
    for (int trial = 0; trial < 6; ++trial) {
        // random 3-point chain, each point dz[1], some dzbar, plus an edge
        Chain c(&sp, 3);
        Chain::Key k;
        for (unsigned pt = 0; pt < 3; ++pt) {
            int len = trial % 2 ? 1 : 2;
            for (int t = 0; t < len; ++t)
                k.ins.push_back(makeVar(unsigned(genD(rng)), unsigned(derD(rng)), false, pt));
        }
        std::sort(k.ins.begin(), k.ins.end());
        bool bad = false;
        for (size_t q = 1; q < k.ins.size(); ++q)
            if (k.ins[q] == k.ins[q - 1] && varOdd(sp, k.ins[q])) bad = true;
        if (bad) continue;
        k.form.dz = 0b111;
        k.form.dzbar = (trial % 3 == 0) ? 0b001 : 0b000;
        if (trial % 3 == 1) {
            PFKey tmp;
            appendEdge(tmp, 0, 1, 0);
            k.form.edges.push_back(tmp.edges[0]);
        }
        c.addTerm(k, Scalar::one());

        Chain db2 = dbarChain(dbarChain(c, cc), cc);
        REQUIRE(chainMaxAbs(db2) < 1e-12);

        // d_tot^2 vanishes in the trace-relevant quotient (jet tails pair
        // against the constant test form only)
        MixedChain d2 = dTotMixed(dTot(c, cc), cc);
        double worst = 0;
        for (const auto& [n, ch] : d2.byPoints) worst = std::max(worst, chainMaxAbs(dropJets(ch)));
        INFO("trial " << trial << " worst " << worst);
        REQUIRE(worst < 1e-10);
    }
}

TEST_CASE("trace of the self-contraction chain gives the completed series") {
    const auto& sp = SymplecticSpace::betagamma(1);
    EllipticContext ell(cx(0.3, 1.7));
    ChainContext cc(sp, ell);
    NF ins = NF::generator(sp, "b1", 1) * NF::generator(sp, "g1");
    Chain c(&sp, 1);
    for (const auto& [m, coeff] : ins.terms()) {
        Chain::Key k;
        k.ins = m;
        k.form.dz = 1u;
        k.form.dzbar = 1u;
        c.addTerm(k, coeff.scaled(cx(-kPi / ell.imTau(), 0.0)));
    }
    TraceResult r = traceChain(c, cc);
    // p_BV kills the db*g part; the Q(1,0) self-contraction survives
    REQUIRE(r.bv.termCount() == 1);
    Scalar v = r.bv.terms().begin()->second;
    cx expect = cx(0.0, -kPi / 3.0) * ell.eisensteinHat2();
    REQUIRE(std::abs(v.coeff(1) - expect) < 1e-10);
}

TEST_CASE("bidegree-deficient chains trace to zero") {
    const auto& sp = SymplecticSpace::betagamma(1);
    EllipticContext ell(cx(0.0, 1.0));
    ChainContext cc(sp, ell);
    // a point with no holomorphic slot can never reach top bidegree
    Chain c(&sp, 1);
    Chain::Key k;
    k.ins = Monomial{makeVar(unsigned(sp.indexOf("b1")), 0, false, 0)};
    k.form.dzbar = 1u;  // dzbar only, no dz
    c.addTerm(k, Scalar::one());
    REQUIRE(traceChain(c, cc).bv.isZero());
}

TEST_CASE("QME residual vanishes on anchor chains") {
    const auto& sp = SymplecticSpace::betagamma(1);
    EllipticContext ell(cx(0.3, 1.7));
    for (Convention conv : {Convention::rescaled, Convention::bd}) {
        ChainContext cc(sp, ell, conv);
        REQUIRE(qmeResidual(unitChain(cc), cc).maxAbs() < 1e-12);

        Chain c = boxTensor(insertionChain(cc, NF::generator(sp, "b1"), true),
                            insertionChain(cc, NF::generator(sp, "g1"), false));
        INFO("convention " << (conv == Convention::rescaled ? "rescaled" : "bd"));
        REQUIRE(qmeResidual(c, cc).maxAbs() < 1e-8);
    }
}

TEST_CASE("QME residual vanishes on random two-point chains") {
    const auto& sp = mixedSp();
    EllipticContext ell(cx(0.2, 1.4));
    ChainContext cc(sp, ell);
    RegEvaluator ev(ell, cc.conv);
    cc.evaluator = &ev;
    std::mt19937 rng(89);
    std::uniform_int_distribution<int> genD(0, int(sp.dim()) - 1);
    std::uniform_int_distribution<int> lenD(1, 3);
    int done = 0;
    while (done < 8) {
        Chain c(&sp, 2);
        Chain::Key k;
        for (unsigned pt = 0; pt < 2; ++pt) {
            int len = lenD(rng);
            for (int t = 0; t < len; ++t)
                k.ins.push_back(makeVar(unsigned(genD(rng)), 0, false, pt));
        }
        std::sort(k.ins.begin(), k.ins.end());
        bool bad = false;
        for (size_t q = 1; q < k.ins.size(); ++q)
            if (k.ins[q] == k.ins[q - 1] && varOdd(sp, k.ins[q])) bad = true;
        if (bad) continue;
        k.form.dz = 0b11;
        k.form.dzbar = (done % 2) ? 0b01 : 0b10;
        c.addTerm(k, Scalar::one());
        FockElement<Scalar> res = qmeResidual(c, cc);
        INFO("chain " << done << " residual " << res.maxAbs());
        REQUIRE(res.maxAbs() < 1e-8);
        ++done;
    }
}

TEST_CASE("nondegeneracy witness: the top chain traces to the top fermion") {
    const auto& sp = mixedSp();  // betagamma(1) + bc(1): dim L = 4
    EllipticContext ell(cx(0.3, 1.7));
    ChainContext cc(sp, ell);
    NF phi = NF::generator(sp, "b1"), phiV = NF::generator(sp, "g1");
    NF psi = NF::generator(sp, "c1"), psiV = NF::generator(sp, "d1");
    Chain Psi = boxTensor(insertionChain(cc, psi, true), insertionChain(cc, psiV, true));
    Chain Phi = boxTensor(insertionChain(cc, phi, false), insertionChain(cc, phiV, false));
    Chain top = boxTensor(Psi, Phi);
    TraceResult r = traceChain(top, cc);

    double scale = -ell.imTau() / kPi;
    double expect = scale * scale * scale * scale;
    Monomial topMono{makeVar(sp.indexOf("b1"), 0, true), makeVar(sp.indexOf("g1"), 0, true),
                     makeVar(sp.indexOf("c1"), 0, false), makeVar(sp.indexOf("d1"), 0, false)};
    std::sort(topMono.begin(), topMono.end());
    auto it = r.bv.terms().find(topMono);
    REQUIRE(it != r.bv.terms().end());
    INFO("coefficient " << it->second.str());
    REQUIRE(std::abs(it->second.coeff(0) - cx(expect, 0.0)) < 1e-10 * std::abs(expect));

    // hodeg bookkeeping: 4 shifts - 2 dzbar - 0 insertion degree = +2
    REQUIRE(hodegOf(r.bv) == 2);

    // and through the top-fermion integration
    Scalar s = traceBV(top, cc, Polarization::standard(sp));
    REQUIRE(std::abs(s.coeff(0) - cx(expect, 0.0)) < 1e-10 * std::abs(expect));
}

TEST_CASE("coset trace: unit alpha reduces to the BV trace") {
    const auto& sp = mixedSp();
    EllipticContext ell(cx(0.3, 1.7));
    ChainContext cc(sp, ell);
    NF psi = NF::generator(sp, "c1"), psiV = NF::generator(sp, "d1");
    NF phi = NF::generator(sp, "b1"), phiV = NF::generator(sp, "g1");
    Chain eta = boxTensor(boxTensor(insertionChain(cc, psi, true), insertionChain(cc, psiV, true)),
                          boxTensor(insertionChain(cc, phi, false), insertionChain(cc, phiV, false)));
    Polarization pol = Polarization::standard(sp);
    Scalar direct = traceBV(boxTensor(unitChain(cc), eta), cc, pol);
    Scalar viaCoset = traceCoset(unitChain(cc), eta, cc, pol);
    REQUIRE(std::abs(direct.coeff(0) - viaCoset.coeff(0)) < 1e-12 * std::max(1.0, std::abs(direct.coeff(0))));
}

TEST_CASE("commutant violations are reported") {
    const auto& sp = SymplecticSpace::betagamma(1);
    auto wp = defaultWickParams<Scalar>();
    std::vector<FockElement<Scalar>> A{FockElement<Scalar>::generator(sp, "b1")};
    std::vector<FockElement<Scalar>> V{FockElement<Scalar>::generator(sp, "g1")};
    auto bad = checkCommutantPair(A, V, wp);
    REQUIRE(bad.has_value());
    REQUIRE(bad->n == 0);

    // gamma commutes with itself
    std::vector<FockElement<Scalar>> G{FockElement<Scalar>::generator(sp, "g1")};
    REQUIRE(!checkCommutantPair(G, G, wp).has_value());
}
