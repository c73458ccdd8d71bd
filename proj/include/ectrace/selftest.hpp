// Verification suites behind the acceptance criteria and the CLI selftest
// command. Every check pins its tolerance here; the runners report the
// measured worst deviation.
#ifndef ECTRACE_SELFTEST_HPP
#define ECTRACE_SELFTEST_HPP

#include <chrono>
#include <random>

#include "ectrace/oracles.hpp"
#include "ectrace/witten.hpp"

namespace ect {

struct CheckResult {
    std::string name;
    bool pass = false;
    double measured = 0.0;  // worst deviation
    double tolerance = 0.0;
    double seconds = 0.0;
};

namespace selftest {

using Clock = std::chrono::steady_clock;

inline CheckResult finish(const std::string& name, double worst, double tol,
                          Clock::time_point t0) {
    CheckResult r;
    r.name = name;
    r.measured = worst;
    r.tolerance = tol;
    r.pass = worst <= tol;
    r.seconds = std::chrono::duration<double>(Clock::now() - t0).count() + 1e-9;
    return r;
}

// 1. Tr(1) = 1 in the rescaled convention
inline CheckResult unitTrace(cx tau) {
    auto t0 = Clock::now();
    SymplecticSpace sp = SymplecticSpace::betagamma(1);
    EllipticContext ell(tau);
    ChainContext cc(sp, ell);
    TraceResult r = traceChain(unitChain(cc), cc);
    double worst = 1e300;
    if (r.bv.termCount() == 1 && r.bv.terms().begin()->first.empty()) {
        Scalar v = r.bv.terms().begin()->second;
        worst = std::abs(v.coeff(0) - cx(1.0, 0.0));
        for (int p = v.lo(); p <= v.hi(); ++p)
            if (p != 0) worst = std::max(worst, std::abs(v.coeff(p)));
    }
    return finish("unit trace", worst, 1e-12, t0);
}

// 2. dbar P = -i/Im(tau) dzbar at random points, central differences
inline CheckResult propagatorDbar(cx tau, unsigned seed) {
    auto t0 = Clock::now();
    EllipticContext ell(tau);
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> U(0.08, 0.42);
    const double h = 1e-5;
    double worst = 0;
    for (int t = 0; t < 50; ++t) {
        cx z(U(rng), U(rng)), w(-U(rng), U(rng) + 0.45);
        auto P = [&](cx zz) { return ell.propagator(zz, w); };
        cx dx = (P(z + h) - P(z - h)) / (2 * h);
        cx dy = (P(z + cx(0, h)) - P(z - cx(0, h))) / (2 * h);
        cx dzbar = 0.5 * (dx + cx(0, 1) * dy);
        worst = std::max(worst, std::abs(dzbar - cx(0.0, -1.0 / ell.imTau())));
    }
    return finish("propagator dbar equation", worst, 1e-7, t0);
}

// 3. Q(k+1,l) + Q(k,l+1) = 0 for k+l <= 8
inline CheckResult qAntisymmetry(cx tau) {
    auto t0 = Clock::now();
    EllipticContext ell(tau);
    double worst = 0;
    for (int k = 0; k <= 8; ++k)
        for (int l = 0; k + l <= 8; ++l)
            worst = std::max(worst, std::abs(ell.qCoeff(k + 1, l) + ell.qCoeff(k, l + 1)));
    return finish("Q antisymmetry", worst, 1e-12, t0);
}

// 4. Q(1,0) = -(i pi/3) Ehat2 against the independent theta route, plus
//    Ehat2(i) = 0
inline CheckResult modularCompletion() {
    auto t0 = Clock::now();
    double worst = 0;
    for (cx tau : {cx(0.0, 1.0), cx(0.3, 1.7)}) {
        EllipticContext ell(tau);
        cx viaLattice = cx(0.0, -kPi / 3.0) * ell.eisensteinHat2();
        worst = std::max(worst, std::abs(ell.qCoeff(1, 0) - viaLattice));
        auto reg = oracle::thetaRegularLogDeriv(ell, 3);
        cx thetaRoute = cx(0.0, 1.0 / kPi) * reg[1] + cx(0.0, 1.0 / ell.imTau());
        worst = std::max(worst, std::abs(ell.qCoeff(1, 0) - thetaRoute));
    }
    EllipticContext atI(cx(0.0, 1.0));
    double hat2 = std::abs(atI.eisensteinHat2());
    double tol = 1e-9;
    if (hat2 > 1e-10) worst = std::max(worst, hat2);
    return finish("modular completion of Q(1,0)", worst, tol, t0);
}

// 5. Wick engine vs mode-algebra oracle, exact scalars
inline CheckResult wickOracle(unsigned seed) {
    auto t0 = Clock::now();
    SymplecticSpace sp =
        SymplecticSpace::directSum(SymplecticSpace::betagamma(2), SymplecticSpace::bc(1));
    auto wp = defaultWickParams<ExactScalar>();
    wp.derivCap = 32;
    using EF = FockElement<ExactScalar>;
    double worst = 0;
    // all generator pairs
    for (size_t p = 0; p < sp.dim(); ++p)
        for (size_t q = 0; q < sp.dim(); ++q) {
            EF a = EF::generator(sp, sp.gen(p).name);
            EF b = EF::generator(sp, sp.gen(q).name);
            for (int n = -1; n <= 2; ++n) {
                EF d = nthProduct(a, n, b, wp) - oracle::nthOracle(a, n, b, wp);
                if (!d.isZero()) worst = std::max(worst, 1.0);
            }
        }
    // 50 random degree <= 3 pairs
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> genD(0, int(sp.dim()) - 1);
    std::uniform_int_distribution<int> lenD(1, 3);
    std::uniform_int_distribution<int> derD(0, 2);
    std::uniform_int_distribution<long long> coefD(-3, 3);
    auto randomElem = [&]() {
        EF out(&sp);
        for (int t = 0; t < 2; ++t) {
            Monomial m;
            int len = lenD(rng);
            for (int v = 0; v < len; ++v)
                m.push_back(makeVar(unsigned(genD(rng)), unsigned(derD(rng)), false));
            std::sort(m.begin(), m.end());
            bool bad = false;
            for (size_t q2 = 1; q2 < m.size(); ++q2)
                if (m[q2] == m[q2 - 1] && varOdd(sp, m[q2])) bad = true;
            if (bad) continue;
            long long c = coefD(rng);
            if (c == 0) c = 1;
            out.addTerm(m, ExactScalar::constant(GaussianRational(c)));
        }
        return out;
    };
    for (int t = 0; t < 50; ++t) {
        EF a = randomElem(), b = randomElem();
        for (int n = -1; n <= 1; ++n) {
            EF d = nthProduct(a, n, b, wp) - oracle::nthOracle(a, n, b, wp);
            if (!d.isZero()) worst = std::max(worst, 1.0);
        }
    }
    return finish("Wick oracle equivalence", worst, 0.0, t0);
}

// 6. the six collapse identities, exact symbolic scalars
inline CheckResult collapseIdentities(unsigned seed) {
    auto t0 = Clock::now();
    SymplecticSpace sp =
        SymplecticSpace::directSum(SymplecticSpace::betagamma(1), SymplecticSpace::bc(1));
    auto dp = symbolicDressParams();
    using QT = DressedTensor<QScalar>;
    std::mt19937 rng(seed);
    const int maxU = 3;
    const unsigned i = 0, j = 1, spect = 2;
    double worst = 0;

    auto truncU = [&](const QT& t, int mx) {
        QT out(t.spacePtr(), t.points());
        for (const auto& [k, c] : t.terms())
            if (k.u <= mx) out.addTerm(k, c);
        return out;
    };
    auto expT = [&](const QT& t, const std::function<QT(const QT&)>& op) {
        QT acc = truncU(t, maxU), cur = acc;
        for (int m = 1; m <= 64; ++m) {
            cur = truncU(op(cur), maxU).divIntScaled(m);
            if (cur.isZero()) return acc;
            acc = acc + cur;
        }
        throw FockError("truncated exponential failed to terminate");
    };
    std::uniform_int_distribution<int> genD(0, int(sp.dim()) - 1);
    std::uniform_int_distribution<int> lenD(0, 3);
    std::uniform_int_distribution<int> derD(0, 2);
    auto randomTensor = [&]() {
        QT out(&sp, 3);
        for (int t = 0; t < 2; ++t) {
            typename QT::Key k;
            for (unsigned pt = 0; pt < 3; ++pt) {
                int len = lenD(rng);
                for (int v = 0; v < len; ++v)
                    k.ins.push_back(makeVar(unsigned(genD(rng)), unsigned(derD(rng)), false, pt));
            }
            std::sort(k.ins.begin(), k.ins.end());
            bool bad = false;
            for (size_t q2 = 1; q2 < k.ins.size(); ++q2)
                if (k.ins[q2] == k.ins[q2 - 1] && varOdd(sp, k.ins[q2])) bad = true;
            if (bad) continue;
            out.addTerm(k, QScalar::one());
        }
        return out;
    };
    auto PSymJ = [&](const QT& x) { return applyPSymbol(x, j, spect, dp); };
    auto PTay0 = [&](const QT& x) { return applyPTaylor(x, i, spect, j, dp, 0); };
    auto PTayF = [&](const QT& x) { return applyPTaylor(x, i, spect, j, dp, maxU); };
    auto Qi = [&](const QT& x) { return applyQSelf(x, i, dp); };
    auto Qj = [&](const QT& x) { return applyQSelf(x, j, dp); };
    auto QP0 = [&](const QT& x) { return applyQPairTaylor(x, i, j, dp, 0); };
    auto QPF = [&](const QT& x) { return applyQPairTaylor(x, i, j, dp, maxU); };
    auto Shift = [&](const QT& x) { return applyShift(x, i, dp, 1); };

    for (int trial = 0; trial < 20; ++trial) {
        QT T = randomTensor();
        auto check = [&](const QT& a, const QT& b) {
            if (!(truncU(a, maxU) == truncU(b, maxU))) worst = std::max(worst, 1.0);
        };
        check(expT(multInto(T, i, j), PSymJ),
              multInto(expT(T, [&](const QT& x) { return PTay0(x) + PSymJ(x); }), i, j));
        check(expT(multInto(T, i, j), Qj),
              multInto(expT(T, [&](const QT& x) { return Qi(x) + Qj(x) + QP0(x); }), i, j));
        check(expT(expT(T, Shift), Qi), expT(expT(T, Qi), Shift));
        check(expT(expT(T, Shift), Qj), expT(expT(T, Qj), Shift));
        check(expT(expT(T, Shift), PTay0), expT(expT(T, PTayF), Shift));
        check(expT(expT(T, Shift), QP0), expT(expT(T, QPF), Shift));
    }
    return finish("collapse identities (3.3)-(3.8)", worst, 0.0, t0);
}

// 7. BV compatibility: Delta^2 = 0, Delta Mult = Mult Delta, the D-module
//    commutator, and the dbar intertwining on random tensors
inline CheckResult bvCompatibility(cx tau, unsigned seed) {
    auto t0 = Clock::now();
    SymplecticSpace sp =
        SymplecticSpace::directSum(SymplecticSpace::betagamma(1), SymplecticSpace::bc(1));
    EllipticContext ell(tau);
    auto dpN = numericDressParams(ell);
    auto dpS = symbolicDressParams();
    std::mt19937 rng(seed);
    double worst = 0;

    using EF = FockElement<ExactScalar>;
    std::uniform_int_distribution<int> genD(0, int(sp.dim()) - 1);
    std::uniform_int_distribution<int> dagD(0, 1);
    std::uniform_int_distribution<int> ptD(0, 2);
    std::uniform_int_distribution<int> lenD(0, 4);
    auto randomBV = [&]() {
        EF out(&sp);
        for (int t = 0; t < 3; ++t) {
            Monomial m;
            int len = lenD(rng);
            for (int v = 0; v < len; ++v)
                m.push_back(makeVar(unsigned(genD(rng)), 0, dagD(rng) != 0, unsigned(ptD(rng))));
            int sg = koszulSort(sp, m);
            if (sg == 0) continue;
            out.addTerm(m, ExactScalar::constant(GaussianRational(sg)));
        }
        return out;
    };
    ExactScalar unit = ExactScalar::one();
    for (int t = 0; t < 20; ++t) {
        EF x = randomBV();
        if (!bvDelta(bvDelta(x, unit), unit).isZero()) worst = std::max(worst, 1.0);
        if (!(multTensor(bvDelta(x, unit)) == bvDelta(multTensor(x), unit)))
            worst = std::max(worst, 1.0);
    }
    // D-module commutator, exact
    using QT = DressedTensor<QScalar>;
    std::uniform_int_distribution<int> derD(0, 1);
    auto randomTensor = [&]() {
        QT out(&sp, 3);
        typename QT::Key k;
        for (unsigned pt = 0; pt < 3; ++pt) {
            int len = 1 + (lenD(rng) % 2);
            for (int v = 0; v < len; ++v)
                k.ins.push_back(makeVar(unsigned(genD(rng)), unsigned(derD(rng)), false, pt));
        }
        std::sort(k.ins.begin(), k.ins.end());
        bool bad = false;
        for (size_t q2 = 1; q2 < k.ins.size(); ++q2)
            if (k.ins[q2] == k.ins[q2 - 1] && varOdd(sp, k.ins[q2])) bad = true;
        if (bad) k.ins.clear();
        out.addTerm(k, QScalar::one());
        return out;
    };
    for (int t = 0; t < 10; ++t) {
        QT T = randomTensor();
        for (unsigned pt = 0; pt < 3; ++pt) {
            QT lhs = applyShift(dress(T, dpS), pt, dpS, 0) + edgeDerivative(dress(T, dpS), pt);
            QT rhs = dress(applyShift(T, pt, dpS, 0), dpS);
            if (!(lhs == rhs)) worst = std::max(worst, 1.0);
        }
    }
    // dbar intertwining, numeric
    using NT = DressedTensor<Scalar>;
    const cx pre = cx(0.0, -1.0 / ell.imTau());
    std::uniform_int_distribution<int> coin(0, 2);
    for (int t = 0; t < 20; ++t) {
        NT T(&sp, 3);
        typename NT::Key k;
        for (unsigned pt = 0; pt < 3; ++pt) {
            int len = lenD(rng) % 3;
            for (int v = 0; v < len; ++v)
                k.ins.push_back(makeVar(unsigned(genD(rng)), unsigned(derD(rng)), false, pt));
        }
        std::sort(k.ins.begin(), k.ins.end());
        bool bad = false;
        for (size_t q2 = 1; q2 < k.ins.size(); ++q2)
            if (k.ins[q2] == k.ins[q2 - 1] && varOdd(sp, k.ins[q2])) bad = true;
        if (bad) continue;
        if (coin(rng) == 0) k.form.dz |= 1u;
        if (coin(rng) == 1) {
            PFKey tmp;
            appendEdge(tmp, 0, 2, 0);
            k.form.edges.push_back(tmp.edges[0]);
        }
        T.addTerm(k, Scalar::one());
        NT W = dress(T, dpN);
        NT lhs = dbarDressed(W, ell.imTau()) +
                 deltaDressed(W, pre, DeltaMatrix::inverse)
                     .scaled(Scalar::monomial(1, cx(1.0, 0.0)));
        NT rhs = dress(dbarDressed(T, ell.imTau()), dpN);
        NT diff = lhs - rhs;
        for (const auto& [kk, vv] : diff.terms()) worst = std::max(worst, vv.maxAbs());
    }
    return finish("BV compatibility", worst, 1e-10, t0);
}

// 8. quantum master equation on a seeded suite of random chains
inline CheckResult qmeSuite(cx tau, unsigned seed, int nChains = 100) {
    auto t0 = Clock::now();
    SymplecticSpace sp =
        SymplecticSpace::directSum(SymplecticSpace::betagamma(1), SymplecticSpace::bc(1));
    EllipticContext ell(tau);
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> genD(0, int(sp.dim()) - 1);
    std::uniform_int_distribution<int> lenD(1, 3);
    std::uniform_int_distribution<int> derD(0, 1);
    std::uniform_int_distribution<int> coin(0, 1);

    // index groups for the three-point content masks
    std::vector<unsigned> bgGens, bcGens;
    for (unsigned g = 0; g < sp.dim(); ++g)
        (sp.odd(g) ? bcGens : bgGens).push_back(g);

    double worst = 0;
    for (Convention conv : {Convention::rescaled, Convention::bd}) {
        ChainContext cc(sp, ell, conv);
        RegEvaluator ev(ell, conv);
        cc.evaluator = &ev;
        for (int t = 0; t < nChains; ++t) {
            int nPts = 1 + (t % 3);
            Chain c(&sp, nPts);
            Chain::Key k;
            bool bad = false;
            for (int pt = 0; pt < nPts; ++pt) {
                int len;
                if (nPts == 3 && pt == 2) len = coin(rng);  // degree <= 1 tail point
                else len = lenD(rng);
                for (int v = 0; v < len; ++v) {
                    unsigned g = unsigned(genD(rng));
                    unsigned d = (nPts >= 3) ? 0u : unsigned(derD(rng));
                    k.ins.push_back(makeVar(g, d, false, unsigned(pt)));
                }
            }
            std::sort(k.ins.begin(), k.ins.end());
            for (size_t q2 = 1; q2 < k.ins.size(); ++q2)
                if (k.ins[q2] == k.ins[q2 - 1] && varOdd(sp, k.ins[q2])) bad = true;
            if (bad) { k.ins.clear(); }
            k.form.dz = (1u << nPts) - 1u;
            // one dzbar short of top degree so that dbar acts nontrivially
            for (int pt = 0; pt < nPts; ++pt)
                if (pt != t % nPts) k.form.dzbar |= (1u << pt);
            c.addTerm(k, Scalar::one());

            FockElement<Scalar> res = qmeResidual(c, cc);
            double w = res.maxAbs();
            worst = std::max(worst, w);
        }
    }
    return finish("quantum master equation suite", worst, 1e-8, t0);
}

// 9. regularized Stokes on the corpus, bd convention
inline CheckResult stokesSuite(cx tau) {
    auto t0 = Clock::now();
    EllipticContext ell(tau);
    Convention conv = Convention::bd;
    struct Item {
        int n;
        std::vector<PEdge> edges;
        unsigned dz, dzbar;
    };
    std::vector<Item> corpus = {
        {2, {{0, 1, 0}}, 0b11, 0b10},
        {2, {{0, 1, 0}}, 0b11, 0b01},
        {2, {{0, 1, 0}, {0, 1, 0}}, 0b11, 0b10},
        {2, {{0, 1, 1}, {0, 1, 0}}, 0b11, 0b01},
        {2, {{0, 1, 2}, {0, 1, 0}}, 0b11, 0b10},
        {2, {{0, 1, 1}, {0, 1, 1}, {0, 1, 0}}, 0b11, 0b10},
        {2, {{0, 1, 2}, {0, 1, 2}}, 0b11, 0b01},
        {3, {{0, 1, 0}, {1, 2, 0}}, 0b111, 0b110},
        {3, {{0, 1, 0}, {1, 2, 0}}, 0b111, 0b011},
        {3, {{0, 1, 0}, {1, 2, 0}, {0, 2, 0}}, 0b111, 0b110},
        {3, {{0, 1, 0}, {0, 1, 0}, {1, 2, 0}}, 0b111, 0b011},
        {3, {{0, 1, 2}, {1, 2, 0}}, 0b111, 0b101},
        {3, {{0, 1, 1}, {0, 1, 1}, {1, 2, 0}}, 0b111, 0b011},
    };
    double worst = 0;
    for (const Item& it : corpus) {
        PropForm<Scalar> eta(it.n);
        PFKey k;
        k.edges = it.edges;
        std::sort(k.edges.begin(), k.edges.end());
        k.dz = it.dz;
        k.dzbar = it.dzbar;
        eta.addTerm(k, Scalar::one());
        cx lhs = regIntegrate(dbarForm(eta, ell), ell, conv).value.coeff(0);
        cx rhs(0.0);
        for (unsigned i = 0; i < unsigned(it.n); ++i)
            for (unsigned j = i + 1; j < unsigned(it.n); ++j) {
                cx a = regIntegrate(residueForm(eta, i, j, ell), ell, conv).value.coeff(0);
                cx b = regIntegrate(residueForm(eta, j, i, ell), ell, conv).value.coeff(0);
                worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(a)));
                rhs += a;
            }
        rhs *= cx(0.0, -2.0 * kPi);
        worst = std::max(worst, std::abs(lhs - rhs) / std::max(1.0, std::abs(lhs)));
    }
    return finish("regularized Stokes", worst, 1e-8, t0);
}

// 10. vanishing first moments through both backends
inline CheckResult firstMoments(cx tau) {
    auto t0 = Clock::now();
    EllipticContext ell(tau);
    RegEvaluator ev(ell, Convention::rescaled);
    double worst = std::abs(ev.samePair({0u}));
    worst = std::max(worst, std::abs(ev.samePair({1u})));
    worst = std::max(worst, std::abs(ev.pvQuadrature({0u})));
    worst = std::max(worst, std::abs(ev.pvQuadrature({1u})));
    return finish("vanishing first moments", worst, 1e-8, t0);
}

// 11. nondegeneracy witness for dim L in {2, 4}
inline CheckResult witness(cx tau) {
    auto t0 = Clock::now();
    double worst = 0;
    using NF = FockElement<Scalar>;
    {
        // dim L = 2: one even pair
        SymplecticSpace sp = SymplecticSpace::betagamma(1);
        EllipticContext ell(tau);
        ChainContext cc(sp, ell);
        Chain top = boxTensor(insertionChain(cc, NF::generator(sp, "b1"), false),
                              insertionChain(cc, NF::generator(sp, "g1"), false));
        Scalar s = traceBV(top, cc, Polarization::standard(sp));
        double expect = std::pow(-ell.imTau() / kPi, 2);
        worst = std::max(worst, std::abs(s.coeff(0) - cx(expect, 0.0)) / std::abs(expect));
    }
    {
        // dim L = 4: an even and an odd pair
        SymplecticSpace sp =
            SymplecticSpace::directSum(SymplecticSpace::betagamma(1), SymplecticSpace::bc(1));
        EllipticContext ell(tau);
        ChainContext cc(sp, ell);
        Chain Psi = boxTensor(insertionChain(cc, NF::generator(sp, "c1"), true),
                              insertionChain(cc, NF::generator(sp, "d1"), true));
        Chain Phi = boxTensor(insertionChain(cc, NF::generator(sp, "b1"), false),
                              insertionChain(cc, NF::generator(sp, "g1"), false));
        Scalar s = traceBV(boxTensor(Psi, Phi), cc, Polarization::standard(sp));
        double expect = std::pow(-ell.imTau() / kPi, 4);
        worst = std::max(worst, std::abs(s.coeff(0) - cx(expect, 0.0)) / std::abs(expect));
    }
    return finish("nondegeneracy witness", worst, 1e-10, t0);
}

// 12. Witten one-loop: the arity-2 wheel against (1/32 pi^4) Ehat2 tr(At^2)
//     at tau = 2i, and E4-scaling of the arity-4 wheel
inline CheckResult wittenOneLoop() {
    auto t0 = Clock::now();
    double worst = 0;
    {
        SymplecticSpace sp = SymplecticSpace::betagamma(2);
        EllipticContext ell(cx(0.0, 2.0));
        ChainContext cc(sp, ell);
        FormalVectorField xi1 = FormalVectorField::monomial(2, {0, 2}, 0);
        FormalVectorField xi2 = FormalVectorField::monomial(2, {2, 0}, 1);
        FormVal engine = wheelWeight(2, {xi1, xi2}, cc);
        FormVal target =
            trAtPower({xi1, xi2}).scaled(ell.eisensteinHat2() / (32.0 * std::pow(kPi, 4)));
        FormVal diff = engine - target;
        worst = std::max(worst, diff.maxAbs() / std::max(1e-30, target.maxAbs()));
    }
    {
        SymplecticSpace sp = SymplecticSpace::betagamma(4);
        std::vector<FormalVectorField> xis;
        for (int t = 0; t < 4; ++t) {
            std::vector<int> e(4, 0);
            e[size_t((t + 1) % 4)] = 2;
            xis.push_back(FormalVectorField::monomial(4, e, t));
        }
        EllipticContext e1(cx(0.0, 2.0)), e2(cx(0.3, 1.7));
        ChainContext c1(sp, e1), c2(sp, e2);
        FormVal w1 = wheelWeight(4, xis, c1), w2 = wheelWeight(4, xis, c2);
        cx ratio = w1.terms.begin()->second / w2.terms.begin()->second;
        cx e4ratio = e1.eisenstein(4) / e2.eisenstein(4);
        double m4 = std::abs(ratio - e4ratio) / std::abs(e4ratio);
        // the arity-4 scaling check carries its own 1e-5 tolerance; fold the
        // two sub-checks into one measured/tolerance ratio
        worst = std::max(worst, m4 * (1e-6 / 1e-5));
    }
    return finish("Witten one-loop", worst, 1e-6, t0);
}

// 13. coset chain-map property on a verified commutant pair
inline CheckResult cosetChainMap(cx tau, unsigned seed) {
    auto t0 = Clock::now();
    using NF = FockElement<Scalar>;
    SymplecticSpace sp =
        SymplecticSpace::directSum(SymplecticSpace::betagamma(1), SymplecticSpace::bc(1));
    EllipticContext ell(tau);
    ChainContext cc(sp, ell);
    auto wp = defaultWickParams<Scalar>();
    double worst = 0;

    // the commutant pair: A generated by c1; Com(A) contains the betagamma part
    std::vector<NF> aGens{NF::generator(sp, "c1")};
    std::vector<NF> comGens{NF::generator(sp, "b1"), NF::generator(sp, "g1")};
    if (checkCommutantPair(aGens, comGens, wp)) worst = std::max(worst, 1.0);
    // and the violation is detected: beta_(0) gamma != 0
    if (!checkCommutantPair({NF::generator(sp, "b1")}, {NF::generator(sp, "g1")}, wp))
        worst = std::max(worst, 1.0);

    // alpha: a closed one-point chain with an A-insertion
    Chain alpha = insertionChain(cc, NF::generator(sp, "c1"), true);
    Polarization pol = Polarization::standard(sp);
    std::mt19937 rng(seed);
    std::uniform_int_distribution<int> coin(0, 1);
    for (int t = 0; t < 6; ++t) {
        // two-point eta over the commutant
        NF x = coin(rng) ? NF::generator(sp, "b1") : NF::generator(sp, "g1");
        NF y = coin(rng) ? NF::generator(sp, "g1") : NF::generator(sp, "b1");
        Chain eta = boxTensor(insertionChain(cc, x, coin(rng) != 0),
                              insertionChain(cc, y, false));
        MixedChain dEta = dTot(eta, cc);
        for (const auto& [nPts, piece] : dEta.byPoints) {
            Scalar v = traceCoset(alpha, dropJets(piece), cc, pol);
            worst = std::max(worst, v.maxAbs());
        }
    }
    return finish("coset chain map", worst, 1e-8, t0);
}

inline std::vector<CheckResult> runAll(cx tau, unsigned seed) {
    return {unitTrace(tau),
            propagatorDbar(tau, seed),
            qAntisymmetry(tau),
            modularCompletion(),
            wickOracle(seed),
            collapseIdentities(seed),
            bvCompatibility(tau, seed),
            qmeSuite(tau, seed),
            stokesSuite(tau),
            firstMoments(tau),
            witness(tau),
            wittenOneLoop(),
            cosetChainMap(tau, seed)};
}

}  // namespace selftest
}  // namespace ect

#endif
