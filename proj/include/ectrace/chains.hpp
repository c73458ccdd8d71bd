// Desk-scale chiral chains on X^n: the differentials dbar and d_ch, the
// total differential, the trace Tr = tr ∘ W, the QME residual, and the
// coset trace. A chain is a sum of dressed-tensor terms (insertion words,
// propagator-form coefficients, jet tails) with hbar-series scalars.
#ifndef ECTRACE_CHAINS_HPP
#define ECTRACE_CHAINS_HPP

#include "ectrace/feynman.hpp"

namespace ect {

using Chain = DressedTensor<Scalar>;

// projection killing jet tails: the trace pairs them against the constant
// test form only, so chain identities are asserted in this quotient
inline Chain dropJets(const Chain& c) {
    Chain out(c.spacePtr(), c.points());
    for (const auto& [k, v] : c.terms())
        if (!k.hasJets()) out.addTerm(k, v);
    return out;
}

struct ChainContext {
    const SymplecticSpace* space;
    const EllipticContext* ell;
    Convention conv = Convention::rescaled;
    DressParams<Scalar> dressParams;
    RegEvaluator* evaluator = nullptr;  // optional shared cache

    ChainContext(const SymplecticSpace& sp, const EllipticContext& ec,
                 Convention cv = Convention::rescaled)
        : space(&sp), ell(&ec), conv(cv), dressParams(numericDressParams(ec)) {}
};

// ---------------------------------------------------------------------------
// building blocks

// the normalized constant chain: -(pi/Im tau) |0> dz[1] dzbar at one point
inline Chain unitChain(const ChainContext& cc) {
    Chain c(cc.space, 1);
    Chain::Key k;
    k.form.dz = 1u;
    k.form.dzbar = 1u;
    c.addTerm(k, Scalar::constant(cx(-kPi / cc.ell->imTau(), 0.0)));
    return c;
}

// insertion v at a fresh point with dz[1] (and optionally dzbar)
inline Chain insertionChain(const ChainContext& cc, const FockElement<Scalar>& v, bool dzbar) {
    Chain c(cc.space, 1);
    for (const auto& [m, coeff] : v.terms()) {
        Chain::Key k;
        k.ins = m;
        k.form.dz = 1u;
        if (dzbar) k.form.dzbar = 1u;
        c.addTerm(k, coeff);
    }
    return c;
}

// external product: relabel b's points after a's
inline Chain boxTensor(const Chain& a, const Chain& b) {
    if (a.spacePtr() != b.spacePtr()) throw FockError("boxTensor: different spaces");
    int na = a.points(), nb = b.points();
    Chain out(a.spacePtr(), na + nb);
    for (const auto& [ka, ca] : a.terms())
        for (const auto& [kb, cb] : b.terms()) {
            Chain::Key k;
            k.u = ka.u + kb.u;
            k.ins = ka.ins;
            for (Var v : kb.ins) k.ins.push_back(varAtPoint(v, varPoint(v) + unsigned(na)));
            k.form.dz = ka.form.dz | (kb.form.dz << na);
            k.form.dzbar = ka.form.dzbar | (kb.form.dzbar << na);
            k.form.edges = ka.form.edges;
            for (const PEdge& e : kb.form.edges)
                k.form.edges.push_back({e.i + unsigned(na), e.j + unsigned(na), e.a});
            std::sort(k.form.edges.begin(), k.form.edges.end());
            for (unsigned p = 0; p < unsigned(na); ++p) k.setJet(p, ka.jetAt(p));
            for (unsigned p = 0; p < unsigned(nb); ++p) k.setJet(p + unsigned(na), kb.jetAt(p));
            out.addTerm(k, ca * cb);
        }
    return out;
}

// ---------------------------------------------------------------------------
// differentials

inline Chain dbarChain(const Chain& c, const ChainContext& cc) {
    return dbarDressed(c, cc.ell->imTau());
}

namespace detail_chains {

// Laurent data in u with extra spectator edges, as in the residue operation
struct FSeries {
    // u power -> (sorted extra edges -> coefficient)
    std::map<int, std::map<std::vector<PEdge>, cx>> data;
};

inline FSeries buildFSeries(const std::vector<unsigned>& pairOrders,
                            const std::vector<int>& pairSigns,
                            const std::vector<std::tuple<unsigned, unsigned, int>>& spect,
                            unsigned jPt, const EllipticContext& ell, int maxOrd,
                            const std::function<unsigned(unsigned)>& relabel) {
    FSeries f;
    f.data[0][{}] = cx(1.0, 0.0);
    for (size_t e = 0; e < pairOrders.size(); ++e) {
        LaurentJet jet = ell.laurentJet(int(pairOrders[e]), maxOrd + 2);
        std::map<int, std::map<std::vector<PEdge>, cx>> next;
        for (const auto& [pw, mp] : f.data)
            for (const auto& [ex, c] : mp)
                for (int p = -jet.poleOrder; pw + p <= maxOrd + 1; ++p) {
                    cx jc = jet.coeff(p);
                    if (jc == cx(0.0)) continue;
                    next[pw + p][ex] += c * jc * double(pairSigns[e]);
                }
        f.data = std::move(next);
    }
    for (const auto& [target, order, sg] : spect) {
        std::map<int, std::map<std::vector<PEdge>, cx>> next;
        for (const auto& [pw, mp] : f.data)
            for (const auto& [ex, c] : mp) {
                double rf = 1.0;
                for (int r = 0; pw + r <= maxOrd + 1; ++r) {
                    if (r > 0) rf *= r;
                    std::vector<PEdge> ex2 = ex;
                    PFKey tmp;
                    int s2 = appendEdge(tmp, relabel(jPt), relabel(target), order + unsigned(r));
                    ex2.push_back(tmp.edges[0]);
                    std::sort(ex2.begin(), ex2.end());
                    next[pw + r][ex2] += c * (double(sg * s2) / rf);
                }
            }
        f.data = std::move(next);
    }
    return f;
}

}  // namespace detail_chains

// chiral differential: sum over point pairs of the Wick collapse, always
// merging the higher point label into the lower one
inline Chain dChain(const Chain& c, const ChainContext& cc) {
    const SymplecticSpace& sp = *cc.space;
    int n = c.points();
    Chain out(cc.space, n - 1);
    if (n < 2) return Chain(cc.space, std::max(n - 1, 0));

    for (unsigned j = 0; j < unsigned(n); ++j) {
        for (unsigned i = j + 1; i < unsigned(n); ++i) {
            // collapse i -> j
            auto relabel = [i](unsigned t) { return t > i ? t - 1 : t; };
            for (const auto& [key, coeff] : c.terms()) {
                if (!(key.form.dz & (1u << i)) || !(key.form.dz & (1u << j))) continue;
                if (key.u != 0) throw FockError("dChain: input carries Laurent powers");

                // --- split edges
                std::vector<unsigned> pairOrders;
                std::vector<int> pairSigns;
                std::vector<std::tuple<unsigned, unsigned, int>> spect;
                std::vector<PEdge> rest;
                for (const PEdge& e : key.form.edges) {
                    bool ti = (e.i == i || e.j == i);
                    if (!ti) {
                        rest.push_back(e);
                        continue;
                    }
                    unsigned other = (e.i == i) ? e.j : e.i;
                    int sg = (e.i == i) ? 1 : ((e.a % 2 == 0) ? -1 : 1);
                    if (other == j) {
                        pairOrders.push_back(e.a);
                        pairSigns.push_back(sg);
                    } else {
                        spect.push_back({other, e.a, sg});
                    }
                }

                // --- word signs
                // move the i-block [v_i][dz_i][dzbar_i] down to sit right
                // after the j-block: cross the blocks strictly between
                int blockPar = 0;
                for (Var v : key.ins)
                    if (varPoint(v) == i && varOdd(sp, v)) ++blockPar;
                blockPar += 1;  // dz_i
                bool hasBarI = (key.form.dzbar & (1u << i)) != 0;
                if (hasBarI) ++blockPar;
                int between = 0;
                for (Var v : key.ins) {
                    unsigned pt = varPoint(v);
                    if (pt > j && pt < i && varOdd(sp, v)) ++between;
                }
                for (unsigned s = j + 1; s < i; ++s) {
                    if (key.form.dz & (1u << s)) ++between;
                    if (key.form.dzbar & (1u << s)) ++between;
                }
                int sign = ((blockPar & 1) && (between & 1)) ? -1 : 1;
                // front the local word with dz_i: it crosses v_j, dz_j,
                // dzbar_j and v_i
                int cross = 1;  // dz_j always present
                if (key.form.dzbar & (1u << j)) ++cross;
                for (Var v : key.ins)
                    if ((varPoint(v) == i || varPoint(v) == j) && varOdd(sp, v)) ++cross;
                if (cross & 1) sign = -sign;
                // the collapse is an odd operator: it crosses every block
                // strictly below the target point
                int below = 0;
                for (Var v : key.ins)
                    if (varPoint(v) < j && varOdd(sp, v)) ++below;
                for (unsigned s = 0; s < j; ++s) {
                    if (key.form.dz & (1u << s)) ++below;
                    if (key.form.dzbar & (1u << s)) ++below;
                }
                if (below & 1) sign = -sign;
                // dzbar_i, when present, becomes dzbar_j; it crosses v_i on
                // its way left
                if (hasBarI) {
                    if (key.form.dzbar & (1u << j)) continue;  // dzbar_j twice
                    int vi = 0;
                    for (Var v : key.ins)
                        if (varPoint(v) == i && varOdd(sp, v)) ++vi;
                    if (vi & 1) sign = -sign;
                }

                // --- local tensor: strip i's flags and i-edges
                Chain local(cc.space, n);
                Chain::Key lk = key;
                lk.form.edges = rest;
                lk.form.dz &= ~(1u << i);
                lk.form.dzbar &= ~(1u << i);
                if (hasBarI) lk.form.dzbar |= (1u << j);
                unsigned jetI = key.jetAt(i);
                unsigned jetJ = key.jetAt(j);
                lk.setJet(i, 0);
                lk.setJet(j, 0);
                local.addTerm(lk, coeff.scaled(cx(double(sign), 0.0)));

                // --- f-series from the coefficient data
                int maxOrd = 0;
                for (unsigned a : pairOrders) maxOrd += int(a) + 1;
                // contractions can deepen the pole: allow for the insertion
                // budget as well
                int insBudget = 0;
                for (Var v : key.ins)
                    if (varPoint(v) == i || varPoint(v) == j)
                        insBudget += int(varDeriv(v)) + 1;
                maxOrd += insBudget + 1;
                maxOrd += int(jetI + jetJ);
                auto fser = detail_chains::buildFSeries(pairOrders, pairSigns, spect, j,
                                                        *cc.ell, maxOrd, relabel);

                // --- insertion algebra
                Chain t1 = expApply<Scalar>(local, [&](const Chain& x) {
                    return applyPSing<Scalar>(x, i, j, cc.dressParams);
                });
                // budget for shifts and jet tails
                int minPow = 0;
                for (const auto& [k2, c2] : t1.terms()) minPow = std::min(minPow, k2.u);
                int minF = 0;
                bool fFirst = true;
                for (const auto& [pw, mp] : fser.data) {
                    if (mp.empty()) continue;
                    if (fFirst) { minF = pw; fFirst = false; }
                    minF = std::min(minF, pw);
                }
                if (fFirst) continue;
                int budget = -1 - minPow - minF;
                if (budget < 0) budget = 0;
                // e^{u L_{-1}} at i
                {
                    Chain acc = t1, cur = t1;
                    for (int s = 1; s <= budget; ++s) {
                        cur = applyShift<Scalar>(cur, i, cc.dressParams, 1).divIntScaled(s);
                        if (cur.isZero()) break;
                        acc = acc + cur;
                    }
                    t1 = acc;
                }
                // e^{u ⊗ d}: jet tail at the merged point
                {
                    Chain acc(cc.space, n);
                    for (const auto& [k2, c2] : t1.terms()) {
                        acc.addTerm(k2, c2);
                        double inv = 1.0;
                        for (int l = 1; l <= budget; ++l) {
                            inv /= l;
                            Chain::Key nk = k2;
                            nk.u += l;
                            nk.setJet(j, nk.jetAt(j) + unsigned(l));
                            acc.addTerm(nk, c2.scaled(cx(inv, 0.0)));
                        }
                    }
                    t1 = acc;
                }
                Chain t2 = multInto<Scalar>(t1, i, j);

                // --- pair with the f-series; the input jet symbols at i
                // and j commute past the total u-dependence binomially,
                //   d^m ∘ f = sum_t C(m,t) (±1)^t f^{(t)} d^{m-t},
                // with +d/du for the collapsing point and -d/du for the
                // target; leftovers transfer to the output jet
                std::vector<std::pair<std::pair<int, double>, unsigned>> jetOps;
                for (unsigned tI = 0; tI <= jetI; ++tI)
                    for (unsigned tJ = 0; tJ <= jetJ; ++tJ) {
                        double bin = double(detail::factorial(int(jetI)) /
                                            (detail::factorial(int(tI)) *
                                             detail::factorial(int(jetI - tI)))) *
                                     double(detail::factorial(int(jetJ)) /
                                            (detail::factorial(int(tJ)) *
                                             detail::factorial(int(jetJ - tJ))));
                        if (tJ % 2) bin = -bin;  // -d/du toward the target
                        jetOps.push_back({{int(tI + tJ), bin}, (jetI - tI) + (jetJ - tJ)});
                    }
                for (const auto& [k2, c2] : t2.terms()) {
                    for (const auto& [pw, mp] : fser.data) {
                      for (const auto& [op, passJet] : jetOps) {
                        const auto& [derivs, bin] = op;
                        int total = k2.u + pw;
                        // apply (d/du)^derivs to u^total
                        double fall = bin;
                        for (int t = 0; t < derivs; ++t) fall *= double(total - t);
                        if (fall == 0.0) continue;
                        if (total - derivs != -1) continue;
                        for (const auto& [ex, fc] : mp) {
                            Chain::Key nk;
                            nk.u = 0;
                            for (Var v : k2.ins)
                                nk.ins.push_back(varAtPoint(v, relabel(varPoint(v))));
                            std::sort(nk.ins.begin(), nk.ins.end());
                            // relabel is order-preserving on the remaining
                            // points, so no Koszul sign arises
                            for (unsigned p = 0; p < unsigned(n); ++p) {
                                if (p == i) continue;
                                if (k2.form.dz & (1u << p)) nk.form.dz |= (1u << relabel(p));
                                if (k2.form.dzbar & (1u << p))
                                    nk.form.dzbar |= (1u << relabel(p));
                                unsigned jv = k2.jetAt(p);
                                if (jv) nk.setJet(relabel(p), jv);
                            }
                            for (const PEdge& e : k2.form.edges) {
                                PFKey tmp;
                                appendEdge(tmp, relabel(e.i), relabel(e.j), e.a);
                                nk.form.edges.push_back(tmp.edges[0]);
                            }
                            for (const PEdge& e : ex) nk.form.edges.push_back(e);
                            std::sort(nk.form.edges.begin(), nk.form.edges.end());
                            if (passJet) nk.setJet(relabel(j), nk.jetAt(relabel(j)) + passJet);
                            out.addTerm(nk, c2.scaled(fc * fall));
                        }
                      }
                    }
                }
            }
        }
    }
    return out;
}

// chains of different point counts combine formally; terms keep their own
// point count through a tagged union
struct MixedChain {
    std::map<int, Chain> byPoints;

    void add(const Chain& c) {
        if (c.terms().empty()) return;
        auto it = byPoints.find(c.points());
        if (it == byPoints.end()) byPoints.emplace(c.points(), c);
        else it->second = it->second + c;
    }
};

// d_tot = dbar + d_ch (rescaled) or dbar + 2 pi i d_ch (bd); d_DR and d_Norm
// vanish identically on the stored strata
inline MixedChain dTot(const Chain& c, const ChainContext& cc) {
    MixedChain m;
    m.add(dbarChain(c, cc));
    if (c.points() >= 2) {
        Chain ch = dChain(c, cc);
        if (cc.conv == Convention::bd) ch = ch.scaled(Scalar::constant(cx(0.0, 2.0 * kPi)));
        m.add(ch);
    }
    return m;
}

inline MixedChain dTotMixed(const MixedChain& m, const ChainContext& cc) {
    MixedChain out;
    for (const auto& [n, c] : m.byPoints) {
        MixedChain d = dTot(c, cc);
        for (const auto& [nn, cc2] : d.byPoints) out.add(cc2);
    }
    return out;
}

// ---------------------------------------------------------------------------
// trace

struct TraceResult {
    FockElement<Scalar> bv;  // element of O_BV with hbar-series coefficients
    bool numeric = false;
};

inline TraceResult traceChain(const Chain& c, const ChainContext& cc) {
    TraceResult out;
    out.bv = FockElement<Scalar>(cc.space);
    RegEvaluator localEv(*cc.ell, cc.conv);
    RegEvaluator& ev = cc.evaluator ? *cc.evaluator : localEv;
    // drop jet tails: they pair to zero against the constant test form
    Chain flat(cc.space, c.points());
    for (const auto& [k, coeff] : c.terms()) {
        if (k.hasJets()) continue;
        flat.addTerm(k, coeff);
    }
    if (flat.isZero()) return out;
    auto pieces = wMap<Scalar>(flat, cc.dressParams);
    for (const auto& [form, elem] : pieces) {
        PropForm<Scalar> pf(c.points());
        pf.addTerm(form, Scalar::one());
        RegValue rv = regIntegrate(pf, ev);
        if (rv.numeric) out.numeric = true;
        if (rv.value.isZero()) continue;
        out.bv = out.bv + elem.scaled(rv.value);
    }
    return out;
}

inline TraceResult traceMixed(const MixedChain& m, const ChainContext& cc) {
    TraceResult out;
    out.bv = FockElement<Scalar>(cc.space);
    for (const auto& [n, c] : m.byPoints) {
        TraceResult r = traceChain(c, cc);
        out.bv = out.bv + r.bv;
        out.numeric = out.numeric || r.numeric;
    }
    return out;
}

inline Scalar traceBV(const Chain& c, const ChainContext& cc, const Polarization& pol) {
    TraceResult r = traceChain(c, cc);
    return bvIntegrateTop(r.bv, pol);
}

// QME residual: Tr(d_tot c) + hbar Delta Tr(c)
inline FockElement<Scalar> qmeResidual(const Chain& c, const ChainContext& cc) {
    MixedChain dc = dTot(c, cc);
    TraceResult t1 = traceMixed(dc, cc);
    TraceResult t0 = traceChain(c, cc);
    Scalar pre = Scalar::monomial(1, cx(0.0, -1.0 / cc.ell->imTau()));
    FockElement<Scalar> delta = bvDelta(t0.bv, pre);
    return t1.bv + delta;
}

// ---------------------------------------------------------------------------
// coset trace

// all nth products a_(n) v for n >= 0 vanish on the supplied generators
struct CommutantViolation {
    std::string a, v;
    int n = 0;
};

inline std::optional<CommutantViolation> checkCommutantPair(
    const std::vector<FockElement<Scalar>>& aGens, const std::vector<FockElement<Scalar>>& vGens,
    const WickParams<Scalar>& wp, int maxN = 4) {
    for (const auto& a : aGens)
        for (const auto& v : vGens)
            for (int n = 0; n <= maxN; ++n) {
                FockElement<Scalar> r = nthProduct(a, n, v, wp);
                if (!r.isZero() && r.maxAbs() > 1e-13)
                    return CommutantViolation{a.str(), v.str(), n};
            }
    return std::nullopt;
}

// Tr_alpha(eta) = Tr^BV(alpha ⊠ eta); requires (dbar + 2 pi i d_ch) alpha to
// vanish modulo jet tails (the d_DR image on the stored strata)
inline Scalar traceCoset(const Chain& alpha, const Chain& eta, const ChainContext& cc,
                         const Polarization& pol) {
    ChainContext bd(*cc.space, *cc.ell, Convention::bd);
    if (cc.evaluator) bd.evaluator = cc.evaluator;
    MixedChain d = dTot(alpha, bd);
    for (const auto& [n, ch] : d.byPoints)
        for (const auto& [k, coeff] : ch.terms()) {
            if (k.hasJets()) continue;  // d_DR image marker
            if (coeff.maxAbs() > 1e-12)
                throw FockError("coset trace: alpha is not closed modulo d_DR");
        }
    return traceBV(boxTensor(alpha, eta), cc, pol);
}

}  // namespace ect

#endif
