// Regularized integrals and generalized residues for forms on X^n valued in
// the propagator function algebra. Forms are sums of monomials
//   coeff * prod P^(a)_{ij} * dzbar-set * dz-set,
// with P^(a)_{ij} = d^a_{z_i} P(z_i, z_j). Evaluation factorizes over the
// connected components of the edge graph: leaves vanish (first moments),
// two-point components reduce through the Weierstrass algebra to the p^k
// moments, and plain cycles evaluate through the dual-lattice trace formula.
#ifndef ECTRACE_REGINT_HPP
#define ECTRACE_REGINT_HPP

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <vector>

#include "ectrace/elliptic.hpp"
#include "ectrace/scalar.hpp"

namespace ect {

enum class Convention { rescaled, bd };

struct RegIntError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct PEdge {
    unsigned i = 0, j = 0, a = 0;  // P^(a)(z_i - z_j), stored with i < j
    auto operator<=>(const PEdge&) const = default;
};

struct PFKey {
    std::vector<PEdge> edges;  // sorted
    unsigned dz = 0, dzbar = 0;  // bitmasks over point indices
    auto operator<=>(const PFKey&) const = default;
};

// Canonical word order for the odd symbols: point-major, dz before dzbar.
// Returns the parity (0/1) of the odd symbols strictly before the given slot.
inline int oddPrefixCount(const PFKey& k, unsigned point, bool dzbarSlot) {
    int c = 0;
    for (unsigned s = 0; s < point; ++s) {
        if (k.dz & (1u << s)) ++c;
        if (k.dzbar & (1u << s)) ++c;
    }
    if (dzbarSlot && (k.dz & (1u << point))) ++c;
    return c;
}

template <class S>
class PropForm {
  public:
    PropForm() : n_(0) {}
    explicit PropForm(int nPoints) : n_(nPoints) {}

    int points() const { return n_; }
    const std::map<PFKey, S>& terms() const { return terms_; }
    bool isZero() const { return terms_.empty(); }

    void addTerm(PFKey k, const S& c) {
        if (c.isZero()) return;
        std::sort(k.edges.begin(), k.edges.end());
        auto it = terms_.find(k);
        if (it == terms_.end()) terms_[std::move(k)] = c;
        else {
            it->second += c;
            if (it->second.isZero()) terms_.erase(it);
        }
    }

    static PropForm volumeForm(int nPoints, const S& c) {
        PropForm f(nPoints);
        PFKey k;
        k.dz = (1u << nPoints) - 1u;
        k.dzbar = (1u << nPoints) - 1u;
        f.addTerm(k, c);
        return f;
    }

    friend PropForm operator+(const PropForm& a, const PropForm& b) {
        PropForm r = a;
        for (const auto& [k, c] : b.terms_) r.addTerm(k, c);
        return r;
    }
    PropForm scaled(const S& s) const {
        PropForm r(n_);
        for (const auto& [k, c] : terms_) {
            S v = c * s;
            if (!v.isZero()) r.terms_[k] = v;
        }
        return r;
    }

    std::map<PFKey, S>& mutableTerms() { return terms_; }

  private:
    int n_;
    std::map<PFKey, S> terms_;
};

// Append one propagator symbol with orientation normalization
// P^(a)_{ji} = (-1)^{a+1} P^(a)_{ij}; returns the sign.
inline int appendEdge(PFKey& k, unsigned i, unsigned j, unsigned a) {
    if (i == j) throw RegIntError("propagator symbol on the diagonal");
    if (i < j) {
        k.edges.push_back({i, j, a});
        return 1;
    }
    k.edges.push_back({j, i, a});
    return (a % 2 == 0) ? -1 : 1;  // (-1)^{a+1}
}

// ---------------------------------------------------------------------------
// dbar: d^a P differentiates to (-i/Im tau) dzbar at a = 0 on the first slot,
// (+i/Im tau) dzbar on the second; derivatives a >= 1 are dbar-closed.

template <class S>
PropForm<S> dbarForm(const PropForm<S>& f, const EllipticContext& ctx) {
    PropForm<S> out(f.points());
    const cx c0 = cx(0.0, -1.0 / ctx.imTau());
    for (const auto& [key, coeff] : f.terms()) {
        for (size_t e = 0; e < key.edges.size(); ++e) {
            const PEdge& ed = key.edges[e];
            if (ed.a != 0) continue;
            for (int side = 0; side < 2; ++side) {
                unsigned t = side == 0 ? ed.i : ed.j;
                if (key.dzbar & (1u << t)) continue;
                PFKey nk = key;
                nk.edges.erase(nk.edges.begin() + long(e));
                nk.dzbar |= (1u << t);
                int sg = (oddPrefixCount(nk, t, true) & 1) ? -1 : 1;
                cx val = (side == 0) ? c0 : -c0;
                S v = coeff.scaled(sg < 0 ? -val : val);
                out.addTerm(nk, v);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Generalized residue Res_{z_i -> z_j} on the unit-coefficient algebra:
// Laurent-expand every factor touching i at z_i = z_j, extract u^{-1} dz_i,
// and relabel. Points above i are shifted down by one in the output.

template <class S>
PropForm<S> residueForm(const PropForm<S>& f, unsigned i, unsigned j,
                        const EllipticContext& ctx) {
    if (i == j || int(i) >= f.points() || int(j) >= f.points())
        throw RegIntError("residue: bad point pair");
    PropForm<S> out(f.points() - 1);
    auto relabel = [&](unsigned t) { return t > i ? t - 1 : t; };

    for (const auto& [key, coeff] : f.terms()) {
        if (!(key.dz & (1u << i))) continue;  // no dz_i: residue vanishes
        // split edges: pair edges (i<->j), spectator edges at i, rest
        std::vector<unsigned> pairOrders;
        std::vector<std::pair<unsigned, unsigned>> spect;  // (target, order)
        std::vector<PEdge> rest;
        int orient = 1;
        for (const PEdge& e : key.edges) {
            bool ti = e.i == i || e.j == i;
            if (!ti) {
                rest.push_back(e);
                continue;
            }
            unsigned other = (e.i == i) ? e.j : e.i;
            unsigned a = e.a;
            // normalize so the derivative acts at z_i
            int sg = (e.i == i) ? 1 : ((a % 2 == 0) ? -1 : 1);
            orient *= sg;
            if (other == j) pairOrders.push_back(a);
            else spect.push_back({other, a});
        }
        // Laurent series in u with PFKey-symbol coefficients
        int poleDepth = 0;
        for (unsigned a : pairOrders) poleDepth += int(a) + 1;
        int maxOrd = poleDepth;  // need powers up to u^{-1} after products
        // series: map upower -> map<extra-edge-multiset, cx>
        using Extra = std::vector<PEdge>;
        std::map<int, std::map<Extra, cx>> ser;
        ser[0][{}] = cx(1.0, 0.0);
        for (unsigned a : pairOrders) {
            LaurentJet jet = ctx.laurentJet(int(a), maxOrd + 1);
            std::map<int, std::map<Extra, cx>> next;
            for (const auto& [pw, mp] : ser)
                for (const auto& [ex, c] : mp)
                    for (int p = -jet.poleOrder; p <= maxOrd + 1; ++p) {
                        cx jc = jet.coeff(p);
                        if (jc == cx(0.0)) continue;
                        next[pw + p][ex] += c * jc;
                    }
            ser = std::move(next);
        }
        for (auto& [target, a] : spect) {
            // Taylor: sum_r u^r / r! * P^{(a+r)}(z_j - z_target)
            std::map<int, std::map<Extra, cx>> next;
            for (const auto& [pw, mp] : ser)
                for (const auto& [ex, c] : mp) {
                    double rf = 1.0;
                    for (int r = 0; pw + r <= maxOrd + 1; ++r) {
                        if (r > 0) rf *= r;
                        Extra ex2 = ex;
                        PFKey tmp;
                        int sg = appendEdge(tmp, relabel(j), relabel(target), a + unsigned(r));
                        ex2.push_back(tmp.edges[0]);
                        std::sort(ex2.begin(), ex2.end());
                        next[pw + r][ex2] += c * (double(sg) / rf);
                    }
                }
            ser = std::move(next);
        }
        auto itm = ser.find(-1);
        if (itm == ser.end()) continue;

        // sign: bring dz_i (and dzbar_i) to the front of the word
        int pre = oddPrefixCount(key, i, false);
        int blockSign = 1;
        bool hasBar = (key.dzbar & (1u << i)) != 0;
        if (!hasBar) blockSign = (pre & 1) ? -1 : 1;  // single odd symbol moves
        // an even block (dz_i dzbar_i) moves without sign

        PFKey base;
        base.dz = 0;
        base.dzbar = 0;
        for (unsigned t = 0; t < unsigned(f.points()); ++t) {
            if (t == i) continue;
            if (key.dz & (1u << t)) base.dz |= (1u << relabel(t));
            if (key.dzbar & (1u << t)) base.dzbar |= (1u << relabel(t));
        }
        int barSign = 1;
        if (hasBar) {
            if (base.dzbar & (1u << relabel(j))) continue;  // dzbar_j twice
            base.dzbar |= (1u << relabel(j));
            barSign = (oddPrefixCount(base, relabel(j), true) & 1) ? -1 : 1;
        }
        for (const PEdge& e : rest) {
            PFKey tmp;
            int sg = appendEdge(tmp, relabel(e.i), relabel(e.j), e.a);
            (void)sg;  // i<j preserved under order-preserving relabel
            base.edges.push_back(tmp.edges[0]);
        }
        for (const auto& [ex, c] : itm->second) {
            PFKey k2 = base;
            for (const PEdge& e : ex) k2.edges.push_back(e);
            cx total = c * double(orient * blockSign * barSign);
            out.addTerm(k2, coeff.scaled(total));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Same-pair reduction: closed-form value of the one-variable regularized
// integral of prod_e d^{a_e} p over X (rescaled convention), through the
// elliptic-function expansion of the derivative factors and the moments
//   mu_0 = -Im(tau)/pi, mu_2 = -(Im(tau)/3 pi) Ehat_2, odd moments = 0.

class RegEvaluator {
  public:
    RegEvaluator(const EllipticContext& ctx, Convention conv)
        : ctx_(ctx), conv_(conv) {}

    bool usedNumeric() const { return usedNumeric_; }
    void resetNumeric() { usedNumeric_ = false; }

    // Internal raw values are the bd-convention integrals; applyConv divides
    // by 2 pi i once per integration variable in the rescaled convention.

    // value of the regularized integral over one variable of dz wedge dzbar
    cx mu0() const { return applyConv(cx(0.0, -2.0 * ctx_.imTau())); }

    cx mu(int k) {
        if (k == 0) return mu0();
        if (k % 2 == 1) return cx(0.0);
        if (k == 2)
            return applyConv(cx(0.0, -2.0 * ctx_.imTau() / 3.0) * ctx_.eisensteinHat2());
        // beyond the closed table: principal-value quadrature, cached
        auto it = muCache_.find(k);
        if (it != muCache_.end()) return applyConv(it->second);
        std::vector<unsigned> orders(size_t(k), 0u);
        cx raw = pvQuadratureRaw(orders);
        muCache_[k] = raw;
        usedNumeric_ = true;
        return applyConv(raw);
    }

    // integral of p^k * d^b p
    cx pPowDeriv(int k, int b) {
        if (b == 0) return mu(k + 1);
        if (k == 0) return cx(0.0);  // first moments of derivatives vanish
        if (b == 1) return cx(0.0);  // exact: d(p^{k+1})/(k+1)
        // IBP: int p^k d^b p = -k int p^{k-1} (dp · d^{b-1}p)
        auto expanded = ellipticExpand({1u, unsigned(b - 1)});
        cx acc = expanded.constant * mu(k - 1);
        for (const auto& [bb, c] : expanded.basis) acc += c * pPowDeriv(k - 1, int(bb));
        return -double(k) * acc;
    }

    // value of the same-pair integral for the multiset of derivative orders
    cx samePair(std::vector<unsigned> orders) {
        std::sort(orders.begin(), orders.end());
        auto it = pairCache_.find(orders);
        if (it != pairCache_.end()) return it->second;
        int A = 0, E = int(orders.size());
        for (unsigned a : orders) A += int(a);
        cx val(0.0);
        if ((A + E) % 2 == 1) {
            val = cx(0.0);  // odd under u -> -u
        } else {
            int k = 0;
            std::vector<unsigned> derivs;
            for (unsigned a : orders)
                (a == 0 ? void(++k) : derivs.push_back(a));
            if (derivs.empty()) {
                val = mu(k);
            } else {
                auto ex = ellipticExpand(derivs);
                val = ex.constant * mu(k);
                for (const auto& [b, c] : ex.basis) val += c * pPowDeriv(k, int(b));
            }
        }
        pairCache_[orders] = val;
        return val;
    }

    // Plain or decorated cycle on n >= 3 distinct points. In the rescaled
    // convention the dual-lattice trace formula reads
    //   (i/pi^2)^E (Im tau)^{E-A} pi^A S(A, E),  S(A,E) = sum' lbar^A/l^E.
    cx cycleValue(const std::vector<unsigned>& orders) {
        int E = int(orders.size()), A = 0;
        for (unsigned a : orders) A += int(a);
        if ((E + A) % 2 == 1) return cx(0.0);
        cx S;
        if (A == 0) {
            // gStar carries the weight-2 modular completion, i.e. the
            // principal-value (spherical) summation of the conditional case
            S = ctx_.gStar(E);
        } else if (E - A >= 3) {
            S = latticeSbar(A, E);
            usedNumeric_ = true;
        } else {
            throw RegIntError("decorated cycle outside the closed-form table");
        }
        cx resc = std::pow(cx(0.0, 1.0) / (kPi * kPi), E) *
                  std::pow(cx(ctx_.imTau(), 0.0), E - A) * std::pow(kPi, A) * S;
        if (conv_ == Convention::rescaled) return resc;
        return resc * std::pow(cx(0.0, 2.0 * kPi), E);
    }

    // principal-value quadrature of prod d^{a_e} p over one variable
    // (epsilon-disk exclusion with Richardson extrapolation on the ladder)
    cx pvQuadrature(const std::vector<unsigned>& orders,
                    std::vector<double>* ladderOut = nullptr) {
        return applyConv(pvQuadratureRaw(orders, ladderOut));
    }
    cx pvQuadratureRaw(const std::vector<unsigned>& orders,
                       std::vector<double>* ladderOut = nullptr) {
        auto F = [&](cx u) {
            cx v(1.0);
            for (unsigned a : orders) v *= ctx_.propagator(u, cx(0.0), int(a), 0);
            return v;
        };
        return pvIntegrateTorus(F, ladderOut);
    }

    // integral over X minus the eps-disk, extrapolated eps -> 0 on the
    // ladder. The removed-disk contribution expands in powers eps^2, eps^3,
    // eps^4, ... for this integrand class (no linear term survives the
    // angular integral). The area integral converts to dz wedge dzbar by -2i.
    cx pvIntegrateTorus(const std::function<cx(cx)>& F, std::vector<double>* ladderOut) {
        // radial panels on fixed knots rho2 * 2^{-t/2}; the epsilon ladder
        // runs over knot values so that successive S(eps) share their panels
        cx grid = gridPart(F);
        // uniform panels across the bump transition, then geometric panels
        // toward the origin; the epsilon ladder sits on geometric knots
        std::vector<double> knots;
        const int nUnif = 10;
        for (int t = 0; t <= nUnif; ++t)
            knots.push_back(kRho2 - (kRho2 - kRho1) * double(t) / nUnif);
        while (knots.back() > kRho1 * std::pow(2.0, -5.001))
            knots.push_back(knots.back() / std::sqrt(2.0));
        std::vector<cx> panel(knots.size() - 1);
        for (size_t t = 0; t + 1 < knots.size(); ++t)
            panel[t] = radialPanel(F, knots[t + 1], knots[t]);
        std::vector<cx> vals;
        std::vector<size_t> cut{size_t(nUnif) + 4, size_t(nUnif) + 6, size_t(nUnif) + 8,
                                size_t(nUnif) + 10};
        for (size_t cidx : cut) {
            cx s = grid;
            for (size_t t = 0; t + 1 < knots.size() && t < cidx; ++t) s += panel[t];
            vals.push_back(s);
        }
        std::vector<cx> s = vals;
        for (int level = 0; level < 3; ++level) {
            double f = std::pow(2.0, 2 + level);
            for (size_t i = 0; i + 1 < s.size() - size_t(level); ++i)
                s[i] = (f * s[i + 1] - s[i]) / (f - 1.0);
        }
        cx s0 = s[0];
        if (ladderOut) {
            ladderOut->clear();
            for (cx v : vals) ladderOut->push_back(std::abs(v - s0));
        }
        double d0 = std::abs(vals[0] - s0), d3 = std::abs(vals[3] - s0);
        if (!(d3 < 0.5 * d0 + 1e-10 + 0.05 * std::abs(s0)))
            throw RegIntError("pv quadrature: non-convergent epsilon ladder");
        return cx(0.0, -2.0) * s0;
    }

    cx applyConv(cx raw) const { return applyConvOnce(raw); }

  private:
    cx applyConvOnce(cx raw) const {
        if (conv_ == Convention::rescaled) return raw / cx(0.0, 2.0 * kPi);
        return raw;
    }

    struct EllipticExpansion {
        cx constant;
        std::map<unsigned, cx> basis;  // order b -> coefficient of d^b p
    };

    // Expand a product of derivative factors (all orders >= 1) pointwise in
    // the basis {1, d^b p} by matching Laurent jets. Valid because each
    // factor is an elliptic function with poles only on the diagonal.
    EllipticExpansion ellipticExpand(std::vector<unsigned> derivs) {
        std::sort(derivs.begin(), derivs.end());
        auto it = expandCache_.find(derivs);
        if (it != expandCache_.end()) return it->second;
        int M = 0;
        for (unsigned a : derivs) M += int(a) + 1;
        int ord = 2;  // keep a couple of regular orders as an ellipticity check
        // product jet from u^{-M} to u^{ord}
        std::vector<cx> prod(size_t(M + ord + 1), cx(0.0));
        prod[0] = cx(1.0);
        int curPole = 0;
        for (unsigned a : derivs) {
            LaurentJet j = ctx_.laurentJet(int(a), M + ord);
            std::vector<cx> next(prod.size(), cx(0.0));
            int newPole = curPole + int(a) + 1;
            for (int s = 0; s < int(prod.size()); ++s) {
                if (prod[size_t(s)] == cx(0.0)) continue;
                int pw = s - curPole;
                // intermediate orders must run to the array bound: later pole
                // factors pull high regular orders back down
                for (int t = -j.poleOrder; pw + t + newPole <= M + ord; ++t) {
                    cx jc = j.coeff(t);
                    if (jc == cx(0.0)) continue;
                    int idx = pw + t + newPole;
                    if (idx < 0) continue;
                    next[size_t(idx)] += prod[size_t(s)] * jc;
                }
            }
            prod = std::move(next);
            curPole = newPole;
        }
        EllipticExpansion ex;
        ex.constant = cx(0.0);
        // subtract basis jets from the most singular power down
        for (int m = M; m >= 2; --m) {
            cx cm = prod[size_t(M - m)];
            if (cm == cx(0.0)) continue;
            unsigned b = unsigned(m - 1);
            // leading coefficient of d^b p: (i/pi)(-1)^b b!
            double f = 1.0;
            for (unsigned t = 2; t <= b; ++t) f *= t;
            cx lead = cx(0.0, 1.0 / kPi) * f * ((b % 2) ? -1.0 : 1.0);
            cx coeff = cm / lead;
            ex.basis[b] += coeff;
            LaurentJet j = ctx_.laurentJet(int(b), ord);
            for (int t = -j.poleOrder; t <= ord; ++t) {
                int idx = t + M;
                if (idx < 0 || idx >= int(prod.size())) continue;
                prod[size_t(idx)] -= coeff * j.coeff(t);
            }
        }
        // no simple pole may remain for an elliptic function
        if (std::abs(prod[size_t(M - 1)]) > 1e-8)
            throw RegIntError("elliptic expansion left a simple pole");
        ex.constant = prod[size_t(M)];
        expandCache_[derivs] = ex;
        return ex;
    }

    // S(A, E) = sum' lambdabar^A / lambda^E, absolutely convergent E-A >= 3,
    // square cutoff with Richardson extrapolation.
    cx latticeSbar(int A, int E) {
        auto key = std::make_pair(A, E);
        auto it = sbarCache_.find(key);
        if (it != sbarCache_.end()) return it->second;
        auto partial = [&](long long N) {
            cx s(0.0);
            for (long long m = -N; m <= N; ++m)
                for (long long n = -N; n <= N; ++n) {
                    if (m == 0 && n == 0) continue;
                    cx lam = double(m) * ctx_.tau() + double(n);
                    cx lb = std::conj(lam);
                    cx num(1.0), den(1.0);
                    for (int t = 0; t < A; ++t) num *= lb;
                    for (int t = 0; t < E; ++t) den *= lam;
                    s += num / den;
                }
            return s;
        };
        const long long N0 = 80;
        cx s[3] = {partial(N0), partial(2 * N0), partial(4 * N0)};
        int p = E - A - 2;
        for (int level = 0; level < 2; ++level) {
            double f = std::pow(2.0, p + level);
            for (int i = 0; i < 2 - level; ++i) s[i] = (f * s[i + 1] - s[i]) / (f - 1.0);
        }
        sbarCache_[key] = s[0];
        return s[0];
    }

    static double bumpFn(double r, double rho1, double rho2) {
        if (r <= rho1) return 0.0;
        if (r >= rho2) return 1.0;
        double t = (r - rho1) / (rho2 - rho1);
        auto f = [](double x) { return x <= 0 ? 0.0 : std::exp(-1.0 / x); };
        return f(t) / (f(t) + f(1 - t));
    }

    double torusRadius(cx u) const {
        double best = 1e9;
        for (int dm = -1; dm <= 1; ++dm)
            for (int dn = -1; dn <= 1; ++dn) {
                cx v = u + double(dn) + double(dm) * ctx_.tau();
                best = std::min(best, std::abs(v));
            }
        return best;
    }

    // periodic midpoint grid of the bump-smoothed part; eps-independent
    cx gridPart(const std::function<cx(cx)>& F) {
        const int N = 288;
        cx gridSum(0.0);
        for (int ix = 0; ix < N; ++ix)
            for (int iy = 0; iy < N; ++iy) {
                cx u = cx((ix + 0.5) / N, 0.0) + cx((iy + 0.5) / N, 0.0) * ctx_.tau();
                double r = torusRadius(u);
                if (r <= kRho1) continue;
                double w = bumpFn(r, kRho1, kRho2);
                if (w == 0.0) continue;
                gridSum += w * F(u);
            }
        return gridSum * (ctx_.imTau() / double(N * N));
    }

    // one radial Gauss panel of (1 - bump) F over a <= |u| <= b
    cx radialPanel(const std::function<cx(cx)>& F, double a, double b) {
        const int NT = 256;
        auto ringAvg = [&](double r) {
            cx s(0.0);
            for (int t = 0; t < NT; ++t) {
                double th = 2.0 * kPi * (t + 0.5) / NT;
                cx u = std::polar(r, th);
                s += F(u);
            }
            return s * ((1.0 - bumpFn(r, kRho1, kRho2)) * 2.0 * kPi / NT);
        };
        static const double gx[4] = {0.1834346424956498, 0.5255324099163290,
                                     0.7966664774136267, 0.9602898564975363};
        static const double gw[4] = {0.3626837833783620, 0.3137066458778873,
                                     0.2223810344533745, 0.1012285362903763};
        cx panel(0.0);
        double h = 0.5 * (b - a), m = 0.5 * (a + b);
        for (int g = 0; g < 4; ++g)
            for (double sgn : {-1.0, 1.0}) {
                double r = m + sgn * h * gx[g];
                panel += gw[g] * h * ringAvg(r) * r;
            }
        return panel;
    }

    static constexpr double kRho1 = 0.16;
    static constexpr double kRho2 = 0.38;

    const EllipticContext& ctx_;
    Convention conv_;
    bool usedNumeric_ = false;
    std::map<int, cx> muCache_;
    std::map<std::vector<unsigned>, cx> pairCache_;
    std::map<std::vector<unsigned>, EllipticExpansion> expandCache_;
    std::map<std::pair<int, int>, cx> sbarCache_;
};

// ---------------------------------------------------------------------------
// Full regularized integral of a PropForm over all its points.

struct RegValue {
    Scalar value = Scalar::zero();
    bool numeric = false;  // true when a quadrature fallback contributed
};

inline cx integrateComponentGraph(RegEvaluator& ev, const std::vector<PEdge>& edges,
                                  const std::vector<unsigned>& pts) {
    // degree per point
    std::map<unsigned, int> deg;
    for (unsigned p : pts) deg[p] = 0;
    for (const PEdge& e : edges) {
        deg[e.i]++;
        deg[e.j]++;
    }
    std::vector<PEdge> cur = edges;
    std::vector<unsigned> alive = pts;
    cx factor(1.0);
    bool changed = true;
    while (changed) {
        changed = false;
        for (unsigned p : alive) {
            if (deg[p] == 0) {
                factor *= ev.mu0();
                alive.erase(std::find(alive.begin(), alive.end(), p));
                deg.erase(p);
                changed = true;
                break;
            }
            if (deg[p] == 1) return cx(0.0);  // vanishing first moments
            // a vertex whose edges all reach one neighbor integrates out as
            // a same-pair blob; the neighbor stays alive
            std::set<unsigned> nbrs;
            std::vector<unsigned> orders;
            for (const PEdge& e : cur) {
                if (e.i == p) { nbrs.insert(e.j); orders.push_back(e.a); }
                else if (e.j == p) { nbrs.insert(e.i); orders.push_back(e.a); }
            }
            if (nbrs.size() == 1) {
                // orientation: edges stored (p, q) act at p; flip stored (q, p)
                int sg = 1;
                std::vector<unsigned> oriented;
                for (const PEdge& e : cur) {
                    if (e.i == p) oriented.push_back(e.a);
                    else if (e.j == p) {
                        if (e.a % 2 == 0) sg = -sg;  // (-1)^{a+1}
                        oriented.push_back(e.a);
                    }
                }
                factor *= double(sg) * ev.samePair(oriented);
                unsigned q = *nbrs.begin();
                std::erase_if(cur, [&](const PEdge& e) { return e.i == p || e.j == p; });
                deg[q] -= int(oriented.size());
                alive.erase(std::find(alive.begin(), alive.end(), p));
                deg.erase(p);
                changed = true;
                break;
            }
        }
    }
    if (alive.empty()) return factor;
    // cycle detection: all degrees 2
    for (unsigned p : alive)
        if (deg[p] != 2) throw RegIntError("integrand outside the closed-form table");
    // walk the cycle
    std::vector<unsigned> orders;
    int orient = 1;
    unsigned start = alive.front(), prev = start;
    // pick an edge at start
    size_t eIdx = 0;
    while (!(cur[eIdx].i == start || cur[eIdx].j == start)) ++eIdx;
    std::vector<bool> used(cur.size(), false);
    unsigned at = start;
    for (size_t step = 0; step < cur.size(); ++step) {
        size_t pick = cur.size();
        for (size_t t = 0; t < cur.size(); ++t) {
            if (used[t]) continue;
            if (cur[t].i == at || cur[t].j == at) {
                pick = t;
                break;
            }
        }
        if (pick == cur.size()) throw RegIntError("cycle walk failed");
        used[pick] = true;
        const PEdge& e = cur[pick];
        unsigned nxt = (e.i == at) ? e.j : e.i;
        if (e.i != at && e.a % 2 == 0) orient = -orient;  // traversal against storage
        orders.push_back(e.a);
        at = nxt;
    }
    (void)prev;
    if (at != start) throw RegIntError("component is not a single cycle");
    return factor * double(orient) * ev.cycleValue(orders);
}

inline RegValue regIntegrate(const PropForm<Scalar>& f, RegEvaluator& ev) {
    RegValue out;
    ev.resetNumeric();
    const unsigned all = (1u << f.points()) - 1u;
    for (const auto& [key, coeff] : f.terms()) {
        if (key.dz != all || key.dzbar != all) continue;  // bidegree
        // connected components of the edge graph
        std::vector<int> comp(size_t(f.points()), -1);
        int nc = 0;
        for (int p = 0; p < f.points(); ++p) {
            if (comp[size_t(p)] >= 0) continue;
            comp[size_t(p)] = nc;
            std::vector<unsigned> stack{unsigned(p)};
            while (!stack.empty()) {
                unsigned v = stack.back();
                stack.pop_back();
                for (const PEdge& e : key.edges) {
                    unsigned o;
                    if (e.i == v) o = e.j;
                    else if (e.j == v) o = e.i;
                    else continue;
                    if (comp[size_t(o)] < 0) {
                        comp[size_t(o)] = nc;
                        stack.push_back(o);
                    }
                }
            }
            ++nc;
        }
        cx val(1.0);
        for (int c = 0; c < nc && val != cx(0.0); ++c) {
            std::vector<PEdge> edges;
            std::vector<unsigned> pts;
            for (int p = 0; p < f.points(); ++p)
                if (comp[size_t(p)] == c) pts.push_back(unsigned(p));
            for (const PEdge& e : key.edges)
                if (comp[size_t(e.i)] == c) edges.push_back(e);
            val *= integrateComponentGraph(ev, edges, pts);
        }
        out.value += coeff.scaled(val);
    }
    out.numeric = ev.usedNumeric();
    return out;
}

inline RegValue regIntegrate(const PropForm<Scalar>& f, const EllipticContext& ctx,
                             Convention conv) {
    RegEvaluator ev(ctx, conv);
    return regIntegrate(f, ev);
}

// trace on the unit chiral complex: equals the regularized integral
inline RegValue traceUnit(const PropForm<Scalar>& f, const EllipticContext& ctx,
                          Convention conv) {
    return regIntegrate(f, ctx, conv);
}

}  // namespace ect

#endif
