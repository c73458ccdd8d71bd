// Dressing operators P, Q, D, the map W = p_BV ∘ Mult ∘ e^{hbar P + hbar Q + D},
// and the operator identities behind the chiral differential. Tensors carry
// point-tagged insertion words together with propagator-form symbols and a
// Laurent power in the collapse variable u = z_i - z_j.
//
// Canonical word order for all Koszul signs: per point ascending,
//   [insertion variables][dz][dzbar],
// with every operator manipulating explicit word positions.
#ifndef ECTRACE_FEYNMAN_HPP
#define ECTRACE_FEYNMAN_HPP

#include "ectrace/bv.hpp"
#include "ectrace/elliptic.hpp"
#include "ectrace/regint.hpp"

namespace ect {

// ---------------------------------------------------------------------------
// QPoly: exact polynomial ring in the diagonal symbols Q(w,0), w odd, over
// Gaussian rationals. Used as the coefficient field for the exact operator
// identity checks; numerics substitute context values instead.

struct QPoly {
    // key: sorted multiset of atom weights
    std::map<std::vector<int>, GaussianRational> terms;

    QPoly() = default;
    QPoly(GaussianRational c) {
        if (!c.isZero()) terms[{}] = c;
    }
    static QPoly atom(int w, GaussianRational c = GaussianRational(1)) {
        QPoly p;
        p.terms[{w}] = c;
        return p;
    }
    bool isZero() const { return terms.empty(); }
    void addTerm(const std::vector<int>& k, const GaussianRational& c) {
        if (c.isZero()) return;
        auto it = terms.find(k);
        if (it == terms.end()) terms[k] = c;
        else {
            it->second = it->second + c;
            if (it->second.isZero()) terms.erase(it);
        }
    }
    friend QPoly operator+(const QPoly& a, const QPoly& b) {
        QPoly r = a;
        for (const auto& [k, c] : b.terms) r.addTerm(k, c);
        return r;
    }
    friend QPoly operator-(const QPoly& a, const QPoly& b) {
        QPoly r = a;
        for (const auto& [k, c] : b.terms) r.addTerm(k, -c);
        return r;
    }
    QPoly operator-() const {
        QPoly r;
        for (const auto& [k, c] : terms) r.terms[k] = -c;
        return r;
    }
    friend QPoly operator*(const QPoly& a, const QPoly& b) {
        QPoly r;
        for (const auto& [ka, ca] : a.terms)
            for (const auto& [kb, cb] : b.terms) {
                std::vector<int> k = ka;
                k.insert(k.end(), kb.begin(), kb.end());
                std::sort(k.begin(), k.end());
                r.addTerm(k, ca * cb);
            }
        return r;
    }
    friend bool operator==(const QPoly& a, const QPoly& b) { return a.terms == b.terms; }
};

template <>
struct CoeffOps<QPoly> {
    static QPoly zero() { return QPoly(); }
    static QPoly one() { return QPoly(GaussianRational(1)); }
    static QPoly fromInt(long long n) { return QPoly(GaussianRational(n)); }
    static bool isZero(const QPoly& v) { return v.isZero(); }
    static QPoly divInt(const QPoly& v, long long d) {
        QPoly r;
        for (const auto& [k, c] : v.terms) r.terms[k] = c / d;
        return r;
    }
    static double absValue(const QPoly& v) {
        double m = 0;
        for (const auto& [k, c] : v.terms) m = std::max(m, std::abs(c.toComplex()));
        return m;
    }
    static std::string str(const QPoly& v) {
        std::ostringstream os;
        bool first = true;
        for (const auto& [k, c] : v.terms) {
            if (!first) os << " + ";
            first = false;
            os << CoeffOps<GaussianRational>::str(c);
            for (int w : k) os << "*Q" << w;
        }
        if (first) os << "0";
        return os.str();
    }
};

using QScalar = HbarSeries<QPoly>;

namespace detail {
template <>
inline QPoly omegaAs<QPoly>(const GaussianRational& w) { return QPoly(w); }
}  // namespace detail

// ---------------------------------------------------------------------------
// Contexts supplying the coupling and the diagonal Q-values.

template <class S>
struct DressParams {
    S hbar;      // multiplies the symbol contractions hbar*P and hbar*Q
    S coupling;  // the OPE constant entering the singular contraction
    std::function<S(int, int)> qValue;  // hbar * Q(k, l)
    unsigned derivCap = 8;
};

inline DressParams<Scalar> numericDressParams(const EllipticContext& ctx) {
    DressParams<Scalar> p;
    p.hbar = Scalar::monomial(1, cx(1.0, 0.0));
    p.coupling = Scalar::monomial(1, cx(0.0, 1.0 / kPi));
    p.qValue = [&ctx](int k, int l) { return Scalar::monomial(1, ctx.qCoeff(k, l)); };
    p.derivCap = unsigned(ctx.derivCap());
    return p;
}

// exact instantiation: unit coupling, symbolic atoms Q(k,l) = (-1)^l Q_{k+l}
inline DressParams<QScalar> symbolicDressParams(unsigned derivCap = 16) {
    DressParams<QScalar> p;
    p.hbar = QScalar::monomial(1, CoeffOps<QPoly>::one());
    p.coupling = QScalar::monomial(1, CoeffOps<QPoly>::one());
    p.qValue = [](int k, int l) {
        if ((k + l) % 2 == 0) return QScalar::zero();
        GaussianRational sign((l % 2) ? -1 : 1);
        return QScalar::monomial(1, QPoly::atom(k + l, sign));
    };
    p.derivCap = derivCap;
    return p;
}

// ---------------------------------------------------------------------------
// DressedTensor: sum of (u-power, insertion word, form symbols) with scalars.

template <class S>
class DressedTensor {
  public:
    struct Key {
        int u = 0;
        Monomial ins;
        PFKey form;
        // formal-derivative jet orders per point, trailing zeros trimmed
        std::vector<unsigned char> jets;
        auto operator<=>(const Key&) const = default;

        unsigned jetAt(unsigned p) const { return p < jets.size() ? jets[p] : 0u; }
        void setJet(unsigned p, unsigned v) {
            if (p >= jets.size()) {
                if (v == 0) return;
                jets.resize(p + 1, 0);
            }
            jets[p] = (unsigned char)v;
            while (!jets.empty() && jets.back() == 0) jets.pop_back();
        }
        bool hasJets() const { return !jets.empty(); }
    };

    DressedTensor() : sp_(nullptr), n_(0) {}
    DressedTensor(const SymplecticSpace* sp, int nPoints) : sp_(sp), n_(nPoints) {}

    const SymplecticSpace& space() const { return *sp_; }
    const SymplecticSpace* spacePtr() const { return sp_; }
    int points() const { return n_; }
    const std::map<Key, S>& terms() const { return terms_; }
    bool isZero() const { return terms_.empty(); }

    void addTerm(const Key& k, const S& c) {
        if (c.isZero()) return;
        auto it = terms_.find(k);
        if (it == terms_.end()) terms_[k] = c;
        else {
            it->second += c;
            if (it->second.isZero()) terms_.erase(it);
        }
    }

    friend DressedTensor operator+(const DressedTensor& a, const DressedTensor& b) {
        DressedTensor r = a;
        for (const auto& [k, c] : b.terms_) r.addTerm(k, c);
        return r;
    }
    friend DressedTensor operator-(const DressedTensor& a, const DressedTensor& b) {
        DressedTensor r = a;
        for (const auto& [k, c] : b.terms_) r.addTerm(k, -c);
        return r;
    }
    DressedTensor scaled(const S& s) const {
        DressedTensor r(sp_, n_);
        for (const auto& [k, c] : terms_) {
            S v = c * s;
            if (!v.isZero()) r.terms_[k] = v;
        }
        return r;
    }
    DressedTensor divIntScaled(long long d) const {
        DressedTensor r(sp_, n_);
        for (const auto& [k, c] : terms_) {
            S v = c.divInt(d);
            if (!v.isZero()) r.terms_[k] = v;
        }
        return r;
    }
    friend bool operator==(const DressedTensor& a, const DressedTensor& b) {
        DressedTensor d = a - b;
        return d.terms_.empty();
    }

    // tensor of plain Fock elements at points 0..n-1
    static DressedTensor fromFactors(const SymplecticSpace& sp,
                                     const std::vector<FockElement<S>>& factors) {
        DressedTensor r(&sp, int(factors.size()));
        std::vector<std::pair<Monomial, S>> acc{{Monomial{}, S::one()}};
        for (unsigned pt = 0; pt < factors.size(); ++pt) {
            std::vector<std::pair<Monomial, S>> next;
            for (const auto& [m, c] : acc)
                for (const auto& [fm, fc] : factors[pt].terms()) {
                    Monomial w = m;
                    for (Var v : fm) w.push_back(varAtPoint(v, pt));
                    next.push_back({w, c * fc});
                }
            acc = std::move(next);
        }
        for (auto& [m, c] : acc) {
            Key k;
            k.ins = m;
            r.addTerm(k, c);
        }
        return r;
    }

  private:
    const SymplecticSpace* sp_;
    int n_;
    std::map<Key, S> terms_;
};

// ---------------------------------------------------------------------------
// Explicit-word sign helpers.

// parity of all odd symbols strictly below the given point
template <class S>
int oddParityBelowPoint(const SymplecticSpace& sp, const typename DressedTensor<S>::Key& k,
                        unsigned point) {
    int c = 0;
    for (Var v : k.ins)
        if (varPoint(v) < point && varOdd(sp, v)) ++c;
    for (unsigned s = 0; s < point; ++s) {
        if (k.form.dz & (1u << s)) ++c;
        if (k.form.dzbar & (1u << s)) ++c;
    }
    return c & 1;
}

// parity of the word strictly before a given insertion-variable position
template <class S>
int oddParityBeforeVar(const SymplecticSpace& sp, const typename DressedTensor<S>::Key& k,
                       size_t pos) {
    unsigned pt = varPoint(k.ins[pos]);
    int c = oddParityBelowPoint<S>(sp, k, pt);
    for (size_t t = 0; t < pos; ++t)
        if (varPoint(k.ins[t]) == pt && varOdd(sp, k.ins[t])) ++c;
    return c & 1;
}

// parity of the word before the dz / dzbar slot of a point
template <class S>
int oddParityBeforeSlot(const SymplecticSpace& sp, const typename DressedTensor<S>::Key& k,
                        unsigned point, bool dzbarSlot) {
    int c = oddParityBelowPoint<S>(sp, k, point);
    for (Var v : k.ins)
        if (varPoint(v) == point && varOdd(sp, v)) ++c;
    if (dzbarSlot && (k.form.dz & (1u << point))) ++c;
    return c & 1;
}

// ---------------------------------------------------------------------------
// Core operators.

// signed derivative with respect to an exact pointed variable, including the
// flag parities below its point
template <class S>
DressedTensor<S> varDerivative(const DressedTensor<S>& t, Var x) {
    DressedTensor<S> out(t.spacePtr(), t.points());
    const SymplecticSpace& sp = t.space();
    bool xo = varOdd(sp, x);
    for (const auto& [key, c] : t.terms()) {
        for (size_t pos = 0; pos < key.ins.size(); ++pos) {
            if (key.ins[pos] != x) continue;
            typename DressedTensor<S>::Key nk = key;
            nk.ins.erase(nk.ins.begin() + long(pos));
            S v = c;
            if (xo && oddParityBeforeVar<S>(sp, key, pos)) v = -v;
            out.addTerm(nk, v);
        }
    }
    return out;
}

// multiply by a pointed variable (normal product), Koszul-sorted in place
template <class S>
DressedTensor<S> varMultiply(const DressedTensor<S>& t, Var x) {
    DressedTensor<S> out(t.spacePtr(), t.points());
    const SymplecticSpace& sp = t.space();
    bool xo = varOdd(sp, x);
    for (const auto& [key, c] : t.terms()) {
        typename DressedTensor<S>::Key nk = key;
        size_t pos = 0;
        while (pos < nk.ins.size() && nk.ins[pos] <= x) ++pos;
        if (xo && pos > 0 && nk.ins[pos - 1] == x) continue;  // odd square
        nk.ins.insert(nk.ins.begin() + long(pos), x);
        S v = c;
        if (xo && oddParityBeforeVar<S>(sp, nk, pos)) v = -v;
        out.addTerm(nk, v);
    }
    return out;
}

// D at one point: derivation sending D^k a^s -> (-1)^{p(a^s)} D^k a^s! dzbar_i
template <class S>
DressedTensor<S> applyDAt(const DressedTensor<S>& t, unsigned i) {
    DressedTensor<S> out(t.spacePtr(), t.points());
    const SymplecticSpace& sp = t.space();
    for (const auto& [key, c] : t.terms()) {
        if (key.form.dzbar & (1u << i)) continue;  // dzbar wedge dzbar
        for (size_t pos = 0; pos < key.ins.size(); ++pos) {
            Var x = key.ins[pos];
            if (pos > 0 && key.ins[pos - 1] == x) continue;
            if (varPoint(x) != i || varDag(x)) continue;
            // derivative then daggered re-insertion then the dzbar flag
            DressedTensor<S> one(t.spacePtr(), t.points());
            one.addTerm(key, c);
            DressedTensor<S> d = varDerivative(one, x);
            Var xd = makeVar(varGen(x), varDeriv(x), true, i);
            DressedTensor<S> md = varMultiply(d, xd);
            for (const auto& [k2, c2] : md.terms()) {
                typename DressedTensor<S>::Key nk = k2;
                nk.form.dzbar |= (1u << i);
                S v = c2;
                if (sp.odd(varGen(x))) v = -v;  // (-1)^{p(a^s)}
                if (oddParityBeforeSlot<S>(sp, k2, i, true)) v = -v;
                // the slot parity above counts the created dagger itself;
                // the dzbar is born to its right and must not cross it
                if (!sp.odd(varGen(x))) v = -v;
                // global orientation of D: fixed so that the QME holds with
                // the pairing-matrix Delta and the arity-one Lie trace
                // reproduces the theta cochain with its stated sign
                v = -v;
                out.addTerm(nk, v);
            }
        }
    }
    return out;
}

// generic two-slot contraction: factor(k, l) * omega_{pq} *
//   (d/d D^k a^p)_i (d/d D^l a^q)_j, where factor returns the scalar and
// the structural modification (u-power shift and/or an edge symbol).
template <class S>
struct ContractionEffect {
    S scalar;              // multiplies the coefficient
    int uShift = 0;        // adds to the Laurent power
    bool makeEdge = false; // appends P^{(edgeOrder)}(z_e1 - z_e2)
    unsigned e1 = 0, e2 = 0, edgeOrder = 0;
};

template <class S>
DressedTensor<S> applyContraction(
    const DressedTensor<S>& t, unsigned i, unsigned j,
    const std::function<ContractionEffect<S>(int, int)>& effect) {
    DressedTensor<S> out(t.spacePtr(), t.points());
    const SymplecticSpace& sp = t.space();
    for (const auto& [key, c] : t.terms()) {
        for (size_t xi = 0; xi < key.ins.size(); ++xi) {
            Var x = key.ins[xi];
            if (xi > 0 && key.ins[xi - 1] == x) continue;
            if (varPoint(x) != i || varDag(x)) continue;
            for (size_t yj = 0; yj < key.ins.size(); ++yj) {
                Var y = key.ins[yj];
                if (y == x) continue;
                if (yj > 0 && key.ins[yj - 1] == y) continue;
                if (varPoint(y) != j || varDag(y)) continue;
                GaussianRational om = sp.omega(varGen(x), varGen(y));
                if (om.isZero()) continue;
                ContractionEffect<S> eff = effect(int(varDeriv(x)), int(varDeriv(y)));
                if (eff.scalar.isZero()) continue;
                DressedTensor<S> one(t.spacePtr(), t.points());
                one.addTerm(key, c);
                DressedTensor<S> d = varDerivative(varDerivative(one, y), x);
                if (d.isZero()) continue;
                using C = typename S::Coeff;
                S factor = eff.scalar.scaled(detail::omegaAs<C>(om));
                // adjacency convention for the contracted pair
                if (varOdd(sp, x) && varOdd(sp, y)) factor = -factor;
                for (const auto& [k2, c2] : d.terms()) {
                    typename DressedTensor<S>::Key nk = k2;
                    nk.u += eff.uShift;
                    S v = c2 * factor;
                    if (eff.makeEdge) {
                        int sg = appendEdge(nk.form, eff.e1, eff.e2, eff.edgeOrder);
                        std::sort(nk.form.edges.begin(), nk.form.edges.end());
                        if (sg < 0) v = -v;
                    }
                    out.addTerm(nk, v);
                }
            }
        }
    }
    return out;
}

// same-point second-order contraction (the Q operator):
//   (1/2) sum Q(k,l) omega_{pq} (d/d D^k a^p · d/d D^l a^q)_i
template <class S>
DressedTensor<S> applyQSelf(const DressedTensor<S>& t, unsigned i, const DressParams<S>& dp,
                            int taylorShift = 0) {
    DressedTensor<S> out(t.spacePtr(), t.points());
    const SymplecticSpace& sp = t.space();
    for (const auto& [key, c] : t.terms()) {
        for (size_t xi = 0; xi < key.ins.size(); ++xi) {
            Var x = key.ins[xi];
            if (xi > 0 && key.ins[xi - 1] == x) continue;
            if (varPoint(x) != i || varDag(x)) continue;
            for (size_t yj = 0; yj < key.ins.size(); ++yj) {
                Var y = key.ins[yj];
                if (yj > 0 && key.ins[yj - 1] == y) continue;
                if (varPoint(y) != i || varDag(y)) continue;
                GaussianRational om = sp.omega(varGen(x), varGen(y));
                if (om.isZero()) continue;
                S q = dp.qValue(int(varDeriv(x)) + taylorShift, int(varDeriv(y)));
                if (q.isZero()) continue;
                DressedTensor<S> one(t.spacePtr(), t.points());
                one.addTerm(key, c);
                DressedTensor<S> d = varDerivative(varDerivative(one, y), x);
                if (d.isZero()) continue;
                using C = typename S::Coeff;
                S factor = q.scaled(detail::omegaAs<C>(om)).divInt(2);
                if (varOdd(sp, x) && varOdd(sp, y)) factor = -factor;
                for (const auto& [k2, c2] : d.terms()) out.addTerm(k2, c2 * factor);
            }
        }
    }
    return out;
}

// exponential of a nilpotent-exhausting operator
template <class S>
DressedTensor<S> expApply(const DressedTensor<S>& t,
                          const std::function<DressedTensor<S>(const DressedTensor<S>&)>& op,
                          int maxIter = 64) {
    DressedTensor<S> acc = t, cur = t;
    for (int m = 1; m <= maxIter; ++m) {
        cur = op(cur).divIntScaled(m);
        if (cur.isZero()) return acc;
        acc = acc + cur;
    }
    throw FockError("operator exponential failed to terminate");
}

// P_{ij} with propagator symbols: P_{ij}(k,l) = (-1)^l P^{(k+l)}_{ij}
template <class S>
DressedTensor<S> applyPSymbol(const DressedTensor<S>& t, unsigned i, unsigned j,
                              const DressParams<S>& dp) {
    return applyContraction<S>(t, i, j, [&](int k, int l) {
        ContractionEffect<S> e;
        e.scalar = (l % 2) ? -dp.hbar : dp.hbar;
        e.makeEdge = true;
        e.e1 = i;
        e.e2 = j;
        e.edgeOrder = unsigned(k + l);
        return e;
    });
}

// singular part with u-poles: d^k_{z_i} d^l_{z_j} (1/u) = (-1)^k (k+l)! u^{-k-l-1}
template <class S>
DressedTensor<S> applyPSing(const DressedTensor<S>& t, unsigned i, unsigned j,
                            const DressParams<S>& dp) {
    return applyContraction<S>(t, i, j, [&](int k, int l) {
        ContractionEffect<S> e;
        long long f = detail::factorial(k + l);
        if (k % 2) f = -f;
        using C = typename S::Coeff;
        e.scalar = dp.coupling.scaled(CoeffOps<C>::fromInt(f));
        e.uShift = -(k + l + 1);
        return e;
    });
}

// Taylor-expanded spectator contraction P_{i t}(i -> j):
//   sum_r P_{j t}(k + r, l) u^r / r! acting at (i, t)
template <class S>
DressedTensor<S> applyPTaylor(const DressedTensor<S>& t, unsigned i, unsigned target,
                              unsigned j, const DressParams<S>& dp, int maxR) {
    DressedTensor<S> out(t.spacePtr(), t.points());
    for (int r = 0; r <= maxR; ++r) {
        DressedTensor<S> term = applyContraction<S>(t, i, target, [&](int k, int l) {
            ContractionEffect<S> e;
            e.scalar = (l % 2) ? -dp.hbar : dp.hbar;
            e.scalar = e.scalar.divInt(detail::factorial(r));
            e.uShift = r;
            e.makeEdge = true;
            e.e1 = j;
            e.e2 = target;
            e.edgeOrder = unsigned(k + r + l);
            return e;
        });
        out = out + term;
    }
    return out;
}

// Taylor-expanded pair contraction Q_{ij}(i->j):
//   sum_r Q(k+r, l) u^r/r! (d/d D^k a^p)_i (d/d D^l a^q)_j
template <class S>
DressedTensor<S> applyQPairTaylor(const DressedTensor<S>& t, unsigned i, unsigned j,
                                  const DressParams<S>& dp, int maxR) {
    DressedTensor<S> out(t.spacePtr(), t.points());
    for (int r = 0; r <= maxR; ++r) {
        DressedTensor<S> term = applyContraction<S>(t, i, j, [&](int k, int l) {
            ContractionEffect<S> e;
            e.scalar = dp.qValue(k + r, l).divInt(detail::factorial(r));
            e.uShift = r;
            return e;
        });
        out = out + term;
    }
    return out;
}

// (L_{-1})_i with a u-power: u (L_{-1})_i
template <class S>
DressedTensor<S> applyShift(const DressedTensor<S>& t, unsigned i, const DressParams<S>& dp,
                            int uPower = 1) {
    DressedTensor<S> out(t.spacePtr(), t.points());
    const SymplecticSpace& sp = t.space();
    using C = typename S::Coeff;
    for (const auto& [key, c] : t.terms()) {
        for (size_t pos = 0; pos < key.ins.size(); ++pos) {
            if (pos + 1 < key.ins.size() && key.ins[pos + 1] == key.ins[pos]) continue;
            Var v = key.ins[pos];
            if (varPoint(v) != i) continue;
            unsigned mult = 1;
            while (pos >= mult && key.ins[pos - mult] == v) ++mult;
            if (varDeriv(v) + 1 > dp.derivCap)
                throw FockError("derivative cap exceeded in Taylor shift");
            typename DressedTensor<S>::Key nk = key;
            nk.ins[pos] = makeVar(varGen(v), varDeriv(v) + 1, varDag(v), i);
            std::sort(nk.ins.begin(), nk.ins.end());
            bool bad = false;
            for (size_t q = 1; q < nk.ins.size(); ++q)
                if (nk.ins[q] == nk.ins[q - 1] && varOdd(sp, nk.ins[q])) bad = true;
            if (bad) continue;
            nk.u += uPower;
            S vv = c;
            if (mult > 1) vv = vv.scaled(CoeffOps<C>::fromInt(mult));
            out.addTerm(nk, vv);
        }
    }
    return out;
}

// Mult_{i -> j}: merge the insertion word of i into j. Point i must carry no
// form flags by this stage. The Koszul sort counts crossings over insertion
// variables; crossings over the dz/dzbar flags of the traversed points are
// added by hand: moving right (i < j) crosses the flags of points i+1..j-1,
// moving left (i > j) the flags of points j..i-1.
template <class S>
DressedTensor<S> multInto(const DressedTensor<S>& t, unsigned i, unsigned j) {
    DressedTensor<S> out(t.spacePtr(), t.points());
    const SymplecticSpace& sp = t.space();
    for (const auto& [key, c] : t.terms()) {
        if ((key.form.dz & (1u << i)) || (key.form.dzbar & (1u << i)))
            throw FockError("multInto: point still carries form flags");
        int flagCross = 0;
        unsigned lo = (i < j) ? i + 1 : j;
        unsigned hi = (i < j) ? j : i;  // [lo, hi)
        for (unsigned s = lo; s < hi; ++s) {
            if (key.form.dz & (1u << s)) ++flagCross;
            if (key.form.dzbar & (1u << s)) ++flagCross;
        }
        typename DressedTensor<S>::Key nk = key;
        int movedOdd = 0;
        Monomial w;
        w.reserve(nk.ins.size());
        for (Var v : nk.ins) {
            if (varPoint(v) == i) {
                if (varOdd(sp, v)) ++movedOdd;
                w.push_back(varAtPoint(v, j));
            } else {
                w.push_back(v);
            }
        }
        int sign = ((movedOdd & 1) && (flagCross & 1)) ? -1 : 1;
        int sg = koszulSort(sp, w);
        if (sg == 0) continue;
        nk.ins = w;
        S v2 = c;
        if (sign * sg < 0) v2 = -v2;
        out.addTerm(nk, v2);
    }
    return out;
}

// holomorphic derivative at a point: raises edge orders touching the point
template <class S>
DressedTensor<S> edgeDerivative(const DressedTensor<S>& t, unsigned i) {
    DressedTensor<S> out(t.spacePtr(), t.points());
    for (const auto& [key, c] : t.terms()) {
        for (size_t e = 0; e < key.form.edges.size(); ++e) {
            const PEdge& ed = key.form.edges[e];
            if (ed.i != i && ed.j != i) continue;
            typename DressedTensor<S>::Key nk = key;
            nk.form.edges[e].a += 1;
            std::sort(nk.form.edges.begin(), nk.form.edges.end());
            // edge stored (i, t): d_{z_i} raises the order directly;
            // stored (t, i): d_{z_i} P^(a)(z_t - z_i) = -P^(a+1)(z_t - z_i)
            S v = (ed.i == i) ? c : -c;
            out.addTerm(nk, v);
        }
        // the Laurent power in u = z_i - z_j also differentiates when the
        // caller tracks it; handled by the caller since the pair is implicit
    }
    return out;
}

template <class S>
typename S::Coeff scalarFrom(cx v);

template <>
inline cx scalarFrom<Scalar>(cx v) { return v; }

// dbar on dressed tensors: a = 0 edges differentiate to -i/Im(tau) dzbar on
// the first slot and +i/Im(tau) on the second; the created flag crosses the
// word before its slot.
template <class S>
DressedTensor<S> dbarDressed(const DressedTensor<S>& t, double imTau) {
    DressedTensor<S> out(t.spacePtr(), t.points());
    for (const auto& [key, c] : t.terms()) {
        for (size_t e = 0; e < key.form.edges.size(); ++e) {
            const PEdge& ed = key.form.edges[e];
            if (ed.a != 0) continue;
            for (int side = 0; side < 2; ++side) {
                unsigned pt = side == 0 ? ed.i : ed.j;
                if (key.form.dzbar & (1u << pt)) continue;
                typename DressedTensor<S>::Key nk = key;
                nk.form.edges.erase(nk.form.edges.begin() + long(e));
                nk.form.dzbar |= (1u << pt);
                cx val = (side == 0) ? cx(0.0, -1.0 / imTau) : cx(0.0, 1.0 / imTau);
                S v = c.scaled(scalarFrom<S>(val));
                (void)0;
                if (oddParityBeforeSlot<S>(t.space(), nk, pt, true)) v = -v;
                out.addTerm(nk, v);
            }
        }
    }
    return out;
}

// BV operator on dressed tensors (numeric): the zero-jet dagger pairs over
// all point combinations, matching the single-point convention.
template <class S>
DressedTensor<S> deltaDressed(const DressedTensor<S>& t, cx prefactor,
                              DeltaMatrix mat = DeltaMatrix::pairing) {
    DressedTensor<S> out(t.spacePtr(), t.points());
    const SymplecticSpace& sp = t.space();
    for (const auto& [key, c] : t.terms()) {
        for (size_t wj = 0; wj < key.ins.size(); ++wj) {
            Var w = key.ins[wj];
            if (wj > 0 && key.ins[wj - 1] == w) continue;
            if (!varDag(w) || varDeriv(w) != 0) continue;
            for (size_t vi = 0; vi < key.ins.size(); ++vi) {
                Var v = key.ins[vi];
                if (vi > 0 && key.ins[vi - 1] == v) continue;
                if (varDag(v) || varDeriv(v) != 0) continue;
                GaussianRational om = sp.omegaInv(varGen(v), varGen(w));
                if (om.isZero()) continue;
                if (mat == DeltaMatrix::pairing) om = -om;
                DressedTensor<S> one(t.spacePtr(), t.points());
                one.addTerm(key, c);
                DressedTensor<S> d = varDerivative(varDerivative(one, w), v);
                if (d.isZero()) continue;
                S factor = S::constant(scalarFrom<S>(prefactor * om.toComplex()));
                for (const auto& [k2, c2] : d.terms()) out.addTerm(k2, c2 * factor);
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// dress: e^{hbar P + hbar Q + D} with symbol edges for P and context values
// for Q; the commuting exponentials apply factor by factor.

template <class S>
DressedTensor<S> dress(const DressedTensor<S>& t, const DressParams<S>& dp) {
    DressedTensor<S> cur = t;
    int n = t.points();
    for (unsigned i = 0; i < unsigned(n); ++i)
        for (unsigned j = i + 1; j < unsigned(n); ++j)
            cur = expApply<S>(cur, [&](const DressedTensor<S>& x) {
                return applyPSymbol<S>(x, i, j, dp);
            });
    for (unsigned i = 0; i < unsigned(n); ++i)
        cur = expApply<S>(cur,
                          [&](const DressedTensor<S>& x) { return applyQSelf<S>(x, i, dp); });
    for (unsigned i = 0; i < unsigned(n); ++i) {
        // e^{D_i} = 1 + D_i + D_i^2/2 + ...; terminates by the dzbar flag
        cur = expApply<S>(cur, [&](const DressedTensor<S>& x) { return applyDAt<S>(x, i); });
    }
    return cur;
}

// W = p_BV ∘ Mult ∘ dress: propagator-form coefficients paired with the
// zero-jet BV elements they multiply.
template <class S>
std::map<PFKey, FockElement<S>> wMap(const DressedTensor<S>& t, const DressParams<S>& dp) {
    DressedTensor<S> d = dress(t, dp);
    const SymplecticSpace& sp = t.space();
    std::map<PFKey, FockElement<S>> out;
    for (const auto& [key, c] : d.terms()) {
        if (key.u != 0) throw FockError("wMap: unexpected Laurent power");
        // Mult: move every insertion to the front block; each odd variable
        // crosses the flags of the points below its own
        Monomial w;
        w.reserve(key.ins.size());
        int flagSign = 0;
        for (Var v : key.ins) {
            if (varOdd(sp, v)) {
                unsigned pt = varPoint(v);
                for (unsigned s = 0; s < pt; ++s) {
                    if (key.form.dz & (1u << s)) ++flagSign;
                    if (key.form.dzbar & (1u << s)) ++flagSign;
                }
            }
            w.push_back(varAtPoint(v, 0));
        }
        int sg = koszulSort(sp, w);
        if (sg == 0) continue;
        if (flagSign & 1) sg = -sg;
        // p_BV: drop positive derivative orders
        bool keep = true;
        for (Var v : w)
            if (varDeriv(v) > 0) keep = false;
        if (!keep) continue;
        S v2 = c;
        if (sg < 0) v2 = -v2;
        auto it = out.find(key.form);
        if (it == out.end()) {
            FockElement<S> e(t.spacePtr());
            e.addTerm(w, v2);
            out[key.form] = e;
        } else {
            it->second.addTerm(w, v2);
            if (it->second.isZero()) out.erase(it);
        }
    }
    return out;
}

}  // namespace ect

#endif
