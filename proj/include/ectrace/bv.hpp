// The BV algebra O_BV = C[[a^s, a^s!]]: the second-order BV operator on
// elements and tensor powers, multiplication and projection maps, and
// top-fermion BV integration.
#ifndef ECTRACE_BV_HPP
#define ECTRACE_BV_HPP

#include <set>

#include "ectrace/fock.hpp"

namespace ect {

// Koszul sign of sorting a word in place; 0 when an odd variable repeats.
inline int koszulSort(const SymplecticSpace& sp, Monomial& w) {
    int sign = 1;
    // insertion sort, counting odd-odd transpositions
    for (size_t i = 1; i < w.size(); ++i) {
        Var v = w[i];
        bool vo = varOdd(sp, v);
        size_t j = i;
        while (j > 0 && w[j - 1] > v) {
            if (vo && varOdd(sp, w[j - 1])) sign = -sign;
            w[j] = w[j - 1];
            --j;
        }
        w[j] = v;
    }
    for (size_t i = 1; i < w.size(); ++i)
        if (w[i] == w[i - 1] && varOdd(sp, w[i])) return 0;
    return sign;
}

// ---------------------------------------------------------------------------
// BV operator. `prefactor` carries -i/Im(tau) in the numeric instantiation;
// identity tests use the unit prefactor with exact scalars. Acts on single
// elements and on pointed tensors alike: all (i, j) point pairs contribute.
//
// Two matrix conventions coexist: `pairing` reproduces the direct
// second-derivative values of the pairing-matrix display and is the variant
// under which the trace satisfies the quantum master equation; `inverse` is
// its negative and enters the dbar-intertwining identity of the dressing
// map. (The two displays in the source material genuinely use different
// matrices; the engine keeps both.)

enum class DeltaMatrix { pairing, inverse };

template <class S>
FockElement<S> bvDelta(const FockElement<S>& x, const S& prefactor,
                       DeltaMatrix mat = DeltaMatrix::pairing) {
    const SymplecticSpace& sp = x.space();
    FockElement<S> out(&sp);
    using C = typename S::Coeff;
    for (const auto& [mono, c] : x.terms()) {
        for (size_t yi = 0; yi < mono.size(); ++yi) {
            Var w = mono[yi];
            if (yi > 0 && mono[yi - 1] == w) continue;
            if (!varDag(w) || varDeriv(w) != 0) continue;  // dagger slot
            for (size_t xi = 0; xi < mono.size(); ++xi) {
                Var v = mono[xi];
                if (xi > 0 && mono[xi - 1] == v) continue;
                if (varDag(v) || varDeriv(v) != 0) continue;  // plain slot
                GaussianRational om = sp.omegaInv(varGen(v), varGen(w));
                if (om.isZero()) continue;
                if (mat == DeltaMatrix::pairing) om = -om;
                FockElement<S> t = FockElement<S>::monomialElem(sp, mono, c);
                t = t.derivative(w);   // d/d a^{q!} first
                t = t.derivative(v);   // then d/d a^p
                if (t.isZero()) continue;
                out = out + t.scaled(prefactor.scaled(detail::omegaAs<C>(om)));
            }
        }
    }
    return out;
}

// Numeric prefactor -i/Im(tau).
inline Scalar bvPrefactor(double imTau) { return Scalar::constant(cx(0.0, -1.0 / imTau)); }

// Multiplication map O^{⊗n} -> O: collapse all point tags with Koszul signs.
template <class S>
FockElement<S> multTensor(const FockElement<S>& x) {
    const SymplecticSpace& sp = x.space();
    FockElement<S> out(&sp);
    for (const auto& [mono, c] : x.terms()) {
        Monomial w;
        w.reserve(mono.size());
        for (Var v : mono) w.push_back(varAtPoint(v, 0));
        int sg = koszulSort(sp, w);
        if (sg == 0) continue;
        S val = c;
        if (sg < 0) val = -val;
        out.addTerm(w, val);
    }
    return out;
}

// Quotient map p_BV: kill monomials containing a derivative variable.
template <class S>
FockElement<S> projectBV(const FockElement<S>& x) {
    FockElement<S> out(x.spacePtr());
    for (const auto& [mono, c] : x.terms()) {
        bool keep = true;
        for (Var v : mono)
            if (varDeriv(v) > 0) keep = false;
        if (keep) out.addTerm(mono, c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Polarization: a split of the extended zero-jet variables {a^s, a^s!} into
// coordinates and fermions, one from each Delta-conjugate pair.

struct Polarization {
    // extended slot = (generator index, dagger flag)
    std::set<std::pair<unsigned, bool>> fermions;

    static Polarization standard(const SymplecticSpace& sp) {
        // even generators contribute daggered fermions, odd generators plain
        Polarization p;
        for (unsigned g = 0; g < sp.dim(); ++g) p.fermions.insert({g, !sp.odd(g)});
        return p;
    }

    bool isFermion(unsigned g, bool dag) const { return fermions.count({g, dag}) > 0; }
};

// Validate: every fermion slot is odd, and each Delta-pair (a^p, a^{q!})
// with omega_{pq} != 0 is split between the two classes.
inline void validatePolarization(const SymplecticSpace& sp, const Polarization& pol) {
    for (const auto& [g, dag] : pol.fermions) {
        bool odd = sp.odd(g) ^ dag;
        if (!odd)
            throw FockError("polarization: fermion slot " + sp.gen(g).name +
                            (dag ? "!" : "") + " is not odd");
    }
    for (unsigned p = 0; p < sp.dim(); ++p)
        for (unsigned q = 0; q < sp.dim(); ++q) {
            if (sp.omega(p, q).isZero()) continue;
            bool fa = pol.isFermion(p, false);
            bool fb = pol.isFermion(q, true);
            if (fa == fb)
                throw FockError("polarization is not Lagrangian on the pair (" +
                                sp.gen(p).name + ", " + sp.gen(q).name + "!)");
        }
}

// Top-fermion integration: the coefficient of the product of all fermions
// (in canonical order) at coordinate origin.
template <class S>
S bvIntegrateTop(const FockElement<S>& x, const Polarization& pol) {
    const SymplecticSpace& sp = x.space();
    validatePolarization(sp, pol);
    Monomial top;
    for (const auto& [g, dag] : pol.fermions) top.push_back(makeVar(g, 0, dag));
    std::sort(top.begin(), top.end());
    auto it = x.terms().find(top);
    if (it == x.terms().end()) return S::zero();
    return it->second;
}

// Derived bracket {a,b} = Delta(ab) - (Delta a) b - (-1)^{|a|} a Delta b,
// for homogeneous a of the given parity.
template <class S>
FockElement<S> derivedBracket(const FockElement<S>& a, const FockElement<S>& b, bool aOdd,
                              const S& prefactor) {
    FockElement<S> r = bvDelta(a * b, prefactor) - bvDelta(a, prefactor) * b;
    FockElement<S> last = a * bvDelta(b, prefactor);
    if (aOdd) return r + last;
    return r - last;
}

// hodeg(a) = -deg(a) for zero-jet monomials; query for homogeneous elements.
template <class S>
int hodegOf(const FockElement<S>& x) {
    bool first = true;
    int h = 0;
    for (const auto& [m, c] : x.terms()) {
        int d = -monomialDegree(x.space(), m);
        if (first) { h = d; first = false; }
        else if (d != h) throw FockError("hodeg query on an inhomogeneous element");
    }
    return h;
}

}  // namespace ect

#endif
