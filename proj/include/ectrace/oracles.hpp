// Independent reference implementations backing the self-test suites: a
// brute-force mode-algebra model of the free vertex algebra, the
// q-expansion of the Eisenstein series, and the theta-series route to the
// diagonal Laurent data. None of these share code with the engine paths
// they check.
//
// Mode algebra: states are polynomials in D^k a^s; generator modes act by
// creation (multiplication) and annihilation (derivation with the
// simple-pole commutator), and composite n-th products are built from the
// normal-ordered mode expansion
//   (A_(-1) v)_(n) = sum_{j>=0} A_(-1-j) v_(n+j)
//                    + (-1)^{p(A)p(v)} sum_{j>=0} v_(n-1-j) A_(j).
#ifndef ECTRACE_ORACLES_HPP
#define ECTRACE_ORACLES_HPP

#include "ectrace/elliptic.hpp"
#include "ectrace/fock.hpp"

namespace ect::oracle {

inline long long binomInt(long long m, int k) {
    long long num = 1;
    for (int t = 0; t < k; ++t) num *= (m - t);
    long long den = detail::factorial(k);
    return num / den;  // always divisible for integer m
}

template <class S>
int weightBound(const FockElement<S>& e) {
    int w = 0;
    for (const auto& [m, c] : e.terms()) {
        int mw = 0;
        for (Var v : m) mw += int(varDeriv(v)) + 1;
        w = std::max(w, mw);
    }
    return w;
}

// Generator mode a^s_(m) acting on a polynomial state.
template <class S>
FockElement<S> genMode(size_t s, long long m, const FockElement<S>& w, const WickParams<S>& wp) {
    const SymplecticSpace& sp = w.space();
    using C = typename S::Coeff;
    if (m < 0) {
        // creation: multiply by D^k a^s / k!, k = -1-m
        int k = int(-1 - m);
        FockElement<S> g = FockElement<S>::generator(sp, sp.gen(s).name, unsigned(k));
        return (g * w).divIntScaled(detail::factorial(k));
    }
    // annihilation: graded derivation, pairing only derivative order m
    FockElement<S> r(&sp);
    for (const auto& [mono, c] : w.terms()) {
        for (size_t i = 0; i < mono.size(); ++i) {
            if (i > 0 && mono[i - 1] == mono[i]) continue;
            Var v = mono[i];
            if (varDag(v) || varDeriv(v) != unsigned(m)) continue;
            GaussianRational om = sp.omega(s, varGen(v));
            if (om.isZero()) continue;
            FockElement<S> one = FockElement<S>::monomialElem(sp, mono, c);
            FockElement<S> d = one.derivative(v);
            S factor = wp.coupling.scaled(detail::omegaAs<C>(om) *
                                          CoeffOps<C>::fromInt(detail::factorial(int(m))));
            r = r + d.scaled(factor);
        }
    }
    return r;
}

// Mode of the single variable A = D^k a^s:
//   (D^k a)_(m) = (-1)^k k! C(m,k) a_(m-k).
template <class S>
FockElement<S> varMode(Var A, long long m, const FockElement<S>& w, const WickParams<S>& wp) {
    int k = int(varDeriv(A));
    long long f = binomInt(m, k) * detail::factorial(k);
    if ((k & 1) != 0) f = -f;
    if (f == 0) return FockElement<S>(w.spacePtr());
    using C = typename S::Coeff;
    FockElement<S> g = genMode(varGen(A), m - k, w, wp);
    return g.scaled(S::constant(CoeffOps<C>::fromInt(f)));
}

// v_(n) w for polynomial states, fully recursive.
template <class S>
FockElement<S> nthOracle(const FockElement<S>& v, long long n, const FockElement<S>& w,
                         const WickParams<S>& wp) {
    const SymplecticSpace& sp = v.space();
    FockElement<S> out(&sp);
    for (const auto& [mono, c] : v.terms()) {
        FockElement<S> contrib(&sp);
        if (mono.empty()) {
            // |0>_(n) = delta_{n,-1} id
            if (n == -1) contrib = w;
        } else {
            Var A = mono.front();
            Monomial rest(mono.begin() + 1, mono.end());
            FockElement<S> vp = FockElement<S>::monomialElem(sp, rest, S::one());
            bool pA = varOdd(sp, A);
            bool pVp = monomialOdd(sp, rest);
            int wt = weightBound(vp) + weightBound(w);
            // first sum: A_(-1-j) (v'_(n+j) w)
            for (long long j = 0; n + j <= wt; ++j) {
                FockElement<S> inner = nthOracle(vp, n + j, w, wp);
                if (inner.isZero()) continue;
                contrib = contrib + varMode(A, -1 - j, inner, wp);
            }
            // second sum: (-1)^{p(A)p(v')} v'_(n-1-j) (A_(j) w)
            int k = int(varDeriv(A));
            int maxJ = k;  // creation range for A_(j) is j < k
            for (const auto& [wm, wc] : w.terms())
                for (Var x : wm) maxJ = std::max(maxJ, k + int(varDeriv(x)));
            for (long long j = 0; j <= maxJ; ++j) {
                FockElement<S> Aw = varMode(A, j, w, wp);
                if (Aw.isZero()) continue;
                FockElement<S> inner = nthOracle(vp, n - 1 - j, Aw, wp);
                if (inner.isZero()) continue;
                if (pA && pVp) inner = -inner;
                contrib = contrib + inner;
            }
        }
        out = out + contrib.scaled(c);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Eisenstein q-expansion:
//   E_2k(tau) = 1 - (4k/B_2k) sum_{n>=1} sigma_{2k-1}(n) Q^n, Q = e^{2 pi i tau}.

inline double qExpPrefactor(int weight) {
    switch (weight) {
        case 2: return -24.0;
        case 4: return 240.0;
        case 6: return -504.0;
        case 8: return 480.0;
        case 10: return -264.0;
        case 12: return 65520.0 / 691.0;
        case 14: return -24.0;
        default: throw std::domain_error("qExp oracle: weight out of table");
    }
}

inline long long sigmaPower(long long n, int k) {
    long long s = 0;
    for (long long d = 1; d <= n; ++d) {
        if (n % d) continue;
        long long p = 1;
        for (int t = 0; t < k; ++t) p *= d;
        s += p;
    }
    return s;
}

inline cx eisensteinQExp(int weight, cx tau, int terms = 200) {
    cx Q = std::exp(cx(0.0, 2.0 * kPi) * tau);
    cx sum(0.0);
    cx Qn(1.0);
    for (int n = 1; n <= terms; ++n) {
        Qn *= Q;
        sum += double(sigmaPower(n, weight - 1)) * Qn;
        if (std::abs(Qn) < 1e-20) break;
    }
    return 1.0 + qExpPrefactor(weight) * sum;
}

// ---------------------------------------------------------------------------
// Taylor coefficients of (theta'/theta)(u) - 1/u at u = 0 from the odd theta
// series alone: theta = u A(u), theta'/theta - 1/u = A'/A. Independent of
// the lattice-sum route to the same data.

inline std::vector<cx> thetaRegularLogDeriv(const EllipticContext& ctx, int order) {
    std::vector<cx> th = ctx.thetaTaylor(cx(0.0), order + 2);
    std::vector<cx> A(size_t(order) + 2);
    for (int j = 0; j <= order + 1; ++j) A[size_t(j)] = th[size_t(j + 1)];
    std::vector<cx> Ap(size_t(order) + 1);
    for (int j = 0; j <= order; ++j) Ap[size_t(j)] = double(j + 1) * A[size_t(j + 1)];
    std::vector<cx> ratio(size_t(order) + 1);
    for (int j = 0; j <= order; ++j) {
        cx acc = Ap[size_t(j)];
        for (int k = 1; k <= j; ++k) acc -= A[size_t(k)] * ratio[size_t(j - k)];
        ratio[size_t(j)] = acc / A[0];
    }
    return ratio;
}

}  // namespace ect::oracle

#endif
