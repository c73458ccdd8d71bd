// Free betagamma-bc Fock algebra: symplectic generator space, graded
// polynomial elements, normal product, translation, and n-th products via
// the operator form of the Wick theorem.
#ifndef ECTRACE_FOCK_HPP
#define ECTRACE_FOCK_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "ectrace/scalar.hpp"

namespace ect {

struct FockError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct GeneratorInfo {
    std::string name;
    bool odd = false;
    int degree = 0;
    // conformal weight alpha, stored as metadata only
    int weightNum = 0;
    int weightDen = 1;
};

// ---------------------------------------------------------------------------
// SymplecticSpace: generators plus the even symplectic pairing omega_{pq}.

class SymplecticSpace {
  public:
    SymplecticSpace(std::vector<GeneratorInfo> gens, std::vector<GaussianRational> pairing)
        : gens_(std::move(gens)), omega_(std::move(pairing)) {
        n_ = gens_.size();
        if (omega_.size() != n_ * n_) throw FockError("pairing matrix size mismatch");
        validate();
        buildInverse();
    }

    size_t dim() const { return n_; }
    const GeneratorInfo& gen(size_t i) const { return gens_.at(i); }
    bool odd(size_t i) const { return gens_[i].odd; }
    int degree(size_t i) const { return gens_[i].degree; }
    const GaussianRational& omega(size_t p, size_t q) const { return omega_[p * n_ + q]; }
    const GaussianRational& omegaInv(size_t p, size_t q) const { return omegaInv_[p * n_ + q]; }

    size_t indexOf(const std::string& name) const {
        for (size_t i = 0; i < n_; ++i)
            if (gens_[i].name == name) return i;
        throw FockError("unknown generator name: " + name);
    }
    std::optional<size_t> tryIndexOf(const std::string& name) const {
        for (size_t i = 0; i < n_; ++i)
            if (gens_[i].name == name) return i;
        return std::nullopt;
    }

    // Even betagamma pairs: <b_i, g_j> = delta_ij, <g_j, b_i> = -delta_ij.
    static SymplecticSpace betagamma(int N) {
        std::vector<GeneratorInfo> gens;
        for (int i = 1; i <= N; ++i) gens.push_back({"b" + std::to_string(i), false, 0, 1, 1});
        for (int i = 1; i <= N; ++i) gens.push_back({"g" + std::to_string(i), false, 0, 0, 1});
        std::vector<GaussianRational> om(size_t(2 * N) * size_t(2 * N));
        auto at = [&](int p, int q) -> GaussianRational& { return om[size_t(p) * 2 * N + q]; };
        for (int i = 0; i < N; ++i) {
            at(i, N + i) = GaussianRational(1);
            at(N + i, i) = GaussianRational(-1);
        }
        return SymplecticSpace(std::move(gens), std::move(om));
    }

    // Odd pairs: <c_i, d_j> = <d_j, c_i> = delta_ij, degrees +1/-1.
    static SymplecticSpace bc(int M) {
        std::vector<GeneratorInfo> gens;
        for (int i = 1; i <= M; ++i) gens.push_back({"c" + std::to_string(i), true, 1, 1, 1});
        for (int i = 1; i <= M; ++i) gens.push_back({"d" + std::to_string(i), true, -1, 0, 1});
        std::vector<GaussianRational> om(size_t(2 * M) * size_t(2 * M));
        auto at = [&](int p, int q) -> GaussianRational& { return om[size_t(p) * 2 * M + q]; };
        for (int i = 0; i < M; ++i) {
            at(i, M + i) = GaussianRational(1);
            at(M + i, i) = GaussianRational(1);
        }
        return SymplecticSpace(std::move(gens), std::move(om));
    }

    static SymplecticSpace directSum(const SymplecticSpace& a, const SymplecticSpace& b) {
        std::vector<GeneratorInfo> gens = a.gens_;
        gens.insert(gens.end(), b.gens_.begin(), b.gens_.end());
        size_t n = a.n_ + b.n_;
        std::vector<GaussianRational> om(n * n);
        for (size_t p = 0; p < a.n_; ++p)
            for (size_t q = 0; q < a.n_; ++q) om[p * n + q] = a.omega(p, q);
        for (size_t p = 0; p < b.n_; ++p)
            for (size_t q = 0; q < b.n_; ++q) om[(a.n_ + p) * n + (a.n_ + q)] = b.omega(p, q);
        return SymplecticSpace(std::move(gens), std::move(om));
    }

  private:
    void validate() const {
        for (size_t p = 0; p < n_; ++p)
            for (size_t q = 0; q < n_; ++q) {
                const auto& w = omega(p, q);
                if (w.isZero()) continue;
                const std::string pair = " (" + gens_[p].name + ", " + gens_[q].name + ")";
                if (gens_[p].odd != gens_[q].odd)
                    throw FockError("pairing is not even" + pair);
                if (gens_[p].degree + gens_[q].degree != 0)
                    throw FockError("pairing violates the degree-0 constraint" + pair);
                GaussianRational mirror = omega(q, p);
                GaussianRational expect = (gens_[p].odd && gens_[q].odd) ? mirror : -mirror;
                if (!(w == expect))
                    throw FockError("pairing is not graded-antisymmetric" + pair);
            }
        // nondegeneracy via exact Gaussian elimination over Q(i)
        std::vector<GaussianRational> m = omega_;
        size_t n = n_;
        for (size_t col = 0; col < n; ++col) {
            size_t piv = col;
            while (piv < n && m[piv * n + col].isZero()) ++piv;
            if (piv == n) throw FockError("pairing is degenerate (column " + gens_[col].name + ")");
            if (piv != col)
                for (size_t j = 0; j < n; ++j) std::swap(m[piv * n + j], m[col * n + j]);
            GaussianRational inv;
            {
                // 1/(a+bi) = (a-bi)/(a^2+b^2)
                Rational a = m[col * n + col].re, b = m[col * n + col].im;
                Rational d = a * a + b * b;
                inv = GaussianRational(a / d, -b / d);
            }
            for (size_t r = col + 1; r < n; ++r) {
                GaussianRational f = m[r * n + col] * inv;
                if (f.isZero()) continue;
                for (size_t j = col; j < n; ++j)
                    m[r * n + j] = m[r * n + j] - f * m[col * n + j];
            }
        }
    }

    void buildInverse() {
        size_t n = n_;
        omegaInv_.assign(n * n, GaussianRational());
        std::vector<GaussianRational> m(n * 2 * n);
        for (size_t r = 0; r < n; ++r) {
            for (size_t c = 0; c < n; ++c) m[r * 2 * n + c] = omega_[r * n + c];
            m[r * 2 * n + n + r] = GaussianRational(1);
        }
        auto inv = [](const GaussianRational& v) {
            Rational d = v.re * v.re + v.im * v.im;
            return GaussianRational(v.re / d, -v.im / d);
        };
        for (size_t col = 0; col < n; ++col) {
            size_t piv = col;
            while (m[piv * 2 * n + col].isZero()) ++piv;
            if (piv != col)
                for (size_t j = 0; j < 2 * n; ++j) std::swap(m[piv * 2 * n + j], m[col * 2 * n + j]);
            GaussianRational f = inv(m[col * 2 * n + col]);
            for (size_t j = 0; j < 2 * n; ++j) m[col * 2 * n + j] = m[col * 2 * n + j] * f;
            for (size_t r = 0; r < n; ++r) {
                if (r == col) continue;
                GaussianRational g = m[r * 2 * n + col];
                if (g.isZero()) continue;
                for (size_t j = 0; j < 2 * n; ++j)
                    m[r * 2 * n + j] = m[r * 2 * n + j] - g * m[col * 2 * n + j];
            }
        }
        for (size_t r = 0; r < n; ++r)
            for (size_t c = 0; c < n; ++c) omegaInv_[r * n + c] = m[r * 2 * n + n + c];
    }

    std::vector<GeneratorInfo> gens_;
    std::vector<GaussianRational> omega_;
    std::vector<GaussianRational> omegaInv_;
    size_t n_ = 0;
};

// Convenience wrapper matching the operation-style constructor.
inline SymplecticSpace makeSpace(std::vector<GeneratorInfo> gens,
                                 std::vector<GaussianRational> pairing) {
    return SymplecticSpace(std::move(gens), std::move(pairing));
}

// ---------------------------------------------------------------------------
// Variables and monomials.
//
// A variable is D^k a^s or D^k a^s! (daggered), optionally tagged with a
// point index for multi-point tensors. The packed encoding is ordered by
// (point, generator, derivative order, dagger flag), which fixes the
// canonical word order behind every Koszul sign in the engine.

using Var = std::uint32_t;

inline Var makeVar(unsigned gen, unsigned deriv, bool dag, unsigned point = 0) {
    if (gen >= (1u << 10) || deriv >= (1u << 8) || point >= (1u << 8))
        throw FockError("variable encoding overflow");
    return (point << 19) | (gen << 9) | (deriv << 1) | (dag ? 1u : 0u);
}
inline unsigned varPoint(Var v) { return v >> 19; }
inline unsigned varGen(Var v) { return (v >> 9) & 0x3ffu; }
inline unsigned varDeriv(Var v) { return (v >> 1) & 0xffu; }
inline bool varDag(Var v) { return v & 1u; }
inline Var varAtPoint(Var v, unsigned point) {
    return makeVar(varGen(v), varDeriv(v), varDag(v), point);
}

inline bool varOdd(const SymplecticSpace& sp, Var v) { return sp.odd(varGen(v)) ^ varDag(v); }
inline int varDegree(const SymplecticSpace& sp, Var v) {
    return sp.degree(varGen(v)) - (varDag(v) ? 1 : 0);
}

// Sorted multiset of variables. Empty monomial = vacuum |0>.
using Monomial = std::vector<Var>;

inline bool monomialOdd(const SymplecticSpace& sp, const Monomial& m) {
    bool o = false;
    for (Var v : m) o ^= varOdd(sp, v);
    return o;
}
inline int monomialDegree(const SymplecticSpace& sp, const Monomial& m) {
    int d = 0;
    for (Var v : m) d += varDegree(sp, v);
    return d;
}

// Koszul sign of merging two sorted words into one sorted word.
// Returns 0 if an odd variable repeats.
inline int mergeSign(const SymplecticSpace& sp, const Monomial& a, const Monomial& b,
                     Monomial& out) {
    out.clear();
    out.reserve(a.size() + b.size());
    size_t i = 0, j = 0;
    // odd elements of a not yet emitted; b-elements jump over them
    std::vector<int> oddSuffix(a.size() + 1, 0);
    for (size_t k = a.size(); k-- > 0;)
        oddSuffix[k] = oddSuffix[k + 1] + (varOdd(sp, a[k]) ? 1 : 0);
    int sign = 1;
    while (i < a.size() && j < b.size()) {
        if (a[i] <= b[j]) {
            if (a[i] == b[j] && varOdd(sp, a[i])) return 0;
            out.push_back(a[i]);
            ++i;
        } else {
            if (varOdd(sp, b[j]) && (oddSuffix[i] & 1)) sign = -sign;
            out.push_back(b[j]);
            ++j;
        }
    }
    while (i < a.size()) out.push_back(a[i++]);
    while (j < b.size()) out.push_back(b[j++]);
    // odd squares that ended adjacent
    for (size_t k = 1; k < out.size(); ++k)
        if (out[k] == out[k - 1] && varOdd(sp, out[k])) return 0;
    return sign;
}

// ---------------------------------------------------------------------------
// FockElement<S>: polynomial in variables with coefficients in S.
// The same container represents single-point elements (point tag 0),
// extended tensors (several point tags), and BV elements (deriv order 0).

template <class S>
class FockElement {
  public:
    using Scalar = S;
    using Coeff = typename S::Coeff;

    FockElement() : sp_(nullptr) {}
    explicit FockElement(const SymplecticSpace* sp) : sp_(sp) {}

    static FockElement vacuum(const SymplecticSpace& sp) {
        FockElement e(&sp);
        e.terms_[Monomial{}] = S::one();
        return e;
    }
    static FockElement generator(const SymplecticSpace& sp, const std::string& name,
                                 unsigned deriv = 0, bool dag = false, unsigned point = 0) {
        FockElement e(&sp);
        e.terms_[Monomial{makeVar(unsigned(sp.indexOf(name)), deriv, dag, point)}] = S::one();
        return e;
    }
    static FockElement monomialElem(const SymplecticSpace& sp, Monomial m, S coeff) {
        FockElement e(&sp);
        if (!coeff.isZero()) e.terms_[std::move(m)] = std::move(coeff);
        return e;
    }

    const SymplecticSpace& space() const {
        if (!sp_) throw FockError("element has no space");
        return *sp_;
    }
    const SymplecticSpace* spacePtr() const { return sp_; }
    const std::map<Monomial, S>& terms() const { return terms_; }
    bool isZero() const { return terms_.empty(); }
    size_t termCount() const { return terms_.size(); }

    void addTerm(const Monomial& m, const S& c) {
        if (c.isZero()) return;
        auto it = terms_.find(m);
        if (it == terms_.end()) {
            terms_[m] = c;
        } else {
            it->second += c;
            if (it->second.isZero()) terms_.erase(it);
        }
    }

    friend FockElement operator+(const FockElement& a, const FockElement& b) {
        a.requireSameSpace(b);
        FockElement r = a;
        for (const auto& [m, c] : b.terms_) r.addTerm(m, c);
        return r;
    }
    friend FockElement operator-(const FockElement& a, const FockElement& b) {
        a.requireSameSpace(b);
        FockElement r = a;
        for (const auto& [m, c] : b.terms_) r.addTerm(m, -c);
        return r;
    }
    FockElement operator-() const {
        FockElement r(sp_);
        for (const auto& [m, c] : terms_) r.terms_[m] = -c;
        return r;
    }
    FockElement scaled(const S& s) const {
        FockElement r(sp_);
        for (const auto& [m, c] : terms_) {
            S v = c * s;
            if (!v.isZero()) r.terms_[m] = v;
        }
        return r;
    }
    FockElement divIntScaled(long long d) const {
        FockElement r(sp_);
        for (const auto& [m, c] : terms_) {
            S v = c.divInt(d);
            if (!v.isZero()) r.terms_[m] = v;
        }
        return r;
    }

    // Graded-commutative (normal-ordered) product.
    friend FockElement operator*(const FockElement& a, const FockElement& b) {
        a.requireSameSpace(b);
        FockElement r(a.sp_);
        Monomial merged;
        for (const auto& [ma, ca] : a.terms_)
            for (const auto& [mb, cb] : b.terms_) {
                int sg = mergeSign(*a.sp_, ma, mb, merged);
                if (sg == 0) continue;
                S v = ca * cb;
                if (sg < 0) v = -v;
                r.addTerm(merged, v);
            }
        return r;
    }

    // Translation operator L_{-1}: derivation with D^k a -> D^{k+1} a.
    FockElement translated(unsigned derivCap = 64) const {
        FockElement r(sp_);
        for (const auto& [m, c] : terms_) {
            for (size_t i = 0; i < m.size(); ++i) {
                if (i + 1 < m.size() && m[i + 1] == m[i]) continue;  // act once per run
                unsigned mult = 1;
                while (i >= mult && m[i - mult] == m[i]) ++mult;
                if (varDeriv(m[i]) + 1 > derivCap)
                    throw FockError("derivative order cap exceeded in translation");
                Monomial nm = m;
                nm[i] = makeVar(varGen(m[i]), varDeriv(m[i]) + 1, varDag(m[i]), varPoint(m[i]));
                std::sort(nm.begin(), nm.end());
                bool bad = false;
                for (size_t k = 1; k < nm.size(); ++k)
                    if (nm[k] == nm[k - 1] && varOdd(*sp_, nm[k])) bad = true;
                if (bad) continue;
                S v = c;
                if (mult > 1) v = v.scaled(CoeffOps<Coeff>::fromInt(mult));
                r.addTerm(nm, v);
            }
        }
        return r;
    }

    // Signed left partial derivative with respect to an exact variable.
    FockElement derivative(Var v) const {
        FockElement r(sp_);
        bool vo = varOdd(*sp_, v);
        for (const auto& [m, c] : terms_) {
            int before = 0;  // odd-parity count of the prefix
            for (size_t i = 0; i < m.size(); ++i) {
                if (m[i] == v) {
                    Monomial nm;
                    nm.reserve(m.size() - 1);
                    nm.insert(nm.end(), m.begin(), m.begin() + long(i));
                    nm.insert(nm.end(), m.begin() + long(i) + 1, m.end());
                    S val = c;
                    if (vo && (before & 1)) val = -val;
                    r.addTerm(nm, val);
                }
                if (varOdd(*sp_, m[i])) ++before;
            }
        }
        return r;
    }

    bool hasPositiveDeriv() const {
        for (const auto& [m, c] : terms_)
            for (Var v : m)
                if (varDeriv(v) > 0) return true;
        return false;
    }

    double maxAbs() const {
        double r = 0;
        for (const auto& [m, c] : terms_) r = std::max(r, c.maxAbs());
        return r;
    }

    friend bool operator==(const FockElement& a, const FockElement& b) {
        FockElement d = a - b;
        return d.terms_.empty();
    }
    friend bool operator!=(const FockElement& a, const FockElement& b) { return !(a == b); }

    std::string str() const {
        if (terms_.empty()) return "0";
        std::ostringstream os;
        bool first = true;
        for (const auto& [m, c] : terms_) {
            if (!first) os << " + ";
            first = false;
            os << "(" << c.str() << ")";
            for (Var v : m) {
                os << "*";
                if (varDeriv(v) > 0) os << "D^" << varDeriv(v) << " ";
                os << sp_->gen(varGen(v)).name;
                if (varDag(v)) os << "!";
                if (varPoint(v) != 0) os << "@" << varPoint(v);
            }
        }
        return os.str();
    }

  private:
    void requireSameSpace(const FockElement& o) const {
        if (sp_ != o.sp_) throw FockError("elements over different spaces");
    }

    const SymplecticSpace* sp_;
    std::map<Monomial, S> terms_;
};

// ---------------------------------------------------------------------------
// Wick engine for the two-point n-th product
//   a_(n) b = Mult∘Res∘( u^n · e^{u⊗∂} e^{u L_-1} e^{coupling·P_sing} ) (a⊗b).
// The coupling carries the simple-pole OPE constant: (i hbar / pi) in the
// numeric instantiation, a unit series in the exact instantiation.

template <class S>
struct WickParams {
    S coupling;
    unsigned derivCap = 8;
};

template <class S>
inline WickParams<S> defaultWickParams();

template <>
inline WickParams<Scalar> defaultWickParams<Scalar>() {
    return {Scalar::monomial(1, cx(0.0, 1.0 / kPi)), 8};
}
template <>
inline WickParams<ExactScalar> defaultWickParams<ExactScalar>() {
    return {ExactScalar::monomial(1, GaussianRational(1)), 8};
}

namespace detail {

template <class C>
C omegaAs(const GaussianRational& w);

template <>
inline cx omegaAs<cx>(const GaussianRational& w) { return w.toComplex(); }
template <>
inline GaussianRational omegaAs<GaussianRational>(const GaussianRational& w) { return w; }

// Laurent-in-u sum of two-point tensor polynomials; jet tracks the residual
// formal-derivative symbol produced by the D-module transfer e^{u⊗∂}.
template <class S>
struct LaurentTensor {
    // key: (u power, jet order)
    std::map<std::pair<int, int>, FockElement<S>> slices;

    void add(int upow, int jet, const FockElement<S>& e) {
        if (e.isZero()) return;
        auto key = std::make_pair(upow, jet);
        auto it = slices.find(key);
        if (it == slices.end()) slices.emplace(key, e);
        else {
            it->second = it->second + e;
            if (it->second.isZero()) slices.erase(it);
        }
    }
};

inline long long factorial(int n) {
    long long r = 1;
    for (int i = 2; i <= n; ++i) r *= i;
    return r;
}

// One application of the singular pairing operator
//   sum_{k,l,p,q} d^k_{z_i} d^l_{z_j} (1/u) omega_{pq} (d/d D^k a^p)_i ⊗ (d/d D^l a^q)_j
// times the coupling; with u = z_i - z_j the function factor is
// (-1)^k (k+l)! u^{-k-l-1}.
template <class S>
LaurentTensor<S> singularContraction(const LaurentTensor<S>& in, const SymplecticSpace& sp,
                                     const WickParams<S>& wp, unsigned ptI, unsigned ptJ) {
    LaurentTensor<S> out;
    using C = typename S::Coeff;
    for (const auto& [key, elem] : in.slices) {
        for (const auto& [mono, coeff] : elem.terms()) {
            // collect candidate variables at each point (plain, no dagger)
            for (size_t xi = 0; xi < mono.size(); ++xi) {
                Var x = mono[xi];
                if (xi > 0 && mono[xi - 1] == x) continue;  // act once per distinct var
                if (varPoint(x) != ptI || varDag(x)) continue;
                for (size_t yj = 0; yj < mono.size(); ++yj) {
                    Var y = mono[yj];
                    if (yj > 0 && mono[yj - 1] == y) continue;
                    if (varPoint(y) != ptJ || varDag(y)) continue;
                    GaussianRational om = sp.omega(varGen(x), varGen(y));
                    if (om.isZero()) continue;
                    int k = int(varDeriv(x)), l = int(varDeriv(y));
                    FockElement<S> t = FockElement<S>::monomialElem(sp, mono, coeff);
                    t = t.derivative(y).derivative(x);
                    if (t.isZero()) continue;
                    long long f = factorial(k + l);
                    if ((k & 1) != 0) f = -f;
                    // adjacency convention for the contracted pair; fixes the
                    // mode-algebra value kappa*omega for odd pairs
                    if (varOdd(sp, x) && varOdd(sp, y)) f = -f;
                    C omc = omegaAs<C>(om);
                    S factor = wp.coupling.scaled(omc * CoeffOps<C>::fromInt(f));
                    out.add(key.first - (k + l + 1), key.second, t.scaled(factor));
                }
            }
        }
    }
    return out;
}

}  // namespace detail

// Result of the general two-point collapse: Fock elements at the merged
// point indexed by the residual jet order.
template <class S>
using JetElement = std::map<int, FockElement<S>>;

// Core collapse: given a, b at one point each and the Laurent coefficients
// of the function factor f = sum_n f_n u^n, produce the pushforward at the
// merged point together with its jet tail.
template <class S>
JetElement<S> wickCollapse(const FockElement<S>& a, const FockElement<S>& b,
                           const std::map<int, S>& fLaurent, const WickParams<S>& wp,
                           int jetCap = 32) {
    const SymplecticSpace& sp = a.space();
    detail::LaurentTensor<S> T;
    // a at point 0, b at point 1
    {
        FockElement<S> tensor(&sp);
        for (const auto& [ma, ca] : a.terms())
            for (const auto& [mb, cb] : b.terms()) {
                Monomial m;
                m.reserve(ma.size() + mb.size());
                for (Var v : ma) m.push_back(varAtPoint(v, 0));
                for (Var v : mb) m.push_back(varAtPoint(v, 1));
                // point-0 vars sort before point-1 vars: already canonical
                tensor.addTerm(m, ca * cb);
            }
        T.add(0, 0, tensor);
    }
    // exp of the singular contraction
    {
        detail::LaurentTensor<S> acc = T, cur = T;
        for (int m = 1;; ++m) {
            detail::LaurentTensor<S> raw = detail::singularContraction(cur, sp, wp, 0, 1);
            if (raw.slices.empty()) break;
            detail::LaurentTensor<S> next;
            for (const auto& [key, e] : raw.slices)
                next.add(key.first, key.second, e.divIntScaled(m));
            cur = next;
            for (const auto& [key, e] : cur.slices) acc.add(key.first, key.second, e);
        }
        T = acc;
    }
    // lowest pole determines how many shift/jet powers can still matter
    int minPow = 0, maxF = 0, minF = 0;
    for (const auto& [key, e] : T.slices) minPow = std::min(minPow, key.first);
    bool fFirst = true;
    for (const auto& [n, c] : fLaurent) {
        if (c.isZero()) continue;
        if (fFirst) { maxF = minF = n; fFirst = false; }
        maxF = std::max(maxF, n);
        minF = std::min(minF, n);
    }
    if (fFirst) return {};
    // After multiplying by f and extracting u^{-1}, a slice at power t with
    // f_n contributes iff t + n + (shift s) + (jet l) = -1.
    int budget = -1 - minPow - minF;  // max total s + l that can contribute
    if (budget < 0) budget = 0;

    // apply e^{u L_-1} on the point-0 part
    {
        detail::LaurentTensor<S> acc = T;
        detail::LaurentTensor<S> cur = T;
        for (int s = 1; s <= budget; ++s) {
            detail::LaurentTensor<S> next;
            for (const auto& [key, e] : cur.slices) {
                FockElement<S> tr = translateAtPoint(e, 0, wp.derivCap);
                if (tr.isZero()) continue;
                next.add(key.first + 1, key.second, tr.divIntScaled(s));
            }
            cur = next;
            if (cur.slices.empty()) break;
            for (const auto& [key, e] : cur.slices) acc.add(key.first, key.second, e);
        }
        T = acc;
    }
    // apply e^{u ⊗ ∂}: raise jet order with u^l / l!
    {
        detail::LaurentTensor<S> acc;
        for (const auto& [key, e] : T.slices) {
            acc.add(key.first, key.second, e);
            S inv = S::one();
            for (int l = 1; l <= budget && l <= jetCap; ++l) {
                inv = inv.divInt(l);
                acc.add(key.first + l, key.second + l, e.scaled(inv));
            }
        }
        T = acc;
    }
    // multiply by f, take the u^{-1} coefficient, merge point 0 into point 1
    JetElement<S> result;
    for (const auto& [key, e] : T.slices) {
        for (const auto& [n, fc] : fLaurent) {
            if (key.first + n != -1) continue;
            FockElement<S> merged = mergePoints(e.scaled(fc));
            if (merged.isZero()) continue;
            auto it = result.find(key.second);
            if (it == result.end()) result[key.second] = merged;
            else {
                it->second = it->second + merged;
                if (it->second.isZero()) result.erase(it);
            }
        }
    }
    return result;
}

// helpers used by wickCollapse (declared after to keep the flow readable)
template <class S>
FockElement<S> translateAtPoint(const FockElement<S>& e, unsigned point, unsigned derivCap) {
    const SymplecticSpace& sp = e.space();
    FockElement<S> r(&sp);
    using C = typename S::Coeff;
    for (const auto& [m, c] : e.terms()) {
        for (size_t i = 0; i < m.size(); ++i) {
            if (i + 1 < m.size() && m[i + 1] == m[i]) continue;
            if (varPoint(m[i]) != point) continue;
            unsigned mult = 1;
            while (i >= mult && m[i - mult] == m[i]) ++mult;
            if (varDeriv(m[i]) + 1 > derivCap)
                throw FockError("derivative order cap exceeded in Taylor shift");
            Monomial nm = m;
            nm[i] = makeVar(varGen(m[i]), varDeriv(m[i]) + 1, varDag(m[i]), point);
            std::sort(nm.begin(), nm.end());
            bool bad = false;
            for (size_t k = 1; k < nm.size(); ++k)
                if (nm[k] == nm[k - 1] && varOdd(sp, nm[k])) bad = true;
            if (bad) continue;
            S v = c;
            if (mult > 1) v = v.scaled(CoeffOps<C>::fromInt(mult));
            r.addTerm(nm, v);
        }
    }
    return r;
}

template <class S>
FockElement<S> mergePoints(const FockElement<S>& e) {
    const SymplecticSpace& sp = e.space();
    FockElement<S> r(&sp);
    for (const auto& [m, c] : e.terms()) {
        Monomial a, b;
        for (Var v : m) {
            if (varPoint(v) == 0) a.push_back(varAtPoint(v, 0));
            else b.push_back(varAtPoint(v, 0));
        }
        Monomial merged;
        int sg = mergeSign(sp, a, b, merged);
        if (sg == 0) continue;
        S v = c;
        if (sg < 0) v = -v;
        r.addTerm(merged, v);
    }
    return r;
}

// ---------------------------------------------------------------------------
// Public operations.

template <class S>
FockElement<S> normalProduct(const FockElement<S>& a, const FockElement<S>& b) {
    return a * b;
}

template <class S>
FockElement<S> translate(const FockElement<S>& a, unsigned derivCap = 8) {
    return a.translated(derivCap);
}

template <class S>
FockElement<S> nthProduct(const FockElement<S>& a, int n, const FockElement<S>& b,
                          const WickParams<S>& wp = defaultWickParams<S>()) {
    if (a.spacePtr() != b.spacePtr()) throw FockError("elements over different spaces");
    std::map<int, S> f;
    f[n] = S::one();
    JetElement<S> res = wickCollapse(a, b, f, wp);
    auto it = res.find(0);
    if (it == res.end()) return FockElement<S>(a.spacePtr());
    return it->second;
}

template <class S>
FockElement<S> derivationAction(const FockElement<S>& a, const FockElement<S>& b,
                                const WickParams<S>& wp = defaultWickParams<S>()) {
    return nthProduct(a, 0, b, wp);
}

}  // namespace ect

#endif
