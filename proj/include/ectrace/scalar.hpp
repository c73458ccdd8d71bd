// Scalar coefficient rings: truncated Laurent series in hbar, over
// complex<double> for numerics or GaussianRational for exact identity tests.
#ifndef ECTRACE_SCALAR_HPP
#define ECTRACE_SCALAR_HPP

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ect {

using cx = std::complex<double>;

inline constexpr double kPi = 3.14159265358979323846264338327950288;

// ---------------------------------------------------------------------------
// Exact rationals (int64 with gcd reduction). Used by the exact scalar mode;
// desk-scale coefficients stay far below overflow.

struct Rational {
    long long num = 0;
    long long den = 1;

    Rational() = default;
    Rational(long long n) : num(n), den(1) {}
    Rational(long long n, long long d) : num(n), den(d) { reduce(); }

    void reduce() {
        if (den == 0) throw std::domain_error("Rational: zero denominator");
        if (den < 0) { num = -num; den = -den; }
        long long g = std::gcd(num < 0 ? -num : num, den);
        if (g > 1) { num /= g; den /= g; }
        if (num == 0) den = 1;
    }
    friend Rational operator+(const Rational& a, const Rational& b) {
        return Rational(a.num * b.den + b.num * a.den, a.den * b.den);
    }
    friend Rational operator-(const Rational& a, const Rational& b) {
        return Rational(a.num * b.den - b.num * a.den, a.den * b.den);
    }
    friend Rational operator*(const Rational& a, const Rational& b) {
        return Rational(a.num * b.num, a.den * b.den);
    }
    friend Rational operator/(const Rational& a, const Rational& b) {
        if (b.num == 0) throw std::domain_error("Rational: division by zero");
        return Rational(a.num * b.den, a.den * b.num);
    }
    Rational operator-() const { return Rational(-num, den); }
    friend bool operator==(const Rational& a, const Rational& b) {
        return a.num == b.num && a.den == b.den;
    }
    friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }
    bool isZero() const { return num == 0; }
    double toDouble() const { return double(num) / double(den); }
};

// Element of Q(i): re + i*im with rational parts.
struct GaussianRational {
    Rational re, im;

    GaussianRational() = default;
    GaussianRational(long long n) : re(n), im(0) {}
    GaussianRational(Rational r) : re(r), im(0) {}
    GaussianRational(Rational r, Rational i) : re(r), im(i) {}

    static GaussianRational i() { return GaussianRational(Rational(0), Rational(1)); }

    friend GaussianRational operator+(const GaussianRational& a, const GaussianRational& b) {
        return {a.re + b.re, a.im + b.im};
    }
    friend GaussianRational operator-(const GaussianRational& a, const GaussianRational& b) {
        return {a.re - b.re, a.im - b.im};
    }
    friend GaussianRational operator*(const GaussianRational& a, const GaussianRational& b) {
        return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
    }
    GaussianRational operator-() const { return {-re, -im}; }
    friend bool operator==(const GaussianRational& a, const GaussianRational& b) {
        return a.re == b.re && a.im == b.im;
    }
    friend bool operator!=(const GaussianRational& a, const GaussianRational& b) { return !(a == b); }
    bool isZero() const { return re.isZero() && im.isZero(); }
    cx toComplex() const { return cx(re.toDouble(), im.toDouble()); }
    friend GaussianRational operator/(const GaussianRational& a, long long d) {
        return {a.re / Rational(d), a.im / Rational(d)};
    }
};

// Coefficient-field glue used by the templated algebra layers.
template <class C>
struct CoeffOps;

template <>
struct CoeffOps<cx> {
    static cx zero() { return cx(0.0, 0.0); }
    static cx one() { return cx(1.0, 0.0); }
    static cx fromInt(long long n) { return cx(double(n), 0.0); }
    static bool isZero(const cx& v) { return v == cx(0.0, 0.0); }
    static cx divInt(const cx& v, long long d) { return v / double(d); }
    static double absValue(const cx& v) { return std::abs(v); }
    static std::string str(const cx& v) {
        std::ostringstream os;
        os.precision(17);
        os << v.real();
        if (v.imag() >= 0) os << "+" << v.imag() << "j";
        else os << "-" << -v.imag() << "j";
        return os.str();
    }
};

template <>
struct CoeffOps<GaussianRational> {
    static GaussianRational zero() { return GaussianRational(); }
    static GaussianRational one() { return GaussianRational(1); }
    static GaussianRational fromInt(long long n) { return GaussianRational(n); }
    static bool isZero(const GaussianRational& v) { return v.isZero(); }
    static GaussianRational divInt(const GaussianRational& v, long long d) { return v / d; }
    static double absValue(const GaussianRational& v) { return std::abs(v.toComplex()); }
    static std::string str(const GaussianRational& v) {
        std::ostringstream os;
        os << v.re.num;
        if (v.re.den != 1) os << "/" << v.re.den;
        os << (v.im.num < 0 ? "-" : "+") << (v.im.num < 0 ? -v.im.num : v.im.num);
        if (v.im.den != 1) os << "/" << v.im.den;
        os << "j";
        return os.str();
    }
};

// ---------------------------------------------------------------------------
// HbarSeries<C>: Laurent polynomial in hbar restricted to a window [lo, hi].
// Arithmetic clips to the window and raises `overflow` whenever a nonzero
// coefficient is dropped.

template <class C>
class HbarSeries {
  public:
    using Coeff = C;
    static constexpr int kDefaultLo = -4;
    static constexpr int kDefaultHi = 4;

    HbarSeries() : lo_(kDefaultLo), hi_(kDefaultHi), c_(size_t(hi_ - lo_ + 1), CoeffOps<C>::zero()) {}
    HbarSeries(int lo, int hi) : lo_(lo), hi_(hi) {
        if (hi_ < lo_) throw std::invalid_argument("HbarSeries: bad window");
        c_.assign(size_t(hi_ - lo_ + 1), CoeffOps<C>::zero());
    }

    static HbarSeries zero(int lo = kDefaultLo, int hi = kDefaultHi) { return HbarSeries(lo, hi); }
    static HbarSeries constant(const C& v, int lo = kDefaultLo, int hi = kDefaultHi) {
        return monomial(0, v, lo, hi);
    }
    static HbarSeries one(int lo = kDefaultLo, int hi = kDefaultHi) {
        return constant(CoeffOps<C>::one(), lo, hi);
    }
    static HbarSeries monomial(int power, const C& v, int lo = kDefaultLo, int hi = kDefaultHi) {
        HbarSeries s(lo, hi);
        if (power < lo || power > hi) {
            if (!CoeffOps<C>::isZero(v)) s.overflow_ = true;
        } else {
            s.c_[size_t(power - lo)] = v;
        }
        return s;
    }

    int lo() const { return lo_; }
    int hi() const { return hi_; }
    bool overflow() const { return overflow_; }
    void clearOverflow() { overflow_ = false; }

    const C& coeff(int power) const {
        static const C z = CoeffOps<C>::zero();
        if (power < lo_ || power > hi_) return z;
        return c_[size_t(power - lo_)];
    }
    void setCoeff(int power, const C& v) {
        if (power < lo_ || power > hi_) {
            if (!CoeffOps<C>::isZero(v)) overflow_ = true;
            return;
        }
        c_[size_t(power - lo_)] = v;
    }

    bool isZero() const {
        for (const C& v : c_)
            if (!CoeffOps<C>::isZero(v)) return false;
        return true;
    }

    friend HbarSeries operator+(const HbarSeries& a, const HbarSeries& b) {
        HbarSeries r(std::min(a.lo_, b.lo_), std::max(a.hi_, b.hi_));
        r.overflow_ = a.overflow_ || b.overflow_;
        for (int p = r.lo_; p <= r.hi_; ++p) r.setCoeff(p, a.coeff(p) + b.coeff(p));
        return r;
    }
    friend HbarSeries operator-(const HbarSeries& a, const HbarSeries& b) {
        HbarSeries r(std::min(a.lo_, b.lo_), std::max(a.hi_, b.hi_));
        r.overflow_ = a.overflow_ || b.overflow_;
        for (int p = r.lo_; p <= r.hi_; ++p) r.setCoeff(p, a.coeff(p) - b.coeff(p));
        return r;
    }
    HbarSeries operator-() const {
        HbarSeries r(lo_, hi_);
        r.overflow_ = overflow_;
        for (int p = lo_; p <= hi_; ++p) r.setCoeff(p, -coeff(p));
        return r;
    }
    friend HbarSeries operator*(const HbarSeries& a, const HbarSeries& b) {
        HbarSeries r(std::min(a.lo_, b.lo_), std::max(a.hi_, b.hi_));
        r.overflow_ = a.overflow_ || b.overflow_;
        for (int p = a.lo_; p <= a.hi_; ++p) {
            if (CoeffOps<C>::isZero(a.coeff(p))) continue;
            for (int q = b.lo_; q <= b.hi_; ++q) {
                if (CoeffOps<C>::isZero(b.coeff(q))) continue;
                C prod = a.coeff(p) * b.coeff(q);
                int t = p + q;
                if (t < r.lo_ || t > r.hi_) {
                    if (!CoeffOps<C>::isZero(prod)) r.overflow_ = true;
                } else {
                    r.setCoeff(t, r.coeff(t) + prod);
                }
            }
        }
        return r;
    }
    HbarSeries& operator+=(const HbarSeries& o) { *this = *this + o; return *this; }
    HbarSeries& operator-=(const HbarSeries& o) { *this = *this - o; return *this; }
    HbarSeries& operator*=(const HbarSeries& o) { *this = *this * o; return *this; }

    HbarSeries scaled(const C& v) const {
        HbarSeries r(lo_, hi_);
        r.overflow_ = overflow_;
        for (int p = lo_; p <= hi_; ++p) r.setCoeff(p, coeff(p) * v);
        return r;
    }
    HbarSeries divInt(long long d) const {
        HbarSeries r(lo_, hi_);
        r.overflow_ = overflow_;
        for (int p = lo_; p <= hi_; ++p) r.setCoeff(p, CoeffOps<C>::divInt(coeff(p), d));
        return r;
    }
    // Multiplication by hbar^k.
    HbarSeries shifted(int k) const {
        HbarSeries r(lo_, hi_);
        r.overflow_ = overflow_;
        for (int p = lo_; p <= hi_; ++p) {
            const C& v = coeff(p);
            if (CoeffOps<C>::isZero(v)) continue;
            if (p + k < lo_ || p + k > hi_) r.overflow_ = true;
            else r.setCoeff(p + k, v);
        }
        return r;
    }

    friend bool operator==(const HbarSeries& a, const HbarSeries& b) {
        int lo = std::min(a.lo_, b.lo_), hi = std::max(a.hi_, b.hi_);
        for (int p = lo; p <= hi; ++p)
            if (!(a.coeff(p) == b.coeff(p))) return false;
        return true;
    }
    friend bool operator!=(const HbarSeries& a, const HbarSeries& b) { return !(a == b); }

    double maxAbs() const {
        double m = 0.0;
        for (int p = lo_; p <= hi_; ++p) m = std::max(m, CoeffOps<C>::absValue(coeff(p)));
        return m;
    }

    std::string str() const {
        std::ostringstream os;
        bool first = true;
        for (int p = lo_; p <= hi_; ++p) {
            if (CoeffOps<C>::isZero(coeff(p))) continue;
            if (!first) os << " + ";
            os << "(" << CoeffOps<C>::str(coeff(p)) << ")";
            if (p != 0) os << "*hbar^" << p;
            first = false;
        }
        if (first) os << "0";
        return os.str();
    }
    friend std::ostream& operator<<(std::ostream& os, const HbarSeries& s) { return os << s.str(); }

  private:
    int lo_, hi_;
    std::vector<C> c_;
    bool overflow_ = false;
};

using Scalar = HbarSeries<cx>;            // numeric scalar of the engine
using ExactScalar = HbarSeries<GaussianRational>;  // exact mode for identity tests

} // namespace ect

#endif
