// Elliptic-curve numerics for X = C/(Z + tau Z): the odd theta function,
// the Szego-kernel propagator P and its derivatives, diagonal Taylor data
// Q(k,l), Eisenstein series with the weight-2 modular completion, and
// Laurent jets of d^a P along the diagonal.
#ifndef ECTRACE_ELLIPTIC_HPP
#define ECTRACE_ELLIPTIC_HPP

#include <cmath>
#include <complex>
#include <map>
#include <stdexcept>
#include <vector>

#include "ectrace/scalar.hpp"

namespace ect {

struct EllipticError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// zeta(2k) from the Bernoulli table; enough for derivative caps <= 14.
inline double zetaEven(int twoK) {
    switch (twoK) {
        case 2: return kPi * kPi / 6.0;
        case 4: return std::pow(kPi, 4) / 90.0;
        case 6: return std::pow(kPi, 6) / 945.0;
        case 8: return std::pow(kPi, 8) / 9450.0;
        case 10: return std::pow(kPi, 10) / 93555.0;
        case 12: return 691.0 * std::pow(kPi, 12) / 638512875.0;
        case 14: return 2.0 * std::pow(kPi, 14) / 18243225.0;
        case 16: return 3617.0 * std::pow(kPi, 16) / 325641566250.0;
        default: throw EllipticError("zetaEven: weight out of table");
    }
}

// Laurent data of d^a P at the diagonal: coefficients c_{-pole}..c_{order}.
struct LaurentJet {
    int poleOrder = 0;  // leading term at u^{-poleOrder}
    std::vector<cx> coeffs;  // coeffs[i] multiplies u^{i - poleOrder}

    cx coeff(int power) const {
        int idx = power + poleOrder;
        if (idx < 0 || idx >= int(coeffs.size())) return cx(0.0);
        return coeffs[size_t(idx)];
    }
};

class EllipticContext {
  public:
    explicit EllipticContext(cx tau, double tol = 1e-14, int derivCap = 8)
        : tau_(tau), tol_(tol), cap_(derivCap) {
        if (!(tau.imag() > 0)) throw EllipticError("Im(tau) must be positive");
        if (tau.imag() < 0.2)
            throw EllipticError("Im(tau) < 0.2: q-series too poorly conditioned");
        qHalf_ = std::exp(cx(0.0, kPi) * tau_);
        q_ = qHalf_ * qHalf_;
    }

    cx tau() const { return tau_; }
    cx q() const { return q_; }
    double imTau() const { return tau_.imag(); }
    double tol() const { return tol_; }
    int derivCap() const { return cap_; }

    // ---- theta function ----------------------------------------------------
    // theta1(z) = 2 sum_{n>=0} (-1)^n qh^{(n+1/2)^2} sin((2n+1) pi z),
    // derivative variant multiplies each term by ((2n+1) pi i)^a split into
    // sin/cos phases.
    cx theta1(cx z, int deriv = 0) const {
        cx sum(0.0);
        double runningMax = 0.0;
        for (int n = 0;; ++n) {
            double e = (n + 0.5) * (n + 0.5);
            cx amp = std::exp(cx(0.0, kPi) * tau_ * e);
            if (n > 3 && std::abs(amp) * std::pow(kPi * (2 * n + 1), deriv) <
                             tol_ * std::max(runningMax, 1e-300))
                break;
            double m = (2 * n + 1) * kPi;
            cx phase = std::exp(cx(0.0, 1.0) * (m * z));
            cx phaseC = std::exp(cx(0.0, -1.0) * (m * z));
            // d^a/dz^a of sin(mz) = m^a sin(mz + a pi/2) via exp splitting
            cx ipow = std::pow(cx(0.0, 1.0) * m, deriv);
            cx imow = std::pow(cx(0.0, -1.0) * m, deriv);
            cx term = (ipow * phase - imow * phaseC) / cx(0.0, 1.0);
            if (n & 1) term = -term;
            sum += amp * term;
            runningMax = std::max(runningMax, std::abs(amp * term));
            if (n > 60) break;
        }
        return sum;
    }

    // Taylor coefficients theta1^{(j)}(z)/j! for j = 0..order.
    std::vector<cx> thetaTaylor(cx z, int order) const {
        std::vector<cx> c(size_t(order) + 1);
        double fact = 1.0;
        for (int j = 0; j <= order; ++j) {
            if (j > 0) fact *= j;
            c[size_t(j)] = theta1(z, j) / fact;
        }
        return c;
    }

    // L_a(u) = d^a (theta1'/theta1)(u), a = 0..maxA, via power-series division
    // of the shifted Taylor expansions.
    std::vector<cx> logDerivJet(cx u, int maxA) const {
        int ord = maxA + 1;
        std::vector<cx> th = thetaTaylor(u, ord);
        if (std::abs(th[0]) < 1e-180)
            throw EllipticError("logDerivJet: point too close to a theta zero");
        // series of theta'(u+e): b_j = (j+1) th_{j+1}
        std::vector<cx> num(size_t(ord) + 1, cx(0.0)), ratio(size_t(ord) + 1, cx(0.0));
        for (int j = 0; j < ord; ++j) num[size_t(j)] = double(j + 1) * th[size_t(j + 1)];
        // divide num by th (power series division)
        for (int j = 0; j <= ord; ++j) {
            cx acc = (j < int(num.size())) ? num[size_t(j)] : cx(0.0);
            for (int k = 1; k <= j; ++k) acc -= th[size_t(k)] * ratio[size_t(j - k)];
            ratio[size_t(j)] = acc / th[0];
        }
        // d^a L = a! * ratio_a
        std::vector<cx> out(size_t(maxA) + 1);
        double fact = 1.0;
        for (int a = 0; a <= maxA; ++a) {
            if (a > 0) fact *= a;
            out[size_t(a)] = ratio[size_t(a)] * fact;
        }
        return out;
    }

    // ---- propagator ---------------------------------------------------------
    // P(z,w) = (i/pi) d_z log theta1(z-w) - 2 Im(z-w)/Im(tau),
    // propagator(z,w,a,b) = d_z^a d_w^b P(z,w).
    cx propagator(cx z, cx w, int a = 0, int b = 0) const {
        if (a + b > cap_) throw EllipticError("propagator: derivative cap exceeded");
        cx u = z - w;
        if (nearLattice(u))
            throw EllipticError(
                "propagator: diagonal input; use q_coeff / laurent_jet for diagonal data");
        std::vector<cx> L = logDerivJet(u, a + b);
        cx val = cx(0.0, 1.0 / kPi) * L[size_t(a + b)];
        if (b & 1) val = -val;
        // non-holomorphic part -2 Im(u)/Im(tau): only low derivatives survive
        if (a == 0 && b == 0) val += cx(-2.0 * u.imag() / imTau(), 0.0);
        else if (a == 1 && b == 0) val += cx(0.0, 1.0 / imTau());
        else if (a == 0 && b == 1) val += cx(0.0, -1.0 / imTau());
        return val;
    }

    // ---- diagonal data ------------------------------------------------------
    // Q(k,l) = (-1)^{l+1} (i/pi) (k+l)! Gstar_{k+l+1} for k+l odd, else 0,
    // with Gstar_2 the modular-completed weight-2 value.
    cx qCoeff(int k, int l) const {
        if (k < 0 || l < 0) throw EllipticError("qCoeff: negative order");
        if (k + l > 14) throw EllipticError("qCoeff: order outside the zeta table");
        int w = k + l + 1;
        if (w % 2 != 0) return cx(0.0);
        cx g = gStar(w);
        double f = 1.0;
        for (int t = 2; t <= k + l; ++t) f *= t;
        cx val = cx(0.0, 1.0 / kPi) * f * g;
        return ((l & 1) ? 1.0 : -1.0) * val;
    }

    // Laurent jet of d^a P at the diagonal up to u^order.
    LaurentJet laurentJet(int a, int order) const {
        if (a + order > 14) throw EllipticError("laurentJet: order outside the zeta table");
        LaurentJet j;
        j.poleOrder = a + 1;
        j.coeffs.assign(size_t(a + 1 + order + 1), cx(0.0));
        double f = 1.0;
        for (int t = 2; t <= a; ++t) f *= t;
        j.coeffs[0] = cx(0.0, 1.0 / kPi) * f * double((a % 2 == 0) ? 1 : -1);
        for (int r = 0; r <= order; ++r) {
            double rf = 1.0;
            for (int t = 2; t <= r; ++t) rf *= t;
            j.coeffs[size_t(a + 1 + r)] = qCoeff(a + r, 0) / rf;
        }
        return j;
    }

    // ---- Eisenstein series --------------------------------------------------
    // eisenstein(2k): the normalized lattice sum; weight 2 uses the split
    // double sum (n first, then m) and eisensteinHat2() its modular
    // completion E_2 - 3/(pi Im tau).
    cx eisenstein(int weight) const {
        if (weight < 2 || weight % 2 != 0) throw EllipticError("eisenstein: weight must be even >= 2");
        auto it = eisCache_.find(weight);
        if (it != eisCache_.end()) return it->second;
        cx val = latticeSum(weight) / (2.0 * zetaEven(weight));
        eisCache_[weight] = val;
        return val;
    }
    cx eisensteinHat2() const { return eisenstein(2) - 3.0 / (kPi * imTau()); }

    // G_{2k} = 2 zeta(2k) E_{2k}; gStar(2) is the completed
    // Ghat_2 = G_2 - pi/Im(tau) entering every diagonal quantity.
    cx gStar(int weight) const {
        auto it = gTable_.find(weight);
        if (it != gTable_.end()) return it->second;
        cx g = 2.0 * zetaEven(weight) * eisenstein(weight);
        if (weight == 2) g -= kPi / imTau();
        gTable_[weight] = g;
        return g;
    }

    bool nearLattice(cx u, double eps = 1e-9) const {
        // reduce u = x + y tau to the fundamental cell and test distance
        double y = u.imag() / imTau();
        double x = u.real() - y * tau_.real();
        double rx = x - std::round(x), ry = y - std::round(y);
        cx r = cx(rx, 0.0) + cx(ry, 0.0) * tau_;
        return std::abs(r) < eps;
    }

  private:
    static cx invPow(cx a, int w) {
        cx inv = 1.0 / a;
        cx r(1.0);
        for (int t = 0; t < w; ++t) r *= inv;
        return r;
    }

    // sum over the row m: sum_{n in Z} (m tau + n)^{-w}, cutoff |n| <= N,
    // Richardson-extrapolated on the ladder N, 2N, 4N, 8N.
    cx rowSum(double m, int w) const {
        auto partial = [&](long long N) {
            cx x = m * tau_;
            cx s = invPow(x, w);
            for (long long n = 1; n <= N; ++n)
                s += invPow(x + double(n), w) + invPow(x - double(n), w);
            return s;
        };
        const long long N0 = 1024;
        cx s[4];
        for (int i = 0; i < 4; ++i) s[i] = partial(N0 << i);
        // tail is an asymptotic series in 1/N starting at 1/N^{w-1}
        for (int level = 0; level < 3; ++level) {
            double f = std::pow(2.0, w - 1 + level);
            for (int i = 0; i < 3 - level; ++i) s[i] = (f * s[i + 1] - s[i]) / (f - 1.0);
        }
        return s[0];
    }

    // sum'_{(m,n)} (m tau + n)^{-w}: the n-axis term plus all rows m != 0.
    // True rows decay like e^{-2 pi Im(tau) m}; once a row stops decaying it
    // is extrapolation noise and the sum has converged.
    cx latticeSum(int w) const {
        cx total = (w % 2 == 0) ? cx(2.0 * zetaEven(w), 0.0) : cx(0.0);
        double prev = 1e300;
        for (int m = 1; m <= 200; ++m) {
            cx row = rowSum(double(m), w) + rowSum(-double(m), w);
            double mag = std::abs(row);
            if (m >= 3 && mag > 0.5 * prev) break;  // noise floor
            total += row;
            if (mag < 1e-15 * std::max(1.0, std::abs(total))) break;
            prev = mag;
        }
        return total;
    }

    cx tau_, q_, qHalf_;
    double tol_;
    int cap_;
    mutable std::map<int, cx> eisCache_;
    mutable std::map<int, cx> gTable_;
};

}  // namespace ect

#endif
