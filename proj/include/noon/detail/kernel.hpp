#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "../errors.hpp"
#include "quad.hpp"

// Alternating-sign kernel behind on/off heralding on Gaussian states.
//
// For trigger modes t and signal modes s of a covariance matrix V, the
// probability that every trigger detector clicks is an inclusion and
// exclusion sum over subsets S of triggers forced to see vacuum,
//   P = sum_S w_S,   w_S = (-2)^|S| / sqrt(det(I_S + V_SS)),
// and the heralded signal state is the signed Gaussian mixture with
// component covariances given by the Schur complements
//   U_S = V_ss - V_ts|_S^T (V_SS + I)^{-1} V_ts|_S.
//
// The summands are O(1) while P itself scales like the detector
// efficiency to the number of triggers, so for weak heralds the sum
// cancels catastrophically in double precision.  Every routine here is
// templated on the scalar so the public wrappers can rerun it in
// __float128 when the double-precision result is mostly cancellation
// noise.

namespace noon::detail {

// Dense column-major matrix over a generic scalar, sized at runtime.
// Just the handful of operations the kernel needs; inputs never exceed
// a few dozen rows.
template <class Real>
class rmat {
public:
    rmat() : rows_(0), cols_(0) {}
    rmat(int rows, int cols)
        : rows_(rows), cols_(cols),
          a_(static_cast<std::size_t>(rows) * cols, Real(0)) {}

    static rmat from(const Eigen::MatrixXd& m) {
        rmat out(static_cast<int>(m.rows()), static_cast<int>(m.cols()));
        for (int j = 0; j < out.cols_; ++j) {
            for (int i = 0; i < out.rows_; ++i) {
                out(i, j) = Real(m(i, j));
            }
        }
        return out;
    }

    int rows() const { return rows_; }
    int cols() const { return cols_; }

    Real& operator()(int i, int j) {
        return a_[static_cast<std::size_t>(j) * rows_ + i];
    }
    Real operator()(int i, int j) const {
        return a_[static_cast<std::size_t>(j) * rows_ + i];
    }

private:
    int rows_;
    int cols_;
    std::vector<Real> a_;
};

// In-place lower Cholesky factorization of a symmetric positive
// definite matrix (the strict upper triangle is ignored and left
// stale).  Returns false on a non-positive pivot.
template <class Real>
bool cholesky_in_place(rmat<Real>& m) {
    const int n = m.rows();
    for (int j = 0; j < n; ++j) {
        Real s = m(j, j);
        for (int k = 0; k < j; ++k) {
            s -= m(j, k) * m(j, k);
        }
        if (!(s > Real(0))) {
            return false;
        }
        const Real d = num<Real>::sqrt(s);
        m(j, j) = d;
        for (int i = j + 1; i < n; ++i) {
            Real t = m(i, j);
            for (int k = 0; k < j; ++k) {
                t -= m(i, k) * m(j, k);
            }
            m(i, j) = t / d;
        }
    }
    return true;
}

template <class Real>
Real chol_sqrt_det(const rmat<Real>& l) {
    Real p(1);
    for (int j = 0; j < l.rows(); ++j) {
        p = p * l(j, j);
    }
    return p;
}

// Solve (L L^T) X = B in place, given the Cholesky factor L.
template <class Real>
void chol_solve_in_place(const rmat<Real>& l, rmat<Real>& b) {
    const int n = l.rows();
    for (int c = 0; c < b.cols(); ++c) {
        for (int i = 0; i < n; ++i) {
            Real s = b(i, c);
            for (int k = 0; k < i; ++k) {
                s -= l(i, k) * b(k, c);
            }
            b(i, c) = s / l(i, i);
        }
        for (int i = n - 1; i >= 0; --i) {
            Real s = b(i, c);
            for (int k = i + 1; k < n; ++k) {
                s -= l(k, i) * b(k, c);
            }
            b(i, c) = s / l(i, i);
        }
    }
}

inline double factorial(int n) {
    double f = 1.0;
    for (int k = 2; k <= n; ++k) {
        f *= k;
    }
    return f;
}

inline double binomial(int n, int k) {
    if (k < 0 || k > n) {
        return 0.0;
    }
    double b = 1.0;
    for (int i = 1; i <= k; ++i) {
        b = b * (n - k + i) / i;
    }
    return b;
}

// (2j - 1)!! with the usual convention (-1)!! = 1.
inline double odd_double_factorial(int k) {
    double f = 1.0;
    for (int i = k; i >= 1; i -= 2) {
        f *= i;
    }
    return f;
}

// Wick expectation E[u^k w^k] for zero-mean jointly Gaussian complex
// combinations (u, w) with alpha = E[u^2], beta = E[w^2], gamma =
// E[u w]: split the k u-factors into 2j self-paired ones and k-2j
// cross-paired ones, and likewise for w.
template <class Real>
cplx<Real> paired_moment(int k, cplx<Real> alpha, cplx<Real> beta,
                         cplx<Real> gamma) {
    cplx<Real> total;
    for (int j = 0; 2 * j <= k; ++j) {
        const double ways = binomial(k, 2 * j) * odd_double_factorial(2 * j - 1);
        const double coeff = ways * ways * factorial(k - 2 * j);
        total += Real(coeff) * (pow_int<Real>(alpha, j) * pow_int<Real>(beta, j) *
                                pow_int<Real>(gamma, k - 2 * j));
    }
    return total;
}

// Same sum with every factor replaced by its modulus: an upper bound
// on the term magnitudes inside paired_moment, used to detect internal
// cancellation.
template <class Real>
Real paired_moment_bound(int k, Real alpha, Real beta, Real gamma) {
    Real total(0);
    for (int j = 0; 2 * j <= k; ++j) {
        const double ways = binomial(k, 2 * j) * odd_double_factorial(2 * j - 1);
        const double coeff = ways * ways * factorial(k - 2 * j);
        total += Real(coeff) * pow_int<Real>(alpha, j) * pow_int<Real>(beta, j) *
                 pow_int<Real>(gamma, k - 2 * j);
    }
    return total;
}

template <class Real>
struct overlap_terms {
    Real value{};
    Real magnitude{};
};

// Wigner overlap of the two-mode state (|n,0> + e^{i phi}|0,n>)/sqrt(2)
// with the zero-mean Gaussian state of covariance u, stripped of the
// global 1/(2 pi^2) prefactor:
//   value = [(-1)^n (E_1 + E_2) + 2 Re(e^{-i phi} (2^n/n!) E_x)]
//           / sqrt(det(I + u)),
// where E_i = E[L_n(2(x_i^2 + p_i^2))] and E_x = E[(w_1 u_2)^n] with
// w_1 = x_1 - i p_1, u_2 = x_2 + i p_2, all moments taken under the
// Gaussian with covariance Sigma = (I + U)^{-1} U / 2.  The returned
// magnitude accumulates the moduli of all contributing terms so
// callers can judge how much cancellation occurred.
template <class Real>
overlap_terms<Real> noon_overlap_reduced(const rmat<Real>& u, int n, Real phi) {
    if (u.rows() != 4 || u.cols() != 4) {
        throw std::invalid_argument(
            "noon_overlap_reduced: covariance must describe two modes");
    }
    rmat<Real> m = u;
    for (int i = 0; i < 4; ++i) {
        m(i, i) += Real(1);
    }
    if (!cholesky_in_place(m)) {
        throw numeric_degeneracy_error(
            "noon overlap: I + U is not positive definite");
    }
    const Real sqrt_det = chol_sqrt_det(m);
    rmat<Real> x = u;
    chol_solve_in_place(m, x);

    // Sigma = (I + U)^{-1} U / 2, symmetrized.
    Real sig[4][4];
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            sig[i][j] = (x(i, j) + x(j, i)) / Real(4);
        }
    }

    const cplx<Real> a1(sig[0][0] - sig[1][1], Real(2) * sig[0][1]);
    const cplx<Real> g1(sig[0][0] + sig[1][1]);
    const cplx<Real> a2(sig[2][2] - sig[3][3], Real(2) * sig[2][3]);
    const cplx<Real> g2(sig[2][2] + sig[3][3]);
    const cplx<Real> gx(sig[0][2] + sig[1][3], sig[0][3] - sig[1][2]);

    cplx<Real> e1, e2;
    Real bound(0);
    for (int k = 0; k <= n; ++k) {
        double c = binomial(n, k) / factorial(k);
        for (int i = 0; i < k; ++i) {
            c *= -2.0;
        }
        e1 += Real(c) * paired_moment(k, a1, conj(a1), g1);
        e2 += Real(c) * paired_moment(k, a2, conj(a2), g2);
        const Real ac = num<Real>::abs(Real(c));
        bound += ac * paired_moment_bound(k, abs(a1), abs(a1), abs(g1));
        bound += ac * paired_moment_bound(k, abs(a2), abs(a2), abs(g2));
    }
    const cplx<Real> ex = paired_moment(n, conj(a1), a2, gx);

    const Real sign = (n % 2 == 0) ? Real(1) : Real(-1);
    const Real cross_coeff = Real(std::ldexp(1.0, n) / factorial(n));
    const cplx<Real> phase(num<Real>::cos(phi), -num<Real>::sin(phi));
    const cplx<Real> rotated = phase * ex;

    overlap_terms<Real> out;
    out.value = (sign * (e1.re + e2.re) + Real(2) * cross_coeff * rotated.re) /
                sqrt_det;
    bound += Real(2) * cross_coeff *
             paired_moment_bound(n, abs(a1), abs(a2), abs(gx));
    out.magnitude = bound / sqrt_det;
    return out;
}

// Covariance blocks of a herald configuration, detected modes first.
struct HeraldBlocks {
    Eigen::MatrixXd v_tt;
    Eigen::MatrixXd v_ts;
    Eigen::MatrixXd v_ss;
};

template <class Real>
struct HeraldAccum {
    Real p_sum{};
    Real p_abs{};
    Real f_sum{};
    Real f_abs{};
};

// One pass over all trigger subsets, accumulating the probability sum
// and, when requested, the NOON fidelity numerator
//   sum_S w_S * noon_overlap_reduced(U_S, n, phi)
// together with magnitude totals for cancellation detection.
template <class Real>
HeraldAccum<Real> accumulate_herald(const HeraldBlocks& b, bool with_overlap,
                                    int noon_n, double phi) {
    const int t = static_cast<int>(b.v_tt.rows()) / 2;
    const int s2 = static_cast<int>(b.v_ss.rows());
    if (t < 1 || t > 16) {
        throw std::invalid_argument(
            "herald sum: trigger count must lie in [1, 16]");
    }
    if (with_overlap && s2 != 4) {
        throw std::invalid_argument(
            "herald sum: NOON overlap needs exactly two signal modes");
    }

    HeraldAccum<Real> acc;
    const Real phi_r = Real(phi);
    const rmat<Real> v_ss = rmat<Real>::from(b.v_ss);
    std::vector<int> rows;
    rows.reserve(2 * t);

    for (std::uint32_t mask = 0; mask < (std::uint32_t(1) << t); ++mask) {
        rows.clear();
        for (int j = 0; j < t; ++j) {
            if ((mask >> j) & 1u) {
                rows.push_back(2 * j);
                rows.push_back(2 * j + 1);
            }
        }
        const int kbits = static_cast<int>(rows.size()) / 2;

        Real sqrt_det(1);
        rmat<Real> u = v_ss;
        if (!rows.empty()) {
            const int d = static_cast<int>(rows.size());
            rmat<Real> a(d, d);
            for (int i = 0; i < d; ++i) {
                for (int j = 0; j < d; ++j) {
                    a(i, j) = Real(b.v_tt(rows[i], rows[j]));
                }
                a(i, i) += Real(1);
            }
            if (!cholesky_in_place(a)) {
                throw numeric_degeneracy_error(
                    "herald sum: I + V_tt subset block is not positive definite");
            }
            sqrt_det = chol_sqrt_det(a);
            if (with_overlap) {
                rmat<Real> w(d, s2);
                for (int i = 0; i < d; ++i) {
                    for (int c = 0; c < s2; ++c) {
                        w(i, c) = Real(b.v_ts(rows[i], c));
                    }
                }
                rmat<Real> solved = w;
                chol_solve_in_place(a, solved);
                for (int i = 0; i < s2; ++i) {
                    for (int j = 0; j < s2; ++j) {
                        Real dot(0);
                        for (int k = 0; k < d; ++k) {
                            dot += w(k, i) * solved(k, j);
                        }
                        u(i, j) -= dot;
                    }
                }
            }
        }

        const double signed_pow = (kbits % 2 == 0) ? std::ldexp(1.0, kbits)
                                                   : -std::ldexp(1.0, kbits);
        const Real weight = Real(signed_pow) / sqrt_det;
        acc.p_sum += weight;
        acc.p_abs += num<Real>::abs(weight);
        if (with_overlap) {
            const overlap_terms<Real> g = noon_overlap_reduced(u, noon_n, phi_r);
            acc.f_sum += weight * g.value;
            acc.f_abs += num<Real>::abs(weight) * g.magnitude;
        }
    }
    return acc;
}

// Relative size below which an alternating sum counts as cancellation
// dominated and is rerun in quad precision.
inline constexpr double cancellation_threshold = 1e-4;

// Relative size (against the magnitude sum) below which a result is
// indistinguishable from zero even in quad precision.
inline constexpr double herald_zero_threshold = 1e-28;

struct HeraldEvaluation {
    double probability = 0.0;
    double probability_scale = 0.0;
    double fidelity = std::numeric_limits<double>::quiet_NaN();
    bool escalated = false;
    bool zero_probability = false;
};

inline HeraldEvaluation evaluate_herald(const HeraldBlocks& b, bool with_overlap,
                                        int noon_n, double phi) {
    HeraldEvaluation out;
    const HeraldAccum<double> d = accumulate_herald<double>(b, with_overlap,
                                                            noon_n, phi);
    const bool p_shaky = std::abs(d.p_sum) < cancellation_threshold * d.p_abs;
    const bool f_shaky =
        with_overlap && std::abs(d.f_sum) < cancellation_threshold * d.f_abs;
    if (!p_shaky && !f_shaky) {
        out.probability = d.p_sum;
        out.probability_scale = d.p_abs;
        if (with_overlap) {
            out.fidelity = 2.0 * d.f_sum / d.p_sum;
        }
        return out;
    }

    out.escalated = true;
    const HeraldAccum<f128> q = accumulate_herald<f128>(b, with_overlap,
                                                        noon_n, phi);
    out.probability = static_cast<double>(q.p_sum);
    out.probability_scale = static_cast<double>(q.p_abs);
    if (num<f128>::abs(q.p_sum) <= f128(herald_zero_threshold) * q.p_abs) {
        out.zero_probability = true;
        out.probability = 0.0;
        return out;
    }
    if (with_overlap) {
        out.fidelity = static_cast<double>(f128(2) * q.f_sum / q.p_sum);
    }
    return out;
}

} // namespace noon::detail
