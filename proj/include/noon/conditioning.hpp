#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "detail/kernel.hpp"
#include "errors.hpp"
#include "gaussian.hpp"

// Heralding on unit-efficiency on/off detectors.  Detector efficiency
// is not a parameter here: model it by applying loss to the detected
// modes before conditioning.  The detected modes are always the
// leading modes of the covariance matrix.

namespace noon {

// Small parameter of the heralding chain: eta * <n> with <n> the OPO
// occupation r^2/(1 - r^2).
inline double herald_lambda(double r, double eta) {
    if (!(r >= 0.0 && r < 1.0)) {
        throw std::invalid_argument("herald_lambda: r must lie in [0, 1)");
    }
    if (eta < 0.0 || eta > 1.0) {
        throw std::invalid_argument("herald_lambda: eta must lie in [0, 1]");
    }
    return eta * r * r / (1.0 - r * r);
}

// Closed-form success probabilities for the first few herald orders,
// as functions of lambda = herald_lambda(r, eta).
inline double closed_form_p1(double lambda) {
    return lambda / (lambda + 1.0);
}

inline double closed_form_p2(double lambda) {
    const double p1 = lambda / (lambda + 1.0);
    return p1 * p1;
}

inline double closed_form_p3(double lambda) {
    return lambda * lambda * lambda * (lambda + 4.0) /
           ((lambda + 2.0) * (lambda + 2.0) * (lambda + 3.0) * (lambda + 6.0));
}

inline double closed_form_p4(double lambda) {
    const double l = lambda;
    return l * l * l * l * (l * l + 6.0 * l + 6.0) /
           ((l + 1.0) * (l + 1.0) * (l + 2.0) * (l + 2.0) *
            (l * l + 8.0 * l + 8.0));
}

// Closed forms for the variant that also watches the reflected ports.
inline double closed_form_p1_plus(double lambda) {
    return 2.0 * lambda / ((lambda + 1.0) * (lambda + 1.0));
}

inline double closed_form_p3_plus(double lambda) {
    const double l = lambda;
    return 2.0 * l * l * l * (3.0 * l + 4.0) /
           ((l + 1.0) * (l + 1.0) * (l + 2.0) * (l + 2.0) * (2.0 * l + 3.0) *
            (5.0 * l + 6.0));
}

// Leading small-lambda behaviour of the success probability: for odd n
// the chain splits both OPO outputs into n beams, for even n into n/2,
// which changes the per-beam amplitude.
inline double small_r_probability(int n, double lambda) {
    if (n < 1) {
        throw std::invalid_argument("small_r_probability: n must be positive");
    }
    const double beams = (n % 2 == 0) ? n : 2 * n;
    double value = 2.0 * detail::factorial(n);
    for (int k = 0; k < n; ++k) {
        value *= lambda / beams;
    }
    return value;
}

namespace detail {

inline HeraldBlocks make_blocks(const CovarianceMatrix& cov, int n_triggers) {
    const int total = cov.modes();
    if (n_triggers < 1 || n_triggers > total) {
        throw std::invalid_argument(
            "conditioning: trigger count must lie in [1, modes]");
    }
    const int t2 = 2 * n_triggers;
    const int s2 = 2 * (total - n_triggers);
    HeraldBlocks b;
    b.v_tt = cov.mat().topLeftCorner(t2, t2);
    b.v_ts = cov.mat().topRightCorner(t2, s2);
    b.v_ss = cov.mat().bottomRightCorner(s2, s2);
    return b;
}

} // namespace detail

// Probability that on/off detectors on the first n_triggers modes all
// click.  Returns exactly 0.0 when the sum is indistinguishable from
// zero at quad precision.
inline double success_probability(const CovarianceMatrix& cov, int n_triggers) {
    const detail::HeraldEvaluation eval =
        detail::evaluate_herald(detail::make_blocks(cov, n_triggers), false, 0,
                                0.0);
    if (eval.zero_probability) {
        return 0.0;
    }
    if (eval.probability < 0.0) {
        throw numeric_degeneracy_error(
            "success_probability: sum evaluated to a negative value");
    }
    return eval.probability;
}

// Heralded state of the trailing modes given that every trigger
// detector clicked: a signed mixture of Gaussian components, one per
// subset of triggers projected onto vacuum.  Keeps the raw covariance
// blocks so fidelity evaluations can rerun the full sum in quad
// precision when needed.
class ConditionalMixture {
public:
    ConditionalMixture(const CovarianceMatrix& cov, int n_triggers)
        : blocks_(detail::make_blocks(cov, n_triggers)),
          n_triggers_(n_triggers),
          n_signals_(cov.modes() - n_triggers) {
        if (n_signals_ < 1) {
            throw std::invalid_argument(
                "ConditionalMixture: no signal modes left after the triggers");
        }
        const detail::HeraldEvaluation eval =
            detail::evaluate_herald(blocks_, false, 0, 0.0);
        if (eval.zero_probability || eval.probability <= 0.0) {
            throw zero_probability_error(
                "ConditionalMixture: herald success probability is "
                "numerically zero");
        }
        probability_ = eval.probability;
    }

    double probability() const { return probability_; }
    int trigger_count() const { return n_triggers_; }
    int signal_modes() const { return n_signals_; }
    const detail::HeraldBlocks& blocks() const { return blocks_; }

    struct Component {
        double weight;
        Eigen::MatrixXd covariance;
    };

    // The signed components, weights normalized to sum to one.  The
    // empty-subset component carries the reduced signal covariance.
    std::vector<Component> components() const {
        const int t = n_triggers_;
        const int s2 = 2 * n_signals_;
        std::vector<Component> out;
        out.reserve(std::size_t(1) << t);
        for (std::uint32_t mask = 0; mask < (std::uint32_t(1) << t); ++mask) {
            std::vector<int> rows;
            for (int j = 0; j < t; ++j) {
                if ((mask >> j) & 1u) {
                    rows.push_back(2 * j);
                    rows.push_back(2 * j + 1);
                }
            }
            Component comp;
            comp.covariance = blocks_.v_ss;
            double sqrt_det = 1.0;
            if (!rows.empty()) {
                const int d = static_cast<int>(rows.size());
                Eigen::MatrixXd a(d, d);
                Eigen::MatrixXd w(d, s2);
                for (int i = 0; i < d; ++i) {
                    for (int j = 0; j < d; ++j) {
                        a(i, j) = blocks_.v_tt(rows[i], rows[j]);
                    }
                    a(i, i) += 1.0;
                    for (int c = 0; c < s2; ++c) {
                        w(i, c) = blocks_.v_ts(rows[i], c);
                    }
                }
                const Eigen::LLT<Eigen::MatrixXd> llt(a);
                if (llt.info() != Eigen::Success) {
                    throw numeric_degeneracy_error(
                        "ConditionalMixture: component factorization failed");
                }
                sqrt_det = llt.matrixLLT().diagonal().prod();
                comp.covariance -= w.transpose() * llt.solve(w);
            }
            const int kbits = static_cast<int>(rows.size()) / 2;
            const double signed_pow = (kbits % 2 == 0)
                                          ? std::ldexp(1.0, kbits)
                                          : -std::ldexp(1.0, kbits);
            comp.weight = signed_pow / sqrt_det / probability_;
            out.push_back(std::move(comp));
        }
        return out;
    }

private:
    detail::HeraldBlocks blocks_;
    int n_triggers_;
    int n_signals_;
    double probability_ = 0.0;
};

inline ConditionalMixture conditional_mixture(const CovarianceMatrix& cov,
                                              int n_triggers) {
    return ConditionalMixture(cov, n_triggers);
}

namespace detail {

// Condition the reflected block (modes [n, 2n)) of a both-arms
// covariance onto vacuum: returns the Schur complement over the
// remaining modes and the vacuum-projection prefactor
// 2^n / sqrt(det(I + V_RR)).
inline std::pair<Eigen::MatrixXd, double> project_reflected_vacuum(
    const CovarianceMatrix& cov, int n_transmitted) {
    const int total = cov.modes();
    if (n_transmitted < 1 || 2 * n_transmitted > total) {
        throw std::invalid_argument(
            "both-arms conditioning: need transmitted and reflected blocks");
    }
    std::vector<int> keep_rows;
    std::vector<int> refl_rows;
    for (int m = 0; m < total; ++m) {
        const bool reflected = (m >= n_transmitted && m < 2 * n_transmitted);
        for (int q = 0; q < 2; ++q) {
            (reflected ? refl_rows : keep_rows).push_back(2 * m + q);
        }
    }

    const auto& v = cov.mat();
    const int nk = static_cast<int>(keep_rows.size());
    const int nr = static_cast<int>(refl_rows.size());
    Eigen::MatrixXd v_kk(nk, nk), v_kr(nk, nr), v_rr(nr, nr);
    for (int i = 0; i < nk; ++i) {
        for (int j = 0; j < nk; ++j) {
            v_kk(i, j) = v(keep_rows[i], keep_rows[j]);
        }
        for (int j = 0; j < nr; ++j) {
            v_kr(i, j) = v(keep_rows[i], refl_rows[j]);
        }
    }
    for (int i = 0; i < nr; ++i) {
        for (int j = 0; j < nr; ++j) {
            v_rr(i, j) = v(refl_rows[i], refl_rows[j]);
        }
    }
    const Eigen::MatrixXd m = v_rr + Eigen::MatrixXd::Identity(nr, nr);
    const Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success) {
        throw numeric_degeneracy_error(
            "both-arms conditioning: I + V_RR is not positive definite");
    }
    const Eigen::MatrixXd v_eff =
        v_kk - v_kr * llt.solve(v_kr.transpose());
    const double sqrt_det = llt.matrixLLT().diagonal().prod();
    const double prefactor = std::ldexp(1.0, n_transmitted) / sqrt_det;
    return {v_eff, prefactor};
}

} // namespace detail

// Success probability of the herald that watches both output ports of
// every polarizing beam splitter.  Expects the mode layout
// [transmitted (n), reflected (n), signals...].  Counts both accepted
// click patterns (all-transmitted and all-reflected), which have equal
// probability.
inline double success_probability_plus(const CovarianceMatrix& cov,
                                       int n_transmitted) {
    const auto [v_eff, prefactor] =
        detail::project_reflected_vacuum(cov, n_transmitted);
    const double p_eff =
        success_probability(CovarianceMatrix(v_eff), n_transmitted);
    return 2.0 * prefactor * p_eff;
}

// Effective covariance over [transmitted (n), signals...] after
// conditioning the reflected modes of a both-arms covariance onto
// vacuum.  Feeding this to conditional_mixture reproduces the state
// heralded by the all-transmitted click pattern; the all-reflected
// pattern gives the same state with theta shifted by pi.
inline CovarianceMatrix conditioned_covariance_plus(const CovarianceMatrix& cov,
                                                    int n_transmitted) {
    return CovarianceMatrix(
        detail::project_reflected_vacuum(cov, n_transmitted).first);
}

} // namespace noon
