#pragma once

#include <cmath>
#include <complex>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "gaussian.hpp"

// Pulsed heralding chain: two type-II OPOs feed a splitting tree whose
// n output beams each end on a polarizing beam splitter rotated by 45
// degrees with a trigger detector behind it.  One OPO contributes the
// two signal modes, the orthogonally polarized pair forms the trigger
// beams.
//
// Mode layouts of the covariance matrices produced here:
//   transmitted_only: [t_1 .. t_n, signal_a, signal_b]
//   reflected:        [r_1 .. r_n, signal_a, signal_b]   (odd n)
//   both_arms:        [t_1 .. t_n, r_1 .. r_n, signal_a, signal_b]
//                                                        (odd n)
// For even n the reflected ports already serve as triggers, so only
// transmitted_only applies.

namespace noon {

enum class Variant {
    transmitted_only,
    reflected,
    both_arms,
};

inline std::string variant_name(Variant v) {
    switch (v) {
        case Variant::transmitted_only:
            return "transmitted_only";
        case Variant::reflected:
            return "reflected";
        case Variant::both_arms:
            return "both_arms";
    }
    throw std::invalid_argument("variant_name: unknown variant");
}

struct ProtocolParams {
    int n = 3;                 // herald order, also the NOON photon number
    double r = 0.1;            // OPO squeezing amplitude, in [0, 1)
    double eta = 1.0;          // trigger-path efficiency
    double signal_loss = 0.0;  // loss applied to each signal mode
    double theta = 0.0;        // pump phase of the second OPO
    Variant variant = Variant::transmitted_only;
};

inline void validate_params(const ProtocolParams& p) {
    if (p.n < 1 || p.n > 8) {
        throw std::invalid_argument("protocol: n must lie in [1, 8]");
    }
    if (!(p.r >= 0.0 && p.r < 1.0)) {
        throw std::invalid_argument("protocol: r must lie in [0, 1)");
    }
    if (p.eta < 0.0 || p.eta > 1.0) {
        throw std::invalid_argument("protocol: eta must lie in [0, 1]");
    }
    if (p.signal_loss < 0.0 || p.signal_loss > 1.0) {
        throw std::invalid_argument("protocol: signal_loss must lie in [0, 1]");
    }
    if (!std::isfinite(p.theta)) {
        throw std::invalid_argument("protocol: theta must be finite");
    }
    if (p.variant != Variant::transmitted_only && p.n % 2 == 0) {
        throw std::invalid_argument(
            "protocol: reflected and both_arms variants require odd n");
    }
}

// Joint state of the two OPOs before any linear optics: two two-mode
// squeezed vacua, modes ordered [a_plus, a_minus, b_plus, b_minus].
// The pump phase of OPO b is carried by the trigger-path phase
// shifters, so this state does not depend on theta.
inline CovarianceMatrix initial_covariance(double r) {
    if (!(r >= 0.0 && r < 1.0)) {
        throw std::invalid_argument("initial_covariance: r must lie in [0, 1)");
    }
    const double nbar = r * r / (1.0 - r * r);
    const double cross = r / (1.0 - r * r);
    ModeMoments m;
    m.a = Eigen::MatrixXcd::Zero(4, 4);
    m.b = Eigen::MatrixXcd::Zero(4, 4);
    for (int k = 0; k < 4; ++k) {
        m.a(k, k) = nbar;
    }
    m.b(0, 1) = cross;
    m.b(1, 0) = cross;
    m.b(2, 3) = cross;
    m.b(3, 2) = cross;
    return moments_to_covariance(m);
}

namespace detail {

struct chain_scales {
    double nbar;
    double a_norm;  // scale of the trigger <c^dag c> block
    double amp;     // trigger-signal <c c> amplitude
};

inline chain_scales scales_for(const ProtocolParams& p) {
    chain_scales s;
    s.nbar = p.r * p.r / (1.0 - p.r * p.r);
    const double lambda = p.eta * s.nbar;
    const double cross = p.r / (1.0 - p.r * p.r);
    const double beams = (p.n % 2 == 0) ? p.n : 2.0 * p.n;
    s.a_norm = lambda / beams;
    s.amp = std::sqrt(p.eta / beams) * cross;
    return s;
}

inline CovarianceMatrix finish_with_signal_loss(CovarianceMatrix cov,
                                                const ProtocolParams& p,
                                                int signal_a, int signal_b) {
    const double eta_s = 1.0 - p.signal_loss;
    if (eta_s < 1.0) {
        cov = apply_loss(cov, signal_a, eta_s);
        cov = apply_loss(cov, signal_b, eta_s);
    }
    return cov;
}

} // namespace detail

// Covariance matrix of the trigger and signal modes from the mode
// decomposition of the chain.  Trigger beam k (counted from 1) sees
// the combination (a_minus - e^{i alpha_k} b_plus) scaled by the tree,
// with alpha_k = 2 pi k / n + theta, and the reflected port carries
// the orthogonal combination with + instead of -.
inline CovarianceMatrix analytic_covariance(const ProtocolParams& p) {
    validate_params(p);
    const detail::chain_scales s = detail::scales_for(p);
    const int n = p.n;
    const bool with_both = (p.variant == Variant::both_arms);
    const bool reflected = (p.variant == Variant::reflected);
    const int n_triggers = with_both ? 2 * n : n;
    const int total = n_triggers + 2;
    const int sig_a = n_triggers;
    const int sig_b = n_triggers + 1;

    ModeMoments m;
    m.a = Eigen::MatrixXcd::Zero(total, total);
    m.b = Eigen::MatrixXcd::Zero(total, total);

    const auto beam_phase = [&](int k) {
        return std::polar(1.0, 2.0 * M_PI * k / n + p.theta);
    };
    const auto ring = [&](int j, int k) {
        return std::polar(1.0, 2.0 * M_PI * (k - j) / n);
    };

    for (int j = 1; j <= n; ++j) {
        for (int k = 1; k <= n; ++k) {
            const std::complex<double> same = (1.0 + ring(j, k)) * s.a_norm;
            m.a(j - 1, k - 1) = same;
            if (with_both) {
                m.a(n + j - 1, n + k - 1) = same;
                m.a(j - 1, n + k - 1) = (1.0 - ring(j, k)) * s.a_norm;
                m.a(n + j - 1, k - 1) = std::conj((1.0 - ring(k, j)) * s.a_norm);
            }
        }
    }
    m.a(sig_a, sig_a) = s.nbar;
    m.a(sig_b, sig_b) = s.nbar;

    for (int k = 1; k <= n; ++k) {
        const std::complex<double> to_b = s.amp * beam_phase(k);
        const double transmitted_sign = reflected ? 1.0 : -1.0;
        m.b(k - 1, sig_a) = s.amp;
        m.b(sig_a, k - 1) = s.amp;
        m.b(k - 1, sig_b) = transmitted_sign * to_b;
        m.b(sig_b, k - 1) = transmitted_sign * to_b;
        if (with_both) {
            m.b(n + k - 1, sig_a) = s.amp;
            m.b(sig_a, n + k - 1) = s.amp;
            m.b(n + k - 1, sig_b) = to_b;
            m.b(sig_b, n + k - 1) = to_b;
        }
    }

    return detail::finish_with_signal_loss(moments_to_covariance(m), p, sig_a,
                                           sig_b);
}

// State heralded by the reflected ports of an odd-n chain; identical
// to the transmitted-port state with theta shifted by pi.
inline CovarianceMatrix reflected_covariance(const ProtocolParams& p) {
    ProtocolParams q = p;
    q.variant = Variant::reflected;
    return analytic_covariance(q);
}

// Same physics as analytic_covariance for n = 3, but built by chaining
// the elementary transformations: a three-way splitting tree on each
// trigger polarization, a phase shifter per beam, a rotated polarizing
// beam splitter per beam, loss, and a final partial trace.
inline CovarianceMatrix circuit_covariance(const ProtocolParams& p) {
    validate_params(p);
    if (p.n != 3) {
        throw std::invalid_argument("circuit_covariance: implemented for n = 3");
    }

    // Modes: [0] a_plus, [1] a_minus, [2] b_plus, [3] b_minus,
    // [4][5] tree ancillas for a_minus, [6][7] tree ancillas for b_plus.
    const int nm = 8;
    Eigen::MatrixXd v = Eigen::MatrixXd::Identity(2 * nm, 2 * nm);
    v.topLeftCorner(8, 8) = initial_covariance(p.r).mat();
    CovarianceMatrix cov(v);

    const auto split_three = [&](CovarianceMatrix c, int src, int anc1,
                                 int anc2) {
        c = apply_symplectic(c, beam_splitter(nm, 1.0 / 3.0, src, anc1));
        c = apply_symplectic(c, beam_splitter(nm, 1.0 / 2.0, src, anc2));
        c = apply_symplectic(c, phase_shifter(nm, M_PI, anc1));
        c = apply_symplectic(c, phase_shifter(nm, M_PI, anc2));
        return c;
    };
    cov = split_three(cov, 1, 4, 5);
    cov = split_three(cov, 2, 6, 7);

    const int h_slot[3] = {1, 4, 5};
    const int v_slot[3] = {2, 6, 7};
    for (int k = 1; k <= 3; ++k) {
        const double alpha = 2.0 * M_PI * k / 3.0 + p.theta;
        cov = apply_symplectic(cov, phase_shifter(nm, alpha, v_slot[k - 1]));
        cov = apply_symplectic(cov, pbs45(nm, h_slot[k - 1], v_slot[k - 1]));
    }

    for (int k = 0; k < 3; ++k) {
        cov = apply_loss(cov, h_slot[k], p.eta);
        cov = apply_loss(cov, v_slot[k], p.eta);
    }

    std::vector<int> keep;
    switch (p.variant) {
        case Variant::transmitted_only:
            keep = {1, 4, 5, 0, 3};
            break;
        case Variant::reflected:
            keep = {2, 6, 7, 0, 3};
            break;
        case Variant::both_arms:
            keep = {1, 4, 5, 2, 6, 7, 0, 3};
            break;
    }
    cov = partial_trace(cov, keep);

    const int n_triggers = (p.variant == Variant::both_arms) ? 6 : 3;
    return detail::finish_with_signal_loss(cov, p, n_triggers, n_triggers + 1);
}

} // namespace noon
