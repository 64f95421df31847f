#pragma once

#include <cmath>
#include <optional>

#include "conditioning.hpp"
#include "detail/kernel.hpp"
#include "gaussian.hpp"
#include "pulsed.hpp"

// Fidelity of heralded two-mode states with respect to the NOON state
//   (|n,0> + e^{i phi} |0,n>) / sqrt(2),
// computed through phase-space overlaps: for a state with Wigner
// function W, the fidelity is 4 pi^2 integral(W_noon * W).

namespace noon {

// Overlap integral of the NOON Wigner function with a single zero-mean
// Gaussian Wigner function of covariance u (two modes).
inline double noon_wigner_overlap(const CovarianceMatrix& u, int n,
                                  double phi) {
    if (u.modes() != 2) {
        throw std::invalid_argument(
            "noon_wigner_overlap: state must have exactly two modes");
    }
    if (n < 1) {
        throw std::invalid_argument("noon_wigner_overlap: n must be positive");
    }
    const detail::rmat<double> um = detail::rmat<double>::from(u.mat());
    const detail::overlap_terms<double> terms =
        detail::noon_overlap_reduced(um, n, phi);
    return terms.value / (2.0 * M_PI * M_PI);
}

// Fidelity of a heralded signal pair with the n-photon NOON state of
// relative phase phi.  Reruns the signed component sum in quad
// precision when double precision loses it to cancellation.
inline double noon_fidelity(const ConditionalMixture& mixture, int n,
                            double phi) {
    if (mixture.signal_modes() != 2) {
        throw std::invalid_argument(
            "noon_fidelity: mixture must have exactly two signal modes");
    }
    if (n < 1) {
        throw std::invalid_argument("noon_fidelity: n must be positive");
    }
    const detail::HeraldEvaluation eval =
        detail::evaluate_herald(mixture.blocks(), true, n, phi);
    if (eval.zero_probability || !(eval.probability > 0.0)) {
        throw zero_probability_error(
            "noon_fidelity: herald success probability is numerically zero");
    }
    return eval.fidelity;
}

// Phase of the NOON component produced by the transmitted-port herald:
// phi = n theta + pi, reduced to [0, 2 pi).
inline double optimal_phase(int n, double theta) {
    const double two_pi = 2.0 * M_PI;
    double phi = std::fmod(n * theta + M_PI, two_pi);
    if (phi < 0.0) {
        phi += two_pi;
    }
    return phi;
}

// The reflected-port herald behaves like the transmitted one with
// theta shifted by pi.
inline double optimal_phase_reflected(int n, double theta) {
    return optimal_phase(n, theta + M_PI);
}

// Fidelity at the lossless-signal, unit-efficiency operating point for
// n = 3, in closed form.
inline double closed_form_f3(double r) {
    if (!(r >= 0.0 && r < 1.0)) {
        throw std::invalid_argument("closed_form_f3: r must lie in [0, 1)");
    }
    const double r2 = r * r;
    const double a = (1.0 - r2) * (2.0 - r2);
    return a * a * (3.0 - 2.0 * r2) * (6.0 - 5.0 * r2) /
           (18.0 * (4.0 - 3.0 * r2));
}

// Limit of the heralded fidelity as the trigger efficiency goes to
// zero: (1 - r^2)^{n+2}.
inline double eta_zero_fidelity(int n, double r) {
    if (n < 1) {
        throw std::invalid_argument("eta_zero_fidelity: n must be positive");
    }
    if (!(r >= 0.0 && r < 1.0)) {
        throw std::invalid_argument("eta_zero_fidelity: r must lie in [0, 1)");
    }
    return std::pow(1.0 - r * r, n + 2);
}

// Fidelity of the both-arms herald, evaluated for the all-transmitted
// click pattern.  The all-reflected pattern yields the same state with
// theta shifted by pi, and therefore the same fidelity at its own
// optimal phase.
inline double fidelity_plus(const CovarianceMatrix& cov_plus, int n,
                            double phi) {
    const CovarianceMatrix v_eff = conditioned_covariance_plus(cov_plus, n);
    return noon_fidelity(ConditionalMixture(v_eff, n), n, phi);
}

struct ProtocolResult {
    double probability = 0.0;
    double fidelity = 0.0;
};

// Success probability of the configured herald.
inline double protocol_success_probability(const ProtocolParams& p) {
    validate_params(p);
    const CovarianceMatrix cov = analytic_covariance(p);
    if (p.variant == Variant::both_arms) {
        return success_probability_plus(cov, p.n);
    }
    return success_probability(cov, p.n);
}

// Herald probability and NOON fidelity in one go.  When phi is not
// given, the phase the herald actually produces is used.
inline ProtocolResult protocol_run(const ProtocolParams& p,
                                   std::optional<double> phi = std::nullopt) {
    validate_params(p);
    const CovarianceMatrix cov = analytic_covariance(p);
    ProtocolResult out;
    if (p.variant == Variant::both_arms) {
        const double target = phi ? *phi : optimal_phase(p.n, p.theta);
        out.probability = success_probability_plus(cov, p.n);
        out.fidelity = fidelity_plus(cov, p.n, target);
        return out;
    }
    const double target = phi ? *phi
                              : (p.variant == Variant::reflected
                                     ? optimal_phase_reflected(p.n, p.theta)
                                     : optimal_phase(p.n, p.theta));
    const ConditionalMixture mixture(cov, p.n);
    out.probability = mixture.probability();
    out.fidelity = noon_fidelity(mixture, p.n, target);
    return out;
}

} // namespace noon
