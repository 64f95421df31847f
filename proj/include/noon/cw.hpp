#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <limits>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "fock.hpp"
#include "gaussian.hpp"
#include "noon_metrics.hpp"

// Continuous-wave operation.  Two continuously driven sources feed the
// same trigger network as the pulsed protocol; detections are confined
// to narrow windows around three detection times, and the two signal
// beams are read out in temporal modes built from exponential kernels
// anchored at those times.  Conditioning uses the annihilation
// operator model, evaluated through the number state machinery.

namespace noon::cw {

using complex_t = std::complex<double>;

struct CwParams {
    double epsilon = 0.01;  // nonlinear gain, same units as gamma
    double gamma = 1.0;     // cavity output leakage rate
    std::array<double, 3> detection_times{0.0, 0.0, 0.0};  // units of 1/gamma
    double window = 1e-3;   // trigger half-width, units of 1/gamma
};

inline void validate_cw_params(const CwParams& p) {
    if (!(p.gamma > 0.0) || !std::isfinite(p.gamma)) {
        throw std::invalid_argument("validate_cw_params: gamma must be positive");
    }
    if (!(p.epsilon >= 0.0) || !std::isfinite(p.epsilon)) {
        throw std::invalid_argument(
            "validate_cw_params: epsilon must be nonnegative");
    }
    if (p.epsilon >= 0.5 * p.gamma) {
        throw std::invalid_argument(
            "validate_cw_params: gain must stay below threshold "
            "(epsilon < gamma / 2)");
    }
    if (!(p.window > 0.0) || p.window > 1e-3) {
        throw std::invalid_argument(
            "validate_cw_params: window must lie in (0, 1e-3]");
    }
    for (double t : p.detection_times) {
        if (!std::isfinite(t)) {
            throw std::invalid_argument(
                "validate_cw_params: detection times must be finite");
        }
    }
    for (int i = 0; i < 3; ++i) {
        for (int j = i + 1; j < 3; ++j) {
            const double d =
                std::abs(p.detection_times[i] - p.detection_times[j]);
            if (d != 0.0 && d < 2.0 * p.window) {
                throw std::invalid_argument(
                    "validate_cw_params: trigger windows must be coincident "
                    "or disjoint");
            }
        }
    }
}

// Stationary correlations of one output beam pair: n(tau) is the
// intensity correlation <a^dag(t) a(t+tau)> of either polarization and
// m(tau) the cross correlation <a_+(t) a_-(t+tau)>.  tau is in units
// of 1/gamma, the returned values in units of gamma.
struct OpoCorrelations {
    double n;
    double m;
};

inline OpoCorrelations opo_correlations(const CwParams& p, double tau) {
    validate_cw_params(p);
    if (p.epsilon == 0.0) {
        return OpoCorrelations{0.0, 0.0};
    }
    const double t = std::abs(tau) / p.gamma;
    const double mu = 0.5 * p.gamma - p.epsilon;
    const double nu = 0.5 * p.gamma + p.epsilon;
    const double scale = 0.25 * p.epsilon * p.gamma;
    const double slow = std::exp(-mu * t) / mu;
    const double fast = std::exp(-nu * t) / nu;
    return OpoCorrelations{scale * (slow - fast), scale * (slow + fast)};
}

// Signal temporal mode: coefficients of the normalized exponential
// kernels sqrt(gamma/2) exp(-gamma |t - t_ck| / 2) anchored at the
// detection times.  The combined kernel must have unit norm.
struct TemporalMode {
    Eigen::Vector3d coefficients = Eigen::Vector3d::Zero();
};

// Overlap matrix of the three exponential kernels.
inline Eigen::Matrix3d kernel_gram(const CwParams& p) {
    validate_cw_params(p);
    Eigen::Matrix3d gram;
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            const double half =
                0.5 * std::abs(p.detection_times[i] - p.detection_times[j]);
            gram(i, j) = (1.0 + half) * std::exp(-half);
        }
    }
    return gram;
}

// Normalize raw kernel coefficients against the kernel overlaps.
inline TemporalMode signal_mode(const CwParams& p, const Eigen::Vector3d& raw) {
    const Eigen::Matrix3d gram = kernel_gram(p);
    const double norm2 = raw.dot(gram * raw);
    if (!(norm2 > 1e-12 * raw.squaredNorm())) {
        throw std::invalid_argument(
            "signal_mode: kernel combination has vanishing norm");
    }
    return TemporalMode{raw / std::sqrt(norm2)};
}

inline TemporalMode uniform_signal_mode(const CwParams& p) {
    return signal_mode(p, Eigen::Vector3d::Ones());
}

namespace detail {

// Everything below works in absolute time (units of the rates), with
// a = gamma/2 the kernel decay rate and w the full trigger window.
struct CwScales {
    double a;
    double eps;
    double mu;
    double nu;
    double w;
    std::array<double, 3> times;
};

inline CwScales scales_of(const CwParams& p) {
    CwScales s;
    s.a = 0.5 * p.gamma;
    s.eps = p.epsilon;
    s.mu = s.a - p.epsilon;
    s.nu = s.a + p.epsilon;
    s.w = 2.0 * p.window / p.gamma;
    for (int i = 0; i < 3; ++i) {
        s.times[i] = p.detection_times[i] / p.gamma;
    }
    return s;
}

// integral of exp(-c |u|) over [lo, hi]
inline double abs_exp_integral(double c, double lo, double hi) {
    if (lo >= 0.0) {
        return (std::exp(-c * lo) - std::exp(-c * hi)) / c;
    }
    if (hi <= 0.0) {
        return (std::exp(c * hi) - std::exp(c * lo)) / c;
    }
    return (2.0 - std::exp(c * lo) - std::exp(-c * hi)) / c;
}

// double integral of exp(-c |t' - t|) over two coincident windows of
// width w, per unit window norm
inline double window_auto(double c, double w) {
    const double x = c * w;
    return 2.0 * (x + std::expm1(-x)) / (c * c * w);
}

// same for two windows separated by dist >= w
inline double window_pair(double c, double dist, double w) {
    const double half = std::sinh(0.5 * c * w);
    return std::exp(-c * dist) * 4.0 * half * half / (c * c * w);
}

// n-weighted overlap of trigger windows l and k
inline double trigger_trigger_n(const CwScales& s, int l, int k) {
    const double dist = std::abs(s.times[k] - s.times[l]);
    const double scale = 0.5 * s.eps * s.a;  // eps * gamma / 4
    if (dist == 0.0) {
        return scale *
               (window_auto(s.mu, s.w) / s.mu - window_auto(s.nu, s.w) / s.nu);
    }
    return scale * (window_pair(s.mu, dist, s.w) / s.mu -
                    window_pair(s.nu, dist, s.w) / s.nu);
}

// integral of the kernel cross correlation
//   E(a, b, u) = int exp(-a|v|) exp(-b|v - u|) dv
//             = 2 (b exp(-a|u|) - a exp(-b|u|)) / (b^2 - a^2)
// over u in [lo, hi]
inline double kernel_cross_integral(double a, double b, double lo, double hi) {
    return 2.0 *
           (b * abs_exp_integral(a, lo, hi) - a * abs_exp_integral(b, lo, hi)) /
           (b * b - a * a);
}

// m-weighted overlap of trigger window k with the kernel at time l
inline double trigger_kernel_m(const CwScales& s, int k, int l) {
    const double offset = s.times[k] - s.times[l];
    const double lo = offset - 0.5 * s.w;
    const double hi = offset + 0.5 * s.w;
    const double scale = 0.5 * s.eps * s.a;
    const double sum = kernel_cross_integral(s.a, s.mu, lo, hi) / s.mu +
                       kernel_cross_integral(s.a, s.nu, lo, hi) / s.nu;
    return std::sqrt(s.a / s.w) * scale * sum;
}

// n-weighted overlap of the kernels at times l and lp.  The two pole
// terms of the partial fraction expansion cancel to leading order in
// eps, so they are combined before evaluation.
inline double kernel_kernel_n(const CwScales& s, int l, int lp) {
    const double a = s.a;
    const double eps = s.eps;
    const double d = std::abs(s.times[l] - s.times[lp]);
    const double decay = std::exp(-a * d);
    const double pole =
        -8.0 * a * decay * (1.0 / a + d) / (eps * (4.0 * a * a - eps * eps));
    const double up = eps + a * std::expm1(eps * d);
    const double down = eps - a * std::expm1(-eps * d);
    const double lower = 2.0 * a - eps;
    const double upper = 2.0 * a + eps;
    const double residue = (4.0 * a * decay / (eps * eps)) *
                           (up / (s.mu * lower * lower) +
                            down / (s.nu * upper * upper));
    return a * (0.5 * eps * a) * (pole + residue);
}

inline double fidelity_at(const CovarianceMatrix& cov, int max_total) {
    fock::FockExpansion expansion = fock::gaussian_to_fock(cov, max_total);
    fock::FockState& psi = expansion.state;
    fock::apply_annihilation(psi, 0);
    fock::apply_annihilation(psi, 1);
    fock::apply_annihilation(psi, 2);
    const fock::FockConditioned cond =
        fock::reduce_on_off(psi, fock::HeraldSpec{}, 3, 4);
    return fock::noon_fidelity_fock(cond.rho, fock::FockBasis(2, max_total), 3,
                                    optimal_phase(3, 0.0));
}

// Raise the photon cutoff until the fidelity settles; returns the
// value and the cutoff it settled at.
inline std::pair<double, int> settled_fidelity(const CovarianceMatrix& cov) {
    double previous = std::numeric_limits<double>::quiet_NaN();
    double previous_diff = std::numeric_limits<double>::quiet_NaN();
    for (int cutoff = 6; cutoff <= 16; cutoff += 2) {
        const double fid = fidelity_at(cov, cutoff);
        const double diff = fid - previous;
        if (std::isfinite(previous) && std::abs(diff) < 1e-6) {
            return {fid, cutoff};
        }
        // The ceiling is a memory bound, not a convergence failure: at
        // higher gain the cutoff series still decays geometrically
        // there, so its remaining tail is summed in closed form.  The
        // result is then good to about 1e-4.
        if (cutoff == 16 && std::isfinite(previous_diff)) {
            const double ratio = diff / previous_diff;
            if (ratio > 0.0 && ratio < 0.6) {
                const double tail = diff * ratio / (1.0 - ratio);
                if (std::abs(tail) < 1e-4) {
                    return {fid + tail, cutoff};
                }
            }
        }
        previous_diff = diff;
        previous = fid;
    }
    throw numeric_degeneracy_error(
        "cw_fidelity: fidelity did not settle within the cutoff ceiling");
}

} // namespace detail

// Five-mode covariance of the windowed trigger modes (first three,
// transmitted ports of the combining network) and the two signal
// modes.  Entries follow from the beam correlations integrated against
// the mode functions, all in closed form.
inline CovarianceMatrix cw_covariance(const CwParams& p,
                                      const TemporalMode& signal_a,
                                      const TemporalMode& signal_b) {
    validate_cw_params(p);
    const Eigen::Matrix3d gram = kernel_gram(p);
    for (const TemporalMode* mode : {&signal_a, &signal_b}) {
        const double norm2 = mode->coefficients.dot(gram * mode->coefficients);
        if (std::abs(norm2 - 1.0) > 1e-9) {
            throw std::invalid_argument(
                "cw_covariance: signal mode is not normalized");
        }
    }
    if (p.epsilon < 1e-12 * p.gamma) {
        return CovarianceMatrix(Eigen::MatrixXd::Identity(10, 10));
    }

    const detail::CwScales s = detail::scales_of(p);
    std::array<complex_t, 3> phase;
    for (int k = 0; k < 3; ++k) {
        phase[k] = std::polar(1.0, 2.0 * M_PI * (k + 1) / 3.0);
    }

    ModeMoments moments;
    moments.a = Eigen::MatrixXcd::Zero(5, 5);
    moments.b = Eigen::MatrixXcd::Zero(5, 5);

    for (int l = 0; l < 3; ++l) {
        for (int k = 0; k < 3; ++k) {
            moments.a(l, k) = (1.0 + std::conj(phase[l]) * phase[k]) *
                              detail::trigger_trigger_n(s, l, k) / 6.0;
        }
    }

    const double root6 = std::sqrt(6.0);
    for (int k = 0; k < 3; ++k) {
        double reach_a = 0.0;
        double reach_b = 0.0;
        for (int l = 0; l < 3; ++l) {
            const double overlap = detail::trigger_kernel_m(s, k, l);
            reach_a += signal_a.coefficients(l) * overlap;
            reach_b += signal_b.coefficients(l) * overlap;
        }
        moments.b(k, 3) = reach_a / root6;
        moments.b(3, k) = moments.b(k, 3);
        moments.b(k, 4) = -phase[k] * reach_b / root6;
        moments.b(4, k) = moments.b(k, 4);
    }

    for (int sig = 3; sig <= 4; ++sig) {
        const Eigen::Vector3d& c =
            (sig == 3) ? signal_a.coefficients : signal_b.coefficients;
        double occupancy = 0.0;
        for (int l = 0; l < 3; ++l) {
            for (int lp = 0; lp < 3; ++lp) {
                occupancy += c(l) * c(lp) * detail::kernel_kernel_n(s, l, lp);
            }
        }
        moments.a(sig, sig) = occupancy;
    }

    return moments_to_covariance(moments);
}

// NOON fidelity after conditioning on one annihilation event in each
// trigger mode, with both signal beams read out in the given temporal
// mode.  The Gaussian state is expanded over number states at an
// adaptively chosen photon cutoff.
inline double cw_fidelity(const CwParams& p, const TemporalMode& mode) {
    const CovarianceMatrix cov = cw_covariance(p, mode, mode);
    return detail::settled_fidelity(cov).first;
}

inline double cw_fidelity(const CwParams& p) {
    return cw_fidelity(p, uniform_signal_mode(p));
}

namespace detail {

inline Eigen::VectorXd sphere_point(const Eigen::VectorXd& angles) {
    Eigen::VectorXd u(angles.size() + 1);
    if (angles.size() == 1) {
        u << std::cos(angles(0)), std::sin(angles(0));
    } else {
        u << std::cos(angles(0)), std::sin(angles(0)) * std::cos(angles(1)),
            std::sin(angles(0)) * std::sin(angles(1));
    }
    return u;
}

// Nelder-Mead maximization over a small angle vector.
template <typename Objective>
inline Eigen::VectorXd nelder_mead_max(const Objective& objective,
                                       const Eigen::VectorXd& start,
                                       double step) {
    const int dim = static_cast<int>(start.size());
    std::vector<Eigen::VectorXd> vertex(dim + 1, start);
    std::vector<double> value(dim + 1);
    for (int i = 0; i < dim; ++i) {
        vertex[i + 1](i) += step;
    }
    for (int i = 0; i <= dim; ++i) {
        value[i] = objective(vertex[i]);
    }
    const auto order = [&]() {
        for (int i = 0; i <= dim; ++i) {
            for (int j = i + 1; j <= dim; ++j) {
                if (value[j] > value[i]) {
                    std::swap(value[i], value[j]);
                    std::swap(vertex[i], vertex[j]);
                }
            }
        }
    };
    order();
    for (int iter = 0; iter < 200; ++iter) {
        double spread = 0.0;
        for (int i = 1; i <= dim; ++i) {
            spread = std::max(spread, (vertex[i] - vertex[0]).norm());
        }
        if (spread < 1e-8) {
            break;
        }
        Eigen::VectorXd centroid = Eigen::VectorXd::Zero(dim);
        for (int i = 0; i < dim; ++i) {
            centroid += vertex[i];
        }
        centroid /= dim;

        const Eigen::VectorXd reflected =
            centroid + (centroid - vertex[dim]);
        const double f_reflected = objective(reflected);
        if (f_reflected > value[0]) {
            const Eigen::VectorXd expanded =
                centroid + 2.0 * (centroid - vertex[dim]);
            const double f_expanded = objective(expanded);
            if (f_expanded > f_reflected) {
                vertex[dim] = expanded;
                value[dim] = f_expanded;
            } else {
                vertex[dim] = reflected;
                value[dim] = f_reflected;
            }
        } else if (f_reflected > value[dim - 1]) {
            vertex[dim] = reflected;
            value[dim] = f_reflected;
        } else {
            const Eigen::VectorXd contracted =
                centroid + 0.5 * (vertex[dim] - centroid);
            const double f_contracted = objective(contracted);
            if (f_contracted > value[dim]) {
                vertex[dim] = contracted;
                value[dim] = f_contracted;
            } else {
                for (int i = 1; i <= dim; ++i) {
                    vertex[i] = vertex[0] + 0.5 * (vertex[i] - vertex[0]);
                    value[i] = objective(vertex[i]);
                }
            }
        }
        order();
    }
    return vertex[0];
}

// Newton refinement on central difference quadratic models.  The
// stencil shrinks geometrically and each step keeps the move only when
// the model points uphill and the objective does not drop.
template <typename Objective>
inline Eigen::VectorXd newton_polish_max(const Objective& objective,
                                         Eigen::VectorXd x) {
    const int dim = static_cast<int>(x.size());
    for (const double h : {3e-2, 3e-3, 1e-3}) {
        const double f0 = objective(x);
        Eigen::VectorXd grad(dim);
        Eigen::MatrixXd hess(dim, dim);
        for (int i = 0; i < dim; ++i) {
            Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
            e(i) = h;
            const double fp = objective(x + e);
            const double fm = objective(x - e);
            grad(i) = (fp - fm) / (2.0 * h);
            hess(i, i) = (fp - 2.0 * f0 + fm) / (h * h);
        }
        for (int i = 0; i < dim; ++i) {
            for (int j = i + 1; j < dim; ++j) {
                Eigen::VectorXd e = Eigen::VectorXd::Zero(dim);
                e(i) = h;
                e(j) = h;
                const double fpp = objective(x + e);
                const double fmm = objective(x - e);
                e(j) = -h;
                const double fpm = objective(x + e);
                const double fmp = objective(x - e);
                hess(i, j) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
                hess(j, i) = hess(i, j);
            }
        }
        const Eigen::VectorXd delta =
            Eigen::VectorXd(-hess.fullPivLu().solve(grad));
        if (!delta.allFinite() || delta.norm() > 10.0 * h ||
            grad.dot(delta) < 0.0) {
            continue;
        }
        if (objective(x + delta) >= f0 - 1e-13) {
            x += delta;
        }
    }
    return x;
}

} // namespace detail

// Coefficients maximizing the conditional fidelity over unit-norm
// kernel combinations.  The search runs over the sphere of an
// orthonormalized coefficient basis, so degenerate kernel overlaps
// (coincident detection times) reduce the dimension automatically.
inline TemporalMode optimize_mode_coefficients(const CwParams& p) {
    validate_cw_params(p);
    const Eigen::Matrix3d gram = kernel_gram(p);
    const Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(gram);
    const double floor = 1e-12 * es.eigenvalues().maxCoeff();
    std::vector<int> kept;
    for (int i = 0; i < 3; ++i) {
        if (es.eigenvalues()(i) > floor) {
            kept.push_back(i);
        }
    }
    const int rank = static_cast<int>(kept.size());
    Eigen::MatrixXd chart(3, rank);
    for (int i = 0; i < rank; ++i) {
        chart.col(i) = es.eigenvectors().col(kept[i]) /
                       std::sqrt(es.eigenvalues()(kept[i]));
    }
    const auto mode_of = [&](const Eigen::VectorXd& u) {
        return TemporalMode{chart * u};
    };
    const auto finish = [&](TemporalMode mode) {
        const double total = mode.coefficients.sum();
        if (total < 0.0 || (total == 0.0 && mode.coefficients(0) < 0.0)) {
            mode.coefficients = -mode.coefficients;
        }
        return mode;
    };
    if (rank == 1) {
        return finish(mode_of(Eigen::VectorXd::Ones(1)));
    }

    const int cutoff = std::min(
        detail::settled_fidelity(cw_covariance(p, uniform_signal_mode(p),
                                               uniform_signal_mode(p)))
            .second,
        10);
    const auto objective = [&](const Eigen::VectorXd& angles) {
        const TemporalMode mode = mode_of(detail::sphere_point(angles));
        return detail::fidelity_at(cw_covariance(p, mode, mode), cutoff);
    };

    std::vector<Eigen::VectorXd> starts;
    const Eigen::VectorXd uniform_u =
        chart.colPivHouseholderQr().solve(uniform_signal_mode(p).coefficients);
    if (rank == 2) {
        starts.push_back(
            (Eigen::VectorXd(1) << std::atan2(uniform_u(1), uniform_u(0)))
                .finished());
        for (int i = 0; i < 6; ++i) {
            starts.push_back((Eigen::VectorXd(1) << i * M_PI / 3.0).finished());
        }
    } else {
        const double tilt =
            std::atan2(uniform_u.tail(2).norm(), uniform_u(0));
        starts.push_back((Eigen::VectorXd(2) << tilt,
                          std::atan2(uniform_u(2), uniform_u(1)))
                             .finished());
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                starts.push_back((Eigen::VectorXd(2) << (i + 0.5) * M_PI / 4.0,
                                  j * M_PI / 2.0)
                                     .finished());
            }
        }
    }
    Eigen::VectorXd best = starts.front();
    double best_value = -std::numeric_limits<double>::infinity();
    for (const Eigen::VectorXd& candidate : starts) {
        const double value = objective(candidate);
        if (value > best_value) {
            best_value = value;
            best = candidate;
        }
    }
    best = detail::nelder_mead_max(objective, best, 0.2);
    best = detail::newton_polish_max(objective, best);
    return finish(mode_of(detail::sphere_point(best)));
}

} // namespace noon::cw
