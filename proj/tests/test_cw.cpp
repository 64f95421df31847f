#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <vector>

#include <Eigen/Dense>
#include <catch2/catch.hpp>

#include "noon/cw.hpp"
#include "test_helpers.hpp"

using namespace noon;
using cw::CwParams;
using cw::TemporalMode;
using complex_t = std::complex<double>;

namespace {

CwParams make_params(double eps_over_gamma, std::array<double, 3> times,
                     double gamma = 1.0, double window = 1e-3) {
    CwParams p;
    p.gamma = gamma;
    p.epsilon = eps_over_gamma * gamma;
    p.detection_times = times;
    p.window = window;
    return p;
}

template <typename F>
auto simpson(F&& f, double lo, double hi, int intervals) -> decltype(f(0.0)) {
    decltype(f(0.0)) acc = f(lo) + f(hi);
    const double h = (hi - lo) / intervals;
    for (int i = 1; i < intervals; ++i) {
        acc += f(lo + i * h) * ((i % 2 == 0) ? 2.0 : 4.0);
    }
    return acc * (h / 3.0);
}

// Frequency-domain route to the same covariance: every kernel has a
// rational transform, so each moment is a single integral of a product
// of transforms.  Shares no integration code with the production path.
struct SpectralOracle {
    double gamma, eps, a, mu, nu, half;
    std::array<double, 3> t;

    explicit SpectralOracle(const CwParams& p)
        : gamma(p.gamma),
          eps(p.epsilon),
          a(0.5 * p.gamma),
          mu(a - p.epsilon),
          nu(a + p.epsilon),
          half(p.window / p.gamma) {
        for (int i = 0; i < 3; ++i) {
            t[i] = p.detection_times[i] / p.gamma;
        }
    }

    double nhat(double w) const {
        return 0.5 * eps * gamma *
               (1.0 / (mu * mu + w * w) - 1.0 / (nu * nu + w * w));
    }
    double mhat(double w) const {
        return 0.5 * eps * gamma *
               (1.0 / (mu * mu + w * w) + 1.0 / (nu * nu + w * w));
    }
    complex_t window_hat(int k, double w) const {
        const double x = w * half;
        const double lobe = (std::abs(x) < 1e-8)
                                ? 2.0 * half * (1.0 - x * x / 6.0)
                                : 2.0 * std::sin(x) / w;
        return std::polar(1.0, -w * t[k]) * lobe / std::sqrt(2.0 * half);
    }
    complex_t kernel_hat(int l, double w) const {
        return std::polar(1.0, -w * t[l]) * std::sqrt(a) * 2.0 * a /
               (a * a + w * w);
    }

    template <typename Integrand>
    complex_t moment(Integrand&& f) const {
        const double cap = 300.0 * gamma;
        const complex_t raw = simpson(f, -cap, cap, 1 << 17);
        return raw / (2.0 * M_PI);
    }

    CovarianceMatrix covariance(const Eigen::Vector3d& ca,
                                const Eigen::Vector3d& cb) const {
        std::array<complex_t, 3> phase;
        for (int k = 0; k < 3; ++k) {
            phase[k] = std::polar(1.0, 2.0 * M_PI * (k + 1) / 3.0);
        }
        ModeMoments mom;
        mom.a = Eigen::MatrixXcd::Zero(5, 5);
        mom.b = Eigen::MatrixXcd::Zero(5, 5);
        for (int l = 0; l < 3; ++l) {
            for (int k = l; k < 3; ++k) {
                const complex_t overlap = moment([&](double w) {
                    return window_hat(l, w) * std::conj(window_hat(k, w)) *
                           nhat(w);
                });
                mom.a(l, k) =
                    (1.0 + std::conj(phase[l]) * phase[k]) * overlap / 6.0;
                mom.a(k, l) = std::conj(mom.a(l, k));
            }
        }
        const double root6 = std::sqrt(6.0);
        for (int k = 0; k < 3; ++k) {
            complex_t reach_a = 0.0;
            complex_t reach_b = 0.0;
            for (int l = 0; l < 3; ++l) {
                const complex_t overlap = moment([&](double w) {
                    return window_hat(k, w) * std::conj(kernel_hat(l, w)) *
                           mhat(w);
                });
                reach_a += ca(l) * overlap;
                reach_b += cb(l) * overlap;
            }
            mom.b(k, 3) = reach_a / root6;
            mom.b(3, k) = mom.b(k, 3);
            mom.b(k, 4) = -phase[k] * reach_b / root6;
            mom.b(4, k) = mom.b(k, 4);
        }
        for (int sig = 3; sig <= 4; ++sig) {
            const Eigen::Vector3d& c = (sig == 3) ? ca : cb;
            complex_t occupancy = 0.0;
            for (int l = 0; l < 3; ++l) {
                for (int lp = 0; lp < 3; ++lp) {
                    const complex_t overlap = moment([&](double w) {
                        return kernel_hat(l, w) * std::conj(kernel_hat(lp, w)) *
                               nhat(w);
                    });
                    occupancy += c(l) * c(lp) * overlap;
                }
            }
            mom.a(sig, sig) = occupancy.real();
        }
        return moments_to_covariance(mom);
    }
};

} // namespace

TEST_CASE("output correlations follow the below threshold forms", "[cw]") {
    const std::array<double, 3> together{0.0, 0.0, 0.0};

    SECTION("vanishing gain kills both correlations") {
        const CwParams p = make_params(0.0, together);
        const cw::OpoCorrelations c = cw::opo_correlations(p, 0.4);
        REQUIRE(c.n == 0.0);
        REQUIRE(c.m == 0.0);
    }

    SECTION("cross correlations dominate below threshold") {
        for (double ratio : {0.05, 0.2, 0.45}) {
            const CwParams p = make_params(ratio, together);
            for (double tau : {0.0, 0.3, 1.7}) {
                const cw::OpoCorrelations c = cw::opo_correlations(p, tau);
                REQUIRE(c.n > 0.0);
                REQUIRE(c.m > c.n);
                const cw::OpoCorrelations mirror =
                    cw::opo_correlations(p, -tau);
                REQUIRE(c.n == mirror.n);
                REQUIRE(c.m == mirror.m);
            }
        }
    }

    SECTION("correlations decay at large delay") {
        const CwParams p = make_params(0.45, together);
        const cw::OpoCorrelations c = cw::opo_correlations(p, 500.0);
        REQUIRE(std::abs(c.n) < 1e-9);
        REQUIRE(std::abs(c.m) < 1e-9);
    }

    SECTION("zero delay values match the partial fraction weights") {
        const CwParams p = make_params(0.1, together);
        const double mu = 0.4;
        const double nu = 0.6;
        const cw::OpoCorrelations c = cw::opo_correlations(p, 0.0);
        REQUIRE(c.n == Approx(0.025 * (1.0 / mu - 1.0 / nu)).epsilon(1e-12));
        REQUIRE(c.m == Approx(0.025 * (1.0 / mu + 1.0 / nu)).epsilon(1e-12));
    }
}

TEST_CASE("kernel overlaps match direct integration", "[cw]") {
    const CwParams p = make_params(0.05, {0.0, 0.7, 1.8});
    const Eigen::Matrix3d gram = cw::kernel_gram(p);
    const double a = 0.5;
    const auto kernel = [&](int l, double t) {
        return std::sqrt(a) * std::exp(-a * std::abs(t - p.detection_times[l]));
    };
    for (int l = 0; l < 3; ++l) {
        for (int k = 0; k < 3; ++k) {
            const auto product = [&](double t) {
                return kernel(l, t) * kernel(k, t);
            };
            std::vector<double> cuts{-40.0, p.detection_times[l],
                                     p.detection_times[k], 42.0};
            std::sort(cuts.begin(), cuts.end());
            double direct = 0.0;
            for (size_t seg = 0; seg + 1 < cuts.size(); ++seg) {
                if (cuts[seg + 1] > cuts[seg]) {
                    direct += simpson(product, cuts[seg], cuts[seg + 1],
                                      1 << 16);
                }
            }
            REQUIRE(gram(l, k) == Approx(direct).epsilon(1e-9));
        }
    }

    SECTION("signal modes are normalized against the overlaps") {
        const TemporalMode mode =
            cw::signal_mode(p, Eigen::Vector3d(0.9, 0.4, 0.7));
        REQUIRE(mode.coefficients.dot(gram * mode.coefficients) ==
                Approx(1.0).margin(1e-12));
        REQUIRE_THROWS_AS(cw::signal_mode(p, Eigen::Vector3d::Zero()),
                          std::invalid_argument);
    }

    SECTION("coincident kernels leave only the symmetric combination") {
        const CwParams merged = make_params(0.05, {0.2, 0.2, 0.2});
        const TemporalMode uniform = cw::uniform_signal_mode(merged);
        REQUIRE(uniform.coefficients(0) == Approx(1.0 / 3.0).epsilon(1e-12));
        REQUIRE_THROWS_AS(
            cw::signal_mode(merged, Eigen::Vector3d(1.0, -1.0, 0.0)),
            std::invalid_argument);
    }
}

TEST_CASE("covariance entries match frequency domain integration", "[cw]") {
    const CwParams p = make_params(0.04, {0.0, 0.35, 0.9});
    const TemporalMode mode_a =
        cw::signal_mode(p, Eigen::Vector3d(0.9, 0.4, 0.7));
    const TemporalMode mode_b =
        cw::signal_mode(p, Eigen::Vector3d(0.2, 1.0, 0.5));
    const CovarianceMatrix produced = cw::cw_covariance(p, mode_a, mode_b);
    const CovarianceMatrix expected =
        SpectralOracle(p).covariance(mode_a.coefficients, mode_b.coefficients);
    REQUIRE(max_abs_diff(produced.mat(), expected.mat()) < 1e-9);
}

TEST_CASE("cw covariance has the expected structure", "[cw]") {
    SECTION("zero gain gives vacuum") {
        const CwParams p = make_params(0.0, {0.0, 0.4, 0.9});
        const CovarianceMatrix cov =
            cw::cw_covariance(p, cw::uniform_signal_mode(p),
                              cw::uniform_signal_mode(p));
        REQUIRE(max_abs_diff(cov.mat(), Eigen::MatrixXd::Identity(10, 10)) <
                1e-15);
    }

    SECTION("uncertainty bound holds across the gain range") {
        for (double ratio : {0.001, 0.01, 0.1}) {
            const CwParams p = make_params(ratio, {0.0, 0.5, 1.2});
            const CovarianceMatrix cov =
                cw::cw_covariance(p, cw::uniform_signal_mode(p),
                                  cw::uniform_signal_mode(p));
            const Eigen::MatrixXcd bound =
                cov.mat().cast<complex_t>() +
                complex_t(0.0, 1.0) * symplectic_form(5).cast<complex_t>();
            const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(bound);
            REQUIRE(es.eigenvalues().minCoeff() > -1e-10);
        }
    }

    SECTION("trigger occupation is the flux through the window") {
        const CwParams p = make_params(0.02, {0.0, 0.5, 1.2});
        const CovarianceMatrix cov =
            cw::cw_covariance(p, cw::uniform_signal_mode(p),
                              cw::uniform_signal_mode(p));
        REQUIRE(cov.mat()(0, 0) == Approx(cov.mat()(1, 1)).epsilon(1e-12));
        REQUIRE(std::abs(cov.mat()(0, 1)) < 1e-14);
        const double occupation = 0.5 * (cov.mat()(0, 0) - 1.0);
        const double flux = cw::opo_correlations(p, 0.0).n;
        REQUIRE(occupation ==
                Approx(flux * 2.0 * p.window / 3.0).epsilon(2e-3));
    }

    SECTION("coincident detections collapse to a single kernel") {
        const CwParams p = make_params(0.03, {0.1, 0.1, 0.1});
        const TemporalMode uniform = cw::uniform_signal_mode(p);
        const TemporalMode lone =
            cw::signal_mode(p, Eigen::Vector3d(1.0, 0.0, 0.0));
        REQUIRE(max_abs_diff(cw::cw_covariance(p, uniform, uniform).mat(),
                             cw::cw_covariance(p, lone, lone).mat()) < 1e-13);
    }

    SECTION("scaling the rates leaves the dimensionless state") {
        const CwParams base = make_params(0.01, {0.0, 0.4, 0.9}, 1.0);
        const CwParams scaled = make_params(0.01, {0.0, 0.4, 0.9}, 2.5);
        REQUIRE(max_abs_diff(
                    cw::cw_covariance(base, cw::uniform_signal_mode(base),
                                      cw::uniform_signal_mode(base))
                        .mat(),
                    cw::cw_covariance(scaled, cw::uniform_signal_mode(scaled),
                                      cw::uniform_signal_mode(scaled))
                        .mat()) < 1e-12);
    }
}

TEST_CASE("conditional fidelity falls with gain and detection spread",
          "[cw]") {
    SECTION("gain sweep at coincident detections") {
        const std::array<double, 3> together{0.0, 0.0, 0.0};
        std::vector<double> fid;
        for (double ratio : {1e-3, 3e-3, 0.01, 0.03}) {
            fid.push_back(cw::cw_fidelity(make_params(ratio, together)));
        }
        REQUIRE(fid[0] > 0.95);
        for (size_t i = 1; i < fid.size(); ++i) {
            REQUIRE(fid[i] < fid[i - 1]);
        }
    }

    SECTION("spread sweep at fixed gain") {
        std::vector<double> fid;
        for (double span : {0.0, 0.4, 1.0, 2.0}) {
            fid.push_back(cw::cw_fidelity(
                make_params(0.01, {0.0, 0.5 * span, span})));
        }
        for (size_t i = 1; i < fid.size(); ++i) {
            REQUIRE(fid[i] < fid[i - 1]);
        }
    }
}

TEST_CASE("window refinement leaves the fidelity unchanged", "[cw]") {
    const double coarse =
        cw::cw_fidelity(make_params(0.01, {0.0, 0.3, 0.6}, 1.0, 1e-3));
    const double fine =
        cw::cw_fidelity(make_params(0.01, {0.0, 0.3, 0.6}, 1.0, 5e-4));
    REQUIRE(std::abs(coarse - fine) < 1e-4);
}

TEST_CASE("optimized coefficients respect detection symmetry", "[cw]") {
    SECTION("symmetric spacing gives symmetric weights") {
        const CwParams p = make_params(0.01, {0.0, 0.4, 0.8});
        const TemporalMode best = cw::optimize_mode_coefficients(p);
        REQUIRE(std::abs(best.coefficients(0) - best.coefficients(2)) < 1e-6);
        const Eigen::Matrix3d gram = cw::kernel_gram(p);
        REQUIRE(best.coefficients.dot(gram * best.coefficients) ==
                Approx(1.0).margin(1e-9));
        const double tuned = cw::cw_fidelity(p, best);
        const double flat = cw::cw_fidelity(p);
        REQUIRE(tuned >= flat - 1e-9);
    }

    SECTION("coincident detections need no optimization") {
        const CwParams p = make_params(0.01, {0.3, 0.3, 0.3});
        const TemporalMode best = cw::optimize_mode_coefficients(p);
        for (int i = 0; i < 3; ++i) {
            REQUIRE(best.coefficients(i) == Approx(1.0 / 3.0).epsilon(1e-10));
        }
    }
}

TEST_CASE("cw layer rejects invalid requests", "[cw]") {
    const std::array<double, 3> times{0.0, 0.5, 1.0};
    REQUIRE_THROWS_AS(cw::opo_correlations(make_params(0.5, times), 0.0),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(cw::opo_correlations(make_params(0.7, times), 0.0),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(cw::kernel_gram(make_params(0.1, times, 1.0, 0.0)),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(cw::kernel_gram(make_params(0.1, times, 1.0, 2e-3)),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(
        cw::kernel_gram(make_params(0.1, {0.0, 1.5e-3, 1.0})),
        std::invalid_argument);

    const CwParams p = make_params(0.1, times);
    TemporalMode skewed;
    skewed.coefficients = Eigen::Vector3d(0.5, 0.0, 0.0);
    REQUIRE_THROWS_AS(cw::cw_covariance(p, skewed, skewed),
                      std::invalid_argument);
}
