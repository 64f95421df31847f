#include <catch2/catch.hpp>

#include <cmath>

#include <noon/pulsed.hpp>

#include "test_helpers.hpp"

using namespace noon;

TEST_CASE("initial covariance is two independent squeezed pairs") {
    const CovarianceMatrix cov = initial_covariance(0.5);
    REQUIRE(cov.modes() == 4);
    const Eigen::MatrixXd& v = cov.mat();

    for (int q = 0; q < 8; ++q) {
        REQUIRE(v(q, q) == Approx(5.0 / 3.0).epsilon(1e-13));
    }
    REQUIRE(v(0, 2) == Approx(4.0 / 3.0).epsilon(1e-13));
    REQUIRE(v(1, 3) == Approx(-4.0 / 3.0).epsilon(1e-13));
    REQUIRE(v(4, 6) == Approx(4.0 / 3.0).epsilon(1e-13));
    REQUIRE(v(5, 7) == Approx(-4.0 / 3.0).epsilon(1e-13));
    // No correlation between the two OPOs.
    REQUIRE(max_abs_diff(v.block<4, 4>(0, 4), Eigen::MatrixXd::Zero(4, 4)) <
            1e-14);
}

TEST_CASE("circuit and mode-decomposition covariances agree for n = 3") {
    ProtocolParams p;
    p.n = 3;
    p.r = 0.25;
    p.eta = 0.7;
    p.signal_loss = 0.1;
    p.theta = 0.9;

    for (Variant variant : {Variant::transmitted_only, Variant::reflected,
                            Variant::both_arms}) {
        p.variant = variant;
        const CovarianceMatrix analytic = analytic_covariance(p);
        const CovarianceMatrix circuit = circuit_covariance(p);
        INFO("variant " << variant_name(variant));
        REQUIRE(max_abs_diff(analytic.mat(), circuit.mat()) < 1e-10);
    }
}

TEST_CASE("reflected herald equals transmitted herald with shifted pump") {
    ProtocolParams p;
    p.n = 5;
    p.r = 0.3;
    p.eta = 0.6;
    p.theta = 0.4;

    const CovarianceMatrix reflected = reflected_covariance(p);

    ProtocolParams shifted = p;
    shifted.theta = p.theta + M_PI;
    shifted.variant = Variant::transmitted_only;
    const CovarianceMatrix transmitted = analytic_covariance(shifted);

    REQUIRE(max_abs_diff(reflected.mat(), transmitted.mat()) < 1e-12);
}

TEST_CASE("pump phase only enters the trigger-signal correlations") {
    ProtocolParams p;
    p.n = 3;
    p.r = 0.2;
    p.eta = 0.8;
    p.theta = 0.4;
    const Eigen::MatrixXd a = analytic_covariance(p).mat();
    p.theta = 1.9;
    const Eigen::MatrixXd b = analytic_covariance(p).mat();

    REQUIRE(max_abs_diff(a.topLeftCorner(6, 6), b.topLeftCorner(6, 6)) < 1e-13);
    REQUIRE(max_abs_diff(a.bottomRightCorner(4, 4), b.bottomRightCorner(4, 4)) <
            1e-13);
    REQUIRE(max_abs_diff(a.topRightCorner(6, 4), b.topRightCorner(6, 4)) >
            1e-3);
}

TEST_CASE("lossless both-arms covariance is pure") {
    ProtocolParams p;
    p.n = 3;
    p.r = 0.35;
    p.eta = 1.0;
    p.theta = 0.7;
    p.variant = Variant::both_arms;
    const CovarianceMatrix cov = analytic_covariance(p);
    REQUIRE(cov.modes() == 8);
    REQUIRE(cov.mat().determinant() == Approx(1.0).epsilon(1e-9));

    // Discarding the reflected ports leaves a mixed state.
    p.variant = Variant::transmitted_only;
    REQUIRE(analytic_covariance(p).mat().determinant() > 1.0 + 1e-6);
}

TEST_CASE("trigger occupations match the splitting tree") {
    ProtocolParams p;
    p.n = 3;
    p.r = 0.2;
    p.eta = 0.5;
    const Eigen::MatrixXd v = analytic_covariance(p).mat();
    // lambda = eta r^2/(1-r^2) = 1/48, diagonal = 1 + 2 lambda / 3.
    REQUIRE(v(0, 0) == Approx(73.0 / 72.0).epsilon(1e-13));
    REQUIRE(v(1, 1) == Approx(73.0 / 72.0).epsilon(1e-13));
    REQUIRE(v(4, 4) == Approx(73.0 / 72.0).epsilon(1e-13));
}

TEST_CASE("even orders reuse both beam splitter ports") {
    ProtocolParams p;
    p.n = 2;
    p.r = 0.3;
    p.eta = 0.8;
    p.theta = 0.3;
    const Eigen::MatrixXd v = analytic_covariance(p).mat();
    const double lambda = p.eta * p.r * p.r / (1.0 - p.r * p.r);
    REQUIRE(v(0, 0) == Approx(1.0 + 2.0 * lambda).epsilon(1e-13));
    // The two triggers are uncorrelated with each other.
    REQUIRE(max_abs_diff(v.block<2, 2>(0, 2), Eigen::MatrixXd::Zero(2, 2)) <
            1e-13);
    // But both couple to the signals.
    REQUIRE(v.block<2, 4>(0, 4).cwiseAbs().maxCoeff() > 0.1);
}

TEST_CASE("parameter validation") {
    ProtocolParams p;
    p.r = 1.0;
    REQUIRE_THROWS_AS(analytic_covariance(p), std::invalid_argument);
    p.r = 0.2;
    p.eta = -0.1;
    REQUIRE_THROWS_AS(analytic_covariance(p), std::invalid_argument);
    p.eta = 0.5;
    p.n = 2;
    p.variant = Variant::both_arms;
    REQUIRE_THROWS_AS(analytic_covariance(p), std::invalid_argument);
    p.variant = Variant::reflected;
    REQUIRE_THROWS_AS(analytic_covariance(p), std::invalid_argument);
    p.variant = Variant::transmitted_only;
    p.n = 4;
    REQUIRE_THROWS_AS(circuit_covariance(p), std::invalid_argument);
    p.n = 0;
    REQUIRE_THROWS_AS(analytic_covariance(p), std::invalid_argument);
}
