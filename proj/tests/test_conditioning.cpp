#include <catch2/catch.hpp>

#include <cmath>

#include <noon/conditioning.hpp>
#include <noon/pulsed.hpp>

#include "test_helpers.hpp"

using namespace noon;

namespace {

CovarianceMatrix chain_covariance(int n, double r, double eta,
                                  Variant variant = Variant::transmitted_only) {
    ProtocolParams p;
    p.n = n;
    p.r = r;
    p.eta = eta;
    p.theta = 0.6;
    p.variant = variant;
    return analytic_covariance(p);
}

double closed_form_p(int n, double lambda) {
    switch (n) {
        case 1:
            return closed_form_p1(lambda);
        case 2:
            return closed_form_p2(lambda);
        case 3:
            return closed_form_p3(lambda);
        case 4:
            return closed_form_p4(lambda);
    }
    throw std::logic_error("no closed form");
}

} // namespace

TEST_CASE("success probabilities match the closed forms") {
    for (int n = 1; n <= 4; ++n) {
        for (double r : {0.1, 0.3, 0.6}) {
            for (double eta : {1.0, 0.5, 0.25}) {
                const double lambda = herald_lambda(r, eta);
                const double p =
                    success_probability(chain_covariance(n, r, eta), n);
                INFO("n " << n << " r " << r << " eta " << eta);
                REQUIRE(p == Approx(closed_form_p(n, lambda)).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("heavily cancelling sums stay accurate at tiny efficiency") {
    const double r = 0.1;
    for (int n : {1, 3}) {
        const double eta = 1e-6;
        const double lambda = herald_lambda(r, eta);
        const double p = success_probability(chain_covariance(n, r, eta), n);
        INFO("n " << n);
        REQUIRE(p == Approx(closed_form_p(n, lambda)).epsilon(1e-6));
    }
    // P_4 ~ lambda^4 needs a slightly larger eta to stay resolvable
    // even in quad precision.
    const double eta4 = 1e-4;
    const double p4 = success_probability(chain_covariance(4, r, eta4), 4);
    REQUIRE(p4 ==
            Approx(closed_form_p4(herald_lambda(r, eta4))).epsilon(1e-6));
}

TEST_CASE("both-arms success probabilities match the closed forms") {
    for (double r : {0.1, 0.3, 0.6}) {
        for (double eta : {1.0, 0.5, 0.25}) {
            const double lambda = herald_lambda(r, eta);
            const double p1 = success_probability_plus(
                chain_covariance(1, r, eta, Variant::both_arms), 1);
            const double p3 = success_probability_plus(
                chain_covariance(3, r, eta, Variant::both_arms), 3);
            INFO("r " << r << " eta " << eta);
            REQUIRE(p1 == Approx(closed_form_p1_plus(lambda)).epsilon(1e-10));
            REQUIRE(p3 == Approx(closed_form_p3_plus(lambda)).epsilon(1e-10));
        }
    }

    const double lambda = herald_lambda(0.1, 1e-6);
    const double p3 = success_probability_plus(
        chain_covariance(3, 0.1, 1e-6, Variant::both_arms), 3);
    REQUIRE(p3 == Approx(closed_form_p3_plus(lambda)).epsilon(1e-6));
}

TEST_CASE("spectator modes do not change the click probability") {
    const double direct =
        success_probability(chain_covariance(3, 0.3, 0.6), 3);
    const double with_reflected = success_probability(
        chain_covariance(3, 0.3, 0.6, Variant::both_arms), 3);
    REQUIRE(direct == Approx(with_reflected).epsilon(1e-12));
}

TEST_CASE("click probability is invariant under trigger relabeling") {
    const CovarianceMatrix cov = chain_covariance(3, 0.3, 0.6);
    const double base = success_probability(cov, 3);
    const CovarianceMatrix shuffled = partial_trace(cov, {2, 0, 1, 3, 4});
    REQUIRE(success_probability(shuffled, 3) == Approx(base).epsilon(1e-12));
}

TEST_CASE("conditional mixture components") {
    const CovarianceMatrix cov = chain_covariance(3, 0.4, 0.8);
    const ConditionalMixture mixture(cov, 3);
    REQUIRE(mixture.trigger_count() == 3);
    REQUIRE(mixture.signal_modes() == 2);
    REQUIRE(mixture.probability() ==
            Approx(success_probability(cov, 3)).epsilon(1e-13));

    const auto components = mixture.components();
    REQUIRE(components.size() == 8);

    double weight_sum = 0.0;
    for (const auto& c : components) {
        weight_sum += c.weight;
        // Every component covariance is a physical Gaussian state.
        REQUIRE_NOTHROW(CovarianceMatrix(c.covariance));
    }
    REQUIRE(weight_sum == Approx(1.0).epsilon(1e-12));

    // The empty subset contributes the unconditioned signal state.
    REQUIRE(max_abs_diff(components.front().covariance,
                         cov.mat().bottomRightCorner(4, 4)) < 1e-13);
    REQUIRE(components.front().weight ==
            Approx(1.0 / mixture.probability()).epsilon(1e-12));
}

TEST_CASE("vacuum input can never click") {
    const CovarianceMatrix cov = chain_covariance(3, 0.0, 0.9);
    REQUIRE(success_probability(cov, 3) == 0.0);
    REQUIRE_THROWS_AS(ConditionalMixture(cov, 3), zero_probability_error);
}

TEST_CASE("probabilities below numerical resolution report zero") {
    // lambda ~ 1e-10 puts P_3 ~ 6e-32, beyond even quad precision.
    const CovarianceMatrix cov = chain_covariance(3, 0.01, 1e-6);
    REQUIRE(success_probability(cov, 3) == 0.0);
    REQUIRE_THROWS_AS(ConditionalMixture(cov, 3), zero_probability_error);
}

TEST_CASE("small-lambda asymptotics") {
    for (int n = 1; n <= 4; ++n) {
        const double eta = 1.0;
        for (double r : {0.01, 0.001}) {
            const double lambda = herald_lambda(r, eta);
            const double p = success_probability(chain_covariance(n, r, eta), n);
            const double asym = small_r_probability(n, lambda);
            INFO("n " << n << " r " << r);
            REQUIRE(p / asym == Approx(1.0).margin(20.0 * lambda));
        }
    }
}

TEST_CASE("herald lambda validation") {
    REQUIRE(herald_lambda(0.5, 0.75) == Approx(0.25).epsilon(1e-13));
    REQUIRE_THROWS_AS(herald_lambda(1.0, 0.5), std::invalid_argument);
    REQUIRE_THROWS_AS(herald_lambda(0.5, 1.5), std::invalid_argument);
}

TEST_CASE("conditioning argument validation") {
    const CovarianceMatrix cov = chain_covariance(3, 0.3, 0.8);
    REQUIRE_THROWS_AS(success_probability(cov, 0), std::invalid_argument);
    REQUIRE_THROWS_AS(success_probability(cov, 6), std::invalid_argument);
    REQUIRE_THROWS_AS(ConditionalMixture(cov, 5), std::invalid_argument);
}
