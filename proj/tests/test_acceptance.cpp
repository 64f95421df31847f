#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <sys/wait.h>

#include <noon/cw.hpp>
#include <noon/verify.hpp>

// Acceptance harness: evaluates every shipping criterion, prints one
// pass/fail line per criterion, and exits nonzero if any fail.  All
// tolerances are written out literally next to the checks.

namespace {

using acceptance_clock = std::chrono::steady_clock;

double seconds_since(acceptance_clock::time_point start) {
    return std::chrono::duration<double>(acceptance_clock::now() - start)
        .count();
}

int criterion_index = 0;
bool all_passed = true;

void report(bool passed, const std::string& text) {
    ++criterion_index;
    std::printf("%s  criterion %2d: %s\n", passed ? "PASS" : "FAIL",
                criterion_index, text.c_str());
    all_passed = all_passed && passed;
}

// Criteria that reuse a verification suite, with an optional runtime
// budget in seconds.
void report_check(noon::CheckResult (*suite)(), double budget_seconds) {
    const auto start = acceptance_clock::now();
    const noon::CheckResult check = suite();
    const double elapsed = seconds_since(start);
    bool passed = check.passed;
    std::string text = check.name + ": " + check.detail;
    if (budget_seconds > 0.0) {
        passed = passed && elapsed < budget_seconds;
        char buf[64];
        std::snprintf(buf, sizeof(buf), " [%.1f s, budget %g s]", elapsed,
                      budget_seconds);
        text += buf;
    }
    report(passed, text);
}

noon::CheckResult unhooked_lossless_fidelity() {
    return noon::check_lossless_fidelity(noon::Perturbation::none);
}
noon::CheckResult unhooked_low_efficiency() {
    return noon::check_low_efficiency_limit(noon::Perturbation::none);
}
noon::CheckResult unhooked_design_point() {
    return noon::check_design_point(noon::Perturbation::none);
}
noon::CheckResult unhooked_fock_parity() {
    return noon::check_fock_parity(noon::Perturbation::none);
}
noon::CheckResult unhooked_variant_ordering() {
    return noon::check_variant_ordering(noon::Perturbation::none);
}

void report_cw_properties() {
    const auto start = acceptance_clock::now();

    bool gain_monotone = true;
    double f_smallest_gain = 0.0;
    double previous = 2.0;
    for (const double eps : {1e-3, 3e-3, 1e-2, 3e-2, 1e-1}) {
        noon::cw::CwParams p;
        p.epsilon = eps;
        const double f = noon::cw::cw_fidelity(p);
        if (eps == 1e-3) {
            f_smallest_gain = f;
        }
        gain_monotone = gain_monotone && f < previous;
        previous = f;
    }

    bool separation_monotone = true;
    previous = 2.0;
    for (const double span : {0.0, 0.5, 1.0, 2.0}) {
        noon::cw::CwParams p;
        p.epsilon = 0.01;
        p.detection_times = {-0.5 * span, 0.0, 0.5 * span};
        const double f = noon::cw::cw_fidelity(p);
        separation_monotone = separation_monotone && f < previous;
        previous = f;
    }

    noon::cw::CwParams window_params;
    window_params.epsilon = 0.01;
    noon::cw::CwParams halved = window_params;
    halved.window = 0.5 * window_params.window;
    const double window_shift = std::abs(noon::cw::cw_fidelity(window_params) -
                                         noon::cw::cw_fidelity(halved));

    const double elapsed = seconds_since(start);
    const bool passed = gain_monotone && f_smallest_gain > 0.95 &&
                        separation_monotone && window_shift <= 1e-4 &&
                        elapsed < 300.0;
    char buf[224];
    std::snprintf(buf, sizeof(buf),
                  "continuous-wave properties: gain grid %s, F(1e-3) = %.5f "
                  "(> 0.95), separation grid %s, window halving %.1e "
                  "(budget 1e-4) [%.1f s, budget 300 s]",
                  gain_monotone ? "monotone" : "non-monotone",
                  f_smallest_gain,
                  separation_monotone ? "monotone" : "non-monotone",
                  window_shift, elapsed);
    report(passed, buf);
}

void report_verify_command() {
    const auto start = acceptance_clock::now();
    const std::string command = std::string(NOON_CLI_PATH) +
                                " verify > /dev/null";
    const int status = std::system(command.c_str());
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    const double elapsed = seconds_since(start);
    const bool passed = code == 0 && elapsed < 300.0;
    char buf[128];
    std::snprintf(buf, sizeof(buf),
                  "verify command: exit %d [%.1f s, budget 300 s]", code,
                  elapsed);
    report(passed, buf);
}

}  // namespace

int main() {
    report_check(noon::check_probability_closed_forms, 10.0);
    report_check(unhooked_lossless_fidelity, 10.0);
    report_check(unhooked_low_efficiency, 0.0);
    report_check(unhooked_design_point, 0.0);
    report_check(noon::check_small_pump_law, 0.0);
    report_check(unhooked_fock_parity, 120.0);
    report_check(noon::check_source_comparisons, 0.0);
    report_check(unhooked_variant_ordering, 0.0);
    report_cw_properties();
    report_verify_command();

    std::printf("%s\n", all_passed ? "acceptance: all criteria met"
                                   : "acceptance: criteria failed");
    return all_passed ? 0 : 1;
}
