#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <noon/conditioning.hpp>
#include <noon/cw.hpp>
#include <noon/errors.hpp>
#include <noon/noon_metrics.hpp>
#include <noon/pulsed.hpp>
#include <noon/verify.hpp>

// Command line front end emitting CSV.  Values carry twelve
// significant digits and every sweep evaluates its grid in order, so
// identical invocations produce identical bytes.

namespace {

class usage_error : public std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class Quantity { p, p_plus, f, f_plus, f_cw };

const std::map<std::string, Quantity>& quantity_names() {
    static const std::map<std::string, Quantity> names = {
        {"P", Quantity::p},
        {"P_plus", Quantity::p_plus},
        {"F", Quantity::f},
        {"F_plus", Quantity::f_plus},
        {"F_cw", Quantity::f_cw},
    };
    return names;
}

std::string quantity_label(Quantity q) {
    for (const auto& [name, value] : quantity_names()) {
        if (value == q) {
            return name;
        }
    }
    return "?";
}

const std::map<std::string, noon::Variant>& variant_names() {
    static const std::map<std::string, noon::Variant> names = {
        {"transmitted_only", noon::Variant::transmitted_only},
        {"reflected", noon::Variant::reflected},
        {"both_arms", noon::Variant::both_arms},
    };
    return names;
}

double parse_number(const std::string& flag, const std::string& text) {
    const char* begin = text.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || !std::isfinite(value)) {
        throw usage_error(flag + ": expected a number, got '" + text + "'");
    }
    return value;
}

// A value that is either a scalar or an inclusive start:stop:count
// grid.  Scalars keep count == 1.
struct GridSpec {
    double start = 0.0;
    double stop = 0.0;
    int count = 1;

    bool is_grid() const { return count > 1; }
    double at(int i) const {
        return count == 1 ? start
                          : start + (stop - start) * i / (count - 1);
    }
};

GridSpec parse_grid(const std::string& flag, const std::string& text) {
    GridSpec grid;
    const auto first = text.find(':');
    if (first == std::string::npos) {
        grid.start = grid.stop = parse_number(flag, text);
        return grid;
    }
    const auto second = text.find(':', first + 1);
    if (second == std::string::npos ||
        text.find(':', second + 1) != std::string::npos) {
        throw usage_error(flag + ": grids take the form start:stop:count");
    }
    grid.start = parse_number(flag, text.substr(0, first));
    grid.stop = parse_number(flag, text.substr(first + 1, second - first - 1));
    const double raw = parse_number(flag, text.substr(second + 1));
    grid.count = static_cast<int>(raw);
    if (grid.count != raw || grid.count < 2) {
        throw usage_error(flag + ": grid count must be an integer >= 2");
    }
    return grid;
}

void require_range(const std::string& flag, const GridSpec& grid, double lo,
                   double hi, bool open_hi) {
    const double low = std::min(grid.start, grid.stop);
    const double high = std::max(grid.start, grid.stop);
    if (low < lo || high > hi || (open_hi && high >= hi)) {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "%s: values must lie in [%g, %g%s",
                      flag.c_str(), lo, hi, open_hi ? ")" : "]");
        throw usage_error(buf);
    }
}

struct Options {
    std::string quantity = "P";
    int n = 3;
    std::string r = "0.1";
    std::string eta = "1";
    double theta = 0.0;
    double phi = 0.0;
    double signal_loss = 0.0;
    std::string variant = "transmitted_only";
    std::string eps_over_gamma = "0.01";
    std::string t_sep = "0";
    std::string t_times = "0,0,0";
    std::string out;

    CLI::Option* quantity_opt = nullptr;
    CLI::Option* r_opt = nullptr;
    CLI::Option* eta_opt = nullptr;
    CLI::Option* theta_opt = nullptr;
    CLI::Option* phi_opt = nullptr;
    CLI::Option* signal_loss_opt = nullptr;
    CLI::Option* variant_opt = nullptr;
    CLI::Option* eps_opt = nullptr;
    CLI::Option* t_sep_opt = nullptr;
    CLI::Option* t_times_opt = nullptr;
};

void add_common_flags(CLI::App* cmd, Options& o, bool with_quantity) {
    if (with_quantity) {
        o.quantity_opt =
            cmd->add_option("--quantity", o.quantity,
                            "one of P, P_plus, F, F_plus, F_cw")
                ->capture_default_str();
    }
    cmd->add_option("--N", o.n, "photon number of the target state")
        ->capture_default_str();
    o.r_opt = cmd->add_option(
        "--r", o.r, "squeezing parameter, scalar or start:stop:count");
    o.r_opt->capture_default_str();
    o.eta_opt = cmd->add_option(
        "--eta", o.eta, "detector efficiency, scalar or start:stop:count");
    o.eta_opt->capture_default_str();
    o.theta_opt = cmd->add_option("--theta", o.theta, "relative pump phase")
                      ->capture_default_str();
    o.phi_opt = cmd->add_option(
        "--phi", o.phi,
        "fidelity target phase (default: the heralded state's own phase)");
    o.signal_loss_opt =
        cmd->add_option("--signal-loss", o.signal_loss,
                        "loss applied to both signal beams")
            ->capture_default_str();
    o.variant_opt =
        cmd->add_option("--variant", o.variant,
                        "transmitted_only, reflected or both_arms")
            ->capture_default_str();
    o.eps_opt = cmd->add_option(
        "--eps-over-gamma", o.eps_over_gamma,
        "OPO gain over cavity decay, scalar or start:stop:count");
    o.eps_opt->capture_default_str();
    o.t_sep_opt = cmd->add_option(
        "--t-sep", o.t_sep,
        "symmetric detection-time span in units of 1/gamma, scalar or "
        "start:stop:count");
    o.t_times_opt = cmd->add_option(
        "--t-times", o.t_times,
        "three comma-separated detection times in units of 1/gamma");
    cmd->add_option("--out", o.out, "output file (default: standard output)");
}

// Everything needed to evaluate one point, after grid substitution.
struct Resolved {
    Quantity quantity = Quantity::p;
    int n = 3;
    double r = 0.1;
    double eta = 1.0;
    double theta = 0.0;
    std::optional<double> phi;
    double signal_loss = 0.0;
    noon::Variant variant = noon::Variant::transmitted_only;
    double eps_over_gamma = 0.01;
    std::array<double, 3> times{0.0, 0.0, 0.0};
};

struct Row {
    double value = 0.0;
    bool zero_probability = false;
};

Row evaluate(const Resolved& v) {
    if (v.quantity == Quantity::f_cw) {
        noon::cw::CwParams params;
        params.epsilon = v.eps_over_gamma;
        params.detection_times = v.times;
        try {
            return {noon::cw::cw_fidelity(params), false};
        } catch (const noon::zero_probability_error&) {
            return {std::nan(""), true};
        }
    }

    noon::ProtocolParams params;
    params.n = v.n;
    params.r = v.r;
    params.eta = v.eta;
    params.theta = v.theta;
    params.signal_loss = v.signal_loss;
    params.variant = v.variant;
    if (v.quantity == Quantity::p || v.quantity == Quantity::p_plus) {
        const double prob = noon::protocol_success_probability(params);
        return {prob, prob == 0.0};
    }
    try {
        return {noon::protocol_run(params, v.phi).fidelity, false};
    } catch (const noon::zero_probability_error&) {
        return {std::nan(""), true};
    }
}

std::array<double, 3> parse_times(const std::string& text) {
    std::array<double, 3> times{};
    std::string rest = text;
    for (int i = 0; i < 3; ++i) {
        const auto comma = rest.find(',');
        const bool last = i == 2;
        if (last != (comma == std::string::npos)) {
            throw usage_error("--t-times: expected three comma-separated "
                              "numbers");
        }
        times[i] = parse_number("--t-times", rest.substr(0, comma));
        if (!last) {
            rest = rest.substr(comma + 1);
        }
    }
    return times;
}

struct OpenedOutput {
    FILE* stream = stdout;
    bool owned = false;

    ~OpenedOutput() {
        if (owned) {
            std::fclose(stream);
        }
    }
};

OpenedOutput open_output(const std::string& path) {
    OpenedOutput out;
    if (!path.empty()) {
        out.stream = std::fopen(path.c_str(), "wb");
        if (out.stream == nullptr) {
            throw usage_error("--out: cannot open '" + path + "'");
        }
        out.owned = true;
    }
    return out;
}

int run_sweep(const Options& o, bool require_grid) {
    if (!quantity_names().count(o.quantity)) {
        throw usage_error("--quantity: unknown value '" + o.quantity + "'");
    }
    Resolved v;
    v.quantity = quantity_names().at(o.quantity);
    if (!variant_names().count(o.variant)) {
        throw usage_error("--variant: unknown value '" + o.variant + "'");
    }
    v.variant = variant_names().at(o.variant);
    v.n = o.n;
    v.theta = o.theta;
    v.signal_loss = o.signal_loss;
    if (o.phi_opt->count() > 0) {
        v.phi = o.phi;
    }

    const bool cw = v.quantity == Quantity::f_cw;
    if (cw) {
        for (const CLI::Option* opt :
             {o.r_opt, o.eta_opt, o.theta_opt, o.phi_opt, o.signal_loss_opt,
              o.variant_opt}) {
            if (opt->count() > 0) {
                throw usage_error(opt->get_name() +
                                  ": not a continuous-wave parameter");
            }
        }
        if (v.n != 3) {
            throw usage_error(
                "--N: the continuous-wave fidelity is three-photon only");
        }
    } else {
        for (const CLI::Option* opt : {o.eps_opt, o.t_sep_opt, o.t_times_opt}) {
            if (opt->count() > 0) {
                throw usage_error(opt->get_name() +
                                  ": only applies to --quantity F_cw");
            }
        }
        const bool plus =
            v.quantity == Quantity::p_plus || v.quantity == Quantity::f_plus;
        if (plus) {
            if (o.variant_opt->count() > 0 &&
                v.variant != noon::Variant::both_arms) {
                throw usage_error(
                    "--variant: " + o.quantity + " means both_arms");
            }
            v.variant = noon::Variant::both_arms;
        }
    }
    if (o.t_sep_opt->count() > 0 && o.t_times_opt->count() > 0) {
        throw usage_error("--t-sep and --t-times exclude each other");
    }

    const GridSpec r_grid = parse_grid("--r", o.r);
    const GridSpec eta_grid = parse_grid("--eta", o.eta);
    const GridSpec eps_grid = parse_grid("--eps-over-gamma", o.eps_over_gamma);
    const GridSpec sep_grid = parse_grid("--t-sep", o.t_sep);
    require_range("--r", r_grid, 0.0, 1.0, true);
    require_range("--eta", eta_grid, 0.0, 1.0, false);
    require_range("--eps-over-gamma", eps_grid, 0.0, 0.5, true);
    require_range("--t-sep", sep_grid, 0.0, 1e6, false);

    struct AxisBinding {
        const char* name;
        const GridSpec* grid;
        void (*apply)(Resolved&, double);
    };
    const AxisBinding axes[] = {
        {"r", &r_grid, [](Resolved& t, double x) { t.r = x; }},
        {"eta", &eta_grid, [](Resolved& t, double x) { t.eta = x; }},
        {"eps_over_gamma", &eps_grid,
         [](Resolved& t, double x) { t.eps_over_gamma = x; }},
        {"t_sep", &sep_grid,
         [](Resolved& t, double x) {
             t.times = {-0.5 * x, 0.0, 0.5 * x};
         }},
    };

    const AxisBinding* swept = nullptr;
    for (const AxisBinding& axis : axes) {
        axis.apply(v, axis.grid->start);
        if (axis.grid->is_grid()) {
            if (swept != nullptr) {
                throw usage_error("only one of --r, --eta, --eps-over-gamma, "
                                  "--t-sep may be a grid");
            }
            swept = &axis;
        }
    }
    if (o.t_times_opt->count() > 0) {
        v.times = parse_times(o.t_times);
    }
    if (require_grid && swept == nullptr) {
        throw usage_error("sweep: exactly one of --r, --eta, "
                          "--eps-over-gamma, --t-sep must be a "
                          "start:stop:count grid");
    }
    if (!require_grid && swept != nullptr) {
        throw usage_error("point: grids are not allowed; use sweep");
    }

    const OpenedOutput out = open_output(o.out);
    const std::string label = quantity_label(v.quantity);
    if (swept == nullptr) {
        std::fprintf(out.stream, "quantity,value,status\n");
        const Row row = evaluate(v);
        std::fprintf(out.stream, "%s,%.12g,%s\n", label.c_str(), row.value,
                     row.zero_probability ? "zero-probability" : "ok");
        return 0;
    }

    std::fprintf(out.stream, "%s,%s,status\n", swept->name, label.c_str());
    for (int i = 0; i < swept->grid->count; ++i) {
        const double x = swept->grid->at(i);
        swept->apply(v, x);
        const Row row = evaluate(v);
        std::fprintf(out.stream, "%.12g,%.12g,%s\n", x, row.value,
                     row.zero_probability ? "zero-probability" : "ok");
    }
    return 0;
}

int run_table1(const std::string& lambda_text, const std::string& out_path) {
    const GridSpec grid = parse_grid("--lambda", lambda_text);
    require_range("--lambda", grid, 0.0, 1e6, false);
    const OpenedOutput out = open_output(out_path);

    std::fprintf(out.stream, "lambda");
    for (const char* name :
         {"P1", "P2", "P3", "P4", "P1_plus", "P3_plus"}) {
        std::fprintf(out.stream, ",%s,%s_closed,%s_diff", name, name, name);
    }
    std::fprintf(out.stream, "\n");

    for (int i = 0; i < grid.count; ++i) {
        const double lambda = grid.at(i);
        noon::ProtocolParams p;
        p.r = std::sqrt(lambda / (1.0 + lambda));
        p.eta = 1.0;

        const auto machinery = [&p](int n, noon::Variant variant) {
            noon::ProtocolParams q = p;
            q.n = n;
            q.variant = variant;
            return noon::protocol_success_probability(q);
        };
        const double rows[6][2] = {
            {machinery(1, noon::Variant::transmitted_only),
             noon::closed_form_p1(lambda)},
            {machinery(2, noon::Variant::transmitted_only),
             noon::closed_form_p2(lambda)},
            {machinery(3, noon::Variant::transmitted_only),
             noon::closed_form_p3(lambda)},
            {machinery(4, noon::Variant::transmitted_only),
             noon::closed_form_p4(lambda)},
            {machinery(1, noon::Variant::both_arms),
             noon::closed_form_p1_plus(lambda)},
            {machinery(3, noon::Variant::both_arms),
             noon::closed_form_p3_plus(lambda)},
        };
        std::fprintf(out.stream, "%.12g", lambda);
        for (const auto& pair : rows) {
            std::fprintf(out.stream, ",%.12g,%.12g,%.12g", pair[0], pair[1],
                         std::abs(pair[0] - pair[1]));
        }
        std::fprintf(out.stream, "\n");
    }
    return 0;
}

int run_verify(bool perturb) {
    const std::vector<noon::CheckResult> results = noon::run_verification(
        perturb ? noon::Perturbation::flip_pump_phase
                : noon::Perturbation::none);
    bool all_passed = true;
    for (const noon::CheckResult& check : results) {
        std::printf("%s  %-30s %s\n", check.passed ? "PASS" : "FAIL",
                    check.name.c_str(), check.detail.c_str());
        all_passed = all_passed && check.passed;
    }
    std::printf("%s\n", all_passed ? "all checks passed"
                                   : "verification failed");
    return all_passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "Heralded generation of path-entangled NOON states from two "
        "optical parametric oscillators: success probabilities, "
        "fidelities and the continuous-wave limit, as CSV."};
    app.require_subcommand(1);

    Options sweep_opt;
    CLI::App* sweep = app.add_subcommand(
        "sweep",
        "Sweep one axis (--r, --eta, --eps-over-gamma or --t-sep given as "
        "start:stop:count) and print one CSV row per grid point, e.g. "
        "success probability or fidelity against the squeezing parameter.");
    add_common_flags(sweep, sweep_opt, true);

    Options point_opt;
    CLI::App* point = app.add_subcommand(
        "point", "Evaluate one quantity at a single parameter point.");
    add_common_flags(point, point_opt, true);

    Options cw_opt;
    cw_opt.quantity = "F_cw";
    CLI::App* cw_sweep = app.add_subcommand(
        "cw-sweep",
        "Sweep the continuous-wave fidelity against --eps-over-gamma or "
        "--t-sep; shorthand for sweep --quantity F_cw.");
    add_common_flags(cw_sweep, cw_opt, false);

    std::string lambda_text = "0:2:21";
    std::string table_out;
    CLI::App* table1 = app.add_subcommand(
        "table1",
        "Print the success probabilities P1..P4, P1_plus and P3_plus from "
        "the determinant machinery next to their closed forms and the "
        "absolute differences, on a herald-strength grid.");
    table1->add_option("--lambda", lambda_text,
                       "herald strength grid, scalar or start:stop:count")
        ->capture_default_str();
    table1->add_option("--out", table_out,
                       "output file (default: standard output)");

    bool perturb = false;
    CLI::App* verify = app.add_subcommand(
        "verify",
        "Run the closed-form and cross-formalism self-checks; print one "
        "line per check and exit 0 only if every check passes.");
    verify->add_flag("--perturb-sign", perturb,
                     "test hook: flip the pump phase convention, which must "
                     "make the fidelity checks fail");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    }

    try {
        if (*sweep) {
            return run_sweep(sweep_opt, true);
        }
        if (*point) {
            return run_sweep(point_opt, false);
        }
        if (*cw_sweep) {
            return run_sweep(cw_opt, true);
        }
        if (*table1) {
            return run_table1(lambda_text, table_out);
        }
        return run_verify(perturb);
    } catch (const usage_error& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }
}
