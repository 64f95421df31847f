#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "detail/quad.hpp"
#include "errors.hpp"
#include "gaussian.hpp"
#include "noon_metrics.hpp"
#include "pulsed.hpp"

// Exact Fock-space simulation with a total photon number cutoff.  This
// is a second, independent route to the heralding probabilities and
// fidelities: states are expanded over number states, the linear
// optics act through per-photon-number transfer blocks, and detectors
// become diagonal POVMs.  It also hosts the Williamson machinery that
// turns an arbitrary Gaussian state into such an expansion, which the
// continuous-wave analysis builds on.

namespace noon::fock {

using complex_t = std::complex<double>;

// Number states of a fixed mode count with bounded total photon
// number, ordered lexicographically by occupation.  Ranks are computed
// from precomputed prefix counts.
class FockBasis {
public:
    FockBasis(int n_modes, int max_total)
        : modes_(n_modes), max_total_(max_total) {
        if (n_modes < 1 || n_modes > 12) {
            throw std::invalid_argument("FockBasis: mode count must lie in [1, 12]");
        }
        if (max_total < 0 || max_total > 30) {
            throw std::invalid_argument(
                "FockBasis: photon cutoff must lie in [0, 30]");
        }
        // count_[j][b] = number of j-mode tuples with total at most b.
        count_.assign(static_cast<std::size_t>(n_modes + 1) * (max_total + 1), 1);
        for (int j = 1; j <= n_modes; ++j) {
            for (int b = 0; b <= max_total; ++b) {
                count_at(j, b) = count_at(j - 1, b) +
                                 ((b > 0) ? count_at(j, b - 1) : 0);
            }
        }
        // prefix_[p][b][v] = number of tuples whose entry at position p
        // is below v, given remaining budget b at that position.
        prefix_.assign(static_cast<std::size_t>(n_modes) * (max_total + 1) *
                           (max_total + 1),
                       0);
        for (int p = 0; p < n_modes; ++p) {
            for (int b = 0; b <= max_total; ++b) {
                std::size_t cum = 0;
                for (int v = 0; v <= b; ++v) {
                    prefix_at(p, b, v) = cum;
                    cum += count_at(n_modes - 1 - p, b - v);
                }
            }
        }
    }

    int modes() const { return modes_; }
    int max_total() const { return max_total_; }
    std::size_t size() const { return count_at(modes_, max_total_); }

    std::size_t rank(const std::vector<int>& occ) const {
        if (static_cast<int>(occ.size()) != modes_) {
            throw std::invalid_argument("FockBasis::rank: wrong tuple length");
        }
        std::size_t r = 0;
        int budget = max_total_;
        for (int p = 0; p < modes_; ++p) {
            if (occ[p] < 0 || occ[p] > budget) {
                throw std::invalid_argument(
                    "FockBasis::rank: occupation exceeds the photon budget");
            }
            r += prefix_at(p, budget, occ[p]);
            budget -= occ[p];
        }
        return r;
    }

    std::vector<int> unrank(std::size_t index) const {
        if (index >= size()) {
            throw std::invalid_argument("FockBasis::unrank: index out of range");
        }
        std::vector<int> occ(modes_, 0);
        int budget = max_total_;
        for (int p = 0; p < modes_; ++p) {
            int v = 0;
            while (v < budget && prefix_at(p, budget, v + 1) <= index) {
                ++v;
            }
            index -= prefix_at(p, budget, v);
            occ[p] = v;
            budget -= v;
        }
        return occ;
    }

    // Advance a tuple to its lexicographic successor; false at the end.
    bool next(std::vector<int>& occ, int& total) const {
        if (total < max_total_) {
            ++occ[modes_ - 1];
            ++total;
            return true;
        }
        int p = modes_ - 1;
        while (p >= 0 && occ[p] == 0) {
            --p;
        }
        if (p <= 0) {
            return false;
        }
        total -= occ[p] - 1;
        occ[p] = 0;
        ++occ[p - 1];
        return true;
    }

private:
    std::size_t& count_at(int j, int b) {
        return count_[static_cast<std::size_t>(j) * (max_total_ + 1) + b];
    }
    std::size_t count_at(int j, int b) const {
        return count_[static_cast<std::size_t>(j) * (max_total_ + 1) + b];
    }
    std::size_t& prefix_at(int p, int b, int v) {
        return prefix_[(static_cast<std::size_t>(p) * (max_total_ + 1) + b) *
                           (max_total_ + 1) +
                       v];
    }
    std::size_t prefix_at(int p, int b, int v) const {
        return prefix_[(static_cast<std::size_t>(p) * (max_total_ + 1) + b) *
                           (max_total_ + 1) +
                       v];
    }

    int modes_;
    int max_total_;
    std::vector<std::size_t> count_;
    std::vector<std::size_t> prefix_;
};

struct FockState {
    explicit FockState(FockBasis b)
        : basis(std::move(b)), amp(basis.size(), complex_t(0.0)) {}

    FockBasis basis;
    std::vector<complex_t> amp;
};

struct FockExpansion {
    FockState state;
    double deficit;  // squared norm lost to the photon number cutoff
};

namespace detail {

inline void check_mode(const FockBasis& basis, int mode, const char* who) {
    if (mode < 0 || mode >= basis.modes()) {
        throw std::invalid_argument(std::string(who) +
                                    ": mode index out of range");
    }
}

inline std::vector<double> sqrt_factorials(int max_n) {
    std::vector<double> s(max_n + 1, 1.0);
    for (int n = 1; n <= max_n; ++n) {
        s[n] = s[n - 1] * std::sqrt(double(n));
    }
    return s;
}

inline complex_t int_pow(complex_t base, int exponent) {
    complex_t out(1.0);
    for (int k = 0; k < exponent; ++k) {
        out *= base;
    }
    return out;
}

} // namespace detail

// Transfer blocks of a two-mode passive transformation u, one per
// total photon number t: block[t](k_out, k_in) is the amplitude to go
// from |k_in, t - k_in> to |k_out, t - k_out>.  The unitary acts on
// creation operators as U c_i^dag U^dag = sum_j u_{ji} c_j^dag.
inline std::vector<Eigen::MatrixXcd> two_mode_blocks(const Eigen::Matrix2cd& u,
                                                     int max_total) {
    if ((u.adjoint() * u - Eigen::Matrix2cd::Identity()).cwiseAbs().maxCoeff() >
        1e-10) {
        throw std::invalid_argument("two_mode_blocks: matrix is not unitary");
    }
    const std::vector<double> sf = detail::sqrt_factorials(max_total);
    std::vector<Eigen::MatrixXcd> blocks(max_total + 1);
    for (int t = 0; t <= max_total; ++t) {
        blocks[t] = Eigen::MatrixXcd::Zero(t + 1, t + 1);
        for (int k = 0; k <= t; ++k) {
            // (u00 a^dag + u10 b^dag)^k (u01 a^dag + u11 b^dag)^(t-k)
            std::vector<complex_t> first(k + 1);
            for (int p = 0; p <= k; ++p) {
                first[p] = noon::detail::binomial(k, p) *
                           detail::int_pow(u(0, 0), p) *
                           detail::int_pow(u(1, 0), k - p);
            }
            std::vector<complex_t> second(t - k + 1);
            for (int q = 0; q <= t - k; ++q) {
                second[q] = noon::detail::binomial(t - k, q) *
                            detail::int_pow(u(0, 1), q) *
                            detail::int_pow(u(1, 1), t - k - q);
            }
            for (int p = 0; p <= k; ++p) {
                for (int q = 0; q <= t - k; ++q) {
                    const int out = p + q;
                    blocks[t](out, k) += first[p] * second[q] * sf[out] *
                                         sf[t - out] / (sf[k] * sf[t - k]);
                }
            }
        }
    }
    return blocks;
}

// Apply a two-mode passive transformation to modes (i, j) of a state.
inline void apply_two_mode(FockState& state, const Eigen::Matrix2cd& u, int i,
                           int j) {
    detail::check_mode(state.basis, i, "apply_two_mode");
    detail::check_mode(state.basis, j, "apply_two_mode");
    if (i == j) {
        throw std::invalid_argument("apply_two_mode: modes must be distinct");
    }
    const FockBasis& basis = state.basis;
    const std::vector<Eigen::MatrixXcd> blocks =
        two_mode_blocks(u, basis.max_total());

    std::vector<complex_t> out(state.amp.size(), complex_t(0.0));
    std::vector<int> occ(basis.modes(), 0);
    std::vector<int> probe(basis.modes(), 0);
    int total = 0;
    std::size_t idx = 0;
    do {
        const int t = occ[i] + occ[j];
        if (t == 0) {
            out[idx] = state.amp[idx];
        } else {
            probe = occ;
            complex_t acc(0.0);
            const Eigen::MatrixXcd& block = blocks[t];
            for (int k = 0; k <= t; ++k) {
                const complex_t c = block(occ[i], k);
                if (c == complex_t(0.0)) {
                    continue;
                }
                probe[i] = k;
                probe[j] = t - k;
                acc += c * state.amp[basis.rank(probe)];
            }
            out[idx] = acc;
        }
        ++idx;
    } while (basis.next(occ, total));
    state.amp.swap(out);
}

// Apply a phase shift exp(i theta n) to one mode.
inline void apply_phase(FockState& state, double theta, int mode) {
    detail::check_mode(state.basis, mode, "apply_phase");
    const FockBasis& basis = state.basis;
    std::vector<complex_t> phases(basis.max_total() + 1);
    for (int n = 0; n <= basis.max_total(); ++n) {
        phases[n] = std::polar(1.0, theta * n);
    }
    std::vector<int> occ(basis.modes(), 0);
    int total = 0;
    std::size_t idx = 0;
    do {
        state.amp[idx] *= phases[occ[mode]];
        ++idx;
    } while (basis.next(occ, total));
}

// Apply the annihilation operator of one mode.  Components at the
// photon cutoff have no predecessor inside the basis and come out
// zero, consistent with the truncation.
inline void apply_annihilation(FockState& state, int mode) {
    detail::check_mode(state.basis, mode, "apply_annihilation");
    const FockBasis& basis = state.basis;
    std::vector<int> occ(basis.modes(), 0);
    std::vector<int> probe(basis.modes(), 0);
    int total = 0;
    std::size_t idx = 0;
    do {
        if (total == basis.max_total()) {
            state.amp[idx] = complex_t(0.0);
        } else {
            probe = occ;
            ++probe[mode];
            state.amp[idx] =
                std::sqrt(double(probe[mode])) * state.amp[basis.rank(probe)];
        }
        ++idx;
    } while (basis.next(occ, total));
}

// Truncated product of two two-mode squeezed vacua on modes (0, 1) and
// (2, 3); any further modes start in vacuum.  The kept amplitudes are
// exact, so the squared norm falls short of one by the reported
// deficit.
inline FockExpansion two_opo_initial(const FockBasis& basis, double r) {
    if (basis.modes() < 4) {
        throw std::invalid_argument("two_opo_initial: need at least four modes");
    }
    if (!(r >= 0.0 && r < 1.0)) {
        throw std::invalid_argument("two_opo_initial: r must lie in [0, 1)");
    }
    FockState state(basis);
    const double norm = 1.0 - r * r;
    const int max_pairs = basis.max_total() / 2;
    std::vector<int> occ(basis.modes(), 0);
    double kept = 0.0;
    for (int na = 0; na <= max_pairs; ++na) {
        for (int nb = 0; na + nb <= max_pairs; ++nb) {
            occ[0] = na;
            occ[1] = na;
            occ[2] = nb;
            occ[3] = nb;
            const double a = norm * std::pow(r, na + nb);
            state.amp[basis.rank(occ)] = a;
            kept += a * a;
        }
    }
    return FockExpansion{std::move(state), 1.0 - kept};
}

// Detector pattern for reduce_on_off: listed modes must fire (click)
// or stay dark (silent); every other non-signal mode is traced out.
struct HeraldSpec {
    std::vector<int> click;
    std::vector<int> silent;
    double efficiency = 1.0;
};

struct FockConditioned {
    double probability;    // weight of the pattern within the truncated state
    Eigen::MatrixXcd rho;  // normalized signal density matrix
};

// Project a pure state onto a click/no-click pattern of on/off
// detectors with the given efficiency and return the normalized
// two-mode signal density matrix, indexed by FockBasis(2, max_total).
inline FockConditioned reduce_on_off(const FockState& psi,
                                     const HeraldSpec& herald, int signal_a,
                                     int signal_b) {
    const FockBasis& basis = psi.basis;
    detail::check_mode(basis, signal_a, "reduce_on_off");
    detail::check_mode(basis, signal_b, "reduce_on_off");
    if (signal_a == signal_b) {
        throw std::invalid_argument("reduce_on_off: signal modes must differ");
    }
    if (herald.efficiency < 0.0 || herald.efficiency > 1.0) {
        throw std::invalid_argument(
            "reduce_on_off: efficiency must lie in [0, 1]");
    }
    std::vector<int> field_of(basis.modes(), -1);
    int n_fields = 0;
    for (int m = 0; m < basis.modes(); ++m) {
        if (m != signal_a && m != signal_b) {
            field_of[m] = n_fields++;
        }
    }
    const auto field_list = [&](const std::vector<int>& modes, const char* kind) {
        std::vector<int> fields;
        for (int m : modes) {
            detail::check_mode(basis, m, "reduce_on_off");
            if (field_of[m] < 0) {
                throw std::invalid_argument(
                    std::string("reduce_on_off: ") + kind +
                    " list may not contain a signal mode");
            }
            fields.push_back(field_of[m]);
        }
        return fields;
    };
    const std::vector<int> click_fields = field_list(herald.click, "click");
    const std::vector<int> silent_fields = field_list(herald.silent, "silent");

    struct Entry {
        std::uint64_t key;
        std::uint32_t sig;
        complex_t amp;
    };
    const FockBasis signal_basis(2, basis.max_total());
    std::vector<Entry> entries;
    std::vector<int> occ(basis.modes(), 0);
    std::vector<int> sig_occ(2, 0);
    int total = 0;
    std::size_t idx = 0;
    do {
        const complex_t a = psi.amp[idx];
        ++idx;
        if (a == complex_t(0.0)) {
            continue;
        }
        std::uint64_t key = 0;
        for (int m = 0; m < basis.modes(); ++m) {
            if (field_of[m] >= 0) {
                key |= static_cast<std::uint64_t>(occ[m]) << (5 * field_of[m]);
            }
        }
        sig_occ[0] = occ[signal_a];
        sig_occ[1] = occ[signal_b];
        entries.push_back(Entry{
            key, static_cast<std::uint32_t>(signal_basis.rank(sig_occ)), a});
    } while (basis.next(occ, total));

    std::sort(entries.begin(), entries.end(),
              [](const Entry& x, const Entry& y) { return x.key < y.key; });

    const double miss = 1.0 - herald.efficiency;
    std::vector<double> dark(basis.max_total() + 1, 1.0);
    for (int n = 1; n <= basis.max_total(); ++n) {
        dark[n] = dark[n - 1] * miss;
    }

    Eigen::MatrixXcd rho =
        Eigen::MatrixXcd::Zero(signal_basis.size(), signal_basis.size());
    std::size_t lo = 0;
    while (lo < entries.size()) {
        std::size_t hi = lo;
        while (hi < entries.size() && entries[hi].key == entries[lo].key) {
            ++hi;
        }
        double w = 1.0;
        for (int f : click_fields) {
            w *= 1.0 - dark[(entries[lo].key >> (5 * f)) & 31u];
        }
        for (int f : silent_fields) {
            w *= dark[(entries[lo].key >> (5 * f)) & 31u];
        }
        if (w != 0.0) {
            for (std::size_t i = lo; i < hi; ++i) {
                const complex_t wa = w * entries[i].amp;
                for (std::size_t j = lo; j < hi; ++j) {
                    rho(entries[i].sig, entries[j].sig) +=
                        wa * std::conj(entries[j].amp);
                }
            }
        }
        lo = hi;
    }

    const double probability = rho.trace().real();
    if (!(probability > 0.0)) {
        throw zero_probability_error(
            "reduce_on_off: herald pattern has zero probability");
    }
    rho /= probability;
    return FockConditioned{probability, std::move(rho)};
}

// Loss channel of the given transmittance on one mode of a two-mode
// density matrix indexed by signal_basis.
inline Eigen::MatrixXcd apply_signal_loss(const Eigen::MatrixXcd& rho,
                                          const FockBasis& signal_basis,
                                          double transmittance, int mode) {
    if (signal_basis.modes() != 2) {
        throw std::invalid_argument(
            "apply_signal_loss: expected a two-mode basis");
    }
    detail::check_mode(signal_basis, mode, "apply_signal_loss");
    if (transmittance < 0.0 || transmittance > 1.0) {
        throw std::invalid_argument(
            "apply_signal_loss: transmittance must lie in [0, 1]");
    }
    const int kmax = signal_basis.max_total();
    const std::size_t dim = signal_basis.size();
    std::vector<std::vector<int>> occ_of(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        occ_of[i] = signal_basis.unrank(i);
    }
    // kraus[k][n] = <n - k| A_k |n>
    std::vector<std::vector<double>> kraus(kmax + 1,
                                           std::vector<double>(kmax + 1, 0.0));
    for (int n = 0; n <= kmax; ++n) {
        for (int k = 0; k <= n; ++k) {
            kraus[k][n] = std::sqrt(noon::detail::binomial(n, k) *
                                    std::pow(transmittance, n - k) *
                                    std::pow(1.0 - transmittance, k));
        }
    }
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(dim, dim);
    std::vector<int> shifted(2, 0);
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            const complex_t v = rho(i, j);
            if (v == complex_t(0.0)) {
                continue;
            }
            const int ni = occ_of[i][mode];
            const int nj = occ_of[j][mode];
            for (int k = 0; k <= std::min(ni, nj); ++k) {
                shifted = occ_of[i];
                shifted[mode] = ni - k;
                const std::size_t ii = signal_basis.rank(shifted);
                shifted = occ_of[j];
                shifted[mode] = nj - k;
                const std::size_t jj = signal_basis.rank(shifted);
                out(ii, jj) += kraus[k][ni] * kraus[k][nj] * v;
            }
        }
    }
    return out;
}

// Overlap of a two-mode density matrix with the path-entangled state
// (|n, 0> + e^{i phi} |0, n>)/sqrt(2).
inline double noon_fidelity_fock(const Eigen::MatrixXcd& rho,
                                 const FockBasis& signal_basis, int n,
                                 double phi) {
    if (signal_basis.modes() != 2 || n < 1 || n > signal_basis.max_total()) {
        throw std::invalid_argument(
            "noon_fidelity_fock: need a two-mode basis holding n photons");
    }
    const std::size_t ia = signal_basis.rank({n, 0});
    const std::size_t ib = signal_basis.rank({0, n});
    return 0.5 * (rho(ia, ia).real() + rho(ib, ib).real()) +
           (std::polar(1.0, phi) * rho(ia, ib)).real();
}

struct OracleResult {
    double probability = 0.0;
    double fidelity = std::numeric_limits<double>::quiet_NaN();
    double deficit = 0.0;
};

// Full heralding chain in the Fock basis (n = 1, 2 or 3): the same
// circuit as circuit_covariance, with detector efficiency folded into
// the POVM weights and signal loss applied as a Kraus channel
// afterwards.
inline OracleResult oracle_protocol_run(const ProtocolParams& p, int max_total,
                                        std::optional<double> phi = std::nullopt) {
    validate_params(p);
    if (p.n < 1 || p.n > 3) {
        throw std::invalid_argument(
            "oracle_protocol_run: implemented for n = 1, 2 and 3");
    }
    const FockBasis basis(p.n == 3 ? 8 : 4, max_total);
    FockExpansion prepared = two_opo_initial(basis, p.r);
    FockState& psi = prepared.state;

    const auto bs = [](double reflectivity) {
        const double t = std::sqrt(1.0 - reflectivity);
        const double r = std::sqrt(reflectivity);
        Eigen::Matrix2cd u;
        u << t, r, -r, t;
        return u;
    };
    Eigen::Matrix2cd pbs;
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    pbs << inv_sqrt2, -inv_sqrt2, inv_sqrt2, inv_sqrt2;

    const auto split_three = [&](int src, int anc1, int anc2) {
        apply_two_mode(psi, bs(1.0 / 3.0), src, anc1);
        apply_two_mode(psi, bs(1.0 / 2.0), src, anc2);
        apply_phase(psi, M_PI, anc1);
        apply_phase(psi, M_PI, anc2);
    };
    std::vector<int> h_slot{1};
    std::vector<int> v_slot{2};
    if (p.n == 2) {
        // A single polarizing beam splitter realizes both triggers: its
        // two output ports carry the k = 1, 2 phase pattern at once.
        apply_phase(psi, M_PI + p.theta, 2);
        apply_two_mode(psi, pbs, 1, 2);
        h_slot = {1, 2};
        v_slot.clear();
    } else {
        if (p.n == 3) {
            split_three(1, 4, 5);
            split_three(2, 6, 7);
            h_slot = {1, 4, 5};
            v_slot = {2, 6, 7};
        }
        for (int k = 1; k <= p.n; ++k) {
            const double alpha = 2.0 * M_PI * k / p.n + p.theta;
            apply_phase(psi, alpha, v_slot[k - 1]);
            apply_two_mode(psi, pbs, h_slot[k - 1], v_slot[k - 1]);
        }
    }

    // The both-arms herald accepts two complementary patterns of equal
    // weight; evaluate the all-transmitted one and double the count.
    HeraldSpec herald;
    herald.efficiency = p.eta;
    double pattern_count = 1.0;
    switch (p.variant) {
        case Variant::transmitted_only:
            herald.click = h_slot;
            break;
        case Variant::reflected:
            herald.click = v_slot;
            break;
        case Variant::both_arms:
            herald.click = h_slot;
            herald.silent = v_slot;
            pattern_count = 2.0;
            break;
    }
    const FockConditioned cond = reduce_on_off(psi, herald, 0, 3);

    const FockBasis signal_basis(2, max_total);
    Eigen::MatrixXcd rho = cond.rho;
    if (p.signal_loss > 0.0) {
        rho = apply_signal_loss(rho, signal_basis, 1.0 - p.signal_loss, 0);
        rho = apply_signal_loss(rho, signal_basis, 1.0 - p.signal_loss, 1);
    }

    const double phi_use =
        phi.has_value() ? *phi
                        : (p.variant == Variant::reflected
                               ? optimal_phase_reflected(p.n, p.theta)
                               : optimal_phase(p.n, p.theta));

    OracleResult out;
    out.probability = pattern_count * cond.probability;
    out.fidelity = noon_fidelity_fock(rho, signal_basis, p.n, phi_use);
    out.deficit = prepared.deficit;
    return out;
}

struct WilliamsonDecomposition {
    Eigen::MatrixXd s;     // symplectic, cov = s diag(nu) s^T
    Eigen::VectorXd nu;    // symplectic eigenvalues, one per mode
};

// Williamson normal form of a covariance matrix: V = S D S^T with S
// symplectic and D = diag(nu_1, nu_1, ..., nu_n, nu_n).
inline WilliamsonDecomposition williamson(const CovarianceMatrix& cov) {
    const int n = cov.modes();
    const Eigen::MatrixXd omega = symplectic_form(n);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov.mat());
    const Eigen::MatrixXd root = es.operatorSqrt();
    const Eigen::MatrixXd skew = root * omega * root;

    Eigen::RealSchur<Eigen::MatrixXd> schur(skew);
    Eigen::MatrixXd q = schur.matrixU();
    const Eigen::MatrixXd& t = schur.matrixT();

    WilliamsonDecomposition out;
    out.nu.resize(n);
    Eigen::MatrixXd scale = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    for (int k = 0; k < n; ++k) {
        double nu = t(2 * k, 2 * k + 1);
        if (nu < 0.0) {
            q.col(2 * k).swap(q.col(2 * k + 1));
            nu = -nu;
        }
        if (!(nu > 0.5)) {
            throw numeric_degeneracy_error(
                "williamson: symplectic eigenvalue collapsed below the "
                "vacuum floor");
        }
        out.nu(k) = nu;
        const double inv_root = 1.0 / std::sqrt(nu);
        scale(2 * k, 2 * k) = inv_root;
        scale(2 * k + 1, 2 * k + 1) = inv_root;
    }
    out.s = root * q * scale;
    return out;
}

// Purification: a pure 2n-mode covariance matrix whose first n modes
// reduce to the given state.  The ancilla block is the momentum-reversed
// copy of the input and the cross block is a matrix function of the
// covariance, C = V^{1/2} sqrt(I - M^{-1}) V^{1/2} L with M = Z Z^T,
// Z = V^{1/2} Omega V^{1/2} and L the per-mode momentum flip.  The
// eigenvalues of M are the squared symplectic eigenvalues, so the pair
// (V, C) reproduces the two-mode squeezed form in the Williamson basis
// without ever choosing that basis explicitly.
inline CovarianceMatrix purify_covariance(const CovarianceMatrix& cov) {
    using noon::detail::f128;
    namespace quad = noon::detail;
    const int n = cov.modes();
    const int d = 2 * n;

    quad::SymMatrix<f128> v(d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            v(i, j) = f128(cov.mat()(i, j));
        }
    }

    const quad::SymmetricEigen<f128> ev = quad::jacobi_eigen(v);
    std::vector<f128> root_factors(d);
    for (int i = 0; i < d; ++i) {
        const f128 lam = ev.values[i];
        root_factors[i] = ::sqrtq(lam > f128(0) ? lam : f128(0));
    }
    const quad::SymMatrix<f128> root = quad::spectral_apply(ev, root_factors);

    quad::SymMatrix<f128> omega(d);
    for (int k = 0; k < n; ++k) {
        omega(2 * k, 2 * k + 1) = f128(1);
        omega(2 * k + 1, 2 * k) = f128(-1);
    }
    const quad::SymMatrix<f128> z =
        quad::matmul(root, quad::matmul(omega, root));
    quad::SymMatrix<f128> m(d);
    const quad::SymMatrix<f128> zz = quad::matmul(z, z);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            m(i, j) = f128(-0.5) * (zz(i, j) + zz(j, i));
        }
    }

    const quad::SymmetricEigen<f128> ms = quad::jacobi_eigen(m);
    std::vector<f128> squash(d);
    for (int i = 0; i < d; ++i) {
        const f128 nu_sq = ms.values[i];
        if (!(nu_sq > f128(0.25))) {
            throw numeric_degeneracy_error(
                "purify_covariance: symplectic eigenvalue collapsed below "
                "the vacuum floor");
        }
        const f128 gap = f128(1) - f128(1) / nu_sq;
        squash[i] = ::sqrtq(gap > f128(0) ? gap : f128(0));
    }
    const quad::SymMatrix<f128> f_of_m = quad::spectral_apply(ms, squash);
    const quad::SymMatrix<f128> cross =
        quad::matmul(root, quad::matmul(f_of_m, root));

    const auto flip = [](int i) { return (i % 2 == 0) ? 1.0 : -1.0; };
    Eigen::MatrixXd big(2 * d, 2 * d);
    big.topLeftCorner(d, d) = cov.mat();
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            const double c = static_cast<double>(cross(i, j)) * flip(j);
            big(i, d + j) = c;
            big(d + j, i) = c;
            big(d + i, d + j) = flip(i) * flip(j) * cov.mat()(i, j);
        }
    }
    return CovarianceMatrix(big);
}

// Fock expansion of a zero-mean Gaussian state.  Mixed states are
// purified first, so the result may carry n extra ancilla modes at the
// end; the kept amplitudes are exact and the squared norm falls short
// of one by the reported deficit.
inline FockExpansion gaussian_to_fock(const CovarianceMatrix& cov,
                                      int max_total) {
    const WilliamsonDecomposition wd = williamson(cov);
    const bool pure = wd.nu.maxCoeff() <= 1.0 + 1e-8;
    const Eigen::MatrixXd v = pure ? cov.mat() : purify_covariance(cov).mat();
    const int n = static_cast<int>(v.rows()) / 2;

    Eigen::MatrixXcd a(n, n);
    Eigen::MatrixXcd b(n, n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double xx = v(2 * i, 2 * j);
            const double pp = v(2 * i + 1, 2 * j + 1);
            const double xp = v(2 * i, 2 * j + 1);
            const double px = v(2 * i + 1, 2 * j);
            const double delta = (i == j) ? 2.0 : 0.0;
            a(i, j) = complex_t(xx + pp - delta, xp - px) / 4.0;
            b(i, j) = complex_t(xx - pp, xp + px) / 4.0;
        }
    }
    Eigen::MatrixXcd g =
        (Eigen::MatrixXcd::Identity(n, n) + a).transpose().partialPivLu().solve(
            b.transpose()).transpose();
    const double asym = (g - g.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-7) {
        throw numeric_degeneracy_error(
            "gaussian_to_fock: pair matrix is not symmetric");
    }
    g = (g + g.transpose()).eval() / 2.0;

    const double det =
        (Eigen::MatrixXd::Identity(2 * n, 2 * n) + v).determinant();
    const double vacuum_weight = std::pow(2.0, n) / std::sqrt(det);

    FockState state{FockBasis(n, max_total)};
    const FockBasis& basis = state.basis;
    state.amp[0] = std::sqrt(vacuum_weight);

    std::vector<int> occ(n, 0);
    std::vector<int> reduced(n, 0);
    const std::function<void(int, int, int)> fill_shell =
        [&](int pos, int remaining, int first_used) {
            if (pos == n - 1) {
                occ[pos] = remaining;
                const int i = (first_used >= 0) ? first_used : pos;
                reduced = occ;
                --reduced[i];
                complex_t acc(0.0);
                for (int j = 0; j < n; ++j) {
                    if (reduced[j] < 1) {
                        continue;
                    }
                    --reduced[j];
                    acc += g(i, j) * std::sqrt(double(reduced[j] + 1)) *
                           state.amp[basis.rank(reduced)];
                    ++reduced[j];
                }
                state.amp[basis.rank(occ)] = acc / std::sqrt(double(occ[i]));
                return;
            }
            for (int v0 = 0; v0 <= remaining; ++v0) {
                occ[pos] = v0;
                fill_shell(pos + 1, remaining - v0,
                           (first_used < 0 && v0 > 0) ? pos : first_used);
            }
        };
    for (int tau = 2; tau <= max_total; tau += 2) {
        fill_shell(0, tau, -1);
    }

    double kept = 0.0;
    for (const complex_t& c : state.amp) {
        kept += std::norm(c);
    }
    return FockExpansion{std::move(state), 1.0 - kept};
}

} // namespace noon::fock
