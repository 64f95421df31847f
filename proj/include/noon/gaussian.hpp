#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <set>
#include <sstream>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

// Gaussian-state toolbox for zero-mean states of n bosonic modes.
//
// Quadrature conventions, used everywhere in this library:
//   x = (a + a^dag)/sqrt(2),   p = (a - a^dag)/(i*sqrt(2))
// Quadratures are interleaved as y = (x_1, p_1, x_2, p_2, ...).  The
// covariance matrix is V_jk = <y_j y_k + y_k y_j>, so vacuum gives the
// identity and the Wigner function of a zero-mean Gaussian state is
//   W(y) = exp(-y^T V^{-1} y) / (pi^n sqrt(det V)).

namespace noon {

using complex_t = std::complex<double>;

// Symplectic form Omega for n modes: direct sum of [[0,1],[-1,0]]
// blocks in the interleaved quadrature ordering.
inline Eigen::MatrixXd symplectic_form(int n_modes) {
    if (n_modes < 1) {
        throw std::invalid_argument("symplectic_form: need at least one mode");
    }
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(2 * n_modes, 2 * n_modes);
    for (int k = 0; k < n_modes; ++k) {
        omega(2 * k, 2 * k + 1) = 1.0;
        omega(2 * k + 1, 2 * k) = -1.0;
    }
    return omega;
}

// Covariance matrix of a zero-mean Gaussian state.  The constructor
// rejects matrices that are not symmetric or that violate the
// uncertainty relation V + i*Omega >= 0 (up to tolerance 1e-10).
class CovarianceMatrix {
public:
    explicit CovarianceMatrix(Eigen::MatrixXd v) : m_v(std::move(v)) {
        if (m_v.rows() != m_v.cols() || m_v.rows() < 2 || m_v.rows() % 2 != 0) {
            throw unphysical_state_error(
                "CovarianceMatrix: dimension must be 2n x 2n with n >= 1");
        }
        const double asym = (m_v - m_v.transpose()).cwiseAbs().maxCoeff();
        if (asym > 1e-9) {
            std::ostringstream msg;
            msg << "CovarianceMatrix: matrix is not symmetric (max asymmetry "
                << asym << ")";
            throw unphysical_state_error(msg.str());
        }
        m_v = ((m_v + m_v.transpose()) / 2.0).eval();

        const int n = static_cast<int>(m_v.rows()) / 2;
        const Eigen::MatrixXcd test =
            m_v.cast<complex_t>() +
            complex_t(0.0, 1.0) * symplectic_form(n).cast<complex_t>();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(test,
                                                               Eigen::EigenvaluesOnly);
        const double min_eig = solver.eigenvalues().minCoeff();
        if (min_eig < -1e-10) {
            std::ostringstream msg;
            msg << "CovarianceMatrix: uncertainty relation violated, "
                << "min eig(V + i*Omega) = " << min_eig;
            throw unphysical_state_error(msg.str());
        }
    }

    int modes() const { return static_cast<int>(m_v.rows()) / 2; }
    const Eigen::MatrixXd& mat() const { return m_v; }

private:
    Eigen::MatrixXd m_v;
};

// Second moments of a zero-mean state in terms of mode operators:
//   a_jk = <c_j^dag c_k>   (hermitian)
//   b_jk = <c_j c_k>       (symmetric)
struct ModeMoments {
    Eigen::MatrixXcd a;
    Eigen::MatrixXcd b;
};

// Convert operator moments to a quadrature covariance matrix.  For the
// conventions above,
//   V[x_j x_k] = delta_jk + 2 Re a_jk + 2 Re b_jk
//   V[p_j p_k] = delta_jk + 2 Re a_jk - 2 Re b_jk
//   V[x_j p_k] = 2 (Im a_jk + Im b_jk)
//   V[p_j x_k] = 2 (Im b_jk - Im a_jk)
inline CovarianceMatrix moments_to_covariance(const ModeMoments& moments) {
    const Eigen::MatrixXcd& a = moments.a;
    const Eigen::MatrixXcd& b = moments.b;
    if (a.rows() != a.cols() || b.rows() != b.cols() || a.rows() != b.rows() ||
        a.rows() < 1) {
        throw invalid_moments_error(
            "moments_to_covariance: a and b must be square and equally sized");
    }
    const double herm = (a - a.adjoint()).cwiseAbs().maxCoeff();
    if (herm > 1e-9) {
        std::ostringstream msg;
        msg << "moments_to_covariance: <c^dag c> block is not hermitian "
            << "(max deviation " << herm << ")";
        throw invalid_moments_error(msg.str());
    }
    const double sym = (b - b.transpose()).cwiseAbs().maxCoeff();
    if (sym > 1e-9) {
        std::ostringstream msg;
        msg << "moments_to_covariance: <c c> block is not symmetric "
            << "(max deviation " << sym << ")";
        throw invalid_moments_error(msg.str());
    }

    const int n = static_cast<int>(a.rows());
    Eigen::MatrixXd v(2 * n, 2 * n);
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
            const double delta = (j == k) ? 1.0 : 0.0;
            v(2 * j, 2 * k) = delta + 2.0 * a(j, k).real() + 2.0 * b(j, k).real();
            v(2 * j + 1, 2 * k + 1) =
                delta + 2.0 * a(j, k).real() - 2.0 * b(j, k).real();
            v(2 * j, 2 * k + 1) = 2.0 * (a(j, k).imag() + b(j, k).imag());
            v(2 * j + 1, 2 * k) = 2.0 * (b(j, k).imag() - a(j, k).imag());
        }
    }
    return CovarianceMatrix(v);
}

// Symplectic matrix of a passive (photon-number preserving) n-mode
// transformation c -> u c with u unitary.  Each complex entry u_jk
// becomes the 2x2 real block [[Re u, -Im u], [Im u, Re u]].
inline Eigen::MatrixXd passive_symplectic(const Eigen::MatrixXcd& u) {
    if (u.rows() != u.cols() || u.rows() < 1) {
        throw std::invalid_argument("passive_symplectic: u must be square");
    }
    const int n = static_cast<int>(u.rows());
    const double unitarity =
        (u * u.adjoint() - Eigen::MatrixXcd::Identity(n, n)).cwiseAbs().maxCoeff();
    if (unitarity > 1e-10) {
        std::ostringstream msg;
        msg << "passive_symplectic: u is not unitary (max deviation "
            << unitarity << ")";
        throw std::invalid_argument(msg.str());
    }
    Eigen::MatrixXd s(2 * n, 2 * n);
    for (int j = 0; j < n; ++j) {
        for (int k = 0; k < n; ++k) {
            s(2 * j, 2 * k) = u(j, k).real();
            s(2 * j, 2 * k + 1) = -u(j, k).imag();
            s(2 * j + 1, 2 * k) = u(j, k).imag();
            s(2 * j + 1, 2 * k + 1) = u(j, k).real();
        }
    }
    return s;
}

namespace detail {

inline void check_mode_index(int n_modes, int mode, const char* who) {
    if (mode < 0 || mode >= n_modes) {
        std::ostringstream msg;
        msg << who << ": mode index " << mode << " out of range for "
            << n_modes << " modes";
        throw std::invalid_argument(msg.str());
    }
}

} // namespace detail

// Beam splitter with reflectivity R acting on modes (i, j) of an
// n-mode system:
//   c_i -> sqrt(1-R) c_i + sqrt(R) c_j
//   c_j -> -sqrt(R) c_i + sqrt(1-R) c_j
// R = 0 is the identity, R = 1 swaps the modes up to a sign.
inline Eigen::MatrixXd beam_splitter(int n_modes, double reflectivity, int i,
                                     int j) {
    detail::check_mode_index(n_modes, i, "beam_splitter");
    detail::check_mode_index(n_modes, j, "beam_splitter");
    if (i == j) {
        throw std::invalid_argument("beam_splitter: modes must be distinct");
    }
    if (reflectivity < 0.0 || reflectivity > 1.0) {
        throw std::invalid_argument(
            "beam_splitter: reflectivity must lie in [0, 1]");
    }
    const double t = std::sqrt(1.0 - reflectivity);
    const double r = std::sqrt(reflectivity);
    Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(n_modes, n_modes);
    u(i, i) = t;
    u(i, j) = r;
    u(j, i) = -r;
    u(j, j) = t;
    return passive_symplectic(u);
}

// Phase shifter c_i -> exp(i*theta) c_i on mode i of an n-mode system.
inline Eigen::MatrixXd phase_shifter(int n_modes, double theta, int i) {
    detail::check_mode_index(n_modes, i, "phase_shifter");
    Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(n_modes, n_modes);
    u(i, i) = std::polar(1.0, theta);
    return passive_symplectic(u);
}

// Polarizing beam splitter oriented at 45 degrees, mixing modes (i, j):
//   transmitted (stays in slot i):  (c_i - c_j)/sqrt(2)
//   reflected   (stays in slot j):  (c_i + c_j)/sqrt(2)
inline Eigen::MatrixXd pbs45(int n_modes, int i, int j) {
    detail::check_mode_index(n_modes, i, "pbs45");
    detail::check_mode_index(n_modes, j, "pbs45");
    if (i == j) {
        throw std::invalid_argument("pbs45: modes must be distinct");
    }
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    Eigen::MatrixXcd u = Eigen::MatrixXcd::Identity(n_modes, n_modes);
    u(i, i) = inv_sqrt2;
    u(i, j) = -inv_sqrt2;
    u(j, i) = inv_sqrt2;
    u(j, j) = inv_sqrt2;
    return passive_symplectic(u);
}

// Conjugate a state by a symplectic transformation: V -> S V S^T.
// S must satisfy S Omega S^T = Omega to tolerance 1e-10.
inline CovarianceMatrix apply_symplectic(const CovarianceMatrix& cov,
                                         const Eigen::MatrixXd& s) {
    if (s.rows() != s.cols() || s.rows() != cov.mat().rows()) {
        throw std::invalid_argument(
            "apply_symplectic: matrix size does not match the state");
    }
    const Eigen::MatrixXd omega = symplectic_form(cov.modes());
    const double dev = (s * omega * s.transpose() - omega).cwiseAbs().maxCoeff();
    if (dev > 1e-10) {
        std::ostringstream msg;
        msg << "apply_symplectic: S does not preserve the symplectic form "
            << "(max deviation " << dev << ")";
        throw std::invalid_argument(msg.str());
    }
    return CovarianceMatrix(s * cov.mat() * s.transpose());
}

// Pure loss channel with transmissivity eta on one mode, realized by a
// beam splitter coupling to vacuum: the mode's own 2x2 block becomes
// eta*V_mm + (1-eta)*I and every cross covariance with that mode is
// scaled by sqrt(eta).
inline CovarianceMatrix apply_loss(const CovarianceMatrix& cov, int mode,
                                   double eta) {
    detail::check_mode_index(cov.modes(), mode, "apply_loss");
    if (eta < 0.0 || eta > 1.0) {
        throw std::invalid_argument("apply_loss: eta must lie in [0, 1]");
    }
    const double root = std::sqrt(eta);
    Eigen::MatrixXd v = cov.mat();
    v.row(2 * mode) *= root;
    v.row(2 * mode + 1) *= root;
    v.col(2 * mode) *= root;
    v.col(2 * mode + 1) *= root;
    v(2 * mode, 2 * mode) += 1.0 - eta;
    v(2 * mode + 1, 2 * mode + 1) += 1.0 - eta;
    return CovarianceMatrix(v);
}

// Reduced state on the listed modes.  The result's mode order follows
// the keep list, so partial_trace(cov, {1, 0}) also swaps the modes.
inline CovarianceMatrix partial_trace(const CovarianceMatrix& cov,
                                      const std::vector<int>& keep) {
    if (keep.empty()) {
        throw std::invalid_argument("partial_trace: keep list is empty");
    }
    std::set<int> seen;
    for (int mode : keep) {
        detail::check_mode_index(cov.modes(), mode, "partial_trace");
        if (!seen.insert(mode).second) {
            throw std::invalid_argument("partial_trace: duplicate mode in keep list");
        }
    }
    const int m = static_cast<int>(keep.size());
    Eigen::MatrixXd v(2 * m, 2 * m);
    for (int j = 0; j < m; ++j) {
        for (int k = 0; k < m; ++k) {
            v.block<2, 2>(2 * j, 2 * k) =
                cov.mat().block<2, 2>(2 * keep[j], 2 * keep[k]);
        }
    }
    return CovarianceMatrix(v);
}

} // namespace noon
