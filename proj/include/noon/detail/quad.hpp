#pragma once

#include <cmath>
#include <vector>

#include <quadmath.h>

namespace noon::detail {

using f128 = __float128;

// Scalar shims so the numeric kernels below can be instantiated for
// double and, when a sum cancels too strongly, for __float128.
template <class Real>
struct num;

template <>
struct num<double> {
    static double sqrt(double x) { return std::sqrt(x); }
    static double abs(double x) { return std::fabs(x); }
    static double cos(double x) { return std::cos(x); }
    static double sin(double x) { return std::sin(x); }
    static double rotation_tol() { return 1e-15; }
};

template <>
struct num<f128> {
    static f128 sqrt(f128 x) { return ::sqrtq(x); }
    static f128 abs(f128 x) { return ::fabsq(x); }
    static f128 cos(f128 x) { return ::cosq(x); }
    static f128 sin(f128 x) { return ::sinq(x); }
    static f128 rotation_tol() { return f128(1e-30); }
};

// Minimal complex arithmetic over a generic real scalar.  std::complex
// is only specified for the standard floating point types, so the quad
// precision path needs its own type.
template <class Real>
struct cplx {
    Real re{};
    Real im{};

    cplx() = default;
    cplx(Real r, Real i) : re(r), im(i) {}
    explicit cplx(Real r) : re(r), im(Real(0)) {}

    friend cplx operator+(cplx a, cplx b) { return {a.re + b.re, a.im + b.im}; }
    friend cplx operator-(cplx a, cplx b) { return {a.re - b.re, a.im - b.im}; }
    friend cplx operator*(cplx a, cplx b) {
        return {a.re * b.re - a.im * b.im, a.re * b.im + a.im * b.re};
    }
    friend cplx operator*(Real s, cplx a) { return {s * a.re, s * a.im}; }
    cplx& operator+=(cplx o) {
        re += o.re;
        im += o.im;
        return *this;
    }
};

template <class Real>
cplx<Real> conj(cplx<Real> z) {
    return {z.re, -z.im};
}

template <class Real>
Real abs(cplx<Real> z) {
    return num<Real>::sqrt(z.re * z.re + z.im * z.im);
}

template <class Real, class T>
T pow_int(T base, int k) {
    T out = base;
    if (k == 0) {
        return T(Real(1));
    }
    for (int i = 1; i < k; ++i) {
        out = out * base;
    }
    return out;
}

// Dense symmetric matrices over a generic real scalar, stored row major.
template <class Real>
struct SymMatrix {
    int dim = 0;
    std::vector<Real> data;

    explicit SymMatrix(int d) : dim(d), data(static_cast<size_t>(d) * d, Real(0)) {}
    Real& operator()(int i, int j) { return data[static_cast<size_t>(i) * dim + j]; }
    Real operator()(int i, int j) const {
        return data[static_cast<size_t>(i) * dim + j];
    }
};

template <class Real>
SymMatrix<Real> matmul(const SymMatrix<Real>& a, const SymMatrix<Real>& b) {
    const int d = a.dim;
    SymMatrix<Real> out(d);
    for (int i = 0; i < d; ++i) {
        for (int k = 0; k < d; ++k) {
            const Real aik = a(i, k);
            for (int j = 0; j < d; ++j) {
                out(i, j) += aik * b(k, j);
            }
        }
    }
    return out;
}

template <class Real>
struct SymmetricEigen {
    std::vector<Real> values;
    SymMatrix<Real> vectors;  // columns are eigenvectors
};

// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
// Rotations act exactly on pairs, so clustered eigenvalues keep their
// invariant subspaces to the working precision of the scalar.
template <class Real>
SymmetricEigen<Real> jacobi_eigen(SymMatrix<Real> a) {
    const int d = a.dim;
    SymmetricEigen<Real> out{std::vector<Real>(d), SymMatrix<Real>(d)};
    for (int i = 0; i < d; ++i) {
        out.vectors(i, i) = Real(1);
    }

    Real scale(0);
    for (int i = 0; i < d; ++i) {
        scale = scale > num<Real>::abs(a(i, i)) ? scale : num<Real>::abs(a(i, i));
        for (int j = i + 1; j < d; ++j) {
            scale = scale > num<Real>::abs(a(i, j)) ? scale : num<Real>::abs(a(i, j));
        }
    }
    if (!(scale > Real(0))) {
        return out;
    }

    const Real eps = num<Real>::rotation_tol();
    for (int sweep = 0; sweep < 60; ++sweep) {
        Real off(0);
        for (int i = 0; i < d; ++i) {
            for (int j = i + 1; j < d; ++j) {
                off = off > num<Real>::abs(a(i, j)) ? off : num<Real>::abs(a(i, j));
            }
        }
        if (off <= eps * scale) {
            break;
        }
        for (int p = 0; p < d; ++p) {
            for (int q = p + 1; q < d; ++q) {
                if (num<Real>::abs(a(p, q)) <= eps * scale) {
                    continue;
                }
                const Real theta = (a(q, q) - a(p, p)) / (Real(2) * a(p, q));
                const Real t = (theta >= Real(0) ? Real(1) : Real(-1)) /
                               (num<Real>::abs(theta) +
                                num<Real>::sqrt(theta * theta + Real(1)));
                const Real c = Real(1) / num<Real>::sqrt(t * t + Real(1));
                const Real s = t * c;
                for (int i = 0; i < d; ++i) {
                    const Real aip = a(i, p);
                    const Real aiq = a(i, q);
                    a(i, p) = c * aip - s * aiq;
                    a(i, q) = s * aip + c * aiq;
                }
                for (int i = 0; i < d; ++i) {
                    const Real api = a(p, i);
                    const Real aqi = a(q, i);
                    a(p, i) = c * api - s * aqi;
                    a(q, i) = s * api + c * aqi;
                    const Real vip = out.vectors(i, p);
                    const Real viq = out.vectors(i, q);
                    out.vectors(i, p) = c * vip - s * viq;
                    out.vectors(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    for (int i = 0; i < d; ++i) {
        out.values[i] = a(i, i);
    }
    return out;
}

// q f(diag) q^T for a spectral function given as per-eigenvalue factors.
template <class Real>
SymMatrix<Real> spectral_apply(const SymmetricEigen<Real>& eig,
                               const std::vector<Real>& factors) {
    const int d = eig.vectors.dim;
    SymMatrix<Real> out(d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            Real sum(0);
            for (int k = 0; k < d; ++k) {
                sum += eig.vectors(i, k) * factors[k] * eig.vectors(j, k);
            }
            out(i, j) = sum;
        }
    }
    return out;
}

} // namespace noon::detail
