#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace curvcheck {

// Second-order forward-mode dual number over n variables.
//
// Carries the value, the n first partials, and the lower triangle of the
// n x n Hessian in packed form. Propagating one of these through an
// expression costs O(n^2) per node, which is fine for the intended
// problem sizes (n up to a few dozen).
//
// The value lane performs exactly the same double operations, in the same
// order, as a plain double evaluation of the same expression, so the value
// of a propagated jet agrees bit-for-bit with a scalar evaluation.
class Jet {
public:
    double v = 0.0;
    Eigen::VectorXd g;  // first partials, length n
    Eigen::VectorXd h;  // packed lower triangle of the Hessian, length n*(n+1)/2

    Jet() = default;

    static Jet constant(int n, double value) {
        Jet j;
        j.v = value;
        j.g = Eigen::VectorXd::Zero(n);
        j.h = Eigen::VectorXd::Zero(packed_size(n));
        return j;
    }

    static Jet variable(int n, int index, double value) {
        Jet j = constant(n, value);
        j.g[index] = 1.0;
        return j;
    }

    int dim() const { return static_cast<int>(g.size()); }

    static Eigen::Index packed_size(int n) {
        return static_cast<Eigen::Index>(n) * (n + 1) / 2;
    }

    static Eigen::Index packed_index(int i, int j) {
        if (i < j) std::swap(i, j);
        return static_cast<Eigen::Index>(i) * (i + 1) / 2 + j;
    }

    double hess(int i, int j) const { return h[packed_index(i, j)]; }

    // Full symmetric matrix, mirrored from the packed triangle so that
    // H(i,j) and H(j,i) are the same double.
    Eigen::MatrixXd hessian() const {
        const int n = dim();
        Eigen::MatrixXd H(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j)
                H(i, j) = H(j, i) = h[packed_index(i, j)];
        return H;
    }

    bool all_finite() const {
        return std::isfinite(v) && g.allFinite() && h.allFinite();
    }

    bool derivatives_all_zero() const {
        return g.isZero(0.0) && h.isZero(0.0);
    }

    friend Jet operator-(const Jet& a) {
        Jet r;
        r.v = -a.v;
        r.g = -a.g;
        r.h = -a.h;
        return r;
    }

    friend Jet operator+(const Jet& a, const Jet& b) {
        Jet r;
        r.v = a.v + b.v;
        r.g = a.g + b.g;
        r.h = a.h + b.h;
        return r;
    }

    friend Jet operator-(const Jet& a, const Jet& b) {
        Jet r;
        r.v = a.v - b.v;
        r.g = a.g - b.g;
        r.h = a.h - b.h;
        return r;
    }

    friend Jet operator*(const Jet& a, const Jet& b) {
        const int n = a.dim();
        Jet r;
        r.v = a.v * b.v;
        r.g.resize(n);
        for (int i = 0; i < n; ++i) r.g[i] = a.g[i] * b.v + a.v * b.g[i];
        r.h.resize(packed_size(n));
        Eigen::Index k = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j, ++k)
                r.h[k] = a.h[k] * b.v + a.v * b.h[k] + a.g[i] * b.g[j] + a.g[j] * b.g[i];
        return r;
    }

    // q = a/b via a = q*b: q' = (a' - q b')/b and
    // q'' = (a'' - q'b' - q'b' - q b'')/b, written out per entry.
    friend Jet operator/(const Jet& a, const Jet& b) {
        const int n = a.dim();
        Jet r;
        r.v = a.v / b.v;
        r.g.resize(n);
        for (int i = 0; i < n; ++i) r.g[i] = (a.g[i] - r.v * b.g[i]) / b.v;
        r.h.resize(packed_size(n));
        Eigen::Index k = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j, ++k)
                r.h[k] = (a.h[k] - r.v * b.h[k] - r.g[i] * b.g[j] - r.g[j] * b.g[i]) / b.v;
        return r;
    }

    // Unary chain rule: given f(a.v), f'(a.v), f''(a.v).
    static Jet chain(const Jet& a, double f0, double f1, double f2) {
        const int n = a.dim();
        Jet r;
        r.v = f0;
        r.g = f1 * a.g;
        r.h.resize(packed_size(n));
        Eigen::Index k = 0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j <= i; ++j, ++k)
                r.h[k] = f1 * a.h[k] + f2 * a.g[i] * a.g[j];
        return r;
    }
};

inline Jet sin(const Jet& a) { return Jet::chain(a, std::sin(a.v), std::cos(a.v), -std::sin(a.v)); }
inline Jet cos(const Jet& a) { return Jet::chain(a, std::cos(a.v), -std::sin(a.v), -std::cos(a.v)); }
inline Jet exp(const Jet& a) {
    const double e = std::exp(a.v);
    return Jet::chain(a, e, e, e);
}
inline Jet log(const Jet& a) { return Jet::chain(a, std::log(a.v), 1.0 / a.v, -1.0 / (a.v * a.v)); }
inline Jet sqrt(const Jet& a) {
    const double s = std::sqrt(a.v);
    return Jet::chain(a, s, 0.5 / s, -0.25 / (s * a.v));
}
inline Jet tanh(const Jet& a) {
    const double t = std::tanh(a.v);
    const double sech2 = 1.0 - t * t;
    return Jet::chain(a, t, sech2, -2.0 * t * sech2);
}

}  // namespace curvcheck
