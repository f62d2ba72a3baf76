#pragma once

// Shared test fixtures: a deterministic RNG, finite-difference oracles that
// are independent of the jet propagation, a random expression generator, the
// quadric test battery, and generators for constructed stationary problems.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "curvcheck/curvcheck.hpp"

namespace testutil {

using curvcheck::Expression;
using curvcheck::eval_value;

// splitmix64: identical output on every platform, unlike <random>
// distributions.
struct Rng {
    std::uint64_t state;

    explicit Rng(std::uint64_t seed) : state(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }
    double uniform(double a, double b) { return a + (b - a) * uniform01(); }
    int below(int k) { return static_cast<int>(next() % static_cast<std::uint64_t>(k)); }

    Eigen::VectorXd vector(int n, double a, double b) {
        Eigen::VectorXd v(n);
        for (int i = 0; i < n; ++i) v[i] = uniform(a, b);
        return v;
    }
};

// ---- finite-difference oracles over eval_value ----

inline std::optional<double> try_value(const Expression& e, const Eigen::VectorXd& x) {
    try {
        return eval_value(e, x);
    } catch (const curvcheck::Error&) {
        return std::nullopt;
    }
}

inline std::optional<Eigen::VectorXd> fd_gradient(const Expression& e, const Eigen::VectorXd& x,
                                                  double h = 1e-5) {
    const int n = static_cast<int>(x.size());
    Eigen::VectorXd g(n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const auto fp = try_value(e, xp), fm = try_value(e, xm);
        if (!fp || !fm) return std::nullopt;
        g[i] = (*fp - *fm) / (2.0 * h);
    }
    return g;
}

inline std::optional<Eigen::MatrixXd> fd_hessian(const Expression& e, const Eigen::VectorXd& x,
                                                 double h = 1e-5) {
    const int n = static_cast<int>(x.size());
    const auto f0 = try_value(e, x);
    if (!f0) return std::nullopt;
    Eigen::MatrixXd H(n, n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd xp = x, xm = x;
        xp[i] += h;
        xm[i] -= h;
        const auto fp = try_value(e, xp), fm = try_value(e, xm);
        if (!fp || !fm) return std::nullopt;
        H(i, i) = (*fp - 2.0 * *f0 + *fm) / (h * h);
        for (int j = 0; j < i; ++j) {
            Eigen::VectorXd xpp = x, xpm = x, xmp = x, xmm = x;
            xpp[i] += h; xpp[j] += h;
            xpm[i] += h; xpm[j] -= h;
            xmp[i] -= h; xmp[j] += h;
            xmm[i] -= h; xmm[j] -= h;
            const auto a = try_value(e, xpp), b = try_value(e, xpm);
            const auto c = try_value(e, xmp), d = try_value(e, xmm);
            if (!a || !b || !c || !d) return std::nullopt;
            H(i, j) = H(j, i) = (*a - *b - *c + *d) / (4.0 * h * h);
        }
    }
    return H;
}

// ---- random expression sources ----
//
// Domain-restricted functions are generated in always-safe shapes
// (log(u^2 + c), sqrt(u^2 + c), u / (w^2 + c)) so random points stay inside
// the domain of every subexpression.

inline std::string fmt_const(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

inline std::string random_expr(Rng& rng, int n, int depth) {
    if (depth <= 0) {
        if (rng.below(2) == 0) return "x" + std::to_string(1 + rng.below(n));
        return fmt_const(rng.uniform(0.3, 2.5));
    }
    switch (rng.below(12)) {
        case 0:
            return "(" + random_expr(rng, n, depth - 1) + " + " + random_expr(rng, n, depth - 1) + ")";
        case 1:
            return "(" + random_expr(rng, n, depth - 1) + " - " + random_expr(rng, n, depth - 1) + ")";
        case 2:
            return "(" + random_expr(rng, n, depth - 1) + ")*(" + random_expr(rng, n, depth - 1) + ")";
        case 3:
            return "(" + random_expr(rng, n, depth - 1) + ")/((" + random_expr(rng, n, depth - 1) +
                   ")^2 + " + fmt_const(rng.uniform(0.5, 2.0)) + ")";
        case 4:
            return "-(" + random_expr(rng, n, depth - 1) + ")";
        case 5:
            return "sin(" + random_expr(rng, n, depth - 1) + ")";
        case 6:
            return "cos(" + random_expr(rng, n, depth - 1) + ")";
        case 7:
            return "tanh(" + random_expr(rng, n, depth - 1) + ")";
        case 8:
            return "log((" + random_expr(rng, n, depth - 1) + ")^2 + " +
                   fmt_const(rng.uniform(0.5, 2.0)) + ")";
        case 9:
            return "sqrt((" + random_expr(rng, n, depth - 1) + ")^2 + " +
                   fmt_const(rng.uniform(0.5, 2.0)) + ")";
        case 10:
            return "(" + random_expr(rng, n, depth - 1) + ")^" + std::to_string(2 + rng.below(3));
        default:
            return "((" + random_expr(rng, n, depth - 1) + ")^2 + " +
                   fmt_const(rng.uniform(0.5, 2.0)) + ")^" + fmt_const(rng.uniform(0.4, 1.8));
    }
}

// Accept only expressions whose value stays modest at the probe points so
// the finite-difference comparison is well conditioned.
struct SampledExpr {
    Expression expr;
    Eigen::VectorXd x;
    curvcheck::Jet2 jet;
};

inline std::optional<SampledExpr> sample_checked_expr(Rng& rng, int n, int depth) {
    const std::string src = random_expr(rng, n, depth);
    Expression e;
    try {
        e = curvcheck::parse(src, n);
    } catch (const curvcheck::Error&) {
        return std::nullopt;
    }
    const Eigen::VectorXd x = rng.vector(n, -2.0, 2.0);
    curvcheck::Jet2 jet;
    try {
        jet = curvcheck::eval_jet2(e, x);
    } catch (const curvcheck::Error&) {
        return std::nullopt;
    }
    if (std::abs(jet.value) > 100.0) return std::nullopt;
    if (jet.grad.lpNorm<Eigen::Infinity>() > 100.0) return std::nullopt;
    if (jet.hess.lpNorm<Eigen::Infinity>() > 100.0) return std::nullopt;
    // the FD stencil must stay in-domain and bounded too
    for (int i = 0; i < n; ++i) {
        for (double s : {-1.0, 1.0}) {
            Eigen::VectorXd xp = x;
            xp[i] += s * 1e-5;
            const auto v = try_value(e, xp);
            if (!v || std::abs(*v) > 100.0) return std::nullopt;
        }
    }
    return SampledExpr{std::move(e), x, std::move(jet)};
}

// ---- quadric battery ----

struct BatteryProblem {
    std::string name;
    int n = 0, m = 0;
    std::string f;
    std::vector<std::string> g;
    Eigen::VectorXd x_star;
    bool quadratic_affine = false;  // quadratic objective, affine constraints
};

inline Eigen::VectorXd vec(std::initializer_list<double> vals) {
    Eigen::VectorXd v(static_cast<int>(vals.size()));
    int i = 0;
    for (double x : vals) v[i++] = x;
    return v;
}

inline std::vector<BatteryProblem> quadric_battery() {
    std::vector<BatteryProblem> battery;
    battery.push_back({"sphere3_min", 3, 1, "x1", {"x1^2 + x2^2 + x3^2 - 1"}, vec({-1, 0, 0})});
    battery.push_back({"sphere3_max", 3, 1, "x1", {"x1^2 + x2^2 + x3^2 - 1"}, vec({1, 0, 0})});
    battery.push_back(
        {"sphere5_min", 5, 1, "x1", {"x1^2 + x2^2 + x3^2 + x4^2 + x5^2 - 1"}, vec({-1, 0, 0, 0, 0})});
    battery.push_back({"cylinder3", 3, 1, "x1", {"x1^2 + x2^2 - 1"}, vec({-1, 0, 0})});
    battery.push_back({"ellipsoid3", 3, 1, "x1", {"x1^2/4 + x2^2 + x3^2 - 1"}, vec({-2, 0, 0})});
    battery.push_back({"paraboloid3", 3, 1, "x3", {"x3 - x1^2 - x2^2"}, vec({0, 0, 0})});
    battery.push_back({"circle2", 2, 1, "x2", {"x1^2 + x2^2 - 1"}, vec({0, -1})});
    battery.push_back({"line2", 2, 1, "x1^2 + x2^2", {"x1 + x2 - 2"}, vec({1, 1}), true});
    battery.push_back({"hyperplane5",
                       5,
                       2,
                       "x1^2 + (x2+1)^2 + (x3+1)^2 + (x4+2)^2 + (x5-2)^2",
                       {"x1 + x2 + x3 - 1", "x4 - x5"},
                       vec({1, 0, 0, 0, 0}),
                       true});
    return battery;
}

// Planar instances, one per curvature quadrant, each a strict local
// minimizer whose curvature inequality holds.
inline std::vector<BatteryProblem> quadrant_instances() {
    std::vector<BatteryProblem> qs;
    // kappa_f = 2, kappa_g = 4, same orientation
    qs.push_back({"quadrant_a", 2, 1, "x2 - x1^2", {"x2 - 2*x1^2"}, vec({0, 0})});
    // kappa_f = -2, kappa_g = -1, same orientation
    qs.push_back({"quadrant_b", 2, 1, "x2 + x1^2", {"x2 + 0.5*x1^2"}, vec({0, 0})});
    // kappa_f = 1, kappa_g = -2, opposite orientation
    qs.push_back({"quadrant_c", 2, 1, "x2 - 0.5*x1^2", {"-x2 + x1^2"}, vec({0, 0})});
    // kappa_f = -2, kappa_g = 2, same orientation
    qs.push_back({"quadrant_d", 2, 1, "x2 + x1^2", {"x2 - x1^2"}, vec({0, 0})});
    return qs;
}

inline curvcheck::ProblemDefinition make_problem(const BatteryProblem& bp) {
    curvcheck::ProblemDefinition p;
    p.n = bp.n;
    p.m = bp.m;
    p.f_source = bp.f;
    p.f = curvcheck::parse(bp.f, bp.n);
    for (const std::string& gi : bp.g) {
        p.g_sources.push_back(gi);
        p.g.push_back(curvcheck::parse(gi, bp.n));
    }
    p.x_star = bp.x_star;
    return p;
}

// ---- constructed stationary bundles ----
//
// Random quadratic-plus-quartic objective with mixed affine/quadric
// constraints, assembled so the first-order conditions hold exactly at
// x_star: the linear part of f is chosen as Jg^T lambda minus the rest of
// the gradient.
struct StationaryInstance {
    curvcheck::DerivativeBundle bundle;
    Eigen::VectorXd lambda_true;
};

inline StationaryInstance random_stationary_bundle(Rng& rng, int n, int m) {
    using Eigen::MatrixXd;
    using Eigen::VectorXd;

    curvcheck::DerivativeBundle b;
    const VectorXd x_star = rng.vector(n, -1.0, 1.0);
    b.x = x_star;

    // constraints: affine rows a.x + c or quadrics (x-c)^T Q (x-c) - rho
    b.gvals = VectorXd::Zero(m);
    b.jac_g.resize(m, n);
    for (int i = 0; i < m; ++i) {
        if (rng.below(2) == 0) {
            const VectorXd a = rng.vector(n, -1.0, 1.0);
            b.jac_g.row(i) = a.transpose();
            b.hess_g.push_back(MatrixXd::Zero(n, n));
        } else {
            MatrixXd Q = MatrixXd::Zero(n, n);
            for (int r = 0; r < n; ++r)
                for (int c = 0; c <= r; ++c) Q(r, c) = Q(c, r) = rng.uniform(-0.6, 0.6);
            Q += static_cast<double>(n) * MatrixXd::Identity(n, n) * 0.8;
            const VectorXd center = rng.vector(n, -1.0, 1.0);
            b.jac_g.row(i) = (2.0 * Q * (x_star - center)).transpose();
            b.hess_g.push_back(2.0 * Q);
        }
    }

    // quartic contribution sum_k alpha_k (w_k . (x - p_k))^4; its gradient
    // at x_star is absorbed into the implied linear term of f, so only the
    // Hessian shows up in the bundle
    MatrixXd quartic_hess = MatrixXd::Zero(n, n);
    for (int k = 0; k < 2; ++k) {
        const VectorXd w = rng.vector(n, -1.0, 1.0);
        const VectorXd pk = rng.vector(n, -1.0, 1.0);
        const double alpha = rng.uniform(0.05, 0.3);
        const double s = w.dot(x_star - pk);
        quartic_hess += 12.0 * alpha * s * s * w * w.transpose();
    }

    MatrixXd A = MatrixXd::Zero(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c <= r; ++c) A(r, c) = A(c, r) = rng.uniform(-1.0, 1.0);

    const VectorXd lambda = rng.vector(m, -1.5, 1.5);
    b.grad_f = b.jac_g.transpose() * lambda;  // stationarity, exact by construction
    b.hess_f = A + quartic_hess;
    b.fval = 0.0;

    StationaryInstance inst;
    inst.bundle = std::move(b);
    inst.lambda_true = lambda;
    return inst;
}

}  // namespace testutil
