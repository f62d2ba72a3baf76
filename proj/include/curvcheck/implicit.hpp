#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "curvcheck/errors.hpp"
#include "curvcheck/expr.hpp"
#include "curvcheck/geometry.hpp"

namespace curvcheck {

struct TraceParams {
    double half_width = 0.5;
    double step = 0.5 / 200;
    double newton_tol = 1e-12;
    int newton_max_iter = 50;
};

// Local feature scale |grad f| / (1 + |H_f|_max) sets the default parameter
// range; 200 steps per side.
inline TraceParams default_trace_params(const DerivativeBundle& b) {
    TraceParams p;
    const double scale = b.grad_f.norm() / (1.0 + b.hess_f.cwiseAbs().maxCoeff());
    if (std::isfinite(scale) && scale > 0.0) p.half_width = 0.5 * scale;
    p.step = p.half_width / 200.0;
    return p;
}

enum class CurveKind { LevelSetF, ConstraintG };

// x(t, b) = x* + t v + N b restricted to residual(x) = 0, solved for the
// normal offsets b by Newton's method. N is grad f(x*) for a level-set
// section and Jg(x*)^T for a constraint section.
class SectionProblem {
public:
    SectionProblem(std::vector<Expression> equations, Eigen::VectorXd targets,
                   Eigen::VectorXd x_star, Eigen::MatrixXd normals)
        : eqs_(std::move(equations)),
          targets_(std::move(targets)),
          x0_(std::move(x_star)),
          normals_(std::move(normals)) {}

    static SectionProblem level_set(const Expression& f, const Eigen::VectorXd& x_star,
                                    const Eigen::VectorXd& grad_f_star) {
        Eigen::VectorXd target(1);
        target[0] = eval_value(f, x_star);
        return SectionProblem({f}, target, x_star, grad_f_star);
    }

    static SectionProblem constraint(const std::vector<Expression>& g,
                                     const Eigen::VectorXd& x_star,
                                     const Eigen::MatrixXd& jac_g_star) {
        return SectionProblem(g, Eigen::VectorXd::Zero(jac_g_star.rows()), x_star,
                              jac_g_star.transpose());
    }

    int codim() const { return static_cast<int>(eqs_.size()); }
    const Eigen::VectorXd& base_point() const { return x0_; }

    Eigen::VectorXd point(double t, const Eigen::VectorXd& v, const Eigen::VectorXd& b) const {
        return x0_ + t * v + normals_ * b;
    }

    // Newton solve of the offsets at fixed t; returns nullopt on divergence.
    // After hitting the tolerance the iteration takes up to two more steps
    // and keeps the best iterate, so accepted samples usually sit at the
    // rounding floor rather than just inside the tolerance. An iterate
    // already at the rounding floor is accepted as-is; this keeps offsets
    // exactly zero on flat charts.
    std::optional<Eigen::VectorXd> solve(double t, const Eigen::VectorXd& v, Eigen::VectorXd b,
                                         double tol, int max_iter) const {
        const double floor =
            8.0 * std::numeric_limits<double>::epsilon() *
            (1.0 + targets_.lpNorm<Eigen::Infinity>());
        Eigen::VectorXd best_b = b;
        double best = std::numeric_limits<double>::infinity();
        bool converged = false;
        int polish = 0;
        for (int it = 0;; ++it) {
            Eigen::VectorXd r;
            Eigen::MatrixXd jac;
            try {
                const Eigen::VectorXd x = point(t, v, b);
                r.resize(codim());
                jac.resize(codim(), codim());
                for (int i = 0; i < codim(); ++i) {
                    const Jet2 jet = eval_jet2(eqs_[i], x);
                    r[i] = jet.value - targets_[i];
                    jac.row(i) = jet.grad.transpose() * normals_;
                }
            } catch (const DomainError&) {
                break;
            }
            const double rn = r.norm();
            if (!std::isfinite(rn)) break;
            if (rn < best) {
                best = rn;
                best_b = b;
            }
            if (rn <= tol) {
                converged = true;
                if (rn <= floor || polish++ >= 2) break;
            } else if (converged) {
                break;
            }
            if (it >= max_iter + 2) break;

            Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
            if (!lu.isInvertible()) break;
            const Eigen::VectorXd db = lu.solve(r);
            if (!db.allFinite() || db.norm() > 1e8 * (1.0 + b.norm())) break;
            b -= db;
        }
        if (!converged) return std::nullopt;
        return best_b;
    }

private:
    std::vector<Expression> eqs_;
    Eigen::VectorXd targets_;
    Eigen::VectorXd x0_;
    Eigen::MatrixXd normals_;  // n x d
};

// Samples of an implicit normal-section curve. `ts` is the section parameter
// after tracing and the (chord-estimated) arc length after reparametrization;
// both grids are symmetric about 0 and the center sample is x* exactly.
struct TracedCurve {
    std::vector<double> ts;
    std::vector<Eigen::VectorXd> points;
    std::vector<Eigen::VectorXd> offsets;  // solved b at each sample
    double converged_extent = 0.0;
    CurveKind kind = CurveKind::LevelSetF;
    Eigen::VectorXd direction;
    bool arclength = false;
    std::shared_ptr<const SectionProblem> section;
    TraceParams params;

    int center() const { return static_cast<int>(ts.size()) / 2; }
    std::size_t size() const { return ts.size(); }
};

namespace detail {

inline void validate_trace_params(const TraceParams& p) {
    if (!(p.step > 0.0) || !(p.half_width > 0.0) || p.step >= p.half_width)
        throw Error("trace parameters require 0 < step < half_width");
    if (!(p.newton_tol > 0.0)) throw Error("newton_tol must be positive");
}

inline TracedCurve march_section(std::shared_ptr<const SectionProblem> sp,
                                 const Eigen::VectorXd& x_star, const Eigen::VectorXd& v,
                                 const TraceParams& p, CurveKind kind) {
    validate_trace_params(p);
    const int steps = std::max(1, static_cast<int>(std::llround(p.half_width / p.step)));
    const int d = sp->codim();

    auto march = [&](double sign) {
        std::vector<Eigen::VectorXd> bs;
        Eigen::VectorXd warm = Eigen::VectorXd::Zero(d);
        for (int k = 1; k <= steps; ++k) {
            auto sol = sp->solve(sign * k * p.step, v, warm, p.newton_tol, p.newton_max_iter);
            if (!sol) break;
            warm = *sol;
            bs.push_back(std::move(*sol));
        }
        return bs;
    };
    const std::vector<Eigen::VectorXd> pos = march(+1.0);
    const std::vector<Eigen::VectorXd> neg = march(-1.0);

    // Keep the symmetric part so the grid stays symmetric about 0.
    const int reach = static_cast<int>(std::min(pos.size(), neg.size()));

    TracedCurve c;
    c.kind = kind;
    c.direction = v;
    c.params = p;
    c.section = sp;
    c.converged_extent = reach * p.step;
    c.ts.reserve(2 * reach + 1);
    c.points.reserve(2 * reach + 1);
    c.offsets.reserve(2 * reach + 1);
    for (int k = reach; k >= 1; --k) {
        c.ts.push_back(-k * p.step);
        c.points.push_back(sp->point(-k * p.step, v, neg[k - 1]));
        c.offsets.push_back(neg[k - 1]);
    }
    c.ts.push_back(0.0);
    c.points.push_back(x_star);
    c.offsets.push_back(Eigen::VectorXd::Zero(d));
    for (int k = 1; k <= reach; ++k) {
        c.ts.push_back(k * p.step);
        c.points.push_back(sp->point(k * p.step, v, pos[k - 1]));
        c.offsets.push_back(pos[k - 1]);
    }
    return c;
}

inline void require_unit(const Eigen::VectorXd& v) {
    if (std::abs(v.norm() - 1.0) > 1e-8)
        throw NotTangent("direction must have unit norm");
}

// ---- piecewise cubic Hermite interpolation ----

// Derivative at node j of the Lagrange polynomial through nodes [lo, hi].
inline double lagrange_slope(const std::vector<double>& xs, const std::vector<double>& ys,
                             int lo, int hi, int j) {
    double total = 0.0;
    for (int i = lo; i <= hi; ++i) {
        if (i == j) {
            double s = 0.0;
            for (int k = lo; k <= hi; ++k)
                if (k != j) s += 1.0 / (xs[j] - xs[k]);
            total += ys[j] * s;
        } else {
            double w = 1.0 / (xs[i] - xs[j]);
            for (int k = lo; k <= hi; ++k)
                if (k != i && k != j) w *= (xs[j] - xs[k]) / (xs[i] - xs[k]);
            total += ys[i] * w;
        }
    }
    return total;
}

struct PiecewiseCubic {
    std::vector<double> xs, ys, ms;

    double eval(double x) const {
        const int n = static_cast<int>(xs.size());
        int k = static_cast<int>(std::upper_bound(xs.begin(), xs.end(), x) - xs.begin()) - 1;
        k = std::clamp(k, 0, n - 2);
        const double h = xs[k + 1] - xs[k];
        const double th = (x - xs[k]) / h;
        const double th2 = th * th;
        const double th3 = th2 * th;
        return ys[k] * (2 * th3 - 3 * th2 + 1) + ys[k + 1] * (-2 * th3 + 3 * th2) +
               h * ms[k] * (th3 - 2 * th2 + th) + h * ms[k + 1] * (th3 - th2);
    }
};

// Hermite interpolant with five-point slope estimates. For strictly
// increasing data the slopes are limited to keep the interpolant monotone;
// away from that limit the extra slope accuracy keeps the interpolation
// error well below the finite-difference stencils applied downstream.
inline PiecewiseCubic fit_cubic(const std::vector<double>& xs, const std::vector<double>& ys,
                                bool monotone) {
    const int n = static_cast<int>(xs.size());
    PiecewiseCubic pc;
    pc.xs = xs;
    pc.ys = ys;
    pc.ms.resize(n);
    for (int j = 0; j < n; ++j) {
        const int lo = std::clamp(j - 2, 0, std::max(0, n - 5));
        const int hi = std::min(n - 1, lo + 4);
        pc.ms[j] = lagrange_slope(xs, ys, lo, hi, j);
    }
    if (monotone) {
        for (int j = 0; j < n; ++j) {
            double cap = std::numeric_limits<double>::infinity();
            if (j > 0) cap = std::min(cap, 3.0 * (ys[j] - ys[j - 1]) / (xs[j] - xs[j - 1]));
            if (j + 1 < n) cap = std::min(cap, 3.0 * (ys[j + 1] - ys[j]) / (xs[j + 1] - xs[j]));
            pc.ms[j] = std::clamp(pc.ms[j], 0.0, cap);
        }
    }
    return pc;
}

}  // namespace detail

// Trace the section of the level set {f = f(x*)} through x* along a unit
// tangent direction v. Newton failure truncates the curve; the surviving
// extent is recorded rather than treated as an error.
inline TracedCurve trace_level_section(const Expression& f, const Eigen::VectorXd& x_star,
                                       const Eigen::VectorXd& v, const TraceParams& p) {
    const Jet2 jet = eval_jet2(f, x_star);
    const double gnorm = jet.grad.norm();
    if (gnorm <= kRegularityEps)
        throw DegeneratePoint("gradient of f vanishes at the candidate point");
    detail::require_unit(v);
    if (std::abs(jet.grad.dot(v)) > kTangencyTol * gnorm)
        throw NotTangent("direction is not tangent to the level set of f");

    auto sp = std::make_shared<const SectionProblem>(
        SectionProblem::level_set(f, x_star, jet.grad));
    return detail::march_section(sp, x_star, v, p, CurveKind::LevelSetF);
}

inline TracedCurve trace_constraint_section(const std::vector<Expression>& g,
                                            const Eigen::VectorXd& x_star,
                                            const Eigen::VectorXd& v, const TraceParams& p) {
    const int n = static_cast<int>(x_star.size());
    const int m = static_cast<int>(g.size());
    Eigen::MatrixXd jac(m, n);
    for (int i = 0; i < m; ++i) jac.row(i) = eval_jet2(g[i], x_star).grad.transpose();
    detail::require_full_row_rank(jac, kRankEps);
    detail::require_unit(v);
    const double jscale = 1.0 + jac.cwiseAbs().maxCoeff();
    detail::require_tangent(jac * v, jscale, kTangencyTol);

    auto sp = std::make_shared<const SectionProblem>(SectionProblem::constraint(g, x_star, jac));
    return detail::march_section(sp, x_star, v, p, CurveKind::ConstraintG);
}

// Resample the curve at uniform arc length (cumulative chord estimate),
// keeping s = 0 at x*. When the curve carries its section problem the
// resampled points are re-solved onto the manifold instead of interpolated.
inline TracedCurve arclength_reparametrize(const TracedCurve& c) {
    const int n_samples = static_cast<int>(c.size());
    if (n_samples < 5) throw InsufficientSamples("arc-length reparametrization needs >= 5 samples");

    const int center = c.center();
    std::vector<double> s(n_samples);
    s[center] = 0.0;
    for (int k = center + 1; k < n_samples; ++k) {
        const double chord = (c.points[k] - c.points[k - 1]).norm();
        if (!(chord > 0.0)) throw InsufficientSamples("coincident samples on traced curve");
        s[k] = s[k - 1] + chord;
    }
    for (int k = center - 1; k >= 0; --k) {
        const double chord = (c.points[k + 1] - c.points[k]).norm();
        if (!(chord > 0.0)) throw InsufficientSamples("coincident samples on traced curve");
        s[k] = s[k + 1] - chord;
    }

    const int half = std::min(center, n_samples - 1 - center);
    const double smax = std::min(s[n_samples - 1], -s[0]);
    const double ds = smax / half;

    const detail::PiecewiseCubic t_of_s = detail::fit_cubic(s, c.ts, /*monotone=*/true);

    TracedCurve out;
    out.kind = c.kind;
    out.direction = c.direction;
    out.params = c.params;
    out.section = c.section;
    out.arclength = true;
    out.converged_extent = smax;
    out.ts.reserve(2 * half + 1);
    out.points.reserve(2 * half + 1);
    out.offsets.reserve(2 * half + 1);

    // Coordinate interpolants, used when no section problem is attached or
    // as a fallback when a re-solve fails near the chart boundary.
    const int dim = static_cast<int>(c.points[center].size());
    std::vector<detail::PiecewiseCubic> coord;
    coord.reserve(dim);
    for (int d = 0; d < dim; ++d) {
        std::vector<double> ys(n_samples);
        for (int k = 0; k < n_samples; ++k) ys[k] = c.points[k][d];
        coord.push_back(detail::fit_cubic(s, ys, /*monotone=*/false));
    }

    for (int j = -half; j <= half; ++j) {
        const double sj = j * ds;
        if (j == 0) {
            out.ts.push_back(0.0);
            out.points.push_back(c.points[center]);
            out.offsets.push_back(c.offsets[center]);
            continue;
        }
        const double tj = t_of_s.eval(sj);
        bool solved = false;
        if (c.section) {
            const int nearest = static_cast<int>(
                std::lower_bound(c.ts.begin(), c.ts.end(), tj) - c.ts.begin());
            const int k = std::clamp(nearest, 0, n_samples - 1);
            const Eigen::VectorXd warm =
                c.offsets[k].size() == c.section->codim()
                    ? c.offsets[k]
                    : Eigen::VectorXd::Zero(c.section->codim());
            auto sol = c.section->solve(tj, c.direction, warm, c.params.newton_tol,
                                        c.params.newton_max_iter);
            if (sol) {
                out.offsets.push_back(*sol);
                out.points.push_back(c.section->point(tj, c.direction, *sol));
                solved = true;
            }
        }
        if (!solved) {
            Eigen::VectorXd x(dim);
            for (int d = 0; d < dim; ++d) x[d] = coord[d].eval(sj);
            out.points.push_back(std::move(x));
            out.offsets.push_back(Eigen::VectorXd());
        }
        out.ts.push_back(sj);
    }
    return out;
}

// Five-point central estimate of the second derivative at s = 0 of an
// arc-length parametrized curve.
inline Eigen::VectorXd second_derivative_at_zero(const TracedCurve& c) {
    if (!c.arclength) throw Error("second_derivative_at_zero expects an arc-length curve");
    const int center = c.center();
    if (center < 2 || center + 2 >= static_cast<int>(c.size()))
        throw InsufficientSamples("need >= 5 symmetric samples about 0");
    const double h = c.ts[center + 1] - c.ts[center];
    return (-c.points[center - 2] + 16.0 * c.points[center - 1] - 30.0 * c.points[center] +
            16.0 * c.points[center + 1] - c.points[center + 2]) /
           (12.0 * h * h);
}

struct ChainRuleChecks {
    double chain_rule_residual = 0.0;  // | d2/ds2 (f o curve)(0) - chain-rule value |
    double constraint_residual = 0.0;  // | d2/ds2 (g o curve)(0) |
    double f_second_derivative = 0.0;  // d2/ds2 (f o curve)(0), finite differenced
};

// Checks the second-derivative identity of f along the curve against the
// chain rule, and that g is second-order flat along the curve.
inline ChainRuleChecks chain_rule_checks(const Expression& f, const std::vector<Expression>& g,
                                         const TracedCurve& c, const DerivativeBundle& b_f,
                                         const DerivativeBundle& b_g) {
    (void)b_g;
    if (!c.arclength) throw Error("chain_rule_checks expects an arc-length curve");
    const int center = c.center();
    if (center < 2 || center + 2 >= static_cast<int>(c.size()))
        throw InsufficientSamples("need >= 5 symmetric samples about 0");
    const double h = c.ts[center + 1] - c.ts[center];

    auto fd2_scalar = [&](const Expression& e) {
        const double m2 = eval_value(e, c.points[center - 2]);
        const double m1 = eval_value(e, c.points[center - 1]);
        const double z0 = eval_value(e, c.points[center]);
        const double p1 = eval_value(e, c.points[center + 1]);
        const double p2 = eval_value(e, c.points[center + 2]);
        return (-m2 + 16.0 * m1 - 30.0 * z0 + 16.0 * p1 - p2) / (12.0 * h * h);
    };

    const Eigen::VectorXd d1 = (c.points[center - 2] - 8.0 * c.points[center - 1] +
                                8.0 * c.points[center + 1] - c.points[center + 2]) /
                               (12.0 * h);
    const Eigen::VectorXd d2 = second_derivative_at_zero(c);

    ChainRuleChecks out;
    out.f_second_derivative = fd2_scalar(f);
    const double chain = d1.dot(b_f.hess_f * d1) + b_f.grad_f.dot(d2);
    out.chain_rule_residual = std::abs(out.f_second_derivative - chain);
    double acc = 0.0;
    for (const Expression& gi : g) {
        const double r = fd2_scalar(gi);
        acc += r * r;
    }
    out.constraint_residual = std::sqrt(acc);
    return out;
}

// Independent finite-difference route to h(v,v): differentiate the tangent
// projector along the curve, (dPi(x)v)v = ((Pi o curve)'(0)) v.
inline Eigen::VectorXd sff_fd_oracle(
    const std::function<Projector(const Eigen::VectorXd&)>& projector_fn,
    const TracedCurve& curve) {
    const int center = curve.center();
    if (center < 1 || center + 1 >= static_cast<int>(curve.size()))
        throw InsufficientSamples("need samples on both sides of 0");
    const double h = curve.ts[center + 1] - curve.ts[center];
    const Eigen::MatrixXd dP =
        (projector_fn(curve.points[center + 1]).P - projector_fn(curve.points[center - 1]).P) /
        (2.0 * h);
    return dP * curve.direction;
}

}  // namespace curvcheck
