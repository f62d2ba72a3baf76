#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "curvcheck/errors.hpp"

namespace curvcheck {

// Default thresholds. A point is treated as regular when the gradient norm
// exceeds kRegularityEps; a Jacobian counts as full rank when its smallest
// singular value exceeds kRankEps times the largest.
inline constexpr double kRegularityEps = 1e-10;
inline constexpr double kRankEps = 1e-8;
inline constexpr double kTangencyTol = 1e-8;

// Everything the point-local operations need about a problem at one point:
// objective value/gradient/Hessian and constraint values/Jacobian/Hessians.
struct DerivativeBundle {
    Eigen::VectorXd x;
    double fval = 0.0;
    Eigen::VectorXd grad_f;
    Eigen::MatrixXd hess_f;
    Eigen::VectorXd gvals;
    Eigen::MatrixXd jac_g;                // m x n
    std::vector<Eigen::MatrixXd> hess_g;  // m symmetric n x n matrices

    int n() const { return static_cast<int>(x.size()); }
    int m() const { return static_cast<int>(gvals.size()); }
};

// Orthonormal basis of Ker(Jg(x*)), one column per tangent direction.
struct TangentBasis {
    Eigen::MatrixXd V;  // n x (n-m)

    int tangent_dim() const { return static_cast<int>(V.cols()); }
};

struct Projector {
    Eigen::MatrixXd P;

    // Symmetry and idempotency are structural; a violation means the inputs
    // were bad enough that every downstream quantity is meaningless.
    void validate() const {
        const double scale = 1.0 + P.cwiseAbs().maxCoeff();
        if ((P - P.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
            throw Error("projector is not symmetric");
        if ((P * P - P).cwiseAbs().maxCoeff() > 1e-10 * scale)
            throw Error("projector is not idempotent");
    }
};

// h(v,v) of a level set or constraint manifold: the normal-space vector and
// its component along the unit objective normal.
struct SffValue {
    Eigen::VectorXd vector_part;
    double along_nu_f = 0.0;
};

struct PlanarCurvatureReport {
    double kappa_f = 0.0;
    double kappa_g = 0.0;
    int sign = +1;  // +1 when grad f and grad g point the same way
    Eigen::Vector2d u_f;
    Eigen::Vector2d u_g;
    bool holds = false;
    char quadrant = 'a';
    // Angle between the lines spanned by grad f and grad g; meaningful sign
    // comparison needs the gradients close to parallel.
    double alignment_angle = 0.0;
};

inline Eigen::VectorXd unit_normal_f(const DerivativeBundle& b, double eps_reg = kRegularityEps) {
    const double norm = b.grad_f.norm();
    if (norm <= eps_reg)
        throw DegeneratePoint("gradient of f vanishes at the candidate point");
    return b.grad_f / norm;
}

inline Projector projector_hypersurface(const DerivativeBundle& b,
                                        double eps_reg = kRegularityEps) {
    const Eigen::VectorXd nu = unit_normal_f(b, eps_reg);
    Projector p;
    p.P = Eigen::MatrixXd::Identity(b.n(), b.n()) - nu * nu.transpose();
    p.validate();
    return p;
}

namespace detail {

// Smallest/largest singular values of Jg, shared by the rank checks.
inline void require_full_row_rank(const Eigen::MatrixXd& jac_g, double eps_rank) {
    if (jac_g.rows() == 0) return;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac_g);
    const double smax = svd.singularValues()(0);
    const double smin = svd.singularValues()(svd.singularValues().size() - 1);
    if (jac_g.rows() > jac_g.cols() || smax == 0.0 || smin <= eps_rank * smax)
        throw RankDeficientJacobian("constraint Jacobian is rank deficient");
}

// Solve (Jg Jg^T) y = rhs without forming the inverse.
inline Eigen::VectorXd gram_solve(const Eigen::MatrixXd& jac_g, const Eigen::VectorXd& rhs) {
    const Eigen::MatrixXd gram = jac_g * jac_g.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success)
        throw RankDeficientJacobian("Gram matrix of the constraint Jacobian is not positive definite");
    return llt.solve(rhs);
}

inline void require_tangent(const Eigen::VectorXd& defect, double scale, double tol) {
    if (defect.lpNorm<Eigen::Infinity>() > tol * scale)
        throw NotTangent("direction is not tangent within tolerance");
}

}  // namespace detail

inline Projector projector_constraint(const DerivativeBundle& b, double eps_rank = kRankEps) {
    detail::require_full_row_rank(b.jac_g, eps_rank);
    const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(b.n(), b.n());
    if (b.m() == 0) {
        Projector p{id};
        return p;
    }
    const Eigen::MatrixXd gram = b.jac_g * b.jac_g.transpose();
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success)
        throw RankDeficientJacobian("Gram matrix of the constraint Jacobian is not positive definite");
    Projector p;
    p.P = id - b.jac_g.transpose() * llt.solve(b.jac_g);
    // Enforce exact symmetry; the solve leaves rounding asymmetry.
    p.P = ((p.P + p.P.transpose()) / 2.0).eval();
    p.validate();
    return p;
}

// Orthonormal kernel basis of Jg with a deterministic sign convention: the
// first entry of each column whose magnitude exceeds 1e-12 is positive.
inline TangentBasis tangent_basis(const DerivativeBundle& b, double eps_rank = kRankEps) {
    const int n = b.n();
    const int m = b.m();
    detail::require_full_row_rank(b.jac_g, eps_rank);
    TangentBasis basis;
    if (m == 0) {
        basis.V = Eigen::MatrixXd::Identity(n, n);
        return basis;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(b.jac_g, Eigen::ComputeFullV);
    basis.V = svd.matrixV().rightCols(n - m);
    for (int c = 0; c < basis.V.cols(); ++c) {
        for (int r = 0; r < n; ++r) {
            if (std::abs(basis.V(r, c)) > 1e-12) {
                if (basis.V(r, c) < 0.0) basis.V.col(c) = -basis.V.col(c);
                break;
            }
        }
    }
    return basis;
}

// Second fundamental form of the level set of f along its own unit normal:
// h(v,v) = -nu_f (v^T H_f v)/|grad f|.
inline SffValue sff_f(const DerivativeBundle& b, const Eigen::VectorXd& v,
                      double tangency_tol = kTangencyTol) {
    const double gnorm = b.grad_f.norm();
    if (gnorm <= kRegularityEps)
        throw DegeneratePoint("gradient of f vanishes at the candidate point");
    if (std::abs(b.grad_f.dot(v)) > tangency_tol * gnorm * v.norm())
        throw NotTangent("direction is not tangent to the level set of f");
    const Eigen::VectorXd nu = b.grad_f / gnorm;
    SffValue out;
    out.along_nu_f = -v.dot(b.hess_f * v) / gnorm;
    out.vector_part = nu * out.along_nu_f;
    return out;
}

// Second fundamental form of the constraint manifold, expressed as a vector
// in range(Jg^T), plus its component along nu_f.
inline SffValue sff_g(const DerivativeBundle& b, const Eigen::VectorXd& v,
                      double tangency_tol = kTangencyTol, double eps_rank = kRankEps) {
    detail::require_full_row_rank(b.jac_g, eps_rank);
    const double jscale = 1.0 + b.jac_g.cwiseAbs().maxCoeff();
    detail::require_tangent(b.jac_g * v, jscale * v.norm(), tangency_tol);

    Eigen::VectorXd w(b.m());
    for (int i = 0; i < b.m(); ++i) w[i] = v.dot(b.hess_g[i] * v);
    const Eigen::VectorXd y = detail::gram_solve(b.jac_g, w);

    SffValue out;
    out.vector_part = -b.jac_g.transpose() * y;
    out.along_nu_f = unit_normal_f(b).dot(out.vector_part);
    return out;
}

// Bilinear extension by polarization: h(u,v) = (h(u+v,u+v) - h(u-v,u-v))/4.
template <class SffFn>
Eigen::VectorXd sff_polarized(const SffFn& sff, const Eigen::VectorXd& u,
                              const Eigen::VectorXd& v) {
    const Eigen::VectorXd plus = sff(u + v).vector_part;
    const Eigen::VectorXd minus = sff(u - v).vector_part;
    return (plus - minus) / 4.0;
}

// Quadrant of the planar curvature pair. Near-zero curvature joins the sign
// of the nonzero partner; two near-zeros report 'a'.
inline char planar_quadrant(double kappa_f, double kappa_g, double zero_tol = 1e-10) {
    const int sf = std::abs(kappa_f) <= zero_tol ? 0 : (kappa_f > 0.0 ? 1 : -1);
    const int sg = std::abs(kappa_g) <= zero_tol ? 0 : (kappa_g > 0.0 ? 1 : -1);
    if (sf == 0 && sg == 0) return 'a';
    if (sf == 0) return sg > 0 ? 'a' : 'b';
    if (sg == 0) return sf > 0 ? 'a' : 'b';
    if (sf > 0 && sg > 0) return 'a';
    if (sf < 0 && sg < 0) return 'b';
    if (sf > 0 && sg < 0) return 'c';
    return 'd';
}

// Signed curvatures of the two planar curves at x*, oriented by
// u = (d2, -d1)/|.| of the respective gradient, and the sign-resolved
// inequality kappa_f <= sign * kappa_g.
inline PlanarCurvatureReport planar_curvatures(const DerivativeBundle& bf,
                                               const DerivativeBundle& bg,
                                               double tol = 1e-9) {
    if (bf.n() != 2 || bg.n() != 2 || bg.m() != 1)
        throw DimensionMismatch("planar curvatures require n=2, m=1");

    const Eigen::VectorXd& gf = bf.grad_f;
    const Eigen::VectorXd gg = bg.jac_g.row(0).transpose();
    if (gf.norm() <= kRegularityEps || gg.norm() <= kRegularityEps)
        throw DegeneratePoint("planar curvatures need regular points of both f and g");

    PlanarCurvatureReport r;
    r.u_f = Eigen::Vector2d(gf[1], -gf[0]).normalized();
    r.u_g = Eigen::Vector2d(gg[1], -gg[0]).normalized();
    r.kappa_f = -r.u_f.dot(bf.hess_f * r.u_f) / gf.norm();
    r.kappa_g = -r.u_g.dot(bg.hess_g[0] * r.u_g) / gg.norm();
    r.sign = gf.dot(gg) >= 0.0 ? +1 : -1;
    const double cosang = std::min(1.0, std::abs(gf.dot(gg)) / (gf.norm() * gg.norm()));
    r.alignment_angle = std::acos(cosang);
    r.holds = r.kappa_f <= r.sign * r.kappa_g + tol;
    r.quadrant = planar_quadrant(r.kappa_f, r.kappa_g);
    return r;
}

}  // namespace curvcheck
