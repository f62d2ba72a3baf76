#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "curvcheck/errors.hpp"
#include "curvcheck/geometry.hpp"

namespace curvcheck {

inline constexpr double kFirstOrderTol = 1e-6;

// Least-squares multipliers and the stationarity defect grad f - Jg^T lambda.
struct MultiplierSet {
    Eigen::VectorXd lambda;
    Eigen::VectorXd residual;
    double residual_norm = 0.0;
    double grad_f_norm = 0.0;
};

struct SecondOrderReport {
    Eigen::MatrixXd projected_hessian;  // (n-m) x (n-m), symmetric
    Eigen::VectorXd eigenvalues;        // ascending
    Eigen::MatrixXd eigenvectors;       // columns match eigenvalues
    bool necessary_holds = false;
    bool sufficient_holds = false;
    bool indeterminate = false;  // smallest eigenvalue within +-tol of zero
    bool first_order_ok = true;
    double tol = 0.0;
};

// Per-direction comparison of the two second fundamental forms along nu_f,
// together with the residual of the identity (rhs - lhs) = v^T HL v / |grad f|.
struct CurvatureComparisonReport {
    std::vector<Eigen::VectorXd> directions;
    Eigen::VectorXd lhs;   // <nu_f, h_f(v,v)>
    Eigen::VectorXd rhs;   // <nu_f, h_g(v,v)>
    Eigen::VectorXd gaps;  // rhs - lhs
    Eigen::VectorXd identity_residuals;
    bool holds = false;
    double tol = 0.0;
};

inline MultiplierSet multipliers(const DerivativeBundle& b, double eps_rank = kRankEps) {
    detail::require_full_row_rank(b.jac_g, eps_rank);
    MultiplierSet ms;
    ms.lambda = detail::gram_solve(b.jac_g, b.jac_g * b.grad_f);
    ms.residual = b.grad_f - b.jac_g.transpose() * ms.lambda;
    ms.residual_norm = ms.residual.norm();
    ms.grad_f_norm = b.grad_f.norm();
    return ms;
}

inline bool check_first_order(const MultiplierSet& ms, double tol = kFirstOrderTol) {
    return ms.residual_norm <= tol * (1.0 + ms.grad_f_norm);
}

inline Eigen::MatrixXd lagrangian_hessian(const DerivativeBundle& b,
                                          const Eigen::VectorXd& lambda) {
    if (lambda.size() != b.m())
        throw DimensionMismatch("multiplier count does not match constraint count");
    Eigen::MatrixXd H = b.hess_f;
    for (int i = 0; i < b.m(); ++i) H -= lambda[i] * b.hess_g[i];
    return H;
}

// Default verdict tolerance scaled by the Lagrangian Hessian magnitude.
inline double default_verdict_tol(const Eigen::MatrixXd& lagr_hess) {
    const double scale = lagr_hess.size() == 0 ? 0.0 : lagr_hess.cwiseAbs().maxCoeff();
    return 1e-8 * (1.0 + scale);
}

// Eigenvalues of V^T (H_f - sum lambda_i H_gi) V with the necessary /
// sufficient verdicts. Values inside (-tol, +tol) count as necessary but not
// sufficient and are flagged indeterminate.
inline SecondOrderReport second_order_report(const DerivativeBundle& b, const MultiplierSet& ms,
                                             const TangentBasis& V, double tol = -1.0) {
    SecondOrderReport r;
    r.first_order_ok = check_first_order(ms);
    const Eigen::MatrixXd HL = lagrangian_hessian(b, ms.lambda);
    if (tol <= 0.0) tol = default_verdict_tol(HL);
    r.tol = tol;

    const Eigen::MatrixXd PH = V.V.transpose() * HL * V.V;
    r.projected_hessian = ((PH + PH.transpose()) / 2.0).eval();

    if (r.projected_hessian.rows() == 0) {
        r.eigenvalues.resize(0);
        r.eigenvectors.resize(0, 0);
        r.necessary_holds = true;
        r.sufficient_holds = true;
        return r;
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r.projected_hessian);
    r.eigenvalues = es.eigenvalues();
    r.eigenvectors = es.eigenvectors();
    const double min_eig = r.eigenvalues[0];
    r.necessary_holds = min_eig >= -tol;
    r.sufficient_holds = min_eig >= +tol;
    r.indeterminate = r.necessary_holds && !r.sufficient_holds;
    return r;
}

// Eigenvector directions of the projected Hessian pushed through V; these
// witness the extreme curvature gaps.
inline std::vector<Eigen::VectorXd> default_directions(const SecondOrderReport& so,
                                                       const TangentBasis& V) {
    std::vector<Eigen::VectorXd> dirs;
    for (int c = 0; c < so.eigenvectors.cols(); ++c)
        dirs.push_back((V.V * so.eigenvectors.col(c)).normalized());
    return dirs;
}

inline CurvatureComparisonReport curvature_comparison(const DerivativeBundle& b_f,
                                                      const DerivativeBundle& b_g,
                                                      const MultiplierSet& ms,
                                                      const std::vector<Eigen::VectorXd>& directions,
                                                      double tol,
                                                      double first_order_tol = kFirstOrderTol) {
    if (!check_first_order(ms, first_order_tol))
        throw FirstOrderViolated("curvature comparison needs first-order conditions to hold");

    const double gnorm = b_f.grad_f.norm();
    if (gnorm <= kRegularityEps)
        throw DegeneratePoint("gradient of f vanishes at the candidate point");
    const Eigen::MatrixXd HL = lagrangian_hessian(b_f, ms.lambda);

    CurvatureComparisonReport r;
    r.tol = tol;
    r.directions = directions;
    const int k = static_cast<int>(directions.size());
    r.lhs.resize(k);
    r.rhs.resize(k);
    r.gaps.resize(k);
    r.identity_residuals.resize(k);
    for (int i = 0; i < k; ++i) {
        const Eigen::VectorXd& v = directions[i];
        r.lhs[i] = sff_f(b_f, v).along_nu_f;
        r.rhs[i] = sff_g(b_g, v).along_nu_f;
        r.gaps[i] = r.rhs[i] - r.lhs[i];
        r.identity_residuals[i] = std::abs(r.gaps[i] - v.dot(HL * v) / gnorm);
    }
    r.holds = k == 0 || r.gaps.minCoeff() >= -tol;
    return r;
}

// Report-level quadrant classification; same tie rule as planar_quadrant.
inline char figure1_quadrant(const PlanarCurvatureReport& report) {
    return planar_quadrant(report.kappa_f, report.kappa_g);
}

}  // namespace curvcheck
