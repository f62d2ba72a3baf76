#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "curvcheck/certify.hpp"
#include "curvcheck/geometry.hpp"
#include "curvcheck/optimality.hpp"
#include "curvcheck/problem.hpp"
#include "curvcheck/reduced.hpp"

namespace curvcheck {

namespace detail {

// Every numeric field in the report is finite or explicitly null.
inline ordered_json json_number(double v, std::vector<std::string>& diagnostics,
                                const std::string& field) {
    if (std::isfinite(v)) return v;
    diagnostics.push_back("field '" + field + "' is not finite; reported as null");
    return nullptr;
}

inline ordered_json json_vector(const Eigen::VectorXd& v) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v[i]);
    return arr;
}

inline ordered_json json_matrix(const Eigen::MatrixXd& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) rows.push_back(json_vector(m.row(i)));
    return rows;
}

}  // namespace detail

struct AnalysisResult {
    ordered_json json;
    bool checks_pass = true;
};

// Run the full point analysis and assemble the JSON report. Sections appear
// when applicable: "planar" only for n=2, m=1, "certificate" only when
// requested.
inline AnalysisResult analyze(const ProblemDefinition& p, bool with_certificate) {
    AnalysisResult res;
    std::vector<std::string> diagnostics;
    ordered_json& doc = res.json;

    doc["schema"] = 1;
    doc["problem"] = {{"n", p.n},
                      {"m", p.m},
                      {"f", p.f_source},
                      {"g", p.g_sources},
                      {"x_star", detail::json_vector(p.x_star)}};

    const DerivativeBundle b = evaluate_bundle(p, p.x_star);
    const double feas = p.m > 0 ? b.gvals.lpNorm<Eigen::Infinity>() : 0.0;
    if (feas > 1e-9)
        diagnostics.push_back("candidate point violates the constraints: |g(x*)|_inf = " +
                              std::to_string(feas));

    const MultiplierSet ms = multipliers(b);
    const bool first_order = check_first_order(ms, p.options.first_order_tol);
    res.checks_pass = res.checks_pass && first_order;
    doc["first_order"] = {{"lambda", detail::json_vector(ms.lambda)},
                          {"residual_norm", detail::json_number(ms.residual_norm, diagnostics,
                                                                "first_order.residual_norm")},
                          {"holds", first_order}};

    const TangentBasis V = tangent_basis(b);
    const SecondOrderReport so = second_order_report(b, ms, V, p.options.tol);
    res.checks_pass = res.checks_pass && so.necessary_holds;
    doc["second_order"] = {{"projected_hessian", detail::json_matrix(so.projected_hessian)},
                           {"eigenvalues", detail::json_vector(so.eigenvalues)},
                           {"necessary_holds", so.necessary_holds},
                           {"sufficient_holds", so.sufficient_holds},
                           {"indeterminate", so.indeterminate},
                           {"tol", so.tol}};

    if (first_order && b.grad_f.norm() > kRegularityEps) {
        const std::vector<Eigen::VectorXd> dirs = default_directions(so, V);
        const double cc_tol = so.tol / b.grad_f.norm();
        const CurvatureComparisonReport cc =
            curvature_comparison(b, b, ms, dirs, cc_tol, p.options.first_order_tol);
        res.checks_pass = res.checks_pass && cc.holds;
        ordered_json dir_rows = ordered_json::array();
        for (const auto& v : dirs) dir_rows.push_back(detail::json_vector(v));
        doc["curvature"] = {{"directions", dir_rows},
                            {"lhs", detail::json_vector(cc.lhs)},
                            {"rhs", detail::json_vector(cc.rhs)},
                            {"gaps", detail::json_vector(cc.gaps)},
                            {"identity_residuals", detail::json_vector(cc.identity_residuals)},
                            {"holds", cc.holds}};
    } else {
        diagnostics.push_back(first_order
                                  ? "curvature comparison skipped: gradient of f vanishes at x*"
                                  : "curvature comparison skipped: first-order conditions do "
                                    "not hold");
        res.checks_pass = false;
    }

    if (p.n == 2 && p.m == 1 && b.grad_f.norm() > kRegularityEps &&
        b.jac_g.row(0).norm() > kRegularityEps) {
        const PlanarCurvatureReport pr = planar_curvatures(b, b);
        res.checks_pass = res.checks_pass && pr.holds;
        doc["planar"] = {{"kappa_f", detail::json_number(pr.kappa_f, diagnostics, "planar.kappa_f")},
                         {"kappa_g", detail::json_number(pr.kappa_g, diagnostics, "planar.kappa_g")},
                         {"sign", pr.sign},
                         {"u_f", detail::json_vector(pr.u_f)},
                         {"u_g", detail::json_vector(pr.u_g)},
                         {"quadrant", std::string(1, pr.quadrant)},
                         {"holds", pr.holds}};
        if (pr.alignment_angle > 1e-6)
            diagnostics.push_back("gradients of f and g are not parallel; the planar sign rule "
                                  "assumes first-order conditions");
    } else if (p.n == 2 && p.m == 1) {
        diagnostics.push_back("planar curvatures skipped: degenerate point");
        res.checks_pass = false;
    }

    PsiParams psi_params;
    psi_params.newton_tol = p.options.newton_tol;
    psi_params.max_iter = p.options.newton_max_iter;
    const ReducedFunctional rf(p.f, p.g, p.x_star, V, psi_params);

    if (first_order) {
        try {
            const double rh = reduced_hessian_consistency(rf, b, ms, p.options.fd_step);
            doc["reduced_hessian_residual"] =
                detail::json_number(rh, diagnostics, "reduced_hessian_residual");
        } catch (const NewtonDivergence&) {
            doc["reduced_hessian_residual"] = nullptr;
            diagnostics.push_back("reduced Hessian check skipped: psi solve diverged at the "
                                  "finite-difference stencil");
        }
    } else {
        doc["reduced_hessian_residual"] = nullptr;
        diagnostics.push_back("reduced Hessian check skipped: first-order conditions do not hold");
    }

    if (with_certificate) {
        SamplingParams sp;
        sp.count = p.options.samples;
        sp.seed = p.options.seed;
        sp.radius_factor = p.options.radius_factor;
        const SufficiencyCertificate cert = certify(rf, so, sp);
        ordered_json cj = {{"mu", detail::json_number(cert.mu, diagnostics, "certificate.mu")},
                           {"nu", detail::json_number(cert.nu, diagnostics, "certificate.nu")},
                           {"R", detail::json_number(cert.R, diagnostics, "certificate.R")},
                           {"samples", cert.samples},
                           {"converged", cert.converged},
                           {"diverged", cert.diverged},
                           {"min_margin", detail::json_number(cert.min_margin, diagnostics,
                                                              "certificate.min_margin")},
                           {"verdict", cert.verdict}};
        if (cert.has_refutation) {
            cj["refutation"] = {{"a", detail::json_vector(cert.refuting_a)},
                                {"x", detail::json_vector(cert.refuting_x)},
                                {"f", detail::json_number(cert.refuting_value, diagnostics,
                                                          "certificate.refutation.f")}};
        }
        for (const std::string& d : cert.diagnostics) diagnostics.push_back("certificate: " + d);
        doc["certificate"] = cj;
        res.checks_pass = res.checks_pass && cert.verdict == "certified";
    }

    doc["diagnostics"] = diagnostics;
    return res;
}

}  // namespace curvcheck
