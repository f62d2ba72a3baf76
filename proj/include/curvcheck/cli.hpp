#pragma once

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "curvcheck/report.hpp"

namespace curvcheck {

namespace detail {

inline std::string format_csv_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::string curve_to_csv(const TracedCurve& c) {
    std::string out = "t";
    const int n = static_cast<int>(c.points.front().size());
    for (int i = 1; i <= n; ++i) out += ",x" + std::to_string(i);
    out += "\n";
    for (std::size_t k = 0; k < c.size(); ++k) {
        out += format_csv_double(c.ts[k]);
        for (int i = 0; i < n; ++i) out += "," + format_csv_double(c.points[k][i]);
        out += "\n";
    }
    return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open output file '" + path + "'");
    f << content;
}

// Direction argument: either an index into the default tangent directions
// (1-based) or a comma-separated vector.
struct DirectionArg {
    std::optional<int> index;
    std::optional<Eigen::VectorXd> vector;
};

inline DirectionArg parse_direction(const std::string& text, int n) {
    DirectionArg d;
    if (text.find(',') == std::string::npos) {
        try {
            d.index = std::stoi(text);
        } catch (...) {
            throw Error("direction must be an index or a comma-separated vector");
        }
        if (*d.index < 1) throw Error("direction index is 1-based");
        return d;
    }
    std::vector<double> vals;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            vals.push_back(std::stod(item));
        } catch (...) {
            throw Error("direction vector has a non-numeric component");
        }
    }
    if (static_cast<int>(vals.size()) != n)
        throw Error("direction vector must have n components");
    d.vector = Eigen::Map<Eigen::VectorXd>(vals.data(), vals.size());
    return d;
}

}  // namespace detail

struct CliStreams {
    std::ostream& out;
    std::ostream& err;
};

namespace detail {

inline int fail_input(const CliStreams& io, const std::string& message) {
    ordered_json j = {{"error", message}};
    io.out << j.dump() << "\n";
    return 2;
}

inline void summary_line(const CliStreams& io, bool quiet, const std::string& line) {
    if (!quiet) io.err << line << "\n";
}

inline int run_check_like(const std::string& path, bool with_certificate, bool quiet,
                          const ProblemOptions& overrides, const CliStreams& io) {
    ProblemDefinition p = load_problem(path);
    if (overrides.tol > 0.0) p.options.tol = overrides.tol;
    if (overrides.fd_step != 1e-4) p.options.fd_step = overrides.fd_step;
    if (overrides.samples != 512) p.options.samples = overrides.samples;
    if (overrides.seed != 0) p.options.seed = overrides.seed;
    if (overrides.radius_factor != 0.5) p.options.radius_factor = overrides.radius_factor;

    const AnalysisResult res = analyze(p, with_certificate);
    io.out << res.json.dump(2) << "\n";

    if (!quiet) {
        const auto& j = res.json;
        summary_line(io, quiet, std::string("first-order: ") +
                                    (j["first_order"]["holds"].get<bool>() ? "holds" : "violated"));
        summary_line(io, quiet,
                     std::string("second-order necessary: ") +
                         (j["second_order"]["necessary_holds"].get<bool>() ? "holds" : "violated"));
        if (j.contains("certificate"))
            summary_line(io, quiet,
                         "certificate: " + j["certificate"]["verdict"].get<std::string>());
        summary_line(io, quiet, res.checks_pass ? "result: PASS" : "result: FAIL");
    }
    return res.checks_pass ? 0 : 1;
}

inline int run_trace(const std::string& path, const std::string& manifold,
                     const std::string& direction, const std::string& out_path, bool verify,
                     bool json_sidecar_to_stdout, bool quiet, const CliStreams& io) {
    const ProblemDefinition p = load_problem(path);
    const DerivativeBundle b = evaluate_bundle(p, p.x_star);
    const TraceParams tp = trace_params_for(p, b);

    const bool on_constraint = manifold == "g";
    if (!on_constraint && manifold != "f") throw Error("--manifold must be 'f' or 'g'");

    // default direction set: tangent basis of the requested manifold
    TangentBasis basis;
    if (on_constraint) {
        basis = tangent_basis(b);
    } else {
        DerivativeBundle hyper = b;
        hyper.gvals = Eigen::VectorXd::Zero(1);
        hyper.jac_g = b.grad_f.transpose();
        hyper.hess_g = {b.hess_f};
        basis = tangent_basis(hyper);
    }

    Eigen::VectorXd v;
    const detail::DirectionArg dir = detail::parse_direction(direction, p.n);
    if (dir.index) {
        if (*dir.index > basis.tangent_dim())
            throw Error("direction index exceeds the tangent dimension");
        v = basis.V.col(*dir.index - 1);
    } else {
        v = *dir.vector;
        if (v.norm() <= 0.0) throw Error("direction vector must be nonzero");
        v.normalize();
        // tangency: auto-project mild violations, reject gross ones
        Eigen::VectorXd defect = on_constraint ? Eigen::VectorXd(b.jac_g * v)
                                               : Eigen::VectorXd::Constant(1, b.grad_f.dot(v));
        const double scale =
            on_constraint ? 1.0 + b.jac_g.cwiseAbs().maxCoeff() : 1.0 + b.grad_f.norm();
        const double rel = defect.lpNorm<Eigen::Infinity>() / scale;
        if (rel > 1e-3) throw Error("direction is not tangent (relative defect above 1e-3)");
        if (rel > kTangencyTol) {
            const Projector proj =
                on_constraint ? projector_constraint(b) : projector_hypersurface(b);
            v = (proj.P * v).eval();
            if (v.norm() <= 0.0) throw Error("direction projects to zero");
            v.normalize();
            summary_line(io, quiet, "warning: direction was projected onto the tangent space");
        }
    }

    const TracedCurve curve = on_constraint ? trace_constraint_section(p.g, p.x_star, v, tp)
                                            : trace_level_section(p.f, p.x_star, v, tp);
    if (curve.size() < 3) {
        summary_line(io, quiet, "trace failed at the first step in both directions");
        return 1;
    }

    const std::string csv = detail::curve_to_csv(curve);
    if (!out_path.empty())
        detail::write_text_file(out_path, csv);
    else if (!json_sidecar_to_stdout)
        io.out << csv;

    if (verify || json_sidecar_to_stdout) {
        std::vector<std::string> diagnostics;
        ordered_json sidecar;
        sidecar["schema"] = 1;
        sidecar["kind"] = on_constraint ? "constraint_g" : "level_set_f";
        sidecar["converged_extent"] = curve.converged_extent;
        sidecar["samples"] = curve.size();
        if (verify) {
            const TracedCurve arc = arclength_reparametrize(curve);
            const Eigen::VectorXd d2 = second_derivative_at_zero(arc);
            const SffValue h = on_constraint ? sff_g(b, v) : sff_f(b, v);
            sidecar["normal_curvature_residual"] = detail::json_number(
                (d2 - h.vector_part).norm(), diagnostics, "normal_curvature_residual");
            sidecar["diagnostics"] = diagnostics;
        }
        if (json_sidecar_to_stdout)
            io.out << sidecar.dump(2) << "\n";
        else if (!out_path.empty())
            detail::write_text_file(out_path + ".json", sidecar.dump(2) + "\n");
        else
            io.err << sidecar.dump(2) << "\n";
    }
    summary_line(io, quiet,
                 "traced " + std::to_string(curve.size()) + " samples, extent " +
                     std::to_string(curve.converged_extent));
    return 0;
}

inline int run_figure1(const std::string& path, const std::string& out_prefix, bool quiet,
                       const CliStreams& io) {
    const ProblemDefinition p = load_problem(path);
    if (p.n != 2 || p.m != 1)
        throw Error("figure1 requires a planar problem (n=2, m=1)");
    const DerivativeBundle b = evaluate_bundle(p, p.x_star);
    const PlanarCurvatureReport pr = planar_curvatures(b, b);

    std::vector<std::string> diagnostics;
    if (pr.alignment_angle > 1e-6)
        diagnostics.push_back("gradients of f and g are not parallel; the sign rule assumes "
                              "first-order conditions");
    ordered_json j;
    j["schema"] = 1;
    j["kappa_f"] = detail::json_number(pr.kappa_f, diagnostics, "kappa_f");
    j["kappa_g"] = detail::json_number(pr.kappa_g, diagnostics, "kappa_g");
    j["sign"] = pr.sign;
    j["quadrant"] = std::string(1, pr.quadrant);
    j["holds"] = pr.holds;

    const TraceParams tp = trace_params_for(p, b);
    const Eigen::VectorXd uf = pr.u_f;
    const Eigen::VectorXd ug = pr.u_g;
    const TracedCurve cf = trace_level_section(p.f, p.x_star, uf, tp);
    const TracedCurve cg = trace_constraint_section(p.g, p.x_star, ug, tp);
    detail::write_text_file(out_prefix + "_f.csv", detail::curve_to_csv(cf));
    detail::write_text_file(out_prefix + "_g.csv", detail::curve_to_csv(cg));
    j["curves"] = {{"f", out_prefix + "_f.csv"}, {"g", out_prefix + "_g.csv"}};
    j["diagnostics"] = diagnostics;

    io.out << j.dump(2) << "\n";
    summary_line(io, quiet,
                 std::string("quadrant ") + pr.quadrant + (pr.holds ? ", inequality holds"
                                                                    : ", inequality violated"));
    return pr.holds ? 0 : 1;
}

}  // namespace detail

// Entry point shared by the binary and the tests. Exit codes: 0 when all
// requested checks hold, 1 when some check fails or a trace yields no curve,
// 2 on invalid input.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CliStreams io{out, err};

    CLI::App app{"Geometric first- and second-order optimality checks for "
                 "equality-constrained minimization"};
    app.require_subcommand(1);

    std::string file;
    bool quiet = false;
    ProblemOptions overrides;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("file", file, "problem file (JSON)")->required();
        cmd->add_flag("--quiet", quiet, "suppress the summary on stderr");
    };

    CLI::App* check = app.add_subcommand("check", "verify optimality conditions at x*");
    add_common(check);
    check->add_option("--tol", overrides.tol, "verdict tolerance");
    check->add_option("--fd-step", overrides.fd_step, "finite-difference step");
    bool json_flag = false;
    check->add_flag("--json", json_flag, "JSON report to stdout (default)");

    CLI::App* trace = app.add_subcommand("trace", "trace an implicit normal-section curve");
    add_common(trace);
    std::string manifold = "g";
    std::string direction = "1";
    std::string out_path;
    bool verify = false;
    bool trace_json = false;
    trace->add_option("--manifold", manifold, "which manifold to trace: f or g")
        ->check(CLI::IsMember({"f", "g"}));
    trace->add_option("--direction", direction, "tangent direction: index or comma-separated vector");
    trace->add_option("--out", out_path, "write CSV here instead of stdout");
    trace->add_flag("--verify", verify, "emit a JSON sidecar with curvature residuals");
    trace->add_flag("--json", trace_json, "print the sidecar JSON to stdout instead of CSV");

    CLI::App* figure1 = app.add_subcommand(
        "figure1", "planar curvature report plus level-curve CSV traces (n=2, m=1)");
    add_common(figure1);
    std::string out_prefix = "figure1";
    figure1->add_option("--out", out_prefix, "prefix for the two CSV files");

    CLI::App* certify_cmd =
        app.add_subcommand("certify", "sampled certificate for the sufficiency bound");
    add_common(certify_cmd);
    certify_cmd->add_option("--tol", overrides.tol, "verdict tolerance");
    certify_cmd->add_option("--fd-step", overrides.fd_step, "finite-difference step");
    certify_cmd->add_option("--samples", overrides.samples, "number of certificate samples");
    certify_cmd->add_option("--seed", overrides.seed, "sampling seed");
    certify_cmd->add_option("--radius-factor", overrides.radius_factor,
                            "fraction of the chart extent to sample");
    bool certify_json = false;
    certify_cmd->add_flag("--json", certify_json, "JSON report to stdout (default)");

    std::vector<const char*> argv;
    argv.push_back("curvcheck");
    for (const std::string& a : args) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << e.what() << "\n";
        return 2;
    }

    try {
        if (check->parsed()) return detail::run_check_like(file, false, quiet, overrides, io);
        if (certify_cmd->parsed()) return detail::run_check_like(file, true, quiet, overrides, io);
        if (trace->parsed())
            return detail::run_trace(file, manifold, direction, out_path, verify, trace_json,
                                     quiet, io);
        if (figure1->parsed()) return detail::run_figure1(file, out_prefix, quiet, io);
    } catch (const Error& e) {
        return detail::fail_input(io, e.what());
    } catch (const std::exception& e) {
        return detail::fail_input(io, std::string("internal error: ") + e.what());
    }
    return 2;
}

}  // namespace curvcheck
