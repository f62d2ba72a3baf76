#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "curvcheck/errors.hpp"
#include "curvcheck/expr.hpp"
#include "curvcheck/geometry.hpp"
#include "curvcheck/implicit.hpp"

namespace curvcheck {

using ordered_json = nlohmann::ordered_json;

struct ProblemOptions {
    double tol = -1.0;  // verdict tolerance; <= 0 means scale-aware default
    double first_order_tol = 1e-6;
    double fd_step = 1e-4;
    std::optional<double> half_width;
    std::optional<double> step;
    double newton_tol = 1e-12;
    int newton_max_iter = 50;
    int samples = 512;
    double radius_factor = 0.5;
    std::uint64_t seed = 0;
};

// One problem instance: minimize f subject to g = 0, with the candidate
// point to examine and the tolerances to use.
struct ProblemDefinition {
    int n = 0;
    int m = 0;
    Expression f;
    std::vector<Expression> g;
    Eigen::VectorXd x_star;
    ProblemOptions options;
    std::string f_source;
    std::vector<std::string> g_sources;
};

inline ProblemDefinition problem_from_json(const ordered_json& doc) {
    ProblemDefinition p;
    try {
        if (!doc.is_object()) throw Error("problem file must be a JSON object");
        for (const char* key : {"n", "m", "f", "g", "x_star"})
            if (!doc.contains(key)) throw Error(std::string("problem file is missing key '") + key + "'");

        p.n = doc.at("n").get<int>();
        p.m = doc.at("m").get<int>();
        if (p.n < 1) throw Error("n must be at least 1");
        if (p.m < 1 || p.m > p.n) throw Error("m must satisfy 1 <= m <= n");

        p.f_source = doc.at("f").get<std::string>();
        p.f = parse(p.f_source, p.n);

        const auto& garr = doc.at("g");
        if (!garr.is_array() || static_cast<int>(garr.size()) != p.m)
            throw Error("g must be an array of m expressions");
        for (const auto& gi : garr) {
            p.g_sources.push_back(gi.get<std::string>());
            p.g.push_back(parse(p.g_sources.back(), p.n));
        }

        const auto& xs = doc.at("x_star");
        if (!xs.is_array() || static_cast<int>(xs.size()) != p.n)
            throw Error("x_star must be an array of n numbers");
        p.x_star.resize(p.n);
        for (int i = 0; i < p.n; ++i) p.x_star[i] = xs[i].get<double>();

        if (doc.contains("options")) {
            const auto& o = doc.at("options");
            if (!o.is_object()) throw Error("options must be an object");
            if (o.contains("tol")) p.options.tol = o.at("tol").get<double>();
            if (o.contains("first_order_tol"))
                p.options.first_order_tol = o.at("first_order_tol").get<double>();
            if (o.contains("fd_step")) p.options.fd_step = o.at("fd_step").get<double>();
            if (o.contains("half_width")) p.options.half_width = o.at("half_width").get<double>();
            if (o.contains("step")) p.options.step = o.at("step").get<double>();
            if (o.contains("newton_tol")) p.options.newton_tol = o.at("newton_tol").get<double>();
            if (o.contains("newton_max_iter"))
                p.options.newton_max_iter = o.at("newton_max_iter").get<int>();
            if (o.contains("samples")) p.options.samples = o.at("samples").get<int>();
            if (o.contains("radius_factor"))
                p.options.radius_factor = o.at("radius_factor").get<double>();
            if (o.contains("seed")) p.options.seed = o.at("seed").get<std::uint64_t>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("malformed problem file: ") + e.what());
    }
    return p;
}

inline ProblemDefinition load_problem(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open problem file '" + path + "'");
    ordered_json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw Error(std::string("problem file is not valid JSON: ") + e.what());
    }
    return problem_from_json(doc);
}

inline DerivativeBundle evaluate_bundle(const ProblemDefinition& p, const Eigen::VectorXd& x) {
    DerivativeBundle b;
    b.x = x;
    const Jet2 jf = eval_jet2(p.f, x);
    b.fval = jf.value;
    b.grad_f = jf.grad;
    b.hess_f = jf.hess;
    b.gvals.resize(p.m);
    b.jac_g.resize(p.m, p.n);
    b.hess_g.reserve(p.m);
    for (int i = 0; i < p.m; ++i) {
        const Jet2 jg = eval_jet2(p.g[i], x);
        b.gvals[i] = jg.value;
        b.jac_g.row(i) = jg.grad.transpose();
        b.hess_g.push_back(jg.hess);
    }
    return b;
}

// Trace parameters from the bundle's feature scale, overridden by options.
inline TraceParams trace_params_for(const ProblemDefinition& p, const DerivativeBundle& b) {
    TraceParams tp = default_trace_params(b);
    if (p.options.half_width) tp.half_width = *p.options.half_width;
    if (p.options.step)
        tp.step = *p.options.step;
    else
        tp.step = tp.half_width / 200.0;
    tp.newton_tol = p.options.newton_tol;
    tp.newton_max_iter = p.options.newton_max_iter;
    return tp;
}

}  // namespace curvcheck
