#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "curvcheck/reduced.hpp"

namespace curvcheck {

namespace detail {

inline std::vector<int> first_primes(int count) {
    std::vector<int> primes;
    for (int cand = 2; static_cast<int>(primes.size()) < count; ++cand) {
        bool prime = true;
        for (int p : primes) {
            if (p * p > cand) break;
            if (cand % p == 0) {
                prime = false;
                break;
            }
        }
        if (prime) primes.push_back(cand);
    }
    return primes;
}

inline double radical_inverse(std::uint64_t index, int base) {
    double result = 0.0;
    double inv = 1.0 / base;
    double frac = inv;
    while (index) {
        result += static_cast<double>(index % base) * frac;
        index /= base;
        frac *= inv;
    }
    return result;
}

// Acklam's rational approximation of the standard normal quantile,
// |relative error| below 1.2e-9 — plenty for spreading sample directions.
inline double inverse_normal_cdf(double p) {
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    if (p > 1.0 - plow) {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        return -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace detail

// Largest radius along the +-axis directions of the tangent coordinates at
// which the psi solve still converges; the usable chart is taken as the
// minimum over directions.
inline double chart_extent_estimate(const ReducedFunctional& rf, int steps = 64) {
    const int d = rf.dim();
    if (d == 0) return 0.0;
    const double max_radius = 2.0 * (1.0 + rf.x_star().norm());
    double extent = max_radius;
    for (int k = 0; k < d; ++k) {
        for (double sign : {+1.0, -1.0}) {
            Eigen::VectorXd warm = Eigen::VectorXd::Zero(rf.codim());
            double reached = 0.0;
            for (int i = 1; i <= steps; ++i) {
                Eigen::VectorXd a = Eigen::VectorXd::Zero(d);
                a[k] = sign * max_radius * i / steps;
                try {
                    warm = rf.solve_psi(a, warm);
                } catch (const NewtonDivergence&) {
                    break;
                }
                reached = max_radius * i / steps;
            }
            extent = std::min(extent, reached);
        }
    }
    return extent;
}

struct SamplingParams {
    double radius_factor = 0.5;
    int count = 512;
    std::uint64_t seed = 0;
};

// Sampled evidence for the lower bound F(a) >= F(0) + (mu/4) |a|^2. The
// verdict is evidence, not proof: the bound is checked on finitely many
// deterministic low-discrepancy samples inside the certified radius.
struct SufficiencyCertificate {
    double mu = 0.0;  // smallest eigenvalue of the projected Lagrangian Hessian
    double nu = 0.0;  // smallest singular value of Jg(x*)^T
    double R = 0.0;   // certified sampling radius
    int samples = 0;
    int converged = 0;
    int diverged = 0;
    double min_margin = std::numeric_limits<double>::infinity();
    std::string verdict = "inconclusive";
    bool has_refutation = false;
    Eigen::VectorXd refuting_a;
    Eigen::VectorXd refuting_x;
    double refuting_value = 0.0;
    std::vector<std::string> diagnostics;
};

inline SufficiencyCertificate certify(const ReducedFunctional& rf, const SecondOrderReport& so,
                                      const SamplingParams& sp = {}) {
    SufficiencyCertificate cert;
    const int d = rf.dim();
    const int m = rf.codim();

    if (m > 0) {
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(rf.jac_g());
        cert.nu = svd.singularValues()(svd.singularValues().size() - 1);
    } else {
        cert.nu = std::numeric_limits<double>::infinity();
    }

    if (d == 0) {
        cert.mu = std::numeric_limits<double>::infinity();
        cert.min_margin = 0.0;
        cert.verdict = "certified";
        cert.diagnostics.push_back(
            "no tangent directions: the feasible set is locally the point itself");
        return cert;
    }
    cert.mu = so.eigenvalues[0];

    const double extent = chart_extent_estimate(rf);
    cert.R = sp.radius_factor * extent;
    if (!(cert.R > 0.0)) {
        cert.diagnostics.push_back("psi solve diverges arbitrarily close to 0; no usable radius");
        return cert;
    }

    const std::vector<int> primes = detail::first_primes(d + 1);
    const double f0 = rf.value_at_zero();
    cert.samples = sp.count;

    for (int i = 0; i < sp.count; ++i) {
        const std::uint64_t index = 1 + static_cast<std::uint64_t>(i) + sp.seed * 65537ULL;
        Eigen::VectorXd z(d);
        for (int j = 0; j < d; ++j)
            z[j] = detail::inverse_normal_cdf(detail::radical_inverse(index, primes[j + 1]));
        const double znorm = z.norm();
        if (!(znorm > 0.0)) continue;
        const double radius =
            cert.R * std::pow(detail::radical_inverse(index, primes[0]), 1.0 / d);
        const Eigen::VectorXd a = (radius / znorm) * z;

        double fa;
        try {
            fa = rf.value(a);
        } catch (const NewtonDivergence&) {
            ++cert.diverged;
            continue;
        }
        ++cert.converged;
        const double margin = fa - f0 - 0.25 * cert.mu * a.squaredNorm();
        cert.min_margin = std::min(cert.min_margin, margin);
        if (fa < f0 - 1e-10 && (!cert.has_refutation || fa < cert.refuting_value)) {
            cert.has_refutation = true;
            cert.refuting_a = a;
            cert.refuting_x = rf.lift(a);
            cert.refuting_value = fa;
        }
    }

    if (cert.has_refutation) {
        cert.verdict = "refuted";
    } else if (cert.mu > so.tol && cert.converged > 0 && cert.min_margin >= -1e-12) {
        cert.verdict = "certified";
    } else {
        cert.verdict = "inconclusive";
        if (std::abs(cert.mu) <= so.tol)
            cert.diagnostics.push_back("smallest projected-Hessian eigenvalue within tolerance of 0");
        if (cert.converged == 0) cert.diagnostics.push_back("no sample converged");
    }
    if (cert.diverged > 0)
        cert.diagnostics.push_back(std::to_string(cert.diverged) + " samples left the chart");
    return cert;
}

}  // namespace curvcheck
