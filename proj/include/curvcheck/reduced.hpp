#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "curvcheck/errors.hpp"
#include "curvcheck/expr.hpp"
#include "curvcheck/geometry.hpp"
#include "curvcheck/implicit.hpp"
#include "curvcheck/optimality.hpp"

namespace curvcheck {

struct PsiParams {
    double newton_tol = 1e-12;
    int max_iter = 50;
};

// F(a) = f(x* + V a + Jg(x*)^T psi(a)) where psi(a) solves
// g(x* + V a + Jg(x*)^T psi(a)) = 0 near a = 0. The only mutable state is a
// memo of solved (a -> b) pairs, guarded for concurrent use.
class ReducedFunctional {
public:
    ReducedFunctional(Expression f, std::vector<Expression> g, Eigen::VectorXd x_star,
                      TangentBasis basis, PsiParams params = {})
        : f_(std::move(f)),
          g_(std::move(g)),
          x_star_(std::move(x_star)),
          basis_(std::move(basis)),
          params_(params),
          cache_mutex_(std::make_unique<std::mutex>()) {
        const int n = static_cast<int>(x_star_.size());
        const int m = static_cast<int>(g_.size());
        jac_g_.resize(m, n);
        for (int i = 0; i < m; ++i) jac_g_.row(i) = eval_jet2(g_[i], x_star_).grad.transpose();
        section_ = std::make_shared<const SectionProblem>(
            SectionProblem::constraint(g_, x_star_, jac_g_));
        f0_ = eval_value(f_, x_star_);
    }

    int dim() const { return basis_.tangent_dim(); }
    int codim() const { return static_cast<int>(g_.size()); }
    const Eigen::VectorXd& x_star() const { return x_star_; }
    const TangentBasis& basis() const { return basis_; }
    const Eigen::MatrixXd& jac_g() const { return jac_g_; }
    const PsiParams& params() const { return params_; }
    double value_at_zero() const { return f0_; }

    // Normal offsets psi(a). Solved by Newton with continuation along the
    // ray through a so the iteration tracks the branch through x* rather
    // than jumping to a far sheet.
    Eigen::VectorXd solve_psi(const Eigen::VectorXd& a,
                              const std::optional<Eigen::VectorXd>& hint = {}) const {
        if (a.size() != dim()) throw DimensionMismatch("tangent coordinate has wrong dimension");
        if (a.isZero(0.0)) return Eigen::VectorXd::Zero(codim());

        {
            std::lock_guard<std::mutex> lock(*cache_mutex_);
            auto it = cache_.find(key_of(a));
            if (it != cache_.end()) return it->second;
        }

        const Eigen::VectorXd va = basis_.V * a;
        std::optional<Eigen::VectorXd> sol;
        if (hint) {
            sol = section_->solve(1.0, va, *hint, params_.newton_tol, params_.max_iter);
        } else {
            // fast path from zero, then staged continuation if that fails
            sol = section_->solve(1.0, va, Eigen::VectorXd::Zero(codim()), params_.newton_tol,
                                  params_.max_iter);
            if (!sol) {
                Eigen::VectorXd warm = Eigen::VectorXd::Zero(codim());
                for (double frac : {0.25, 0.5, 1.0}) {
                    sol = section_->solve(frac, va, warm, params_.newton_tol, params_.max_iter);
                    if (!sol) break;
                    warm = *sol;
                }
            }
        }
        if (!sol) throw NewtonDivergence("psi solve diverged; tangent coordinate outside the chart");

        {
            std::lock_guard<std::mutex> lock(*cache_mutex_);
            cache_.emplace(key_of(a), *sol);
        }
        return *sol;
    }

    Eigen::VectorXd lift(const Eigen::VectorXd& a) const {
        if (a.isZero(0.0)) return x_star_;
        return section_->point(1.0, basis_.V * a, solve_psi(a));
    }

    // F(a); the reduced objective on the constraint manifold.
    double value(const Eigen::VectorXd& a) const { return eval_value(f_, lift(a)); }

private:
    static std::vector<double> key_of(const Eigen::VectorXd& a) {
        return std::vector<double>(a.data(), a.data() + a.size());
    }

    Expression f_;
    std::vector<Expression> g_;
    Eigen::VectorXd x_star_;
    TangentBasis basis_;
    Eigen::MatrixXd jac_g_;
    std::shared_ptr<const SectionProblem> section_;
    PsiParams params_;
    double f0_ = 0.0;

    std::unique_ptr<std::mutex> cache_mutex_;
    mutable std::map<std::vector<double>, Eigen::VectorXd> cache_;
};

inline double reduced_value(const ReducedFunctional& rf, const Eigen::VectorXd& a) {
    return rf.value(a);
}

// Central finite-difference gradient of F at 0; O(fd_step^2) when the
// first-order conditions hold.
inline Eigen::VectorXd reduced_gradient_zero(const ReducedFunctional& rf, double fd_step = 1e-4) {
    const int d = rf.dim();
    Eigen::VectorXd grad(d);
    for (int k = 0; k < d; ++k) {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(d);
        a[k] = fd_step;
        const double fp = rf.value(a);
        a[k] = -fd_step;
        const double fm = rf.value(a);
        grad[k] = (fp - fm) / (2.0 * fd_step);
    }
    return grad;
}

inline Eigen::MatrixXd reduced_hessian_zero(const ReducedFunctional& rf, double fd_step = 1e-4) {
    const int d = rf.dim();
    const double h = fd_step;
    Eigen::MatrixXd H(d, d);
    const double f0 = rf.value_at_zero();
    for (int k = 0; k < d; ++k) {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(d);
        a[k] = h;
        const double fp = rf.value(a);
        a[k] = -h;
        const double fm = rf.value(a);
        H(k, k) = (fp - 2.0 * f0 + fm) / (h * h);
        for (int l = 0; l < k; ++l) {
            Eigen::VectorXd s = Eigen::VectorXd::Zero(d);
            s[k] = h;
            s[l] = h;
            const double fpp = rf.value(s);
            s[l] = -h;
            const double fpm = rf.value(s);
            s[k] = -h;
            s[l] = h;
            const double fmp = rf.value(s);
            s[l] = -h;
            const double fmm = rf.value(s);
            H(k, l) = H(l, k) = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
        }
    }
    return H;
}

// Max-norm residual between the finite-difference Hessian of F at 0 and the
// tangent-restricted Lagrangian Hessian; the two agree at a stationary point.
inline double reduced_hessian_consistency(const ReducedFunctional& rf, const DerivativeBundle& b,
                                          const MultiplierSet& ms, double fd_step = 1e-4) {
    if (!check_first_order(ms))
        throw FirstOrderViolated("reduced Hessian comparison needs a stationary point");
    const Eigen::MatrixXd fd = reduced_hessian_zero(rf, fd_step);
    const Eigen::MatrixXd projected =
        rf.basis().V.transpose() * lagrangian_hessian(b, ms.lambda) * rf.basis().V;
    if (fd.size() == 0) return 0.0;
    return (fd - projected).cwiseAbs().maxCoeff();
}

// Finite-difference Hessians of each component of psi at 0.
inline std::vector<Eigen::MatrixXd> psi_hessians_zero(const ReducedFunctional& rf,
                                                      double fd_step = 1e-4) {
    const int d = rf.dim();
    const int m = rf.codim();
    const double h = fd_step;
    std::vector<Eigen::MatrixXd> H(m, Eigen::MatrixXd(d, d));

    auto psi = [&](const Eigen::VectorXd& a) { return rf.solve_psi(a); };
    const Eigen::VectorXd psi0 = Eigen::VectorXd::Zero(m);

    for (int k = 0; k < d; ++k) {
        Eigen::VectorXd a = Eigen::VectorXd::Zero(d);
        a[k] = h;
        const Eigen::VectorXd pp = psi(a);
        a[k] = -h;
        const Eigen::VectorXd pm = psi(a);
        const Eigen::VectorXd diag = (pp - 2.0 * psi0 + pm) / (h * h);
        for (int j = 0; j < m; ++j) H[j](k, k) = diag[j];
        for (int l = 0; l < k; ++l) {
            Eigen::VectorXd s = Eigen::VectorXd::Zero(d);
            s[k] = h;
            s[l] = h;
            const Eigen::VectorXd fpp = psi(s);
            s[l] = -h;
            const Eigen::VectorXd fpm = psi(s);
            s[k] = -h;
            s[l] = h;
            const Eigen::VectorXd fmp = psi(s);
            s[l] = -h;
            const Eigen::VectorXd fmm = psi(s);
            const Eigen::VectorXd off = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
            for (int j = 0; j < m; ++j) H[j](k, l) = H[j](l, k) = off[j];
        }
    }
    return H;
}

struct PsiIdentityResiduals {
    // max_i | V^T Hg_i V + sum_j (grad g_i . grad g_j) Hpsi_j |_max
    double constraint_hessian = 0.0;
    // max over probe directions of the defect in
    // a^T Hpsi a = -(Jg Jg^T)^{-1} (a^T V^T Hg V a)
    double quadratic_form = 0.0;
};

inline PsiIdentityResiduals psi_identities_check(const ReducedFunctional& rf,
                                                 const DerivativeBundle& b,
                                                 double fd_step = 1e-4) {
    const int d = rf.dim();
    const int m = rf.codim();
    PsiIdentityResiduals out;
    if (d == 0 || m == 0) return out;

    const std::vector<Eigen::MatrixXd> Hpsi = psi_hessians_zero(rf, fd_step);
    const Eigen::MatrixXd& V = rf.basis().V;
    const Eigen::MatrixXd gram = b.jac_g * b.jac_g.transpose();

    for (int i = 0; i < m; ++i) {
        Eigen::MatrixXd lhs = V.transpose() * b.hess_g[i] * V;
        for (int j = 0; j < m; ++j) lhs += gram(i, j) * Hpsi[j];
        out.constraint_hessian = std::max(out.constraint_hessian, lhs.cwiseAbs().maxCoeff());
    }

    // probe the quadratic-form identity along the coordinate directions and
    // the diagonal direction
    std::vector<Eigen::VectorXd> probes;
    for (int k = 0; k < d; ++k) probes.push_back(Eigen::VectorXd::Unit(d, k));
    probes.push_back(Eigen::VectorXd::Constant(d, 1.0 / std::sqrt(static_cast<double>(d))));

    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success)
        throw RankDeficientJacobian("Gram matrix of the constraint Jacobian is not positive definite");
    for (const Eigen::VectorXd& a : probes) {
        Eigen::VectorXd w(m);
        const Eigen::VectorXd va = V * a;
        for (int i = 0; i < m; ++i) w[i] = va.dot(b.hess_g[i] * va);
        const Eigen::VectorXd rhs = -llt.solve(w);
        for (int j = 0; j < m; ++j)
            out.quadratic_form =
                std::max(out.quadratic_form, std::abs(a.dot(Hpsi[j] * a) - rhs[j]));
    }
    return out;
}

}  // namespace curvcheck
