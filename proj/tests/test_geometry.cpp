#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "curvcheck/geometry.hpp"
#include "curvcheck/optimality.hpp"
#include "helpers.hpp"

using namespace curvcheck;
using testutil::Rng;
using testutil::vec;

namespace {

DerivativeBundle bundle_of(const std::string& f, const std::vector<std::string>& g,
                           const Eigen::VectorXd& x) {
    testutil::BatteryProblem bp;
    bp.n = static_cast<int>(x.size());
    bp.m = static_cast<int>(g.size());
    bp.f = f;
    bp.g = g;
    bp.x_star = x;
    return evaluate_bundle(testutil::make_problem(bp), x);
}

// SVD-pseudoinverse route to the tangent projector, independent of the
// Cholesky Gram solve used by the implementation.
Eigen::MatrixXd projector_pinv_oracle(const Eigen::MatrixXd& jac) {
    const int n = static_cast<int>(jac.cols());
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jac, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Eigen::MatrixXd pinv = svd.solve(Eigen::MatrixXd::Identity(jac.rows(), jac.rows()));
    return Eigen::MatrixXd::Identity(n, n) - pinv * jac;
}

}  // namespace

TEST_CASE("unit_normal_f") {
    CHECK((unit_normal_f(bundle_of("x1", {"x3"}, vec({0.3, 0.7, 0.0}))) -
           vec({1, 0, 0}))
              .norm() == 0.0);
    const Eigen::VectorXd nu = unit_normal_f(bundle_of("x1^2 + x2^2", {"x1"}, vec({1, 1})));
    CHECK(std::abs(nu[0] - 1.0 / std::sqrt(2.0)) < 1e-15);
    CHECK(std::abs(nu[1] - 1.0 / std::sqrt(2.0)) < 1e-15);
    CHECK(std::abs(nu.norm() - 1.0) <= 1e-14);
    CHECK_THROWS_AS(unit_normal_f(bundle_of("x1^2 + x2^2", {"x1"}, vec({0, 0}))),
                    DegeneratePoint);
}

TEST_CASE("projector_hypersurface") {
    const Projector p = projector_hypersurface(bundle_of("x1", {"x3"}, vec({0.1, 0.2, 0.3})));
    Eigen::MatrixXd expected = Eigen::MatrixXd::Zero(3, 3);
    expected(1, 1) = expected(2, 2) = 1.0;
    CHECK((p.P - expected).cwiseAbs().maxCoeff() < 1e-15);

    const Projector pr = projector_hypersurface(bundle_of("x1^2 + x2^2", {"x1"}, vec({1, 0})));
    CHECK(std::abs(pr.P(0, 0)) < 1e-15);
    CHECK(std::abs(pr.P(1, 1) - 1.0) < 1e-15);
    CHECK((pr.P * pr.P - pr.P).cwiseAbs().maxCoeff() < 1e-12);

    const DerivativeBundle b = bundle_of("x1^2 + x2^2", {"x1"}, vec({1, 0}));
    CHECK((pr.P * b.grad_f).norm() < 1e-10);
}

TEST_CASE("projector_constraint") {
    const Projector p = projector_constraint(bundle_of("x1", {"x3"}, vec({0.5, -2.0, 0.0})));
    Eigen::MatrixXd expected = Eigen::MatrixXd::Identity(3, 3);
    expected(2, 2) = 0.0;
    CHECK((p.P - expected).cwiseAbs().maxCoeff() < 1e-14);

    // unit circle at (1,0): tangent space is the x2 axis
    const DerivativeBundle circ = bundle_of("x1", {"x1^2 + x2^2 - 1"}, vec({1, 0}));
    const Projector pc = projector_constraint(circ);
    Eigen::MatrixXd expected2 = Eigen::MatrixXd::Zero(2, 2);
    expected2(1, 1) = 1.0;
    CHECK((pc.P - expected2).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((pc.P - projector_pinv_oracle(circ.jac_g)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((pc.P * circ.jac_g.transpose()).cwiseAbs().maxCoeff() < 1e-9);

    CHECK_THROWS_AS(
        projector_constraint(bundle_of("x1", {"x1 + x2", "x1 + x2"}, vec({0, 0, 0}))),
        RankDeficientJacobian);
}

TEST_CASE("tangent_basis") {
    const TangentBasis base = tangent_basis(bundle_of("x1", {"x3"}, vec({0.0, 0.0, 0.0})));
    REQUIRE(base.tangent_dim() == 2);
    CHECK((base.V.transpose() * base.V - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <
          1e-12);
    // sign convention: first sizeable entry of each column is positive
    for (int c = 0; c < 2; ++c) {
        for (int r = 0; r < 3; ++r) {
            if (std::abs(base.V(r, c)) > 1e-12) {
                CHECK(base.V(r, c) > 0.0);
                break;
            }
        }
    }

    const TangentBasis line = tangent_basis(bundle_of("x1", {"x1 + x2 - 2"}, vec({1, 1})));
    REQUIRE(line.tangent_dim() == 1);
    CHECK(std::abs(line.V(0, 0) - 1.0 / std::sqrt(2.0)) < 1e-12);
    CHECK(std::abs(line.V(1, 0) + 1.0 / std::sqrt(2.0)) < 1e-12);

    // m = n: zero-dimensional manifold, empty basis
    const TangentBasis point = tangent_basis(bundle_of("x1", {"x1 - 1", "x2"}, vec({1, 0})));
    CHECK(point.tangent_dim() == 0);

    // determinism: same input twice gives the same matrix
    const DerivativeBundle b = bundle_of("x1", {"x1^2 + x2^2 + x3^2 - 1"}, vec({-1, 0, 0}));
    CHECK((tangent_basis(b).V - tangent_basis(b).V).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("tangent basis annihilates the Jacobian") {
    Rng rng(0x9e0);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + rng.below(5);
        const int m = 1 + rng.below(n - 1);
        const auto inst = testutil::random_stationary_bundle(rng, n, m);
        TangentBasis V;
        try {
            V = tangent_basis(inst.bundle);
        } catch (const RankDeficientJacobian&) {
            continue;
        }
        const double jn = 1.0 + inst.bundle.jac_g.cwiseAbs().maxCoeff();
        CHECK((inst.bundle.jac_g * V.V).cwiseAbs().maxCoeff() <= 1e-10 * jn);
        CHECK((V.V.transpose() * V.V - Eigen::MatrixXd::Identity(n - m, n - m))
                  .cwiseAbs()
                  .maxCoeff() <= 1e-12);
    }
}

TEST_CASE("sff_f worked examples") {
    // linear objective: flat level sets
    const DerivativeBundle lin = bundle_of("x1", {"x2"}, vec({0.4, 0.0, 1.0}));
    Eigen::VectorXd v = vec({0, 1, 0});
    CHECK(sff_f(lin, v).along_nu_f == 0.0);

    // circle of radius sqrt(2)
    const DerivativeBundle circ = bundle_of("x1^2 + x2^2", {"x1"}, vec({1, 1}));
    Eigen::VectorXd tang(2);
    tang << 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0);
    const SffValue h = sff_f(circ, tang);
    CHECK(h.along_nu_f == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(std::abs(h.along_nu_f - (-0.70711)) < 1e-5);

    // unit sphere
    const DerivativeBundle sph = bundle_of("x1^2 + x2^2 + x3^2", {"x3"}, vec({0, 0, 1}));
    const SffValue hs = sff_f(sph, vec({1, 0, 0}));
    CHECK(hs.along_nu_f == doctest::Approx(-1.0).epsilon(1e-12));

    CHECK_THROWS_AS(sff_f(circ, vec({1, 0})), NotTangent);
}

TEST_CASE("sff_g worked examples") {
    // affine constraints are flat
    const DerivativeBundle aff = bundle_of("x1", {"x1 + x2 - 2"}, vec({1, 1}));
    Eigen::VectorXd v(2);
    v << 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0);
    CHECK(sff_g(aff, v).vector_part.norm() == 0.0);

    // unit circle with linear objective
    const DerivativeBundle circ = bundle_of("x1", {"x1^2 + x2^2 - 1"}, vec({-1, 0}));
    const SffValue h = sff_g(circ, vec({0, 1}));
    CHECK(h.along_nu_f == doctest::Approx(1.0).epsilon(1e-12));

    // intersection of a plane and a cylinder: m = 2 in R^3
    const DerivativeBundle inter =
        bundle_of("x1", {"x3", "x1^2 + x2^2 - 1"}, vec({1, 0, 0}));
    const SffValue hi = sff_g(inter, vec({0, 1, 0}));
    CHECK((hi.vector_part - vec({-1, 0, 0})).norm() < 1e-12);

    CHECK_THROWS_AS(sff_g(circ, vec({1, 0})), NotTangent);
}

TEST_CASE("second fundamental form lands in the normal space") {
    Rng rng(0xbada55);
    int done = 0;
    while (done < 25) {
        const int n = 2 + rng.below(5);
        const int m = 1 + rng.below(n - 1);
        const auto inst = testutil::random_stationary_bundle(rng, n, m);
        if (inst.bundle.grad_f.norm() < 0.3) continue;
        TangentBasis V;
        try {
            V = tangent_basis(inst.bundle);
        } catch (const RankDeficientJacobian&) {
            continue;
        }
        if (V.tangent_dim() == 0) continue;
        Eigen::VectorXd v = (V.V * rng.vector(V.tangent_dim(), -1.0, 1.0));
        if (v.norm() < 1e-6) continue;
        v.normalize();

        const SffValue hg = sff_g(inst.bundle, v);
        const Projector pg = projector_constraint(inst.bundle);
        CHECK((pg.P * hg.vector_part).norm() <= 1e-8 * (1.0 + hg.vector_part.norm()));

        // the f-level-set form along a direction tangent to it
        const Projector pf = projector_hypersurface(inst.bundle);
        Eigen::VectorXd vf = pf.P * v;
        if (vf.norm() > 1e-6) {
            vf.normalize();
            const SffValue hf = sff_f(inst.bundle, vf);
            CHECK((pf.P * hf.vector_part).norm() <= 1e-8 * (1.0 + hf.vector_part.norm()));
        }
        ++done;
    }
}

TEST_CASE("polarized form is symmetric") {
    Rng rng(0x50fa);
    const DerivativeBundle b =
        bundle_of("x1", {"x1^2 + 0.5*x2^2 + x3^2 + 0.25*x2*x3 - 1"}, vec({-1, 0, 0}));
    const TangentBasis V = tangent_basis(b);
    auto hg = [&](const Eigen::VectorXd& w) { return sff_g(b, w, 1.0); };
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd u = V.V * rng.vector(2, -1.0, 1.0);
        Eigen::VectorXd v = V.V * rng.vector(2, -1.0, 1.0);
        const Eigen::VectorXd huv = sff_polarized(hg, u, v);
        const Eigen::VectorXd hvu = sff_polarized(hg, v, u);
        CHECK((huv - hvu).lpNorm<Eigen::Infinity>() <= 1e-9);
    }
}

TEST_CASE("scale invariance of the level-set geometry") {
    Rng rng(0x5ca1e);
    for (double c : {0.1, 10.0}) {
        const std::string scaled = testutil::fmt_const(c) + "*(x1^2 + 2*x2^2 + 0.3*x1*x2)";
        const DerivativeBundle b1 = bundle_of("x1^2 + 2*x2^2 + 0.3*x1*x2", {"x1"}, vec({1, 1}));
        const DerivativeBundle bc = bundle_of(scaled, {"x1"}, vec({1, 1}));
        CHECK((unit_normal_f(b1) - unit_normal_f(bc)).lpNorm<Eigen::Infinity>() <= 1e-10);
        CHECK((projector_hypersurface(b1).P - projector_hypersurface(bc).P)
                  .lpNorm<Eigen::Infinity>() <= 1e-10);
        Eigen::VectorXd v = projector_hypersurface(b1).P * rng.vector(2, -1.0, 1.0);
        v.normalize();
        CHECK(std::abs(sff_f(b1, v).along_nu_f - sff_f(bc, v).along_nu_f) <= 1e-10);
    }
}

TEST_CASE("planar curvatures: paraboloid over a line") {
    const DerivativeBundle b = bundle_of("x1^2 + x2^2", {"x1 + x2 - 2"}, vec({1, 1}));
    const PlanarCurvatureReport r = planar_curvatures(b, b);
    CHECK(r.kappa_f == doctest::Approx(-1.0 / std::sqrt(2.0)).epsilon(1e-12));
    CHECK(r.kappa_g == 0.0);
    CHECK(r.sign == 1);
    CHECK(r.holds);
    CHECK(r.quadrant == 'b');
    CHECK(std::abs(r.u_f.norm() - 1.0) <= 1e-12);
    CHECK(std::abs(r.u_g.norm() - 1.0) <= 1e-12);
}

TEST_CASE("planar curvatures: circle with opposite gradient orientation") {
    const DerivativeBundle b = bundle_of("x1", {"x1^2 + x2^2 - 1"}, vec({-1, 0}));
    const PlanarCurvatureReport r = planar_curvatures(b, b);
    CHECK(r.kappa_f == 0.0);
    CHECK(r.kappa_g == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(r.sign == -1);
    CHECK(r.holds);  // 0 <= (-1)*(-1) = +1
}

TEST_CASE("planar curvatures: identical curves give equality") {
    const DerivativeBundle b = bundle_of("x1^2 + x2^2 - 1", {"x1^2 + x2^2 - 1"}, vec({1, 0}));
    const PlanarCurvatureReport r = planar_curvatures(b, b);
    CHECK(r.kappa_f == doctest::Approx(r.kappa_g).epsilon(1e-14));
    CHECK(r.sign == 1);
    CHECK(r.holds);
}

TEST_CASE("planar curvature errors") {
    CHECK_THROWS_AS(planar_curvatures(bundle_of("x1", {"x3"}, vec({0, 0, 0})),
                                      bundle_of("x1", {"x3"}, vec({0, 0, 0}))),
                    DimensionMismatch);
    const DerivativeBundle degen = bundle_of("x1^2 + x2^2", {"x1"}, vec({0, 0}));
    CHECK_THROWS_AS(planar_curvatures(degen, degen), DegeneratePoint);
}

TEST_CASE("quadrant tie rule") {
    CHECK(planar_quadrant(-0.7071, 0.0) == 'b');
    CHECK(planar_quadrant(0.5, -0.5) == 'c');
    CHECK(planar_quadrant(-0.5, 0.7) == 'd');
    CHECK(planar_quadrant(0.5, 0.5) == 'a');
    CHECK(planar_quadrant(-0.5, -0.5) == 'b');
    CHECK(planar_quadrant(0.0, 0.0) == 'a');
    CHECK(planar_quadrant(0.0, 0.4) == 'a');
    CHECK(planar_quadrant(0.3, 0.0) == 'a');
    CHECK(planar_quadrant(0.0, -0.4) == 'b');
    CHECK(planar_quadrant(5e-11, -0.4) == 'b');  // below the zero tolerance
}
