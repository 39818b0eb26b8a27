#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Cholesky>
#include <cmath>
#include <random>

#include "dmvcl/motion.hpp"
#include "test_helpers.hpp"

using namespace dmvcl;

namespace {

// Unwrapped motion map with explicit noise arguments; the independent
// oracle for the Jacobian finite-difference checks.
Eigen::Vector3d motion_map(const Eigen::Vector3d& x, const OdometryInput& u,
                           double eta_v, double eta_w) {
    const double v = u.v_m + eta_v;
    const double w = u.omega_m + eta_w;
    return {x(0) + u.dt * v * std::cos(x(2)), x(1) + u.dt * v * std::sin(x(2)),
            x(2) + u.dt * w};
}

}  // namespace

TEST_CASE("wrap_angle maps into (-pi, pi]") {
    CHECK(wrap_angle(0.0) == 0.0);
    CHECK(wrap_angle(3.0 * M_PI) == Catch::Approx(M_PI));
    CHECK(wrap_angle(-M_PI) == Catch::Approx(M_PI));
    CHECK(wrap_angle(2.0 * M_PI) == Catch::Approx(0.0).margin(1e-15));
    CHECK(wrap_angle(M_PI) == Catch::Approx(M_PI));
    CHECK_THROWS_AS(wrap_angle(std::nan("")), NumericalError);
}

TEST_CASE("propagation with zero input and zero noise is the identity") {
    Belief bel;
    bel.estimate = {1.0, -2.0, 0.7};
    bel.cov = Eigen::Vector3d(0.1, 0.2, 0.05).asDiagonal();
    const Belief out = propagate_belief(bel, {0.0, 0.0, 0.5}, {0.0, 0.0});
    CHECK(out.estimate.x == bel.estimate.x);
    CHECK(out.estimate.y == bel.estimate.y);
    CHECK(out.estimate.phi == bel.estimate.phi);
    CHECK((out.cov - bel.cov).norm() == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("axis-aligned motion advances x only") {
    Belief bel;
    bel.cov = 0.01 * Eigen::Matrix3d::Identity();
    const Belief out = propagate_belief(bel, {1.0, 0.0, 1.0}, {0.0, 0.0});
    CHECK(out.estimate.x == Catch::Approx(1.0));
    CHECK(out.estimate.y == Catch::Approx(0.0).margin(1e-15));
    CHECK(out.estimate.phi == Catch::Approx(0.0).margin(1e-15));
}

TEST_CASE("propagate rejects non-positive dt") {
    Belief bel;
    CHECK_THROWS_AS(propagate_belief(bel, {1.0, 0.0, 0.0}, {0.0, 0.0}),
                    ConfigError);
}

TEST_CASE("motion Jacobian closed forms") {
    SECTION("v = 0 gives identity F") {
        const auto [f, g] = motion_jacobians({0.3, -1.0, 1.1}, {0.0, 0.5, 0.2});
        CHECK((f - Eigen::Matrix3d::Identity()).norm() == 0.0);
    }
    SECTION("phi = pi/2, v = 1, dt = 0.1") {
        const auto [f, g] =
            motion_jacobians({0.0, 0.0, M_PI / 2.0}, {1.0, 0.0, 0.1});
        CHECK(f(0, 2) == Catch::Approx(-0.1));
        CHECK(f(1, 2) == Catch::Approx(0.0).margin(1e-12));
    }
}

TEST_CASE("motion Jacobians match central finite differences") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> vel(-1.5, 1.5);
    const double h = 1e-6;
    for (int trial = 0; trial < 1000; ++trial) {
        const AgentState est = testing::random_state(rng);
        const OdometryInput u{vel(rng), vel(rng), 0.1};
        const auto [f, g] = motion_jacobians(est, u);
        const Eigen::Vector3d x0 = est.vector();

        for (int col = 0; col < 3; ++col) {
            Eigen::Vector3d lo = x0, hi = x0;
            lo(col) -= h;
            hi(col) += h;
            const Eigen::Vector3d fd =
                (motion_map(hi, u, 0, 0) - motion_map(lo, u, 0, 0)) / (2 * h);
            for (int row = 0; row < 3; ++row) {
                REQUIRE(f(row, col) == Catch::Approx(fd(row)).margin(1e-6));
            }
        }
        for (int col = 0; col < 2; ++col) {
            const double ev = col == 0 ? h : 0.0;
            const double ew = col == 1 ? h : 0.0;
            const Eigen::Vector3d fd =
                (motion_map(x0, u, ev, ew) - motion_map(x0, u, -ev, -ew)) /
                (2 * h);
            for (int row = 0; row < 3; ++row) {
                REQUIRE(g(row, col) == Catch::Approx(fd(row)).margin(1e-6));
            }
        }
    }
}

TEST_CASE("propagated covariance matches a Monte Carlo rollout of the "
          "linearized noisy model") {
    std::mt19937_64 rng(11);
    Belief bel;
    bel.estimate = {0.5, -0.3, 0.9};
    bel.cov = testing::random_pd3(rng, 0.05);
    const OdometryInput u{0.8, 0.4, 0.2};
    const OdometryNoiseModel noise{0.5, 0.3};

    const Belief out = propagate_belief(bel, u, noise);

    const auto [f, g] = motion_jacobians(bel.estimate, u);
    const Eigen::Matrix2d q = noise.process_cov(u.v_m);
    const Eigen::Matrix3d chol_p = bel.cov.llt().matrixL();
    const Eigen::Matrix2d chol_q = q.llt().matrixL();

    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::Matrix3d accum = Eigen::Matrix3d::Zero();
    const int n_rollouts = 1000000;
    for (int k = 0; k < n_rollouts; ++k) {
        const Eigen::Vector3d dx =
            chol_p * Eigen::Vector3d(gauss(rng), gauss(rng), gauss(rng));
        const Eigen::Vector2d eta =
            chol_q * Eigen::Vector2d(gauss(rng), gauss(rng));
        const Eigen::Vector3d propagated = f * dx + g * eta;
        accum += propagated * propagated.transpose();
    }
    const Eigen::Matrix3d mc_cov = accum / n_rollouts;
    CHECK(out.cov.trace() ==
          Catch::Approx(mc_cov.trace()).epsilon(0.05));
}

TEST_CASE("det(cov) never decreases under propagation") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> vel(-1.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        Belief bel;
        bel.estimate = testing::random_state(rng);
        bel.cov = testing::random_pd3(rng);
        const OdometryInput u{vel(rng), vel(rng), 0.1};
        const OdometryNoiseModel noise{0.4, 0.2};
        const Belief out = propagate_belief(bel, u, noise);
        REQUIRE(out.cov.determinant() >=
                bel.cov.determinant() * (1.0 - 1e-9));
    }
}
