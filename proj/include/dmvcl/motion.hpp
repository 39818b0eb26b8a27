#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cmath>
#include <utility>

#include "dmvcl/angles.hpp"
#include "dmvcl/errors.hpp"

namespace dmvcl {

/// Planar pose (x, y, phi), phi kept in (-pi, pi].
struct AgentState {
    double x = 0.0;
    double y = 0.0;
    double phi = 0.0;

    Eigen::Vector3d vector() const { return {x, y, phi}; }

    static AgentState from_vector(const Eigen::Vector3d& v) {
        return {v(0), v(1), wrap_angle(v(2))};
    }
};

/// State estimate plus 3x3 error covariance; the unit of exchange
/// between agents.
struct Belief {
    AgentState estimate;
    Eigen::Matrix3d cov = Eigen::Matrix3d::Identity();
};

/// Measured linear/angular velocity over one timestep.
struct OdometryInput {
    double v_m = 0.0;      // m/s
    double omega_m = 0.0;  // rad/s
    double dt = 0.0;       // s, > 0
};

/// Odometry noise: std of v noise scales with |v_m|, omega noise is
/// a fixed std.
struct OdometryNoiseModel {
    double sigma_v_scale = 0.0;  // dimensionless
    double sigma_omega = 0.0;    // rad/s

    Eigen::Matrix2d process_cov(double v_m) const {
        const double sv = sigma_v_scale * std::abs(v_m);
        Eigen::Matrix2d q = Eigen::Matrix2d::Zero();
        q(0, 0) = sv * sv;
        q(1, 1) = sigma_omega * sigma_omega;
        return q;
    }
};

inline Eigen::Matrix3d symmetrize(const Eigen::Matrix3d& m) {
    return 0.5 * (m + m.transpose());
}

inline bool is_positive_definite(const Eigen::Matrix3d& m) {
    Eigen::LLT<Eigen::Matrix3d> llt(m);
    return llt.info() == Eigen::Success;
}

/// Jacobians of the unicycle motion map, evaluated at the prior
/// estimate with noise at zero.
///   F = df/dx, G = df/deta
inline std::pair<Eigen::Matrix3d, Eigen::Matrix<double, 3, 2>> motion_jacobians(
    const AgentState& est, const OdometryInput& u) {
    if (u.dt <= 0.0) {
        throw ConfigError("motion_jacobians: dt must be > 0");
    }
    const double c = std::cos(est.phi);
    const double s = std::sin(est.phi);

    Eigen::Matrix3d f = Eigen::Matrix3d::Identity();
    f(0, 2) = -u.dt * u.v_m * s;
    f(1, 2) = u.dt * u.v_m * c;

    Eigen::Matrix<double, 3, 2> g = Eigen::Matrix<double, 3, 2>::Zero();
    g(0, 0) = u.dt * c;
    g(1, 0) = u.dt * s;
    g(2, 1) = u.dt;
    return {f, g};
}

/// One dead-reckoning step: unicycle kinematics on the estimate,
/// F P F^T + G Q G^T on the covariance.
inline Belief propagate_belief(const Belief& bel, const OdometryInput& u,
                               const OdometryNoiseModel& noise) {
    if (u.dt <= 0.0) {
        throw ConfigError("propagate_belief: dt must be > 0");
    }
    const auto [f, g] = motion_jacobians(bel.estimate, u);

    Belief out;
    out.estimate.x = bel.estimate.x + u.dt * u.v_m * std::cos(bel.estimate.phi);
    out.estimate.y = bel.estimate.y + u.dt * u.v_m * std::sin(bel.estimate.phi);
    out.estimate.phi = wrap_angle(bel.estimate.phi + u.dt * u.omega_m);

    const Eigen::Matrix2d q = noise.process_cov(u.v_m);
    out.cov = symmetrize(f * bel.cov * f.transpose() + g * q * g.transpose());
    if (!is_positive_definite(out.cov)) {
        throw NumericalError("propagate_belief: propagated covariance not PD");
    }
    return out;
}

}  // namespace dmvcl
