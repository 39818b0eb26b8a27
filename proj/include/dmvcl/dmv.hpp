#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/LU>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "dmvcl/angles.hpp"
#include "dmvcl/errors.hpp"
#include "dmvcl/motion.hpp"

namespace dmvcl {

// Lower end of the admissible fusion-weight interval. Below this the
// two-row measurement information cannot make the 3x3 information sum
// full rank on its own.
inline constexpr double kOmegaMin = 1e-3;
inline constexpr double kColocationEps = 1e-9;  // m

/// Relative range + relative heading with 2x2 noise covariance.
struct RelativeMeasurement {
    double range = 0.0;        // m
    double rel_heading = 0.0;  // rad, (-pi, pi]
    Eigen::Matrix2d noise_cov = Eigen::Matrix2d::Identity();
};

/// Linearized measurement model: rows are (range, rel_heading),
/// columns the observing agent's / landmark agent's state.
struct MeasurementJacobians {
    Eigen::Matrix<double, 2, 3> h_i;
    Eigen::Matrix<double, 2, 3> h_j;
};

/// Fusion weight in [kOmegaMin, 1].
struct Omega {
    double value = 1.0;
};

/// h(x^i, x^j) = [sqrt((x^i-x^j)^2 + (y^i-y^j)^2); phi^j - phi^i]
inline std::pair<double, double> predict_measurement(const AgentState& xi,
                                                     const AgentState& xj) {
    const double dx = xi.x - xj.x;
    const double dy = xi.y - xj.y;
    const double range = std::sqrt(dx * dx + dy * dy);
    if (range <= kColocationEps) {
        throw SingularGeometryError("predict_measurement: agents co-located");
    }
    return {range, wrap_angle(xj.phi - xi.phi)};
}

inline MeasurementJacobians measurement_jacobians(const AgentState& xi,
                                                  const AgentState& xj) {
    const double dx = xi.x - xj.x;
    const double dy = xi.y - xj.y;
    const double rho = std::sqrt(dx * dx + dy * dy);
    if (rho <= kColocationEps) {
        throw SingularGeometryError("measurement_jacobians: agents co-located");
    }
    MeasurementJacobians jac;
    jac.h_i << dx / rho, dy / rho, 0.0,
               0.0, 0.0, -1.0;
    jac.h_j << -dx / rho, -dy / rho, 0.0,
               0.0, 0.0, 1.0;
    return jac;
}

/// Updated covariance as a function of the fusion weight:
///   P(w) = (w P_i^-1 + (1-w) H_i^T (H_j P_j H_j^T + (1-w) R)^-1 H_i)^-1
/// At w = 1 this is exactly P_i.
inline Eigen::Matrix3d dmv_updated_cov(const Eigen::Matrix3d& p_i,
                                       const Eigen::Matrix3d& p_j,
                                       const MeasurementJacobians& jac,
                                       const Eigen::Matrix2d& r, Omega omega) {
    const double w = omega.value;
    Eigen::Matrix2d inner = jac.h_j * p_j * jac.h_j.transpose() + (1.0 - w) * r;
    Eigen::FullPivLU<Eigen::Matrix2d> inner_lu(inner);
    if (!inner_lu.isInvertible()) {
        throw NumericalError("dmv_updated_cov: inner 2x2 matrix singular");
    }
    Eigen::LLT<Eigen::Matrix3d> p_i_llt(p_i);
    if (p_i_llt.info() != Eigen::Success) {
        throw NumericalError("dmv_updated_cov: prior covariance not PD");
    }
    const Eigen::Matrix3d p_i_inv = p_i_llt.solve(Eigen::Matrix3d::Identity());
    const Eigen::Matrix3d info =
        w * p_i_inv +
        (1.0 - w) * jac.h_i.transpose() * inner_lu.inverse() * jac.h_i;
    Eigen::FullPivLU<Eigen::Matrix3d> info_lu(info);
    if (!info_lu.isInvertible()) {
        throw NumericalError("dmv_updated_cov: information matrix singular");
    }
    return symmetrize(info_lu.inverse());
}

/// Gain K(w) = (P_i/w) H_i^T (H_i (P_i/w) H_i^T + H_j (P_j/(1-w)) H_j^T + R)^-1.
/// Omega is clamped to 1 - kOmegaMin to keep the 1/(1-w) term finite.
inline Eigen::Matrix<double, 3, 2> dmv_gain(const Eigen::Matrix3d& p_i,
                                            const Eigen::Matrix3d& p_j,
                                            const MeasurementJacobians& jac,
                                            const Eigen::Matrix2d& r,
                                            Omega omega) {
    const double w = std::min(std::max(omega.value, kOmegaMin), 1.0 - kOmegaMin);
    const Eigen::Matrix3d p_i_infl = p_i / w;
    const Eigen::Matrix3d p_j_infl = p_j / (1.0 - w);
    Eigen::Matrix2d s = jac.h_i * p_i_infl * jac.h_i.transpose() +
                        jac.h_j * p_j_infl * jac.h_j.transpose() + r;
    Eigen::FullPivLU<Eigen::Matrix2d> s_lu(s);
    if (!s_lu.isInvertible()) {
        throw NumericalError("dmv_gain: innovation covariance singular");
    }
    return p_i_infl * jac.h_i.transpose() * s_lu.inverse();
}

namespace detail {

inline double logdet_pd(const Eigen::Matrix3d& m) {
    Eigen::LLT<Eigen::Matrix3d> llt(m);
    if (llt.info() != Eigen::Success) {
        throw NumericalError("logdet: matrix not PD");
    }
    const Eigen::Matrix3d l = llt.matrixL();
    return 2.0 * std::log(l(0, 0)) + 2.0 * std::log(l(1, 1)) +
           2.0 * std::log(l(2, 2));
}

}  // namespace detail

/// Minimizes logdet P(w) over [kOmegaMin, 1]: coarse 50-point grid,
/// then golden-section refinement in the bracket around the grid best.
inline Omega optimize_omega(const Eigen::Matrix3d& p_i,
                            const Eigen::Matrix3d& p_j,
                            const MeasurementJacobians& jac,
                            const Eigen::Matrix2d& r) {
    const auto objective = [&](double w) -> double {
        try {
            return detail::logdet_pd(dmv_updated_cov(p_i, p_j, jac, r, {w}));
        } catch (const NumericalError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    constexpr int kGridPoints = 50;
    double best_w = 1.0;
    double best_val = objective(1.0);
    int best_idx = kGridPoints - 1;
    std::vector<double> grid(kGridPoints);
    for (int k = 0; k < kGridPoints; ++k) {
        grid[k] = kOmegaMin + (1.0 - kOmegaMin) * k / (kGridPoints - 1);
        const double val = objective(grid[k]);
        if (val < best_val) {
            best_val = val;
            best_w = grid[k];
            best_idx = k;
        }
    }
    if (std::isinf(best_val)) {
        throw NumericalError("optimize_omega: objective not evaluable anywhere");
    }

    double lo = grid[std::max(best_idx - 1, 0)];
    double hi = grid[std::min(best_idx + 1, kGridPoints - 1)];
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double a = lo, b = hi;
    double c = b - inv_phi * (b - a);
    double d = a + inv_phi * (b - a);
    double fc = objective(c);
    double fd = objective(d);
    while (b - a > 1e-6) {
        if (fc < fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = objective(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = objective(d);
        }
        if (fc < best_val) { best_val = fc; best_w = c; }
        if (fd < best_val) { best_val = fd; best_w = d; }
    }
    return {best_w};
}

/// One DMV update of bel_i with a relative measurement of agent j.
/// The heading residual is wrapped; omega at the w = 1 endpoint makes
/// the update an exact no-op.
inline Belief dmv_update(const Belief& bel_i, const Belief& bel_j,
                         const RelativeMeasurement& z) {
    const MeasurementJacobians jac =
        measurement_jacobians(bel_i.estimate, bel_j.estimate);
    const Omega omega =
        optimize_omega(bel_i.cov, bel_j.cov, jac, z.noise_cov);

    if (omega.value >= 1.0 - 1e-9) {
        // Measurement judged useless; keep the prior.
        Belief out = bel_i;
        out.cov = symmetrize(out.cov);
        return out;
    }

    const auto [z_range, z_heading] =
        predict_measurement(bel_i.estimate, bel_j.estimate);
    Eigen::Vector2d innovation(z.range - z_range,
                               wrap_angle(z.rel_heading - z_heading));
    const Eigen::Matrix<double, 3, 2> gain =
        dmv_gain(bel_i.cov, bel_j.cov, jac, z.noise_cov, omega);

    Belief out;
    const Eigen::Vector3d updated =
        bel_i.estimate.vector() + gain * innovation;
    out.estimate = AgentState::from_vector(updated);
    out.cov = dmv_updated_cov(bel_i.cov, bel_j.cov, jac, z.noise_cov, omega);
    if (!is_positive_definite(out.cov)) {
        throw NumericalError("dmv_update: updated covariance not PD");
    }
    return out;
}

/// Folds dmv_update left-to-right over an ordered list of
/// (landmark belief, measurement) pairs.
inline Belief sequential_update(
    const Belief& bel_i,
    const std::vector<std::pair<Belief, RelativeMeasurement>>& landmarks) {
    Belief current = bel_i;
    for (std::size_t k = 0; k < landmarks.size(); ++k) {
        try {
            current = dmv_update(current, landmarks[k].first, landmarks[k].second);
        } catch (const std::runtime_error& e) {
            throw NumericalError("sequential_update: update " +
                                 std::to_string(k) + " failed: " + e.what());
        }
    }
    return current;
}

}  // namespace dmvcl
