#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "dmvcl/angles.hpp"
#include "dmvcl/dmv.hpp"
#include "dmvcl/errors.hpp"
#include "dmvcl/mlp.hpp"
#include "dmvcl/motion.hpp"

namespace dmvcl {

struct OdometryRecord {
    double t = 0.0;
    double v = 0.0;
    double omega = 0.0;
};

struct MeasurementRecord {
    double t = 0.0;
    int subject = -1;  // robot index, 0-based
    double range = 0.0;
    double bearing = 0.0;
};

struct GroundTruthRecord {
    double t = 0.0;
    double x = 0.0;
    double y = 0.0;
    double phi = 0.0;
};

/// One robot's time-ordered streams.
struct RobotLog {
    std::vector<OdometryRecord> odometry;
    std::vector<MeasurementRecord> measurements;  // inter-robot only
    std::vector<GroundTruthRecord> groundtruth;
};

namespace detail {

inline std::vector<std::vector<double>> parse_columns(
    const std::filesystem::path& path, std::size_t n_columns) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("missing file: " + path.string());
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') {
            continue;
        }
        std::istringstream fields(line);
        std::vector<double> row;
        double value;
        while (fields >> value) {
            row.push_back(value);
        }
        if (row.size() != n_columns) {
            throw DataError(path.string() + ":" + std::to_string(line_no) +
                            ": expected " + std::to_string(n_columns) +
                            " fields, got " + std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

inline void check_time_order(const std::vector<double>& times,
                             const std::string& what, bool strict) {
    for (std::size_t k = 1; k < times.size(); ++k) {
        const bool bad = strict ? times[k] <= times[k - 1]
                                : times[k] < times[k - 1];
        if (bad) {
            throw DataError(what + ": out-of-order timestamp at record " +
                            std::to_string(k));
        }
    }
}

/// Index of the record whose time is nearest to t, or nullopt if the
/// nearest is farther than tol.
template <typename Rec>
std::optional<std::size_t> nearest_in_time(const std::vector<Rec>& records,
                                           double t, double tol) {
    if (records.empty()) {
        return std::nullopt;
    }
    const auto it = std::lower_bound(
        records.begin(), records.end(), t,
        [](const Rec& r, double value) { return r.t < value; });
    std::size_t best = it == records.end()
                           ? records.size() - 1
                           : static_cast<std::size_t>(it - records.begin());
    if (best > 0 &&
        std::abs(records[best - 1].t - t) < std::abs(records[best].t - t)) {
        --best;
    }
    if (std::abs(records[best].t - t) > tol) {
        return std::nullopt;
    }
    return best;
}

}  // namespace detail

/// Reads a UTIAS-format dataset directory: Barcodes.dat plus
/// RobotN_{Odometry,Measurement,Groundtruth}.dat for N = 1..n.
/// Measurements of static landmarks are dropped; barcode ids are
/// resolved to 0-based robot indices.
inline std::vector<RobotLog> parse_utias(const std::string& dir_path) {
    namespace fs = std::filesystem;
    const fs::path dir(dir_path);
    if (!fs::is_directory(dir)) {
        throw DataError("parse_utias: not a directory: " + dir_path);
    }

    int n_robots = 0;
    while (fs::exists(dir / ("Robot" + std::to_string(n_robots + 1) +
                             "_Odometry.dat"))) {
        ++n_robots;
    }
    if (n_robots == 0) {
        throw DataError("parse_utias: no Robot*_Odometry.dat files in " +
                        dir_path);
    }

    // Barcodes.dat: subject# barcode#. Subjects 1..n_robots are robots,
    // higher subjects are static landmarks.
    std::map<int, int> barcode_to_subject;
    for (const auto& row : detail::parse_columns(dir / "Barcodes.dat", 2)) {
        barcode_to_subject[static_cast<int>(row[1])] =
            static_cast<int>(row[0]);
    }

    std::vector<RobotLog> logs(static_cast<std::size_t>(n_robots));
    for (int robot = 0; robot < n_robots; ++robot) {
        const std::string stem = "Robot" + std::to_string(robot + 1);
        RobotLog& log = logs[static_cast<std::size_t>(robot)];

        for (const auto& row :
             detail::parse_columns(dir / (stem + "_Odometry.dat"), 3)) {
            log.odometry.push_back({row[0], row[1], row[2]});
        }
        for (const auto& row :
             detail::parse_columns(dir / (stem + "_Groundtruth.dat"), 4)) {
            log.groundtruth.push_back(
                {row[0], row[1], row[2], wrap_angle(row[3])});
        }
        for (const auto& row :
             detail::parse_columns(dir / (stem + "_Measurement.dat"), 4)) {
            const int barcode = static_cast<int>(row[1]);
            const auto it = barcode_to_subject.find(barcode);
            if (it == barcode_to_subject.end()) {
                throw DataError(stem + "_Measurement.dat: unmappable barcode " +
                                std::to_string(barcode));
            }
            const int subject = it->second;
            if (subject < 1 || subject > n_robots) {
                continue;  // static landmark
            }
            if (subject == robot + 1) {
                throw DataError(stem + "_Measurement.dat: self-measurement");
            }
            log.measurements.push_back({row[0], subject - 1, row[2], row[3]});
        }

        std::vector<double> times;
        for (const auto& r : log.odometry) times.push_back(r.t);
        detail::check_time_order(times, stem + " odometry", true);
        times.clear();
        for (const auto& r : log.groundtruth) times.push_back(r.t);
        detail::check_time_order(times, stem + " groundtruth", true);
        times.clear();
        for (const auto& r : log.measurements) times.push_back(r.t);
        // Concurrent measurements of distinct subjects share a timestamp.
        detail::check_time_order(times, stem + " measurements", false);
    }
    return logs;
}

struct SyntheticParams {
    int n_robots = 5;
    double duration = 40.0;      // s
    double dt = 0.1;             // s
    double sensing_range = 10.0;  // m
    double arena_size = 10.0;    // m, robots start in [0, arena]^2
    OdometryNoiseModel odom_noise{2.253, 0.587};
    double sigma_range = 0.147;   // m
    double sigma_bearing = 0.1;   // rad
    int measurement_stride = 1;   // sense every k-th step
};

/// Smooth random unicycle trajectories with noisy odometry readouts and
/// model-consistent inter-robot measurements. Deterministic per seed.
inline std::vector<RobotLog> synthesize_scenario(const SyntheticParams& params,
                                                 std::uint64_t seed) {
    if (params.n_robots < 2) {
        throw ConfigError("synthesize_scenario: need at least 2 robots");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    struct TrajectoryParams {
        double v_base, v_amp, v_freq, v_phase;
        double w_amp, w_freq, w_phase;
    };
    const int n = params.n_robots;
    std::vector<AgentState> pose(static_cast<std::size_t>(n));
    std::vector<TrajectoryParams> traj(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        pose[i] = {params.arena_size * unit(rng), params.arena_size * unit(rng),
                   wrap_angle(2.0 * M_PI * unit(rng))};
        // Heterogeneous team: sigma_v scales with |v|, so the slow
        // low-index robots drift little and act as soft anchors.
        const double speed_rank =
            n > 1 ? static_cast<double>(i) / (n - 1) : 1.0;
        traj[i] = {0.03 + 0.45 * speed_rank * speed_rank + 0.05 * unit(rng),
                   0.1 * unit(rng),
                   0.05 + 0.15 * unit(rng), 2.0 * M_PI * unit(rng),
                   0.3 + 0.5 * unit(rng), 0.05 + 0.15 * unit(rng),
                   2.0 * M_PI * unit(rng)};
    }

    std::vector<RobotLog> logs(static_cast<std::size_t>(n));
    const int n_steps = static_cast<int>(params.duration / params.dt);
    for (int step = 0; step < n_steps; ++step) {
        const double t = (step + 1) * params.dt;
        for (int i = 0; i < n; ++i) {
            const auto& tp = traj[i];
            const double v_true =
                tp.v_base + tp.v_amp * std::sin(2.0 * M_PI * tp.v_freq * t +
                                                tp.v_phase);
            const double w_true =
                tp.w_amp * std::sin(2.0 * M_PI * tp.w_freq * t + tp.w_phase);

            const double sv =
                params.odom_noise.sigma_v_scale * std::abs(v_true);
            const double v_m = v_true + sv * gauss(rng);
            const double w_m =
                w_true + params.odom_noise.sigma_omega * gauss(rng);
            logs[i].odometry.push_back({t, v_m, w_m});

            pose[i].x += params.dt * v_true * std::cos(pose[i].phi);
            pose[i].y += params.dt * v_true * std::sin(pose[i].phi);
            pose[i].phi = wrap_angle(pose[i].phi + params.dt * w_true);
            logs[i].groundtruth.push_back({t, pose[i].x, pose[i].y,
                                           pose[i].phi});
        }
        if ((step + 1) % std::max(params.measurement_stride, 1) != 0) {
            continue;
        }
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (j == i) {
                    continue;
                }
                const double dx = pose[i].x - pose[j].x;
                const double dy = pose[i].y - pose[j].y;
                const double rho = std::sqrt(dx * dx + dy * dy);
                if (rho > params.sensing_range || rho <= kColocationEps) {
                    continue;
                }
                const double range =
                    rho + params.sigma_range * gauss(rng);
                const double bearing = wrap_angle(
                    pose[j].phi - pose[i].phi +
                    params.sigma_bearing * gauss(rng));
                logs[i].measurements.push_back(
                    {t, j, std::max(range, 0.0), bearing});
            }
        }
    }
    return logs;
}

/// Parameters for perturbing ground truth into initial beliefs.
struct ErrorInjectionModel {
    double position_std = 0.1;   // m
    double heading_std = 0.05;   // rad
    double cov_scale_lo = 0.5;
    double cov_scale_hi = 2.0;
    // Per-robot initial position-uncertainty ramp: robot i starts with
    // position variance scaled by 1 + (span - 1) * i / (n - 1), so span
    // 1 keeps the team homogeneous while larger values mix
    // well-localized and lost agents.
    double uncertainty_span = 1.0;
    // Peak strength of the cross-correlations injected into sampled
    // covariances; 0 keeps them diagonal.
    double cov_correlation = 0.8;
    Eigen::Vector3d nominal_cov_diag{0.01, 0.01, 0.0025};
};

struct SampleGenConfig {
    ErrorInjectionModel errors;
    OdometryNoiseModel odom_noise{2.253, 0.587};
    Eigen::Matrix2d measurement_cov =
        (Eigen::Matrix2d() << 0.147 * 0.147, 0.0, 0.0, 0.1 * 0.1).finished();
    double dt = 0.1;  // propagation step and time-alignment window (dt/2)
};

struct SampleGenReport {
    std::vector<TrainingSample> samples;
    std::size_t skipped_numerical = 0;
    std::size_t skipped_unaligned = 0;
};

/// Draws (odometry, relative-measurement) pairs from the logs and turns
/// each into one single-step propagate + DMV update training sample:
/// X from the propagated belief and the landmark trace, Y the trace of
/// the updated covariance. Deterministic per seed.
inline SampleGenReport generate_training_samples(
    const std::vector<RobotLog>& logs, std::size_t count,
    const SampleGenConfig& config, std::uint64_t seed) {
    SampleGenReport report;
    if (count == 0) {
        return report;
    }
    std::vector<std::pair<std::size_t, std::size_t>> pool;  // (robot, meas idx)
    for (std::size_t i = 0; i < logs.size(); ++i) {
        for (std::size_t k = 0; k < logs[i].measurements.size(); ++k) {
            pool.emplace_back(i, k);
        }
    }
    if (pool.empty()) {
        throw DataError("generate_training_samples: no inter-robot measurements");
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    // Log-uniform covariance scale: a multiplicative factor sampled
    // uniformly would starve the small-scale end of a wide range, and
    // ranking fidelity there is what the scheduler relies on.
    std::uniform_real_distribution<double> log_scale(
        std::log(config.errors.cov_scale_lo),
        std::log(config.errors.cov_scale_hi));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double tol = config.dt / 2.0;

    const auto seed_belief = [&](const GroundTruthRecord& gt) {
        Belief bel;
        bel.estimate = {gt.x + config.errors.position_std * gauss(rng),
                        gt.y + config.errors.position_std * gauss(rng),
                        wrap_angle(gt.phi +
                                   config.errors.heading_std * gauss(rng))};
        // Correlated PD covariance around the scaled nominal diagonal;
        // beliefs produced by the filter carry cross-correlations, so
        // diagonal-only training data would leave the off-diagonal
        // features unexercised.  (1-b)I + b*vv' keeps the matrix PD with
        // correlation strength b.
        const double s = std::exp(log_scale(rng));
        Eigen::Vector3d sd = (s * config.errors.nominal_cov_diag).cwiseSqrt();
        Eigen::Vector3d v{gauss(rng), gauss(rng), gauss(rng)};
        v.normalize();
        const double b = 0.5 * config.errors.cov_correlation *
                         (1.0 + std::tanh(gauss(rng)));
        const Eigen::Matrix3d mix =
            (1.0 - b) * Eigen::Matrix3d::Identity() + b * v * v.transpose();
        bel.cov = sd.asDiagonal() * mix * sd.asDiagonal();
        return bel;
    };

    const std::size_t max_attempts = 200 * count;
    for (std::size_t attempt = 0;
         report.samples.size() < count && attempt < max_attempts; ++attempt) {
        const auto [i, k] = pool[pick(rng)];
        const MeasurementRecord& meas = logs[i].measurements[k];
        const int j = meas.subject;

        const auto odo_idx =
            detail::nearest_in_time(logs[i].odometry, meas.t, tol);
        const auto gt_i_idx =
            detail::nearest_in_time(logs[i].groundtruth, meas.t, tol);
        const auto gt_j_idx = detail::nearest_in_time(
            logs[static_cast<std::size_t>(j)].groundtruth, meas.t, tol);
        if (!odo_idx || !gt_i_idx || !gt_j_idx) {
            ++report.skipped_unaligned;
            continue;
        }

        try {
            Belief bel_i = seed_belief(logs[i].groundtruth[*gt_i_idx]);
            const Belief bel_j = seed_belief(
                logs[static_cast<std::size_t>(j)].groundtruth[*gt_j_idx]);
            const OdometryRecord& odo = logs[i].odometry[*odo_idx];
            bel_i = propagate_belief(bel_i, {odo.v, odo.omega, config.dt},
                                     config.odom_noise);

            RelativeMeasurement z;
            z.range = meas.range;
            z.rel_heading = meas.bearing;
            z.noise_cov = config.measurement_cov;

            TrainingSample sample;
            sample.raw = generate_input(bel_i, config.measurement_cov,
                                        bel_j.cov.trace());
            const Belief updated = dmv_update(bel_i, bel_j, z);
            sample.y = updated.cov.trace();
            if (sample.y <= 0.0 || !std::isfinite(sample.y)) {
                ++report.skipped_numerical;
                continue;
            }
            report.samples.push_back(std::move(sample));
        } catch (const std::runtime_error&) {
            ++report.skipped_numerical;
        }
    }
    if (report.samples.size() < count) {
        throw DataError("generate_training_samples: could not generate " +
                        std::to_string(count) + " samples (" +
                        std::to_string(report.samples.size()) + " usable)");
    }
    return report;
}

struct DatasetSplit {
    std::vector<TrainingSample> train;
    std::vector<TrainingSample> dev;
    std::vector<TrainingSample> test;
};

/// Seeded shuffle followed by a contiguous split.
inline DatasetSplit split_dataset(const std::vector<TrainingSample>& samples,
                                  std::size_t n_train, std::size_t n_dev,
                                  std::size_t n_test, std::uint64_t seed) {
    if (n_train + n_dev + n_test > samples.size()) {
        throw DataError("split_dataset: insufficient samples");
    }
    std::vector<std::size_t> order(samples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);

    DatasetSplit split;
    std::size_t pos = 0;
    for (std::size_t k = 0; k < n_train; ++k) split.train.push_back(samples[order[pos++]]);
    for (std::size_t k = 0; k < n_dev; ++k) split.dev.push_back(samples[order[pos++]]);
    for (std::size_t k = 0; k < n_test; ++k) split.test.push_back(samples[order[pos++]]);
    return split;
}

inline const char* kSampleTableHeader =
    "x y phi p00 p01 p02 p10 p11 p12 p20 p21 p22 r00 r01 r11 trace_pj "
    "trace_post";

/// Writes samples as a 17-column delimited text table with a one-line
/// header; column order matches the feature layout of generate_input.
inline void save_samples(const std::vector<TrainingSample>& samples,
                         const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw DataError("save_samples: cannot open " + path);
    }
    out << kSampleTableHeader << "\n";
    out.precision(17);
    for (const auto& s : samples) {
        for (int k = 0; k < kFeatureCount; ++k) {
            out << s.raw(k) << ' ';
        }
        out << s.y << "\n";
    }
}

inline std::vector<TrainingSample> load_samples(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("load_samples: cannot open " + path);
    }
    std::string header;
    std::getline(in, header);
    std::vector<TrainingSample> samples;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        std::istringstream fields(line);
        TrainingSample s;
        s.raw.resize(kFeatureCount);
        for (int k = 0; k < kFeatureCount; ++k) {
            if (!(fields >> s.raw(k))) {
                throw DataError(path + ":" + std::to_string(line_no) +
                                ": malformed sample row");
            }
        }
        if (!(fields >> s.y)) {
            throw DataError(path + ":" + std::to_string(line_no) +
                            ": missing label column");
        }
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace dmvcl
