#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmvcl/dataset.hpp"
#include "dmvcl/dmv.hpp"
#include "dmvcl/errors.hpp"
#include "dmvcl/mlp.hpp"
#include "dmvcl/motion.hpp"
#include "dmvcl/scheduling.hpp"

namespace dmvcl {

enum class Policy { Full, Dnn, Greedy, Random };

inline std::string policy_name(Policy policy) {
    switch (policy) {
        case Policy::Full: return "full";
        case Policy::Dnn: return "dnn";
        case Policy::Greedy: return "greedy";
        case Policy::Random: return "random";
    }
    return "?";
}

inline Policy policy_from_string(const std::string& name) {
    if (name == "full") return Policy::Full;
    if (name == "dnn") return Policy::Dnn;
    if (name == "greedy") return Policy::Greedy;
    if (name == "random") return Policy::Random;
    throw ConfigError("unknown scheduler policy: " + name);
}

struct ExperimentConfig {
    // dataset
    std::string utias_dir;  // empty -> synthetic scenario
    SyntheticParams synthetic;
    // estimator noise
    OdometryNoiseModel odom_noise{2.253, 0.587};
    double sigma_range = 0.147;    // m
    double sigma_bearing = 0.1;    // rad
    // scheduler
    Policy policy = Policy::Full;
    int q = 2;
    bool select_max = false;  // Algorithm-1-literal argmax variant
    // model
    std::string model_path;
    // run
    std::uint64_t seed = 0;
    double dt = 0.1;
    int candidate_cap = 4;
    ErrorInjectionModel init_errors;
    std::size_t failure_budget = 100;
    std::string out_dir = ".";

    Eigen::Matrix2d measurement_cov() const {
        Eigen::Matrix2d r = Eigen::Matrix2d::Zero();
        r(0, 0) = sigma_range * sigma_range;
        r(1, 1) = sigma_bearing * sigma_bearing;
        return r;
    }
};

struct RunReport {
    std::vector<double> times;
    // position_error[step][robot]; NaN where ground truth was missing
    std::vector<std::vector<double>> position_error;
    std::vector<double> rmse_series;
    double average_rmse = 0.0;
    CommsLedger total_ledger;
    // (predicted trace, actual trace) per surrogate-scheduled update
    std::vector<std::pair<double, double>> scatter_prediction;
    // (log(trace P_i- / trace P_j-), trace P_i+) per applied update
    std::vector<std::pair<double, double>> scatter_traceratio;
    std::size_t numerical_failures = 0;
};

/// Per-timestep RMSE of the 2-D position error over robots, plus the
/// time average.
inline std::pair<std::vector<double>, double> compute_rmse(
    const std::vector<std::vector<Eigen::Vector2d>>& estimates,
    const std::vector<std::vector<Eigen::Vector2d>>& groundtruth) {
    if (estimates.size() != groundtruth.size()) {
        throw ConfigError("compute_rmse: series length mismatch");
    }
    std::vector<double> series;
    series.reserve(estimates.size());
    double total = 0.0;
    for (std::size_t step = 0; step < estimates.size(); ++step) {
        if (estimates[step].size() != groundtruth[step].size()) {
            throw ConfigError("compute_rmse: robot count mismatch at step " +
                              std::to_string(step));
        }
        double sum_sq = 0.0;
        for (std::size_t robot = 0; robot < estimates[step].size(); ++robot) {
            sum_sq += (estimates[step][robot] - groundtruth[step][robot])
                          .squaredNorm();
        }
        const double rmse = estimates[step].empty()
                                ? 0.0
                                : std::sqrt(sum_sq / estimates[step].size());
        series.push_back(rmse);
        total += rmse;
    }
    const double average =
        series.empty() ? 0.0 : total / static_cast<double>(series.size());
    return {series, average};
}

namespace detail {

struct StepCandidate {
    int subject;
    double range;
    double bearing;
};

/// Measurements of robot i near grid time t, deduplicated per subject
/// and capped at the nearest candidate_cap by measured range.
inline std::vector<StepCandidate> candidates_at(const RobotLog& log, double t,
                                                double tol, int cap) {
    std::map<int, StepCandidate> by_subject;
    for (const auto& meas : log.measurements) {
        if (std::abs(meas.t - t) <= tol &&
            !by_subject.count(meas.subject)) {
            by_subject[meas.subject] = {meas.subject, meas.range,
                                        meas.bearing};
        }
    }
    std::vector<StepCandidate> out;
    for (const auto& [subject, cand] : by_subject) {
        out.push_back(cand);
    }
    std::sort(out.begin(), out.end(),
              [](const StepCandidate& a, const StepCandidate& b) {
                  return a.range != b.range ? a.range < b.range
                                            : a.subject < b.subject;
              });
    if (cap > 0 && static_cast<int>(out.size()) > cap) {
        out.resize(static_cast<std::size_t>(cap));
    }
    return out;
}

}  // namespace detail

/// Called once per (agent, timestep) with the propagated ego belief,
/// the measurement noise, and every candidate before the scheduling
/// policy runs.  Used to harvest training samples from live runs.
using DecisionObserver = std::function<void(
    const Belief&, const Eigen::Matrix2d&,
    const std::vector<GreedyCandidate>&)>;

/// Replays logs through propagate + schedule + update for every agent.
/// Peer beliefs are snapshotted right after propagation, so agents
/// within a timestep never see each other's same-step updates.
inline RunReport run_simulation(const ExperimentConfig& config,
                                const std::vector<RobotLog>& logs,
                                const MlpModel* model = nullptr,
                                const DecisionObserver& observer = {}) {
    if (config.q < 1) {
        throw ConfigError("run_simulation: q must be >= 1");
    }
    if (config.policy == Policy::Dnn && model == nullptr) {
        throw ConfigError("run_simulation: dnn policy needs a model");
    }
    const std::size_t n = logs.size();
    if (n < 2) {
        throw DataError("run_simulation: need at least 2 robot logs");
    }
    const Eigen::Matrix2d r = config.measurement_cov();
    const double tol = config.dt / 2.0;

    double t_begin = std::numeric_limits<double>::infinity();
    double t_end = 0.0;
    for (const auto& log : logs) {
        if (log.odometry.empty() || log.groundtruth.empty()) {
            throw DataError("run_simulation: robot log missing streams");
        }
        t_begin = std::min(t_begin, log.odometry.front().t);
        t_end = std::max(t_end, log.odometry.back().t);
    }
    const int n_steps =
        static_cast<int>(std::floor((t_end - t_begin) / config.dt)) + 1;

    std::mt19937_64 rng(config.seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::vector<Belief> beliefs(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto gt0 =
            detail::nearest_in_time(logs[i].groundtruth, t_begin,
                                    10.0 * config.dt);
        const GroundTruthRecord base =
            gt0 ? logs[i].groundtruth[*gt0] : logs[i].groundtruth.front();
        const double rank =
            n > 1 ? static_cast<double>(i) / (n - 1) : 0.0;
        const double pos_scale =
            1.0 + (config.init_errors.uncertainty_span - 1.0) * rank;
        const double pos_std =
            config.init_errors.position_std * std::sqrt(pos_scale);
        beliefs[i].estimate = {
            base.x + pos_std * gauss(rng),
            base.y + pos_std * gauss(rng),
            wrap_angle(base.phi +
                       config.init_errors.heading_std * gauss(rng))};
        Eigen::Vector3d diag = config.init_errors.nominal_cov_diag;
        diag(0) *= pos_scale;
        diag(1) *= pos_scale;
        beliefs[i].cov = diag.asDiagonal();
    }

    RunReport report;
    std::vector<std::vector<Eigen::Vector2d>> est_series, gt_series;

    for (int step = 0; step < n_steps; ++step) {
        const double t = t_begin + step * config.dt;

        // Beliefs start at t_begin; the odometry record at time t covers
        // the motion from the previous grid time into t.
        for (std::size_t i = 0; step > 0 && i < n; ++i) {
            const auto odo_idx =
                detail::nearest_in_time(logs[i].odometry, t, tol);
            if (!odo_idx) {
                continue;
            }
            const OdometryRecord& odo = logs[i].odometry[*odo_idx];
            try {
                beliefs[i] = propagate_belief(
                    beliefs[i], {odo.v, odo.omega, config.dt},
                    config.odom_noise);
            } catch (const NumericalError&) {
                ++report.numerical_failures;
            }
        }

        const std::vector<Belief> snapshot = beliefs;

        for (std::size_t i = 0; i < n; ++i) {
            const auto cands = detail::candidates_at(logs[i], t, tol,
                                                     config.candidate_cap);
            if (cands.empty()) {
                continue;
            }
            const auto measurement_of =
                [&](int subject) -> RelativeMeasurement {
                for (const auto& c : cands) {
                    if (c.subject == subject) {
                        return {c.range, c.bearing, r};
                    }
                }
                throw DataError("run_simulation: no measurement for subject " +
                                std::to_string(subject));
            };
            const double trace_before = beliefs[i].cov.trace();

            if (observer) {
                std::vector<GreedyCandidate> observed;
                for (const auto& c : cands) {
                    observed.push_back({c.subject, snapshot[c.subject],
                                        measurement_of(c.subject)});
                }
                observer(beliefs[i], r, observed);
            }

            try {
                switch (config.policy) {
                    case Policy::Full: {
                        std::vector<std::pair<Belief, RelativeMeasurement>>
                            landmarks;
                        for (const auto& c : cands) {
                            landmarks.emplace_back(snapshot[c.subject],
                                                   measurement_of(c.subject));
                            report.scatter_traceratio.emplace_back(
                                std::log(trace_before /
                                         snapshot[c.subject].cov.trace()),
                                0.0);  // filled below
                        }
                        beliefs[i] = sequential_update(beliefs[i], landmarks);
                        for (std::size_t k = report.scatter_traceratio.size() -
                                             landmarks.size();
                             k < report.scatter_traceratio.size(); ++k) {
                            report.scatter_traceratio[k].second =
                                beliefs[i].cov.trace();
                        }
                        report.total_ledger.beliefs_sent += cands.size();
                        break;
                    }
                    case Policy::Greedy: {
                        std::vector<GreedyCandidate> greedy;
                        for (const auto& c : cands) {
                            greedy.push_back({c.subject, snapshot[c.subject],
                                              measurement_of(c.subject)});
                        }
                        const ScheduleResult sched =
                            schedule_greedy_exact(beliefs[i], greedy,
                                                  config.q);
                        beliefs[i] = sched.updated;
                        report.total_ledger.scalars_sent +=
                            sched.ledger.scalars_sent;
                        report.total_ledger.beliefs_sent +=
                            sched.ledger.beliefs_sent;
                        break;
                    }
                    case Policy::Random: {
                        std::vector<int> ids;
                        for (const auto& c : cands) {
                            ids.push_back(c.subject);
                        }
                        const auto chosen =
                            schedule_random(ids, config.q, rng());
                        std::vector<std::pair<Belief, RelativeMeasurement>>
                            landmarks;
                        for (int subject : chosen) {
                            landmarks.emplace_back(snapshot[subject],
                                                   measurement_of(subject));
                        }
                        beliefs[i] = sequential_update(beliefs[i], landmarks);
                        report.total_ledger.beliefs_sent += chosen.size();
                        break;
                    }
                    case Policy::Dnn: {
                        CandidateSet set;
                        set.budget = config.q;
                        for (const auto& c : cands) {
                            set.candidates.push_back(
                                {c.subject,
                                 snapshot[c.subject].cov.trace()});
                        }
                        const ScheduleResult sched = schedule_dnn(
                            beliefs[i], r, set, *model,
                            [&](int subject) { return snapshot[subject]; },
                            measurement_of, config.select_max);
                        beliefs[i] = sched.updated;
                        for (std::size_t k = 0; k < sched.selected.size();
                             ++k) {
                            report.scatter_prediction.emplace_back(
                                sched.predicted[k], sched.trace_after[k]);
                            report.scatter_traceratio.emplace_back(
                                std::log(sched.trace_before[k] /
                                         snapshot[sched.selected[k]]
                                             .cov.trace()),
                                sched.trace_after[k]);
                        }
                        report.total_ledger.scalars_sent +=
                            sched.ledger.scalars_sent;
                        report.total_ledger.beliefs_sent +=
                            sched.ledger.beliefs_sent;
                        break;
                    }
                }
            } catch (const NumericalError&) {
                // No-update fallback: keep the propagated belief.
                ++report.numerical_failures;
            }
        }

        std::vector<Eigen::Vector2d> est_step, gt_step;
        std::vector<double> err_step;
        for (std::size_t i = 0; i < n; ++i) {
            const auto gt_idx =
                detail::nearest_in_time(logs[i].groundtruth, t, tol);
            if (!gt_idx) {
                err_step.push_back(std::numeric_limits<double>::quiet_NaN());
                continue;
            }
            const GroundTruthRecord& gt = logs[i].groundtruth[*gt_idx];
            est_step.emplace_back(beliefs[i].estimate.x,
                                  beliefs[i].estimate.y);
            gt_step.emplace_back(gt.x, gt.y);
            err_step.push_back(
                (est_step.back() - gt_step.back()).norm());
        }
        report.times.push_back(t);
        report.position_error.push_back(std::move(err_step));
        est_series.push_back(std::move(est_step));
        gt_series.push_back(std::move(gt_step));
    }

    const auto [series, average] = compute_rmse(est_series, gt_series);
    report.rmse_series = series;
    report.average_rmse = average;
    return report;
}

inline RunReport run_simulation(const ExperimentConfig& config) {
    std::vector<RobotLog> logs =
        config.utias_dir.empty()
            ? synthesize_scenario(config.synthetic, config.seed)
            : parse_utias(config.utias_dir);
    std::optional<MlpModel> model;
    if (config.policy == Policy::Dnn) {
        if (config.model_path.empty()) {
            throw ConfigError("dnn policy requires a model file path");
        }
        model = load_model(config.model_path);
    }
    return run_simulation(config, logs, model ? &*model : nullptr);
}

/// Harvests surrogate training samples from live random-policy runs,
/// one synthesized scenario per run.  Every candidate seen by every
/// agent yields one (features, updated trace) pair, so the sample
/// distribution matches what the scheduler queries at decision time.
inline std::vector<TrainingSample> collect_run_samples(
    const ExperimentConfig& base, int n_runs, std::uint64_t scenario_seed) {
    std::vector<TrainingSample> samples;
    for (int k = 0; k < n_runs; ++k) {
        ExperimentConfig config = base;
        config.policy = Policy::Random;
        config.seed = scenario_seed + static_cast<std::uint64_t>(k);
        const auto logs =
            synthesize_scenario(config.synthetic, config.seed);
        run_simulation(
            config, logs, nullptr,
            [&](const Belief& ego, const Eigen::Matrix2d& r,
                const std::vector<GreedyCandidate>& cands) {
                for (const auto& cand : cands) {
                    try {
                        const double y =
                            dmv_update(ego, cand.belief, cand.z).cov.trace();
                        if (y > 0.0 && std::isfinite(y)) {
                            samples.push_back(
                                {generate_input(ego, r,
                                                cand.belief.cov.trace()),
                                 y});
                        }
                    } catch (const NumericalError&) {
                    }
                }
            });
    }
    return samples;
}

/// Writes the four report CSVs into out_dir: rmse.csv,
/// scatter_prediction.csv, scatter_traceratio.csv, comms.csv.
inline void emit_report(const RunReport& report, const std::string& policy,
                        const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto open = [&](const std::string& name) {
        std::ofstream out(fs::path(out_dir) / name);
        if (!out) {
            throw DataError("emit_report: cannot open " + name + " in " +
                            out_dir);
        }
        out.precision(17);
        return out;
    };

    auto rmse = open("rmse.csv");
    rmse << "t,rmse\n";
    for (std::size_t k = 0; k < report.rmse_series.size(); ++k) {
        rmse << report.times[k] << ',' << report.rmse_series[k] << "\n";
    }

    auto pred = open("scatter_prediction.csv");
    pred << "predicted,actual\n";
    for (const auto& [yhat, y] : report.scatter_prediction) {
        pred << yhat << ',' << y << "\n";
    }

    auto ratio = open("scatter_traceratio.csv");
    ratio << "log_trace_ratio,trace_post\n";
    for (const auto& [lr, tp] : report.scatter_traceratio) {
        ratio << lr << ',' << tp << "\n";
    }

    auto comms = open("comms.csv");
    comms << "policy,scalars,beliefs\n";
    comms << policy << ',' << report.total_ledger.scalars_sent << ','
          << report.total_ledger.beliefs_sent << "\n";
}

struct CompareResult {
    // average RMSE per seed, keyed by policy name
    std::map<std::string, std::vector<double>> rmse_by_policy;
    std::vector<std::uint64_t> seeds;
};

/// Runs every policy on the same synthesized scenario for each seed.
inline CompareResult compare_policies(const ExperimentConfig& base,
                                      const std::vector<Policy>& policies,
                                      int n_seeds,
                                      const MlpModel* model = nullptr) {
    if (n_seeds < 1) {
        throw ConfigError("compare_policies: need at least one seed");
    }
    std::optional<MlpModel> loaded;
    const bool needs_model =
        std::find(policies.begin(), policies.end(), Policy::Dnn) !=
        policies.end();
    if (needs_model && model == nullptr) {
        if (base.model_path.empty()) {
            throw ConfigError("compare_policies: dnn policy requires a model");
        }
        loaded = load_model(base.model_path);
        model = &*loaded;
    }

    CompareResult result;
    for (int k = 0; k < n_seeds; ++k) {
        const std::uint64_t seed = base.seed + static_cast<std::uint64_t>(k);
        result.seeds.push_back(seed);
        const auto logs = synthesize_scenario(base.synthetic, seed);
        for (Policy policy : policies) {
            ExperimentConfig config = base;
            config.policy = policy;
            config.seed = seed;
            const RunReport report = run_simulation(
                config, logs, policy == Policy::Dnn ? model : nullptr);
            result.rmse_by_policy[policy_name(policy)].push_back(
                report.average_rmse);
        }
    }
    return result;
}

/// Reads an experiment configuration from a JSON document with sections
/// {dataset, noise, scheduler, model, run}; every field is optional and
/// falls back to the built-in default.
inline ExperimentConfig config_from_json(const nlohmann::json& doc) {
    ExperimentConfig config;
    try {
        if (doc.contains("dataset")) {
            const auto& d = doc["dataset"];
            config.utias_dir = d.value("utias_dir", config.utias_dir);
            config.synthetic.n_robots =
                d.value("n_robots", config.synthetic.n_robots);
            config.synthetic.duration =
                d.value("duration", config.synthetic.duration);
            config.synthetic.dt = d.value("dt", config.synthetic.dt);
            config.synthetic.sensing_range =
                d.value("sensing_range", config.synthetic.sensing_range);
            config.synthetic.arena_size =
                d.value("arena_size", config.synthetic.arena_size);
            config.synthetic.measurement_stride = d.value(
                "measurement_stride", config.synthetic.measurement_stride);
        }
        if (doc.contains("noise")) {
            const auto& d = doc["noise"];
            config.odom_noise.sigma_v_scale =
                d.value("sigma_v_scale", config.odom_noise.sigma_v_scale);
            config.odom_noise.sigma_omega =
                d.value("sigma_omega", config.odom_noise.sigma_omega);
            config.sigma_range = d.value("sigma_range", config.sigma_range);
            config.sigma_bearing =
                d.value("sigma_bearing", config.sigma_bearing);
            config.synthetic.odom_noise = config.odom_noise;
            config.synthetic.sigma_range = config.sigma_range;
            config.synthetic.sigma_bearing = config.sigma_bearing;
        }
        if (doc.contains("scheduler")) {
            const auto& d = doc["scheduler"];
            config.policy =
                policy_from_string(d.value("policy", std::string("full")));
            config.q = d.value("q", config.q);
            config.select_max = d.value("select_max", config.select_max);
            config.candidate_cap =
                d.value("candidate_cap", config.candidate_cap);
        }
        if (doc.contains("model")) {
            config.model_path =
                doc["model"].value("path", config.model_path);
        }
        if (doc.contains("run")) {
            const auto& d = doc["run"];
            config.seed = d.value("seed", config.seed);
            config.dt = d.value("dt", config.dt);
            config.out_dir = d.value("out_dir", config.out_dir);
            config.failure_budget =
                d.value("failure_budget", config.failure_budget);
            config.init_errors.position_std = d.value(
                "init_position_std", config.init_errors.position_std);
            config.init_errors.heading_std =
                d.value("init_heading_std", config.init_errors.heading_std);
            config.init_errors.uncertainty_span =
                d.value("init_uncertainty_span",
                        config.init_errors.uncertainty_span);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (config.q < 1 || config.sigma_range <= 0.0 ||
        config.sigma_bearing <= 0.0) {
        throw ConfigError("config: q must be >= 1 and noise sigmas > 0");
    }
    return config;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file: " + path);
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse failure: ") + e.what());
    }
    return config_from_json(doc);
}

}  // namespace dmvcl
