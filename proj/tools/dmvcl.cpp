// Command-line front end: dataset ingestion, training-sample
// generation, surrogate training, simulation, and policy comparison.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dmvcl/dataset.hpp"
#include "dmvcl/experiment.hpp"
#include "dmvcl/mlp.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

dmvcl::ExperimentConfig load_config_or_default(const std::string& path) {
    if (path.empty()) {
        return {};
    }
    return dmvcl::load_experiment_config(path);
}

std::vector<dmvcl::RobotLog> load_logs(const dmvcl::ExperimentConfig& config) {
    if (!config.utias_dir.empty()) {
        return dmvcl::parse_utias(config.utias_dir);
    }
    return dmvcl::synthesize_scenario(config.synthetic, config.seed);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const auto n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        ma += a[k];
        mb += b[k];
    }
    ma /= n;
    mb /= n;
    double cov = 0.0, va = 0.0, vb = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        cov += (a[k] - ma) * (b[k] - mb);
        va += (a[k] - ma) * (a[k] - ma);
        vb += (b[k] - mb) * (b[k] - mb);
    }
    return cov / std::sqrt(va * vb);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Loosely-coupled cooperative localization with "
                 "resource-constrained measurement scheduling"};
    app.require_subcommand(1);

    std::string config_path, out_path, out_dir, model_path, samples_path;
    std::string policy_override, policies_csv = "full,dnn,greedy,random";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int count = 10000, q_override = 0, n_seeds = 20;
    dmvcl::TrainConfig train_config;
    std::size_t n_dev = 0;

    auto* ingest = app.add_subcommand(
        "ingest", "Parse and validate a dataset, print a summary");
    ingest->add_option("--config", config_path, "Experiment config (JSON)");

    auto* gen = app.add_subcommand(
        "gen-data", "Generate (X, Y) training samples from logs");
    int n_runs = 0;
    gen->add_option("--config", config_path, "Experiment config (JSON)");
    gen->add_option("--count", count, "Number of samples")->required();
    gen->add_option("--runs", n_runs,
                    "Harvest from this many random-policy simulation runs "
                    "instead of belief injection (--count becomes a cap)");
    auto* gen_seed = gen->add_option("--seed", seed, "RNG seed");
    gen->add_option("--out", out_path, "Output sample table")->required();

    auto* train_cmd = app.add_subcommand(
        "train", "Train the trace-prediction network on a sample table");
    train_cmd->add_option("--samples", samples_path, "Sample table")
        ->required();
    train_cmd->add_option("--out", out_path, "Output model file")->required();
    train_cmd->add_option("--lr", train_config.learning_rate, "Learning rate");
    train_cmd->add_option("--epochs", train_config.epochs, "Epochs");
    train_cmd->add_option("--batch-size", train_config.batch_size,
                          "Mini-batch size");
    train_cmd->add_option("--seed", train_config.seed, "RNG seed");
    train_cmd->add_option("--dev", n_dev,
                          "Dev split size (default: 10% of samples)");

    auto* sim = app.add_subcommand("simulate",
                                   "Run one scenario and emit report CSVs");
    sim->add_option("--config", config_path, "Experiment config (JSON)");
    sim->add_option("--policy", policy_override,
                    "Scheduler policy: full|dnn|greedy|random");
    sim->add_option("--q", q_override, "Measurement budget per step");
    auto* sim_seed = sim->add_option("--seed", seed, "RNG seed");
    sim->add_option("--model", model_path, "Model file (dnn policy)");
    sim->add_option("--out-dir", out_dir, "Report output directory");

    auto* cmp = app.add_subcommand(
        "compare", "Monte Carlo comparison of scheduling policies");
    cmp->add_option("--config", config_path, "Experiment config (JSON)");
    cmp->add_option("--seed", seed, "Base RNG seed")->required();
    cmp->add_option("--seeds", n_seeds, "Number of Monte Carlo seeds");
    cmp->add_option("--policies", policies_csv, "Comma-separated policies");
    cmp->add_option("--model", model_path, "Model file (dnn policy)");
    cmp->add_option("--q", q_override, "Measurement budget per step");
    cmp->add_option("--out-dir", out_dir, "Report output directory");

    auto* scatter = app.add_subcommand(
        "predict-scatter",
        "Evaluate a model on a sample table, write (predicted, actual) pairs");
    scatter->add_option("--model", model_path, "Model file")->required();
    scatter->add_option("--samples", samples_path, "Sample table")->required();
    scatter->add_option("--out", out_path, "Output CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitConfig;
    }
    seed_set = sim_seed->count() > 0 || gen_seed->count() > 0;

    try {
        if (*ingest) {
            const auto config = load_config_or_default(config_path);
            const auto logs = load_logs(config);
            for (std::size_t i = 0; i < logs.size(); ++i) {
                std::cout << "robot " << i + 1 << ": "
                          << logs[i].odometry.size() << " odometry, "
                          << logs[i].measurements.size()
                          << " inter-robot measurements, "
                          << logs[i].groundtruth.size() << " ground truth\n";
            }
        } else if (*gen) {
            auto config = load_config_or_default(config_path);
            if (seed_set) {
                config.seed = seed;
            }
            if (n_runs > 0) {
                auto samples = dmvcl::collect_run_samples(config, n_runs,
                                                          config.seed);
                if (samples.size() > static_cast<std::size_t>(count)) {
                    samples.resize(static_cast<std::size_t>(count));
                }
                dmvcl::save_samples(samples, out_path);
                std::cout << "wrote " << samples.size() << " samples to "
                          << out_path << " from " << n_runs << " runs\n";
            } else {
                const auto logs = load_logs(config);
                dmvcl::SampleGenConfig gen_config;
                gen_config.odom_noise = config.odom_noise;
                gen_config.measurement_cov = config.measurement_cov();
                gen_config.dt = config.dt;
                const auto report = dmvcl::generate_training_samples(
                    logs, static_cast<std::size_t>(count), gen_config,
                    config.seed);
                dmvcl::save_samples(report.samples, out_path);
                std::cout << "wrote " << report.samples.size()
                          << " samples to " << out_path << " (skipped "
                          << report.skipped_numerical << " numerical, "
                          << report.skipped_unaligned << " unaligned)\n";
            }
        } else if (*train_cmd) {
            const auto samples = dmvcl::load_samples(samples_path);
            if (n_dev == 0) {
                n_dev = samples.size() / 10;
            }
            if (n_dev + 2 > samples.size()) {
                throw dmvcl::DataError("train: too few samples for dev split");
            }
            const auto split = dmvcl::split_dataset(
                samples, samples.size() - n_dev, n_dev, 0, train_config.seed);
            const auto result =
                dmvcl::train(split.train, split.dev, train_config);
            dmvcl::save_model(result.model, out_path);
            std::cout << "final train loss " << result.train_loss.back()
                      << ", dev loss " << result.dev_loss.back() << "; model "
                      << out_path << "\n";
        } else if (*sim) {
            auto config = load_config_or_default(config_path);
            if (!policy_override.empty()) {
                config.policy = dmvcl::policy_from_string(policy_override);
            }
            if (q_override > 0) {
                config.q = q_override;
            }
            if (seed_set) {
                config.seed = seed;
            }
            if (!model_path.empty()) {
                config.model_path = model_path;
            }
            if (!out_dir.empty()) {
                config.out_dir = out_dir;
            }
            const auto report = dmvcl::run_simulation(config);
            dmvcl::emit_report(report, dmvcl::policy_name(config.policy),
                               config.out_dir);
            std::cout << "average position RMSE "
                      << report.average_rmse << " m over "
                      << report.rmse_series.size() << " steps; "
                      << report.numerical_failures << " numerical failures\n";
            if (report.numerical_failures > config.failure_budget) {
                std::cerr << "numerical failure budget exceeded\n";
                return kExitNumerical;
            }
        } else if (*cmp) {
            auto config = load_config_or_default(config_path);
            config.seed = seed;
            if (q_override > 0) {
                config.q = q_override;
            }
            if (!model_path.empty()) {
                config.model_path = model_path;
            }
            if (!out_dir.empty()) {
                config.out_dir = out_dir;
            }
            std::vector<dmvcl::Policy> policies;
            std::stringstream names(policies_csv);
            std::string name;
            while (std::getline(names, name, ',')) {
                policies.push_back(dmvcl::policy_from_string(name));
            }
            const auto result =
                dmvcl::compare_policies(config, policies, n_seeds);

            std::filesystem::create_directories(config.out_dir);
            std::ofstream out(std::filesystem::path(config.out_dir) /
                              "compare.csv");
            out.precision(17);
            out << "policy,seed,avg_rmse\n";
            for (const auto& [policy, values] : result.rmse_by_policy) {
                double mean = 0.0;
                for (std::size_t k = 0; k < values.size(); ++k) {
                    out << policy << ',' << result.seeds[k] << ','
                        << values[k] << "\n";
                    mean += values[k];
                }
                mean /= static_cast<double>(values.size());
                std::cout << policy << ": mean average RMSE " << mean
                          << " m over " << values.size() << " seeds\n";
            }
        } else if (*scatter) {
            const auto model = dmvcl::load_model(model_path);
            const auto samples = dmvcl::load_samples(samples_path);
            std::ofstream out(out_path);
            if (!out) {
                throw dmvcl::DataError("cannot open " + out_path);
            }
            out.precision(17);
            out << "predicted,actual\n";
            std::vector<double> yhat, y;
            for (const auto& s : samples) {
                const double p = dmvcl::mlp_forward(
                    model, dmvcl::normalize(s.raw, model.norm));
                out << p << ',' << s.y << "\n";
                yhat.push_back(p);
                y.push_back(s.y);
            }
            if (samples.size() > 1) {
                std::cout << "pearson correlation " << pearson(yhat, y)
                          << " over " << samples.size() << " samples\n";
            }
        }
    } catch (const dmvcl::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const dmvcl::ModelIoError& e) {
        std::cerr << "model error: " << e.what() << "\n";
        return kExitData;
    } catch (const dmvcl::DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return kExitData;
    } catch (const dmvcl::NumericalError& e) {
        std::cerr << "numerical error: " << e.what() << "\n";
        return kExitNumerical;
    }
    return kExitOk;
}
