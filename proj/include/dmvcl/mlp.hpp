#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dmvcl/errors.hpp"
#include "dmvcl/motion.hpp"

namespace dmvcl {

inline constexpr int kFeatureCount = 16;

/// Flattens (estimate, P row-major, R upper triangle, trace(P^j)) into
/// the fixed 16-value input layout.
inline Eigen::VectorXd generate_input(const Belief& bel,
                                      const Eigen::Matrix2d& r,
                                      double trace_pj) {
    Eigen::VectorXd x(kFeatureCount);
    x(0) = bel.estimate.x;
    x(1) = bel.estimate.y;
    x(2) = bel.estimate.phi;
    for (int row = 0; row < 3; ++row) {
        for (int col = 0; col < 3; ++col) {
            x(3 + 3 * row + col) = bel.cov(row, col);
        }
    }
    x(12) = r(0, 0);
    x(13) = r(0, 1);
    x(14) = r(1, 1);
    x(15) = trace_pj;
    if (!x.allFinite()) {
        throw NumericalError("generate_input: non-finite feature");
    }
    return x;
}

struct TrainingSample {
    Eigen::VectorXd raw;  // 16 pre-normalization values
    double y = 0.0;       // trace of the updated covariance
};

/// Per-feature z-score statistics. Zero-variance features get std 1
/// and are listed in zero_variance_features.
struct NormStats {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
    std::vector<int> zero_variance_features;
};

inline NormStats fit_norm_stats(const std::vector<TrainingSample>& samples) {
    if (samples.size() < 2) {
        throw DataError("fit_norm_stats: need at least 2 samples");
    }
    const int n = static_cast<int>(samples.front().raw.size());
    NormStats stats;
    stats.mean = Eigen::VectorXd::Zero(n);
    stats.std = Eigen::VectorXd::Zero(n);
    for (const auto& s : samples) {
        stats.mean += s.raw;
    }
    stats.mean /= static_cast<double>(samples.size());
    for (const auto& s : samples) {
        stats.std += (s.raw - stats.mean).cwiseAbs2();
    }
    // Population convention: divide by m.
    stats.std = (stats.std / static_cast<double>(samples.size())).cwiseSqrt();
    for (int k = 0; k < n; ++k) {
        if (stats.std(k) <= 0.0) {
            stats.std(k) = 1.0;
            stats.zero_variance_features.push_back(k);
        }
    }
    return stats;
}

inline Eigen::VectorXd normalize(const Eigen::VectorXd& raw,
                                 const NormStats& stats) {
    return (raw - stats.mean).cwiseQuotient(stats.std);
}

inline Eigen::VectorXd denormalize(const Eigen::VectorXd& x,
                                   const NormStats& stats) {
    return x.cwiseProduct(stats.std) + stats.mean;
}

struct TrainConfig {
    double learning_rate = 0.01;
    int batch_size = 256;
    int epochs = 200;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
};

/// Fully-connected regression network: ReLU hidden layers, linear
/// output, input normalization statistics embedded.
struct MlpModel {
    std::vector<int> layer_sizes;
    std::vector<Eigen::MatrixXd> weights;  // weights[l]: sizes[l+1] x sizes[l]
    std::vector<Eigen::VectorXd> biases;
    std::vector<std::string> activations;  // per weight layer
    NormStats norm;
    TrainConfig trained_with;
};

inline std::vector<int> default_layer_sizes() {
    return {kFeatureCount, 14, 14, 14, 14, 1};
}

/// He-normal initialization, seeded.
inline MlpModel make_mlp(const std::vector<int>& layer_sizes,
                         std::uint64_t seed) {
    if (layer_sizes.size() < 2) {
        throw ConfigError("make_mlp: need at least input and output layer");
    }
    MlpModel model;
    model.layer_sizes = layer_sizes;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
        const int fan_in = layer_sizes[l];
        const int fan_out = layer_sizes[l + 1];
        const double scale = std::sqrt(2.0 / fan_in);
        Eigen::MatrixXd w(fan_out, fan_in);
        for (int row = 0; row < fan_out; ++row) {
            for (int col = 0; col < fan_in; ++col) {
                w(row, col) = scale * gauss(rng);
            }
        }
        model.weights.push_back(std::move(w));
        model.biases.push_back(Eigen::VectorXd::Zero(fan_out));
        model.activations.push_back(l + 2 < layer_sizes.size() ? "relu"
                                                               : "linear");
    }
    return model;
}

namespace detail {

/// Forward pass over a batch (samples as columns). Keeps
/// post-activation values per layer for backprop.
inline std::vector<Eigen::MatrixXd> forward_batch(const MlpModel& model,
                                                  const Eigen::MatrixXd& x) {
    if (x.rows() != model.layer_sizes.front()) {
        throw ConfigError("mlp forward: input dimension mismatch");
    }
    std::vector<Eigen::MatrixXd> acts;
    acts.reserve(model.weights.size() + 1);
    acts.push_back(x);
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        Eigen::MatrixXd z =
            (model.weights[l] * acts.back()).colwise() + model.biases[l];
        if (model.activations[l] == "relu") {
            z = z.cwiseMax(0.0);
        }
        acts.push_back(std::move(z));
    }
    return acts;
}

}  // namespace detail

inline double mlp_forward(const MlpModel& model, const Eigen::VectorXd& x) {
    return detail::forward_batch(model, x).back()(0, 0);
}

/// Normalizes a raw feature vector with the model's embedded stats and
/// runs the forward pass.
inline double predict_trace(const MlpModel& model, const Belief& bel,
                            const Eigen::Matrix2d& r, double trace_pj) {
    return mlp_forward(model, normalize(generate_input(bel, r, trace_pj),
                                        model.norm));
}

struct MlpGradients {
    std::vector<Eigen::MatrixXd> dw;
    std::vector<Eigen::VectorXd> db;
};

/// Backprop gradients of the batch-mean squared error
/// J = (1/m) sum (yhat - y)^2. Inputs are normalized features as
/// columns of x, targets in y.
inline MlpGradients mlp_gradients(const MlpModel& model,
                                  const Eigen::MatrixXd& x,
                                  const Eigen::VectorXd& y) {
    const auto m = x.cols();
    if (m == 0) {
        throw DataError("mlp_gradients: empty batch");
    }
    if (y.size() != m) {
        throw ConfigError("mlp_gradients: batch size mismatch");
    }
    const auto acts = detail::forward_batch(model, x);
    const std::size_t n_layers = model.weights.size();

    MlpGradients grads;
    grads.dw.resize(n_layers);
    grads.db.resize(n_layers);

    // dJ/dyhat = 2 (yhat - y) / m
    Eigen::MatrixXd delta =
        2.0 / static_cast<double>(m) *
        (acts.back().row(0) - y.transpose());
    for (std::size_t l = n_layers; l-- > 0;) {
        if (model.activations[l] == "relu") {
            delta = delta.cwiseProduct(
                (acts[l + 1].array() > 0.0).cast<double>().matrix());
        }
        grads.dw[l] = delta * acts[l].transpose();
        grads.db[l] = delta.rowwise().sum();
        if (l > 0) {
            delta = model.weights[l].transpose() * delta;
        }
    }
    return grads;
}

/// Batch-mean MSE over normalized inputs.
inline double mlp_mse(const MlpModel& model, const Eigen::MatrixXd& x,
                      const Eigen::VectorXd& y) {
    const auto acts = detail::forward_batch(model, x);
    return (acts.back().row(0).transpose() - y).squaredNorm() /
           static_cast<double>(x.cols());
}

struct TrainResult {
    MlpModel model;
    std::vector<double> train_loss;  // per epoch
    std::vector<double> dev_loss;    // per epoch; empty if no dev set
};

/// Mini-batch Adam on MSE. Normalization stats are fit on the training
/// set and embedded in the returned model. Deterministic per seed.
inline TrainResult train(const std::vector<TrainingSample>& train_samples,
                         const std::vector<TrainingSample>& dev_samples,
                         const TrainConfig& config,
                         const std::vector<int>& layer_sizes =
                             default_layer_sizes()) {
    if (train_samples.size() < 2) {
        throw DataError("train: need at least 2 training samples");
    }
    if (config.batch_size < 1 || config.epochs < 1 ||
        config.learning_rate <= 0.0) {
        throw ConfigError("train: invalid config");
    }

    TrainResult result;
    result.model = make_mlp(layer_sizes, config.seed);
    result.model.norm = fit_norm_stats(train_samples);
    result.model.trained_with = config;
    MlpModel& model = result.model;

    const auto pack = [&](const std::vector<TrainingSample>& samples,
                          Eigen::MatrixXd& x, Eigen::VectorXd& y) {
        x.resize(kFeatureCount, static_cast<Eigen::Index>(samples.size()));
        y.resize(static_cast<Eigen::Index>(samples.size()));
        for (std::size_t k = 0; k < samples.size(); ++k) {
            x.col(static_cast<Eigen::Index>(k)) =
                normalize(samples[k].raw, model.norm);
            y(static_cast<Eigen::Index>(k)) = samples[k].y;
        }
    };
    Eigen::MatrixXd x_train, x_dev;
    Eigen::VectorXd y_train, y_dev;
    pack(train_samples, x_train, y_train);
    if (!dev_samples.empty()) {
        pack(dev_samples, x_dev, y_dev);
    }

    // Adam state
    std::vector<Eigen::MatrixXd> mw, vw;
    std::vector<Eigen::VectorXd> mb, vb;
    for (const auto& w : model.weights) {
        mw.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
        vw.push_back(Eigen::MatrixXd::Zero(w.rows(), w.cols()));
    }
    for (const auto& b : model.biases) {
        mb.push_back(Eigen::VectorXd::Zero(b.size()));
        vb.push_back(Eigen::VectorXd::Zero(b.size()));
    }

    std::mt19937_64 rng(config.seed + 1);
    std::vector<Eigen::Index> order(train_samples.size());
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    long step = 0;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t count = std::min(
                static_cast<std::size_t>(config.batch_size),
                order.size() - start);
            Eigen::MatrixXd xb(kFeatureCount,
                               static_cast<Eigen::Index>(count));
            Eigen::VectorXd yb(static_cast<Eigen::Index>(count));
            for (std::size_t k = 0; k < count; ++k) {
                xb.col(static_cast<Eigen::Index>(k)) =
                    x_train.col(order[start + k]);
                yb(static_cast<Eigen::Index>(k)) = y_train(order[start + k]);
            }
            const MlpGradients grads = mlp_gradients(model, xb, yb);
            ++step;
            const double bc1 = 1.0 - std::pow(config.beta1, step);
            const double bc2 = 1.0 - std::pow(config.beta2, step);
            for (std::size_t l = 0; l < model.weights.size(); ++l) {
                mw[l] = config.beta1 * mw[l] + (1.0 - config.beta1) * grads.dw[l];
                vw[l] = config.beta2 * vw[l] +
                        (1.0 - config.beta2) * grads.dw[l].cwiseAbs2();
                model.weights[l].array() -=
                    config.learning_rate * (mw[l] / bc1).array() /
                    ((vw[l] / bc2).array().sqrt() + config.epsilon);
                mb[l] = config.beta1 * mb[l] + (1.0 - config.beta1) * grads.db[l];
                vb[l] = config.beta2 * vb[l] +
                        (1.0 - config.beta2) * grads.db[l].cwiseAbs2();
                model.biases[l].array() -=
                    config.learning_rate * (mb[l] / bc1).array() /
                    ((vb[l] / bc2).array().sqrt() + config.epsilon);
            }
        }
        const double train_mse = mlp_mse(model, x_train, y_train);
        if (!std::isfinite(train_mse)) {
            throw NumericalError("train: loss diverged at epoch " +
                                 std::to_string(epoch));
        }
        result.train_loss.push_back(train_mse);
        if (!dev_samples.empty()) {
            result.dev_loss.push_back(mlp_mse(model, x_dev, y_dev));
        }
    }
    return result;
}

inline constexpr int kModelSchemaVersion = 1;

inline nlohmann::json model_to_json(const MlpModel& model) {
    nlohmann::json doc;
    doc["schema_version"] = kModelSchemaVersion;
    doc["layer_sizes"] = model.layer_sizes;
    doc["activations"] = model.activations;
    auto matrices = nlohmann::json::array();
    for (const auto& w : model.weights) {
        std::vector<double> flat;  // row-major
        flat.reserve(static_cast<std::size_t>(w.size()));
        for (Eigen::Index row = 0; row < w.rows(); ++row) {
            for (Eigen::Index col = 0; col < w.cols(); ++col) {
                flat.push_back(w(row, col));
            }
        }
        matrices.push_back(flat);
    }
    doc["weights"] = matrices;
    auto bias_arrays = nlohmann::json::array();
    for (const auto& b : model.biases) {
        bias_arrays.push_back(
            std::vector<double>(b.data(), b.data() + b.size()));
    }
    doc["biases"] = bias_arrays;
    doc["norm_mean"] = std::vector<double>(
        model.norm.mean.data(), model.norm.mean.data() + model.norm.mean.size());
    doc["norm_std"] = std::vector<double>(
        model.norm.std.data(), model.norm.std.data() + model.norm.std.size());
    doc["adam_config"] = {{"learning_rate", model.trained_with.learning_rate},
                          {"batch_size", model.trained_with.batch_size},
                          {"epochs", model.trained_with.epochs},
                          {"beta1", model.trained_with.beta1},
                          {"beta2", model.trained_with.beta2},
                          {"epsilon", model.trained_with.epsilon}};
    doc["seed"] = model.trained_with.seed;
    return doc;
}

inline MlpModel model_from_json(const nlohmann::json& doc) {
    try {
        if (doc.at("schema_version").get<int>() != kModelSchemaVersion) {
            throw ModelIoError("unsupported model schema version");
        }
        MlpModel model;
        model.layer_sizes = doc.at("layer_sizes").get<std::vector<int>>();
        model.activations =
            doc.at("activations").get<std::vector<std::string>>();
        const auto& weight_arrays = doc.at("weights");
        const auto& bias_arrays = doc.at("biases");
        if (model.layer_sizes.size() < 2 ||
            weight_arrays.size() != model.layer_sizes.size() - 1 ||
            bias_arrays.size() != weight_arrays.size() ||
            model.activations.size() != weight_arrays.size()) {
            throw ModelIoError("model file: layer structure inconsistent");
        }
        for (std::size_t l = 0; l < weight_arrays.size(); ++l) {
            const int rows = model.layer_sizes[l + 1];
            const int cols = model.layer_sizes[l];
            const auto flat = weight_arrays[l].get<std::vector<double>>();
            if (static_cast<int>(flat.size()) != rows * cols) {
                throw ModelIoError("model file: weight matrix size mismatch");
            }
            Eigen::MatrixXd w(rows, cols);
            for (int row = 0; row < rows; ++row) {
                for (int col = 0; col < cols; ++col) {
                    w(row, col) = flat[static_cast<std::size_t>(row) * cols + col];
                }
            }
            model.weights.push_back(std::move(w));
            const auto bias = bias_arrays[l].get<std::vector<double>>();
            if (static_cast<int>(bias.size()) != rows) {
                throw ModelIoError("model file: bias vector size mismatch");
            }
            model.biases.push_back(Eigen::Map<const Eigen::VectorXd>(
                bias.data(), static_cast<Eigen::Index>(bias.size())));
        }
        const auto mean = doc.at("norm_mean").get<std::vector<double>>();
        const auto std_dev = doc.at("norm_std").get<std::vector<double>>();
        if (static_cast<int>(mean.size()) != model.layer_sizes.front() ||
            std_dev.size() != mean.size()) {
            throw ModelIoError("model file: normalization size mismatch");
        }
        model.norm.mean = Eigen::Map<const Eigen::VectorXd>(
            mean.data(), static_cast<Eigen::Index>(mean.size()));
        model.norm.std = Eigen::Map<const Eigen::VectorXd>(
            std_dev.data(), static_cast<Eigen::Index>(std_dev.size()));
        const auto& adam = doc.at("adam_config");
        model.trained_with.learning_rate = adam.at("learning_rate");
        model.trained_with.batch_size = adam.at("batch_size");
        model.trained_with.epochs = adam.at("epochs");
        model.trained_with.beta1 = adam.at("beta1");
        model.trained_with.beta2 = adam.at("beta2");
        model.trained_with.epsilon = adam.at("epsilon");
        model.trained_with.seed = doc.at("seed");
        return model;
    } catch (const nlohmann::json::exception& e) {
        throw ModelIoError(std::string("model file: ") + e.what());
    }
}

inline void save_model(const MlpModel& model, const std::string& path) {
    std::ofstream out(path);
    if (!out) {
        throw ModelIoError("save_model: cannot open " + path);
    }
    out << model_to_json(model).dump(2) << "\n";
}

inline MlpModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ModelIoError("load_model: cannot open " + path);
    }
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ModelIoError(std::string("load_model: parse failure: ") +
                           e.what());
    }
    return model_from_json(doc);
}

}  // namespace dmvcl
