// train.hpp -- MSE loss, Adam optimizer and the training loop

#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "flowcast/dataset.hpp"
#include "flowcast/nn.hpp"

namespace flowcast {

struct TrainConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 256;
    int epochs = 1000;
    double val_fraction = 0.2;
    std::uint64_t master_seed = 0;
    bool best_val = false; // keep the best-validation snapshot instead of final weights

    void validate() const;
};

struct TrainHistory {
    std::vector<double> train_loss; // per epoch, normalized-label MSE
    std::vector<double> val_loss;
};

/// Mean of squared differences over all elements. Throws EmptyInput.
double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

/// d(mse)/d(pred) = 2 (pred - truth) / N.
Eigen::MatrixXd mse_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth);

/// Per-tensor Adam state.
struct AdamState {
    std::vector<Eigen::MatrixXd> m, v; // parallel to Model::params() order
    long step = 0;

    void init(Model& model);
};

/// One bias-corrected Adam update on a single tensor (t >= 1).
void adam_update_tensor(Eigen::MatrixXd& value, const Eigen::MatrixXd& grad,
                        Eigen::MatrixXd& m, Eigen::MatrixXd& v, long t,
                        const TrainConfig& config);

/// Applies Adam to every trainable tensor of the model using the accumulated
/// gradients; frozen tensors are untouched.
void adam_step(Model& model, AdamState& state, const TrainConfig& config);

struct TrainResult {
    TrainHistory history;
    NormStats stats;
};

/// Full loop: seeded split -> label normalization on training rows only ->
/// per-epoch {reshuffle, batches, forward(training), MSE, backward, Adam} and
/// an inference-mode validation pass per epoch. The master seed fans out to
/// independent substreams for split / shuffle / dropout. Returns final-epoch
/// weights unless config.best_val is set.
///
/// fixed_stats overrides the normalization statistics instead of computing
/// them from the training rows (used by fine-tuning, where the stats come
/// from all k transfer points).
TrainResult train(Model& model, const Dataset& data, const TrainConfig& config,
                  const NormStats* fixed_stats = nullptr);

/// Inference-mode predictions (normalized scale), batched; thread-safe
/// sharding when threads > 1.
Eigen::VectorXd predict_normalized(const Model& model, const Dataset& data,
                                   int batch_size = 256, int threads = 1);

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path,
                       const std::string& provenance = "");

} // namespace flowcast
