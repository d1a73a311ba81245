// nn.hpp -- from-scratch neural core: LSTM, batch normalization, dense and
// dropout layers with forward passes, full backpropagation through time and
// per-layer trainable flags
//
// Layer stack (fixed): LSTM1 -> BN1 -> LSTM2 -> BN2 -> Dense1(ReLU) -> BN3
// -> Dense2(ReLU) -> BN4 -> Dropout -> Dense3(Linear).
//
// Sequence activations use a time-major row layout: row t*B + b holds sample
// b at time frame t (see encode_batch). LSTM1 maps (B*L) x n -> (B*L) x h;
// LSTM2 consumes the sequence and emits only the final hidden state, B x h.
// All arithmetic is double precision.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowcast/errors.hpp"
#include "flowcast/rng.hpp"

namespace flowcast {

struct ModelConfig {
    int input_dim = 6;        // n
    int seq_len = 24;         // L
    int lstm_units = 128;     // h
    int dense_units = 30;
    int out_dim = 1;          // dim
    double dropout_rate = 0.4;
    double bn_epsilon = 1e-3;
    double bn_momentum = 0.99;
    bool orthogonal_recurrent = false;

    void validate() const;
};

/// Piecewise-linear sigmoid: clamp(0.2 x + 0.5, 0, 1).
inline double hard_sigmoid(double x) {
    double y = 0.2 * x + 0.5;
    return y < 0.0 ? 0.0 : (y > 1.0 ? 1.0 : y);
}

// ---------------------------------------------------------------------------
// Layers. Parameter tensors are Eigen matrices (vectors as 1 x k rows).
// backward() accumulates into the layer's grad buffers (zeroed by
// Model::zero_grads) and returns the gradient w.r.t. the layer input.
// Frozen layers (trainable = false) skip their parameter gradients and only
// pass gradients through.
// ---------------------------------------------------------------------------

struct LstmLayer {
    std::string name;
    int in_dim = 0;
    int units = 0;
    bool return_sequence = false;
    bool trainable = true;

    // Gate order along columns: [input | forget | candidate | output].
    Eigen::MatrixXd kernel;     // in_dim x 4u
    Eigen::MatrixXd recurrent;  // u x 4u
    Eigen::MatrixXd bias;       // 1 x 4u

    Eigen::MatrixXd d_kernel, d_recurrent, d_bias;

    struct Cache {
        int batch = 0;
        int seq_len = 0;
        Eigen::MatrixXd input;     // (B*L) x in
        Eigen::MatrixXd gates;     // (B*L) x 4u, post-activation
        Eigen::MatrixXd cells;     // (B*L) x u
        Eigen::MatrixXd cell_tanh; // (B*L) x u
        Eigen::MatrixXd hidden;    // (B*L) x u
    };

    /// x: (B*L) x in_dim time-major; h0 = c0 = 0. Gates use hard_sigmoid,
    /// candidate and cell output use tanh. Returns the full hidden sequence
    /// ((B*L) x u) or only the final state (B x u).
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, int seq_len, Cache* cache) const;

    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dy);

    std::int64_t param_count() const; // 4 (u (in + u) + u)
};

struct BnLayer {
    std::string name;
    int features = 0;
    double epsilon = 1e-3;
    double momentum = 0.99;
    bool trainable = true;

    Eigen::MatrixXd gamma, beta;             // 1 x f, trainable
    Eigen::MatrixXd moving_mean, moving_var; // 1 x f, non-trainable state

    Eigen::MatrixXd d_gamma, d_beta;

    struct Cache {
        bool batch_stats = false;
        Eigen::MatrixXd xhat;    // rows x f
        Eigen::MatrixXd inv_std; // 1 x f
    };

    /// Rows are samples (batch, or batch*time for sequence inputs): statistics
    /// pool over all rows per feature. Training mode with a trainable layer
    /// normalizes by batch statistics and updates the moving stats; a frozen
    /// layer or inference mode normalizes by the moving statistics.
    /// Throws DegenerateBatch when batch statistics are requested on < 2 rows.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, bool training, Cache* cache);

    /// Inference-mode forward on a const layer.
    Eigen::MatrixXd infer(const Eigen::MatrixXd& x) const;

    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dy);

    std::int64_t param_count() const { return 4 * features; }
};

struct DenseLayer {
    enum class Act { linear, relu };

    std::string name;
    int in_dim = 0;
    int out_dim = 0;
    Act act = Act::linear;
    bool trainable = true;

    Eigen::MatrixXd kernel; // in x out
    Eigen::MatrixXd bias;   // 1 x out

    Eigen::MatrixXd d_kernel, d_bias;

    struct Cache {
        Eigen::MatrixXd input;  // B x in
        Eigen::MatrixXd output; // B x out (activation mask recovered from it)
    };

    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Cache* cache) const;
    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dy);

    std::int64_t param_count() const { return std::int64_t(in_dim) * out_dim + out_dim; }
};

struct DropoutLayer {
    double rate = 0.4;

    struct Cache {
        bool active = false;
        Eigen::MatrixXd mask; // 0 or 1/(1-rate)
    };

    /// Training: each unit zeroed with probability rate, kept units scaled by
    /// 1/(1-rate). Mask entries are drawn row-major from rng. Inference or
    /// rate = 0: identity.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, bool training, Rng* rng,
                            Cache* cache) const;
    Eigen::MatrixXd backward(const Cache& cache, const Eigen::MatrixXd& dy) const;
};

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

/// Uniform view over a parameter tensor for the optimizer, serializer and
/// counters. `state` marks BN moving statistics (never trainable).
struct ParamRef {
    std::string layer;
    std::string tensor;
    Eigen::MatrixXd* value;
    Eigen::MatrixXd* grad; // nullptr for state tensors
    bool state;
    bool trainable; // layer flag && !state
};

struct Model {
    ModelConfig config;

    LstmLayer lstm1, lstm2;
    BnLayer bn1, bn2, bn3, bn4;
    DenseLayer dense1, dense2, dense3;
    DropoutLayer dropout;

    struct Caches {
        int batch = 0;
        LstmLayer::Cache lstm1, lstm2;
        BnLayer::Cache bn1, bn2, bn3, bn4;
        DenseLayer::Cache dense1, dense2, dense3;
        DropoutLayer::Cache dropout;
    };

    /// x: (B*L) x n time-major encoded flows. Returns B x out_dim.
    /// Training mode requires caches (for backward) and a dropout rng.
    /// Throws ShapeMismatch on wrong input dimensions.
    Eigen::MatrixXd forward(const Eigen::MatrixXd& x, bool training, Rng* dropout_rng,
                            Caches* caches);

    /// Pure inference on an immutable model; thread-safe.
    Eigen::MatrixXd infer(const Eigen::MatrixXd& x) const;

    /// dLoss_dy: B x out_dim. Fills grad buffers for all trainable tensors,
    /// backpropagating through both LSTM layers and BN batch statistics.
    void backward(const Caches& caches, const Eigen::MatrixXd& dLoss_dy);

    void zero_grads();

    /// All parameter tensors in fixed layer order (Table rows 1..10).
    std::vector<ParamRef> params();

    std::int64_t param_count(bool trainable_only = false);
};

/// Builds the layer stack with seeded initialization: Glorot-uniform kernels
/// (optionally orthogonal recurrent kernels), zero biases except the LSTM
/// forget-gate bias = 1, BN gamma = 1 / beta = 0, moving stats (0, 1).
Model build_model(const ModelConfig& config, std::uint64_t seed);

} // namespace flowcast
