#include "flowcast/nn.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace flowcast {

namespace {

using Eigen::ArrayXXd;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::RowVectorXd;

// clamp(0.2x + 0.5, 0, 1), vectorized.
template <typename Derived>
auto hard_sigmoid_arr(const Eigen::ArrayBase<Derived>& x) {
    return (0.2 * x + 0.5).cwiseMax(0.0).cwiseMin(1.0);
}

// Derivative recovered from the activation value: 0.2 strictly inside (0,1),
// 0 where the clamp saturated.
ArrayXXd hard_sigmoid_deriv(const ArrayXXd& y) {
    return ((y > 0.0).cast<double>() * (y < 1.0).cast<double>()) * 0.2;
}

} // namespace

void ModelConfig::validate() const {
    if (input_dim < 1 || seq_len < 1 || lstm_units < 1 || dense_units < 1 || out_dim < 1)
        throw Error("ModelConfig: all dimensions must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0)
        throw Error("ModelConfig: dropout_rate must be in [0, 1)");
    if (bn_epsilon <= 0.0) throw Error("ModelConfig: bn_epsilon must be > 0");
    if (bn_momentum < 0.0 || bn_momentum >= 1.0)
        throw Error("ModelConfig: bn_momentum must be in [0, 1)");
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

Eigen::MatrixXd LstmLayer::forward(const Eigen::MatrixXd& x, int seq_len, Cache* cache) const {
    if (x.cols() != in_dim)
        throw ShapeMismatch(name + ": input has " + std::to_string(x.cols()) +
                            " features, expected " + std::to_string(in_dim));
    if (seq_len < 1 || x.rows() % seq_len != 0)
        throw ShapeMismatch(name + ": rows not a multiple of sequence length");
    const Index batch = x.rows() / seq_len;
    const Index u = units;

    // Input contribution of every time step in one product.
    MatrixXd zin = x * kernel;

    MatrixXd h = MatrixXd::Zero(batch, u);
    MatrixXd c = MatrixXd::Zero(batch, u);
    MatrixXd hidden_all(x.rows(), u);

    if (cache) {
        cache->batch = static_cast<int>(batch);
        cache->seq_len = seq_len;
        cache->input = x;
        cache->gates.resize(x.rows(), 4 * u);
        cache->cells.resize(x.rows(), u);
        cache->cell_tanh.resize(x.rows(), u);
    }

    for (int t = 0; t < seq_len; ++t) {
        const Index r0 = static_cast<Index>(t) * batch;
        MatrixXd z = zin.middleRows(r0, batch);
        z.noalias() += h * recurrent;
        z.rowwise() += bias.row(0);

        ArrayXXd gate_i = hard_sigmoid_arr(z.array().leftCols(u));
        ArrayXXd gate_f = hard_sigmoid_arr(z.array().middleCols(u, u));
        ArrayXXd cand = z.array().middleCols(2 * u, u).tanh();
        ArrayXXd gate_o = hard_sigmoid_arr(z.array().rightCols(u));

        c.array() = gate_f * c.array() + gate_i * cand;
        ArrayXXd cell_tanh = c.array().tanh();
        h.array() = gate_o * cell_tanh;

        hidden_all.middleRows(r0, batch) = h;
        if (cache) {
            cache->gates.block(r0, 0, batch, u) = gate_i.matrix();
            cache->gates.block(r0, u, batch, u) = gate_f.matrix();
            cache->gates.block(r0, 2 * u, batch, u) = cand.matrix();
            cache->gates.block(r0, 3 * u, batch, u) = gate_o.matrix();
            cache->cells.middleRows(r0, batch) = c;
            cache->cell_tanh.middleRows(r0, batch) = cell_tanh.matrix();
        }
    }
    if (cache) cache->hidden = hidden_all;
    return return_sequence ? hidden_all : h;
}

Eigen::MatrixXd LstmLayer::backward(const Cache& cache, const Eigen::MatrixXd& dy) {
    const Index batch = cache.batch;
    const int seq_len = cache.seq_len;
    const Index u = units;

    MatrixXd dz_all(cache.input.rows(), 4 * u);
    MatrixXd dh = MatrixXd::Zero(batch, u);
    MatrixXd dc = MatrixXd::Zero(batch, u);

    for (int t = seq_len - 1; t >= 0; --t) {
        const Index r0 = static_cast<Index>(t) * batch;
        if (return_sequence)
            dh += dy.middleRows(r0, batch);
        else if (t == seq_len - 1)
            dh += dy;

        ArrayXXd gate_i = cache.gates.block(r0, 0, batch, u).array();
        ArrayXXd gate_f = cache.gates.block(r0, u, batch, u).array();
        ArrayXXd cand = cache.gates.block(r0, 2 * u, batch, u).array();
        ArrayXXd gate_o = cache.gates.block(r0, 3 * u, batch, u).array();
        ArrayXXd cell_tanh = cache.cell_tanh.middleRows(r0, batch).array();

        ArrayXXd d_o = dh.array() * cell_tanh;
        dc.array() += dh.array() * gate_o * (1.0 - cell_tanh.square());

        ArrayXXd d_i = dc.array() * cand;
        ArrayXXd d_g = dc.array() * gate_i;

        MatrixXd dz(batch, 4 * u);
        dz.leftCols(u) = (d_i * hard_sigmoid_deriv(gate_i)).matrix();
        if (t > 0) {
            ArrayXXd c_prev = cache.cells.middleRows(r0 - batch, batch).array();
            dz.middleCols(u, u) = (dc.array() * c_prev * hard_sigmoid_deriv(gate_f)).matrix();
        } else {
            dz.middleCols(u, u).setZero(); // c_{-1} = 0
        }
        dz.middleCols(2 * u, u) = (d_g * (1.0 - cand.square())).matrix();
        dz.rightCols(u) = (d_o * hard_sigmoid_deriv(gate_o)).matrix();

        dc.array() *= gate_f; // gradient into c_{t-1}
        dh.noalias() = dz * recurrent.transpose();
        if (trainable && t > 0)
            d_recurrent.noalias() +=
                cache.hidden.middleRows(r0 - batch, batch).transpose() * dz;
        dz_all.middleRows(r0, batch) = dz;
    }

    if (trainable) {
        d_kernel.noalias() += cache.input.transpose() * dz_all;
        d_bias.row(0) += dz_all.colwise().sum();
    }
    return dz_all * kernel.transpose();
}

std::int64_t LstmLayer::param_count() const {
    return 4LL * (std::int64_t(units) * (in_dim + units) + units);
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

Eigen::MatrixXd BnLayer::forward(const Eigen::MatrixXd& x, bool training, Cache* cache) {
    if (x.cols() != features)
        throw ShapeMismatch(name + ": input has " + std::to_string(x.cols()) +
                            " features, expected " + std::to_string(features));
    const bool batch_stats = training && trainable;
    if (!batch_stats) {
        // Inference, or a frozen layer during training: moving statistics,
        // no state update.
        MatrixXd y = infer(x);
        if (cache) {
            cache->batch_stats = false;
            cache->inv_std = (moving_var.array() + epsilon).sqrt().inverse().matrix();
            cache->xhat.resize(0, 0);
        }
        return y;
    }

    const Index n = x.rows();
    if (n < 2)
        throw DegenerateBatch(name + ": batch statistics need >= 2 samples, got " +
                              std::to_string(n));
    RowVectorXd mean = x.colwise().mean();
    MatrixXd centered = x.rowwise() - mean;
    RowVectorXd var =
        centered.array().square().colwise().sum().matrix() / static_cast<double>(n);
    RowVectorXd inv_std = (var.array() + epsilon).sqrt().inverse().matrix();

    MatrixXd xhat = (centered.array().rowwise() * inv_std.array()).matrix();
    moving_mean.row(0) = momentum * moving_mean.row(0) + (1.0 - momentum) * mean;
    moving_var.row(0) = momentum * moving_var.row(0) + (1.0 - momentum) * var;

    if (cache) {
        cache->batch_stats = true;
        cache->xhat = xhat;
        cache->inv_std = inv_std;
    }
    MatrixXd y = (xhat.array().rowwise() * gamma.row(0).array()).matrix();
    y.array().rowwise() += beta.row(0).array();
    return y;
}

Eigen::MatrixXd BnLayer::infer(const Eigen::MatrixXd& x) const {
    RowVectorXd inv_std = (moving_var.array() + epsilon).sqrt().inverse().matrix();
    MatrixXd xhat =
        ((x.rowwise() - moving_mean.row(0)).array().rowwise() * inv_std.array()).matrix();
    MatrixXd y = (xhat.array().rowwise() * gamma.row(0).array()).matrix();
    y.array().rowwise() += beta.row(0).array();
    return y;
}

Eigen::MatrixXd BnLayer::backward(const Cache& cache, const Eigen::MatrixXd& dy) {
    if (!cache.batch_stats) {
        // Moving statistics were constants in forward: plain per-feature scaling.
        if (trainable) {
            // Unreached in the stock stack (frozen implies non-trainable),
            // kept for completeness.
            d_beta.row(0) += dy.colwise().sum();
        }
        return (dy.array().rowwise() *
                (gamma.row(0).array() * cache.inv_std.row(0).array()).eval())
            .matrix();
    }

    const auto n = static_cast<double>(dy.rows());
    RowVectorXd sum_dy = dy.colwise().sum();
    RowVectorXd sum_dy_xhat = (dy.array() * cache.xhat.array()).colwise().sum().matrix();

    if (trainable) {
        d_gamma.row(0) += sum_dy_xhat;
        d_beta.row(0) += sum_dy;
    }

    // d/dx of ((x - mu) / sqrt(var + eps)) with batch mu, var:
    // dx = gamma * inv_std / n * (n dxhat - sum(dxhat) - xhat sum(dxhat*xhat))
    // where dxhat = dy (the gamma factor is pulled out front).
    ArrayXXd term = n * dy.array();
    term.rowwise() -= sum_dy.array();
    term -= cache.xhat.array().rowwise() * sum_dy_xhat.array();
    return (term.rowwise() * (gamma.row(0).array() * cache.inv_std.row(0).array() / n).eval())
        .matrix();
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

Eigen::MatrixXd DenseLayer::forward(const Eigen::MatrixXd& x, Cache* cache) const {
    if (x.cols() != in_dim)
        throw ShapeMismatch(name + ": input has " + std::to_string(x.cols()) +
                            " features, expected " + std::to_string(in_dim));
    MatrixXd y = x * kernel;
    y.rowwise() += bias.row(0);
    if (act == Act::relu) y = y.cwiseMax(0.0);
    if (cache) {
        cache->input = x;
        cache->output = y;
    }
    return y;
}

Eigen::MatrixXd DenseLayer::backward(const Cache& cache, const Eigen::MatrixXd& dy) {
    MatrixXd dpre;
    if (act == Act::relu)
        dpre = dy.array() * (cache.output.array() > 0.0).cast<double>();
    else
        dpre = dy;
    if (trainable) {
        d_kernel.noalias() += cache.input.transpose() * dpre;
        d_bias.row(0) += dpre.colwise().sum();
    }
    return dpre * kernel.transpose();
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

Eigen::MatrixXd DropoutLayer::forward(const Eigen::MatrixXd& x, bool training, Rng* rng,
                                      Cache* cache) const {
    if (!training || rate == 0.0) {
        if (cache) cache->active = false;
        return x;
    }
    if (rng == nullptr) throw Error("dropout in training mode needs an rng");
    const double keep_scale = 1.0 / (1.0 - rate);
    MatrixXd mask(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i)
        for (Index j = 0; j < x.cols(); ++j)
            mask(i, j) = rng->uniform01() < rate ? 0.0 : keep_scale;
    if (cache) {
        cache->active = true;
        cache->mask = mask;
    }
    return x.cwiseProduct(mask);
}

Eigen::MatrixXd DropoutLayer::backward(const Cache& cache, const Eigen::MatrixXd& dy) const {
    if (!cache.active) return dy;
    return dy.cwiseProduct(cache.mask);
}

// ---------------------------------------------------------------------------
// Model
// ---------------------------------------------------------------------------

Eigen::MatrixXd Model::forward(const Eigen::MatrixXd& x, bool training, Rng* dropout_rng,
                               Caches* caches) {
    if (x.cols() != config.input_dim || x.rows() % config.seq_len != 0 || x.rows() == 0)
        throw ShapeMismatch("model input must be (batch * seq_len) x input_dim");
    if (training && caches == nullptr)
        throw Error("training-mode forward requires caches");
    if (caches) caches->batch = static_cast<int>(x.rows()) / config.seq_len;

    MatrixXd a = lstm1.forward(x, config.seq_len, caches ? &caches->lstm1 : nullptr);
    a = bn1.forward(a, training, caches ? &caches->bn1 : nullptr);
    a = lstm2.forward(a, config.seq_len, caches ? &caches->lstm2 : nullptr);
    a = bn2.forward(a, training, caches ? &caches->bn2 : nullptr);
    a = dense1.forward(a, caches ? &caches->dense1 : nullptr);
    a = bn3.forward(a, training, caches ? &caches->bn3 : nullptr);
    a = dense2.forward(a, caches ? &caches->dense2 : nullptr);
    a = bn4.forward(a, training, caches ? &caches->bn4 : nullptr);
    a = dropout.forward(a, training, dropout_rng, caches ? &caches->dropout : nullptr);
    return dense3.forward(a, caches ? &caches->dense3 : nullptr);
}

Eigen::MatrixXd Model::infer(const Eigen::MatrixXd& x) const {
    if (x.cols() != config.input_dim || x.rows() % config.seq_len != 0 || x.rows() == 0)
        throw ShapeMismatch("model input must be (batch * seq_len) x input_dim");
    MatrixXd a = lstm1.forward(x, config.seq_len, nullptr);
    a = bn1.infer(a);
    a = lstm2.forward(a, config.seq_len, nullptr);
    a = bn2.infer(a);
    a = dense1.forward(a, nullptr);
    a = bn3.infer(a);
    a = dense2.forward(a, nullptr);
    a = bn4.infer(a);
    return dense3.forward(a, nullptr);
}

void Model::backward(const Caches& caches, const Eigen::MatrixXd& dLoss_dy) {
    MatrixXd g = dense3.backward(caches.dense3, dLoss_dy);
    g = dropout.backward(caches.dropout, g);
    g = bn4.backward(caches.bn4, g);
    g = dense2.backward(caches.dense2, g);
    g = bn3.backward(caches.bn3, g);
    g = dense1.backward(caches.dense1, g);
    g = bn2.backward(caches.bn2, g);
    g = lstm2.backward(caches.lstm2, g);
    g = bn1.backward(caches.bn1, g);
    lstm1.backward(caches.lstm1, g);
}

void Model::zero_grads() {
    for (ParamRef& p : params())
        if (p.grad) p.grad->setZero();
}

std::vector<ParamRef> Model::params() {
    std::vector<ParamRef> out;
    auto add = [&out](const std::string& layer, const std::string& tensor, Eigen::MatrixXd* v,
                      Eigen::MatrixXd* g, bool state, bool layer_trainable) {
        out.push_back(ParamRef{layer, tensor, v, g, state, layer_trainable && !state});
    };
    auto add_lstm = [&](LstmLayer& l) {
        add(l.name, "kernel", &l.kernel, &l.d_kernel, false, l.trainable);
        add(l.name, "recurrent", &l.recurrent, &l.d_recurrent, false, l.trainable);
        add(l.name, "bias", &l.bias, &l.d_bias, false, l.trainable);
    };
    auto add_bn = [&](BnLayer& l) {
        add(l.name, "gamma", &l.gamma, &l.d_gamma, false, l.trainable);
        add(l.name, "beta", &l.beta, &l.d_beta, false, l.trainable);
        add(l.name, "moving_mean", &l.moving_mean, nullptr, true, l.trainable);
        add(l.name, "moving_var", &l.moving_var, nullptr, true, l.trainable);
    };
    auto add_dense = [&](DenseLayer& l) {
        add(l.name, "kernel", &l.kernel, &l.d_kernel, false, l.trainable);
        add(l.name, "bias", &l.bias, &l.d_bias, false, l.trainable);
    };
    add_lstm(lstm1);
    add_bn(bn1);
    add_lstm(lstm2);
    add_bn(bn2);
    add_dense(dense1);
    add_bn(bn3);
    add_dense(dense2);
    add_bn(bn4);
    add_dense(dense3);
    return out;
}

std::int64_t Model::param_count(bool trainable_only) {
    std::int64_t total = 0;
    for (const ParamRef& p : params())
        if (!trainable_only || p.trainable) total += p.value->size();
    return total;
}

// ---------------------------------------------------------------------------
// Construction
// ---------------------------------------------------------------------------

namespace {

void glorot_uniform(MatrixXd& m, Rng& rng) {
    const double limit =
        std::sqrt(6.0 / (static_cast<double>(m.rows()) + static_cast<double>(m.cols())));
    for (Index i = 0; i < m.rows(); ++i)
        for (Index j = 0; j < m.cols(); ++j) m(i, j) = rng.uniform(-limit, limit);
}

// One orthogonal u x u block per gate (QR of a normal matrix, sign-fixed).
void orthogonal_blocks(MatrixXd& m, int u, Rng& rng) {
    for (int blk = 0; blk < 4; ++blk) {
        MatrixXd a(u, u);
        for (Index i = 0; i < u; ++i)
            for (Index j = 0; j < u; ++j) a(i, j) = rng.normal();
        Eigen::HouseholderQR<MatrixXd> qr(a);
        MatrixXd q = qr.householderQ() * MatrixXd::Identity(u, u);
        MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
        for (Index j = 0; j < u; ++j)
            if (r(j, j) < 0.0) q.col(j) = -q.col(j);
        m.middleCols(static_cast<Index>(blk) * u, u) = q;
    }
}

void init_lstm(LstmLayer& l, const std::string& name, int in_dim, int units,
               bool return_sequence, bool orthogonal, Rng& rng) {
    l.name = name;
    l.in_dim = in_dim;
    l.units = units;
    l.return_sequence = return_sequence;
    l.trainable = true;
    l.kernel.resize(in_dim, 4 * units);
    l.recurrent.resize(units, 4 * units);
    l.bias = MatrixXd::Zero(1, 4 * units);
    glorot_uniform(l.kernel, rng);
    if (orthogonal)
        orthogonal_blocks(l.recurrent, units, rng);
    else
        glorot_uniform(l.recurrent, rng);
    // forget-gate bias 1
    l.bias.block(0, units, 1, units).setOnes();
    l.d_kernel = MatrixXd::Zero(in_dim, 4 * units);
    l.d_recurrent = MatrixXd::Zero(units, 4 * units);
    l.d_bias = MatrixXd::Zero(1, 4 * units);
}

void init_bn(BnLayer& l, const std::string& name, int features, double eps, double momentum) {
    l.name = name;
    l.features = features;
    l.epsilon = eps;
    l.momentum = momentum;
    l.trainable = true;
    l.gamma = MatrixXd::Ones(1, features);
    l.beta = MatrixXd::Zero(1, features);
    l.moving_mean = MatrixXd::Zero(1, features);
    l.moving_var = MatrixXd::Ones(1, features);
    l.d_gamma = MatrixXd::Zero(1, features);
    l.d_beta = MatrixXd::Zero(1, features);
}

void init_dense(DenseLayer& l, const std::string& name, int in_dim, int out_dim,
                DenseLayer::Act act, Rng& rng) {
    l.name = name;
    l.in_dim = in_dim;
    l.out_dim = out_dim;
    l.act = act;
    l.trainable = true;
    l.kernel.resize(in_dim, out_dim);
    glorot_uniform(l.kernel, rng);
    l.bias = MatrixXd::Zero(1, out_dim);
    l.d_kernel = MatrixXd::Zero(in_dim, out_dim);
    l.d_bias = MatrixXd::Zero(1, out_dim);
}

} // namespace

Model build_model(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Model m;
    m.config = config;
    Rng rng(substream_seed(seed, "init"));

    const int h = config.lstm_units;
    const int du = config.dense_units;
    init_lstm(m.lstm1, "lstm1", config.input_dim, h, true, config.orthogonal_recurrent, rng);
    init_bn(m.bn1, "bn1", h, config.bn_epsilon, config.bn_momentum);
    init_lstm(m.lstm2, "lstm2", h, h, false, config.orthogonal_recurrent, rng);
    init_bn(m.bn2, "bn2", h, config.bn_epsilon, config.bn_momentum);
    init_dense(m.dense1, "dense1", h, du, DenseLayer::Act::relu, rng);
    init_bn(m.bn3, "bn3", du, config.bn_epsilon, config.bn_momentum);
    init_dense(m.dense2, "dense2", du, du, DenseLayer::Act::relu, rng);
    init_bn(m.bn4, "bn4", du, config.bn_epsilon, config.bn_momentum);
    m.dropout.rate = config.dropout_rate;
    init_dense(m.dense3, "dense3", du, config.out_dim, DenseLayer::Act::linear, rng);
    return m;
}

} // namespace flowcast
