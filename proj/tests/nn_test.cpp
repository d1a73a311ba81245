#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "flowcast/encoding.hpp"
#include "flowcast/nn.hpp"
#include "flowcast/train.hpp"
#include "test_util.hpp"

using namespace flowcast;
using Eigen::MatrixXd;

namespace {

MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                       double scale = 1.0) {
    Rng rng(seed);
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.uniform(-scale, scale);
    return m;
}

// Central-difference check of d(loss)/d(tensor) against an analytic gradient.
// loss() must re-run the forward pass from current parameter values.
double max_rel_error(MatrixXd& tensor, const MatrixXd& analytic,
                     const std::function<double()>& loss, double step = 1e-5) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < tensor.rows(); ++i) {
        for (Eigen::Index j = 0; j < tensor.cols(); ++j) {
            const double saved = tensor(i, j);
            tensor(i, j) = saved + step;
            const double up = loss();
            tensor(i, j) = saved - step;
            const double down = loss();
            tensor(i, j) = saved;
            const double numeric = (up - down) / (2.0 * step);
            const double a = analytic(i, j);
            const double rel =
                std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), 1e-4);
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

} // namespace

TEST(HardSigmoidTest, ValuesAndClamps) {
    EXPECT_DOUBLE_EQ(hard_sigmoid(0.0), 0.5);
    EXPECT_DOUBLE_EQ(hard_sigmoid(2.5), 1.0);  // clamp boundary
    EXPECT_DOUBLE_EQ(hard_sigmoid(-3.0), 0.0);
    EXPECT_DOUBLE_EQ(hard_sigmoid(1.0), 0.7);
    EXPECT_DOUBLE_EQ(hard_sigmoid(100.0), 1.0);
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

namespace {

LstmLayer make_lstm(int in_dim, int units, bool return_sequence, std::uint64_t seed) {
    LstmLayer l;
    l.name = "lstm_t";
    l.in_dim = in_dim;
    l.units = units;
    l.return_sequence = return_sequence;
    l.kernel = random_matrix(in_dim, 4 * units, seed, 0.5);
    l.recurrent = random_matrix(units, 4 * units, seed + 1, 0.5);
    l.bias = random_matrix(1, 4 * units, seed + 2, 0.5);
    l.d_kernel = MatrixXd::Zero(in_dim, 4 * units);
    l.d_recurrent = MatrixXd::Zero(units, 4 * units);
    l.d_bias = MatrixXd::Zero(1, 4 * units);
    return l;
}

} // namespace

TEST(LstmTest, AllZeroParametersGiveZeroOutputs) {
    for (bool seq : {true, false}) {
        LstmLayer l = make_lstm(3, 4, seq, 1);
        l.kernel.setZero();
        l.recurrent.setZero();
        l.bias.setZero();
        const MatrixXd x = random_matrix(10, 3, 2); // B=2, L=5
        const MatrixXd y = l.forward(x, 5, nullptr);
        EXPECT_EQ(y.rows(), seq ? 10 : 2);
        EXPECT_DOUBLE_EQ(y.cwiseAbs().maxCoeff(), 0.0);
    }
}

TEST(LstmTest, HandComputedCellAccumulation) {
    // Zero weights; saturated input/forget/output gates (bias +10) and a
    // candidate bias of atanh(0.5): c_t = c_{t-1} + 0.5, h_t = tanh(c_t).
    LstmLayer l = make_lstm(1, 1, false, 3);
    l.kernel.setZero();
    l.recurrent.setZero();
    l.bias(0, 0) = 10.0;           // input gate -> 1
    l.bias(0, 1) = 10.0;           // forget gate -> 1
    l.bias(0, 2) = std::atanh(0.5); // candidate -> 0.5
    l.bias(0, 3) = 10.0;           // output gate -> 1
    const MatrixXd x = MatrixXd::Ones(3, 1); // B=1, L=3
    const MatrixXd y = l.forward(x, 3, nullptr);
    ASSERT_EQ(y.rows(), 1);
    EXPECT_NEAR(y(0, 0), std::tanh(1.5), 1e-15);
}

TEST(LstmTest, OutputShapesMatchArchitectureTable) {
    const ModelConfig config{}; // d=6, L=24, h=128 defaults
    Model m = build_model(config, 1);
    const MatrixXd x = random_matrix(24 * 2, 6, 5, 1.0); // B=2
    const MatrixXd seq_out = m.lstm1.forward(x, 24, nullptr);
    EXPECT_EQ(seq_out.rows(), 48); // per sample: 24 x 128
    EXPECT_EQ(seq_out.cols(), 128);
    const MatrixXd final_out = m.lstm2.forward(seq_out, 24, nullptr);
    EXPECT_EQ(final_out.rows(), 2); // per sample: 128
    EXPECT_EQ(final_out.cols(), 128);
}

TEST(LstmTest, GradientCheckSequenceOutput) {
    LstmLayer l = make_lstm(3, 4, true, 11);
    MatrixXd x = random_matrix(20, 3, 12); // B=4, L=5
    const MatrixXd proj = random_matrix(20, 4, 13);

    auto loss = [&]() { return (l.forward(x, 5, nullptr).array() * proj.array()).sum(); };
    LstmLayer::Cache cache;
    l.forward(x, 5, &cache);
    const MatrixXd dx = l.backward(cache, proj);

    EXPECT_LT(max_rel_error(l.kernel, l.d_kernel, loss), 1e-4);
    EXPECT_LT(max_rel_error(l.recurrent, l.d_recurrent, loss), 1e-4);
    EXPECT_LT(max_rel_error(l.bias, l.d_bias, loss), 1e-4);
    EXPECT_LT(max_rel_error(x, dx, loss), 1e-4);
}

TEST(LstmTest, GradientCheckFinalStateOutput) {
    LstmLayer l = make_lstm(2, 3, false, 21);
    MatrixXd x = random_matrix(12, 2, 22); // B=3, L=4
    const MatrixXd proj = random_matrix(3, 3, 23);

    auto loss = [&]() { return (l.forward(x, 4, nullptr).array() * proj.array()).sum(); };
    LstmLayer::Cache cache;
    l.forward(x, 4, &cache);
    const MatrixXd dx = l.backward(cache, proj);

    EXPECT_LT(max_rel_error(l.kernel, l.d_kernel, loss), 1e-4);
    EXPECT_LT(max_rel_error(l.recurrent, l.d_recurrent, loss), 1e-4);
    EXPECT_LT(max_rel_error(l.bias, l.d_bias, loss), 1e-4);
    EXPECT_LT(max_rel_error(x, dx, loss), 1e-4);
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

namespace {

BnLayer make_bn(int features, double eps = 1e-3) {
    BnLayer l;
    l.name = "bn_t";
    l.features = features;
    l.epsilon = eps;
    l.momentum = 0.99;
    l.gamma = MatrixXd::Ones(1, features);
    l.beta = MatrixXd::Zero(1, features);
    l.moving_mean = MatrixXd::Zero(1, features);
    l.moving_var = MatrixXd::Ones(1, features);
    l.d_gamma = MatrixXd::Zero(1, features);
    l.d_beta = MatrixXd::Zero(1, features);
    return l;
}

} // namespace

TEST(BnTest, ClosedFormOnTinyBatch) {
    BnLayer l = make_bn(1);
    MatrixXd x(3, 1);
    x << 1, 2, 3;
    const MatrixXd y = l.forward(x, true, nullptr);
    const double var = 2.0 / 3.0;
    for (int i = 0; i < 3; ++i)
        EXPECT_NEAR(y(i, 0), (x(i, 0) - 2.0) / std::sqrt(var + 1e-3), 1e-12);
    EXPECT_NEAR(y.col(0).mean(), 0.0, 1e-12);
}

TEST(BnTest, NormalizationExactness) {
    // mean within 1e-6 of 0 and variance within 1e-6 of 1 before gamma/beta
    BnLayer l = make_bn(4, 1e-12);
    const MatrixXd x = random_matrix(64, 4, 31, 3.0);
    const MatrixXd y = l.forward(x, true, nullptr);
    for (int f = 0; f < 4; ++f) {
        const double mean = y.col(f).mean();
        const double var = (y.col(f).array() - mean).square().sum() / 64.0;
        EXPECT_NEAR(mean, 0.0, 1e-6);
        EXPECT_NEAR(var, 1.0, 1e-6);
    }
}

TEST(BnTest, GammaZeroGivesBeta) {
    BnLayer l = make_bn(2);
    l.gamma.setZero();
    l.beta.setConstant(0.25);
    const MatrixXd y = l.forward(random_matrix(8, 2, 41), true, nullptr);
    EXPECT_DOUBLE_EQ(y.minCoeff(), 0.25);
    EXPECT_DOUBLE_EQ(y.maxCoeff(), 0.25);
}

TEST(BnTest, InferenceIsNearIdentityWithUnitStats) {
    BnLayer l = make_bn(3);
    const MatrixXd x = random_matrix(5, 3, 42);
    const MatrixXd y = l.infer(x);
    EXPECT_LT((y - x / std::sqrt(1.0 + 1e-3)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(BnTest, DegenerateBatchRejected) {
    BnLayer l = make_bn(2);
    EXPECT_THROW(l.forward(random_matrix(1, 2, 43), true, nullptr), DegenerateBatch);
}

TEST(BnTest, MovingStatsUpdateWithMomentum) {
    BnLayer l = make_bn(1);
    MatrixXd x(2, 1);
    x << 0.0, 2.0; // batch mean 1, biased var 1
    l.forward(x, true, nullptr);
    EXPECT_NEAR(l.moving_mean(0, 0), 0.01 * 1.0, 1e-15);
    EXPECT_NEAR(l.moving_var(0, 0), 0.99 * 1.0 + 0.01 * 1.0, 1e-15);
}

TEST(BnTest, GradientCheckThroughBatchStatistics) {
    BnLayer l = make_bn(3);
    l.gamma = random_matrix(1, 3, 51, 0.8);
    l.beta = random_matrix(1, 3, 52, 0.8);
    MatrixXd x = random_matrix(6, 3, 53);
    const MatrixXd proj = random_matrix(6, 3, 54);

    auto loss = [&]() { return (l.forward(x, true, nullptr).array() * proj.array()).sum(); };
    BnLayer::Cache cache;
    l.forward(x, true, &cache);
    const MatrixXd dx = l.backward(cache, proj);

    EXPECT_LT(max_rel_error(l.gamma, l.d_gamma, loss), 1e-4);
    EXPECT_LT(max_rel_error(l.beta, l.d_beta, loss), 1e-4);
    EXPECT_LT(max_rel_error(x, dx, loss), 1e-4);
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

namespace {

DenseLayer make_dense(int in, int out, DenseLayer::Act act, std::uint64_t seed) {
    DenseLayer l;
    l.name = "dense_t";
    l.in_dim = in;
    l.out_dim = out;
    l.act = act;
    l.kernel = random_matrix(in, out, seed, 0.7);
    l.bias = random_matrix(1, out, seed + 1, 0.3);
    l.d_kernel = MatrixXd::Zero(in, out);
    l.d_bias = MatrixXd::Zero(1, out);
    return l;
}

} // namespace

TEST(DenseTest, IdentityReluAndAffine) {
    DenseLayer l = make_dense(2, 2, DenseLayer::Act::linear, 61);
    l.kernel = MatrixXd::Identity(2, 2);
    l.bias.setZero();
    const MatrixXd x = random_matrix(4, 2, 62);
    EXPECT_EQ(l.forward(x, nullptr), x);

    DenseLayer relu = make_dense(1, 1, DenseLayer::Act::relu, 63);
    relu.kernel(0, 0) = 1.0;
    relu.bias.setZero();
    MatrixXd neg(1, 1);
    neg << -1.0;
    EXPECT_DOUBLE_EQ(relu.forward(neg, nullptr)(0, 0), 0.0);

    DenseLayer affine = make_dense(1, 1, DenseLayer::Act::linear, 64);
    affine.kernel(0, 0) = 2.0;
    affine.bias(0, 0) = 1.0;
    MatrixXd three(1, 1);
    three << 3.0;
    EXPECT_DOUBLE_EQ(affine.forward(three, nullptr)(0, 0), 7.0);
}

TEST(DenseTest, GradientCheckBothActivations) {
    for (auto act : {DenseLayer::Act::linear, DenseLayer::Act::relu}) {
        DenseLayer l = make_dense(4, 3, act, 71);
        MatrixXd x = random_matrix(5, 4, 72);
        const MatrixXd proj = random_matrix(5, 3, 73);

        auto loss = [&]() { return (l.forward(x, nullptr).array() * proj.array()).sum(); };
        DenseLayer::Cache cache;
        l.forward(x, &cache);
        const MatrixXd dx = l.backward(cache, proj);

        EXPECT_LT(max_rel_error(l.kernel, l.d_kernel, loss), 1e-4);
        EXPECT_LT(max_rel_error(l.bias, l.d_bias, loss), 1e-4);
        EXPECT_LT(max_rel_error(x, dx, loss), 1e-4);
    }
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

TEST(DropoutTest, InferenceAndZeroRateAreIdentity) {
    DropoutLayer l{0.4};
    const MatrixXd x = random_matrix(6, 5, 81);
    EXPECT_EQ(l.forward(x, false, nullptr, nullptr), x);

    DropoutLayer off{0.0};
    Rng rng(1);
    EXPECT_EQ(off.forward(x, true, &rng, nullptr), x);
}

TEST(DropoutTest, KeptUnitsScaledExactly) {
    DropoutLayer l{0.4};
    const MatrixXd x = MatrixXd::Constant(50, 20, 3.0);
    Rng rng(7);
    const MatrixXd y = l.forward(x, true, &rng, nullptr);
    int kept = 0, zeroed = 0;
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
        for (Eigen::Index j = 0; j < y.cols(); ++j) {
            if (y(i, j) == 0.0) {
                ++zeroed;
            } else {
                EXPECT_DOUBLE_EQ(y(i, j), 3.0 / 0.6);
                ++kept;
            }
        }
    }
    EXPECT_GT(kept, 0);
    EXPECT_GT(zeroed, 0);
}

TEST(DropoutTest, ExpectationPreserved) {
    // mean over 10,000 seeded masks within 2% of x elementwise
    DropoutLayer l{0.4};
    MatrixXd x(1, 3);
    x << 1.0, -2.0, 0.5;
    MatrixXd sum = MatrixXd::Zero(1, 3);
    Rng rng(99);
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) sum += l.forward(x, true, &rng, nullptr);
    const MatrixXd mean = sum / trials;
    for (int j = 0; j < 3; ++j)
        EXPECT_NEAR(mean(0, j) / x(0, j), 1.0, 0.02) << "unit " << j;
}

TEST(DropoutTest, BackwardUsesForwardMask) {
    DropoutLayer l{0.5};
    const MatrixXd x = random_matrix(4, 4, 91);
    Rng rng(5);
    DropoutLayer::Cache cache;
    const MatrixXd y = l.forward(x, true, &rng, &cache);
    const MatrixXd dy = MatrixXd::Ones(4, 4);
    const MatrixXd dx = l.backward(cache, dy);
    for (Eigen::Index i = 0; i < 4; ++i)
        for (Eigen::Index j = 0; j < 4; ++j)
            EXPECT_DOUBLE_EQ(dx(i, j), y(i, j) == 0.0 ? 0.0 : 2.0);
}

// ---------------------------------------------------------------------------
// Model: counts, shapes, composition
// ---------------------------------------------------------------------------

TEST(ModelTest, ParameterCountsMatchLayerFormulas) {
    ModelConfig config; // d=6, h=128, dense 30, dim=1
    Model m = build_model(config, 1);

    EXPECT_EQ(m.lstm1.param_count(), 69120);  // 4(h(d+h)+h), d=6
    EXPECT_EQ(m.lstm2.param_count(), 131584); // d=128
    EXPECT_EQ(m.bn1.param_count(), 512);
    EXPECT_EQ(m.bn2.param_count(), 512);
    EXPECT_EQ(m.dense1.param_count(), 3870);
    EXPECT_EQ(m.bn3.param_count(), 120);
    EXPECT_EQ(m.dense2.param_count(), 930);
    EXPECT_EQ(m.bn4.param_count(), 120);
    EXPECT_EQ(m.dense3.param_count(), 31);

    EXPECT_EQ(m.param_count(false), 206799);
    // trainable excludes the BN moving statistics: 2*(128+128+30+30)
    EXPECT_EQ(m.param_count(true), 206799 - 632);
}

TEST(ModelTest, OutputShapeAndInferencePurity) {
    ModelConfig config;
    config.input_dim = 6;
    config.seq_len = 24;
    config.lstm_units = 16;
    config.dense_units = 8;
    Model m = build_model(config, 2);

    const FlowSpec spec = FlowSpec::default_profile();
    Rng rng(3);
    std::vector<Flow> flows;
    for (int i = 0; i < 5; ++i) flows.push_back(sample_flow(spec, rng));
    const MatrixXd x = encode_batch(flows, {0, 1, 2, 3, 4}, spec);

    const MatrixXd x_before = x;
    const MatrixXd y1 = m.infer(x);
    const MatrixXd y2 = m.infer(x);
    EXPECT_EQ(y1.rows(), 5);
    EXPECT_EQ(y1.cols(), 1);
    EXPECT_EQ(y1, y2); // bit-identical repeated inference
    EXPECT_TRUE(y1.allFinite());
    EXPECT_EQ(x, x_before); // input untouched

    MatrixXd bad = MatrixXd::Zero(7, 6); // rows not a multiple of seq_len
    EXPECT_THROW(m.infer(bad), ShapeMismatch);
}

TEST(ModelTest, ZeroLossGradientGivesZeroParameterGradients) {
    ModelConfig config{3, 5, 4, 5, 1, 0.0, 1e-3, 0.99, false};
    Model m = build_model(config, 7);
    const MatrixXd x = random_matrix(20, 3, 8, 1.0); // B=4
    Model::Caches caches;
    Rng rng(1);
    m.forward(x, true, &rng, &caches);
    m.zero_grads();
    m.backward(caches, MatrixXd::Zero(4, 1));
    for (const ParamRef& p : m.params())
        if (p.grad) EXPECT_DOUBLE_EQ(p.grad->cwiseAbs().maxCoeff(), 0.0) << p.layer;
}

TEST(ModelTest, FrozenLayerGetsNoParameterGradients) {
    ModelConfig config{3, 5, 4, 5, 1, 0.0, 1e-3, 0.99, false};
    Model m = build_model(config, 9);
    m.dense1.trainable = false;
    const MatrixXd x = random_matrix(20, 3, 10, 1.0);
    Model::Caches caches;
    Rng rng(1);
    const MatrixXd pred = m.forward(x, true, &rng, &caches);
    m.zero_grads();
    m.backward(caches, MatrixXd::Ones(4, 1));
    EXPECT_DOUBLE_EQ(m.dense1.d_kernel.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_DOUBLE_EQ(m.dense1.d_bias.cwiseAbs().maxCoeff(), 0.0);
    // gradients still flow through to the layers below
    EXPECT_GT(m.lstm1.d_kernel.cwiseAbs().maxCoeff(), 0.0);
}

TEST(ModelTest, ComposedGradientCheck) {
    // Tiny config, 4-sample batch, MSE loss, dropout active with a fixed
    // per-evaluation stream so every finite-difference call sees one mask.
    ModelConfig config{3, 5, 4, 5, 1, 0.35, 1e-3, 0.99, false};
    Model m = build_model(config, 77);
    const MatrixXd x = random_matrix(20, 3, 78, 1.0); // B=4, L=5
    const MatrixXd target = random_matrix(4, 1, 79, 0.5);

    auto loss = [&]() {
        Model::Caches c;
        Rng rng(555);
        return mse(m.forward(x, true, &rng, &c), target);
    };

    Model::Caches caches;
    Rng rng(555);
    const MatrixXd pred = m.forward(x, true, &rng, &caches);
    m.zero_grads();
    m.backward(caches, mse_grad(pred, target));

    for (const ParamRef& p : m.params()) {
        if (!p.grad) continue;
        const double err = max_rel_error(*p.value, *p.grad, loss);
        EXPECT_LT(err, 1e-4) << p.layer << "." << p.tensor;
    }
}

TEST(BuildModelTest, InitializationContract) {
    ModelConfig config;
    Model m = build_model(config, 5);
    // biases zero except the LSTM forget gate block
    const int h = config.lstm_units;
    EXPECT_DOUBLE_EQ(m.lstm1.bias.block(0, 0, 1, h).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_DOUBLE_EQ(m.lstm1.bias.block(0, h, 1, h).minCoeff(), 1.0);
    EXPECT_DOUBLE_EQ(m.lstm1.bias.block(0, h, 1, h).maxCoeff(), 1.0);
    EXPECT_DOUBLE_EQ(m.dense1.bias.cwiseAbs().maxCoeff(), 0.0);
    EXPECT_DOUBLE_EQ(m.bn1.gamma.minCoeff(), 1.0);
    EXPECT_DOUBLE_EQ(m.bn1.beta.cwiseAbs().maxCoeff(), 0.0);

    // deterministic under seed
    Model m2 = build_model(config, 5);
    EXPECT_EQ(m.lstm1.kernel, m2.lstm1.kernel);
    EXPECT_EQ(m.dense3.kernel, m2.dense3.kernel);
    Model m3 = build_model(config, 6);
    EXPECT_NE(m.lstm1.kernel, m3.lstm1.kernel);
}

TEST(BuildModelTest, OrthogonalRecurrentOption) {
    ModelConfig config{3, 5, 8, 5, 1, 0.4, 1e-3, 0.99, true};
    Model m = build_model(config, 5);
    for (int blk = 0; blk < 4; ++blk) {
        const MatrixXd q = m.lstm1.recurrent.middleCols(blk * 8, 8);
        EXPECT_LT((q.transpose() * q - MatrixXd::Identity(8, 8)).cwiseAbs().maxCoeff(), 1e-10);
    }
}
