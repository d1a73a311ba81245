#include "flowcast/train.hpp"

#include <cmath>
#include <limits>

#include "flowcast/encoding.hpp"
#include "flowcast/io_util.hpp"

namespace flowcast {

void TrainConfig::validate() const {
    if (lr <= 0.0) throw Error("TrainConfig: lr must be > 0");
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0)
        throw Error("TrainConfig: betas must be in [0, 1)");
    if (adam_eps <= 0.0) throw Error("TrainConfig: adam_eps must be > 0");
    if (batch_size < 1) throw Error("TrainConfig: batch_size must be >= 1");
    if (epochs < 1) throw Error("TrainConfig: epochs must be >= 1");
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw Error("TrainConfig: val_fraction must be in (0, 1)");
}

double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw ShapeMismatch("mse: shape mismatch");
    if (pred.size() == 0) throw EmptyInput("mse of empty vectors");
    return (pred - truth).squaredNorm() / static_cast<double>(pred.size());
}

Eigen::MatrixXd mse_grad(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& truth) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        throw ShapeMismatch("mse_grad: shape mismatch");
    if (pred.size() == 0) throw EmptyInput("mse_grad of empty vectors");
    return 2.0 * (pred - truth) / static_cast<double>(pred.size());
}

void AdamState::init(Model& model) {
    m.clear();
    v.clear();
    for (const ParamRef& p : model.params()) {
        m.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
        v.push_back(Eigen::MatrixXd::Zero(p.value->rows(), p.value->cols()));
    }
    step = 0;
}

void adam_update_tensor(Eigen::MatrixXd& value, const Eigen::MatrixXd& grad,
                        Eigen::MatrixXd& m, Eigen::MatrixXd& v, long t,
                        const TrainConfig& config) {
    m = config.beta1 * m + (1.0 - config.beta1) * grad;
    v = config.beta2 * v + (1.0 - config.beta2) * grad.cwiseProduct(grad);
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
    value.array() -= config.lr * (m.array() / bc1) /
                     ((v.array() / bc2).sqrt() + config.adam_eps);
}

void adam_step(Model& model, AdamState& state, const TrainConfig& config) {
    auto params = model.params();
    if (state.m.size() != params.size()) throw Error("AdamState not initialized for model");
    ++state.step;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].trainable) continue;
        adam_update_tensor(*params[i].value, *params[i].grad, state.m[i], state.v[i],
                           state.step, config);
    }
}

Eigen::VectorXd predict_normalized(const Model& model, const Dataset& data, int batch_size,
                                   int threads) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(data.size()));
    const auto plan = batches(data.size(), batch_size, false, 0, 0);
    parallel_for(plan.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t bi = begin; bi < end; ++bi) {
            const auto& idx = plan[bi];
            const Eigen::MatrixXd x = encode_batch(data.flows, idx, data.spec);
            const Eigen::MatrixXd pred = model.infer(x);
            for (std::size_t r = 0; r < idx.size(); ++r)
                out(idx[r]) = pred(static_cast<Eigen::Index>(r), 0);
        }
    });
    return out;
}

namespace {

Eigen::MatrixXd labels_to_matrix(const std::vector<double>& labels,
                                 const std::vector<int>& idx) {
    Eigen::MatrixXd y(static_cast<Eigen::Index>(idx.size()), 1);
    for (std::size_t r = 0; r < idx.size(); ++r)
        y(static_cast<Eigen::Index>(r), 0) = labels[static_cast<std::size_t>(idx[r])];
    return y;
}

struct Snapshot {
    std::vector<Eigen::MatrixXd> values;

    static Snapshot take(Model& model) {
        Snapshot s;
        for (const ParamRef& p : model.params()) s.values.push_back(*p.value);
        return s;
    }
    void restore(Model& model) const {
        auto params = model.params();
        for (std::size_t i = 0; i < params.size(); ++i) *params[i].value = values[i];
    }
};

} // namespace

TrainResult train(Model& model, const Dataset& data, const TrainConfig& config,
                  const NormStats* fixed_stats) {
    config.validate();
    if (data.size() < 2) throw EmptySplit("training needs at least 2 rows");

    const auto [train_set, val_set] =
        split(data, config.val_fraction, substream_seed(config.master_seed, "split"));

    // Normalization statistics come from the training rows only, unless the
    // caller pins them.
    NormStats stats;
    std::vector<double> train_labels;
    if (fixed_stats) {
        stats = *fixed_stats;
        if (stats.range <= 0.0) throw DegenerateLabels("fixed stats have range 0");
        train_labels.resize(train_set.labels.size());
        for (std::size_t i = 0; i < train_labels.size(); ++i)
            train_labels[i] = normalize(train_set.labels[i], stats);
    } else {
        std::tie(train_labels, stats) = normalize_labels(train_set.labels);
    }
    std::vector<double> val_labels(val_set.labels.size());
    for (std::size_t i = 0; i < val_labels.size(); ++i)
        val_labels[i] = normalize(val_set.labels[i], stats);

    Rng dropout_rng(substream_seed(config.master_seed, "dropout"));
    const std::uint64_t shuffle_seed = substream_seed(config.master_seed, "shuffle");

    AdamState adam;
    adam.init(model);

    TrainHistory history;
    history.train_loss.reserve(static_cast<std::size_t>(config.epochs));
    history.val_loss.reserve(static_cast<std::size_t>(config.epochs));

    std::vector<int> val_all(val_set.size());
    for (std::size_t i = 0; i < val_all.size(); ++i) val_all[i] = static_cast<int>(i);

    double best_val = std::numeric_limits<double>::infinity();
    Snapshot best_snapshot;

    Model::Caches caches;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto plan = batches(train_set.size(), config.batch_size, true, shuffle_seed, epoch);
        // BN batch statistics need >= 2 samples; fold a trailing singleton
        // into the previous batch.
        if (plan.size() >= 2 && plan.back().size() == 1) {
            plan[plan.size() - 2].push_back(plan.back()[0]);
            plan.pop_back();
        }

        double loss_sum = 0.0;
        for (const auto& idx : plan) {
            const Eigen::MatrixXd x = encode_batch(train_set.flows, idx, train_set.spec);
            const Eigen::MatrixXd y = labels_to_matrix(train_labels, idx);
            const Eigen::MatrixXd pred = model.forward(x, true, &dropout_rng, &caches);
            loss_sum += mse(pred, y) * static_cast<double>(idx.size());
            model.zero_grads();
            model.backward(caches, mse_grad(pred, y));
            adam_step(model, adam, config);
        }
        history.train_loss.push_back(loss_sum / static_cast<double>(train_set.size()));

        // Validation in inference mode: dropout off, BN moving statistics.
        Eigen::VectorXd val_pred = predict_normalized(model, val_set, config.batch_size, 1);
        Eigen::MatrixXd val_truth = labels_to_matrix(val_labels, val_all);
        const double vloss = mse(val_pred, val_truth.col(0));
        history.val_loss.push_back(vloss);

        if (config.best_val && vloss < best_val) {
            best_val = vloss;
            best_snapshot = Snapshot::take(model);
        }
    }

    if (config.best_val && !best_snapshot.values.empty()) best_snapshot.restore(model);
    return TrainResult{std::move(history), stats};
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path,
                       const std::string& provenance) {
    std::string content;
    if (!provenance.empty()) content += "# " + provenance + "\n";
    content += "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < history.train_loss.size(); ++e) {
        content += std::to_string(e + 1);
        content += ',';
        content += format_double(history.train_loss[e]);
        content += ',';
        content += format_double(history.val_loss[e]);
        content += '\n';
    }
    atomic_write_file(path, content);
}

} // namespace flowcast
