#include "flowcast/transfer.hpp"

#include <numeric>

namespace flowcast {

TransferStrategy parse_strategy(std::string_view s) {
    if (s == "dense" || s == "dense_only") return TransferStrategy::dense_only;
    if (s == "all" || s == "all_layers") return TransferStrategy::all_layers;
    throw Error("unknown transfer strategy '" + std::string(s) + "' (expected dense|all)");
}

std::string strategy_name(TransferStrategy s) {
    return s == TransferStrategy::dense_only ? "dense" : "all";
}

void freeze(Model& model, TransferStrategy strategy) {
    const bool recurrent_trainable = strategy == TransferStrategy::all_layers;
    model.lstm1.trainable = recurrent_trainable;
    model.bn1.trainable = recurrent_trainable;
    model.lstm2.trainable = recurrent_trainable;
    model.bn2.trainable = recurrent_trainable;
    model.dense1.trainable = true;
    model.bn3.trainable = true;
    model.dense2.trainable = true;
    model.bn4.trainable = true;
    model.dense3.trainable = true;
}

std::vector<int> transfer_pick_order(std::size_t n_points, std::uint64_t master_seed) {
    std::vector<int> order(n_points);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(substream_seed(master_seed, "transfer-pick"));
    rng.shuffle(order);
    return order;
}

namespace {

Dataset pick_points(const Dataset& new_points, std::uint64_t k, std::uint64_t master_seed) {
    if (k > new_points.size())
        throw InsufficientPoints("requested k=" + std::to_string(k) + " of " +
                                 std::to_string(new_points.size()) + " available points");
    const std::vector<int> order = transfer_pick_order(new_points.size(), master_seed);

    Dataset subset{new_points.spec, {}, {}, new_points.target, new_points.units};
    subset.flows.reserve(k);
    subset.labels.reserve(k);
    for (std::uint64_t i = 0; i < k; ++i) {
        const auto idx = static_cast<std::size_t>(order[i]);
        subset.flows.push_back(new_points.flows[idx]);
        subset.labels.push_back(new_points.labels[idx]);
    }
    return subset;
}

} // namespace

TrainResult fine_tune(Model& model, const NormStats& pretrained_stats,
                      const Dataset& new_points, std::uint64_t k, TransferStrategy strategy,
                      const TrainConfig& config) {
    const Dataset subset = pick_points(new_points, k, config.master_seed);

    // Stats come from all k transfer points; the pre-training stats belong to
    // another technology's label distribution.
    const NormStats stats = normalize_labels(subset.labels).second;

    // Calibrate the output layer on the k points before any gradient step:
    // least-squares affine fit of the pretrained head's outputs onto the new
    // normalized labels. A technology shift moves QoR largely affinely (scaled
    // readouts), so this closed-form step recovers most of the shift at once
    // instead of burning the few points' gradient budget on it. With zero
    // output variance across the k points the fit degenerates; fall back to
    // re-expressing the old normalization under the new one.
    const Eigen::VectorXd outputs = predict_normalized(model, subset, config.batch_size);
    const auto n = static_cast<double>(subset.size());
    const double out_mean = outputs.mean();
    const double out_var = (outputs.array() - out_mean).square().sum() / n;
    double target_mean = 0.0;
    for (double y : subset.labels) target_mean += normalize(y, stats);
    target_mean /= n;

    double a, b;
    if (out_var > 1e-12) {
        double cov = 0.0;
        for (std::size_t i = 0; i < subset.size(); ++i)
            cov += (outputs(static_cast<Eigen::Index>(i)) - out_mean) *
                   (normalize(subset.labels[i], stats) - target_mean);
        cov /= n;
        a = cov / out_var;
        b = target_mean - a * out_mean;
    } else {
        a = pretrained_stats.range / stats.range;
        b = (pretrained_stats.mean - stats.mean) / stats.range;
    }
    model.dense3.kernel *= a;
    model.dense3.bias = model.dense3.bias * a;
    model.dense3.bias.array() += b;

    freeze(model, strategy);
    TrainResult result = train(model, subset, config, &stats);
    result.stats = stats;
    return result;
}

ScratchResult scratch_baseline(const Dataset& new_points, std::uint64_t k,
                               const ModelConfig& model_config, const TrainConfig& config) {
    const Dataset subset = pick_points(new_points, k, config.master_seed);
    const NormStats stats = normalize_labels(subset.labels).second;
    ScratchResult result{build_model(model_config, config.master_seed), {}, {}};
    TrainResult r = train(result.model, subset, config, &stats);
    result.history = std::move(r.history);
    result.stats = stats;
    return result;
}

} // namespace flowcast
