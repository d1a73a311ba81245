#include "flowcast/eval.hpp"

#include <cmath>
#include <numeric>

#include "flowcast/io_util.hpp"
#include "flowcast/train.hpp"

namespace flowcast {

std::pair<double, double> accuracy(const std::vector<double>& preds,
                                   const std::vector<double>& truths) {
    if (preds.empty() || truths.empty()) throw EmptyInput("accuracy of empty vectors");
    if (preds.size() != truths.size()) throw ShapeMismatch("accuracy: length mismatch");
    double sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        if (!(truths[i] > 0.0))
            throw NonPositiveTruth("truth at index " + std::to_string(i) +
                                   " is not strictly positive");
        sum += std::abs(preds[i] - truths[i]) / truths[i];
    }
    const double mre = sum / static_cast<double>(preds.size()) * 100.0;
    return {mre, 100.0 - mre};
}

EvalReport evaluate(const Model& model, const Dataset& data, const NormStats& stats,
                    std::uint64_t seed, int threads) {
    if (data.size() == 0) throw EmptyInput("evaluate on an empty dataset");
    if (model.config.input_dim != data.spec.size() || model.config.seq_len != data.spec.length())
        throw SpecMismatch("model dimensions do not match the dataset's spec");

    const Eigen::VectorXd pred_norm = predict_normalized(model, data, 256, threads);

    EvalReport report;
    report.n_points = data.size();
    report.scatter.reserve(data.size());
    std::vector<double> preds(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) {
        preds[i] = denormalize(pred_norm(static_cast<Eigen::Index>(i)), stats);
        report.scatter.emplace_back(data.labels[i], preds[i]);
    }
    std::tie(report.mre_pct, report.accuracy_pct) = accuracy(preds, data.labels);

    // Four equal random subsets (sizes differ by at most 1).
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(substream_seed(seed, "eval-subsets"));
    rng.shuffle(order);
    const std::size_t base = data.size() / 4;
    const std::size_t rem = data.size() % 4;
    std::size_t cursor = 0;
    for (std::size_t s = 0; s < 4; ++s) {
        const std::size_t count = base + (s < rem ? 1 : 0);
        std::vector<double> sub_pred, sub_truth;
        sub_pred.reserve(count);
        sub_truth.reserve(count);
        for (std::size_t i = 0; i < count; ++i) {
            const auto idx = static_cast<std::size_t>(order[cursor++]);
            sub_pred.push_back(preds[idx]);
            sub_truth.push_back(data.labels[idx]);
        }
        report.subset_sizes.push_back(count);
        report.subset_mre_pct.push_back(count == 0 ? 0.0
                                                   : accuracy(sub_pred, sub_truth).first);
    }
    return report;
}

void write_report(const EvalReport& report, const std::filesystem::path& dir,
                  const std::string& target, const std::string& units,
                  const std::string& provenance) {
    std::filesystem::create_directories(dir);

    std::string summary;
    if (!provenance.empty()) summary += "# " + provenance + "\n";
    summary += "target: " + target + " (" + units + ")\n";
    summary += "points: " + std::to_string(report.n_points) + "\n";
    summary += "mean_relative_error_pct: " + format_double(report.mre_pct) + "\n";
    summary += "accuracy_pct: " + format_double(report.accuracy_pct) + "\n";
    for (std::size_t s = 0; s < report.subset_mre_pct.size(); ++s) {
        summary += "subset_" + std::to_string(s + 1) + ": n=" +
                   std::to_string(report.subset_sizes[s]) +
                   " mre_pct=" + format_double(report.subset_mre_pct[s]) + "\n";
    }
    atomic_write_file(dir / "summary.txt", summary);

    std::string scatter;
    if (!provenance.empty()) scatter += "# " + provenance + "\n";
    scatter += "true,pred\n";
    for (const auto& [t, p] : report.scatter)
        scatter += format_double(t) + "," + format_double(p) + "\n";
    atomic_write_file(dir / "scatter.csv", scatter);

    std::string subsets;
    if (!provenance.empty()) subsets += "# " + provenance + "\n";
    subsets += "subset,n,mre_pct,accuracy_pct\n";
    for (std::size_t s = 0; s < report.subset_mre_pct.size(); ++s) {
        subsets += std::to_string(s + 1) + "," + std::to_string(report.subset_sizes[s]) + "," +
                   format_double(report.subset_mre_pct[s]) + "," +
                   format_double(100.0 - report.subset_mre_pct[s]) + "\n";
    }
    atomic_write_file(dir / "subsets.csv", subsets);
}

} // namespace flowcast
