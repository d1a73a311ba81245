// eval.hpp -- accuracy metric (100% minus mean relative error) and report
// emission

#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "flowcast/dataset.hpp"
#include "flowcast/nn.hpp"

namespace flowcast {

struct EvalReport {
    std::size_t n_points = 0;
    double mre_pct = 0.0;      // mean(|pred - truth| / truth) * 100
    double accuracy_pct = 0.0; // 100 - mre_pct
    std::vector<std::size_t> subset_sizes;           // 4 random subsets
    std::vector<double> subset_mre_pct;
    std::vector<std::pair<double, double>> scatter;  // (true, pred), label units
};

/// (mre %, accuracy %). Throws NonPositiveTruth when any truth <= 0,
/// EmptyInput on empty vectors.
std::pair<double, double> accuracy(const std::vector<double>& preds,
                                   const std::vector<double>& truths);

/// Inference-mode predictions denormalized via stats; metric overall and per
/// seeded 4-way random subset. Throws SpecMismatch when model and dataset
/// dimensions disagree.
EvalReport evaluate(const Model& model, const Dataset& data, const NormStats& stats,
                    std::uint64_t seed, int threads = 1);

/// Writes summary.txt, scatter.csv (true,pred) and subsets.csv into dir.
void write_report(const EvalReport& report, const std::filesystem::path& dir,
                  const std::string& target, const std::string& units,
                  const std::string& provenance = "");

} // namespace flowcast
