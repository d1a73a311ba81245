// dataset.hpp -- dataset containers, label normalization, splits, batching,
// CSV ingestion/persistence

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "flowcast/flowspace.hpp"

namespace flowcast {

enum class Target { delay, area };

std::string target_name(Target t);   // "delay" | "area"
std::string target_units(Target t);  // "ps" | "um2"
Target parse_target(std::string_view s);

/// One simulated or ingested measurement: a flow and both QoR columns.
struct QorRow {
    Flow flow;
    double delay_ps;
    double area_um2;
};

/// Backing store of a CSV file: carries both QoR columns; a training target
/// is selected from it by flag.
struct QorTable {
    FlowSpec spec;
    std::vector<QorRow> rows;
    std::size_t skipped = 0; // rows dropped on ingest (NA / unparsable QoR)
};

/// Flows paired with a single scalar label.
struct Dataset {
    FlowSpec spec;
    std::vector<Flow> flows;
    std::vector<double> labels;
    std::string target;
    std::string units;

    std::size_t size() const { return flows.size(); }
};

Dataset select_target(const QorTable& table, Target target);

struct NormStats {
    double mean = 0.0;
    double range = 1.0; // max - min, > 0
};

/// y' = (y - mean) / range over the given labels; stats are retained to
/// reconstruct ground truth at testing. Throws DegenerateLabels if range = 0
/// (fewer than 2 distinct values).
std::pair<std::vector<double>, NormStats> normalize_labels(const std::vector<double>& labels);

inline double normalize(double y, const NormStats& s) { return (y - s.mean) / s.range; }
inline double denormalize(double y_norm, const NormStats& s) { return y_norm * s.range + s.mean; }

/// Seeded shuffle then split; val size = round(val_fraction * n). Disjoint and
/// exhaustive. Throws EmptySplit when either side would be empty.
std::pair<Dataset, Dataset> split(const Dataset& data, double val_fraction, std::uint64_t seed);

/// Index batches over [0, n_rows). Last batch may be short. The shuffle is
/// driven by (seed, epoch) so every epoch of every run is reproducible.
std::vector<std::vector<int>> batches(std::size_t n_rows, int batch_size, bool shuffle,
                                      std::uint64_t seed, int epoch);

/// CSV columns: flow,delay_ps,area_um2. Header row required; '#' comment
/// lines ignored. Rows whose QoR fields are NA or unparsable are skipped and
/// counted in QorTable::skipped. Malformed flows throw UnknownTransformation
/// or RepetitionMismatch with the offending line number.
QorTable read_csv(const std::filesystem::path& path, const FlowSpec& spec);

void write_csv(const QorTable& table, const std::filesystem::path& path,
               const std::string& provenance = "");

} // namespace flowcast
