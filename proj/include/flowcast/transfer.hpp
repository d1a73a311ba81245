// transfer.hpp -- transfer-learning strategies: layer freezing, fine-tuning
// on <= 100 new points, and the from-scratch baseline

#pragma once

#include <cstdint>

#include "flowcast/train.hpp"

namespace flowcast {

enum class TransferStrategy {
    dense_only, // stack layers 1-4 (LSTM1, BN1, LSTM2, BN2) non-trainable
    all_layers,
};

TransferStrategy parse_strategy(std::string_view s); // "dense" | "all"
std::string strategy_name(TransferStrategy s);

/// Sets trainable flags only; no parameter value changes. Frozen BN layers
/// run on their moving statistics during later training and do not update
/// them.
void freeze(Model& model, TransferStrategy strategy);

/// The seeded shuffle order behind fine_tune's point selection: the first k
/// entries are the fine-tuning points, the rest the untouched complement.
std::vector<int> transfer_pick_order(std::size_t n_points, std::uint64_t master_seed);

/// Picks the first k points of a seeded shuffle of new_points (seed fans out
/// from config.master_seed), recomputes NormStats on those k points, freezes
/// per strategy and trains with the recomputed stats. Before training, the
/// output layer is re-expressed under the new normalization (an exact affine
/// recalibration from pretrained_stats), so the pretrained function is
/// preserved at initialization instead of being relearned from k points.
/// Throws InsufficientPoints when k > |new_points|.
TrainResult fine_tune(Model& model, const NormStats& pretrained_stats,
                      const Dataset& new_points, std::uint64_t k, TransferStrategy strategy,
                      const TrainConfig& config);

struct ScratchResult {
    Model model;
    TrainHistory history;
    NormStats stats;
};

/// Same protocol as fine_tune(all_layers) but from fresh seeded
/// initialization, no pretraining.
ScratchResult scratch_baseline(const Dataset& new_points, std::uint64_t k,
                               const ModelConfig& model_config, const TrainConfig& config);

} // namespace flowcast
