// encoding.hpp -- timed-model one-hot matrix for feeding flows to the network

#pragma once

#include <Eigen/Core>

#include "flowcast/flowspace.hpp"

namespace flowcast {

/// n x L binary matrix: column t is the one-hot vector of the transformation
/// applied at time frame t. Column-major storage, so memory order is
/// time-step-major, ready for streaming into the recurrent core.
struct EncodedFlow {
    Eigen::MatrixXd matrix; // rows = spec.size() features, cols = spec.length() time frames

    int features() const { return static_cast<int>(matrix.rows()); }
    int seq_len() const { return static_cast<int>(matrix.cols()); }
};

EncodedFlow encode_timed(const Flow& flow, const FlowSpec& spec);

/// Inverse of encode_timed. Throws MalformedMatrix when any column is not
/// exactly one-hot (entries in {0,1} summing to 1).
Flow decode_timed(const EncodedFlow& enc);

/// Stacks flows into the network input layout: rows = t*B + b (time-major),
/// cols = features. Row t*B+b is the one-hot of flows[rows_idx[b]].steps[t].
Eigen::MatrixXd encode_batch(const std::vector<Flow>& flows,
                             const std::vector<int>& row_indices,
                             const FlowSpec& spec);

} // namespace flowcast
