#include "flowcast/encoding.hpp"

namespace flowcast {

EncodedFlow encode_timed(const Flow& flow, const FlowSpec& spec) {
    if (!flow_valid(flow, spec))
        throw SpecMismatch("flow invalid under spec while encoding");
    EncodedFlow enc;
    enc.matrix = Eigen::MatrixXd::Zero(spec.size(), spec.length());
    for (int t = 0; t < spec.length(); ++t)
        enc.matrix(flow.steps[static_cast<std::size_t>(t)], t) = 1.0;
    return enc;
}

Flow decode_timed(const EncodedFlow& enc) {
    Flow flow;
    flow.steps.reserve(static_cast<std::size_t>(enc.seq_len()));
    for (int t = 0; t < enc.seq_len(); ++t) {
        int hot = -1;
        for (int f = 0; f < enc.features(); ++f) {
            const double v = enc.matrix(f, t);
            if (v == 0.0) continue;
            if (v != 1.0 || hot >= 0)
                throw MalformedMatrix("column " + std::to_string(t) + " is not one-hot");
            hot = f;
        }
        if (hot < 0)
            throw MalformedMatrix("column " + std::to_string(t) + " sums to 0");
        flow.steps.push_back(hot);
    }
    return flow;
}

Eigen::MatrixXd encode_batch(const std::vector<Flow>& flows,
                             const std::vector<int>& row_indices,
                             const FlowSpec& spec) {
    const int batch = static_cast<int>(row_indices.size());
    const int seq_len = spec.length();
    Eigen::MatrixXd x = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(batch) * seq_len,
                                              spec.size());
    for (int b = 0; b < batch; ++b) {
        const Flow& f = flows[static_cast<std::size_t>(row_indices[static_cast<std::size_t>(b)])];
        for (int t = 0; t < seq_len; ++t)
            x(static_cast<Eigen::Index>(t) * batch + b, f.steps[static_cast<std::size_t>(t)]) = 1.0;
    }
    return x;
}

} // namespace flowcast
