// oracle.hpp -- deterministic synthetic synthesis + technology-mapping
// simulator supplying ground-truth QoR (delay, area) for flows
//
// A Technology is a hidden-state dynamical system: one affine map + tanh per
// transformation, applied along the flow, with positive readouts for delay
// and area. It is sequence-order sensitive, so reordering a flow changes its
// QoR -- which is the property the regressor is meant to learn. Derived
// technologies perturb the parameters slightly and rescale the readouts,
// giving correlated parent/child QoR surfaces for transfer experiments.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowcast/dataset.hpp"
#include "flowcast/flowspace.hpp"
#include "flowcast/rng.hpp"

namespace flowcast {

struct Readout {
    Eigen::VectorXd w;  // d
    double c = 0.0;
    double gain = 1.0;  // multiplies the softplus output; derive() scales this
};

struct Technology {
    std::string id;
    FlowSpec spec;
    int state_dim = 8;
    Eigen::VectorXd init_state;              // d
    std::vector<Eigen::MatrixXd> step_mat;   // per transformation, d x d
    std::vector<Eigen::VectorXd> step_bias;  // per transformation, d
    Readout delay;
    Readout area;
    double noise_sd = 0.0;

    Technology(FlowSpec s) : spec(std::move(s)) {}
};

struct Qor {
    double delay_ps;
    double area_um2;
};

/// Fresh technology with parameters drawn uniform(-1,1)/sqrt(d) from the
/// seeded stream. Deterministic under (spec, seed, state_dim).
Technology make_technology(const FlowSpec& spec, std::uint64_t seed, int state_dim = 8,
                           double noise_sd = 0.0, std::string id = "");

/// Child technology: every parameter tensor is perturbed by
/// drift * rms(tensor) * uniform(-1,1), and the readout gains are multiplied
/// by `scale` so child QoR = scale * parent QoR when drift = 0.
/// drift = 0, scale = 1 reproduces the parent exactly.
Technology derive_technology(const Technology& parent, double drift, double scale,
                             std::uint64_t seed, std::string id = "");

/// s <- s0; for each step k: s <- tanh(A_k s + b_k);
/// delay = gain_d * softplus(w_d . s + c_d) * 100 ps, area analogous.
/// Optional relative Gaussian noise (sd = noise_sd * value) uses noise_rng;
/// pure function of (flow, tech) when noise_sd = 0.
/// Throws SpecMismatch when the flow is invalid under tech.spec.
Qor simulate_qor(const Flow& flow, const Technology& tech, Rng* noise_rng = nullptr);

/// `count` unique flows simulated against `tech`. Rows with non-finite QoR
/// are dropped and counted in QorTable::skipped. Per-row noise streams are
/// partitioned by row index, so serial and parallel generation produce
/// identical tables. Throws CountExceedsSpace via sample_unique_flows.
QorTable generate_qor_table(const FlowSpec& spec, const Technology& tech,
                            std::uint64_t count, std::uint64_t seed, int threads = 1);

/// generate_qor_table + select_target.
Dataset generate_dataset(const FlowSpec& spec, const Technology& tech, std::uint64_t count,
                         std::uint64_t seed, Target target, int threads = 1);

/// .flt file: versioned text manifest, parameters as hex-encoded IEEE-754
/// doubles for exact roundtrip. Written atomically.
void save_technology(const Technology& tech, const std::filesystem::path& path,
                     const std::string& provenance = "");
Technology load_technology(const std::filesystem::path& path);

} // namespace flowcast
