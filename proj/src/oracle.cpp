#include "flowcast/oracle.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <sstream>

#include "flowcast/io_util.hpp"
#include "flowcast/tensor_io.hpp"

namespace flowcast {

namespace {

// Numerically stable log(1 + e^x).
double softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

void fill_uniform(Eigen::MatrixXd& m, Rng& rng, double scale) {
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = rng.uniform(-1.0, 1.0) * scale;
}

void fill_uniform(Eigen::VectorXd& v, Rng& rng, double scale) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(-1.0, 1.0) * scale;
}

double tensor_rms(const Eigen::MatrixXd& m) {
    if (m.size() == 0) return 0.0;
    return std::sqrt(m.squaredNorm() / static_cast<double>(m.size()));
}

void perturb(Eigen::MatrixXd& m, double drift, Rng& rng) {
    const double mag = tensor_rms(m);
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) += drift * mag * rng.uniform(-1.0, 1.0);
}

void perturb(Eigen::VectorXd& v, double drift, Rng& rng) {
    Eigen::MatrixXd m = v;
    perturb(m, drift, rng);
    v = m;
}

double perturb(double x, double drift, Rng& rng) {
    return x + drift * std::abs(x) * rng.uniform(-1.0, 1.0);
}

double apply_noise(double value, double noise_sd, Rng* rng) {
    if (noise_sd <= 0.0 || rng == nullptr) return value;
    const double noisy = value * (1.0 + noise_sd * rng->normal());
    // QoR stays strictly positive even under extreme noise draws
    return std::max(noisy, std::numeric_limits<double>::min());
}

} // namespace

Technology make_technology(const FlowSpec& spec, std::uint64_t seed, int state_dim,
                           double noise_sd, std::string id) {
    if (state_dim < 1) throw Error("state_dim must be >= 1");
    if (noise_sd < 0.0) throw Error("noise_sd must be >= 0");
    Technology tech(spec);
    tech.id = id.empty() ? "tech-s" + std::to_string(seed) : std::move(id);
    tech.state_dim = state_dim;
    tech.noise_sd = noise_sd;

    Rng rng(substream_seed(seed, "technology"));
    const double scale = 1.0 / std::sqrt(static_cast<double>(state_dim));

    tech.init_state.resize(state_dim);
    fill_uniform(tech.init_state, rng, scale);
    tech.step_mat.resize(static_cast<std::size_t>(spec.size()));
    tech.step_bias.resize(static_cast<std::size_t>(spec.size()));
    for (int k = 0; k < spec.size(); ++k) {
        auto& A = tech.step_mat[static_cast<std::size_t>(k)];
        auto& b = tech.step_bias[static_cast<std::size_t>(k)];
        A.resize(state_dim, state_dim);
        b.resize(state_dim);
        fill_uniform(A, rng, scale);
        fill_uniform(b, rng, scale);
    }
    for (Readout* r : {&tech.delay, &tech.area}) {
        r->w.resize(state_dim);
        fill_uniform(r->w, rng, scale);
        r->c = rng.uniform(-1.0, 1.0) * scale;
        r->gain = 1.0;
    }
    return tech;
}

Technology derive_technology(const Technology& parent, double drift, double scale,
                             std::uint64_t seed, std::string id) {
    if (drift < 0.0 || drift > 1.0) throw Error("drift must be in [0, 1]");
    if (scale <= 0.0) throw Error("scale must be > 0");
    Technology child = parent;
    child.id = id.empty()
                   ? parent.id + "~d" + format_double(drift) + "~x" + format_double(scale) +
                         "~s" + std::to_string(seed)
                   : std::move(id);

    Rng rng(substream_seed(seed, "derive"));
    perturb(child.init_state, drift, rng);
    for (auto& A : child.step_mat) perturb(A, drift, rng);
    for (auto& b : child.step_bias) perturb(b, drift, rng);
    for (Readout* r : {&child.delay, &child.area}) {
        perturb(r->w, drift, rng);
        r->c = perturb(r->c, drift, rng);
        // The readout gain carries the technology shrink: QoR scales exactly
        // linearly, which a scaled pre-activation could not guarantee.
        r->gain *= scale;
    }
    return child;
}

Qor simulate_qor(const Flow& flow, const Technology& tech, Rng* noise_rng) {
    if (!flow_valid(flow, tech.spec))
        throw SpecMismatch("flow invalid under the technology's spec");
    Eigen::VectorXd s = tech.init_state;
    for (int step : flow.steps) {
        const auto k = static_cast<std::size_t>(step);
        s = (tech.step_mat[k] * s + tech.step_bias[k]).array().tanh();
    }
    Qor q;
    q.delay_ps = tech.delay.gain * softplus(tech.delay.w.dot(s) + tech.delay.c) * 100.0;
    q.area_um2 = tech.area.gain * softplus(tech.area.w.dot(s) + tech.area.c) * 100.0;
    q.delay_ps = apply_noise(q.delay_ps, tech.noise_sd, noise_rng);
    q.area_um2 = apply_noise(q.area_um2, tech.noise_sd, noise_rng);
    return q;
}

QorTable generate_qor_table(const FlowSpec& spec, const Technology& tech,
                            std::uint64_t count, std::uint64_t seed, int threads) {
    if (!(spec == tech.spec))
        throw SpecMismatch("dataset spec differs from the technology's spec");
    Rng sample_rng(substream_seed(seed, "flows"));
    std::vector<Flow> flows = sample_unique_flows(spec, count, sample_rng);

    std::vector<Qor> qors(flows.size());
    parallel_for(flows.size(), threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            // per-row noise stream: serial and parallel runs agree bit-for-bit
            Rng noise(substream_seed(seed, "noise", i));
            qors[i] = simulate_qor(flows[i], tech, &noise);
        }
    });

    QorTable table{spec, {}, 0};
    table.rows.reserve(flows.size());
    for (std::size_t i = 0; i < flows.size(); ++i) {
        if (!std::isfinite(qors[i].delay_ps) || !std::isfinite(qors[i].area_um2)) {
            ++table.skipped;
            continue;
        }
        table.rows.push_back(QorRow{std::move(flows[i]), qors[i].delay_ps, qors[i].area_um2});
    }
    return table;
}

Dataset generate_dataset(const FlowSpec& spec, const Technology& tech, std::uint64_t count,
                         std::uint64_t seed, Target target, int threads) {
    return select_target(generate_qor_table(spec, tech, count, seed, threads), target);
}

// --------------------------------------------------------------------------
// .flt serialization
// --------------------------------------------------------------------------

namespace {

constexpr const char* kTechMagic = "flowcast-tech";
constexpr const char* kTechVersion = "v1";

} // namespace

void save_technology(const Technology& tech, const std::filesystem::path& path,
                     const std::string& provenance) {
    std::string out;
    out += std::string(kTechMagic) + " " + kTechVersion + "\n";
    out += "provenance " + provenance + "\n";
    out += "id " + tech.id + "\n";
    out += "names";
    for (const auto& n : tech.spec.names()) out += " " + n;
    out += "\nreps";
    for (int m : tech.spec.reps()) out += " " + std::to_string(m);
    out += "\nstate_dim " + std::to_string(tech.state_dim) + "\n";
    out += "noise_sd " + hex_double(tech.noise_sd) + "\n";
    write_tensor(out, "s0", tech.init_state);
    for (int k = 0; k < tech.spec.size(); ++k) {
        write_tensor(out, "A." + tech.spec.name(k), tech.step_mat[static_cast<std::size_t>(k)]);
        write_tensor(out, "b." + tech.spec.name(k), tech.step_bias[static_cast<std::size_t>(k)]);
    }
    const std::pair<std::string, const Readout*> readouts[] = {{"delay", &tech.delay},
                                                               {"area", &tech.area}};
    for (const auto& [label, r] : readouts) {
        write_tensor(out, "readout." + label + ".w", r->w);
        out += "scalar readout." + label + ".c " + hex_double(r->c) + "\n";
        out += "scalar readout." + label + ".gain " + hex_double(r->gain) + "\n";
    }
    out += "end\n";
    atomic_write_file(path, out);
}

Technology load_technology(const std::filesystem::path& path) {
    LineReader reader(read_file(path));
    {
        const std::string head = reader.next("header");
        auto fields = split(head, ' ');
        if (fields.empty() || fields[0] != kTechMagic)
            throw CorruptFile(path.string() + ": not a flowcast technology file");
        if (fields.size() != 2 || fields[1] != kTechVersion)
            throw VersionMismatch(path.string() + ": unsupported version '" + head + "'");
    }
    expect_key(reader, "provenance");
    const std::string id = expect_key(reader, "id");
    auto names = split(expect_key(reader, "names"), ' ');
    std::vector<int> reps;
    for (const auto& tok : split(expect_key(reader, "reps"), ' '))
        reps.push_back(static_cast<int>(parse_manifest_long(tok)));
    FlowSpec spec(names, reps);

    Technology tech(spec);
    tech.id = id;
    tech.state_dim = static_cast<int>(parse_manifest_long(expect_key(reader, "state_dim")));
    tech.noise_sd = parse_hex_double(expect_key(reader, "noise_sd"));
    tech.init_state = read_tensor_vector(reader, "s0");
    tech.step_mat.resize(static_cast<std::size_t>(spec.size()));
    tech.step_bias.resize(static_cast<std::size_t>(spec.size()));
    for (int k = 0; k < spec.size(); ++k) {
        tech.step_mat[static_cast<std::size_t>(k)] = read_tensor(reader, "A." + spec.name(k));
        tech.step_bias[static_cast<std::size_t>(k)] =
            read_tensor_vector(reader, "b." + spec.name(k));
    }
    const std::pair<std::string, Readout*> readouts[] = {{"delay", &tech.delay},
                                                         {"area", &tech.area}};
    for (const auto& [label, r] : readouts) {
        r->w = read_tensor_vector(reader, "readout." + label + ".w");
        r->c = read_scalar(reader, "readout." + label + ".c");
        r->gain = read_scalar(reader, "readout." + label + ".gain");
    }
    if (reader.next("end marker") != "end")
        throw CorruptFile(path.string() + ": missing end marker");

    if (tech.init_state.size() != tech.state_dim)
        throw ShapeMismatch(path.string() + ": s0 size differs from state_dim");
    for (const auto& A : tech.step_mat)
        if (A.rows() != tech.state_dim || A.cols() != tech.state_dim)
            throw ShapeMismatch(path.string() + ": step matrix shape mismatch");
    return tech;
}

} // namespace flowcast
