#include "flowcast/flowspace.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "flowcast/io_util.hpp"

namespace flowcast {

namespace {

bool valid_name(const std::string& name) {
    if (name.empty()) return false;
    for (char c : name) {
        if (std::isspace(static_cast<unsigned char>(c))) return false;
        if (c == ';' || c == ',' || c == '#') return false;
    }
    return true;
}

// Canonical byte key of a step sequence, for duplicate rejection.
std::string flow_key(const Flow& flow) {
    std::string key;
    key.reserve(flow.steps.size() * 2);
    for (int s : flow.steps) {
        key.push_back(static_cast<char>(s & 0xff));
        key.push_back(static_cast<char>((s >> 8) & 0xff));
    }
    return key;
}

} // namespace

FlowSpec::FlowSpec(std::vector<std::string> names, std::vector<int> reps)
    : names_(std::move(names)), reps_(std::move(reps)) {
    if (names_.empty()) throw Error("FlowSpec: empty alphabet");
    if (names_.size() != reps_.size())
        throw Error("FlowSpec: names and reps length differ");
    std::unordered_set<std::string> seen;
    for (const auto& n : names_) {
        if (!valid_name(n))
            throw Error("FlowSpec: bad transformation name '" + n + "'");
        if (!seen.insert(n).second)
            throw Error("FlowSpec: duplicate transformation name '" + n + "'");
    }
    length_ = 0;
    for (int m : reps_) {
        if (m < 0) throw Error("FlowSpec: negative repetition count");
        length_ += m;
    }
    if (length_ < 1) throw Error("FlowSpec: total flow length must be >= 1");
}

int FlowSpec::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return static_cast<int>(i);
    return -1;
}

FlowSpec FlowSpec::default_profile() {
    return FlowSpec({"b", "rw", "rwz", "rs", "rf", "rfz"}, {4, 4, 4, 4, 4, 4});
}

bool flow_valid(const Flow& flow, const FlowSpec& spec) {
    if (static_cast<int>(flow.steps.size()) != spec.length()) return false;
    std::vector<int> counts(static_cast<std::size_t>(spec.size()), 0);
    for (int s : flow.steps) {
        if (s < 0 || s >= spec.size()) return false;
        ++counts[static_cast<std::size_t>(s)];
    }
    for (int i = 0; i < spec.size(); ++i)
        if (counts[static_cast<std::size_t>(i)] != spec.rep(i)) return false;
    return true;
}

BigInt space_size(const FlowSpec& spec) {
    // Product of binomials: prod_i C(m_1 + ... + m_i, m_i). Every partial
    // result is an integer, no factorial overflow at intermediate steps.
    BigInt total = 1;
    long long cum = 0;
    for (int i = 0; i < spec.size(); ++i) {
        for (int j = 1; j <= spec.rep(i); ++j) {
            ++cum;
            total = total * cum / j; // exact: total*cum is divisible by j here
        }
    }
    return total;
}

std::vector<Flow> enumerate_flows(const FlowSpec& spec, std::uint64_t cap) {
    const BigInt size = space_size(spec);
    if (size > BigInt(cap))
        throw CapExceeded("space size " + size.str() + " exceeds cap " +
                          std::to_string(cap));
    std::vector<int> steps;
    steps.reserve(static_cast<std::size_t>(spec.length()));
    for (int i = 0; i < spec.size(); ++i)
        steps.insert(steps.end(), static_cast<std::size_t>(spec.rep(i)), i);

    std::vector<Flow> out;
    out.reserve(static_cast<std::size_t>(size));
    do {
        out.push_back(Flow{steps});
    } while (std::next_permutation(steps.begin(), steps.end()));
    return out;
}

Flow sample_flow(const FlowSpec& spec, Rng& rng) {
    Flow flow;
    flow.steps.reserve(static_cast<std::size_t>(spec.length()));
    for (int i = 0; i < spec.size(); ++i)
        flow.steps.insert(flow.steps.end(), static_cast<std::size_t>(spec.rep(i)), i);
    rng.shuffle(flow.steps);
    return flow;
}

std::vector<Flow> sample_unique_flows(const FlowSpec& spec, std::uint64_t count, Rng& rng) {
    if (BigInt(count) > space_size(spec))
        throw CountExceedsSpace("requested " + std::to_string(count) +
                                " unique flows from a space of " +
                                space_size(spec).str());
    std::vector<Flow> out;
    out.reserve(count);
    std::unordered_set<std::string> seen;
    seen.reserve(count * 2);
    while (out.size() < count) {
        Flow f = sample_flow(spec, rng);
        if (seen.insert(flow_key(f)).second) out.push_back(std::move(f));
    }
    return out;
}

std::string flow_to_string(const Flow& flow, const FlowSpec& spec) {
    std::string out;
    for (std::size_t t = 0; t < flow.steps.size(); ++t) {
        if (t > 0) out.push_back(';');
        const int s = flow.steps[t];
        if (s < 0 || s >= spec.size())
            throw UnknownTransformation("step index " + std::to_string(s) +
                                        " outside alphabet");
        out += spec.name(s);
    }
    return out;
}

Flow string_to_flow(std::string_view text, const FlowSpec& spec) {
    Flow flow;
    std::vector<int> counts(static_cast<std::size_t>(spec.size()), 0);
    for (const std::string& token : split(text, ';')) {
        const int idx = spec.index_of(token);
        if (idx < 0)
            throw UnknownTransformation("unknown transformation '" + token + "'");
        ++counts[static_cast<std::size_t>(idx)];
        flow.steps.push_back(idx);
    }
    for (int i = 0; i < spec.size(); ++i) {
        if (counts[static_cast<std::size_t>(i)] != spec.rep(i))
            throw RepetitionMismatch(
                "transformation '" + spec.name(i) + "' appears " +
                std::to_string(counts[static_cast<std::size_t>(i)]) + " times, expected " +
                std::to_string(spec.rep(i)));
    }
    return flow;
}

std::vector<Flow> read_flows_file(const std::filesystem::path& path, const FlowSpec& spec) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    std::vector<Flow> flows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        try {
            flows.push_back(string_to_flow(line, spec));
        } catch (const Error& e) {
            throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return flows;
}

void write_flows_file(const std::filesystem::path& path, const std::vector<Flow>& flows,
                      const FlowSpec& spec, const std::string& provenance) {
    std::string content;
    if (!provenance.empty()) content += "# " + provenance + "\n";
    for (const Flow& f : flows) content += flow_to_string(f, spec) + "\n";
    atomic_write_file(path, content);
}

} // namespace flowcast
