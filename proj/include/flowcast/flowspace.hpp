// flowspace.hpp -- flow alphabets, exact search-space counting, enumeration
// and uniform sampling of multiset permutations

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "flowcast/errors.hpp"
#include "flowcast/rng.hpp"

namespace flowcast {

using BigInt = boost::multiprecision::cpp_int;

/// Alphabet of transformations plus per-transformation repetition counts.
/// Name order is canonical: row i of every encoded matrix is names[i].
class FlowSpec {
public:
    /// Throws Error unless: n >= 1, names unique and free of delimiter
    /// characters (whitespace, ';', ',', '#'), all reps >= 0, sum(reps) >= 1.
    FlowSpec(std::vector<std::string> names, std::vector<int> reps);

    int size() const { return static_cast<int>(names_.size()); } // n
    int length() const { return length_; }                       // L
    const std::vector<std::string>& names() const { return names_; }
    const std::vector<int>& reps() const { return reps_; }
    const std::string& name(int i) const { return names_[static_cast<std::size_t>(i)]; }
    int rep(int i) const { return reps_[static_cast<std::size_t>(i)]; }

    /// Index of a transformation name, or -1 when unknown.
    int index_of(std::string_view name) const;

    bool operator==(const FlowSpec& o) const {
        return names_ == o.names_ && reps_ == o.reps_;
    }

    /// The six-transformation, four-repetition alphabet used as the default
    /// experiment profile: b, rw, rwz, rs, rf, rfz, each x4 (L = 24).
    static FlowSpec default_profile();

private:
    std::vector<std::string> names_;
    std::vector<int> reps_;
    int length_ = 0;
};

/// A pass sequence: steps[t] is the index into spec.names applied at time
/// frame t. A valid flow contains index i exactly spec.rep(i) times.
struct Flow {
    std::vector<int> steps;

    bool operator==(const Flow& o) const { return steps == o.steps; }
};

bool flow_valid(const Flow& flow, const FlowSpec& spec);

/// Exact number of distinct flows: (sum m_i)! / prod(m_i!).
BigInt space_size(const FlowSpec& spec);

/// All distinct flows in lexicographic order of step indices.
/// Throws CapExceeded when space_size(spec) > cap.
std::vector<Flow> enumerate_flows(const FlowSpec& spec, std::uint64_t cap);

/// Uniform draw over all multiset permutations: unbiased shuffle of the
/// materialized multiset.
Flow sample_flow(const FlowSpec& spec, Rng& rng);

/// `count` distinct flows (duplicates rejected via a canonical-key set).
/// Throws CountExceedsSpace when count > space_size(spec).
std::vector<Flow> sample_unique_flows(const FlowSpec& spec, std::uint64_t count, Rng& rng);

/// Semicolon-joined transformation names, e.g. "b;rw;rwz;b;rwz;b".
std::string flow_to_string(const Flow& flow, const FlowSpec& spec);

/// Parses the semicolon format. Throws UnknownTransformation for names not
/// in the alphabet and RepetitionMismatch when counts disagree with reps.
Flow string_to_flow(std::string_view text, const FlowSpec& spec);

/// Flows file: one flow string per line; blank lines and '#' comments ignored.
std::vector<Flow> read_flows_file(const std::filesystem::path& path, const FlowSpec& spec);
void write_flows_file(const std::filesystem::path& path, const std::vector<Flow>& flows,
                      const FlowSpec& spec, const std::string& provenance = "");

} // namespace flowcast
