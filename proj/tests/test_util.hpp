// test_util.hpp -- helpers shared by the test suites

#pragma once

#include <cstdlib>
#include <filesystem>
#include <string>

#include "flowcast/flowspace.hpp"

namespace flowcast::test {

/// Independent counting oracle: full factorial ratio (sum m_i)! / prod(m_i!),
/// evaluated with plain big-integer factorials and exact division. Kept apart
/// from the library's multiplicative-binomial route on purpose.
inline BigInt factorial(int n) {
    BigInt f = 1;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

inline BigInt space_size_oracle(const std::vector<int>& reps) {
    int total = 0;
    for (int m : reps) total += m;
    BigInt result = factorial(total);
    for (int m : reps) {
        const BigInt div = factorial(m);
        // exact division check: the ratio must stay an integer
        if (result % div != 0) throw std::logic_error("oracle division not exact");
        result /= div;
    }
    return result;
}

/// FlowSpec with auto-generated names t0, t1, ... for a repetition vector.
inline FlowSpec spec_of(const std::vector<int>& reps) {
    std::vector<std::string> names;
    names.reserve(reps.size());
    for (std::size_t i = 0; i < reps.size(); ++i) names.push_back("t" + std::to_string(i));
    return FlowSpec(names, reps);
}

/// Unique scratch directory under the system temp dir, removed lazily by the OS.
inline std::filesystem::path scratch_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               ("flowcast_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace flowcast::test
