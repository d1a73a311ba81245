// model_io.hpp -- lossless .flm model serialization (text manifest + weight
// sections as hex-encoded IEEE-754 doubles)

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "flowcast/dataset.hpp"
#include "flowcast/flowspace.hpp"
#include "flowcast/nn.hpp"

namespace flowcast {

struct ModelFile {
    Model model;
    FlowSpec spec;
    std::string target; // "delay" | "area"
    std::string units;
    NormStats stats;
    std::uint64_t seed = 0;
    std::string provenance;

    ModelFile(Model m, FlowSpec s) : model(std::move(m)), spec(std::move(s)) {}
};

/// Bit-exact roundtrip: load(save(m)) reproduces every parameter, trainable
/// flag and BN moving stat. Files are written atomically.
void save_model(const ModelFile& file, const std::filesystem::path& path);

/// Throws VersionMismatch on a foreign format version, CorruptFile on
/// truncated or malformed content, ShapeMismatch when a weight section
/// disagrees with the manifest shapes.
ModelFile load_model(const std::filesystem::path& path);

} // namespace flowcast
