// tensor_io.hpp -- line-oriented text manifests with hex-encoded tensors,
// shared by the .flt and .flm file formats

#pragma once

#include <sstream>
#include <string>

#include <Eigen/Core>

#include "flowcast/errors.hpp"

namespace flowcast {

/// Appends "tensor <name> <rows> <cols>" followed by the values as
/// hex-encoded IEEE-754 doubles, row-major, 8 per line.
void write_tensor(std::string& out, const std::string& name, const Eigen::MatrixXd& m);

class LineReader {
public:
    explicit LineReader(std::string content) : content_(std::move(content)), stream_(content_) {}

    /// Next non-empty line; throws CorruptFile at EOF.
    std::string next(const std::string& context);

private:
    std::string content_;
    std::istringstream stream_;
};

long parse_manifest_long(const std::string& s);

Eigen::MatrixXd read_tensor(LineReader& reader, const std::string& expect_name);

/// read_tensor constrained to a single column.
Eigen::VectorXd read_tensor_vector(LineReader& reader, const std::string& expect_name);

/// Line "scalar <name> <hex double>".
double read_scalar(LineReader& reader, const std::string& expect_name);

/// Line "<key> <value...>"; returns the value part ("" for a bare key).
std::string expect_key(LineReader& reader, const std::string& key);

} // namespace flowcast
