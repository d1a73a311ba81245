#include "flowcast/tensor_io.hpp"

#include <charconv>

#include "flowcast/io_util.hpp"

namespace flowcast {

void write_tensor(std::string& out, const std::string& name, const Eigen::MatrixXd& m) {
    out += "tensor " + name + " " + std::to_string(m.rows()) + " " +
           std::to_string(m.cols()) + "\n";
    int col = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            out += hex_double(m(i, j));
            if (++col == 8) {
                out += '\n';
                col = 0;
            } else {
                out += ' ';
            }
        }
    }
    if (col != 0) out.back() = '\n'; // replace trailing space
}

std::string LineReader::next(const std::string& context) {
    std::string line;
    while (std::getline(stream_, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) return line;
    }
    throw CorruptFile("unexpected end of file while reading " + context);
}

long parse_manifest_long(const std::string& s) {
    long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw CorruptFile("bad integer '" + s + "'");
    return v;
}

Eigen::MatrixXd read_tensor(LineReader& reader, const std::string& expect_name) {
    const std::string head = reader.next("tensor header");
    auto fields = split(head, ' ');
    if (fields.size() != 4 || fields[0] != "tensor" || fields[1] != expect_name)
        throw CorruptFile("expected tensor '" + expect_name + "', got '" + head + "'");
    const long rows = parse_manifest_long(fields[2]);
    const long cols = parse_manifest_long(fields[3]);
    if (rows < 0 || cols < 0) throw CorruptFile("bad tensor shape in '" + head + "'");
    Eigen::MatrixXd m(rows, cols);
    std::size_t filled = 0;
    const std::size_t total = static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
    while (filled < total) {
        for (const std::string& tok : split(reader.next("tensor values"), ' ')) {
            if (tok.empty()) continue;
            if (filled >= total) throw CorruptFile("extra values in tensor " + expect_name);
            m(static_cast<Eigen::Index>(filled / static_cast<std::size_t>(cols)),
              static_cast<Eigen::Index>(filled % static_cast<std::size_t>(cols))) =
                parse_hex_double(tok);
            ++filled;
        }
    }
    return m;
}

Eigen::VectorXd read_tensor_vector(LineReader& reader, const std::string& expect_name) {
    Eigen::MatrixXd m = read_tensor(reader, expect_name);
    if (m.cols() != 1)
        throw ShapeMismatch("tensor '" + expect_name + "' is not a column vector");
    return m.col(0);
}

double read_scalar(LineReader& reader, const std::string& expect_name) {
    const std::string line = reader.next("scalar " + expect_name);
    auto fields = split(line, ' ');
    if (fields.size() != 3 || fields[0] != "scalar" || fields[1] != expect_name)
        throw CorruptFile("expected scalar '" + expect_name + "', got '" + line + "'");
    return parse_hex_double(fields[2]);
}

std::string expect_key(LineReader& reader, const std::string& key) {
    const std::string line = reader.next("field " + key);
    if (line == key) return "";
    if (line.rfind(key + " ", 0) != 0)
        throw CorruptFile("expected '" + key + "', got '" + line + "'");
    return line.substr(key.size() + 1);
}

} // namespace flowcast
