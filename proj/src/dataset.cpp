#include "flowcast/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "flowcast/io_util.hpp"

namespace flowcast {

std::string target_name(Target t) { return t == Target::delay ? "delay" : "area"; }
std::string target_units(Target t) { return t == Target::delay ? "ps" : "um2"; }

Target parse_target(std::string_view s) {
    if (s == "delay") return Target::delay;
    if (s == "area") return Target::area;
    throw Error("unknown target '" + std::string(s) + "' (expected delay|area)");
}

Dataset select_target(const QorTable& table, Target target) {
    Dataset d{table.spec, {}, {}, target_name(target), target_units(target)};
    d.flows.reserve(table.rows.size());
    d.labels.reserve(table.rows.size());
    for (const QorRow& r : table.rows) {
        d.flows.push_back(r.flow);
        d.labels.push_back(target == Target::delay ? r.delay_ps : r.area_um2);
    }
    return d;
}

std::pair<std::vector<double>, NormStats> normalize_labels(const std::vector<double>& labels) {
    if (labels.empty()) throw EmptyInput("no labels to normalize");
    const auto [lo, hi] = std::minmax_element(labels.begin(), labels.end());
    NormStats stats;
    stats.range = *hi - *lo;
    if (stats.range <= 0.0)
        throw DegenerateLabels("all labels equal; range is 0");
    stats.mean = std::accumulate(labels.begin(), labels.end(), 0.0) /
                 static_cast<double>(labels.size());
    std::vector<double> out(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) out[i] = normalize(labels[i], stats);
    return {std::move(out), stats};
}

std::pair<Dataset, Dataset> split(const Dataset& data, double val_fraction, std::uint64_t seed) {
    if (val_fraction <= 0.0 || val_fraction >= 1.0)
        throw Error("val_fraction must be in (0, 1)");
    const std::size_t n = data.size();
    const auto val_n = static_cast<std::size_t>(
        std::llround(val_fraction * static_cast<double>(n)));
    if (val_n == 0 || val_n >= n)
        throw EmptySplit("split of " + std::to_string(n) + " rows at fraction " +
                         format_double(val_fraction) + " leaves an empty side");
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    rng.shuffle(order);

    auto take = [&](std::size_t begin, std::size_t end) {
        Dataset part{data.spec, {}, {}, data.target, data.units};
        part.flows.reserve(end - begin);
        part.labels.reserve(end - begin);
        for (std::size_t i = begin; i < end; ++i) {
            const auto idx = static_cast<std::size_t>(order[i]);
            part.flows.push_back(data.flows[idx]);
            part.labels.push_back(data.labels[idx]);
        }
        return part;
    };
    return {take(0, n - val_n), take(n - val_n, n)};
}

std::vector<std::vector<int>> batches(std::size_t n_rows, int batch_size, bool shuffle,
                                      std::uint64_t seed, int epoch) {
    if (batch_size < 1) throw Error("batch_size must be >= 1");
    std::vector<int> order(n_rows);
    std::iota(order.begin(), order.end(), 0);
    if (shuffle) {
        Rng rng(substream_seed(seed, "epoch", static_cast<std::uint64_t>(epoch)));
        rng.shuffle(order);
    }
    std::vector<std::vector<int>> out;
    for (std::size_t start = 0; start < n_rows; start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(n_rows, start + static_cast<std::size_t>(batch_size));
        out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
    }
    return out;
}

QorTable read_csv(const std::filesystem::path& path, const FlowSpec& spec) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path.string());
    QorTable table{spec, {}, 0};
    std::string line;
    std::size_t lineno = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            if (line != "flow,delay_ps,area_um2")
                throw MissingHeader(path.string() +
                                    ": expected header 'flow,delay_ps,area_um2', got '" +
                                    line + "'");
            header_seen = true;
            continue;
        }
        const auto fields = split(line, ',');
        if (fields.size() != 3)
            throw Error(path.string() + ":" + std::to_string(lineno) +
                        ": expected 3 columns, got " + std::to_string(fields.size()));
        Flow flow;
        try {
            flow = string_to_flow(fields[0], spec);
        } catch (const UnknownTransformation& e) {
            throw UnknownTransformation(path.string() + ":" + std::to_string(lineno) + ": " +
                                        e.what());
        } catch (const RepetitionMismatch& e) {
            throw RepetitionMismatch(path.string() + ":" + std::to_string(lineno) + ": " +
                                     e.what());
        }
        double delay = 0.0, area = 0.0;
        if (!parse_double(fields[1], delay) || !parse_double(fields[2], area) ||
            !std::isfinite(delay) || !std::isfinite(area)) {
            ++table.skipped; // NA or unparsable QoR: skip the row, keep going
            continue;
        }
        table.rows.push_back(QorRow{std::move(flow), delay, area});
    }
    if (!header_seen) throw MissingHeader(path.string() + ": no header row");
    return table;
}

void write_csv(const QorTable& table, const std::filesystem::path& path,
               const std::string& provenance) {
    std::string content;
    if (!provenance.empty()) content += "# " + provenance + "\n";
    content += "flow,delay_ps,area_um2\n";
    for (const QorRow& r : table.rows) {
        content += flow_to_string(r.flow, table.spec);
        content += ',';
        content += format_double(r.delay_ps);
        content += ',';
        content += format_double(r.area_um2);
        content += '\n';
    }
    atomic_write_file(path, content);
}

} // namespace flowcast
