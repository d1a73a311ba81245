#include "flowcast/model_io.hpp"

#include "flowcast/io_util.hpp"
#include "flowcast/tensor_io.hpp"

namespace flowcast {

namespace {

constexpr const char* kModelMagic = "flowcast-model";
constexpr const char* kModelVersion = "v1";

} // namespace

void save_model(const ModelFile& file, const std::filesystem::path& path) {
    // params() is non-const by design (exposes mutable slots to the
    // optimizer); serialization only reads through it.
    Model& model = const_cast<Model&>(file.model);
    const ModelConfig& c = model.config;

    std::string out;
    out += std::string(kModelMagic) + " " + kModelVersion + "\n";
    out += "provenance " + file.provenance + "\n";
    out += "names";
    for (const auto& n : file.spec.names()) out += " " + n;
    out += "\nreps";
    for (int m : file.spec.reps()) out += " " + std::to_string(m);
    out += "\n";
    out += "target " + file.target + " " + file.units + "\n";
    out += "norm " + hex_double(file.stats.mean) + " " + hex_double(file.stats.range) + "\n";
    out += "seed " + std::to_string(file.seed) + "\n";
    out += "config " + std::to_string(c.input_dim) + " " + std::to_string(c.seq_len) + " " +
           std::to_string(c.lstm_units) + " " + std::to_string(c.dense_units) + " " +
           std::to_string(c.out_dim) + " " + hex_double(c.dropout_rate) + " " +
           hex_double(c.bn_epsilon) + " " + hex_double(c.bn_momentum) + " " +
           (c.orthogonal_recurrent ? "1" : "0") + "\n";

    std::string current_layer;
    for (const ParamRef& p : model.params()) {
        if (p.layer != current_layer) {
            current_layer = p.layer;
            // first tensor of a layer is never a state tensor, so p.trainable
            // here equals the layer's flag
            out += "layer " + p.layer + " trainable " + (p.trainable ? "1" : "0") + "\n";
        }
        write_tensor(out, p.tensor, *p.value);
    }
    out += "end\n";
    atomic_write_file(path, out);
}

ModelFile load_model(const std::filesystem::path& path) {
    LineReader reader(read_file(path));
    {
        const std::string head = reader.next("header");
        auto fields = split(head, ' ');
        if (fields.empty() || fields[0] != kModelMagic)
            throw CorruptFile(path.string() + ": not a flowcast model file");
        if (fields.size() != 2 || fields[1] != kModelVersion)
            throw VersionMismatch(path.string() + ": unsupported version '" + head + "'");
    }
    const std::string provenance = expect_key(reader, "provenance");
    auto names = split(expect_key(reader, "names"), ' ');
    std::vector<int> reps;
    for (const auto& tok : split(expect_key(reader, "reps"), ' '))
        reps.push_back(static_cast<int>(parse_manifest_long(tok)));
    FlowSpec spec(names, reps);

    const auto target_fields = split(expect_key(reader, "target"), ' ');
    if (target_fields.size() != 2) throw CorruptFile(path.string() + ": bad target line");
    const auto norm_fields = split(expect_key(reader, "norm"), ' ');
    if (norm_fields.size() != 2) throw CorruptFile(path.string() + ": bad norm line");
    const std::uint64_t seed =
        static_cast<std::uint64_t>(parse_manifest_long(expect_key(reader, "seed")));

    const auto cfg = split(expect_key(reader, "config"), ' ');
    if (cfg.size() != 9) throw CorruptFile(path.string() + ": bad config line");
    ModelConfig config;
    config.input_dim = static_cast<int>(parse_manifest_long(cfg[0]));
    config.seq_len = static_cast<int>(parse_manifest_long(cfg[1]));
    config.lstm_units = static_cast<int>(parse_manifest_long(cfg[2]));
    config.dense_units = static_cast<int>(parse_manifest_long(cfg[3]));
    config.out_dim = static_cast<int>(parse_manifest_long(cfg[4]));
    config.dropout_rate = parse_hex_double(cfg[5]);
    config.bn_epsilon = parse_hex_double(cfg[6]);
    config.bn_momentum = parse_hex_double(cfg[7]);
    config.orthogonal_recurrent = cfg[8] == "1";

    ModelFile file(build_model(config, seed), spec);
    file.provenance = provenance;
    file.target = target_fields[0];
    file.units = target_fields[1];
    file.stats.mean = parse_hex_double(norm_fields[0]);
    file.stats.range = parse_hex_double(norm_fields[1]);
    file.seed = seed;

    std::string current_layer;
    bool current_trainable = true;
    for (ParamRef& p : file.model.params()) {
        if (p.layer != current_layer) {
            const auto layer_fields = split(expect_key(reader, "layer"), ' ');
            if (layer_fields.size() != 3 || layer_fields[0] != p.layer ||
                layer_fields[1] != "trainable")
                throw CorruptFile(path.string() + ": expected layer '" + p.layer + "'");
            current_layer = p.layer;
            current_trainable = layer_fields[2] == "1";
            // propagate the flag onto the owning layer
            Model& m = file.model;
            if (p.layer == "lstm1") m.lstm1.trainable = current_trainable;
            else if (p.layer == "bn1") m.bn1.trainable = current_trainable;
            else if (p.layer == "lstm2") m.lstm2.trainable = current_trainable;
            else if (p.layer == "bn2") m.bn2.trainable = current_trainable;
            else if (p.layer == "dense1") m.dense1.trainable = current_trainable;
            else if (p.layer == "bn3") m.bn3.trainable = current_trainable;
            else if (p.layer == "dense2") m.dense2.trainable = current_trainable;
            else if (p.layer == "bn4") m.bn4.trainable = current_trainable;
            else if (p.layer == "dense3") m.dense3.trainable = current_trainable;
            else throw CorruptFile(path.string() + ": unknown layer '" + p.layer + "'");
        }
        Eigen::MatrixXd t = read_tensor(reader, p.tensor);
        if (t.rows() != p.value->rows() || t.cols() != p.value->cols())
            throw ShapeMismatch(path.string() + ": tensor " + p.layer + "." + p.tensor +
                                " has shape " + std::to_string(t.rows()) + "x" +
                                std::to_string(t.cols()) + ", expected " +
                                std::to_string(p.value->rows()) + "x" +
                                std::to_string(p.value->cols()));
        *p.value = t;
    }
    if (reader.next("end marker") != "end")
        throw CorruptFile(path.string() + ": missing end marker");
    return file;
}

} // namespace flowcast
