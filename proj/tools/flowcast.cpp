// flowcast -- CLI for the synthesis-flow QoR prediction pipeline:
// search-space arithmetic, flow sampling, the synthetic technology oracle,
// dataset generation, training, transfer studies and evaluation.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowcast/encoding.hpp"
#include "flowcast/eval.hpp"
#include "flowcast/io_util.hpp"
#include "flowcast/model_io.hpp"
#include "flowcast/oracle.hpp"
#include "flowcast/train.hpp"
#include "flowcast/transfer.hpp"

namespace fc = flowcast;

namespace {

// ---------------------------------------------------------------------------
// shared option bundles
// ---------------------------------------------------------------------------

struct SpecOpts {
    std::string spec_file;
    std::string names = "b,rw,rwz,rs,rf,rfz";
    std::string reps = "4,4,4,4,4,4";
    bool names_given = false;

    void attach(CLI::App* cmd) {
        cmd->add_option("--spec", spec_file,
                        "spec file: one '<name> <repetitions>' pair per line");
        cmd->add_option("--names", names, "comma-separated transformation names")
            ->each([this](const std::string&) { names_given = true; });
        cmd->add_option("--reps", reps, "comma-separated repetition counts");
    }

    fc::FlowSpec resolve() const {
        if (!spec_file.empty()) {
            std::ifstream in(spec_file);
            if (!in) throw fc::IoError("cannot open spec file: " + spec_file);
            std::vector<std::string> names_v;
            std::vector<int> reps_v;
            std::string line;
            while (std::getline(in, line)) {
                if (!line.empty() && line.back() == '\r') line.pop_back();
                if (line.empty() || line[0] == '#') continue;
                const auto fields = fc::split(line, ' ');
                if (fields.size() != 2)
                    throw fc::Error("spec file line '" + line + "': expected '<name> <reps>'");
                names_v.push_back(fields[0]);
                reps_v.push_back(std::stoi(fields[1]));
            }
            return fc::FlowSpec(names_v, reps_v);
        }
        std::vector<int> reps_v;
        for (const auto& tok : fc::split(reps, ',')) reps_v.push_back(std::stoi(tok));
        std::vector<std::string> names_v = fc::split(names, ',');
        if (!names_given && names_v.size() != reps_v.size()) {
            // --reps alone with a non-default length: synthesize names t0..tn-1
            names_v.clear();
            for (std::size_t i = 0; i < reps_v.size(); ++i)
                names_v.push_back("t" + std::to_string(i));
        }
        return fc::FlowSpec(names_v, reps_v);
    }
};

struct CommonOpts {
    bool no_provenance = false;
    int threads = 1;

    void attach(CLI::App* cmd) {
        cmd->add_flag("--no-provenance", no_provenance,
                      "omit provenance headers for byte-exact output comparison");
        cmd->add_option("--threads", threads, "internal parallelism cap")
            ->envname("FLOWCAST_THREADS")
            ->check(CLI::Range(1, 256));
    }
};

/// Resolved-config echo placed in every output's provenance header.
class Provenance {
public:
    Provenance(std::string command, bool enabled)
        : text_("flowcast " + std::move(command)), enabled_(enabled) {}

    Provenance& kv(const std::string& key, const std::string& value) {
        text_ += " " + key + "=" + value;
        return *this;
    }
    Provenance& kv(const std::string& key, const char* value) {
        return kv(key, std::string(value));
    }
    Provenance& kv(const std::string& key, double value) {
        return kv(key, fc::format_double(value));
    }
    template <typename T>
    Provenance& kv(const std::string& key, T value) {
        return kv(key, std::to_string(value));
    }

    std::string str() const { return enabled_ ? text_ : std::string(); }

private:
    std::string text_;
    bool enabled_;
};

std::vector<std::uint64_t> parse_u64_list(const std::string& csv) {
    std::vector<std::uint64_t> out;
    for (const auto& tok : fc::split(csv, ','))
        out.push_back(static_cast<std::uint64_t>(std::stoull(tok)));
    return out;
}

fc::Dataset dataset_from_csv(const std::string& path, const fc::FlowSpec& spec,
                             fc::Target target, std::size_t* skipped = nullptr) {
    const fc::QorTable table = fc::read_csv(path, spec);
    if (skipped) *skipped = table.skipped;
    return fc::select_target(table, target);
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

void cmd_space(CLI::App* app) {
    auto spec = std::make_shared<SpecOpts>();
    auto* cmd = app->add_subcommand("space", "print the exact flow search-space size");
    spec->attach(cmd);
    cmd->callback([spec]() {
        std::cout << fc::space_size(spec->resolve()).str() << "\n";
    });
}

void cmd_gen(CLI::App* app) {
    auto spec = std::make_shared<SpecOpts>();
    auto common = std::make_shared<CommonOpts>();
    auto count = std::make_shared<std::uint64_t>(0);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto unique = std::make_shared<bool>(false);
    auto out = std::make_shared<std::string>();

    auto* cmd = app->add_subcommand("gen", "sample random flows into a flows file");
    spec->attach(cmd);
    common->attach(cmd);
    cmd->add_option("--count", *count, "number of flows")->required();
    cmd->add_option("--seed", *seed, "random seed")->required();
    cmd->add_flag("--unique", *unique, "reject duplicate flows");
    cmd->add_option("--out", *out, "output flows file")->required();
    cmd->callback([=]() {
        const fc::FlowSpec s = spec->resolve();
        fc::Rng rng(fc::substream_seed(*seed, "flows"));
        std::vector<fc::Flow> flows;
        if (*unique) {
            flows = fc::sample_unique_flows(s, *count, rng);
        } else {
            flows.reserve(*count);
            for (std::uint64_t i = 0; i < *count; ++i) flows.push_back(fc::sample_flow(s, rng));
        }
        Provenance prov("gen", !common->no_provenance);
        prov.kv("count", *count).kv("seed", *seed).kv("unique", *unique ? 1 : 0);
        fc::write_flows_file(*out, flows, s, prov.str());
    });
}

void cmd_oracle(CLI::App* app) {
    auto* oracle = app->add_subcommand("oracle", "create or derive synthetic technologies");
    oracle->require_subcommand(1);

    {
        auto spec = std::make_shared<SpecOpts>();
        auto common = std::make_shared<CommonOpts>();
        auto seed = std::make_shared<std::uint64_t>(0);
        auto state_dim = std::make_shared<int>(8);
        auto noise_sd = std::make_shared<double>(0.0);
        auto id = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();

        auto* cmd = oracle->add_subcommand("new", "create a root technology");
        spec->attach(cmd);
        common->attach(cmd);
        cmd->add_option("--seed", *seed, "random seed")->required();
        cmd->add_option("--state-dim", *state_dim, "hidden state dimension");
        cmd->add_option("--noise-sd", *noise_sd, "relative measurement noise");
        cmd->add_option("--id", *id, "technology id");
        cmd->add_option("--out", *out, "output .flt file")->required();
        cmd->callback([=]() {
            const fc::Technology tech =
                fc::make_technology(spec->resolve(), *seed, *state_dim, *noise_sd, *id);
            Provenance prov("oracle-new", !common->no_provenance);
            prov.kv("seed", *seed).kv("state_dim", *state_dim).kv("noise_sd", *noise_sd);
            fc::save_technology(tech, *out, prov.str());
            std::cout << "technology " << tech.id << " -> " << *out << "\n";
        });
    }
    {
        auto common = std::make_shared<CommonOpts>();
        auto parent = std::make_shared<std::string>();
        auto drift = std::make_shared<double>(0.1);
        auto scale = std::make_shared<double>(1.0);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto id = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();

        auto* cmd = oracle->add_subcommand("derive", "derive a child technology");
        common->attach(cmd);
        cmd->add_option("--parent", *parent, "parent .flt file")->required();
        cmd->add_option("--drift", *drift, "parameter perturbation in [0,1]");
        cmd->add_option("--scale", *scale, "QoR scale factor");
        cmd->add_option("--seed", *seed, "random seed")->required();
        cmd->add_option("--id", *id, "technology id");
        cmd->add_option("--out", *out, "output .flt file")->required();
        cmd->callback([=]() {
            const fc::Technology child =
                fc::derive_technology(fc::load_technology(*parent), *drift, *scale, *seed, *id);
            Provenance prov("oracle-derive", !common->no_provenance);
            prov.kv("parent", *parent).kv("drift", *drift).kv("scale", *scale).kv("seed", *seed);
            fc::save_technology(child, *out, prov.str());
            std::cout << "technology " << child.id << " -> " << *out << "\n";
        });
    }
}

void cmd_simulate(CLI::App* app) {
    auto common = std::make_shared<CommonOpts>();
    auto tech_path = std::make_shared<std::string>();
    auto flows_path = std::make_shared<std::string>();
    auto count = std::make_shared<std::uint64_t>(0);
    auto seed = std::make_shared<std::uint64_t>(0);
    auto out = std::make_shared<std::string>();

    auto* cmd = app->add_subcommand(
        "simulate", "simulate QoR for flows against a technology, writing a CSV");
    common->attach(cmd);
    cmd->add_option("--tech", *tech_path, "technology .flt file")->required();
    cmd->add_option("--flows", *flows_path, "flows file (one flow per line)");
    cmd->add_option("--count", *count, "generate this many unique flows instead");
    cmd->add_option("--seed", *seed, "seed for --count generation and noise");
    cmd->add_option("--out", *out, "output CSV")->required();
    cmd->callback([=]() {
        const fc::Technology tech = fc::load_technology(*tech_path);
        fc::QorTable table{tech.spec, {}, 0};
        if (!flows_path->empty()) {
            const auto flows = fc::read_flows_file(*flows_path, tech.spec);
            table.rows.reserve(flows.size());
            for (std::size_t i = 0; i < flows.size(); ++i) {
                fc::Rng noise(fc::substream_seed(*seed, "noise", i));
                const fc::Qor q = fc::simulate_qor(flows[i], tech, &noise);
                table.rows.push_back(fc::QorRow{flows[i], q.delay_ps, q.area_um2});
            }
        } else if (*count > 0) {
            table = fc::generate_qor_table(tech.spec, tech, *count, *seed, common->threads);
        } else {
            throw fc::Error("simulate needs --flows or --count");
        }
        Provenance prov("simulate", !common->no_provenance);
        prov.kv("tech", tech.id).kv("count", *count).kv("seed", *seed);
        fc::write_csv(table, *out, prov.str());
        std::cout << "simulated " << table.rows.size() << " rows (" << table.skipped
                  << " dropped) -> " << *out << "\n";
    });
}

struct TrainOpts {
    std::string target = "delay";
    int hidden = 128;
    int dense = 30;
    int epochs = 1000;
    int batch = 256;
    double lr = 0.001;
    double dropout = 0.4;
    double val_fraction = 0.2;
    std::uint64_t seed = 0;
    bool best_val = false;
    bool orthogonal = false;

    void attach(CLI::App* cmd, bool transfer_defaults = false) {
        if (transfer_defaults) epochs = 200;
        cmd->add_option("--target", target, "delay|area");
        cmd->add_option("--hidden", hidden, "LSTM units");
        cmd->add_option("--dense", dense, "dense units");
        cmd->add_option("--epochs", epochs, "training epochs");
        cmd->add_option("--batch", batch, "batch size");
        cmd->add_option("--lr", lr, "Adam learning rate");
        cmd->add_option("--dropout", dropout, "dropout rate");
        cmd->add_option("--val-fraction", val_fraction, "validation fraction");
        cmd->add_option("--seed", seed, "master seed")->required();
        cmd->add_flag("--best-val", best_val, "keep the best-validation snapshot");
        cmd->add_flag("--orthogonal", orthogonal, "orthogonal recurrent initialization");
    }

    fc::TrainConfig train_config() const {
        fc::TrainConfig c;
        c.lr = lr;
        c.batch_size = batch;
        c.epochs = epochs;
        c.val_fraction = val_fraction;
        c.master_seed = seed;
        c.best_val = best_val;
        return c;
    }

    fc::ModelConfig model_config(const fc::FlowSpec& spec) const {
        fc::ModelConfig c;
        c.input_dim = spec.size();
        c.seq_len = spec.length();
        c.lstm_units = hidden;
        c.dense_units = dense;
        c.out_dim = 1;
        c.dropout_rate = dropout;
        c.orthogonal_recurrent = orthogonal;
        return c;
    }
};

void cmd_train(CLI::App* app) {
    auto spec = std::make_shared<SpecOpts>();
    auto common = std::make_shared<CommonOpts>();
    auto opts = std::make_shared<TrainOpts>();
    auto data_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();
    auto history_path = std::make_shared<std::string>();

    auto* cmd = app->add_subcommand("train", "train a QoR regressor from a CSV dataset");
    spec->attach(cmd);
    common->attach(cmd);
    opts->attach(cmd);
    cmd->add_option("--data", *data_path, "training CSV")->required();
    cmd->add_option("--out", *out, "output .flm model file")->required();
    cmd->add_option("--history", *history_path, "per-epoch loss CSV");
    cmd->callback([=]() {
        const fc::FlowSpec s = spec->resolve();
        const fc::Target target = fc::parse_target(opts->target);
        const fc::Dataset data = dataset_from_csv(*data_path, s, target);

        fc::Model model = fc::build_model(opts->model_config(s), opts->seed);
        const fc::TrainResult result = fc::train(model, data, opts->train_config());

        Provenance prov("train", !common->no_provenance);
        prov.kv("data", *data_path)
            .kv("target", opts->target)
            .kv("hidden", opts->hidden)
            .kv("dense", opts->dense)
            .kv("epochs", opts->epochs)
            .kv("batch", opts->batch)
            .kv("lr", opts->lr)
            .kv("dropout", opts->dropout)
            .kv("seed", opts->seed);

        fc::ModelFile file(std::move(model), s);
        file.target = fc::target_name(target);
        file.units = fc::target_units(target);
        file.stats = result.stats;
        file.seed = opts->seed;
        file.provenance = prov.str();
        fc::save_model(file, *out);
        if (!history_path->empty())
            fc::write_history_csv(result.history, *history_path, prov.str());
        std::cout << "trained " << data.size() << " rows, final val loss "
                  << fc::format_double(result.history.val_loss.back()) << " -> " << *out
                  << "\n";
    });
}

void cmd_transfer(CLI::App* app) {
    auto common = std::make_shared<CommonOpts>();
    auto opts = std::make_shared<TrainOpts>();
    auto model_path = std::make_shared<std::string>();
    auto data_path = std::make_shared<std::string>();
    auto k = std::make_shared<std::uint64_t>(100);
    auto strategy = std::make_shared<std::string>("all");
    auto out = std::make_shared<std::string>();
    auto history_path = std::make_shared<std::string>();

    auto* cmd = app->add_subcommand(
        "transfer", "fine-tune a pretrained model on k points of a new technology");
    common->attach(cmd);
    opts->attach(cmd, /*transfer_defaults=*/true);
    cmd->add_option("--model", *model_path, "pretrained .flm model")->required();
    cmd->add_option("--data", *data_path, "new-technology CSV")->required();
    cmd->add_option("--k", *k, "number of fine-tuning points");
    cmd->add_option("--strategy", *strategy, "dense|all");
    cmd->add_option("--out", *out, "output .flm model file")->required();
    cmd->add_option("--history", *history_path, "per-epoch loss CSV");
    cmd->callback([=]() {
        fc::ModelFile file = fc::load_model(*model_path);
        const fc::Target target = fc::parse_target(file.target);
        const fc::Dataset data = dataset_from_csv(*data_path, file.spec, target);
        const fc::TransferStrategy strat = fc::parse_strategy(*strategy);

        fc::TrainConfig config = opts->train_config();
        const fc::TrainResult result =
            fc::fine_tune(file.model, file.stats, data, *k, strat, config);

        Provenance prov("transfer", !common->no_provenance);
        prov.kv("model", *model_path)
            .kv("data", *data_path)
            .kv("k", *k)
            .kv("strategy", *strategy)
            .kv("epochs", opts->epochs)
            .kv("seed", opts->seed);
        file.stats = result.stats;
        file.seed = opts->seed;
        file.provenance = prov.str();
        fc::save_model(file, *out);
        if (!history_path->empty())
            fc::write_history_csv(result.history, *history_path, prov.str());
        std::cout << "fine-tuned on k=" << *k << " (" << *strategy << ") -> " << *out << "\n";
    });
}

void cmd_transfer_study(CLI::App* app) {
    auto common = std::make_shared<CommonOpts>();
    auto model_path = std::make_shared<std::string>();
    auto data_path = std::make_shared<std::string>();
    auto test_path = std::make_shared<std::string>();
    auto ks = std::make_shared<std::string>("5,10,25,50,100");
    auto seeds = std::make_shared<std::string>("1,2,3");
    auto strategies = std::make_shared<std::string>("dense,all,scratch");
    auto epochs = std::make_shared<int>(200);
    auto batch = std::make_shared<int>(256);
    auto lr = std::make_shared<double>(0.001);
    auto report = std::make_shared<std::string>();

    auto* cmd = app->add_subcommand(
        "transfer-study",
        "sweep (k, strategy, seed) fine-tuning runs and report held-out accuracy");
    common->attach(cmd);
    cmd->add_option("--model", *model_path, "pretrained .flm model")->required();
    cmd->add_option("--data", *data_path, "new-technology CSV (fine-tuning pool)")->required();
    cmd->add_option("--test", *test_path,
                    "held-out CSV; defaults to the pool complement of each run");
    cmd->add_option("--ks", *ks, "comma-separated k values");
    cmd->add_option("--seeds", *seeds, "comma-separated seeds");
    cmd->add_option("--strategies", *strategies, "subset of dense,all,scratch");
    cmd->add_option("--epochs", *epochs, "fine-tuning epochs");
    cmd->add_option("--batch", *batch, "batch size");
    cmd->add_option("--lr", *lr, "Adam learning rate");
    cmd->add_option("--report", *report, "output CSV")->required();
    cmd->callback([=]() {
        const fc::ModelFile pretrained = fc::load_model(*model_path);
        const fc::Target target = fc::parse_target(pretrained.target);
        const fc::Dataset pool = dataset_from_csv(*data_path, pretrained.spec, target);
        const bool have_test = !test_path->empty();
        std::optional<fc::Dataset> test;
        if (have_test) test = dataset_from_csv(*test_path, pretrained.spec, target);

        Provenance prov("transfer-study", !common->no_provenance);
        prov.kv("model", *model_path)
            .kv("data", *data_path)
            .kv("test", have_test ? *test_path : std::string("<pool-complement>"))
            .kv("ks", *ks)
            .kv("seeds", *seeds)
            .kv("strategies", *strategies)
            .kv("epochs", *epochs);

        std::string csv;
        if (!prov.str().empty()) csv += "# " + prov.str() + "\n";
        csv += "k,strategy,seed,n_eval,mre_pct,accuracy_pct\n";

        for (const std::uint64_t k : parse_u64_list(*ks)) {
            for (const std::string& strategy : fc::split(*strategies, ',')) {
                for (const std::uint64_t seed : parse_u64_list(*seeds)) {
                    fc::TrainConfig config;
                    config.epochs = *epochs;
                    config.batch_size = *batch;
                    config.lr = *lr;
                    config.master_seed = seed;

                    fc::Model tuned = pretrained.model;
                    fc::NormStats stats;
                    if (strategy == "scratch") {
                        fc::ScratchResult r =
                            fc::scratch_baseline(pool, k, pretrained.model.config, config);
                        tuned = std::move(r.model);
                        stats = r.stats;
                    } else {
                        const fc::TrainResult r =
                            fc::fine_tune(tuned, pretrained.stats, pool, k,
                                          fc::parse_strategy(strategy), config);
                        stats = r.stats;
                    }

                    fc::Dataset eval_set{pool.spec, {}, {}, pool.target, pool.units};
                    if (have_test) {
                        eval_set = *test;
                    } else {
                        // untouched pool complement of this run's k picks
                        const auto order = fc::transfer_pick_order(pool.size(), seed);
                        for (std::size_t i = k; i < order.size(); ++i) {
                            const auto idx = static_cast<std::size_t>(order[i]);
                            eval_set.flows.push_back(pool.flows[idx]);
                            eval_set.labels.push_back(pool.labels[idx]);
                        }
                    }
                    const fc::EvalReport rep =
                        fc::evaluate(tuned, eval_set, stats, seed, common->threads);
                    csv += std::to_string(k) + "," + strategy + "," + std::to_string(seed) +
                           "," + std::to_string(rep.n_points) + "," +
                           fc::format_double(rep.mre_pct) + "," +
                           fc::format_double(rep.accuracy_pct) + "\n";
                    std::cout << "k=" << k << " strategy=" << strategy << " seed=" << seed
                              << " accuracy=" << fc::format_double(rep.accuracy_pct) << "%\n";
                }
            }
        }
        fc::atomic_write_file(*report, csv);
    });
}

void cmd_predict(CLI::App* app) {
    auto common = std::make_shared<CommonOpts>();
    auto model_path = std::make_shared<std::string>();
    auto flows_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();

    auto* cmd = app->add_subcommand("predict", "predict QoR for a flows file");
    common->attach(cmd);
    cmd->add_option("--model", *model_path, "trained .flm model")->required();
    cmd->add_option("--flows", *flows_path, "flows file")->required();
    cmd->add_option("--out", *out, "output CSV (default: stdout)");
    cmd->callback([=]() {
        const fc::ModelFile file = fc::load_model(*model_path);
        const auto flows = fc::read_flows_file(*flows_path, file.spec);
        if (flows.empty()) throw fc::Error("no flows in " + *flows_path);

        fc::Dataset data{file.spec, flows, std::vector<double>(flows.size(), 0.0),
                         file.target, file.units};
        const Eigen::VectorXd pred =
            fc::predict_normalized(file.model, data, 256, common->threads);

        Provenance prov("predict", !common->no_provenance);
        prov.kv("model", *model_path).kv("flows", *flows_path);
        std::string csv;
        if (!prov.str().empty()) csv += "# " + prov.str() + "\n";
        csv += "flow,predicted_" + file.target + "_" + file.units + "\n";
        for (std::size_t i = 0; i < flows.size(); ++i) {
            csv += fc::flow_to_string(flows[i], file.spec) + "," +
                   fc::format_double(
                       fc::denormalize(pred(static_cast<Eigen::Index>(i)), file.stats)) +
                   "\n";
        }
        if (out->empty())
            std::cout << csv;
        else
            fc::atomic_write_file(*out, csv);
    });
}

void cmd_eval(CLI::App* app) {
    auto common = std::make_shared<CommonOpts>();
    auto model_path = std::make_shared<std::string>();
    auto data_path = std::make_shared<std::string>();
    auto report = std::make_shared<std::string>();
    auto seed = std::make_shared<std::uint64_t>(0);

    auto* cmd = app->add_subcommand("eval", "evaluate a model against a CSV dataset");
    common->attach(cmd);
    cmd->add_option("--model", *model_path, "trained .flm model")->required();
    cmd->add_option("--data", *data_path, "test CSV")->required();
    cmd->add_option("--report", *report, "report output directory")->required();
    cmd->add_option("--seed", *seed, "seed for the 4-subset split");
    cmd->callback([=]() {
        const fc::ModelFile file = fc::load_model(*model_path);
        const fc::Dataset data =
            dataset_from_csv(*data_path, file.spec, fc::parse_target(file.target));
        const fc::EvalReport rep =
            fc::evaluate(file.model, data, file.stats, *seed, common->threads);
        Provenance prov("eval", !common->no_provenance);
        prov.kv("model", *model_path).kv("data", *data_path).kv("seed", *seed);
        fc::write_report(rep, *report, file.target, file.units, prov.str());
        std::cout << "accuracy " << fc::format_double(rep.accuracy_pct) << "% over "
                  << rep.n_points << " points -> " << *report << "\n";
    });
}

void cmd_ingest(CLI::App* app) {
    auto spec = std::make_shared<SpecOpts>();
    auto common = std::make_shared<CommonOpts>();
    auto csv_path = std::make_shared<std::string>();
    auto out = std::make_shared<std::string>();

    auto* cmd = app->add_subcommand(
        "ingest", "validate an externally generated CSV against a flow spec");
    spec->attach(cmd);
    common->attach(cmd);
    cmd->add_option("--csv", *csv_path, "input CSV")->required();
    cmd->add_option("--out", *out, "write the validated rows to a canonical CSV");
    cmd->callback([=]() {
        const fc::FlowSpec s = spec->resolve();
        const fc::QorTable table = fc::read_csv(*csv_path, s);
        std::cout << "ingested " << table.rows.size() << " rows, skipped " << table.skipped
                  << "\n";
        if (!out->empty()) {
            Provenance prov("ingest", !common->no_provenance);
            prov.kv("csv", *csv_path);
            fc::write_csv(table, *out, prov.str());
        }
    });
}

void cmd_make_paper_protocol(CLI::App* app) {
    auto common = std::make_shared<CommonOpts>();
    auto outdir = std::make_shared<std::string>();
    auto seed = std::make_shared<std::uint64_t>(7);
    auto rows = std::make_shared<std::uint64_t>(25000);
    auto train_rows = std::make_shared<std::uint64_t>(5000);
    auto pool_rows = std::make_shared<std::uint64_t>(1000);
    auto test_rows = std::make_shared<std::uint64_t>(5000);
    auto hidden = std::make_shared<int>(32);
    auto epochs = std::make_shared<int>(100);
    auto ft_epochs = std::make_shared<int>(200);
    auto ks = std::make_shared<std::string>("5,10,25,50,100");
    auto seeds = std::make_shared<std::string>("1,2,3");
    auto target = std::make_shared<std::string>("delay");

    auto* cmd = app->add_subcommand(
        "make-paper-protocol",
        "run the full desk-scale protocol: root + two derived technologies, datasets, "
        "pretraining, and transfer studies");
    common->attach(cmd);
    cmd->add_option("--outdir", *outdir, "output directory")->required();
    cmd->add_option("--seed", *seed, "master seed");
    cmd->add_option("--rows", *rows, "root dataset rows");
    cmd->add_option("--train-rows", *train_rows, "rows used for pretraining");
    cmd->add_option("--pool-rows", *pool_rows, "fine-tuning pool rows per child");
    cmd->add_option("--test-rows", *test_rows, "held-out rows per child");
    cmd->add_option("--hidden", *hidden, "LSTM units");
    cmd->add_option("--epochs", *epochs, "pretraining epochs");
    cmd->add_option("--ft-epochs", *ft_epochs, "fine-tuning epochs");
    cmd->add_option("--ks", *ks, "transfer k values");
    cmd->add_option("--seeds", *seeds, "transfer seeds");
    cmd->add_option("--target", *target, "delay|area");
    cmd->callback([=]() {
        namespace fs = std::filesystem;
        const fs::path dir(*outdir);
        fs::create_directories(dir);
        const fc::FlowSpec spec = fc::FlowSpec::default_profile();
        const fc::Target tgt = fc::parse_target(*target);
        const bool prov_on = !common->no_provenance;

        // three technologies: root and two shrunk derivatives
        const fc::Technology root = fc::make_technology(spec, *seed, 8, 0.0, "root");
        const fc::Technology child_a =
            fc::derive_technology(root, 0.1, 0.7, *seed + 1, "childA");
        const fc::Technology child_b =
            fc::derive_technology(root, 0.1, 0.6, *seed + 2, "childB");
        fc::save_technology(root, dir / "root.flt",
                            Provenance("oracle-new", prov_on).kv("seed", *seed).str());
        fc::save_technology(
            child_a, dir / "childA.flt",
            Provenance("oracle-derive", prov_on).kv("seed", *seed + 1).str());
        fc::save_technology(
            child_b, dir / "childB.flt",
            Provenance("oracle-derive", prov_on).kv("seed", *seed + 2).str());

        // datasets
        const fc::QorTable root_table =
            fc::generate_qor_table(spec, root, *rows, *seed + 10, common->threads);
        fc::write_csv(root_table, dir / "root.csv",
                      Provenance("simulate", prov_on).kv("tech", "root").str());
        std::cout << "root dataset: " << root_table.rows.size() << " rows\n";

        const fc::Dataset root_data = fc::select_target(root_table, tgt);
        fc::Dataset pretrain_set{spec, {}, {}, root_data.target, root_data.units};
        fc::Dataset heldout_set{spec, {}, {}, root_data.target, root_data.units};
        for (std::size_t i = 0; i < root_data.size(); ++i) {
            auto& part = i < *train_rows ? pretrain_set : heldout_set;
            part.flows.push_back(root_data.flows[i]);
            part.labels.push_back(root_data.labels[i]);
        }

        // pretraining
        fc::ModelConfig mc;
        mc.input_dim = spec.size();
        mc.seq_len = spec.length();
        mc.lstm_units = *hidden;
        fc::TrainConfig tc;
        tc.epochs = *epochs;
        tc.master_seed = *seed;
        fc::Model model = fc::build_model(mc, *seed);
        const fc::TrainResult pre = fc::train(model, pretrain_set, tc);
        fc::write_history_csv(pre.history, dir / "pretrain_history.csv",
                              Provenance("train", prov_on).kv("seed", *seed).str());

        fc::ModelFile file(std::move(model), spec);
        file.target = fc::target_name(tgt);
        file.units = fc::target_units(tgt);
        file.stats = pre.stats;
        file.seed = *seed;
        file.provenance =
            Provenance("train", prov_on).kv("epochs", *epochs).kv("seed", *seed).str();
        fc::save_model(file, dir / "pretrained.flm");

        const fc::EvalReport root_eval =
            fc::evaluate(file.model, heldout_set, pre.stats, *seed, common->threads);
        fc::write_report(root_eval, dir / "root_eval", file.target, file.units,
                         Provenance("eval", prov_on).kv("seed", *seed).str());
        std::cout << "root held-out accuracy: " << fc::format_double(root_eval.accuracy_pct)
                  << "% over " << root_eval.n_points << " points\n";

        // transfer studies on both children
        const std::pair<std::string, const fc::Technology*> children[] = {
            {"childA", &child_a}, {"childB", &child_b}};
        for (const auto& [name, child] : children) {
            const fc::QorTable pool_table =
                fc::generate_qor_table(spec, *child, *pool_rows, *seed + 20, common->threads);
            const fc::QorTable test_table =
                fc::generate_qor_table(spec, *child, *test_rows, *seed + 21, common->threads);
            fc::write_csv(pool_table, dir / (name + "_pool.csv"),
                          Provenance("simulate", prov_on).kv("tech", name).str());
            fc::write_csv(test_table, dir / (name + "_test.csv"),
                          Provenance("simulate", prov_on).kv("tech", name).str());
            const fc::Dataset pool = fc::select_target(pool_table, tgt);
            const fc::Dataset test = fc::select_target(test_table, tgt);

            std::string csv;
            if (prov_on)
                csv +=
                    "# " + Provenance("transfer-study", prov_on).kv("child", name).str() + "\n";
            csv += "k,strategy,seed,n_eval,mre_pct,accuracy_pct\n";
            for (const std::uint64_t k : parse_u64_list(*ks)) {
                for (const std::string& strategy :
                     {std::string("dense"), std::string("all"), std::string("scratch")}) {
                    for (const std::uint64_t s : parse_u64_list(*seeds)) {
                        fc::TrainConfig ft;
                        ft.epochs = *ft_epochs;
                        ft.master_seed = s;
                        fc::Model tuned = file.model;
                        fc::NormStats stats;
                        if (strategy == "scratch") {
                            fc::ScratchResult r = fc::scratch_baseline(pool, k, mc, ft);
                            tuned = std::move(r.model);
                            stats = r.stats;
                        } else {
                            const fc::TrainResult r =
                                fc::fine_tune(tuned, file.stats, pool, k,
                                              fc::parse_strategy(strategy), ft);
                            stats = r.stats;
                        }
                        const fc::EvalReport rep =
                            fc::evaluate(tuned, test, stats, s, common->threads);
                        csv += std::to_string(k) + "," + strategy + "," + std::to_string(s) +
                               "," + std::to_string(rep.n_points) + "," +
                               fc::format_double(rep.mre_pct) + "," +
                               fc::format_double(rep.accuracy_pct) + "\n";
                        std::cout << name << " k=" << k << " " << strategy << " seed=" << s
                                  << " accuracy=" << fc::format_double(rep.accuracy_pct)
                                  << "%\n";
                    }
                }
            }
            fc::atomic_write_file(dir / ("study_" + name + ".csv"), csv);
        }
        std::cout << "protocol artifacts in " << dir.string() << "\n";
    });
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowcast: QoR prediction for synthesis-flow pipelines"};
    app.require_subcommand(1);
    app.set_config("--config", "", "read options from an INI file");

    cmd_space(&app);
    cmd_gen(&app);
    cmd_oracle(&app);
    cmd_simulate(&app);
    cmd_train(&app);
    cmd_transfer(&app);
    cmd_transfer_study(&app);
    cmd_predict(&app);
    cmd_eval(&app);
    cmd_ingest(&app);
    cmd_make_paper_protocol(&app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // usage errors exit 2, --help exits 0
    } catch (const fc::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
