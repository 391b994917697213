// payload-sentinel command line: ingest / train / eval / ablation / sweep /
// perturb / report. Exit codes: 0 success, 1 usage, 2 data error, 3 training
// divergence.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "paysent/blockfeat.hpp"
#include "paysent/common.hpp"
#include "paysent/ingest.hpp"
#include "paysent/manifest.hpp"
#include "paysent/nn/model.hpp"
#include "paysent/pipeline/ablation.hpp"
#include "paysent/pipeline/experiment.hpp"
#include "paysent/pipeline/perturb.hpp"
#include "paysent/pipeline/sweep.hpp"
#include "paysent/pipeline/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace paysent;

namespace {

json metrics_to_json(const pipeline::MetricsReport& m) {
    return {
        {"precision", m.precision},
        {"dr", m.dr},
        {"fpr", m.fpr},
        {"accuracy", m.accuracy},
        {"f1", m.f1},
        {"counts", {{"tp", m.counts.tp}, {"fp", m.counts.fp}, {"fn", m.counts.fn}, {"tn", m.counts.tn}}},
    };
}

void print_metrics(const pipeline::MetricsReport& m, std::ostream& os = std::cout) {
    os << "precision " << m.precision << "\n"
       << "dr        " << m.dr << "\n"
       << "fpr       " << m.fpr << "\n"
       << "accuracy  " << m.accuracy << "\n"
       << "f1        " << m.f1 << "\n"
       << "counts    tp=" << m.counts.tp << " fp=" << m.counts.fp << " fn=" << m.counts.fn << " tn=" << m.counts.tn
       << "\n";
}

struct CommonTrainOpts {
    std::string input;
    std::string out_dir = "paysent-out";
    std::uint64_t seed = 42;
    pipeline::TrainRunConfig cfg;

    void attach(CLI::App* cmd, bool with_variant = true) {
        cmd->add_option("--input", input, "canonical labeled-lines dataset")->required();
        cmd->add_option("--out-dir", out_dir, "output directory");
        cmd->add_option("--seed", seed, "run seed (split, init, shuffling, dropout)");
        cmd->add_option("--block-length", cfg.block.block_length, "sliding block length L");
        cmd->add_option("--stride", cfg.block.stride, "sliding block stride S");
        cmd->add_option("--dict-size", cfg.block.dict_size, "dictionary size K");
        cmd->add_option("--chosen-states", cfg.model.chosen_states, "chosen hidden states m");
        cmd->add_option("--epochs", cfg.epochs, "training epochs");
        cmd->add_option("--batch-size", cfg.batch_size, "mini-batch size");
        cmd->add_option("--lr", cfg.lr, "learning rate");
        cmd->add_option("--patience", cfg.early_stop_patience, "early stopping patience (epochs)");
        cmd->add_option("--embed-dim", cfg.model.embed_dim, "block embedding dimension");
        cmd->add_option("--lstm-hidden", cfg.model.lstm_hidden, "LSTM hidden units");
        cmd->add_option("--mlp-hidden", cfg.model.mlp_hidden, "MLP hidden units");
        cmd->add_option("--conv1-filters", cfg.model.conv1_filters, "filters in the first conv layer");
        cmd->add_option("--conv2-filters", cfg.model.conv2_filters, "filters in the second conv layer");
        cmd->add_option("--dropout", cfg.model.dropout_rate, "MLP dropout rate");
        if (with_variant) {
            cmd->add_option_function<std::string>(
                   "--variant", [this](const std::string& v) { cfg.model.variant = nn::variant_from_string(v); },
                   "model variant: full | lstm_only | cnn_only")
                ->check(CLI::IsMember({"full", "lstm_only", "cnn_only"}));
        }
        cmd->set_config("--config", "", "declarative key=value config file; flags override");
    }

    pipeline::SplitViews load_and_split(std::vector<PayloadSample>* all = nullptr) const {
        auto samples = parse_labeled_lines(read_file(input));
        auto split = split_dataset(samples, seed);
        auto views = pipeline::materialize_split(samples, split);
        if (all) *all = std::move(samples);
        return views;
    }
};

int cmd_ingest(const std::string& format, const std::string& input, const std::string& normal,
               const std::string& anomalous, bool strip_headers, int default_label, const std::string& output) {
    std::vector<PayloadSample> samples;
    std::size_t skipped = 0;
    if (format == "csic-text") {
        if (normal.empty() || anomalous.empty())
            throw UsageError("csic-text needs --normal and --anomalous input files");
        samples = parse_http_text(read_file(normal), strip_headers, 0);
        auto anom = parse_http_text(read_file(anomalous), strip_headers, 1);
        for (auto& s : anom) {
            s.id = std::int64_t(samples.size());
            samples.push_back(std::move(s));
        }
    } else if (format == "labeled-lines") {
        if (input.empty()) throw UsageError("labeled-lines needs --input");
        samples = parse_labeled_lines(read_file(input));
    } else if (format == "pcap") {
        if (input.empty()) throw UsageError("pcap needs --input");
        auto res = extract_pcap_payloads(read_file(input), default_label);
        samples = std::move(res.samples);
        skipped = res.skipped;
    } else {
        throw UsageError("unknown --format: " + format);
    }

    write_file(output, serialize_labeled_lines(samples));
    std::size_t pos = 0;
    for (const auto& s : samples) pos += std::size_t(s.label == 1);
    std::cout << "wrote " << output << ": " << samples.size() << " samples (" << (samples.size() - pos)
              << " normal, " << pos << " anomalous";
    if (format == "pcap") std::cout << ", " << skipped << " packets skipped";
    std::cout << ")\n";
    return 0;
}

int cmd_train(const CommonTrainOpts& opts) {
    fs::create_directories(opts.out_dir);
    auto views = opts.load_and_split();

    pipeline::TrainRunConfig cfg = opts.cfg;
    cfg.seed = opts.seed;
    cfg.validate();

    auto dict = BlockDictionary::fit(views.train, cfg.block);
    auto train_toks = pipeline::tokenize_all(views.train, dict);
    auto val_toks = pipeline::tokenize_all(views.validation, dict);

    auto result = pipeline::train(train_toks, val_toks, dict.size(), cfg);
    if (result.diverged && result.best_val_f1 < 0) throw DivergenceError("training diverged before any checkpoint");

    std::string dict_path = (fs::path(opts.out_dir) / "dictionary.tsv").string();
    std::string ckpt_path = (fs::path(opts.out_dir) / "checkpoint.bin").string();
    std::string log_path = (fs::path(opts.out_dir) / "train_log.jsonl").string();
    std::string manifest_path = (fs::path(opts.out_dir) / "manifest.json").string();

    dict.save(dict_path);
    nn::save_checkpoint(ckpt_path, result.best_params, dict.fingerprint());

    {
        std::ofstream lf(log_path);
        for (const auto& e : result.log) {
            json rec = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"validation", metrics_to_json(e.validation)}};
            lf << rec.dump() << "\n";
        }
    }

    auto input_bytes = read_file(opts.input);
    RunManifest manifest;
    manifest.config = cfg;
    manifest.input_path = opts.input;
    manifest.input_digest = fnv1a(input_bytes);
    manifest.dict_fingerprint = dict.fingerprint();
    manifest.seed = opts.seed;
    manifest.checkpoint_path = ckpt_path;
    manifest.dictionary_path = dict_path;
    manifest.log_path = log_path;
    manifest.save(manifest_path);

    for (const auto& e : result.log)
        std::cout << "epoch " << e.epoch << " loss " << e.train_loss << " val_f1 " << e.validation.f1 << " val_dr "
                  << e.validation.dr << " val_fpr " << e.validation.fpr << "\n";
    std::cout << "best epoch " << result.best_epoch << " (val_f1 " << result.best_val_f1 << ")";
    if (result.diverged) std::cout << " [diverged; kept last good checkpoint]";
    std::cout << "\nartifacts in " << opts.out_dir << "\n";
    return 0;
}

int cmd_eval(const std::string& input, const std::string& model_path, const std::string& dict_path,
             const std::string& split_name, std::uint64_t seed, const std::string& output) {
    auto ck = nn::load_checkpoint(model_path);
    auto dict = BlockDictionary::load(dict_path);
    if (dict.fingerprint() != ck.dict_fingerprint)
        throw DataError("dictionary fingerprint does not match the checkpoint; refusing to evaluate");

    auto samples = parse_labeled_lines(read_file(input));
    std::vector<PayloadSample> subset;
    if (split_name == "all") {
        subset = std::move(samples);
    } else {
        auto views = pipeline::materialize_split(samples, split_dataset(samples, seed));
        if (split_name == "train") subset = std::move(views.train);
        else if (split_name == "validation") subset = std::move(views.validation);
        else if (split_name == "test") subset = std::move(views.test);
        else throw UsageError("unknown --split: " + split_name);
    }

    auto metrics = pipeline::evaluate(ck.params, dict, subset);
    print_metrics(metrics);
    if (!output.empty()) {
        std::ofstream f(output);
        f << metrics_to_json(metrics).dump(2) << "\n";
    }
    return 0;
}

int cmd_ablation(const CommonTrainOpts& opts) {
    fs::create_directories(opts.out_dir);
    auto views = opts.load_and_split();
    pipeline::TrainRunConfig cfg = opts.cfg;
    cfg.seed = opts.seed;
    cfg.validate();

    auto table = pipeline::run_ablation(views, cfg);

    std::ofstream lf(fs::path(opts.out_dir) / "ablation.jsonl");
    std::cout << "variant     features  dr        fpr       f1\n";
    for (const auto& cell : table) {
        json rec = {{"variant", nn::to_string(cell.variant)},
                    {"block_features", cell.block_features},
                    {"metrics", metrics_to_json(cell.metrics)}};
        lf << rec.dump() << "\n";
        std::ostringstream row;
        row.setf(std::ios::fixed);
        row.precision(4);
        row << nn::to_string(cell.variant);
        for (std::size_t i = row.str().size(); i < 12; ++i) row << ' ';
        row << (cell.block_features ? "block     " : "raw       ") << cell.metrics.dr << "    " << cell.metrics.fpr
            << "    " << cell.metrics.f1;
        std::cout << row.str() << "\n";
    }
    return 0;
}

int cmd_sweep(const CommonTrainOpts& opts, const std::string& axis_name, const std::string& values_csv) {
    fs::create_directories(opts.out_dir);
    auto axis = pipeline::sweep_axis_from_string(axis_name);
    std::vector<std::size_t> values;
    std::stringstream ss(values_csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        long long v = std::stoll(item);
        if (v < 1) throw UsageError("sweep: axis values must be >= 1");
        values.push_back(std::size_t(v));
    }
    if (values.empty()) throw UsageError("sweep: --values is empty");

    auto views = opts.load_and_split();
    pipeline::TrainRunConfig cfg = opts.cfg;
    cfg.seed = opts.seed;
    cfg.validate();

    auto rows = pipeline::run_sweep(views, cfg, axis, values);

    std::ofstream lf(fs::path(opts.out_dir) / "sweep.jsonl");
    std::cout << axis_name << "  dr      fpr\n";
    for (const auto& row : rows) {
        json rec = {{"axis", axis_name}, {"value", row.value}, {"metrics", metrics_to_json(row.metrics)}};
        lf << rec.dump() << "\n";
        std::cout << row.value << "  " << row.metrics.dr << "  " << row.metrics.fpr << "\n";
    }
    return 0;
}

int cmd_perturb(const std::string& input, const std::string& output, std::uint64_t seed, const std::string& mode) {
    auto samples = parse_labeled_lines(read_file(input));
    if (mode == "all") {
        for (auto& s : samples) s = pipeline::random_insertion(s, seed);
    } else if (mode == "test-only") {
        auto split = split_dataset(samples, seed);
        std::vector<bool> in_test(samples.size(), false);
        for (auto id : split.test) in_test[std::size_t(id)] = true;
        for (auto& s : samples)
            if (in_test[std::size_t(s.id)]) s = pipeline::random_insertion(s, seed);
    } else {
        throw UsageError("unknown --perturb-mode: " + mode);
    }
    write_file(output, serialize_labeled_lines(samples));
    std::cout << "wrote " << output << ": " << samples.size() << " samples (mode " << mode << ")\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs) {
    std::cout << "model                     dr        fpr       precision f1        accuracy\n";
    auto row = [](const std::string& name, double dr, double fpr, double prec, double f1, double acc) {
        std::ostringstream os;
        os.setf(std::ios::fixed);
        os.precision(4);
        os << name;
        for (std::size_t i = name.size(); i < 26; ++i) os << ' ';
        os << dr << "    " << fpr << "    " << prec << "    " << f1 << "    " << acc;
        std::cout << os.str() << "\n";
    };
    for (const auto& path : inputs) {
        std::ifstream f(path);
        if (!f) throw DataError("cannot open " + path);
        json j = json::parse(f);
        row(fs::path(path).stem().string(), j["dr"], j["fpr"], j["precision"], j["f1"], j["accuracy"]);
    }
    // published full-scale CSIC 2010 reference results, for comparison only
    row("[ref] BL-LSTM-CNN", 0.9912, 0.0022, 0, 0, 0);
    row("[ref] BL-LSTM", 0.9908, 0.0044, 0, 0, 0);
    row("[ref] BL-CNN", 0.9882, 0.0015, 0, 0, 0);
    row("[ref] LSTM-CNN (raw)", 0.9657, 0.0072, 0, 0, 0);
    row("[ref] LSTM (raw)", 0.9150, 0.0476, 0, 0, 0);
    row("[ref] CNN (raw)", 0.8435, 0.0356, 0, 0, 0);
    std::cout << "[ref] rows are published full-scale results, not produced by this run\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"payload-sentinel: block-based payload anomaly detection"};
    app.require_subcommand(1);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "parse raw datasets into the canonical labeled-lines format");
    std::string in_format, in_input, in_normal, in_anomalous, in_output;
    bool in_strip = false;
    int in_default_label = 0;
    ingest->add_option("--format", in_format, "csic-text | labeled-lines | pcap")->required();
    ingest->add_option("--input", in_input, "input file (labeled-lines, pcap)");
    ingest->add_option("--normal", in_normal, "normal-traffic file (csic-text)");
    ingest->add_option("--anomalous", in_anomalous, "anomalous-traffic file (csic-text)");
    ingest->add_flag("--strip-headers", in_strip, "keep request line and body, drop header fields");
    ingest->add_option("--default-label", in_default_label, "label for pcap payloads")->check(CLI::Range(0, 1));
    ingest->add_option("--output", in_output, "canonical output file")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "split, fit dictionary, train, write artifacts");
    CommonTrainOpts train_opts;
    train_opts.attach(train_cmd);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ev_input, ev_model, ev_dict, ev_split = "all", ev_output;
    std::uint64_t ev_seed = 42;
    eval_cmd->add_option("--input", ev_input, "canonical dataset")->required();
    eval_cmd->add_option("--model", ev_model, "checkpoint file")->required();
    eval_cmd->add_option("--dict", ev_dict, "dictionary file")->required();
    eval_cmd->add_option("--split", ev_split, "all | train | validation | test")
        ->check(CLI::IsMember({"all", "train", "validation", "test"}));
    eval_cmd->add_option("--seed", ev_seed, "split seed (when --split is not all)");
    eval_cmd->add_option("--output", ev_output, "write metrics as JSON");

    // ablation
    auto* abl_cmd = app.add_subcommand("ablation", "variants x {block, raw} grid");
    CommonTrainOpts abl_opts;
    abl_opts.attach(abl_cmd, /*with_variant=*/false);

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "hyperparameter sweep along one axis");
    CommonTrainOpts sweep_opts;
    std::string sw_axis, sw_values;
    sweep_opts.attach(sweep_cmd);
    sweep_cmd->add_option("--axis", sw_axis, "block_length | stride | dict_size | chosen_states")->required();
    sweep_cmd->add_option("--values", sw_values, "comma-separated axis values")->required();

    // perturb
    auto* pert_cmd = app.add_subcommand("perturb", "apply random-insertion noise to a canonical file");
    std::string pe_input, pe_output, pe_mode = "all";
    std::uint64_t pe_seed = 42;
    pert_cmd->add_option("--input", pe_input, "canonical dataset")->required();
    pert_cmd->add_option("--output", pe_output, "perturbed canonical file")->required();
    pert_cmd->add_option("--seed", pe_seed, "perturbation seed");
    pert_cmd->add_option("--perturb-mode", pe_mode, "all | test-only")->check(CLI::IsMember({"all", "test-only"}));

    // report
    auto* rep_cmd = app.add_subcommand("report", "summary table with published reference rows");
    std::vector<std::string> rep_inputs;
    rep_cmd->add_option("--input", rep_inputs, "metrics JSON files from eval");

    try {
        app.parse(argc, argv);
        if (*ingest) return cmd_ingest(in_format, in_input, in_normal, in_anomalous, in_strip, in_default_label, in_output);
        if (*train_cmd) return cmd_train(train_opts);
        if (*eval_cmd) return cmd_eval(ev_input, ev_model, ev_dict, ev_split, ev_seed, ev_output);
        if (*abl_cmd) return cmd_ablation(abl_opts);
        if (*sweep_cmd) return cmd_sweep(sweep_opts, sw_axis, sw_values);
        if (*pert_cmd) return cmd_perturb(pe_input, pe_output, pe_seed, pe_mode);
        if (*rep_cmd) return cmd_report(rep_inputs);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const DivergenceError& e) {
        std::cerr << "training divergence: " << e.what() << "\n";
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
