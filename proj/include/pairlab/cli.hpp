#pragma once

// `pairlab` command line: stats, train, compare, export, codec and synth.
// Needs CLI11, nlohmann/json and OpenSSL (libcrypto) in addition to Eigen.

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "pairlab/corpus.hpp"
#include "pairlab/encoder.hpp"
#include "pairlab/error.hpp"
#include "pairlab/eval.hpp"
#include "pairlab/target_codec.hpp"
#include "pairlab/trainer.hpp"

namespace pairlab::cli {

inline constexpr std::string_view kToolVersion = "0.1.0";

enum ExitCode : int { ok = 0, usage = 1, data_error = 2, numeric_failure = 3 };

// ---------------------------------------------------------------------------
// Helpers

inline std::string sha256_hex(std::string_view bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1)
        throw Error(ErrorKind::Io, "sha256 failed");
    std::ostringstream out;
    for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
    return out.str();
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::string& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
    out << content;
    if (!out) throw Error(ErrorKind::Io, "write failure on '" + path + "'");
}

inline std::string file_sha256(const std::string& path) { return sha256_hex(read_file(path)); }

/// "data/14lap/train_triplets.txt" -> {"14lap", train}; "dev" maps to val.
inline std::pair<std::string, Split> describe_path(const std::string& path, std::optional<Split> split_override) {
    const std::filesystem::path p(path);
    std::string name = p.parent_path().filename().string();
    if (name.empty()) name = p.stem().string();
    Split split = Split::train;
    const std::string stem = p.stem().string();
    for (std::string_view prefix : {"train", "dev", "val", "test"}) {
        if (stem.rfind(prefix, 0) == 0) {
            split = *split_from_string(prefix);
            break;
        }
    }
    return {name, split_override.value_or(split)};
}

inline Dataset load(const std::string& path, std::optional<Split> split_override) {
    auto [name, split] = describe_path(path, split_override);
    return load_dataset(path, name, split);
}

inline EncoderParams load_checkpoint(const std::string& path) {
    std::istringstream in(read_file(path));
    try {
        return read_checkpoint(in);
    } catch (const Error& e) {
        throw Error(e.kind(), path + ": " + e.detail());
    }
}

inline std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

inline std::optional<std::uint64_t> env_seed() {
    const char* v = std::getenv("PAIRLAB_SEED");
    if (!v || !*v) return std::nullopt;
    std::uint64_t seed = 0;
    const std::string_view s(v);
    const auto res = std::from_chars(s.data(), s.data() + s.size(), seed);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        throw Error(ErrorKind::InvalidConfig, "PAIRLAB_SEED is not an unsigned integer: '" + std::string(s) + "'");
    return seed;
}

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

/// Population standard deviation; 0 for a single value.
inline double stddev(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
}

inline std::string fixed(double v, int digits = 4) {
    std::ostringstream out;
    out << std::fixed << std::setprecision(digits) << v;
    return out.str();
}

// ---------------------------------------------------------------------------
// Commands

struct StatsOptions {
    std::vector<std::string> datasets;
    std::optional<Split> split;
};

inline void cmd_stats(const StatsOptions& opt, std::ostream& out) {
    out << "dataset\tsplit\tsentences\tmulti_aspect\tmulti_opinion\tmulti_both\n";
    for (const auto& path : opt.datasets) {
        const Dataset ds = load(path, opt.split);
        const StatsRow r = dataset_stats(ds);
        out << ds.name << '\t' << to_string(ds.split) << '\t' << r.sentences << '\t' << r.multi_aspect << '\t'
            << r.multi_opinion << '\t' << r.multi_both << '\n';
    }
}

struct TrainOptions {
    std::string dataset;
    std::string val;
    std::string out_dir;
    std::string config_path;
    std::optional<std::string> profile;
    std::optional<std::uint64_t> seed;
    std::optional<double> alpha, beta, tau, learning_rate, dropout;
    std::optional<int> epochs;
    std::optional<std::size_t> batch_size;
    std::string command_line;
};

/// Profile defaults, overlaid by the JSON config file, overlaid by flags.
inline TrainConfig resolve_train_config(const TrainOptions& opt) {
    nlohmann::json file = nlohmann::json::object();
    if (!opt.config_path.empty()) {
        try {
            file = nlohmann::json::parse(read_file(opt.config_path));
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::InvalidConfig, opt.config_path + ": " + e.what());
        }
        if (!file.is_object()) throw Error(ErrorKind::InvalidConfig, opt.config_path + ": expected a JSON object");
    }

    std::string profile_name = opt.profile.value_or(file.value("profile", std::string("desk")));
    const auto profile = profile_from_string(profile_name);
    if (!profile) throw Error(ErrorKind::InvalidConfig, "unknown profile '" + profile_name + "'");
    TrainConfig cfg = TrainConfig::for_profile(*profile);

    static const std::vector<std::string> known = {"profile", "learning_rate", "batch_size", "epochs", "dropout",
                                                   "alpha", "beta", "tau", "seed", "hidden_dim", "projection_dim",
                                                   "vocab_buckets", "mix_window", "weight_decay"};
    for (const auto& [key, _] : file.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw Error(ErrorKind::InvalidConfig, "unknown config key '" + key + "'");
    try {
        cfg.learning_rate = file.value("learning_rate", cfg.learning_rate);
        cfg.batch_size = file.value("batch_size", cfg.batch_size);
        cfg.epochs = file.value("epochs", cfg.epochs);
        cfg.dropout = file.value("dropout", cfg.dropout);
        cfg.alpha = file.value("alpha", cfg.alpha);
        cfg.beta = file.value("beta", cfg.beta);
        cfg.tau_init = file.value("tau", cfg.tau_init);
        cfg.seed = file.value("seed", cfg.seed);
        cfg.weight_decay = file.value("weight_decay", cfg.weight_decay);
        cfg.encoder.hidden_dim = file.value("hidden_dim", cfg.encoder.hidden_dim);
        cfg.encoder.projection_dim = file.value("projection_dim", cfg.encoder.projection_dim);
        cfg.encoder.vocab_buckets = file.value("vocab_buckets", cfg.encoder.vocab_buckets);
        cfg.encoder.mix_window = file.value("mix_window", cfg.encoder.mix_window);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, opt.config_path + ": " + e.what());
    }
    if (!file.contains("seed"))
        if (auto s = env_seed()) cfg.seed = *s;

    if (opt.learning_rate) cfg.learning_rate = *opt.learning_rate;
    if (opt.batch_size) cfg.batch_size = *opt.batch_size;
    if (opt.epochs) cfg.epochs = *opt.epochs;
    if (opt.dropout) cfg.dropout = *opt.dropout;
    if (opt.alpha) cfg.alpha = *opt.alpha;
    if (opt.beta) cfg.beta = *opt.beta;
    if (opt.tau) cfg.tau_init = *opt.tau;
    if (opt.seed) cfg.seed = *opt.seed;
    cfg.validate();
    (void)EncoderParams::zeros(cfg.encoder);  // validates the encoder shape
    return cfg;
}

inline nlohmann::ordered_json config_json(const TrainConfig& cfg) {
    nlohmann::ordered_json j;
    j["profile"] = std::string(to_string(cfg.profile));
    j["learning_rate"] = cfg.learning_rate;
    j["batch_size"] = cfg.batch_size;
    j["epochs"] = cfg.epochs;
    j["dropout"] = cfg.dropout;
    j["alpha"] = cfg.alpha;
    j["beta"] = cfg.beta;
    j["tau"] = cfg.tau_init;
    j["seed"] = cfg.seed;
    j["weight_decay"] = cfg.weight_decay;
    j["vocab_buckets"] = cfg.encoder.vocab_buckets;
    j["hidden_dim"] = cfg.encoder.hidden_dim;
    j["d_proj"] = cfg.encoder.projection_dim;
    j["mix_window"] = cfg.encoder.mix_window;
    return j;
}

inline nlohmann::ordered_json manifest(const std::string& command, const nlohmann::ordered_json& config,
                                       const std::vector<std::uint64_t>& seeds, const std::vector<std::string>& inputs,
                                       const std::vector<std::string>& artifacts) {
    nlohmann::ordered_json m;
    m["command"] = command;
    m["config"] = config;
    m["seeds"] = seeds;
    nlohmann::ordered_json fp = nlohmann::ordered_json::object();
    for (const auto& path : inputs) fp[path] = "sha256:" + file_sha256(path);
    m["datasets"] = fp;
    m["artifacts"] = artifacts;
    m["version"] = std::string(kToolVersion);
    m["timestamp"] = utc_timestamp();
    return m;
}

inline void cmd_train(const TrainOptions& opt, std::ostream& log) {
    const TrainConfig cfg = resolve_train_config(opt);
    const Dataset train_ds = load(opt.dataset, Split::train);
    const Dataset val_ds = opt.val.empty() ? Dataset{} : load(opt.val, Split::val);

    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(opt.out_dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create '" + opt.out_dir + "': " + ec.message());
    const std::string ckpt_path = (fs::path(opt.out_dir) / "checkpoint.txt").string();
    const std::string metrics_path = (fs::path(opt.out_dir) / "metrics.jsonl").string();
    const std::string manifest_path = (fs::path(opt.out_dir) / "manifest.json").string();

    std::ostringstream metrics;
    const TrainResult result = train(train_ds, val_ds, cfg, [&](const EpochMetrics& m) {
        nlohmann::ordered_json j;
        j["epoch"] = m.epoch;
        j["L"] = m.loss.total;
        j["L_e"] = m.loss.extraction;
        j["L_c"] = m.loss.contrastive;
        j["tau"] = m.temperature;
        j["val_pair_f1"] = m.val_pair_f1;
        metrics << j.dump() << '\n';
        log << "epoch " << m.epoch << "  L " << fixed(m.loss.total) << "  val pair F1 " << fixed(m.val_pair_f1) << '\n';
    });

    std::ostringstream ckpt;
    write_checkpoint(ckpt, result.best);
    write_file(ckpt_path, ckpt.str());
    write_file(metrics_path, metrics.str());

    auto config = config_json(cfg);
    config["best_epoch"] = result.best_epoch;
    config["skipped_sentences"] = result.skipped_sentences;
    auto m = manifest(opt.command_line, config, {cfg.seed},
                      opt.val.empty() ? std::vector<std::string>{opt.dataset} : std::vector<std::string>{opt.dataset, opt.val},
                      {ckpt_path, metrics_path});
    if (cfg.beta == 0.0) m["ablation"] = "w/o CL";
    write_file(manifest_path, m.dump(2) + "\n");
    log << "best epoch " << result.best_epoch << ", checkpoint " << ckpt_path << '\n';
}

struct CompareOptions {
    std::vector<std::string> datasets;
    std::optional<Split> split;
    std::string checkpoint;
    std::string linear_checkpoint;
    std::vector<std::uint64_t> seeds;
};

/// Pair-F1 rows per dataset and strategy, mean over seeds with the
/// population standard deviation of F1.
inline void cmd_compare(const CompareOptions& opt, std::ostream& out) {
    const EncoderParams contrastive = load_checkpoint(opt.checkpoint);
    const EncoderParams linear = opt.linear_checkpoint.empty() ? contrastive : load_checkpoint(opt.linear_checkpoint);
    const std::vector<std::uint64_t> seeds = opt.seeds.empty() ? std::vector<std::uint64_t>{0} : opt.seeds;

    out << "metric\tstrategy\tdataset\tsplit\tprecision\trecall\tf1\tf1_std\n";
    for (const auto& path : opt.datasets) {
        const Dataset ds = load(path, opt.split);
        std::map<Strategy, std::vector<EvalReport>> runs;
        for (auto seed : seeds) {
            const auto c = compare_strategies(ds, linear, contrastive, seed);
            runs[Strategy::random].push_back(c.random);
            runs[Strategy::linear].push_back(c.linear);
            runs[Strategy::contrastive].push_back(c.contrastive);
        }
        for (Strategy s : {Strategy::random, Strategy::linear, Strategy::contrastive}) {
            std::vector<double> p, r, f;
            for (const auto& rep : runs[s]) {
                p.push_back(rep.precision);
                r.push_back(rep.recall);
                f.push_back(rep.f1);
            }
            out << "pair_f1\t" << to_string(s) << '\t' << ds.name << '\t' << to_string(ds.split) << '\t' << fixed(mean(p))
                << '\t' << fixed(mean(r)) << '\t' << fixed(mean(f)) << '\t' << fixed(stddev(f)) << '\n';
        }
    }
}

struct ExportOptions {
    std::string dataset;
    std::optional<Split> split;
    std::string checkpoint;
    std::string out;
};

inline void cmd_export(const ExportOptions& opt) {
    const EncoderParams params = load_checkpoint(opt.checkpoint);
    const Dataset ds = load(opt.dataset, opt.split);
    std::ostringstream csv;
    write_embedding_csv(csv, export_embeddings(ds, params));
    write_file(opt.out, csv.str());
}

struct CodecOptions {
    std::string dataset;
    std::string targets;
    TargetStyle style = TargetStyle::annotation;
    bool decode = false;
};

/// A sentence for decoding: a dataset line, or bare whitespace-separated tokens.
inline Sentence sentence_of(std::string_view line) {
    if (line.find("####") != std::string_view::npos) return parse_dataset_line(line);
    Sentence s;
    s.tokens = detail::split_whitespace(line);
    return s;
}

inline std::vector<std::string> read_lines(const std::string& path) {
    std::istringstream in(read_file(path));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        lines.push_back(line);
    }
    return lines;
}

/// Encode: one target per dataset sentence. Decode: one dataset line per
/// target, with the triplets parsed and resolved against the sentence.
/// Diagnostics go to `err`; parsing never fails.
inline std::size_t cmd_codec(const CodecOptions& opt, std::ostream& out, std::ostream& err) {
    if (!opt.decode) {
        const Dataset ds = load(opt.dataset, std::nullopt);
        for (const auto& s : ds.sentences) out << encode_target(s, opt.style) << '\n';
        return 0;
    }
    std::vector<std::string> sentences;
    for (auto& line : read_lines(opt.dataset))
        if (!std::all_of(line.begin(), line.end(), detail::is_space)) sentences.push_back(std::move(line));
    const auto targets = read_lines(opt.targets);
    std::size_t warnings = 0;
    for (std::size_t i = 0; i < sentences.size(); ++i) {
        Sentence s;
        try {
            s = sentence_of(sentences[i]);
        } catch (const Error& e) {
            throw Error(e.kind(), opt.dataset + ":" + std::to_string(i + 1) + ": " + e.detail());
        }
        const auto parsed = parse_target(i < targets.size() ? targets[i] : std::string_view{}, opt.style);
        auto resolved = resolve_triplets(parsed.triplets, s);
        for (const auto& diags : {parsed.diagnostics, resolved.diagnostics}) {
            for (const auto& d : diags) {
                err << "warning: target " << i + 1 << ": " << d.reason << ": '" << d.fragment << "'\n";
                ++warnings;
            }
        }
        s.triplets = std::move(resolved.triplets);
        out << format_dataset_line(s) << '\n';
    }
    err << "warnings: " << warnings << '\n';
    return warnings;
}

struct SynthOptions {
    SynthSpec spec;
    std::uint64_t seed = 0;
    std::string out;
};

inline void cmd_synth(const SynthOptions& opt) { save_dataset(synth_corpus(opt.spec, opt.seed), opt.out); }

// ---------------------------------------------------------------------------
// Entry point

inline std::optional<Split> parse_split(const std::string& s) {
    if (s.empty()) return std::nullopt;
    auto split = split_from_string(s);
    if (!split) throw CLI::ValidationError("--split", "expected train, dev, val or test");
    return split;
}

inline int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"pairlab: pairing experiments for aspect sentiment triplet extraction"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kToolVersion));

    std::string command_line;
    for (int i = 0; i < argc; ++i) command_line += (i ? " " : "") + std::string(argv[i]);

    std::string split;
    const std::map<std::string, TargetStyle> styles{{"annotation", TargetStyle::annotation},
                                                    {"extraction", TargetStyle::extraction}};

    StatsOptions stats;
    auto* stats_cmd = app.add_subcommand("stats", "Sentence counts per dataset file (TSV)");
    stats_cmd->add_option("--dataset,datasets", stats.datasets, "Dataset files")->required()->check(CLI::ExistingFile);
    stats_cmd->add_option("--split", split, "Override the split inferred from the file name");

    TrainOptions tr;
    std::string profile;
    std::optional<std::uint64_t> train_seed;
    auto* train_cmd = app.add_subcommand("train", "Train the encoder and pairing heads");
    train_cmd->add_option("--dataset", tr.dataset, "Training file")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--val", tr.val, "Validation file")->check(CLI::ExistingFile);
    train_cmd->add_option("--out", tr.out_dir, "Output directory")->required();
    train_cmd->add_option("--config", tr.config_path, "JSON config file")->check(CLI::ExistingFile);
    train_cmd->add_option("--profile", profile, "desk or paper-faithful")->check(CLI::IsMember({"desk", "paper-faithful"}));
    train_cmd->add_option("--seed", train_seed, "Run seed (falls back to PAIRLAB_SEED)");
    train_cmd->add_option("--alpha", tr.alpha, "Weight of the extraction loss");
    train_cmd->add_option("--beta", tr.beta, "Weight of the contrastive loss");
    train_cmd->add_option("--tau", tr.tau, "Initial temperature");
    train_cmd->add_option("--epochs", tr.epochs, "Epochs");
    train_cmd->add_option("--lr", tr.learning_rate, "Learning rate");
    train_cmd->add_option("--batch-size", tr.batch_size, "Sentences per batch");
    train_cmd->add_option("--dropout", tr.dropout, "Dropout rate");

    CompareOptions cmp;
    auto* compare_cmd = app.add_subcommand("compare", "Pair F1 of the random, linear and contrastive strategies (TSV)");
    compare_cmd->add_option("--dataset", cmp.datasets, "Dataset files")->required()->check(CLI::ExistingFile);
    compare_cmd->add_option("--split", split, "Override the split inferred from the file name");
    compare_cmd->add_option("--checkpoint", cmp.checkpoint, "Checkpoint scored by every strategy")->required();
    compare_cmd->add_option("--linear-checkpoint", cmp.linear_checkpoint, "Separate checkpoint for the linear strategy");
    compare_cmd->add_option("--seeds,--seed", cmp.seeds, "Seeds of the random strategy");
    std::string compare_out;
    compare_cmd->add_option("--out", compare_out, "Write the TSV here instead of stdout");

    ExportOptions ex;
    auto* export_cmd = app.add_subcommand("export", "Project pair embeddings and descriptions to 2-D (CSV)");
    export_cmd->add_option("--dataset", ex.dataset, "Dataset file")->required()->check(CLI::ExistingFile);
    export_cmd->add_option("--split", split, "Override the split inferred from the file name");
    export_cmd->add_option("--checkpoint", ex.checkpoint, "Checkpoint")->required();
    export_cmd->add_option("--out", ex.out, "CSV path")->required();

    CodecOptions codec;
    std::string style = "annotation", direction = "encode";
    auto* codec_cmd = app.add_subcommand("codec", "Encode gold triplets to targets or decode targets to triplets");
    codec_cmd->add_option("--dataset", codec.dataset, "Sentence file")->required()->check(CLI::ExistingFile);
    codec_cmd->add_option("--style", style, "annotation or extraction")->check(CLI::IsMember({"annotation", "extraction"}));
    codec_cmd->add_option("--direction", direction, "encode or decode")->check(CLI::IsMember({"encode", "decode"}));
    codec_cmd->add_option("--targets", codec.targets, "Targets to decode, one per sentence")->check(CLI::ExistingFile);

    SynthOptions syn;
    std::optional<std::uint64_t> synth_seed;
    auto* synth_cmd = app.add_subcommand("synth", "Write a seeded synthetic corpus");
    synth_cmd->add_option("--out", syn.out, "Output file")->required();
    synth_cmd->add_option("--seed", synth_seed, "Seed (falls back to PAIRLAB_SEED)");
    synth_cmd->add_option("--sentences", syn.spec.sentences, "Sentence count");
    synth_cmd->add_option("--vocab", syn.spec.vocab_size, "Vocabulary size");
    synth_cmd->add_option("--min-aspects", syn.spec.min_aspects);
    synth_cmd->add_option("--max-aspects", syn.spec.max_aspects);
    synth_cmd->add_option("--min-opinions", syn.spec.min_opinions);
    synth_cmd->add_option("--max-opinions", syn.spec.max_opinions);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? ok : usage;
    }

    try {
        const auto split_override = parse_split(split);
        if (*stats_cmd) {
            stats.split = split_override;
            cmd_stats(stats, out);
        } else if (*train_cmd) {
            if (!profile.empty()) tr.profile = profile;
            tr.seed = train_seed;
            tr.command_line = command_line;
            cmd_train(tr, err);
        } else if (*compare_cmd) {
            cmp.split = split_override;
            if (cmp.seeds.empty())
                if (auto s = env_seed()) cmp.seeds = {*s};
            std::ostringstream tsv;
            cmd_compare(cmp, tsv);
            if (compare_out.empty())
                out << tsv.str();
            else
                write_file(compare_out, tsv.str());
        } else if (*export_cmd) {
            ex.split = split_override;
            cmd_export(ex);
        } else if (*codec_cmd) {
            codec.style = styles.at(style);
            codec.decode = direction == "decode";
            if (codec.decode && codec.targets.empty()) throw CLI::ValidationError("--targets", "required with --direction decode");
            cmd_codec(codec, out, err);
        } else if (*synth_cmd) {
            syn.seed = synth_seed.value_or(env_seed().value_or(0));
            cmd_synth(syn);
        }
    } catch (const CLI::Error& e) {
        err << "error: " << e.what() << '\n';
        return usage;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        if (e.kind() == ErrorKind::InvalidConfig) return usage;
        return is_numeric(e.kind()) ? numeric_failure : data_error;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return data_error;
    }
    return ok;
}

} // namespace pairlab::cli
