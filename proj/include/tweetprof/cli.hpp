#pragma once

// Command-line front end. Each subcommand parses flags, calls the library and
// writes results through io::write_atomic. run_command returns the process
// exit status: 0 success, 2 usage or config problems, 1 runtime failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "tweetprof/corpus.hpp"
#include "tweetprof/eval.hpp"
#include "tweetprof/gbdt.hpp"
#include "tweetprof/io.hpp"
#include "tweetprof/profile.hpp"
#include "tweetprof/recurrent.hpp"
#include "tweetprof/text.hpp"

namespace tweetprof {

// Usage-level failure: bad flags, missing or malformed config.
class UsageError : public Error {
 public:
  using Error::Error;
};

struct RunConfig {
  std::filesystem::path dataset;
  std::filesystem::path timelines;   // empty: no timelines
  std::filesystem::path pretrained;  // empty: seeded-uniform init
  std::string scheme = "fused-binary";
  ProfileMode mode = ProfileMode::timeline;
  SplitMode split = SplitMode::by_user;
  int k = 10;
  std::uint64_t seed = 1;
  std::size_t min_count = 1;
  unsigned threads = 1;
  RecurrentConfig recurrent;
  GBDTConfig gbdt;
  std::filesystem::path out_dir = "out";

  ExperimentConfig experiment() const {
    ExperimentConfig e;
    e.split = split;
    e.mode = mode;
    e.k = k;
    e.seed = seed;
    e.min_count = min_count;
    e.recurrent = recurrent;
    e.gbdt = gbdt;
    e.threads = threads;
    return e;
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, std::initializer_list<std::string_view> known,
                                const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto k : known) ok |= key == k;
    if (!ok) throw ConfigError("unknown key '" + key + "' in " + where);
  }
}

inline std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace detail

// Relative paths in the config are resolved against base_dir (the directory
// holding the config file).
inline RunConfig run_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  detail::reject_unknown_keys(j,
                              {"dataset", "timelines", "pretrained", "scheme", "mode", "split", "k", "seed", "min_count",
                               "threads", "recurrent", "gbdt", "out_dir"},
                              "run config");
  RunConfig c;
  try {
    if (!j.contains("dataset")) throw ConfigError("run config needs 'dataset'");
    c.dataset = detail::resolve(base_dir, j.at("dataset").get<std::string>());
    if (j.contains("timelines")) c.timelines = detail::resolve(base_dir, j.at("timelines").get<std::string>());
    if (j.contains("pretrained")) c.pretrained = detail::resolve(base_dir, j.at("pretrained").get<std::string>());
    c.scheme = j.value("scheme", c.scheme);
    if (j.contains("mode")) {
      if (!j.at("mode").is_string()) throw ConfigError("'mode' must be a single profile mode");
      c.mode = parse_profile_mode(j.at("mode").get<std::string>());
    }
    if (j.contains("split")) c.split = parse_split_mode(j.at("split").get<std::string>());
    c.k = j.value("k", c.k);
    c.seed = j.value("seed", c.seed);
    c.min_count = j.value("min_count", c.min_count);
    c.threads = j.value("threads", c.threads);
    if (j.contains("recurrent")) {
      detail::reject_unknown_keys(j.at("recurrent"),
                                  {"embed_dim", "hidden_dim", "dropout_embed", "dropout_lstm", "epochs", "batch_size",
                                   "learning_rate", "beta1", "beta2", "eps_adam", "max_seq_len"},
                                  "recurrent");
      c.recurrent = recurrent_config_from_json(j.at("recurrent"));
    }
    if (j.contains("gbdt")) {
      detail::reject_unknown_keys(j.at("gbdt"), {"n_rounds", "max_depth", "learning_rate", "min_samples_leaf", "lambda"},
                                  "gbdt");
      c.gbdt = gbdt_config_from_json(j.at("gbdt"));
    }
    if (j.contains("out_dir")) c.out_dir = detail::resolve(base_dir, j.at("out_dir").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  if (c.k < 2) throw ConfigError("k must be at least 2");
  scheme_by_name(c.scheme);
  c.recurrent.validate();
  c.gbdt.validate();
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw UsageError("config file not found: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  try {
    return run_config_from_json(j, path.parent_path());
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

// Checks that every referenced input exists.
inline void check_run_paths(const RunConfig& c) {
  auto need = [](const std::filesystem::path& p, const char* what) {
    if (!p.empty() && !std::filesystem::exists(p)) throw UsageError(std::string(what) + " not found: " + p.string());
  };
  need(c.dataset, "dataset");
  need(c.timelines, "timelines");
  need(c.pretrained, "pretrained embeddings");
}

inline Dataset load_run_dataset(const RunConfig& c) {
  Dataset ds = load_dataset(c.dataset, scheme_by_name(c.scheme));
  if (!c.timelines.empty()) ds.timelines = load_timelines(c.timelines);
  return ds;
}

inline std::string folds_to_tsv(const Dataset& ds, const FoldPlan& plan) {
  std::string out = "tweet_id\tfold\n";
  for (std::size_t i = 0; i < ds.tweets.size(); ++i) {
    out += ds.tweets[i].id + '\t' + std::to_string(plan.fold_of[i]) + '\n';
  }
  return out;
}

// Writes metrics.txt, metrics.json, bins.tsv, predictions.tsv and folds.tsv.
inline void write_eval_outputs(const std::filesystem::path& dir, const Dataset& ds, const ExperimentResult& r,
                               const ExperimentConfig& cfg) {
  std::string text = "scheme " + r.scheme.name() + ", mode " + std::string(to_string(r.mode)) + ", split by " +
                     std::string(to_string(r.split)) + ", k=" + std::to_string(cfg.k) + ", seed " +
                     std::to_string(cfg.seed) + "\n\n";
  text += render_metrics_text(r.overall);
  io::write_atomic(dir / "metrics.txt", text);
  io::write_atomic(dir / "metrics.json", experiment_to_json(r, cfg).dump(2) + "\n");
  io::write_atomic(dir / "bins.tsv", bins_to_tsv(r.bins));
  io::write_atomic(dir / "predictions.tsv", predictions_to_tsv(r.predictions, r.scheme));
  const Dataset kept = drop_rare_classes(ds, static_cast<std::size_t>(cfg.k));
  io::write_atomic(dir / "folds.tsv", folds_to_tsv(kept, experiment_fold_plan(kept, cfg)));
}

namespace detail {

inline void write_or_print(const std::string& path, const std::string& contents, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << contents;
  } else {
    io::write_atomic(path, contents);
  }
}

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  std::string config;
};

inline RunConfig configured_run(const Overrides& o) {
  RunConfig c = load_run_config(o.config);
  if (o.seed) c.seed = *o.seed;
  if (!o.out_dir.empty()) c.out_dir = o.out_dir;
  check_run_paths(c);
  return c;
}

inline std::optional<PretrainedTable> load_run_pretrained(const RunConfig& c) {
  if (c.pretrained.empty()) return std::nullopt;
  return load_pretrained_table(c.pretrained, c.recurrent.embed_dim);
}

}  // namespace detail

inline int run_command(int argc, const char* const* argv, std::ostream& out = std::cout,
                       std::ostream& err = std::cerr) {
  CLI::App app{"Tweet classification with user timeline profiles", "tweetprof"};
  app.require_subcommand(1);

  // synth
  SynthConfig synth;
  std::string synth_dir = ".", lexicon = std::string(TWEETPROF_DATA_DIR) + "/lexicon.txt";
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic tweets.jsonl and timelines.jsonl");
  synth_cmd->add_option("--out-dir", synth_dir, "output directory")->capture_default_str();
  synth_cmd->add_option("--lexicon", lexicon, "word list file")->capture_default_str();
  synth_cmd->add_option("--n-users", synth.n_users)->capture_default_str();
  synth_cmd->add_option("--n-tweets", synth.n_tweets)->capture_default_str();
  synth_cmd->add_option("--hate-fraction", synth.hate_class_fraction)->capture_default_str();
  synth_cmd->add_option("--hater-fraction", synth.hater_fraction)->capture_default_str();
  synth_cmd->add_option("--top-hater-share", synth.top_hater_share)->capture_default_str();
  synth_cmd->add_option("--activity-exponent", synth.activity_exponent)->capture_default_str();
  synth_cmd->add_option("--signal", synth.signal_strength, "hater timeline marker probability")->capture_default_str();
  synth_cmd->add_option("--content-signal", synth.content_signal)->capture_default_str();
  synth_cmd->add_option("--content-noise", synth.content_noise)->capture_default_str();
  synth_cmd->add_option("--short-timelines", synth.short_timeline_fraction)->capture_default_str();
  synth_cmd->add_option("--seed", synth.seed)->capture_default_str();

  // dist
  std::string dist_input, dist_scheme = "fused-binary", dist_hate_class = "hate", dist_output;
  bool dist_hate_only = false;
  auto* dist_cmd = app.add_subcommand("dist", "tweets-per-user distribution as rank\\tcount TSV");
  dist_cmd->add_option("--input", dist_input, "tweets JSONL")->required();
  dist_cmd->add_option("--scheme", dist_scheme)->capture_default_str();
  dist_cmd->add_flag("--hate-only", dist_hate_only, "count only tweets of --hate-class");
  dist_cmd->add_option("--hate-class", dist_hate_class)->capture_default_str();
  dist_cmd->add_option("--output,-o", dist_output, "output file (default stdout)");

  // fuse
  std::string fuse_base, fuse_base_scheme = "waseem-ternary", fuse_donor, fuse_donor_scheme = "davidson-ternary",
                         fuse_hate = "hate", fuse_output;
  std::size_t fuse_cap = 250;
  auto* fuse_cmd = app.add_subcommand("fuse", "merge a base dataset with a donor's hate tweets");
  fuse_cmd->add_option("--base", fuse_base)->required();
  fuse_cmd->add_option("--base-scheme", fuse_base_scheme)->capture_default_str();
  fuse_cmd->add_option("--donor", fuse_donor)->required();
  fuse_cmd->add_option("--donor-scheme", fuse_donor_scheme)->capture_default_str();
  fuse_cmd->add_option("--hate-class", fuse_hate)->capture_default_str();
  fuse_cmd->add_option("--cap", fuse_cap)->capture_default_str()->check(CLI::PositiveNumber);
  fuse_cmd->add_option("--output,-o", fuse_output)->required();

  // train / eval share the config plumbing
  detail::Overrides train_o, eval_o;
  auto add_run = [](CLI::App* cmd, detail::Overrides& o) {
    cmd->add_option("--config", o.config, "run config JSON")->required();
    cmd->add_option("--seed", o.seed, "override the config seed");
    cmd->add_option("--out-dir", o.out_dir, "override the config out_dir");
  };
  auto* train_cmd = app.add_subcommand("train", "fit both phases on the whole dataset and save the models");
  add_run(train_cmd, train_o);
  auto* eval_cmd = app.add_subcommand("eval", "cross-validate and write reports");
  add_run(eval_cmd, eval_o);

  // bins
  std::string bins_predictions, bins_scheme = "fused-binary", bins_timelines, bins_output;
  auto* bins_cmd = app.add_subcommand("bins", "timeline-length bin report from a predictions TSV");
  bins_cmd->add_option("--predictions", bins_predictions)->required();
  bins_cmd->add_option("--scheme", bins_scheme)->capture_default_str();
  bins_cmd->add_option("--timelines", bins_timelines, "recompute lengths from this timelines JSONL");
  bins_cmd->add_option("--output,-o", bins_output);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*synth_cmd) {
      const Dataset ds = synth_corpus(synth, load_lexicon(lexicon));
      const std::filesystem::path dir(synth_dir);
      io::write_atomic(dir / "tweets.jsonl", dataset_to_jsonl(ds));
      io::write_atomic(dir / "timelines.jsonl", timelines_to_jsonl(ds.timelines));
    } else if (*dist_cmd) {
      const Dataset ds = load_dataset(dist_input, scheme_by_name(dist_scheme));
      std::optional<std::string> cls;
      if (dist_hate_only) cls = dist_hate_class;
      detail::write_or_print(dist_output, distribution_to_tsv(activity_distribution(ds, dist_hate_only, cls)), out);
    } else if (*fuse_cmd) {
      const Dataset base = load_dataset(fuse_base, scheme_by_name(fuse_base_scheme));
      const Dataset donor = load_dataset(fuse_donor, scheme_by_name(fuse_donor_scheme));
      io::write_atomic(fuse_output, dataset_to_jsonl(fuse_datasets(base, donor, fuse_hate, fuse_cap)));
    } else if (*eval_cmd) {
      const RunConfig rc = detail::configured_run(eval_o);
      const Dataset ds = load_run_dataset(rc);
      const auto table = detail::load_run_pretrained(rc);
      ExperimentConfig cfg = rc.experiment();
      if (table) cfg.pretrained = &*table;
      const ExperimentResult r = run_experiment(ds, cfg);
      write_eval_outputs(rc.out_dir, ds, r, cfg);
      out << render_metrics_text(r.overall);
    } else if (*train_cmd) {
      const RunConfig rc = detail::configured_run(train_o);
      const Dataset ds = drop_rare_classes(load_run_dataset(rc), static_cast<std::size_t>(rc.k));
      const auto table = detail::load_run_pretrained(rc);
      ExperimentConfig cfg = rc.experiment();
      if (table) cfg.pretrained = &*table;
      std::vector<std::vector<std::string>> tokens;
      std::vector<int> labels;
      for (const auto& t : ds.tweets) {
        tokens.push_back(tokenize(t.text));
        labels.push_back(t.label);
      }
      const auto phase_one = detail::train_phase_one_model(tokens, labels, ds.scheme.size(), cfg, rc.seed);
      const EmbeddingMatrix emb = extract_embeddings(phase_one.model);
      std::vector<FeatureVector> x;
      for (const auto& t : ds.tweets) x.push_back(featurize(t, ds.timelines, rc.mode, phase_one.vocab, emb));
      const GBDTModel gbdt = fit_gbdt(x, labels, ds.scheme.size(), rc.gbdt);
      io::write_atomic(rc.out_dir / "checkpoint.json", checkpoint_to_json(phase_one.model, phase_one.vocab).dump() + "\n");
      io::write_atomic(rc.out_dir / "gbdt.json", gbdt_to_json(gbdt).dump() + "\n");
    } else if (*bins_cmd) {
      const auto scheme = scheme_by_name(bins_scheme);
      const auto records = load_predictions(bins_predictions, scheme);
      const BinReport b = bins_timelines.empty()
                              ? bin_by_timeline_length(records, scheme.size())
                              : bin_by_timeline_length(records, load_timelines(bins_timelines), scheme.size());
      detail::write_or_print(bins_output, bins_to_tsv(b), out);
    }
  } catch (const UsageError& e) {
    err << "tweetprof: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "tweetprof: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace tweetprof
