#pragma once

// Cross-validation by tweet or by user, confusion-based precision/recall/F1
// with micro and macro averages, timeline-length bins, and the end-to-end
// two-phase experiment.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "tweetprof/corpus.hpp"
#include "tweetprof/error.hpp"
#include "tweetprof/gbdt.hpp"
#include "tweetprof/io.hpp"
#include "tweetprof/profile.hpp"
#include "tweetprof/recurrent.hpp"
#include "tweetprof/rng.hpp"
#include "tweetprof/text.hpp"

namespace tweetprof {

// ---------------------------------------------------------------------------
// Fold plans
// ---------------------------------------------------------------------------

enum class SplitMode { by_tweet, by_user };

inline std::string_view to_string(SplitMode m) noexcept { return m == SplitMode::by_tweet ? "tweet" : "user"; }

inline SplitMode parse_split_mode(std::string_view s) {
  if (s == "tweet" || s == "by-tweet") return SplitMode::by_tweet;
  if (s == "user" || s == "by-user") return SplitMode::by_user;
  throw ConfigError("unknown split mode '" + std::string(s) + "' (expected tweet or user)");
}

struct FoldPlan {
  int k = 0;
  SplitMode mode = SplitMode::by_tweet;
  std::uint64_t seed = 0;
  std::vector<int> fold_of;                    // aligned with dataset.tweets
  std::map<std::string, int> assignment;       // tweet id -> fold

  std::vector<std::size_t> test_indices(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      if (fold_of[i] == fold) out.push_back(i);
    }
    return out;
  }

  std::vector<std::size_t> train_indices(int fold) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < fold_of.size(); ++i) {
      if (fold_of[i] != fold) out.push_back(i);
    }
    return out;
  }
};

namespace detail {

inline FoldPlan make_plan(const Dataset& ds, int k, SplitMode mode, std::uint64_t seed) {
  FoldPlan plan;
  plan.k = k;
  plan.mode = mode;
  plan.seed = seed;
  plan.fold_of.assign(ds.tweets.size(), -1);
  return plan;
}

inline void fill_assignment(const Dataset& ds, FoldPlan& plan) {
  for (std::size_t i = 0; i < ds.tweets.size(); ++i) plan.assignment.emplace(ds.tweets[i].id, plan.fold_of[i]);
}

}  // namespace detail

// Seeded shuffle of tweets, then round-robin: fold sizes differ by at most one.
inline FoldPlan split_by_tweet(const Dataset& ds, int k, std::uint64_t seed) {
  if (k < 2 || static_cast<std::size_t>(k) > ds.tweets.size()) {
    throw InputError("k=" + std::to_string(k) + " out of range for " + std::to_string(ds.tweets.size()) + " tweets");
  }
  FoldPlan plan = detail::make_plan(ds, k, SplitMode::by_tweet, seed);
  std::vector<std::size_t> order(ds.tweets.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  shuffle(std::span(order), rng);
  for (std::size_t j = 0; j < order.size(); ++j) plan.fold_of[order[j]] = static_cast<int>(j % static_cast<std::size_t>(k));
  detail::fill_assignment(ds, plan);
  return plan;
}

// Seeded shuffle of users (starting from sorted ids), round-robin users to
// folds; every tweet follows its author.
inline FoldPlan split_by_user(const Dataset& ds, int k, std::uint64_t seed) {
  std::set<std::string_view> unique;
  for (const auto& t : ds.tweets) unique.insert(t.user_id);
  if (k < 2 || static_cast<std::size_t>(k) > unique.size()) {
    throw InputError("k=" + std::to_string(k) + " out of range for " + std::to_string(unique.size()) + " users");
  }
  std::vector<std::string_view> users(unique.begin(), unique.end());
  Rng rng(seed);
  shuffle(std::span(users), rng);
  std::unordered_map<std::string_view, int> fold_of_user;
  for (std::size_t j = 0; j < users.size(); ++j) fold_of_user[users[j]] = static_cast<int>(j % static_cast<std::size_t>(k));
  FoldPlan plan = detail::make_plan(ds, k, SplitMode::by_user, seed);
  for (std::size_t i = 0; i < ds.tweets.size(); ++i) plan.fold_of[i] = fold_of_user.at(ds.tweets[i].user_id);
  detail::fill_assignment(ds, plan);
  return plan;
}

inline FoldPlan make_fold_plan(const Dataset& ds, SplitMode mode, int k, std::uint64_t seed) {
  return mode == SplitMode::by_tweet ? split_by_tweet(ds, k, seed) : split_by_user(ds, k, seed);
}

// Users present in both the test fold and its training complement.
inline std::set<std::string> leaked_users(const Dataset& ds, const FoldPlan& plan, int fold) {
  std::set<std::string> test, train, out;
  for (std::size_t i = 0; i < ds.tweets.size(); ++i) {
    (plan.fold_of[i] == fold ? test : train).insert(ds.tweets[i].user_id);
  }
  std::set_intersection(test.begin(), test.end(), train.begin(), train.end(), std::inserter(out, out.end()));
  return out;
}

// ---------------------------------------------------------------------------
// Confusion matrices and metrics
// ---------------------------------------------------------------------------

// Rows are gold classes, columns predicted classes.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int n_classes = 2)
      : n_(n_classes), counts_(static_cast<std::size_t>(n_classes) * static_cast<std::size_t>(n_classes), 0) {
    if (n_classes < 1) throw InputError("confusion matrix needs at least one class");
  }

  int n_classes() const noexcept { return n_; }
  long at(int gold, int predicted) const { return counts_.at(index(gold, predicted)); }
  void add(int gold, int predicted, long count = 1) {
    if (count < 0) throw InputError("confusion counts must be non-negative");
    counts_.at(index(gold, predicted)) += count;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
    if (other.n_ != n_) throw ShapeError("confusion matrices differ in class count");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
    return *this;
  }

  long total() const noexcept {
    long s = 0;
    for (long c : counts_) s += c;
    return s;
  }
  long correct() const noexcept {
    long s = 0;
    for (int c = 0; c < n_; ++c) s += counts_[index(c, c)];
    return s;
  }
  long true_positives(int c) const { return at(c, c); }
  long false_positives(int c) const {
    long s = 0;
    for (int g = 0; g < n_; ++g) s += g == c ? 0 : at(g, c);
    return s;
  }
  long false_negatives(int c) const {
    long s = 0;
    for (int p = 0; p < n_; ++p) s += p == c ? 0 : at(c, p);
    return s;
  }
  long support(int c) const { return true_positives(c) + false_negatives(c); }

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::size_t index(int gold, int predicted) const {
    if (gold < 0 || gold >= n_ || predicted < 0 || predicted >= n_) throw InputError("class index out of range");
    return static_cast<std::size_t>(gold) * static_cast<std::size_t>(n_) + static_cast<std::size_t>(predicted);
  }

  int n_;
  std::vector<long> counts_;
};

// Percentages; NaN marks an undefined value (zero denominator).
struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassMetrics {
  std::string name;
  long support = 0;
  Prf prf;
};

struct MetricsReport {
  std::vector<ClassMetrics> classes;
  Prf micro;
  Prf macro;
  long total = 0;
};

inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

// P = tp/(tp+fp), R = tp/(tp+fn), F1 = 2tp/(2tp+fp+fn) which equals 2PR/(P+R);
// F1 is undefined whenever P or R is.
inline Prf prf_from_counts(long tp, long fp, long fn) {
  Prf out;
  out.precision = (tp + fp) == 0 ? kUndefined : 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fp);
  out.recall = (tp + fn) == 0 ? kUndefined : 100.0 * static_cast<double>(tp) / static_cast<double>(tp + fn);
  out.f1 = (std::isnan(out.precision) || std::isnan(out.recall))
               ? kUndefined
               : 100.0 * static_cast<double>(2 * tp) / static_cast<double>(2 * tp + fp + fn);
  return out;
}

namespace detail {

enum class UndefinedPolicy { as_zero, propagate };

inline Prf macro_average(std::span<const ClassMetrics> classes, UndefinedPolicy policy) {
  Prf sum{0.0, 0.0, 0.0};
  if (classes.empty()) return {kUndefined, kUndefined, kUndefined};
  auto acc = [policy](double& s, double v) {
    if (std::isnan(v)) {
      if (policy == UndefinedPolicy::propagate) s = kUndefined;
      return;
    }
    s += v;
  };
  for (const auto& c : classes) {
    acc(sum.precision, c.prf.precision);
    acc(sum.recall, c.prf.recall);
    acc(sum.f1, c.prf.f1);
  }
  const double n = static_cast<double>(classes.size());
  return {sum.precision / n, sum.recall / n, sum.f1 / n};
}

inline std::vector<ClassMetrics> per_class(const ConfusionMatrix& cm, std::span<const std::string> names) {
  std::vector<ClassMetrics> out;
  for (int c = 0; c < cm.n_classes(); ++c) {
    ClassMetrics m;
    m.name = static_cast<std::size_t>(c) < names.size() ? names[static_cast<std::size_t>(c)] : std::to_string(c);
    m.support = cm.support(c);
    m.prf = prf_from_counts(cm.true_positives(c), cm.false_positives(c), cm.false_negatives(c));
    out.push_back(std::move(m));
  }
  return out;
}

}  // namespace detail

// Micro from pooled counts (equal to accuracy for single-label data); macro is
// the unweighted class mean with undefined components counted as 0.
inline std::pair<Prf, Prf> micro_macro(const ConfusionMatrix& cm) {
  const long tp = cm.correct();
  const long wrong = cm.total() - tp;
  const Prf micro = prf_from_counts(tp, wrong, wrong);
  const auto classes = detail::per_class(cm, {});
  return {micro, detail::macro_average(classes, detail::UndefinedPolicy::as_zero)};
}

inline MetricsReport metrics_from_confusion(const ConfusionMatrix& cm, std::span<const std::string> class_names = {}) {
  MetricsReport r;
  r.classes = detail::per_class(cm, class_names);
  std::tie(r.micro, r.macro) = micro_macro(cm);
  r.total = cm.total();
  return r;
}

// ---------------------------------------------------------------------------
// Timeline-length bins
// ---------------------------------------------------------------------------

struct PredictionRecord {
  std::string tweet_id;
  std::string user_id;
  int gold = 0;
  int predicted = 0;
  int timeline_length = 0;
};

struct TimelineBin {
  const char* label;
  int lo, hi;  // inclusive
};

inline constexpr TimelineBin kTimelineBins[] = {{"0-5", 0, 5}, {"6-10", 6, 10}, {"11-15", 11, 15}, {"16-20", 16, 20}};

struct BinReport {
  struct Row {
    std::string label;
    long count = 0;
    Prf macro;  // NaN whenever any class component is undefined
  };
  std::vector<Row> rows;

  long total() const noexcept {
    long s = 0;
    for (const auto& r : rows) s += r.count;
    return s;
  }
};

inline int bin_index(int timeline_length) {
  for (int b = 0; b < 4; ++b) {
    if (timeline_length >= kTimelineBins[b].lo && timeline_length <= kTimelineBins[b].hi) return b;
  }
  throw InputError("timeline length " + std::to_string(timeline_length) + " outside 0..20");
}

// Bins by each record's timeline_length. Within a bin the macro average
// propagates undefined components, so a class that is never predicted (or
// never present) shows up as NAN in the row.
inline BinReport bin_by_timeline_length(std::span<const PredictionRecord> records, int n_classes) {
  std::vector<ConfusionMatrix> cms(4, ConfusionMatrix(n_classes));
  for (const auto& r : records) cms[static_cast<std::size_t>(bin_index(r.timeline_length))].add(r.gold, r.predicted);
  BinReport report;
  for (int b = 0; b < 4; ++b) {
    const auto& cm = cms[static_cast<std::size_t>(b)];
    BinReport::Row row;
    row.label = kTimelineBins[b].label;
    row.count = cm.total();
    const auto classes = detail::per_class(cm, {});
    row.macro = cm.total() == 0 ? Prf{kUndefined, kUndefined, kUndefined}
                                : detail::macro_average(classes, detail::UndefinedPolicy::propagate);
    report.rows.push_back(std::move(row));
  }
  return report;
}

// Looks up each author's timeline length (absent -> 0) before binning.
inline BinReport bin_by_timeline_length(std::span<const PredictionRecord> records, const TimelineMap& timelines,
                                        int n_classes) {
  std::vector<PredictionRecord> filled(records.begin(), records.end());
  for (auto& r : filled) {
    auto it = timelines.find(r.user_id);
    r.timeline_length = it == timelines.end() ? 0 : static_cast<int>(it->second.length());
  }
  return bin_by_timeline_length(filled, n_classes);
}

// ---------------------------------------------------------------------------
// Rendering
// ---------------------------------------------------------------------------

inline std::string format_percent(double v) { return std::isnan(v) ? "NAN" : io::fixed(v, 1); }

namespace detail {

inline nlohmann::ordered_json percent_json(double v) {
  if (std::isnan(v)) return nullptr;
  return v;
}

inline nlohmann::ordered_json prf_json(const Prf& p) {
  nlohmann::ordered_json j;
  j["precision"] = percent_json(p.precision);
  j["recall"] = percent_json(p.recall);
  j["f1"] = percent_json(p.f1);
  return j;
}

inline std::string pad_left(std::string s, std::size_t width) {
  if (s.size() < width) s.insert(0, width - s.size(), ' ');
  return s;
}

inline std::string pad_right(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

}  // namespace detail

inline std::string render_metrics_text(const MetricsReport& r) {
  std::size_t name_w = 9;  // "Macro Avg"
  for (const auto& c : r.classes) name_w = std::max(name_w, c.name.size());
  std::ostringstream out;
  auto line = [&](const std::string& name, const std::string& n, const Prf& p) {
    out << detail::pad_right(name, name_w) << "  " << detail::pad_left(n, 8) << "  "
        << detail::pad_left(format_percent(p.precision), 6) << "  " << detail::pad_left(format_percent(p.recall), 6)
        << "  " << detail::pad_left(format_percent(p.f1), 6) << '\n';
  };
  out << detail::pad_right("Label", name_w) << "  " << detail::pad_left("Tweets", 8) << "  " << detail::pad_left("P", 6)
      << "  " << detail::pad_left("R", 6) << "  " << detail::pad_left("F1", 6) << '\n';
  for (const auto& c : r.classes) line(c.name, std::to_string(c.support), c.prf);
  line("Micro Avg", "", r.micro);
  line("Macro Avg", std::to_string(r.total), r.macro);
  return out.str();
}

inline nlohmann::ordered_json metrics_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  auto classes = nlohmann::ordered_json::array();
  for (const auto& c : r.classes) {
    nlohmann::ordered_json cj;
    cj["label"] = c.name;
    cj["support"] = c.support;
    cj.update(detail::prf_json(c.prf));
    classes.push_back(std::move(cj));
  }
  j["classes"] = std::move(classes);
  j["micro"] = detail::prf_json(r.micro);
  j["macro"] = detail::prf_json(r.macro);
  j["total"] = r.total;
  return j;
}

inline std::string bins_to_tsv(const BinReport& b) {
  std::string out = "timeline\ttweets\tP\tR\tF1\n";
  for (const auto& row : b.rows) {
    out += row.label + '\t' + std::to_string(row.count) + '\t' + format_percent(row.macro.precision) + '\t' +
           format_percent(row.macro.recall) + '\t' + format_percent(row.macro.f1) + '\n';
  }
  return out;
}

inline nlohmann::ordered_json bins_to_json(const BinReport& b) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& row : b.rows) {
    nlohmann::ordered_json j;
    j["timeline"] = row.label;
    j["tweets"] = row.count;
    j.update(detail::prf_json(row.macro));
    arr.push_back(std::move(j));
  }
  return arr;
}

inline std::string predictions_to_tsv(std::span<const PredictionRecord> records, const LabelScheme& scheme) {
  std::string out = "tweet_id\tuser_id\tgold\tpredicted\ttimeline_length\n";
  for (const auto& r : records) {
    out += r.tweet_id + '\t' + r.user_id + '\t' + scheme.class_name(r.gold) + '\t' + scheme.class_name(r.predicted) +
           '\t' + std::to_string(r.timeline_length) + '\n';
  }
  return out;
}

// Reads the predictions TSV written above; the header row is required.
// Timeline lengths are read too but callers may recompute them.
inline std::vector<PredictionRecord> load_predictions(const std::filesystem::path& path, const LabelScheme& scheme) {
  std::vector<PredictionRecord> out;
  bool header = true;
  io::for_each_line(path, [&](const std::string& line, std::size_t number) {
    std::vector<std::string> f;
    std::string field;
    std::istringstream ss(line);
    while (std::getline(ss, field, '\t')) f.push_back(field);
    if (header) {
      if (f.size() < 4 || f[0] != "tweet_id") throw ParseError("expected predictions header", number);
      header = false;
      return;
    }
    if (f.size() != 5) throw ParseError("expected 5 tab-separated fields", number);
    PredictionRecord r;
    r.tweet_id = f[0];
    r.user_id = f[1];
    r.gold = scheme.index_of(f[2]);
    r.predicted = scheme.index_of(f[3]);
    try {
      r.timeline_length = std::stoi(f[4]);
    } catch (const std::exception&) {
      throw ParseError("bad timeline length '" + f[4] + "'", number);
    }
    out.push_back(std::move(r));
  });
  return out;
}

// ---------------------------------------------------------------------------
// Experiment
// ---------------------------------------------------------------------------

class FoldError : public Error {
 public:
  FoldError(int fold, const std::string& what) : Error("fold " + std::to_string(fold) + ": " + what), fold_(fold) {}
  int fold() const noexcept { return fold_; }

 private:
  int fold_;
};

struct ExperimentConfig {
  SplitMode split = SplitMode::by_tweet;
  ProfileMode mode = ProfileMode::baseline;
  int k = 10;
  std::uint64_t seed = 1;
  std::size_t min_count = 1;
  RecurrentConfig recurrent;
  GBDTConfig gbdt;
  const PretrainedTable* pretrained = nullptr;  // seeded-uniform init when null
  unsigned threads = 1;
};

struct ExperimentResult {
  LabelScheme scheme;
  ProfileMode mode = ProfileMode::baseline;
  SplitMode split = SplitMode::by_tweet;
  ConfusionMatrix pooled;
  MetricsReport overall;
  BinReport bins;
  std::vector<MetricsReport> per_fold;
  std::vector<PredictionRecord> predictions;  // dataset order
};

// Removes classes with fewer than min_count tweets and renumbers the rest in
// scheme order. Fails if fewer than two classes survive.
inline Dataset drop_rare_classes(const Dataset& ds, std::size_t min_count) {
  std::vector<std::size_t> counts(static_cast<std::size_t>(ds.scheme.size()), 0);
  for (const auto& t : ds.tweets) ++counts[static_cast<std::size_t>(t.label)];
  std::vector<int> remap(counts.size(), -1);
  std::vector<std::string> kept;
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] >= min_count) {
      remap[c] = static_cast<int>(kept.size());
      kept.push_back(ds.scheme.class_name(static_cast<int>(c)));
    }
  }
  if (kept.size() == counts.size()) return ds;
  if (kept.size() < 2) throw InputError("fewer than two classes have at least " + std::to_string(min_count) + " tweets");
  Dataset out;
  out.scheme = LabelScheme(ds.scheme.name(), kept);
  out.timelines = ds.timelines;
  for (const auto& t : ds.tweets) {
    const int l = remap[static_cast<std::size_t>(t.label)];
    if (l < 0) continue;
    Tweet c = t;
    c.label = l;
    out.tweets.push_back(std::move(c));
  }
  return out;
}

// Phase one output for a single fold.
struct FoldEmbeddings {
  Vocabulary vocab;
  EmbeddingMatrix embeddings;
};

namespace detail {

struct PhaseOneModel {
  Vocabulary vocab;
  RecurrentModel model;
};

inline PhaseOneModel train_phase_one_model(std::span<const std::vector<std::string>> train_tokens,
                                           std::span<const int> train_labels, int n_classes,
                                           const ExperimentConfig& cfg, std::uint64_t fold_seed) {
  PhaseOneModel out;
  out.vocab = build_vocab_from_tokens(train_tokens, cfg.min_count);
  const std::uint64_t emb_seed = derive_seed(fold_seed, 1);
  EmbeddingMatrix init = cfg.pretrained ? embeddings_from_table(*cfg.pretrained, out.vocab, emb_seed)
                                        : init_embeddings(out.vocab, cfg.recurrent.embed_dim, emb_seed);
  RecurrentConfig rcfg = cfg.recurrent;
  rcfg.n_classes = n_classes;
  rcfg.seed = derive_seed(fold_seed, 2);
  std::vector<LabeledSequence> sequences;
  sequences.reserve(train_tokens.size());
  for (std::size_t j = 0; j < train_tokens.size(); ++j) {
    sequences.push_back({out.vocab.encode(train_tokens[j]), train_labels[j]});
  }
  out.model = train_recurrent(sequences, rcfg, init);
  return out;
}

inline FoldEmbeddings train_phase_one(std::span<const std::vector<std::string>> train_tokens,
                                      std::span<const int> train_labels, int n_classes, const ExperimentConfig& cfg,
                                      std::uint64_t fold_seed) {
  auto p = train_phase_one_model(train_tokens, train_labels, n_classes, cfg, fold_seed);
  return {std::move(p.vocab), extract_embeddings(p.model)};
}

struct FoldOutput {
  std::vector<ConfusionMatrix> per_mode;
  std::vector<std::vector<std::pair<std::size_t, int>>> predictions;  // (tweet index, class) per mode
};

struct ExperimentInputs {
  const Dataset& ds;
  const FoldPlan& plan;
  const ExperimentConfig& cfg;
  std::span<const ProfileMode> modes;
  const std::vector<std::vector<std::string>>& tweet_tokens;
  const std::unordered_map<std::string, std::vector<std::string>>& timeline_tokens;
};

inline FoldOutput run_fold(const ExperimentInputs& in, int fold) {
  const auto& ds = in.ds;
  const int n_classes = ds.scheme.size();
  const auto train = in.plan.train_indices(fold);
  const auto test = in.plan.test_indices(fold);
  const std::uint64_t fold_seed = derive_seed(in.cfg.seed, static_cast<std::uint64_t>(fold));

  std::vector<std::vector<std::string>> train_tokens;
  std::vector<int> train_labels;
  train_tokens.reserve(train.size());
  for (auto i : train) {
    train_tokens.push_back(in.tweet_tokens[i]);
    train_labels.push_back(ds.tweets[i].label);
  }
  const FoldEmbeddings phase_one = train_phase_one(train_tokens, train_labels, n_classes, in.cfg, fold_seed);
  const Vocabulary& vocab = phase_one.vocab;
  const EmbeddingMatrix& emb = phase_one.embeddings;

  std::unordered_map<std::string_view, Eigen::VectorXd> profile_cache;
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(emb.dim());
  auto profile = [&](const std::string& user) -> const Eigen::VectorXd& {
    auto it = profile_cache.find(user);
    if (it != profile_cache.end()) return it->second;
    auto tl = in.timeline_tokens.find(user);
    Eigen::VectorXd v = tl == in.timeline_tokens.end() ? zero : average_embedding(tl->second, vocab, emb);
    return profile_cache.emplace(user, std::move(v)).first->second;
  };

  std::vector<Eigen::VectorXd> tweet_vecs(ds.tweets.size());
  for (auto i : train) tweet_vecs[i] = average_embedding(in.tweet_tokens[i], vocab, emb);
  for (auto i : test) tweet_vecs[i] = average_embedding(in.tweet_tokens[i], vocab, emb);

  FoldOutput out;
  for (ProfileMode mode : in.modes) {
    auto features_of = [&](std::size_t i) {
      const auto& t = ds.tweets[i];
      return mode == ProfileMode::timeline ? concat_features(tweet_vecs[i], profile(t.user_id), mode)
                                           : concat_features(tweet_vecs[i], tweet_vecs[i], mode);
    };
    std::vector<FeatureVector> x;
    std::vector<int> y;
    x.reserve(train.size());
    for (auto i : train) {
      x.push_back(features_of(i));
      y.push_back(ds.tweets[i].label);
    }
    const GBDTModel gbdt = fit_gbdt(x, y, n_classes, in.cfg.gbdt);
    ConfusionMatrix cm(n_classes);
    std::vector<std::pair<std::size_t, int>> preds;
    for (auto i : test) {
      const int p = predict_class(gbdt, features_of(i));
      cm.add(ds.tweets[i].label, p);
      preds.emplace_back(i, p);
    }
    out.per_mode.push_back(std::move(cm));
    out.predictions.push_back(std::move(preds));
  }
  return out;
}

}  // namespace detail

// Runs the full cross-validation once per requested mode. Phase one (vocabulary,
// recurrent training, embedding extraction) depends only on the fold, so it is
// shared between modes; each mode gets exactly the result a separate run would.
// Folds run on up to cfg.threads threads; results do not depend on the count.
inline std::vector<ExperimentResult> run_experiments(const Dataset& input, const ExperimentConfig& cfg,
                                                     std::span<const ProfileMode> modes) {
  if (cfg.k < 2) throw InputError("k must be at least 2");
  cfg.recurrent.validate();
  cfg.gbdt.validate();
  if (cfg.pretrained && cfg.pretrained->dim != cfg.recurrent.embed_dim) {
    throw ConfigError("pretrained embedding dim does not match recurrent embed_dim");
  }
  input.validate();
  const Dataset ds = drop_rare_classes(input, static_cast<std::size_t>(cfg.k));
  const FoldPlan plan = make_fold_plan(ds, cfg.split, cfg.k, derive_seed(cfg.seed, 0xF01D));

  std::vector<std::vector<std::string>> tweet_tokens;
  tweet_tokens.reserve(ds.tweets.size());
  for (const auto& t : ds.tweets) tweet_tokens.push_back(tokenize(t.text));
  std::unordered_map<std::string, std::vector<std::string>> timeline_tokens_by_user;
  for (const auto& [user, tl] : ds.timelines) timeline_tokens_by_user.emplace(user, timeline_tokens(tl));

  const detail::ExperimentInputs in{ds, plan, cfg, modes, tweet_tokens, timeline_tokens_by_user};
  std::vector<detail::FoldOutput> outputs(static_cast<std::size_t>(cfg.k));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cfg.k));
  auto work = [&](int fold) {
    try {
      outputs[static_cast<std::size_t>(fold)] = detail::run_fold(in, fold);
    } catch (...) {
      errors[static_cast<std::size_t>(fold)] = std::current_exception();
    }
  };
  const unsigned threads = std::max(1u, std::min(cfg.threads, static_cast<unsigned>(cfg.k)));
  if (threads == 1) {
    for (int f = 0; f < cfg.k; ++f) work(f);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (int f = static_cast<int>(w); f < cfg.k; f += static_cast<int>(threads)) work(f);
      });
    }
    for (auto& t : pool) t.join();
  }
  for (int f = 0; f < cfg.k; ++f) {
    if (!errors[static_cast<std::size_t>(f)]) continue;
    try {
      std::rethrow_exception(errors[static_cast<std::size_t>(f)]);
    } catch (const std::exception& e) {
      throw FoldError(f, e.what());
    }
  }

  std::vector<ExperimentResult> results;
  for (std::size_t m = 0; m < modes.size(); ++m) {
    ExperimentResult r;
    r.scheme = ds.scheme;
    r.mode = modes[m];
    r.split = cfg.split;
    r.pooled = ConfusionMatrix(ds.scheme.size());
    r.predictions.resize(ds.tweets.size());
    for (int f = 0; f < cfg.k; ++f) {
      const auto& out = outputs[static_cast<std::size_t>(f)];
      r.pooled += out.per_mode[m];
      r.per_fold.push_back(metrics_from_confusion(out.per_mode[m], ds.scheme.classes()));
      for (const auto& [i, p] : out.predictions[m]) {
        const auto& t = ds.tweets[i];
        r.predictions[i] = {t.id, t.user_id, t.label, p, static_cast<int>(ds.timeline_length(t.user_id))};
      }
    }
    r.overall = metrics_from_confusion(r.pooled, ds.scheme.classes());
    r.bins = bin_by_timeline_length(r.predictions, ds.scheme.size());
    results.push_back(std::move(r));
  }
  return results;
}

// The vocabulary and fine-tuned embeddings that run_experiments builds for one
// fold. Only training-fold tweets are read. `ds` must already have rare
// classes dropped, as run_experiments does before planning.
inline FoldEmbeddings train_fold_embeddings(const Dataset& ds, const FoldPlan& plan, int fold,
                                            const ExperimentConfig& cfg) {
  std::vector<std::vector<std::string>> tokens;
  std::vector<int> labels;
  for (auto i : plan.train_indices(fold)) {
    tokens.push_back(tokenize(ds.tweets[i].text));
    labels.push_back(ds.tweets[i].label);
  }
  return detail::train_phase_one(tokens, labels, ds.scheme.size(), cfg,
                                 derive_seed(cfg.seed, static_cast<std::uint64_t>(fold)));
}

inline FoldPlan experiment_fold_plan(const Dataset& ds, const ExperimentConfig& cfg) {
  return make_fold_plan(ds, cfg.split, cfg.k, derive_seed(cfg.seed, 0xF01D));
}

inline ExperimentResult run_experiment(const Dataset& ds, const ExperimentConfig& cfg) {
  const ProfileMode mode[] = {cfg.mode};
  return std::move(run_experiments(ds, cfg, mode).front());
}

inline nlohmann::ordered_json experiment_to_json(const ExperimentResult& r, const ExperimentConfig& cfg) {
  nlohmann::ordered_json j;
  j["scheme"] = r.scheme.name();
  j["classes"] = r.scheme.classes();
  j["profile_mode"] = std::string(to_string(r.mode));
  j["split"] = std::string(to_string(r.split));
  j["k"] = cfg.k;
  j["seed"] = cfg.seed;
  j["overall"] = metrics_to_json(r.overall);
  auto folds = nlohmann::ordered_json::array();
  for (const auto& f : r.per_fold) folds.push_back(metrics_to_json(f));
  j["folds"] = std::move(folds);
  j["bins"] = bins_to_json(r.bins);
  return j;
}

}  // namespace tweetprof
