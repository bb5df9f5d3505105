// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fail.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <sstream>

#include "gbdt_fixtures.hpp"
#include "model_fixtures.hpp"
#include "oracles.hpp"
#include "test_util.hpp"
#include "tweetprof/tweetprof.hpp"

using namespace tweetprof;

namespace {

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, bool ok, const std::string& what, const std::string& detail, Clock::time_point start) {
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  std::printf("%s criterion %d: %s (%s; %.1fs)\n", ok ? "PASS" : "FAIL", id, what.c_str(), detail.c_str(), secs);
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(double v, int decimals = 3) { return io::fixed(v, decimals); }

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

// 1 -----------------------------------------------------------------------
void gradient_correctness() {
  const auto start = Clock::now();
  double worst = 0.0;
  Rng rng(1);
  int models = 0;
  for (int classes : {2, 3}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed, ++models) {
      const auto m = fixtures::random_model(seed + 1000 * static_cast<std::uint64_t>(classes), classes, 8, 30, 8);
      const LabeledSequence ex{fixtures::random_tokens(rng, 30, 10),
                               static_cast<int>(rng.below(static_cast<std::uint64_t>(classes)))};
      worst = std::max(worst, gradient_check(m, ex, 1e-5));
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  report(1, worst < 1e-4 && secs < 60, "gradient check, d=h=8, |V|=30, eps=1e-5, both heads",
         std::to_string(models) + " models, max rel err " + sci(worst), start);
}

// 2 -----------------------------------------------------------------------
void gbdt_oracle() {
  const auto start = Clock::now();
  int matched = 0, monotone = 0;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto t = fixtures::random_table(seed, 2);
    GBDTConfig cfg;
    cfg.max_depth = 1;
    cfg.n_rounds = 25;
    const auto model = fit_gbdt(t.x, t.y, 2, cfg);
    double n1 = 0;
    for (int y : t.y) n1 += y;
    const double p = n1 / static_cast<double>(t.y.size());
    std::vector<double> g, h;
    for (int y : t.y) {
      g.push_back(p - y);
      h.push_back(p * (1 - p));
    }
    const auto want = oracle::brute_force_stump(t.x, g, h, cfg.lambda, cfg.min_samples_leaf);
    const auto& root = model.rounds[0][0].root();
    matched += root.feature == want.feature && (want.feature < 0 || root.threshold == want.threshold);
    const auto loss = staged_training_loss(model, t.x, t.y);
    bool ok = true;
    for (std::size_t r = 1; r < loss.size(); ++r) ok &= loss[r] <= loss[r - 1] + 1e-9;
    monotone += ok;
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  report(2, matched == 50 && monotone == 50 && secs < 60, "first-round split matches brute-force oracle; loss monotone",
         std::to_string(matched) + "/50 splits, " + std::to_string(monotone) + "/50 monotone", start);
}

// 3 -----------------------------------------------------------------------
void metric_identities() {
  const auto start = Clock::now();
  Rng rng(3);
  int ok = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 2 + static_cast<int>(rng.below(4));
    ConfusionMatrix cm(n);
    const auto draws = 1 + rng.below(300);
    for (std::uint64_t i = 0; i < draws; ++i) {
      cm.add(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))), static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
    }
    const auto r = metrics_from_confusion(cm);
    const double acc = 100.0 * static_cast<double>(cm.correct()) / static_cast<double>(cm.total());
    double sum = 0;
    for (const auto& c : r.classes) sum += std::isnan(c.prf.f1) ? 0.0 : c.prf.f1;
    const bool micro = std::abs(r.micro.precision - acc) <= 1e-12 && std::abs(r.micro.recall - acc) <= 1e-12 &&
                       std::abs(r.micro.f1 - acc) <= 1e-12;
    ok += micro && r.macro.f1 == sum / static_cast<double>(n);
  }
  const auto hand = prf_from_counts(3, 1, 1);
  const bool hand_ok = format_percent(hand.precision) == "75.0" && format_percent(hand.recall) == "75.0" &&
                       format_percent(hand.f1) == "75.0";
  report(3, ok == 100 && hand_ok, "micro P=R=F1=accuracy, macro F1 = class mean, 3/1/1 -> 75.0",
         std::to_string(ok) + "/100 matrices, hand example " + (hand_ok ? "75.0/75.0/75.0" : "wrong"), start);
}

// 4 -----------------------------------------------------------------------
void split_by_user_guarantee() {
  const auto start = Clock::now();
  Rng rng(4);
  int ok = 0;
  for (std::uint64_t trial = 0; trial < 100; ++trial) {
    const auto users = 2 + rng.below(40);
    const auto tweets = users + rng.below(200);
    Dataset ds;
    ds.scheme = waseem_binary();
    for (std::uint64_t i = 0; i < tweets; ++i) {
      ds.tweets.push_back({"t" + std::to_string(i), "u" + std::to_string(i < users ? i : rng.below(users)), "",
                           static_cast<int>(rng.below(2))});
    }
    const int k = 2 + static_cast<int>(rng.below(std::min<std::uint64_t>(users - 1, 9)));
    const auto plan = split_by_user(ds, k, trial);
    bool good = true;
    std::vector<int> seen(ds.tweets.size(), 0);
    for (int f = 0; f < k; ++f) {
      good &= leaked_users(ds, plan, f).empty();
      for (auto i : plan.test_indices(f)) ++seen[i];
    }
    for (int s : seen) good &= s == 1;
    ok += good;
  }
  report(4, ok == 100, "user-disjoint folds that partition all tweets", std::to_string(ok) + "/100 datasets", start);
}

// 5, 6, 7 -------------------------------------------------------------------
ExperimentConfig directional_config(std::uint64_t seed) {
  ExperimentConfig c;
  c.split = SplitMode::by_user;
  c.k = 10;
  c.seed = seed;
  c.recurrent.embed_dim = 32;
  c.recurrent.hidden_dim = 32;
  c.recurrent.max_seq_len = 16;
  return c;
}

struct ModePair {
  double baseline = 0, timeline = 0;
  ExperimentResult timeline_result;
};

ModePair run_pair(std::uint64_t seed, double signal, const Lexicon& lex) {
  SynthConfig sc;
  sc.n_tweets = 2000;
  sc.n_users = 150;
  sc.signal_strength = signal;
  sc.seed = seed;
  const Dataset ds = synth_corpus(sc, lex);
  const ProfileMode modes[] = {ProfileMode::baseline, ProfileMode::timeline};
  auto res = run_experiments(ds, directional_config(seed), modes);
  return {res[0].overall.macro.f1, res[1].overall.macro.f1, std::move(res[1])};
}

std::optional<ExperimentResult> directional(const Lexicon& lex) {
  const auto start = Clock::now();
  bool ok = true;
  std::string detail;
  std::optional<ExperimentResult> keep;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    auto p = run_pair(seed, 0.9, lex);
    ok &= p.timeline - p.baseline >= 5.0;
    detail += (seed > 1 ? ", " : "") + std::string("seed ") + std::to_string(seed) + ": " + fmt(p.baseline, 1) + " -> " +
              fmt(p.timeline, 1);
    if (!keep) keep = std::move(p.timeline_result);
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  report(5, ok && secs < 600, "signal 0.9, 2000 tweets / 150 users, 10-fold by user: timeline macro F1 >= baseline + 5",
         detail, start);
  return keep;
}

void null_check(const Lexicon& lex) {
  const auto start = Clock::now();
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto p = run_pair(seed, 0.0, lex);
    ok &= std::abs(p.timeline - p.baseline) <= 2.0;
    detail += (seed > 1 ? ", " : "") + std::string("seed ") + std::to_string(seed) + ": " + fmt(p.baseline, 1) + " vs " +
              fmt(p.timeline, 1);
  }
  report(6, ok, "signal 0: |timeline - baseline| macro F1 <= 2", detail, start);
}

void bin_conformance(const std::optional<ExperimentResult>& run) {
  const auto start = Clock::now();
  // A bin where class 1 is never predicted.
  std::vector<PredictionRecord> recs{{"1", "a", 0, 0, 7}, {"2", "a", 1, 0, 7}, {"3", "b", 1, 1, 18}, {"4", "b", 0, 0, 18}};
  const auto tsv = bins_to_tsv(bin_by_timeline_length(recs, 2));
  std::istringstream in(tsv);
  std::string header, row;
  std::getline(in, header);
  std::vector<std::string> labels;
  bool nan_row = false;
  while (std::getline(in, row)) {
    labels.push_back(row.substr(0, row.find('\t')));
    if (row == "6-10\t2\tNAN\t50.0\tNAN") nan_row = true;
  }
  const bool labels_ok = labels == std::vector<std::string>{"0-5", "6-10", "11-15", "16-20"};
  bool sums = true;
  if (run) sums = run->bins.total() == run->pooled.total() && run->bins.rows.size() == 4;
  report(7, nan_row && labels_ok && sums, "bins 0-5/6-10/11-15/16-20, NAN cells, counts sum to total",
         std::string("NAN row ") + (nan_row ? "ok" : "missing") + ", experiment bins " +
             (run ? std::to_string(run->bins.total()) + "/" + std::to_string(run->pooled.total()) : "n/a"),
         start);
}

// 8, 9 ----------------------------------------------------------------------
int sh(const std::string& cmd) { return std::system(cmd.c_str()); }

std::string quote(const std::filesystem::path& p) { return "'" + p.string() + "'"; }

void determinism(const testutil::TempDir& dir) {
  const auto start = Clock::now();
  const std::string cli = TWEETPROF_CLI;
  bool ok = sh(quote(cli) + " synth --out-dir " + quote(dir.path()) + " --n-users 60 --n-tweets 600 --seed 8") == 0;
  testutil::write_file(dir / "run.json", R"({
  "dataset": "tweets.jsonl",
  "timelines": "timelines.jsonl",
  "mode": "timeline",
  "split": "user",
  "k": 5,
  "seed": 8,
  "threads": 2,
  "recurrent": {"embed_dim": 16, "hidden_dim": 16, "max_seq_len": 16, "epochs": 3},
  "gbdt": {"n_rounds": 40}
})");
  for (const char* out : {"out1", "out2"}) {
    ok &= sh(quote(cli) + " eval --config " + quote(dir / "run.json") + " --out-dir " + quote(dir / out) + " > /dev/null") == 0;
  }
  int identical = 0, files = 0;
  for (const char* f : {"metrics.txt", "metrics.json", "bins.tsv", "predictions.tsv", "folds.tsv"}) {
    ++files;
    try {
      identical += io::read_file(dir / "out1" / f) == io::read_file(dir / "out2" / f);
    } catch (const std::exception&) {
    }
  }
  report(8, ok && identical == files, "two eval runs with the same config and seed give byte-identical reports",
         std::to_string(identical) + "/" + std::to_string(files) + " files identical", start);
}

void distribution(const testutil::TempDir& dir, const Lexicon& lex) {
  const auto start = Clock::now();
  double worst_share = 1.0;
  bool monotone = true;
  const std::string cli = TWEETPROF_CLI;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    SynthConfig sc;
    sc.hate_class_fraction = 0.1;
    sc.hater_fraction = 0.05;
    sc.top_hater_share = 0.96;
    sc.activity_exponent = 1.0;
    sc.seed = seed;
    const Dataset ds = synth_corpus(sc, lex);
    const auto dist = activity_distribution(ds, true, "hate");
    long total = 0;
    for (const auto& [rank, count] : dist) total += static_cast<long>(count);
    worst_share = std::min(worst_share, dist.empty() ? 0.0 : static_cast<double>(dist[0].second) / static_cast<double>(total));

    const auto sub = dir / ("dist" + std::to_string(seed));
    std::filesystem::create_directories(sub);
    io::write_atomic(sub / "tweets.jsonl", dataset_to_jsonl(ds));
    monotone &= sh(quote(cli) + " dist --input " + quote(sub / "tweets.jsonl") + " --hate-only --hate-class hate -o " +
                   quote(sub / "dist.tsv")) == 0;
    std::istringstream in(io::read_file(sub / "dist.tsv"));
    std::string line;
    std::getline(in, line);
    long prev = std::numeric_limits<long>::max();
    while (std::getline(in, line)) {
      const long c = std::stol(line.substr(line.find('\t') + 1));
      monotone &= c <= prev;
      prev = c;
    }
  }
  report(9, worst_share >= 0.9 && monotone, "top_hater_share 0.96: top user >= 90% of hate tweets, dist non-increasing",
         "min top share " + fmt(100 * worst_share, 1) + "% over 3 seeds, dist " + (monotone ? "monotone" : "not monotone"),
         start);
}

}  // namespace

int main() {
  try {
    const Lexicon lex = load_lexicon(testutil::lexicon_path());
    testutil::TempDir dir;
    gradient_correctness();
    gbdt_oracle();
    metric_identities();
    split_by_user_guarantee();
    const auto run = directional(lex);
    null_check(lex);
    bin_conformance(run);
    determinism(dir);
    distribution(dir, lex);
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 1;
  }
  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
