#pragma once

// Labeled tweet datasets, author timelines, dataset fusion, and a synthetic
// corpus generator with power-law user activity.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "tweetprof/error.hpp"
#include "tweetprof/io.hpp"
#include "tweetprof/rng.hpp"

namespace tweetprof {

inline constexpr std::size_t kMaxTimelineLength = 20;
inline constexpr std::size_t kDefaultFusionCap = 250;

class LabelScheme {
 public:
  LabelScheme() = default;
  LabelScheme(std::string name, std::vector<std::string> classes)
      : name_(std::move(name)), classes_(std::move(classes)) {
    if (classes_.size() < 2) throw SchemaError("label scheme '" + name_ + "' needs at least 2 classes");
    std::set<std::string_view> seen;
    for (const auto& c : classes_) {
      if (!seen.insert(c).second) throw SchemaError("label scheme '" + name_ + "' repeats class '" + c + "'");
    }
  }

  const std::string& name() const noexcept { return name_; }
  const std::vector<std::string>& classes() const noexcept { return classes_; }
  int size() const noexcept { return static_cast<int>(classes_.size()); }
  const std::string& class_name(int index) const { return classes_.at(static_cast<std::size_t>(index)); }

  std::optional<int> find(std::string_view cls) const noexcept {
    auto it = std::find(classes_.begin(), classes_.end(), cls);
    if (it == classes_.end()) return std::nullopt;
    return static_cast<int>(it - classes_.begin());
  }

  int index_of(std::string_view cls) const {
    if (auto i = find(cls)) return *i;
    throw SchemaError("unknown label '" + std::string(cls) + "' for scheme '" + name_ + "'");
  }

  friend bool operator==(const LabelScheme&, const LabelScheme&) = default;

 private:
  std::string name_;
  std::vector<std::string> classes_;
};

// Schemes used by the experiments. Binary schemes list the negative class first
// so that class index 1 is the positive (sigmoid) class.
inline LabelScheme waseem_binary() { return {"waseem-binary", {"none", "sexism"}}; }
inline LabelScheme waseem_ternary() { return {"waseem-ternary", {"none", "sexism", "racism"}}; }
inline LabelScheme davidson_ternary() { return {"davidson-ternary", {"hate", "offensive", "neither"}}; }
inline LabelScheme fused_binary() { return {"fused-binary", {"none", "hate"}}; }

inline LabelScheme scheme_by_name(std::string_view name) {
  for (auto s : {waseem_binary(), waseem_ternary(), davidson_ternary(), fused_binary()}) {
    if (s.name() == name) return s;
  }
  throw SchemaError("unknown label scheme '" + std::string(name) + "'");
}

struct Tweet {
  std::string id;
  std::string user_id;
  std::string text;
  int label = 0;

  friend bool operator==(const Tweet&, const Tweet&) = default;
};

// Most recent first.
struct UserTimeline {
  std::string user_id;
  std::vector<std::string> tweets;

  std::size_t length() const noexcept { return tweets.size(); }
  friend bool operator==(const UserTimeline&, const UserTimeline&) = default;
};

using TimelineMap = std::map<std::string, UserTimeline, std::less<>>;

struct Dataset {
  LabelScheme scheme;
  std::vector<Tweet> tweets;
  TimelineMap timelines;

  // Throws SchemaError / IntegrityError when an invariant is broken.
  void validate() const {
    std::unordered_set<std::string_view> ids;
    ids.reserve(tweets.size());
    for (const auto& t : tweets) {
      if (t.label < 0 || t.label >= scheme.size()) {
        throw SchemaError("tweet '" + t.id + "' has label index " + std::to_string(t.label) +
                          " outside scheme '" + scheme.name() + "'");
      }
      if (!ids.insert(t.id).second) throw IntegrityError("duplicate tweet id '" + t.id + "'");
    }
    for (const auto& [user, tl] : timelines) {
      if (tl.length() > kMaxTimelineLength) throw IntegrityError("timeline of '" + user + "' exceeds 20 tweets");
    }
  }

  std::size_t timeline_length(std::string_view user_id) const {
    auto it = timelines.find(user_id);
    return it == timelines.end() ? 0 : it->second.length();
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

namespace detail {

inline const std::string& required_string(const nlohmann::json& obj, const char* key, std::size_t line) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(std::string("missing field '") + key + "'", line);
  if (!it->is_string()) throw ParseError(std::string("field '") + key + "' must be a string", line);
  return it->get_ref<const std::string&>();
}

inline nlohmann::json parse_object(const std::string& line, std::size_t number) {
  nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
  if (obj.is_discarded()) throw ParseError("malformed JSON record", number);
  if (!obj.is_object()) throw ParseError("record must be a JSON object", number);
  return obj;
}

}  // namespace detail

// Tweet file: one JSON object per line with string fields id, user_id, text, label.
inline Dataset load_dataset(const std::filesystem::path& path, const LabelScheme& scheme) {
  Dataset ds;
  ds.scheme = scheme;
  std::unordered_set<std::string> ids;
  io::for_each_line(path, [&](const std::string& line, std::size_t number) {
    const auto obj = detail::parse_object(line, number);
    Tweet t;
    t.id = detail::required_string(obj, "id", number);
    t.user_id = detail::required_string(obj, "user_id", number);
    t.text = detail::required_string(obj, "text", number);
    const auto& label = detail::required_string(obj, "label", number);
    auto idx = scheme.find(label);
    if (!idx) {
      throw SchemaError("line " + std::to_string(number) + ": unknown label '" + label + "' for scheme '" +
                        scheme.name() + "'");
    }
    t.label = *idx;
    if (!ids.insert(t.id).second) {
      throw IntegrityError("line " + std::to_string(number) + ": duplicate tweet id '" + t.id + "'");
    }
    ds.tweets.push_back(std::move(t));
  });
  return ds;
}

// Timeline file: one JSON object per line, user_id plus a most-recent-first
// array of texts. Anything past the 20th entry is dropped.
inline TimelineMap load_timelines(const std::filesystem::path& path) {
  TimelineMap out;
  io::for_each_line(path, [&](const std::string& line, std::size_t number) {
    const auto obj = detail::parse_object(line, number);
    UserTimeline tl;
    tl.user_id = detail::required_string(obj, "user_id", number);
    auto it = obj.find("tweets");
    if (it == obj.end() || !it->is_array()) throw ParseError("field 'tweets' must be an array", number);
    for (const auto& item : *it) {
      if (!item.is_string()) throw ParseError("timeline entries must be strings", number);
      if (tl.tweets.size() == kMaxTimelineLength) break;
      tl.tweets.push_back(item.get<std::string>());
    }
    if (out.contains(tl.user_id)) {
      throw IntegrityError("line " + std::to_string(number) + ": duplicate timeline for user '" + tl.user_id + "'");
    }
    std::string key = tl.user_id;
    out.emplace(std::move(key), std::move(tl));
  });
  return out;
}

inline std::string dataset_to_jsonl(const Dataset& ds) {
  std::string out;
  for (const auto& t : ds.tweets) {
    nlohmann::ordered_json obj;
    obj["id"] = t.id;
    obj["user_id"] = t.user_id;
    obj["text"] = t.text;
    obj["label"] = ds.scheme.class_name(t.label);
    out += obj.dump();
    out += '\n';
  }
  return out;
}

inline std::string timelines_to_jsonl(const TimelineMap& timelines) {
  std::string out;
  for (const auto& [user, tl] : timelines) {
    nlohmann::ordered_json obj;
    obj["user_id"] = user;
    obj["tweets"] = tl.tweets;
    out += obj.dump();
    out += '\n';
  }
  return out;
}

// Classes named "none" or "neither" are the non-hate side when a multi-class
// scheme is collapsed to hate vs. non-hate; every other class counts as hate.
inline bool is_negative_class(std::string_view name) noexcept { return name == "none" || name == "neither"; }

// Base tweets are kept and collapsed to binary; donor tweets are kept only when
// labeled hate_class. Afterwards each (user, binary class) keeps at most `cap`
// tweets, first in input order (base before donor).
inline Dataset fuse_datasets(const Dataset& base, const Dataset& donor, std::string_view hate_class,
                             std::size_t cap = kDefaultFusionCap) {
  const auto donor_hate = donor.scheme.find(hate_class);
  if (!donor_hate) {
    throw SchemaError("class '" + std::string(hate_class) + "' not in donor scheme '" + donor.scheme.name() + "'");
  }
  if (cap < 1) throw InputError("fusion cap must be at least 1");

  const LabelScheme scheme = fused_binary();
  const int hate = scheme.index_of("hate");
  const int none = scheme.index_of("none");

  bool base_has_negative = false;
  for (const auto& c : base.scheme.classes()) base_has_negative |= is_negative_class(c);
  if (!base_has_negative) {
    throw SchemaError("base scheme '" + base.scheme.name() + "' has no 'none'/'neither' class to map to non-hate");
  }

  Dataset out;
  out.scheme = scheme;
  std::map<std::pair<std::string, int>, std::size_t> per_user_class;
  std::unordered_set<std::string> ids;

  auto admit = [&](const Tweet& t, int binary_label) {
    auto& n = per_user_class[{t.user_id, binary_label}];
    if (n >= cap) return;
    if (!ids.insert(t.id).second) throw IntegrityError("tweet id '" + t.id + "' present in both datasets");
    ++n;
    Tweet copy = t;
    copy.label = binary_label;
    out.tweets.push_back(std::move(copy));
  };

  for (const auto& t : base.tweets) {
    admit(t, is_negative_class(base.scheme.class_name(t.label)) ? none : hate);
  }
  for (const auto& t : donor.tweets) {
    if (t.label == *donor_hate) admit(t, hate);
  }

  out.timelines = base.timelines;
  for (const auto& [user, tl] : donor.timelines) out.timelines.try_emplace(user, tl);
  return out;
}

// Users ranked by (matching) tweet count, descending; ranks start at 1.
using ActivityDistribution = std::vector<std::pair<std::size_t, std::size_t>>;

inline ActivityDistribution activity_distribution(const Dataset& ds, bool only_hate,
                                                  std::optional<std::string_view> hate_class = std::nullopt) {
  std::optional<int> hate;
  if (only_hate) {
    if (!hate_class) throw InputError("hate-only distribution requires a hate class");
    hate = ds.scheme.index_of(*hate_class);
  }
  std::map<std::string_view, std::size_t> counts;
  for (const auto& t : ds.tweets) {
    if (hate && t.label != *hate) continue;
    ++counts[t.user_id];
  }
  std::vector<std::pair<std::string_view, std::size_t>> users(counts.begin(), counts.end());
  std::stable_sort(users.begin(), users.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  ActivityDistribution out;
  out.reserve(users.size());
  for (std::size_t i = 0; i < users.size(); ++i) out.emplace_back(i + 1, users[i].second);
  return out;
}

inline std::string distribution_to_tsv(const ActivityDistribution& dist) {
  std::string out = "rank\tcount\n";
  for (const auto& [rank, count] : dist) {
    out += std::to_string(rank);
    out += '\t';
    out += std::to_string(count);
    out += '\n';
  }
  return out;
}

// Word lists for the synthetic generator.
struct Lexicon {
  std::vector<std::string> hate_markers;
  std::vector<std::string> neutral;     // dataset tweet filler
  std::vector<std::string> background;  // timeline tweet filler
};

// Lines are "<kind> <token>" with kind marker, neutral or background; '#'
// starts a comment line.
inline Lexicon load_lexicon(const std::filesystem::path& path) {
  Lexicon lex;
  io::for_each_line(path, [&](const std::string& line, std::size_t number) {
    if (line.front() == '#') return;
    const auto sep = line.find_first_of(" \t");
    if (sep == std::string::npos) throw ParseError("expected '<kind> <token>'", number);
    const std::string kind = line.substr(0, sep);
    const auto start = line.find_first_not_of(" \t", sep);
    if (start == std::string::npos) throw ParseError("missing token", number);
    std::string token = line.substr(start);
    while (!token.empty() && (token.back() == ' ' || token.back() == '\t')) token.pop_back();
    if (kind == "marker") lex.hate_markers.push_back(std::move(token));
    else if (kind == "neutral") lex.neutral.push_back(std::move(token));
    else if (kind == "background") lex.background.push_back(std::move(token));
    else throw ParseError("unknown lexicon kind '" + kind + "'", number);
  });
  if (lex.hate_markers.empty() || lex.neutral.empty()) {
    throw ConfigError("lexicon " + path.string() + " needs at least one marker and one neutral token");
  }
  return lex;
}

struct SynthConfig {
  std::size_t n_users = 150;
  std::size_t n_tweets = 2000;
  double hate_class_fraction = 0.35;
  double hater_fraction = 0.4;
  // Share of all hate tweets authored by the most prolific hater.
  double top_hater_share = 0.1;
  // User at activity rank r (0-based) has weight (r + 1)^-activity_exponent.
  double activity_exponent = 0.8;
  // Probability that a hater's timeline tweet carries a hate marker.
  double signal_strength = 0.9;
  // Probability that a hate-labeled tweet itself carries a hate marker.
  double content_signal = 0.5;
  // Probability that a non-hate tweet carries a hate marker anyway.
  double content_noise = 0.05;
  // Fraction of users whose timeline is shorter than 20 (length uniform in
  // 1..19). Empty timelines are left out: a zero vector would single those
  // users out even when timelines carry no signal.
  double short_timeline_fraction = 0.1;
  // Timeline filler comes from the background word list when set, otherwise
  // from the same neutral words as dataset tweets. With shared filler every
  // timeline average is a distinct per-user fingerprint even at
  // signal_strength 0.
  bool background_timelines = true;
  std::size_t min_words = 6;
  std::size_t max_words = 14;
  std::uint64_t seed = 1;

  void validate() const {
    auto unit = [](double v, const char* name) {
      if (!(v >= 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
    };
    unit(hate_class_fraction, "hate_class_fraction");
    unit(hater_fraction, "hater_fraction");
    unit(top_hater_share, "top_hater_share");
    unit(signal_strength, "signal_strength");
    unit(content_signal, "content_signal");
    unit(content_noise, "content_noise");
    unit(short_timeline_fraction, "short_timeline_fraction");
    if (n_users < 1) throw ConfigError("n_users must be at least 1");
    if (n_tweets < n_users) throw ConfigError("n_tweets must be at least n_users");
    if (!(activity_exponent > 0.0) || !std::isfinite(activity_exponent)) {
      throw ConfigError("activity_exponent must be positive");
    }
    if (min_words < 1 || max_words < min_words) throw ConfigError("need 1 <= min_words <= max_words");
  }
};

namespace detail {

inline std::string numbered(char prefix, std::size_t i, int width) {
  std::string digits = std::to_string(i);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return std::string(1, prefix) + digits;
}

inline std::string synth_text(Rng& rng, const Lexicon& lex, std::span<const std::string> filler, const SynthConfig& cfg,
                              bool with_marker) {
  const std::size_t n = cfg.min_words + rng.below(cfg.max_words - cfg.min_words + 1);
  std::vector<std::string_view> words(n);
  for (auto& w : words) w = filler[rng.below(filler.size())];
  if (with_marker) words[rng.below(n)] = lex.hate_markers[rng.below(lex.hate_markers.size())];
  std::string text;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) text += ' ';
    text += words[i];
  }
  return text;
}

}  // namespace detail

// Generates a fused-binary dataset and a timeline for every user.
//
//  1. Every user gets one tweet; the rest are assigned by sampling users with
//     weight (rank + 1)^-activity_exponent.
//  2. round(hater_fraction * n_users) users are haters: the most active user
//     plus a random sample of the others.
//  3. H = round(hate_class_fraction * n_tweets) tweets are labeled hate. The
//     most active hater authors round(top_hater_share * H) of them (all of them
//     when it is the only hater); the rest are spread uniformly over the other
//     haters' tweets. Each side is capped by the tweets it authors and the
//     excess moves to the other side; only H above all haters' tweets is an
//     error.
//  4. Tweet texts are neutral words, with one marker inserted with probability
//     content_signal (hate) or content_noise (non-hate).
//  5. Timeline tweets are filler words (background list by default) and, for
//     haters only, carry a marker with probability signal_strength.
//
// All randomness comes from one Rng seeded with config.seed, consumed in a
// fixed order, so the output is a pure function of (config, lexicon).
inline Dataset synth_corpus(const SynthConfig& cfg, const Lexicon& lex) {
  cfg.validate();
  if (lex.hate_markers.empty() || lex.neutral.empty()) throw ConfigError("lexicon is empty");
  if (cfg.background_timelines && lex.background.empty()) throw ConfigError("lexicon has no background words");
  const std::span<const std::string> timeline_filler = cfg.background_timelines ? lex.background : lex.neutral;

  const std::size_t n_users = cfg.n_users;
  const std::size_t n_haters = static_cast<std::size_t>(std::llround(cfg.hater_fraction * static_cast<double>(n_users)));
  const std::size_t n_hate = static_cast<std::size_t>(std::llround(cfg.hate_class_fraction * static_cast<double>(cfg.n_tweets)));
  if (n_hate > 0 && n_haters == 0) throw ConfigError("hate tweets requested but hater_fraction yields no haters");

  Rng rng(cfg.seed);

  std::vector<double> cumulative(n_users);
  double acc = 0.0;
  for (std::size_t r = 0; r < n_users; ++r) {
    acc += std::pow(static_cast<double>(r + 1), -cfg.activity_exponent);
    cumulative[r] = acc;
  }
  std::vector<std::size_t> counts(n_users, 1);
  for (std::size_t i = n_users; i < cfg.n_tweets; ++i) ++counts[rng.pick_cumulative(cumulative)];

  std::size_t top = 0;
  for (std::size_t u = 1; u < n_users; ++u) {
    if (counts[u] > counts[top]) top = u;
  }
  std::vector<bool> hater(n_users, false);
  std::vector<std::size_t> others;
  if (n_haters > 0) {
    hater[top] = true;
    std::vector<std::size_t> pool;
    for (std::size_t u = 0; u < n_users; ++u) {
      if (u != top) pool.push_back(u);
    }
    shuffle(std::span(pool), rng);
    for (std::size_t i = 0; i + 1 < n_haters && i < pool.size(); ++i) {
      hater[pool[i]] = true;
      others.push_back(pool[i]);
    }
    std::sort(others.begin(), others.end());
  }

  // Tweet slots grouped by author: slot_user[s] is the author of slot s.
  std::vector<std::size_t> first_slot(n_users + 1, 0);
  for (std::size_t u = 0; u < n_users; ++u) first_slot[u + 1] = first_slot[u] + counts[u];
  std::vector<bool> is_hate(cfg.n_tweets, false);

  std::vector<std::size_t> other_slots;
  for (auto u : others) {
    for (std::size_t s = first_slot[u]; s < first_slot[u + 1]; ++s) other_slots.push_back(s);
  }
  if (n_hate > counts[top] + other_slots.size()) {
    throw ConfigError("infeasible config: " + std::to_string(n_hate) + " hate tweets but haters author only " +
                      std::to_string(counts[top] + other_slots.size()));
  }
  std::size_t top_hate = others.empty() ? n_hate
                                        : static_cast<std::size_t>(std::llround(cfg.top_hater_share * static_cast<double>(n_hate)));
  top_hate = std::min(top_hate, counts[top]);
  // Whatever the other haters cannot hold goes back to the top hater.
  if (n_hate - top_hate > other_slots.size()) top_hate = n_hate - other_slots.size();
  for (std::size_t s = 0; s < top_hate; ++s) is_hate[first_slot[top] + s] = true;

  const std::size_t rest = n_hate - top_hate;
  shuffle(std::span(other_slots), rng);
  for (std::size_t i = 0; i < rest; ++i) is_hate[other_slots[i]] = true;

  Dataset ds;
  ds.scheme = fused_binary();
  const int hate_label = ds.scheme.index_of("hate");
  const int none_label = ds.scheme.index_of("none");

  std::vector<std::size_t> order(cfg.n_tweets);
  for (std::size_t s = 0; s < order.size(); ++s) order[s] = s;
  shuffle(std::span(order), rng);

  std::vector<std::size_t> slot_user(cfg.n_tweets);
  for (std::size_t u = 0; u < n_users; ++u) {
    for (std::size_t s = first_slot[u]; s < first_slot[u + 1]; ++s) slot_user[s] = u;
  }

  const int user_width = static_cast<int>(std::to_string(n_users).size());
  const int tweet_width = static_cast<int>(std::to_string(cfg.n_tweets).size());
  ds.tweets.reserve(cfg.n_tweets);
  for (std::size_t i = 0; i < order.size(); ++i) {
    const std::size_t s = order[i];
    const bool hate = is_hate[s];
    const bool marker = rng.bernoulli(hate ? cfg.content_signal : cfg.content_noise);
    Tweet t;
    t.id = detail::numbered('t', i + 1, tweet_width);
    t.user_id = detail::numbered('u', slot_user[s] + 1, user_width);
    t.text = detail::synth_text(rng, lex, lex.neutral, cfg, marker);
    t.label = hate ? hate_label : none_label;
    ds.tweets.push_back(std::move(t));
  }

  for (std::size_t u = 0; u < n_users; ++u) {
    UserTimeline tl;
    tl.user_id = detail::numbered('u', u + 1, user_width);
    std::size_t len = kMaxTimelineLength;
    if (rng.bernoulli(cfg.short_timeline_fraction)) len = 1 + rng.below(kMaxTimelineLength - 1);
    for (std::size_t j = 0; j < len; ++j) {
      const bool marker = hater[u] && rng.bernoulli(cfg.signal_strength);
      tl.tweets.push_back(detail::synth_text(rng, lex, timeline_filler, cfg, marker));
    }
    std::string key = tl.user_id;
    ds.timelines.emplace(std::move(key), std::move(tl));
  }
  return ds;
}

}  // namespace tweetprof
