#pragma once

// Tweet vectors, timeline profile vectors, and the concatenated features fed
// to the boosted trees.

#include <Eigen/Core>

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tweetprof/corpus.hpp"
#include "tweetprof/error.hpp"
#include "tweetprof/io.hpp"
#include "tweetprof/text.hpp"

namespace tweetprof {

enum class ProfileMode { baseline, timeline };

inline std::string_view to_string(ProfileMode m) noexcept { return m == ProfileMode::baseline ? "baseline" : "timeline"; }

inline ProfileMode parse_profile_mode(std::string_view s) {
  if (s == "baseline") return ProfileMode::baseline;
  if (s == "timeline") return ProfileMode::timeline;
  throw ConfigError("unknown profile mode '" + std::string(s) + "' (expected baseline or timeline)");
}

using FeatureVector = std::vector<double>;

inline std::size_t feature_length(ProfileMode mode, int dim) noexcept {
  return static_cast<std::size_t>(mode == ProfileMode::baseline ? dim : 2 * dim);
}

inline Eigen::VectorXd tweet_vector(const Tweet& tweet, const Vocabulary& vocab, const EmbeddingMatrix& emb) {
  const auto tokens = tokenize(tweet.text);
  return average_embedding(tokens, vocab, emb);
}

// All tokens of all timeline tweets pooled into one average, so every token
// carries equal weight regardless of which tweet it came from.
inline std::vector<std::string> timeline_tokens(const UserTimeline& timeline) {
  std::vector<std::string> pooled;
  for (const auto& text : timeline.tweets) {
    auto toks = tokenize(text);
    pooled.insert(pooled.end(), std::make_move_iterator(toks.begin()), std::make_move_iterator(toks.end()));
  }
  return pooled;
}

inline Eigen::VectorXd timeline_vector(const UserTimeline* timeline, const Vocabulary& vocab, const EmbeddingMatrix& emb) {
  if (!timeline) return Eigen::VectorXd::Zero(emb.dim());
  const auto pooled = timeline_tokens(*timeline);
  return average_embedding(pooled, vocab, emb);
}

inline Eigen::VectorXd timeline_vector(const UserTimeline& timeline, const Vocabulary& vocab, const EmbeddingMatrix& emb) {
  return timeline_vector(&timeline, vocab, emb);
}

// Concatenation from precomputed parts; timeline part ignored in baseline mode.
inline FeatureVector concat_features(const Eigen::VectorXd& tweet_vec, const Eigen::VectorXd& timeline_vec,
                                     ProfileMode mode) {
  FeatureVector out(tweet_vec.data(), tweet_vec.data() + tweet_vec.size());
  if (mode == ProfileMode::timeline) {
    if (timeline_vec.size() != tweet_vec.size()) throw ShapeError("tweet and timeline vectors differ in dimension");
    out.insert(out.end(), timeline_vec.data(), timeline_vec.data() + timeline_vec.size());
  }
  return out;
}

// Baseline: the tweet vector (d). Timeline: tweet vector then the author's
// timeline vector (2d); authors without a timeline get zeros.
inline FeatureVector featurize(const Tweet& tweet, const TimelineMap& timelines, ProfileMode mode,
                               const Vocabulary& vocab, const EmbeddingMatrix& emb) {
  const Eigen::VectorXd tv = tweet_vector(tweet, vocab, emb);
  if (mode == ProfileMode::baseline) return concat_features(tv, tv, mode);
  auto it = timelines.find(tweet.user_id);
  const UserTimeline* tl = it == timelines.end() ? nullptr : &it->second;
  return concat_features(tv, timeline_vector(tl, vocab, emb), mode);
}

// One row per tweet: id, then the feature values, tab separated.
inline std::string features_to_tsv(std::span<const Tweet> tweets, std::span<const FeatureVector> features) {
  if (tweets.size() != features.size()) throw ShapeError("tweets and feature rows differ in count");
  std::string out;
  for (std::size_t i = 0; i < tweets.size(); ++i) {
    out += tweets[i].id;
    for (double v : features[i]) {
      out += '\t';
      out += io::fixed(v, 9);
    }
    out += '\n';
  }
  return out;
}

}  // namespace tweetprof
