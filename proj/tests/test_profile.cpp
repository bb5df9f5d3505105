#include <gtest/gtest.h>

#include "tweetprof/profile.hpp"

using namespace tweetprof;

namespace {

struct Fixture {
  Vocabulary vocab;
  EmbeddingMatrix emb;
  Fixture() {
    const int a = vocab.add("a"), b = vocab.add("b");
    emb = EmbeddingMatrix(vocab.size(), 2);
    emb.values.row(a) << 1, 0;
    emb.values.row(b) << 0, 1;
    emb.values.row(Vocabulary::kUnknown) << 0.3, -0.2;
  }
};

}  // namespace

TEST(Profile, TweetVector) {
  Fixture f;
  const Tweet t{"1", "u", "a b", 0};
  const auto v = tweet_vector(t, f.vocab, f.emb);
  EXPECT_DOUBLE_EQ(v(0), 0.5);
  EXPECT_DOUBLE_EQ(v(1), 0.5);
  EXPECT_EQ(v, average_embedding(tokenize(t.text), f.vocab, f.emb));
  EXPECT_TRUE(tweet_vector(Tweet{"2", "u", "", 0}, f.vocab, f.emb).isZero(0.0));
}

TEST(Profile, TimelineVectorPoolsTokens) {
  Fixture f;
  const UserTimeline tl{"u", {"a", "b b"}};
  const auto v = timeline_vector(tl, f.vocab, f.emb);
  EXPECT_NEAR(v(0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(v(1), 2.0 / 3.0, 1e-15);
  const UserTimeline same{"u", {"b", "b", "b"}};
  EXPECT_EQ(timeline_vector(same, f.vocab, f.emb), f.emb.row(f.vocab.index("b")).transpose());
  EXPECT_TRUE(timeline_vector(nullptr, f.vocab, f.emb).isZero(0.0));
  EXPECT_TRUE(timeline_vector(UserTimeline{"u", {}}, f.vocab, f.emb).isZero(0.0));
}

TEST(Profile, TimelineVectorInvariantWithinTweetPermutation) {
  Fixture f;
  const UserTimeline x{"u", {"a b b zz", "b a"}};
  const UserTimeline y{"u", {"zz b a b", "a b"}};
  EXPECT_EQ(timeline_vector(x, f.vocab, f.emb), timeline_vector(y, f.vocab, f.emb));
}

TEST(Profile, FeaturizeLengthsAndPrefix) {
  Vocabulary vocab;
  vocab.add("a");
  vocab.add("b");
  const auto emb = init_embeddings(vocab, 200, 3);
  TimelineMap timelines;
  timelines.emplace("u1", UserTimeline{"u1", {"a a", "b"}});
  const Tweet with{"1", "u1", "a b c", 0};
  const Tweet without{"2", "u2", "b", 0};
  const auto base = featurize(with, timelines, ProfileMode::baseline, vocab, emb);
  const auto full = featurize(with, timelines, ProfileMode::timeline, vocab, emb);
  ASSERT_EQ(base.size(), 200u);
  ASSERT_EQ(full.size(), 400u);
  EXPECT_EQ(feature_length(ProfileMode::timeline, 200), 400u);
  EXPECT_TRUE(std::equal(base.begin(), base.end(), full.begin()));
  const auto tv = tweet_vector(with, vocab, emb);
  for (int i = 0; i < 200; ++i) EXPECT_EQ(base[static_cast<std::size_t>(i)], tv(i));

  const auto missing = featurize(without, timelines, ProfileMode::timeline, vocab, emb);
  for (std::size_t i = 200; i < 400; ++i) EXPECT_EQ(missing[i], 0.0);
  for (double v : full) EXPECT_TRUE(std::isfinite(v));
}

TEST(Profile, ModeParsing) {
  EXPECT_EQ(parse_profile_mode("baseline"), ProfileMode::baseline);
  EXPECT_EQ(parse_profile_mode("timeline"), ProfileMode::timeline);
  EXPECT_THROW(parse_profile_mode("both"), ConfigError);
}

TEST(Profile, FeaturesTsv) {
  const std::vector<Tweet> tweets{{"t1", "u", "", 0}};
  const std::vector<FeatureVector> rows{{0.5, -1.0}};
  EXPECT_EQ(features_to_tsv(tweets, rows), "t1\t0.500000000\t-1.000000000\n");
}
