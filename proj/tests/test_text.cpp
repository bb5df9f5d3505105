#include <gtest/gtest.h>

#include "test_util.hpp"
#include "tweetprof/rng.hpp"
#include "tweetprof/text.hpp"

using namespace tweetprof;
using testutil::TempDir;
using testutil::write_file;
using Tokens = std::vector<std::string>;

TEST(Tokenize, MentionsAndPunctuation) {
  EXPECT_EQ(tokenize(".@USER1 @USER2 when was she good?"),
            (Tokens{".", "<mention>", "<mention>", "when", "was", "she", "good", "?"}));
}

TEST(Tokenize, UrlsAndHashtags) {
  EXPECT_EQ(tokenize("Check https://t.co/x #FeminismIsAwful"), (Tokens{"check", "<url>", "#feminismisawful"}));
  EXPECT_EQ(tokenize("see www.Example.com/A?b=1 now"), (Tokens{"see", "<url>", "now"}));
}

TEST(Tokenize, EdgeCases) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize(" \t\n ").empty());
  EXPECT_EQ(tokenize("a  \t b"), (Tokens{"a", "b"}));
  EXPECT_EQ(tokenize("@ # !!"), (Tokens{"@", "#", "!", "!"}));
  EXPECT_EQ(tokenize("don't"), (Tokens{"don", "'", "t"}));
  EXPECT_EQ(tokenize("Caf\xC3\xA9 OK"), (Tokens{"caf\xC3\xA9", "ok"}));
}

TEST(BuildVocab, ThresholdAndSpecials) {
  const std::vector<std::string> corpus{"a a b"};
  const auto v = build_vocab(corpus, 2);
  EXPECT_TRUE(v.contains("a"));
  EXPECT_FALSE(v.contains("b"));
  EXPECT_EQ(v.size(), 3);
  EXPECT_EQ(v.token(Vocabulary::kUnknown), "<unk>");
  EXPECT_EQ(v.token(Vocabulary::kPadding), "<pad>");
  EXPECT_THROW(build_vocab(corpus, 0), InputError);
}

TEST(BuildVocab, EmptyCorpusHasOnlySpecials) {
  EXPECT_EQ(build_vocab(std::vector<std::string>{}, 1).size(), 2);
}

TEST(BuildVocab, UnseenTokensMapToUnknown) {
  const std::vector<std::string> train{"the cat sat"};
  const auto v = build_vocab(train);
  EXPECT_EQ(v.index("dog"), Vocabulary::kUnknown);
  EXPECT_NE(v.index("cat"), Vocabulary::kUnknown);
  EXPECT_EQ(v.encode(tokenize("The dog")), (std::vector<int>{v.index("the"), Vocabulary::kUnknown}));
}

TEST(BuildVocab, DependsOnlyOnTrainingTexts) {
  const std::vector<std::string> train{"alpha beta", "beta gamma"};
  const auto a = build_vocab(train);
  const auto b = build_vocab(std::vector<std::string>{"beta gamma", "alpha beta"});
  EXPECT_EQ(a, b);  // order of training documents does not matter either
  EXPECT_FALSE(a.contains("delta"));
}

TEST(Embeddings, PretrainedRowsCopiedOthersSeeded) {
  TempDir dir;
  auto path = write_file(dir / "vec.txt", "good 0.1 0.2\nbad -1 1.5\nunused 3 3\n");
  const auto vocab = build_vocab(std::vector<std::string>{"good bad novel"});
  const auto emb = load_pretrained_embeddings(path, vocab, 2, 7);
  ASSERT_EQ(emb.rows(), vocab.size());
  ASSERT_EQ(emb.dim(), 2);
  EXPECT_EQ(emb.values(vocab.index("good"), 0), 0.1);
  EXPECT_EQ(emb.values(vocab.index("good"), 1), 0.2);
  EXPECT_EQ(emb.values(vocab.index("bad"), 1), 1.5);
  const auto novel = emb.row(vocab.index("novel"));
  EXPECT_LE(novel.cwiseAbs().maxCoeff(), 0.25);
  EXPECT_TRUE(emb.row(Vocabulary::kPadding).isZero(0.0));
  EXPECT_EQ(emb, load_pretrained_embeddings(path, vocab, 2, 7));
}

TEST(Embeddings, WrongVectorLengthIsFormatError) {
  TempDir dir;
  auto path = write_file(dir / "vec.txt", "good 0.1 0.2\nbad 0.1 0.2 0.3\n");
  const auto vocab = build_vocab(std::vector<std::string>{"good bad"});
  try {
    load_pretrained_embeddings(path, vocab, 2, 1);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  auto junk = write_file(dir / "junk.txt", "good 0.1 x\n");
  EXPECT_THROW(load_pretrained_embeddings(junk, vocab, 2, 1), FormatError);
}

TEST(Embeddings, SeededInitRangeOverManyRows) {
  Vocabulary vocab;
  for (int i = 0; i < 10000; ++i) vocab.add("w" + std::to_string(i));
  const auto a = init_embeddings(vocab, 4, 123);
  const auto b = init_embeddings(vocab, 4, 123);
  const auto c = init_embeddings(vocab, 4, 124);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == c);
  EXPECT_LE(a.values.cwiseAbs().maxCoeff(), 0.25);
  // Uniform on [-0.25, 0.25]: mean 0, variance 0.0625/3; both checks at ~6 sigma.
  const double mean = a.values.mean();
  const double var = (a.values.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 0.003);
  EXPECT_NEAR(var, 0.0625 / 3.0, 0.0015);
  EXPECT_GT(a.values.maxCoeff(), 0.249);
  EXPECT_LT(a.values.minCoeff(), -0.249);
}

TEST(AverageEmbedding, MeanIdentityAndEmpty) {
  Vocabulary vocab;
  const int a = vocab.add("a"), b = vocab.add("b");
  EmbeddingMatrix emb(vocab.size(), 2);
  emb.values.row(a) << 1, 0;
  emb.values.row(b) << 0, 1;
  emb.values.row(Vocabulary::kUnknown) << 5, 5;
  const auto mean = average_embedding(Tokens{"a", "b"}, vocab, emb);
  EXPECT_DOUBLE_EQ(mean(0), 0.5);
  EXPECT_DOUBLE_EQ(mean(1), 0.5);
  EXPECT_EQ(average_embedding(Tokens{"a"}, vocab, emb), emb.row(a).transpose());
  EXPECT_TRUE(average_embedding(Tokens{}, vocab, emb).isZero(0.0));
  EXPECT_EQ(average_embedding(Tokens{"zzz"}, vocab, emb), emb.row(Vocabulary::kUnknown).transpose());
}

TEST(AverageEmbedding, PermutationInvariant) {
  Vocabulary vocab;
  for (int i = 0; i < 50; ++i) vocab.add("t" + std::to_string(i));
  const auto emb = init_embeddings(vocab, 8, 3);
  Rng rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    Tokens toks;
    const auto n = 1 + rng.below(30);
    for (std::uint64_t i = 0; i < n; ++i) toks.push_back("t" + std::to_string(rng.below(60)));
    const auto before = average_embedding(toks, vocab, emb);
    shuffle(std::span(toks), rng);
    EXPECT_EQ(before, average_embedding(toks, vocab, emb));
  }
}
