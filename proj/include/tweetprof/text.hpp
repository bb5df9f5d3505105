#pragma once

// Tokenization, training-fold vocabularies, embedding matrices and averaged
// embedding vectors.

#include <Eigen/Core>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tweetprof/error.hpp"
#include "tweetprof/io.hpp"
#include "tweetprof/rng.hpp"

namespace tweetprof {

inline constexpr const char* kMentionToken = "<mention>";
inline constexpr const char* kUrlToken = "<url>";

namespace detail {

inline bool is_word_byte(unsigned char c) noexcept {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_' || c >= 0x80;
}

inline bool is_space_byte(unsigned char c) noexcept {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

inline char ascii_lower(char c) noexcept { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

inline bool starts_with_ci(std::string_view s, std::string_view prefix) noexcept {
  if (s.size() < prefix.size()) return false;
  for (std::size_t i = 0; i < prefix.size(); ++i) {
    if (ascii_lower(s[i]) != prefix[i]) return false;
  }
  return true;
}

}  // namespace detail

// Lowercases ASCII, maps @mentions to <mention> and URLs to <url>, keeps
// hashtags (with '#'), and emits every other punctuation byte as its own token.
inline std::vector<std::string> tokenize(std::string_view text) {
  using detail::is_space_byte;
  using detail::is_word_byte;
  std::vector<std::string> tokens;
  std::size_t i = 0;
  const std::size_t n = text.size();
  auto word_end = [&](std::size_t from) {
    while (from < n && is_word_byte(static_cast<unsigned char>(text[from]))) ++from;
    return from;
  };
  while (i < n) {
    const auto c = static_cast<unsigned char>(text[i]);
    if (is_space_byte(c)) {
      ++i;
      continue;
    }
    const std::string_view rest = text.substr(i);
    if (detail::starts_with_ci(rest, "http://") || detail::starts_with_ci(rest, "https://") ||
        detail::starts_with_ci(rest, "www.")) {
      while (i < n && !is_space_byte(static_cast<unsigned char>(text[i]))) ++i;
      tokens.emplace_back(kUrlToken);
      continue;
    }
    if ((c == '@' || c == '#') && i + 1 < n && is_word_byte(static_cast<unsigned char>(text[i + 1]))) {
      const std::size_t end = word_end(i + 1);
      if (c == '@') {
        tokens.emplace_back(kMentionToken);
      } else {
        std::string tag(text.substr(i, end - i));
        for (auto& ch : tag) ch = detail::ascii_lower(ch);
        tokens.push_back(std::move(tag));
      }
      i = end;
      continue;
    }
    if (is_word_byte(c)) {
      const std::size_t end = word_end(i);
      std::string word(text.substr(i, end - i));
      for (auto& ch : word) ch = detail::ascii_lower(ch);
      tokens.push_back(std::move(word));
      i = end;
      continue;
    }
    tokens.emplace_back(1, static_cast<char>(c));
    ++i;
  }
  return tokens;
}

class Vocabulary {
 public:
  static constexpr int kUnknown = 0;
  static constexpr int kPadding = 1;
  static constexpr const char* kUnknownToken = "<unk>";
  static constexpr const char* kPaddingToken = "<pad>";

  Vocabulary() : tokens_{kUnknownToken, kPaddingToken} {
    index_.emplace(kUnknownToken, kUnknown);
    index_.emplace(kPaddingToken, kPadding);
  }

  // Rebuild from an ordered token list (e.g. a checkpoint); the first two
  // entries must be the special tokens.
  static Vocabulary from_tokens(std::vector<std::string> tokens) {
    if (tokens.size() < 2 || tokens[0] != kUnknownToken || tokens[1] != kPaddingToken) {
      throw FormatError("vocabulary must start with <unk>, <pad>", 0);
    }
    Vocabulary v;
    for (std::size_t i = 2; i < tokens.size(); ++i) v.add(tokens[i]);
    return v;
  }

  // Appends a token if absent; returns its index.
  int add(const std::string& token) {
    auto [it, inserted] = index_.emplace(token, size());
    if (inserted) tokens_.push_back(token);
    return it->second;
  }

  int index(std::string_view token) const {
    auto it = index_.find(std::string(token));
    return it == index_.end() ? kUnknown : it->second;
  }
  bool contains(std::string_view token) const { return index_.contains(std::string(token)); }
  const std::string& token(int i) const { return tokens_.at(static_cast<std::size_t>(i)); }
  const std::vector<std::string>& tokens() const noexcept { return tokens_; }
  int size() const noexcept { return static_cast<int>(tokens_.size()); }

  std::vector<int> encode(std::span<const std::string> tokens) const {
    std::vector<int> out;
    out.reserve(tokens.size());
    for (const auto& t : tokens) out.push_back(index(t));
    return out;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, int> index_;
};

// Tokens with frequency >= min_count, ordered by (frequency desc, token asc).
inline Vocabulary build_vocab_from_tokens(std::span<const std::vector<std::string>> tokenized, std::size_t min_count = 1) {
  if (min_count < 1) throw InputError("min_count must be at least 1");
  std::map<std::string, std::size_t> freq;
  for (const auto& doc : tokenized) {
    for (const auto& t : doc) ++freq[t];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [tok, n] : freq) {
    if (n >= min_count && tok != Vocabulary::kUnknownToken && tok != Vocabulary::kPaddingToken) kept.emplace_back(tok, n);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [tok, n] : kept) v.add(tok);
  return v;
}

inline Vocabulary build_vocab(std::span<const std::string> train_texts, std::size_t min_count = 1) {
  std::vector<std::vector<std::string>> tokenized;
  tokenized.reserve(train_texts.size());
  for (const auto& text : train_texts) tokenized.push_back(tokenize(text));
  return build_vocab_from_tokens(tokenized, min_count);
}

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// One row per vocabulary entry.
struct EmbeddingMatrix {
  RowMatrix values;

  EmbeddingMatrix() = default;
  EmbeddingMatrix(int rows, int dim) : values(RowMatrix::Zero(rows, dim)) {}

  int rows() const noexcept { return static_cast<int>(values.rows()); }
  int dim() const noexcept { return static_cast<int>(values.cols()); }
  auto row(int i) const { return values.row(i); }
  auto row(int i) { return values.row(i); }
  bool all_finite() const { return values.allFinite(); }

  friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    return a.values.rows() == b.values.rows() && a.values.cols() == b.values.cols() && a.values == b.values;
  }
};

inline constexpr double kEmbeddingInitRange = 0.25;

// Every row uniform in [-0.25, 0.25] drawn in row order; padding row zero.
inline EmbeddingMatrix init_embeddings(const Vocabulary& vocab, int dim, std::uint64_t seed) {
  if (dim < 1) throw InputError("embedding dimension must be at least 1");
  EmbeddingMatrix emb(vocab.size(), dim);
  Rng rng(seed);
  for (int r = 0; r < emb.rows(); ++r) {
    for (int c = 0; c < dim; ++c) emb.values(r, c) = rng.uniform(-kEmbeddingInitRange, kEmbeddingInitRange);
  }
  emb.row(Vocabulary::kPadding).setZero();
  return emb;
}

// Token -> vector table read from a whitespace-delimited text file.
struct PretrainedTable {
  int dim = 0;
  std::unordered_map<std::string, std::vector<double>> vectors;
};

// Each line is "<token> v1 ... vd". Only tokens accepted by `keep` (when
// given) are stored, which bounds memory for large files.
template <class Filter>
PretrainedTable load_pretrained_table(const std::filesystem::path& path, int dim, Filter keep) {
  if (dim < 1) throw InputError("embedding dimension must be at least 1");
  PretrainedTable table;
  table.dim = dim;
  io::for_each_line(path, [&](const std::string& line, std::size_t number) {
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (!rest.empty()) {
      const auto start = rest.find_first_not_of(" \t");
      if (start == std::string_view::npos) break;
      rest.remove_prefix(start);
      const auto end = rest.find_first_of(" \t");
      fields.push_back(rest.substr(0, end));
      rest.remove_prefix(end == std::string_view::npos ? rest.size() : end);
    }
    if (fields.size() != static_cast<std::size_t>(dim) + 1) {
      throw FormatError("expected " + std::to_string(dim) + " values, found " + std::to_string(fields.size() - 1),
                        number);
    }
    if (!keep(fields[0])) return;
    std::vector<double> v(static_cast<std::size_t>(dim));
    for (int k = 0; k < dim; ++k) {
      const auto f = fields[static_cast<std::size_t>(k) + 1];
      auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v[static_cast<std::size_t>(k)]);
      if (ec != std::errc() || ptr != f.data() + f.size() || !std::isfinite(v[static_cast<std::size_t>(k)])) {
        throw FormatError("bad number '" + std::string(f) + "'", number);
      }
    }
    table.vectors.insert_or_assign(std::string(fields[0]), std::move(v));
  });
  return table;
}

inline PretrainedTable load_pretrained_table(const std::filesystem::path& path, int dim) {
  return load_pretrained_table(path, dim, [](std::string_view) { return true; });
}

// Seeded-uniform rows overwritten by table rows for ordinary tokens found in it.
inline EmbeddingMatrix embeddings_from_table(const PretrainedTable& table, const Vocabulary& vocab, std::uint64_t seed) {
  EmbeddingMatrix emb = init_embeddings(vocab, table.dim, seed);
  for (int r = 2; r < vocab.size(); ++r) {
    auto it = table.vectors.find(vocab.token(r));
    if (it == table.vectors.end()) continue;
    for (int c = 0; c < table.dim; ++c) emb.values(r, c) = it->second[static_cast<std::size_t>(c)];
  }
  return emb;
}

inline EmbeddingMatrix load_pretrained_embeddings(const std::filesystem::path& path, const Vocabulary& vocab, int dim,
                                                  std::uint64_t seed) {
  const auto table = load_pretrained_table(path, dim, [&](std::string_view tok) { return vocab.contains(tok); });
  return embeddings_from_table(table, vocab, seed);
}

// Mean of the token rows (OOV tokens use the unknown row); zero for no tokens.
// Sums count/n weighted rows over distinct indices in index order. Any token
// order gives the same bits, and a single repeated token returns its row
// exactly (weight n/n == 1), so equal content never differs by length alone.
inline Eigen::VectorXd average_embedding(std::span<const int> indices, const EmbeddingMatrix& emb) {
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(emb.dim());
  if (indices.empty()) return sum;
  std::vector<int> sorted(indices.begin(), indices.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    sum += (static_cast<double>(j - i) / n) * emb.row(sorted[i]).transpose();
    i = j;
  }
  return sum;
}

inline Eigen::VectorXd average_embedding(std::span<const std::string> tokens, const Vocabulary& vocab,
                                         const EmbeddingMatrix& emb) {
  const auto idx = vocab.encode(tokens);
  return average_embedding(std::span<const int>(idx), emb);
}

}  // namespace tweetprof
