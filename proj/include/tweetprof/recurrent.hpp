#pragma once

// Phase one: an LSTM classifier over embedded tokens, trained with
// cross-entropy and Adam. Its embedding matrix is what the later phases use.
//
// Gate rows in the stacked weight matrices are ordered [input, forget, cell,
// output], each block hidden_dim rows tall.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "tweetprof/error.hpp"
#include "tweetprof/rng.hpp"
#include "tweetprof/text.hpp"

namespace tweetprof {

struct RecurrentConfig {
  int embed_dim = 200;
  int hidden_dim = 200;
  double dropout_embed = 0.25;
  double dropout_lstm = 0.5;
  int epochs = 10;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_adam = 1e-8;
  int max_seq_len = 40;
  int n_classes = 2;
  std::uint64_t seed = 0;

  void validate() const {
    if (embed_dim < 1 || hidden_dim < 1) throw ConfigError("recurrent dims must be at least 1");
    if (!(dropout_embed >= 0.0 && dropout_embed < 1.0) || !(dropout_lstm >= 0.0 && dropout_lstm < 1.0)) {
      throw ConfigError("dropout rates must lie in [0, 1)");
    }
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
    if (max_seq_len < 1) throw ConfigError("max_seq_len must be at least 1");
    if (n_classes < 2) throw ConfigError("n_classes must be at least 2");
    if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(eps_adam > 0.0)) throw ConfigError("eps_adam must be positive");
  }

  bool sigmoid_head() const noexcept { return n_classes == 2; }
  int output_units() const noexcept { return sigmoid_head() ? 1 : n_classes; }
};

struct RecurrentModel {
  RecurrentConfig config;
  EmbeddingMatrix embedding;
  Eigen::MatrixXd w_input;      // 4h x d
  Eigen::MatrixXd w_recurrent;  // 4h x h
  Eigen::VectorXd bias;         // 4h
  Eigen::MatrixXd w_dense;      // units x h
  Eigen::VectorXd b_dense;      // units

  bool all_finite() const {
    return embedding.all_finite() && w_input.allFinite() && w_recurrent.allFinite() && bias.allFinite() &&
           w_dense.allFinite() && b_dense.allFinite();
  }

  friend bool operator==(const RecurrentModel& a, const RecurrentModel& b) {
    auto same = [](const auto& x, const auto& y) {
      return x.rows() == y.rows() && x.cols() == y.cols() && x == y;
    };
    return a.embedding == b.embedding && same(a.w_input, b.w_input) && same(a.w_recurrent, b.w_recurrent) &&
           same(a.bias, b.bias) && same(a.w_dense, b.w_dense) && same(a.b_dense, b.b_dense);
  }
};

struct LabeledSequence {
  std::vector<int> tokens;
  int label = 0;
};

inline constexpr double kRecurrentInitRange = 0.08;

// Seeded weights in [-0.08, 0.08], zero biases except forget gate (+1).
// The embedding is copied from init_emb.
inline RecurrentModel init_recurrent(const RecurrentConfig& config, const EmbeddingMatrix& init_emb) {
  config.validate();
  if (init_emb.dim() != config.embed_dim) {
    throw ShapeError("embedding dim " + std::to_string(init_emb.dim()) + " != config embed_dim " +
                     std::to_string(config.embed_dim));
  }
  if (init_emb.rows() < 2) throw ShapeError("embedding must include the special-token rows");
  const int d = config.embed_dim, h = config.hidden_dim, units = config.output_units();
  RecurrentModel m;
  m.config = config;
  m.embedding = init_emb;
  Rng rng(config.seed);
  auto fill = [&](Eigen::MatrixXd& w, int rows, int cols) {
    w.resize(rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) w(r, c) = rng.uniform(-kRecurrentInitRange, kRecurrentInitRange);
    }
  };
  fill(m.w_input, 4 * h, d);
  fill(m.w_recurrent, 4 * h, h);
  fill(m.w_dense, units, h);
  m.bias = Eigen::VectorXd::Zero(4 * h);
  m.bias.segment(h, h).setConstant(1.0);
  m.b_dense = Eigen::VectorXd::Zero(units);
  return m;
}

// Keeps the last max_len indices and pads at the front with the padding index.
inline std::vector<int> prepare_sequence(std::span<const int> indices, int max_len) {
  std::vector<int> out(static_cast<std::size_t>(max_len), Vocabulary::kPadding);
  const std::size_t n = std::min(indices.size(), out.size());
  std::copy(indices.end() - static_cast<std::ptrdiff_t>(n), indices.end(), out.end() - static_cast<std::ptrdiff_t>(n));
  return out;
}

namespace detail {

inline double sigmoid(double z) noexcept {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline double softplus(double z) noexcept { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

// Activations kept for backpropagation through time.
struct LstmTrace {
  std::vector<int> tokens;
  std::vector<Eigen::VectorXd> x;           // per step, after dropout
  std::vector<Eigen::VectorXd> embed_scale; // per step dropout scale; empty without dropout
  std::vector<Eigen::VectorXd> gi, gf, gg, go;
  std::vector<Eigen::VectorXd> c, h;        // index 0 is the zero initial state
  Eigen::VectorXd h_scale;                  // empty without dropout
  Eigen::VectorXd features;                 // final hidden state after dropout
  Eigen::VectorXd logits;
  Eigen::VectorXd probs;                    // n_classes entries
};

inline Eigen::VectorXd dropout_scale(int n, double rate, Rng& rng) {
  Eigen::VectorXd s(n);
  const double keep = 1.0 / (1.0 - rate);
  for (int i = 0; i < n; ++i) s(i) = rng.bernoulli(rate) ? 0.0 : keep;
  return s;
}

inline void run_forward(const RecurrentModel& m, std::span<const int> indices, bool train_mode, Rng* rng,
                        LstmTrace& tr) {
  const auto& cfg = m.config;
  const int h = cfg.hidden_dim;
  const int vocab_rows = m.embedding.rows();
  for (int idx : indices) {
    if (idx < 0 || idx >= vocab_rows) throw InputError("token index " + std::to_string(idx) + " outside vocabulary");
  }
  tr.tokens = prepare_sequence(indices, cfg.max_seq_len);
  const std::size_t steps = tr.tokens.size();
  const bool drop_embed = train_mode && cfg.dropout_embed > 0.0;
  const bool drop_hidden = train_mode && cfg.dropout_lstm > 0.0;

  tr.x.resize(steps);
  tr.embed_scale.clear();
  tr.gi.resize(steps);
  tr.gf.resize(steps);
  tr.gg.resize(steps);
  tr.go.resize(steps);
  tr.c.assign(steps + 1, Eigen::VectorXd::Zero(h));
  tr.h.assign(steps + 1, Eigen::VectorXd::Zero(h));

  Eigen::VectorXd z(4 * h);
  for (std::size_t t = 0; t < steps; ++t) {
    const int tok = tr.tokens[t];
    tr.x[t] = m.embedding.row(tok).transpose();
    if (drop_embed) {
      tr.embed_scale.push_back(dropout_scale(cfg.embed_dim, cfg.dropout_embed, *rng));
      tr.x[t] = tr.x[t].cwiseProduct(tr.embed_scale.back());
    }
    z.noalias() = m.w_recurrent * tr.h[t];
    if (tok != Vocabulary::kPadding) z.noalias() += m.w_input * tr.x[t];
    z += m.bias;
    tr.gi[t] = z.segment(0, h).unaryExpr([](double v) { return sigmoid(v); });
    tr.gf[t] = z.segment(h, h).unaryExpr([](double v) { return sigmoid(v); });
    tr.gg[t] = z.segment(2 * h, h).array().tanh();
    tr.go[t] = z.segment(3 * h, h).unaryExpr([](double v) { return sigmoid(v); });
    tr.c[t + 1] = tr.gf[t].cwiseProduct(tr.c[t]) + tr.gi[t].cwiseProduct(tr.gg[t]);
    tr.h[t + 1] = tr.go[t].cwiseProduct(tr.c[t + 1].array().tanh().matrix());
  }

  tr.features = tr.h[steps];
  tr.h_scale.resize(0);
  if (drop_hidden) {
    tr.h_scale = dropout_scale(h, cfg.dropout_lstm, *rng);
    tr.features = tr.features.cwiseProduct(tr.h_scale);
  }
  tr.logits = m.w_dense * tr.features + m.b_dense;
  if (!tr.logits.allFinite()) throw NumericError("non-finite logits in recurrent forward pass");

  if (cfg.sigmoid_head()) {
    const double p = sigmoid(tr.logits(0));
    tr.probs.resize(2);
    tr.probs << 1.0 - p, p;
  } else {
    const double mx = tr.logits.maxCoeff();
    tr.probs = (tr.logits.array() - mx).exp().matrix();
    tr.probs /= tr.probs.sum();
  }
}

inline double trace_loss(const RecurrentConfig& cfg, const LstmTrace& tr, int label) {
  if (cfg.sigmoid_head()) {
    const double z = tr.logits(0);
    return softplus(z) - (label == 1 ? z : 0.0);
  }
  const double mx = tr.logits.maxCoeff();
  const double lse = mx + std::log((tr.logits.array() - mx).exp().sum());
  return lse - tr.logits(label);
}

}  // namespace detail

// Same shapes as the model. Embedding gradients are dense, with the set of
// rows written so far tracked for cheap resets.
struct RecurrentGradients {
  RowMatrix embedding;
  std::vector<int> touched_rows;
  std::vector<char> touched;
  Eigen::MatrixXd w_input, w_recurrent, w_dense;
  Eigen::VectorXd bias, b_dense;

  explicit RecurrentGradients(const RecurrentModel& m)
      : embedding(RowMatrix::Zero(m.embedding.rows(), m.embedding.dim())),
        touched(static_cast<std::size_t>(m.embedding.rows()), 0),
        w_input(Eigen::MatrixXd::Zero(m.w_input.rows(), m.w_input.cols())),
        w_recurrent(Eigen::MatrixXd::Zero(m.w_recurrent.rows(), m.w_recurrent.cols())),
        w_dense(Eigen::MatrixXd::Zero(m.w_dense.rows(), m.w_dense.cols())),
        bias(Eigen::VectorXd::Zero(m.bias.size())),
        b_dense(Eigen::VectorXd::Zero(m.b_dense.size())) {}

  void clear() {
    for (int r : touched_rows) {
      embedding.row(r).setZero();
      touched[static_cast<std::size_t>(r)] = 0;
    }
    touched_rows.clear();
    w_input.setZero();
    w_recurrent.setZero();
    w_dense.setZero();
    bias.setZero();
    b_dense.setZero();
  }

  void touch(int row) {
    if (!touched[static_cast<std::size_t>(row)]) {
      touched[static_cast<std::size_t>(row)] = 1;
      touched_rows.push_back(row);
    }
  }
};

namespace detail {

// Adds weight * dLoss/dParams to grads. The padding row never receives gradient.
inline void run_backward(const RecurrentModel& m, const LstmTrace& tr, int label, double weight,
                         RecurrentGradients& grads) {
  const auto& cfg = m.config;
  const int h = cfg.hidden_dim;
  const std::size_t steps = tr.tokens.size();

  Eigen::VectorXd dlogits = tr.probs.tail(cfg.output_units());
  if (cfg.sigmoid_head()) {
    dlogits(0) -= (label == 1 ? 1.0 : 0.0);
  } else {
    dlogits(label) -= 1.0;
  }
  dlogits *= weight;

  grads.w_dense.noalias() += dlogits * tr.features.transpose();
  grads.b_dense += dlogits;
  Eigen::VectorXd dh = m.w_dense.transpose() * dlogits;
  if (tr.h_scale.size() > 0) dh = dh.cwiseProduct(tr.h_scale);

  Eigen::VectorXd dc = Eigen::VectorXd::Zero(h);
  Eigen::VectorXd dz(4 * h);
  for (std::size_t t = steps; t-- > 0;) {
    const Eigen::ArrayXd tanh_c = tr.c[t + 1].array().tanh();
    const Eigen::ArrayXd o = tr.go[t].array(), i = tr.gi[t].array(), f = tr.gf[t].array(), g = tr.gg[t].array();
    const Eigen::ArrayXd dh_a = dh.array();
    Eigen::ArrayXd dc_a = dc.array() + dh_a * o * (1.0 - tanh_c.square());
    dz.segment(0, h) = (dc_a * g * i * (1.0 - i)).matrix();
    dz.segment(h, h) = (dc_a * tr.c[t].array() * f * (1.0 - f)).matrix();
    dz.segment(2 * h, h) = (dc_a * i * (1.0 - g.square())).matrix();
    dz.segment(3 * h, h) = (dh_a * tanh_c * o * (1.0 - o)).matrix();
    dc = (dc_a * f).matrix();

    grads.bias += dz;
    grads.w_recurrent.noalias() += dz * tr.h[t].transpose();
    const int tok = tr.tokens[t];
    if (tok != Vocabulary::kPadding) {
      grads.w_input.noalias() += dz * tr.x[t].transpose();
      Eigen::VectorXd dx = m.w_input.transpose() * dz;
      if (!tr.embed_scale.empty()) dx = dx.cwiseProduct(tr.embed_scale[t]);
      grads.embedding.row(tok) += dx.transpose();
      grads.touch(tok);
    }
    dh = m.w_recurrent.transpose() * dz;
  }
}

}  // namespace detail

// Class probabilities. Binary models expand the sigmoid output to (1 - p, p).
inline Eigen::VectorXd forward(const RecurrentModel& model, std::span<const int> token_indices, bool train_mode,
                               Rng& rng) {
  detail::LstmTrace tr;
  detail::run_forward(model, token_indices, train_mode, &rng, tr);
  return tr.probs;
}

inline Eigen::VectorXd predict_proba(const RecurrentModel& model, std::span<const int> token_indices) {
  detail::LstmTrace tr;
  detail::run_forward(model, token_indices, false, nullptr, tr);
  return tr.probs;
}

// Cross-entropy loss without dropout.
inline double sequence_loss(const RecurrentModel& model, const LabeledSequence& example) {
  detail::LstmTrace tr;
  detail::run_forward(model, example.tokens, false, nullptr, tr);
  return detail::trace_loss(model.config, tr, example.label);
}

// Loss and gradient for one example without dropout; grads are overwritten.
inline double loss_and_gradient(const RecurrentModel& model, const LabeledSequence& example, RecurrentGradients& grads) {
  grads.clear();
  detail::LstmTrace tr;
  detail::run_forward(model, example.tokens, false, nullptr, tr);
  detail::run_backward(model, tr, example.label, 1.0, grads);
  return detail::trace_loss(model.config, tr, example.label);
}

// First and second moments per parameter tensor.
struct AdamState {
  long step = 0;
  RowMatrix m_embedding, v_embedding;
  std::vector<char> embedding_active;
  Eigen::MatrixXd m_input, v_input, m_recurrent, v_recurrent, m_dense, v_dense;
  Eigen::VectorXd m_bias, v_bias, m_bdense, v_bdense;

  explicit AdamState(const RecurrentModel& m)
      : m_embedding(RowMatrix::Zero(m.embedding.rows(), m.embedding.dim())),
        v_embedding(RowMatrix::Zero(m.embedding.rows(), m.embedding.dim())),
        embedding_active(static_cast<std::size_t>(m.embedding.rows()), 0),
        m_input(Eigen::MatrixXd::Zero(m.w_input.rows(), m.w_input.cols())),
        v_input(m_input),
        m_recurrent(Eigen::MatrixXd::Zero(m.w_recurrent.rows(), m.w_recurrent.cols())),
        v_recurrent(m_recurrent),
        m_dense(Eigen::MatrixXd::Zero(m.w_dense.rows(), m.w_dense.cols())),
        v_dense(m_dense),
        m_bias(Eigen::VectorXd::Zero(m.bias.size())),
        v_bias(m_bias),
        m_bdense(Eigen::VectorXd::Zero(m.b_dense.size())),
        v_bdense(m_bdense) {}
};

namespace detail {

template <class Param, class Grad, class Moment>
void adam_update(Param&& param, const Grad& grad, Moment&& m, Moment&& v, const RecurrentConfig& cfg, double step_size,
                 double bias2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  param.array() -= step_size * m.array() / ((v.array() / bias2).sqrt() + cfg.eps_adam);
}

}  // namespace detail

// One Adam step. Embedding rows that have never had a gradient are skipped;
// their moments are zero, so the dense update would leave them unchanged too.
inline void adam_step(RecurrentModel& model, const RecurrentGradients& grads, AdamState& state) {
  const auto& cfg = model.config;
  ++state.step;
  const double bias1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bias2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  const double step_size = cfg.learning_rate / bias1;

  detail::adam_update(model.w_input, grads.w_input, state.m_input, state.v_input, cfg, step_size, bias2);
  detail::adam_update(model.w_recurrent, grads.w_recurrent, state.m_recurrent, state.v_recurrent, cfg, step_size, bias2);
  detail::adam_update(model.bias, grads.bias, state.m_bias, state.v_bias, cfg, step_size, bias2);
  detail::adam_update(model.w_dense, grads.w_dense, state.m_dense, state.v_dense, cfg, step_size, bias2);
  detail::adam_update(model.b_dense, grads.b_dense, state.m_bdense, state.v_bdense, cfg, step_size, bias2);

  for (int r : grads.touched_rows) state.embedding_active[static_cast<std::size_t>(r)] = 1;
  for (int r = 0; r < model.embedding.rows(); ++r) {
    if (!state.embedding_active[static_cast<std::size_t>(r)] || r == Vocabulary::kPadding) continue;
    detail::adam_update(model.embedding.values.row(r), grads.embedding.row(r), state.m_embedding.row(r),
                        state.v_embedding.row(r), cfg, step_size, bias2);
  }
}

struct TrainingLog {
  std::vector<double> epoch_loss;  // mean per-example loss, dropout active
};

// Mini-batch BPTT with Adam. Shuffling, dropout masks and initialization all
// draw from config.seed, so identical inputs give bit-identical models.
inline RecurrentModel train_recurrent(std::span<const LabeledSequence> data, const RecurrentConfig& config,
                                      const EmbeddingMatrix& init_emb, TrainingLog* log = nullptr) {
  RecurrentModel model = init_recurrent(config, init_emb);
  for (const auto& ex : data) {
    if (ex.label < 0 || ex.label >= config.n_classes) {
      throw InputError("label " + std::to_string(ex.label) + " outside [0, " + std::to_string(config.n_classes) + ")");
    }
  }
  if (log) log->epoch_loss.clear();
  if (data.empty() || config.epochs == 0) return model;

  Rng rng(derive_seed(config.seed, 1));
  RecurrentGradients grads(model);
  AdamState adam(model);
  detail::LstmTrace tr;
  std::vector<std::size_t> order(data.size());
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    shuffle(std::span(order), rng);
    double total = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += batch, ++batch_index) {
      const std::size_t end = std::min(order.size(), start + batch);
      const double weight = 1.0 / static_cast<double>(end - start);
      grads.clear();
      double batch_loss = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        const auto& ex = data[order[k]];
        try {
          detail::run_forward(model, ex.tokens, true, &rng, tr);
        } catch (const NumericError& e) {
          throw TrainingError(e.what(), epoch + 1, batch_index + 1);
        }
        batch_loss += detail::trace_loss(config, tr, ex.label);
        detail::run_backward(model, tr, ex.label, weight, grads);
      }
      if (!std::isfinite(batch_loss)) throw TrainingError("non-finite loss", epoch + 1, batch_index + 1);
      total += batch_loss;
      adam_step(model, grads, adam);
    }
    if (!model.all_finite()) throw TrainingError("non-finite parameters", epoch + 1, batch_index);
    if (log) log->epoch_loss.push_back(total / static_cast<double>(data.size()));
  }
  return model;
}

inline EmbeddingMatrix extract_embeddings(const RecurrentModel& model) { return model.embedding; }

inline constexpr double kGradientCheckFloor = 1e-7;

// Max over all parameters of |analytic - numeric| / max(|analytic| + |numeric|, floor),
// with central differences of step eps. Dropout is off. The padding row is a
// constant, not a parameter, and is skipped.
inline double gradient_check(const RecurrentModel& model, const LabeledSequence& example, double eps) {
  if (!(eps > 0.0) || !std::isfinite(eps)) throw InputError("gradient_check needs eps > 0");
  if (example.tokens.empty()) throw InputError("gradient_check needs a non-empty sequence");
  if (example.label < 0 || example.label >= model.config.n_classes) throw InputError("label outside model classes");

  RecurrentGradients grads(model);
  loss_and_gradient(model, example, grads);

  RecurrentModel probe = model;
  double worst = 0.0;
  auto check = [&](auto& param, const auto& analytic, auto&& skip_row) {
    for (Eigen::Index r = 0; r < param.rows(); ++r) {
      if (skip_row(r)) continue;
      for (Eigen::Index c = 0; c < param.cols(); ++c) {
        const double saved = param(r, c);
        param(r, c) = saved + eps;
        const double up = sequence_loss(probe, example);
        param(r, c) = saved - eps;
        const double down = sequence_loss(probe, example);
        param(r, c) = saved;
        const double numeric = (up - down) / (2.0 * eps);
        const double a = analytic(r, c);
        const double rel = std::abs(a - numeric) / std::max(std::abs(a) + std::abs(numeric), kGradientCheckFloor);
        worst = std::max(worst, rel);
      }
    }
  };
  auto none = [](Eigen::Index) { return false; };
  check(probe.embedding.values, grads.embedding, [](Eigen::Index r) { return r == Vocabulary::kPadding; });
  check(probe.w_input, grads.w_input, none);
  check(probe.w_recurrent, grads.w_recurrent, none);
  check(probe.bias, grads.bias, none);
  check(probe.w_dense, grads.w_dense, none);
  check(probe.b_dense, grads.b_dense, none);
  return worst;
}

// ---------------------------------------------------------------------------
// Checkpoints: JSON object, see docs/checkpoint-format.md.
// ---------------------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

namespace detail {

template <class M>
nlohmann::ordered_json tensor_to_json(const M& m) {
  nlohmann::ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  j["data"] = std::move(data);
  return j;
}

template <class M>
void tensor_from_json(const nlohmann::json& j, M& m, const char* name) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw FormatError(std::string("tensor '") + name + "' has wrong element count", 0);
  }
  m.resize(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  }
}

}  // namespace detail

inline nlohmann::ordered_json recurrent_config_to_json(const RecurrentConfig& c) {
  nlohmann::ordered_json j;
  j["embed_dim"] = c.embed_dim;
  j["hidden_dim"] = c.hidden_dim;
  j["dropout_embed"] = c.dropout_embed;
  j["dropout_lstm"] = c.dropout_lstm;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["eps_adam"] = c.eps_adam;
  j["max_seq_len"] = c.max_seq_len;
  j["n_classes"] = c.n_classes;
  j["seed"] = c.seed;
  return j;
}

// Missing keys keep their defaults.
inline RecurrentConfig recurrent_config_from_json(const nlohmann::json& j, RecurrentConfig c = {}) {
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.dropout_embed = j.value("dropout_embed", c.dropout_embed);
  c.dropout_lstm = j.value("dropout_lstm", c.dropout_lstm);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.beta1 = j.value("beta1", c.beta1);
  c.beta2 = j.value("beta2", c.beta2);
  c.eps_adam = j.value("eps_adam", c.eps_adam);
  c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
  c.n_classes = j.value("n_classes", c.n_classes);
  c.seed = j.value("seed", c.seed);
  return c;
}

inline nlohmann::ordered_json checkpoint_to_json(const RecurrentModel& model, const Vocabulary& vocab) {
  if (vocab.size() != model.embedding.rows()) throw ShapeError("vocabulary size does not match embedding rows");
  nlohmann::ordered_json j;
  j["format"] = "tweetprof-recurrent";
  j["version"] = kCheckpointVersion;
  j["config"] = recurrent_config_to_json(model.config);
  j["vocabulary"] = vocab.tokens();
  auto& t = j["tensors"];
  t["embedding"] = detail::tensor_to_json(model.embedding.values);
  t["w_input"] = detail::tensor_to_json(model.w_input);
  t["w_recurrent"] = detail::tensor_to_json(model.w_recurrent);
  t["bias"] = detail::tensor_to_json(model.bias);
  t["w_dense"] = detail::tensor_to_json(model.w_dense);
  t["b_dense"] = detail::tensor_to_json(model.b_dense);
  return j;
}

struct Checkpoint {
  RecurrentModel model;
  Vocabulary vocab;
};

inline Checkpoint checkpoint_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "tweetprof-recurrent") throw FormatError("not a recurrent checkpoint", 0);
  if (j.value("version", 0) != kCheckpointVersion) throw FormatError("unsupported checkpoint version", 0);
  Checkpoint ck;
  ck.model.config = recurrent_config_from_json(j.at("config"));
  ck.model.config.validate();
  ck.vocab = Vocabulary::from_tokens(j.at("vocabulary").get<std::vector<std::string>>());
  const auto& t = j.at("tensors");
  detail::tensor_from_json(t.at("embedding"), ck.model.embedding.values, "embedding");
  detail::tensor_from_json(t.at("w_input"), ck.model.w_input, "w_input");
  detail::tensor_from_json(t.at("w_recurrent"), ck.model.w_recurrent, "w_recurrent");
  detail::tensor_from_json(t.at("bias"), ck.model.bias, "bias");
  detail::tensor_from_json(t.at("w_dense"), ck.model.w_dense, "w_dense");
  detail::tensor_from_json(t.at("b_dense"), ck.model.b_dense, "b_dense");
  const auto& c = ck.model.config;
  const int h = c.hidden_dim;
  if (ck.model.embedding.rows() != ck.vocab.size() || ck.model.embedding.dim() != c.embed_dim ||
      ck.model.w_input.rows() != 4 * h || ck.model.w_input.cols() != c.embed_dim || ck.model.w_recurrent.rows() != 4 * h ||
      ck.model.w_recurrent.cols() != h || ck.model.bias.size() != 4 * h || ck.model.w_dense.rows() != c.output_units() ||
      ck.model.w_dense.cols() != h || ck.model.b_dense.size() != c.output_units()) {
    throw ShapeError("checkpoint tensor shapes do not match its config");
  }
  return ck;
}

}  // namespace tweetprof
