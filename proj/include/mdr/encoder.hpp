#pragma once

// Siamese embedding-bag dual encoder.
//
// Both towers read one shared token table. A tower pools the rows of its
// input bag (mean or sum, multiplicity-weighted) and then applies
// `tower_layers` tanh(W h + b) layers; each tower owns its layers. Queries
// and targets are scored by raw dot product and trained with a softmax over
// the in-batch targets.

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <future>
#include <limits>
#include <mutex>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "mdr/common.hpp"
#include "mdr/corpus.hpp"
#include "mdr/digest.hpp"
#include "mdr/rng.hpp"
#include "mdr/vocabulary.hpp"

namespace mdr {

enum class Pooling { mean, sum };
enum class Tower { query, target };
enum class Optimizer { adagrad, sgd };

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t tower_layers = 0;
  Pooling pooling = Pooling::mean;

  void validate() const {
    if (dim < 1) throw Error("model dim must be >= 1");
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"dim", c.dim}, {"tower_layers", c.tower_layers},
       {"pooling", c.pooling == Pooling::mean ? "mean" : "sum"}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
  c.dim = j.value("dim", std::size_t{64});
  c.tower_layers = j.value("tower_layers", std::size_t{0});
  const auto pooling = j.value("pooling", std::string("mean"));
  if (pooling != "mean" && pooling != "sum") throw Error("pooling must be 'mean' or 'sum'");
  c.pooling = pooling == "mean" ? Pooling::mean : Pooling::sum;
}

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t epochs = 1;
  double learning_rate = 0.1;
  Optimizer optimizer = Optimizer::adagrad;
  std::uint64_t seed = 0;
  bool deterministic = true;
  std::size_t workers = 0;  // non-deterministic mode only; 0 = hardware concurrency

  void validate() const {
    if (batch_size < 2) throw Error("batch_size must be >= 2 (in-batch negatives)");
    if (!(learning_rate > 0.0)) throw Error("learning_rate must be > 0");
  }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"batch_size", c.batch_size}, {"epochs", c.epochs}, {"learning_rate", c.learning_rate},
       {"optimizer", c.optimizer == Optimizer::adagrad ? "adagrad" : "sgd"},
       {"seed", c.seed}, {"deterministic", c.deterministic}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
  c.batch_size = j.value("batch_size", std::size_t{256});
  c.epochs = j.value("epochs", std::size_t{1});
  c.learning_rate = j.value("learning_rate", 0.1);
  const auto opt = j.value("optimizer", std::string("adagrad"));
  if (opt != "adagrad" && opt != "sgd") throw Error("optimizer must be 'adagrad' or 'sgd'");
  c.optimizer = opt == "adagrad" ? Optimizer::adagrad : Optimizer::sgd;
  c.seed = j.value("seed", std::uint64_t{0});
  c.deterministic = j.value("deterministic", true);
  c.workers = j.value("workers", std::size_t{0});
}

/// Affine layer, weight row-major: out[r] = sum_c weight[r * dim + c] * in[c] + bias[r].
template <class Real>
struct DenseLayer {
  std::vector<Real> weight;
  std::vector<Real> bias;

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

template <class Real>
struct BasicEmbeddingModel {
  ModelConfig config;
  std::string vocab_hash;
  std::size_t rows = 0;
  std::vector<Real> table;  // rows x dim, row-major
  std::vector<DenseLayer<Real>> query_tower;
  std::vector<DenseLayer<Real>> target_tower;

  std::size_t dim() const noexcept { return config.dim; }

  std::span<Real> row(TokenId id) { return {table.data() + std::size_t{id} * config.dim, config.dim}; }
  std::span<const Real> row(TokenId id) const {
    return {table.data() + std::size_t{id} * config.dim, config.dim};
  }

  const std::vector<DenseLayer<Real>>& tower(Tower t) const {
    return t == Tower::query ? query_tower : target_tower;
  }
  std::vector<DenseLayer<Real>>& tower(Tower t) { return t == Tower::query ? query_tower : target_tower; }

  /// Zero-initialized model of the given shape.
  static BasicEmbeddingModel zeros(const ModelConfig& config, std::size_t rows, std::string vocab_hash = {}) {
    config.validate();
    BasicEmbeddingModel m;
    m.config = config;
    m.vocab_hash = std::move(vocab_hash);
    m.rows = rows;
    m.table.assign(rows * config.dim, Real(0));
    const std::size_t d = config.dim;
    m.query_tower.assign(config.tower_layers, {std::vector<Real>(d * d, Real(0)), std::vector<Real>(d, Real(0))});
    m.target_tower = m.query_tower;
    return m;
  }

  template <class Other>
  BasicEmbeddingModel<Other> cast() const {
    auto conv = [](const std::vector<Real>& v) { return std::vector<Other>(v.begin(), v.end()); };
    BasicEmbeddingModel<Other> m;
    m.config = config;
    m.vocab_hash = vocab_hash;
    m.rows = rows;
    m.table = conv(table);
    for (const auto& l : query_tower) m.query_tower.push_back({conv(l.weight), conv(l.bias)});
    for (const auto& l : target_tower) m.target_tower.push_back({conv(l.weight), conv(l.bias)});
    return m;
  }

  bool all_finite() const {
    auto finite = [](const std::vector<Real>& v) {
      return std::all_of(v.begin(), v.end(), [](Real x) { return std::isfinite(x); });
    };
    if (!finite(table)) return false;
    for (const auto* t : {&query_tower, &target_tower}) {
      for (const auto& l : *t) {
        if (!finite(l.weight) || !finite(l.bias)) return false;
      }
    }
    return true;
  }

  friend bool operator==(const BasicEmbeddingModel&, const BasicEmbeddingModel&) = default;
};

using EmbeddingModel = BasicEmbeddingModel<float>;

/// A pair with features already mapped to vocabulary ids.
struct EncodedPair {
  std::vector<TokenId> query;
  std::vector<TokenId> target;
};

inline EncodedPair encode(const ExamplePair& pair, const Vocabulary& vocab) {
  return {encode(pair.query, vocab), encode(pair.target, vocab)};
}

inline std::vector<EncodedPair> encode_all(std::span<const ExamplePair> pairs, const Vocabulary& vocab) {
  std::vector<EncodedPair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(encode(p, vocab));
  return out;
}

namespace detail {

// Forward activations of one bag through one tower; layer_out[l] is the
// output of layer l, pooled is the tower input.
template <class Real>
struct BagForward {
  std::vector<Real> pooled;
  std::vector<std::vector<Real>> layer_out;
  bool empty = true;

  std::span<const Real> output() const {
    return layer_out.empty() ? std::span<const Real>(pooled) : std::span<const Real>(layer_out.back());
  }
};

template <class Real>
BagForward<Real> forward_bag(std::span<const TokenId> ids, const BasicEmbeddingModel<Real>& model, Tower tower) {
  const std::size_t d = model.dim();
  BagForward<Real> f;
  std::vector<double> acc(d, 0.0);
  for (TokenId id : ids) {
    if (id >= model.rows) throw Error("token id " + std::to_string(id) + " outside embedding table");
    const auto r = model.row(id);
    for (std::size_t k = 0; k < d; ++k) acc[k] += static_cast<double>(r[k]);
  }
  f.empty = ids.empty();
  const double scale = (model.config.pooling == Pooling::mean && !ids.empty()) ? 1.0 / static_cast<double>(ids.size()) : 1.0;
  f.pooled.resize(d);
  for (std::size_t k = 0; k < d; ++k) f.pooled[k] = static_cast<Real>(acc[k] * scale);
  if (f.empty) return f;  // zero vector, towers not applied
  const std::vector<Real>* in = &f.pooled;
  for (const auto& layer : model.tower(tower)) {
    std::vector<Real> out(d);
    for (std::size_t r = 0; r < d; ++r) {
      double z = static_cast<double>(layer.bias[r]);
      const Real* w = layer.weight.data() + r * d;
      for (std::size_t c = 0; c < d; ++c) z += static_cast<double>(w[c]) * static_cast<double>((*in)[c]);
      out[r] = static_cast<Real>(std::tanh(z));
    }
    f.layer_out.push_back(std::move(out));
    in = &f.layer_out.back();
  }
  return f;
}

}  // namespace detail

/// Pooled (then tower-transformed) embedding of a bag of token ids.
template <class Real>
std::vector<Real> embed_bag(std::span<const TokenId> ids, const BasicEmbeddingModel<Real>& model, Tower tower) {
  auto f = detail::forward_bag(ids, model, tower);
  const auto out = f.output();
  return {out.begin(), out.end()};
}

/// Feature-level overload: out-of-vocabulary features are skipped.
template <class Real>
std::vector<Real> embed_bag(const FeatureBag& feats, const Vocabulary& vocab,
                            const BasicEmbeddingModel<Real>& model, Tower tower) {
  const auto ids = encode(feats, vocab);
  return embed_bag(std::span<const TokenId>(ids), model, tower);
}

/// Inner product, accumulated in double.
template <class A, class B>
double score(std::span<const A> q, std::span<const B> c) {
  if (q.size() != c.size()) {
    throw Error("score: dimension mismatch (" + std::to_string(q.size()) + " vs " + std::to_string(c.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) s += static_cast<double>(q[k]) * static_cast<double>(c[k]);
  return s;
}

template <class A, class B>
double score(const std::vector<A>& q, const std::vector<B>& c) {
  return score(std::span<const A>(q), std::span<const B>(c));
}

struct SoftmaxLoss {
  double loss = 0.0;               // mean over rows
  std::vector<double> row_losses;  // -log softmax(L[i])[i]
  std::vector<double> dlogits;     // d loss / d L, row-major B x B
};

/// Mean over rows of -log softmax(logits[i])[i] with max-subtraction.
inline SoftmaxLoss in_batch_softmax_loss(std::span<const double> logits, std::size_t batch) {
  if (batch < 2) throw Error("in-batch softmax needs at least 2 pairs");
  if (logits.size() != batch * batch) throw Error("logits must be B x B");
  SoftmaxLoss out;
  out.row_losses.resize(batch);
  out.dlogits.resize(batch * batch);
  const double inv_b = 1.0 / static_cast<double>(batch);
  for (std::size_t i = 0; i < batch; ++i) {
    const double* row = logits.data() + i * batch;
    const std::size_t am = static_cast<std::size_t>(std::max_element(row, row + batch) - row);
    const double mx = row[am];
    double rest = 0.0;  // sum of exp(row[j] - mx) over j != argmax; log1p keeps tiny losses exact
    for (std::size_t j = 0; j < batch; ++j) {
      if (j != am) rest += std::exp(row[j] - mx);
    }
    const double log_rest = std::log1p(rest);
    out.row_losses[i] = (mx - row[i]) + log_rest;
    out.loss += out.row_losses[i];
    for (std::size_t j = 0; j < batch; ++j) {
      const double p = std::exp((row[j] - mx) - log_rest);
      out.dlogits[i * batch + j] = (p - (i == j ? 1.0 : 0.0)) * inv_b;
    }
  }
  out.loss *= inv_b;
  return out;
}

/// Sparse table gradient plus dense tower gradients.
template <class Real>
struct Gradients {
  std::size_t dim = 0;
  std::vector<TokenId> rows;  // touched rows, first-touch order
  std::vector<Real> table;    // rows.size() x dim
  std::vector<DenseLayer<Real>> query_tower;
  std::vector<DenseLayer<Real>> target_tower;

  std::span<const Real> row_grad(std::size_t slot) const { return {table.data() + slot * dim, dim}; }

  /// Gradient of a table row, zero if untouched.
  std::vector<Real> table_row(TokenId id) const {
    for (std::size_t s = 0; s < rows.size(); ++s) {
      if (rows[s] == id) return {table.begin() + s * dim, table.begin() + (s + 1) * dim};
    }
    return std::vector<Real>(dim, Real(0));
  }
};

template <class Real>
struct BatchLoss {
  double loss = 0.0;
  std::vector<double> row_losses;
  Gradients<Real> grads;
};

namespace detail {

template <class Real>
class RowAccumulator {
 public:
  RowAccumulator(Gradients<Real>& g) : g_(g) {}

  void add(TokenId id, std::span<const double> v, double scale) {
    auto [it, inserted] = slot_.try_emplace(id, g_.rows.size());
    if (inserted) {
      g_.rows.push_back(id);
      acc_.resize(acc_.size() + g_.dim, 0.0);
    }
    double* dst = acc_.data() + it->second * g_.dim;
    for (std::size_t k = 0; k < g_.dim; ++k) dst[k] += v[k] * scale;
  }

  void finish() { g_.table.assign(acc_.begin(), acc_.end()); }

 private:
  Gradients<Real>& g_;
  std::unordered_map<TokenId, std::size_t> slot_;
  std::vector<double> acc_;
};

// Backpropagates d(output) through a tower into d(pooled); accumulates layer grads.
template <class Real>
std::vector<double> backward_tower(const BagForward<Real>& f, const std::vector<DenseLayer<Real>>& layers,
                                   std::span<const double> dout, std::vector<std::vector<double>>& dweight,
                                   std::vector<std::vector<double>>& dbias) {
  const std::size_t d = f.pooled.size();
  std::vector<double> grad(dout.begin(), dout.end());
  for (std::size_t l = layers.size(); l-- > 0;) {
    const auto& out = f.layer_out[l];
    const auto& in = l == 0 ? f.pooled : f.layer_out[l - 1];
    std::vector<double> dz(d);
    for (std::size_t r = 0; r < d; ++r) {
      const double y = static_cast<double>(out[r]);
      dz[r] = grad[r] * (1.0 - y * y);
    }
    std::vector<double> din(d, 0.0);
    const Real* w = layers[l].weight.data();
    for (std::size_t r = 0; r < d; ++r) {
      dbias[l][r] += dz[r];
      for (std::size_t c = 0; c < d; ++c) {
        dweight[l][r * d + c] += dz[r] * static_cast<double>(in[c]);
        din[c] += static_cast<double>(w[r * d + c]) * dz[r];
      }
    }
    grad = std::move(din);
  }
  return grad;
}

}  // namespace detail

/// In-batch sampled softmax: L[i][j] = score(query_i, target_j), loss is the
/// mean over i of -log softmax(L[i])[i]. Returns gradients for every touched
/// parameter.
template <class Real>
BatchLoss<Real> batch_loss(std::span<const EncodedPair> batch, const BasicEmbeddingModel<Real>& model) {
  const std::size_t b = batch.size();
  if (b < 2) throw Error("batch_loss: batch must contain at least 2 pairs");
  const std::size_t d = model.dim();

  std::vector<detail::BagForward<Real>> fq, ft;
  fq.reserve(b);
  ft.reserve(b);
  for (const auto& p : batch) {
    fq.push_back(detail::forward_bag(std::span<const TokenId>(p.query), model, Tower::query));
    ft.push_back(detail::forward_bag(std::span<const TokenId>(p.target), model, Tower::target));
  }
  std::vector<double> logits(b * b);
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < b; ++j) logits[i * b + j] = score(fq[i].output(), ft[j].output());
  }
  const SoftmaxLoss sm = in_batch_softmax_loss(logits, b);

  BatchLoss<Real> out;
  out.loss = sm.loss;
  out.row_losses = sm.row_losses;
  auto& g = out.grads;
  g.dim = d;

  const std::size_t n_layers = model.config.tower_layers;
  std::vector<std::vector<double>> dwq(n_layers, std::vector<double>(d * d, 0.0)), dbq(n_layers, std::vector<double>(d, 0.0));
  std::vector<std::vector<double>> dwt = dwq, dbt = dbq;

  detail::RowAccumulator<Real> rows(g);
  auto scatter = [&](const std::vector<TokenId>& ids, std::span<const double> dpooled) {
    if (ids.empty()) return;
    const double scale = model.config.pooling == Pooling::mean ? 1.0 / static_cast<double>(ids.size()) : 1.0;
    for (TokenId id : ids) rows.add(id, dpooled, scale);
  };

  for (std::size_t i = 0; i < b; ++i) {
    if (fq[i].empty) continue;
    std::vector<double> dq(d, 0.0);
    for (std::size_t j = 0; j < b; ++j) {
      const double gij = sm.dlogits[i * b + j];
      const auto t = ft[j].output();
      for (std::size_t k = 0; k < d; ++k) dq[k] += gij * static_cast<double>(t[k]);
    }
    const auto dpooled = detail::backward_tower(fq[i], model.query_tower, dq, dwq, dbq);
    scatter(batch[i].query, dpooled);
  }
  for (std::size_t j = 0; j < b; ++j) {
    if (ft[j].empty) continue;
    std::vector<double> dt(d, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      const double gij = sm.dlogits[i * b + j];
      const auto q = fq[i].output();
      for (std::size_t k = 0; k < d; ++k) dt[k] += gij * static_cast<double>(q[k]);
    }
    const auto dpooled = detail::backward_tower(ft[j], model.target_tower, dt, dwt, dbt);
    scatter(batch[j].target, dpooled);
  }
  rows.finish();

  auto to_layers = [](const std::vector<std::vector<double>>& dw, const std::vector<std::vector<double>>& db) {
    std::vector<DenseLayer<Real>> layers;
    for (std::size_t l = 0; l < dw.size(); ++l) {
      layers.push_back({std::vector<Real>(dw[l].begin(), dw[l].end()), std::vector<Real>(db[l].begin(), db[l].end())});
    }
    return layers;
  };
  g.query_tower = to_layers(dwq, dbq);
  g.target_tower = to_layers(dwt, dbt);
  return out;
}

template <class Real>
BatchLoss<Real> batch_loss(const std::vector<EncodedPair>& batch, const BasicEmbeddingModel<Real>& model) {
  return batch_loss(std::span<const EncodedPair>(batch), model);
}

// ---------------------------------------------------------------------------
// Training

/// Per-parameter optimizer state and update rule.
class OptimizerState {
 public:
  OptimizerState(const EmbeddingModel& model, const TrainConfig& cfg)
      : kind_(cfg.optimizer), lr_(static_cast<float>(cfg.learning_rate)) {
    if (kind_ == Optimizer::adagrad) {
      table_acc_.assign(model.table.size(), 0.0f);
      for (const auto* t : {&model.query_tower, &model.target_tower}) {
        for (const auto& l : *t) {
          layer_acc_.push_back(std::vector<float>(l.weight.size(), 0.0f));
          layer_acc_.push_back(std::vector<float>(l.bias.size(), 0.0f));
        }
      }
    }
  }

  void apply(EmbeddingModel& model, const Gradients<float>& g) {
    const std::size_t d = model.dim();
    for (std::size_t s = 0; s < g.rows.size(); ++s) {
      const std::size_t off = std::size_t{g.rows[s]} * d;
      update(model.table.data() + off, g.table.data() + s * d, kind_ == Optimizer::adagrad ? table_acc_.data() + off : nullptr, d);
    }
    std::size_t acc_idx = 0;
    for (auto [params, grads] : {std::pair{&model.query_tower, &g.query_tower}, std::pair{&model.target_tower, &g.target_tower}}) {
      for (std::size_t l = 0; l < params->size(); ++l) {
        auto& p = (*params)[l];
        const auto& gl = (*grads)[l];
        float* wacc = kind_ == Optimizer::adagrad ? layer_acc_[acc_idx].data() : nullptr;
        float* bacc = kind_ == Optimizer::adagrad ? layer_acc_[acc_idx + 1].data() : nullptr;
        update(p.weight.data(), gl.weight.data(), wacc, p.weight.size());
        update(p.bias.data(), gl.bias.data(), bacc, p.bias.size());
        acc_idx += 2;
      }
    }
  }

 private:
  // adagrad: acc += g^2; p -= lr * g / sqrt(acc + 1e-8).  sgd: p -= lr * g.
  void update(float* p, const float* g, float* acc, std::size_t n) const {
    if (acc == nullptr) {
      for (std::size_t k = 0; k < n; ++k) p[k] -= lr_ * g[k];
      return;
    }
    for (std::size_t k = 0; k < n; ++k) {
      acc[k] += g[k] * g[k];
      p[k] -= lr_ * g[k] / std::sqrt(acc[k] + 1e-8f);
    }
  }

  Optimizer kind_;
  float lr_;
  std::vector<float> table_acc_;
  std::vector<std::vector<float>> layer_acc_;
};

/// Table ~ U[-0.05, 0.05]; tower weights identity plus U[-0.05, 0.05], biases zero.
inline EmbeddingModel init_model(const ModelConfig& config, const Vocabulary& vocab, std::uint64_t seed) {
  auto model = EmbeddingModel::zeros(config, vocab.size(), vocab.digest());
  Rng rng(derive_seed(seed, "init"));
  for (auto& x : model.table) x = static_cast<float>(rng.uniform(-0.05, 0.05));
  const std::size_t d = config.dim;
  for (auto* tower : {&model.query_tower, &model.target_tower}) {
    for (auto& layer : *tower) {
      for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) {
          layer.weight[r * d + c] = static_cast<float>((r == c ? 1.0 : 0.0) + rng.uniform(-0.05, 0.05));
        }
      }
    }
  }
  return model;
}

struct TrainResult {
  EmbeddingModel model;
  std::vector<double> epoch_losses;  // mean batch loss per epoch
};

using EpochCallback = std::function<void(std::size_t epoch, double mean_loss)>;

/// Trains from a fresh initialization. Each epoch visits the stream in a
/// seeded shuffle; a tail batch of fewer than 2 pairs is skipped.
inline TrainResult train(std::span<const EncodedPair> stream, const ModelConfig& model_config,
                         const TrainConfig& cfg, const Vocabulary& vocab,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  model_config.validate();
  if (stream.empty()) throw Error("train: training stream is empty");
  TrainResult result{init_model(model_config, vocab, cfg.seed), {}};
  EmbeddingModel& model = result.model;
  OptimizerState opt(model, cfg);

  std::vector<std::size_t> order(stream.size());
  std::vector<EncodedPair> batch;
  std::size_t batch_index = 0;
  const std::size_t workers = cfg.deterministic ? 1
                              : cfg.workers ? cfg.workers
                                            : std::max(1u, std::thread::hardware_concurrency());

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng(derive_seed(cfg.seed, "epoch", epoch)).shuffle(order);

    std::vector<std::vector<EncodedPair>> batches;
    for (std::size_t start = 0; start + 2 <= order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(stream[order[k]]);
      batches.push_back(batch);
    }

    double loss_sum = 0.0;
    std::size_t counted = 0;
    auto check = [&](double loss) {
      if (!std::isfinite(loss)) {
        throw Error("train: non-finite loss at batch " + std::to_string(batch_index) + " (epoch " + std::to_string(epoch) + ")");
      }
      loss_sum += loss;
      ++counted;
      ++batch_index;
    };

    if (workers == 1) {
      for (const auto& bt : batches) {
        auto bl = batch_loss(std::span<const EncodedPair>(bt), model);
        check(bl.loss);
        opt.apply(model, bl.grads);
      }
    } else {
      // Workers compute gradients against a shared snapshot; updates are
      // applied in completion order, so results are not bit-reproducible.
      for (std::size_t g0 = 0; g0 < batches.size(); g0 += workers) {
        const std::size_t g1 = std::min(batches.size(), g0 + workers);
        std::mutex mu;
        std::vector<BatchLoss<float>> done;
        std::vector<std::future<void>> jobs;
        for (std::size_t k = g0; k < g1; ++k) {
          jobs.push_back(std::async(std::launch::async, [&, k] {
            auto bl = batch_loss(std::span<const EncodedPair>(batches[k]), model);
            std::lock_guard lock(mu);
            done.push_back(std::move(bl));
          }));
        }
        for (auto& j : jobs) j.get();
        for (auto& bl : done) {
          check(bl.loss);
          opt.apply(model, bl.grads);
        }
      }
    }
    const double mean = counted ? loss_sum / static_cast<double>(counted) : 0.0;
    result.epoch_losses.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  if (!model.all_finite()) throw Error("train: parameters became non-finite");
  return result;
}

inline TrainResult train(std::span<const ExamplePair> pairs, const ModelConfig& model_config,
                         const TrainConfig& cfg, const Vocabulary& vocab, const EpochCallback& on_epoch = {}) {
  const auto encoded = encode_all(pairs, vocab);
  return train(std::span<const EncodedPair>(encoded), model_config, cfg, vocab, on_epoch);
}

// ---------------------------------------------------------------------------
// Checkpoints: "MDRL", u16 version, u32 header length, JSON header, f32 table,
// then query-tower and target-tower layers (weight, bias). Little-endian.

inline constexpr char kCheckpointMagic[4] = {'M', 'D', 'R', 'L'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

namespace detail {

template <class UInt>
void put_le(std::string& out, UInt v) {
  for (std::size_t i = 0; i < sizeof(UInt); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <class UInt>
UInt get_le(std::string_view in, std::size_t& pos) {
  if (pos + sizeof(UInt) > in.size()) throw Error("checkpoint truncated");
  UInt v = 0;
  for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(UInt);
  return v;
}

inline void put_floats(std::string& out, const std::vector<float>& v) {
  for (float x : v) put_le(out, std::bit_cast<std::uint32_t>(x));
}

inline void get_floats(std::string_view in, std::size_t& pos, std::vector<float>& v) {
  if (pos + v.size() * 4 > in.size()) throw Error("checkpoint truncated");
  for (auto& x : v) x = std::bit_cast<float>(get_le<std::uint32_t>(in, pos));
}

}  // namespace detail

inline std::string serialize_checkpoint(const EmbeddingModel& model) {
  nlohmann::json header = {{"config", model.config}, {"vocab_hash", model.vocab_hash},
                           {"rows", model.rows}, {"dim", model.dim()}, {"dtype", "f32le"}};
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, 4);
  detail::put_le(out, kCheckpointVersion);
  detail::put_le(out, static_cast<std::uint32_t>(h.size()));
  out += h;
  detail::put_floats(out, model.table);
  for (const auto* t : {&model.query_tower, &model.target_tower}) {
    for (const auto& l : *t) {
      detail::put_floats(out, l.weight);
      detail::put_floats(out, l.bias);
    }
  }
  return out;
}

/// Parses a checkpoint; when `vocab` is given, its digest and size must match.
inline EmbeddingModel deserialize_checkpoint(std::string_view bytes, const Vocabulary* vocab = nullptr) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw Error("checkpoint: bad magic (expected MDRL)");
  }
  std::size_t pos = 4;
  const auto version = detail::get_le<std::uint16_t>(bytes, pos);
  if (version != kCheckpointVersion) throw Error("checkpoint: unsupported version " + std::to_string(version));
  const auto hlen = detail::get_le<std::uint32_t>(bytes, pos);
  if (pos + hlen > bytes.size()) throw Error("checkpoint truncated");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, hlen));
  } catch (const std::exception& e) {
    throw Error(std::string("checkpoint: bad header: ") + e.what());
  }
  pos += hlen;
  ModelConfig cfg = header.at("config").get<ModelConfig>();
  auto model = EmbeddingModel::zeros(cfg, header.at("rows").get<std::size_t>(), header.at("vocab_hash").get<std::string>());
  if (header.at("dim").get<std::size_t>() != cfg.dim) throw Error("checkpoint: header dim mismatch");
  detail::get_floats(bytes, pos, model.table);
  for (auto* t : {&model.query_tower, &model.target_tower}) {
    for (auto& l : *t) {
      detail::get_floats(bytes, pos, l.weight);
      detail::get_floats(bytes, pos, l.bias);
    }
  }
  if (pos != bytes.size()) throw Error("checkpoint: trailing bytes");
  if (vocab != nullptr) {
    const std::string expected = vocab->digest();
    if (model.vocab_hash != expected) {
      throw Error("checkpoint: vocabulary hash mismatch (checkpoint " + model.vocab_hash + ", vocabulary " + expected + ")");
    }
    if (model.rows != vocab->size()) throw Error("checkpoint: row count does not match vocabulary size");
  }
  return model;
}

inline void save_checkpoint(const EmbeddingModel& model, const std::string& path) {
  write_file(path, serialize_checkpoint(model));
}

inline EmbeddingModel load_checkpoint(const std::string& path, const Vocabulary* vocab = nullptr) {
  return deserialize_checkpoint(read_file(path), vocab);
}

}  // namespace mdr
