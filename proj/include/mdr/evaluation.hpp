#pragma once

// Sampled recall@k: each query's true candidate is ranked against distractors
// drawn from training-side targets.

#include <algorithm>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdr/common.hpp"
#include "mdr/encoder.hpp"
#include "mdr/rng.hpp"

namespace mdr {

struct EvalConfig {
  std::vector<std::size_t> ks{1, 10, 20};
  std::size_t n_distractors = 5000;
  std::uint64_t seed = 0;

  void validate() const {
    if (ks.empty()) throw Error("eval: ks must be nonempty");
    for (std::size_t i = 0; i < ks.size(); ++i) {
      if (ks[i] < 1) throw Error("eval: every k must be >= 1");
      if (i > 0 && ks[i] <= ks[i - 1]) throw Error("eval: ks must be strictly ascending");
    }
    if (n_distractors < 1) throw Error("eval: n_distractors must be >= 1");
  }
};

inline void to_json(nlohmann::json& j, const EvalConfig& c) {
  j = {{"ks", c.ks}, {"n_distractors", c.n_distractors}, {"seed", c.seed}};
}

inline void from_json(const nlohmann::json& j, EvalConfig& c) {
  c.ks = j.value("ks", std::vector<std::size_t>{1, 10, 20});
  c.n_distractors = j.value("n_distractors", std::size_t{5000});
  c.seed = j.value("seed", std::uint64_t{0});
}

struct EvalReport {
  std::string lang;
  std::string model_id;
  std::size_t pool_size = 0;
  std::size_t n_queries = 0;
  std::map<std::size_t, double> recall;

  double at(std::size_t k) const {
    auto it = recall.find(k);
    if (it == recall.end()) throw Error("eval report has no recall@" + std::to_string(k));
    return it->second;
  }

  nlohmann::json to_json() const {
    nlohmann::json r = nlohmann::json::object();
    for (const auto& [k, v] : recall) r[std::to_string(k)] = v;
    return {{"lang", lang}, {"model_id", model_id}, {"pool_size", pool_size},
            {"n_queries", n_queries}, {"recall", r}};
  }

  static EvalReport from_json(const nlohmann::json& j) {
    EvalReport rep;
    rep.lang = j.at("lang").get<std::string>();
    rep.model_id = j.at("model_id").get<std::string>();
    rep.pool_size = j.at("pool_size").get<std::size_t>();
    rep.n_queries = j.at("n_queries").get<std::size_t>();
    for (const auto& [k, v] : j.at("recall").items()) rep.recall[std::stoull(k)] = v.get<double>();
    return rep;
  }
};

/// Pool layout: position truth_index holds the true candidate; every other
/// position p holds distractor_source[source_index[p]].
struct CandidatePool {
  std::vector<std::size_t> source_index;
  std::size_t truth_index = 0;

  static constexpr std::size_t kTruth = static_cast<std::size_t>(-1);

  std::size_t size() const noexcept { return source_index.size(); }
};

/// Truth plus n_distractors uniform draws without replacement from a source
/// of `source_size` candidates; the truth lands at a uniform position.
inline CandidatePool build_pool(std::size_t source_size, std::size_t n_distractors, Rng& rng) {
  if (source_size < n_distractors) {
    throw Error("build_pool: need " + std::to_string(n_distractors) + " distractors but only " +
                std::to_string(source_size) + " are available");
  }
  CandidatePool pool;
  pool.source_index = rng.sample_without_replacement(source_size, n_distractors);
  pool.truth_index = static_cast<std::size_t>(rng.below(n_distractors + 1));
  pool.source_index.insert(pool.source_index.begin() + static_cast<std::ptrdiff_t>(pool.truth_index), CandidatePool::kTruth);
  return pool;
}

inline CandidatePool build_pool(std::size_t source_size, const EvalConfig& cfg, std::uint64_t stream_seed) {
  Rng rng(stream_seed);
  return build_pool(source_size, cfg.n_distractors, rng);
}

/// Position of the truth after sorting by score descending with ties broken
/// by pool index ascending (0 = first).
inline std::size_t rank_of_truth(std::span<const double> scores, std::size_t truth_index) {
  const double t = scores[truth_index];
  std::size_t rank = 0;
  for (std::size_t p = 0; p < scores.size(); ++p) {
    if (scores[p] > t || (scores[p] == t && p < truth_index)) ++rank;
  }
  return rank;
}

/// Per-query seed stream: each query draws its own distractor pool.
inline std::uint64_t query_pool_seed(std::uint64_t seed, std::size_t query_index) {
  return derive_seed(seed, "pool", query_index);
}

/// Ranks of the truth for each query; the building block of recall_at_k.
inline std::vector<std::size_t> truth_ranks(const EmbeddingModel& model, std::span<const EncodedPair> eval_pairs,
                                            std::span<const std::vector<TokenId>> distractor_source,
                                            const EvalConfig& cfg) {
  cfg.validate();
  if (eval_pairs.empty()) throw Error("recall_at_k: no evaluation pairs");
  if (distractor_source.size() < cfg.n_distractors) {
    throw Error("build_pool: need " + std::to_string(cfg.n_distractors) + " distractors but only " +
                std::to_string(distractor_source.size()) + " are available");
  }
  const std::size_t d = model.dim();
  std::vector<float> cache(distractor_source.size() * d);
  for (std::size_t s = 0; s < distractor_source.size(); ++s) {
    const auto e = embed_bag(std::span<const TokenId>(distractor_source[s]), model, Tower::target);
    std::copy(e.begin(), e.end(), cache.begin() + static_cast<std::ptrdiff_t>(s * d));
  }
  std::vector<std::size_t> ranks;
  ranks.reserve(eval_pairs.size());
  std::vector<double> scores;
  for (std::size_t qi = 0; qi < eval_pairs.size(); ++qi) {
    const auto q = embed_bag(std::span<const TokenId>(eval_pairs[qi].query), model, Tower::query);
    const auto truth = embed_bag(std::span<const TokenId>(eval_pairs[qi].target), model, Tower::target);
    const CandidatePool pool = build_pool(distractor_source.size(), cfg, query_pool_seed(cfg.seed, qi));
    scores.assign(pool.size(), 0.0);
    for (std::size_t p = 0; p < pool.size(); ++p) {
      if (p == pool.truth_index) {
        scores[p] = score(std::span<const float>(q), std::span<const float>(truth));
      } else {
        scores[p] = score(std::span<const float>(q), std::span<const float>(cache.data() + pool.source_index[p] * d, d));
      }
    }
    ranks.push_back(rank_of_truth(scores, pool.truth_index));
  }
  return ranks;
}

inline EvalReport report_from_ranks(std::span<const std::size_t> ranks, const EvalConfig& cfg,
                                    std::string lang, std::string model_id) {
  EvalReport rep;
  rep.lang = std::move(lang);
  rep.model_id = std::move(model_id);
  rep.pool_size = cfg.n_distractors + 1;
  rep.n_queries = ranks.size();
  for (std::size_t k : cfg.ks) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](std::size_t r) { return r < k; });
    rep.recall[k] = static_cast<double>(hits) / static_cast<double>(ranks.size());
  }
  return rep;
}

/// Fraction of queries whose true target ranks within the top k of its pool.
inline EvalReport recall_at_k(const EmbeddingModel& model, std::span<const EncodedPair> eval_pairs,
                              std::span<const std::vector<TokenId>> distractor_source, const EvalConfig& cfg,
                              std::string lang = {}, std::string model_id = {}) {
  const auto ranks = truth_ranks(model, eval_pairs, distractor_source, cfg);
  return report_from_ranks(ranks, cfg, std::move(lang), std::move(model_id));
}

/// Feature-level entry point; encodes with `vocab` (OOV features skipped).
inline EvalReport recall_at_k(const EmbeddingModel& model, const Vocabulary& vocab,
                              std::span<const ExamplePair> eval_pairs, std::span<const FeatureBag> distractor_source,
                              const EvalConfig& cfg, std::string lang = {}, std::string model_id = {}) {
  const auto encoded = encode_all(eval_pairs, vocab);
  std::vector<std::vector<TokenId>> source;
  source.reserve(distractor_source.size());
  for (const auto& f : distractor_source) source.push_back(encode(f, vocab));
  return recall_at_k(model, encoded, source, cfg, std::move(lang), std::move(model_id));
}

}  // namespace mdr
