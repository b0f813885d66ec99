#pragma once

// Fixed-length training streams mixing a target language with auxiliary data.

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdr/common.hpp"
#include "mdr/rng.hpp"

namespace mdr {

struct MixtureSpec {
  std::string target_lang;
  double ratio = 0.0;  // share of the stream drawn from the target
  std::size_t total = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(ratio >= 0.0 && ratio <= 1.0)) throw Error("mixture ratio must lie in [0, 1]");
    if (total < 1) throw Error("mixture total must be >= 1");
  }

  /// Number of target examples in the stream: round(ratio * total).
  std::size_t target_quota() const {
    return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(total)));
  }
};

inline void to_json(nlohmann::json& j, const MixtureSpec& s) {
  j = {{"target_lang", s.target_lang}, {"ratio", s.ratio}, {"total", s.total}, {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, MixtureSpec& s) {
  s.target_lang = j.value("target_lang", std::string());
  s.ratio = j.value("ratio", 0.0);
  s.total = j.value("total", std::size_t{1});
  s.seed = j.value("seed", std::uint64_t{0});
}

namespace detail {

// Uniform without replacement when the source covers the quota, otherwise
// uniform with replacement.
template <class T>
void draw_quota(std::span<const T> source, std::size_t quota, Rng& rng, std::vector<T>& out) {
  if (quota == 0) return;
  if (source.size() >= quota) {
    for (std::size_t i : rng.sample_without_replacement(source.size(), quota)) out.push_back(source[i]);
  } else {
    for (std::size_t i = 0; i < quota; ++i) out.push_back(source[rng.below(source.size())]);
  }
}

}  // namespace detail

/// Emits exactly spec.total examples, exactly round(ratio * total) of them
/// from target, in a seeded uniform shuffle. aux is treated as one pool, so
/// auxiliary languages keep their native relative proportions.
template <class T>
std::vector<T> mix(std::span<const T> target, std::span<const T> aux, const MixtureSpec& spec) {
  spec.validate();
  const std::size_t n_target = spec.target_quota();
  const std::size_t n_aux = spec.total - n_target;
  if (n_target > 0 && target.empty()) {
    throw Error("mix: target source '" + spec.target_lang + "' is empty but its quota is " +
                std::to_string(n_target));
  }
  if (n_aux > 0 && aux.empty()) {
    throw Error("mix: auxiliary source is empty but its quota is " + std::to_string(n_aux));
  }
  Rng rng(spec.seed);
  std::vector<T> out;
  out.reserve(spec.total);
  detail::draw_quota(target, n_target, rng, out);
  detail::draw_quota(aux, n_aux, rng, out);
  rng.shuffle(out);
  return out;
}

template <class T>
std::vector<T> mix(const std::vector<T>& target, const std::vector<T>& aux, const MixtureSpec& spec) {
  return mix(std::span<const T>(target), std::span<const T>(aux), spec);
}

/// Share of the target language among all pairs.
inline double native_ratio(const std::map<std::string, std::size_t>& counts, const std::string& target_lang) {
  std::size_t total = 0;
  for (const auto& [lang, n] : counts) total += n;
  if (total == 0) throw Error("native_ratio: total pair count is zero");
  auto it = counts.find(target_lang);
  const std::size_t n_target = it == counts.end() ? 0 : it->second;
  return static_cast<double>(n_target) / static_cast<double>(total);
}

}  // namespace mdr
