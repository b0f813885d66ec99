#pragma once

// N-gram vocabularies: frequency-capped construction, merging, censoring and
// the set-overlap statistics (Jaccard, asymmetric overlap) used in analyses.

#include <algorithm>
#include <cstdint>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mdr/common.hpp"
#include "mdr/corpus.hpp"
#include "mdr/digest.hpp"

namespace mdr {

class Vocabulary;

/// Accumulates token frequencies and per-token language provenance.
class VocabCounter {
 public:
  void add(const std::string& token, const std::string& lang, std::uint64_t count = 1) {
    auto& slot = counts_[token];
    slot.freq += count;
    slot.langs |= lang_bit(lang);
  }

  void add(const ExamplePair& pair) {
    for (const auto& f : pair.query) add(f, pair.lang);
    for (const auto& f : pair.target) add(f, pair.lang);
  }

  void add(const Vocabulary& vocab);

  /// Adds one token with an explicit frequency and provenance list.
  void add_entry(const std::string& token, std::uint64_t freq, std::span<const std::string> langs) {
    auto& slot = counts_[token];
    slot.freq += freq;
    for (const auto& l : langs) slot.langs |= lang_bit(l);
  }

  void register_lang(const std::string& lang) { lang_bit(lang); }

  /// Sorts by (freq desc, token asc), keeps the first `cap`, assigns dense ids.
  Vocabulary finish(std::optional<std::size_t> cap = std::nullopt) const;

 private:
  struct Slot {
    std::uint64_t freq = 0;
    std::uint64_t langs = 0;
  };

  std::uint64_t lang_bit(const std::string& lang) {
    auto it = std::find(langs_.begin(), langs_.end(), lang);
    if (it == langs_.end()) {
      if (langs_.size() == 64) throw Error("vocabulary: more than 64 provenance languages");
      langs_.push_back(lang);
      it = std::prev(langs_.end());
    }
    return std::uint64_t{1} << (it - langs_.begin());
  }

  std::unordered_map<std::string, Slot> counts_;
  std::vector<std::string> langs_;  // bit position -> language, insertion order
};

class Vocabulary {
 public:
  struct Entry {
    std::string token;
    std::uint64_t freq = 0;
    std::uint64_t lang_mask = 0;  // bits index into langs()

    friend bool operator==(const Entry&, const Entry&) = default;
  };

  Vocabulary() = default;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  /// Entries in id order.
  const std::vector<Entry>& entries() const noexcept { return entries_; }
  const Entry& entry(TokenId id) const { return entries_.at(id); }
  const std::string& token(TokenId id) const { return entries_.at(id).token; }
  std::uint64_t freq(TokenId id) const { return entries_.at(id).freq; }

  /// Sorted provenance languages.
  const std::vector<std::string>& langs() const noexcept { return langs_; }

  std::optional<TokenId> find(const std::string& token) const {
    auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  std::vector<std::string> token_langs(TokenId id) const {
    std::vector<std::string> out;
    const std::uint64_t mask = entries_.at(id).lang_mask;
    for (std::size_t b = 0; b < langs_.size(); ++b) {
      if (mask & (std::uint64_t{1} << b)) out.push_back(langs_[b]);
    }
    return out;
  }

  /// TSV: header "token\tid\tfreq\tlangs", one row per token in id order.
  std::string to_tsv() const {
    std::string out = "token\tid\tfreq\tlangs\n";
    for (std::size_t id = 0; id < entries_.size(); ++id) {
      const auto& e = entries_[id];
      out += e.token;
      out += '\t';
      out += std::to_string(id);
      out += '\t';
      out += std::to_string(e.freq);
      out += '\t';
      bool first = true;
      for (const auto& l : token_langs(static_cast<TokenId>(id))) {
        if (!first) out += ',';
        out += l;
        first = false;
      }
      out += '\n';
    }
    return out;
  }

  static Vocabulary from_tsv(const std::string& text, const std::string& source = "<vocab>") {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "token\tid\tfreq\tlangs") {
      throw Error(source + ": missing vocabulary header");
    }
    VocabCounter counter;
    std::vector<std::string> order;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const std::string where = source + ":" + std::to_string(line_no);
      std::vector<std::string> cols;
      std::string col;
      std::istringstream row(line);
      while (std::getline(row, col, '\t')) cols.push_back(col);
      if (line.back() == '\t') cols.emplace_back();
      if (cols.size() != 4) throw Error(where + ": expected 4 columns");
      std::uint64_t id = 0;
      std::uint64_t freq = 0;
      try {
        id = std::stoull(cols[1]);
        freq = std::stoull(cols[2]);
      } catch (const std::exception&) {
        throw Error(where + ": bad id/freq");
      }
      if (id != order.size() || freq == 0) throw Error(where + ": ids must be dense and freq >= 1");
      std::vector<std::string> langs;
      std::istringstream ls(cols[3]);
      for (std::string l; std::getline(ls, l, ',');) {
        if (!l.empty()) langs.push_back(l);
      }
      counter.add_entry(cols[0], freq, langs);
      order.push_back(cols[0]);
    }
    Vocabulary v = counter.finish();
    if (v.size() != order.size()) throw Error(source + ": duplicate tokens");
    for (std::size_t i = 0; i < order.size(); ++i) {
      if (v.entries_[i].token != order[i]) {
        throw Error(source + ": rows are not in canonical (freq desc, token asc) order");
      }
    }
    return v;
  }

  void save(const std::string& path) const { write_file(path, to_tsv()); }

  static Vocabulary load(const std::string& path) { return from_tsv(read_file(path), path); }

  /// Digest of the TSV serialization; stored in checkpoints.
  std::string digest() const { return git_blob_hash(to_tsv()); }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.entries_ == b.entries_ && a.langs_ == b.langs_;
  }

 private:
  friend class VocabCounter;

  std::vector<Entry> entries_;
  std::unordered_map<std::string, TokenId> index_;
  std::vector<std::string> langs_;
};

inline void VocabCounter::add(const Vocabulary& vocab) {
  for (const auto& e : vocab.entries()) {
    auto& slot = counts_[e.token];
    slot.freq += e.freq;
    for (std::size_t b = 0; b < vocab.langs().size(); ++b) {
      if (e.lang_mask & (std::uint64_t{1} << b)) slot.langs |= lang_bit(vocab.langs()[b]);
    }
  }
  for (const auto& l : vocab.langs()) lang_bit(l);
}

inline Vocabulary VocabCounter::finish(std::optional<std::size_t> cap) const {
  if (cap && *cap < 1) throw Error("vocabulary cap must be >= 1");
  std::vector<const std::pair<const std::string, Slot>*> order;
  order.reserve(counts_.size());
  for (const auto& kv : counts_) {
    if (kv.second.freq > 0) order.push_back(&kv);
  }
  auto before = [](const auto* a, const auto* b) {
    if (a->second.freq != b->second.freq) return a->second.freq > b->second.freq;
    return a->first < b->first;
  };
  if (cap && *cap < order.size()) {
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(*cap), order.end(), before);
    order.resize(*cap);
  } else {
    std::sort(order.begin(), order.end(), before);
  }

  // remap provenance bits onto sorted language order
  std::vector<std::size_t> rank(langs_.size());
  std::vector<std::string> sorted = langs_;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < langs_.size(); ++i) {
    rank[i] = static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), langs_[i]) - sorted.begin());
  }

  Vocabulary v;
  v.langs_ = std::move(sorted);
  v.entries_.reserve(order.size());
  v.index_.reserve(order.size());
  for (const auto* kv : order) {
    std::uint64_t mask = 0;
    for (std::size_t b = 0; b < langs_.size(); ++b) {
      if (kv->second.langs & (std::uint64_t{1} << b)) mask |= std::uint64_t{1} << rank[b];
    }
    v.index_.emplace(kv->first, static_cast<TokenId>(v.entries_.size()));
    v.entries_.push_back({kv->first, kv->second.freq, mask});
  }
  return v;
}

/// Counts every feature occurrence on both sides of every pair.
inline Vocabulary build_vocab(std::span<const ExamplePair> pairs,
                              std::optional<std::size_t> cap = std::nullopt) {
  VocabCounter counter;
  for (const auto& p : pairs) counter.add(p);
  return counter.finish(cap);
}

/// Frequencies summed, provenance unioned, then capped like build_vocab.
inline Vocabulary merge(std::span<const Vocabulary> vocabs,
                        std::optional<std::size_t> cap = std::nullopt) {
  VocabCounter counter;
  for (const auto& v : vocabs) counter.add(v);
  return counter.finish(cap);
}

inline std::size_t intersection_size(const Vocabulary& a, const Vocabulary& b) {
  const Vocabulary& small = a.size() <= b.size() ? a : b;
  const Vocabulary& large = a.size() <= b.size() ? b : a;
  std::size_t n = 0;
  for (const auto& e : small.entries()) n += large.contains(e.token) ? 1 : 0;
  return n;
}

/// |A ∩ B| / |A ∪ B| over token keys; 0 when both are empty.
inline double jaccard(const Vocabulary& a, const Vocabulary& b) {
  const std::size_t inter = intersection_size(a, b);
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// |source ∩ target| / |source|.
inline double asym_overlap(const Vocabulary& source, const Vocabulary& target) {
  if (source.empty()) throw Error("asym_overlap: source vocabulary is empty");
  return static_cast<double>(intersection_size(source, target)) / static_cast<double>(source.size());
}

struct OverlapStats {
  double jaccard = 0.0;
  double asym_a_to_b = 0.0;
  double asym_b_to_a = 0.0;
  std::size_t intersection_size = 0;
  std::size_t union_size = 0;
};

inline OverlapStats overlap_stats(const Vocabulary& a, const Vocabulary& b) {
  OverlapStats s;
  s.intersection_size = intersection_size(a, b);
  s.union_size = a.size() + b.size() - s.intersection_size;
  s.jaccard = s.union_size == 0 ? 0.0 : static_cast<double>(s.intersection_size) / static_cast<double>(s.union_size);
  s.asym_a_to_b = a.empty() ? 0.0 : static_cast<double>(s.intersection_size) / static_cast<double>(a.size());
  s.asym_b_to_a = b.empty() ? 0.0 : static_cast<double>(s.intersection_size) / static_cast<double>(b.size());
  return s;
}

/// aux restricted to tokens absent from target; frequencies kept, ids re-densified.
inline Vocabulary censor(const Vocabulary& aux, const Vocabulary& target) {
  VocabCounter counter;
  for (const auto& l : aux.langs()) counter.register_lang(l);
  for (TokenId id = 0; id < aux.size(); ++id) {
    const auto& e = aux.entry(id);
    if (!target.contains(e.token)) counter.add_entry(e.token, e.freq, aux.token_langs(id));
  }
  return counter.finish();
}

/// Drops features missing from vocab; drops pairs left with an empty side.
inline std::vector<ExamplePair> censor_pairs(std::span<const ExamplePair> pairs, const Vocabulary& vocab) {
  std::vector<ExamplePair> out;
  out.reserve(pairs.size());
  auto keep = [&vocab](const FeatureBag& in) {
    FeatureBag kept;
    kept.reserve(in.size());
    for (const auto& f : in) {
      if (vocab.contains(f)) kept.push_back(f);
    }
    return kept;
  };
  for (const auto& p : pairs) {
    ExamplePair q{p.lang, keep(p.query), keep(p.target), p.kind};
    if (q.query.empty() || q.target.empty()) continue;
    out.push_back(std::move(q));
  }
  return out;
}

/// Maps features to ids; out-of-vocabulary features are skipped.
inline std::vector<TokenId> encode(const FeatureBag& feats, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  ids.reserve(feats.size());
  for (const auto& f : feats) {
    if (auto id = vocab.find(f)) ids.push_back(*id);
  }
  return ids;
}

enum class OverlapMetric { jaccard, asymmetric };

/// Square matrix as TSV with language codes as row and column headers.
/// For the asymmetric metric, cell (row, col) is |V_row ∩ V_col| / |V_row|.
inline std::string overlap_matrix_tsv(std::span<const std::string> langs,
                                      std::span<const Vocabulary> vocabs, OverlapMetric metric) {
  if (langs.size() != vocabs.size()) throw Error("overlap matrix: langs/vocabs size mismatch");
  std::ostringstream out;
  out.precision(6);
  out << "lang";
  for (const auto& l : langs) out << '\t' << l;
  out << '\n';
  for (std::size_t i = 0; i < langs.size(); ++i) {
    out << langs[i];
    for (std::size_t j = 0; j < langs.size(); ++j) {
      double v = 0.0;
      if (metric == OverlapMetric::jaccard) {
        v = jaccard(vocabs[i], vocabs[j]);
      } else if (!vocabs[i].empty()) {
        v = asym_overlap(vocabs[i], vocabs[j]);
      }
      out << '\t' << std::fixed << v;
    }
    out << '\n';
  }
  return out.str();
}

}  // namespace mdr
