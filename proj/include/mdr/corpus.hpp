#pragma once

// Sectioned corpus records and next-sentence / inverse-cloze pair extraction.

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <functional>
#include <istream>
#include <iterator>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "mdr/common.hpp"
#include "mdr/detail/unicode_tables.hpp"
#include "mdr/rng.hpp"

namespace mdr {

/// One corpus section: the unit from which pairs are extracted.
struct SectionRecord {
  std::string lang;
  std::string doc_id;
  std::string sec_id;
  std::vector<std::string> sentences;

  friend bool operator==(const SectionRecord&, const SectionRecord&) = default;
};

/// Multiset of n-gram features. A unigram is a normalized token; a bigram is
/// two unigrams joined by one space. Multiplicity is carried by repetition.
using FeatureBag = std::vector<std::string>;

struct ExamplePair {
  std::string lang;
  FeatureBag query;
  FeatureBag target;
  PairKind kind = PairKind::nsp;

  friend bool operator==(const ExamplePair&, const ExamplePair&) = default;
};

namespace detail {

struct Codepoint {
  char32_t value;
  std::size_t length;  // bytes consumed
};

// Invalid sequences decode as U+FFFD over one byte; the raw byte is kept on output.
inline Codepoint decode_utf8(std::string_view s, std::size_t pos) {
  const auto b0 = static_cast<unsigned char>(s[pos]);
  if (b0 < 0x80) return {b0, 1};
  std::size_t len = 0;
  char32_t cp = 0;
  if ((b0 & 0xE0) == 0xC0) {
    len = 2;
    cp = b0 & 0x1F;
  } else if ((b0 & 0xF0) == 0xE0) {
    len = 3;
    cp = b0 & 0x0F;
  } else if ((b0 & 0xF8) == 0xF0) {
    len = 4;
    cp = b0 & 0x07;
  } else {
    return {0xFFFD, 1};
  }
  if (pos + len > s.size()) return {0xFFFD, 1};
  for (std::size_t i = 1; i < len; ++i) {
    const auto b = static_cast<unsigned char>(s[pos + i]);
    if ((b & 0xC0) != 0x80) return {0xFFFD, 1};
    cp = (cp << 6) | (b & 0x3F);
  }
  static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
  if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return {0xFFFD, 1};
  return {cp, len};
}

inline void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

template <std::size_t N>
bool in_ranges(const std::array<CodepointRange, N>& table, char32_t cp) {
  auto it = std::upper_bound(table.begin(), table.end(), cp,
                             [](char32_t c, const CodepointRange& r) { return c < r.first; });
  return it != table.begin() && cp <= std::prev(it)->last;
}

inline bool is_space(char32_t cp) { return in_ranges(kSpaceRanges, cp); }
inline bool is_punct(char32_t cp) { return in_ranges(kPunctRanges, cp); }

inline char32_t to_lower(char32_t cp) {
  auto it = std::upper_bound(kLowerRuns.begin(), kLowerRuns.end(), cp,
                             [](char32_t c, const LowerRun& r) { return c < r.first; });
  if (it == kLowerRuns.begin()) return cp;
  const LowerRun& run = *std::prev(it);
  if (cp > run.last || (cp - run.first) % run.stride != 0) return cp;
  return static_cast<char32_t>(static_cast<std::int64_t>(cp) + run.delta);
}

// Calls fn(begin, end) for each maximal whitespace-free byte range of s.
template <class Fn>
void for_each_run(std::string_view s, Fn&& fn) {
  std::size_t pos = 0;
  std::size_t start = std::string_view::npos;
  while (pos < s.size()) {
    const Codepoint c = decode_utf8(s, pos);
    if (is_space(c.value)) {
      if (start != std::string_view::npos) fn(start, pos);
      start = std::string_view::npos;
    } else if (start == std::string_view::npos) {
      start = pos;
    }
    pos += c.length;
  }
  if (start != std::string_view::npos) fn(start, s.size());
}

}  // namespace detail

/// Number of raw whitespace-delimited runs, before any normalization.
inline std::size_t count_words(std::string_view sentence) {
  std::size_t n = 0;
  detail::for_each_run(sentence, [&n](std::size_t, std::size_t) { ++n; });
  return n;
}

/// Whitespace split, lowercase, strip leading/trailing punctuation; drop empties.
inline std::vector<std::string> tokenize(std::string_view sentence) {
  std::vector<std::string> tokens;
  detail::for_each_run(sentence, [&](std::size_t begin, std::size_t end) {
    struct Unit {
      char32_t cp;
      std::size_t pos, len;
    };
    std::vector<Unit> units;
    for (std::size_t pos = begin; pos < end;) {
      const auto c = detail::decode_utf8(sentence, pos);
      units.push_back({c.value, pos, c.length});
      pos += c.length;
    }
    std::size_t lo = 0;
    std::size_t hi = units.size();
    while (lo < hi && detail::is_punct(units[lo].cp)) ++lo;
    while (hi > lo && detail::is_punct(units[hi - 1].cp)) --hi;
    if (lo == hi) return;
    std::string token;
    for (std::size_t i = lo; i < hi; ++i) {
      const char32_t lower = detail::to_lower(units[i].cp);
      if (lower == units[i].cp) {
        token.append(sentence.substr(units[i].pos, units[i].len));
      } else {
        detail::append_utf8(token, lower);
      }
    }
    tokens.push_back(std::move(token));
  });
  return tokens;
}

/// Unigrams followed by adjacent bigrams, multiplicities preserved.
inline FeatureBag featurize_tokens(std::span<const std::string> tokens) {
  FeatureBag feats(tokens.begin(), tokens.end());
  if (tokens.size() > 1) feats.reserve(tokens.size() * 2 - 1);
  for (std::size_t i = 0; i + 1 < tokens.size(); ++i) {
    feats.push_back(tokens[i] + ' ' + tokens[i + 1]);
  }
  return feats;
}

inline FeatureBag featurize(std::string_view sentence) {
  const auto tokens = tokenize(sentence);
  return featurize_tokens(tokens);
}

/// Drops bigram features in place; tokens never contain spaces, bigrams always do.
inline void strip_bigrams(ExamplePair& pair) {
  auto is_bigram = [](const std::string& f) { return f.find(' ') != std::string::npos; };
  std::erase_if(pair.query, is_bigram);
  std::erase_if(pair.target, is_bigram);
}

/// One pair per consecutive sentence pair in which both sides have at least
/// min_words raw words. Pairs never straddle sections.
inline std::vector<ExamplePair> extract_nsp_pairs(const SectionRecord& section,
                                                  std::size_t min_words = 4) {
  if (min_words < 1) throw Error("extract_nsp_pairs: min_words must be >= 1");
  std::vector<ExamplePair> pairs;
  const auto& s = section.sentences;
  if (s.size() < 2) return pairs;
  std::vector<bool> ok(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) ok[i] = count_words(s[i]) >= min_words;
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (!ok[i] || !ok[i + 1]) continue;
    ExamplePair p{section.lang, featurize(s[i]), featurize(s[i + 1]), PairKind::nsp};
    if (p.query.empty() || p.target.empty()) continue;
    pairs.push_back(std::move(p));
  }
  return pairs;
}

/// Index range [first, last) of the inverse-cloze context window around
/// `query`, clamped to the section; the query itself is excluded by the caller.
inline std::pair<std::size_t, std::size_t> ic_window(std::size_t n_sentences, std::size_t query,
                                                     std::size_t radius = 2) {
  const std::size_t first = query >= radius ? query - radius : 0;
  const std::size_t last = std::min(n_sentences, query + radius + 1);
  return {first, last};
}

/// Inverse-cloze pair for a query sentence at `query_index`, or nothing if the
/// context is empty.
inline std::vector<ExamplePair> make_ic_pair(const SectionRecord& section,
                                             std::size_t query_index) {
  const auto& s = section.sentences;
  const auto [first, last] = ic_window(s.size(), query_index);
  std::string context;
  for (std::size_t j = first; j < last; ++j) {
    if (j == query_index) continue;
    if (!context.empty()) context.push_back(' ');
    context += s[j];
  }
  ExamplePair p{section.lang, featurize(s[query_index]), featurize(context), PairKind::ic};
  if (p.query.empty() || p.target.empty()) return {};
  return {std::move(p)};
}

/// Samples one qualifying sentence uniformly and pairs it with up to two
/// preceding and two following sentences.
inline std::vector<ExamplePair> extract_ic_pairs(const SectionRecord& section,
                                                 std::uint64_t rng_seed,
                                                 std::size_t min_words = 4) {
  const auto& s = section.sentences;
  if (s.size() < 2) return {};
  std::vector<std::size_t> candidates;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (count_words(s[i]) >= min_words) candidates.push_back(i);
  }
  if (candidates.empty()) return {};
  Rng rng(rng_seed);
  return make_ic_pair(section, candidates[rng.below(candidates.size())]);
}

inline std::vector<ExamplePair> extract_pairs(const SectionRecord& section, PairKind kind,
                                              std::uint64_t seed, std::size_t min_words = 4) {
  if (kind == PairKind::nsp) return extract_nsp_pairs(section, min_words);
  return extract_ic_pairs(section, derive_seed(seed, section.doc_id, section.sec_id), min_words);
}

// ---------------------------------------------------------------------------
// JSON Lines I/O

inline nlohmann::json to_json(const SectionRecord& r) {
  return {{"lang", r.lang}, {"doc_id", r.doc_id}, {"sec_id", r.sec_id}, {"sentences", r.sentences}};
}

inline SectionRecord section_from_json(const nlohmann::json& j) {
  SectionRecord r;
  r.lang = j.at("lang").get<std::string>();
  r.doc_id = j.at("doc_id").get<std::string>();
  r.sec_id = j.at("sec_id").get<std::string>();
  r.sentences = j.at("sentences").get<std::vector<std::string>>();
  if (r.lang.empty()) throw Error("empty lang");
  for (const auto& s : r.sentences) {
    if (s.empty()) throw Error("empty sentence string");
  }
  return r;
}

/// Streams records from a JSONL stream; fn is called once per record in file order.
inline void read_corpus(std::istream& in, const std::function<void(SectionRecord&&)>& fn,
                        const std::string& source = "<stream>") {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    SectionRecord rec;
    try {
      rec = section_from_json(nlohmann::json::parse(line));
    } catch (const std::exception& e) {
      throw Error(source + ":" + std::to_string(line_no) + ": malformed record: " + e.what());
    }
    fn(std::move(rec));
  }
}

inline std::vector<SectionRecord> read_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open corpus '" + path + "'");
  std::vector<SectionRecord> out;
  read_corpus(in, [&out](SectionRecord&& r) { out.push_back(std::move(r)); }, path);
  return out;
}

inline void write_corpus(std::ostream& out, std::span<const SectionRecord> records) {
  for (const auto& r : records) out << to_json(r).dump() << '\n';
}

inline nlohmann::json to_json(const ExamplePair& p) {
  return {{"lang", p.lang}, {"kind", to_string(p.kind)}, {"query", p.query}, {"target", p.target}};
}

inline ExamplePair pair_from_json(const nlohmann::json& j) {
  ExamplePair p;
  p.lang = j.at("lang").get<std::string>();
  p.kind = parse_pair_kind(j.at("kind").get<std::string>());
  p.query = j.at("query").get<FeatureBag>();
  p.target = j.at("target").get<FeatureBag>();
  return p;
}

inline void write_pairs(std::ostream& out, std::span<const ExamplePair> pairs) {
  for (const auto& p : pairs) out << to_json(p).dump() << '\n';
}

inline std::vector<ExamplePair> read_pairs(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open pairs file '" + path + "'");
  std::vector<ExamplePair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(pair_from_json(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw Error(path + ":" + std::to_string(line_no) + ": malformed pair: " + e.what());
    }
  }
  return out;
}

}  // namespace mdr
