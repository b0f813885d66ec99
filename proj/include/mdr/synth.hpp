#pragma once

// Synthetic multilingual corpora with a controlled vocabulary-overlap graph.
//
// Every language renders the same C concepts. For each unordered language
// pair the requested fraction of concepts is rendered with one shared surface
// token; all other concept tokens and all noise tokens are language-unique.
// Documents draw one topic (a set of m concepts) and every sentence mixes
// topic concepts with language noise, so consecutive sentences are related.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mdr/common.hpp"
#include "mdr/corpus.hpp"
#include "mdr/rng.hpp"
#include "mdr/vocabulary.hpp"

namespace mdr {

using LangPair = std::pair<std::string, std::string>;

inline LangPair lang_pair(std::string a, std::string b) {
  if (b < a) std::swap(a, b);
  return {std::move(a), std::move(b)};
}

struct SynthSpec {
  std::vector<std::string> languages;
  std::size_t concepts = 1000;
  std::size_t topics = 50;
  std::size_t concepts_per_topic = 20;
  std::map<LangPair, double> overlap;  // keys normalized by lang_pair()
  std::size_t sentences_per_doc = 6;
  std::map<std::string, std::size_t> docs_per_language;
  std::size_t sentence_len = 10;
  std::size_t noise_vocab = 200;
  double concept_share = 0.8;  // share of each sentence drawn from topic concepts
  std::uint64_t seed = 0;

  double overlap_of(const std::string& a, const std::string& b) const {
    auto it = overlap.find(lang_pair(a, b));
    return it == overlap.end() ? 0.0 : it->second;
  }

  /// Number of concepts shared by a pair: round(fraction * concepts).
  std::size_t shared_count(const std::string& a, const std::string& b) const {
    return static_cast<std::size_t>(std::llround(overlap_of(a, b) * static_cast<double>(concepts)));
  }
};

inline void to_json(nlohmann::json& j, const SynthSpec& s) {
  nlohmann::json ov = nlohmann::json::array();
  for (const auto& [pair, frac] : s.overlap) ov.push_back({{"a", pair.first}, {"b", pair.second}, {"share", frac}});
  j = {{"languages", s.languages},
       {"concepts", s.concepts},
       {"topics", s.topics},
       {"concepts_per_topic", s.concepts_per_topic},
       {"overlap", ov},
       {"sentences_per_doc", s.sentences_per_doc},
       {"docs_per_language", s.docs_per_language},
       {"sentence_len", s.sentence_len},
       {"noise_vocab", s.noise_vocab},
       {"concept_share", s.concept_share},
       {"seed", s.seed}};
}

inline void from_json(const nlohmann::json& j, SynthSpec& s) {
  s.languages = j.at("languages").get<std::vector<std::string>>();
  s.concepts = j.value("concepts", std::size_t{1000});
  s.topics = j.value("topics", std::size_t{50});
  s.concepts_per_topic = j.value("concepts_per_topic", std::size_t{20});
  s.overlap.clear();
  for (const auto& e : j.value("overlap", nlohmann::json::array())) {
    s.overlap[lang_pair(e.at("a").get<std::string>(), e.at("b").get<std::string>())] = e.at("share").get<double>();
  }
  s.sentences_per_doc = j.value("sentences_per_doc", std::size_t{6});
  s.docs_per_language = j.at("docs_per_language").get<std::map<std::string, std::size_t>>();
  s.sentence_len = j.value("sentence_len", std::size_t{10});
  s.noise_vocab = j.value("noise_vocab", std::size_t{200});
  s.concept_share = j.value("concept_share", 0.8);
  s.seed = j.value("seed", std::uint64_t{0});
}

/// A group of languages that render a run of concepts with one shared token.
struct SharedBlock {
  std::vector<std::string> langs;  // sorted, size >= 2
  std::size_t count = 0;
};

/// Decomposes the pairwise shared-concept counts into blocks: repeatedly take
/// the pair with the most remaining demand, grow it greedily into a clique of
/// languages with positive pairwise demand, and allocate the clique's minimum.
/// Every pair ends up sharing exactly its requested count.
inline std::vector<SharedBlock> allocate_shared_blocks(const SynthSpec& spec) {
  const auto& langs = spec.languages;
  std::map<LangPair, std::size_t> remaining;
  for (std::size_t i = 0; i < langs.size(); ++i) {
    for (std::size_t j = i + 1; j < langs.size(); ++j) {
      const auto n = spec.shared_count(langs[i], langs[j]);
      if (n > 0) remaining[lang_pair(langs[i], langs[j])] = n;
    }
  }
  auto demand = [&remaining](const std::string& a, const std::string& b) -> std::size_t {
    auto it = remaining.find(lang_pair(a, b));
    return it == remaining.end() ? 0 : it->second;
  };

  std::vector<SharedBlock> blocks;
  std::size_t used = 0;
  while (!remaining.empty()) {
    auto top = std::max_element(remaining.begin(), remaining.end(),
                                [](const auto& x, const auto& y) { return x.second < y.second; });
    std::vector<std::string> clique{top->first.first, top->first.second};
    for (;;) {
      std::string best;
      std::size_t best_min = 0;
      for (const auto& cand : langs) {
        if (std::find(clique.begin(), clique.end(), cand) != clique.end()) continue;
        std::size_t m = SIZE_MAX;
        for (const auto& member : clique) m = std::min(m, demand(cand, member));
        if (m > best_min) {
          best_min = m;
          best = cand;
        }
      }
      if (best_min == 0) break;
      clique.push_back(best);
    }
    std::size_t amount = SIZE_MAX;
    for (std::size_t i = 0; i < clique.size(); ++i) {
      for (std::size_t j = i + 1; j < clique.size(); ++j) amount = std::min(amount, demand(clique[i], clique[j]));
    }
    for (std::size_t i = 0; i < clique.size(); ++i) {
      for (std::size_t j = i + 1; j < clique.size(); ++j) {
        auto it = remaining.find(lang_pair(clique[i], clique[j]));
        it->second -= amount;
        if (it->second == 0) remaining.erase(it);
      }
    }
    std::sort(clique.begin(), clique.end());
    used += amount;
    if (used > spec.concepts) {
      std::string names;
      for (std::size_t i = 0; i < clique.size(); ++i) {
        for (std::size_t j = i + 1; j < clique.size(); ++j) names += " (" + clique[i] + "," + clique[j] + ")";
      }
      throw Error("synth: unrealizable overlap pattern; block allocation needs more than " +
                  std::to_string(spec.concepts) + " concepts at pairs" + names);
    }
    blocks.push_back({std::move(clique), amount});
  }
  return blocks;
}

inline void validate(const SynthSpec& spec) {
  if (spec.languages.empty()) throw Error("synth: no languages");
  std::set<std::string> seen;
  for (const auto& l : spec.languages) {
    if (l.empty()) throw Error("synth: empty language code");
    if (!seen.insert(l).second) throw Error("synth: duplicate language '" + l + "'");
    auto it = spec.docs_per_language.find(l);
    if (it == spec.docs_per_language.end() || it->second < 1) throw Error("synth: docs_per_language['" + l + "'] must be >= 1");
  }
  for (const auto& [pair, frac] : spec.overlap) {
    if (!seen.count(pair.first) || !seen.count(pair.second)) {
      throw Error("synth: overlap names unknown language pair (" + pair.first + "," + pair.second + ")");
    }
    if (pair.first == pair.second) throw Error("synth: overlap of a language with itself");
    if (!(frac >= 0.0 && frac <= 1.0)) throw Error("synth: overlap fraction outside [0, 1]");
  }
  if (spec.concepts < 1 || spec.topics < 1 || spec.concepts_per_topic < 1 || spec.sentences_per_doc < 1 ||
      spec.sentence_len < 1 || spec.noise_vocab < 1) {
    throw Error("synth: all counts must be >= 1");
  }
  if (spec.concepts_per_topic > spec.concepts) throw Error("synth: concepts_per_topic exceeds concepts");
  if (!(spec.concept_share >= 0.0 && spec.concept_share <= 1.0)) throw Error("synth: concept_share outside [0, 1]");
  allocate_shared_blocks(spec);
}

/// Surface forms per language.
struct Lexicon {
  std::vector<std::string> concept_tokens;  // index = concept id
  std::vector<std::string> noise_tokens;
};

/// Concept c of a shared block renders as "c<c>_<lang>_<lang>..."; unshared
/// concepts as "c<c>_<lang>"; noise tokens as "n<j>_<lang>".
inline std::map<std::string, Lexicon> build_lexicons(const SynthSpec& spec) {
  validate(spec);
  const auto blocks = allocate_shared_blocks(spec);
  // spread shared blocks over concept ids so that every topic mixes shared
  // and unshared concepts
  std::vector<std::size_t> perm(spec.concepts);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng(derive_seed(spec.seed, "concept-permutation")).shuffle(perm);

  std::map<std::string, Lexicon> lex;
  for (const auto& l : spec.languages) {
    auto& x = lex[l];
    x.concept_tokens.resize(spec.concepts);
    for (std::size_t c = 0; c < spec.concepts; ++c) x.concept_tokens[c] = "c" + std::to_string(c) + "_" + l;
    x.noise_tokens.resize(spec.noise_vocab);
    for (std::size_t j = 0; j < spec.noise_vocab; ++j) x.noise_tokens[j] = "n" + std::to_string(j) + "_" + l;
  }
  std::size_t next = 0;
  for (const auto& block : blocks) {
    std::string suffix;
    for (const auto& l : block.langs) suffix += "_" + l;
    for (std::size_t k = 0; k < block.count; ++k, ++next) {
      const std::size_t c = perm[next];
      const std::string token = "c" + std::to_string(c) + suffix;
      for (const auto& l : block.langs) lex[l].concept_tokens[c] = token;
    }
  }
  return lex;
}

/// Per-language vocabulary of all concept and noise tokens (freq 1 each).
inline std::map<std::string, Vocabulary> gen_lexicons(const SynthSpec& spec) {
  std::map<std::string, Vocabulary> out;
  for (const auto& [lang, lex] : build_lexicons(spec)) {
    VocabCounter counter;
    for (const auto& t : lex.concept_tokens) counter.add(t, lang);
    for (const auto& t : lex.noise_tokens) counter.add(t, lang);
    out.emplace(lang, counter.finish());
  }
  return out;
}

/// Concept ids that make up topic t: a seeded uniform subset, sorted.
inline std::vector<std::size_t> topic_concepts(const SynthSpec& spec, std::size_t topic) {
  auto ids = Rng(derive_seed(spec.seed, "topic", topic)).sample_without_replacement(spec.concepts, spec.concepts_per_topic);
  std::sort(ids.begin(), ids.end());
  return ids;
}

/// One single-section document per (language, doc index). Each sentence has
/// exactly round(concept_share * sentence_len) topic-concept tokens, the rest
/// language noise, in shuffled positions.
inline std::vector<SectionRecord> gen_corpus(const SynthSpec& spec) {
  const auto lex = build_lexicons(spec);
  const std::size_t n_concept = static_cast<std::size_t>(std::llround(spec.concept_share * static_cast<double>(spec.sentence_len)));
  std::vector<std::vector<std::size_t>> topics(spec.topics);
  for (std::size_t t = 0; t < spec.topics; ++t) topics[t] = topic_concepts(spec, t);
  std::vector<SectionRecord> out;
  for (const auto& lang : spec.languages) {
    const Lexicon& x = lex.at(lang);
    const std::size_t docs = spec.docs_per_language.at(lang);
    for (std::size_t d = 0; d < docs; ++d) {
      Rng rng(derive_seed(spec.seed, "doc", lang, d));
      const auto& concepts = topics[rng.below(spec.topics)];
      SectionRecord rec{lang, lang + "-" + std::to_string(d), "0", {}};
      rec.sentences.reserve(spec.sentences_per_doc);
      std::vector<const std::string*> words(spec.sentence_len);
      for (std::size_t s = 0; s < spec.sentences_per_doc; ++s) {
        for (std::size_t w = 0; w < spec.sentence_len; ++w) {
          words[w] = w < n_concept ? &x.concept_tokens[concepts[rng.below(concepts.size())]]
                                   : &x.noise_tokens[rng.below(x.noise_tokens.size())];
        }
        rng.shuffle(words);
        std::string sentence;
        for (const auto* w : words) {
          if (!sentence.empty()) sentence.push_back(' ');
          sentence += *w;
        }
        rec.sentences.push_back(std::move(sentence));
      }
      out.push_back(std::move(rec));
    }
  }
  return out;
}

/// Target / pivot / auxiliary triangle with no direct target-auxiliary overlap;
/// the target is the low-resource language.
inline SynthSpec fig7_preset(std::uint64_t seed = 0) {
  SynthSpec s;
  s.languages = {"tgt", "piv", "aux"};
  s.concepts = 1000;
  s.topics = 200;
  s.concepts_per_topic = 20;
  s.overlap[lang_pair("tgt", "piv")] = 0.5;
  s.overlap[lang_pair("aux", "piv")] = 0.5;
  s.overlap[lang_pair("aux", "tgt")] = 0.0;
  s.sentences_per_doc = 8;
  s.docs_per_language = {{"tgt", 500}, {"piv", 500}, {"aux", 5000}};
  s.sentence_len = 10;
  s.noise_vocab = 20;
  s.seed = seed;
  return s;
}

/// Six languages, every pair sharing 60% of concepts, with one low-resource
/// target ("lrt") holding about 2% of the documents.
inline SynthSpec matrix_preset(std::uint64_t seed = 0) {
  SynthSpec s;
  s.languages = {"lrt", "la", "lb", "lc", "ld", "le"};
  s.concepts = 4000;
  s.topics = 1000;
  s.concepts_per_topic = 40;
  for (std::size_t i = 0; i < s.languages.size(); ++i) {
    for (std::size_t j = i + 1; j < s.languages.size(); ++j) s.overlap[lang_pair(s.languages[i], s.languages[j])] = 0.6;
  }
  s.sentences_per_doc = 8;
  s.docs_per_language = {{"lrt", 1000}, {"la", 10000}, {"lb", 10000}, {"lc", 10000}, {"ld", 10000}, {"le", 10000}};
  s.sentence_len = 10;
  s.noise_vocab = 20;
  s.seed = seed;
  return s;
}

}  // namespace mdr
