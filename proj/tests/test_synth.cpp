#include <gtest/gtest.h>

#include <set>

#include "mdr/synth.hpp"

using namespace mdr;

namespace {

SynthSpec small_spec() {
  SynthSpec s;
  s.languages = {"a", "b", "c"};
  s.concepts = 100;
  s.topics = 10;
  s.concepts_per_topic = 10;
  s.overlap[lang_pair("a", "b")] = 0.3;
  s.overlap[lang_pair("b", "c")] = 0.2;
  s.docs_per_language = {{"a", 20}, {"b", 30}, {"c", 10}};
  s.noise_vocab = 15;
  s.seed = 4;
  return s;
}

}  // namespace

TEST(Synth, ExactPairwiseOverlapCounts) {
  const auto spec = small_spec();
  const auto lex = gen_lexicons(spec);
  // each lexicon has 100 concepts + 15 noise; shared tokens are concept tokens
  EXPECT_EQ(lex.at("a").size(), 115u);
  EXPECT_EQ(intersection_size(lex.at("a"), lex.at("b")), 30u);
  EXPECT_EQ(intersection_size(lex.at("b"), lex.at("c")), 20u);
  EXPECT_EQ(intersection_size(lex.at("a"), lex.at("c")), 0u);
  EXPECT_DOUBLE_EQ(jaccard(lex.at("a"), lex.at("c")), 0.0);
}

TEST(Synth, OverlappingCliquesAreRealized) {
  SynthSpec s;
  s.languages = {"p", "q", "r", "s"};
  s.concepts = 50;
  for (const auto& [x, y] : std::vector<std::pair<std::string, std::string>>{{"p", "q"}, {"p", "r"}, {"q", "r"}, {"r", "s"}}) {
    s.overlap[lang_pair(x, y)] = 0.4;
  }
  s.overlap[lang_pair("p", "s")] = 0.1;
  s.docs_per_language = {{"p", 1}, {"q", 1}, {"r", 1}, {"s", 1}};
  const auto lex = gen_lexicons(s);
  for (const auto& a : s.languages) {
    for (const auto& b : s.languages) {
      if (a < b) {
        EXPECT_EQ(intersection_size(lex.at(a), lex.at(b)), s.shared_count(a, b)) << a << "," << b;
      }
    }
  }
  std::size_t total = 0;
  for (const auto& blk : allocate_shared_blocks(s)) total += blk.count;
  EXPECT_LE(total, s.concepts);
}

TEST(Synth, UnrealizablePatternIsRejected) {
  SynthSpec s;
  s.languages = {"a", "b", "c"};
  s.concepts = 10;
  s.concepts_per_topic = 5;
  s.overlap[lang_pair("a", "b")] = 0.9;
  s.overlap[lang_pair("a", "c")] = 0.9;
  s.docs_per_language = {{"a", 1}, {"b", 1}, {"c", 1}};
  try {
    validate(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("unrealizable"), std::string::npos);
  }
}

TEST(Synth, ValidationErrors) {
  auto s = small_spec();
  s.docs_per_language.erase("c");
  EXPECT_THROW(validate(s), Error);
  s = small_spec();
  s.overlap[lang_pair("a", "zz")] = 0.1;
  EXPECT_THROW(validate(s), Error);
  s = small_spec();
  s.overlap[lang_pair("a", "b")] = 1.5;
  EXPECT_THROW(validate(s), Error);
  s = small_spec();
  s.languages.push_back("a");
  EXPECT_THROW(validate(s), Error);
  s = small_spec();
  s.concepts_per_topic = 101;
  EXPECT_THROW(validate(s), Error);
}

TEST(Synth, CorpusShapeAndDeterminism) {
  const auto spec = small_spec();
  const auto docs = gen_corpus(spec);
  EXPECT_EQ(docs.size(), 60u);
  const auto lex = gen_lexicons(spec);
  for (const auto& d : docs) {
    EXPECT_EQ(d.sentences.size(), spec.sentences_per_doc);
    for (const auto& sent : d.sentences) {
      const auto toks = tokenize(sent);
      EXPECT_EQ(toks.size(), spec.sentence_len);
      for (const auto& t : toks) EXPECT_TRUE(lex.at(d.lang).find(t).has_value()) << t;
    }
  }
  const auto again = gen_corpus(spec);
  for (std::size_t i = 0; i < docs.size(); ++i) EXPECT_EQ(docs[i].sentences, again[i].sentences);
  auto other = spec;
  other.seed = 5;
  EXPECT_NE(gen_corpus(other)[0].sentences, docs[0].sentences);
}

TEST(Synth, SentencesFollowTheDocumentTopic) {
  auto spec = small_spec();
  spec.concept_share = 0.6;
  const auto lex = build_lexicons(spec);
  for (const auto& d : gen_corpus(spec)) {
    // all concept tokens in a document come from one topic's concepts
    std::set<std::size_t> concepts;
    const auto& x = lex.at(d.lang);
    for (const auto& sent : d.sentences) {
      std::size_t n_concept = 0;
      for (const auto& t : tokenize(sent)) {
        for (std::size_t c = 0; c < spec.concepts; ++c) {
          if (x.concept_tokens[c] == t) {
            concepts.insert(c);
            ++n_concept;
          }
        }
      }
      EXPECT_EQ(n_concept, 6u);
    }
    bool fits_one_topic = false;
    for (std::size_t t = 0; t < spec.topics && !fits_one_topic; ++t) {
      const auto ids = topic_concepts(spec, t);
      const std::set<std::size_t> topic(ids.begin(), ids.end());
      fits_one_topic = std::includes(topic.begin(), topic.end(), concepts.begin(), concepts.end());
    }
    EXPECT_TRUE(fits_one_topic);
  }
}

TEST(Synth, PresetsAreValid) {
  const auto f = fig7_preset(1);
  EXPECT_NO_THROW(validate(f));
  EXPECT_EQ(f.overlap_of("aux", "tgt"), 0.0);
  EXPECT_GT(f.overlap_of("tgt", "piv"), 0.0);
  EXPECT_GT(f.overlap_of("aux", "piv"), 0.0);
  const auto lex = gen_lexicons(f);
  EXPECT_EQ(intersection_size(lex.at("aux"), lex.at("tgt")), 0u);

  const auto m = matrix_preset(1);
  EXPECT_NO_THROW(validate(m));
  EXPECT_EQ(m.languages.size(), 6u);
  std::size_t total = 0;
  for (const auto& [l, n] : m.docs_per_language) total += n;
  const double share = static_cast<double>(m.docs_per_language.at("lrt")) / static_cast<double>(total);
  EXPECT_GT(share, 0.015);
  EXPECT_LT(share, 0.025);
}

TEST(Synth, JsonRoundTrip) {
  const auto s = small_spec();
  const auto back = nlohmann::json(s).get<SynthSpec>();
  EXPECT_EQ(back.languages, s.languages);
  EXPECT_EQ(back.overlap, s.overlap);
  EXPECT_EQ(back.docs_per_language, s.docs_per_language);
  EXPECT_EQ(back.seed, s.seed);
  EXPECT_EQ(back.noise_vocab, s.noise_vocab);
}
