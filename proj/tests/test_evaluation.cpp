#include <gtest/gtest.h>

#include <set>

#include "mdr/evaluation.hpp"
#include "oracles/oracles.hpp"

using namespace mdr;

using oracle::random_instance;

TEST(RankOfTruth, TiesBreakByPoolIndex) {
  const std::vector<double> s = {0.5, 0.9, 0.5, 0.1};
  EXPECT_EQ(rank_of_truth(s, 1), 0u);
  EXPECT_EQ(rank_of_truth(s, 0), 1u);
  EXPECT_EQ(rank_of_truth(s, 2), 2u);
  EXPECT_EQ(rank_of_truth(s, 3), 3u);
  const std::vector<double> flat(5, 0.0);
  for (std::size_t t = 0; t < 5; ++t) EXPECT_EQ(rank_of_truth(flat, t), t);
}

TEST(BuildPool, ShapeAndDeterminism) {
  EvalConfig cfg;
  cfg.n_distractors = 20;
  const auto a = build_pool(100, cfg, 5), b = build_pool(100, cfg, 5);
  EXPECT_EQ(a.source_index, b.source_index);
  EXPECT_EQ(a.truth_index, b.truth_index);
  EXPECT_EQ(a.size(), 21u);
  EXPECT_EQ(a.source_index[a.truth_index], CandidatePool::kTruth);
  std::set<std::size_t> distinct;
  for (std::size_t p = 0; p < a.size(); ++p) {
    if (p == a.truth_index) continue;
    EXPECT_LT(a.source_index[p], 100u);
    distinct.insert(a.source_index[p]);
  }
  EXPECT_EQ(distinct.size(), 20u);
  EXPECT_THROW(build_pool(10, cfg, 5), Error);
}

TEST(BuildPool, TruthPositionIsUniform) {
  EvalConfig cfg;
  cfg.n_distractors = 3;
  std::vector<int> counts(4, 0);
  for (std::uint64_t s = 0; s < 4000; ++s) ++counts[build_pool(10, cfg, s).truth_index];
  for (int c : counts) EXPECT_NEAR(c, 1000, 5 * std::sqrt(4000 * 0.25 * 0.75));
}

TEST(RecallAtK, PerfectModelAndSingleDistractor) {
  // one-hot rows: the truth shares the query's token, distractors never do
  ModelConfig mc;
  mc.dim = 4;
  auto m = EmbeddingModel::zeros(mc, 4);
  for (TokenId i = 0; i < 4; ++i) m.row(i)[i] = 1.0f;
  const std::vector<EncodedPair> eval = {{{0}, {0}}, {{1}, {1}}};
  const std::vector<std::vector<TokenId>> source = {{2}, {3}, {2, 3}};
  EvalConfig cfg;
  cfg.n_distractors = 3;
  cfg.ks = {1, 2};
  const auto rep = recall_at_k(m, eval, source, cfg, "xx", "m");
  EXPECT_EQ(rep.at(1), 1.0);
  EXPECT_EQ(rep.pool_size, 4u);
  EXPECT_EQ(rep.n_queries, 2u);
  EXPECT_THROW(rep.at(7), Error);
}

TEST(RecallAtK, MonotoneInK) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const auto in = random_instance(s, false);
    const auto rep = recall_at_k(in.model, in.eval, in.source, in.cfg);
    EXPECT_LE(rep.at(1), rep.at(5));
    EXPECT_LE(rep.at(5), rep.at(10));
  }
}

TEST(RecallAtK, MatchesNaiveOracleExactly) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto in = random_instance(s, s % 2 == 1);
    const auto rep = recall_at_k(in.model, in.eval, in.source, in.cfg);
    EXPECT_EQ(rep.recall, oracle::naive_recall(in.model, in.eval, in.source, in.cfg)) << "instance " << s;
  }
}

TEST(RecallAtK, AllTiedPoolsRankByPosition) {
  ModelConfig mc;
  mc.dim = 2;
  const auto zero = EmbeddingModel::zeros(mc, 3);
  std::vector<EncodedPair> eval(200, EncodedPair{{0}, {1}});
  const std::vector<std::vector<TokenId>> source(50, std::vector<TokenId>{2});
  EvalConfig cfg;
  cfg.n_distractors = 9;
  cfg.ks = {1, 5, 10};
  const auto rep = recall_at_k(zero, eval, source, cfg);
  // every score ties, so the truth's rank is its uniform pool position
  EXPECT_NEAR(rep.at(1), 0.1, 0.07);
  EXPECT_NEAR(rep.at(5), 0.5, 0.12);
  EXPECT_EQ(rep.at(10), 1.0);
}

TEST(RecallAtK, FeatureEntryPointSkipsOov) {
  VocabCounter c;
  for (const char* t : {"a", "b", "c"}) c.add(t, "xx");
  const auto v = c.finish();
  ModelConfig mc;
  mc.dim = 3;
  auto m = EmbeddingModel::zeros(mc, v.size(), v.digest());
  for (TokenId i = 0; i < 3; ++i) m.row(i)[i] = 1.0f;
  const std::vector<ExamplePair> eval = {{"xx", {"a", "zzz"}, {"a"}, PairKind::nsp}};
  const std::vector<FeatureBag> source = {{"b"}, {"c"}};
  EvalConfig cfg;
  cfg.n_distractors = 2;
  cfg.ks = {1};
  EXPECT_EQ(recall_at_k(m, v, eval, source, cfg).at(1), 1.0);
}

TEST(RecallAtK, Errors) {
  ModelConfig mc;
  mc.dim = 2;
  const auto m = EmbeddingModel::zeros(mc, 2);
  const std::vector<std::vector<TokenId>> source(3, std::vector<TokenId>{0});
  const std::vector<EncodedPair> eval = {{{0}, {1}}};
  EvalConfig cfg;
  cfg.n_distractors = 4;
  try {
    recall_at_k(m, eval, source, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("only 3"), std::string::npos);
  }
  cfg.n_distractors = 2;
  EXPECT_THROW(recall_at_k(m, std::span<const EncodedPair>{}, source, cfg), Error);
  cfg.ks = {10, 1};
  EXPECT_THROW(recall_at_k(m, eval, source, cfg), Error);
}

TEST(EvalReport, JsonShape) {
  EvalReport r{"sw", "combined", 101, 4, {{1, 0.25}, {10, 0.5}}};
  const auto j = r.to_json();
  EXPECT_EQ(j.at("lang"), "sw");
  EXPECT_EQ(j.at("recall").at("10"), 0.5);
}
