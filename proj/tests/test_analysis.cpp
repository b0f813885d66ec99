#include <gtest/gtest.h>

#include <cmath>

#include "mdr/analysis.hpp"
#include "mdr/rng.hpp"
#include "oracles/oracles.hpp"

using namespace mdr;

TEST(RelativeImprovement, Examples) {
  EXPECT_NEAR(relative_improvement(17.6, 17.0), 0.035294117647058823, 1e-12);
  EXPECT_NEAR(relative_improvement(0.3, 0.2), 0.5, 1e-12);
  EXPECT_EQ(relative_improvement(3.0, 2.0), 0.5);
  EXPECT_DOUBLE_EQ(relative_improvement(0.5, 0.5), 0.0);
  EXPECT_LT(relative_improvement(0.1, 0.2), 0.0);
  EXPECT_THROW(relative_improvement(0.1, 0.0), Error);
}

TEST(LinearFit, ExactLine) {
  const std::vector<double> xs = {0, 1, 2, 3}, ys = {1, 3, 5, 7};
  const auto f = linear_fit(xs, ys);
  EXPECT_NEAR(f.coefficients[0], 2.0, 1e-12);
  EXPECT_NEAR(f.intercept, 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(f.r_squared, 1.0);
  EXPECT_NEAR(f.residual_std, 0.0, 1e-12);
  EXPECT_EQ(f.n, 4u);
}

TEST(LinearFit, KnownResidual) {
  // y = x plus alternating +-1: slope 1, SS_res 4, SS_tot 9
  const std::vector<double> xs = {0, 1, 2, 3}, ys = {1, 0, 3, 2};
  const auto f = linear_fit(xs, ys);
  EXPECT_NEAR(f.coefficients[0], 0.6, 1e-12);
  EXPECT_NEAR(f.intercept, 0.6, 1e-12);
  EXPECT_NEAR(f.r_squared, 0.36, 1e-12);
}

TEST(LinearFit, Degenerate) {
  EXPECT_THROW(linear_fit(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), FitError);
  EXPECT_THROW(linear_fit(std::vector<double>{1}, std::vector<double>{1}), FitError);
  EXPECT_THROW(linear_fit(std::vector<double>{1, 2}, std::vector<double>{1}), FitError);
}

TEST(MultiFit, CollinearResponseGivesRSquaredOne) {
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  Rng rng(1);
  for (int i = 0; i < 12; ++i) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    xs.push_back({a, b});
    ys.push_back(0.5 + 2.0 * a - 3.0 * b);
  }
  const auto f = multi_fit(xs, ys);
  EXPECT_NEAR(f.r_squared, 1.0, 1e-12);
  EXPECT_NEAR(f.intercept, 0.5, 1e-10);
  EXPECT_NEAR(f.coefficients[1], -3.0, 1e-10);
}

TEST(MultiFit, MatchesNormalEquations) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    Rng rng(s);
    const std::size_t p = 1 + rng.below(4), n = p + 2 + rng.below(20);
    std::vector<std::vector<double>> xs(n, std::vector<double>(p));
    std::vector<double> ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& x : xs[i]) x = rng.uniform(-2, 2);
      ys[i] = rng.uniform(-1, 1);
    }
    const auto f = multi_fit(xs, ys);
    const auto beta = oracle::normal_equations(xs, ys);
    EXPECT_NEAR(f.intercept, beta[0], 1e-8) << "instance " << s;
    for (std::size_t c = 0; c < p; ++c) EXPECT_NEAR(f.coefficients[c], beta[c + 1], 1e-8) << "instance " << s;
  }
}

TEST(MultiFit, Degenerate) {
  // duplicated feature column
  std::vector<std::vector<double>> xs = {{1, 1}, {2, 2}, {3, 3}, {4, 4}};
  EXPECT_THROW(multi_fit(xs, std::vector<double>{1, 2, 3, 5}), FitError);
  EXPECT_THROW(multi_fit({{1, 2}, {3, 4}}, std::vector<double>{1, 2}), FitError);
  EXPECT_THROW(multi_fit({{1}, {2, 3}, {4}}, std::vector<double>{1, 2, 3}), FitError);
}

TEST(Pearson, SquaredEqualsSimpleFitRSquared) {
  for (std::uint64_t s = 0; s < 30; ++s) {
    Rng rng(100 + s);
    const std::size_t n = 3 + rng.below(30);
    std::vector<double> xs(n), ys(n);
    for (std::size_t i = 0; i < n; ++i) {
      xs[i] = rng.uniform(-1, 1);
      ys[i] = 0.7 * xs[i] + rng.uniform(-1, 1);
    }
    const double r = pearson_r(xs, ys);
    EXPECT_NEAR(r * r, linear_fit(xs, ys).r_squared, 1e-10);
  }
  EXPECT_NEAR(pearson_r(std::vector<double>{1, 2, 3}, std::vector<double>{3, 2, 1}), -1.0, 1e-12);
  EXPECT_THROW(pearson_r(std::vector<double>{1, 1}, std::vector<double>{1, 2}), Error);
}

namespace {

std::vector<TransferPoint> synthetic_points() {
  std::vector<TransferPoint> pts;
  Rng rng(3);
  for (int i = 0; i < 8; ++i) {
    TransferPoint p;
    p.lang = "l" + std::to_string(i);
    p.train_share = rng.uniform(0.01, 0.3);
    p.difficulty = rng.uniform(0.1, 0.9);
    p.overlap_with_reference = rng.uniform(0.0, 0.6);
    p.per_language_recall = p.difficulty;
    p.combined_recall = p.difficulty * (1.0 + 0.5 * p.overlap_with_reference - 0.3 * p.train_share);
    pts.push_back(p);
  }
  return pts;
}

}  // namespace

TEST(TransferTable, Structure) {
  const auto pts = synthetic_points();
  const auto t = transfer_table(pts, 1);
  EXPECT_EQ(t.rows.size(), 8u);
  ASSERT_EQ(t.fits.size(), 8u);
  const char* order[] = {"sample_size", "task_difficulty", "vocabulary_overlap", "combined"};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(t.fits[i].factor, order[i]);
    EXPECT_EQ(t.fits[i].response, "relative");
    EXPECT_EQ(t.fits[i + 4].factor, order[i]);
    EXPECT_EQ(t.fits[i + 4].response, "absolute");
  }
  EXPECT_EQ(t.fit("combined").fit.coefficients.size(), 3u);
  // relative improvement is exactly linear in share and overlap here
  EXPECT_NEAR(t.fit("combined").fit.r_squared, 1.0, 1e-12);
  EXPECT_TRUE(t.negative_transfer.empty() || t.negative_transfer.size() < 8);
  for (const auto& r : t.rows) {
    EXPECT_DOUBLE_EQ(r.relative, relative_improvement(r.combined, r.per_language));
  }
  const auto tsv = t.to_tsv();
  EXPECT_NE(tsv.find("factor\tR2_relative\tR2_absolute\n"), std::string::npos);
  EXPECT_NE(tsv.find("\ncombined\t1.000000\t"), std::string::npos);
  EXPECT_EQ(t.to_json().at("fits").size(), 8u);
}

TEST(TransferTable, SingleFactorsMatchLinearFit) {
  const auto pts = synthetic_points();
  const auto t = transfer_table(pts, 10);
  std::vector<double> x, y;
  for (const auto& p : pts) {
    x.push_back(p.overlap_with_reference);
    y.push_back(p.combined_recall - p.per_language_recall);
  }
  EXPECT_DOUBLE_EQ(t.fit("vocabulary_overlap", "absolute").fit.r_squared, linear_fit(x, y).r_squared);
}

TEST(TransferTable, ExclusionAndNegativeTransfer) {
  auto pts = synthetic_points();
  pts[2].combined_recall = pts[2].per_language_recall * 0.5;
  const auto t = transfer_table(pts, 1, {"l2"});
  EXPECT_EQ(t.negative_transfer, std::vector<std::string>{"l2"});
  EXPECT_TRUE(t.rows[2].excluded);
  EXPECT_EQ(t.rows.size(), 8u);
  EXPECT_EQ(t.fit("sample_size").fit.n, 7u);
  EXPECT_NEAR(t.fit("combined").fit.r_squared, 1.0, 1e-12);
}

TEST(TransferTable, TooFewLanguages) {
  auto pts = synthetic_points();
  pts.resize(2);
  EXPECT_THROW(transfer_table(pts, 1), FitError);
}
