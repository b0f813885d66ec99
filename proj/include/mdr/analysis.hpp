#pragma once

// Transfer analyses: relative improvement, least-squares fits with R^2, and
// Pearson correlation.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdr/common.hpp"

namespace mdr {

/// Raised for degenerate regression inputs.
class FitError : public Error {
 public:
  using Error::Error;
};

/// (combined - per_language) / per_language.
inline double relative_improvement(double combined, double per_language) {
  if (per_language == 0.0) throw Error("relative_improvement: per-language recall is zero");
  return (combined - per_language) / per_language;
}

struct FitResult {
  std::vector<double> coefficients;
  double intercept = 0.0;
  double r_squared = 0.0;
  double residual_std = 0.0;  // sqrt(SS_res / (n - p - 1)), 0 when n == p + 1
  std::size_t n = 0;

  nlohmann::json to_json() const {
    return {{"coefficients", coefficients}, {"intercept", intercept}, {"r_squared", r_squared},
            {"residual_std", residual_std}, {"n", n}};
  }
};

namespace detail {

inline void finish_fit(FitResult& fit, std::span<const double> ys, const std::vector<double>& predicted) {
  const double mean = std::accumulate(ys.begin(), ys.end(), 0.0) / static_cast<double>(ys.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < ys.size(); ++i) {
    ss_res += (ys[i] - predicted[i]) * (ys[i] - predicted[i]);
    ss_tot += (ys[i] - mean) * (ys[i] - mean);
  }
  // constant ys: nothing to explain
  fit.r_squared = ss_tot == 0.0 ? 0.0 : std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0);
  fit.n = ys.size();
  const std::size_t dof = ys.size() - fit.coefficients.size() - 1;
  fit.residual_std = dof > 0 ? std::sqrt(ss_res / static_cast<double>(dof)) : 0.0;
}

}  // namespace detail

/// Simple OLS with intercept; r_squared = 1 - SS_res / SS_tot.
inline FitResult linear_fit(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw FitError("linear_fit: xs and ys differ in length");
  if (xs.size() < 2) throw FitError("linear_fit: need at least 2 points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0) throw FitError("linear_fit: all xs are equal");
  FitResult fit;
  const double slope = sxy / sxx;
  fit.coefficients = {slope};
  fit.intercept = my - slope * mx;
  std::vector<double> pred(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) pred[i] = fit.intercept + slope * xs[i];
  detail::finish_fit(fit, ys, pred);
  return fit;
}

inline FitResult linear_fit(const std::vector<double>& xs, const std::vector<double>& ys) {
  return linear_fit(std::span<const double>(xs), std::span<const double>(ys));
}

/// Multivariate OLS with intercept. `features` holds n rows of p values.
inline FitResult multi_fit(const std::vector<std::vector<double>>& features, std::span<const double> ys) {
  const std::size_t n = features.size();
  if (n != ys.size()) throw FitError("multi_fit: feature rows and ys differ in length");
  if (n == 0) throw FitError("multi_fit: no observations");
  const std::size_t p = features.front().size();
  if (n <= p) throw FitError("multi_fit: need more observations than features");
  Eigen::MatrixXd design(n, p + 1);
  Eigen::VectorXd y(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (features[i].size() != p) throw FitError("multi_fit: ragged feature matrix");
    design(static_cast<Eigen::Index>(i), 0) = 1.0;
    for (std::size_t c = 0; c < p; ++c) design(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c + 1)) = features[i][c];
    y(static_cast<Eigen::Index>(i)) = ys[i];
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
  qr.setThreshold(1e-10);
  if (static_cast<std::size_t>(qr.rank()) < p + 1) throw FitError("multi_fit: design matrix is rank deficient");
  const Eigen::VectorXd beta = qr.solve(y);
  FitResult fit;
  fit.intercept = beta(0);
  for (std::size_t c = 0; c < p; ++c) fit.coefficients.push_back(beta(static_cast<Eigen::Index>(c + 1)));
  const Eigen::VectorXd pred = design * beta;
  detail::finish_fit(fit, ys, std::vector<double>(pred.data(), pred.data() + n));
  return fit;
}

inline FitResult multi_fit(const std::vector<std::vector<double>>& features, const std::vector<double>& ys) {
  return multi_fit(features, std::span<const double>(ys));
}

/// Product-moment correlation.
inline double pearson_r(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw Error("pearson_r: xs and ys differ in length");
  if (xs.size() < 2) throw Error("pearson_r: need at least 2 points");
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error("pearson_r: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double pearson_r(const std::vector<double>& xs, const std::vector<double>& ys) {
  return pearson_r(std::span<const double>(xs), std::span<const double>(ys));
}

// ---------------------------------------------------------------------------
// Transfer table

struct TransferPoint {
  std::string lang;
  double per_language_recall = 0.0;
  double combined_recall = 0.0;
  double train_share = 0.0;
  double difficulty = 0.0;  // pre-transfer recall@1
  double overlap_with_reference = 0.0;
};

struct FactorFit {
  std::string factor;    // sample_size | task_difficulty | vocabulary_overlap | combined
  std::string response;  // relative | absolute
  FitResult fit;
};

struct TransferRow {
  std::string lang;
  double per_language = 0.0;
  double combined = 0.0;
  double relative = 0.0;
  double absolute = 0.0;
  bool excluded = false;
};

struct TransferTable {
  std::size_t k = 1;
  std::vector<TransferRow> rows;
  std::vector<FactorFit> fits;                 // three single factors, then combined, per response
  std::vector<std::string> negative_transfer;  // languages with relative improvement < 0

  const FactorFit& fit(const std::string& factor, const std::string& response = "relative") const {
    for (const auto& f : fits) {
      if (f.factor == factor && f.response == response) return f;
    }
    throw Error("transfer table has no fit for " + factor + "/" + response);
  }

  nlohmann::json to_json() const {
    nlohmann::json rj = nlohmann::json::array();
    for (const auto& r : rows) {
      rj.push_back({{"lang", r.lang}, {"per_language", r.per_language}, {"combined", r.combined},
                    {"relative_improvement", r.relative}, {"absolute_improvement", r.absolute},
                    {"excluded_from_fits", r.excluded}});
    }
    nlohmann::json fj = nlohmann::json::array();
    for (const auto& f : fits) fj.push_back({{"factor", f.factor}, {"response", f.response}, {"fit", f.fit.to_json()}});
    return {{"k", k}, {"languages", rj}, {"fits", fj}, {"negative_transfer", negative_transfer}};
  }

  /// Two tab-separated tables: per-language improvements, then R^2 by factor.
  std::string to_tsv() const {
    std::ostringstream out;
    out << std::fixed << std::setprecision(6);
    out << "lang\tper_language@" << k << "\tcombined@" << k << "\trelative_improvement\tabsolute_improvement\n";
    for (const auto& r : rows) {
      out << r.lang << '\t' << r.per_language << '\t' << r.combined << '\t' << r.relative << '\t' << r.absolute << '\n';
    }
    out << "\nfactor\tR2_relative\tR2_absolute\n";
    for (const char* factor : {"sample_size", "task_difficulty", "vocabulary_overlap", "combined"}) {
      out << factor;
      for (const char* response : {"relative", "absolute"}) {
        out << '\t' << fit(factor, response).fit.r_squared;
      }
      out << '\n';
    }
    return out.str();
  }
};

/// Per-language improvements, single-factor R^2 for sample size, difficulty
/// and overlap, and the combined multivariate R^2. Languages in `exclude`
/// are reported but left out of every fit.
inline TransferTable transfer_table(std::span<const TransferPoint> points, std::size_t k,
                                    const std::set<std::string>& exclude = {}) {
  if (points.size() < 3) throw FitError("transfer_table: need at least 3 languages");
  TransferTable t;
  t.k = k;
  std::vector<double> share, difficulty, overlap, rel, abs;
  std::vector<std::vector<double>> features;
  for (const auto& p : points) {
    TransferRow row{p.lang, p.per_language_recall, p.combined_recall,
                    relative_improvement(p.combined_recall, p.per_language_recall),
                    p.combined_recall - p.per_language_recall, exclude.count(p.lang) != 0};
    if (row.relative < 0.0) t.negative_transfer.push_back(p.lang);
    if (!row.excluded) {
      share.push_back(p.train_share);
      difficulty.push_back(p.difficulty);
      overlap.push_back(p.overlap_with_reference);
      rel.push_back(row.relative);
      abs.push_back(row.absolute);
      features.push_back({p.train_share, p.difficulty, p.overlap_with_reference});
    }
    t.rows.push_back(std::move(row));
  }
  for (const auto& [response, ys] : {std::pair<std::string, const std::vector<double>*>{"relative", &rel},
                                     std::pair<std::string, const std::vector<double>*>{"absolute", &abs}}) {
    t.fits.push_back({"sample_size", response, linear_fit(share, *ys)});
    t.fits.push_back({"task_difficulty", response, linear_fit(difficulty, *ys)});
    t.fits.push_back({"vocabulary_overlap", response, linear_fit(overlap, *ys)});
    t.fits.push_back({"combined", response, multi_fit(features, *ys)});
  }
  return t;
}

}  // namespace mdr
