// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
//
//   acceptance [--work-dir DIR] [--only N]...

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "mdr/mdr.hpp"
#include "oracles/oracles.hpp"

using namespace mdr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  std::string name;
  double time_limit_s;
  std::function<Outcome(const fs::path&)> run;
};

std::string fmt(double v, int prec = 4) {
  std::ostringstream o;
  o << std::fixed << std::setprecision(prec) << v;
  return o.str();
}

// Desk-scale settings shared by the experiment criteria.
ExperimentConfig desk_config(SynthSpec synth, const fs::path& out) {
  ExperimentConfig cfg;
  cfg.synth = std::move(synth);
  cfg.max_ngram = 1;
  cfg.model.dim = 32;
  cfg.train.batch_size = 64;
  cfg.train.epochs = 3;
  cfg.train.learning_rate = 0.1;
  cfg.train.deterministic = true;
  cfg.eval.ks = {1, 10, 20};
  cfg.eval.n_distractors = 500;
  cfg.out_dir = out.string();
  return cfg;
}

// 1 ------------------------------------------------------------------------
Outcome formulas(const fs::path&) {
  std::vector<std::string> bad;
  auto vocab = [](std::initializer_list<const char*> toks) {
    VocabCounter c;
    for (const char* t : toks) c.add(t, "xx");
    return c.finish();
  };
  auto expect = [&](const std::string& what, double got, double want) {
    if (got != want) bad.push_back(what + "=" + fmt(got, 15) + " want " + fmt(want, 15));
  };
  auto expect_near = [&](const std::string& what, double got, double want) {
    if (std::abs(got - want) > 1e-12) bad.push_back(what + "=" + fmt(got, 15) + " want " + fmt(want, 15));
  };
  const auto a = vocab({"a", "b", "c", "d"}), b = vocab({"c", "d", "e"});
  expect("jaccard({abcd},{cde})", jaccard(a, b), 2.0 / 5.0);
  expect("asym({abcd}->{cde})", asym_overlap(a, b), 2.0 / 4.0);
  expect("asym({cde}->{abcd})", asym_overlap(b, a), 2.0 / 3.0);
  expect("jaccard(A,A)", jaccard(a, a), 1.0);
  expect("jaccard(disjoint)", jaccard(a, vocab({"x", "y"})), 0.0);
  expect("jaccard(empty,empty)", jaccard(Vocabulary{}, Vocabulary{}), 0.0);
  // directed edges as percentages: 10 of 40 target tokens in the pivot, 10 of 25 pivot tokens in the target
  VocabCounter tc, pc;
  for (int i = 0; i < 40; ++i) tc.add("t" + std::to_string(i), "te");
  for (int i = 30; i < 55; ++i) pc.add("t" + std::to_string(i), "tr");
  const auto te = tc.finish(), tr = pc.finish();
  expect("asym(te->tr)%", 100.0 * asym_overlap(te, tr), 25.0);
  expect("asym(tr->te)%", 100.0 * asym_overlap(tr, te), 40.0);
  expect_near("relative_improvement(17.6,17.0)", relative_improvement(17.6, 17.0), 0.6 / 17.0);
  expect("relative_improvement(17.6,17.0) rounded %", std::round(relative_improvement(17.6, 17.0) * 10000.0) / 100.0, 3.53);
  expect("relative_improvement(3,2)", relative_improvement(3.0, 2.0), 0.5);
  expect("native_ratio(1,3)", native_ratio({{"a", 1}, {"b", 3}}, "a"), 0.25);
  expect_near("native_ratio(2,98)", native_ratio({{"a", 2}, {"b", 98}}, "a"), 0.02);
  if (bad.empty()) return {true, "14 exact checks"};
  std::string d;
  for (const auto& s : bad) d += s + "; ";
  return {false, d};
}

// 2 ------------------------------------------------------------------------
Outcome grad_check(const fs::path&) {
  double worst = 0.0;
  const int cases = 25;
  for (int s = 0; s < cases; ++s) worst = std::max(worst, oracle::max_grad_error(oracle::random_case(static_cast<std::uint64_t>(s))));
  return {worst < 1e-4, std::to_string(cases) + " models, max rel err " + [&] {
            std::ostringstream o;
            o << std::scientific << std::setprecision(2) << worst;
            return o.str();
          }()};
}

// 3 ------------------------------------------------------------------------
Outcome recall_oracle(const fs::path&) {
  int mismatches = 0, tie_instances = 0;
  for (int s = 0; s < 50; ++s) {
    const bool ties = s % 2 == 1;
    tie_instances += ties;
    const auto in = oracle::random_instance(static_cast<std::uint64_t>(s), ties);
    const auto rep = recall_at_k(in.model, in.eval, in.source, in.cfg);
    if (rep.recall != oracle::naive_recall(in.model, in.eval, in.source, in.cfg)) ++mismatches;
  }
  return {mismatches == 0, "50 instances (" + std::to_string(tie_instances) + " tie-heavy), " + std::to_string(mismatches) + " mismatches"};
}

// 4 ------------------------------------------------------------------------
Outcome determinism(const fs::path& work) {
  const auto a = work / "det_a", b = work / "det_b";
  fs::remove_all(a);
  fs::remove_all(b);
  run_per_language_vs_combined(desk_config(matrix_preset(), a));
  run_per_language_vs_combined(desk_config(matrix_preset(), b));
  std::size_t compared = 0;
  std::vector<std::string> differ;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a).string();
    const bool relevant = rel.starts_with("checkpoints/") || rel.starts_with("reports/") || rel == "manifest.json";
    if (!relevant) continue;
    ++compared;
    if (!fs::exists(b / rel) || read_file(e.path()) != read_file(b / rel)) differ.push_back(rel);
  }
  std::string d = std::to_string(compared) + " checkpoint/report/manifest files compared, " + std::to_string(differ.size()) + " differ";
  for (const auto& r : differ) d += " " + r;
  return {compared > 0 && differ.empty(), d};
}

// 5 ------------------------------------------------------------------------
Outcome positive_transfer(const fs::path& work) {
  const int seeds = 10;
  int wins = 0;
  double rel_sum = 0.0;
  std::string per_seed;
  for (int s = 0; s < seeds; ++s) {
    auto cfg = desk_config(matrix_preset(), work / ("matrix-seed-" + std::to_string(s)));
    cfg.seed = static_cast<std::uint64_t>(s);
    fs::remove_all(cfg.out_dir);
    const auto rep = run_per_language_vs_combined(cfg);
    const double per = rep.per_language.at("lrt").at(1), comb = rep.combined.at("lrt").at(1);
    wins += comb > per;
    rel_sum += per > 0.0 ? relative_improvement(comb, per) : 0.0;
    per_seed += " " + fmt(per, 3) + "->" + fmt(comb, 3);
  }
  const double mean_rel = rel_sum / seeds;
  return {wins >= 8 && mean_rel > 0.0,
          "lrt recall@1 combined > per-language in " + std::to_string(wins) + "/" + std::to_string(seeds) +
              " seeds, mean relative improvement " + fmt(100.0 * mean_rel, 1) + "%;" + per_seed};
}

// 6 ------------------------------------------------------------------------
Outcome mixture_optimum(const fs::path& work) {
  const int seeds = 5;
  const std::vector<double> ratios = {0.02, 0.15, 0.9};
  std::map<double, double> mean;
  for (int s = 0; s < seeds; ++s) {
    auto cfg = desk_config(matrix_preset(), work / ("sweep-seed-" + std::to_string(s)));
    cfg.seed = static_cast<std::uint64_t>(s);
    cfg.target = "lrt";
    fs::remove_all(cfg.out_dir);
    const auto rep = run_mixture_sweep(cfg, ratios);
    for (const auto& row : rep.rows) mean[row.ratio] += row.report.at(1) / seeds;
  }
  const bool pass = mean[0.15] > mean[0.02] && mean[0.15] > mean[0.9];
  return {pass, "seed-mean recall@1 over " + std::to_string(seeds) + " seeds: 0.02=" + fmt(mean[0.02]) +
                    " 0.15=" + fmt(mean[0.15]) + " 0.9=" + fmt(mean[0.9])};
}

// 7 ------------------------------------------------------------------------
Outcome transitive(const fs::path& work) {
  auto cfg = desk_config(fig7_preset(), work / "transitive");
  cfg.seeds = {0, 1, 2, 3, 4};
  fs::remove_all(cfg.out_dir);
  const auto rep = run_transitive(cfg, TransitivePreset::fig7_synth);
  bool verified = true;
  for (const auto& s : rep.seeds) {
    bool seen = false;
    for (const auto& e : s.edges) {
      if (e.source == "aux" && e.target == "tgt" && !e.pre_censoring) seen = e.fraction == 0.0;
    }
    verified = verified && seen;
  }
  const double d = rep.mean_delta.at(1), c = rep.mean_abs_control_delta.at(1);
  std::string per_seed;
  for (const auto& s : rep.seeds) per_seed += " " + fmt(s.delta.at(1)) + "/" + fmt(s.control_delta.at(1));
  return {verified && d > 0.0 && c < d,
          "zero aux-target overlap verified: " + std::string(verified ? "yes" : "no") + ", seed-mean delta@1 " + fmt(d) +
              ", control seed-mean |delta@1| " + fmt(c) + "; per seed (treatment/control)" + per_seed};
}

// 8 ------------------------------------------------------------------------
Outcome regression(const fs::path&) {
  std::vector<std::string> bad;
  Rng rng(8);
  // collinear response
  std::vector<std::vector<double>> xs;
  std::vector<double> ys;
  for (int i = 0; i < 10; ++i) {
    const double a = rng.uniform(-1, 1), b = rng.uniform(-1, 1);
    xs.push_back({a, b});
    ys.push_back(1.0 + 2.0 * a - b);
  }
  if (std::abs(multi_fit(xs, ys).r_squared - 1.0) > 1e-12) bad.push_back("collinear r2");
  std::vector<double> x1, y1;
  for (int i = 0; i < 6; ++i) {
    x1.push_back(i);
    y1.push_back(3.0 - 0.5 * i);
  }
  if (linear_fit(x1, y1).r_squared != 1.0) bad.push_back("collinear simple r2");
  // normal-equations oracle
  double worst_beta = 0.0;
  for (int s = 0; s < 30; ++s) {
    Rng r(100 + static_cast<std::uint64_t>(s));
    const std::size_t p = 1 + r.below(4), n = p + 2 + r.below(20);
    std::vector<std::vector<double>> f(n, std::vector<double>(p));
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (auto& v : f[i]) v = r.uniform(-2, 2);
      y[i] = r.uniform(-1, 1);
    }
    const auto fit = multi_fit(f, y);
    const auto beta = oracle::normal_equations(f, y);
    worst_beta = std::max(worst_beta, std::abs(fit.intercept - beta[0]));
    for (std::size_t c = 0; c < p; ++c) worst_beta = std::max(worst_beta, std::abs(fit.coefficients[c] - beta[c + 1]));
  }
  if (worst_beta > 1e-8) bad.push_back("normal equations diff " + fmt(worst_beta, 12));
  // pearson^2 vs simple-fit R^2
  double worst_r = 0.0;
  for (int s = 0; s < 30; ++s) {
    Rng r(200 + static_cast<std::uint64_t>(s));
    const std::size_t n = 3 + r.below(30);
    std::vector<double> a(n), b(n);
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = r.uniform(-1, 1);
      b[i] = 0.5 * a[i] + r.uniform(-1, 1);
    }
    const double pr = pearson_r(a, b);
    worst_r = std::max(worst_r, std::abs(pr * pr - linear_fit(a, b).r_squared));
  }
  if (worst_r > 1e-10) bad.push_back("pearson^2 vs R^2 diff " + fmt(worst_r, 14));
  // transfer table structure
  std::vector<TransferPoint> pts;
  for (int i = 0; i < 7; ++i) {
    const double share = rng.uniform(0.01, 0.3), diff = rng.uniform(0.1, 0.9), ov = rng.uniform(0, 0.6);
    pts.push_back({"l" + std::to_string(i), diff, diff * (1.0 + ov + rng.uniform(-0.1, 0.1)), share, diff, ov});
  }
  const auto t = transfer_table(pts, 1);
  std::vector<std::string> factors;
  for (const auto& f : t.fits) {
    if (f.response == "relative") factors.push_back(f.factor);
  }
  const std::vector<std::string> want = {"sample_size", "task_difficulty", "vocabulary_overlap", "combined"};
  if (factors != want) bad.push_back("transfer table factor rows");
  if (t.fit("combined").fit.coefficients.size() != 3) bad.push_back("combined fit is not multivariate");
  if (bad.empty()) {
    return {true, "collinear R2=1, normal-equation max diff " + fmt(worst_beta, 12) + ", pearson^2 max diff " + fmt(worst_r, 14) +
                      ", table rows sample_size/task_difficulty/vocabulary_overlap/combined"};
  }
  std::string d;
  for (const auto& s : bad) d += s + "; ";
  return {false, d};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path work = fs::temp_directory_path() / "mdr_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--work-dir" && i + 1 < argc) {
      work = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      only.insert(std::stoi(argv[++i]));
    } else {
      std::cerr << "usage: acceptance [--work-dir DIR] [--only N]...\n";
      return 2;
    }
  }
  fs::create_directories(work);

  const std::vector<Criterion> criteria = {
      {1, "formula oracles (jaccard, asym_overlap, relative_improvement, native_ratio)", 1, formulas},
      {2, "gradient check against central differences", 30, grad_check},
      {3, "recall@k equals naive full-sort oracle", 60, recall_oracle},
      {4, "deterministic reruns are byte-identical", 600, determinism},
      {5, "positive transfer to the low-resource target", 600, positive_transfer},
      {6, "interior mixture-ratio optimum", 900, mixture_optimum},
      {7, "transitive transfer through a pivot", 900, transitive},
      {8, "regression module", 1e9, regression},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run(work);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.time_limit_s) {
      o.pass = false;
      o.detail += "; over time limit " + fmt(c.time_limit_s, 0) + "s";
    }
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.name << " [" << fmt(secs, 1) << "s] "
              << o.detail << std::endl;
  }
  return failed == 0 ? 0 : 1;
}
