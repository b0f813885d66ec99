#pragma once

// Experiment recipes: per-language vs combined matrix, transitive transfer
// through pivot languages, and mixture-ratio sweeps. Every run writes its
// artifacts plus a manifest of content hashes under one output directory.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "mdr/analysis.hpp"
#include "mdr/common.hpp"
#include "mdr/corpus.hpp"
#include "mdr/digest.hpp"
#include "mdr/encoder.hpp"
#include "mdr/evaluation.hpp"
#include "mdr/mixture.hpp"
#include "mdr/synth.hpp"
#include "mdr/vocabulary.hpp"

namespace mdr {

struct ExperimentConfig {
  std::map<std::string, std::string> corpora;  // lang -> JSONL path
  std::optional<SynthSpec> synth;              // used when corpora is empty
  PairKind task = PairKind::nsp;
  std::size_t min_words = 4;
  std::size_t max_ngram = 2;  // 1 = unigram features only
  std::optional<std::size_t> vocab_cap = 200000;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  std::optional<MixtureSpec> mixture;
  std::vector<std::pair<std::string, std::string>> censor;  // (aux, target)
  std::string out_dir = "out";
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;  // multi-seed recipes; empty = {seed}
  std::uint64_t split_seed = 0;
  std::string target;
  std::vector<std::string> pivots;
  std::string auxiliary;
  std::string reference_lang;  // overlap factor reference; empty = largest language
  std::vector<std::string> exclude_from_fits;
  std::vector<double> ratios;

  std::vector<std::uint64_t> seed_list() const { return seeds.empty() ? std::vector<std::uint64_t>{seed} : seeds; }
};

inline void to_json(nlohmann::json& j, const ExperimentConfig& c) {
  j = nlohmann::json::object();
  j["corpora"] = c.corpora;
  if (c.synth) j["synth"] = *c.synth;
  j["task"] = to_string(c.task);
  j["min_words"] = c.min_words;
  j["max_ngram"] = c.max_ngram;
  j["vocab_cap"] = c.vocab_cap ? nlohmann::json(*c.vocab_cap) : nlohmann::json(nullptr);
  j["model"] = c.model;
  j["train"] = c.train;
  j["eval"] = c.eval;
  if (c.mixture) j["mixture"] = *c.mixture;
  nlohmann::json cens = nlohmann::json::array();
  for (const auto& [aux, tgt] : c.censor) cens.push_back({aux, tgt});
  j["censor"] = cens;
  j["out_dir"] = c.out_dir;
  j["seed"] = c.seed;
  j["seeds"] = c.seeds;
  j["split_seed"] = c.split_seed;
  j["target"] = c.target;
  j["pivots"] = c.pivots;
  j["auxiliary"] = c.auxiliary;
  j["reference_lang"] = c.reference_lang;
  j["exclude_from_fits"] = c.exclude_from_fits;
  j["ratios"] = c.ratios;
}

inline void from_json(const nlohmann::json& j, ExperimentConfig& c) {
  c = ExperimentConfig{};
  c.corpora = j.value("corpora", std::map<std::string, std::string>{});
  if (j.contains("synth") && !j["synth"].is_null()) c.synth = j["synth"].get<SynthSpec>();
  c.task = parse_pair_kind(j.value("task", std::string("nsp")));
  c.min_words = j.value("min_words", std::size_t{4});
  c.max_ngram = j.value("max_ngram", std::size_t{2});
  if (c.max_ngram != 1 && c.max_ngram != 2) throw Error("max_ngram must be 1 or 2");
  if (j.contains("vocab_cap")) {
    c.vocab_cap = j["vocab_cap"].is_null() ? std::nullopt : std::optional<std::size_t>(j["vocab_cap"].get<std::size_t>());
  }
  if (j.contains("model")) c.model = j["model"].get<ModelConfig>();
  if (j.contains("train")) c.train = j["train"].get<TrainConfig>();
  if (j.contains("eval")) c.eval = j["eval"].get<EvalConfig>();
  if (j.contains("mixture") && !j["mixture"].is_null()) c.mixture = j["mixture"].get<MixtureSpec>();
  for (const auto& e : j.value("censor", nlohmann::json::array())) c.censor.emplace_back(e.at(0).get<std::string>(), e.at(1).get<std::string>());
  c.out_dir = j.value("out_dir", std::string("out"));
  c.seed = j.value("seed", std::uint64_t{0});
  c.seeds = j.value("seeds", std::vector<std::uint64_t>{});
  c.split_seed = j.value("split_seed", std::uint64_t{0});
  c.target = j.value("target", std::string());
  c.pivots = j.value("pivots", std::vector<std::string>{});
  c.auxiliary = j.value("auxiliary", std::string());
  c.reference_lang = j.value("reference_lang", std::string());
  c.exclude_from_fits = j.value("exclude_from_fits", std::vector<std::string>{});
  c.ratios = j.value("ratios", std::vector<double>{});
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path)).get<ExperimentConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw StageError("config", path + ": " + e.what());
  }
}

/// Digest of the canonical config, excluding the output directory.
inline std::string config_digest(const ExperimentConfig& cfg) {
  nlohmann::json j = cfg;
  j.erase("out_dir");
  return sha256_hex(j.dump());
}

// ---------------------------------------------------------------------------
// Splits

enum class Split { train, dev, eval };

/// 90/5/5 by a hash of (doc_id, sec_id, split_seed); a section never moves
/// between splits across runs.
inline Split split_of(const std::string& doc_id, const std::string& sec_id, std::uint64_t split_seed) {
  const double u = static_cast<double>(derive_seed(split_seed, "split", doc_id, sec_id) >> 11) * 0x1.0p-53;
  if (u < 0.90) return Split::train;
  if (u < 0.95) return Split::dev;
  return Split::eval;
}

struct LanguageData {
  std::vector<ExamplePair> train;
  std::vector<ExamplePair> dev;
  std::vector<ExamplePair> eval;
};

// ---------------------------------------------------------------------------
// Run directory and manifest

/// Tracks every file a run writes; rollback() removes them after a failure.
class RunDir {
 public:
  explicit RunDir(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const noexcept { return root_; }

  std::filesystem::path path(const std::string& rel) const { return root_ / rel; }

  void write(const std::string& rel, const std::string& content) {
    write_file(root_ / rel, content);
    artifacts_[rel] = git_blob_hash(content);
  }

  void record_input(const std::string& name, const std::string& hash) { inputs_[name] = hash; }

  void write_manifest(const ExperimentConfig& cfg, const std::string& recipe) {
    nlohmann::json cj = cfg;
    cj.erase("out_dir");
    nlohmann::json m = {{"format_version", 1},
                        {"recipe", recipe},
                        {"config_digest", config_digest(cfg)},
                        {"config", cj},
                        {"seeds", cfg.seed_list()},
                        {"inputs", inputs_},
                        {"artifacts", artifacts_}};
    write_file(root_ / "manifest.json", m.dump(2) + "\n");
    committed_ = true;
  }

  void rollback() noexcept {
    std::error_code ec;
    for (const auto& [rel, hash] : artifacts_) {
      std::filesystem::remove(root_ / rel, ec);
      // prune directories left empty, up to (not including) the root
      for (auto dir = std::filesystem::path(rel).parent_path(); !dir.empty(); dir = dir.parent_path()) {
        if (!std::filesystem::remove(root_ / dir, ec)) break;
      }
    }
    std::filesystem::remove(root_ / "manifest.json", ec);
    artifacts_.clear();
  }

  bool committed() const noexcept { return committed_; }

 private:
  std::filesystem::path root_;
  std::map<std::string, std::string> artifacts_;
  std::map<std::string, std::string> inputs_;
  bool committed_ = false;
};

// Runs a recipe body; on failure removes partial outputs and rethrows with a stage name.
template <class Body>
auto run_guarded(RunDir& dir, Body&& body) {
  try {
    return body();
  } catch (const StageError&) {
    dir.rollback();
    throw;
  } catch (const std::exception& e) {
    dir.rollback();
    throw StageError("run", e.what());
  }
}

template <class Fn>
auto stage(const std::string& name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

/// Loads or generates sections, extracts pairs, and splits them per language.
/// Languages come back in configuration order.
inline std::vector<std::pair<std::string, LanguageData>> prepare_data(const ExperimentConfig& cfg, std::uint64_t seed,
                                                                     RunDir& dir, const std::string& prefix = "") {
  std::vector<std::pair<std::string, std::vector<SectionRecord>>> sections;
  if (!cfg.corpora.empty()) {
    stage("extract", [&] {
      for (const auto& [lang, path] : cfg.corpora) {
        auto records = read_corpus(path);
        for (const auto& r : records) {
          if (r.lang != lang) throw Error(path + ": record lang '" + r.lang + "' does not match '" + lang + "'");
        }
        dir.record_input(path, git_blob_hash_file(path));
        sections.emplace_back(lang, std::move(records));
      }
      return 0;
    });
  } else if (cfg.synth) {
    stage("synth", [&] {
      SynthSpec spec = *cfg.synth;
      spec.seed = seed;
      dir.record_input(prefix + "synth_spec", git_blob_hash(nlohmann::json(spec).dump()));
      auto all = gen_corpus(spec);
      for (const auto& lang : spec.languages) {
        std::vector<SectionRecord> recs;
        for (auto& r : all) {
          if (r.lang == lang) recs.push_back(std::move(r));
        }
        std::ostringstream out;
        write_corpus(out, recs);
        dir.write(prefix + "corpus/" + lang + ".jsonl", out.str());
        sections.emplace_back(lang, std::move(recs));
      }
      return 0;
    });
  } else {
    throw StageError("config", "no corpora and no synth spec configured");
  }

  return stage("extract", [&] {
    std::vector<std::pair<std::string, LanguageData>> out;
    for (const auto& [lang, recs] : sections) {
      LanguageData data;
      for (const auto& r : recs) {
        auto pairs = extract_pairs(r, cfg.task, derive_seed(seed, "ic"), cfg.min_words);
        auto& dst = [&]() -> std::vector<ExamplePair>& {
          switch (split_of(r.doc_id, r.sec_id, cfg.split_seed)) {
            case Split::train: return data.train;
            case Split::dev: return data.dev;
            default: return data.eval;
          }
        }();
        for (auto& p : pairs) {
          if (cfg.max_ngram == 1) strip_bigrams(p);
          dst.push_back(std::move(p));
        }
      }
      out.emplace_back(lang, std::move(data));
    }
    return out;
  });
}

// ---------------------------------------------------------------------------
// Legs: train one model on a pooled stream and evaluate it on target languages

struct LegResult {
  std::string name;
  Vocabulary vocab;
  EmbeddingModel model;
  std::vector<double> epoch_losses;
};

inline std::vector<ExamplePair> pool_pairs(std::initializer_list<const std::vector<ExamplePair>*> parts) {
  std::vector<ExamplePair> out;
  for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

inline std::string epoch_log(const std::vector<double>& losses) {
  std::ostringstream out;
  out.precision(17);
  out << "epoch\tmean_loss\n";
  for (std::size_t e = 0; e < losses.size(); ++e) out << e << '\t' << losses[e] << '\n';
  return out.str();
}

inline LegResult train_leg(const std::string& name, const std::vector<ExamplePair>& train_pairs,
                           const ExperimentConfig& cfg, std::uint64_t seed, RunDir& dir,
                           const std::string& prefix = "") {
  return stage("train:" + name, [&] {
    if (train_pairs.empty()) throw Error("no training pairs");
    LegResult leg{name, build_vocab(train_pairs, cfg.vocab_cap), {}, {}};
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(seed, "train");
    auto res = train(std::span<const ExamplePair>(train_pairs), cfg.model, tc, leg.vocab);
    leg.model = std::move(res.model);
    leg.epoch_losses = std::move(res.epoch_losses);
    dir.write(prefix + "vocab/" + name + ".tsv", leg.vocab.to_tsv());
    dir.write(prefix + "checkpoints/" + name + ".mdrl", serialize_checkpoint(leg.model));
    dir.write(prefix + "logs/" + name + ".train.tsv", epoch_log(leg.epoch_losses));
    return leg;
  });
}

inline std::vector<FeatureBag> targets_of(const std::vector<ExamplePair>& pairs) {
  std::vector<FeatureBag> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(p.target);
  return out;
}

/// Evaluates a leg on one language: queries from its eval split, distractors
/// from the target side of its training split. Pools depend only on
/// (seed, language), so every model sees the same pools for a language.
inline EvalReport eval_leg(const LegResult& leg, const std::string& lang, const LanguageData& data,
                           const ExperimentConfig& cfg, std::uint64_t seed, RunDir& dir,
                           const std::string& report_name, const std::string& prefix = "") {
  return stage("eval:" + leg.name + ":" + lang, [&] {
    EvalConfig ec = cfg.eval;
    ec.seed = derive_seed(seed, "eval", lang);
    const auto distractors = targets_of(data.train);
    auto rep = recall_at_k(leg.model, leg.vocab, data.eval, distractors, ec, lang, leg.name);
    dir.write(prefix + "reports/" + report_name + ".json", rep.to_json().dump(2) + "\n");
    return rep;
  });
}

inline const LanguageData& data_for(const std::vector<std::pair<std::string, LanguageData>>& all, const std::string& lang) {
  for (const auto& [l, d] : all) {
    if (l == lang) return d;
  }
  throw StageError("config", "language '" + lang + "' not present in the corpus");
}

// ---------------------------------------------------------------------------
// Per-language vs combined

struct TransferReport {
  std::vector<std::string> langs;
  std::map<std::string, EvalReport> per_language;
  std::map<std::string, EvalReport> combined;
  std::map<std::string, double> train_share;
  std::optional<TransferTable> table;
  std::string table_error;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["languages"] = langs;
    for (const auto& l : langs) {
      nlohmann::json entry = {{"per_language", per_language.at(l).to_json()},
                              {"combined", combined.at(l).to_json()},
                              {"train_share", train_share.at(l)}};
      nlohmann::json rel = nlohmann::json::object();
      for (const auto& [k, v] : per_language.at(l).recall) {
        const double c = combined.at(l).at(k);
        rel[std::to_string(k)] = v > 0.0 ? nlohmann::json(relative_improvement(c, v)) : nlohmann::json(nullptr);
      }
      entry["relative_improvement"] = rel;
      j["by_language"][l] = entry;
    }
    j["transfer_table"] = table ? table->to_json() : nlohmann::json(nullptr);
    if (!table_error.empty()) j["transfer_table_error"] = table_error;
    return j;
  }
};

/// Trains one model per language plus one combined model on all training
/// pairs (native proportions), evaluates each on every language's eval split.
inline TransferReport run_per_language_vs_combined(const ExperimentConfig& cfg) {
  RunDir dir(cfg.out_dir);
  return run_guarded(dir, [&] {
    const std::uint64_t seed = cfg.seed;
    const auto data = prepare_data(cfg, seed, dir);
    if (data.size() < 2) throw StageError("config", "need at least 2 languages");

    TransferReport report;
    std::map<std::string, std::size_t> counts;
    std::vector<ExamplePair> pooled;
    std::map<std::string, Vocabulary> vocabs;
    for (const auto& [lang, d] : data) {
      report.langs.push_back(lang);
      counts[lang] = d.train.size();
      pooled.insert(pooled.end(), d.train.begin(), d.train.end());
    }
    for (const auto& [lang, d] : data) report.train_share[lang] = native_ratio(counts, lang);

    for (const auto& [lang, d] : data) {
      auto leg = train_leg(lang, d.train, cfg, seed, dir);
      report.per_language[lang] = eval_leg(leg, lang, d, cfg, seed, dir, lang + ".per_language");
      vocabs[lang] = std::move(leg.vocab);
    }
    auto combined = train_leg("combined", pooled, cfg, seed, dir);
    for (const auto& [lang, d] : data) {
      report.combined[lang] = eval_leg(combined, lang, d, cfg, seed, dir, lang + ".combined");
    }

    stage("analyze", [&] {
      std::vector<Vocabulary> vs;
      for (const auto& l : report.langs) vs.push_back(vocabs.at(l));
      dir.write("overlap_jaccard.tsv", overlap_matrix_tsv(report.langs, vs, OverlapMetric::jaccard));
      dir.write("overlap_asym.tsv", overlap_matrix_tsv(report.langs, vs, OverlapMetric::asymmetric));

      std::string ref = cfg.reference_lang;
      if (ref.empty()) {
        ref = std::max_element(counts.begin(), counts.end(), [](const auto& a, const auto& b) { return a.second < b.second; })->first;
      }
      const std::size_t k = cfg.eval.ks.front();
      std::vector<TransferPoint> points;
      for (const auto& l : report.langs) {
        const auto& v = vocabs.at(l);
        points.push_back({l, report.per_language.at(l).at(k), report.combined.at(l).at(k), report.train_share.at(l),
                          report.per_language.at(l).at(k), v.empty() ? 0.0 : asym_overlap(v, vocabs.at(ref))});
      }
      try {
        report.table = transfer_table(points, k, {cfg.exclude_from_fits.begin(), cfg.exclude_from_fits.end()});
        dir.write("transfer.tsv", report.table->to_tsv());
      } catch (const Error& e) {
        // too few languages, zero baselines or degenerate factors: keep per-language numbers
        report.table_error = e.what();
      }
      dir.write("transfer.json", report.to_json().dump(2) + "\n");
      return 0;
    });
    dir.write_manifest(cfg, "run-matrix");
    return report;
  });
}

// ---------------------------------------------------------------------------
// Transitive transfer

struct OverlapEdge {
  std::string source;
  std::string target;
  double fraction = 0.0;  // |V_source ∩ V_target| / |V_source|
  bool pre_censoring = true;
};

struct TransitiveSeedResult {
  std::uint64_t seed = 0;
  std::vector<OverlapEdge> edges;
  std::map<std::string, EvalReport> reports;  // baseline, treatment, control_baseline, control_treatment
  std::map<std::size_t, double> delta;         // treatment - baseline
  std::map<std::size_t, double> relative;      // relative change, NaN when baseline is 0
  std::map<std::size_t, double> control_delta;
};

struct TransitiveReport {
  std::string target;
  std::vector<std::string> pivots;
  std::string auxiliary;
  std::vector<TransitiveSeedResult> seeds;
  std::map<std::size_t, double> mean_delta;
  std::map<std::size_t, double> mean_control_delta;
  std::map<std::size_t, double> mean_abs_control_delta;

  nlohmann::json to_json() const {
    auto kmap = [](const std::map<std::size_t, double>& m) {
      nlohmann::json j = nlohmann::json::object();
      for (const auto& [k, v] : m) j[std::to_string(k)] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
      return j;
    };
    nlohmann::json sj = nlohmann::json::array();
    std::vector<std::uint64_t> seed_list;
    for (const auto& s : seeds) {
      seed_list.push_back(s.seed);
      nlohmann::json edges = nlohmann::json::array();
      for (const auto& e : s.edges) {
        edges.push_back({{"source", e.source}, {"target", e.target}, {"percent", 100.0 * e.fraction},
                         {"measured", e.pre_censoring ? "before_censoring" : "after_censoring"}});
      }
      nlohmann::json reps = nlohmann::json::object();
      for (const auto& [name, r] : s.reports) reps[name] = r.to_json();
      sj.push_back({{"seed", s.seed}, {"overlap_graph", edges}, {"reports", reps}, {"delta", kmap(s.delta)},
                    {"relative_change", kmap(s.relative)}, {"control_delta", kmap(s.control_delta)}});
    }
    return {{"target", target}, {"pivots", pivots}, {"auxiliary", auxiliary}, {"seeds", seed_list},
            {"per_seed", sj}, {"mean_delta", kmap(mean_delta)}, {"mean_control_delta", kmap(mean_control_delta)},
            {"mean_abs_control_delta", kmap(mean_abs_control_delta)},
            // large-scale reference relative changes at k = 1/10/20; not expected at desk scale
            {"reference_relative_change", {{"1", 0.035}, {"10", 0.046}, {"20", 0.053}}}};
  }
};

enum class TransitivePreset { fig7_synth, custom };

/// Baseline = target + pivots; treatment adds the auxiliary language after its
/// vocabulary is censored against the target's. The control repeats both legs
/// without pivots.
inline TransitiveReport run_transitive(ExperimentConfig cfg, TransitivePreset preset) {
  if (preset == TransitivePreset::fig7_synth) {
    cfg.corpora.clear();
    if (!cfg.synth) cfg.synth = fig7_preset();
    cfg.target = "tgt";
    cfg.pivots = {"piv"};
    cfg.auxiliary = "aux";
  }
  if (cfg.target.empty() || cfg.pivots.empty() || cfg.auxiliary.empty()) {
    throw StageError("config", "run-transitive needs one target, at least one pivot and one auxiliary language");
  }
  RunDir dir(cfg.out_dir);
  return run_guarded(dir, [&] {
    TransitiveReport report{cfg.target, cfg.pivots, cfg.auxiliary, {}, {}, {}, {}};
    for (std::uint64_t seed : cfg.seed_list()) {
      const std::string prefix = "seed-" + std::to_string(seed) + "/";
      const auto data = prepare_data(cfg, seed, dir, prefix);
      const auto& tgt = data_for(data, cfg.target);
      const auto& aux = data_for(data, cfg.auxiliary);

      TransitiveSeedResult res;
      res.seed = seed;
      const auto censored_aux_pairs = stage("censor", [&] {
        const Vocabulary v_tgt = build_vocab(tgt.train);
        const Vocabulary v_aux = build_vocab(aux.train);
        for (const auto& p : cfg.pivots) {
          const Vocabulary v_piv = build_vocab(data_for(data, p).train);
          res.edges.push_back({cfg.target, p, asym_overlap(v_tgt, v_piv), true});
          res.edges.push_back({cfg.auxiliary, p, asym_overlap(v_aux, v_piv), true});
        }
        res.edges.push_back({cfg.auxiliary, cfg.target, asym_overlap(v_aux, v_tgt), true});
        res.edges.push_back({cfg.target, cfg.auxiliary, asym_overlap(v_tgt, v_aux), true});
        const Vocabulary censored = censor(v_aux, v_tgt);
        dir.write(prefix + "vocab/" + cfg.auxiliary + ".censored.tsv", censored.to_tsv());
        if (!censored.empty()) {
          const double after = asym_overlap(censored, v_tgt);
          res.edges.push_back({cfg.auxiliary, cfg.target, after, false});
          if (after != 0.0 || jaccard(censored, v_tgt) != 0.0) {
            throw StageError("censor-verify", "censored auxiliary vocabulary still overlaps the target");
          }
        }
        auto pairs = censor_pairs(aux.train, censored);
        // the trained vocabulary is rebuilt from these pairs, so verify them directly too
        if (jaccard(build_vocab(pairs), v_tgt) != 0.0) {
          throw StageError("censor-verify", "censored auxiliary pairs still contain target tokens");
        }
        return pairs;
      });

      std::vector<ExamplePair> pivots;
      for (const auto& p : cfg.pivots) {
        const auto& d = data_for(data, p).train;
        pivots.insert(pivots.end(), d.begin(), d.end());
      }
      const auto base_pairs = pool_pairs({&tgt.train, &pivots});
      const auto treat_pairs = pool_pairs({&tgt.train, &pivots, &censored_aux_pairs});
      const auto ctrl_base_pairs = pool_pairs({&tgt.train});
      const auto ctrl_treat_pairs = pool_pairs({&tgt.train, &censored_aux_pairs});

      for (const auto& [name, pairs] : {std::pair<std::string, const std::vector<ExamplePair>*>{"baseline", &base_pairs},
                                        {"treatment", &treat_pairs},
                                        {"control_baseline", &ctrl_base_pairs},
                                        {"control_treatment", &ctrl_treat_pairs}}) {
        const auto leg = train_leg(name, *pairs, cfg, seed, dir, prefix);
        res.reports[name] = eval_leg(leg, cfg.target, tgt, cfg, seed, dir, cfg.target + "." + name, prefix);
      }
      for (std::size_t k : cfg.eval.ks) {
        const double b = res.reports.at("baseline").at(k);
        const double t = res.reports.at("treatment").at(k);
        res.delta[k] = t - b;
        res.relative[k] = b > 0.0 ? (t - b) / b : std::nan("");
        res.control_delta[k] = res.reports.at("control_treatment").at(k) - res.reports.at("control_baseline").at(k);
      }
      report.seeds.push_back(std::move(res));
    }
    const double n = static_cast<double>(report.seeds.size());
    for (std::size_t k : cfg.eval.ks) {
      double d = 0.0, c = 0.0, ac = 0.0;
      for (const auto& s : report.seeds) {
        d += s.delta.at(k);
        c += s.control_delta.at(k);
        ac += std::abs(s.control_delta.at(k));
      }
      report.mean_delta[k] = d / n;
      report.mean_control_delta[k] = c / n;
      report.mean_abs_control_delta[k] = ac / n;
    }
    stage("report", [&] {
      dir.write("transitive.json", report.to_json().dump(2) + "\n");
      return 0;
    });
    dir.write_manifest(cfg, "run-transitive");
    return report;
  });
}

// ---------------------------------------------------------------------------
// Mixture-ratio sweep

struct SweepRow {
  double ratio = 0.0;
  EvalReport report;
};

struct SweepReport {
  std::string target;
  double native_ratio = 0.0;
  std::size_t total = 0;
  std::vector<SweepRow> rows;

  nlohmann::json to_json() const {
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows) rows_j.push_back({{"ratio", r.ratio}, {"report", r.report.to_json()}});
    return {{"target", target}, {"native_ratio", native_ratio}, {"total", total}, {"rows", rows_j},
            // large-scale reference: optimum band and potential gain over the native ratio
            {"reference_optimum_band", {0.10, 0.20}}, {"reference_relative_gain_over_native", 0.17}};
  }

  std::string to_tsv() const {
    std::ostringstream out;
    out.precision(6);
    out << std::fixed << "ratio";
    if (!rows.empty()) {
      for (const auto& [k, v] : rows.front().report.recall) out << "\trecall@" << k;
    }
    out << '\n';
    for (const auto& r : rows) {
      out << r.ratio;
      for (const auto& [k, v] : r.report.recall) out << '\t' << v;
      out << '\n';
    }
    return out.str();
  }
};

/// One training + evaluation per ratio; total stream length, vocabulary and
/// seeds are held fixed so only the target share varies.
inline SweepReport run_mixture_sweep(const ExperimentConfig& cfg, const std::vector<double>& ratios) {
  if (ratios.empty()) throw StageError("config", "run-sweep needs at least one ratio");
  for (double r : ratios) {
    if (!(r >= 0.0 && r <= 1.0)) throw StageError("config", "mixture ratios must lie in [0, 1]");
  }
  RunDir dir(cfg.out_dir);
  return run_guarded(dir, [&] {
    const std::uint64_t seed = cfg.seed;
    const std::string target = cfg.mixture && !cfg.mixture->target_lang.empty() ? cfg.mixture->target_lang : cfg.target;
    if (target.empty()) throw StageError("config", "run-sweep needs a target language");
    const auto data = prepare_data(cfg, seed, dir);
    const auto& tgt = data_for(data, target);

    std::vector<ExamplePair> aux, all;
    std::map<std::string, std::size_t> counts;
    for (const auto& [lang, d] : data) {
      counts[lang] = d.train.size();
      all.insert(all.end(), d.train.begin(), d.train.end());
      if (lang != target) aux.insert(aux.end(), d.train.begin(), d.train.end());
    }
    SweepReport report;
    report.target = target;
    report.native_ratio = native_ratio(counts, target);
    report.total = cfg.mixture && cfg.mixture->total > 1 ? cfg.mixture->total : all.size();

    const Vocabulary vocab = stage("build-vocab", [&] { return build_vocab(all, cfg.vocab_cap); });
    dir.write("vocab/sweep.tsv", vocab.to_tsv());
    const auto enc_target = encode_all(tgt.train, vocab);
    const auto enc_aux = encode_all(aux, vocab);

    for (double ratio : ratios) {
      std::ostringstream name;
      name << "ratio-" << ratio;
      const auto stream = stage("mix", [&] {
        return mix(enc_target, enc_aux, MixtureSpec{target, ratio, report.total, derive_seed(seed, "mix")});
      });
      LegResult leg{name.str(), vocab, {}, {}};
      stage("train:" + leg.name, [&] {
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(seed, "train");
        auto res = train(std::span<const EncodedPair>(stream), cfg.model, tc, vocab);
        leg.model = std::move(res.model);
        leg.epoch_losses = std::move(res.epoch_losses);
        dir.write("checkpoints/" + leg.name + ".mdrl", serialize_checkpoint(leg.model));
        dir.write("logs/" + leg.name + ".train.tsv", epoch_log(leg.epoch_losses));
        return 0;
      });
      report.rows.push_back({ratio, eval_leg(leg, target, tgt, cfg, seed, dir, target + "." + leg.name)});
    }
    stage("report", [&] {
      dir.write("sweep.json", report.to_json().dump(2) + "\n");
      dir.write("sweep.tsv", report.to_tsv());
      return 0;
    });
    dir.write_manifest(cfg, "run-sweep");
    return report;
  });
}

}  // namespace mdr
