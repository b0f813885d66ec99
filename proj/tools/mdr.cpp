// mdr: command-line front end for the retrieval workbench.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "mdr/mdr.hpp"

namespace fs = std::filesystem;
using namespace mdr;

namespace {

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  std::string out_dir;
  std::string task;
};

ExperimentConfig load_config(const Globals& g) {
  ExperimentConfig cfg = g.config.empty() ? ExperimentConfig{} : load_experiment_config(g.config);
  if (g.seed) {
    cfg.seed = *g.seed;
    cfg.seeds.clear();
  }
  if (g.deterministic) cfg.train.deterministic = true;
  if (!g.out_dir.empty()) cfg.out_dir = g.out_dir;
  if (!g.task.empty()) cfg.task = parse_pair_kind(g.task);
  if (cfg.synth && g.seed) cfg.synth->seed = *g.seed;
  return cfg;
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

std::string pairs_jsonl(std::span<const ExamplePair> pairs) {
  std::ostringstream out;
  write_pairs(out, pairs);
  return out.str();
}

std::vector<ExamplePair> read_all_pairs(const std::vector<std::string>& paths, RunDir& dir) {
  std::vector<ExamplePair> out;
  for (const auto& p : paths) {
    auto part = read_pairs(p);
    dir.record_input(p, git_blob_hash_file(p));
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

template <class Body>
void with_dir(const ExperimentConfig& cfg, const std::string& recipe, Body&& body) {
  RunDir dir(cfg.out_dir);
  run_guarded(dir, [&] {
    body(dir);
    dir.write_manifest(cfg, recipe);
    return 0;
  });
}

void add_globals(CLI::App* sub, Globals& g) {
  sub->add_option("--config", g.config, "experiment config (JSON)");
  sub->add_option("--seed", g.seed, "master seed");
  sub->add_flag("--deterministic", g.deterministic, "strictly sequential training updates");
  sub->add_option("--out-dir", g.out_dir, "output directory");
  sub->add_option("--task", g.task, "pair extraction task")->check(CLI::IsMember({"nsp", "ic"}));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multilingual deep-retrieval workbench"};
  app.require_subcommand(1);
  Globals g;
  std::function<void()> action;

  // extract ---------------------------------------------------------------
  std::vector<std::string> corpus_paths;
  auto* extract = app.add_subcommand("extract", "extract NSP/IC pairs from JSONL sections, split 90/5/5");
  add_globals(extract, g);
  extract->add_option("--corpus", corpus_paths, "section JSONL file(s)")->required()->check(CLI::ExistingFile);
  extract->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      with_dir(cfg, "extract", [&](RunDir& dir) {
        std::map<std::string, LanguageData> by_lang;
        stage("extract", [&] {
          for (const auto& path : corpus_paths) {
            dir.record_input(path, git_blob_hash_file(path));
            for (const auto& r : read_corpus(path)) {
              auto& d = by_lang[r.lang];
              auto pairs = extract_pairs(r, cfg.task, derive_seed(cfg.seed, "ic"), cfg.min_words);
              if (cfg.max_ngram == 1) std::for_each(pairs.begin(), pairs.end(), strip_bigrams);
              auto& dst = split_of(r.doc_id, r.sec_id, cfg.split_seed) == Split::train ? d.train
                          : split_of(r.doc_id, r.sec_id, cfg.split_seed) == Split::dev ? d.dev
                                                                                       : d.eval;
              dst.insert(dst.end(), pairs.begin(), pairs.end());
            }
          }
          return 0;
        });
        for (const auto& [lang, d] : by_lang) {
          dir.write("pairs/" + lang + ".train.jsonl", pairs_jsonl(d.train));
          dir.write("pairs/" + lang + ".dev.jsonl", pairs_jsonl(d.dev));
          dir.write("pairs/" + lang + ".eval.jsonl", pairs_jsonl(d.eval));
          std::cout << lang << "\ttrain=" << d.train.size() << "\tdev=" << d.dev.size() << "\teval=" << d.eval.size() << '\n';
        }
      });
    };
  });

  // synth -----------------------------------------------------------------
  std::string preset;
  auto* synth = app.add_subcommand("synth", "generate a synthetic multilingual corpus");
  add_globals(synth, g);
  synth->add_option("--preset", preset, "built-in spec (overrides config.synth)")->check(CLI::IsMember({"fig7", "matrix"}));
  synth->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      if (preset == "fig7") cfg.synth = fig7_preset(cfg.seed);
      if (preset == "matrix") cfg.synth = matrix_preset(cfg.seed);
      if (!cfg.synth) throw StageError("config", "synth needs --preset or a config with a 'synth' section");
      cfg.synth->seed = cfg.seed;
      with_dir(cfg, "synth", [&](RunDir& dir) {
        const SynthSpec spec = *cfg.synth;
        const auto records = stage("synth", [&] { return gen_corpus(spec); });
        for (const auto& lang : spec.languages) {
          std::vector<SectionRecord> recs;
          std::copy_if(records.begin(), records.end(), std::back_inserter(recs), [&](const auto& r) { return r.lang == lang; });
          std::ostringstream out;
          write_corpus(out, recs);
          dir.write("corpus/" + lang + ".jsonl", out.str());
        }
        for (const auto& [lang, v] : gen_lexicons(spec)) dir.write("lexicon/" + lang + ".tsv", v.to_tsv());
        dir.write("synth_spec.json", nlohmann::json(spec).dump(2) + "\n");
      });
    };
  });

  // build-vocab -----------------------------------------------------------
  std::vector<std::string> pair_paths;
  std::optional<std::size_t> cap;
  std::string name = "vocab";
  auto* bv = app.add_subcommand("build-vocab", "build a frequency-ordered vocabulary from pair files");
  add_globals(bv, g);
  bv->add_option("--pairs", pair_paths, "pair JSONL file(s)")->required()->check(CLI::ExistingFile);
  bv->add_option("--cap", cap, "keep the N most frequent features (overrides config)");
  bv->add_option("--name", name, "output name under vocab/");
  bv->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      if (cap) cfg.vocab_cap = *cap;
      with_dir(cfg, "build-vocab", [&](RunDir& dir) {
        const auto pairs = read_all_pairs(pair_paths, dir);
        const auto vocab = stage("build-vocab", [&] { return build_vocab(pairs, cfg.vocab_cap); });
        dir.write("vocab/" + name + ".tsv", vocab.to_tsv());
        std::cout << "vocab/" << name << ".tsv\t" << vocab.size() << " entries\n";
      });
    };
  });

  // overlap ---------------------------------------------------------------
  std::vector<std::string> vocab_paths;
  std::string metric = "jaccard";
  auto* ov = app.add_subcommand("overlap", "pairwise vocabulary overlap matrix (TSV)");
  add_globals(ov, g);
  ov->add_option("--vocab", vocab_paths, "vocabulary TSV per language; the file stem names the language")
      ->required()
      ->check(CLI::ExistingFile);
  ov->add_option("--metric", metric)->check(CLI::IsMember({"jaccard", "asym"}));
  ov->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      with_dir(cfg, "overlap", [&](RunDir& dir) {
        std::vector<std::string> langs;
        std::vector<Vocabulary> vocabs;
        for (const auto& p : vocab_paths) {
          langs.push_back(stem(p));
          vocabs.push_back(Vocabulary::load(p));
          dir.record_input(p, git_blob_hash_file(p));
        }
        const auto tsv = overlap_matrix_tsv(langs, vocabs, metric == "jaccard" ? OverlapMetric::jaccard : OverlapMetric::asymmetric);
        dir.write("overlap_" + metric + ".tsv", tsv);
        std::cout << tsv;
      });
    };
  });

  // censor ----------------------------------------------------------------
  std::string aux_vocab, target_vocab;
  std::vector<std::string> aux_pairs;
  auto* cen = app.add_subcommand("censor", "remove target-language tokens from an auxiliary vocabulary");
  add_globals(cen, g);
  cen->add_option("--aux", aux_vocab, "auxiliary vocabulary TSV")->required()->check(CLI::ExistingFile);
  cen->add_option("--target", target_vocab, "target vocabulary TSV")->required()->check(CLI::ExistingFile);
  cen->add_option("--pairs", aux_pairs, "auxiliary pair files to filter")->check(CLI::ExistingFile);
  cen->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      with_dir(cfg, "censor", [&](RunDir& dir) {
        const auto aux = Vocabulary::load(aux_vocab);
        const auto tgt = Vocabulary::load(target_vocab);
        dir.record_input(aux_vocab, git_blob_hash_file(aux_vocab));
        dir.record_input(target_vocab, git_blob_hash_file(target_vocab));
        const auto censored = censor(aux, tgt);
        if (!censored.empty() && asym_overlap(censored, tgt) != 0.0) {
          throw StageError("censor-verify", "censored vocabulary still overlaps the target");
        }
        dir.write("vocab/" + stem(aux_vocab) + ".censored.tsv", censored.to_tsv());
        if (!aux_pairs.empty()) {
          const auto pairs = read_all_pairs(aux_pairs, dir);
          dir.write("pairs/" + stem(aux_vocab) + ".censored.jsonl", pairs_jsonl(censor_pairs(pairs, censored)));
        }
        std::cout << "kept " << censored.size() << " of " << aux.size() << " entries\n";
      });
    };
  });

  // mix -------------------------------------------------------------------
  std::vector<std::string> mix_target, mix_aux;
  std::optional<double> ratio;
  std::optional<std::size_t> total;
  auto* mx = app.add_subcommand("mix", "draw a fixed-length stream with a given target share");
  add_globals(mx, g);
  mx->add_option("--target-pairs", mix_target)->required()->check(CLI::ExistingFile);
  mx->add_option("--aux-pairs", mix_aux)->required()->check(CLI::ExistingFile);
  mx->add_option("--ratio", ratio, "target share in [0, 1]");
  mx->add_option("--total", total, "stream length");
  mx->callback([&] {
    action = [&] {
      auto cfg = load_config(g);
      MixtureSpec spec = cfg.mixture.value_or(MixtureSpec{});
      if (ratio) spec.ratio = *ratio;
      if (total) spec.total = *total;
      spec.seed = derive_seed(cfg.seed, "mix");
      cfg.mixture = spec;
      with_dir(cfg, "mix", [&](RunDir& dir) {
        const auto t = read_all_pairs(mix_target, dir);
        const auto a = read_all_pairs(mix_aux, dir);
        const auto stream = stage("mix", [&] { return mix(t, a, spec); });
        dir.write("pairs/mixed.jsonl", pairs_jsonl(stream));
      });
    };
  });

  // train -----------------------------------------------------------------
  std::string vocab_path;
  auto* tr = app.add_subcommand("train", "train a dual encoder on pair files");
  add_globals(tr, g);
  tr->add_option("--pairs", pair_paths, "training pair JSONL file(s)")->required()->check(CLI::ExistingFile);
  tr->add_option("--vocab", vocab_path, "vocabulary TSV (built from the pairs when omitted)")->check(CLI::ExistingFile);
  tr->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      with_dir(cfg, "train", [&](RunDir& dir) {
        const auto pairs = read_all_pairs(pair_paths, dir);
        Vocabulary vocab;
        if (vocab_path.empty()) {
          vocab = build_vocab(pairs, cfg.vocab_cap);
        } else {
          vocab = Vocabulary::load(vocab_path);
          dir.record_input(vocab_path, git_blob_hash_file(vocab_path));
        }
        dir.write("vocab/model.tsv", vocab.to_tsv());
        TrainConfig tc = cfg.train;
        tc.seed = derive_seed(cfg.seed, "train");
        const auto res = stage("train", [&] {
          return train(std::span<const ExamplePair>(pairs), cfg.model, tc, vocab,
                       [](std::size_t e, double loss) { std::cerr << "epoch " << e << " loss " << loss << '\n'; });
        });
        dir.write("checkpoints/model.mdrl", serialize_checkpoint(res.model));
        dir.write("logs/model.train.tsv", epoch_log(res.epoch_losses));
      });
    };
  });

  // eval ------------------------------------------------------------------
  std::string model_path, eval_lang;
  std::vector<std::string> distractor_paths;
  auto* ev = app.add_subcommand("eval", "sampled recall@k of a checkpoint");
  add_globals(ev, g);
  ev->add_option("--model", model_path, "checkpoint")->required()->check(CLI::ExistingFile);
  ev->add_option("--vocab", vocab_path, "vocabulary the checkpoint was trained with")->required()->check(CLI::ExistingFile);
  ev->add_option("--pairs", pair_paths, "evaluation pairs")->required()->check(CLI::ExistingFile);
  ev->add_option("--distractors", distractor_paths, "pairs whose targets form the distractor source")
      ->required()
      ->check(CLI::ExistingFile);
  ev->add_option("--lang", eval_lang, "language label for the report");
  ev->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      with_dir(cfg, "eval", [&](RunDir& dir) {
        const auto vocab = Vocabulary::load(vocab_path);
        dir.record_input(vocab_path, git_blob_hash_file(vocab_path));
        dir.record_input(model_path, git_blob_hash_file(model_path));
        const auto model = stage("load", [&] { return load_checkpoint(model_path, &vocab); });
        const auto queries = read_all_pairs(pair_paths, dir);
        const auto source = targets_of(read_all_pairs(distractor_paths, dir));
        EvalConfig ec = cfg.eval;
        ec.seed = derive_seed(cfg.seed, "eval", eval_lang);
        const auto rep = stage("eval", [&] { return recall_at_k(model, vocab, queries, source, ec, eval_lang, stem(model_path)); });
        const auto text = rep.to_json().dump(2) + "\n";
        dir.write("reports/" + (eval_lang.empty() ? std::string("eval") : eval_lang) + ".json", text);
        std::cout << text;
      });
    };
  });

  // analyze ---------------------------------------------------------------
  std::vector<std::string> per_lang_reports, combined_reports;
  std::string factors_path;
  auto* an = app.add_subcommand("analyze", "transfer table from per-language and combined eval reports");
  add_globals(an, g);
  an->add_option("--per-language", per_lang_reports)->required()->check(CLI::ExistingFile);
  an->add_option("--combined", combined_reports)->required()->check(CLI::ExistingFile);
  an->add_option("--factors", factors_path, "TSV: lang, train_share, overlap_with_reference")->required()->check(CLI::ExistingFile);
  an->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      with_dir(cfg, "analyze", [&](RunDir& dir) {
        const std::size_t k = cfg.eval.ks.front();
        std::map<std::string, EvalReport> per, comb;
        auto load_reports = [&](const std::vector<std::string>& paths, std::map<std::string, EvalReport>& into) {
          for (const auto& p : paths) {
            auto rep = EvalReport::from_json(nlohmann::json::parse(read_file(p)));
            dir.record_input(p, git_blob_hash_file(p));
            into[rep.lang] = std::move(rep);
          }
        };
        load_reports(per_lang_reports, per);
        load_reports(combined_reports, comb);
        dir.record_input(factors_path, git_blob_hash_file(factors_path));
        std::vector<TransferPoint> points;
        std::istringstream in(read_file(factors_path));
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
          if (line.empty()) continue;
          std::istringstream row(line);
          TransferPoint p;
          if (!(row >> p.lang >> p.train_share >> p.overlap_with_reference)) {
            throw StageError("analyze", factors_path + ": malformed row '" + line + "'");
          }
          if (!per.count(p.lang) || !comb.count(p.lang)) throw StageError("analyze", "missing reports for " + p.lang);
          p.per_language_recall = per.at(p.lang).at(k);
          p.combined_recall = comb.at(p.lang).at(k);
          p.difficulty = p.per_language_recall;
          points.push_back(p);
        }
        const auto table = stage("analyze", [&] {
          return transfer_table(points, k, {cfg.exclude_from_fits.begin(), cfg.exclude_from_fits.end()});
        });
        dir.write("transfer.json", table.to_json().dump(2) + "\n");
        dir.write("transfer.tsv", table.to_tsv());
        std::cout << table.to_tsv();
      });
    };
  });

  // recipes ---------------------------------------------------------------
  auto* rm = app.add_subcommand("run-matrix", "per-language models vs one combined model");
  add_globals(rm, g);
  rm->callback([&] {
    action = [&] {
      const auto rep = run_per_language_vs_combined(load_config(g));
      for (const auto& l : rep.langs) {
        std::cout << l << "\tper_language=" << rep.per_language.at(l).recall.begin()->second
                  << "\tcombined=" << rep.combined.at(l).recall.begin()->second << '\n';
      }
    };
  });

  std::string transitive_preset = "custom";
  auto* rt = app.add_subcommand("run-transitive", "transfer through pivot languages with a censored auxiliary");
  add_globals(rt, g);
  rt->add_option("--preset", transitive_preset)->check(CLI::IsMember({"fig7", "custom"}));
  rt->callback([&] {
    action = [&] {
      const auto rep = run_transitive(load_config(g), transitive_preset == "fig7" ? TransitivePreset::fig7_synth : TransitivePreset::custom);
      for (const auto& [k, d] : rep.mean_delta) {
        std::cout << "k=" << k << "\tmean_delta=" << d << "\tmean_control_delta=" << rep.mean_control_delta.at(k) << '\n';
      }
    };
  });

  std::vector<double> ratios;
  auto* rs = app.add_subcommand("run-sweep", "train and evaluate across target mixture ratios");
  add_globals(rs, g);
  rs->add_option("--ratios", ratios, "target shares (overrides config)")->delimiter(',');
  rs->callback([&] {
    action = [&] {
      const auto cfg = load_config(g);
      const auto rep = run_mixture_sweep(cfg, ratios.empty() ? cfg.ratios : ratios);
      std::cout << rep.to_tsv();
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  try {
    action();
  } catch (const StageError& e) {
    std::cerr << "mdr: stage '" << e.stage() << "' failed: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "mdr: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
