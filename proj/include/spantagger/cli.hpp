#pragma once

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spantagger/config.hpp"
#include "spantagger/corpus.hpp"
#include "spantagger/errors.hpp"
#include "spantagger/evaluation.hpp"
#include "spantagger/model.hpp"
#include "spantagger/training.hpp"

namespace spantagger::cli {

// Every config key is mirrored as a CLI flag; flag values override the
// --config file, which overrides the SPANTAGGER_SEED fallback and defaults.
inline void add_config_flags(CLI::App* cmd, std::map<std::string, std::string>& vals) {
  for (const auto& [key, def] : config_entries(TrainConfig{}))
    cmd->add_option("--" + key, vals[key], "config key '" + key + "' (default " + def + ")");
}

inline TrainConfig assemble_config(CLI::App* cmd, const std::string& configPath,
                                   std::map<std::string, std::string>& vals) {
  TrainConfig cfg;
  if (const char* env = std::getenv("SPANTAGGER_SEED"))
    cfg.seed = detail::parse_u64("SPANTAGGER_SEED", env);
  if (!configPath.empty()) {
    std::ifstream in(configPath);
    if (!in) throw ConfigError("cannot open config file '" + configPath + "'");
    read_config_stream(cfg, in, configPath);
  }
  for (const auto& [key, def] : config_entries(TrainConfig{}))
    if (cmd->count("--" + key) > 0) apply_config_entry(cfg, key, vals[key]);
  cfg.validate();
  return cfg;
}

// Load the sidecar file when the config calls for it, resolving an
// unspecified width from the file header.
inline std::optional<SidecarStore> load_sidecar(TrainConfig& cfg, const std::string& path,
                                                bool allowResolve) {
  if (cfg.encoderSource != EncoderSource::Sidecar) return std::nullopt;
  if (path.empty()) throw ConfigError("encoderSource=sidecar requires --sidecar <file>");
  SidecarStore store = SidecarStore::read(path);
  if (cfg.sidecarDim == 0 && allowResolve) cfg.sidecarDim = store.dim;
  if (store.dim != cfg.sidecarDim)
    throw DataError("sidecar width " + std::to_string(store.dim) +
                    " does not match configured sidecarDim " + std::to_string(cfg.sidecarDim));
  return store;
}

// Five-token fallback sentence for `gradcheck` when no corpus is given.
inline Sentence builtin_gradcheck_sentence() {
  Sentence s;
  s.id = "gradcheck-1";
  auto tok = [](const char* w, const char* pos, int head, const char* rel, const char* at,
                const char* ot) {
    return Token{w, pos, head, rel, at, ot};
  };
  s.tokens = {
      tok("the", "DT", 1, "det", "O", "O"),
      tok("food", "NN", 2, "nsubj", "S-POS", "O"),
      tok("was", "VBD", -1, "root", "O", "O"),
      tok("very", "RB", 4, "advmod", "O", "O"),
      tok("tasty", "JJ", 2, "acomp", "O", "S"),
  };
  return s;
}

inline int do_train(TrainConfig cfg, const std::string& trainPath, const std::string& devPath,
                    const std::string& sidecarPath, const std::string& outPath,
                    std::string metricsPath, std::ostream& out) {
  const std::vector<Sentence> trainCorpus = read_corpus(trainPath, cfg.task);
  const std::vector<Sentence> devCorpus =
      devPath.empty() ? trainCorpus : read_corpus(devPath, cfg.task);
  std::optional<SidecarStore> store = load_sidecar(cfg, sidecarPath, true);
  Model model(cfg, build_vocabs(trainCorpus, cfg.task));
  if (store) model.sidecar = &*store;
  const TrainResult result = train(model, trainCorpus, devCorpus);
  if (metricsPath.empty()) metricsPath = outPath + ".metrics";
  atomic_write(metricsPath, [&](std::ostream& m) { m << format_metrics(result.log); });
  save_checkpoint(outPath, model);
  out << "trained " << variant_name(cfg.variant) << "/" << task_name(cfg.task) << ": epochs="
      << cfg.epochs << " bestEpoch=" << result.bestEpoch
      << " bestDevF1=" << format_score(result.bestDevF1) << "\n"
      << "checkpoint: " << outPath << "\n"
      << "metrics: " << metricsPath << "\n";
  if (result.clampEvents > 0)
    out << "warning: " << result.clampEvents << " probability clamps during training\n";
  return 0;
}

inline int do_eval(const std::string& modelPath, const std::string& dataPath,
                   const std::string& sidecarPath, std::optional<std::uint64_t> seed,
                   std::ostream& out) {
  Model model = load_checkpoint(modelPath);
  if (seed) model.cfg.seed = *seed;
  std::optional<SidecarStore> store = load_sidecar(model.cfg, sidecarPath, false);
  if (store) model.sidecar = &*store;
  const std::vector<Sentence> corpus = read_corpus(dataPath, model.cfg.task);
  const EvalReport report = evaluate(model, corpus);
  out << human_report(model.cfg.task, report);
  out << machine_line(model.cfg.task, report) << "\n";
  return 0;
}

inline int do_predict(const std::string& modelPath, const std::string& dataPath,
                      const std::string& sidecarPath, const std::string& outPath,
                      std::optional<std::uint64_t> seed, std::ostream& out) {
  Model model = load_checkpoint(modelPath);
  if (seed) model.cfg.seed = *seed;
  std::optional<SidecarStore> store = load_sidecar(model.cfg, sidecarPath, false);
  if (store) model.sidecar = &*store;
  const std::vector<Sentence> corpus = read_corpus(dataPath, model.cfg.task);
  const std::vector<Sentence> tagged = predict(model, corpus);
  atomic_write(outPath, [&](std::ostream& o) { write_corpus_stream(o, tagged); });
  out << "predicted " << tagged.size() << " sentences -> " << outPath << "\n";
  return 0;
}

inline int do_gradcheck(TrainConfig cfg, const std::string& dataPath,
                        const std::string& sidecarPath, std::ostream& out, std::ostream& err) {
  Sentence sentence;
  if (dataPath.empty()) {
    sentence = builtin_gradcheck_sentence();
  } else {
    bool found = false;
    for (const Sentence& s : read_corpus(dataPath, cfg.task))
      if (s.size() <= 6 && s.has_gold(cfg.task)) {
        sentence = s;
        found = true;
        break;
      }
    if (!found)
      throw DataError("no sentence with at most 6 tokens and gold " + task_name(cfg.task) +
                      " tags in '" + dataPath + "'");
  }
  std::optional<SidecarStore> store = load_sidecar(cfg, sidecarPath, true);
  const double maxErr = grad_check(cfg, sentence, 1e-4, store ? &*store : nullptr);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3e", maxErr);
  out << "gradcheck " << variant_name(cfg.variant) << ": max relative error " << buf
      << " (threshold 1e-03)\n";
  if (maxErr >= 1e-3) {
    err << "error kind=numeric msg=gradient check failed, max relative error " << buf << "\n";
    return 3;
  }
  return 0;
}

inline int do_validate(const std::string& dataPath, std::ostream& out, std::ostream& err) {
  // Structure (columns, tags, tree) is enforced by the reader; ill-formed
  // gold tag sequences are listed per sentence afterwards.
  const std::vector<Sentence> corpus = read_corpus(dataPath, TaskKind::Aspect);
  read_corpus(dataPath, TaskKind::Opinion);
  long violations = 0;
  for (const Sentence& s : corpus)
    for (TaskKind task : {TaskKind::Aspect, TaskKind::Opinion})
      if (s.has_gold(task) && !wellformed_tag_sequence(s.tags(task))) {
        out << "sentence '" << s.id << "': ill-formed " << task_name(task)
            << " tag sequence\n";
        ++violations;
      }
  if (violations > 0) {
    err << "error kind=data msg=" << violations << " ill-formed tag sequences in '" << dataPath
        << "'\n";
    return 2;
  }
  out << "ok: " << corpus.size() << " sentences\n";
  return 0;
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"neural sequence tagger for aspect/opinion span extraction"};
  app.require_subcommand(1);

  std::string configPath, trainPath, devPath, dataPath, sidecarPath, modelPath, outPath,
      metricsPath;
  std::map<std::string, std::string> flagVals;
  std::optional<std::uint64_t> seedOverride;

  CLI::App* trainCmd = app.add_subcommand("train", "train a model and save a checkpoint");
  trainCmd->add_option("--config", configPath, "config file (key = value lines)");
  trainCmd->add_option("--train", trainPath, "training corpus")->required();
  trainCmd->add_option("--dev", devPath, "development corpus (defaults to the training set)");
  trainCmd->add_option("--sidecar", sidecarPath, "sidecar embedding file");
  trainCmd->add_option("--out", outPath, "checkpoint output path")->required();
  trainCmd->add_option("--metrics", metricsPath, "metrics log path (default <out>.metrics)");
  add_config_flags(trainCmd, flagVals);

  CLI::App* evalCmd = app.add_subcommand("eval", "evaluate a checkpoint on a gold corpus");
  evalCmd->add_option("--model", modelPath, "checkpoint path")->required();
  evalCmd->add_option("--data", dataPath, "gold corpus")->required();
  evalCmd->add_option("--sidecar", sidecarPath, "sidecar embedding file");
  evalCmd->add_option("--seed", seedOverride, "override the checkpoint seed");

  CLI::App* predictCmd = app.add_subcommand("predict", "tag a corpus with a checkpoint");
  predictCmd->add_option("--model", modelPath, "checkpoint path")->required();
  predictCmd->add_option("--data", dataPath, "input corpus (gold tags may be '_')")->required();
  predictCmd->add_option("--sidecar", sidecarPath, "sidecar embedding file");
  predictCmd->add_option("--out", outPath, "tagged output path")->required();
  predictCmd->add_option("--seed", seedOverride, "override the checkpoint seed");

  CLI::App* gradCmd = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gradCmd->add_option("--config", configPath, "config file (key = value lines)");
  gradCmd->add_option("--data", dataPath, "corpus to draw a short sentence from");
  gradCmd->add_option("--sidecar", sidecarPath, "sidecar embedding file");
  add_config_flags(gradCmd, flagVals);

  CLI::App* validateCmd = app.add_subcommand("validate", "check a corpus file");
  validateCmd->add_option("--data", dataPath, "corpus to validate")->required();

  std::vector<std::string> full;
  full.push_back("spantagger");
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> ptrs;
  ptrs.reserve(full.size());
  for (const std::string& s : full) ptrs.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(ptrs.size()), ptrs.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    if (code == 0) return 0;
    err << "error kind=usage msg=" << e.what() << "\n";
    return 1;
  }

  try {
    if (trainCmd->parsed())
      return do_train(assemble_config(trainCmd, configPath, flagVals), trainPath, devPath,
                      sidecarPath, outPath, metricsPath, out);
    if (evalCmd->parsed()) return do_eval(modelPath, dataPath, sidecarPath, seedOverride, out);
    if (predictCmd->parsed())
      return do_predict(modelPath, dataPath, sidecarPath, outPath, seedOverride, out);
    if (gradCmd->parsed())
      return do_gradcheck(assemble_config(gradCmd, configPath, flagVals), dataPath, sidecarPath,
                          out, err);
    if (validateCmd->parsed()) return do_validate(dataPath, out, err);
  } catch (const ConfigError& e) {
    err << "error kind=usage msg=" << e.what() << "\n";
    return 1;
  } catch (const DataError& e) {
    err << "error kind=data msg=" << e.what() << "\n";
    return 2;
  } catch (const NumericError& e) {
    err << "error kind=numeric msg=" << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error kind=internal msg=" << e.what() << "\n";
    return 1;
  }
  return 1;
}

}  // namespace spantagger::cli
