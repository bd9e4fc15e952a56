#pragma once

#include <cstdint>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "spantagger/corpus.hpp"
#include "spantagger/depgraph.hpp"
#include "spantagger/errors.hpp"

namespace spantagger {

enum class Variant { Rgat, RgatCrf, RgatBilstmCrf, RgatTrfmrCrf };

inline std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Rgat: return "rgat";
    case Variant::RgatCrf: return "rgat-crf";
    case Variant::RgatBilstmCrf: return "rgat-bilstm-crf";
    case Variant::RgatTrfmrCrf: return "rgat-trfmr-crf";
  }
  return "?";
}

inline Variant parse_variant(const std::string& s) {
  if (s == "rgat") return Variant::Rgat;
  if (s == "rgat-crf") return Variant::RgatCrf;
  if (s == "rgat-bilstm-crf") return Variant::RgatBilstmCrf;
  if (s == "rgat-trfmr-crf") return Variant::RgatTrfmrCrf;
  throw ConfigError("variant: unknown value '" + s + "'");
}

inline bool variant_has_crf(Variant v) { return v != Variant::Rgat; }

enum class EncoderSource { Lookup, Sidecar };

inline std::string encoder_source_name(EncoderSource s) {
  return s == EncoderSource::Lookup ? "lookup" : "sidecar";
}

inline EncoderSource parse_encoder_source(const std::string& s) {
  if (s == "lookup") return EncoderSource::Lookup;
  if (s == "sidecar") return EncoderSource::Sidecar;
  throw ConfigError("encoderSource: unknown value '" + s + "'");
}

// Every knob of a run. Config files are flat "key = value" lines whose keys
// match these field names exactly; CLI flags mirror them 1:1.
struct TrainConfig {
  Variant variant = Variant::Rgat;
  TaskKind task = TaskKind::Aspect;
  int epochs = 30;
  double learningRate = 1e-3;
  double adamBeta1 = 0.9;
  double adamBeta2 = 0.999;
  double adamEps = 1e-8;
  double dropout = 0.3;
  int relDim = 200;
  int hidden = 128;
  int layers = 2;
  int headsK = 4;
  int headsM = 4;
  std::uint64_t seed = 42;
  ReorientMode reorientMode = ReorientMode::Star;
  EncoderSource encoderSource = EncoderSource::Lookup;
  int tokenDim = 64;
  int posDim = 16;
  int sidecarDim = 0;  // 0 = take the width from the sidecar file header
  bool dropoutRelEmb = true;
  bool dropoutLayerOutput = true;
  bool freezePivots = false;
  bool crfBieosMask = false;
  int accumulate = 1;

  int head_width() const { return hidden / headsK; }

  int encoder_width() const {
    return encoderSource == EncoderSource::Lookup ? tokenDim + posDim : sidecarDim;
  }

  void validate() const {
    if (epochs < 1) throw ConfigError("epochs must be >= 1");
    if (!(learningRate > 0.0)) throw ConfigError("learningRate must be positive");
    if (adamBeta1 < 0.0 || adamBeta1 >= 1.0) throw ConfigError("adamBeta1 must be in [0,1)");
    if (adamBeta2 < 0.0 || adamBeta2 >= 1.0) throw ConfigError("adamBeta2 must be in [0,1)");
    if (!(adamEps > 0.0)) throw ConfigError("adamEps must be positive");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("dropout must be in [0,1)");
    if (relDim < 1) throw ConfigError("relDim must be >= 1");
    if (hidden < 1) throw ConfigError("hidden must be >= 1");
    if (layers < 1) throw ConfigError("layers must be >= 1");
    if (headsK < 1 || headsM < 1) throw ConfigError("headsK and headsM must be >= 1");
    if (hidden % headsK != 0) throw ConfigError("hidden must be divisible by headsK");
    if (hidden % headsM != 0) throw ConfigError("hidden must be divisible by headsM");
    if (hidden / headsK != hidden / headsM)
      throw ConfigError("headsK and headsM must give equal per-head widths (headsK == headsM)");
    if (variant == Variant::RgatBilstmCrf && hidden % 2 != 0)
      throw ConfigError("hidden must be even for the bilstm head");
    if (encoderSource == EncoderSource::Lookup) {
      if (tokenDim < 1) throw ConfigError("tokenDim must be >= 1");
      if (posDim < 1) throw ConfigError("posDim must be >= 1");
    } else if (sidecarDim < 0) {
      throw ConfigError("sidecarDim must be >= 0");
    }
    if (accumulate < 1) throw ConfigError("accumulate must be >= 1");
  }
};

inline std::string format_double(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

namespace detail {
inline std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline int parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    int x = std::stoi(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

inline double parse_num(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    std::uint64_t x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument("");
    return x;
  } catch (...) {
    throw ConfigError(key + ": expected an unsigned integer, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}
}  // namespace detail

inline void apply_config_entry(TrainConfig& c, const std::string& key, const std::string& value) {
  using namespace detail;
  if (key == "variant") c.variant = parse_variant(value);
  else if (key == "task") c.task = parse_task(value);
  else if (key == "epochs") c.epochs = parse_int(key, value);
  else if (key == "learningRate") c.learningRate = parse_num(key, value);
  else if (key == "adamBeta1") c.adamBeta1 = parse_num(key, value);
  else if (key == "adamBeta2") c.adamBeta2 = parse_num(key, value);
  else if (key == "adamEps") c.adamEps = parse_num(key, value);
  else if (key == "dropout") c.dropout = parse_num(key, value);
  else if (key == "relDim") c.relDim = parse_int(key, value);
  else if (key == "hidden") c.hidden = parse_int(key, value);
  else if (key == "layers") c.layers = parse_int(key, value);
  else if (key == "headsK") c.headsK = parse_int(key, value);
  else if (key == "headsM") c.headsM = parse_int(key, value);
  else if (key == "seed") c.seed = parse_u64(key, value);
  else if (key == "reorientMode") c.reorientMode = parse_reorient_mode(value);
  else if (key == "encoderSource") c.encoderSource = parse_encoder_source(value);
  else if (key == "tokenDim") c.tokenDim = parse_int(key, value);
  else if (key == "posDim") c.posDim = parse_int(key, value);
  else if (key == "sidecarDim") c.sidecarDim = parse_int(key, value);
  else if (key == "dropoutRelEmb") c.dropoutRelEmb = parse_bool(key, value);
  else if (key == "dropoutLayerOutput") c.dropoutLayerOutput = parse_bool(key, value);
  else if (key == "freezePivots") c.freezePivots = parse_bool(key, value);
  else if (key == "crfBieosMask") c.crfBieosMask = parse_bool(key, value);
  else if (key == "accumulate") c.accumulate = parse_int(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
}

inline void read_config_stream(TrainConfig& c, std::istream& in, const std::string& what) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(what + ":" + std::to_string(lineno) + ": expected 'key = value'");
    apply_config_entry(c, detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
}

inline std::vector<std::pair<std::string, std::string>> config_entries(const TrainConfig& c) {
  return {
      {"variant", variant_name(c.variant)},
      {"task", task_name(c.task)},
      {"epochs", std::to_string(c.epochs)},
      {"learningRate", format_double(c.learningRate)},
      {"adamBeta1", format_double(c.adamBeta1)},
      {"adamBeta2", format_double(c.adamBeta2)},
      {"adamEps", format_double(c.adamEps)},
      {"dropout", format_double(c.dropout)},
      {"relDim", std::to_string(c.relDim)},
      {"hidden", std::to_string(c.hidden)},
      {"layers", std::to_string(c.layers)},
      {"headsK", std::to_string(c.headsK)},
      {"headsM", std::to_string(c.headsM)},
      {"seed", std::to_string(c.seed)},
      {"reorientMode", reorient_mode_name(c.reorientMode)},
      {"encoderSource", encoder_source_name(c.encoderSource)},
      {"tokenDim", std::to_string(c.tokenDim)},
      {"posDim", std::to_string(c.posDim)},
      {"sidecarDim", std::to_string(c.sidecarDim)},
      {"dropoutRelEmb", c.dropoutRelEmb ? "true" : "false"},
      {"dropoutLayerOutput", c.dropoutLayerOutput ? "true" : "false"},
      {"freezePivots", c.freezePivots ? "true" : "false"},
      {"crfBieosMask", c.crfBieosMask ? "true" : "false"},
      {"accumulate", std::to_string(c.accumulate)},
  };
}

inline void write_config(std::ostream& out, const TrainConfig& c) {
  for (const auto& [k, v] : config_entries(c)) out << k << " = " << v << "\n";
}

}  // namespace spantagger
