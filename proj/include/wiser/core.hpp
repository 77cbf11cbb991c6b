#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace wiser {

// ---------------------------------------------------------------------------
// Error taxonomy
// ---------------------------------------------------------------------------

enum class ErrorCode {
  RANGE,
  DIM_MISMATCH,
  ZERO_NORM,
  DUPLICATE_ID,
  BACKEND_UNAVAILABLE,
  EMPTY_RESPONSE,
  VERIFY_UNPARSEABLE,
  UNPARSEABLE_REFLECTION,
  LOOKUP_MISS,
  EMPTY_PATHWAY,
  MODE_MISMATCH,
  NON_FINITE,
  EMPTY_GT,
  BAD_SUBSET,
  SCHEMA_ERROR,
  MISSING_REFERENCE,
  UNSATISFIABLE,
  IO_ERROR,
};

inline const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::RANGE: return "RANGE";
    case ErrorCode::DIM_MISMATCH: return "DIM_MISMATCH";
    case ErrorCode::ZERO_NORM: return "ZERO_NORM";
    case ErrorCode::DUPLICATE_ID: return "DUPLICATE_ID";
    case ErrorCode::BACKEND_UNAVAILABLE: return "BACKEND_UNAVAILABLE";
    case ErrorCode::EMPTY_RESPONSE: return "EMPTY_RESPONSE";
    case ErrorCode::VERIFY_UNPARSEABLE: return "VERIFY_UNPARSEABLE";
    case ErrorCode::UNPARSEABLE_REFLECTION: return "UNPARSEABLE_REFLECTION";
    case ErrorCode::LOOKUP_MISS: return "LOOKUP_MISS";
    case ErrorCode::EMPTY_PATHWAY: return "EMPTY_PATHWAY";
    case ErrorCode::MODE_MISMATCH: return "MODE_MISMATCH";
    case ErrorCode::NON_FINITE: return "NON_FINITE";
    case ErrorCode::EMPTY_GT: return "EMPTY_GT";
    case ErrorCode::BAD_SUBSET: return "BAD_SUBSET";
    case ErrorCode::SCHEMA_ERROR: return "SCHEMA_ERROR";
    case ErrorCode::MISSING_REFERENCE: return "MISSING_REFERENCE";
    case ErrorCode::UNSATISFIABLE: return "UNSATISFIABLE";
    case ErrorCode::IO_ERROR: return "IO_ERROR";
  }
  return "UNKNOWN";
}

// Every error names the offending field, stage, or item id in `detail`.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, std::string detail)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + detail),
        code_(code),
        detail_(std::move(detail)) {}

  ErrorCode code() const { return code_; }
  const std::string& detail() const { return detail_; }

 private:
  ErrorCode code_;
  std::string detail_;
};

// ---------------------------------------------------------------------------
// Small string helpers shared across modules
// ---------------------------------------------------------------------------

inline std::string trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

inline std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.emplace_back(s.substr(start));
      break;
    }
    parts.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
  return parts;
}

// 64-bit FNV-1a; used for config fingerprints and per-key noise seeding.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Pathways
// ---------------------------------------------------------------------------

// Total order T2I < I2I fixes iteration order everywhere.
enum class Pathway : int { T2I = 0, I2I = 1 };

inline constexpr std::array<Pathway, 2> kPathways{Pathway::T2I, Pathway::I2I};

inline const char* pathway_name(Pathway p) {
  return p == Pathway::T2I ? "T2I" : "I2I";
}

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct ComposedQuery {
  std::string query_id;
  std::string reference_id;
  std::string modification_text;
  std::set<std::string> ground_truth_ids;
  // CIRR subset protocol: exactly 6 ids containing at least one ground truth.
  std::optional<std::vector<std::string>> subset_ids;
  // Optional grouping label (Fashion-IQ categories).
  std::string category;
};

enum class FusionMode { ADA, AVG, RAK, T2I_ONLY, I2I_ONLY };

struct PipelineConfig {
  int top_k = 50;
  double tau = 0.7;
  int max_iterations = 1;
  FusionMode fusion_mode = FusionMode::ADA;
  double lambda = 0.5;                  // T2I weight for AVG
  Pathway rak_pathway = Pathway::T2I;   // single path reranked in RAK
  int backend_parallelism = 1;
  std::uint64_t rng_seed = 0;
  // When a pathway is still uncertain after the loop, drop its exclusive
  // candidates from fusion instead of fusing everything.
  bool strict_gate_fusion = false;
  int trace_depth = 100;                // final-ranking ids kept in the trace
};

inline std::string fusion_mode_name(FusionMode mode, Pathway rak_pathway = Pathway::T2I) {
  switch (mode) {
    case FusionMode::ADA: return "ADA";
    case FusionMode::AVG: return "AVG";
    case FusionMode::RAK: return rak_pathway == Pathway::T2I ? "RAK_T2I" : "RAK_I2I";
    case FusionMode::T2I_ONLY: return "T2I_ONLY";
    case FusionMode::I2I_ONLY: return "I2I_ONLY";
  }
  return "ADA";
}

// Accepts the canonical names plus bare "RAK" (defaults to the T2I path).
inline std::pair<FusionMode, Pathway> parse_fusion_mode(std::string_view text) {
  std::string s = to_lower(trim(text));
  if (s == "ada") return {FusionMode::ADA, Pathway::T2I};
  if (s == "avg") return {FusionMode::AVG, Pathway::T2I};
  if (s == "rak" || s == "rak_t2i") return {FusionMode::RAK, Pathway::T2I};
  if (s == "rak_i2i") return {FusionMode::RAK, Pathway::I2I};
  if (s == "t2i_only" || s == "t2i") return {FusionMode::T2I_ONLY, Pathway::T2I};
  if (s == "i2i_only" || s == "i2i") return {FusionMode::I2I_ONLY, Pathway::T2I};
  throw Error(ErrorCode::SCHEMA_ERROR, "fusion_mode: unknown value '" + std::string(text) + "'");
}

// ---------------------------------------------------------------------------
// Config validation / (de)serialization
// ---------------------------------------------------------------------------

inline PipelineConfig validate_config(const PipelineConfig& cfg) {
  if (cfg.top_k < 1) throw Error(ErrorCode::RANGE, "top_k");
  if (!(cfg.tau >= 0.0 && cfg.tau <= 1.0)) throw Error(ErrorCode::RANGE, "tau");
  if (cfg.max_iterations < 0) throw Error(ErrorCode::RANGE, "max_iterations");
  if (cfg.fusion_mode == FusionMode::AVG && !(cfg.lambda >= 0.0 && cfg.lambda <= 1.0))
    throw Error(ErrorCode::RANGE, "lambda");
  if (cfg.backend_parallelism < 1) throw Error(ErrorCode::RANGE, "backend_parallelism");
  if (cfg.trace_depth < 1) throw Error(ErrorCode::RANGE, "trace_depth");
  return cfg;
}

inline nlohmann::ordered_json config_to_json(const PipelineConfig& cfg) {
  nlohmann::ordered_json j;
  j["top_k"] = cfg.top_k;
  j["tau"] = cfg.tau;
  j["max_iterations"] = cfg.max_iterations;
  j["fusion_mode"] = fusion_mode_name(cfg.fusion_mode, cfg.rak_pathway);
  j["lambda"] = cfg.lambda;
  j["backend_parallelism"] = cfg.backend_parallelism;
  j["rng_seed"] = cfg.rng_seed;
  return j;
}

// Applies one flat key/value pair; values arrive as strings from TOML or CLI.
inline void apply_config_kv(PipelineConfig& cfg, const std::string& key, const std::string& raw) {
  const std::string value = trim(raw);
  auto parse_int = [&](const char* field) {
    try {
      size_t pos = 0;
      long long v = std::stoll(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(field);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::SCHEMA_ERROR, std::string(field) + ": not an integer: '" + value + "'");
    }
  };
  auto parse_real = [&](const char* field) {
    try {
      size_t pos = 0;
      double v = std::stod(value, &pos);
      if (pos != value.size()) throw std::invalid_argument(field);
      return v;
    } catch (const std::exception&) {
      throw Error(ErrorCode::SCHEMA_ERROR, std::string(field) + ": not a number: '" + value + "'");
    }
  };

  if (key == "top_k") {
    cfg.top_k = static_cast<int>(parse_int("top_k"));
  } else if (key == "tau") {
    cfg.tau = parse_real("tau");
  } else if (key == "max_iterations") {
    cfg.max_iterations = static_cast<int>(parse_int("max_iterations"));
  } else if (key == "fusion_mode") {
    std::string v = value;
    if (v.size() >= 2 && (v.front() == '"' || v.front() == '\'') && v.back() == v.front())
      v = v.substr(1, v.size() - 2);
    auto [mode, rak] = parse_fusion_mode(v);
    cfg.fusion_mode = mode;
    cfg.rak_pathway = rak;
  } else if (key == "lambda") {
    cfg.lambda = parse_real("lambda");
  } else if (key == "backend_parallelism") {
    cfg.backend_parallelism = static_cast<int>(parse_int("backend_parallelism"));
  } else if (key == "rng_seed") {
    try {
      size_t pos = 0;
      cfg.rng_seed = std::stoull(value, &pos);
      if (pos != value.size()) throw std::invalid_argument("rng_seed");
    } catch (const std::exception&) {
      throw Error(ErrorCode::SCHEMA_ERROR, "rng_seed: not an unsigned integer: '" + value + "'");
    }
  } else {
    throw Error(ErrorCode::SCHEMA_ERROR, "unknown config key '" + key + "'");
  }
}

inline PipelineConfig config_from_json(const nlohmann::json& j) {
  PipelineConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string& key = it.key();
    if (key == "fusion_mode") {
      if (!it.value().is_string())
        throw Error(ErrorCode::SCHEMA_ERROR, "fusion_mode: expected string");
      auto [mode, rak] = parse_fusion_mode(it.value().get<std::string>());
      cfg.fusion_mode = mode;
      cfg.rak_pathway = rak;
    } else if (key == "rng_seed") {
      if (!it.value().is_number())
        throw Error(ErrorCode::SCHEMA_ERROR, "rng_seed: expected number");
      cfg.rng_seed = it.value().get<std::uint64_t>();
    } else if (key == "top_k" || key == "max_iterations" || key == "backend_parallelism") {
      if (!it.value().is_number_integer())
        throw Error(ErrorCode::SCHEMA_ERROR, key + ": expected integer");
      apply_config_kv(cfg, key, std::to_string(it.value().get<long long>()));
    } else if (key == "tau" || key == "lambda") {
      if (!it.value().is_number())
        throw Error(ErrorCode::SCHEMA_ERROR, key + ": expected number");
      std::ostringstream os;
      os.precision(17);
      os << it.value().get<double>();
      apply_config_kv(cfg, key, os.str());
    } else {
      throw Error(ErrorCode::SCHEMA_ERROR, "unknown config key '" + key + "'");
    }
  }
  return cfg;
}

// Flat key/value config file. JSON object or flat TOML (`key = value` lines,
// `#` comments) are both accepted.
inline PipelineConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IO_ERROR, "cannot open config file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  std::string text = buf.str();

  std::string lead = trim(text);
  if (!lead.empty() && lead.front() == '{') {
    nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded())
      throw Error(ErrorCode::SCHEMA_ERROR, "config file is not valid JSON: " + path);
    return config_from_json(j);
  }

  PipelineConfig cfg;
  int line_no = 0;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    std::string stripped = trim(line);
    if (stripped.empty()) continue;
    size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw Error(ErrorCode::SCHEMA_ERROR,
                  "config line " + std::to_string(line_no) + ": expected key = value");
    apply_config_kv(cfg, trim(stripped.substr(0, eq)), stripped.substr(eq + 1));
  }
  return cfg;
}

inline std::string config_fingerprint(const PipelineConfig& cfg) {
  std::uint64_t h = fnv1a64(config_to_json(cfg).dump());
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return std::string(buf);
}

}  // namespace wiser
