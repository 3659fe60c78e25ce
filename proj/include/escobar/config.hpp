#pragma once

// Strict run configuration: a JSON document whose every key is known, with
// defaults for the keys that are omitted.

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "escobar/minimizer.hpp"
#include "escobar/sharp_constants.hpp"

namespace escobar {

enum class Command { constant, verify_trace, lift_check, minimize, eigen, blowup, aubin, report };
std::string to_string(Command c);

struct SpaceSpec {
  std::size_t n = 3;
  double m = 1.0;
  std::size_t lateral_nodes = 16;
  std::size_t normal_nodes = 16;
  double lateral_length = 1.0;
  double normal_length = 1.0;
  std::string phi = "0";
  std::string sigma;  // empty: no conformal factor
};

struct QuadratureSpec {
  HalfspaceQuad quad;
  /// Refinement levels; level k doubles every resolution k times.
  int levels = 1;
};

struct LiftSpec {
  LiftQuad quad;
  double tau = 1.0;
  int levels = 1;
};

struct EigenSpec {
  double tolerance = 1e-10;
  int max_iterations = 500;
};

struct BlowupSpec {
  std::vector<double> t;       // default: geometric 1 .. 1e4, ratio 1.5
  double bound = 1e3;
  double floor = -1e3;
  int random_fields = 4;
};

struct AubinSpec {
  std::vector<double> taus;    // default: 1e-2 .. 1e-6
  double eps = 0.25;
  std::vector<double> point;   // default: centre of the t = 0 face
};

struct RunConfig {
  Command command = Command::constant;
  std::uint64_t seed = 1;
  /// Serial kernels and sequential restarts: bit-identical re-runs.
  bool deterministic = true;
  std::string output_dir = "results";
  std::string input_dir;  // report: directory to merge (default output_dir)
  SpaceSpec space;
  QuadratureSpec quadrature;
  LiftSpec lift;
  MinimizerConfig minimizer;
  EigenSpec eigen;
  BlowupSpec blowup;
  AubinSpec aubin;
};

/// Parses and validates a JSON document. ConfigError carries line/column for
/// syntax errors and the key path for semantic ones.
RunConfig parse_config(const std::string& text);

/// Validates an already parsed document (used after flag overrides are merged).
RunConfig config_from_json(const nlohmann::json& doc);

/// Fully resolved configuration, defaults included; keys sorted.
nlohmann::json to_json(const RunConfig& cfg);

/// Parses a document into JSON only, with the same line/column diagnostics.
nlohmann::json parse_document(const std::string& text);

/// Sets `doc` at a dotted key path ("space.m"), creating objects on the way.
void set_path(nlohmann::json& doc, const std::string& path, nlohmann::json value);

/// 64-bit FNV-1a of the canonical resolved configuration without its directories, as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace escobar
