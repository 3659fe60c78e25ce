#pragma once

// Command dispatch and report emission. Every JSON report carries the resolved
// configuration, its hash, the seed, library versions and per-quantity error
// budgets; failures leave a machine-readable error record instead.

#include <iosfwd>

#include "escobar/config.hpp"

namespace escobar {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config = 2;
inline constexpr int refusal = 3;
inline constexpr int non_convergence = 4;
}  // namespace exit_code

/// Runs one command, writing `<output_dir>/<command>.json` plus its CSV tables.
/// Progress and results go to `out`; the error record also goes to `err`.
int run(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Error record printed for configuration failures detected before `run`.
nlohmann::json config_error_record(const std::string& message);

/// Library and toolchain versions embedded in every report.
nlohmann::json versions();

}  // namespace escobar
