#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "selinf/dataset.hpp"
#include "selinf/error.hpp"
#include "selinf/run_config.hpp"
#include "selinf/simbench.hpp"

namespace selinf {

// Exit status for a failed command: 10 + the ErrorKind ordinal. 1 is used for
// unexpected exceptions and 2 for command-line usage errors.
int exit_code(ErrorKind kind) noexcept;
inline constexpr int kExitUnexpected = 1;
inline constexpr int kExitUsage = 2;

struct CommandOutput
{
    std::vector<std::filesystem::path> files; // reports, then the manifest
};

// Each command writes its reports and manifest.json into config.out_dir.
CommandOutput cmd_fit(const RunConfig& config);
CommandOutput cmd_ci(const RunConfig& config);
CommandOutput cmd_simulate(const RunConfig& config);
CommandOutput cmd_compare(const RunConfig& config);

// Dispatches on config.command. On failure writes error.json into out_dir
// (when possible) and a one-line JSON record to `err`, returning the exit code.
int run_command(const RunConfig& config, std::ostream& err);

// JSON error record: {"error": kind, "exit_code": n, "message": ..., ...}.
std::string error_record(const std::exception& e);

// Translation of the config's data section and scenario section.
CsvOptions csv_options(const RunConfig& config);
SimScenario make_scenario(const RunConfig& config);
Family make_family(const RunConfig& config);
ExperimentConfig make_experiment_config(const RunConfig& config);

} // namespace selinf
