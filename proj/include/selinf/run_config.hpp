#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace selinf {

struct ScenarioConfig
{
    std::string family = "poisson"; // poisson | negbin
    long n = 2000;
    long p = 41;
    int R = 50;
    int B = 50;
    std::uint64_t seed = 1;
    double mean_low = -2.0;
    double mean_high = 2.0;
    double size = 4.5;
    std::vector<double> beta; // empty: the benchmark coefficient vector

    bool operator==(const ScenarioConfig&) const = default;
};

// Every command parameter. Enumerations are kept as their CLI spellings and
// checked when a command runs.
struct RunConfig
{
    std::string command; // fit | ci | simulate | compare

    // data
    std::string data;
    std::string preset; // "" or "autoclaim"
    std::string target;
    std::vector<std::string> drop;
    std::vector<std::string> categorical;
    std::map<std::string, std::string> reference_levels;

    // model
    std::string family = "gaussian";
    double power = 1.5;
    double size = 1.0;
    double lambda = 0.0; // 0 selects lambda by cross-validation
    int cv_folds = 5;
    int n_lambda = 30;
    double lambda_ratio = 0.01;
    std::uint64_t cv_seed = 1;

    // intervals
    std::string method = "plr";
    std::vector<std::string> methods;
    double level = 0.95;
    int replicates = 50;
    std::uint64_t seed = 1;
    int workers = 1;
    double a_n_constant = 1.0;
    std::string residual_type = "pearson";
    std::string ci_variant = "hybrid";
    std::string threshold = "zero_small";
    std::string lambda_mode = "cv";
    bool strict_quantiles = true;
    double ridge_lambda2 = 0.0;
    std::string theta = "direct";
    std::string variance = "model";
    std::string stub = "universal";

    ScenarioConfig scenario;

    std::string out_dir = "out";
    std::string log_dir;

    bool operator==(const RunConfig&) const = default;
};

std::string to_json_text(const RunConfig& config);
// Unknown keys are rejected so that typos surface as config errors.
RunConfig run_config_from_json_text(const std::string& text);
// Accepts a config file or a run manifest (its "config" member).
RunConfig load_run_config(const std::filesystem::path& path);
ScenarioConfig load_scenario_config(const std::filesystem::path& path);

std::string hash_text(const std::string& text);
std::string config_hash(const RunConfig& config);
std::string file_hash(const std::filesystem::path& path);

} // namespace selinf
