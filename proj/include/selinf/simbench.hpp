#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "selinf/bootstrap.hpp"
#include "selinf/debias.hpp"
#include "selinf/intervals.hpp"

namespace selinf {

struct SimScenario
{
    std::string name = "poisson";
    Index n = 2000;
    Index p = 41; // design columns, the first being the ones column
    Vector beta_true;
    Family family = Family::poisson();
    double mean_low = -2.0;
    double mean_high = 2.0;
    int B = 50;
    int R = 50;
    std::uint64_t master_seed = 1;

    void validate() const;
    // Stable digest of every field, used to tag logs and manifests.
    std::string hash() const;
};

// beta_0 = 0.5, beta_i = i/15 for 1 <= i <= 10, zero for the rest.
Vector benchmark_beta(Index p);

// Poisson or negative-binomial (size 4.5) benchmark scenario.
SimScenario benchmark_scenario(FamilyKind kind, Index n = 2000, int R = 50, int B = 50, std::uint64_t seed = 1);

// Column means m_j ~ U(mean_low, mean_high) for columns 1..p-1, fixed by the
// scenario seed; entry 0 is unused (ones column).
Vector feature_means(const SimScenario& scenario);

// n x p, column 0 ones, column j ~ N(m_j, 1).
Matrix generate_design(const SimScenario& scenario, std::uint64_t seed);

// y_i ~ Poisson(exp(x_i' beta)) or NB(mean exp(x_i' beta), size). Linear
// predictors beyond the clamp bound are clamped; `clamp_rate` receives the
// fraction affected.
Vector generate_response(const Matrix& X, const SimScenario& scenario, std::uint64_t seed,
                         double* clamp_rate = nullptr);

enum class StubKind { universal, point_zero };

struct ExperimentConfig
{
    BootstrapConfig boot;   // replicates are overridden by scenario.B
    int cv_folds = 5;
    int n_lambda = 30;
    double lambda_ratio = 0.01;
    int workers = 1;        // repetitions run concurrently
    StubKind stub = StubKind::universal;
    ThetaMethod theta = ThetaMethod::direct; // de-biased GLM intervals
    GlmVariance variance = GlmVariance::model;
    // Directory for append-only per-repetition interval logs; empty disables
    // logging. Existing complete repetitions are reused on restart.
    std::filesystem::path log_dir;
    std::function<void(const std::string&)> progress;
};

struct CoefficientCoverage
{
    Index index = 0;
    double true_beta = 0.0;
    int covered = 0;
    int repetitions = 0;
    double ci_rate = 0.0;
    double mean_width = 0.0;
};

struct CoverageReport
{
    CiMethod method = CiMethod::stub;
    std::string scenario_hash;
    std::vector<CoefficientCoverage> rows;
    double nonzero_rate = 0.0; // mean ci_rate over nonzero slopes (intercept excluded)
    double zero_rate = 0.0;    // mean ci_rate over zero slopes
    double nonzero_mean_width = 0.0;
    long long total_fits = 0;
    double max_clamp_fraction = 0.0;
    int flagged_repetitions = 0;
    int resumed_repetitions = 0;
};

// Intervals for one dataset (X without the ones column; the intercept is
// fitted). The bootstrap seed is fixed by the caller so that methods share
// random numbers; `cv` skips the full-data lambda search when given.
IntervalTable run_method(CiMethod method, const Matrix& X, const Vector& y, const Family& family,
                         const ExperimentConfig& config, int replicates, std::uint64_t seed,
                         long long* fits = nullptr, double* clamp_fraction = nullptr, const CvResult* cv = nullptr);

CoverageReport run_coverage_experiment(const SimScenario& scenario, CiMethod method, const ExperimentConfig& config);

// One report per method, all computed on the same datasets and seeds.
std::vector<CoverageReport> width_comparison(const SimScenario& scenario, const std::vector<CiMethod>& methods,
                                             const ExperimentConfig& config);

// Rebuilds per-coefficient rates from a repetition log.
CoverageReport recount_from_log(const std::filesystem::path& log, const SimScenario& scenario);

std::filesystem::path log_path(const std::filesystem::path& dir, const SimScenario& scenario, CiMethod method);

// Columns: coefficient_index,true_beta,method,ci_rate,mean_width
void write_coverage_csv(std::ostream& out, const std::vector<CoverageReport>& reports);

} // namespace selinf
