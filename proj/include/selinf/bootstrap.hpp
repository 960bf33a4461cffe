#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "selinf/intervals.hpp"
#include "selinf/solver.hpp"

namespace selinf {

enum class ResidualType { pearson, deviance, anscombe };
enum class BracketVariant {
    hybrid,     // [b + m - q_hi, b + m - q_lo]
    basic,      // [2b - q_hi, 2b - q_lo]
    percentile, // [q_lo, q_hi]
};
enum class ThresholdRule {
    zero_small, // |b_j| <= a_n -> 0
    printed,    // |b_j| >= a_n -> 0, kept for comparison
};
enum class LambdaMode { cv_per_replicate, fixed };

struct BootstrapConfig
{
    int replicates = 50;
    double level = 0.95;
    std::uint64_t master_seed = 1;
    double a_n_constant = 1.0;
    ResidualType residual_type = ResidualType::pearson;
    BracketVariant ci_variant = BracketVariant::hybrid;
    ThresholdRule threshold = ThresholdRule::zero_small;
    LambdaMode lambda_mode = LambdaMode::cv_per_replicate;
    // Refuse brackets whose tail holds fewer than one draw (B * alpha / 2 < 1).
    bool strict_quantiles = true;
    int workers = 1;
    int max_retries = 10;
    // Partial-ridge penalty for PLR; 0 means 1/n.
    double ridge_lambda2 = 0.0;
    // Grid and folds for per-replicate cross-validation.
    int cv_folds = 5;
    int n_lambda = 30;
    double lambda_ratio = 0.01;
    SolverConfig solver;
    std::vector<std::string> term_names; // defaults to default_term_names

    void validate() const;
};

struct BootstrapResult
{
    IntervalTable intervals;
    Vector point;      // full-data estimate reported with the intervals
    Vector modified;   // thresholded estimate (residual bootstraps)
    Matrix draws;      // replicates x coefficients, row b from replicate b
    Vector residuals;  // configured residual type at the full-data fit (residual bootstraps)
    double lambda = 0.0;
    double clamp_fraction = 0.0;
    bool clamp_flagged = false; // clamp fraction above 20%
    int retries = 0;
    long long total_fits = 0;
};

inline constexpr double kClampFlagFraction = 0.2;

// a_n = constant * n^(-1/4)
double threshold_sequence(Index n, double a_n_constant);

// Intercept-free thresholding of a coefficient vector.
Vector modified_estimator(const Vector& beta_hat, Index n, double a_n_constant,
                          ThresholdRule rule = ThresholdRule::zero_small);

Vector center_residuals(const Vector& residuals);

// y** = sqrt(v) e** + mu, clamped at zero when `nonnegative`; returns the
// number of clamped entries through `clamped`.
Vector reconstruct_response(const Vector& mu, const Vector& v, const Vector& e_star, bool nonnegative,
                            Index* clamped = nullptr);

std::pair<double, double> percentile_interval(std::span<const double> draws, double level, BracketVariant variant,
                                              double point = 0.0, double modified = 0.0);

// Throws a config error when B * (1 - level) / 2 < 1.
void check_quantile_support(int replicates, double level);

// Builds an interval table from replicate draws (rows) with per-coordinate
// point and modified estimates.
IntervalTable intervals_from_draws(const Matrix& draws, const Vector& point, const Vector& modified, double level,
                                   BracketVariant variant, CiMethod method, const std::vector<std::string>& names);

// Gaussian lasso with the residual bootstrap around the thresholded fit.
BootstrapResult residual_bootstrap_lm(const Matrix& X, const Vector& y, const BootstrapConfig& config,
                                      const CvResult& cv);

// GLM residual bootstrap, responses rebuilt from Pearson residuals.
BootstrapResult residual_bootstrap_glm(const Matrix& X, const Vector& y, const Family& family,
                                       const BootstrapConfig& config, const CvResult& cv);

// Row-resampling bootstrap of the lasso with percentile brackets. In fixed
// mode every replicate uses cv.best_lambda.
BootstrapResult paired_bootstrap_glm(const Matrix& X, const Vector& y, const Family& family,
                                     const BootstrapConfig& config, const CvResult& cv);

// PLR: paired bootstrap, lasso selection, then a ridge refit penalizing only
// the coefficients the lasso set to zero.
BootstrapResult plr_glm(const Matrix& X, const Vector& y, const Family& family, const BootstrapConfig& config,
                        const CvResult& cv);

// Lasso + partial ridge on one dataset; the PLR point estimate.
FitResult lasso_partial_ridge(const Matrix& X, const Vector& y, const Family& family, double lambda1,
                              double lambda2, const SolverConfig& solver = {});

// Grid from lambda_path followed by cross_validate, both on (X, y).
CvResult select_lambda(const Matrix& X, const Vector& y, const Family& family, int folds, int n_lambda,
                       double ratio, std::uint64_t seed, const SolverConfig& solver = {});

} // namespace selinf
