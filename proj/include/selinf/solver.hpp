#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

#include "selinf/family.hpp"

namespace selinf {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Objective: (1/n) sum rho(y_i, eta_i) + lambda1 * sum f_j |b_j| + lambda2 * sum f_j b_j^2.
// The ridge term carries no 1/2. An empty `factors` means all ones.
struct PenaltySpec
{
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    Vector factors;

    static PenaltySpec lasso(double lambda1) { return {lambda1, 0.0, {}}; }
    static PenaltySpec ridge(double lambda2) { return {0.0, lambda2, {}}; }
};

enum class WorkingWeights {
    observed, // d^2 rho / d eta^2 at y, expected information where that is not positive
    fisher,   // expected information only
};

struct SolverConfig
{
    WorkingWeights weights = WorkingWeights::observed;
    int max_irls = 100;
    int max_sweeps = 1000;
    double tol = 1e-7;        // max coefficient change, standardized scale
    double inner_tol = 1e-11; // coordinate-descent sweep change
    double kkt_rel_tol = 1e-6;
    bool standardize = true;
    bool fit_intercept = true;
};

struct FitResult
{
    double intercept = 0.0;
    Vector beta;
    PenaltySpec penalty;
    double dispersion = 1.0;
    std::vector<Index> active_set;
    int n_iterations = 0;
    bool converged = false;
    bool clamped = false;
    bool has_intercept = true;

    // Penalty weights on the original coefficient scale (standardization folded in).
    Vector l1_weights;
    Vector l2_weights;
    double objective = 0.0;
    std::vector<double> objective_trace;
    double kkt_violation = 0.0;
    double kkt_tolerance = 0.0;

    // Linear predictor intercept + X * beta.
    Vector predict_eta(const Matrix& X) const;
    Vector predict_mean(const Matrix& X, const Family& family) const;
    // (intercept, beta) when an intercept is fitted, beta otherwise.
    Vector coefficients() const;
};

struct CvResult
{
    Vector lambda_grid;
    Vector mean_cv_loss;
    Vector se_cv_loss;
    double best_lambda = 0.0;
    Index best_index = 0;
    std::vector<int> fold_assignment;
};

// Process-wide record of the KKT certificate of every fit that reported
// convergence; test suites assert `failures == 0` at exit.
struct KktAudit
{
    std::uint64_t converged_fits = 0;
    std::uint64_t failures = 0;
    std::uint64_t nonconverged_fits = 0;
    double worst_ratio = 0.0; // max violation / tolerance over audited fits
};
KktAudit kkt_audit();

double soft_threshold(double z, double gamma);

// Penalized objective at `fit` evaluated on the original scale.
double penalized_objective(const Matrix& X, const Vector& y, const Family& family, const FitResult& fit);

struct KktReport
{
    double max_violation = 0.0;
    double tolerance = 0.0;
    bool ok() const { return max_violation <= tolerance; }
};
// Subgradient optimality check of `fit` for the objective above, on the
// original coefficient scale with the fit's effective penalty weights.
KktReport kkt_certificate(const Matrix& X, const Vector& y, const Family& family, const FitResult& fit,
                          double rel_tol = 1e-6);

FitResult fit_penalized_glm(const Matrix& X, const Vector& y, const Family& family, const PenaltySpec& penalty,
                            const SolverConfig& config = {}, const FitResult* warm_start = nullptr);

// Fits along `lambdas` (lambda1 values) with warm starts; lambda2 and factors
// come from `base`.
std::vector<FitResult> fit_path(const Matrix& X, const Vector& y, const Family& family, const Vector& lambdas,
                                const PenaltySpec& base = {}, const SolverConfig& config = {});

// Smallest lambda1 at which every penalized coefficient is zero.
double lambda_max(const Matrix& X, const Vector& y, const Family& family, const PenaltySpec& base = {},
                  const SolverConfig& config = {});

// Log-spaced grid from lambda_max down to ratio * lambda_max.
Vector lambda_path(const Matrix& X, const Vector& y, const Family& family, int n_lambda, double ratio,
                   const PenaltySpec& base = {}, const SolverConfig& config = {});

struct CvOptions
{
    int folds = 5;
    std::uint64_t seed = 1;
    PenaltySpec base; // lambda2 and factors shared by every fit
    SolverConfig solver;
};

// K-fold cross-validation of lambda1 over `grid` (held-out mean deviance).
CvResult cross_validate(const Matrix& X, const Vector& y, const Family& family, const Vector& grid,
                        const CvOptions& options = {});

// Random fold labels in [0, K) with sizes differing by at most one.
std::vector<int> assign_folds(Index n, int folds, std::uint64_t seed);

// Family deviance mean over observations; used as held-out CV loss.
double mean_deviance(const Family& family, const Vector& y, const Vector& mu);

} // namespace selinf
