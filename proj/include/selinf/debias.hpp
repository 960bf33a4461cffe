#pragma once

#include <optional>
#include <string>
#include <vector>

#include "selinf/intervals.hpp"
#include "selinf/solver.hpp"

namespace selinf {

enum class ThetaMethod { nodewise, direct };

struct PrecisionEstimate
{
    Matrix theta;
    ThetaMethod method = ThetaMethod::direct;
    Vector tau_sq;
    Vector lambda_js;
};

struct DebiasResult
{
    Vector b;        // de-biased point estimates
    Vector variance; // per-coordinate variance of b
    IntervalTable intervals;
    std::optional<Matrix> m_matrix;
};

struct UColumnOptions
{
    int max_sweeps = 20000;
    double tol = 1e-12;
};

// Minimizes u' S u subject to |S u - e_j|_inf <= mu, through the equivalent
// penalized problem 0.5 u' S u - u_j + mu |u|_1.
Vector solve_u_column(const Matrix& sigma_hat, Index j, double mu, const UColumnOptions& options = {});

// Rows are the u_j of solve_u_column.
Matrix estimate_m_matrix(const Matrix& sigma_hat, double mu, const UColumnOptions& options = {});

// sqrt(log p / n)
double default_u_slack(Index n, Index p);

// sqrt(RSS / (n - |active| - intercept)) of a Gaussian fit.
double residual_sigma(const FitResult& fit, const Matrix& X, const Vector& y);

// De-biased lasso for the linear model: b = beta + M X'(y - X beta)/n on the
// (centered, when the fit has an intercept) design, V_j = sigma^2 u_j' S u_j / n.
// Only the slope coefficients are corrected.
DebiasResult debias_lm(const FitResult& fit, const Matrix& X, const Vector& y, double mu, double sigma_eps_hat,
                       double level = 0.95);
DebiasResult debias_lm_with_m(const FitResult& fit, const Matrix& X, const Vector& y, const Matrix& M,
                              double sigma_eps_hat, double level = 0.95);

// [1 X]
Matrix with_intercept_column(const Matrix& X);

// Rows of X scaled by sqrt(w_i), w the expected information at the fitted
// mean, so that Xw' Xw / n is the Hessian of the mean loss. With
// `with_intercept` the ones column is prepended before scaling.
Matrix weighted_design(const Matrix& X, const FitResult& fit, const Family& family, bool with_intercept = false);

PrecisionEstimate nodewise_theta(const Matrix& Xw, const Vector& lambda_js);
// One lambda for every column regression, chosen by 5-fold CV of column
// `column` on the others.
double select_nodewise_lambda(const Matrix& Xw, Index column = 0, std::uint64_t seed = 1);

inline constexpr double kMaxCondition = 1e12;

PrecisionEstimate direct_theta(const Matrix& Xw);
PrecisionEstimate direct_theta_from_sigma(const Matrix& sigma_hat);

enum class GlmVariance {
    model,    // phi * (Theta S Theta')_jj / n
    sandwich, // (Theta C Theta')_jj / n, C the empirical second moment of the scores
};

struct DebiasGlmOptions
{
    double level = 0.95;
    GlmVariance variance = GlmVariance::model;
    std::vector<std::string> term_names; // defaults to default_term_names
};

// b = beta - Theta grad(beta). When the fit has an intercept, theta must be
// built from with_intercept_column(X) and the intercept is de-biased too.
DebiasResult debias_glm(const FitResult& fit, const Matrix& X, const Vector& y, const Family& family,
                        const PrecisionEstimate& theta, const DebiasGlmOptions& options = {});

} // namespace selinf
