#include "selinf/bootstrap.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "selinf/parallel.hpp"
#include "selinf/stats.hpp"

namespace selinf {

namespace {

// Stream tags mixed into replicate seeds so resampling and CV fold draws
// never share a generator state.
constexpr std::uint64_t kCvStream = 0x63763a666f6c6473ULL;

std::vector<Index> draw_rows(Index n, Rng& rng)
{
    std::vector<Index> idx(static_cast<std::size_t>(n));
    const auto un = static_cast<std::uint64_t>(n);
    for (auto& i : idx)
        i = static_cast<Index>(rng() % un);
    return idx;
}

bool is_constant(const auto& v)
{
    return v.size() == 0 || (v.array() == v(0)).all();
}

std::vector<std::string> resolve_names(const BootstrapConfig& config, Index p, bool intercept)
{
    if (!config.term_names.empty()) {
        const auto expected = static_cast<std::size_t>(p + (intercept ? 1 : 0));
        if (config.term_names.size() != expected)
            throw Error(ErrorKind::dimension_mismatch, "term name count does not match the coefficient vector");
        return config.term_names;
    }
    return default_term_names(static_cast<std::size_t>(p), intercept);
}

void check_inputs(const Matrix& X, const Vector& y)
{
    if (X.rows() != y.size())
        throw Error(ErrorKind::dimension_mismatch, "design rows must match response length");
    if (X.rows() < 2)
        throw Error(ErrorKind::invalid_argument, "at least two observations are required");
}

double resolved_lambda2(const BootstrapConfig& config, Index n)
{
    return config.ridge_lambda2 > 0.0 ? config.ridge_lambda2 : 1.0 / static_cast<double>(n);
}

// Paired resample honouring the degenerate-column retry rule. Returns the
// seed actually used.
struct PairedSample
{
    Matrix X;
    Vector y;
    std::uint64_t seed = 0;
    int retries = 0;
};

class PairedSampler
{
public:
    PairedSampler(const Matrix& X, const Vector& y, int max_retries)
        : X_(X), y_(y), max_retries_(max_retries)
    {
        varying_.resize(static_cast<std::size_t>(X.cols()));
        for (Index j = 0; j < X.cols(); ++j)
            varying_[static_cast<std::size_t>(j)] = !is_constant(X.col(j));
        y_varies_ = !is_constant(y);
    }

    template <typename Accept>
    PairedSample draw(int replicate, std::uint64_t base_seed, Accept&& accept) const
    {
        PairedSample s;
        for (int attempt = 0; attempt <= max_retries_; ++attempt) {
            s.seed = attempt == 0 ? base_seed : derive_seed(base_seed, static_cast<std::uint64_t>(attempt));
            Rng rng(s.seed);
            const auto idx = draw_rows(y_.size(), rng);
            s.X = X_(idx, Eigen::all);
            s.y = y_(idx);
            if (!degenerate(s) && accept(s))
                return s;
            ++s.retries;
        }
        throw ReplicateFailure(replicate, "replicate " + std::to_string(replicate) + " stayed degenerate after "
                                              + std::to_string(max_retries_) + " retries");
    }

private:
    bool degenerate(const PairedSample& s) const
    {
        if (y_varies_ && is_constant(s.y))
            return true;
        for (Index j = 0; j < s.X.cols(); ++j)
            if (varying_[static_cast<std::size_t>(j)] && is_constant(s.X.col(j)))
                return true;
        return false;
    }

    const Matrix& X_;
    const Vector& y_;
    int max_retries_;
    std::vector<bool> varying_;
    bool y_varies_ = true;
};

struct ReplicateOut
{
    Vector coef;
    int retries = 0;
    long long fits = 0;
    Index clamped = 0;
};

template <typename Body>
std::vector<ReplicateOut> run_replicates(const BootstrapConfig& config, Body&& body)
{
    std::vector<ReplicateOut> out(static_cast<std::size_t>(config.replicates));
    parallel_for(out.size(), config.workers, [&](std::size_t b) {
        out[b] = body(static_cast<int>(b), derive_seed(config.master_seed, b));
    });
    return out;
}

Matrix stack_draws(const std::vector<ReplicateOut>& reps)
{
    const Index q = reps.empty() ? 0 : reps.front().coef.size();
    Matrix draws(static_cast<Index>(reps.size()), q);
    for (std::size_t b = 0; b < reps.size(); ++b)
        draws.row(static_cast<Index>(b)) = reps[b].coef.transpose();
    return draws;
}

// Chooses lambda for one paired replicate; returns -1 when the replicate
// cannot be cross-validated (treated as degenerate by the caller).
double replicate_lambda(const PairedSample& s, const Family& family, const BootstrapConfig& config,
                        const CvResult& cv, long long& fits)
{
    if (config.lambda_mode == LambdaMode::fixed)
        return cv.best_lambda;
    try {
        const CvResult r = select_lambda(s.X, s.y, family, config.cv_folds, config.n_lambda, config.lambda_ratio,
                                         derive_seed(s.seed, kCvStream), config.solver);
        fits += static_cast<long long>(config.cv_folds) * config.n_lambda;
        return r.best_lambda;
    } catch (const FoldDegeneracy&) {
        return -1.0;
    }
}

Vector residuals_of_type(ResidualType type, const Family& family, const Vector& y, const Vector& mu)
{
    switch (type) {
    case ResidualType::pearson: return pearson_residuals(family, y, mu);
    case ResidualType::deviance: return deviance_residuals(family, y, mu);
    case ResidualType::anscombe: return anscombe_residuals(family, y, mu);
    }
    return {};
}

BootstrapResult residual_engine(const Matrix& X, const Vector& y, const Family& family,
                                const BootstrapConfig& config, const CvResult& cv, bool linear)
{
    config.validate();
    check_inputs(X, y);
    const Index n = y.size();
    const FitResult fit = fit_penalized_glm(X, y, family, PenaltySpec::lasso(cv.best_lambda), config.solver);

    FitResult tilde = fit;
    tilde.beta = modified_estimator(fit.beta, n, config.a_n_constant, config.threshold);
    const Vector mu = tilde.predict_mean(X, family);

    // scale for the Pearson linearization
    Vector v(n);
    const bool rescale = family.kind == FamilyKind::tweedie && fit.dispersion > 0.0;
    const Family scaled = rescale ? family.with_dispersion(fit.dispersion) : family;
    for (Index i = 0; i < n; ++i)
        v(i) = linear ? 1.0 : unit::pearson_scale(scaled) * unit::variance(scaled, mu(i));
    const Vector raw = linear ? Vector(y - mu) : pearson_residuals(scaled, y, mu);
    const Vector e = center_residuals(raw);

    BootstrapResult res;
    res.lambda = cv.best_lambda;
    res.point = fit.coefficients();
    res.modified = tilde.coefficients();
    res.residuals = linear ? raw : residuals_of_type(config.residual_type, scaled, y, mu);

    const bool nonneg = !linear && family.nonnegative_response();
    auto reps = run_replicates(config, [&](int, std::uint64_t seed) {
        Rng rng(seed);
        const auto idx = draw_rows(n, rng);
        ReplicateOut r;
        const Vector y_star = reconstruct_response(mu, v, e(idx), nonneg, &r.clamped);
        const FitResult f =
            fit_penalized_glm(X, y_star, family, PenaltySpec::lasso(cv.best_lambda), config.solver, &fit);
        r.coef = f.coefficients();
        r.fits = 1;
        return r;
    });
    res.draws = stack_draws(reps);
    Index clamped = 0;
    for (const auto& r : reps) {
        clamped += r.clamped;
        res.total_fits += r.fits;
    }
    res.clamp_fraction = static_cast<double>(clamped) / static_cast<double>(n * config.replicates);
    res.clamp_flagged = res.clamp_fraction > kClampFlagFraction;
    res.intervals = intervals_from_draws(res.draws, res.point, res.modified, config.level, config.ci_variant,
                                         CiMethod::resid_boot, resolve_names(config, X.cols(), fit.has_intercept));
    return res;
}

} // namespace

void BootstrapConfig::validate() const
{
    if (replicates < 2)
        throw Error(ErrorKind::config, "at least two bootstrap replicates are required");
    if (!(level > 0.0 && level < 1.0))
        throw Error(ErrorKind::config, "level must lie in (0, 1)");
    if (!(a_n_constant >= 0.0))
        throw Error(ErrorKind::config, "a_n constant must be nonnegative");
    if (max_retries < 0)
        throw Error(ErrorKind::config, "max_retries must be nonnegative");
    if (ridge_lambda2 < 0.0)
        throw Error(ErrorKind::config, "ridge lambda2 must be nonnegative");
    if (strict_quantiles)
        check_quantile_support(replicates, level);
}

double threshold_sequence(Index n, double a_n_constant)
{
    if (n < 2)
        throw Error(ErrorKind::invalid_argument, "threshold sequence needs n >= 2");
    return a_n_constant * std::pow(static_cast<double>(n), -0.25);
}

Vector modified_estimator(const Vector& beta_hat, Index n, double a_n_constant, ThresholdRule rule)
{
    const double a_n = threshold_sequence(n, a_n_constant);
    Vector out = beta_hat;
    for (Index j = 0; j < out.size(); ++j) {
        const double m = std::abs(beta_hat(j));
        const bool zero = rule == ThresholdRule::zero_small ? m <= a_n : m >= a_n;
        if (zero)
            out(j) = 0.0;
    }
    return out;
}

Vector center_residuals(const Vector& residuals)
{
    if (residuals.size() == 0)
        return residuals;
    return residuals.array() - residuals.mean();
}

Vector reconstruct_response(const Vector& mu, const Vector& v, const Vector& e_star, bool nonnegative,
                            Index* clamped)
{
    if (mu.size() != v.size() || mu.size() != e_star.size())
        throw Error(ErrorKind::dimension_mismatch, "reconstruct_response: length mismatch");
    Vector y = v.cwiseSqrt().cwiseProduct(e_star) + mu;
    Index count = 0;
    if (nonnegative) {
        for (Index i = 0; i < y.size(); ++i) {
            if (y(i) < 0.0) {
                y(i) = 0.0;
                ++count;
            }
        }
    }
    if (clamped)
        *clamped = count;
    return y;
}

void check_quantile_support(int replicates, double level)
{
    if (static_cast<double>(replicates) * (1.0 - level) / 2.0 < 1.0)
        throw Error(ErrorKind::config, "B * alpha / 2 < 1: " + std::to_string(replicates)
                                           + " replicates cannot support a " + std::to_string(level)
                                           + " interval");
}

std::pair<double, double> percentile_interval(std::span<const double> draws, double level, BracketVariant variant,
                                              double point, double modified)
{
    if (draws.empty())
        throw Error(ErrorKind::invalid_argument, "percentile interval of an empty draw set");
    if (!(level > 0.0 && level < 1.0))
        throw Error(ErrorKind::invalid_argument, "level must lie in (0, 1)");
    std::vector<double> sorted(draws.begin(), draws.end());
    std::sort(sorted.begin(), sorted.end());
    const double alpha = 1.0 - level;
    const double q_lo = quantile_type7(sorted, alpha / 2.0);
    const double q_hi = quantile_type7(sorted, 1.0 - alpha / 2.0);
    switch (variant) {
    case BracketVariant::hybrid: return {point + modified - q_hi, point + modified - q_lo};
    case BracketVariant::basic: return {2.0 * point - q_hi, 2.0 * point - q_lo};
    case BracketVariant::percentile: return {q_lo, q_hi};
    }
    return {q_lo, q_hi};
}

IntervalTable intervals_from_draws(const Matrix& draws, const Vector& point, const Vector& modified, double level,
                                   BracketVariant variant, CiMethod method, const std::vector<std::string>& names)
{
    const Index q = draws.cols();
    if (point.size() != q || modified.size() != q || static_cast<Index>(names.size()) != q)
        throw Error(ErrorKind::dimension_mismatch, "intervals_from_draws: inconsistent coefficient counts");
    if (!draws.allFinite())
        throw Error(ErrorKind::numeric_overflow, "bootstrap draws contain non-finite values");
    IntervalTable table;
    table.method = method;
    table.level = level;
    std::vector<double> col(static_cast<std::size_t>(draws.rows()));
    for (Index j = 0; j < q; ++j) {
        for (Index b = 0; b < draws.rows(); ++b)
            col[static_cast<std::size_t>(b)] = draws(b, j);
        const auto [lo, hi] = percentile_interval(col, level, variant, point(j), modified(j));
        table.rows.push_back({names[static_cast<std::size_t>(j)], point(j), lo, hi});
    }
    return table;
}

CvResult select_lambda(const Matrix& X, const Vector& y, const Family& family, int folds, int n_lambda,
                       double ratio, std::uint64_t seed, const SolverConfig& solver)
{
    const Vector grid = lambda_path(X, y, family, n_lambda, ratio, {}, solver);
    CvOptions opt;
    opt.folds = folds;
    opt.seed = seed;
    opt.solver = solver;
    return cross_validate(X, y, family, grid, opt);
}

FitResult lasso_partial_ridge(const Matrix& X, const Vector& y, const Family& family, double lambda1,
                              double lambda2, const SolverConfig& solver)
{
    const FitResult lasso = fit_penalized_glm(X, y, family, PenaltySpec::lasso(lambda1), solver);
    PenaltySpec ridge;
    ridge.lambda1 = 0.0;
    ridge.lambda2 = lambda2;
    ridge.factors = (lasso.beta.array() == 0.0).cast<double>().matrix();
    return fit_penalized_glm(X, y, family, ridge, solver, &lasso);
}

BootstrapResult residual_bootstrap_lm(const Matrix& X, const Vector& y, const BootstrapConfig& config,
                                      const CvResult& cv)
{
    return residual_engine(X, y, Family::gaussian(), config, cv, true);
}

BootstrapResult residual_bootstrap_glm(const Matrix& X, const Vector& y, const Family& family,
                                       const BootstrapConfig& config, const CvResult& cv)
{
    if (family.kind == FamilyKind::gaussian)
        throw Error(ErrorKind::unsupported_family, "use residual_bootstrap_lm for the gaussian family");
    return residual_engine(X, y, family, config, cv, false);
}

BootstrapResult paired_bootstrap_glm(const Matrix& X, const Vector& y, const Family& family,
                                     const BootstrapConfig& config, const CvResult& cv)
{
    config.validate();
    check_inputs(X, y);
    const FitResult full = fit_penalized_glm(X, y, family, PenaltySpec::lasso(cv.best_lambda), config.solver);
    const PairedSampler sampler(X, y, config.max_retries);

    auto reps = run_replicates(config, [&](int b, std::uint64_t seed) {
        ReplicateOut r;
        double lambda = cv.best_lambda;
        const PairedSample s = sampler.draw(b, seed, [&](const PairedSample& cand) {
            lambda = replicate_lambda(cand, family, config, cv, r.fits);
            return lambda >= 0.0;
        });
        r.retries = s.retries;
        const FitResult f = fit_penalized_glm(s.X, s.y, family, PenaltySpec::lasso(lambda), config.solver, &full);
        r.coef = f.coefficients();
        ++r.fits;
        return r;
    });

    BootstrapResult res;
    res.lambda = cv.best_lambda;
    res.point = full.coefficients();
    res.modified = res.point;
    res.draws = stack_draws(reps);
    for (const auto& r : reps) {
        res.retries += r.retries;
        res.total_fits += r.fits;
    }
    res.intervals = intervals_from_draws(res.draws, res.point, res.modified, config.level, BracketVariant::percentile,
                                         CiMethod::paired_boot, resolve_names(config, X.cols(), full.has_intercept));
    return res;
}

BootstrapResult plr_glm(const Matrix& X, const Vector& y, const Family& family, const BootstrapConfig& config,
                        const CvResult& cv)
{
    config.validate();
    check_inputs(X, y);
    const double lambda2 = resolved_lambda2(config, y.size());
    const FitResult full = lasso_partial_ridge(X, y, family, cv.best_lambda, lambda2, config.solver);
    const PairedSampler sampler(X, y, config.max_retries);

    auto reps = run_replicates(config, [&](int b, std::uint64_t seed) {
        ReplicateOut r;
        double lambda = cv.best_lambda;
        const PairedSample s = sampler.draw(b, seed, [&](const PairedSample& cand) {
            lambda = replicate_lambda(cand, family, config, cv, r.fits);
            return lambda >= 0.0;
        });
        r.retries = s.retries;
        const FitResult f = lasso_partial_ridge(s.X, s.y, family, lambda, lambda2, config.solver);
        r.coef = f.coefficients();
        r.fits += 2;
        return r;
    });

    BootstrapResult res;
    res.lambda = cv.best_lambda;
    res.point = full.coefficients();
    res.modified = res.point;
    res.draws = stack_draws(reps);
    for (const auto& r : reps) {
        res.retries += r.retries;
        res.total_fits += r.fits;
    }
    res.intervals = intervals_from_draws(res.draws, res.point, res.modified, config.level, BracketVariant::percentile,
                                         CiMethod::plr, resolve_names(config, X.cols(), full.has_intercept));
    return res;
}

} // namespace selinf
