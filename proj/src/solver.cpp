#include "selinf/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <sstream>

#include "selinf/stats.hpp"

namespace selinf {

namespace {

std::mutex audit_mutex;
KktAudit audit_state;

void record_audit(bool converged, const KktReport& report)
{
    std::lock_guard lock(audit_mutex);
    if (!converged) {
        ++audit_state.nonconverged_fits;
        return;
    }
    ++audit_state.converged_fits;
    if (!report.ok())
        ++audit_state.failures;
    if (report.tolerance > 0)
        audit_state.worst_ratio = std::max(audit_state.worst_ratio, report.max_violation / report.tolerance);
}

void check_finite(const Matrix& X, const Vector& y)
{
    if (!X.allFinite())
        throw Error(ErrorKind::input_validation, "design matrix contains NaN or infinite values");
    if (!y.allFinite())
        throw Error(ErrorKind::input_validation, "response contains NaN or infinite values");
}

Vector resolved_factors(const PenaltySpec& penalty, Index p)
{
    if (penalty.factors.size() == 0)
        return Vector::Ones(p);
    if (penalty.factors.size() != p)
        throw Error(ErrorKind::dimension_mismatch, "penalty factors must have one entry per column");
    if ((penalty.factors.array() < 0).any() || !penalty.factors.allFinite())
        throw Error(ErrorKind::invalid_argument, "penalty factors must be finite and nonnegative");
    return penalty.factors;
}

void validate_penalty(const PenaltySpec& penalty)
{
    if (!(penalty.lambda1 >= 0) || std::isnan(penalty.lambda1))
        throw Error(ErrorKind::invalid_argument, "lambda1 must be nonnegative");
    if (!(penalty.lambda2 >= 0) || !std::isfinite(penalty.lambda2))
        throw Error(ErrorKind::invalid_argument, "lambda2 must be finite and nonnegative");
}

// Centered (when an intercept is fitted) and scaled copy of X.
struct Design
{
    Matrix Z;
    Vector center;
    Vector scale;
    bool intercept = true;
};

Design prepare_design(const Matrix& X, const SolverConfig& config)
{
    Design d;
    const Index n = X.rows();
    const Index p = X.cols();
    d.intercept = config.fit_intercept;
    d.center = config.fit_intercept ? Vector(X.colwise().mean().transpose()) : Vector::Zero(p);
    d.scale = Vector::Ones(p);
    d.Z = X.rowwise() - d.center.transpose();
    if (config.standardize) {
        for (Index j = 0; j < p; ++j) {
            const double s = std::sqrt(d.Z.col(j).squaredNorm() / static_cast<double>(n));
            if (s > 1e-12 * (1.0 + std::abs(d.center(j))))
                d.scale(j) = s;
        }
        for (Index j = 0; j < p; ++j)
            d.Z.col(j) /= d.scale(j);
    }
    return d;
}

// Per-observation loss without the terms that depend on y alone; differences
// match neg_log_lik exactly, which is all the line search needs.
double kernel_loss(const Family& f, double y, double eta)
{
    switch (f.kind) {
    case FamilyKind::gaussian: return 0.5 * (y - eta) * (y - eta);
    case FamilyKind::poisson: return std::exp(eta) - y * eta;
    case FamilyKind::negbin: {
        const double lt = std::log(f.size + std::exp(eta));
        return f.size * lt + y * (lt - eta);
    }
    case FamilyKind::tweedie: return unit::loss(f, y, eta);
    }
    return 0.0;
}

struct Coefs
{
    double b0 = 0.0;
    Vector b;
};

struct Weights
{
    Vector l1; // per-coordinate l1 threshold, standardized scale
    Vector l2; // per-coordinate ridge weight, standardized scale
};

Weights std_weights(const PenaltySpec& penalty, const Vector& factors)
{
    Weights w;
    const Index p = factors.size();
    w.l1.resize(p);
    w.l2.resize(p);
    for (Index j = 0; j < p; ++j) {
        w.l1(j) = factors(j) == 0.0 ? 0.0 : penalty.lambda1 * factors(j);
        w.l2(j) = factors(j) == 0.0 ? 0.0 : penalty.lambda2 * factors(j);
    }
    return w;
}

class IrlsSolver
{
public:
    IrlsSolver(const Design& d, const Vector& y, const Family& f, const Weights& w, const SolverConfig& c)
        : d_(d), y_(y), f_(f), w_(w), c_(c), n_(static_cast<double>(y.size()))
    {}

    double objective(const Vector& eta, const Vector& b, bool& clamped) const
    {
        double total = 0.0;
        for (Index i = 0; i < eta.size(); ++i) {
            const double e = f_.link == Link::log ? unit::clamp_eta(eta(i), clamped) : eta(i);
            total += kernel_loss(f_, y_(i), e);
        }
        if (!std::isfinite(total))
            throw NumericOverflow(-1, "non-finite loss during fitting");
        double pen = 0.0;
        for (Index j = 0; j < b.size(); ++j) {
            if (b(j) == 0.0)
                continue;
            pen += w_.l1(j) * std::abs(b(j)) + w_.l2(j) * b(j) * b(j);
        }
        return total / n_ + pen;
    }

    Vector linear_predictor(const Coefs& c) const
    {
        Vector eta = d_.Z * c.b;
        eta.array() += c.b0;
        return eta;
    }

    // One penalized weighted least-squares solve by cyclic coordinate descent,
    // starting from `c`; false when the sweep budget ran out first.
    bool solve_quadratic(const Vector& wts, const Vector& z, Coefs& c) const
    {
        const Index p = d_.Z.cols();
        const double sw = wts.sum();
        Vector xwx(p);
        for (Index j = 0; j < p; ++j)
            xwx(j) = wts.dot(d_.Z.col(j).cwiseAbs2()) / n_;
        Vector wr = wts.cwiseProduct(z - linear_predictor(c));

        auto update = [&](Index j) {
            if (xwx(j) <= 0.0)
                return 0.0;
            const double old = c.b(j);
            const double u = d_.Z.col(j).dot(wr) / n_ + xwx(j) * old;
            const double nb = soft_threshold(u, w_.l1(j)) / (xwx(j) + 2.0 * w_.l2(j));
            const double delta = nb - old;
            if (delta != 0.0) {
                c.b(j) = nb;
                wr.noalias() -= delta * wts.cwiseProduct(d_.Z.col(j));
            }
            return std::abs(delta);
        };
        auto update_intercept = [&] {
            if (!d_.intercept || sw <= 0.0)
                return 0.0;
            const double delta = wr.sum() / sw;
            c.b0 += delta;
            wr.noalias() -= delta * wts;
            return std::abs(delta);
        };

        int sweeps = 0;
        std::vector<Index> active;
        while (sweeps < c_.max_sweeps) {
            double change = update_intercept();
            for (Index j = 0; j < p; ++j)
                change = std::max(change, update(j));
            ++sweeps;
            if (change < c_.inner_tol)
                return true;
            active.clear();
            for (Index j = 0; j < p; ++j)
                if (c.b(j) != 0.0)
                    active.push_back(j);
            while (sweeps < c_.max_sweeps) {
                double inner = update_intercept();
                for (Index j : active)
                    inner = std::max(inner, update(j));
                ++sweeps;
                if (inner < c_.inner_tol)
                    break;
            }
        }
        return false;
    }

    struct Outcome
    {
        Coefs coefs;
        int iterations = 0;
        bool converged = false;
        bool clamped = false;
        std::vector<double> trace;
    };

    template <typename KktCheck>
    Outcome run(Coefs start, KktCheck&& kkt_ok) const
    {
        Outcome out;
        Coefs cur = std::move(start);
        Vector eta = linear_predictor(cur);
        double obj = objective(eta, cur.b, out.clamped);
        out.trace.push_back(obj);
        const bool exact = f_.kind == FamilyKind::gaussian;
        const Index n = y_.size();
        Vector wts(n), z(n);

        for (int it = 1; it <= c_.max_irls; ++it) {
            out.iterations = it;
            if (exact) {
                wts.setOnes();
                z = y_;
            } else {
                for (Index i = 0; i < n; ++i) {
                    const double e = unit::clamp_eta(eta(i), out.clamped);
                    const double mu = std::exp(e);
                    double w = c_.weights == WorkingWeights::observed ? unit::observed_weight(f_, y_(i), e) : 0.0;
                    if (!(w > 0.0) || !std::isfinite(w))
                        w = unit::fisher_weight(f_, mu);
                    wts(i) = std::max(w, std::numeric_limits<double>::min());
                    z(i) = eta(i) - unit::gradient(f_, y_(i), e) / wts(i);
                }
            }
            Coefs next = cur;
            const bool solved = solve_quadratic(wts, z, next);

            // step halving keeps the objective non-increasing
            Vector next_eta = linear_predictor(next);
            double next_obj = objective(next_eta, next.b, out.clamped);
            const double slack = 1e-12 * std::max(1.0, std::abs(obj));
            int halvings = 0;
            while (next_obj > obj + slack && halvings < 40) {
                next.b0 = 0.5 * (next.b0 + cur.b0);
                next.b = 0.5 * (next.b + cur.b);
                next_eta = linear_predictor(next);
                next_obj = objective(next_eta, next.b, out.clamped);
                ++halvings;
            }
            if (next_obj > obj + slack) {
                // no descent direction left at working precision
                out.converged = kkt_ok(cur);
                break;
            }
            double change = std::abs(next.b0 - cur.b0);
            for (Index j = 0; j < cur.b.size(); ++j)
                change = std::max(change, std::abs(next.b(j) - cur.b(j)));
            cur = std::move(next);
            eta = std::move(next_eta);
            obj = next_obj;
            out.trace.push_back(obj);
            // an unfinished inner solve continues from here on the next pass
            if (solved && (exact || change < c_.tol) && kkt_ok(cur)) {
                out.converged = true;
                break;
            }
        }
        for (std::size_t k = 1; k < out.trace.size(); ++k) {
            if (out.trace[k] > out.trace[k - 1] + 1e-12 * std::max(1.0, std::abs(out.trace[k - 1]))) {
                std::ostringstream dump;
                dump << "objective increased across IRLS iterations:";
                for (double v : out.trace)
                    dump << ' ' << v;
                throw Error(ErrorKind::diverged, dump.str());
            }
        }
        out.coefs = std::move(cur);
        return out;
    }

private:
    const Design& d_;
    const Vector& y_;
    const Family& f_;
    const Weights& w_;
    const SolverConfig& c_;
    double n_;
};

Coefs to_standard(const FitResult& fit, const Design& d)
{
    Coefs c;
    c.b = fit.beta.cwiseProduct(d.scale);
    c.b0 = (d.intercept ? fit.intercept : 0.0) + d.center.dot(fit.beta);
    return c;
}

void to_original(const Coefs& c, const Design& d, FitResult& fit)
{
    fit.beta = c.b.cwiseQuotient(d.scale);
    fit.intercept = d.intercept ? c.b0 - d.center.dot(fit.beta) : 0.0;
    fit.has_intercept = d.intercept;
}

Coefs initial_coefs(const Design& d, const Vector& y, const Family& f)
{
    Coefs c;
    c.b = Vector::Zero(d.Z.cols());
    if (d.intercept) {
        const double ybar = y.mean();
        if (f.link == Link::log) {
            if (!(ybar > 0.0))
                throw Error(ErrorKind::domain, "response is identically zero; log-link intercept diverges");
            c.b0 = std::log(ybar);
        } else {
            c.b0 = ybar;
        }
    }
    return c;
}

// Shared state for repeated fits on one design.
struct Problem
{
    const Matrix& X;
    const Vector& y;
    const Family& family;
    SolverConfig config;
    Design design;
    Vector factors;
    double kkt_scale = 1.0; // max(1, |grad at zero|_inf)
};

double gradient_scale_at_zero(const Matrix& X, const Vector& y, const Family& f, bool intercept)
{
    Vector g(y.size());
    for (Index i = 0; i < y.size(); ++i)
        g(i) = unit::gradient(f, y(i), 0.0);
    const double n = static_cast<double>(y.size());
    double m = (X.transpose() * g).cwiseAbs().maxCoeff() / n;
    if (X.cols() == 0)
        m = 0.0;
    if (intercept)
        m = std::max(m, std::abs(g.sum()) / n);
    return std::max(1.0, m);
}

Problem make_problem(const Matrix& X, const Vector& y, const Family& family, const PenaltySpec& base,
                     const SolverConfig& config)
{
    family.validate();
    if (X.rows() != y.size())
        throw Error(ErrorKind::dimension_mismatch, "design rows must match response length");
    if (y.size() < 2)
        throw Error(ErrorKind::invalid_argument, "at least two observations are required");
    check_finite(X, y);
    detail::check_response(family, y);
    Problem prob{X, y, family, config, prepare_design(X, config), resolved_factors(base, X.cols()), 1.0};
    prob.kkt_scale = gradient_scale_at_zero(X, y, family, config.fit_intercept);
    return prob;
}

void fill_effective_weights(FitResult& fit, const PenaltySpec& penalty, const Vector& factors, const Vector& scale)
{
    const Index p = factors.size();
    fit.l1_weights.resize(p);
    fit.l2_weights.resize(p);
    for (Index j = 0; j < p; ++j) {
        fit.l1_weights(j) = factors(j) == 0.0 ? 0.0 : penalty.lambda1 * factors(j) * scale(j);
        fit.l2_weights(j) = factors(j) == 0.0 ? 0.0 : penalty.lambda2 * factors(j) * scale(j) * scale(j);
    }
}

KktReport kkt_with_scale(const Matrix& X, const Vector& y, const Family& family, const FitResult& fit,
                         double rel_tol, double grad_scale)
{
    const Index n = y.size();
    const Vector eta = fit.predict_eta(X);
    Vector g(n);
    bool clamped = false;
    for (Index i = 0; i < n; ++i) {
        const double e = family.link == Link::log ? unit::clamp_eta(eta(i), clamped) : eta(i);
        g(i) = unit::gradient(family, y(i), e);
    }
    const Vector grad = X.transpose() * g / static_cast<double>(n);
    KktReport r;
    r.tolerance = rel_tol * grad_scale;
    if (fit.has_intercept)
        r.max_violation = std::abs(g.sum()) / static_cast<double>(n);
    for (Index j = 0; j < X.cols(); ++j) {
        const double bj = fit.beta(j);
        const double l1 = fit.l1_weights(j);
        double v;
        if (bj != 0.0)
            v = std::abs(grad(j) + 2.0 * fit.l2_weights(j) * bj + l1 * (bj > 0 ? 1.0 : -1.0));
        else
            v = std::max(0.0, std::abs(grad(j)) - l1);
        r.max_violation = std::max(r.max_violation, v);
    }
    return r;
}

FitResult fit_on_problem(const Problem& prob, const PenaltySpec& penalty, const Coefs& start)
{
    validate_penalty(penalty);
    const Weights w = std_weights(penalty, prob.factors);
    IrlsSolver solver(prob.design, prob.y, prob.family, w, prob.config);

    FitResult fit;
    fit.penalty = penalty;
    fit.penalty.factors = prob.factors;
    fill_effective_weights(fit, penalty, prob.factors, prob.design.scale);
    KktReport last;
    auto kkt_ok = [&](const Coefs& c) {
        to_original(c, prob.design, fit);
        last = kkt_with_scale(prob.X, prob.y, prob.family, fit, prob.config.kkt_rel_tol, prob.kkt_scale);
        return last.ok();
    };
    auto out = solver.run(start, kkt_ok);
    to_original(out.coefs, prob.design, fit);
    last = kkt_with_scale(prob.X, prob.y, prob.family, fit, prob.config.kkt_rel_tol, prob.kkt_scale);

    fit.n_iterations = out.iterations;
    fit.converged = out.converged && last.ok();
    fit.clamped = out.clamped;
    fit.objective_trace = std::move(out.trace);
    fit.kkt_violation = last.max_violation;
    fit.kkt_tolerance = last.tolerance;
    for (Index j = 0; j < fit.beta.size(); ++j)
        if (fit.beta(j) != 0.0)
            fit.active_set.push_back(j);
    fit.objective = penalized_objective(prob.X, prob.y, prob.family, fit);

    const Index df = static_cast<Index>(fit.active_set.size()) + (fit.has_intercept ? 1 : 0);
    fit.dispersion = prob.family.dispersion;
    if (prob.family.kind == FamilyKind::poisson) {
        fit.dispersion = 1.0;
    } else if (prob.y.size() > df) {
        const Vector mu = fit.predict_mean(prob.X, prob.family);
        fit.dispersion = estimate_dispersion(prob.family, prob.y, mu, df);
    }
    record_audit(fit.converged, last);
    return fit;
}

// Gradient of the mean loss on the standardized scale at the fit that keeps
// every penalized coefficient at zero.
Vector null_std_gradient(const Problem& prob, const PenaltySpec& base)
{
    PenaltySpec null_pen = base;
    null_pen.lambda1 = std::numeric_limits<double>::infinity();
    const Weights w = std_weights(null_pen, prob.factors);
    IrlsSolver solver(prob.design, prob.y, prob.family, w, prob.config);
    auto out = solver.run(initial_coefs(prob.design, prob.y, prob.family), [](const Coefs&) { return true; });
    const Vector eta = solver.linear_predictor(out.coefs);
    Vector g(eta.size());
    bool clamped = false;
    for (Index i = 0; i < eta.size(); ++i) {
        const double e = prob.family.link == Link::log ? unit::clamp_eta(eta(i), clamped) : eta(i);
        g(i) = unit::gradient(prob.family, prob.y(i), e);
    }
    return prob.design.Z.transpose() * g / static_cast<double>(eta.size());
}

double lambda_max_on_problem(const Problem& prob, const PenaltySpec& base)
{
    const Vector g = null_std_gradient(prob, base);
    double lmax = 0.0;
    for (Index j = 0; j < g.size(); ++j)
        if (prob.factors(j) > 0.0)
            lmax = std::max(lmax, std::abs(g(j)) / prob.factors(j));
    return lmax;
}

void check_nondegenerate(const Vector& y)
{
    if (y.size() < 2 || (y.array() == y(0)).all())
        throw Error(ErrorKind::domain, "response has zero variance");
}

} // namespace

KktAudit kkt_audit()
{
    std::lock_guard lock(audit_mutex);
    return audit_state;
}

double soft_threshold(double z, double gamma)
{
    if (z > gamma)
        return z - gamma;
    if (z < -gamma)
        return z + gamma;
    return 0.0;
}

Vector FitResult::predict_eta(const Matrix& X) const
{
    if (X.cols() != beta.size())
        throw Error(ErrorKind::dimension_mismatch, "design columns must match coefficient length");
    Vector eta = X * beta;
    eta.array() += has_intercept ? intercept : 0.0;
    return eta;
}

Vector FitResult::predict_mean(const Matrix& X, const Family& family) const
{
    Vector eta = predict_eta(X);
    if (family.link == Link::log) {
        bool clamped = false;
        for (Index i = 0; i < eta.size(); ++i)
            eta(i) = std::exp(unit::clamp_eta(eta(i), clamped));
    }
    return eta;
}

Vector FitResult::coefficients() const
{
    if (!has_intercept)
        return beta;
    Vector out(beta.size() + 1);
    out << intercept, beta;
    return out;
}

double penalized_objective(const Matrix& X, const Vector& y, const Family& family, const FitResult& fit)
{
    const Vector eta = fit.predict_eta(X);
    double obj = neg_log_lik(family, y, eta);
    const Index p = fit.beta.size();
    Vector l1 = fit.l1_weights, l2 = fit.l2_weights;
    if (l1.size() != p || l2.size() != p) {
        const Vector f = resolved_factors(fit.penalty, p);
        l1 = fit.penalty.lambda1 * f;
        l2 = fit.penalty.lambda2 * f;
    }
    for (Index j = 0; j < p; ++j)
        if (fit.beta(j) != 0.0)
            obj += l1(j) * std::abs(fit.beta(j)) + l2(j) * fit.beta(j) * fit.beta(j);
    return obj;
}

KktReport kkt_certificate(const Matrix& X, const Vector& y, const Family& family, const FitResult& fit,
                          double rel_tol)
{
    FitResult f = fit;
    const Index p = fit.beta.size();
    if (f.l1_weights.size() != p || f.l2_weights.size() != p) {
        const Vector fac = resolved_factors(fit.penalty, p);
        f.l1_weights = fit.penalty.lambda1 * fac;
        f.l2_weights = fit.penalty.lambda2 * fac;
    }
    return kkt_with_scale(X, y, family, f, rel_tol, gradient_scale_at_zero(X, y, family, fit.has_intercept));
}

FitResult fit_penalized_glm(const Matrix& X, const Vector& y, const Family& family, const PenaltySpec& penalty,
                            const SolverConfig& config, const FitResult* warm_start)
{
    validate_penalty(penalty);
    if (!std::isfinite(penalty.lambda1))
        throw Error(ErrorKind::invalid_argument, "lambda1 must be finite");
    const Problem prob = make_problem(X, y, family, penalty, config);
    Coefs start = initial_coefs(prob.design, y, family);
    if (warm_start && warm_start->beta.size() == X.cols())
        start = to_standard(*warm_start, prob.design);
    return fit_on_problem(prob, penalty, start);
}

std::vector<FitResult> fit_path(const Matrix& X, const Vector& y, const Family& family, const Vector& lambdas,
                                const PenaltySpec& base, const SolverConfig& config)
{
    const Problem prob = make_problem(X, y, family, base, config);
    std::vector<FitResult> path;
    path.reserve(static_cast<std::size_t>(lambdas.size()));
    Coefs start = initial_coefs(prob.design, y, family);
    for (Index k = 0; k < lambdas.size(); ++k) {
        PenaltySpec pen = base;
        pen.lambda1 = lambdas(k);
        if (!std::isfinite(pen.lambda1))
            throw Error(ErrorKind::invalid_argument, "lambda1 must be finite");
        path.push_back(fit_on_problem(prob, pen, start));
        start = to_standard(path.back(), prob.design);
    }
    return path;
}

double lambda_max(const Matrix& X, const Vector& y, const Family& family, const PenaltySpec& base,
                  const SolverConfig& config)
{
    const Problem prob = make_problem(X, y, family, base, config);
    check_nondegenerate(y);
    return lambda_max_on_problem(prob, base);
}

Vector lambda_path(const Matrix& X, const Vector& y, const Family& family, int n_lambda, double ratio,
                   const PenaltySpec& base, const SolverConfig& config)
{
    if (n_lambda < 2)
        throw Error(ErrorKind::invalid_argument, "lambda path needs at least two values");
    if (!(ratio > 0.0 && ratio < 1.0))
        throw Error(ErrorKind::invalid_argument, "lambda ratio must lie in (0, 1)");
    const double lmax = lambda_max(X, y, family, base, config);
    if (!(lmax > 0.0))
        throw Error(ErrorKind::domain, "lambda_max is zero; no penalized coefficient can enter");
    Vector grid(n_lambda);
    const double step = std::log(ratio) / static_cast<double>(n_lambda - 1);
    for (int k = 0; k < n_lambda; ++k)
        grid(k) = lmax * std::exp(step * k);
    grid(n_lambda - 1) = lmax * ratio;
    return grid;
}

std::vector<int> assign_folds(Index n, int folds, std::uint64_t seed)
{
    if (folds < 2)
        throw Error(ErrorKind::invalid_argument, "cross-validation needs at least two folds");
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i)
        labels[static_cast<std::size_t>(i)] = static_cast<int>(i % folds);
    Rng rng(seed);
    // Fisher-Yates with an explicit draw so the order is library-independent
    for (std::size_t i = labels.size(); i > 1; --i) {
        const std::size_t k = static_cast<std::size_t>(rng() % i);
        std::swap(labels[i - 1], labels[k]);
    }
    return labels;
}

double mean_deviance(const Family& family, const Vector& y, const Vector& mu)
{
    detail::check_same_length(y.size(), mu.size(), "mean_deviance");
    double total = 0.0;
    for (Index i = 0; i < y.size(); ++i)
        total += unit::deviance(family, y(i), mu(i));
    return y.size() > 0 ? total / static_cast<double>(y.size()) : 0.0;
}

CvResult cross_validate(const Matrix& X, const Vector& y, const Family& family, const Vector& grid,
                        const CvOptions& options)
{
    const Index n = y.size();
    if (options.folds < 2)
        throw Error(ErrorKind::invalid_argument, "cross-validation needs at least two folds");
    if (n < 2 * static_cast<Index>(options.folds) && options.folds != n)
        throw Error(ErrorKind::invalid_argument, "cross-validation needs n >= 2K");
    if (grid.size() == 0)
        throw Error(ErrorKind::invalid_argument, "empty lambda grid");
    if (X.rows() != n)
        throw Error(ErrorKind::dimension_mismatch, "design rows must match response length");

    CvResult cv;
    cv.lambda_grid = grid;
    cv.fold_assignment = assign_folds(n, options.folds, options.seed);
    const int K = options.folds;
    const Index L = grid.size();
    Matrix fold_loss(K, L);
    Vector loss_sum = Vector::Zero(L);

    for (int k = 0; k < K; ++k) {
        std::vector<Index> train, test;
        for (Index i = 0; i < n; ++i)
            (cv.fold_assignment[static_cast<std::size_t>(i)] == k ? test : train).push_back(i);
        const Matrix Xtr = X(train, Eigen::all);
        const Vector ytr = y(train);
        const Matrix Xte = X(test, Eigen::all);
        const Vector yte = y(test);
        if ((ytr.array() == ytr(0)).all())
            throw FoldDegeneracy(k, "training response of fold " + std::to_string(k) + " has zero variance");
        std::vector<FitResult> path;
        try {
            path = fit_path(Xtr, ytr, family, grid, options.base, options.solver);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::domain)
                throw FoldDegeneracy(k, "fold " + std::to_string(k) + ": " + e.what());
            throw;
        }
        for (Index l = 0; l < L; ++l) {
            const Vector mu = path[static_cast<std::size_t>(l)].predict_mean(Xte, family);
            const double dev = mean_deviance(family, yte, mu);
            fold_loss(k, l) = dev;
            loss_sum(l) += dev * static_cast<double>(yte.size());
        }
    }
    cv.mean_cv_loss = loss_sum / static_cast<double>(n);
    cv.se_cv_loss.resize(L);
    for (Index l = 0; l < L; ++l) {
        const double m = fold_loss.col(l).mean();
        const double var = (fold_loss.col(l).array() - m).square().sum() / std::max(1, K - 1);
        cv.se_cv_loss(l) = std::sqrt(var / K);
    }
    // ties go to the smallest lambda
    Index best = 0;
    for (Index l = 1; l < L; ++l) {
        const bool smaller_lambda = grid(l) < grid(best);
        if (cv.mean_cv_loss(l) < cv.mean_cv_loss(best)
            || (cv.mean_cv_loss(l) == cv.mean_cv_loss(best) && smaller_lambda))
            best = l;
    }
    cv.best_index = best;
    cv.best_lambda = grid(best);
    return cv;
}

} // namespace selinf
