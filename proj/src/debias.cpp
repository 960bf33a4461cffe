#include "selinf/debias.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <limits>

#include "selinf/stats.hpp"

namespace selinf {

namespace {

void check_square_symmetric(const Matrix& S, const char* what)
{
    if (S.rows() != S.cols())
        throw Error(ErrorKind::dimension_mismatch, std::string(what) + ": matrix must be square");
    const double scale = std::max(1.0, S.cwiseAbs().maxCoeff());
    if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw Error(ErrorKind::invalid_argument, std::string(what) + ": matrix must be symmetric");
}

Vector weights_at_fit(const Matrix& X, const FitResult& fit, const Family& family)
{
    const Vector mu = fit.predict_mean(X, family);
    const Vector w = irls_weights(family, mu);
    if (!(w.array() > 0.0).all())
        throw Error(ErrorKind::domain, "nonpositive information weight");
    return w;
}

IntervalTable normal_intervals(const Vector& b, const Vector& variance, double level,
                               const std::vector<std::string>& names)
{
    const double z = normal_critical(level);
    IntervalTable table;
    table.method = CiMethod::debias;
    table.level = level;
    for (Index j = 0; j < b.size(); ++j) {
        const double half = z * std::sqrt(std::max(0.0, variance(j)));
        table.rows.push_back({names[static_cast<std::size_t>(j)], b(j), b(j) - half, b(j) + half});
    }
    return table;
}

SolverConfig nodewise_config()
{
    SolverConfig c;
    c.fit_intercept = false;
    c.standardize = false;
    return c;
}

Matrix drop_column(const Matrix& X, Index j)
{
    Matrix out(X.rows(), X.cols() - 1);
    out.leftCols(j) = X.leftCols(j);
    out.rightCols(X.cols() - j - 1) = X.rightCols(X.cols() - j - 1);
    return out;
}

} // namespace

Vector solve_u_column(const Matrix& sigma_hat, Index j, double mu, const UColumnOptions& options)
{
    check_square_symmetric(sigma_hat, "solve_u_column");
    const Index p = sigma_hat.rows();
    if (j < 0 || j >= p)
        throw Error(ErrorKind::invalid_argument, "column index out of range");
    if (!(mu > 0.0) || !std::isfinite(mu))
        throw Error(ErrorKind::invalid_argument, "constraint slack mu must be positive");

    Vector u = Vector::Zero(p);
    Vector su = Vector::Zero(p); // sigma_hat * u, kept current
    bool diverged = false;
    for (int sweep = 0; sweep < options.max_sweeps; ++sweep) {
        double change = 0.0;
        for (Index k = 0; k < p; ++k) {
            const double skk = sigma_hat(k, k);
            if (skk <= 0.0)
                continue;
            const double target = (k == j ? 1.0 : 0.0) - (su(k) - skk * u(k));
            const double nu = soft_threshold(target, mu) / skk;
            const double delta = nu - u(k);
            if (delta != 0.0) {
                u(k) = nu;
                su.noalias() += delta * sigma_hat.col(k);
                change = std::max(change, std::abs(delta));
            }
        }
        if (!u.allFinite() || u.cwiseAbs().maxCoeff() > 1e12) {
            diverged = true;
            break;
        }
        if (change <= options.tol * std::max(1.0, u.cwiseAbs().maxCoeff()))
            break;
    }
    const Vector resid = sigma_hat * u - Vector::Unit(p, j);
    const double violation = diverged ? std::numeric_limits<double>::infinity() : resid.cwiseAbs().maxCoeff();
    if (violation > mu + 1e-9)
        throw Error(ErrorKind::infeasible, "constraint |S u - e_" + std::to_string(j) + "|_inf <= "
                                               + std::to_string(mu) + " is infeasible; increase mu");
    return u;
}

Matrix estimate_m_matrix(const Matrix& sigma_hat, double mu, const UColumnOptions& options)
{
    const Index p = sigma_hat.rows();
    Matrix M(p, p);
    for (Index j = 0; j < p; ++j)
        M.row(j) = solve_u_column(sigma_hat, j, mu, options).transpose();
    return M;
}

double default_u_slack(Index n, Index p)
{
    return std::sqrt(std::log(static_cast<double>(std::max<Index>(p, 2))) / static_cast<double>(n));
}

double residual_sigma(const FitResult& fit, const Matrix& X, const Vector& y)
{
    const Index df = static_cast<Index>(fit.active_set.size()) + (fit.has_intercept ? 1 : 0);
    if (y.size() <= df)
        throw Error(ErrorKind::insufficient_dof, "residual variance needs n > |active set| + intercept");
    const double rss = (y - fit.predict_eta(X)).squaredNorm();
    return std::sqrt(rss / static_cast<double>(y.size() - df));
}

DebiasResult debias_lm_with_m(const FitResult& fit, const Matrix& X, const Vector& y, const Matrix& M,
                              double sigma_eps_hat, double level)
{
    const Index n = X.rows();
    const Index p = X.cols();
    if (y.size() != n || fit.beta.size() != p || M.rows() != p || M.cols() != p)
        throw Error(ErrorKind::dimension_mismatch, "debias_lm: inconsistent dimensions");
    if (!(sigma_eps_hat > 0.0))
        throw Error(ErrorKind::invalid_argument, "debias_lm: sigma must be positive");
    Matrix Xc = X;
    if (fit.has_intercept)
        Xc.rowwise() -= X.colwise().mean();
    const Vector r = y - fit.predict_eta(X);
    const Matrix S = Xc.transpose() * Xc / static_cast<double>(n);

    DebiasResult out;
    out.b = fit.beta + M * (Xc.transpose() * r) / static_cast<double>(n);
    const Matrix MSM = M * S * M.transpose();
    out.variance = sigma_eps_hat * sigma_eps_hat * MSM.diagonal() / static_cast<double>(n);
    out.intervals = normal_intervals(out.b, out.variance, level, default_term_names(static_cast<std::size_t>(p), false));
    out.m_matrix = M;
    return out;
}

DebiasResult debias_lm(const FitResult& fit, const Matrix& X, const Vector& y, double mu, double sigma_eps_hat,
                       double level)
{
    Matrix Xc = X;
    if (fit.has_intercept)
        Xc.rowwise() -= X.colwise().mean();
    const Matrix S = Xc.transpose() * Xc / static_cast<double>(X.rows());
    return debias_lm_with_m(fit, X, y, estimate_m_matrix(S, mu), sigma_eps_hat, level);
}

Matrix with_intercept_column(const Matrix& X)
{
    Matrix out(X.rows(), X.cols() + 1);
    out.col(0).setOnes();
    out.rightCols(X.cols()) = X;
    return out;
}

Matrix weighted_design(const Matrix& X, const FitResult& fit, const Family& family, bool with_intercept)
{
    const Vector w = weights_at_fit(X, fit, family);
    if (with_intercept)
        return w.cwiseSqrt().asDiagonal() * with_intercept_column(X);
    return w.cwiseSqrt().asDiagonal() * X;
}

PrecisionEstimate nodewise_theta(const Matrix& Xw, const Vector& lambda_js)
{
    const Index n = Xw.rows();
    const Index p = Xw.cols();
    if (lambda_js.size() != p)
        throw Error(ErrorKind::dimension_mismatch, "nodewise_theta: one lambda per column required");
    if ((lambda_js.array() < 0.0).any())
        throw Error(ErrorKind::invalid_argument, "nodewise_theta: lambdas must be nonnegative");

    PrecisionEstimate est;
    est.method = ThetaMethod::nodewise;
    est.theta = Matrix::Zero(p, p);
    est.tau_sq.resize(p);
    est.lambda_js = lambda_js;
    const SolverConfig config = nodewise_config();
    for (Index j = 0; j < p; ++j) {
        const Vector xj = Xw.col(j);
        const double scale = xj.squaredNorm() / static_cast<double>(n);
        Vector gamma = Vector::Zero(p - 1);
        Vector resid = xj;
        if (p > 1) {
            const Matrix rest = drop_column(Xw, j);
            const FitResult fit =
                fit_penalized_glm(rest, xj, Family::gaussian(), PenaltySpec::lasso(lambda_js(j)), config);
            gamma = fit.beta;
            resid = xj - rest * gamma;
        }
        const double tau_sq = resid.squaredNorm() / static_cast<double>(n) + lambda_js(j) * gamma.lpNorm<1>();
        if (!(tau_sq > 1e-10 * scale))
            throw Error(ErrorKind::singular,
                        "column " + std::to_string(j) + " is (nearly) collinear with the others");
        est.tau_sq(j) = tau_sq;
        Eigen::RowVectorXd row(p);
        row(j) = 1.0;
        for (Index k = 0, m = 0; k < p; ++k)
            if (k != j)
                row(k) = -gamma(m++);
        est.theta.row(j) = row / tau_sq;
    }
    return est;
}

double select_nodewise_lambda(const Matrix& Xw, Index column, std::uint64_t seed)
{
    if (Xw.cols() < 2)
        return 0.0;
    const Matrix rest = drop_column(Xw, column);
    const Vector target = Xw.col(column);
    const SolverConfig config = nodewise_config();
    const Vector grid = lambda_path(rest, target, Family::gaussian(), 30, 0.01, {}, config);
    CvOptions opt;
    opt.seed = seed;
    opt.solver = config;
    return cross_validate(rest, target, Family::gaussian(), grid, opt).best_lambda;
}

PrecisionEstimate direct_theta_from_sigma(const Matrix& sigma_hat)
{
    check_square_symmetric(sigma_hat, "direct_theta");
    Eigen::SelfAdjointEigenSolver<Matrix> eig(sigma_hat);
    if (eig.info() != Eigen::Success)
        throw ConditioningError(std::numeric_limits<double>::infinity(), "eigendecomposition failed");
    const Vector ev = eig.eigenvalues();
    const double lo = ev.minCoeff();
    const double hi = ev.maxCoeff();
    const double cond = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
    if (!(cond <= kMaxCondition))
        throw ConditioningError(cond, "Hessian condition estimate " + std::to_string(cond) + " exceeds 1e12");
    PrecisionEstimate est;
    est.method = ThetaMethod::direct;
    est.theta = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    est.theta = 0.5 * (est.theta + est.theta.transpose());
    est.tau_sq = est.theta.diagonal().cwiseInverse();
    est.lambda_js = Vector::Zero(sigma_hat.rows());
    return est;
}

PrecisionEstimate direct_theta(const Matrix& Xw)
{
    if (Xw.cols() > Xw.rows())
        throw Error(ErrorKind::insufficient_dof, "direct inversion needs p <= n");
    return direct_theta_from_sigma(Xw.transpose() * Xw / static_cast<double>(Xw.rows()));
}

DebiasResult debias_glm(const FitResult& fit, const Matrix& X, const Vector& y, const Family& family,
                        const PrecisionEstimate& theta, const DebiasGlmOptions& options)
{
    const Index n = X.rows();
    if (y.size() != n || fit.beta.size() != X.cols())
        throw Error(ErrorKind::dimension_mismatch, "debias_glm: data do not match the fit");
    const Vector coef = fit.coefficients();
    const Index q = coef.size();
    if (theta.theta.rows() != q || theta.theta.cols() != q)
        throw Error(ErrorKind::dimension_mismatch, "debias_glm: theta does not match the coefficient vector");
    const Matrix Xa = fit.has_intercept ? with_intercept_column(X) : X;

    const Vector eta = fit.predict_eta(X);
    Vector g(n);
    bool clamped = false;
    for (Index i = 0; i < n; ++i) {
        const double e = family.link == Link::log ? unit::clamp_eta(eta(i), clamped) : eta(i);
        g(i) = unit::gradient(family, y(i), e);
    }
    const double dn = static_cast<double>(n);
    const Vector grad = Xa.transpose() * g / dn;

    DebiasResult out;
    out.b = coef - theta.theta * grad;
    if (options.variance == GlmVariance::model) {
        const Vector w = weights_at_fit(X, fit, family);
        const Matrix S = Xa.transpose() * w.asDiagonal() * Xa / dn;
        const bool scaled = family.kind == FamilyKind::gaussian || family.kind == FamilyKind::tweedie;
        const double phi = scaled ? fit.dispersion : 1.0;
        out.variance = phi * (theta.theta * S * theta.theta.transpose()).diagonal() / dn;
    } else {
        const Matrix C = Xa.transpose() * g.cwiseAbs2().asDiagonal() * Xa / dn;
        out.variance = (theta.theta * C * theta.theta.transpose()).diagonal() / dn;
    }
    const auto names = options.term_names.empty()
                           ? default_term_names(static_cast<std::size_t>(X.cols()), fit.has_intercept)
                           : options.term_names;
    if (static_cast<Index>(names.size()) != q)
        throw Error(ErrorKind::dimension_mismatch, "debias_glm: wrong number of term names");
    out.intervals = normal_intervals(out.b, out.variance, options.level, names);
    return out;
}

} // namespace selinf
