#include <doctest.h>

#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <limits>

#include "selinf/bootstrap.hpp"
#include "selinf/debias.hpp"
#include "selinf/stats.hpp"
#include "support.hpp"

using namespace selinf;

namespace {

Matrix random_spd(Index p, std::mt19937_64& rng)
{
    const Matrix A = testing::normal_matrix(p + 3, p, rng);
    return A.transpose() * A / static_cast<double>(p + 3) + 0.1 * Matrix::Identity(p, p);
}

// Minimizes v' A v over the box |v - e_j|_inf <= mu (v = S u, A = S^-1) by
// enumerating which coordinates sit on a bound.
Vector qp_oracle(const Matrix& S, Index j, double mu)
{
    const Index p = S.rows();
    const Matrix A = S.inverse();
    const Vector e = Vector::Unit(p, j);
    double best = std::numeric_limits<double>::infinity();
    Vector best_u;
    int combos = 1;
    for (Index k = 0; k < p; ++k)
        combos *= 3;
    for (int code = 0; code < combos; ++code) {
        std::vector<int> state(static_cast<std::size_t>(p)); // 0 free, 1 lower, 2 upper
        int c = code;
        for (Index k = 0; k < p; ++k) {
            state[static_cast<std::size_t>(k)] = c % 3;
            c /= 3;
        }
        std::vector<Index> free, fixed;
        Vector v = Vector::Zero(p);
        for (Index k = 0; k < p; ++k) {
            const int s = state[static_cast<std::size_t>(k)];
            if (s == 0) {
                free.push_back(k);
            } else {
                v(k) = e(k) + (s == 1 ? -mu : mu);
                fixed.push_back(k);
            }
        }
        if (!free.empty()) {
            Matrix Aff(free.size(), free.size());
            Vector rhs(free.size());
            for (std::size_t a = 0; a < free.size(); ++a) {
                rhs(static_cast<Index>(a)) = 0.0;
                for (std::size_t b = 0; b < free.size(); ++b)
                    Aff(static_cast<Index>(a), static_cast<Index>(b)) = A(free[a], free[b]);
                for (Index k : fixed)
                    rhs(static_cast<Index>(a)) -= A(free[a], k) * v(k);
            }
            const Vector vf = Aff.ldlt().solve(rhs);
            for (std::size_t a = 0; a < free.size(); ++a)
                v(free[a]) = vf(static_cast<Index>(a));
        }
        if ((v - e).cwiseAbs().maxCoeff() > mu + 1e-12)
            continue;
        const double obj = v.dot(A * v);
        if (obj < best) {
            best = obj;
            best_u = A * v;
        }
    }
    return best_u;
}

FitResult poisson_fit(const Matrix& X, const Vector& y, double lambda)
{
    return fit_penalized_glm(X, y, Family::poisson(), PenaltySpec::lasso(lambda));
}

struct Sim
{
    Matrix X;
    Vector y;
};

Sim poisson_sim(Index n, Index p, const Vector& beta, double b0, std::mt19937_64& rng)
{
    Sim s;
    s.X = testing::normal_matrix(n, p, rng);
    const Vector eta = (s.X * beta).array() + b0;
    s.y = testing::draw_response(Family::poisson(), eta, rng);
    return s;
}

} // namespace

TEST_CASE("u column with identity sigma")
{
    const Matrix I = Matrix::Identity(3, 3);
    for (double mu : {0.05, 0.3, 0.9}) {
        const Vector u = solve_u_column(I, 1, mu);
        CHECK(u(0) == 0.0);
        CHECK(u(2) == 0.0);
        CHECK(u(1) == doctest::Approx(1.0 - mu).epsilon(1e-14));
        CHECK((qp_oracle(I, 1, mu) - u).cwiseAbs().maxCoeff() < 1e-12);
    }
    const Vector zero = solve_u_column(I, 0, 1.0);
    CHECK(zero.cwiseAbs().maxCoeff() == 0.0);
    CHECK(solve_u_column(I, 2, 1.7).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("u column matches a quadratic-program oracle")
{
    Matrix S(2, 2);
    S << 1.0, 0.5, 0.5, 1.0;
    for (Index j = 0; j < 2; ++j) {
        const Vector u = solve_u_column(S, j, 0.05);
        CHECK((u - qp_oracle(S, j, 0.05)).cwiseAbs().maxCoeff() < 1e-6);
    }
    std::mt19937_64 rng(5);
    for (int rep = 0; rep < 5; ++rep) {
        const Matrix R = random_spd(4, rng);
        for (Index j = 0; j < 4; ++j)
            CHECK((solve_u_column(R, j, 0.1) - qp_oracle(R, j, 0.1)).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("u columns are feasible and stationary")
{
    std::mt19937_64 rng(11);
    for (int rep = 0; rep < 10; ++rep) {
        const Index p = 3 + rep % 5;
        const Matrix S = random_spd(p, rng);
        const double mu = 0.05 + 0.05 * (rep % 4);
        const Matrix M = estimate_m_matrix(S, mu);
        for (Index j = 0; j < p; ++j) {
            const Vector u = M.row(j).transpose();
            const Vector r = S * u - Vector::Unit(p, j);
            CHECK(r.cwiseAbs().maxCoeff() <= mu + 1e-9);
            for (Index k = 0; k < p; ++k)
                if (u(k) != 0.0)
                    CHECK(r(k) == doctest::Approx(-mu * (u(k) > 0 ? 1.0 : -1.0)).epsilon(1e-7));
        }
    }
}

TEST_CASE("u column infeasible for a singular sigma")
{
    Matrix S(2, 2);
    S << 1.0, 1.0, 1.0, 1.0;
    CHECK_THROWS_AS(solve_u_column(S, 0, 0.1), Error);
    try {
        solve_u_column(S, 0, 0.1);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::infeasible);
    }
    CHECK_THROWS_AS(solve_u_column(S, 0, 0.0), Error);
}

TEST_CASE("de-biased lasso on an orthonormal design recovers least squares")
{
    std::mt19937_64 rng(17);
    const Index n = 100, p = 5;
    const Eigen::HouseholderQR<Matrix> qr(testing::normal_matrix(n, p, rng));
    const Matrix X = qr.householderQ() * Matrix::Identity(n, p) * std::sqrt(static_cast<double>(n));
    Vector beta(p);
    beta << 1.0, -0.5, 0.0, 0.25, 0.0;
    const Vector y = X * beta + testing::normal_vector(n, rng);
    SolverConfig cfg;
    cfg.fit_intercept = false;
    cfg.standardize = false;
    const FitResult fit = fit_penalized_glm(X, y, Family::gaussian(), PenaltySpec::lasso(0.2), cfg);
    const Vector ols = X.transpose() * y / static_cast<double>(n);

    const DebiasResult exact = debias_lm_with_m(fit, X, y, Matrix::Identity(p, p), 1.0);
    CHECK((exact.b - ols).cwiseAbs().maxCoeff() < 1e-10);

    const double mu = 0.01;
    const DebiasResult r = debias_lm(fit, X, y, mu, residual_sigma(fit, X, y));
    const Vector expected = fit.beta + (1.0 - mu) * X.transpose() * (y - X * fit.beta) / static_cast<double>(n);
    CHECK((r.b - expected).cwiseAbs().maxCoeff() < 1e-9);
    for (const auto& row : r.intervals.rows)
        CHECK(row.estimate - row.lower == doctest::Approx(row.upper - row.estimate).epsilon(1e-12));
}

TEST_CASE("de-biasing an unpenalized fit changes nothing")
{
    std::mt19937_64 rng(23);
    const Matrix X = testing::normal_matrix(80, 4, rng);
    const Vector y = X.col(0) + testing::normal_vector(80, rng);
    const FitResult fit = fit_penalized_glm(X, y, Family::gaussian(), PenaltySpec::lasso(0.0));
    Matrix Xc = X;
    Xc.rowwise() -= X.colwise().mean();
    const Matrix S = Xc.transpose() * Xc / 80.0;
    const DebiasResult r = debias_lm_with_m(fit, X, y, S.inverse(), 1.0);
    CHECK((r.b - fit.beta).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("de-biased lasso covers under the null model")
{
    const Index n = 500, p = 20;
    const int reps = 200;
    std::mt19937_64 rng(30);
    std::vector<int> covered(static_cast<std::size_t>(p), 0);
    for (int r = 0; r < reps; ++r) {
        const Matrix X = testing::normal_matrix(n, p, rng);
        const Vector y = testing::normal_vector(n, rng);
        const CvResult cv = select_lambda(X, y, Family::gaussian(), 5, 20, 0.01, static_cast<std::uint64_t>(r));
        const FitResult fit = fit_penalized_glm(X, y, Family::gaussian(), PenaltySpec::lasso(cv.best_lambda));
        const DebiasResult d = debias_lm(fit, X, y, default_u_slack(n, p), residual_sigma(fit, X, y));
        for (Index j = 0; j < p; ++j)
            covered[static_cast<std::size_t>(j)] += d.intervals.rows[static_cast<std::size_t>(j)].covers(0.0);
    }
    for (int c : covered) {
        const double rate = static_cast<double>(c) / reps;
        CHECK(rate >= 0.91);
        CHECK(rate <= 0.99);
    }
}

TEST_CASE("weighted design")
{
    std::mt19937_64 rng(31);
    const Matrix X = testing::normal_matrix(10, 3, rng);
    const Vector y = testing::normal_vector(10, rng);
    const FitResult g = fit_penalized_glm(X, y, Family::gaussian(), PenaltySpec::lasso(0.1));
    CHECK((weighted_design(X, g, Family::gaussian()) - X).cwiseAbs().maxCoeff() == 0.0);

    FitResult f;
    f.has_intercept = true;
    f.intercept = 0.0;
    f.beta = Vector::Constant(1, std::log(4.0));
    Matrix Z(2, 1);
    Z << 0.0, 1.0;
    const Matrix Zw = weighted_design(Z, f, Family::poisson(), true);
    CHECK(Zw(0, 0) == doctest::Approx(1.0));
    CHECK(Zw(1, 0) == doctest::Approx(2.0));
    CHECK(Zw(1, 1) == doctest::Approx(2.0));
}

TEST_CASE("weighted design reproduces the tweedie Hessian")
{
    std::mt19937_64 rng(37);
    const Family f = Family::tweedie(1.5);
    const Index n = 30, p = 3;
    const Matrix X = testing::normal_matrix(n, p, rng);
    Vector beta(p);
    beta << 0.4, -0.3, 0.0;
    Vector y = testing::draw_response(f, (X * beta).array() + 0.5, rng);
    const FitResult fit = fit_penalized_glm(X, y, f, PenaltySpec::lasso(0.02));
    // at y = mu the expected and observed information coincide
    y = fit.predict_mean(X, f);
    const Matrix Xw = weighted_design(X, fit, f, true);
    const Matrix S = Xw.transpose() * Xw / static_cast<double>(n);

    const Matrix Xa = with_intercept_column(X);
    const Vector b = fit.coefficients();
    auto loss = [&](const Vector& c) { return neg_log_lik(f, y, Vector(Xa * c)); };
    const double h = 1e-4;
    Matrix H(p + 1, p + 1);
    for (Index j = 0; j <= p; ++j)
        for (Index k = 0; k <= p; ++k) {
            const Vector ej = Vector::Unit(p + 1, j) * h, ek = Vector::Unit(p + 1, k) * h;
            H(j, k) = (loss(b + ej + ek) - loss(b + ej - ek) - loss(b - ej + ek) + loss(b - ej - ek)) / (4 * h * h);
        }
    CHECK((H - S).cwiseAbs().maxCoeff() / S.cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("nodewise precision estimates")
{
    SUBCASE("orthogonal columns")
    {
        std::mt19937_64 rng(41);
        const Eigen::HouseholderQR<Matrix> qr(testing::normal_matrix(40, 3, rng));
        Matrix Q = qr.householderQ() * Matrix::Identity(40, 3);
        Q.col(1) *= 3.0;
        const PrecisionEstimate est = nodewise_theta(Q, Vector::Zero(3));
        for (Index j = 0; j < 3; ++j) {
            CHECK(est.theta(j, j) == doctest::Approx(40.0 / Q.col(j).squaredNorm()).epsilon(1e-8));
            CHECK(est.tau_sq(j) == doctest::Approx(Q.col(j).squaredNorm() / 40.0).epsilon(1e-8));
        }
        CHECK((est.theta - Matrix(est.theta.diagonal().asDiagonal())).cwiseAbs().maxCoeff() < 1e-8);
    }
    SUBCASE("lambda zero inverts the Gram matrix")
    {
        std::mt19937_64 rng(43);
        const Matrix X = testing::normal_matrix(50, 4, rng) + 0.5 * testing::normal_matrix(50, 1, rng).replicate(1, 4);
        const Matrix S = X.transpose() * X / 50.0;
        const PrecisionEstimate nw = nodewise_theta(X, Vector::Zero(4));
        CHECK((nw.theta - S.inverse()).cwiseAbs().maxCoeff() < 1e-6);
        CHECK((nw.theta - direct_theta(X).theta).cwiseAbs().maxCoeff() < 1e-6);
    }
    SUBCASE("column regressions satisfy the lasso KKT conditions")
    {
        std::mt19937_64 rng(47);
        const Index n = 60, p = 3;
        const Matrix X = testing::normal_matrix(n, p, rng) + 0.7 * testing::normal_matrix(n, 1, rng).replicate(1, p);
        const double lam = 0.1;
        const PrecisionEstimate est = nodewise_theta(X, Vector::Constant(p, lam));
        for (Index j = 0; j < p; ++j) {
            Vector gamma(p - 1);
            Matrix rest(n, p - 1);
            for (Index k = 0, m = 0; k < p; ++k) {
                if (k == j)
                    continue;
                gamma(m) = -est.theta(j, k) * est.tau_sq(j);
                rest.col(m++) = X.col(k);
            }
            CHECK(est.theta(j, j) * est.tau_sq(j) == doctest::Approx(1.0));
            const Vector r = X.col(j) - rest * gamma;
            const Vector score = rest.transpose() * r / static_cast<double>(n);
            for (Index m = 0; m < p - 1; ++m) {
                if (gamma(m) != 0.0)
                    CHECK(score(m) == doctest::Approx(lam * (gamma(m) > 0 ? 1.0 : -1.0)).epsilon(1e-5));
                else
                    CHECK(std::abs(score(m)) <= lam * (1 + 1e-6));
            }
            CHECK(est.tau_sq(j) ==
                  doctest::Approx(r.squaredNorm() / n + lam * gamma.cwiseAbs().sum()).epsilon(1e-6));
        }
    }
    CHECK_THROWS_AS(nodewise_theta(Matrix::Ones(10, 2), Vector::Zero(2)), Error);
}

TEST_CASE("nodewise and direct estimates agree on random designs")
{
    std::mt19937_64 rng(53);
    for (int rep = 0; rep < 10; ++rep) {
        const Matrix A = testing::normal_matrix(6, 6, rng) * 0.4 + Matrix::Identity(6, 6);
        const Matrix X = testing::normal_matrix(80, 6, rng) * A;
        const PrecisionEstimate nw = nodewise_theta(X, Vector::Zero(6));
        const PrecisionEstimate dt = direct_theta(X);
        CHECK((nw.theta - dt.theta).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("direct precision estimate")
{
    CHECK((direct_theta_from_sigma(Matrix::Identity(3, 3)).theta - Matrix::Identity(3, 3)).cwiseAbs().maxCoeff() <
          1e-15);
    Matrix D = Matrix::Zero(2, 2);
    D(0, 0) = 2.0;
    D(1, 1) = 4.0;
    const Matrix T = direct_theta_from_sigma(D).theta;
    CHECK(T(0, 0) == doctest::Approx(0.5));
    CHECK(T(1, 1) == doctest::Approx(0.25));
    CHECK(T(0, 1) == 0.0);
    std::mt19937_64 rng(59);
    const Matrix S = random_spd(5, rng);
    CHECK((direct_theta_from_sigma(S).theta * S - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-10);

    Matrix bad = Matrix::Identity(2, 2);
    bad(1, 1) = 1e-14;
    try {
        direct_theta_from_sigma(bad);
        FAIL("expected a conditioning error");
    } catch (const ConditioningError& e) {
        CHECK(e.condition() > 1e12);
    }
}

TEST_CASE("de-biased GLM at the MLE is the Wald interval")
{
    std::mt19937_64 rng(61);
    Vector beta(3);
    beta << 0.3, -0.2, 0.1;
    const Sim s = poisson_sim(200, 3, beta, 0.5, rng);
    const FitResult fit = poisson_fit(s.X, s.y, 0.0);
    const Matrix Xw = weighted_design(s.X, fit, Family::poisson(), true);
    const DebiasResult d = debias_glm(fit, s.X, s.y, Family::poisson(), direct_theta(Xw));

    const Matrix Xa = with_intercept_column(s.X);
    const Vector mu = fit.predict_mean(s.X, Family::poisson());
    const Matrix cov = (Xa.transpose() * mu.asDiagonal() * Xa).inverse();
    const Vector coef = fit.coefficients();
    const double z = normal_critical(0.95);
    for (Index j = 0; j < 4; ++j) {
        const auto& row = d.intervals.rows[static_cast<std::size_t>(j)];
        const double se = std::sqrt(cov(j, j));
        CHECK(std::abs(row.estimate - coef(j)) < 1e-8);
        CHECK(std::abs(row.lower - (coef(j) - z * se)) < 1e-8);
        CHECK(std::abs(row.upper - (coef(j) + z * se)) < 1e-8);
    }
}

TEST_CASE("gaussian de-biasing agrees across the LM and GLM forms")
{
    std::mt19937_64 rng(67);
    const Index n = 100, p = 4;
    const Eigen::HouseholderQR<Matrix> qr(testing::normal_matrix(n, p, rng));
    const Matrix X = qr.householderQ() * Matrix::Identity(n, p) * std::sqrt(static_cast<double>(n));
    const Vector y = X.col(0) * 0.8 + testing::normal_vector(n, rng);
    SolverConfig cfg;
    cfg.fit_intercept = false;
    const FitResult fit = fit_penalized_glm(X, y, Family::gaussian(), PenaltySpec::lasso(0.1), cfg);
    const DebiasResult lm = debias_lm_with_m(fit, X, y, Matrix::Identity(p, p), residual_sigma(fit, X, y));
    const DebiasResult glm = debias_glm(fit, X, y, Family::gaussian(), direct_theta(X));
    CHECK((lm.b - glm.b).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((lm.variance - glm.variance).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("de-biased poisson intervals cover")
{
    const Index n = 500, p = 10;
    const int reps = 200;
    Vector beta = Vector::Zero(p);
    beta(0) = 0.5;
    beta(1) = -0.4;
    beta(2) = 0.3;
    std::mt19937_64 rng(71);
    std::vector<int> covered(static_cast<std::size_t>(p + 1), 0);
    for (int r = 0; r < reps; ++r) {
        const Sim s = poisson_sim(n, p, beta, 0.2, rng);
        const CvResult cv = select_lambda(s.X, s.y, Family::poisson(), 5, 20, 0.01, static_cast<std::uint64_t>(r));
        const FitResult fit = poisson_fit(s.X, s.y, cv.best_lambda);
        const Matrix Xw = weighted_design(s.X, fit, Family::poisson(), true);
        const DebiasResult d = debias_glm(fit, s.X, s.y, Family::poisson(), direct_theta(Xw));
        covered[0] += d.intervals.rows[0].covers(0.2);
        for (Index j = 0; j < p; ++j)
            covered[static_cast<std::size_t>(j + 1)] += d.intervals.rows[static_cast<std::size_t>(j + 1)].covers(beta(j));
    }
    for (int c : covered) {
        const double rate = static_cast<double>(c) / reps;
        CHECK(rate >= 0.90);
        CHECK(rate <= 0.99);
    }
}

TEST_CASE("de-biased widths shrink like root n")
{
    Vector beta = Vector::Zero(6);
    beta(0) = 0.4;
    beta(1) = -0.3;
    auto median_width = [&](Index n, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        std::vector<double> widths;
        for (int r = 0; r < 20; ++r) {
            const Sim s = poisson_sim(n, 6, beta, 0.3, rng);
            const FitResult fit = poisson_fit(s.X, s.y, 0.01);
            const Matrix Xw = weighted_design(s.X, fit, Family::poisson(), true);
            const DebiasResult d = debias_glm(fit, s.X, s.y, Family::poisson(), direct_theta(Xw));
            for (const auto& row : d.intervals.rows)
                widths.push_back(row.width());
        }
        std::nth_element(widths.begin(), widths.begin() + widths.size() / 2, widths.end());
        return widths[widths.size() / 2];
    };
    const double ratio = median_width(1000, 73) / median_width(500, 79);
    CHECK(ratio >= 0.6);
    CHECK(ratio <= 0.8);
}

TEST_CASE("sandwich variance is positive and close to the model variance for poisson")
{
    std::mt19937_64 rng(83);
    Vector beta(3);
    beta << 0.3, 0.0, -0.2;
    const Sim s = poisson_sim(2000, 3, beta, 0.4, rng);
    const FitResult fit = poisson_fit(s.X, s.y, 0.0);
    const PrecisionEstimate theta = direct_theta(weighted_design(s.X, fit, Family::poisson(), true));
    DebiasGlmOptions opt;
    const DebiasResult model = debias_glm(fit, s.X, s.y, Family::poisson(), theta, opt);
    opt.variance = GlmVariance::sandwich;
    const DebiasResult sand = debias_glm(fit, s.X, s.y, Family::poisson(), theta, opt);
    for (Index j = 0; j < 4; ++j) {
        CHECK(sand.variance(j) > 0.0);
        CHECK(sand.variance(j) / model.variance(j) == doctest::Approx(1.0).epsilon(0.15));
    }
}
