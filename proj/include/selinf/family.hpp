#pragma once

// GLM families: per-observation losses in the linear predictor, their
// derivatives, expected-information weights, and the residual types used by
// the bootstrap engines. Everything here is a pure function of its inputs and
// templated on the Eigen scalar of the arguments.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "selinf/error.hpp"

namespace selinf {

enum class FamilyKind { gaussian, poisson, negbin, tweedie };
enum class Link { identity, log };

// Linear predictors are clamped to this bound before exponentiation.
inline constexpr double kEtaBound = 30.0;

struct Family
{
    FamilyKind kind = FamilyKind::gaussian;
    Link link = Link::identity;
    double power = 1.5;      // tweedie only, in (1, 2)
    double dispersion = 1.0; // phi
    double size = 1.0;       // negative-binomial theta

    static Family gaussian(double dispersion = 1.0)
    {
        Family f{FamilyKind::gaussian, Link::identity, 1.5, dispersion, 1.0};
        f.validate();
        return f;
    }
    static Family poisson()
    {
        Family f{FamilyKind::poisson, Link::log, 1.5, 1.0, 1.0};
        f.validate();
        return f;
    }
    static Family negbin(double size)
    {
        Family f{FamilyKind::negbin, Link::log, 1.5, 1.0, size};
        f.validate();
        return f;
    }
    static Family tweedie(double power = 1.5, double dispersion = 1.0)
    {
        Family f{FamilyKind::tweedie, Link::log, power, dispersion, 1.0};
        f.validate();
        return f;
    }
#ifdef SELINF_UNCHECKED_FAMILIES
    // Test builds only: skips the power-range guard to probe the p -> 1 limit.
    static Family tweedie_unchecked(double power, double dispersion = 1.0)
    {
        return Family{FamilyKind::tweedie, Link::log, power, dispersion, 1.0};
    }
#endif

    Family with_dispersion(double phi) const
    {
        Family f = *this;
        f.dispersion = phi;
        f.validate();
        return f;
    }

    void validate() const
    {
        if (!(dispersion > 0.0) || !std::isfinite(dispersion))
            throw Error(ErrorKind::invalid_argument, "family dispersion must be positive");
        if (kind == FamilyKind::tweedie && !(power > 1.0 && power < 2.0))
            throw Error(ErrorKind::invalid_argument, "tweedie power must lie in (1, 2)");
        if (kind == FamilyKind::negbin && (!(size > 0.0) || !std::isfinite(size)))
            throw Error(ErrorKind::invalid_argument, "negative-binomial size must be positive");
        if (kind == FamilyKind::gaussian && link != Link::identity)
            throw Error(ErrorKind::unsupported_family, "gaussian family supports the identity link only");
        if (kind != FamilyKind::gaussian && link != Link::log)
            throw Error(ErrorKind::unsupported_family, "identity link is only permitted for the gaussian family");
    }

    bool nonnegative_response() const { return kind != FamilyKind::gaussian; }

    std::string name() const
    {
        switch (kind) {
        case FamilyKind::gaussian: return "gaussian";
        case FamilyKind::poisson: return "poisson";
        case FamilyKind::negbin: return "negbin";
        case FamilyKind::tweedie: return "tweedie";
        }
        return "unknown";
    }
};

struct LossDiagnostics
{
    bool clamped = false;
};

namespace unit {

template <typename T>
T clamp_eta(T eta, bool& clamped)
{
    const T bound = T(kEtaBound);
    if (eta > bound) {
        clamped = true;
        return bound;
    }
    if (eta < -bound) {
        clamped = true;
        return -bound;
    }
    return eta;
}

template <typename T>
T mean(const Family& f, T eta)
{
    return f.link == Link::identity ? eta : std::exp(eta);
}

template <typename T>
bool is_integral(T y)
{
    return std::floor(y) == y;
}

// rho(y, eta): negative log-likelihood of one observation, up to terms
// constant in eta (log y! and the gamma terms are kept when y is integral).
template <typename T>
T loss(const Family& f, T y, T eta)
{
    using std::exp;
    using std::lgamma;
    using std::log;
    switch (f.kind) {
    case FamilyKind::gaussian: {
        const T r = y - eta;
        return T(0.5) * r * r;
    }
    case FamilyKind::poisson: {
        T v = exp(eta) - y * eta;
        if (is_integral(y))
            v += lgamma(y + T(1));
        return v;
    }
    case FamilyKind::negbin: {
        const T theta = T(f.size);
        const T mu = exp(eta);
        const T log_theta_mu = log(theta + mu);
        T v = theta * (log_theta_mu - log(theta)) + y * (log_theta_mu - eta);
        if (is_integral(y))
            v -= lgamma(y + theta) - lgamma(theta) - lgamma(y + T(1));
        return v;
    }
    case FamilyKind::tweedie: {
        const T p = T(f.power);
        return -y * exp((T(1) - p) * eta) / (T(1) - p) + exp((T(2) - p) * eta) / (T(2) - p);
    }
    }
    return T(0);
}

// d rho / d eta
template <typename T>
T gradient(const Family& f, T y, T eta)
{
    using std::exp;
    switch (f.kind) {
    case FamilyKind::gaussian: return eta - y;
    case FamilyKind::poisson: return exp(eta) - y;
    case FamilyKind::negbin: {
        const T theta = T(f.size);
        const T mu = exp(eta);
        return theta * (mu - y) / (theta + mu);
    }
    case FamilyKind::tweedie: {
        const T p = T(f.power);
        return -y * exp((T(1) - p) * eta) + exp((T(2) - p) * eta);
    }
    }
    return T(0);
}

// d^2 rho / d eta^2 at the observed y.
template <typename T>
T observed_weight(const Family& f, T y, T eta)
{
    using std::exp;
    switch (f.kind) {
    case FamilyKind::gaussian: return T(1);
    case FamilyKind::poisson: return exp(eta);
    case FamilyKind::negbin: {
        const T theta = T(f.size);
        const T mu = exp(eta);
        return theta * mu * (theta + y) / ((theta + mu) * (theta + mu));
    }
    case FamilyKind::tweedie: {
        const T p = T(f.power);
        return -y * (T(1) - p) * exp((T(1) - p) * eta) + (T(2) - p) * exp((T(2) - p) * eta);
    }
    }
    return T(0);
}

// Expected information E[rho''] as a function of the mean.
template <typename T>
T fisher_weight(const Family& f, T mu)
{
    using std::pow;
    switch (f.kind) {
    case FamilyKind::gaussian: return T(1);
    case FamilyKind::poisson: return mu;
    case FamilyKind::negbin: {
        const T theta = T(f.size);
        return mu * theta / (theta + mu);
    }
    case FamilyKind::tweedie: return pow(mu, T(2) - T(f.power));
    }
    return T(1);
}

// Variance function V(mu), without the dispersion factor.
template <typename T>
T variance(const Family& f, T mu)
{
    using std::pow;
    switch (f.kind) {
    case FamilyKind::gaussian: return T(1);
    case FamilyKind::poisson: return mu;
    case FamilyKind::negbin: return mu + mu * mu / T(f.size);
    case FamilyKind::tweedie: return pow(mu, T(f.power));
    }
    return T(1);
}

// Scale multiplying V(mu) in the Pearson denominator.
inline double pearson_scale(const Family& f)
{
    return (f.kind == FamilyKind::gaussian || f.kind == FamilyKind::tweedie) ? f.dispersion : 1.0;
}

template <typename T>
T xlogy_ratio(T y, T mu)
{
    return y == T(0) ? T(0) : y * std::log(y / mu);
}

// Unit deviance d(y, mu) >= 0 (up to rounding).
template <typename T>
T deviance(const Family& f, T y, T mu)
{
    using std::log;
    using std::pow;
    if (y == mu)
        return T(0);
    switch (f.kind) {
    case FamilyKind::gaussian: return (y - mu) * (y - mu);
    case FamilyKind::poisson: return T(2) * (xlogy_ratio(y, mu) - (y - mu));
    case FamilyKind::negbin: {
        const T theta = T(f.size);
        return T(2) * (xlogy_ratio(y, mu) - (y + theta) * log((y + theta) / (mu + theta)));
    }
    case FamilyKind::tweedie: {
        const T p = T(f.power);
        return T(2) * (y * pow(mu, T(1) - p) / (p - T(1))
                       - pow(y, T(2) - p) / ((p - T(1)) * (T(2) - p))
                       + pow(mu, T(2) - p) / (T(2) - p));
    }
    }
    return T(0);
}

} // namespace unit

namespace detail {

template <typename Derived>
void check_response(const Family& f, const Eigen::MatrixBase<Derived>& y)
{
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const auto v = y(i);
        if (std::isnan(v))
            throw Error(ErrorKind::input_validation, "response contains NaN at index " + std::to_string(i));
        if (f.nonnegative_response() && v < 0)
            throw Error(ErrorKind::domain,
                        f.name() + " response must be nonnegative (index " + std::to_string(i) + ")");
    }
}

template <typename Derived>
void check_positive_mean(const Family& f, const Eigen::MatrixBase<Derived>& mu)
{
    if (f.kind == FamilyKind::gaussian)
        return;
    for (Eigen::Index i = 0; i < mu.size(); ++i)
        if (!(mu(i) > 0))
            throw Error(ErrorKind::domain, "mean must be positive for the " + f.name()
                                               + " family (index " + std::to_string(i) + ")");
}

inline void check_same_length(Eigen::Index a, Eigen::Index b, const char* what)
{
    if (a != b)
        throw Error(ErrorKind::dimension_mismatch, std::string(what) + ": length mismatch");
}

} // namespace detail

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// (1/n) * sum_i rho(y_i, eta_i). Linear predictors outside [-30, 30] are
// clamped; `diag` records whether that happened.
template <typename DerivedY, typename DerivedEta>
typename DerivedY::Scalar neg_log_lik(const Family& f, const Eigen::MatrixBase<DerivedY>& y,
                                      const Eigen::MatrixBase<DerivedEta>& eta,
                                      LossDiagnostics* diag = nullptr)
{
    using Scalar = typename DerivedY::Scalar;
    detail::check_same_length(y.size(), eta.size(), "neg_log_lik");
    detail::check_response(f, y);
    bool clamped = false;
    Scalar total(0);
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const Scalar e = f.link == Link::log ? unit::clamp_eta(Scalar(eta(i)), clamped) : Scalar(eta(i));
        const Scalar v = unit::loss(f, Scalar(y(i)), e);
        if (!std::isfinite(v))
            throw NumericOverflow(i, "non-finite loss at observation " + std::to_string(i));
        total += v;
    }
    if (diag)
        diag->clamped = diag->clamped || clamped;
    return y.size() > 0 ? total / Scalar(y.size()) : Scalar(0);
}

// Gradient of neg_log_lik(f, y, X * beta) with respect to beta.
template <typename DerivedX, typename DerivedY, typename DerivedB>
Vec<typename DerivedX::Scalar> nll_gradient(const Family& f, const Eigen::MatrixBase<DerivedX>& X,
                                            const Eigen::MatrixBase<DerivedY>& y,
                                            const Eigen::MatrixBase<DerivedB>& beta,
                                            LossDiagnostics* diag = nullptr)
{
    using Scalar = typename DerivedX::Scalar;
    detail::check_same_length(X.rows(), y.size(), "nll_gradient");
    detail::check_same_length(X.cols(), beta.size(), "nll_gradient");
    detail::check_response(f, y);
    const Vec<Scalar> eta = X * beta;
    Vec<Scalar> g(eta.size());
    bool clamped = false;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        const Scalar e = f.link == Link::log ? unit::clamp_eta(eta(i), clamped) : eta(i);
        g(i) = unit::gradient(f, Scalar(y(i)), e);
        if (!std::isfinite(g(i)))
            throw NumericOverflow(i, "non-finite gradient at observation " + std::to_string(i));
    }
    if (diag)
        diag->clamped = diag->clamped || clamped;
    return X.transpose() * g / Scalar(X.rows());
}

template <typename Derived>
Vec<typename Derived::Scalar> irls_weights(const Family& f, const Eigen::MatrixBase<Derived>& mu)
{
    using Scalar = typename Derived::Scalar;
    detail::check_positive_mean(f, mu);
    Vec<Scalar> w(mu.size());
    for (Eigen::Index i = 0; i < mu.size(); ++i)
        w(i) = unit::fisher_weight(f, Scalar(mu(i)));
    return w;
}

template <typename DerivedY, typename DerivedMu>
Vec<typename DerivedY::Scalar> pearson_residuals(const Family& f, const Eigen::MatrixBase<DerivedY>& y,
                                                 const Eigen::MatrixBase<DerivedMu>& mu)
{
    using Scalar = typename DerivedY::Scalar;
    detail::check_same_length(y.size(), mu.size(), "pearson_residuals");
    detail::check_positive_mean(f, mu);
    const Scalar scale = Scalar(unit::pearson_scale(f));
    Vec<Scalar> r(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const Scalar v = scale * unit::variance(f, Scalar(mu(i)));
        if (!(v > 0))
            throw Error(ErrorKind::domain, "nonpositive variance at index " + std::to_string(i));
        r(i) = (Scalar(y(i)) - Scalar(mu(i))) / std::sqrt(v);
    }
    return r;
}

template <typename DerivedY, typename DerivedMu>
Vec<typename DerivedY::Scalar> deviance_residuals(const Family& f, const Eigen::MatrixBase<DerivedY>& y,
                                                  const Eigen::MatrixBase<DerivedMu>& mu)
{
    using Scalar = typename DerivedY::Scalar;
    detail::check_same_length(y.size(), mu.size(), "deviance_residuals");
    detail::check_positive_mean(f, mu);
    detail::check_response(f, y);
    Vec<Scalar> r(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const Scalar yi = Scalar(y(i));
        const Scalar mi = Scalar(mu(i));
        Scalar d = unit::deviance(f, yi, mi);
        // rounding near y == mu can leave a tiny negative radicand
        const Scalar slack = Scalar(64) * std::numeric_limits<Scalar>::epsilon()
                             * std::max({Scalar(1), std::abs(yi), std::abs(mi)});
        if (d < 0) {
            if (d < -slack)
                throw Error(ErrorKind::domain, "negative deviance radicand at index " + std::to_string(i));
            d = 0;
        }
        const Scalar s = yi > mi ? Scalar(1) : (yi < mi ? Scalar(-1) : Scalar(0));
        r(i) = s * std::sqrt(d);
    }
    return r;
}

template <typename DerivedY, typename DerivedMu>
Vec<typename DerivedY::Scalar> anscombe_residuals(const Family& f, const Eigen::MatrixBase<DerivedY>& y,
                                                  const Eigen::MatrixBase<DerivedMu>& mu)
{
    using Scalar = typename DerivedY::Scalar;
    if (f.kind != FamilyKind::tweedie)
        throw Error(ErrorKind::unsupported_family, "anscombe residuals are defined for the tweedie family only");
    detail::check_same_length(y.size(), mu.size(), "anscombe_residuals");
    detail::check_positive_mean(f, mu);
    detail::check_response(f, y);
    const Scalar p = Scalar(f.power);
    const Scalar a = Scalar(1) - p / Scalar(3);
    Vec<Scalar> r(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const Scalar mi = Scalar(mu(i));
        r(i) = (Scalar(3) / (Scalar(3) - p)) * (std::pow(Scalar(y(i)), a) - std::pow(mi, a))
               / std::pow(mi, p / Scalar(6));
    }
    return r;
}

// Pearson chi-square dispersion estimate; fixed at 1 for the Poisson family.
template <typename DerivedY, typename DerivedMu>
typename DerivedY::Scalar estimate_dispersion(const Family& f, const Eigen::MatrixBase<DerivedY>& y,
                                              const Eigen::MatrixBase<DerivedMu>& mu, Eigen::Index df_used)
{
    using Scalar = typename DerivedY::Scalar;
    detail::check_same_length(y.size(), mu.size(), "estimate_dispersion");
    const Eigen::Index n = y.size();
    if (n <= df_used)
        throw Error(ErrorKind::insufficient_dof, "dispersion needs n > df_used (n=" + std::to_string(n)
                                                     + ", df=" + std::to_string(df_used) + ")");
    if (f.kind == FamilyKind::poisson)
        return Scalar(1);
    detail::check_positive_mean(f, mu);
    Scalar chi2(0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Scalar r = Scalar(y(i)) - Scalar(mu(i));
        chi2 += r * r / unit::variance(f, Scalar(mu(i)));
    }
    return chi2 / Scalar(n - df_used);
}

} // namespace selinf
