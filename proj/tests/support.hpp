#pragma once

#include <Eigen/Dense>

#include <random>

#include "selinf/family.hpp"
#include "selinf/solver.hpp"

namespace testing {

using selinf::Matrix;
using selinf::Vector;
using selinf::Index;

inline Matrix normal_matrix(Index n, Index p, std::mt19937_64& rng, double sd = 1.0)
{
    std::normal_distribution<double> nd(0.0, sd);
    Matrix X(n, p);
    for (Index j = 0; j < p; ++j)
        for (Index i = 0; i < n; ++i)
            X(i, j) = nd(rng);
    return X;
}

inline Vector normal_vector(Index n, std::mt19937_64& rng, double sd = 1.0)
{
    return normal_matrix(n, 1, rng, sd).col(0);
}

// Draws a response of the right support for `f` with mean exp(eta) (log
// link) or eta (identity).
inline Vector draw_response(const selinf::Family& f, const Vector& eta, std::mt19937_64& rng)
{
    Vector y(eta.size());
    for (Index i = 0; i < eta.size(); ++i) {
        const double mu = f.link == selinf::Link::log ? std::exp(eta(i)) : eta(i);
        switch (f.kind) {
        case selinf::FamilyKind::gaussian: y(i) = std::normal_distribution<double>(mu, 1.0)(rng); break;
        case selinf::FamilyKind::poisson: y(i) = std::poisson_distribution<int>(mu)(rng); break;
        case selinf::FamilyKind::negbin: {
            std::gamma_distribution<double> g(f.size, mu / f.size);
            y(i) = std::poisson_distribution<int>(g(rng))(rng);
            break;
        }
        case selinf::FamilyKind::tweedie: {
            // compound Poisson-gamma with the family's power and unit dispersion
            const double p = f.power;
            const double lam = std::pow(mu, 2 - p) / (2 - p);
            const double shape = (2 - p) / (p - 1);
            const double scale = (p - 1) * std::pow(mu, p - 1);
            const int k = std::poisson_distribution<int>(lam)(rng);
            double s = 0.0;
            for (int t = 0; t < k; ++t)
                s += std::gamma_distribution<double>(shape, scale)(rng);
            y(i) = s;
            break;
        }
        }
    }
    return y;
}

inline double rel_error(const Vector& a, const Vector& b)
{
    return (a - b).cwiseAbs().maxCoeff() / std::max(b.cwiseAbs().maxCoeff(), 1e-12);
}

} // namespace testing
