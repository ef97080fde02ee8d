#pragma once

#include <Eigen/Core>
#include <functional>
#include <random>

#include "topics/corpus.hpp"
#include "topics/params.hpp"

namespace testutil {

using Fn = std::function<double(const Eigen::VectorXd&)>;

inline Eigen::VectorXd fd_gradient(const Fn& f, Eigen::VectorXd x, double h = 1e-6) {
    Eigen::VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double x0 = x[i];
        x[i] = x0 + h;
        double fp = f(x);
        x[i] = x0 - h;
        double fm = f(x);
        x[i] = x0;
        g[i] = (fp - fm) / (2 * h);
    }
    return g;
}

inline Eigen::MatrixXd fd_hessian(const Fn& f, Eigen::VectorXd x, double h = 1e-4) {
    auto n = x.size();
    Eigen::MatrixXd H(n, n);
    double f0 = f(x);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            double xi = x[i], xj = x[j];
            if (i == j) {
                x[i] = xi + h;
                double fp = f(x);
                x[i] = xi - h;
                double fm = f(x);
                x[i] = xi;
                H(i, i) = (fp - 2 * f0 + fm) / (h * h);
            } else {
                x[i] = xi + h; x[j] = xj + h;
                double fpp = f(x);
                x[j] = xj - h;
                double fpm = f(x);
                x[i] = xi - h; x[j] = xj + h;
                double fmp = f(x);
                x[j] = xj - h;
                double fmm = f(x);
                x[i] = xi; x[j] = xj;
                H(i, j) = H(j, i) = (fpp - fpm - fmp + fmm) / (4 * h * h);
            }
        }
    }
    return H;
}

// Random corpus with every count drawn Poisson-ish from a uniform; all
// documents nonempty.
inline topics::CountMatrix random_corpus(int n, int p, std::mt19937_64& rng,
                                         double density = 0.5, int max_count = 6) {
    std::vector<std::tuple<int, int, double>> trip;
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> cnt(1, max_count);
    for (int i = 0; i < n; ++i) {
        bool any = false;
        for (int j = 0; j < p; ++j)
            if (u(rng) < density) {
                trip.emplace_back(i, j, cnt(rng));
                any = true;
            }
        if (!any) trip.emplace_back(i, i % p, 1.0);
    }
    return topics::make_counts(n, p, trip);
}

inline Eigen::VectorXd random_simplex(int K, std::mt19937_64& rng) {
    std::gamma_distribution<double> g(1.0, 1.0);
    Eigen::VectorXd v(K);
    for (int k = 0; k < K; ++k) v[k] = g(rng) + 1e-3;
    return v / v.sum();
}

inline topics::TopicMatrix random_topics(int K, int p, std::mt19937_64& rng) {
    topics::TopicMatrix t;
    t.theta.resize(K, p);
    for (int k = 0; k < K; ++k)
        t.theta.row(k) = random_simplex(p, rng).transpose();
    return t;
}

// Points kept well inside the simplex; finite-difference oracles lose
// accuracy near the boundary where log-prior curvature blows up.
inline topics::TopicMatrix interior_topics(int K, int p, std::mt19937_64& rng) {
    topics::TopicMatrix t = random_topics(K, p, rng);
    t.theta = 0.5 * t.theta + Eigen::MatrixXd::Constant(K, p, 0.5 / p);
    return t;
}

inline topics::WeightMatrix random_weights(int n, int K, std::mt19937_64& rng) {
    Eigen::MatrixXd om(n, K);
    for (int i = 0; i < n; ++i) om.row(i) = random_simplex(K, rng).transpose();
    return topics::WeightMatrix::from_omega(om);
}

inline topics::WeightMatrix interior_weights(int n, int K, std::mt19937_64& rng) {
    topics::WeightMatrix w = random_weights(n, K, rng);
    Eigen::MatrixXd om = 0.5 * w.omega + Eigen::MatrixXd::Constant(n, K, 0.5 / K);
    return topics::WeightMatrix::from_omega(om);
}

}  // namespace testutil
