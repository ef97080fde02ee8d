#include "topics/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace topics {

double SimRng::uniform() {
    // 53-bit mantissa, strictly inside (0,1)
    double u = (static_cast<double>(gen_() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
    return u;
}

double SimRng::gamma(double shape) {
    if (!(shape > 0))
        throw ValidationError("gamma shape must be positive");
    if (shape < 1.0) {
        // boost: Gamma(a) = Gamma(a+1) * U^{1/a}
        double u = uniform();
        return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    // Marsaglia-Tsang squeeze
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            // Box-Muller normal from two uniforms
            double u1 = uniform(), u2 = uniform();
            x = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        double u = uniform();
        if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
}

long SimRng::poisson(double mean) {
    if (!(mean >= 0))
        throw ValidationError("poisson mean must be nonnegative");
    // Po(m) split into independent Po(m/c) chunks small enough for
    // stable CDF inversion.
    long total = 0;
    while (mean > 30.0) {
        double chunk = mean / std::ceil(mean / 30.0);
        double L = std::exp(-chunk);
        double prod = uniform();
        long k = 0;
        while (prod > L) {
            prod *= uniform();
            ++k;
        }
        total += k;
        mean -= chunk;
    }
    if (mean > 0) {
        double L = std::exp(-mean);
        double prod = uniform();
        long k = 0;
        while (prod > L) {
            prod *= uniform();
            ++k;
        }
        total += k;
    }
    return total;
}

Eigen::VectorXd SimRng::dirichlet(int dim, double concentration) {
    Eigen::VectorXd g(dim);
    for (int k = 0; k < dim; ++k) g[k] = gamma(concentration);
    double s = g.sum();
    if (!(s > 0)) g.setConstant(1.0);  // astronomically unlikely underflow
    return g / g.sum();
}

std::vector<CountMatrix::Entry> SimRng::multinomial(const Eigen::VectorXd& prob,
                                                    long m) {
    auto p = prob.size();
    Eigen::VectorXd cdf(p);
    double run = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) {
        run += prob[j];
        cdf[j] = run;
    }
    std::vector<double> counts(p, 0.0);
    for (long t = 0; t < m; ++t) {
        double u = uniform() * run;
        auto it = std::lower_bound(cdf.data(), cdf.data() + p, u);
        auto j = std::min<Eigen::Index>(it - cdf.data(), p - 1);
        counts[j] += 1.0;
    }
    std::vector<CountMatrix::Entry> out;
    for (Eigen::Index j = 0; j < p; ++j)
        if (counts[j] > 0) out.push_back({static_cast<int>(j), counts[j]});
    return out;
}

void SimConfig::validate() const {
    if (n < 1 || p < 1 || K_true < 1)
        throw ValidationError("simulation dimensions must be positive");
    if (!(M > 0))
        throw ValidationError("expected document size must be positive");
    if (!(topic_concentration > 0) || !(weight_concentration > 0))
        throw ValidationError("concentrations must be positive");
}

SimOutput generate(const SimConfig& cfg) {
    cfg.validate();
    SimRng rng(cfg.seed);

    Eigen::MatrixXd theta(cfg.K_true, cfg.p);
    for (int k = 0; k < cfg.K_true; ++k)
        theta.row(k) = rng.dirichlet(cfg.p, cfg.topic_concentration).transpose();

    Eigen::MatrixXd omega(cfg.n, cfg.K_true);
    std::vector<std::vector<CountMatrix::Entry>> docs(cfg.n);
    for (int i = 0; i < cfg.n; ++i) {
        omega.row(i) = rng.dirichlet(cfg.K_true, cfg.weight_concentration).transpose();
        long m = rng.poisson(cfg.M);
        Eigen::VectorXd q = theta.transpose() * omega.row(i).transpose();
        docs[i] = rng.multinomial(q, m);
    }

    SimOutput out{CountMatrix(cfg.n, cfg.p, std::move(docs)), {}, {}};
    out.true_theta.theta = std::move(theta);
    out.true_omega = WeightMatrix::from_omega(std::move(omega));
    return out;
}

std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
    if (cost.rows() != cost.cols())
        throw ValidationError("assignment needs a square cost matrix");
    int n = static_cast<int>(cost.rows());
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);
    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            int i0 = p[j0], j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j)
                if (!used[j]) {
                    double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                    if (cur < minv[j]) {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if (minv[j] < delta) {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            for (int j = 0; j <= n; ++j)
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }
    std::vector<int> match(n);
    for (int j = 1; j <= n; ++j) match[p[j] - 1] = j - 1;
    return match;
}

std::vector<int> align_topics(const TopicMatrix& est, const TopicMatrix& truth) {
    if (est.K() != truth.K() || est.p() != truth.p())
        throw ValidationError("topic matrices have different shapes");
    int K = est.K();
    Eigen::MatrixXd cost(K, K);
    for (int k = 0; k < K; ++k)
        for (int l = 0; l < K; ++l)
            cost(k, l) = (est.theta.row(k) - truth.theta.row(l)).squaredNorm();
    return hungarian(cost);
}

double theta_mse(const TopicMatrix& est, const TopicMatrix& truth) {
    std::vector<int> perm = align_topics(est, truth);
    double ss = 0.0;
    for (int k = 0; k < est.K(); ++k)
        ss += (est.theta.row(k) - truth.theta.row(perm[k])).squaredNorm();
    return ss / (static_cast<double>(est.K()) * est.p());
}

}  // namespace topics
