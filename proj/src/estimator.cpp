#include "topics/estimator.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "topics/parallel.hpp"

namespace topics {

void FitConfig::validate() const {
    if (!(tol > 0)) throw ValidationError("tol must be positive");
    if (max_iters < 1) throw ValidationError("max_iters must be positive");
    if (!(qp_tol > 0) || !(active_tol > 0))
        throw ValidationError("solver tolerances must be positive");
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd>
em_expected_totals(const CountMatrix& c, const TopicMatrix& theta,
                   const WeightMatrix& w) {
    int K = theta.K();
    if (w.K() != K || theta.p() != c.p() || w.n() != c.n())
        throw ValidationError("dimension mismatch in E-step");
    Eigen::MatrixXd xhat = Eigen::MatrixXd::Zero(K, theta.p());
    for (int i = 0; i < c.n(); ++i) {
        for (const auto& e : c.doc(i)) {
            Eigen::VectorXd num =
                theta.theta.col(e.term).cwiseProduct(w.omega.row(i).transpose());
            double q = num.sum();
            if (!(q > 0))
                throw ValidationError("zero denominator at a positive count in E-step");
            xhat.col(e.term) += (e.count / q) * num;
        }
    }
    return {xhat, xhat.rowwise().sum()};
}

TopicMatrix update_theta(const Eigen::MatrixXd& xhat, const Eigen::VectorXd& that,
                         const Priors& pr) {
    TopicMatrix t;
    t.theta = xhat + pr.alpha;
    Eigen::VectorXd denom = that + pr.alpha.rowwise().sum();
    t.theta.array().colwise() /= denom.array();
    return t;
}

double omega_objective(const std::vector<CountMatrix::Entry>& x,
                       const TopicMatrix& theta, const Priors& pr,
                       const Eigen::VectorXd& omega) {
    double l = pr.omega_concentration * omega.array().log().sum();
    for (const auto& e : x)
        l += e.count * std::log(theta.theta.col(e.term).dot(omega));
    return l;
}

void omega_grad_hess(const std::vector<CountMatrix::Entry>& x,
                     const TopicMatrix& theta, const Priors& pr,
                     const Eigen::VectorXd& omega, Eigen::VectorXd& grad,
                     Eigen::MatrixXd& hess) {
    int K = theta.K();
    grad = pr.omega_concentration * omega.cwiseInverse();
    hess = Eigen::MatrixXd::Zero(K, K);
    hess.diagonal() = -pr.omega_concentration * omega.array().square().inverse();
    for (const auto& e : x) {
        const auto col = theta.theta.col(e.term);
        double q = col.dot(omega);
        grad += (e.count / q) * col;
        hess.noalias() -= (e.count / (q * q)) * col * col.transpose();
    }
}

namespace {

// Solve [H 1; 1' 0][delta; lambda] = [g; 0] on the free coordinates,
// H = -hess restricted to the free set.
void kkt_step(const Eigen::MatrixXd& H, const Eigen::VectorXd& g,
              const std::vector<int>& free, Eigen::VectorXd& delta, double& lambda) {
    auto f = static_cast<int>(free.size());
    Eigen::MatrixXd Hf(f, f);
    Eigen::VectorXd gf(f);
    for (int a = 0; a < f; ++a) {
        gf[a] = g[free[a]];
        for (int b = 0; b < f; ++b) Hf(a, b) = H(free[a], free[b]);
    }
    Eigen::LLT<Eigen::MatrixXd> llt(Hf);
    if (llt.info() != Eigen::Success) {
        Hf.diagonal().array() += 1e-10 * Hf.trace() / f;
        llt.compute(Hf);
        if (llt.info() != Eigen::Success)
            throw Error("omega solve: curvature factorization failed");
    }
    Eigen::VectorXd y1 = llt.solve(gf);
    Eigen::VectorXd y2 = llt.solve(Eigen::VectorXd::Ones(f));
    lambda = y1.sum() / y2.sum();
    Eigen::VectorXd df = y1 - lambda * y2;
    delta.setZero(g.size());
    for (int a = 0; a < f; ++a) delta[free[a]] = df[a];
}

}  // namespace

Eigen::VectorXd solve_omega(const std::vector<CountMatrix::Entry>& x, double m,
                            const TopicMatrix& theta, const Priors& pr,
                            const Eigen::VectorXd& start, const FitConfig& cfg) {
    int K = theta.K();
    if (K == 1) return Eigen::VectorXd::Ones(1);
    if (start.size() != K)
        throw ValidationError("start point has wrong dimension");
    if (!(start.array() > 0).all() || !start.allFinite())
        throw ValidationError("infeasible start for omega solve");
    if (m <= 0)  // empty document: mode of the effective prior
        return Eigen::VectorXd::Constant(K, 1.0 / K);

    Eigen::VectorXd omega = floor_simplex(start).cwiseMax(cfg.active_tol);
    omega /= omega.sum();
    std::vector<bool> active(K, false);
    Eigen::VectorXd g(K), delta(K);
    Eigen::MatrixXd h(K, K);

    for (int it = 0; it < cfg.qp_max_iters; ++it) {
        omega_grad_hess(x, theta, pr, omega, g, h);
        Eigen::MatrixXd H = -h;

        std::vector<int> free;
        for (int k = 0; k < K; ++k)
            if (!active[k]) free.push_back(k);

        double lambda;
        kkt_step(H, g, free, delta, lambda);

        // A pinned coordinate re-enters when its multiplier says the
        // objective improves off the boundary.
        bool released = false;
        for (int k = 0; k < K; ++k)
            if (active[k] && g[k] - lambda > 0) {
                active[k] = false;
                released = true;
            }
        if (released) continue;

        double resid = 0.0;
        for (int k : free) resid = std::max(resid, std::abs(g[k] - lambda));
        if (resid < cfg.qp_tol * std::max(1.0, std::abs(lambda)))
            return omega;

        // Ratio test: largest step in (0,1] keeping free coordinates
        // at least active_tol from zero.
        double step = 1.0;
        for (int k : free)
            if (delta[k] < 0)
                step = std::min(step, (omega[k] - cfg.active_tol) / -delta[k]);
        bool limited = step < 1.0;

        double f0 = omega_objective(x, theta, pr, omega);
        Eigen::VectorXd trial = omega;
        for (int bt = 0; bt < 60; ++bt) {
            trial = omega + step * delta;
            trial = trial.cwiseMax(cfg.active_tol);
            if (omega_objective(x, theta, pr, trial) >= f0 - 1e-12) break;
            step *= 0.5;
        }
        omega = trial;

        if (limited) {
            for (int k : free)
                if (omega[k] <= cfg.active_tol * (1 + 1e-9)) {
                    omega[k] = cfg.active_tol;
                    active[k] = true;
                }
        }
        // keep the equality constraint exact on the free coordinates
        double pinned = 0.0, freemass = 0.0;
        for (int k = 0; k < K; ++k)
            (active[k] ? pinned : freemass) += omega[k];
        double scale = (1.0 - pinned) / freemass;
        for (int k = 0; k < K; ++k)
            if (!active[k]) omega[k] *= scale;
    }
    throw OmegaSolveError("omega solve did not converge within iteration cap", omega);
}

namespace {

struct State {
    TopicMatrix theta;
    Eigen::MatrixXd omega;  // n x K
};

void solve_all_omegas(const CountMatrix& c, State& s, const Priors& pr,
                      const FitConfig& cfg, double& max_change) {
    int threads = cfg.threads;
    std::vector<double> chunk_change(std::max(threads, 1), 0.0);
    parallel_chunks(c.n(), threads, [&](int chunk, int begin, int end) {
        double mc = 0.0;
        for (int i = begin; i < end; ++i) {
            Eigen::VectorXd w = solve_omega(c.doc(i), c.total(i), s.theta, pr,
                                            s.omega.row(i).transpose(), cfg);
            mc = std::max(mc, (w - s.omega.row(i).transpose()).cwiseAbs().maxCoeff());
            s.omega.row(i) = w.transpose();
        }
        chunk_change[chunk] = mc;
    });
    max_change = 0.0;
    for (double v : chunk_change) max_change = std::max(max_change, v);
}

std::pair<Eigen::MatrixXd, Eigen::VectorXd>
em_totals_parallel(const CountMatrix& c, const State& s, const FitConfig& cfg) {
    int K = s.theta.K(), p = s.theta.p();
    int threads = std::max(cfg.threads, 1);
    std::vector<Eigen::MatrixXd> acc(threads, Eigen::MatrixXd::Zero(K, p));
    parallel_chunks(c.n(), cfg.threads, [&](int chunk, int begin, int end) {
        Eigen::MatrixXd& xhat = acc[chunk];
        for (int i = begin; i < end; ++i)
            for (const auto& e : c.doc(i)) {
                Eigen::VectorXd num =
                    s.theta.theta.col(e.term).cwiseProduct(s.omega.row(i).transpose());
                double q = num.sum();
                if (!(q > 0))
                    throw ValidationError("zero denominator in E-step");
                xhat.col(e.term) += (e.count / q) * num;
            }
    });
    for (int t = 1; t < threads; ++t) acc[0] += acc[t];
    return {acc[0], acc[0].rowwise().sum()};
}

double state_logpost(const CountMatrix& c, const State& s, const Priors& pr) {
    double lp = pr.omega_concentration * s.omega.array().log().sum();
    lp += (pr.alpha.array() * s.theta.theta.array().log()).sum();
    for (int i = 0; i < c.n(); ++i)
        for (const auto& e : c.doc(i)) {
            double q = s.omega.row(i).dot(s.theta.theta.col(e.term));
            if (!(q > 0))
                throw ValidationError("zero fitted probability at a positive count");
            lp += e.count * std::log(q);
        }
    return lp;
}

// Flatten to (phi rows, log-theta rows) for the acceleration step.
Eigen::VectorXd pack(const State& s) {
    int n = static_cast<int>(s.omega.rows()), K = s.theta.K(), p = s.theta.p();
    Eigen::VectorXd v(n * (K - 1) + K * p);
    int at = 0;
    for (int i = 0; i < n; ++i)
        for (int k = 1; k < K; ++k)
            v[at++] = std::log(s.omega(i, k) / s.omega(i, 0));
    for (int k = 0; k < K; ++k)
        for (int j = 0; j < p; ++j) v[at++] = std::log(s.theta.theta(k, j));
    return v;
}

bool unpack(const Eigen::VectorXd& v, int n, int K, int p, State& s) {
    if (!v.allFinite()) return false;
    s.omega.resize(n, K);
    int at = 0;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd phi(K - 1);
        for (int k = 0; k < K - 1; ++k) phi[k] = v[at++];
        s.omega.row(i) = nef_to_simplex(phi).transpose();
        if (!(s.omega.row(i).array() > 0).all()) return false;
    }
    s.theta.theta.resize(K, p);
    for (int k = 0; k < K; ++k) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < p; ++j) mx = std::max(mx, v[at + j]);
        double sum = 0.0;
        for (int j = 0; j < p; ++j) {
            s.theta.theta(k, j) = std::exp(v[at + j] - mx);
            sum += s.theta.theta(k, j);
        }
        s.theta.theta.row(k) /= sum;
        if (!(s.theta.theta.row(k).array() > 0).all()) return false;
        at += p;
    }
    return true;
}

WeightMatrix weights_of(const Eigen::MatrixXd& omega) {
    return WeightMatrix::from_omega(omega);
}

}  // namespace

FitResult fit_single_topic(const CountMatrix& c, const Priors& pr) {
    Eigen::MatrixXd xhat = c.term_counts().transpose();
    Eigen::VectorXd that(1);
    that[0] = c.grand_total();
    FitResult r;
    r.theta = update_theta(xhat, that, pr);
    r.weights = WeightMatrix::from_omega(Eigen::MatrixXd::Ones(c.n(), 1));
    r.logpost_trace = {log_joint_posterior(c, r.theta, r.weights, pr)};
    r.iterations = 1;
    r.converged = true;
    return r;
}

FitResult append_residual_topic(const CountMatrix& c, const FitResult& fitted,
                                const Priors& pr_new) {
    int K = fitted.theta.K(), p = fitted.theta.p();
    if (static_cast<int>(pr_new.alpha.rows()) != K + 1)
        throw ValidationError("priors must be shaped for K+1 topics");
    // positive part of observed minus fitted term counts
    Eigen::VectorXd predicted = Eigen::VectorXd::Zero(p);
    for (int i = 0; i < c.n(); ++i)
        predicted += c.total(i) *
                     (fitted.theta.theta.transpose() * fitted.weights.omega.row(i).transpose());
    Eigen::VectorXd resid = c.term_counts() - predicted;
    double eps = 1e-8 * (c.grand_total() / p + 1.0);
    resid = resid.cwiseMax(eps);
    resid /= resid.sum();

    FitResult start;
    start.theta.theta.resize(K + 1, p);
    start.theta.theta.topRows(K) = fitted.theta.theta;
    start.theta.theta.row(K) = resid.transpose();
    start.weights = WeightMatrix::from_omega(
        Eigen::MatrixXd::Constant(c.n(), K + 1, 1.0 / (K + 1)));
    start.iterations = 0;
    start.converged = false;
    return start;
}

FitResult init_incremental(const CountMatrix& c, int K, const Priors& pr,
                           const FitConfig& cfg) {
    if (K < 2) throw ValidationError("incremental initialization needs K >= 2");
    FitResult prev = fit_single_topic(c, Priors::defaults(1, c.p()));
    for (int k = 2; k < K; ++k) {
        FitResult start = append_residual_topic(c, prev, Priors::defaults(k, c.p()));
        prev = fit(c, k, Priors::defaults(k, c.p()), cfg, start);
    }
    return append_residual_topic(c, prev, pr);
}

FitResult fit(const CountMatrix& c, int K, const Priors& pr, const FitConfig& cfg,
              const std::optional<FitResult>& init, const FitCallback& progress) {
    if (K < 1) throw ValidationError("K must be at least 1");
    cfg.validate();
    pr.validate();
    if (pr.alpha.rows() != K || pr.alpha.cols() != c.p())
        throw ValidationError("priors shaped for wrong K or p");

    State s;
    if (init) {
        if (init->theta.K() != K || init->theta.p() != c.p() ||
            init->weights.n() != c.n())
            throw ValidationError("initializer has wrong dimensions");
        s.theta = init->theta;
        s.omega = init->weights.omega;
    } else if (K == 1) {
        s.theta.theta = Eigen::MatrixXd::Constant(1, c.p(), 1.0 / c.p());
        s.omega = Eigen::MatrixXd::Ones(c.n(), 1);
    } else {
        FitResult start = init_incremental(c, K, pr, cfg);
        s.theta = start.theta;
        s.omega = start.weights.omega;
    }

    FitResult r;
    double lp_prev = 0.0;
    Eigen::VectorXd v_prev, v_prev2;
    for (int iter = 1; iter <= cfg.max_iters; ++iter) {
        double max_change = 0.0;
        solve_all_omegas(c, s, pr, cfg, max_change);
        auto [xhat, that] = em_totals_parallel(c, s, cfg);
        s.theta = update_theta(xhat, that, pr);
        double lp = state_logpost(c, s, pr);

        if (cfg.acceleration && K > 1) {
            Eigen::VectorXd v = pack(s);
            if (v_prev.size() && v_prev2.size()) {
                Eigen::VectorXd d1 = v - v_prev, d0 = v_prev - v_prev2;
                double denom = d0.squaredNorm();
                double rate = denom > 0 ? d1.dot(d0) / denom : 0.0;
                if (std::isfinite(rate) && rate > 0 && rate < 0.9999) {
                    Eigen::VectorXd v_acc = v + (rate / (1.0 - rate)) * d1;
                    State s_acc;
                    if (unpack(v_acc, c.n(), K, c.p(), s_acc)) {
                        double lp_acc;
                        try {
                            lp_acc = state_logpost(c, s_acc, pr);
                        } catch (const ValidationError&) {
                            lp_acc = -std::numeric_limits<double>::infinity();
                        }
                        if (lp_acc > lp) {  // reject steps that lose ground
                            s = std::move(s_acc);
                            lp = lp_acc;
                            v = pack(s);
                            v_prev2.resize(0);  // restart the secant history
                            v_prev.resize(0);
                        }
                    }
                }
            }
            v_prev2 = v_prev;
            v_prev = v;
        }

        r.logpost_trace.push_back(lp);
        r.iterations = iter;
        if (progress) progress(iter, lp, max_change);
        if (iter > 1 && std::abs(lp - lp_prev) < cfg.tol) {
            r.converged = true;
            break;
        }
        lp_prev = lp;
    }
    r.theta = s.theta;
    r.weights = weights_of(s.omega);
    return r;
}

Prediction predict_weights(const std::vector<CountMatrix::Entry>& x_new,
                           const TopicMatrix& theta, const Priors& pr,
                           const FitConfig& cfg) {
    int K = theta.K();
    double m = 0.0;
    for (const auto& e : x_new) m += e.count;
    Prediction out;
    if (m <= 0) {
        out.omega = Eigen::VectorXd::Constant(K, 1.0 / K);
        out.loglik = 0.0;
        return out;
    }
    Eigen::VectorXd start = Eigen::VectorXd::Constant(K, 1.0 / K);
    out.omega = solve_omega(x_new, m, theta, pr, start, cfg);
    out.loglik = 0.0;
    for (const auto& e : x_new)
        out.loglik += e.count * std::log(theta.theta.col(e.term).dot(out.omega));
    return out;
}

}  // namespace topics
