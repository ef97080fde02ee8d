#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "topics/corpus.hpp"
#include "topics/params.hpp"

namespace topics {

struct FitConfig {
    double tol = 0.1;          // absolute log-posterior change
    int max_iters = 1000;      // outer block-relaxation iterations
    double qp_tol = 1e-8;      // projected gradient norm per omega solve
    double active_tol = 1e-10; // boundary activation threshold
    int qp_max_iters = 200;
    bool acceleration = true;
    std::uint64_t seed = 0;
    int threads = 1;

    void validate() const;
};

struct FitResult {
    TopicMatrix theta;
    WeightMatrix weights;
    std::vector<double> logpost_trace;
    int iterations = 0;
    bool converged = false;
};

// iteration, log posterior, max omega change
using FitCallback = std::function<void(int, double, double)>;

// E-step totals from the latent topic-count augmentation:
// xhat_kj = sum_i x_ij theta_kj w_ik / q_ij, that_k = sum_j xhat_kj.
std::pair<Eigen::MatrixXd, Eigen::VectorXd>
em_expected_totals(const CountMatrix& c, const TopicMatrix& theta,
                   const WeightMatrix& w);

// theta_kj = (xhat_kj + alpha_kj) / (that_k + sum_j alpha_kj)
TopicMatrix update_theta(const Eigen::MatrixXd& xhat, const Eigen::VectorXd& that,
                         const Priors& pr);

// Thrown when the inner solver hits its iteration cap; carries the
// last iterate.
struct OmegaSolveError : Error {
    OmegaSolveError(const std::string& msg, Eigen::VectorXd last)
        : Error(msg), last_iterate(std::move(last)) {}
    Eigen::VectorXd last_iterate;
};

// Conditional MAP for one document's weights given Theta: active-set
// Newton on l(w) = sum_j x_j log(theta_j' w) + conc * sum_k log w_k
// over the simplex.
Eigen::VectorXd solve_omega(const std::vector<CountMatrix::Entry>& x, double m,
                            const TopicMatrix& theta, const Priors& pr,
                            const Eigen::VectorXd& start, const FitConfig& cfg);

// The objective above; used by solve_omega and by its tests.
double omega_objective(const std::vector<CountMatrix::Entry>& x,
                       const TopicMatrix& theta, const Priors& pr,
                       const Eigen::VectorXd& omega);
void omega_grad_hess(const std::vector<CountMatrix::Entry>& x,
                     const TopicMatrix& theta, const Priors& pr,
                     const Eigen::VectorXd& omega, Eigen::VectorXd& grad,
                     Eigen::MatrixXd& hess);

// Joint MAP by block relaxation: exact omega rows given Theta, then an
// EM update of Theta given the weights, with safeguarded quasi-Newton
// acceleration over the full parameter vector.
FitResult fit(const CountMatrix& c, int K, const Priors& pr, const FitConfig& cfg,
              const std::optional<FitResult>& init = std::nullopt,
              const FitCallback& progress = nullptr);

// Closed-form single-topic fit.
FitResult fit_single_topic(const CountMatrix& c, const Priors& pr);

// Start for K+1 topics from a fitted K-topic model: append one topic
// built from the normalized positive residual counts, restart all
// weights at uniform.
FitResult append_residual_topic(const CountMatrix& c, const FitResult& fitted,
                                const Priors& pr_new);

// Build-up initialization: fit 1..K-1 topics in turn, each start taken
// from the previous fit's residuals.
FitResult init_incremental(const CountMatrix& c, int K, const Priors& pr,
                           const FitConfig& cfg);

struct Prediction {
    Eigen::VectorXd omega;
    double loglik = 0.0;  // sum_j x_j log(theta_j' omega)
};

Prediction predict_weights(const std::vector<CountMatrix::Entry>& x_new,
                           const TopicMatrix& theta, const Priors& pr,
                           const FitConfig& cfg);

}  // namespace topics
