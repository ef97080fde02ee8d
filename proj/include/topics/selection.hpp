#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "topics/corpus.hpp"
#include "topics/estimator.hpp"
#include "topics/params.hpp"

namespace topics {

// Weight entries above this count toward the effective dimension.
inline constexpr double kWeightDimThreshold = 1.0 / 1000.0;
// Fitted counts above this count toward the dispersion dof.
inline constexpr double kFittedCountThreshold = 1.0 / 100.0;

// Negative-Hessian diagonal blocks of the log joint posterior at the
// MAP: one K x K block per term (theta columns) and one (K-1) x (K-1)
// block per document (NEF weight coordinates).
struct HessianBlocks {
    std::vector<Eigen::MatrixXd> theta_blocks;  // p blocks, K x K
    std::vector<Eigen::MatrixXd> phi_blocks;    // n blocks, (K-1) x (K-1)
};

Eigen::MatrixXd theta_block(int j, const CountMatrix& c, const TopicMatrix& theta,
                            const WeightMatrix& w, const Priors& pr);
Eigen::MatrixXd phi_block(int i, const CountMatrix& c, const TopicMatrix& theta,
                          const WeightMatrix& w, const Priors& pr);
HessianBlocks compute_blocks(const CountMatrix& c, const TopicMatrix& theta,
                             const WeightMatrix& w, const Priors& pr,
                             int threads = 1);

// Sum of log-determinants over all blocks, each via Cholesky.  On a
// factorization failure the error names the offending block; with
// `jitter` a diagonal bump of 1e-8 * trace / dim is applied first.
double block_logdet(const HessianBlocks& blocks, bool jitter = false);

struct MarginalLikelihood {
    double log_marginal = 0.0;
    int d_effective = 0;
};

// Block-diagonal Laplace estimate:
// log p(X|K) ~ log p(X, Theta, Omega) - logdet/2 + (d/2) log 2pi + log K!
// with d = K p + #{omega_ik > 1/1000}.
MarginalLikelihood log_marginal_likelihood(const CountMatrix& c,
                                           const FitResult& fitted,
                                           const Priors& pr, int threads = 1);

struct Dispersion {
    double sigma2 = 0.0;
    double D = 0.0;
    double nu = 0.0;
    double pvalue = 1.0;
};

// Adjusted-residual dispersion with chi-square test of sigma^2 = 1
// against overdispersion.
Dispersion dispersion(const CountMatrix& c, const TopicMatrix& theta,
                      const WeightMatrix& w, int d_effective);

struct SelectionRecord {
    int K = 0;
    bool ok = false;
    std::string error;
    double log_marginal = 0.0;
    double log_bf_vs_1 = 0.0;
    int d_effective = 0;
    double sigma2 = 0.0;
    double nu = 0.0;
    double D = 0.0;
    double pvalue = 1.0;
};

struct SelectionReport {
    std::vector<SelectionRecord> records;
    int best_K = 0;  // argmax of log_marginal over successful fits

    void write_csv(const std::string& path) const;
    std::string summary() const;
};

struct PriorOptions {
    std::optional<double> omega_concentration;  // default 1/K
    std::optional<double> alpha;                // default 1/(K p)

    Priors make(int K, int p) const;
};

// Fit every K in [kmin, kmax] (warm-started from the previous K) and
// record marginal likelihood plus dispersion diagnostics.  Per-K
// failures are recorded, not fatal.
SelectionReport select_K(const CountMatrix& c, int kmin, int kmax,
                         const PriorOptions& prior_opts, const FitConfig& cfg,
                         const FitCallback& progress = nullptr);

}  // namespace topics
