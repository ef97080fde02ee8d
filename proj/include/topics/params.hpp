#pragma once

#include <Eigen/Core>
#include <string>

#include "topics/corpus.hpp"
#include "topics/error.hpp"

namespace topics {

// Interior floor applied when converting externally supplied simplex
// points to NEF coordinates.
inline constexpr double kSimplexFloor = 1e-12;

// K topic distributions over p terms, one per row; rows sum to one and
// all entries are strictly positive.
struct TopicMatrix {
    Eigen::MatrixXd theta;  // K x p

    int K() const { return static_cast<int>(theta.rows()); }
    int p() const { return static_cast<int>(theta.cols()); }
    void validate(double row_tol = 1e-12) const;
};

// Per-document weights over K topics.  omega rows live on the open
// K-simplex; phi rows are the matching NEF coordinates (component 0
// fixed at zero and not stored).
struct WeightMatrix {
    Eigen::MatrixXd omega;  // n x K
    Eigen::MatrixXd phi;    // n x (K-1)

    int n() const { return static_cast<int>(omega.rows()); }
    int K() const { return static_cast<int>(omega.cols()); }
    void validate(double row_tol = 1e-12, double pair_tol = 1e-10) const;

    static WeightMatrix from_omega(Eigen::MatrixXd omega);
    static WeightMatrix from_phi(Eigen::MatrixXd phi);
};

struct Priors {
    double omega_concentration = 1.0;  // 1/K by default
    Eigen::MatrixXd alpha;             // K x p, 1/(K p) by default

    static Priors defaults(int K, int p);
    static Priors with_alpha(int K, int p, double omega_conc, double alpha_scalar);
    void validate() const;
};

// omega_k = exp(phi_{k-1}) / sum_h exp(phi_h), phi_0 = 0.
Eigen::VectorXd nef_to_simplex(const Eigen::VectorXd& phi);

// phi_{k-1} = log(omega_k / omega_1), k = 2..K.  Boundary points have
// no NEF image.
Eigen::VectorXd simplex_to_nef(const Eigen::VectorXd& omega);

// Clamp to [kSimplexFloor, .] and renormalize; for external input.
Eigen::VectorXd floor_simplex(Eigen::VectorXd omega);

// log |d omega / d phi| = sum_k log omega_k (all K components).
double nef_jacobian_logdet(const Eigen::VectorXd& omega);

// Log joint posterior over (Theta, Phi).  The relative version drops
// multinomial coefficients and Dirichlet normalizers; `absolute` adds
// them back (effective Dir(conc+1) and Dir(alpha+1) priors).
double log_joint_posterior(const CountMatrix& c, const TopicMatrix& theta,
                           const WeightMatrix& w, const Priors& pr,
                           bool absolute = false);

// Same objective as a function of raw coordinates: theta entries K x p
// (not renormalized) and phi rows n x (K-1).  Used by curvature checks.
double log_joint_raw(const CountMatrix& c, const Eigen::MatrixXd& theta_raw,
                     const Eigen::MatrixXd& phi, const Priors& pr);

// Fitted model with enough state to resume or score.
struct Model {
    TopicMatrix theta;
    WeightMatrix weights;
    Priors priors;
    double log_posterior = 0.0;
};

// Structured text round trip at 17 significant digits.
void save_model(const Model& m, const std::string& path);
Model load_model(const std::string& path);

}  // namespace topics
