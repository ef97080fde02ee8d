#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <vector>

#include "topics/corpus.hpp"
#include "topics/params.hpp"

namespace topics {

// Deterministic sampler used for synthetic corpora.  Built on
// mt19937_64 with fixed transforms (Marsaglia-Tsang gamma, chunked
// CDF-inversion Poisson) so a seed pins the whole output.
class SimRng {
public:
    explicit SimRng(std::uint64_t seed) : gen_(seed) {}

    double uniform();                     // (0,1)
    double gamma(double shape);           // unit scale
    long poisson(double mean);
    Eigen::VectorXd dirichlet(int dim, double concentration);
    // counts ~ MN(prob, m) via CDF inversion per draw
    std::vector<CountMatrix::Entry> multinomial(const Eigen::VectorXd& prob, long m);

private:
    std::mt19937_64 gen_;
};

struct SimConfig {
    int n = 500;
    int p = 1000;
    int K_true = 10;
    double M = 200.0;  // Poisson mean document size
    double topic_concentration = 0.1;
    double weight_concentration = 0.1;
    std::uint64_t seed = 0;

    void validate() const;
};

struct SimOutput {
    CountMatrix counts;
    TopicMatrix true_theta;
    WeightMatrix true_omega;
};

SimOutput generate(const SimConfig& cfg);

// Assignment of estimated rows to true rows minimizing total sum of
// squared differences (Hungarian method).  perm[k] is the truth row
// matched to estimate row k.
std::vector<int> align_topics(const TopicMatrix& est, const TopicMatrix& truth);

// Mean squared entry difference after alignment.
double theta_mse(const TopicMatrix& est, const TopicMatrix& truth);

// Exact minimum-cost assignment on a square cost matrix.
std::vector<int> hungarian(const Eigen::MatrixXd& cost);

}  // namespace topics
