#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "topics/error.hpp"

namespace topics {

// Sparse n x p document-term counts.  Entries are strictly positive;
// absent pairs mean zero.  Immutable after construction.
class CountMatrix {
public:
    struct Entry {
        int term;
        double count;  // integral value, stored as double for arithmetic
    };

    CountMatrix() : n_(0), p_(0) {}
    CountMatrix(int n, int p, std::vector<std::vector<Entry>> docs);

    int n() const { return n_; }
    int p() const { return p_; }
    const std::vector<Entry>& doc(int i) const { return docs_[i]; }
    double total(int i) const { return totals_[i]; }
    const std::vector<double>& totals() const { return totals_; }
    double grand_total() const;
    std::size_t nnz() const;

    // Column sums Sum_i x_ij as a dense p-vector.
    Eigen::VectorXd term_counts() const;

private:
    int n_, p_;
    std::vector<std::vector<Entry>> docs_;   // per-doc, sorted by term
    std::vector<double> totals_;             // m_i
};

class Vocabulary {
public:
    Vocabulary() = default;
    explicit Vocabulary(std::vector<std::string> terms);

    int size() const { return static_cast<int>(terms_.size()); }
    const std::string& term(int j) const { return terms_[j]; }
    const std::vector<std::string>& terms() const { return terms_; }

private:
    std::vector<std::string> terms_;
};

enum class CountFormat { TripletTsv, MatrixMarket };

// Triplet TSV: header "n p", then one "i j count" per line (0-based).
// Matrix Market coordinate files are accepted for interoperability
// (1-based indices).  Duplicate (i,j) pairs are summed.
CountMatrix load_counts(const std::string& path, CountFormat format);
CountMatrix load_counts(const std::string& path);  // sniff the format
void save_counts(const CountMatrix& c, const std::string& path);

Vocabulary load_vocabulary(const std::string& path);
void save_vocabulary(const Vocabulary& v, const std::string& path);

// Build directly from triplets; duplicates summed, counts validated.
CountMatrix make_counts(int n, int p,
                        const std::vector<std::tuple<int, int, double>>& triplets);

// Seeded uniform shuffle of documents; train gets ceil(fraction * n).
std::pair<CountMatrix, CountMatrix>
split_train_test(const CountMatrix& c, double train_fraction, std::uint64_t seed);

// The document indices (into c) selected for each share, in order.
std::pair<std::vector<int>, std::vector<int>>
split_indices(int n, double train_fraction, std::uint64_t seed);

// lift_kj = theta_kj / q_j with q_j the empirical term probability.
// Terms with q_j = 0 get NaN.
Eigen::MatrixXd term_lift(const Eigen::MatrixXd& theta, const CountMatrix& c);

}  // namespace topics
