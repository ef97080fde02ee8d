#include "topics/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

namespace topics {

namespace {

bool is_integral(double v) { return std::floor(v) == v && std::isfinite(v); }

std::vector<std::vector<CountMatrix::Entry>>
docs_from_map(int n, const std::map<std::pair<int, int>, double>& acc) {
    std::vector<std::vector<CountMatrix::Entry>> docs(n);
    for (const auto& [ij, x] : acc)
        docs[ij.first].push_back({ij.second, x});
    return docs;  // map order gives sorted terms per doc
}

}  // namespace

CountMatrix::CountMatrix(int n, int p, std::vector<std::vector<Entry>> docs)
    : n_(n), p_(p), docs_(std::move(docs)) {
    if (n < 0 || p < 0)
        throw ValidationError("negative dimensions");
    if (static_cast<int>(docs_.size()) != n)
        throw ValidationError("document list length does not match n");
    totals_.assign(n, 0.0);
    for (int i = 0; i < n; ++i) {
        int prev = -1;
        for (const auto& e : docs_[i]) {
            if (e.term < 0 || e.term >= p)
                throw ValidationError("term index " + std::to_string(e.term) +
                                      " out of range [0," + std::to_string(p) + ")");
            if (e.term <= prev)
                throw ValidationError("entries not strictly sorted by term");
            if (e.count <= 0 || !is_integral(e.count))
                throw ValidationError("counts must be strictly positive integers");
            prev = e.term;
            totals_[i] += e.count;
        }
    }
}

double CountMatrix::grand_total() const {
    return std::accumulate(totals_.begin(), totals_.end(), 0.0);
}

std::size_t CountMatrix::nnz() const {
    std::size_t s = 0;
    for (const auto& d : docs_) s += d.size();
    return s;
}

Eigen::VectorXd CountMatrix::term_counts() const {
    Eigen::VectorXd col = Eigen::VectorXd::Zero(p_);
    for (const auto& d : docs_)
        for (const auto& e : d) col[e.term] += e.count;
    return col;
}

Vocabulary::Vocabulary(std::vector<std::string> terms) : terms_(std::move(terms)) {
    std::vector<std::string> sorted = terms_;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ValidationError("vocabulary contains duplicate terms");
    for (const auto& t : terms_)
        if (t.empty()) throw ValidationError("vocabulary contains an empty term");
}

CountMatrix make_counts(int n, int p,
                        const std::vector<std::tuple<int, int, double>>& triplets) {
    std::map<std::pair<int, int>, double> acc;
    for (const auto& [i, j, x] : triplets) {
        if (i < 0 || i >= n)
            throw ValidationError("doc index " + std::to_string(i) + " out of range");
        if (j < 0 || j >= p)
            throw ValidationError("term index " + std::to_string(j) + " out of range");
        if (x < 0 || !is_integral(x))
            throw ValidationError("counts must be nonnegative integers");
        if (x > 0) acc[{i, j}] += x;
    }
    return CountMatrix(n, p, docs_from_map(n, acc));
}

namespace {

CountMatrix load_triplet_tsv(std::istream& in) {
    std::string line;
    long lineno = 0;
    int n = -1, p = -1;
    std::map<std::pair<int, int>, double> acc;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        if (n < 0) {
            if (!(ls >> n >> p) || n < 0 || p < 0)
                throw ParseError("bad header, expected \"n p\"", lineno);
            continue;
        }
        long i, j;
        double x;
        if (!(ls >> i >> j >> x))
            throw ParseError("expected \"i j count\"", lineno);
        std::string rest;
        if (ls >> rest)
            throw ParseError("trailing fields after count", lineno);
        if (i < 0 || i >= n)
            throw ValidationError("doc index " + std::to_string(i) +
                                  " out of declared range (line " + std::to_string(lineno) + ")");
        if (j < 0 || j >= p)
            throw ValidationError("term index " + std::to_string(j) +
                                  " out of declared range (line " + std::to_string(lineno) + ")");
        if (x < 0 || std::floor(x) != x)
            throw ValidationError("count must be a nonnegative integer (line " +
                                  std::to_string(lineno) + ")");
        if (x > 0) acc[{static_cast<int>(i), static_cast<int>(j)}] += x;
    }
    if (n < 0) throw ParseError("missing header", lineno);
    return CountMatrix(n, p, docs_from_map(n, acc));
}

CountMatrix load_matrix_market(std::istream& in) {
    std::string line;
    long lineno = 0;
    if (!std::getline(in, line))
        throw ParseError("empty file", 1);
    ++lineno;
    if (line.rfind("%%MatrixMarket", 0) != 0 ||
        line.find("coordinate") == std::string::npos)
        throw ParseError("not a MatrixMarket coordinate file", lineno);
    long n = -1, p = -1, nnz = -1;
    std::map<std::pair<int, int>, double> acc;
    long seen = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '%') continue;
        std::istringstream ls(line);
        if (n < 0) {
            if (!(ls >> n >> p >> nnz) || n < 0 || p < 0 || nnz < 0)
                throw ParseError("bad size line", lineno);
            continue;
        }
        long i, j;
        double x;
        if (!(ls >> i >> j >> x))
            throw ParseError("expected \"i j count\"", lineno);
        if (i < 1 || i > n || j < 1 || j > p)
            throw ValidationError("index out of declared range (line " +
                                  std::to_string(lineno) + ")");
        if (x < 0 || std::floor(x) != x)
            throw ValidationError("count must be a nonnegative integer (line " +
                                  std::to_string(lineno) + ")");
        if (x > 0) acc[{static_cast<int>(i) - 1, static_cast<int>(j) - 1}] += x;
        ++seen;
    }
    if (n < 0) throw ParseError("missing size line", lineno);
    if (seen != nnz)
        throw ValidationError("entry count " + std::to_string(seen) +
                              " does not match declared nnz " + std::to_string(nnz));
    return CountMatrix(static_cast<int>(n), static_cast<int>(p),
                       docs_from_map(static_cast<int>(n), acc));
}

}  // namespace

CountMatrix load_counts(const std::string& path, CountFormat format) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open counts file: " + path);
    return format == CountFormat::TripletTsv ? load_triplet_tsv(in)
                                             : load_matrix_market(in);
}

CountMatrix load_counts(const std::string& path) {
    std::ifstream probe(path);
    if (!probe)
        throw Error("cannot open counts file: " + path);
    std::string first;
    std::getline(probe, first);
    probe.close();
    return load_counts(path, first.rfind("%%MatrixMarket", 0) == 0
                                 ? CountFormat::MatrixMarket
                                 : CountFormat::TripletTsv);
}

void save_counts(const CountMatrix& c, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write counts file: " + path);
    out << c.n() << '\t' << c.p() << '\n';
    char buf[64];
    for (int i = 0; i < c.n(); ++i)
        for (const auto& e : c.doc(i)) {
            std::snprintf(buf, sizeof buf, "%d\t%d\t%.0f\n", i, e.term, e.count);
            out << buf;
        }
    if (!out)
        throw Error("write failed: " + path);
}

Vocabulary load_vocabulary(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open vocabulary file: " + path);
    std::vector<std::string> terms;
    std::string line;
    while (std::getline(in, line)) terms.push_back(line);
    while (!terms.empty() && terms.back().empty()) terms.pop_back();
    return Vocabulary(std::move(terms));
}

void save_vocabulary(const Vocabulary& v, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write vocabulary file: " + path);
    for (const auto& t : v.terms()) out << t << '\n';
}

std::pair<std::vector<int>, std::vector<int>>
split_indices(int n, double train_fraction, std::uint64_t seed) {
    if (n < 2)
        throw ValidationError("need at least 2 documents to split");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ValidationError("train fraction must lie in (0,1)");
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::mt19937_64 rng(seed);
    for (int i = n - 1; i > 0; --i) {
        auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
        std::swap(idx[i], idx[j]);
    }
    auto ntrain = static_cast<int>(std::ceil(train_fraction * n));
    ntrain = std::min(ntrain, n - 1);
    std::vector<int> train(idx.begin(), idx.begin() + ntrain);
    std::vector<int> test(idx.begin() + ntrain, idx.end());
    return {std::move(train), std::move(test)};
}

namespace {
CountMatrix subset(const CountMatrix& c, const std::vector<int>& which) {
    std::vector<std::vector<CountMatrix::Entry>> docs;
    docs.reserve(which.size());
    for (int i : which) docs.push_back(c.doc(i));
    return CountMatrix(static_cast<int>(which.size()), c.p(), std::move(docs));
}
}  // namespace

std::pair<CountMatrix, CountMatrix>
split_train_test(const CountMatrix& c, double train_fraction, std::uint64_t seed) {
    auto [tr, te] = split_indices(c.n(), train_fraction, seed);
    return {subset(c, tr), subset(c, te)};
}

Eigen::MatrixXd term_lift(const Eigen::MatrixXd& theta, const CountMatrix& c) {
    if (theta.cols() != c.p())
        throw ValidationError("theta/corpus vocabulary size mismatch");
    double total = c.grand_total();
    if (total <= 0)
        throw ValidationError("term lift undefined for an all-zero corpus");
    Eigen::VectorXd q = c.term_counts() / total;
    Eigen::MatrixXd lift(theta.rows(), theta.cols());
    for (int j = 0; j < theta.cols(); ++j) {
        if (q[j] > 0)
            lift.col(j) = theta.col(j) / q[j];
        else
            lift.col(j).setConstant(std::numeric_limits<double>::quiet_NaN());
    }
    return lift;
}

}  // namespace topics
