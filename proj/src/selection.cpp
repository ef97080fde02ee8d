#include "topics/selection.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "topics/parallel.hpp"
#include "topics/special.hpp"

namespace topics {

namespace {

double doc_q(const TopicMatrix& theta, const WeightMatrix& w, int i, int j) {
    return w.omega.row(i).dot(theta.theta.col(j));
}

Eigen::MatrixXd phi_block_impl(int i, const CountMatrix& c, const TopicMatrix& theta,
                               const WeightMatrix& w, const Priors& pr) {
    int K = theta.K();
    Eigen::VectorXd om = w.omega.row(i).transpose();
    // prior + Jacobian curvature: (m + conc*K) (Diag[w] - w w') on the
    // free coordinates 2..K
    double scale = c.total(i) + pr.omega_concentration * K;
    Eigen::VectorXd of = om.tail(K - 1);
    Eigen::MatrixXd blk =
        scale * (Eigen::MatrixXd(of.asDiagonal()) - of * of.transpose());
    for (const auto& e : c.doc(i)) {
        double q = theta.theta.col(e.term).dot(om);
        if (!(q > 0))
            throw ValidationError("zero fitted probability in phi block");
        Eigen::VectorXd wt = of.cwiseProduct(theta.theta.col(e.term).tail(K - 1));
        blk -= e.count * (Eigen::MatrixXd((wt / q).asDiagonal()) -
                          (wt / q) * (wt / q).transpose());
    }
    if (!blk.allFinite())
        throw ValidationError("non-finite phi block at document " + std::to_string(i));
    return blk;
}

}  // namespace

Eigen::MatrixXd theta_block(int j, const CountMatrix& c, const TopicMatrix& theta,
                            const WeightMatrix& w, const Priors& pr) {
    int K = theta.K();
    if ((theta.theta.col(j).array() <= 0).any())
        throw ValidationError("zero theta entry in theta block");
    Eigen::MatrixXd blk = Eigen::MatrixXd::Zero(K, K);
    for (int i = 0; i < c.n(); ++i) {
        const auto& doc = c.doc(i);
        auto it = std::lower_bound(doc.begin(), doc.end(), j,
                                   [](const CountMatrix::Entry& e, int t) {
                                       return e.term < t;
                                   });
        if (it == doc.end() || it->term != j) continue;
        double q = doc_q(theta, w, i, j);
        Eigen::VectorXd om = w.omega.row(i).transpose();
        blk += (it->count / (q * q)) * om * om.transpose();
    }
    blk.diagonal() += pr.alpha.col(j).cwiseQuotient(theta.theta.col(j).array().square().matrix());
    return blk;
}

Eigen::MatrixXd phi_block(int i, const CountMatrix& c, const TopicMatrix& theta,
                          const WeightMatrix& w, const Priors& pr) {
    return phi_block_impl(i, c, theta, w, pr);
}

HessianBlocks compute_blocks(const CountMatrix& c, const TopicMatrix& theta,
                             const WeightMatrix& w, const Priors& pr, int threads) {
    int K = theta.K(), p = theta.p(), n = c.n();
    HessianBlocks blocks;
    blocks.theta_blocks.assign(p, Eigen::MatrixXd::Zero(K, K));
    blocks.phi_blocks.resize(n);

    int nchunks = std::max(threads, 1);
    std::vector<std::vector<Eigen::MatrixXd>> acc(
        nchunks, std::vector<Eigen::MatrixXd>(p, Eigen::MatrixXd::Zero(K, K)));
    parallel_chunks(n, threads, [&](int chunk, int begin, int end) {
        for (int i = begin; i < end; ++i) {
            blocks.phi_blocks[i] = phi_block_impl(i, c, theta, w, pr);
            Eigen::VectorXd om = w.omega.row(i).transpose();
            for (const auto& e : c.doc(i)) {
                double q = theta.theta.col(e.term).dot(om);
                if (!(q > 0))
                    throw ValidationError("zero fitted probability in theta block");
                acc[chunk][e.term] += (e.count / (q * q)) * om * om.transpose();
            }
        }
    });
    for (int t = 0; t < nchunks; ++t)
        for (int j = 0; j < p; ++j) blocks.theta_blocks[j] += acc[t][j];
    for (int j = 0; j < p; ++j)
        blocks.theta_blocks[j].diagonal() +=
            pr.alpha.col(j).cwiseQuotient(theta.theta.col(j).array().square().matrix());
    return blocks;
}

namespace {

double one_logdet(Eigen::MatrixXd m, bool jitter, const std::string& label) {
    if (m.size() == 0) return 0.0;
    if (jitter)
        m.diagonal().array() += 1e-8 * m.trace() / m.rows();
    Eigen::LLT<Eigen::MatrixXd> llt(m);
    if (llt.info() != Eigen::Success)
        throw Error("Cholesky factorization failed for " + label);
    return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

}  // namespace

double block_logdet(const HessianBlocks& blocks, bool jitter) {
    double ld = 0.0;
    for (std::size_t j = 0; j < blocks.theta_blocks.size(); ++j)
        ld += one_logdet(blocks.theta_blocks[j], jitter,
                         "theta block " + std::to_string(j));
    for (std::size_t i = 0; i < blocks.phi_blocks.size(); ++i)
        ld += one_logdet(blocks.phi_blocks[i], jitter,
                         "phi block " + std::to_string(i));
    return ld;
}

MarginalLikelihood log_marginal_likelihood(const CountMatrix& c,
                                           const FitResult& fitted,
                                           const Priors& pr, int threads) {
    const TopicMatrix& theta = fitted.theta;
    const WeightMatrix& w = fitted.weights;
    int K = theta.K();
    MarginalLikelihood out;
    out.d_effective =
        K * theta.p() +
        static_cast<int>((w.omega.array() > kWeightDimThreshold).count());

    HessianBlocks blocks = compute_blocks(c, theta, w, pr, threads);
    double ld;
    try {
        ld = block_logdet(blocks, false);
    } catch (const Error&) {
        ld = block_logdet(blocks, true);
    }
    double lp = log_joint_posterior(c, theta, w, pr, /*absolute=*/true);
    out.log_marginal = lp - 0.5 * ld +
                       0.5 * out.d_effective * std::log(2.0 * M_PI) +
                       std::lgamma(K + 1.0);
    return out;
}

Dispersion dispersion(const CountMatrix& c, const TopicMatrix& theta,
                      const WeightMatrix& w, int d_effective) {
    int n = c.n(), p = c.p();
    double D = 0.0;
    long nhat = 0;
    for (int i = 0; i < n; ++i) {
        double m = c.total(i);
        Eigen::VectorXd q = theta.theta.transpose() * w.omega.row(i).transpose();
        for (int j = 0; j < p; ++j) {
            if (!(q[j] > 0) || !(q[j] < 1))
                throw ValidationError("fitted probability outside (0,1) in dispersion");
            D += m * q[j] / (1.0 - q[j]);
            if (m * q[j] > kFittedCountThreshold) ++nhat;
        }
        for (const auto& e : c.doc(i)) {
            double qj = q[e.term];
            double xhat = m * qj;
            D += (e.count * e.count - 2.0 * e.count * xhat) /
                 (m * qj * (1.0 - qj));
        }
    }
    Dispersion out;
    out.nu = static_cast<double>(nhat) - d_effective;
    if (!(out.nu > 0))
        throw ValidationError("non-positive degrees of freedom: model too large for data");
    out.D = D;
    out.sigma2 = D / out.nu;
    out.pvalue = chi2_upper_tail(D, out.nu);
    return out;
}

Priors PriorOptions::make(int K, int p) const {
    return Priors::with_alpha(
        K, p, omega_concentration.value_or(1.0 / K),
        alpha.value_or(1.0 / (static_cast<double>(K) * p)));
}

SelectionReport select_K(const CountMatrix& c, int kmin, int kmax,
                         const PriorOptions& prior_opts, const FitConfig& cfg,
                         const FitCallback& progress) {
    if (kmin < 1 || kmax < kmin)
        throw ValidationError("bad K range for selection sweep");

    // K = 1 reference for Bayes factors, whether or not it is in range.
    Priors pr1 = prior_opts.make(1, c.p());
    FitResult fit1 = fit(c, 1, pr1, cfg);
    double lm1 = log_marginal_likelihood(c, fit1, pr1, cfg.threads).log_marginal;

    SelectionReport report;
    std::optional<FitResult> prev;
    int prev_K = 0;
    for (int K = kmin; K <= kmax; ++K) {
        SelectionRecord rec;
        rec.K = K;
        try {
            Priors pr = prior_opts.make(K, c.p());
            FitResult fr;
            if (K == 1) {
                fr = fit1;
            } else if (prev && prev_K == K - 1) {
                FitResult start = append_residual_topic(c, *prev, pr);
                fr = fit(c, K, pr, cfg, start, progress);
            } else {
                fr = fit(c, K, pr, cfg, std::nullopt, progress);
            }
            auto ml = log_marginal_likelihood(c, fr, pr, cfg.threads);
            auto disp = dispersion(c, fr.theta, fr.weights, ml.d_effective);
            rec.ok = true;
            rec.log_marginal = ml.log_marginal;
            rec.log_bf_vs_1 = ml.log_marginal - lm1;
            rec.d_effective = ml.d_effective;
            rec.sigma2 = disp.sigma2;
            rec.nu = disp.nu;
            rec.D = disp.D;
            rec.pvalue = disp.pvalue;
            prev = std::move(fr);
            prev_K = K;
        } catch (const Error& e) {
            rec.ok = false;
            rec.error = e.what();
        }
        report.records.push_back(std::move(rec));
    }
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& r : report.records)
        if (r.ok && r.log_marginal > best) {
            best = r.log_marginal;
            report.best_K = r.K;
        }
    return report;
}

void SelectionReport::write_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write report file: " + path);
    out << "K,log_marginal,log_bf_vs_1,d_eff,dispersion,nu,D,pvalue,status\n";
    char buf[40];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        return std::string(buf);
    };
    for (const auto& r : records) {
        if (r.ok) {
            out << r.K << ',' << num(r.log_marginal) << ',' << num(r.log_bf_vs_1)
                << ',' << r.d_effective << ',' << num(r.sigma2) << ',' << num(r.nu)
                << ',' << num(r.D) << ',' << num(r.pvalue) << ",ok\n";
        } else {
            out << r.K << ",NA,NA,NA,NA,NA,NA,NA,failed\n";
        }
    }
    if (!out)
        throw Error("write failed: " + path);
}

std::string SelectionReport::summary() const {
    std::ostringstream s;
    s << "best_K " << best_K << '\n';
    for (const auto& r : records) {
        if (r.ok) {
            char line[256];
            std::snprintf(line, sizeof line,
                          "K=%d  log_bf=%.4g  dispersion=%.4g  pvalue=%.4g\n", r.K,
                          r.log_bf_vs_1, r.sigma2, r.pvalue);
            s << line;
        } else {
            s << "K=" << r.K << "  failed: " << r.error << '\n';
        }
    }
    return s.str();
}

}  // namespace topics
