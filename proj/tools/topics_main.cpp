#include <CLI11.hpp>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>

#include "topics/corpus.hpp"
#include "topics/estimator.hpp"
#include "topics/parallel.hpp"
#include "topics/selection.hpp"
#include "topics/simulate.hpp"

namespace {

using namespace topics;

struct CommonOpts {
    double tol = 0.1;
    int max_iters = 1000;
    std::uint64_t seed = 0;
    bool no_accel = false;

    FitConfig config() const {
        FitConfig cfg;
        cfg.tol = tol;
        cfg.max_iters = max_iters;
        cfg.seed = seed;
        cfg.acceleration = !no_accel;
        cfg.threads = env_thread_count();
        return cfg;
    }
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--tol", o.tol, "absolute log-posterior convergence tolerance");
    cmd->add_option("--max-iters", o.max_iters, "outer iteration cap");
    cmd->add_option("--seed", o.seed, "random seed");
    cmd->add_flag("--no-accel", o.no_accel, "disable quasi-Newton acceleration");
}

int run_fit(const std::string& data, const std::string& vocab_path, int K,
            const CommonOpts& common, std::optional<double> omega_conc,
            std::optional<double> alpha, const std::string& out, bool verbose) {
    CountMatrix c = load_counts(data);
    PriorOptions popts{omega_conc, alpha};
    Priors pr = popts.make(K, c.p());
    FitConfig cfg = common.config();
    FitCallback progress = nullptr;
    if (verbose)
        progress = [](int it, double lp, double dw) {
            std::fprintf(stderr, "iter %d  logpost %.4g  max-dw %.4g\n", it, lp, dw);
        };
    FitResult fr = fit(c, K, pr, cfg, std::nullopt, progress);

    Model m{fr.theta, fr.weights, pr, fr.logpost_trace.back()};
    save_model(m, out);
    std::printf("K=%d iterations=%d logpost=%.4g converged=%s\n", K, fr.iterations,
                fr.logpost_trace.back(), fr.converged ? "yes" : "no");
    if (!vocab_path.empty()) {
        // top terms per topic, ranked by lift
        Vocabulary v = load_vocabulary(vocab_path);
        if (v.size() != c.p())
            throw Error("vocabulary size does not match data");
        Eigen::MatrixXd lift = term_lift(fr.theta.theta, c);
        for (int k = 0; k < K; ++k) {
            std::vector<int> order;
            for (int j = 0; j < c.p(); ++j)
                if (std::isfinite(lift(k, j))) order.push_back(j);
            std::partial_sort(order.begin(),
                              order.begin() + std::min<std::size_t>(5, order.size()),
                              order.end(), [&](int a, int b) {
                                  return lift(k, a) > lift(k, b);
                              });
            std::printf("topic %d:", k + 1);
            for (std::size_t t = 0; t < std::min<std::size_t>(5, order.size()); ++t)
                std::printf(" %s", v.term(order[t]).c_str());
            std::printf("\n");
        }
    }
    return fr.converged ? 0 : 2;
}

int run_select(const std::string& data, int kmin, int kmax, const CommonOpts& common,
               std::optional<double> omega_conc, std::optional<double> alpha,
               const std::string& out) {
    CountMatrix c = load_counts(data);
    PriorOptions popts{omega_conc, alpha};
    SelectionReport rep = select_K(c, kmin, kmax, popts, common.config());
    rep.write_csv(out);
    std::fputs(rep.summary().c_str(), stdout);
    return 0;
}

int run_simulate(const SimConfig& sim, const std::string& out) {
    SimOutput s = generate(sim);
    save_counts(s.counts, out + "_counts.tsv");
    Model truth{s.true_theta, s.true_omega,
                Priors::defaults(sim.K_true, sim.p), 0.0};
    save_model(truth, out + "_truth.model");
    std::printf("n=%d p=%d K=%d documents written to %s_counts.tsv\n", sim.n, sim.p,
                sim.K_true, out.c_str());
    return 0;
}

int run_predict(const std::string& model_path, const std::string& data,
                const std::string& omega_out) {
    Model m = load_model(model_path);
    CountMatrix c = load_counts(data);
    if (c.p() != m.theta.p())
        throw Error("model vocabulary size " + std::to_string(m.theta.p()) +
                    " does not match data " + std::to_string(c.p()));
    FitConfig cfg;
    cfg.threads = env_thread_count();
    double total = 0.0;
    Eigen::MatrixXd omegas(c.n(), m.theta.K());
    std::vector<double> ll(c.n());
    parallel_chunks(c.n(), cfg.threads, [&](int, int begin, int end) {
        for (int i = begin; i < end; ++i) {
            Prediction pred = predict_weights(c.doc(i), m.theta, m.priors, cfg);
            omegas.row(i) = pred.omega.transpose();
            ll[i] = pred.loglik;
        }
    });
    for (int i = 0; i < c.n(); ++i) {
        total += ll[i];
        std::printf("doc %d loglik %.4g\n", i, ll[i]);
    }
    std::printf("total %.4g\n", total);
    if (!omega_out.empty()) {
        std::ofstream f(omega_out);
        if (!f) throw Error("cannot write " + omega_out);
        char buf[40];
        for (int i = 0; i < c.n(); ++i)
            for (int k = 0; k < omegas.cols(); ++k) {
                std::snprintf(buf, sizeof buf, "%.17g", omegas(i, k));
                f << buf << (k + 1 == omegas.cols() ? '\n' : ',');
            }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MAP topic model estimation and selection"};
    app.require_subcommand(1);

    CommonOpts common;
    std::string data, out, vocab, model_path, omega_out;
    std::optional<double> omega_conc, alpha;
    int K = 0, kmin = 1, kmax = 1;
    bool verbose = false;
    SimConfig sim;

    auto* cfit = app.add_subcommand("fit", "fit a K-topic model");
    cfit->add_option("--data", data, "counts file")->required();
    cfit->add_option("--k", K, "number of topics")->required();
    cfit->add_option("--vocab", vocab, "vocabulary file (one term per line)");
    cfit->add_option("--alpha", alpha, "topic prior concentration");
    cfit->add_option("--omega-conc", omega_conc, "weight prior concentration");
    cfit->add_option("--out", out, "model output path")->default_val("model.txt");
    cfit->add_flag("-v,--verbose", verbose, "per-iteration progress on stderr");
    add_common(cfit, common);

    auto* csel = app.add_subcommand("select", "sweep K and score each model");
    csel->add_option("--data", data, "counts file")->required();
    csel->add_option("--kmin", kmin, "smallest K")->required();
    csel->add_option("--kmax", kmax, "largest K")->required();
    csel->add_option("--alpha", alpha, "topic prior concentration");
    csel->add_option("--omega-conc", omega_conc, "weight prior concentration");
    csel->add_option("--out", out, "report CSV path")->default_val("selection.csv");
    add_common(csel, common);

    auto* csim = app.add_subcommand("simulate", "generate a synthetic corpus");
    csim->add_option("--n", sim.n, "documents");
    csim->add_option("--p", sim.p, "vocabulary size");
    csim->add_option("--k", sim.K_true, "true topic count");
    csim->add_option("--m", sim.M, "expected document size");
    csim->add_option("--seed", sim.seed, "random seed");
    csim->add_option("--out", out, "output path prefix")->required();

    auto* cpred = app.add_subcommand("predict", "score held-out documents");
    cpred->add_option("--model", model_path, "fitted model file")->required();
    cpred->add_option("--data", data, "counts file")->required();
    cpred->add_option("--omega-out", omega_out, "CSV of fitted weight rows");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (cfit->parsed())
            return run_fit(data, vocab, K, common, omega_conc, alpha, out, verbose);
        if (csel->parsed())
            return run_select(data, kmin, kmax, common, omega_conc, alpha, out);
        if (csim->parsed()) {
            sim.validate();
            return run_simulate(sim, out);
        }
        if (cpred->parsed())
            return run_predict(model_path, data, omega_out);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
