#include "topics/params.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace topics {

void TopicMatrix::validate(double row_tol) const {
    for (int k = 0; k < K(); ++k) {
        if ((theta.row(k).array() <= 0).any())
            throw ValidationError("theta row " + std::to_string(k) +
                                  " has a non-positive entry");
        if (std::abs(theta.row(k).sum() - 1.0) > row_tol)
            throw ValidationError("theta row " + std::to_string(k) +
                                  " does not sum to one");
    }
}

void WeightMatrix::validate(double row_tol, double pair_tol) const {
    if (phi.rows() != omega.rows() || phi.cols() != omega.cols() - 1)
        throw ValidationError("omega/phi shape mismatch");
    for (int i = 0; i < n(); ++i) {
        if ((omega.row(i).array() <= 0).any())
            throw ValidationError("omega row " + std::to_string(i) +
                                  " has a non-positive entry");
        if (std::abs(omega.row(i).sum() - 1.0) > row_tol)
            throw ValidationError("omega row " + std::to_string(i) +
                                  " does not sum to one");
        Eigen::VectorXd back = nef_to_simplex(phi.row(i).transpose());
        if ((back - omega.row(i).transpose()).cwiseAbs().maxCoeff() > pair_tol)
            throw ValidationError("omega/phi rows inconsistent at document " +
                                  std::to_string(i));
    }
}

WeightMatrix WeightMatrix::from_omega(Eigen::MatrixXd omega) {
    WeightMatrix w;
    auto n = omega.rows();
    auto K = omega.cols();
    w.phi.resize(n, K - 1);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd row = floor_simplex(omega.row(i).transpose());
        omega.row(i) = row.transpose();
        w.phi.row(i) = simplex_to_nef(row).transpose();
    }
    w.omega = std::move(omega);
    return w;
}

WeightMatrix WeightMatrix::from_phi(Eigen::MatrixXd phi) {
    WeightMatrix w;
    auto n = phi.rows();
    auto K = phi.cols() + 1;
    w.omega.resize(n, K);
    for (Eigen::Index i = 0; i < n; ++i)
        w.omega.row(i) = nef_to_simplex(phi.row(i).transpose()).transpose();
    w.phi = std::move(phi);
    return w;
}

Priors Priors::defaults(int K, int p) {
    Priors pr;
    pr.omega_concentration = 1.0 / K;
    pr.alpha = Eigen::MatrixXd::Constant(K, p, 1.0 / (static_cast<double>(K) * p));
    return pr;
}

Priors Priors::with_alpha(int K, int p, double omega_conc, double alpha_scalar) {
    Priors pr;
    pr.omega_concentration = omega_conc;
    pr.alpha = Eigen::MatrixXd::Constant(K, p, alpha_scalar);
    pr.validate();
    return pr;
}

void Priors::validate() const {
    if (!(omega_concentration > 0))
        throw ValidationError("omega concentration must be positive");
    if ((alpha.array() <= 0).any())
        throw ValidationError("alpha entries must be positive");
}

Eigen::VectorXd nef_to_simplex(const Eigen::VectorXd& phi) {
    if (!phi.allFinite())
        throw ValidationError("non-finite NEF coordinates");
    auto K = phi.size() + 1;
    Eigen::VectorXd z(K);
    z[0] = 0.0;
    z.tail(K - 1) = phi;
    double zmax = z.maxCoeff();
    Eigen::VectorXd w = (z.array() - zmax).exp();
    return w / w.sum();
}

Eigen::VectorXd simplex_to_nef(const Eigen::VectorXd& omega) {
    if ((omega.array() <= 0).any())
        throw ValidationError("boundary simplex point has no NEF image");
    auto K = omega.size();
    Eigen::VectorXd phi(K - 1);
    for (Eigen::Index k = 1; k < K; ++k)
        phi[k - 1] = std::log(omega[k] / omega[0]);
    return phi;
}

Eigen::VectorXd floor_simplex(Eigen::VectorXd omega) {
    bool clamped = (omega.array() < kSimplexFloor).any();
    if (clamped) omega = omega.cwiseMax(kSimplexFloor);
    double s = omega.sum();
    if (clamped || std::abs(s - 1.0) > 1e-12) omega /= s;
    return omega;
}

double nef_jacobian_logdet(const Eigen::VectorXd& omega) {
    if ((omega.array() <= 0).any())
        throw ValidationError("Jacobian log-determinant undefined at the boundary");
    return omega.array().log().sum();
}

namespace {

double data_term(const CountMatrix& c, const Eigen::MatrixXd& theta,
                 const Eigen::MatrixXd& omega) {
    double ll = 0.0;
    for (int i = 0; i < c.n(); ++i) {
        for (const auto& e : c.doc(i)) {
            double q = omega.row(i).dot(theta.col(e.term));
            if (!(q > 0))
                throw ValidationError("zero fitted probability at a positive count");
            ll += e.count * std::log(q);
        }
    }
    return ll;
}

}  // namespace

double log_joint_posterior(const CountMatrix& c, const TopicMatrix& theta,
                           const WeightMatrix& w, const Priors& pr,
                           bool absolute) {
    if (theta.p() != c.p() || w.n() != c.n() || w.K() != theta.K())
        throw ValidationError("dimension mismatch in log joint posterior");
    double lp = data_term(c, theta.theta, w.omega);
    lp += pr.omega_concentration * w.omega.array().log().sum();
    lp += (pr.alpha.array() * theta.theta.array().log()).sum();
    if (absolute) {
        for (int i = 0; i < c.n(); ++i) {
            lp += std::lgamma(c.total(i) + 1.0);
            for (const auto& e : c.doc(i)) lp -= std::lgamma(e.count + 1.0);
        }
        // Dir(conc+1) and Dir(alpha+1) normalizing constants.
        int K = theta.K();
        double a = pr.omega_concentration + 1.0;
        lp += c.n() * (std::lgamma(K * a) - K * std::lgamma(a));
        for (int k = 0; k < K; ++k) {
            double s = 0.0, t = 0.0;
            for (int j = 0; j < theta.p(); ++j) {
                s += pr.alpha(k, j) + 1.0;
                t += std::lgamma(pr.alpha(k, j) + 1.0);
            }
            lp += std::lgamma(s) - t;
        }
    }
    return lp;
}

double log_joint_raw(const CountMatrix& c, const Eigen::MatrixXd& theta_raw,
                     const Eigen::MatrixXd& phi, const Priors& pr) {
    auto n = phi.rows();
    Eigen::MatrixXd omega(n, phi.cols() + 1);
    for (Eigen::Index i = 0; i < n; ++i)
        omega.row(i) = nef_to_simplex(phi.row(i).transpose()).transpose();
    double lp = data_term(c, theta_raw, omega);
    lp += pr.omega_concentration * omega.array().log().sum();
    lp += (pr.alpha.array() * theta_raw.array().log()).sum();
    return lp;
}

namespace {

void write_matrix(std::ostream& out, const char* name, const Eigen::MatrixXd& m) {
    out << name << '\n';
    char buf[40];
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
            out << buf << (c + 1 == m.cols() ? '\n' : ' ');
        }
    }
}

Eigen::MatrixXd read_matrix(std::istream& in, const std::string& name,
                            Eigen::Index rows, Eigen::Index cols) {
    std::string key;
    in >> key;
    if (key != name)
        throw Error("model file: expected section \"" + name + "\", got \"" + key + "\"");
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c)
            if (!(in >> m(r, c)))
                throw Error("model file: truncated section \"" + name + "\"");
    return m;
}

}  // namespace

void save_model(const Model& m, const std::string& path) {
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write model file: " + path);
    char buf[40];
    out << "topics-model 1\n";
    out << "K " << m.theta.K() << "\np " << m.theta.p() << "\nn " << m.weights.n()
        << '\n';
    std::snprintf(buf, sizeof buf, "%.17g", m.priors.omega_concentration);
    out << "omega_concentration " << buf << '\n';
    write_matrix(out, "alpha", m.priors.alpha);
    write_matrix(out, "theta", m.theta.theta);
    write_matrix(out, "omega", m.weights.omega);
    std::snprintf(buf, sizeof buf, "%.17g", m.log_posterior);
    out << "log_posterior " << buf << '\n';
    if (!out)
        throw Error("write failed: " + path);
}

Model load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("cannot open model file: " + path);
    std::string magic;
    int version = 0;
    in >> magic >> version;
    if (magic != "topics-model" || version != 1)
        throw Error("not a topics model file: " + path);
    std::string key;
    int K = 0, p = 0, n = 0;
    in >> key >> K;
    if (key != "K") throw Error("model file: missing K");
    in >> key >> p;
    if (key != "p") throw Error("model file: missing p");
    in >> key >> n;
    if (key != "n") throw Error("model file: missing n");
    Model m;
    in >> key >> m.priors.omega_concentration;
    if (key != "omega_concentration")
        throw Error("model file: missing omega_concentration");
    m.priors.alpha = read_matrix(in, "alpha", K, p);
    m.theta.theta = read_matrix(in, "theta", K, p);
    Eigen::MatrixXd omega = read_matrix(in, "omega", n, K);
    in >> key >> m.log_posterior;
    if (key != "log_posterior")
        throw Error("model file: missing log_posterior");
    m.weights = WeightMatrix::from_omega(std::move(omega));
    m.priors.validate();
    return m;
}

}  // namespace topics
