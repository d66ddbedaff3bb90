#pragma once

#include "argmax_bayes/linalg.hpp"
#include "argmax_bayes/parallel.hpp"
#include "argmax_bayes/rng.hpp"
#include "argmax_bayes/tensor_basis.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace argmax_bayes {

/// theta | sigma^2 ~ N_J(eta, sigma^2 Omega).
struct GaussianCoeffPrior {
    Eigen::VectorXd eta;
    Eigen::MatrixXd omega;
    bool omega_is_identity = false;
    double eig_lo = 0.0, eig_hi = 0.0;  // verified eigenvalue bounds of Omega

    GaussianCoeffPrior(Eigen::VectorXd eta_, Eigen::MatrixXd omega_)
        : eta(std::move(eta_)), omega(std::move(omega_)) {
        if (omega.rows() != omega.cols() || eta.size() != omega.rows())
            throw std::invalid_argument("GaussianCoeffPrior: size mismatch");
        if (!eta.allFinite()) throw std::invalid_argument("GaussianCoeffPrior: eta must be finite");
        if (omega.isIdentity(0.0)) {
            omega_is_identity = true;
            eig_lo = eig_hi = 1.0;
            return;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(omega, Eigen::EigenvaluesOnly);
        eig_lo = eig.eigenvalues().minCoeff();
        eig_hi = eig.eigenvalues().maxCoeff();
        if (eig_lo <= 0.0)
            throw std::invalid_argument("GaussianCoeffPrior: Omega not positive definite");
    }

    static GaussianCoeffPrior identity(long J) {
        GaussianCoeffPrior p{Eigen::VectorXd::Zero(J), Eigen::MatrixXd::Identity(J, J)};
        return p;
    }

    Eigen::MatrixXd omega_inverse() const {
        if (omega_is_identity) return Eigen::MatrixXd::Identity(omega.rows(), omega.cols());
        return spd_inverse(omega, "GaussianCoeffPrior::omega_inverse");
    }
};

/// Inverse-gamma hyperparameters for the hierarchical variance prior:
/// sigma^2 ~ IG(beta1/2, beta2/2) with beta1 > 4 so the posterior mean exists.
struct IgHyper {
    double beta1 = 5.0;
    double beta2 = 1.0;
};

/// Posterior update sigma^2 | Y ~ IG[(beta1+n)/2, (beta2 + n sigma2_hat)/2].
inline std::pair<double, double> ig_update(const IgHyper& hyper, long n, double sigma2_hat) {
    if (!(hyper.beta1 > 4.0)) throw std::invalid_argument("ig_update: beta1 must be > 4");
    if (!(hyper.beta2 > 0.0)) throw std::invalid_argument("ig_update: beta2 must be > 0");
    if (n < 1) throw std::invalid_argument("ig_update: n must be >= 1");
    if (sigma2_hat < 0.0) throw std::invalid_argument("ig_update: sigma2_hat must be >= 0");
    return {(hyper.beta1 + n) / 2.0, (hyper.beta2 + n * sigma2_hat) / 2.0};
}

enum class SigmaLaw { Empirical, InverseGamma };

/// Error-variance handling attached to a fitted posterior: either the plug-in
/// empirical Bayes estimate or an inverse-gamma posterior law.
struct SigmaMode {
    SigmaLaw law = SigmaLaw::Empirical;
    double sigma2_hat = 0.0;  // empirical Bayes estimate feeding either mode
    double shape = 0.0, scale = 0.0;

    static SigmaMode empirical(double sigma2) { return {SigmaLaw::Empirical, sigma2, 0.0, 0.0}; }
    static SigmaMode inverse_gamma(const IgHyper& hyper, long n, double sigma2) {
        auto [shape, scale] = ig_update(hyper, n, sigma2);
        return {SigmaLaw::InverseGamma, sigma2, shape, scale};
    }

    double mean_sigma2() const {
        return law == SigmaLaw::Empirical ? sigma2_hat : scale / (shape - 1.0);
    }

    /// sigma^2 used by one sampled path.
    double draw_sigma2(Rng& rng) const {
        return law == SigmaLaw::Empirical ? sigma2_hat : rng.inverse_gamma(shape, scale);
    }
};

struct VarianceEstimate {
    double value = 0.0;
    enum class Method { empirical, posterior_mean_ig } method = Method::empirical;
    IgHyper hyper;
};

/// Gaussian law over spline coefficients given the data: mean and a
/// factorization of the precision B^T B + Omega^{-1}.
struct CoefficientPosterior {
    Eigen::VectorXd mean;
    std::shared_ptr<const SpdSolver> precision;
    SigmaMode sigma;
    long n = 0;
};

struct FitOptions {
    SigmaLaw law = SigmaLaw::Empirical;
    IgHyper hyper;
};

namespace detail {

/// Woodbury form of (Y - B eta)^T (B Omega B^T + I)^{-1} (Y - B eta) / n,
/// using only the J x J factorization of B^T B + Omega^{-1}.
inline double empirical_sigma2_impl(const SparseDesign& design, const Eigen::VectorXd& y,
                                    const Eigen::VectorXd& eta, const SpdSolver& precision) {
    Eigen::VectorXd resid = y;
    if (!eta.isZero(0.0)) resid -= design.mult(eta);
    Eigen::VectorXd bt_r = design.mult_transpose(resid);
    double value = (resid.squaredNorm() - bt_r.dot(precision.solve(bt_r))) /
                   static_cast<double>(design.rows());
    return std::max(value, 0.0);
}

}  // namespace detail

/// Empirical Bayes variance estimate from a dense design matrix.
inline VarianceEstimate empirical_sigma2(const Eigen::MatrixXd& B, const Eigen::VectorXd& Y,
                                         const GaussianCoeffPrior& prior) {
    if (B.rows() < 1 || B.rows() != Y.size())
        throw std::invalid_argument("empirical_sigma2: need n >= 1 with matching Y");
    Eigen::MatrixXd P = B.transpose() * B + prior.omega_inverse();
    SpdSolver solver(P, "empirical_sigma2");
    Eigen::VectorXd resid = Y - B * prior.eta;
    Eigen::VectorXd bt_r = B.transpose() * resid;
    double value = (resid.squaredNorm() - bt_r.dot(solver.solve(bt_r))) /
                   static_cast<double>(B.rows());
    return {std::max(value, 0.0), VarianceEstimate::Method::empirical, {}};
}

/// Conjugate update: mean = (B^T B + Omega^{-1})^{-1} (B^T Y + Omega^{-1} eta).
inline CoefficientPosterior fit(const TensorBasisSpec& spec, const std::vector<Point>& X,
                                const Eigen::VectorXd& Y, const GaussianCoeffPrior& prior,
                                const FitOptions& options = {}) {
    if (X.empty() || static_cast<long>(X.size()) != Y.size())
        throw std::invalid_argument("fit: need n >= 1 design points with matching responses");
    const long J = spec.total_size();
    if (prior.eta.size() != J) throw std::invalid_argument("fit: prior dimension mismatch");

    SparseDesign design(spec, X);
    Eigen::MatrixXd omega_inv = prior.omega_inverse();
    Eigen::MatrixXd P = design.gram() + omega_inv;
    auto precision = std::make_shared<SpdSolver>(P, "fit");

    Eigen::VectorXd rhs = design.mult_transpose(Y);
    if (!prior.eta.isZero(0.0)) rhs += omega_inv * prior.eta;

    CoefficientPosterior post;
    post.mean = precision->solve(rhs);
    post.n = static_cast<long>(X.size());
    double sigma2 = detail::empirical_sigma2_impl(design, Y, prior.eta, *precision);
    post.sigma = options.law == SigmaLaw::Empirical
                     ? SigmaMode::empirical(sigma2)
                     : SigmaMode::inverse_gamma(options.hyper, post.n, sigma2);
    post.precision = std::move(precision);
    return post;
}

/// Posterior process for D^r f: center b_{J,q-r}(x)^T W_r mean and covariance
/// kernel sigma^2 b(x)^T W_r (B^T B + Omega^{-1})^{-1} W_r^T b(y). All state
/// is immutable after construction; evaluation and sampling are pure given an
/// explicit seed.
class SurfacePosterior {
public:
    SurfacePosterior(TensorBasisSpec basis, CoefficientPosterior coeff)
        : basis_(std::move(basis)), coeff_(std::move(coeff)) {
        if (coeff_.mean.size() != basis_.total_size())
            throw std::invalid_argument("SurfacePosterior: coefficient length mismatch");
        const int d = basis_.dim();
        wr_axis_.resize(d);
        reduced_axis_.resize(d);
        for (int k = 0; k < d; ++k) {
            const KnotVector& kv = basis_.axis(k);
            KnotVector red = kv;
            for (int r = 0; r < kv.order(); ++r) {
                wr_axis_[k].push_back(derivative_matrix(kv, r));
                reduced_axis_[k].push_back(red);
                if (r + 1 < kv.order()) red = red.reduced();
            }
        }
    }

    const TensorBasisSpec& basis() const { return basis_; }
    const CoefficientPosterior& coeff() const { return coeff_; }

    /// W_r^T b_{J,q-r}(x): the J-vector a with D^r f(x) = a . theta.
    Eigen::VectorXd deriv_row(const DerivOrder& r, const Point& x) const {
        basis_.validate_point(x);
        basis_.validate_deriv(r);
        Eigen::VectorXd row = Eigen::VectorXd::Ones(1);
        for (int k = 0; k < basis_.dim(); ++k) {
            const Eigen::VectorXd bk = reduced_axis_[k][r.r[k]].eval(x[k]);
            row = kron(row, Eigen::VectorXd(wr_axis_[k][r.r[k]].transpose() * bk));
        }
        return row;
    }

    /// Posterior center of D^r f at x (the A_r Y + c_r eta process mean).
    double center_at(const DerivOrder& r, const Point& x) const {
        return deriv_row(r, x).dot(coeff_.mean);
    }

    /// Covariance kernel Sigma_r(x, y) (without the sigma^2 factor).
    double kernel(const DerivOrder& r, const Point& x, const Point& y) const {
        return deriv_row(r, x).dot(coeff_.precision->solve(deriv_row(r, y)));
    }

    /// Coefficient draws, one substream per row: theta_s = mean + sigma_s L^{-T} z.
    Eigen::MatrixXd sample_coeffs(long count, std::uint64_t seed) const {
        if (count < 1) throw std::invalid_argument("sample_coeffs: count must be >= 1");
        const long J = coeff_.mean.size();
        Eigen::MatrixXd draws(count, J);
        for (long s = 0; s < count; ++s) draws.row(s) = sample_coeff_row(s, seed).transpose();
        return draws;
    }

    Eigen::VectorXd sample_coeff_row(long path_index, std::uint64_t seed) const {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(path_index));
        const double sigma = std::sqrt(coeff_.sigma.draw_sigma2(rng));
        Eigen::VectorXd z(coeff_.mean.size());
        for (long j = 0; j < z.size(); ++j) z[j] = rng.normal();
        return coeff_.mean + sigma * coeff_.precision->unwhiten(z);
    }

    /// Joint draws of D^r f on a list of points; row s is path s.
    Eigen::MatrixXd sample_paths(const DerivOrder& r, const std::vector<Point>& grid,
                                 long count, std::uint64_t seed) const {
        if (grid.empty()) throw std::invalid_argument("sample_paths: empty grid");
        Eigen::MatrixXd A(static_cast<long>(grid.size()), coeff_.mean.size());
        for (std::size_t i = 0; i < grid.size(); ++i)
            A.row(static_cast<long>(i)) = deriv_row(r, grid[i]).transpose();
        Eigen::MatrixXd coeffs = sample_coeffs(count, seed);
        return coeffs * A.transpose();
    }

private:
    TensorBasisSpec basis_;
    CoefficientPosterior coeff_;
    std::vector<std::vector<Eigen::MatrixXd>> wr_axis_;   // [axis][r]
    std::vector<std::vector<KnotVector>> reduced_axis_;   // [axis][r]
};

/// One candidate in the J-selection grid.
struct JCandidateScore {
    std::vector<int> J;
    double logscore = -std::numeric_limits<double>::infinity();
    double sigma2_hat = 0.0;
    bool oversized = false;  // J > n
};

struct JSelection {
    std::vector<JCandidateScore> scores;  // lexicographic candidate order
    std::size_t best = 0;
    std::vector<std::string> warnings;

    const JCandidateScore& chosen() const { return scores[best]; }
};

struct JSelectOptions {
    std::vector<int> orders;  // per-axis spline order
    int j_max = 20;
    // Recompute sigma_tilde per candidate (the internally consistent
    // empirical Bayes choice) or fix it at the most flexible candidate.
    bool fix_sigma_at_reference = false;
    int threads = 0;
    // Prior for a candidate with the given per-axis sizes; defaults to
    // eta = 0, Omega = I.
    std::function<GaussianCoeffPrior(long)> prior_factory;
};

namespace detail {

struct CandidateFit {
    double sigma2 = 0.0;
    double logdet = 0.0;   // logdet(Omega B^T B + I_J)
    double quad = 0.0;     // (Y - B eta)^T (B Omega B^T + I)^{-1} (Y - B eta)
};

inline CandidateFit fit_candidate(const std::vector<int>& orders, const std::vector<int>& J,
                                  const std::vector<Point>& X, const Eigen::VectorXd& Y,
                                  const std::function<GaussianCoeffPrior(long)>& prior_factory) {
    std::vector<KnotVector> axes;
    for (std::size_t k = 0; k < J.size(); ++k)
        axes.push_back(make_uniform_knots(orders[k], J[k] - orders[k]));
    TensorBasisSpec spec(std::move(axes));
    const long Jtot = spec.total_size();
    GaussianCoeffPrior prior =
        prior_factory ? prior_factory(Jtot) : GaussianCoeffPrior::identity(Jtot);
    if (prior.eta.size() != Jtot)
        throw std::invalid_argument("marginal_logpost_J: prior factory size mismatch");

    SparseDesign design(spec, X);
    Eigen::MatrixXd G = design.gram();

    CandidateFit out;
    if (prior.omega_is_identity) {
        Eigen::MatrixXd P = G;
        P.diagonal().array() += 1.0;
        SpdSolver solver(P, "marginal_logpost_J");
        out.logdet = solver.logdet();
        out.quad = [&] {
            Eigen::VectorXd resid = Y;
            if (!prior.eta.isZero(0.0)) resid -= design.mult(prior.eta);
            Eigen::VectorXd bt_r = design.mult_transpose(resid);
            return std::max(resid.squaredNorm() - bt_r.dot(solver.solve(bt_r)), 0.0);
        }();
    } else {
        Eigen::MatrixXd P = G + prior.omega_inverse();
        SpdSolver solver(P, "marginal_logpost_J");
        // det(B Omega B^T + I_n) = det(I_J + L^T B^T B L) with Omega = L L^T
        Eigen::LLT<Eigen::MatrixXd> omega_llt(prior.omega);
        Eigen::MatrixXd L = omega_llt.matrixL();
        Eigen::MatrixXd S = L.transpose() * G * L;
        S.diagonal().array() += 1.0;
        out.logdet = SpdSolver(S, "marginal_logpost_J").logdet();
        Eigen::VectorXd resid = Y;
        if (!prior.eta.isZero(0.0)) resid -= design.mult(prior.eta);
        Eigen::VectorXd bt_r = design.mult_transpose(resid);
        out.quad = std::max(resid.squaredNorm() - bt_r.dot(solver.solve(bt_r)), 0.0);
    }
    out.sigma2 = out.quad / static_cast<double>(X.size());
    return out;
}

}  // namespace detail

/// Marginal log-posterior of the per-axis basis counts J (constants dropped),
/// maximized over the candidate grid {order_k, ..., j_max}^d. With the
/// per-candidate empirical sigma the score is
///   -(n/2) log sigma2_hat(J) - (1/2) logdet(Omega B^T B + I_J);
/// with a fixed reference sigma the quadratic form stays in the score.
inline JSelection marginal_logpost_J(const std::vector<Point>& X, const Eigen::VectorXd& Y,
                                     const JSelectOptions& options) {
    if (options.orders.empty()) throw std::invalid_argument("marginal_logpost_J: no axes");
    if (X.empty() || static_cast<long>(X.size()) != Y.size())
        throw std::invalid_argument("marginal_logpost_J: need data with matching sizes");
    for (int q : options.orders)
        if (options.j_max < q)
            throw std::invalid_argument("marginal_logpost_J: j_max below spline order");

    const int d = static_cast<int>(options.orders.size());
    const long n = static_cast<long>(X.size());

    std::vector<std::vector<int>> candidates;
    std::vector<int> cur(d);
    std::function<void(int)> enumerate = [&](int k) {
        if (k == d) {
            candidates.push_back(cur);
            return;
        }
        for (int j = options.orders[k]; j <= options.j_max; ++j) {
            cur[k] = j;
            enumerate(k + 1);
        }
    };
    enumerate(0);

    double sigma2_ref = 0.0;
    if (options.fix_sigma_at_reference) {
        std::vector<int> ref(d, options.j_max);
        sigma2_ref = detail::fit_candidate(options.orders, ref, X, Y, options.prior_factory).sigma2;
        sigma2_ref = std::max(sigma2_ref, 1e-300);
    }

    JSelection sel;
    sel.scores.resize(candidates.size());
    parallel_for(static_cast<long>(candidates.size()), options.threads, [&](long i) {
        const auto& J = candidates[static_cast<std::size_t>(i)];
        auto fit = detail::fit_candidate(options.orders, J, X, Y, options.prior_factory);
        JCandidateScore score;
        score.J = J;
        score.sigma2_hat = fit.sigma2;
        long Jtot = 1;
        for (int j : J) Jtot *= j;
        score.oversized = Jtot > n;
        if (options.fix_sigma_at_reference) {
            score.logscore = -0.5 * n * std::log(sigma2_ref) - 0.5 * fit.logdet -
                             0.5 * fit.quad / sigma2_ref;
        } else {
            score.logscore =
                -0.5 * n * std::log(std::max(fit.sigma2, 1e-300)) - 0.5 * fit.logdet;
        }
        sel.scores[static_cast<std::size_t>(i)] = std::move(score);
    });

    for (std::size_t i = 0; i < sel.scores.size(); ++i) {
        if (sel.scores[i].oversized) {
            std::string j_str;
            for (int j : sel.scores[i].J) j_str += (j_str.empty() ? "" : "x") + std::to_string(j);
            sel.warnings.push_back("candidate J=" + j_str + " exceeds n=" + std::to_string(n));
        }
        if (sel.scores[i].logscore > sel.scores[sel.best].logscore) sel.best = i;
    }
    return sel;
}

}  // namespace argmax_bayes
