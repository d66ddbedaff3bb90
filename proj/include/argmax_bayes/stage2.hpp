#pragma once

#include "argmax_bayes/linalg.hpp"
#include "argmax_bayes/mode_credible.hpp"
#include "argmax_bayes/rng.hpp"
#include "argmax_bayes/stage1.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

namespace argmax_bayes {

/// Monomial basis for the second-stage local polynomial model. The reduced
/// d = 2 form keeps the six terms 1, x, y, x^2, y^2, xy; the full form
/// enumerates all i <= m_alpha lexicographically with i_0 = 0.
struct PolySpec {
    std::vector<int> m_alpha;
    bool reduced = false;
    std::vector<std::vector<int>> monomials;

    static PolySpec reduced_quadratic_2d() {
        PolySpec spec;
        spec.m_alpha = {2, 2};
        spec.reduced = true;
        spec.monomials = {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {0, 2}, {1, 1}};
        return spec;
    }

    static PolySpec full(std::vector<int> m_alpha) {
        PolySpec spec;
        spec.m_alpha = std::move(m_alpha);
        const int d = static_cast<int>(spec.m_alpha.size());
        if (d == 0) throw std::invalid_argument("PolySpec: need at least one axis");
        for (int m : spec.m_alpha)
            if (m < 0) throw std::invalid_argument("PolySpec: degrees must be >= 0");
        std::vector<int> idx(d, 0);
        for (;;) {
            spec.monomials.push_back(idx);
            int k = d - 1;
            while (k >= 0 && idx[k] == spec.m_alpha[k]) idx[k--] = 0;
            if (k < 0) break;
            ++idx[k];
        }
        return spec;
    }

    int dim() const { return static_cast<int>(m_alpha.size()); }
    long size() const { return static_cast<long>(monomials.size()); }  // W + 1

    double eval(const Eigen::VectorXd& theta, const Point& z) const {
        double acc = 0.0;
        for (long j = 0; j < size(); ++j) {
            double term = theta[j];
            for (int k = 0; k < dim(); ++k)
                for (int p = 0; p < monomials[j][k]; ++p) term *= z[k];
            acc += term;
        }
        return acc;
    }

    double eval_deriv(const Eigen::VectorXd& theta, const DerivOrder& r, const Point& z) const {
        double acc = 0.0;
        for (long j = 0; j < size(); ++j) {
            double term = theta[j];
            bool vanish = false;
            for (int k = 0; k < dim(); ++k) {
                const int i = monomials[j][k];
                if (i < r.r[k]) {
                    vanish = true;
                    break;
                }
                for (int p = i; p > i - r.r[k]; --p) term *= p;  // i!/(i-r)!
                for (int p = 0; p < i - r.r[k]; ++p) term *= z[k];
            }
            if (!vanish) acc += term;
        }
        return acc;
    }
};

/// Diagonal prior theta | sigma^2 ~ N(xi, sigma^2 V) with
/// V = diag(prod_k delta_k^{-2 (i_j)_k}), the scaling that matches Z^T Z.
struct Stage2Prior {
    Eigen::VectorXd xi;
    Eigen::VectorXd v_diag;
    Eigen::VectorXd scale_inv;  // diag entries delta^{-i_j}; V = scale_inv^2
    Eigen::VectorXd delta;

    static Stage2Prior scaled(const PolySpec& spec, const Eigen::VectorXd& delta,
                              Eigen::VectorXd xi = {}) {
        if (delta.size() != spec.dim()) throw std::invalid_argument("Stage2Prior: delta mismatch");
        for (long k = 0; k < delta.size(); ++k)
            if (!(delta[k] > 0.0)) throw std::invalid_argument("Stage2Prior: delta must be > 0");
        Stage2Prior prior;
        prior.delta = delta;
        prior.xi = xi.size() ? std::move(xi) : Eigen::VectorXd::Zero(spec.size());
        if (prior.xi.size() != spec.size())
            throw std::invalid_argument("Stage2Prior: xi length mismatch");
        prior.scale_inv.resize(spec.size());
        prior.v_diag.resize(spec.size());
        for (long j = 0; j < spec.size(); ++j) {
            double s = 1.0;
            for (int k = 0; k < spec.dim(); ++k)
                s *= std::pow(delta[k], -spec.monomials[j][k]);
            prior.scale_inv[j] = s;
            prior.v_diag[j] = s * s;
        }
        return prior;
    }

    /// Multiplies V by c (c >> 1 flattens the prior toward least squares).
    Stage2Prior inflated(double c) const {
        Stage2Prior out = *this;
        out.v_diag *= c;
        out.scale_inv *= std::sqrt(c);
        return out;
    }
};

/// i.i.d. uniform draws from the centered rectangle Q = prod [-delta_k, delta_k].
inline std::vector<Point> sample_uniform_rect(const CredibleRect& rect, long n2,
                                              std::uint64_t seed) {
    const int d = static_cast<int>(rect.half_widths.size());
    for (int k = 0; k < d; ++k)
        if (!(rect.half_widths[k] > 0.0))
            throw std::invalid_argument("sample_uniform_rect: zero half-width");
    if (n2 < 1) throw std::invalid_argument("sample_uniform_rect: n2 must be >= 1");
    Rng rng = Rng::substream(seed, 0);
    std::vector<Point> z(static_cast<std::size_t>(n2), Point(d));
    for (auto& zi : z)
        for (int k = 0; k < d; ++k)
            zi[k] = rng.uniform(-rect.half_widths[k], rect.half_widths[k]);
    return z;
}

/// Z = (p(z_1),...,p(z_{n2}))^T; a Vandermonde matrix when d = 1.
inline Eigen::MatrixXd poly_design(const PolySpec& spec, const std::vector<Point>& z) {
    if (z.empty()) throw std::invalid_argument("poly_design: need points");
    Eigen::MatrixXd Z(static_cast<long>(z.size()), spec.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (z[i].size() != spec.dim())
            throw std::invalid_argument("poly_design: point dimension mismatch");
        for (long j = 0; j < spec.size(); ++j) {
            double v = 1.0;
            for (int k = 0; k < spec.dim(); ++k)
                for (int p = 0; p < spec.monomials[j][k]; ++p) v *= z[i][k];
            Z(static_cast<long>(i), j) = v;
        }
    }
    return Z;
}

enum class SigmaPolicy { Stage2Only, Weighted, Hierarchical };

struct Stage2Options {
    SigmaPolicy policy = SigmaPolicy::Stage2Only;
    double sigma1_sq = 0.0;  // first-stage estimate (weighted / hierarchical)
    long n1 = 0;
    IgHyper hyper;
};

struct Stage2Posterior {
    PolySpec spec;
    Eigen::VectorXd mean;
    std::shared_ptr<const SpdSolver> precision;  // Z^T Z + V^{-1}
    SigmaMode sigma;
    double sigma2_stage2 = 0.0;  // sigma_tilde_2^2
    Eigen::VectorXd delta;       // Q half-widths
};

/// Conjugate second-stage update with the combined variance estimate.
inline Stage2Posterior fit_stage2(const PolySpec& spec, const std::vector<Point>& z,
                                  const Eigen::VectorXd& y2, const Stage2Prior& prior,
                                  const Stage2Options& options = {}) {
    const long n2 = static_cast<long>(z.size());
    if (n2 != y2.size()) throw std::invalid_argument("fit_stage2: |Y2| must equal n2");
    if (n2 < spec.size()) throw std::invalid_argument("fit_stage2: need n2 >= W + 1");

    Eigen::MatrixXd Z = poly_design(spec, z);
    Eigen::VectorXd v_inv = prior.v_diag.cwiseInverse();
    Eigen::MatrixXd P = Z.transpose() * Z;
    P.diagonal() += v_inv;
    auto precision = std::make_shared<SpdSolver>(P, "fit_stage2");

    Stage2Posterior post;
    post.spec = spec;
    post.delta = prior.delta;
    post.mean = precision->solve(Z.transpose() * y2 + v_inv.cwiseProduct(prior.xi));

    // sigma_tilde_2^2 = (Y - Z xi)^T (Z V Z^T + I)^{-1} (Y - Z xi) / n2 via Woodbury
    Eigen::VectorXd resid = y2 - Z * prior.xi;
    Eigen::VectorXd zt_r = Z.transpose() * resid;
    post.sigma2_stage2 =
        std::max((resid.squaredNorm() - zt_r.dot(precision->solve(zt_r))) / n2, 0.0);

    switch (options.policy) {
        case SigmaPolicy::Stage2Only:
            post.sigma = SigmaMode::empirical(post.sigma2_stage2);
            break;
        case SigmaPolicy::Weighted: {
            const long n = options.n1 + n2;
            post.sigma = SigmaMode::empirical(
                (options.n1 * options.sigma1_sq + n2 * post.sigma2_stage2) / n);
            break;
        }
        case SigmaPolicy::Hierarchical: {
            const long n = options.n1 + n2;
            const double star =
                (options.n1 * options.sigma1_sq + n2 * post.sigma2_stage2) / n;
            post.sigma = SigmaMode::inverse_gamma(options.hyper, n, star);
            break;
        }
    }
    post.precision = std::move(precision);
    return post;
}

/// Result of maximizing one polynomial draw over the centered rectangle Q.
struct ModeSolve {
    Point mu_z;           // stationary/argmax point in Q coordinates
    Point mu;             // rect center + mu_z
    double M = 0.0;       // polynomial value at mu_z
    bool hessian_ok = false;
    bool clipped = false;
    bool degenerate = false;
};

namespace detail {

/// Grid seed plus coordinate ascent for the constrained maximum over Q.
inline Point constrained_poly_argmax(const PolySpec& spec, const Eigen::VectorXd& theta,
                                     const Eigen::VectorXd& delta, int grid_res = 33) {
    const int d = spec.dim();
    std::vector<int> res(d, grid_res);
    long total = 1;
    for (int k = 0; k < d; ++k) total *= grid_res;
    Point best(d);
    double best_v = -std::numeric_limits<double>::infinity();
    for (long flat = 0; flat < total; ++flat) {
        Point z(d);
        long rem = flat;
        for (int k = d - 1; k >= 0; --k) {
            z[k] = -delta[k] + 2.0 * delta[k] * (rem % grid_res) / (grid_res - 1);
            rem /= grid_res;
        }
        double v = spec.eval(theta, z);
        if (v > best_v) {
            best_v = v;
            best = z;
        }
    }
    Point x = best;
    for (int sweep = 0; sweep < 200; ++sweep) {
        double moved = 0.0;
        for (int k = 0; k < d; ++k) {
            const double h = 2.0 * delta[k] / (grid_res - 1);
            const double lo = std::max(-delta[k], x[k] - h), hi = std::min(delta[k], x[k] + h);
            Point probe = x;
            double nk = golden_max(
                [&](double t) {
                    probe[k] = t;
                    return spec.eval(theta, probe);
                },
                lo, hi, 1e-13 * std::max(1.0, delta[k]));
            moved = std::max(moved, std::abs(nk - x[k]) / std::max(delta[k], 1e-300));
            x[k] = nk;
        }
        if (moved < 1e-12) break;
    }
    return spec.eval(theta, x) >= best_v ? x : best;
}

}  // namespace detail

/// Solves grad f_theta(mu_z) = 0 for the reduced quadratic (the 2x2 linear
/// system in the quadratic coefficients) and checks that the Hessian is
/// negative definite; otherwise, or when the stationary point escapes Q,
/// maximizes the polynomial over Q by grid search plus coordinate ascent.
inline ModeSolve solve_mode(const PolySpec& spec, const Eigen::VectorXd& theta,
                            const CredibleRect& rect) {
    if (theta.size() != spec.size()) throw std::invalid_argument("solve_mode: theta mismatch");
    const int d = spec.dim();
    ModeSolve out;
    out.mu_z = Point::Zero(d);

    if (spec.reduced && d == 2) {
        Eigen::Matrix2d H;
        H << 2.0 * theta[3], theta[5], theta[5], 2.0 * theta[4];
        Eigen::Vector2d g(theta[1], theta[2]);
        const double det = H(0, 0) * H(1, 1) - H(0, 1) * H(1, 0);
        const bool neg_def = H(0, 0) < 0.0 && det > 0.0;
        if (neg_def) {
            Eigen::Vector2d z = H.inverse() * (-g);
            out.hessian_ok = true;
            if (std::abs(z[0]) <= rect.half_widths[0] && std::abs(z[1]) <= rect.half_widths[1]) {
                out.mu_z = z;
            } else {
                out.mu_z = detail::constrained_poly_argmax(spec, theta, rect.half_widths);
                out.clipped = true;
            }
        } else if (H.isZero(0.0) && g.isZero(0.0)) {
            out.degenerate = true;  // flat draw: report the center
        } else {
            // negative semidefinite with a consistent gradient system still
            // has interior maximizers; take the minimum-norm one
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(H);
            if (eig.eigenvalues().maxCoeff() <= 0.0) {
                Eigen::Vector2d z = H.completeOrthogonalDecomposition().solve(-g);
                const double incons = (H * z + g).norm();
                if (incons <= 1e-12 * std::max(1.0, g.norm()) &&
                    std::abs(z[0]) <= rect.half_widths[0] &&
                    std::abs(z[1]) <= rect.half_widths[1]) {
                    out.mu_z = z;
                } else {
                    out.mu_z = detail::constrained_poly_argmax(spec, theta, rect.half_widths);
                    out.clipped = true;
                }
            } else {
                out.mu_z = detail::constrained_poly_argmax(spec, theta, rect.half_widths);
                out.clipped = true;
            }
        }
    } else {
        out.mu_z = detail::constrained_poly_argmax(spec, theta, rect.half_widths);
        out.clipped = true;
        // negative-definiteness probe via the analytic polynomial Hessian
        Eigen::MatrixXd H(d, d);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) {
                DerivOrder r = DerivOrder::zero(d);
                r.r[a] += 1;
                r.r[b] += 1;
                H(a, b) = spec.eval_deriv(theta, r, out.mu_z);
            }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(H, Eigen::EigenvaluesOnly);
        out.hessian_ok = eig.eigenvalues().maxCoeff() < 0.0;
    }

    out.mu = rect.center + out.mu_z;
    out.M = spec.eval(theta, out.mu_z);
    return out;
}

inline ModeSolve solve_mode(const Stage2Posterior& post, const CredibleRect& rect) {
    return solve_mode(post.spec, post.mean, rect);
}

struct Stage2Samples {
    Eigen::MatrixXd mu;   // count x d (original coordinates)
    Eigen::VectorXd M;
    std::vector<ModeSolve> solves;
};

/// Posterior (mu, M) draws: theta sampled from the stage-2 law, each solved
/// over Q and translated back by the rectangle center. Flagged draws
/// (clipped / degenerate) are retained.
inline Stage2Samples induce_stage2_mu_M(const Stage2Posterior& post, long count,
                                        const CredibleRect& rect, std::uint64_t seed,
                                        int threads = 0) {
    if (count < 1) throw std::invalid_argument("induce_stage2_mu_M: count must be >= 1");
    const int d = post.spec.dim();
    Stage2Samples out;
    out.mu.resize(count, d);
    out.M.resize(count);
    out.solves.resize(static_cast<std::size_t>(count));
    parallel_for(count, threads, [&](long s) {
        Rng rng = Rng::substream(seed, static_cast<std::uint64_t>(s));
        const double sigma = std::sqrt(post.sigma.draw_sigma2(rng));
        Eigen::VectorXd z(post.mean.size());
        for (long j = 0; j < z.size(); ++j) z[j] = rng.normal();
        Eigen::VectorXd theta = post.mean + sigma * post.precision->unwhiten(z);
        ModeSolve solve = solve_mode(post.spec, theta, rect);
        out.mu.row(s) = solve.mu.transpose();
        out.M[s] = solve.M;
        out.solves[static_cast<std::size_t>(s)] = std::move(solve);
    });
    return out;
}

/// Rate-optimal half-widths delta_k = n^{-1/(2 alpha_k)} for known smoothness.
inline Eigen::VectorXd theoretical_delta(long n, const std::vector<double>& alpha) {
    Eigen::VectorXd delta(static_cast<long>(alpha.size()));
    for (std::size_t k = 0; k < alpha.size(); ++k) {
        if (!(alpha[k] > 2.0)) throw std::invalid_argument("theoretical_delta: need alpha > 2");
        delta[static_cast<long>(k)] = std::pow(static_cast<double>(n), -0.5 / alpha[k]);
    }
    return delta;
}

}  // namespace argmax_bayes
