#pragma once

#include "argmax_bayes/loess.hpp"
#include "argmax_bayes/mode_credible.hpp"
#include "argmax_bayes/stage1.hpp"
#include "argmax_bayes/stage2.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace argmax_bayes {

/// Benchmark surface on [0,1]^2 with unique mode (0.5, 0.5) and maximum 4.
inline double f0_benchmark(double x, double y) {
    const double u = 2.0 * x - 1.0, v = 2.0 * y - 1.0;
    return (1.0 + std::exp(-5.0 * u * u - 2.0 * v * v * v * v)) *
           (std::cos(4.0 * u) + std::cos(5.0 * v));
}

inline double f0_benchmark_dx(double x, double y) {
    const double u = 2.0 * x - 1.0, v = 2.0 * y - 1.0;
    const double E = std::exp(-5.0 * u * u - 2.0 * v * v * v * v);
    const double C = std::cos(4.0 * u) + std::cos(5.0 * v);
    return -20.0 * u * E * C - (1.0 + E) * 8.0 * std::sin(4.0 * u);
}

inline double f0_benchmark_dy(double x, double y) {
    const double u = 2.0 * x - 1.0, v = 2.0 * y - 1.0;
    const double E = std::exp(-5.0 * u * u - 2.0 * v * v * v * v);
    const double C = std::cos(4.0 * u) + std::cos(5.0 * v);
    return -16.0 * v * v * v * E * C - (1.0 + E) * 10.0 * std::sin(5.0 * v);
}

inline Point f0_mode() {
    Point mu(2);
    mu << 0.5, 0.5;
    return mu;
}
inline constexpr double f0_max = 4.0;

enum class Method { SingleBayes, TwoStageBayes, TwoStageFreq };

inline const char* method_name(Method m) {
    switch (m) {
        case Method::SingleBayes: return "single_bayes";
        case Method::TwoStageBayes: return "two_stage_bayes";
        case Method::TwoStageFreq: return "two_stage_freq";
    }
    return "?";
}

/// Seeded description of one Monte Carlo experiment.
struct ExperimentSpec {
    enum class Design { Grid, IidUniform } design = Design::Grid;
    bool midpoint_grid = false;  // lattice at (i+1/2)/m instead of i/(m-1)
    double sigma0 = 0.1;         // noise standard deviation
    long n1 = 900;               // stage-1 budget (grid: must be a square)
    long n2 = 864;               // stage-2 budget
    long replications = 100;
    std::uint64_t master_seed = 20260808;

    std::vector<int> orders = {4, 4};
    int j_max = 20;
    std::vector<int> fix_j;  // nonempty: skip J-selection
    bool fix_sigma_at_reference = false;
    double gamma = 0.05;
    double rho = 1.0;
    // Envelope inflation for the stage-2 sampling rectangle; a too-small box
    // leaves the local curvature unidentifiable, so the default widens the
    // raw sample envelope.
    double rho_n = 3.0;
    double floor_hw = 0.01;
    long mu_samples = 1000;
    long stage2_draws = 1000;
    int argmax_grid = 201;  // analysis grid (bands, membership checks)
    // Mode-search resolution; 0 searches on the design lattice itself, which
    // sets the quantization scale of the single-stage mode estimate and of
    // the induced-sample envelope.
    int mode_grid = 0;
    bool refine_argmax = false;
    bool reduced_quadratic = true;
    // Center the stage-2 intercept prior at the stage-2 response mean; with
    // xi = 0 the unit prior variance on the intercept fights the surface
    // offset and leaks bias into the curvature terms when Q is small.
    bool stage2_xi_ybar = true;
    SigmaPolicy sigma_policy = SigmaPolicy::Stage2Only;
    IgHyper hyper;
    std::vector<double> loess_spans = {0.02, 0.05, 0.1, 0.2};
    std::vector<double> freq_delta = {0.06, 0.06};
    int threads = 0;

    long total_budget() const { return n1 + n2; }

    int grid_per_axis(long n) const {
        const int m = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
        if (static_cast<long>(m) * m != n)
            throw std::invalid_argument("ExperimentSpec: grid design needs a square sample size, got " +
                                        std::to_string(n));
        return m;
    }
};

/// Per-replication stream slots; every method derives the randomness it
/// needs from (master_seed, rep, slot), so paired methods see identical
/// noise where their designs coincide and results do not depend on the
/// order methods are run in.
namespace stream {
constexpr std::uint64_t stage1_noise = 0;  // shared by both two-stage methods
constexpr std::uint64_t single_noise = 1;
constexpr std::uint64_t stage1_paths = 2;
constexpr std::uint64_t stage2_points = 3;
constexpr std::uint64_t stage2_noise = 4;
constexpr std::uint64_t stage2_draws = 5;
constexpr std::uint64_t freq_noise = 6;
constexpr std::uint64_t iid_design = 7;

inline std::uint64_t id(long rep, std::uint64_t slot) {
    return static_cast<std::uint64_t>(rep) * 16 + slot;
}
}  // namespace stream

struct Dataset {
    std::vector<Point> X;
    Eigen::VectorXd Y;
};

/// Noisy observations of f on a uniform lattice (row-major point order).
inline Dataset generate_grid_data(int per_axis, double sigma0, Rng& rng,
                                  const std::function<double(const Point&)>& f,
                                  bool midpoint = false) {
    if (per_axis < 2) throw std::invalid_argument("generate_grid_data: per_axis must be >= 2");
    Dataset data;
    data.X.reserve(static_cast<std::size_t>(per_axis) * per_axis);
    data.Y.resize(static_cast<long>(per_axis) * per_axis);
    long idx = 0;
    for (int i = 0; i < per_axis; ++i)
        for (int j = 0; j < per_axis; ++j) {
            Point x(2);
            if (midpoint) {
                x << (i + 0.5) / per_axis, (j + 0.5) / per_axis;
            } else {
                x << static_cast<double>(i) / (per_axis - 1),
                    static_cast<double>(j) / (per_axis - 1);
            }
            data.Y[idx++] = f(x) + sigma0 * rng.normal();
            data.X.push_back(std::move(x));
        }
    return data;
}

inline Dataset generate_iid_data(long n, double sigma0, Rng& design_rng, Rng& noise_rng,
                                 const std::function<double(const Point&)>& f) {
    if (n < 1) throw std::invalid_argument("generate_iid_data: n must be >= 1");
    Dataset data;
    data.X.reserve(static_cast<std::size_t>(n));
    data.Y.resize(n);
    for (long i = 0; i < n; ++i) {
        Point x(2);
        x << design_rng.uniform01(), design_rng.uniform01();
        data.Y[i] = f(x) + sigma0 * noise_rng.normal();
        data.X.push_back(std::move(x));
    }
    return data;
}

/// One replication's outputs; `seed` plus `rep` reproduce it exactly.
struct RunRecord {
    long rep = 0;
    Method method = Method::SingleBayes;
    Eigen::VectorXd mu_hat;
    double M_hat = 0.0;
    double err_mu = 0.0;
    double err_M = 0.0;
    double sigma2_hat = 0.0;
    std::vector<int> j_chosen;
    Eigen::VectorXd delta_used;
    std::uint64_t seed = 0;
    bool flagged = false;
    std::string flag;
};

namespace detail {

inline std::function<double(const Point&)> f0_fn() {
    return [](const Point& x) { return f0_benchmark(x[0], x[1]); };
}

inline std::vector<int> choose_j(const ExperimentSpec& spec, const Dataset& data) {
    if (!spec.fix_j.empty()) return spec.fix_j;
    JSelectOptions opt;
    opt.orders = spec.orders;
    opt.j_max = spec.j_max;
    opt.fix_sigma_at_reference = spec.fix_sigma_at_reference;
    opt.threads = 1;  // replications parallelize above this level
    return marginal_logpost_J(data.X, data.Y, opt).chosen().J;
}

inline TensorBasisSpec basis_for(const std::vector<int>& orders, const std::vector<int>& J) {
    std::vector<KnotVector> axes;
    for (std::size_t k = 0; k < J.size(); ++k)
        axes.push_back(make_uniform_knots(orders[k], J[k] - orders[k]));
    return TensorBasisSpec(std::move(axes));
}

inline void finish_record(RunRecord& rec) {
    rec.err_mu = (rec.mu_hat - f0_mode()).norm();
    rec.err_M = std::abs(rec.M_hat - f0_max);
}

inline int mode_resolution(const ExperimentSpec& spec, long n_design) {
    if (spec.mode_grid > 0) return spec.mode_grid;
    if (spec.design == ExperimentSpec::Design::Grid) return spec.grid_per_axis(n_design);
    return static_cast<int>(std::lround(std::sqrt(static_cast<double>(n_design))));
}

}  // namespace detail

/// Single-stage pipeline: grid data on the full budget, J-selection,
/// conjugate fit, grid argmax of the posterior mean.
inline RunRecord run_single_bayes(const ExperimentSpec& spec, long rep) {
    RunRecord rec;
    rec.rep = rep;
    rec.method = Method::SingleBayes;
    rec.seed = spec.master_seed;

    Rng noise = Rng::substream(spec.master_seed, stream::id(rep, stream::single_noise));
    Dataset data;
    if (spec.design == ExperimentSpec::Design::Grid) {
        data = generate_grid_data(spec.grid_per_axis(spec.total_budget()), spec.sigma0, noise,
                                  detail::f0_fn(), spec.midpoint_grid);
    } else {
        Rng design = Rng::substream(spec.master_seed, stream::id(rep, stream::iid_design));
        data = generate_iid_data(spec.total_budget(), spec.sigma0, design, noise, detail::f0_fn());
    }

    rec.j_chosen = detail::choose_j(spec, data);
    TensorBasisSpec basis = detail::basis_for(spec.orders, rec.j_chosen);
    CoefficientPosterior post =
        fit(basis, data.X, data.Y, GaussianCoeffPrior::identity(basis.total_size()));
    rec.sigma2_hat = post.sigma.sigma2_hat;

    std::vector<int> res(2, detail::mode_resolution(spec, spec.total_budget()));
    GridEvaluator ge(basis, DerivOrder::zero(2), {uniform_grid(res[0]), uniform_grid(res[1])});
    ModeEstimate mode = argmax_grid_values(ge.values(post.mean), res);
    rec.mu_hat = mode.mu;
    rec.M_hat = mode.M;
    detail::finish_record(rec);
    return rec;
}

/// Intermediate artifacts of the two-stage Bayes pipeline, exposed so the
/// CLI can dump them.
struct TwoStageArtifacts {
    std::vector<int> j_chosen;
    ModeEstimate stage1_mode;
    MuMSamples stage1_samples;
    CredibleRect rect;
    Stage2Posterior posterior;
    Stage2Samples stage2_samples;
    double sigma1_sq = 0.0;
};

/// Two-stage Bayes pipeline per the default experiment protocol: stage-1 fit
/// and J-selection, induced mu samples, envelope rectangle, uniform stage-2
/// sampling, reduced-quadratic refit, induced stage-2 (mu, M) posterior.
inline RunRecord run_two_stage_bayes(const ExperimentSpec& spec, long rep,
                                     TwoStageArtifacts* artifacts = nullptr) {
    RunRecord rec;
    rec.rep = rep;
    rec.method = Method::TwoStageBayes;
    rec.seed = spec.master_seed;

    Rng noise = Rng::substream(spec.master_seed, stream::id(rep, stream::stage1_noise));
    Dataset data;
    if (spec.design == ExperimentSpec::Design::Grid) {
        data = generate_grid_data(spec.grid_per_axis(spec.n1), spec.sigma0, noise,
                                  detail::f0_fn(), spec.midpoint_grid);
    } else {
        Rng design = Rng::substream(spec.master_seed, stream::id(rep, stream::iid_design));
        data = generate_iid_data(spec.n1, spec.sigma0, design, noise, detail::f0_fn());
    }

    rec.j_chosen = detail::choose_j(spec, data);
    TensorBasisSpec basis = detail::basis_for(spec.orders, rec.j_chosen);
    CoefficientPosterior post1 =
        fit(basis, data.X, data.Y, GaussianCoeffPrior::identity(basis.total_size()));
    const double sigma1_sq = post1.sigma.sigma2_hat;
    SurfacePosterior sp(basis, post1);

    std::vector<int> res(2, detail::mode_resolution(spec, spec.n1));
    GridEvaluator ge(basis, DerivOrder::zero(2), {uniform_grid(res[0]), uniform_grid(res[1])});
    ModeEstimate stage1_mode = argmax_grid_values(ge.values(post1.mean), res);

    MuMSamples samples = induce_mu_M_samples(
        sp, spec.mu_samples, res,
        Rng::derive_seed(spec.master_seed, stream::id(rep, stream::stage1_paths)), 1);
    Eigen::VectorXd floor_hw = Eigen::VectorXd::Constant(2, spec.floor_hw);
    CredibleRect rect = envelope_rect(samples.mu, stage1_mode.mu, spec.rho_n, floor_hw);
    rec.delta_used = rect.half_widths;

    std::vector<Point> z = sample_uniform_rect(
        rect, spec.n2, Rng::derive_seed(spec.master_seed, stream::id(rep, stream::stage2_points)));
    Rng noise2 = Rng::substream(spec.master_seed, stream::id(rep, stream::stage2_noise));
    Eigen::VectorXd y2(spec.n2);
    for (long i = 0; i < spec.n2; ++i) {
        Point x = rect.center + z[static_cast<std::size_t>(i)];
        y2[i] = f0_benchmark(x[0], x[1]) + spec.sigma0 * noise2.normal();
    }

    PolySpec poly = spec.reduced_quadratic ? PolySpec::reduced_quadratic_2d()
                                           : PolySpec::full({2, 2});
    Eigen::VectorXd xi = Eigen::VectorXd::Zero(poly.size());
    if (spec.stage2_xi_ybar) xi[0] = y2.mean();
    Stage2Prior prior2 = Stage2Prior::scaled(poly, rect.half_widths, xi);
    Stage2Options opt2;
    opt2.policy = spec.sigma_policy;
    opt2.sigma1_sq = sigma1_sq;
    opt2.n1 = spec.n1;
    opt2.hyper = spec.hyper;
    Stage2Posterior post2 = fit_stage2(poly, z, y2, prior2, opt2);
    rec.sigma2_hat = post2.sigma.sigma2_hat;

    Stage2Samples s2 = induce_stage2_mu_M(
        post2, spec.stage2_draws, rect,
        Rng::derive_seed(spec.master_seed, stream::id(rep, stream::stage2_draws)), 1);
    rec.mu_hat = s2.mu.colwise().mean().transpose();
    rec.M_hat = s2.M.mean();

    long bad = 0;
    for (const auto& s : s2.solves)
        if (!s.hessian_ok || s.degenerate) ++bad;
    if (bad * 20 > spec.stage2_draws) {  // > 5% problematic draws
        rec.flagged = true;
        rec.flag = "stage2_draws_flagged=" + std::to_string(bad);
    }

    detail::finish_record(rec);
    if (artifacts) {
        artifacts->j_chosen = rec.j_chosen;
        artifacts->stage1_mode = std::move(stage1_mode);
        artifacts->stage1_samples = std::move(samples);
        artifacts->rect = std::move(rect);
        artifacts->posterior = std::move(post2);
        artifacts->stage2_samples = std::move(s2);
        artifacts->sigma1_sq = sigma1_sq;
    }
    return rec;
}

/// Frequentist two-stage baseline: loess preliminary estimate, replicated
/// 3x3 lattice on the refinement rectangle, least-squares quadratic, mode by
/// the same gradient system.
inline RunRecord run_two_stage_freq(const ExperimentSpec& spec, long rep) {
    RunRecord rec;
    rec.rep = rep;
    rec.method = Method::TwoStageFreq;
    rec.seed = spec.master_seed;

    Rng noise = Rng::substream(spec.master_seed, stream::id(rep, stream::stage1_noise));
    Dataset data;
    if (spec.design == ExperimentSpec::Design::Grid) {
        data = generate_grid_data(spec.grid_per_axis(spec.n1), spec.sigma0, noise,
                                  detail::f0_fn(), spec.midpoint_grid);
    } else {
        Rng design = Rng::substream(spec.master_seed, stream::id(rep, stream::iid_design));
        data = generate_iid_data(spec.n1, spec.sigma0, design, noise, detail::f0_fn());
    }

    const double span = select_loess_span(data.X, data.Y, spec.loess_spans);
    LoessSurface smoother(data.X, data.Y, span);
    std::vector<int> res(2, detail::mode_resolution(spec, spec.n1));
    ModeEstimate prelim =
        argmax_surface([&](const Point& x) { return smoother.predict(x); }, res, false);

    if (spec.n2 % 9 != 0)
        throw std::invalid_argument("run_two_stage_freq: n2 must be divisible by 9");
    const long replicates = spec.n2 / 9;
    Eigen::VectorXd delta(2);
    delta << spec.freq_delta[0], spec.freq_delta[1];
    rec.delta_used = delta;

    // 3x3 lattice on the 2*delta rectangle, clamped into the unit square
    std::vector<Point> lattice;
    for (int i = -1; i <= 1; ++i)
        for (int j = -1; j <= 1; ++j) {
            Point x(2);
            x << std::clamp(prelim.mu[0] + i * delta[0], 0.0, 1.0),
                std::clamp(prelim.mu[1] + j * delta[1], 0.0, 1.0);
            lattice.push_back(std::move(x));
        }

    Rng noise2 = Rng::substream(spec.master_seed, stream::id(rep, stream::freq_noise));
    std::vector<Point> z;
    Eigen::VectorXd y2(spec.n2);
    long idx = 0;
    for (const auto& x : lattice) {
        const double fx = f0_benchmark(x[0], x[1]);
        for (long t = 0; t < replicates; ++t) {
            y2[idx++] = fx + spec.sigma0 * noise2.normal();
            z.push_back(x - prelim.mu);
        }
    }

    PolySpec poly = PolySpec::reduced_quadratic_2d();
    Eigen::MatrixXd Z = poly_design(poly, z);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Z);
    rec.mu_hat = prelim.mu;
    rec.M_hat = prelim.M;
    if (qr.rank() < poly.size()) {
        rec.flagged = true;
        rec.flag = "singular_quadratic_fit";
    } else {
        Eigen::VectorXd theta = qr.solve(y2);
        rec.sigma2_hat = (y2 - Z * theta).squaredNorm() / static_cast<double>(spec.n2 - poly.size());
        Eigen::Matrix2d H;
        H << 2.0 * theta[3], theta[5], theta[5], 2.0 * theta[4];
        const double det = H(0, 0) * H(1, 1) - H(0, 1) * H(1, 0);
        if (H(0, 0) < 0.0 && det > 0.0) {
            Eigen::Vector2d mu_z = H.inverse() * Eigen::Vector2d(-theta[1], -theta[2]);
            rec.mu_hat = prelim.mu + mu_z;
            rec.M_hat = poly.eval(theta, mu_z);
        } else {
            rec.flagged = true;
            rec.flag = "quadratic_not_concave";
        }
    }
    detail::finish_record(rec);
    return rec;
}

inline RunRecord run_method(const ExperimentSpec& spec, Method method, long rep) {
    switch (method) {
        case Method::SingleBayes: return run_single_bayes(spec, rep);
        case Method::TwoStageBayes: return run_two_stage_bayes(spec, rep);
        case Method::TwoStageFreq: return run_two_stage_freq(spec, rep);
    }
    throw std::invalid_argument("run_method: unknown method");
}

struct SummaryStats {
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0, mean = 0.0;
};

inline SummaryStats summarize(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("summarize: empty");
    std::sort(v.begin(), v.end());
    auto quantile = [&](double p) {
        const double h = p * (static_cast<double>(v.size()) - 1.0);
        const std::size_t lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - std::floor(h)) * (v[hi] - v[lo]);
    };
    SummaryStats s;
    s.min = v.front();
    s.q1 = quantile(0.25);
    s.median = quantile(0.5);
    s.q3 = quantile(0.75);
    s.max = v.back();
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    return s;
}

struct MethodSummary {
    Method method;
    SummaryStats err_mu;
    SummaryStats err_M;
};

struct MonteCarloResult {
    std::vector<RunRecord> runs;  // grouped by method, replication order
    std::vector<MethodSummary> summaries;
};

/// Paired-seed Monte Carlo over the requested methods; replications are
/// independent and parallelized, outputs are invariant to execution order.
/// `progress(done, total)` is invoked after each completed run.
inline MonteCarloResult monte_carlo(const ExperimentSpec& spec,
                                    const std::vector<Method>& methods,
                                    const std::function<void(long, long)>& progress = {}) {
    if (spec.replications < 1)
        throw std::invalid_argument("monte_carlo: replications must be >= 1");
    MonteCarloResult result;
    result.runs.resize(static_cast<std::size_t>(spec.replications) * methods.size());
    const long reps = spec.replications;
    const long total = static_cast<long>(result.runs.size());
    std::atomic<long> done{0};
    parallel_for(total, spec.threads, [&](long i) {
        const std::size_t m = static_cast<std::size_t>(i / reps);
        const long rep = i % reps;
        result.runs[static_cast<std::size_t>(i)] = run_method(spec, methods[m], rep);
        if (progress) progress(done.fetch_add(1) + 1, total);
    });
    for (std::size_t m = 0; m < methods.size(); ++m) {
        std::vector<double> err_mu, err_M;
        for (long rep = 0; rep < reps; ++rep) {
            const auto& rec = result.runs[m * reps + static_cast<std::size_t>(rep)];
            err_mu.push_back(rec.err_mu);
            err_M.push_back(rec.err_M);
        }
        result.summaries.push_back({methods[m], summarize(err_mu), summarize(err_M)});
    }
    return result;
}

}  // namespace argmax_bayes
