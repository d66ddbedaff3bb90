#pragma once

#include "argmax_bayes/parallel.hpp"
#include "argmax_bayes/stage1.hpp"
#include "argmax_bayes/tensor_basis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

namespace argmax_bayes {

using SurfaceFn = std::function<double(const Point&)>;

/// Mode and maximum of an evaluated surface.
struct ModeEstimate {
    Point mu;
    double M = 0.0;
    std::vector<int> grid_resolution;
    bool refined = false;
};

/// Half-widths of the sup-norm band for D^r f at level 1-gamma.
struct BandRadius {
    DerivOrder r;
    double gamma = 0.0;
    double radius = 0.0;
    double rho = 1.0;
    long sample_count = 0;
};

/// Axis-aligned rectangle {mu : |mu_k - center_k| <= half_widths_k}.
struct CredibleRect {
    Point center;
    Eigen::VectorXd half_widths;
    enum class Provenance { quantile_radius, sample_envelope } provenance =
        Provenance::sample_envelope;
    bool clipped = false;
};

struct MuMSamples {
    Eigen::MatrixXd mu;  // count x d
    Eigen::VectorXd M;   // count
};

namespace detail {

inline Point grid_point(const std::vector<int>& res, long flat) {
    Point x(static_cast<long>(res.size()));
    for (int k = static_cast<int>(res.size()) - 1; k >= 0; --k) {
        x[k] = static_cast<double>(flat % res[k]) / (res[k] - 1);
        flat /= res[k];
    }
    return x;
}

/// Argmax over precomputed row-major grid values; first (lexicographically
/// smallest) grid point wins ties.
inline std::pair<long, double> argmax_flat(const Eigen::VectorXd& values) {
    long best = 0;
    double best_v = values[0];
    for (long i = 1; i < values.size(); ++i)
        if (values[i] > best_v) {
            best = i;
            best_v = values[i];
        }
    return {best, best_v};
}

/// Golden-section maximization of a unimodal slice on [lo, hi].
inline double golden_max(const std::function<double(double)>& f, double lo, double hi,
                         double tol) {
    const double phi = 0.6180339887498949;
    double a = lo, b = hi;
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = f(x1), f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = f(x1);
        }
    }
    return 0.5 * (a + b);
}

}  // namespace detail

/// Grid search over the per-axis uniform grids, optionally followed by
/// coordinate ascent confined to the surrounding cell.
inline ModeEstimate argmax_surface(const SurfaceFn& eval, const std::vector<int>& res,
                                   bool refine = false) {
    if (res.empty()) throw std::invalid_argument("argmax_surface: empty resolution");
    long total = 1;
    for (int r : res) {
        if (r < 2) throw std::invalid_argument("argmax_surface: resolution must be >= 2 per axis");
        total *= r;
    }
    const int d = static_cast<int>(res.size());
    ModeEstimate out;
    out.grid_resolution = res;
    out.mu = detail::grid_point(res, 0);
    out.M = eval(out.mu);
    for (long flat = 1; flat < total; ++flat) {
        Point x = detail::grid_point(res, flat);
        double v = eval(x);
        if (v > out.M) {
            out.M = v;
            out.mu = x;
        }
    }
    if (refine) {
        Point x = out.mu;
        for (int sweep = 0; sweep < 100; ++sweep) {
            double moved = 0.0;
            for (int k = 0; k < d; ++k) {
                const double h = 1.0 / (res[k] - 1);
                const double lo = std::max(0.0, x[k] - h), hi = std::min(1.0, x[k] + h);
                Point probe = x;
                double nk = detail::golden_max(
                    [&](double t) {
                        probe[k] = t;
                        return eval(probe);
                    },
                    lo, hi, 1e-10);
                moved = std::max(moved, std::abs(nk - x[k]));
                x[k] = nk;
            }
            if (moved < 1e-8) break;
        }
        double v = eval(x);
        if (v >= out.M) {
            out.mu = x;
            out.M = v;
            out.refined = true;
        }
    }
    return out;
}

/// Argmax of values already evaluated on the same product grid.
inline ModeEstimate argmax_grid_values(const Eigen::VectorXd& values,
                                       const std::vector<int>& res) {
    auto [flat, best] = detail::argmax_flat(values);
    ModeEstimate out;
    out.grid_resolution = res;
    out.mu = detail::grid_point(res, flat);
    out.M = best;
    return out;
}

/// (mu, M) samples induced from posterior paths via grid-search argmax.
inline MuMSamples induce_mu_M_samples(const SurfacePosterior& sp, long count,
                                      const std::vector<int>& res, std::uint64_t seed,
                                      int threads = 0) {
    if (count < 1) throw std::invalid_argument("induce_mu_M_samples: count must be >= 1");
    const int d = sp.basis().dim();
    if (static_cast<int>(res.size()) != d)
        throw std::invalid_argument("induce_mu_M_samples: resolution dimension mismatch");
    std::vector<std::vector<double>> grids;
    for (int r : res) grids.push_back(uniform_grid(r));
    GridEvaluator ge(sp.basis(), DerivOrder::zero(d), grids);

    MuMSamples out;
    out.mu.resize(count, d);
    out.M.resize(count);
    parallel_for(count, threads, [&](long s) {
        Eigen::VectorXd theta = sp.sample_coeff_row(s, seed);
        ModeEstimate m = argmax_grid_values(ge.values(theta), res);
        out.mu.row(s) = m.mu.transpose();
        out.M[s] = m.M;
    });
    return out;
}

/// Empirical (1-gamma) quantile of sup-norm path deviations from the center.
inline BandRadius band_radius(const SurfacePosterior& sp, const DerivOrder& r, double gamma,
                              const std::vector<int>& res, long count, std::uint64_t seed,
                              int threads = 0) {
    if (!(gamma > 0.0 && gamma < 0.5))
        throw std::invalid_argument("band_radius: gamma must be in (0, 0.5)");
    if (count < 100 || static_cast<double>(count) < 10.0 / gamma)
        throw std::invalid_argument("band_radius: count too small for requested quantile");
    std::vector<std::vector<double>> grids;
    for (int g : res) grids.push_back(uniform_grid(g));
    GridEvaluator ge(sp.basis(), r, grids);
    Eigen::VectorXd center = ge.values(sp.coeff().mean);

    std::vector<double> sups(static_cast<std::size_t>(count));
    parallel_for(count, threads, [&](long s) {
        Eigen::VectorXd path = ge.values(sp.sample_coeff_row(s, seed));
        sups[static_cast<std::size_t>(s)] = (path - center).cwiseAbs().maxCoeff();
    });
    std::sort(sups.begin(), sups.end());
    const long k = static_cast<long>(std::ceil((1.0 - gamma) * count));
    BandRadius out;
    out.r = r;
    out.gamma = gamma;
    out.radius = sups[static_cast<std::size_t>(std::min(count, std::max<long>(k, 1)) - 1)];
    out.sample_count = count;
    return out;
}

struct Membership {
    bool in_C_mu = false;
    bool in_C_M = false;
};

/// Sup-norm membership checks for a candidate surface: C_mu intersects the
/// first-derivative bands over all axes, C_M uses the r = 0 band. The
/// candidate evaluator must supply D^r f for r = 0 and r = e_k.
inline Membership credible_sets_membership(
    const SurfacePosterior& sp, const std::function<double(const DerivOrder&, const Point&)>& cand,
    const std::vector<BandRadius>& radii, double rho, const std::vector<int>& res) {
    const int d = sp.basis().dim();
    std::vector<const BandRadius*> deriv(d, nullptr);
    const BandRadius* value = nullptr;
    for (const auto& b : radii) {
        if (b.r.is_zero()) {
            value = &b;
            continue;
        }
        for (int k = 0; k < d; ++k) {
            DerivOrder ek = DerivOrder::axis(d, k);
            if (b.r.r == ek.r) deriv[k] = &b;
        }
    }
    for (int k = 0; k < d; ++k)
        if (!deriv[k])
            throw std::invalid_argument("credible_sets_membership: missing radius for axis " +
                                        std::to_string(k));
    if (!value) throw std::invalid_argument("credible_sets_membership: missing r = 0 radius");

    std::vector<std::vector<double>> grids;
    long total = 1;
    for (int g : res) {
        grids.push_back(uniform_grid(g));
        total *= g;
    }
    auto sup_dev = [&](const DerivOrder& r) {
        GridEvaluator ge(sp.basis(), r, grids);
        Eigen::VectorXd center = ge.values(sp.coeff().mean);
        double sup = 0.0;
        for (long flat = 0; flat < total; ++flat) {
            Point x = detail::grid_point(res, flat);
            sup = std::max(sup, std::abs(cand(r, x) - center[flat]));
        }
        return sup;
    };

    Membership out;
    out.in_C_mu = true;
    for (int k = 0; k < d; ++k) {
        DerivOrder ek = DerivOrder::axis(d, k);
        if (sup_dev(ek) > rho * deriv[k]->radius) {
            out.in_C_mu = false;
            break;
        }
    }
    out.in_C_M = sup_dev(DerivOrder::zero(d)) <= rho * value->radius;
    return out;
}

/// Smallest mu-sample envelope around the plug-in mode: per-axis half-width
/// rho_n * max one-sided deviation from the center (equals half the sample
/// range when the envelope is centered), floored and clipped to [0,1]^d.
inline CredibleRect envelope_rect(const Eigen::MatrixXd& mu_samples, const Point& center,
                                  double rho_n, const Eigen::VectorXd& floor_hw) {
    if (mu_samples.rows() < 2)
        throw std::invalid_argument("envelope_rect: need at least 2 samples");
    const int d = static_cast<int>(mu_samples.cols());
    if (center.size() != d || floor_hw.size() != d)
        throw std::invalid_argument("envelope_rect: dimension mismatch");
    CredibleRect rect;
    rect.center = center;
    rect.half_widths.resize(d);
    rect.provenance = CredibleRect::Provenance::sample_envelope;
    for (int k = 0; k < d; ++k) {
        double dev = (mu_samples.col(k).array() - center[k]).abs().maxCoeff();
        double half = std::max(rho_n * dev, floor_hw[k]);
        // the rectangle must stay inside the unit cube even when that
        // overrides the floor
        const double avail = std::min(center[k], 1.0 - center[k]);
        if (half > avail) {
            rect.clipped = true;
            half = avail;
        }
        if (!(half > 0.0))
            throw std::invalid_argument("envelope_rect: degenerate rectangle at the boundary");
        rect.half_widths[k] = half;
    }
    return rect;
}

}  // namespace argmax_bayes
