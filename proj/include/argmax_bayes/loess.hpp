#pragma once

#include "argmax_bayes/tensor_basis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace argmax_bayes {

/// Local-linear regression with tricube weights over span-based
/// nearest-neighbor windows.
class LoessSurface {
public:
    LoessSurface(std::vector<Point> x, Eigen::VectorXd y, double span)
        : x_(std::move(x)), y_(std::move(y)), span_(span) {
        if (x_.empty() || static_cast<long>(x_.size()) != y_.size())
            throw std::invalid_argument("LoessSurface: data size mismatch");
        if (!(span_ > 0.0 && span_ <= 1.0))
            throw std::invalid_argument("LoessSurface: span must be in (0,1]");
        d_ = static_cast<int>(x_[0].size());
        // enough neighbors for the local linear system
        k_ = std::max<long>(static_cast<long>(std::ceil(span_ * x_.size())), d_ + 2);
        k_ = std::min<long>(k_, static_cast<long>(x_.size()));
    }

    double predict(const Point& at) const {
        double h = 0.0;
        return local_fit(at, -1, h);
    }

    /// Mean squared leave-one-out residual, using the hat-diagonal shortcut
    /// for linear smoothers.
    double loo_cv() const {
        double acc = 0.0;
        for (std::size_t i = 0; i < x_.size(); ++i) {
            double hii = 0.0;
            double fit = local_fit(x_[i], static_cast<long>(i), hii);
            double denom = std::max(1.0 - hii, 1e-8);
            double r = (y_[static_cast<long>(i)] - fit) / denom;
            acc += r * r;
        }
        return acc / static_cast<double>(x_.size());
    }

    long neighbors() const { return k_; }

private:
    // Weighted local linear fit at `at`; when self >= 0 also returns the hat
    // diagonal for that design point.
    double local_fit(const Point& at, long self, double& hii) const {
        const long n = static_cast<long>(x_.size());
        std::vector<std::pair<double, long>> dist(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i)
            dist[static_cast<std::size_t>(i)] = {(x_[static_cast<std::size_t>(i)] - at).norm(), i};
        std::nth_element(dist.begin(), dist.begin() + (k_ - 1), dist.end());
        const double dmax = dist[static_cast<std::size_t>(k_ - 1)].first;

        Eigen::MatrixXd XtWX = Eigen::MatrixXd::Zero(d_ + 1, d_ + 1);
        Eigen::VectorXd XtWy = Eigen::VectorXd::Zero(d_ + 1);
        double w_self = 0.0;
        Eigen::VectorXd row(d_ + 1);
        for (long e = 0; e < k_; ++e) {
            const auto& [dist_i, i] = dist[static_cast<std::size_t>(e)];
            double u = dmax > 0.0 ? dist_i / dmax : 0.0;
            double w = tricube(u);
            if (w <= 0.0 && dist_i == 0.0) w = 1.0;  // coincident points
            if (w <= 0.0) continue;
            row[0] = 1.0;
            row.tail(d_) = x_[static_cast<std::size_t>(i)] - at;
            XtWX.noalias() += w * row * row.transpose();
            XtWy.noalias() += w * y_[i] * row;
            if (i == self) w_self = w;
        }
        Eigen::LDLT<Eigen::MatrixXd> ldlt(XtWX);
        Eigen::VectorXd beta = ldlt.solve(XtWy);
        if (self >= 0) {
            Eigen::VectorXd e1 = Eigen::VectorXd::Zero(d_ + 1);
            e1[0] = 1.0;
            hii = w_self * ldlt.solve(e1)[0];
        }
        return beta[0];
    }

    static double tricube(double u) {
        if (u >= 1.0) return 0.0;
        const double t = 1.0 - u * u * u;
        return t * t * t;
    }

    std::vector<Point> x_;
    Eigen::VectorXd y_;
    double span_;
    int d_ = 0;
    long k_ = 0;
};

/// Loess span selection by leave-one-out cross validation over a candidate
/// set; smallest CV score wins, ties to the smaller span.
inline double select_loess_span(const std::vector<Point>& x, const Eigen::VectorXd& y,
                                std::vector<double> candidates) {
    if (candidates.empty()) throw std::invalid_argument("select_loess_span: no candidates");
    std::sort(candidates.begin(), candidates.end());
    double best_span = candidates.front();
    double best_cv = std::numeric_limits<double>::infinity();
    for (double s : candidates) {
        double cv = LoessSurface(x, y, s).loo_cv();
        if (cv < best_cv) {
            best_cv = cv;
            best_span = s;
        }
    }
    return best_span;
}

}  // namespace argmax_bayes
