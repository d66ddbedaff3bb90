#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace argmax_bayes {

/// Univariate B-spline basis of order q (degree q-1) on [0,1].
///
/// Knots follow the extended convention: the endpoints 0 and 1 are repeated
/// with multiplicity q around the strictly increasing interior knots, which
/// makes the J = q + N basis functions a partition of unity on the closed
/// interval. Evaluation at x = 1 right-closes the last span so no point of
/// [0,1] ever maps to a zero row.
class KnotVector {
public:
    KnotVector(int order, std::vector<double> interior, double max_gap_ratio = 10.0)
        : order_(order), interior_(std::move(interior)) {
        if (order_ < 1) throw std::invalid_argument("KnotVector: order must be >= 1");
        double prev = 0.0;
        for (double t : interior_) {
            if (!(t > prev) || !(t < 1.0))
                throw std::invalid_argument("KnotVector: interior knots must be strictly increasing in (0,1)");
            prev = t;
        }
        extended_.reserve(2 * order_ + interior_.size());
        extended_.insert(extended_.end(), order_, 0.0);
        extended_.insert(extended_.end(), interior_.begin(), interior_.end());
        extended_.insert(extended_.end(), order_, 1.0);
        if (gap_ratio() > max_gap_ratio)
            throw std::invalid_argument("KnotVector: knot gaps exceed quasi-uniformity ratio");
    }

    int order() const { return order_; }
    int num_interior() const { return static_cast<int>(interior_.size()); }
    int size() const { return order_ + num_interior(); }  // J
    const std::vector<double>& interior() const { return interior_; }
    const std::vector<double>& extended() const { return extended_; }

    /// max gap / min gap over consecutive distinct breakpoints.
    double gap_ratio() const {
        double lo = 1.0, hi = 0.0, prev = 0.0;
        for (std::size_t i = 0; i <= interior_.size(); ++i) {
            double next = i < interior_.size() ? interior_[i] : 1.0;
            lo = std::min(lo, next - prev);
            hi = std::max(hi, next - prev);
            prev = next;
        }
        return hi / lo;
    }

    /// Knot vector of the derivative basis (order q-1, same interior).
    KnotVector reduced() const {
        if (order_ < 2) throw std::invalid_argument("KnotVector: cannot reduce order-1 basis");
        return KnotVector(order_ - 1, interior_, 1e300);
    }

    /// Index i with T[i] <= x < T[i+1], right-closed at x = 1.
    int find_span(double x) const {
        if (x < 0.0 || x > 1.0) throw std::invalid_argument("KnotVector: x outside [0,1]");
        const int lo = order_ - 1, hi = size() - 1;
        if (x >= 1.0) return hi;
        auto it = std::upper_bound(extended_.begin() + lo, extended_.begin() + hi + 1, x);
        return static_cast<int>(it - extended_.begin()) - 1;
    }

    /// The q nonzero basis values at x; they occupy indices
    /// first..first+q-1 of the full J-vector and sum to 1.
    void eval_nonzero(double x, int& first, double* values) const {
        const int i = find_span(x);
        const int p = order_ - 1;
        first = i - p;
        // Cox-de Boor recursion over the nonzero window.
        double left[32], right[32];
        values[0] = 1.0;
        for (int j = 1; j <= p; ++j) {
            left[j] = x - extended_[i + 1 - j];
            right[j] = extended_[i + j] - x;
            double saved = 0.0;
            for (int r = 0; r < j; ++r) {
                const double temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
    }

    Eigen::VectorXd eval(double x) const {
        if (order_ > 32) throw std::invalid_argument("KnotVector: order > 32 unsupported");
        Eigen::VectorXd b = Eigen::VectorXd::Zero(size());
        int first;
        double vals[32];
        eval_nonzero(x, first, vals);
        for (int j = 0; j < order_; ++j) b[first + j] = vals[j];
        return b;
    }

private:
    int order_;
    std::vector<double> interior_;
    std::vector<double> extended_;
};

/// Uniform interior knots at l/(N+1), l = 1..N.
inline KnotVector make_uniform_knots(int order, int num_interior) {
    if (order < 1) throw std::invalid_argument("make_uniform_knots: order must be >= 1");
    if (num_interior < 0) throw std::invalid_argument("make_uniform_knots: num_interior must be >= 0");
    std::vector<double> interior(num_interior);
    for (int l = 1; l <= num_interior; ++l)
        interior[l - 1] = static_cast<double>(l) / (num_interior + 1);
    return KnotVector(order, std::move(interior));
}

/// First-difference matrix mapping coefficients on kv to derivative
/// coefficients on kv.reduced(): row j carries (q-1)/(T[j+q]-T[j+1]) times
/// (theta_{j+1} - theta_j).
inline Eigen::MatrixXd first_difference_matrix(const KnotVector& kv) {
    const int q = kv.order();
    if (q < 2) throw std::invalid_argument("first_difference_matrix: order must be >= 2");
    const int J = kv.size();
    const auto& T = kv.extended();
    Eigen::MatrixXd D = Eigen::MatrixXd::Zero(J - 1, J);
    for (int j = 0; j + 1 < J; ++j) {
        const double denom = T[j + q] - T[j + 1];
        const double c = (q - 1) / denom;
        D(j, j) = -c;
        D(j, j + 1) = c;
    }
    return D;
}

/// W_r: the (J-r) x J matrix with d^r/dx^r (b_{J,q}^T theta) =
/// b_{J,q-r}^T W_r theta, built by iterating first differences.
inline Eigen::MatrixXd derivative_matrix(const KnotVector& kv, int r) {
    if (r < 0 || r >= kv.order())
        throw std::invalid_argument("derivative_matrix: need 0 <= r < order");
    Eigen::MatrixXd W = Eigen::MatrixXd::Identity(kv.size(), kv.size());
    KnotVector cur = kv;
    for (int step = 0; step < r; ++step) {
        W = (first_difference_matrix(cur) * W).eval();
        cur = cur.reduced();
    }
    return W;
}

}  // namespace argmax_bayes
