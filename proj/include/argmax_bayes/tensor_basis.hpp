#pragma once

#include "argmax_bayes/bspline.hpp"

#include <Eigen/Dense>

#include <numeric>
#include <stdexcept>
#include <vector>

namespace argmax_bayes {

using Point = Eigen::VectorXd;

/// Mixed partial derivative order, one entry per axis; r = 0 is the identity.
struct DerivOrder {
    std::vector<int> r;

    DerivOrder() = default;
    explicit DerivOrder(std::vector<int> r_) : r(std::move(r_)) {}
    static DerivOrder zero(int d) { return DerivOrder(std::vector<int>(d, 0)); }
    static DerivOrder axis(int d, int k) {
        std::vector<int> e(d, 0);
        e[k] = 1;
        return DerivOrder(std::move(e));
    }

    int dim() const { return static_cast<int>(r.size()); }
    bool is_zero() const {
        return std::all_of(r.begin(), r.end(), [](int v) { return v == 0; });
    }
};

/// Tensor product of univariate bases with lexicographic (last axis fastest)
/// flattening of the multi-index (j_1,...,j_d).
class TensorBasisSpec {
public:
    explicit TensorBasisSpec(std::vector<KnotVector> dims) : dims_(std::move(dims)) {
        if (dims_.empty()) throw std::invalid_argument("TensorBasisSpec: need at least one axis");
    }

    int dim() const { return static_cast<int>(dims_.size()); }
    const KnotVector& axis(int k) const { return dims_[k]; }
    const std::vector<KnotVector>& axes() const { return dims_; }

    long total_size() const {
        long J = 1;
        for (const auto& kv : dims_) J *= kv.size();
        return J;
    }

    std::vector<long> sizes() const {
        std::vector<long> out(dims_.size());
        for (std::size_t k = 0; k < dims_.size(); ++k) out[k] = dims_[k].size();
        return out;
    }

    void validate_deriv(const DerivOrder& r) const {
        if (r.dim() != dim()) throw std::invalid_argument("DerivOrder: dimension mismatch");
        for (int k = 0; k < dim(); ++k)
            if (r.r[k] < 0 || r.r[k] >= dims_[k].order())
                throw std::invalid_argument("DerivOrder: need 0 <= r_k < order_k");
    }

    std::vector<long> reduced_sizes(const DerivOrder& r) const {
        validate_deriv(r);
        std::vector<long> out(dims_.size());
        for (int k = 0; k < dim(); ++k) out[k] = dims_[k].size() - r.r[k];
        return out;
    }

    void validate_point(const Point& x) const {
        if (x.size() != dim()) throw std::invalid_argument("TensorBasisSpec: point dimension mismatch");
        for (int k = 0; k < dim(); ++k)
            if (x[k] < 0.0 || x[k] > 1.0)
                throw std::invalid_argument("TensorBasisSpec: point outside [0,1]^d");
    }

    static long flat_index(const std::vector<long>& sizes, const std::vector<long>& multi) {
        long idx = 0;
        for (std::size_t k = 0; k < sizes.size(); ++k) idx = idx * sizes[k] + multi[k];
        return idx;
    }

    static std::vector<long> multi_index(const std::vector<long>& sizes, long flat) {
        std::vector<long> multi(sizes.size());
        for (std::size_t k = sizes.size(); k-- > 0;) {
            multi[k] = flat % sizes[k];
            flat /= sizes[k];
        }
        return multi;
    }

private:
    std::vector<KnotVector> dims_;
};

inline Eigen::VectorXd kron(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::VectorXd out(a.size() * b.size());
    for (long i = 0; i < a.size(); ++i)
        out.segment(i * b.size(), b.size()) = a[i] * b;
    return out;
}

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (long i = 0; i < a.rows(); ++i)
        for (long j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Row of the reduced-order tensor basis b_{J,q-r}(x), length prod(J_k - r_k).
inline Eigen::VectorXd tensor_row(const TensorBasisSpec& spec, const DerivOrder& r, const Point& x) {
    spec.validate_point(x);
    spec.validate_deriv(r);
    Eigen::VectorXd row = Eigen::VectorXd::Ones(1);
    for (int k = 0; k < spec.dim(); ++k) {
        const KnotVector& kv = spec.axis(k);
        Eigen::VectorXd bk = r.r[k] == 0 ? kv.eval(x[k]) : [&] {
            KnotVector red = kv;
            for (int s = 0; s < r.r[k]; ++s) red = red.reduced();
            return red.eval(x[k]);
        }();
        row = kron(row, bk);
    }
    return row;
}

/// Dense W_r = kron_k W_{r_k}, prod(J_k - r_k) x prod(J_k).
inline Eigen::MatrixXd wr_matrix(const TensorBasisSpec& spec, const DerivOrder& r) {
    spec.validate_deriv(r);
    Eigen::MatrixXd W = Eigen::MatrixXd::Identity(1, 1);
    for (int k = 0; k < spec.dim(); ++k)
        W = kron(W, derivative_matrix(spec.axis(k), r.r[k]));
    return W;
}

/// W_r theta without forming W_r: contracts one axis at a time.
inline Eigen::VectorXd apply_wr(const TensorBasisSpec& spec, const DerivOrder& r,
                                const Eigen::VectorXd& theta) {
    spec.validate_deriv(r);
    if (theta.size() != spec.total_size())
        throw std::invalid_argument("apply_wr: coefficient length mismatch");
    std::vector<long> sizes = spec.sizes();
    Eigen::VectorXd cur = theta;
    for (int k = 0; k < spec.dim(); ++k) {
        if (r.r[k] == 0) continue;
        Eigen::MatrixXd Wk = derivative_matrix(spec.axis(k), r.r[k]);
        long inner = 1, outer = 1;
        for (int l = k + 1; l < spec.dim(); ++l) inner *= sizes[l];
        for (int l = 0; l < k; ++l) outer *= sizes[l];
        const long nk = sizes[k], mk = Wk.rows();
        Eigen::VectorXd next(outer * mk * inner);
        for (long o = 0; o < outer; ++o)
            for (long a = 0; a < mk; ++a)
                for (long i = 0; i < inner; ++i) {
                    double acc = 0.0;
                    for (long b = 0; b < nk; ++b)
                        acc += Wk(a, b) * cur[(o * nk + b) * inner + i];
                    next[(o * mk + a) * inner + i] = acc;
                }
        cur = std::move(next);
        sizes[k] = mk;
    }
    return cur;
}

/// D^r of the spline with coefficients theta, evaluated at a single point.
inline double eval_spline(const TensorBasisSpec& spec, const DerivOrder& r,
                          const Eigen::VectorXd& theta, const Point& x) {
    return tensor_row(spec, r, x).dot(apply_wr(spec, r, theta));
}

/// B-spline design matrix: row i = tensor_row(spec, 0, X_i).
inline Eigen::MatrixXd design_matrix(const TensorBasisSpec& spec,
                                     const std::vector<Point>& X) {
    if (X.empty()) throw std::invalid_argument("design_matrix: need n >= 1");
    const long J = spec.total_size();
    Eigen::MatrixXd B(static_cast<long>(X.size()), J);
    DerivOrder r0 = DerivOrder::zero(spec.dim());
    for (std::size_t i = 0; i < X.size(); ++i)
        B.row(static_cast<long>(i)) = tensor_row(spec, r0, X[i]).transpose();
    return B;
}

/// Compact design representation for fast normal-equation assembly: each row
/// keeps only the per-axis nonzero windows (at most prod q_k entries).
class SparseDesign {
public:
    SparseDesign(const TensorBasisSpec& spec, const std::vector<Point>& X)
        : n_(static_cast<long>(X.size())), J_(spec.total_size()) {
        if (X.empty()) throw std::invalid_argument("SparseDesign: need n >= 1");
        const int d = spec.dim();
        nnz_ = 1;
        for (int k = 0; k < d; ++k) nnz_ *= spec.axis(k).order();
        cols_.resize(n_ * nnz_);
        vals_.resize(n_ * nnz_);
        std::vector<long> strides(d, 1);
        for (int k = d - 2; k >= 0; --k) strides[k] = strides[k + 1] * spec.axis(k + 1).size();

        std::vector<int> firsts(d);
        std::vector<std::vector<double>> axis_vals(d);
        for (int k = 0; k < d; ++k) axis_vals[k].resize(spec.axis(k).order());
        for (long i = 0; i < n_; ++i) {
            spec.validate_point(X[i]);
            for (int k = 0; k < d; ++k)
                spec.axis(k).eval_nonzero(X[i][k], firsts[k], axis_vals[k].data());
            // enumerate the tensor window
            std::vector<int> a(d, 0);
            for (long e = 0; e < nnz_; ++e) {
                long col = 0;
                double v = 1.0;
                for (int k = 0; k < d; ++k) {
                    col += (firsts[k] + a[k]) * strides[k];
                    v *= axis_vals[k][a[k]];
                }
                cols_[i * nnz_ + e] = col;
                vals_[i * nnz_ + e] = v;
                for (int k = d - 1; k >= 0; --k) {
                    if (++a[k] < spec.axis(k).order()) break;
                    a[k] = 0;
                }
            }
        }
    }

    long rows() const { return n_; }
    long cols() const { return J_; }

    Eigen::MatrixXd gram() const {  // B^T B
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(J_, J_);
        for (long i = 0; i < n_; ++i) {
            const long* c = &cols_[i * nnz_];
            const double* v = &vals_[i * nnz_];
            for (long a = 0; a < nnz_; ++a)
                for (long b = a; b < nnz_; ++b)
                    G(c[a], c[b]) += v[a] * v[b];
        }
        G = G.selfadjointView<Eigen::Upper>();
        return G;
    }

    Eigen::VectorXd mult_transpose(const Eigen::VectorXd& y) const {  // B^T y
        Eigen::VectorXd out = Eigen::VectorXd::Zero(J_);
        for (long i = 0; i < n_; ++i)
            for (long a = 0; a < nnz_; ++a)
                out[cols_[i * nnz_ + a]] += vals_[i * nnz_ + a] * y[i];
        return out;
    }

    Eigen::VectorXd mult(const Eigen::VectorXd& theta) const {  // B theta
        Eigen::VectorXd out = Eigen::VectorXd::Zero(n_);
        for (long i = 0; i < n_; ++i)
            for (long a = 0; a < nnz_; ++a)
                out[i] += vals_[i * nnz_ + a] * theta[cols_[i * nnz_ + a]];
        return out;
    }

private:
    long n_, J_, nnz_;
    std::vector<long> cols_;
    std::vector<double> vals_;
};

/// Product-grid evaluator for D^r f: precomputes per-axis basis matrices so a
/// coefficient draw is mapped to all grid values by d small matrix products.
class GridEvaluator {
public:
    GridEvaluator(const TensorBasisSpec& spec, const DerivOrder& r,
                  const std::vector<std::vector<double>>& axis_grids)
        : spec_(spec), r_(r) {
        spec.validate_deriv(r);
        if (static_cast<int>(axis_grids.size()) != spec.dim())
            throw std::invalid_argument("GridEvaluator: grid dimension mismatch");
        const int d = spec.dim();
        basis_.reserve(d);
        w_.reserve(d);
        total_points_ = 1;
        for (int k = 0; k < d; ++k) {
            KnotVector red = spec.axis(k);
            for (int s = 0; s < r.r[k]; ++s) red = red.reduced();
            const auto& g = axis_grids[k];
            Eigen::MatrixXd M(static_cast<long>(g.size()), red.size());
            for (std::size_t i = 0; i < g.size(); ++i)
                M.row(static_cast<long>(i)) = red.eval(g[i]).transpose();
            basis_.push_back(std::move(M));
            w_.push_back(derivative_matrix(spec.axis(k), r.r[k]));
            grid_sizes_.push_back(static_cast<long>(g.size()));
            total_points_ *= static_cast<long>(g.size());
        }
    }

    long total_points() const { return total_points_; }
    const std::vector<long>& grid_sizes() const { return grid_sizes_; }

    /// Values of D^r f over the grid (row-major in the axis order).
    Eigen::VectorXd values(const Eigen::VectorXd& theta) const {
        const int d = spec_.dim();
        if (d == 1) return basis_[0] * (w_[0] * theta);
        if (d == 2) {
            const long n1 = w_[0].rows(), n2 = w_[1].rows();
            Eigen::VectorXd c = apply_wr(spec_, r_, theta);
            Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
                C(c.data(), n1, n2);
            Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> V =
                basis_[0] * C * basis_[1].transpose();
            return Eigen::Map<Eigen::VectorXd>(V.data(), V.size());
        }
        // general d: contract axes one at a time
        Eigen::VectorXd cur = apply_wr(spec_, r_, theta);
        std::vector<long> sizes(d);
        for (int k = 0; k < d; ++k) sizes[k] = w_[k].rows();
        for (int k = 0; k < d; ++k) {
            long inner = 1, outer = 1;
            for (int l = k + 1; l < d; ++l) inner *= sizes[l];
            for (int l = 0; l < k; ++l) outer *= sizes[l];
            const long nk = sizes[k], gk = grid_sizes_[k];
            Eigen::VectorXd next(outer * gk * inner);
            for (long o = 0; o < outer; ++o)
                for (long a = 0; a < gk; ++a)
                    for (long i = 0; i < inner; ++i) {
                        double acc = 0.0;
                        for (long b = 0; b < nk; ++b)
                            acc += basis_[k](a, b) * cur[(o * nk + b) * inner + i];
                        next[(o * gk + a) * inner + i] = acc;
                    }
            cur = std::move(next);
            sizes[k] = gk;
        }
        return cur;
    }

private:
    TensorBasisSpec spec_;
    DerivOrder r_;
    std::vector<Eigen::MatrixXd> basis_;
    std::vector<Eigen::MatrixXd> w_;
    std::vector<long> grid_sizes_;
    long total_points_ = 0;
};

/// Uniform grid helper: m points at i/(m-1) (endpoints included).
inline std::vector<double> uniform_grid(int m) {
    if (m < 2) throw std::invalid_argument("uniform_grid: need >= 2 points");
    std::vector<double> g(m);
    for (int i = 0; i < m; ++i) g[i] = static_cast<double>(i) / (m - 1);
    return g;
}

}  // namespace argmax_bayes
