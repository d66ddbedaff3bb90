#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace argmax_bayes {

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Cholesky of a symmetric positive-definite matrix with a single jittered
/// retry (1e-10 * trace / J on the diagonal) before failing hard. The error
/// message carries an eigenvalue-based condition estimate.
class SpdSolver {
public:
    explicit SpdSolver(const Eigen::MatrixXd& m, const char* what = "SpdSolver") {
        llt_.compute(m);
        if (llt_.info() != Eigen::Success) {
            jitter_ = 1e-10 * m.trace() / static_cast<double>(m.rows());
            Eigen::MatrixXd jittered = m;
            jittered.diagonal().array() += jitter_;
            llt_.compute(jittered);
            if (llt_.info() != Eigen::Success) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(m, Eigen::EigenvaluesOnly);
                std::ostringstream msg;
                msg << what << ": factorization failed; eigenvalue range ["
                    << eig.eigenvalues().minCoeff() << ", " << eig.eigenvalues().maxCoeff()
                    << "], condition estimate "
                    << eig.eigenvalues().maxCoeff() / eig.eigenvalues().minCoeff();
                throw NumericalError(msg.str());
            }
        }
    }

    template <typename Derived>
    typename Derived::PlainObject solve(const Eigen::MatrixBase<Derived>& rhs) const {
        return llt_.solve(rhs);
    }

    /// w with Cov(w) = M^{-1}: solves L^T w = z for z ~ N(0, I).
    Eigen::VectorXd unwhiten(const Eigen::VectorXd& z) const {
        return llt_.matrixU().solve(z);
    }

    double logdet() const {
        return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
    }

    double jitter_used() const { return jitter_; }

private:
    Eigen::LLT<Eigen::MatrixXd> llt_;
    double jitter_ = 0.0;
};

inline Eigen::MatrixXd spd_inverse(const Eigen::MatrixXd& m, const char* what = "spd_inverse") {
    SpdSolver s(m, what);
    return s.solve(Eigen::MatrixXd::Identity(m.rows(), m.cols()));
}

}  // namespace argmax_bayes
