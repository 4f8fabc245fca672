#pragma once

#include <cmath>
#include <limits>
#include <utility>

#include "pdopt/common.hpp"

namespace pdopt {

/// Uniform interface to an objective block: value, gradient, proximal map
/// and exact regularized argmin where the kind admits one. Declared
/// convexity constants mu (strong convexity) and ell (gradient Lipschitz)
/// are set at construction.
class FunctionOracle {
 public:
    enum class Kind { Quadratic, Linear, Logistic, PiecewiseLinearQuadratic };

    static FunctionOracle quadratic(MatrixXd Q, VectorXd q) {
        require(Q.rows() == Q.cols() && Q.rows() == q.size(),
                "quadratic oracle: dimension mismatch");
        require((Q - Q.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
                "quadratic oracle: Q must be symmetric");
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(Q);
        double lo = es.eigenvalues().minCoeff();
        double hi = es.eigenvalues().maxCoeff();
        require(lo >= -1e-10, "quadratic oracle: Q must be PSD");
        FunctionOracle o;
        o.kind_ = Kind::Quadratic;
        o.d_ = static_cast<int>(q.size());
        o.Q_ = std::move(Q);
        o.q_ = std::move(q);
        o.mu_ = std::max(lo, 0.0);
        o.ell_ = std::max(hi, 0.0);
        return o;
    }

    static FunctionOracle linear(VectorXd c) {
        FunctionOracle o;
        o.kind_ = Kind::Linear;
        o.d_ = static_cast<int>(c.size());
        o.q_ = std::move(c);
        o.mu_ = 0.0;
        o.ell_ = 0.0;
        return o;
    }

    /// f(w) = sum_i log(1 + exp(-y_i x_i^T w)) + (l2/2) ||w||^2,
    /// rows of X are samples, labels y_i in {-1, +1}.
    static FunctionOracle logistic(MatrixXd X, VectorXd y, double l2) {
        require(X.rows() == y.size(), "logistic oracle: rows/labels mismatch");
        require(l2 >= 0.0, "logistic oracle: l2 must be nonnegative");
        for (int i = 0; i < y.size(); ++i)
            require(y(i) == 1.0 || y(i) == -1.0,
                    "logistic oracle: labels must be -1/+1");
        FunctionOracle o;
        o.kind_ = Kind::Logistic;
        o.d_ = static_cast<int>(X.cols());
        o.mu_ = l2;
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(X.transpose() * X);
        o.ell_ = es.eigenvalues().maxCoeff() / 4.0 + l2;
        o.X_ = std::move(X);
        o.y_ = std::move(y);
        o.l2_ = l2;
        return o;
    }

    /// Separable f(x) = sum_i a_i max(x_i, 0) + b_i x_i + (c_i/2) x_i^2
    /// with a_i, c_i >= 0. Covers the piecewise-linear-plus-quadratic cost
    /// models used by the energy market peers.
    static FunctionOracle piecewise_linear_quadratic(VectorXd a, VectorXd b,
                                                     VectorXd c) {
        require(a.size() == b.size() && b.size() == c.size(),
                "plq oracle: dimension mismatch");
        require(a.minCoeff() >= 0.0 && c.minCoeff() >= 0.0,
                "plq oracle: a_i and c_i must be nonnegative for convexity");
        FunctionOracle o;
        o.kind_ = Kind::PiecewiseLinearQuadratic;
        o.d_ = static_cast<int>(a.size());
        o.plq_a_ = std::move(a);
        o.q_ = std::move(b);
        o.plq_c_ = std::move(c);
        o.mu_ = o.plq_c_.minCoeff();
        o.ell_ = std::numeric_limits<double>::infinity();
        return o;
    }

    Kind kind() const { return kind_; }
    int dim() const { return d_; }
    double mu() const { return mu_; }
    double ell() const { return ell_; }
    bool smooth() const { return kind_ != Kind::PiecewiseLinearQuadratic; }
    /// Opt in to the fixed subgradient selection (zero slope at kinks)
    /// for the nonsmooth kind.
    void allow_subgradient(bool on) { subgradient_ok_ = on; }

    double eval(const VectorXd& x) const {
        require(x.size() == d_, "oracle eval: dimension mismatch");
        switch (kind_) {
            case Kind::Quadratic:
                return 0.5 * x.dot(Q_ * x) + q_.dot(x);
            case Kind::Linear:
                return q_.dot(x);
            case Kind::Logistic: {
                double s = 0.5 * l2_ * x.squaredNorm();
                VectorXd m = -(X_ * x).cwiseProduct(y_);
                for (int i = 0; i < m.size(); ++i)
                    s += (m(i) > 30.0) ? m(i) : std::log1p(std::exp(m(i)));
                return s;
            }
            case Kind::PiecewiseLinearQuadratic: {
                double s = 0.0;
                for (int i = 0; i < d_; ++i)
                    s += plq_a_(i) * std::max(x(i), 0.0) + q_(i) * x(i) +
                         0.5 * plq_c_(i) * x(i) * x(i);
                return s;
            }
        }
        return 0.0;
    }

    VectorXd grad(const VectorXd& x) const {
        require(x.size() == d_, "oracle grad: dimension mismatch");
        switch (kind_) {
            case Kind::Quadratic:
                return Q_ * x + q_;
            case Kind::Linear:
                return q_;
            case Kind::Logistic: {
                VectorXd g = l2_ * x;
                VectorXd m = -(X_ * x).cwiseProduct(y_);
                for (int i = 0; i < m.size(); ++i) {
                    double sig = 1.0 / (1.0 + std::exp(-m(i)));
                    g -= sig * y_(i) * X_.row(i).transpose();
                }
                return g;
            }
            case Kind::PiecewiseLinearQuadratic: {
                if (!subgradient_ok_)
                    throw CapabilityError(
                        "plq oracle: nonsmooth; no subgradient selection "
                        "rule configured");
                VectorXd g(d_);
                for (int i = 0; i < d_; ++i)
                    g(i) = (x(i) > 0.0 ? plq_a_(i) : 0.0) + q_(i) +
                           plq_c_(i) * x(i);
                return g;
            }
        }
        return VectorXd();
    }

    /// argmin_x f(x) + (1/(2 step)) ||x - v||^2
    VectorXd prox(const VectorXd& v, double step) const {
        require(v.size() == d_, "oracle prox: dimension mismatch");
        require(step > 0.0, "oracle prox: step must be positive");
        switch (kind_) {
            case Kind::Quadratic: {
                MatrixXd M = MatrixXd::Identity(d_, d_) + step * Q_;
                return M.ldlt().solve(v - step * q_);
            }
            case Kind::Linear:
                return v - step * q_;
            case Kind::PiecewiseLinearQuadratic: {
                VectorXd x(d_);
                for (int i = 0; i < d_; ++i) {
                    double denom = plq_c_(i) + 1.0 / step;
                    double xm = (v(i) / step - q_(i)) / denom;
                    double xp = (v(i) / step - q_(i) - plq_a_(i)) / denom;
                    x(i) = (xm <= 0.0) ? xm : (xp >= 0.0 ? xp : 0.0);
                }
                return x;
            }
            case Kind::Logistic:
                throw CapabilityError("logistic oracle: prox not available");
        }
        return VectorXd();
    }

    /// Exact minimizer of f(x) + a^T x + (1/2) x^T H x for symmetric PSD H.
    VectorXd argmin_shifted(const VectorXd& a, const MatrixXd& H) const {
        require(a.size() == d_ && H.rows() == d_ && H.cols() == d_,
                "argmin_shifted: dimension mismatch");
        switch (kind_) {
            case Kind::Quadratic: {
                MatrixXd M = Q_ + H;
                Eigen::LDLT<MatrixXd> f(M);
                if (f.info() != Eigen::Success || !f.isPositive())
                    throw CapabilityError(
                        "argmin_shifted: shifted quadratic not strictly "
                        "convex");
                return f.solve(-(q_ + a));
            }
            case Kind::Linear: {
                Eigen::LLT<MatrixXd> f(H);
                if (f.info() != Eigen::Success)
                    throw CapabilityError(
                        "argmin_shifted: linear objective unbounded below "
                        "(H not positive definite)");
                return f.solve(-(q_ + a));
            }
            default:
                throw CapabilityError(
                    "argmin_shifted: no closed form for this oracle kind");
        }
    }

    const MatrixXd& Q() const { return Q_; }
    const VectorXd& linear_term() const { return q_; }

 private:
    FunctionOracle() = default;

    Kind kind_ = Kind::Linear;
    int d_ = 0;
    double mu_ = 0.0;
    double ell_ = 0.0;
    MatrixXd Q_;
    VectorXd q_;  // linear coefficient (c for linear, q for quadratic, b for plq)
    MatrixXd X_;
    VectorXd y_;
    double l2_ = 0.0;
    VectorXd plq_a_, plq_c_;
    bool subgradient_ok_ = false;
};

/// Central finite-difference gradient, h = 1e-6.
inline VectorXd finite_difference_grad(const FunctionOracle& o,
                                       const VectorXd& x, double h = 1e-6) {
    VectorXd g(x.size());
    for (int i = 0; i < x.size(); ++i) {
        VectorXd xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        g(i) = (o.eval(xp) - o.eval(xm)) / (2.0 * h);
    }
    return g;
}

}  // namespace pdopt
