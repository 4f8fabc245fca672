#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "pdopt/oracle.hpp"

using namespace pdopt;

namespace {

std::mt19937_64 rng(101);

VectorXd randn(int n) {
    std::normal_distribution<double> g;
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = g(rng);
    return v;
}

FunctionOracle spd_quadratic(int n) {
    MatrixXd M(n, n);
    for (int r = 0; r < n; ++r) M.row(r) = randn(n).transpose();
    return FunctionOracle::quadratic(M.transpose() * M +
                                         0.3 * MatrixXd::Identity(n, n),
                                     randn(n));
}

FunctionOracle small_logistic() {
    MatrixXd X(4, 3);
    X << 1.0, -0.5, 0.2, 0.3, 0.9, -1.1, -0.7, 0.4, 0.6, 0.1, -0.2, 0.8;
    VectorXd y(4);
    y << 1, -1, 1, -1;
    return FunctionOracle::logistic(X, y, 0.1);
}

}  // namespace

TEST_CASE("eval on the basic kinds") {
    FunctionOracle q =
        FunctionOracle::quadratic(MatrixXd::Identity(2, 2), VectorXd::Zero(2));
    CHECK(q.eval(VectorXd::Zero(2)) == 0.0);
    VectorXd ones = VectorXd::Ones(2);
    CHECK(q.eval(ones) == Catch::Approx(1.0));

    VectorXd c(2);
    c << 2, -1;
    FunctionOracle lin = FunctionOracle::linear(c);
    CHECK(lin.eval(ones) == Catch::Approx(1.0));

    CHECK_THROWS_AS(q.eval(VectorXd::Zero(3)), std::invalid_argument);
}

TEST_CASE("gradients match closed forms and finite differences") {
    FunctionOracle q =
        FunctionOracle::quadratic(MatrixXd::Identity(2, 2), VectorXd::Zero(2));
    VectorXd x(2);
    x << 3, -3;
    CHECK((q.grad(x) - x).norm() == 0.0);

    VectorXd c(2);
    c << 2, -1;
    FunctionOracle lin = FunctionOracle::linear(c);
    CHECK((lin.grad(randn(2)) - c).norm() == 0.0);

    // logistic: single sample, zero weights, against central differences
    MatrixXd X(1, 2);
    X << 0.7, -1.3;
    VectorXd y(1);
    y << 1;
    FunctionOracle lg = FunctionOracle::logistic(X, y, 0.0);
    VectorXd w0 = VectorXd::Zero(2);
    CHECK((lg.grad(w0) - finite_difference_grad(lg, w0)).cwiseAbs().maxCoeff() <=
          1e-6);
    // closed form at 0: -(1/2) y x
    CHECK((lg.grad(w0) + 0.5 * X.row(0).transpose()).norm() <= 1e-12);
}

TEST_CASE("gradient finite-difference sweep over smooth kinds") {
    std::vector<FunctionOracle> oracles = {spd_quadratic(5),
                                           FunctionOracle::linear(randn(4)),
                                           small_logistic()};
    for (const auto& o : oracles) {
        for (int t = 0; t < 20; ++t) {
            VectorXd x = randn(o.dim());
            VectorXd g = o.grad(x);
            VectorXd fd = finite_difference_grad(o, x);
            CHECK((g - fd).cwiseAbs().maxCoeff() <=
                  1e-5 * (1.0 + g.cwiseAbs().maxCoeff()));
        }
    }
}

TEST_CASE("co-coercivity and strong-convexity sample checks") {
    std::vector<FunctionOracle> oracles = {spd_quadratic(4), small_logistic()};
    for (const auto& o : oracles) {
        for (int t = 0; t < 20; ++t) {
            VectorXd x = randn(o.dim()), y = randn(o.dim());
            VectorXd dg = o.grad(x) - o.grad(y);
            CHECK((x - y).dot(dg) >= dg.squaredNorm() / o.ell() - 1e-8);
            CHECK(o.eval(y) >= o.eval(x) + o.grad(x).dot(y - x) +
                                   0.5 * o.mu() * (y - x).squaredNorm() - 1e-8);
        }
    }
}

TEST_CASE("prox closed forms and optimality") {
    FunctionOracle q =
        FunctionOracle::quadratic(MatrixXd::Identity(2, 2), VectorXd::Zero(2));
    VectorXd v(2);
    v << 2, 0;
    VectorXd expect(2);
    expect << 1, 0;
    CHECK((q.prox(v, 1.0) - expect).norm() <= 1e-14);
    CHECK((q.prox(v, 1e-12) - v).norm() <= 1e-10);

    VectorXd c(2);
    c << 2, -1;
    FunctionOracle lin = FunctionOracle::linear(c);
    VectorXd w = randn(2);
    CHECK((lin.prox(w, 0.3) - (w - 0.3 * c)).norm() <= 1e-14);

    // subgradient residual of prox output
    FunctionOracle plq = FunctionOracle::piecewise_linear_quadratic(
        (VectorXd(2) << 1.0, 0.5).finished(),
        (VectorXd(2) << -0.3, 0.2).finished(),
        (VectorXd(2) << 2.0, 1.0).finished());
    for (int t = 0; t < 20; ++t) {
        VectorXd p = randn(2);
        VectorXd x = plq.prox(p, 0.5);
        // optimality by sampling: prox point is no worse than nearby points
        double fx = plq.eval(x) + (x - p).squaredNorm() / (2.0 * 0.5);
        for (int t2 = 0; t2 < 30; ++t2) {
            VectorXd z = x + 1e-4 * randn(2);
            CHECK(plq.eval(z) + (z - p).squaredNorm() / (2.0 * 0.5) >=
                  fx - 1e-8);
        }
    }

    FunctionOracle smooth = spd_quadratic(3);
    for (int t = 0; t < 10; ++t) {
        VectorXd p = randn(3);
        VectorXd x = smooth.prox(p, 0.7);
        CHECK((smooth.grad(x) + (x - p) / 0.7).norm() <= 1e-8);
    }

    CHECK_THROWS_AS(small_logistic().prox(randn(3), 1.0), CapabilityError);
}

TEST_CASE("argmin_shifted closed forms") {
    MatrixXd Q = MatrixXd::Identity(2, 2);
    VectorXd q(2);
    q << 1, -1;
    FunctionOracle o = FunctionOracle::quadratic(Q, q);
    MatrixXd A(1, 2);
    A << 1, 1;
    MatrixXd H = A.transpose() * A;
    VectorXd x = o.argmin_shifted(VectorXd::Zero(2), H);
    // oracle: dense solve of (Q + H) x = -q
    VectorXd ref = (Q + H).ldlt().solve(-q);
    CHECK((x - ref).norm() <= 1e-12);
    VectorXd expect(2);
    expect << -1, 1;
    CHECK((x - expect).norm() <= 1e-12);

    FunctionOracle hom =
        FunctionOracle::quadratic(MatrixXd::Identity(3, 3), VectorXd::Zero(3));
    CHECK(hom.argmin_shifted(VectorXd::Zero(3), MatrixXd::Zero(3, 3)).norm() ==
          0.0);

    VectorXd c(2);
    c << 0.4, -0.9;
    FunctionOracle lin = FunctionOracle::linear(c);
    CHECK((lin.argmin_shifted(-c, MatrixXd::Identity(2, 2))).norm() <= 1e-14);
    CHECK_THROWS_AS(lin.argmin_shifted(c, MatrixXd::Zero(2, 2)),
                    CapabilityError);
}

TEST_CASE("nonsmooth kind guards its gradient") {
    FunctionOracle plq = FunctionOracle::piecewise_linear_quadratic(
        VectorXd::Ones(2), VectorXd::Zero(2), VectorXd::Ones(2));
    CHECK_THROWS_AS(plq.grad(randn(2)), CapabilityError);
    plq.allow_subgradient(true);
    CHECK_NOTHROW(plq.grad(randn(2)));
    CHECK_THROWS_AS(plq.argmin_shifted(randn(2), MatrixXd::Identity(2, 2)),
                    CapabilityError);
}

TEST_CASE("declared constants match the quadratic spectrum") {
    FunctionOracle o = spd_quadratic(5);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(o.Q());
    CHECK(o.mu() == Catch::Approx(es.eigenvalues().minCoeff()));
    CHECK(o.ell() == Catch::Approx(es.eigenvalues().maxCoeff()));
    CHECK_THROWS_AS(
        FunctionOracle::quadratic(-MatrixXd::Identity(2, 2), VectorXd::Zero(2)),
        std::invalid_argument);
}
