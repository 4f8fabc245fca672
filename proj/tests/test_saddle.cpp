#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "pdopt/reference.hpp"
#include "pdopt/saddle.hpp"

using namespace pdopt;

namespace {

std::mt19937_64 rng(202);

VectorXd randn(int n) {
    std::normal_distribution<double> g;
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = g(rng);
    return v;
}

MatrixXd randn_mat(int r, int c) {
    MatrixXd m(r, c);
    for (int i = 0; i < r; ++i) m.row(i) = randn(c).transpose();
    return m;
}

FunctionOracle spd_quadratic(int n) {
    MatrixXd M = randn_mat(n, n);
    return FunctionOracle::quadratic(M.transpose() * M +
                                         0.5 * MatrixXd::Identity(n, n),
                                     randn(n));
}

ProblemSpec scalar_half_square(double rho) {
    std::vector<ProblemSpec::Block> blocks;
    blocks.push_back({FunctionOracle::quadratic(MatrixXd::Identity(1, 1),
                                                VectorXd::Zero(1)),
                      MatrixXd::Identity(1, 1)});
    return ProblemSpec(std::move(blocks), rho);
}

ProblemSpec random_instance(int n, int m, double rho) {
    std::vector<ProblemSpec::Block> blocks;
    blocks.push_back({spd_quadratic(n), randn_mat(m, n)});
    return ProblemSpec(std::move(blocks), rho);
}

}  // namespace

TEST_CASE("augmented Lagrangian values") {
    ProblemSpec p = scalar_half_square(1.0);
    VectorXd x1 = VectorXd::Ones(1), l1 = VectorXd::Ones(1);
    CHECK(aug_lagrangian(p, x1, l1) == Catch::Approx(2.0));  // 0.5 + 1 + 0.5

    // feasible point: penalty and dual terms vanish
    ProblemSpec p2 = random_instance(4, 2, 1.7);
    // build a feasible x in the null space of A
    MatrixXd A = p2.assembled_A();
    Eigen::FullPivLU<MatrixXd> lu(A);
    MatrixXd N = lu.kernel();
    VectorXd x = N * randn(N.cols());
    CHECK(aug_lagrangian(p2, x, randn(2)) == Catch::Approx(p2.objective(x)));

    // rho = 0, lambda = 0 degenerates to the plain objective
    ProblemSpec p3 = scalar_half_square(0.0);
    VectorXd xr = randn(1);
    CHECK(aug_lagrangian(p3, xr, VectorXd::Zero(1)) ==
          Catch::Approx(p3.objective(xr)));
}

TEST_CASE("alm_step closed-form examples") {
    MatrixXd Q = MatrixXd::Identity(2, 2);
    VectorXd q(2);
    q << 1, -1;
    MatrixXd A(1, 2);
    A << 1, 1;
    std::vector<ProblemSpec::Block> blocks;
    blocks.push_back({FunctionOracle::quadratic(Q, q), A});
    ProblemSpec p(std::move(blocks), 1.0);
    SolverState s = make_state(p);
    SolverState s1 = alm_step(p, s);
    // oracle: dense solve of (Q + rho A^T A) x = -q - A^T lambda
    VectorXd xref = (Q + A.transpose() * A).ldlt().solve(-q);
    CHECK((s1.x - xref).norm() <= 1e-12);
    VectorXd expect(2);
    expect << -1, 1;
    CHECK((s1.x - expect).norm() <= 1e-12);
    CHECK(s1.lambda.cwiseAbs().maxCoeff() <= 1e-12);

    // q = 0: origin is optimal and feasible
    std::vector<ProblemSpec::Block> b0;
    b0.push_back({FunctionOracle::quadratic(Q, VectorXd::Zero(2)), A});
    ProblemSpec p0(std::move(b0), 1.0);
    SolverState z = alm_step(p0, make_state(p0));
    CHECK(z.x.norm() <= 1e-14);
    CHECK(z.lambda.norm() <= 1e-14);

    // A = 0: dual frozen, primal jumps to the unconstrained argmin
    std::vector<ProblemSpec::Block> bz;
    bz.push_back({FunctionOracle::quadratic(Q, q), MatrixXd::Zero(1, 2)});
    ProblemSpec pz(std::move(bz), 1.0);
    SolverState sz = make_state(pz);
    sz.lambda = randn(1);
    SolverState sz1 = alm_step(pz, sz);
    CHECK((sz1.lambda - sz.lambda).norm() == 0.0);
    CHECK((sz1.x - Q.ldlt().solve(-q)).norm() <= 1e-12);
}

TEST_CASE("proximal point on the dual") {
    ProblemSpec p = scalar_half_square(1.0);
    VectorXd l(1);
    l << 2;
    VectorXd l1 = prox_point_dual_step(p, l);
    // D(mu) = -mu^2/2; maximize -mu^2/2 - (mu-2)^2/2 -> mu = 1
    CHECK(l1(0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(prox_point_dual_step(p, VectorXd::Zero(1)).norm() <= 1e-14);
}

TEST_CASE("ALM dual sequence equals dual proximal point") {
    for (int trial = 0; trial < 10; ++trial) {
        int n = 2 + static_cast<int>(rng() % 6);
        int m = 1 + static_cast<int>(rng() % 3);
        ProblemSpec p = random_instance(n, m, 0.5 + 0.1 * trial);
        SolverState s = make_state(p);
        VectorXd lam = s.lambda;
        for (int k = 0; k < 50; ++k) {
            s = alm_step(p, s);
            lam = prox_point_dual_step(p, lam);
            REQUIRE((s.lambda - lam).norm() <= 1e-8);
        }
    }
}

TEST_CASE("ALM performs dual ascent") {
    ProblemSpec p = random_instance(5, 2, 1.0);
    SolverState s = make_state(p);
    s.lambda = randn(2);
    double prev = dual_function_value(p, s.lambda);
    for (int k = 0; k < 30; ++k) {
        s = alm_step(p, s);
        double cur = dual_function_value(p, s.lambda);
        CHECK(cur >= prev - 1e-10);
        prev = cur;
    }
}

TEST_CASE("dual function closed form and concavity") {
    ProblemSpec p = scalar_half_square(1.0);
    VectorXd l(1);
    l << 2;
    CHECK(dual_function_value(p, l) == Catch::Approx(-2.0));
    CHECK(dual_function_value(p, VectorXd::Zero(1)) == Catch::Approx(0.0));

    ProblemSpec p2 = random_instance(4, 2, 1.0);
    for (int t = 0; t < 20; ++t) {
        VectorXd a = randn(2), b = randn(2);
        double mid = dual_function_value(p2, 0.5 * (a + b));
        double avg = 0.5 * (dual_function_value(p2, a) +
                            dual_function_value(p2, b));
        CHECK(mid >= avg - 1e-10);
    }
}

TEST_CASE("ahu_step substitution example and fixed point") {
    ProblemSpec p = scalar_half_square(1.0);
    SolverState s = make_state(p);
    s.x = VectorXd::Ones(1);
    SolverState s1 = ahu_step(p, s, 0.1);
    CHECK(s1.x(0) == Catch::Approx(0.8));       // grad_x L = x + lambda + rho x = 2
    CHECK(s1.lambda(0) == Catch::Approx(0.8));  // lambda + rho * x+

    // saddle point is fixed
    ProblemSpec p2 = random_instance(4, 2, 1.0);
    ReferenceSolution ref = reference_solve(p2);
    SolverState star = make_state(p2);
    star.x = ref.x;
    star.lambda = ref.lambda;
    SolverState moved = ahu_step(p2, star, ahu_default_alpha(p2));
    CHECK((moved.x - ref.x).norm() <= 1e-10);
    CHECK((moved.lambda - ref.lambda).norm() <= 1e-10);

    // alpha = 0 degenerate step
    SolverState s0 = make_state(p2);
    s0.x = randn(p2.n());
    SolverState s0n = ahu_step(p2, s0, 0.0);
    CHECK((s0n.x - s0.x).norm() == 0.0);
    CHECK((s0n.lambda - (s0.lambda + p2.rho * p2.constraint(s0.x))).norm() <=
          1e-14);
}

TEST_CASE("admm_step on two quadratic blocks") {
    std::vector<ProblemSpec::Block> blocks;
    blocks.push_back({spd_quadratic(3), randn_mat(2, 3)});
    blocks.push_back({spd_quadratic(2), randn_mat(2, 2)});
    ProblemSpec p(std::move(blocks), 1.0);
    ReferenceSolution ref = reference_solve(p);

    SolverState s = make_state(p);
    for (int k = 0; k < 3000; ++k) s = admm_step(p, s);
    CHECK((s.x - ref.x).norm() <= 1e-8);

    // stationary start is fixed
    SolverState star = s;
    SolverState star1 = admm_step(p, star);
    CHECK((star1.x - star.x).norm() <= 1e-9);

    // consensus-style closed form: A2 = -I, f2 = 0
    std::vector<ProblemSpec::Block> cb;
    MatrixXd A1 = randn_mat(2, 3);
    cb.push_back({spd_quadratic(3), A1});
    cb.push_back({FunctionOracle::linear(VectorXd::Zero(2)),
                  -MatrixXd::Identity(2, 2)});
    ProblemSpec pc(std::move(cb), 2.0);
    SolverState sc = make_state(pc);
    sc.lambda = randn(2);
    SolverState sc1 = admm_step(pc, sc);
    VectorXd x1 = sc1.x.head(3);
    VectorXd x2 = sc1.x.tail(2);
    CHECK((x2 - (A1 * x1 + sc.lambda / pc.rho)).norm() <= 1e-12);

    CHECK_THROWS_AS(admm_step(random_instance(3, 1, 1.0), make_state(p)),
                    std::invalid_argument);
}

namespace {

/// Divergence witness instance: two weakly curved scalar blocks coupled by
/// A = [1 1].
ProblemSpec jacobi_witness() {
    std::vector<ProblemSpec::Block> blocks;
    for (int i = 0; i < 2; ++i)
        blocks.push_back({FunctionOracle::quadratic(
                              MatrixXd::Constant(1, 1, 0.01), VectorXd::Zero(1)),
                          MatrixXd::Ones(1, 1)});
    return ProblemSpec(std::move(blocks), 1.0);
}

}  // namespace

TEST_CASE("jacobi_step: one block equals ALM, decoupled equals ALM") {
    ProblemSpec p1 = random_instance(4, 2, 1.0);
    SolverState s = make_state(p1);
    s.x = randn(4);
    s.lambda = randn(2);
    SolverState a = alm_step(p1, s);
    SolverState j = jacobi_step(p1, s);
    CHECK((a.x - j.x).norm() <= 1e-12);
    CHECK((a.lambda - j.lambda).norm() <= 1e-12);

    // block-diagonal A^T A: Jacobi = ALM
    std::vector<ProblemSpec::Block> blocks;
    MatrixXd A1(2, 1), A2(2, 1);
    A1 << 1, 0;
    A2 << 0, 1;
    blocks.push_back({spd_quadratic(1), A1});
    blocks.push_back({spd_quadratic(1), A2});
    ProblemSpec pd(std::move(blocks), 1.0);
    SolverState sd = make_state(pd);
    sd.x = randn(2);
    sd.lambda = randn(2);
    SolverState ad = alm_step(pd, sd);
    SolverState jd = jacobi_step(pd, sd);
    CHECK((ad.x - jd.x).norm() <= 1e-12);
}

TEST_CASE("jacobi divergence witness has spectral radius above one") {
    ProblemSpec p = jacobi_witness();
    double sr = jacobi_spectral_radius(p);
    CHECK(sr > 1.0);

    // independent oracle: build the affine iteration map column by column
    // and eigensolve it here
    const int dim = p.n() + p.m();
    MatrixXd M(dim, dim);
    SolverState base = make_state(p);
    SolverState f0 = jacobi_step(p, base);
    VectorXd c0(dim);
    c0 << f0.x, f0.lambda;
    for (int j = 0; j < dim; ++j) {
        SolverState probe = make_state(p);
        VectorXd e = VectorXd::Zero(dim);
        e(j) = 1.0;
        probe.x = e.head(p.n());
        probe.lambda = e.tail(p.m());
        SolverState fj = jacobi_step(p, probe);
        VectorXd cj(dim);
        cj << fj.x, fj.lambda;
        M.col(j) = cj - c0;
    }
    Eigen::EigenSolver<MatrixXd> es(M);
    double sr_ref = es.eigenvalues().cwiseAbs().maxCoeff();
    CHECK(sr == Catch::Approx(sr_ref).margin(1e-10));
    CHECK(sr_ref > 1.0);

    // iterates actually blow up (flagged divergence, not an error)
    SolverState s = make_state(p);
    s.x = VectorXd::Ones(2);
    bool diverged = false;
    for (int k = 0; k < 200; ++k) {
        s = jacobi_step(p, s);
        if (s.x.norm() > 1e8) {
            diverged = true;
            break;
        }
    }
    CHECK(diverged);
}

TEST_CASE("pdmm_step degenerate and limit behavior") {
    // N = 1, K = 1, Theta = I, Theta' = 0, eta = 0 reduces to ALM
    ProblemSpec p = random_instance(3, 2, 1.0);
    PdmmConfig c = PdmmConfig::uniform(p, 1, 1.0);
    std::mt19937_64 r(5);
    SolverState s = make_state(p);
    s.x = randn(3);
    s.lambda = randn(2);
    SolverState a = alm_step(p, s);
    SolverState d = pdmm_step(p, s, c, r);
    CHECK((a.x - d.x).norm() <= 1e-12);
    CHECK((a.lambda - d.lambda).norm() <= 1e-12);
    CHECK((d.lambda_hat.value() - d.lambda).norm() == 0.0);  // nu = 0

    // enormous Bregman weight freezes the block
    PdmmConfig cfrozen = PdmmConfig::uniform(p, 1, 1.0, 0.0, 1e12);
    SolverState f = pdmm_step(p, s, cfrozen, r);
    CHECK((f.x - s.x).norm() <= 1e-6);

    CHECK_THROWS_AS(PdmmConfig::uniform(p, 5, 1.0).validate(p),
                    std::invalid_argument);
}

TEST_CASE("pdmm determinism and convergence on the witness instance") {
    ProblemSpec p = jacobi_witness();
    PdmmConfig c = PdmmConfig::uniform(p, 2, 0.5, 0.0, 1.0);
    std::mt19937_64 r1(99), r2(99);
    SolverState a = make_state(p), b = make_state(p);
    a.x = b.x = VectorXd::Ones(2);
    for (int k = 0; k < 2000; ++k) {
        a = pdmm_step(p, a, c, r1);
        b = pdmm_step(p, b, c, r2);
    }
    CHECK((a.x - b.x).norm() == 0.0);
    CHECK(kkt_residual(p, a.x, a.lambda) <= 1e-6);
}

TEST_CASE("inexact ALM tracks exact ALM") {
    ProblemSpec p = random_instance(4, 2, 1.0);

    InexactConfig tight;
    tight.eps_in = 1e-12;
    tight.max_inner = 200000;
    tight.method = InexactConfig::Method::Nesterov;
    SolverState se = make_state(p), si = make_state(p);
    for (int k = 0; k < 20; ++k) {
        se = alm_step(p, se);
        InexactStepResult r = inexact_alm_step(p, si, tight);
        REQUIRE(r.tolerance_met);
        si = r.state;
        CHECK((se.x - si.x).norm() <= 1e-8);
        CHECK((se.lambda - si.lambda).norm() <= 1e-8);
    }

    // loose but summable inner tolerances still converge outer-wise
    ReferenceSolution ref = reference_solve(p);
    InexactConfig loose;
    loose.eps_in = 1.0;
    loose.schedule = InexactConfig::Schedule::Polynomial;
    loose.poly_c = 1.0;
    loose.poly_p = 2.0;
    loose.max_inner = 5000;
    SolverState sl = make_state(p);
    for (int k = 0; k < 200; ++k) sl = inexact_alm_step(p, sl, loose).state;
    CHECK((sl.x - ref.x).norm() <= 1e-4);

    // polynomial schedule is nonincreasing
    InexactConfig poly;
    poly.schedule = InexactConfig::Schedule::Polynomial;
    poly.poly_c = 1.0;
    poly.poly_p = 2.0;
    for (long k = 0; k < 20; ++k)
        CHECK(poly.tolerance_at(k + 1) <= poly.tolerance_at(k));
}

TEST_CASE("KKT residual drops below 1e-6 for the exact steppers") {
    for (int trial = 0; trial < 3; ++trial) {
        ProblemSpec p = random_instance(4, 2, 1.0);
        ReferenceSolution ref = reference_solve(p);

        SolverState s = make_state(p);
        for (int k = 0; k < 200; ++k) s = alm_step(p, s);
        CHECK(kkt_residual(p, s.x, s.lambda) <= 1e-6);

        SolverState h = make_state(p);
        double alpha = ahu_default_alpha(p);
        for (int k = 0; k < 200000 &&
                        kkt_residual(p, h.x, h.lambda) > 1e-7; ++k)
            h = ahu_step(p, h, alpha);
        CHECK(kkt_residual(p, h.x, h.lambda) <= 1e-6);
        CHECK((s.x - ref.x).norm() <= 1e-6);
    }
}
