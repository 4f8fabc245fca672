#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "pdopt/fedsim.hpp"
#include "pdopt/reference.hpp"
#include "pdopt/saddle.hpp"

using namespace pdopt;

namespace {

std::mt19937_64 rng(505);

VectorXd randn(int n) {
    std::normal_distribution<double> g;
    VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = g(rng);
    return v;
}

FunctionOracle spd_quadratic(int n) {
    MatrixXd M(n, n);
    for (int r = 0; r < n; ++r) M.row(r) = randn(n).transpose();
    return FunctionOracle::quadratic(
        M.transpose() * M + 0.5 * MatrixXd::Identity(n, n), randn(n));
}

FederatedInstance heterogeneous_instance(int N, int d) {
    std::vector<FunctionOracle> F;
    for (int i = 0; i < N; ++i) F.push_back(spd_quadratic(d));
    return make_federated_instance(F, VectorXd::Constant(N, 1.0 / N));
}

FedConfig base_config(int N) {
    FedConfig c;
    c.rho = 1.0;
    // parallel (convex) variant needs sufficiently large Bregman weights
    c.eta = VectorXd::Constant(N, c.rho);
    c.M = N + 1;
    c.T = 100;
    return c;
}

}  // namespace

TEST_CASE("block sampling behavior") {
    std::mt19937_64 r(1);
    // full participation
    std::vector<int> all = sample_blocks(5, 6, r);
    CHECK(all == std::vector<int>({0, 1, 2, 3, 4, 5}));

    // singleton inclusion frequency about 1/(N+1)
    const int N = 9, draws = 100000;
    std::vector<int> counts(N + 1, 0);
    std::mt19937_64 r2(7);
    for (int t = 0; t < draws; ++t) counts[sample_blocks(N, 1, r2)[0]]++;
    double p = 1.0 / (N + 1);
    double sigma = std::sqrt(draws * p * (1 - p));
    for (int b = 0; b <= N; ++b)
        CHECK(std::abs(counts[b] - draws * p) <= 3.0 * sigma);

    // fixed seed reproduces the sequence
    std::mt19937_64 ra(11), rb(11);
    for (int t = 0; t < 50; ++t)
        CHECK(sample_blocks(6, 3, ra) == sample_blocks(6, 3, rb));

    std::mt19937_64 rc(0);
    CHECK_THROWS_AS(sample_blocks(4, 6, rc), std::invalid_argument);
}

TEST_CASE("server update closed forms") {
    FederatedInstance inst = heterogeneous_instance(1, 1);
    FedConfig cfg = base_config(1);
    FedState st = make_fed_state(inst);
    st.x[0] = VectorXd::Constant(1, 3.0);
    CHECK(server_z_update(st, inst, cfg)(0) == Catch::Approx(3.0));

    // fixed point: all x_i = z, duals zero
    FederatedInstance inst4 = heterogeneous_instance(4, 2);
    FedConfig cfg4 = base_config(4);
    FedState st4 = make_fed_state(inst4);
    st4.z = randn(2);
    for (auto& x : st4.x) x = st4.z;
    CHECK((server_z_update(st4, inst4, cfg4) - st4.z).norm() <= 1e-14);

    // enormous server Bregman weight freezes z
    FedConfig frozen = cfg4;
    frozen.eta0 = 1e12;
    FedState stf = make_fed_state(inst4);
    stf.z = randn(2);
    for (auto& x : stf.x) x = randn(2);
    CHECK((server_z_update(stf, inst4, frozen) - stf.z).norm() <=
          1e-9 * stf.z.norm());
}

TEST_CASE("client local solve closed forms") {
    // F_i = (1/2)||x - a||^2, lambda = 0, eta_i = 0:
    // minimizes p (1/2)||x-a||^2 + (rho/2)||x-z||^2 -> (p a + rho z)/(p + rho)
    VectorXd a = randn(2);
    std::vector<FunctionOracle> F{
        FunctionOracle::quadratic(MatrixXd::Identity(2, 2), -a),
        spd_quadratic(2)};
    FederatedInstance inst =
        make_federated_instance(F, (VectorXd(2) << 0.3, 0.7).finished());
    FedConfig cfg = base_config(2);
    cfg.rho = 1.4;
    cfg.eta = VectorXd::Zero(2);  // isolate the prox term
    FedState st = make_fed_state(inst);
    st.z = randn(2);
    VectorXd x = client_local_solve(0, st.z, st, inst, cfg);
    VectorXd expect = (0.3 * a + 1.4 * st.z) / (0.3 + 1.4);
    CHECK((x - expect).norm() <= 1e-12);

    // rho -> infinity clamps to z
    FedConfig big = cfg;
    big.rho = 1e12;
    CHECK((client_local_solve(1, st.z, st, inst, big) - st.z).norm() <= 1e-9);

    // eta_i -> infinity freezes at x_i
    FedConfig breg = cfg;
    breg.eta = VectorXd::Constant(2, 1e12);
    st.x[1] = randn(2);
    CHECK((client_local_solve(1, st.z, st, inst, breg) - st.x[1]).norm() <=
          1e-9);
}

TEST_CASE("dual updates") {
    FederatedInstance inst = heterogeneous_instance(4, 2);
    FedConfig cfg = base_config(4);
    FedState st = make_fed_state(inst);
    st.z = randn(2);
    for (auto& x : st.x) x = st.z;
    FedState before = st;
    dual_update_all(st, inst, cfg, {0, 1, 2, 3});
    for (int i = 0; i < 4; ++i)
        CHECK((st.lambda[i] - before.lambda[i]).norm() == 0.0);

    // telescoping: sum of duals equals rho * accumulated sum of (x_i - z)
    FedState acc = make_fed_state(inst);
    VectorXd expected_sum = VectorXd::Zero(2);
    for (int k = 0; k < 5; ++k) {
        for (auto& x : acc.x) x = randn(2);
        acc.z = randn(2);
        for (int i = 0; i < 4; ++i)
            expected_sum += cfg.rho * (acc.x[i] - acc.z);
        dual_update_all(acc, inst, cfg, {0, 1, 2, 3});
    }
    VectorXd sum = VectorXd::Zero(2);
    for (const auto& l : acc.lambda) sum += l;
    CHECK((sum - expected_sum).norm() <= 1e-10);

    // nonconvex mode leaves unsampled duals bitwise intact
    FedConfig nc = cfg;
    nc.variant = FedConfig::Variant::Nonconvex;
    FedState stn = make_fed_state(inst);
    for (auto& x : stn.x) x = randn(2);
    stn.z = randn(2);
    VectorXd lam3 = stn.lambda[3];
    dual_update_all(stn, inst, nc, {0, 1});
    CHECK((stn.lambda[3] - lam3).norm() == 0.0);
    CHECK((stn.lambda[0] - nc.rho * (stn.x[0] - stn.z)).norm() <= 1e-14);
}

TEST_CASE("full participation with exact solves converges") {
    FederatedInstance inst = heterogeneous_instance(8, 2);
    FederatedReference ref = federated_reference(inst);
    FedConfig cfg = base_config(8);
    cfg.T = 500;
    auto trace = run_federated(inst, cfg, ref.objective);
    CHECK(trace.back().gap <= 1e-6);
    CHECK(trace.back().feas_residual <= 1e-8);
}

TEST_CASE("partial participation: mean gap decreases over seeds") {
    FederatedInstance inst = heterogeneous_instance(10, 2);
    FederatedReference ref = federated_reference(inst);
    const int T = 400, S = 10;
    std::vector<double> mean_gap(T, 0.0);
    for (int s = 0; s < S; ++s) {
        FedConfig cfg = base_config(10);
        cfg.M = 4;
        cfg.T = T;
        // sampled-block updates need a server Bregman weight as well
        cfg.eta0 = cfg.rho * 10;
        cfg.seed = 100 + s;
        auto trace = run_federated(inst, cfg, ref.objective);
        for (int k = 0; k < T; ++k) mean_gap[k] += trace[k].gap / S;
    }
    // Spearman rank correlation between round index and mean gap
    std::vector<int> order(T);
    for (int i = 0; i < T; ++i) order[i] = i;
    std::vector<double> rank(T);
    std::vector<int> idx = order;
    std::sort(idx.begin(), idx.end(),
              [&](int a, int b) { return mean_gap[a] < mean_gap[b]; });
    for (int r = 0; r < T; ++r) rank[idx[r]] = r;
    double num = 0.0;
    for (int i = 0; i < T; ++i) {
        double d = rank[i] - i;
        num += d * d;
    }
    double spearman = 1.0 - 6.0 * num / (double(T) * (double(T) * T - 1.0));
    CHECK(spearman < -0.9);
    CHECK(mean_gap.back() <= 1e-3);
}

TEST_CASE("full-participation PDMM equals consensus ADMM") {
    // reformulation: block 1 is z with stacked identities, block 2 the
    // stacked devices with -I; constraint reads z - x_i = 0 for all i
    const int N = 5, d = 2;
    FederatedInstance inst = heterogeneous_instance(N, d);
    FedConfig cfg = base_config(N);
    cfg.variant = FedConfig::Variant::Nonconvex;  // devices see the fresh z
    FedState st = make_fed_state(inst);
    std::mt19937_64 r(3);

    MatrixXd A1(N * d, d);
    for (int i = 0; i < N; ++i)
        A1.middleRows(i * d, d) = MatrixXd::Identity(d, d);
    MatrixXd Qx = MatrixXd::Zero(N * d, N * d);
    VectorXd qx(N * d);
    for (int i = 0; i < N; ++i) {
        Qx.block(i * d, i * d, d, d) = inst.p(i) * inst.F[i].Q();
        qx.segment(i * d, d) = inst.p(i) * inst.F[i].linear_term();
    }
    std::vector<ProblemSpec::Block> blocks;
    blocks.push_back({FunctionOracle::linear(VectorXd::Zero(d)), A1});
    blocks.push_back({FunctionOracle::quadratic(Qx, qx),
                      -MatrixXd::Identity(N * d, N * d)});
    ProblemSpec p(std::move(blocks), cfg.rho);
    SolverState admm = make_state(p);

    FederatedReference ref = federated_reference(inst);
    for (int k = 0; k < 50; ++k) {
        federated_round(st, inst, cfg, r, ref.objective);
        admm = admm_step(p, admm);
        CHECK((st.z - admm.x.head(d)).norm() <= 1e-10);
        for (int i = 0; i < N; ++i) {
            CHECK((st.x[i] - admm.x.segment(d + i * d, d)).norm() <= 1e-10);
            // dual sign convention: lambda_fed = -lambda_admm
            CHECK((st.lambda[i] + admm.lambda.segment(i * d, d)).norm() <=
                  1e-10);
        }
    }
}

TEST_CASE("single device matches a centralized proximal iteration") {
    FederatedInstance inst = heterogeneous_instance(1, 2);
    FedConfig cfg = base_config(1);
    cfg.variant = FedConfig::Variant::Nonconvex;
    FedState st = make_fed_state(inst);
    std::mt19937_64 r(1);
    FederatedReference ref = federated_reference(inst);

    // replicate one round by hand: z+ = x + lambda/rho (N=1, eta0=0),
    // then the device prox-solve against z+
    VectorXd z1 = st.x[0] + st.lambda[0] / cfg.rho;
    VectorXd a = inst.p(0) * inst.F[0].linear_term() + st.lambda[0] -
                 cfg.rho * z1;
    MatrixXd H =
        inst.p(0) * inst.F[0].Q() + cfg.rho * MatrixXd::Identity(2, 2);
    VectorXd x1 = H.ldlt().solve(-a);
    federated_round(st, inst, cfg, r, ref.objective);
    CHECK((st.z - z1).norm() <= 1e-12);
    CHECK((st.x[0] - x1).norm() <= 1e-12);
}

TEST_CASE("FedProx baseline behavior") {
    // homogeneous devices: both methods find the shared optimum
    FunctionOracle f = spd_quadratic(2);
    std::vector<FunctionOracle> F(6, f);
    FederatedInstance inst =
        make_federated_instance(F, VectorXd::Constant(6, 1.0 / 6.0));
    FederatedReference ref = federated_reference(inst);
    FedConfig cfg = base_config(6);
    cfg.T = 400;
    auto pdmm_trace = run_federated(inst, cfg, ref.objective);
    auto prox_trace = run_fedprox_baseline(inst, cfg, ref.objective);
    CHECK(pdmm_trace.back().gap <= 1e-8);
    CHECK(prox_trace.back().gap <= 1e-8);

    // rho -> infinity freezes z at the initialization
    FedConfig big = base_config(6);
    big.rho = 1e14;
    big.T = 20;
    auto frozen = run_fedprox_baseline(inst, big, ref.objective);
    FederatedInstance& in = inst;
    double f0 = in.global_objective(VectorXd::Zero(2)) - ref.objective;
    CHECK(frozen.back().gap == Catch::Approx(f0).epsilon(1e-6));

    // heterogeneous comparison: both traces exist, column for column
    FederatedInstance het = heterogeneous_instance(6, 2);
    FederatedReference href = federated_reference(het);
    FedConfig part = base_config(6);
    part.M = 3;
    part.T = 50;
    auto ta = run_federated(het, part, href.objective);
    auto tb = run_fedprox_baseline(het, part, href.objective);
    REQUIRE(ta.size() == tb.size());
    for (size_t k = 0; k < ta.size(); ++k) {
        CHECK(ta[k].round == tb[k].round);
        CHECK(ta[k].participants == tb[k].participants);
    }
}

TEST_CASE("rounds are deterministic and committed in index order") {
    FederatedInstance inst = heterogeneous_instance(7, 2);
    FederatedReference ref = federated_reference(inst);
    FedConfig cfg = base_config(7);
    cfg.M = 3;
    cfg.T = 60;
    cfg.seed = 9;
    auto a = run_federated(inst, cfg, ref.objective);
    auto b = run_federated(inst, cfg, ref.objective);
    for (size_t k = 0; k < a.size(); ++k) {
        CHECK(a[k].gap == b[k].gap);
        CHECK(a[k].feas_residual == b[k].feas_residual);
        CHECK(a[k].participants == b[k].participants);
    }
}
