// Temporary diagnostic probe (not part of the build).
#include <cstdio>
#include <random>

#include "pdopt/runner.hpp"

using namespace pdopt;

std::mt19937_64 rng(303);

MatrixXd randn_mat(int r, int c) {
    std::normal_distribution<double> g;
    MatrixXd m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = g(rng);
    return m;
}

FunctionOracle spd_quadratic(int n) {
    MatrixXd M = randn_mat(n, n);
    return FunctionOracle::quadratic(
        M.transpose() * M + 0.5 * MatrixXd::Identity(n, n),
        randn_mat(n, 1).col(0));
}

std::vector<FunctionOracle> heterogeneous(int N, int d) {
    std::vector<FunctionOracle> fs;
    for (int i = 0; i < N; ++i) fs.push_back(spd_quadratic(d));
    return fs;
}

template <class F>
void section(const char* name, F&& f) {
    try {
        f();
    } catch (const std::exception& e) {
        std::printf("SECTION %s threw: %s\n", name, e.what());
    }
}

int main() {
    std::setvbuf(stdout, nullptr, _IONBF, 0);

    // --- EXTRA with lazy mixing + safe alpha: equivalence and stability
    section("extra-lazy", [&] {
        for (int N = 3; N <= 12; ++N) {
            rng.seed(1000 + N);
            ConsensusProblem cp = build_consensus_problem(
                heterogeneous(N, 2), ring_topology(N), 1.0);
            make_lazy_mixing(cp);
            double a0 = extra_safe_alpha(cp);
            cp.alpha = a0;
            cp.rho = 1.0 / a0;
            MatrixXd x0 = randn_mat(N, 2);
            ConsensusState a = make_consensus_state(cp, x0);
            ConsensusState b = a;
            double worst = 0.0;
            for (int k = 0; k < 100; ++k) {
                a = extra_step_native(cp, a);
                b = extra_step_pd(cp, b);
                worst = std::max(worst, (a.x - b.x).cwiseAbs().maxCoeff());
            }
            // long run for convergence
            ConsensusReference ref = consensus_reference(cp);
            ConsensusState st = make_consensus_state(cp, x0);
            for (int k = 0; k < 20000; ++k) st = extra_step_native(cp, st);
            ConsensusMetrics m = consensus_metrics(cp, st.x, ref.objective);
            std::printf("extra N=%2d alpha %.4f equiv %.3e gap %.3e kkt %.3e\n",
                        N, a0, worst, m.objective_gap, m.kkt_residual);
        }
    });

    // --- acceptance criterion 6 style: ring(5) rho=10 base, lazy EXTRA copy
    section("extra-acc6", [&] {
        rng.seed(606);
        ConsensusProblem cp = build_consensus_problem(
            heterogeneous(5, 2), ring_topology(5), 10.0);
        ConsensusReference ref = consensus_reference(cp);
        MatrixXd x0 = randn_mat(5, 2);
        ConsensusProblem ce = cp;
        make_lazy_mixing(ce);
        ce.alpha = extra_safe_alpha(ce);
        ce.rho = 1.0 / ce.alpha;
        ConsensusState st = make_consensus_state(ce, x0);
        for (int k = 0; k < 20000; ++k) st = extra_step_native(ce, st);
        double ge = consensus_metrics(ce, st.x, ref.objective).objective_gap;
        ConsensusProblem ct = cp;
        ct.alpha = tracking_safe_alpha(ct);
        st = make_consensus_state(ct, x0);
        for (int k = 0; k < 20000; ++k) st = gradient_tracking_step(ct, st);
        double gt = consensus_metrics(ct, st.x, ref.objective).objective_gap;
        std::printf("acc6 extra gap %.3e track gap %.3e\n", ge, gt);
    });

    // --- linear-fit instance with lazy mixing, collection from k>=50
    section("linfit", [&] {
        rng.seed(303);
        std::vector<FunctionOracle> f1 = heterogeneous(5, 1);
        ConsensusProblem r1 = build_consensus_problem(f1, ring_topology(5), 1.0);
        make_lazy_mixing(r1);
        double a1 = extra_safe_alpha(r1);
        r1.alpha = a1;
        r1.rho = 1.0 / a1;
        ConsensusReference rf1 = consensus_reference(r1);
        ConsensusState s1 = make_consensus_state(r1, MatrixXd::Ones(5, 1));
        std::vector<double> ks, lr;
        for (int k = 0; k < 4000; ++k) {
            s1 = extra_step_native(r1, s1);
            double r = consensus_metrics(r1, s1.x, rf1.objective).kkt_residual;
            if (k >= 50 && r > 1e-12) {
                ks.push_back(k);
                lr.push_back(std::log(r));
            }
        }
        // least-squares slope and R^2
        double n = ks.size(), sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
        for (size_t i = 0; i < ks.size(); ++i) {
            sx += ks[i]; sy += lr[i]; sxx += ks[i] * ks[i];
            sxy += ks[i] * lr[i]; syy += lr[i] * lr[i];
        }
        double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        double r2 = (n * sxy - sx * sy) * (n * sxy - sx * sy) /
                    ((n * sxx - sx * sx) * (n * syy - sy * sy));
        std::printf("linfit alpha %.4f pts %zu slope %.4e R2 %.6f\n", a1,
                    ks.size(), slope, r2);
    });

    // --- federated: unit-test config (N=10 M=4 T=400) and acceptance
    //     config (N=20 M=5 T=1000), mean gap + Spearman over 10 seeds
    auto spearman_of = [](const std::vector<double>& v) {
        int T = (int)v.size();
        std::vector<int> idx(T);
        for (int i = 0; i < T; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(),
                  [&](int a, int b) { return v[a] < v[b]; });
        std::vector<double> rank(T);
        for (int r = 0; r < T; ++r) rank[idx[r]] = r;
        double num = 0.0;
        for (int i = 0; i < T; ++i) {
            double d = rank[i] - i;
            num += d * d;
        }
        return 1.0 - 6.0 * num / (double(T) * (double(T) * T - 1.0));
    };
    section("fed-unit", [&] {
        rng.seed(505);
        std::vector<FunctionOracle> F = heterogeneous(10, 2);
        FederatedInstance inst =
            make_federated_instance(F, VectorXd::Constant(10, 0.1));
        FederatedReference ref = federated_reference(inst);
        const int T = 400, S = 10;
        std::vector<double> mean_gap(T, 0.0);
        for (int s = 0; s < S; ++s) {
            FedConfig cfg;
            cfg.rho = 1.0;
            cfg.eta = VectorXd::Constant(10, cfg.rho);
            cfg.eta0 = cfg.rho * 10;
            cfg.M = 4;
            cfg.T = T;
            cfg.seed = 100 + s;
            auto trace = run_federated(inst, cfg, ref.objective);
            for (int k = 0; k < T; ++k) mean_gap[k] += trace[k].gap / S;
        }
        std::printf("fed-unit final mean gap %.3e spearman %.3f\n",
                    mean_gap.back(), spearman_of(mean_gap));
    });
    section("fed-acc", [&] {
        rng.seed(707);
        std::vector<FunctionOracle> F = heterogeneous(20, 2);
        FederatedInstance inst =
            make_federated_instance(F, VectorXd::Constant(20, 0.05));
        FederatedReference ref = federated_reference(inst);
        const int T = 1000, S = 10;
        std::vector<double> mean_gap(T, 0.0);
        for (int s = 0; s < S; ++s) {
            FedConfig cfg;
            cfg.rho = 1.0;
            cfg.eta = VectorXd::Constant(20, cfg.rho);
            cfg.eta0 = cfg.rho * 20;
            cfg.M = 5;
            cfg.T = T;
            cfg.seed = 500 + s;
            auto trace = run_federated(inst, cfg, ref.objective);
            for (int k = 0; k < T; ++k) mean_gap[k] += trace[k].gap / S;
        }
        std::printf("fed-acc final mean gap %.3e spearman %.3f\n",
                    mean_gap.back(), spearman_of(mean_gap));
    });

    // --- dynamics: max_increment behavior at h = h_max
    section("dyn", [&] {
        // harness config: path(2) with the two scalar quadratics, seed 5
        {
            MatrixXd Q1(1, 1), Q2(1, 1);
            Q1 << 1.0;
            Q2 << 2.0;
            VectorXd q1(1), q2(1);
            q1 << -1.0;
            q2 << 1.0;
            std::vector<FunctionOracle> fs = {FunctionOracle::quadratic(Q1, q1),
                                              FunctionOracle::quadratic(Q2, q2)};
            ConsensusProblem cp =
                build_consensus_problem(fs, path_topology(2), 1.0);
            ConsensusReference ref = consensus_reference(cp);
            std::mt19937_64 r(5);
            std::normal_distribution<double> g;
            FlowState init;
            init.x = MatrixXd::Zero(2, 1);
            for (int i = 0; i < 2; ++i) init.x(i, 0) = g(r);
            init.eta = MatrixXd::Zero(2, 1);
            for (double f : {1.0, 0.5, 0.25}) {
                init.h = f * flow_h_max(cp);
                auto [end, rep] = euler_flow(cp, init, 30, ref.x, ref.eta);
                std::printf("dyn-harness h=%.2f*hmax max_inc %.3e div %d\n", f,
                            rep.max_increment, (int)rep.diverged);
            }
        }
        // test_dynamics style ring(5,2), 5000 steps at h_max
        for (int seed = 0; seed < 5; ++seed) {
            rng.seed(4000 + seed);
            ConsensusProblem cp = build_consensus_problem(
                heterogeneous(5, 2), ring_topology(5), 1.0);
            ConsensusReference ref = consensus_reference(cp);
            FlowState init;
            init.x = randn_mat(5, 2);
            init.eta = MatrixXd::Zero(5, 2);
            init.h = flow_h_max(cp);
            auto [end, rep] = euler_flow(cp, init, 5000, ref.x, ref.eta);
            double vdmax = -1e300;
            for (double vd : rep.Vdot) vdmax = std::max(vdmax, vd);
            std::printf(
                "dyn-ring5 seed %d max_inc %.3e vdot_max %.3e div %d\n", seed,
                rep.max_increment, vdmax, (int)rep.diverged);
        }
        // terminal residuals ring(4,1) after 10000 steps
        {
            rng.seed(4100);
            ConsensusProblem cp = build_consensus_problem(
                heterogeneous(4, 1), ring_topology(4), 1.0);
            ConsensusReference ref = consensus_reference(cp);
            FlowState init;
            init.x = randn_mat(4, 1);
            init.eta = MatrixXd::Zero(4, 1);
            init.h = flow_h_max(cp);
            auto [end, rep] = euler_flow(cp, init, 10000, ref.x, ref.eta);
            std::printf("dyn-term cons %.3e stat %.3e\n",
                        rep.terminal_consensus_residual,
                        rep.terminal_stationarity_residual);
        }
        // integrator order check at h_max/8
        {
            rng.seed(4200);
            ConsensusProblem cp = build_consensus_problem(
                heterogeneous(4, 1), ring_topology(4), 1.0);
            ConsensusReference ref = consensus_reference(cp);
            MatrixXd x0 = randn_mat(4, 1);
            double T = 2.0;
            auto v_at = [&](double h) {
                FlowState init;
                init.x = x0;
                init.eta = MatrixXd::Zero(4, 1);
                init.h = h;
                auto [end, rep] = euler_flow(
                    cp, init, (long)std::lround(T / h), ref.x, ref.eta);
                return lyapunov_value(end.x, end.eta, ref.x, ref.eta);
            };
            double h = flow_h_max(cp) / 8.0;
            double vh = v_at(h), vh2 = v_at(h / 2), vh4 = v_at(h / 4);
            double dev1 = std::abs(vh - vh4), dev2 = std::abs(vh2 - vh4);
            std::printf("dyn-order dev1 %.3e dev2 %.3e ratio %.3f\n", dev1,
                        dev2, dev2 / dev1);
        }
    });

    // --- saddle: loose polynomial inner tolerances, 200 outers
    section("saddle-loose", [&] {
        for (int seed = 0; seed < 3; ++seed) {
            rng.seed(5000 + seed);
            std::vector<ProblemSpec::Block> blocks;
            blocks.push_back({spd_quadratic(4), randn_mat(2, 4)});
            ProblemSpec p(std::move(blocks), 1.0);
            ReferenceSolution ref = reference_solve(p);
            InexactConfig loose;
            loose.eps_in = 1.0;
            loose.schedule = InexactConfig::Schedule::Polynomial;
            loose.poly_c = 1.0;
            loose.poly_p = 2.0;
            loose.max_inner = 5000;
            SolverState sl = make_state(p);
            for (int k = 0; k < 200; ++k)
                sl = inexact_alm_step(p, sl, loose).state;
            std::printf("saddle-loose seed %d err %.3e\n", seed,
                        (sl.x - ref.x).norm());
        }
    });

    // --- module checks
    section("checks", [&] {
        int fails = 0;
        for (const auto& c : run_checks("")) {
            if (!c.pass) {
                ++fails;
                std::printf("CHECK FAIL %s/%s: %s\n", c.module.c_str(),
                            c.name.c_str(), c.detail.c_str());
            }
        }
        std::printf("checks fails: %d\n", fails);
    });
    std::printf("probe done\n");
    return 0;
}
