#pragma once

#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "pdopt/common.hpp"
#include "pdopt/consensus.hpp"
#include "pdopt/dynamics.hpp"
#include "pdopt/energysim.hpp"
#include "pdopt/fedsim.hpp"
#include "pdopt/graph.hpp"
#include "pdopt/oracle.hpp"
#include "pdopt/reference.hpp"
#include "pdopt/saddle.hpp"
#include "pdopt/trace.hpp"

namespace pdopt {

struct CheckResult {
    std::string module;
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace detail {

inline FunctionOracle random_spd_quadratic(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> g;
    MatrixXd M(n, n);
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) M(r, c) = g(rng);
    MatrixXd Q = M.transpose() * M + 0.5 * MatrixXd::Identity(n, n);
    VectorXd q(n);
    for (int i = 0; i < n; ++i) q(i) = g(rng);
    return FunctionOracle::quadratic(Q, q);
}

inline void add(std::vector<CheckResult>& out, const std::string& module,
                const std::string& name, const std::function<double()>& residual,
                double tol) {
    CheckResult r;
    r.module = module;
    r.name = name;
    try {
        double v = residual();
        r.pass = v <= tol;
        r.detail = "residual " + std::to_string(v) + " (tol " +
                   std::to_string(tol) + ")";
    } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("exception: ") + e.what();
    }
    out.push_back(r);
}

}  // namespace detail

/// Fast invariant suites, one group per module. `filter` restricts to a
/// single module; empty runs everything.
inline std::vector<CheckResult> run_checks(const std::string& filter = "") {
    std::vector<CheckResult> out;
    auto wants = [&](const std::string& m) { return filter.empty() || filter == m; };
    std::mt19937_64 rng(20240817);

    if (wants("graph")) {
        for (int n : {3, 5, 9}) {
            Topology t = ring_topology(n);
            WeightMatrix wm = metropolis_weights(t);
            detail::add(out, "graph", "laplacian annihilates constants (ring n=" +
                        std::to_string(n) + ")",
                        [&] { return (wm.laplacian() * VectorXd::Ones(n)).norm(); },
                        1e-12);
            detail::add(out, "graph", "mixing matrix doubly stochastic (ring n=" +
                        std::to_string(n) + ")",
                        [&] {
                            return (wm.W.rowwise().sum() - VectorXd::Ones(n)).norm() +
                                   (wm.W.colwise().sum().transpose() -
                                    VectorXd::Ones(n)).norm();
                        },
                        1e-12);
            detail::add(out, "graph", "laplacian positive semidefinite (ring n=" +
                        std::to_string(n) + ")",
                        [&] {
                            MatrixXd L = wm.laplacian();
                            std::normal_distribution<double> g;
                            double worst = 0.0;
                            for (int r = 0; r < 100; ++r) {
                                VectorXd x(n);
                                for (int i = 0; i < n; ++i) x(i) = g(rng);
                                worst = std::min(worst, x.dot(L * x));
                            }
                            return -worst;
                        },
                        1e-12);
        }
    }

    if (wants("oracle")) {
        detail::add(out, "oracle", "quadratic gradient matches finite differences",
                    [&] {
                        FunctionOracle o = detail::random_spd_quadratic(6, rng);
                        VectorXd x = VectorXd::Random(6);
                        return (o.grad(x) - finite_difference_grad(o, x)).norm();
                    },
                    1e-5);
        detail::add(out, "oracle", "prox optimality condition",
                    [&] {
                        FunctionOracle o = detail::random_spd_quadratic(4, rng);
                        VectorXd v = VectorXd::Random(4);
                        VectorXd p = o.prox(v, 0.7);
                        return (0.7 * o.grad(p) + p - v).norm();
                    },
                    1e-10);
    }

    if (wants("saddle")) {
        detail::add(out, "saddle", "alm dual equals dual proximal point",
                    [&] {
                        std::vector<ProblemSpec::Block> blocks;
                        blocks.push_back({detail::random_spd_quadratic(5, rng),
                                          MatrixXd::Random(2, 5)});
                        ProblemSpec p(std::move(blocks), 1.3);
                        SolverState s = make_state(p);
                        double worst = 0.0;
                        VectorXd lam = s.lambda;
                        for (int k = 0; k < 20; ++k) {
                            s = alm_step(p, s);
                            lam = prox_point_dual_step(p, lam);
                            worst = std::max(worst, (s.lambda - lam).norm());
                        }
                        return worst;
                    },
                    1e-9);
        detail::add(out, "saddle", "pdmm deterministic under fixed seed",
                    [&] {
                        std::vector<ProblemSpec::Block> blocks;
                        for (int i = 0; i < 4; ++i)
                            blocks.push_back({detail::random_spd_quadratic(3, rng),
                                              MatrixXd::Random(2, 3)});
                        ProblemSpec p(std::move(blocks), 1.0);
                        PdmmConfig c = PdmmConfig::uniform(p, 2, 0.5);
                        std::mt19937_64 r1(7), r2(7);
                        SolverState a = make_state(p), b = make_state(p);
                        double worst = 0.0;
                        for (int k = 0; k < 25; ++k) {
                            a = pdmm_step(p, a, c, r1);
                            b = pdmm_step(p, b, c, r2);
                            worst = std::max(worst, (a.x - b.x).norm() +
                                                        (a.lambda - b.lambda).norm());
                        }
                        return worst;
                    },
                    0.0);
    }

    if (wants("consensus")) {
        detail::add(out, "consensus", "extra native/primal-dual identity",
                    [&] {
                        std::vector<FunctionOracle> fs;
                        for (int i = 0; i < 6; ++i)
                            fs.push_back(detail::random_spd_quadratic(2, rng));
                        ConsensusProblem cp = build_consensus_problem(
                            fs, ring_topology(6), 1.0);
                        make_lazy_mixing(cp);
                        double a0 = extra_safe_alpha(cp);
                        cp.alpha = a0;
                        cp.rho = 1.0 / a0;
                        MatrixXd x0 = MatrixXd::Random(6, 2);
                        ConsensusState a = make_consensus_state(cp, x0);
                        ConsensusState b = a;
                        double worst = 0.0;
                        for (int k = 0; k < 50; ++k) {
                            a = extra_step_native(cp, a);
                            b = extra_step_pd(cp, b);
                            worst = std::max(worst, (a.x - b.x).norm());
                        }
                        return worst;
                    },
                    1e-10);
        detail::add(out, "consensus", "gradient tracking mean preservation",
                    [&] {
                        std::vector<FunctionOracle> fs;
                        for (int i = 0; i < 5; ++i)
                            fs.push_back(detail::random_spd_quadratic(3, rng));
                        ConsensusProblem cp = build_consensus_problem(
                            fs, star_topology(5), 1.0);
                        cp.alpha = tracking_safe_alpha(cp);
                        ConsensusState st =
                            make_consensus_state(cp, MatrixXd::Random(5, 3));
                        double worst = 0.0;
                        for (int k = 0; k < 60; ++k) {
                            st = gradient_tracking_step(cp, st);
                            worst = std::max(
                                worst, (st.s.colwise().mean() -
                                        cp.grad(st.x).colwise().mean()).norm());
                        }
                        return worst;
                    },
                    1e-12);
    }

    if (wants("dynamics")) {
        detail::add(out, "dynamics", "lyapunov function nonincreasing",
                    [&] {
                        std::vector<FunctionOracle> fs;
                        for (int i = 0; i < 4; ++i)
                            fs.push_back(detail::random_spd_quadratic(2, rng));
                        ConsensusProblem cp =
                            build_consensus_problem(fs, path_topology(4), 1.0);
                        ConsensusReference ref = consensus_reference(cp);
                        FlowState init;
                        init.x = MatrixXd::Random(4, 2);
                        init.eta = MatrixXd::Zero(4, 2);
                        init.h = flow_h_max(cp);
                        auto [fs2, rep] = euler_flow(cp, init, 2000, ref.x, ref.eta);
                        return rep.max_increment;
                    },
                    1e-10);
    }

    if (wants("fedsim")) {
        detail::add(out, "fedsim", "full participation drives feasibility to zero",
                    [&] {
                        std::vector<FunctionOracle> F;
                        for (int i = 0; i < 6; ++i)
                            F.push_back(detail::random_spd_quadratic(2, rng));
                        FederatedInstance inst = make_federated_instance(
                            F, VectorXd::Constant(6, 1.0 / 6.0));
                        FedConfig cfg;
                        cfg.rho = 1.0;
                        // Bregman weights must be large enough for the
                        // parallel (convex) variant to contract
                        cfg.eta = VectorXd::Constant(6, cfg.rho);
                        cfg.M = 7;
                        cfg.T = 300;
                        FederatedReference ref = federated_reference(inst);
                        auto trace = run_federated(inst, cfg, ref.objective);
                        return trace.back().feas_residual;
                    },
                    1e-8);
    }

    if (wants("energysim")) {
        detail::add(out, "energysim", "peer projection lands in the feasible set",
                    [&] {
                        Topology t = ring_topology(5);
                        std::vector<FunctionOracle> costs;
                        std::map<std::pair<int, int>, FunctionOracle> gammas;
                        for (int i = 0; i < 5; ++i)
                            costs.push_back(FunctionOracle::quadratic(
                                MatrixXd::Constant(1, 1, 1.0 + i),
                                VectorXd::Zero(1)));
                        for (auto [a, b] : t.edges) {
                            gammas.insert({{a, b}, FunctionOracle::quadratic(
                                MatrixXd::Constant(1, 1, 0.5), VectorXd::Zero(1))});
                            gammas.insert({{b, a}, FunctionOracle::quadratic(
                                MatrixXd::Constant(1, 1, 0.5), VectorXd::Zero(1))});
                        }
                        EnergyNetwork net = make_energy_network(
                            t, VectorXd::Constant(5, 2.0), costs, gammas);
                        double worst = 0.0;
                        std::normal_distribution<double> g;
                        for (int r = 0; r < 20; ++r) {
                            VectorXd pt(3);
                            for (int i = 0; i < 3; ++i) pt(i) = 3.0 * g(rng);
                            VectorXd v = project_feasible_i(net, 0, pt);
                            double gen = net.consumption(0) + v(0) - v(1) - v(2);
                            worst = std::max(worst,
                                             std::max(-v.minCoeff(), -gen));
                        }
                        return worst;
                    },
                    1e-10);
    }

    if (wants("harness")) {
        detail::add(out, "harness", "trace rejects mismatched rows",
                    [&] {
                        Trace t({"k", "value"});
                        t.add_row({0.0, 1.0});
                        try {
                            t.add_row({0.0});
                            return 1.0;  // should have thrown
                        } catch (const std::invalid_argument&) {
                            return 0.0;
                        }
                    },
                    0.0);
    }

    return out;
}

}  // namespace pdopt
