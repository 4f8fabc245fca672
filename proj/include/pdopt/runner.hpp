#pragma once

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pdopt/checks.hpp"
#include "pdopt/config.hpp"
#include "pdopt/consensus.hpp"
#include "pdopt/dynamics.hpp"
#include "pdopt/energysim.hpp"
#include "pdopt/fedsim.hpp"
#include "pdopt/reference.hpp"
#include "pdopt/saddle.hpp"
#include "pdopt/trace.hpp"

namespace pdopt {

struct ExperimentOutcome {
    int exit_code = 0;  // 0 ok, 1 error, 2 completed with flags
    std::vector<std::string> files;
    std::vector<std::string> flags;
    std::string error;
};

namespace detail {

inline nlohmann::json base_metadata(const json& cfg, std::uint64_t seed,
                                    const std::string& name,
                                    const std::string& kind) {
    nlohmann::json meta;
    meta["config_hash"] = config_hash(cfg);
    meta["seed"] = seed;
    meta["name"] = name;
    meta["kind"] = kind;
    meta["version"] = "0.1.0";
    return meta;
}

inline InexactConfig parse_inexact(const json& j) {
    InexactConfig c;
    if (j.is_null()) return c;
    std::string method = j.value("method", "gradient");
    require(method == "gradient" || method == "nesterov",
            "config: inexact method must be gradient or nesterov");
    c.method = (method == "nesterov") ? InexactConfig::Method::Nesterov
                                      : InexactConfig::Method::Gradient;
    std::string sched = j.value("schedule", "fixed");
    require(sched == "fixed" || sched == "polynomial",
            "config: inexact schedule must be fixed or polynomial");
    c.schedule = (sched == "polynomial") ? InexactConfig::Schedule::Polynomial
                                         : InexactConfig::Schedule::Fixed;
    c.eps_in = j.value("eps_in", c.eps_in);
    c.poly_c = j.value("c", c.poly_c);
    c.poly_p = j.value("p", c.poly_p);
    c.max_inner = j.value("max_inner", c.max_inner);
    return c;
}

inline ProblemSpec parse_problem(const json& j) {
    std::vector<ProblemSpec::Block> blocks;
    for (const auto& b : j.at("blocks")) {
        blocks.push_back({parse_oracle(b.at("oracle")),
                          detail::parse_matrix(b.at("A"))});
    }
    return ProblemSpec(std::move(blocks), j.at("rho").get<double>());
}

inline void run_saddle(const json& cfg, const std::string& out_dir,
                       std::uint64_t seed, const std::string& name,
                       ExperimentOutcome& out) {
    const json& j = cfg.at("saddle");
    ProblemSpec p = parse_problem(j);
    std::string method = j.at("method").get<std::string>();
    long iters = j.at("iters").get<long>();

    Trace t({"k", "objective", "constraint_norm", "stationarity", "dual_value",
             "inner_iters"});
    SolverState s = make_state(p);
    std::mt19937_64 rng(seed);
    PdmmConfig pdmm = PdmmConfig::uniform(p, p.num_blocks(),
                                          1.0 / p.num_blocks());
    if (j.contains("pdmm")) {
        const json& pj = j.at("pdmm");
        pdmm = PdmmConfig::uniform(p, pj.value("K", p.num_blocks()),
                                   pj.value("tau", 1.0 / p.num_blocks()),
                                   pj.value("nu", 0.0), pj.value("eta", 0.0));
    }
    InexactConfig inexact = parse_inexact(j.value("inexact", json()));
    double alpha = j.value("alpha", 0.0);
    if (alpha <= 0.0 && method == "ahu") alpha = ahu_default_alpha(p);

    auto record = [&](int inner) {
        VectorXd g = p.objective_grad(s.x) + p.assembled_A().transpose() * s.lambda;
        double dual = std::numeric_limits<double>::quiet_NaN();
        try {
            dual = dual_function_value(p, s.lambda);
        } catch (const CapabilityError&) {
        }
        t.add_row({static_cast<double>(s.k), p.objective(s.x),
                   p.constraint(s.x).norm(), g.norm(), dual,
                   static_cast<double>(inner)});
    };
    record(0);
    for (long k = 0; k < iters; ++k) {
        int inner = 0;
        if (method == "alm") {
            s = alm_step(p, s);
        } else if (method == "ahu") {
            s = ahu_step(p, s, alpha);
        } else if (method == "admm") {
            s = admm_step(p, s);
        } else if (method == "jacobi") {
            s = jacobi_step(p, s);
        } else if (method == "pdmm") {
            s = pdmm_step(p, s, pdmm, rng);
        } else if (method == "inexact_alm") {
            InexactStepResult r = inexact_alm_step(p, s, inexact);
            s = r.state;
            inner = r.inner_iters;
            if (!r.tolerance_met) out.flags.push_back("inner_tolerance_unmet");
        } else {
            throw std::invalid_argument("config: unknown saddle method '" +
                                        method + "'");
        }
        if (!s.x.allFinite() || s.x.norm() > 1e12) {
            out.flags.push_back("diverged");
            break;
        }
        record(inner);
    }
    t.metadata = base_metadata(cfg, seed, name, "saddle");
    t.metadata["method"] = method;
    t.metadata["flags"] = out.flags;
    std::string path = out_dir + "/" + name + ".csv";
    write_trace(t, path);
    out.files.push_back(path);
}

inline ConsensusProblem parse_consensus_problem(const json& j) {
    std::vector<FunctionOracle> oracles;
    for (const auto& o : j.at("oracles")) oracles.push_back(parse_oracle(o));
    return build_consensus_problem(std::move(oracles),
                                   parse_topology(j.at("topology")),
                                   j.at("rho").get<double>(),
                                   j.value("alpha", 0.0));
}

inline void run_consensus(const json& cfg, const std::string& out_dir,
                          std::uint64_t seed, const std::string& name,
                          ExperimentOutcome& out) {
    const json& j = cfg.at("consensus");
    ConsensusProblem cp = parse_consensus_problem(j);
    std::string method = j.at("method").get<std::string>();
    long iters = j.at("iters").get<long>();
    bool equivalence = j.value("mode", "plain") == "extra_equivalence";
    InexactConfig inexact = parse_inexact(j.value("inexact", json()));
    ConsensusReference ref = consensus_reference(cp);

    MatrixXd x0 = MatrixXd::Zero(cp.num_agents(), cp.d);
    if (seed != 0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g;
        for (int r = 0; r < x0.rows(); ++r)
            for (int c = 0; c < x0.cols(); ++c) x0(r, c) = g(rng);
    }

    const std::vector<std::string> cols = {"k", "consensus_error",
                                           "kkt_residual", "objective_gap",
                                           "rounds", "grad_evals"};
    auto run_one = [&](const std::string& m) {
        Trace t(cols);
        ConsensusState st = make_consensus_state(cp, x0);
        long rounds = 0, grads = 0;
        std::vector<MatrixXd> iterates{st.x};
        auto record = [&]() {
            ConsensusMetrics mm = consensus_metrics(cp, st.x, ref.objective);
            t.add_row({static_cast<double>(st.k), mm.consensus_error,
                       mm.kkt_residual, mm.objective_gap,
                       static_cast<double>(rounds),
                       static_cast<double>(grads)});
        };
        record();
        for (long k = 0; k < iters; ++k) {
            if (m == "distributed_alm") {
                ConsensusStepResult r = distributed_alm_step(cp, st, inexact);
                st = r.state;
                rounds += r.inner_iters;
                grads += r.inner_iters;
                if (!r.tolerance_met) out.flags.push_back("inner_tolerance_unmet");
            } else if (m == "extra") {
                st = extra_step_native(cp, st);
                rounds += 1;
                grads += 2;
            } else if (m == "extra_pd") {
                st = extra_step_pd(cp, st);
                rounds += 1;
                grads += 1;
            } else if (m == "tracking") {
                st = gradient_tracking_step(cp, st);
                rounds += 2;
                grads += 2;
            } else if (m == "tracking_pd") {
                st = gradient_tracking_step_pd(cp, st);
                rounds += 2;
                grads += 1;
            } else {
                throw std::invalid_argument(
                    "config: unknown consensus method '" + m + "'");
            }
            iterates.push_back(st.x);
            record();
        }
        return std::pair<Trace, std::vector<MatrixXd>>(std::move(t),
                                                       std::move(iterates));
    };

    if (equivalence) {
        require(method == "extra" || method == "tracking",
                "config: extra_equivalence mode needs method extra or tracking");
        auto [ta, ia] = run_one(method);
        auto [tb, ib] = run_one(method + "_pd");
        double dev = 0.0;
        for (size_t k = 0; k < ia.size(); ++k)
            dev = std::max(dev, (ia[k] - ib[k]).norm());
        for (auto* tr : {&ta, &tb}) {
            tr->metadata = base_metadata(cfg, seed, name, "consensus");
            tr->metadata["max_deviation"] = dev;
            tr->metadata["flags"] = out.flags;
        }
        ta.metadata["method"] = method;
        tb.metadata["method"] = method + "_pd";
        std::string pa = out_dir + "/" + name + "_native.csv";
        std::string pb = out_dir + "/" + name + "_pd.csv";
        write_trace(ta, pa);
        write_trace(tb, pb);
        out.files.push_back(pa);
        out.files.push_back(pb);
        return;
    }
    auto [t, it] = run_one(method);
    t.metadata = base_metadata(cfg, seed, name, "consensus");
    t.metadata["method"] = method;
    t.metadata["flags"] = out.flags;
    std::string path = out_dir + "/" + name + ".csv";
    write_trace(t, path);
    out.files.push_back(path);
}

inline void run_dynamics(const json& cfg, const std::string& out_dir,
                         std::uint64_t seed, const std::string& name,
                         ExperimentOutcome& out) {
    const json& j = cfg.at("dynamics");
    std::vector<FunctionOracle> oracles;
    for (const auto& o : j.at("oracles")) oracles.push_back(parse_oracle(o));
    ConsensusProblem cp = build_consensus_problem(
        std::move(oracles), parse_topology(j.at("topology")), 1.0);
    ConsensusReference ref = consensus_reference(cp);
    long steps = j.at("steps").get<long>();

    FlowState fs;
    fs.x = MatrixXd::Zero(cp.num_agents(), cp.d);
    if (seed != 0) {
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> g;
        for (int r = 0; r < fs.x.rows(); ++r)
            for (int c = 0; c < fs.x.cols(); ++c) fs.x(r, c) = g(rng);
    }
    fs.eta = MatrixXd::Zero(cp.num_agents(), cp.d);
    fs.h = j.value("h", flow_h_max(cp));

    Trace t({"t", "V", "Vdot", "consensus_residual", "stationarity_residual"});
    auto record = [&]() {
        t.add_row({fs.t, lyapunov_value(fs.x, fs.eta, ref.x, ref.eta),
                   lyapunov_dot(cp, fs.x, ref.x), (cp.L * fs.x).norm(),
                   (cp.grad(fs.x) + cp.L * fs.eta).norm()});
    };
    record();
    double max_increment = 0.0;
    for (long i = 0; i < steps; ++i) {
        auto [next, rep] = euler_flow(cp, fs, 1, ref.x, ref.eta);
        fs = next;
        max_increment = std::max(max_increment, rep.max_increment);
        if (rep.diverged) {
            out.flags.push_back("diverged");
            break;
        }
        record();
    }
    if (max_increment > 1e-10) out.flags.push_back("lyapunov_increase");
    t.metadata = base_metadata(cfg, seed, name, "dynamics");
    t.metadata["h"] = fs.h;
    t.metadata["max_increment"] = max_increment;
    t.metadata["flags"] = out.flags;
    std::string path = out_dir + "/" + name + ".csv";
    write_trace(t, path);
    out.files.push_back(path);
}

inline void run_federated(const json& cfg, const std::string& out_dir,
                          std::uint64_t seed, const std::string& name,
                          ExperimentOutcome& out) {
    const json& j = cfg.at("federated");
    std::vector<FunctionOracle> F;
    std::vector<double> weights;
    for (const auto& dev : j.at("devices")) {
        F.push_back(parse_oracle(dev.at("oracle")));
        weights.push_back(dev.value("weight", -1.0));
    }
    const int N = static_cast<int>(F.size());
    require(!j.contains("N") || j.at("N").get<int>() == N,
            "config: federated N disagrees with the device list");
    VectorXd p(N);
    for (int i = 0; i < N; ++i)
        p(i) = (weights[i] > 0.0) ? weights[i] : 1.0 / N;
    FederatedInstance inst = make_federated_instance(std::move(F), p);

    FedConfig fc;
    fc.rho = j.at("rho").get<double>();
    fc.eta0 = j.value("eta0", 0.0);
    if (j.contains("eta_i") && j.at("eta_i").is_array())
        fc.eta = detail::parse_vector(j.at("eta_i"));
    else
        fc.eta = VectorXd::Constant(N, j.value("eta_i", 0.0));
    fc.M = j.at("M").get<int>();
    fc.T = j.at("T").get<long>();
    std::string variant = j.value("variant", "convex");
    require(variant == "convex" || variant == "nonconvex",
            "config: federated variant must be convex or nonconvex");
    fc.variant = (variant == "nonconvex") ? FedConfig::Variant::Nonconvex
                                          : FedConfig::Variant::Convex;
    if (j.contains("local_solver")) {
        const json& ls = j.at("local_solver");
        std::string mode = ls.value("mode", "exact");
        require(mode == "exact" || mode == "gradient_steps",
                "config: local_solver mode must be exact or gradient_steps");
        fc.local_mode = (mode == "gradient_steps")
                            ? FedConfig::LocalMode::GradientSteps
                            : FedConfig::LocalMode::Exact;
        fc.local_steps = ls.value("steps", fc.local_steps);
    }
    fc.seed = seed;

    FederatedReference ref = federated_reference(inst);
    std::string algo = j.value("algorithm", "pdmm");
    std::vector<FedRoundLog> logs;
    if (algo == "pdmm")
        logs = pdopt::run_federated(inst, fc, ref.objective);
    else if (algo == "fedprox")
        logs = run_fedprox_baseline(inst, fc, ref.objective);
    else
        throw std::invalid_argument("config: unknown federated algorithm '" +
                                    algo + "'");

    Trace t({"round", "gap", "feas_residual", "participants", "msgs_up",
             "msgs_down"});
    for (const auto& l : logs)
        t.add_row({static_cast<double>(l.round), l.gap, l.feas_residual,
                   static_cast<double>(l.participants),
                   static_cast<double>(l.msgs_up),
                   static_cast<double>(l.msgs_down)});
    t.metadata = base_metadata(cfg, seed, name, "federated");
    t.metadata["algorithm"] = algo;
    t.metadata["f_star"] = ref.objective;
    t.metadata["flags"] = out.flags;
    std::string path = out_dir + "/" + name + ".csv";
    write_trace(t, path);
    out.files.push_back(path);
}

inline void run_energy(const json& cfg, const std::string& out_dir,
                       std::uint64_t seed, const std::string& name,
                       ExperimentOutcome& out) {
    const json& j = cfg.at("energy");
    const json& peers = j.at("peers");
    const int n = static_cast<int>(peers.size());
    VectorXd consumption(n);
    std::vector<FunctionOracle> costs;
    for (int i = 0; i < n; ++i) {
        consumption(i) = peers[i].at("consumption").get<double>();
        costs.push_back(parse_oracle(peers[i].at("cost")));
    }
    std::vector<std::pair<int, int>> edges;
    std::map<std::pair<int, int>, FunctionOracle> gammas;
    for (const auto& arc : j.at("arcs")) {
        int a = arc.at("from").get<int>(), b = arc.at("to").get<int>();
        gammas.insert({{a, b}, parse_oracle(arc.at("gamma"))});
        std::pair<int, int> e = std::minmax(a, b);
        if (std::find(edges.begin(), edges.end(), e) == edges.end())
            edges.push_back(e);
    }
    EnergyNetwork net = make_energy_network(
        build_topology(n, edges), consumption, costs, gammas,
        j.value("trade_cap", 0.0));

    TradingConfig tc;
    std::string mode = j.value("mode", "dual_decomposition");
    require(mode == "dual_decomposition" || mode == "inexact_alm",
            "config: energy mode must be dual_decomposition or inexact_alm");
    tc.mode = (mode == "inexact_alm") ? TradingConfig::Mode::InexactAlm
                                      : TradingConfig::Mode::DualDecomposition;
    tc.rho = j.value("rho", tc.rho);
    tc.alpha0 = j.value("alpha0", tc.alpha0);
    std::string sched = j.value("schedule", "inverse_sqrt");
    require(sched == "constant" || sched == "inverse_sqrt",
            "config: energy schedule must be constant or inverse_sqrt");
    tc.schedule = (sched == "constant") ? TradingConfig::StepSchedule::Constant
                                        : TradingConfig::StepSchedule::InverseSqrt;
    tc.eps_out = j.value("eps_out", tc.eps_out);
    tc.max_outer = j.value("max_outer", tc.max_outer);
    tc.max_inner = j.value("max_inner", tc.max_inner);

    TradingResult res = (tc.mode == TradingConfig::Mode::InexactAlm)
                            ? run_inexact_alm_trading(net, tc)
                            : run_dual_decomposition(net, tc);
    if (res.oscillation_flag) out.flags.push_back("oscillation");
    if (res.inner_tolerance_flag) out.flags.push_back("inner_tolerance_unmet");

    Trace t({"k", "max_residual", "objective", "inner_iters", "msgs"});
    for (const auto& l : res.trace)
        t.add_row({static_cast<double>(l.k), l.max_residual, l.objective,
                   static_cast<double>(l.inner_iters),
                   static_cast<double>(l.msgs)});
    t.metadata = base_metadata(cfg, seed, name, "energy");
    t.metadata["mode"] = mode;
    t.metadata["converged"] = res.converged;
    t.metadata["flags"] = out.flags;
    std::string path = out_dir + "/" + name + ".csv";
    write_trace(t, path);
    out.files.push_back(path);

    // final allocation dump
    nlohmann::json alloc = nlohmann::json::object();
    for (int i = 0; i < n; ++i) {
        nlohmann::json sales = nlohmann::json::object();
        for (int nb : net.topology.neighbors[i])
            sales[std::to_string(nb)] = res.state.E(i, nb);
        alloc[std::to_string(i)] = {{"eps", res.state.eps(i)},
                                    {"sales", sales},
                                    {"price", res.state.prices(i)}};
    }
    std::string apath = out_dir + "/" + name + "_allocation.json";
    detail::atomic_write(apath, alloc.dump(2) + "\n");
    out.files.push_back(apath);
}

inline void run_check_kind(const json& cfg, const std::string& out_dir,
                           std::uint64_t seed, const std::string& name,
                           ExperimentOutcome& out) {
    std::string filter;
    if (cfg.contains("check")) filter = cfg.at("check").value("filter", "");
    std::vector<CheckResult> results = run_checks(filter);
    Trace t({"index", "pass"});
    nlohmann::json details = nlohmann::json::array();
    bool all = true;
    for (size_t i = 0; i < results.size(); ++i) {
        t.add_row({static_cast<double>(i), results[i].pass ? 1.0 : 0.0});
        details.push_back({{"module", results[i].module},
                           {"name", results[i].name},
                           {"pass", results[i].pass},
                           {"detail", results[i].detail}});
        all = all && results[i].pass;
    }
    t.metadata = base_metadata(cfg, seed, name, "check");
    t.metadata["results"] = details;
    std::string path = out_dir + "/" + name + ".csv";
    write_trace(t, path);
    out.files.push_back(path);
    if (!all) out.error = "one or more invariant checks failed";
}

}  // namespace detail

/// Run one experiment object. Writes trace files under out_dir; returns
/// exit 0 (clean), 2 (finished but flagged), or 1 (error, no partial output
/// beyond atomic files already completed).
inline ExperimentOutcome run_experiment(const json& cfg,
                                        const std::string& out_dir,
                                        std::optional<std::uint64_t> seed_override,
                                        const std::string& default_name = "experiment") {
    ExperimentOutcome out;
    try {
        require(cfg.is_object() && cfg.contains("kind"),
                "config: experiment needs a kind");
        std::string kind = cfg.at("kind").get<std::string>();
        std::string name = cfg.value("name", default_name);
        std::uint64_t seed =
            seed_override.value_or(cfg.value("seed", std::uint64_t{0}));
        std::filesystem::create_directories(out_dir);
        if (kind == "saddle")
            detail::run_saddle(cfg, out_dir, seed, name, out);
        else if (kind == "consensus")
            detail::run_consensus(cfg, out_dir, seed, name, out);
        else if (kind == "dynamics")
            detail::run_dynamics(cfg, out_dir, seed, name, out);
        else if (kind == "federated")
            detail::run_federated(cfg, out_dir, seed, name, out);
        else if (kind == "energy")
            detail::run_energy(cfg, out_dir, seed, name, out);
        else if (kind == "check")
            detail::run_check_kind(cfg, out_dir, seed, name, out);
        else
            throw std::invalid_argument("config: unknown experiment kind '" +
                                        kind + "'");
    } catch (const std::exception& e) {
        out.exit_code = 1;
        out.error = e.what();
        return out;
    }
    if (!out.error.empty())
        out.exit_code = 1;
    else if (!out.flags.empty())
        out.exit_code = 2;
    return out;
}

inline int worker_thread_limit() {
    if (const char* env = std::getenv("PDTOOL_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) return v;
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw ? static_cast<int>(hw) : 1;
}

/// Run a config document: either a single experiment or an "experiments"
/// array dispatched over a worker pool (each experiment is sequential and
/// seeded independently, so results do not depend on the thread count).
inline std::vector<ExperimentOutcome> run_config(
    const json& doc, const std::string& out_dir,
    std::optional<std::uint64_t> seed_override) {
    if (!doc.contains("experiments"))
        return {run_experiment(doc, out_dir, seed_override)};
    const json& exps = doc.at("experiments");
    if (!exps.is_array())
        return {run_experiment(json{{"kind", "invalid"}}, out_dir, seed_override)};
    std::vector<ExperimentOutcome> outcomes(exps.size());
    std::atomic<size_t> next{0};
    int workers = std::min<int>(worker_thread_limit(),
                                static_cast<int>(exps.size()));
    workers = std::max(workers, 1);
    auto work = [&]() {
        for (;;) {
            size_t i = next.fetch_add(1);
            if (i >= exps.size()) break;
            outcomes[i] = run_experiment(exps[i], out_dir, seed_override,
                                         "experiment_" + std::to_string(i));
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& th : pool) th.join();
    return outcomes;
}

}  // namespace pdopt
