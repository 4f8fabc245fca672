#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "pdopt/common.hpp"
#include "pdopt/oracle.hpp"
#include "pdopt/saddle.hpp"

namespace pdopt {

/// Federated instance: N devices with weights p_i on the unit simplex and
/// device risks F_i; the algorithm operates on f_i = p_i F_i.
struct FederatedInstance {
    int N = 0;
    int d = 0;
    VectorXd p;                          // device weights, sum to 1
    std::vector<FunctionOracle> F;       // device objectives

    double global_objective(const VectorXd& z) const {
        double s = 0.0;
        for (int i = 0; i < N; ++i) s += p(i) * F[i].eval(z);
        return s;
    }
};

inline FederatedInstance make_federated_instance(std::vector<FunctionOracle> F,
                                                 VectorXd p) {
    require(!F.empty(), "federated: needs at least one device");
    require(p.size() == static_cast<long>(F.size()),
            "federated: one weight per device");
    require(p.minCoeff() > 0.0, "federated: weights must be positive");
    require(std::abs(p.sum() - 1.0) <= 1e-12,
            "federated: weights must sum to 1");
    int d = F[0].dim();
    for (const auto& o : F)
        require(o.dim() == d, "federated: device dimensions must agree");
    FederatedInstance inst;
    inst.N = static_cast<int>(F.size());
    inst.d = d;
    inst.p = std::move(p);
    inst.F = std::move(F);
    return inst;
}

struct FedConfig {
    enum class Variant { Convex, Nonconvex };
    enum class LocalMode { Exact, GradientSteps };

    double rho = 1.0;
    double eta0 = 0.0;            // server Bregman weight
    VectorXd eta;                 // device Bregman weights (length N)
    int M = 0;                    // blocks per round, 1 <= M <= N+1
    long T = 100;                 // rounds
    LocalMode local_mode = LocalMode::Exact;
    int local_steps = 5;
    Variant variant = Variant::Convex;
    std::uint64_t seed = 0;

    void validate(const FederatedInstance& inst) const {
        require(rho > 0.0, "fed config: rho must be positive");
        require(eta0 >= 0.0, "fed config: eta0 must be nonnegative");
        require(eta.size() == inst.N && eta.minCoeff() >= 0.0,
                "fed config: eta must be length N, nonnegative");
        require(M >= 1 && M <= inst.N + 1,
                "fed config: M must lie in [1, N+1]");
        require(T >= 0, "fed config: T must be nonnegative");
        require(local_steps >= 1, "fed config: local_steps must be >= 1");
    }
};

struct FedState {
    VectorXd z;
    std::vector<VectorXd> x;       // per-device iterates
    std::vector<VectorXd> lambda;  // per-device duals (initialized to 0)
    long k = 0;
};

inline FedState make_fed_state(const FederatedInstance& inst) {
    FedState st;
    st.z = VectorXd::Zero(inst.d);
    st.x.assign(inst.N, VectorXd::Zero(inst.d));
    st.lambda.assign(inst.N, VectorXd::Zero(inst.d));
    return st;
}

/// Uniform sample of M blocks from {0, 1, ..., N}; block 0 is the server z.
inline std::vector<int> sample_blocks(int N, int M, std::mt19937_64& rng) {
    require(M >= 1 && M <= N + 1, "sample_blocks: M out of range");
    return sample_without_replacement(N + 1, M, rng);
}

/// Server aggregation: z+ = (rho sum x_i + sum lambda_i + eta0 z)/(rho N + eta0).
inline VectorXd server_z_update(const FedState& st, const FederatedInstance& inst,
                                const FedConfig& cfg) {
    double denom = cfg.rho * inst.N + cfg.eta0;
    require(denom > 0.0, "server_z_update: rho N + eta0 must be positive");
    VectorXd acc = cfg.eta0 * st.z;
    for (int i = 0; i < inst.N; ++i)
        acc += cfg.rho * st.x[i] + st.lambda[i];
    return acc / denom;
}

/// Device solve: minimize
///   f_i(x) + lambda_i^T (x - z_ref) + (rho/2)||x - z_ref||^2 + eta_i ||x - x_i||^2
/// exactly for quadratic/linear F_i, otherwise by a configured number of
/// gradient steps.
inline VectorXd client_local_solve(int i, const VectorXd& z_ref,
                                   const FedState& st,
                                   const FederatedInstance& inst,
                                   const FedConfig& cfg) {
    const FunctionOracle& Fi = inst.F[i];
    const double pi = inst.p(i);
    const double etai =
        (cfg.variant == FedConfig::Variant::Nonconvex) ? 0.0 : cfg.eta(i);
    const int d = inst.d;
    // objective gradient: p_i grad F_i(x) + lambda_i + rho (x - z_ref) + 2 eta_i (x - x_i)
    if (cfg.local_mode == FedConfig::LocalMode::Exact) {
        if (Fi.kind() == FunctionOracle::Kind::Quadratic ||
            Fi.kind() == FunctionOracle::Kind::Linear) {
            MatrixXd H = (cfg.rho + 2.0 * etai) * MatrixXd::Identity(d, d);
            if (Fi.kind() == FunctionOracle::Kind::Quadratic)
                H += pi * Fi.Q();
            VectorXd rhs = -pi * Fi.linear_term() - st.lambda[i] +
                           cfg.rho * z_ref + 2.0 * etai * st.x[i];
            return H.ldlt().solve(rhs);
        }
        throw CapabilityError(
            "client_local_solve: exact mode needs quadratic/linear devices");
    }
    double step = 1.0 / (pi * Fi.ell() + cfg.rho + 2.0 * etai);
    VectorXd x = st.x[i];
    for (int r = 0; r < cfg.local_steps; ++r) {
        VectorXd g = pi * Fi.grad(x) + st.lambda[i] + cfg.rho * (x - z_ref) +
                     2.0 * etai * (x - st.x[i]);
        x -= step * g;
    }
    return x;
}

/// Dual sweep. Convex variant updates every device; nonconvex only the
/// sampled ones.
inline void dual_update_all(FedState& st, const FederatedInstance& inst,
                            const FedConfig& cfg,
                            const std::vector<int>& sampled_devices) {
    if (cfg.variant == FedConfig::Variant::Convex) {
        for (int i = 0; i < inst.N; ++i)
            st.lambda[i] += cfg.rho * (st.x[i] - st.z);
    } else {
        for (int i : sampled_devices)
            st.lambda[i] += cfg.rho * (st.x[i] - st.z);
    }
}

struct FedRoundLog {
    long round = 0;
    double gap = 0.0;            // f(z) - f_star
    double feas_residual = 0.0;  // sum_i ||x_i - z||^2
    int participants = 0;
    long msgs_up = 0;
    long msgs_down = 0;
};

/// One round of the PDMM-based federated method (Algorithm steps S1-S8).
inline FedRoundLog federated_round(FedState& st, const FederatedInstance& inst,
                                   const FedConfig& cfg, std::mt19937_64& rng,
                                   double f_star) {
    std::vector<int> blocks = sample_blocks(inst.N, cfg.M, rng);
    bool server_in = !blocks.empty() && blocks.front() == 0;
    std::vector<int> devices;
    for (int b : blocks)
        if (b >= 1) devices.push_back(b - 1);

    const bool nonconvex = cfg.variant == FedConfig::Variant::Nonconvex;
    VectorXd z_next = server_in ? server_z_update(st, inst, cfg) : st.z;
    // Convex variant: devices solve against the round-start z (parallel
    // block update). Nonconvex variant: against the fresh z.
    const VectorXd& z_ref = nonconvex ? z_next : st.z;

    std::vector<VectorXd> x_next(devices.size());
    for (size_t j = 0; j < devices.size(); ++j)
        x_next[j] = client_local_solve(devices[j], z_ref, st, inst, cfg);
    for (size_t j = 0; j < devices.size(); ++j) st.x[devices[j]] = x_next[j];
    st.z = z_next;
    dual_update_all(st, inst, cfg, devices);
    st.k += 1;

    FedRoundLog log;
    log.round = st.k;
    log.gap = inst.global_objective(st.z) - f_star;
    for (int i = 0; i < inst.N; ++i)
        log.feas_residual += (st.x[i] - st.z).squaredNorm();
    log.participants = static_cast<int>(blocks.size());
    log.msgs_up = static_cast<long>(devices.size());
    log.msgs_down = 2 * static_cast<long>(devices.size());
    return log;
}

inline std::vector<FedRoundLog> run_federated(const FederatedInstance& inst,
                                              const FedConfig& cfg,
                                              double f_star) {
    cfg.validate(inst);
    FedState st = make_fed_state(inst);
    std::mt19937_64 rng(cfg.seed);
    std::vector<FedRoundLog> trace;
    trace.reserve(cfg.T);
    for (long k = 0; k < cfg.T; ++k)
        trace.push_back(federated_round(st, inst, cfg, rng, f_star));
    return trace;
}

/// FedProx-style baseline: same sampling and round structure, no duals.
/// Sampled device i minimizes F_i(x) + (rho/2)||x - z||^2; the server (when
/// sampled) averages the participating devices' fresh iterates.
inline std::vector<FedRoundLog> run_fedprox_baseline(const FederatedInstance& inst,
                                                     const FedConfig& cfg,
                                                     double f_star) {
    cfg.validate(inst);
    FedState st = make_fed_state(inst);
    std::mt19937_64 rng(cfg.seed);
    std::vector<FedRoundLog> trace;
    trace.reserve(cfg.T);
    for (long k = 0; k < cfg.T; ++k) {
        std::vector<int> blocks = sample_blocks(inst.N, cfg.M, rng);
        bool server_in = !blocks.empty() && blocks.front() == 0;
        std::vector<int> devices;
        for (int b : blocks)
            if (b >= 1) devices.push_back(b - 1);
        for (int i : devices) {
            const FunctionOracle& Fi = inst.F[i];
            if (cfg.local_mode == FedConfig::LocalMode::Exact &&
                (Fi.kind() == FunctionOracle::Kind::Quadratic ||
                 Fi.kind() == FunctionOracle::Kind::Linear)) {
                MatrixXd H = cfg.rho * MatrixXd::Identity(inst.d, inst.d);
                if (Fi.kind() == FunctionOracle::Kind::Quadratic) H += Fi.Q();
                st.x[i] = H.ldlt().solve(cfg.rho * st.z - Fi.linear_term());
            } else {
                double step = 1.0 / (Fi.ell() + cfg.rho);
                VectorXd x = st.x[i];
                for (int r = 0; r < cfg.local_steps; ++r)
                    x -= step * (Fi.grad(x) + cfg.rho * (x - st.z));
                st.x[i] = x;
            }
        }
        if (server_in && !devices.empty()) {
            VectorXd acc = VectorXd::Zero(inst.d);
            for (int i : devices) acc += st.x[i];
            st.z = acc / static_cast<double>(devices.size());
        }
        st.k += 1;
        FedRoundLog log;
        log.round = st.k;
        log.gap = inst.global_objective(st.z) - f_star;
        for (int i = 0; i < inst.N; ++i)
            log.feas_residual += (st.x[i] - st.z).squaredNorm();
        log.participants = static_cast<int>(blocks.size());
        log.msgs_up = static_cast<long>(devices.size());
        log.msgs_down = 2 * static_cast<long>(devices.size());
        trace.push_back(log);
    }
    return trace;
}

}  // namespace pdopt
