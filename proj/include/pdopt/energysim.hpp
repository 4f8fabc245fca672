#pragma once

#include <cmath>
#include <map>
#include <utility>
#include <vector>

#include "pdopt/common.hpp"
#include "pdopt/graph.hpp"
#include "pdopt/oracle.hpp"

namespace pdopt {

/// Peer-to-peer energy trading network. Peer i consumes consumption(i),
/// pays gen_cost[i] (a scalar convex oracle) for generated energy, and
/// pays transfer_cost[(j,i)] on the amount E_ji it buys from neighbor j.
struct EnergyNetwork {
    Topology topology;
    VectorXd consumption;                                    // E_i^{(c)} >= 0
    std::vector<FunctionOracle> gen_cost;                    // C_i, dim 1
    std::map<std::pair<int, int>, FunctionOracle> transfer_cost;  // gamma_{ji}
    double trade_cap = 0.0;  // bound for linear-cost subproblems (0 = default)

    int n() const { return topology.n_nodes; }

    bool any_linear_cost() const {
        auto lin = [](const FunctionOracle& o) {
            return o.kind() == FunctionOracle::Kind::Linear || o.mu() <= 0.0;
        };
        for (const auto& c : gen_cost)
            if (lin(c)) return true;
        for (const auto& [arc, g] : transfer_cost)
            if (lin(g)) return true;
        return false;
    }

    double cap() const {
        if (trade_cap > 0.0) return trade_cap;
        return 10.0 * consumption.maxCoeff();
    }
};

inline EnergyNetwork make_energy_network(
    const Topology& t, VectorXd consumption,
    std::vector<FunctionOracle> gen_cost,
    std::map<std::pair<int, int>, FunctionOracle> transfer_cost,
    double trade_cap = 0.0) {
    require(consumption.size() == t.n_nodes, "energy: one consumption per peer");
    require(consumption.minCoeff() >= 0.0, "energy: consumption must be >= 0");
    require(static_cast<int>(gen_cost.size()) == t.n_nodes,
            "energy: one generation cost per peer");
    for (const auto& c : gen_cost)
        require(c.dim() == 1, "energy: generation costs are scalar");
    for (auto [i, j] : t.edges) {
        require(transfer_cost.count({i, j}) && transfer_cost.count({j, i}),
                "energy: both arc directions need a transfer cost");
    }
    for (const auto& [arc, g] : transfer_cost) {
        require(g.dim() == 1, "energy: transfer costs are scalar");
        std::pair<int, int> e = std::minmax(arc.first, arc.second);
        require(std::binary_search(t.edges.begin(), t.edges.end(), e),
                "energy: transfer cost on a non-edge");
    }
    EnergyNetwork net;
    net.topology = t;
    net.consumption = std::move(consumption);
    net.gen_cost = std::move(gen_cost);
    net.transfer_cost = std::move(transfer_cost);
    net.trade_cap = trade_cap;
    return net;
}

/// Market state: eps(i) is peer i's total offered sales, E(j,i) the amount
/// peer i buys from neighbor j (nonzero only on arcs), prices the duals.
struct TradeState {
    VectorXd eps;
    MatrixXd E;
    VectorXd prices;
    long k = 0;
};

inline TradeState make_trade_state(const EnergyNetwork& net) {
    TradeState st;
    st.eps = VectorXd::Zero(net.n());
    st.E = MatrixXd::Zero(net.n(), net.n());
    st.prices = VectorXd::Zero(net.n());
    return st;
}

/// Market-clearing residual r_i = eps_i - sum_{j in Omega_i} E_ij
/// (offer minus what the neighbors actually request from i).
inline VectorXd balance_residual(const EnergyNetwork& net, const TradeState& st) {
    VectorXd r = st.eps;
    for (int i = 0; i < net.n(); ++i)
        for (int j : net.topology.neighbors[i]) r(i) -= st.E(i, j);
    return r;
}

/// Generation implied by the trades: E_i^{(c)} + eps_i - sum_j E_ji.
inline double implied_generation(const EnergyNetwork& net, const TradeState& st,
                                 int i) {
    double g = net.consumption(i) + st.eps(i);
    for (int j : net.topology.neighbors[i]) g -= st.E(j, i);
    return g;
}

namespace detail {

/// Projection onto the halfspace a^T v >= b.
inline void project_halfspace(VectorXd& v, const VectorXd& a, double b) {
    double viol = b - a.dot(v);
    if (viol > 0.0) v += (viol / a.squaredNorm()) * a;
}

}  // namespace detail

/// Euclidean projection of peer i's local point (eps_i, E_ji over Omega_i)
/// onto E_i = {eps >= 0, E_ji >= 0, E_i^{(c)} + eps - sum_j E_ji >= 0} by
/// Dykstra alternating projections (orthant and halfspace), optionally
/// intersected with the trade-cap box.
inline VectorXd project_feasible_i(const EnergyNetwork& net, int i,
                                   const VectorXd& point,
                                   bool capped = false) {
    const int deg = net.topology.degree(i);
    require(point.size() == 1 + deg, "project_feasible_i: dimension mismatch");
    VectorXd a(1 + deg);
    a(0) = 1.0;
    a.tail(deg).setConstant(-1.0);
    const double b = -net.consumption(i);
    const double cap = net.cap();

    VectorXd v = point;
    VectorXd p_orth = VectorXd::Zero(v.size()), p_half = VectorXd::Zero(v.size());
    for (int it = 0; it < 10000; ++it) {
        VectorXd y = v + p_orth;
        VectorXd v1 = y.cwiseMax(0.0);
        if (capped) v1 = v1.cwiseMin(cap);
        p_orth = y - v1;
        y = v1 + p_half;
        VectorXd v2 = y;
        detail::project_halfspace(v2, a, b);
        p_half = y - v2;
        if ((v2 - v).norm() <= 1e-13 && v2.minCoeff() >= -1e-13 &&
            a.dot(v2) >= b - 1e-12) {
            return v2;
        }
        v = v2;
    }
    return v;
}

/// Gather peer i's local variables (eps_i, E_ji over sorted neighbors).
inline VectorXd gather_local(const EnergyNetwork& net, const TradeState& st, int i) {
    const auto& nb = net.topology.neighbors[i];
    VectorXd v(1 + nb.size());
    v(0) = st.eps(i);
    for (size_t j = 0; j < nb.size(); ++j) v(1 + j) = st.E(nb[j], i);
    return v;
}

inline void scatter_local(const EnergyNetwork& net, TradeState& st, int i,
                          const VectorXd& v) {
    const auto& nb = net.topology.neighbors[i];
    st.eps(i) = v(0);
    for (size_t j = 0; j < nb.size(); ++j) st.E(nb[j], i) = v(1 + j);
}

/// Gradient of the per-peer Lagrangian
///   L_i = C_i(E_c + eps - sum E_ji) + sum_j gamma_ji(E_ji)
///       + lambda_i eps - sum_j lambda_j E_ji
/// with respect to (eps, E_ji).
inline VectorXd peer_lagrangian_grad(const EnergyNetwork& net, int i,
                                     const VectorXd& v, const VectorXd& prices) {
    const auto& nb = net.topology.neighbors[i];
    double gen = net.consumption(i) + v(0) - v.tail(nb.size()).sum();
    VectorXd g1(1);
    g1(0) = gen;
    double cprime = net.gen_cost[i].grad(g1)(0);
    VectorXd g(v.size());
    g(0) = cprime + prices(i);
    for (size_t j = 0; j < nb.size(); ++j) {
        VectorXd e(1);
        e(0) = v(1 + j);
        g(1 + j) = -cprime + net.transfer_cost.at({nb[j], i}).grad(e)(0) -
                   prices(nb[j]);
    }
    return g;
}

inline double peer_lagrangian_value(const EnergyNetwork& net, int i,
                                    const VectorXd& v, const VectorXd& prices) {
    const auto& nb = net.topology.neighbors[i];
    VectorXd gen(1);
    gen(0) = net.consumption(i) + v(0) - v.tail(nb.size()).sum();
    double s = net.gen_cost[i].eval(gen) + prices(i) * v(0);
    for (size_t j = 0; j < nb.size(); ++j) {
        VectorXd e(1);
        e(0) = v(1 + j);
        s += net.transfer_cost.at({nb[j], i}).eval(e) - prices(nb[j]) * v(1 + j);
    }
    return s;
}

namespace detail {

inline double peer_grad_lipschitz(const EnergyNetwork& net, int i) {
    const auto& nb = net.topology.neighbors[i];
    double cmax = net.gen_cost[i].ell();
    double gmax = 0.0;
    for (int j : nb) gmax = std::max(gmax, net.transfer_cost.at({j, i}).ell());
    // C_i couples all 1+deg coordinates through the generation argument
    return cmax * (1.0 + static_cast<double>(nb.size())) + gmax + 1e-12;
}

/// Exact solve of the quadratic per-peer subproblem by enumerating active
/// constraint subsets (nonnegativity facets and the generation halfspace).
inline VectorXd peer_subproblem_kkt(const EnergyNetwork& net, int i,
                                    const VectorXd& prices) {
    const auto& nb = net.topology.neighbors[i];
    const int d = 1 + static_cast<int>(nb.size());
    // objective: (1/2) v^T H v + c^T v + const
    // C_i(gen) with gen = Ec + a0^T v, a0 = (1, -1, ..., -1)
    VectorXd a0(d);
    a0(0) = 1.0;
    a0.tail(d - 1).setConstant(-1.0);
    auto quad_coeffs = [](const FunctionOracle& o) {
        // scalar quadratic/linear oracle -> (curvature, slope at 0)
        double c2 = (o.kind() == FunctionOracle::Kind::Quadratic) ? o.Q()(0, 0) : 0.0;
        return std::pair<double, double>(c2, o.linear_term()(0));
    };
    auto [cq, cl] = quad_coeffs(net.gen_cost[i]);
    MatrixXd H = cq * a0 * a0.transpose();
    VectorXd c = (cl + cq * net.consumption(i)) * a0;
    c(0) += prices(i);
    for (int j = 0; j < d - 1; ++j) {
        auto [gq, gl] = quad_coeffs(net.transfer_cost.at({nb[j], i}));
        H(1 + j, 1 + j) += gq;
        c(1 + j) += gl - prices(nb[j]);
    }
    // constraints g_r(v) >= 0: v_r >= 0 (r < d), then Ec + a0^T v >= 0
    std::vector<VectorXd> rows;
    std::vector<double> rhs;
    for (int r = 0; r < d; ++r) {
        VectorXd e = VectorXd::Zero(d);
        e(r) = 1.0;
        rows.push_back(e);
        rhs.push_back(0.0);
    }
    rows.push_back(a0);
    rhs.push_back(-net.consumption(i));

    const int nc = static_cast<int>(rows.size());
    double best = std::numeric_limits<double>::infinity();
    VectorXd best_v = VectorXd::Zero(d);
    for (int mask = 0; mask < (1 << nc); ++mask) {
        std::vector<int> act;
        for (int r = 0; r < nc; ++r)
            if (mask & (1 << r)) act.push_back(r);
        const int na = static_cast<int>(act.size());
        if (na > d) continue;
        // KKT system: H v + c = sum mu_r rows[r], rows[r]^T v = rhs[r]
        MatrixXd K = MatrixXd::Zero(d + na, d + na);
        VectorXd b = VectorXd::Zero(d + na);
        K.topLeftCorner(d, d) = H;
        b.head(d) = -c;
        for (int r = 0; r < na; ++r) {
            K.block(0, d + r, d, 1) = -rows[act[r]];
            K.block(d + r, 0, 1, d) = rows[act[r]].transpose();
            b(d + r) = rhs[act[r]];
        }
        Eigen::FullPivLU<MatrixXd> lu(K);
        if (!lu.isInvertible()) continue;
        VectorXd sol = lu.solve(b);
        VectorXd v = sol.head(d);
        VectorXd mu = sol.tail(na);
        bool ok = mu.size() == 0 || mu.minCoeff() >= -1e-10;
        for (int r = 0; r < nc && ok; ++r)
            ok = rows[r].dot(v) >= rhs[r] - 1e-9;
        if (!ok) continue;
        VectorXd gen(1);
        gen(0) = net.consumption(i) + a0.dot(v);
        double val = 0.5 * v.dot(H * v) + c.dot(v);
        if (val < best - 1e-14) {
            best = val;
            best_v = v;
        }
    }
    return best_v;
}

}  // namespace detail

struct PeerSolveResult {
    VectorXd v;  // (eps_i, E_ji over sorted neighbors)
    int iters = 0;
    bool capped = false;
};

/// Per-peer subproblem of the dual decomposition: minimize L_i over E_i.
/// Exact KKT enumeration for quadratic costs with modest degree; projected
/// gradient otherwise. Linear costs yield unbounded subproblems and are
/// bounded by the trade cap (flagged).
inline PeerSolveResult peer_subproblem_solve(const EnergyNetwork& net, int i,
                                             const VectorXd& prices,
                                             double tol = 1e-10,
                                             int max_iters = 20000) {
    const auto& nb = net.topology.neighbors[i];
    PeerSolveResult res;
    bool quad = net.gen_cost[i].kind() == FunctionOracle::Kind::Quadratic &&
                net.gen_cost[i].mu() > 0.0;
    for (int j : nb) {
        const auto& g = net.transfer_cost.at({j, i});
        if (g.kind() != FunctionOracle::Kind::Quadratic &&
            g.kind() != FunctionOracle::Kind::Linear)
            quad = false;
    }
    bool strongly_convex =
        quad && net.gen_cost[i].mu() > 0.0;  // curvature along all coordinates
    for (int j : nb)
        if (net.transfer_cost.at({j, i}).mu() <= 0.0) strongly_convex = false;

    if (quad && strongly_convex && nb.size() <= 16) {
        res.v = detail::peer_subproblem_kkt(net, i, prices);
        res.iters = 0;
        return res;
    }
    // projected (sub)gradient with cap when curvature is missing
    res.capped = !strongly_convex;
    double ell = detail::peer_grad_lipschitz(net, i);
    double step = (ell > 0.0) ? 1.0 / ell : 1.0;
    VectorXd v = VectorXd::Zero(1 + nb.size());
    for (int r = 0; r < max_iters; ++r) {
        VectorXd g = peer_lagrangian_grad(net, i, v, prices);
        double st = (ell > 0.0) ? step : step / std::sqrt(r + 1.0);
        VectorXd vn = project_feasible_i(net, i, v - st * g, res.capped);
        res.iters = r + 1;
        if ((vn - v).norm() <= tol * st) {
            v = vn;
            break;
        }
        v = vn;
    }
    res.v = v;
    return res;
}

/// lambda_i+ = lambda_i + alpha_k (eps_i - sum_{j in Omega_i} E_ij);
/// purely neighbor-local.
inline VectorXd price_update(const EnergyNetwork& net, const TradeState& st,
                             double alpha_k) {
    return st.prices + alpha_k * balance_residual(net, st);
}

/// Objective of the centralized trading problem at the given trades:
/// sum_i C_i(generation_i) + sum over arcs gamma_ji(E_ji). Each arc cost is
/// counted exactly once.
inline double trading_objective(const EnergyNetwork& net, const MatrixXd& E) {
    double s = 0.0;
    for (int i = 0; i < net.n(); ++i) {
        VectorXd gen(1);
        gen(0) = net.consumption(i);
        for (int j : net.topology.neighbors[i]) gen(0) += E(i, j) - E(j, i);
        s += net.gen_cost[i].eval(gen);
        for (int j : net.topology.neighbors[i]) {
            VectorXd e(1);
            e(0) = E(j, i);
            s += net.transfer_cost.at({j, i}).eval(e);
        }
    }
    return s;
}

/// Projection of a full trade matrix onto the centralized feasible set
/// {E >= 0 (boxed when capped), generation_i >= 0 for all i} by Dykstra
/// sweeps over the orthant/box and the N generation halfspaces.
inline MatrixXd project_centralized_feasible(const EnergyNetwork& net,
                                             const MatrixXd& E, bool capped,
                                             int sweeps = 2000) {
    // flatten arc variables
    std::vector<std::pair<int, int>> arcs;
    for (auto [i, j] : net.topology.edges) {
        arcs.emplace_back(i, j);
        arcs.emplace_back(j, i);
    }
    const int na = static_cast<int>(arcs.size());
    VectorXd v(na);
    for (int a = 0; a < na; ++a) v(a) = E(arcs[a].first, arcs[a].second);
    // halfspace per peer: Ec_i + sum_j (E_ij - E_ji) >= 0
    std::vector<VectorXd> rows(net.n(), VectorXd::Zero(na));
    for (int a = 0; a < na; ++a) {
        auto [s, b] = arcs[a];
        rows[s](a) += 1.0;  // seller generates
        rows[b](a) -= 1.0;  // buyer offsets consumption
    }
    const double cap = net.cap();
    std::vector<VectorXd> corr(net.n() + 1, VectorXd::Zero(na));
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        VectorXd before = v;
        VectorXd y = v + corr[0];
        VectorXd vn = y.cwiseMax(0.0);
        if (capped) vn = vn.cwiseMin(cap);
        corr[0] = y - vn;
        v = vn;
        for (int i = 0; i < net.n(); ++i) {
            y = v + corr[1 + i];
            vn = y;
            detail::project_halfspace(vn, rows[i], -net.consumption(i));
            corr[1 + i] = y - vn;
            v = vn;
        }
        if ((v - before).norm() <= 1e-13) break;
    }
    MatrixXd out = MatrixXd::Zero(net.n(), net.n());
    for (int a = 0; a < na; ++a) out(arcs[a].first, arcs[a].second) = v(a);
    return out;
}

struct TradingConfig {
    enum class Mode { DualDecomposition, InexactAlm };
    enum class StepSchedule { Constant, InverseSqrt };
    enum class InnerMethod { ProjectedGradient, ProjectedNesterov };

    Mode mode = Mode::DualDecomposition;
    double rho = 1.0;                 // ALM penalty (and ALM dual step)
    double alpha0 = 0.1;              // dual decomposition step scale
    StepSchedule schedule = StepSchedule::InverseSqrt;
    InnerMethod inner = InnerMethod::ProjectedGradient;
    double inner_tol_coeff = 0.1;     // inner tolerance = coeff * eps_out
    int max_inner = 5000;             // R
    double eps_out = 1e-6;
    long max_outer = 10000;
    int oscillation_window = 25;

    double dual_step(long k) const {
        if (schedule == StepSchedule::Constant) return alpha0;
        return alpha0 / std::sqrt(static_cast<double>(k) + 1.0);
    }
};

struct TradingRoundLog {
    long k = 0;
    double max_residual = 0.0;
    double objective = 0.0;
    long inner_iters = 0;
    long msgs = 0;
};

struct TradingResult {
    TradeState state;
    std::vector<TradingRoundLog> trace;
    bool oscillation_flag = false;
    bool inner_tolerance_flag = false;  // R exhausted at least once
    bool converged = false;
    long outer_iters = 0;
};

namespace detail {

inline bool residual_stalled(const std::vector<TradingRoundLog>& trace,
                             int window) {
    if (static_cast<int>(trace.size()) < 2 * window) return false;
    double recent = std::numeric_limits<double>::infinity();
    double earlier = std::numeric_limits<double>::infinity();
    size_t n = trace.size();
    for (size_t i = n - window; i < n; ++i)
        recent = std::min(recent, trace[i].max_residual);
    for (size_t i = n - 2 * window; i < n - window; ++i)
        earlier = std::min(earlier, trace[i].max_residual);
    return recent >= earlier - 1e-12;
}

}  // namespace detail

/// Algorithm: each outer iteration every peer solves its local subproblem at
/// the current prices, trades are exchanged along edges, and prices move by
/// the market-clearing residual.
inline TradingResult run_dual_decomposition(const EnergyNetwork& net,
                                            const TradingConfig& cfg) {
    require(cfg.mode == TradingConfig::Mode::DualDecomposition,
            "run_dual_decomposition: wrong mode");
    TradingResult res;
    res.state = make_trade_state(net);
    const long edges2 = 2 * static_cast<long>(net.topology.edges.size());
    for (long k = 0; k < cfg.max_outer; ++k) {
        long inner = 0;
        TradeState next = res.state;
        for (int i = 0; i < net.n(); ++i) {
            PeerSolveResult ps =
                peer_subproblem_solve(net, i, res.state.prices,
                                      std::min(1e-10, 0.01 * cfg.eps_out),
                                      cfg.max_inner);
            scatter_local(net, next, i, ps.v);
            inner += ps.iters;
            if (ps.iters >= cfg.max_inner) res.inner_tolerance_flag = true;
        }
        next.prices = price_update(net, next, cfg.dual_step(k));
        next.k = k + 1;
        res.state = next;

        TradingRoundLog log;
        log.k = k + 1;
        log.max_residual = balance_residual(net, res.state).cwiseAbs().maxCoeff();
        MatrixXd repaired = project_centralized_feasible(
            net, res.state.E, net.any_linear_cost());
        log.objective = trading_objective(net, repaired);
        log.inner_iters = inner;
        // prices out (S1) + purchase requests in (S3), per directed arc
        log.msgs = 2 * edges2;
        res.trace.push_back(log);
        res.outer_iters = k + 1;
        if (log.max_residual <= cfg.eps_out) {
            res.converged = true;
            break;
        }
        if (detail::residual_stalled(res.trace, cfg.oscillation_window)) {
            res.oscillation_flag = true;
            break;
        }
    }
    return res;
}

namespace detail {

/// Gradient of the augmented Lagrangian L_rho with respect to every peer's
/// local variables, evaluated from a frozen snapshot (synchronous round).
inline void alm_gradient(const EnergyNetwork& net, const TradeState& st,
                         double rho, std::vector<VectorXd>& grads) {
    VectorXd r = balance_residual(net, st);
    for (int i = 0; i < net.n(); ++i) {
        const auto& nb = net.topology.neighbors[i];
        VectorXd v = gather_local(net, st, i);
        VectorXd g = peer_lagrangian_grad(net, i, v, st.prices);
        g(0) += rho * r(i);  // d/d eps_i of (rho/2) r_i^2
        for (size_t j = 0; j < nb.size(); ++j)
            g(1 + j) -= rho * r(nb[j]);  // E_ji appears in r_j with sign -1
        grads[i] = g;
    }
}

}  // namespace detail

/// Inexact-ALM variant: the joint subproblem min L_rho over the product of
/// feasible sets is solved by inner projected (Nesterov) gradient rounds,
/// each exchanging only neighbor trades; prices then move with step rho.
inline TradingResult run_inexact_alm_trading(const EnergyNetwork& net,
                                             const TradingConfig& cfg) {
    require(cfg.mode == TradingConfig::Mode::InexactAlm,
            "run_inexact_alm_trading: wrong mode");
    TradingResult res;
    res.state = make_trade_state(net);
    const bool capped = net.any_linear_cost();
    const long edges2 = 2 * static_cast<long>(net.topology.edges.size());

    // Lipschitz bound of grad L_rho over the joint variable
    double ell = 0.0;
    for (int i = 0; i < net.n(); ++i)
        ell = std::max(ell, detail::peer_grad_lipschitz(net, i));
    double deg_max = 0.0;
    for (int i = 0; i < net.n(); ++i)
        deg_max = std::max(deg_max, static_cast<double>(net.topology.degree(i)));
    ell += cfg.rho * (1.0 + deg_max) * 2.0;
    const double step = 1.0 / ell;

    std::vector<VectorXd> grads(net.n());
    for (long k = 0; k < cfg.max_outer; ++k) {
        double inner_tol = cfg.inner_tol_coeff * cfg.eps_out;
        int r = 0;
        bool inner_met = false;
        TradeState prev = res.state;  // Nesterov momentum memory
        double t_mom = 1.0;
        TradeState look = res.state;
        for (; r < cfg.max_inner; ++r) {
            detail::alm_gradient(net, look, cfg.rho, grads);
            TradeState cand = look;
            for (int i = 0; i < net.n(); ++i) {
                VectorXd v = gather_local(net, look, i) - step * grads[i];
                scatter_local(net, cand, i, project_feasible_i(net, i, v, capped));
            }
            // projected-gradient stationarity on the candidate
            double move = 0.0;
            for (int i = 0; i < net.n(); ++i)
                move += (gather_local(net, cand, i) - gather_local(net, look, i))
                            .squaredNorm();
            move = std::sqrt(move) / step;
            if (cfg.inner == TradingConfig::InnerMethod::ProjectedGradient) {
                prev = cand;
                look = cand;
            } else {
                double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
                TradeState extr = cand;
                extr.eps = cand.eps + ((t_mom - 1.0) / tn) * (cand.eps - prev.eps);
                extr.E = cand.E + ((t_mom - 1.0) / tn) * (cand.E - prev.E);
                prev = cand;
                look = extr;
                t_mom = tn;
            }
            if (move <= inner_tol) {
                inner_met = true;
                break;
            }
        }
        res.state = prev;
        if (!inner_met) res.inner_tolerance_flag = true;
        res.state.prices = res.state.prices + cfg.rho * balance_residual(net, res.state);
        res.state.k = k + 1;

        TradingRoundLog log;
        log.k = k + 1;
        log.max_residual = balance_residual(net, res.state).cwiseAbs().maxCoeff();
        MatrixXd repaired = project_centralized_feasible(net, res.state.E, capped);
        log.objective = trading_objective(net, repaired);
        log.inner_iters = r;
        log.msgs = static_cast<long>(r + 1) * edges2;
        res.trace.push_back(log);
        res.outer_iters = k + 1;
        if (log.max_residual <= cfg.eps_out && inner_met) {
            res.converged = true;
            break;
        }
    }
    return res;
}

/// Independent centralized reference: projected gradient in the arc
/// variables over the exact feasible set of the trading problem.
struct EnergyReference {
    MatrixXd E;
    double objective = 0.0;
    bool converged = false;
};

inline EnergyReference centralized_energy_reference(const EnergyNetwork& net,
                                                    double tol = 1e-10,
                                                    long max_iters = 400000) {
    const bool capped = net.any_linear_cost();
    double ell = 0.0;
    for (int i = 0; i < net.n(); ++i)
        ell = std::max(ell, detail::peer_grad_lipschitz(net, i));
    double deg_max = 1.0;
    for (int i = 0; i < net.n(); ++i)
        deg_max = std::max(deg_max, static_cast<double>(net.topology.degree(i)));
    double step0 = 1.0 / (ell * (1.0 + deg_max));

    MatrixXd E = MatrixXd::Zero(net.n(), net.n());
    EnergyReference ref;
    for (long it = 0; it < max_iters; ++it) {
        // gradient wrt arc variable E(s,b): C_s'(gen_s) - C_b'(gen_b) + gamma_sb'(E_sb)
        MatrixXd G = MatrixXd::Zero(net.n(), net.n());
        VectorXd cprime(net.n());
        for (int i = 0; i < net.n(); ++i) {
            VectorXd gen(1);
            gen(0) = net.consumption(i);
            for (int j : net.topology.neighbors[i]) gen(0) += E(i, j) - E(j, i);
            cprime(i) = net.gen_cost[i].grad(gen)(0);
        }
        for (auto [i, j] : net.topology.edges) {
            VectorXd e(1);
            e(0) = E(i, j);
            G(i, j) = cprime(i) - cprime(j) + net.transfer_cost.at({i, j}).grad(e)(0);
            e(0) = E(j, i);
            G(j, i) = cprime(j) - cprime(i) + net.transfer_cost.at({j, i}).grad(e)(0);
        }
        double step = capped ? step0 / std::sqrt(it + 1.0) : step0;
        MatrixXd En = project_centralized_feasible(net, E - step * G, capped);
        double move = (En - E).norm() / step;
        E = En;
        if (!capped && move <= tol) {
            ref.converged = true;
            break;
        }
        if (capped && it == max_iters - 1) ref.converged = true;
    }
    ref.E = E;
    ref.objective = trading_objective(net, E);
    return ref;
}

}  // namespace pdopt
