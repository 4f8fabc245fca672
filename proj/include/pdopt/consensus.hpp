#pragma once

#include <cmath>
#include <vector>

#include "pdopt/common.hpp"
#include "pdopt/graph.hpp"
#include "pdopt/oracle.hpp"
#include "pdopt/saddle.hpp"

namespace pdopt {

/// Consensus optimization over a connected graph:
///   minimize sum_i f_i(x_i)  subject to  L x = 0,
/// where L is the Laplacian of the mixing matrix W. Agent variables may be
/// d-dimensional; the Laplacian acts per coordinate (rows of the N x d
/// state matrix are agents).
struct ConsensusProblem {
    std::vector<FunctionOracle> oracles;
    Topology topology;
    WeightMatrix weights;
    MatrixXd L;  // I - W
    double rho = 1.0;
    double alpha = 0.0;
    int d = 1;

    int num_agents() const { return static_cast<int>(oracles.size()); }

    double max_ell() const {
        double l = 0.0;
        for (const auto& o : oracles) l = std::max(l, o.ell());
        return l;
    }

    double lmax_L() const {
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(L);
        return es.eigenvalues().maxCoeff();
    }

    double objective(const MatrixXd& x) const {
        double s = 0.0;
        for (int i = 0; i < num_agents(); ++i)
            s += oracles[i].eval(x.row(i).transpose());
        return s;
    }

    MatrixXd grad(const MatrixXd& x) const {
        MatrixXd g(num_agents(), d);
        for (int i = 0; i < num_agents(); ++i)
            g.row(i) = oracles[i].grad(x.row(i).transpose()).transpose();
        return g;
    }
};

inline ConsensusProblem build_consensus_problem(std::vector<FunctionOracle> oracles,
                                                const Topology& t, double rho,
                                                double alpha = 0.0) {
    require(!oracles.empty(), "consensus: needs at least one oracle");
    require(static_cast<int>(oracles.size()) == t.n_nodes,
            "consensus: one oracle per node");
    require(t.connected, "consensus: topology must be connected");
    require(rho > 0.0, "consensus: rho must be positive");
    int d = oracles[0].dim();
    for (const auto& o : oracles)
        require(o.dim() == d, "consensus: all agent dimensions must agree");
    ConsensusProblem cp;
    cp.oracles = std::move(oracles);
    cp.topology = t;
    cp.weights = metropolis_weights(t);
    cp.L = cp.weights.laplacian();
    cp.rho = rho;
    cp.d = d;
    // Safe default alpha = min(1/rho, 1/(ell_max + rho lambda_max(L))).
    cp.alpha = (alpha > 0.0)
                   ? alpha
                   : std::min(1.0 / rho, 1.0 / (cp.max_ell() + rho * cp.lmax_L()));
    return cp;
}

/// Replace the mixing matrix by its lazy version (I + W)/2 (same sparsity,
/// positive semidefinite). The two-step consensus recursion is stable only
/// when lambda_min(W) > -1/3; bipartite-like graphs (even rings, stars) sit
/// at or below that boundary with plain Metropolis weights.
inline void make_lazy_mixing(ConsensusProblem& cp) {
    const int N = cp.num_agents();
    cp.weights.W = 0.5 * (MatrixXd::Identity(N, N) + cp.weights.W);
    cp.weights.gamma = spectral_gap(cp.weights.W);
    cp.L = cp.weights.laplacian();
}

/// Conservative EXTRA step size: half of lambda_min((I+W)/2) / ell_max.
/// Keeps the native and primal-dual iterations well inside their common
/// stability region.
inline double extra_safe_alpha(const ConsensusProblem& cp) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(cp.weights.W);
    double lmin = es.eigenvalues().minCoeff();
    return 0.25 * (1.0 + lmin) / cp.max_ell();
}

/// Conservative gradient-tracking step size: c (1 - sigma)^2 / ell_max
/// where sigma is the mixing rate of W (largest eigenvalue magnitude below
/// the single unit eigenvalue of a connected graph).
inline double tracking_safe_alpha(const ConsensusProblem& cp) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(cp.weights.W);
    const VectorXd& ev = es.eigenvalues();  // ascending
    double sigma = 0.0;
    for (long i = 0; i + 1 < ev.size(); ++i)
        sigma = std::max(sigma, std::abs(ev(i)));
    double gap = 1.0 - sigma;
    return 0.15 * gap * gap / cp.max_ell();
}

struct ConsensusState {
    MatrixXd x;       // N x d agent estimates
    MatrixXd eta;     // dual (distributed ALM / primal-dual forms)
    MatrixXd s;       // gradient tracker
    MatrixXd x_prev;  // previous iterate (EXTRA native)
    long k = 0;
};

inline ConsensusState make_consensus_state(const ConsensusProblem& cp,
                                           const MatrixXd& x0) {
    require(x0.rows() == cp.num_agents() && x0.cols() == cp.d,
            "consensus state: x0 must be N x d");
    ConsensusState st;
    st.x = x0;
    st.eta = MatrixXd::Zero(cp.num_agents(), cp.d);
    st.s = cp.grad(x0);
    st.x_prev = x0;
    return st;
}

/// Distributed ALM outer step: inexactly minimize
///   f(x) + <x, eta> + (rho/2) x^T L x
/// by an inner gradient loop (one neighbor exchange per inner iteration),
/// then eta <- eta + rho L x.
struct ConsensusStepResult {
    ConsensusState state;
    int inner_iters = 0;
    bool tolerance_met = true;
};

inline ConsensusStepResult distributed_alm_step(const ConsensusProblem& cp,
                                                const ConsensusState& st,
                                                const InexactConfig& c) {
    double step = 1.0 / (cp.max_ell() + cp.rho * cp.lmax_L());
    double tol = c.tolerance_at(st.k);
    MatrixXd x = st.x;
    ConsensusStepResult res;
    res.tolerance_met = false;
    int r = 0;
    for (; r < c.max_inner; ++r) {
        MatrixXd g = cp.grad(x) + st.eta + cp.rho * (cp.L * x);
        if (g.norm() <= tol) {
            res.tolerance_met = true;
            break;
        }
        x -= step * g;
    }
    res.inner_iters = r;
    res.state = st;
    res.state.x = x;
    res.state.eta = st.eta + cp.rho * (cp.L * x);
    res.state.k = st.k + 1;
    return res;
}

/// EXTRA in its native form:
///   x^(1)   = W x^(0) - alpha grad f(x^(0))
///   x^(k+1) = 2 W x^(k) - alpha grad f(x^(k)) - W x^(k-1) + alpha grad f(x^(k-1))
inline ConsensusState extra_step_native(const ConsensusProblem& cp,
                                        const ConsensusState& st) {
    const MatrixXd& W = cp.weights.W;
    ConsensusState out = st;
    if (st.k == 0) {
        out.x = W * st.x - cp.alpha * cp.grad(st.x);
    } else {
        out.x = 2.0 * (W * st.x) - cp.alpha * cp.grad(st.x) - W * st.x_prev +
                cp.alpha * cp.grad(st.x_prev);
    }
    out.x_prev = st.x;
    out.k = st.k + 1;
    return out;
}

/// EXTRA as a primal-dual method on the Laplacian-constrained AL
/// (valid under the coupling alpha rho = 1). The dual is carried as
/// eta = rho L^{1/2} lambda so the square root never appears:
///   x^+   = x - alpha (grad f(x) + eta + rho L x)
///   eta^+ = eta + alpha rho^2 L x^+
inline ConsensusState extra_step_pd(const ConsensusProblem& cp,
                                    const ConsensusState& st,
                                    bool require_coupling = true) {
    if (require_coupling)
        require(std::abs(cp.alpha * cp.rho - 1.0) <= 1e-14,
                "extra_step_pd: equivalence mode requires alpha * rho = 1");
    ConsensusState out = st;
    out.x = st.x - cp.alpha * (cp.grad(st.x) + st.eta + cp.rho * (cp.L * st.x));
    out.eta = st.eta + cp.alpha * cp.rho * cp.rho * (cp.L * out.x);
    out.x_prev = st.x;
    out.k = st.k + 1;
    return out;
}

/// Gradient tracking, native form:
///   x^+ = W x - alpha s;   s^+ = W s + grad f(x^+) - grad f(x),
/// with s^(0) = grad f(x^(0)).
inline ConsensusState gradient_tracking_step(const ConsensusProblem& cp,
                                             const ConsensusState& st) {
    const MatrixXd& W = cp.weights.W;
    ConsensusState out = st;
    out.x = W * st.x - cp.alpha * st.s;
    out.s = W * st.s + cp.grad(out.x) - cp.grad(st.x);
    out.x_prev = st.x;
    out.k = st.k + 1;
    return out;
}

/// Gradient tracking rewritten as a primal-dual method (alpha rho = 1):
///   x^+   = x - alpha (grad f(x) + eta + rho L x)
///   eta^+ = eta + alpha rho^2 (L x^+ - W L x)
/// Equivalent to the native form under s = grad f(x) + eta, eta^(0) = 0.
inline ConsensusState gradient_tracking_step_pd(const ConsensusProblem& cp,
                                                const ConsensusState& st,
                                                bool require_coupling = true) {
    if (require_coupling)
        require(std::abs(cp.alpha * cp.rho - 1.0) <= 1e-14,
                "gradient_tracking_step_pd: equivalence mode requires alpha * rho = 1");
    ConsensusState out = st;
    out.x = st.x - cp.alpha * (cp.grad(st.x) + st.eta + cp.rho * (cp.L * st.x));
    out.eta = st.eta + cp.alpha * cp.rho * cp.rho *
                           (cp.L * out.x - cp.weights.W * (cp.L * st.x));
    out.x_prev = st.x;
    out.k = st.k + 1;
    return out;
}

struct ConsensusMetrics {
    double consensus_error = 0.0;  // max_i ||x_i - mean(x)||
    double kkt_residual = 0.0;     // ||L x|| + ||grad f(x) + eta||-style residual
    double objective_gap = 0.0;    // sum f_i(mean(x)) - f_star
};

/// Metrics against a reference optimal value f_star. The KKT residual is
/// for the Laplacian-constrained problem: ||L x|| + ||(I - 11^T/N) grad f(x)||
/// (the dual can absorb any gradient component orthogonal to the consensus
/// direction, so only the mean gradient and the consensus violation remain).
inline ConsensusMetrics consensus_metrics(const ConsensusProblem& cp,
                                          const MatrixXd& x, double f_star) {
    const int N = cp.num_agents();
    ConsensusMetrics m;
    Eigen::RowVectorXd mean = x.colwise().mean();
    for (int i = 0; i < N; ++i)
        m.consensus_error =
            std::max(m.consensus_error, (x.row(i) - mean).norm());
    MatrixXd g = cp.grad(x);
    Eigen::RowVectorXd gmean = g.colwise().mean();
    // stationarity requires mean gradient ~ 0 on the consensus manifold
    m.kkt_residual = (cp.L * x).norm() +
                     std::sqrt(static_cast<double>(N)) * gmean.norm();
    double obj = 0.0;
    for (int i = 0; i < N; ++i) obj += cp.oracles[i].eval(mean.transpose());
    m.objective_gap = obj - f_star;
    return m;
}

}  // namespace pdopt
