#pragma once

#include <cmath>
#include <vector>

#include "pdopt/common.hpp"
#include "pdopt/consensus.hpp"

namespace pdopt {

/// State of the continuous-time primal-dual flow
///   xdot = -grad f(x) - L eta - L x,   etadot = L x,
/// integrated by explicit Euler with step h.
struct FlowState {
    MatrixXd x;
    MatrixXd eta;
    double t = 0.0;
    double h = 1e-3;
};

struct LyapunovReport {
    std::vector<double> V;      // V(x, eta) per accepted step (incl. initial)
    std::vector<double> Vdot;   // analytic Vdot at each step start
    double max_increment = 0.0; // largest positive V difference observed
    double terminal_consensus_residual = 0.0;   // ||L x||
    double terminal_stationarity_residual = 0.0; // ||grad f(x) + L eta||
    bool diverged = false;
};

/// Stability heuristic for the explicit Euler step.
inline double flow_h_max(const ConsensusProblem& cp) {
    return 1.0 / (cp.max_ell() + 2.0 * cp.lmax_L());
}

/// Analytic derivative of V(x,eta) = (1/2)||x - x*||^2 + (1/2)||eta - eta*||^2
/// along the flow: -(x - x*)^T (grad f(x) - grad f(x*)) - (x - x*)^T L (x - x*).
/// Nonpositive for convex f by gradient monotonicity.
inline double lyapunov_dot(const ConsensusProblem& cp, const MatrixXd& x,
                           const MatrixXd& x_star) {
    MatrixXd dx = x - x_star;
    MatrixXd dg = cp.grad(x) - cp.grad(x_star);
    return -(dx.array() * dg.array()).sum() -
           (dx.array() * (cp.L * dx).array()).sum();
}

inline double lyapunov_value(const MatrixXd& x, const MatrixXd& eta,
                             const MatrixXd& x_star, const MatrixXd& eta_star) {
    return 0.5 * (x - x_star).squaredNorm() + 0.5 * (eta - eta_star).squaredNorm();
}

/// Explicit Euler integration of the flow with Lyapunov/LaSalle monitoring
/// against the harness-provided KKT pair (x*, eta*).
inline std::pair<FlowState, LyapunovReport> euler_flow(
    const ConsensusProblem& cp, const FlowState& init, long steps,
    const MatrixXd& x_star, const MatrixXd& eta_star) {
    require(init.h > 0.0, "euler_flow: h must be positive");
    require(init.h <= flow_h_max(cp) * (1.0 + 1e-12),
            "euler_flow: h exceeds the stability bound h_max");
    FlowState fs = init;
    LyapunovReport rep;
    rep.V.push_back(lyapunov_value(fs.x, fs.eta, x_star, eta_star));
    rep.Vdot.push_back(lyapunov_dot(cp, fs.x, x_star));
    for (long i = 0; i < steps; ++i) {
        MatrixXd xdot = -cp.grad(fs.x) - cp.L * fs.eta - cp.L * fs.x;
        MatrixXd etadot = cp.L * fs.x;
        fs.x += fs.h * xdot;
        fs.eta += fs.h * etadot;
        fs.t += fs.h;
        if (!fs.x.allFinite() || fs.x.norm() > 1e12) {
            rep.diverged = true;
            break;
        }
        double v = lyapunov_value(fs.x, fs.eta, x_star, eta_star);
        rep.max_increment = std::max(rep.max_increment, v - rep.V.back());
        rep.V.push_back(v);
        rep.Vdot.push_back(lyapunov_dot(cp, fs.x, x_star));
    }
    rep.terminal_consensus_residual = (cp.L * fs.x).norm();
    rep.terminal_stationarity_residual = (cp.grad(fs.x) + cp.L * fs.eta).norm();
    return {fs, rep};
}

/// The flow seen as a PI controller acting on the fictitious plant
/// xdot = -grad f(x) + u, y = L x: with error e = -y the actuator is
/// u = e + L \int e = -L x - L eta. Substituting reproduces the flow
/// right-hand side exactly.
inline MatrixXd pi_controller_view(const ConsensusProblem& cp, const MatrixXd& x,
                                   const MatrixXd& eta) {
    return -(cp.L * x) - cp.L * eta;
}

}  // namespace pdopt
