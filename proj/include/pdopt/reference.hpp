#pragma once

#include <vector>

#include "pdopt/common.hpp"
#include "pdopt/consensus.hpp"
#include "pdopt/fedsim.hpp"
#include "pdopt/oracle.hpp"
#include "pdopt/saddle.hpp"

namespace pdopt {

/// Ground-truth primal-dual pair for a quadratic linearly constrained
/// problem, from the dense KKT system
///   [Q A^T; A 0] [x*; lambda*] = [-q; 0].
/// The dual is taken as the minimum-norm solution so it is well defined
/// even when A has dependent rows.
struct ReferenceSolution {
    VectorXd x;
    VectorXd lambda;
    double objective = 0.0;
};

inline ReferenceSolution reference_solve(const ProblemSpec& p) {
    require(p.all_quadratic_or_linear(),
            "reference_solve: needs quadratic or linear blocks");
    const int n = p.n(), m = p.m();
    MatrixXd Q = p.assembled_Q();
    MatrixXd A = p.assembled_A();
    VectorXd q = p.assembled_linear_term();
    MatrixXd K(n + m, n + m);
    K.topLeftCorner(n, n) = Q;
    K.topRightCorner(n, m) = A.transpose();
    K.bottomLeftCorner(m, n) = A;
    K.bottomRightCorner(m, m).setZero();
    VectorXd b(n + m);
    b.head(n) = -q;
    b.tail(m).setZero();
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(K);
    require(cod.rank() >= n, "reference_solve: KKT system is singular in x");
    VectorXd sol = cod.solve(b);
    ReferenceSolution ref;
    ref.x = sol.head(n);
    ref.lambda = sol.tail(m);
    // verify stationarity and feasibility actually hold
    double station = (Q * ref.x + q + A.transpose() * ref.lambda).norm();
    double feas = (A * ref.x).norm();
    require(station <= 1e-8 * (1.0 + ref.x.norm()) &&
                feas <= 1e-8 * (1.0 + ref.x.norm()),
            "reference_solve: KKT residual check failed");
    ref.objective = p.objective(ref.x);
    return ref;
}

/// Consensus ground truth: the common minimizer of sum_i f_i plus the dual
/// certificate eta* with L eta* = -grad f(x*) (min-norm via pseudoinverse;
/// exists because the gradient sum vanishes at the optimum).
struct ConsensusReference {
    VectorXd x_star;    // shared minimizer, length d
    MatrixXd x;         // N x d matrix with identical rows
    MatrixXd eta;       // dual certificate, N x d
    double objective = 0.0;
};

inline ConsensusReference consensus_reference(const ConsensusProblem& cp) {
    const int N = cp.num_agents(), d = cp.d;
    // assemble sum_i f_i as a single quadratic when possible, else Newton
    bool quad = true;
    for (const auto& o : cp.oracles)
        if (o.kind() != FunctionOracle::Kind::Quadratic) quad = false;
    VectorXd x_star;
    if (quad) {
        MatrixXd Q = MatrixXd::Zero(d, d);
        VectorXd q = VectorXd::Zero(d);
        for (const auto& o : cp.oracles) {
            Q += o.Q();
            q += o.linear_term();
        }
        Eigen::LDLT<MatrixXd> ldlt(Q);
        require(ldlt.info() == Eigen::Success,
                "consensus_reference: sum of quadratics not solvable");
        x_star = ldlt.solve(-q);
    } else {
        // damped gradient descent on the aggregate (smooth oracles only)
        double ell = 0.0;
        for (const auto& o : cp.oracles) {
            require(o.smooth(), "consensus_reference: needs smooth oracles");
            ell += o.ell();
        }
        x_star = VectorXd::Zero(d);
        const double step = 1.0 / ell;
        for (int it = 0; it < 200000; ++it) {
            VectorXd g = VectorXd::Zero(d);
            for (const auto& o : cp.oracles) g += o.grad(x_star);
            if (g.norm() <= 1e-13) break;
            x_star -= step * g;
        }
    }
    ConsensusReference ref;
    ref.x_star = x_star;
    ref.x = x_star.transpose().replicate(N, 1);
    MatrixXd g(N, d);
    for (int i = 0; i < N; ++i)
        g.row(i) = cp.oracles[i].grad(x_star).transpose();
    // min-norm eta* with L eta* = -g (columnwise)
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(cp.L);
    ref.eta = cod.solve(-g);
    ref.objective = cp.objective(ref.x);
    return ref;
}

/// Federated ground truth: minimizer of sum_i p_i F_i.
struct FederatedReference {
    VectorXd z_star;
    double objective = 0.0;
};

inline FederatedReference federated_reference(const FederatedInstance& inst) {
    bool quad = true;
    for (const auto& o : inst.F)
        if (o.kind() != FunctionOracle::Kind::Quadratic &&
            o.kind() != FunctionOracle::Kind::Linear)
            quad = false;
    FederatedReference ref;
    if (quad) {
        MatrixXd Q = MatrixXd::Zero(inst.d, inst.d);
        VectorXd q = VectorXd::Zero(inst.d);
        for (int i = 0; i < inst.N; ++i) {
            if (inst.F[i].kind() == FunctionOracle::Kind::Quadratic)
                Q += inst.p(i) * inst.F[i].Q();
            q += inst.p(i) * inst.F[i].linear_term();
        }
        Eigen::LDLT<MatrixXd> ldlt(Q);
        require(ldlt.info() == Eigen::Success && (Q.diagonal().array() > 0).any(),
                "federated_reference: aggregate not strictly convex");
        ref.z_star = ldlt.solve(-q);
    } else {
        double ell = 0.0;
        for (int i = 0; i < inst.N; ++i) {
            require(inst.F[i].smooth(), "federated_reference: needs smooth oracles");
            ell += inst.p(i) * inst.F[i].ell();
        }
        ref.z_star = VectorXd::Zero(inst.d);
        const double step = 1.0 / ell;
        for (int it = 0; it < 200000; ++it) {
            VectorXd g = VectorXd::Zero(inst.d);
            for (int i = 0; i < inst.N; ++i)
                g += inst.p(i) * inst.F[i].grad(ref.z_star);
            if (g.norm() <= 1e-13) break;
            ref.z_star -= step * g;
        }
    }
    ref.objective = inst.global_objective(ref.z_star);
    return ref;
}

}  // namespace pdopt
