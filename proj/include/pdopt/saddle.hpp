#pragma once

#include <cmath>
#include <optional>
#include <random>
#include <vector>

#include "pdopt/common.hpp"
#include "pdopt/oracle.hpp"

namespace pdopt {

/// Linearly constrained separable problem
///   minimize  sum_i f_i(x_i)   subject to  sum_i A_i x_i = 0,
/// with penalty rho for the augmented Lagrangian.
struct ProblemSpec {
    struct Block {
        FunctionOracle f;
        MatrixXd A;  // m x n_i
    };

    std::vector<Block> blocks;
    double rho = 1.0;

    ProblemSpec(std::vector<Block> b, double rho_) : blocks(std::move(b)), rho(rho_) {
        require(!blocks.empty(), "problem: needs at least one block");
        require(rho >= 0.0, "problem: rho must be nonnegative");
        m_ = static_cast<int>(blocks[0].A.rows());
        n_ = 0;
        for (const auto& bl : blocks) {
            require(bl.A.rows() == m_, "problem: constraint row counts differ");
            require(bl.A.cols() == bl.f.dim(), "problem: A_i / f_i dimension mismatch");
            offsets_.push_back(n_);
            n_ += bl.f.dim();
        }
    }

    int num_blocks() const { return static_cast<int>(blocks.size()); }
    int m() const { return m_; }
    int n() const { return n_; }
    int offset(int i) const { return offsets_[i]; }

    Eigen::VectorBlock<const VectorXd> block_of(const VectorXd& x, int i) const {
        return x.segment(offsets_[i], blocks[i].f.dim());
    }

    MatrixXd assembled_A() const {
        MatrixXd A(m_, n_);
        for (int i = 0; i < num_blocks(); ++i)
            A.middleCols(offsets_[i], blocks[i].f.dim()) = blocks[i].A;
        return A;
    }

    VectorXd constraint(const VectorXd& x) const {
        require(x.size() == n_, "problem: primal dimension mismatch");
        VectorXd r = VectorXd::Zero(m_);
        for (int i = 0; i < num_blocks(); ++i)
            r += blocks[i].A * block_of(x, i);
        return r;
    }

    double objective(const VectorXd& x) const {
        double s = 0.0;
        for (int i = 0; i < num_blocks(); ++i)
            s += blocks[i].f.eval(block_of(x, i));
        return s;
    }

    VectorXd objective_grad(const VectorXd& x) const {
        VectorXd g(n_);
        for (int i = 0; i < num_blocks(); ++i)
            g.segment(offsets_[i], blocks[i].f.dim()) =
                blocks[i].f.grad(block_of(x, i));
        return g;
    }

    bool all_quadratic_or_linear() const {
        for (const auto& b : blocks)
            if (b.f.kind() != FunctionOracle::Kind::Quadratic &&
                b.f.kind() != FunctionOracle::Kind::Linear)
                return false;
        return true;
    }

    /// Block-diagonal Hessian of the separable objective (linear blocks
    /// contribute zeros).
    MatrixXd assembled_Q() const {
        MatrixXd Q = MatrixXd::Zero(n_, n_);
        for (int i = 0; i < num_blocks(); ++i)
            if (blocks[i].f.kind() == FunctionOracle::Kind::Quadratic)
                Q.block(offsets_[i], offsets_[i], blocks[i].f.dim(),
                        blocks[i].f.dim()) = blocks[i].f.Q();
        return Q;
    }

    VectorXd assembled_linear_term() const {
        VectorXd q(n_);
        for (int i = 0; i < num_blocks(); ++i)
            q.segment(offsets_[i], blocks[i].f.dim()) = blocks[i].f.linear_term();
        return q;
    }

    double max_ell() const {
        double l = 0.0;
        for (const auto& b : blocks) l = std::max(l, b.f.ell());
        return l;
    }

 private:
    int m_ = 0, n_ = 0;
    std::vector<int> offsets_;
};

struct SolverState {
    VectorXd x;
    VectorXd lambda;
    std::optional<VectorXd> lambda_hat;  // PDMM forwarded dual
    long k = 0;
};

inline SolverState make_state(const ProblemSpec& p) {
    SolverState s;
    s.x = VectorXd::Zero(p.n());
    s.lambda = VectorXd::Zero(p.m());
    return s;
}

/// L(x, lambda) = f(x) + lambda^T A x + (rho/2) ||A x||^2
inline double aug_lagrangian(const ProblemSpec& p, const VectorXd& x,
                             const VectorXd& lambda) {
    require(lambda.size() == p.m(), "aug_lagrangian: dual dimension mismatch");
    VectorXd ax = p.constraint(x);
    return p.objective(x) + lambda.dot(ax) + 0.5 * p.rho * ax.squaredNorm();
}

inline VectorXd aug_lagrangian_grad_x(const ProblemSpec& p, const VectorXd& x,
                                      const VectorXd& lambda) {
    VectorXd ax = p.constraint(x);
    VectorXd g = p.objective_grad(x);
    for (int i = 0; i < p.num_blocks(); ++i)
        g.segment(p.offset(i), p.blocks[i].f.dim()) +=
            p.blocks[i].A.transpose() * (lambda + p.rho * ax);
    return g;
}

/// ||A x|| + ||grad f(x) + A^T lambda||
inline double kkt_residual(const ProblemSpec& p, const VectorXd& x,
                           const VectorXd& lambda) {
    VectorXd g = p.objective_grad(x);
    for (int i = 0; i < p.num_blocks(); ++i)
        g.segment(p.offset(i), p.blocks[i].f.dim()) +=
            p.blocks[i].A.transpose() * lambda;
    return p.constraint(x).norm() + g.norm();
}

namespace detail {

/// Joint exact minimizer of L(., lambda): (Q + rho A^T A) x = -(q + A^T lambda).
inline VectorXd exact_al_argmin(const ProblemSpec& p, const VectorXd& lambda) {
    if (!p.all_quadratic_or_linear())
        throw CapabilityError(
            "alm_step: exact argmin needs quadratic/linear blocks; use "
            "inexact_alm_step");
    MatrixXd A = p.assembled_A();
    MatrixXd M = p.assembled_Q() + p.rho * A.transpose() * A;
    Eigen::LDLT<MatrixXd> f(M);
    if (f.info() != Eigen::Success || !f.isPositive())
        throw CapabilityError("alm_step: augmented Lagrangian not strictly convex");
    return f.solve(-(p.assembled_linear_term() + A.transpose() * lambda));
}

}  // namespace detail

/// Exact ALM step: primal argmin of the AL, then dual ascent with step rho.
inline SolverState alm_step(const ProblemSpec& p, const SolverState& s) {
    SolverState out = s;
    out.x = detail::exact_al_argmin(p, s.lambda);
    out.lambda = s.lambda + p.rho * p.constraint(out.x);
    out.k = s.k + 1;
    return out;
}

/// Proximal point step on the dual: argmax_mu D(mu) - (1/(2 rho)) ||mu - lambda||^2.
/// Closed form for strictly convex quadratic blocks.
inline VectorXd prox_point_dual_step(const ProblemSpec& p, const VectorXd& lambda) {
    require(lambda.size() == p.m(), "prox_point_dual_step: dual dimension mismatch");
    for (const auto& b : p.blocks)
        if (b.f.kind() != FunctionOracle::Kind::Quadratic || b.f.mu() <= 0.0)
            throw CapabilityError(
                "prox_point_dual_step: needs strictly convex quadratic blocks");
    MatrixXd A = p.assembled_A();
    MatrixXd Qinv = p.assembled_Q().ldlt().solve(MatrixXd::Identity(p.n(), p.n()));
    MatrixXd M = A * Qinv * A.transpose() +
                 MatrixXd::Identity(p.m(), p.m()) / p.rho;
    VectorXd rhs = lambda / p.rho - A * Qinv * p.assembled_linear_term();
    return M.ldlt().solve(rhs);
}

/// D(lambda) = inf_x f(x) + lambda^T A x (strictly convex quadratic blocks).
inline double dual_function_value(const ProblemSpec& p, const VectorXd& lambda) {
    require(lambda.size() == p.m(), "dual_function_value: dual dimension mismatch");
    double v = 0.0;
    for (const auto& b : p.blocks) {
        if (b.f.kind() != FunctionOracle::Kind::Quadratic || b.f.mu() <= 0.0)
            throw CapabilityError(
                "dual_function_value: needs strictly convex quadratic blocks");
        VectorXd xi = b.f.argmin_shifted(b.A.transpose() * lambda,
                                         MatrixXd::Zero(b.f.dim(), b.f.dim()));
        v += b.f.eval(xi) + lambda.dot(b.A * xi);
    }
    return v;
}

/// Arrow-Hurwitz-Uzawa step: one primal gradient step on the AL, then the
/// usual dual ascent.
inline SolverState ahu_step(const ProblemSpec& p, const SolverState& s, double alpha) {
    require(alpha >= 0.0, "ahu_step: alpha must be nonnegative");
    for (const auto& b : p.blocks)
        if (!b.f.smooth())
            throw CapabilityError("ahu_step: all blocks must be smooth");
    SolverState out = s;
    out.x = s.x - alpha * aug_lagrangian_grad_x(p, s.x, s.lambda);
    out.lambda = s.lambda + p.rho * p.constraint(out.x);
    out.k = s.k + 1;
    return out;
}

/// Descent-safe default AHU step size 1/(ell + rho lambda_max(A^T A)).
inline double ahu_default_alpha(const ProblemSpec& p) {
    MatrixXd A = p.assembled_A();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(A.transpose() * A);
    return 1.0 / (p.max_ell() + p.rho * es.eigenvalues().maxCoeff());
}

/// Two-block Gauss-Seidel sweep on the AL, then dual ascent (ADMM).
inline SolverState admm_step(const ProblemSpec& p, const SolverState& s) {
    require(p.num_blocks() == 2, "admm_step: exactly 2 blocks required");
    const auto& b1 = p.blocks[0];
    const auto& b2 = p.blocks[1];
    VectorXd x2 = p.block_of(s.x, 1);
    VectorXd a1 = b1.A.transpose() * (s.lambda + p.rho * (b2.A * x2));
    VectorXd x1n = b1.f.argmin_shifted(a1, p.rho * b1.A.transpose() * b1.A);
    VectorXd a2 = b2.A.transpose() * (s.lambda + p.rho * (b1.A * x1n));
    VectorXd x2n = b2.f.argmin_shifted(a2, p.rho * b2.A.transpose() * b2.A);
    SolverState out = s;
    out.x.segment(0, b1.f.dim()) = x1n;
    out.x.segment(p.offset(1), b2.f.dim()) = x2n;
    out.lambda = s.lambda + p.rho * (b1.A * x1n + b2.A * x2n);
    out.k = s.k + 1;
    return out;
}

/// All blocks minimized in parallel against the frozen round-start iterate,
/// then dual ascent. May diverge on coupled blocks.
inline SolverState jacobi_step(const ProblemSpec& p, const SolverState& s) {
    VectorXd ax = p.constraint(s.x);
    SolverState out = s;
    for (int i = 0; i < p.num_blocks(); ++i) {
        const auto& b = p.blocks[i];
        VectorXd others = ax - b.A * p.block_of(s.x, i);
        VectorXd a = b.A.transpose() * (s.lambda + p.rho * others);
        out.x.segment(p.offset(i), b.f.dim()) =
            b.f.argmin_shifted(a, p.rho * b.A.transpose() * b.A);
    }
    out.lambda = s.lambda + p.rho * p.constraint(out.x);
    out.k = s.k + 1;
    return out;
}

/// Spectral radius of the linear Jacobi iteration map on (x, lambda) for
/// quadratic instances; > 1 witnesses divergence.
inline double jacobi_spectral_radius(const ProblemSpec& p) {
    require(p.all_quadratic_or_linear(), "jacobi_spectral_radius: quadratic instances only");
    const int n = p.n(), m = p.m();
    MatrixXd T(n + m, n + m);
    VectorXd base = VectorXd::Zero(n + m);
    SolverState s0 = make_state(p);
    SolverState b0 = jacobi_step(p, s0);
    base << b0.x, b0.lambda;
    for (int j = 0; j < n + m; ++j) {
        SolverState s = make_state(p);
        VectorXd e = VectorXd::Zero(n + m);
        e(j) = 1.0;
        s.x = e.head(n);
        s.lambda = e.tail(m);
        SolverState r = jacobi_step(p, s);
        VectorXd img(n + m);
        img << r.x, r.lambda;
        T.col(j) = img - base;  // affine map; subtract the constant part
    }
    return T.eigenvalues().cwiseAbs().maxCoeff();
}

/// Parallel direction method of multipliers configuration.
struct PdmmConfig {
    int K = 1;                     // blocks updated per iteration
    VectorXd theta;                // diag of Theta (length m), entries > 0
    VectorXd nu;                   // diag of Theta' (length m), entries in [0,1)
    VectorXd eta;                  // Bregman weights, length N, entries >= 0
    std::vector<MatrixXd> bregman; // optional quadratic generators, one per block
    std::uint64_t seed = 0;

    static PdmmConfig uniform(const ProblemSpec& p, int K, double tau,
                              double nu_ = 0.0, double eta_ = 0.0,
                              std::uint64_t seed = 0) {
        PdmmConfig c;
        c.K = K;
        c.theta = VectorXd::Constant(p.m(), tau);
        c.nu = VectorXd::Constant(p.m(), nu_);
        c.eta = VectorXd::Constant(p.num_blocks(), eta_);
        c.seed = seed;
        return c;
    }

    void validate(const ProblemSpec& p) const {
        require(K >= 1 && K <= p.num_blocks(), "pdmm: K must lie in [1, N]");
        require(theta.size() == p.m() && theta.minCoeff() > 0.0,
                "pdmm: theta entries must be positive");
        require(nu.size() == p.m() && nu.minCoeff() >= 0.0 && nu.maxCoeff() < 1.0,
                "pdmm: nu entries must lie in [0,1)");
        require(eta.size() == p.num_blocks() && eta.minCoeff() >= 0.0,
                "pdmm: eta weights must be nonnegative");
        if (!bregman.empty()) {
            require(static_cast<int>(bregman.size()) == p.num_blocks(),
                    "pdmm: one Bregman generator per block");
            for (int i = 0; i < p.num_blocks(); ++i) {
                Eigen::SelfAdjointEigenSolver<MatrixXd> es(bregman[i]);
                require(es.eigenvalues().minCoeff() >= -1e-12,
                        "pdmm: Bregman generator must be PSD");
            }
        }
    }
};

/// Draw K distinct indices from {0..N-1} uniformly (partial Fisher-Yates).
inline std::vector<int> sample_without_replacement(int N, int K,
                                                   std::mt19937_64& rng) {
    std::vector<int> idx(N);
    for (int i = 0; i < N; ++i) idx[i] = i;
    for (int i = 0; i < K; ++i) {
        std::uniform_int_distribution<int> u(i, N - 1);
        std::swap(idx[i], idx[u(rng)]);
    }
    idx.resize(K);
    std::sort(idx.begin(), idx.end());
    return idx;
}

/// One PDMM iteration: random block subset minimizes the AL at the forwarded
/// dual plus a Bregman term; dual moves forward by Theta rho A x and the
/// forwarded dual takes the backward step with Theta'.
inline SolverState pdmm_step(const ProblemSpec& p, const SolverState& s,
                             const PdmmConfig& c, std::mt19937_64& rng) {
    c.validate(p);
    VectorXd lhat = s.lambda_hat.value_or(s.lambda);
    std::vector<int> picked = sample_without_replacement(p.num_blocks(), c.K, rng);
    VectorXd ax = p.constraint(s.x);
    SolverState out = s;
    for (int i : picked) {
        const auto& b = p.blocks[i];
        const int d = b.f.dim();
        VectorXd xi = p.block_of(s.x, i);
        VectorXd others = ax - b.A * xi;
        VectorXd a = b.A.transpose() * (lhat + p.rho * others);
        MatrixXd H = p.rho * b.A.transpose() * b.A;
        if (c.eta(i) > 0.0) {
            // Euclidean generator B(u,v) = ||u-v||^2 unless a quadratic
            // generator (1/2)(u-v)^T M (u-v) is supplied.
            if (c.bregman.empty()) {
                H += 2.0 * c.eta(i) * MatrixXd::Identity(d, d);
                a -= 2.0 * c.eta(i) * xi;
            } else {
                H += c.eta(i) * c.bregman[i];
                a -= c.eta(i) * (c.bregman[i] * xi);
            }
        }
        out.x.segment(p.offset(i), d) = b.f.argmin_shifted(a, H);
    }
    VectorXd axn = p.constraint(out.x);
    out.lambda = s.lambda + c.theta.cwiseProduct(p.rho * axn);
    out.lambda_hat = out.lambda - c.nu.cwiseProduct(p.rho * axn);
    out.k = s.k + 1;
    return out;
}

/// Inner-solve policy for inexact ALM.
struct InexactConfig {
    enum class Method { Gradient, Nesterov };
    enum class Schedule { Fixed, Polynomial };

    Method method = Method::Gradient;
    Schedule schedule = Schedule::Fixed;
    double eps_in = 1e-8;   // fixed tolerance
    double poly_c = 1.0;    // polynomial schedule eps_k = c/(k+1)^p
    double poly_p = 2.0;
    int max_inner = 1000;

    double tolerance_at(long k) const {
        if (schedule == Schedule::Fixed) return eps_in;
        return poly_c / std::pow(static_cast<double>(k) + 1.0, poly_p);
    }
};

struct InexactStepResult {
    SolverState state;
    int inner_iters = 0;
    bool tolerance_met = true;
};

/// ALM step with the primal subproblem solved by an inner gradient or
/// Nesterov loop to tolerance eps_in^(k); the dual step is unchanged.
inline InexactStepResult inexact_alm_step(const ProblemSpec& p,
                                          const SolverState& s,
                                          const InexactConfig& c) {
    for (const auto& b : p.blocks)
        if (!b.f.smooth())
            throw CapabilityError("inexact_alm_step: smooth blocks required");
    MatrixXd A = p.assembled_A();
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(A.transpose() * A);
    double step = 1.0 / (p.max_ell() + p.rho * es.eigenvalues().maxCoeff());
    double tol = c.tolerance_at(s.k);

    VectorXd x = s.x;
    VectorXd y = x;       // Nesterov lookahead
    double t_mom = 1.0;
    InexactStepResult res;
    res.tolerance_met = false;
    int r = 0;
    for (; r < c.max_inner; ++r) {
        VectorXd g = aug_lagrangian_grad_x(p, x, s.lambda);
        if (g.norm() <= tol) {
            res.tolerance_met = true;
            break;
        }
        if (c.method == InexactConfig::Method::Gradient) {
            x -= step * g;
        } else {
            VectorXd gy = aug_lagrangian_grad_x(p, y, s.lambda);
            VectorXd xn = y - step * gy;
            double tn = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
            y = xn + ((t_mom - 1.0) / tn) * (xn - x);
            x = xn;
            t_mom = tn;
        }
    }
    if (!res.tolerance_met &&
        aug_lagrangian_grad_x(p, x, s.lambda).norm() <= tol)
        res.tolerance_met = true;
    res.inner_iters = r;
    res.state = s;
    res.state.x = x;
    res.state.lambda = s.lambda + p.rho * p.constraint(x);
    res.state.k = s.k + 1;
    return res;
}

}  // namespace pdopt
