#pragma once

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "pdopt/common.hpp"

namespace pdopt {

/// Undirected communication/trading topology. Edges are stored
/// normalized (i < j); neighbor lists are kept sorted.
struct Topology {
    int n_nodes = 0;
    std::vector<std::pair<int, int>> edges;
    std::vector<std::vector<int>> neighbors;
    bool connected = false;

    int degree(int i) const { return static_cast<int>(neighbors[i].size()); }
};

inline Topology build_topology(int n, const std::vector<std::pair<int, int>>& edges) {
    require(n >= 1, "topology: n_nodes must be positive");
    Topology t;
    t.n_nodes = n;
    t.neighbors.resize(n);
    std::set<std::pair<int, int>> seen;
    for (auto [a, b] : edges) {
        require(a >= 0 && a < n && b >= 0 && b < n,
                "topology: node index out of range");
        require(a != b, "topology: self-loop rejected");
        auto e = std::minmax(a, b);
        require(seen.insert(e).second, "topology: duplicate edge");
        t.edges.push_back(e);
        t.neighbors[a].push_back(b);
        t.neighbors[b].push_back(a);
    }
    std::sort(t.edges.begin(), t.edges.end());
    for (auto& nb : t.neighbors) std::sort(nb.begin(), nb.end());

    // connectivity by breadth-first search from node 0
    std::vector<char> vis(n, 0);
    std::queue<int> q;
    q.push(0);
    vis[0] = 1;
    int count = 1;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v : t.neighbors[u])
            if (!vis[v]) {
                vis[v] = 1;
                ++count;
                q.push(v);
            }
    }
    t.connected = (count == n);
    return t;
}

inline Topology path_topology(int n) {
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i + 1 < n; ++i) e.emplace_back(i, i + 1);
    return build_topology(n, e);
}

inline Topology ring_topology(int n) {
    require(n >= 3, "ring: needs at least 3 nodes");
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i < n; ++i) e.emplace_back(i, (i + 1) % n);
    return build_topology(n, e);
}

inline Topology star_topology(int n) {
    std::vector<std::pair<int, int>> e;
    for (int i = 1; i < n; ++i) e.emplace_back(0, i);
    return build_topology(n, e);
}

inline Topology complete_topology(int n) {
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) e.emplace_back(i, j);
    return build_topology(n, e);
}

inline Topology erdos_renyi_topology(int n, double p, std::uint64_t seed) {
    require(p >= 0.0 && p <= 1.0, "erdos_renyi: p must lie in [0,1]");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::pair<int, int>> e;
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j)
            if (u(rng) < p) e.emplace_back(i, j);
    return build_topology(n, e);
}

/// Symmetric doubly stochastic mixing matrix with its Laplacian L = I - W
/// and spectral gap.
struct WeightMatrix {
    MatrixXd W;
    double gamma = 0.0;  // spectral gap, 1 - max non-principal |eigenvalue|

    MatrixXd laplacian() const {
        return MatrixXd::Identity(W.rows(), W.cols()) - W;
    }
};

/// gamma = 1 - max |lambda_i(W)| over non-principal eigenvalues.
/// Zero iff the underlying graph is disconnected.
inline double spectral_gap(const MatrixXd& W) {
    require(W.rows() == W.cols(), "spectral_gap: W must be square");
    require((W - W.transpose()).cwiseAbs().maxCoeff() <= 1e-12,
            "spectral_gap: W must be symmetric");
    const int n = static_cast<int>(W.rows());
    VectorXd ones = VectorXd::Ones(n);
    require((W * ones - ones).cwiseAbs().maxCoeff() <= 1e-10,
            "spectral_gap: W must be doubly stochastic");
    if (n == 1) return 1.0;
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(W);
    require(es.info() == Eigen::Success, "spectral_gap: eigensolve failed");
    VectorXd ev = es.eigenvalues();  // ascending; top one is the principal 1
    double m = std::abs(ev(0));
    for (int i = 1; i < n - 1; ++i) m = std::max(m, std::abs(ev(i)));
    return 1.0 - m;
}

/// Metropolis-Hastings weights: w_ij = 1/(1 + max(d_i, d_j)) on edges,
/// diagonal absorbing the remainder. Doubly stochastic on any undirected
/// graph without a global parameter.
inline WeightMatrix metropolis_weights(const Topology& t) {
    require(t.connected, "metropolis_weights: topology must be connected");
    const int n = t.n_nodes;
    MatrixXd W = MatrixXd::Zero(n, n);
    for (auto [i, j] : t.edges) {
        double w = 1.0 / (1.0 + std::max(t.degree(i), t.degree(j)));
        W(i, j) = w;
        W(j, i) = w;
    }
    for (int i = 0; i < n; ++i) W(i, i) = 1.0 - W.row(i).sum();
    WeightMatrix wm;
    wm.W = W;
    wm.gamma = spectral_gap(W);
    return wm;
}

}  // namespace pdopt
