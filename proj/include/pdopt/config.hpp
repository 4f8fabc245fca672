#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "pdopt/common.hpp"
#include "pdopt/graph.hpp"
#include "pdopt/oracle.hpp"

namespace pdopt {

using json = nlohmann::json;

namespace detail {

inline VectorXd parse_vector(const json& j) {
    require(j.is_array(), "config: expected a numeric array");
    VectorXd v(j.size());
    for (size_t i = 0; i < j.size(); ++i) v(i) = j[i].get<double>();
    return v;
}

inline MatrixXd parse_matrix(const json& j) {
    require(j.is_array() && !j.empty() && j[0].is_array(),
            "config: expected an array of rows");
    MatrixXd m(j.size(), j[0].size());
    for (size_t r = 0; r < j.size(); ++r) {
        require(j[r].size() == j[0].size(), "config: ragged matrix rows");
        for (size_t c = 0; c < j[r].size(); ++c) m(r, c) = j[r][c].get<double>();
    }
    return m;
}

/// Load a logistic dataset: CSV rows of feature values followed by a
/// label in {-1, +1}.
inline std::pair<MatrixXd, VectorXd> load_logistic_csv(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "config: cannot open data_file " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> vals;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
        require(vals.size() >= 2, "config: data rows need features and a label");
        require(!rows.empty() ? vals.size() == rows[0].size() : true,
                "config: ragged data rows");
        rows.push_back(std::move(vals));
    }
    require(!rows.empty(), "config: empty data_file " + path);
    const int n = static_cast<int>(rows.size());
    const int d = static_cast<int>(rows[0].size()) - 1;
    MatrixXd X(n, d);
    VectorXd y(n);
    for (int r = 0; r < n; ++r) {
        for (int c = 0; c < d; ++c) X(r, c) = rows[r][c];
        y(r) = rows[r][d];
        require(y(r) == 1.0 || y(r) == -1.0, "config: labels must be -1 or +1");
    }
    return {X, y};
}

}  // namespace detail

/// Build an oracle from its config spec:
///   {"kind": "quadratic", "Q": [[...]], "q": [...]}
///   {"kind": "linear", "c": [...]}
///   {"kind": "logistic", "data_file": "path.csv", "l2": real}
///   {"kind": "plq", "a": [...], "b": [...], "c": [...]}
inline FunctionOracle parse_oracle(const json& j) {
    require(j.is_object() && j.contains("kind"), "config: oracle needs a kind");
    std::string kind = j.at("kind").get<std::string>();
    if (kind == "quadratic") {
        return FunctionOracle::quadratic(detail::parse_matrix(j.at("Q")),
                                         detail::parse_vector(j.at("q")));
    }
    if (kind == "linear") {
        return FunctionOracle::linear(detail::parse_vector(j.at("c")));
    }
    if (kind == "logistic") {
        auto [X, y] = detail::load_logistic_csv(j.at("data_file").get<std::string>());
        return FunctionOracle::logistic(X, y, j.value("l2", 0.0));
    }
    if (kind == "plq") {
        return FunctionOracle::piecewise_linear_quadratic(
            detail::parse_vector(j.at("a")), detail::parse_vector(j.at("b")),
            detail::parse_vector(j.at("c")));
    }
    throw std::invalid_argument("config: unknown oracle kind '" + kind + "'");
}

/// Build a topology from either an explicit edge list
///   {"n": int, "edges": [[i,j],...]}
/// or a named generator
///   {"generator": "path"|"ring"|"star"|"complete"|"erdos_renyi",
///    "n": int, "p": real, "seed": int}.
inline Topology parse_topology(const json& j) {
    require(j.is_object(), "config: topology must be an object");
    if (j.contains("generator")) {
        std::string g = j.at("generator").get<std::string>();
        int n = j.at("n").get<int>();
        if (g == "path") return path_topology(n);
        if (g == "ring") return ring_topology(n);
        if (g == "star") return star_topology(n);
        if (g == "complete") return complete_topology(n);
        if (g == "erdos_renyi")
            return erdos_renyi_topology(n, j.at("p").get<double>(),
                                        j.value("seed", 0ull));
        throw std::invalid_argument("config: unknown topology generator '" + g + "'");
    }
    require(j.contains("n") && j.contains("edges"),
            "config: topology needs n and edges (or a generator)");
    std::vector<std::pair<int, int>> edges;
    for (const auto& e : j.at("edges")) {
        require(e.is_array() && e.size() == 2, "config: edge must be [i, j]");
        edges.emplace_back(e[0].get<int>(), e[1].get<int>());
    }
    return build_topology(j.at("n").get<int>(), edges);
}

inline json load_config_file(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "config: cannot open " + path);
    return json::parse(in);
}

/// Human-readable schema for the experiment configuration document, printed
/// by `pdtool schema`.
inline std::string config_schema() {
    return R"SCHEMA({
  "$comment": "pdtool experiment configuration. Either a single experiment object or {\"experiments\": [<experiment>, ...]}.",
  "experiment": {
    "name": "string (output file stem; required inside an experiments array)",
    "kind": "saddle | consensus | dynamics | federated | energy | check",
    "seed": "integer (optional; overridable by --seed)",
    "saddle": {
      "method": "alm | ahu | admm | jacobi | pdmm | inexact_alm",
      "rho": "real > 0",
      "alpha": "real > 0 (ahu only; default 1/(ell + rho lmax(A^T A)))",
      "iters": "integer >= 0",
      "blocks": [{"oracle": "<oracle spec>", "A": "[[...]] (m x n_i)"}],
      "pdmm": {"K": "int", "tau": "real > 0", "nu": "real in [0,1)", "eta": "real >= 0"},
      "inexact": {"method": "gradient | nesterov", "schedule": "fixed | polynomial",
                   "eps_in": "real", "c": "real", "p": "real", "max_inner": "int"}
    },
    "consensus": {
      "method": "distributed_alm | extra | extra_pd | tracking | tracking_pd",
      "mode": "plain | extra_equivalence (optional)",
      "oracles": ["<oracle spec> per agent"],
      "topology": "<topology spec>",
      "rho": "real > 0", "alpha": "real > 0 (optional)", "iters": "integer >= 0",
      "inexact": "as in saddle (distributed_alm only)"
    },
    "dynamics": {
      "oracles": ["<oracle spec> per agent"],
      "topology": "<topology spec>",
      "h": "real > 0 (default h_max)", "steps": "integer >= 0"
    },
    "federated": {
      "algorithm": "pdmm | fedprox (default pdmm)",
      "N": "int", "M": "int in [1, N+1]", "T": "rounds",
      "rho": "real > 0", "eta0": "real >= 0", "eta_i": "real >= 0 or array length N",
      "variant": "convex | nonconvex",
      "local_solver": {"mode": "exact | gradient_steps", "steps": "int"},
      "devices": [{"weight": "real (optional, default 1/N)", "oracle": "<oracle spec>"}]
    },
    "energy": {
      "mode": "dual_decomposition | inexact_alm",
      "peers": [{"consumption": "real >= 0", "cost": "<oracle spec, dim 1>"}],
      "arcs": [{"from": "int", "to": "int", "gamma": "<oracle spec, dim 1>"}],
      "rho": "real > 0", "alpha0": "real > 0", "schedule": "constant | inverse_sqrt",
      "eps_out": "real > 0", "max_outer": "int", "max_inner": "int (R)",
      "trade_cap": "real > 0 (optional)"
    },
    "check": {"filter": "module name (optional)"}
  },
  "oracle spec": {
    "quadratic": {"kind": "quadratic", "Q": "[[...]]", "q": "[...]"},
    "linear": {"kind": "linear", "c": "[...]"},
    "logistic": {"kind": "logistic", "data_file": "csv: features...,label in {-1,+1}", "l2": "real"},
    "plq": {"kind": "plq", "a": "[...]", "b": "[...]", "c": "[...]"}
  },
  "topology spec": {
    "explicit": {"n": "int", "edges": "[[i,j],...]"},
    "generated": {"generator": "path | ring | star | complete | erdos_renyi", "n": "int", "p": "real (erdos_renyi)", "seed": "int (erdos_renyi)"}
  },
  "environment": {"PDTOOL_THREADS": "max worker threads for the experiments array"},
  "exit codes": {"0": "ok", "1": "error", "2": "completed with flagged warnings"}
}
)SCHEMA";
}

}  // namespace pdopt
