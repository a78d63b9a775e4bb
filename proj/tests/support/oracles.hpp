// Independent oracles for the test suites. Everything here deliberately
// avoids the library's production code paths: dense stamping and Gaussian
// elimination for the sparse solver, plain DFS for cycle questions,
// memoized recursion for longest paths, closed forms for circuit responses.
#pragma once

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emtgrid/model.hpp"
#include "emtgrid/waveform.hpp"

namespace oracles {

// --- dense electrical oracle -------------------------------------------------

/// Dense conductance stamping straight from branch lists (node indices -1 for
/// ground), independent of the library's pattern machinery.
inline Eigen::MatrixXd dense_stamp(int nodes,
                                   const std::vector<std::tuple<int, int, double>>& branches) {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(nodes, nodes);
    for (const auto& [a, b, value] : branches) {
        if (a >= 0) g(a, a) += value;
        if (b >= 0) g(b, b) += value;
        if (a >= 0 && b >= 0) {
            g(a, b) -= value;
            g(b, a) -= value;
        }
    }
    return g;
}

/// Plain dense Gaussian elimination with partial pivoting.
inline Eigen::VectorXd dense_solve(Eigen::MatrixXd a, Eigen::VectorXd rhs) {
    const int n = static_cast<int>(a.rows());
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int row = col + 1; row < n; ++row) {
            if (std::abs(a(row, col)) > std::abs(a(pivot, col))) pivot = row;
        }
        if (pivot != col) {
            a.row(col).swap(a.row(pivot));
            std::swap(rhs(col), rhs(pivot));
        }
        for (int row = col + 1; row < n; ++row) {
            const double factor = a(row, col) / a(col, col);
            a.row(row).tail(n - col) -= factor * a.row(col).tail(n - col);
            rhs(row) -= factor * rhs(col);
        }
    }
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (int row = n - 1; row >= 0; --row) {
        double sum = rhs(row);
        for (int col = row + 1; col < n; ++col) sum -= a(row, col) * x(col);
        x(row) = sum / a(row, row);
    }
    return x;
}

// --- graph oracles -----------------------------------------------------------

/// Recursive three-color DFS cycle detection.
inline bool dfs_has_cycle(const std::vector<std::vector<int>>& adj) {
    const int n = static_cast<int>(adj.size());
    std::vector<int> color(static_cast<std::size_t>(n), 0);  // 0 white, 1 gray, 2 black
    struct Rec {
        const std::vector<std::vector<int>>& adj;
        std::vector<int>& color;
        bool operator()(int v) const {
            color[static_cast<std::size_t>(v)] = 1;
            for (int w : adj[static_cast<std::size_t>(v)]) {
                if (color[static_cast<std::size_t>(w)] == 1) return true;
                if (color[static_cast<std::size_t>(w)] == 0 && (*this)(w)) return true;
            }
            color[static_cast<std::size_t>(v)] = 2;
            return false;
        }
    };
    const Rec rec{adj, color};
    for (int v = 0; v < n; ++v) {
        if (color[static_cast<std::size_t>(v)] == 0 && rec(v)) return true;
    }
    return false;
}

/// Memoized recursion over predecessors: length of the longest path ending
/// at each vertex.
inline std::vector<int> longest_path_oracle(int n, const std::vector<std::pair<int, int>>& edges) {
    std::vector<std::vector<int>> pred(static_cast<std::size_t>(n));
    for (const auto& [from, to] : edges) pred[static_cast<std::size_t>(to)].push_back(from);
    std::vector<int> memo(static_cast<std::size_t>(n), -1);
    struct Rec {
        const std::vector<std::vector<int>>& pred;
        std::vector<int>& memo;
        int operator()(int v) const {
            int& slot = memo[static_cast<std::size_t>(v)];
            if (slot >= 0) return slot;
            int best = 0;
            for (int p : pred[static_cast<std::size_t>(v)]) best = std::max(best, (*this)(p) + 1);
            slot = best;
            return best;
        }
    };
    const Rec rec{pred, memo};
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int v = 0; v < n; ++v) out[static_cast<std::size_t>(v)] = rec(v);
    return out;
}

// --- closed-form responses ---------------------------------------------------

inline double rc_discharge(double v0, double r, double c, double t) {
    return v0 * std::exp(-t / (r * c));
}

inline double lag_step_response(double t, double time_constant) {
    return 1.0 - std::exp(-t / time_constant);
}

/// Series RLC driven by a voltage step (underdamped case): capacitor voltage.
inline double rlc_step_capacitor_voltage(double v0, double r, double l, double c, double t) {
    const double alpha = r / (2.0 * l);
    const double w0_sq = 1.0 / (l * c);
    const double wd = std::sqrt(w0_sq - alpha * alpha);
    return v0 * (1.0 - std::exp(-alpha * t) *
                           (std::cos(wd * t) + (alpha / wd) * std::sin(wd * t)));
}

// --- document builders -------------------------------------------------------

inline std::string rc_discharge_doc(double r, double c, double v0, double dt, double duration) {
    return std::string("{\n") +
           "  \"nodes\": [\"1\"],\n" +
           "  \"components\": [\n" +
           "    {\"id\": \"r1\", \"kind\": \"resistor\", \"params\": {\"resistance\": " +
           emtgrid::format_g17(r) + "}, \"terminals\": [\"1\", \"0\"]},\n" +
           "    {\"id\": \"c1\", \"kind\": \"capacitor\", \"params\": {\"capacitance\": " +
           emtgrid::format_g17(c) + ", \"v0\": " + emtgrid::format_g17(v0) +
           "}, \"terminals\": [\"1\", \"0\"]}\n" +
           "  ],\n" +
           "  \"control\": [],\n  \"couplings\": [],\n" +
           "  \"task\": {\"dt\": " + emtgrid::format_g17(dt) + ", \"duration\": " +
           emtgrid::format_g17(duration) +
           ", \"channels\": [\"v:1\"], \"device_profile\": \"cpu-serial\", \"strategy\": \"serial\"}\n" +
           "}\n";
}

inline std::string single_resistor_doc() {
    return R"({
  "nodes": ["1"],
  "components": [
    {"id": "r1", "kind": "resistor", "params": {"resistance": 2.0}, "terminals": ["1", "0"]},
    {"id": "s1", "kind": "current_source", "params": {"magnitude": 1.0, "frequency": 0.0, "phase": 0.0}, "terminals": ["1", "0"]}
  ],
  "control": [],
  "couplings": [],
  "task": {"dt": 0.0001, "duration": 0.01, "channels": ["v:1"], "device_profile": "cpu-serial", "strategy": "serial"}
})";
}

inline std::string series_rlc_doc(double r, double l, double c, double dt, double duration) {
    return std::string("{\n") +
           "  \"nodes\": [\"1\", \"2\"],\n" +
           "  \"components\": [\n" +
           "    {\"id\": \"vs\", \"kind\": \"voltage_source\", \"params\": {\"magnitude\": 1.0, "
           "\"frequency\": 0.0, \"phase\": 0.0, \"rs\": " +
           emtgrid::format_g17(r) + "}, \"terminals\": [\"1\", \"0\"]},\n" +
           "    {\"id\": \"l1\", \"kind\": \"inductor\", \"params\": {\"inductance\": " +
           emtgrid::format_g17(l) + "}, \"terminals\": [\"1\", \"2\"]},\n" +
           "    {\"id\": \"c1\", \"kind\": \"capacitor\", \"params\": {\"capacitance\": " +
           emtgrid::format_g17(c) + "}, \"terminals\": [\"2\", \"0\"]}\n" +
           "  ],\n" +
           "  \"control\": [],\n  \"couplings\": [],\n" +
           "  \"task\": {\"dt\": " + emtgrid::format_g17(dt) + ", \"duration\": " +
           emtgrid::format_g17(duration) +
           ", \"channels\": [\"v:2\", \"i:l1\"], \"device_profile\": \"cpu-serial\", "
           "\"strategy\": \"serial\"}\n" +
           "}\n";
}

/// Connected random RLC network: a resistive spanning tree plus random extra
/// R/L/C branches, one grounded resistor and one source. Deterministic per
/// seed.
inline std::string random_rlc_doc(unsigned seed, int nodes, double dt, double duration) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> mag(0.5, 2.0);
    std::uniform_int_distribution<int> kind_pick(0, 2);

    std::string components;
    int counter = 0;
    const auto add = [&](const std::string& kind, const std::string& param, double value,
                         const std::string& a, const std::string& b) {
        components += std::string(components.empty() ? "" : ",\n") +
                      "    {\"id\": \"b" + std::to_string(100 + counter++) + "\", \"kind\": \"" +
                      kind + "\", \"params\": {\"" + param + "\": " + emtgrid::format_g17(value) +
                      "}, \"terminals\": [\"" + a + "\", \"" + b + "\"]}";
    };

    std::string node_list;
    for (int n = 1; n <= nodes; ++n) {
        node_list += std::string(n == 1 ? "" : ", ") + "\"" + std::to_string(n) + "\"";
    }
    // Resistive spanning tree keeps every node connected to ground.
    add("resistor", "resistance", mag(rng), "1", "0");
    for (int n = 2; n <= nodes; ++n) {
        std::uniform_int_distribution<int> parent(1, n - 1);
        add("resistor", "resistance", mag(rng), std::to_string(parent(rng)), std::to_string(n));
    }
    // Extra random branches.
    for (int extra = 0; extra < nodes; ++extra) {
        std::uniform_int_distribution<int> pick(1, nodes);
        const int a = pick(rng);
        int b = pick(rng);
        if (a == b) b = 0;
        const int kind = kind_pick(rng);
        const std::string na = std::to_string(a);
        const std::string nb = b == 0 ? "0" : std::to_string(b);
        if (kind == 0) {
            add("resistor", "resistance", mag(rng), na, nb);
        } else if (kind == 1) {
            add("inductor", "inductance", 1e-3 * mag(rng), na, nb);
        } else {
            add("capacitor", "capacitance", 1e-6 * mag(rng), na, nb);
        }
    }
    add("current_source", "magnitude", mag(rng), "1", "0");

    return std::string("{\n  \"nodes\": [") + node_list + "],\n  \"components\": [\n" +
           components + "\n  ],\n  \"control\": [],\n  \"couplings\": [],\n" +
           "  \"task\": {\"dt\": " + emtgrid::format_g17(dt) + ", \"duration\": " +
           emtgrid::format_g17(duration) +
           ", \"channels\": [\"v:1\"], \"device_profile\": \"cpu-serial\", \"strategy\": "
           "\"serial\"}\n}\n";
}

inline std::string source_root() {
#ifdef EMTGRID_SOURCE_ROOT
    return EMTGRID_SOURCE_ROOT;
#else
    return ".";
#endif
}

inline std::string feeder_document() {
    return emtgrid::read_file(source_root() + "/data/feeder33_pv3.json");
}

/// Fresh scratch directory, independent of the working directory.
inline std::string temp_dir(const std::string& tag) {
    const std::string path =
        (std::filesystem::temp_directory_path() / ("emtgrid_test_" + tag)).string();
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
    return path;
}

}  // namespace oracles
