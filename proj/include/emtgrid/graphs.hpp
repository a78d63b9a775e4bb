#pragma once

#include <cstdint>
#include <vector>

namespace emtgrid::graphs {

/// Adjacency-list digraph over dense vertex indices 0..n-1.
struct Digraph {
    explicit Digraph(std::size_t n) : adj(n) {}
    void add_edge(int from, int to) { adj[static_cast<std::size_t>(from)].push_back(to); }
    [[nodiscard]] std::size_t size() const { return adj.size(); }
    std::vector<std::vector<int>> adj;
};

/// Tarjan strongly connected components, iterative. Component ids are
/// assigned deterministically; vertices of one SCC are returned in ascending
/// vertex order.
std::vector<std::vector<int>> strongly_connected_components(const Digraph& g);

/// True when the graph contains at least one directed cycle.
bool has_cycle(const Digraph& g);

/// Longest-path layering: layer(v) = length of the longest path from any
/// source to v. Throws ErrorCode::CycleDetected on a cyclic input.
std::vector<int> longest_path_layers(const Digraph& g);

/// One producer->consumer data binding of a computation graph. `weak`
/// marks bindings into non-feedthrough inputs (integrator, delay): the
/// consumer can read the previous pass's value, so such a binding may be
/// turned into a state read instead of a sequencing edge.
struct Binding {
    int producer = 0;
    int consumer = 0;
    bool weak = false;
};

struct LoopBreakPlan {
    /// Bindings (indices into the input list) turned into previous-pass
    /// state reads without inserting anything; each lay on a cycle through
    /// a state element.
    std::vector<int> state_bindings;
    /// Pure direct-feedthrough cycles: a one-step delay process is inserted
    /// on `binding`; `cycle` lists the member vertices of the offending
    /// strongly connected component.
    struct Insertion {
        std::vector<int> cycle;
        int binding = 0;
    };
    std::vector<Insertion> insertions;

    [[nodiscard]] bool broken(int binding_index) const;
};

/// Decides where to cut so the remaining edges form a DAG. Inside each
/// strongly connected component of the direct-feedthrough subgraph the cut
/// edge is the one whose consumer has the smallest index (ties: smallest
/// producer); cycles that already pass through a weak binding are cut there
/// without inserting a delay.
LoopBreakPlan break_loops(int vertex_count, const std::vector<Binding>& bindings);

}  // namespace emtgrid::graphs
