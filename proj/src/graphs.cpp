#include "emtgrid/graphs.hpp"

#include <algorithm>

#include "emtgrid/common.hpp"

namespace emtgrid::graphs {

std::vector<std::vector<int>> strongly_connected_components(const Digraph& g) {
    const int n = static_cast<int>(g.size());
    std::vector<int> number(n, -1), lowlink(n, 0), comp(n, -1);
    std::vector<char> on_stack(n, 0);
    std::vector<int> stack;
    std::vector<std::vector<int>> out;
    int counter = 0;

    struct Frame {
        int v;
        std::size_t edge;
    };
    std::vector<Frame> frames;

    for (int root = 0; root < n; ++root) {
        if (number[root] != -1) continue;
        frames.push_back({root, 0});
        number[root] = lowlink[root] = counter++;
        stack.push_back(root);
        on_stack[root] = 1;

        while (!frames.empty()) {
            Frame& f = frames.back();
            const auto& edges = g.adj[static_cast<std::size_t>(f.v)];
            if (f.edge < edges.size()) {
                const int w = edges[f.edge++];
                if (number[w] == -1) {
                    number[w] = lowlink[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    frames.push_back({w, 0});
                } else if (on_stack[w]) {
                    lowlink[f.v] = std::min(lowlink[f.v], number[w]);
                }
            } else {
                const int v = f.v;
                frames.pop_back();
                if (!frames.empty()) {
                    lowlink[frames.back().v] = std::min(lowlink[frames.back().v], lowlink[v]);
                }
                if (lowlink[v] == number[v]) {
                    std::vector<int> members;
                    int w;
                    do {
                        w = stack.back();
                        stack.pop_back();
                        on_stack[w] = 0;
                        members.push_back(w);
                    } while (w != v);
                    std::sort(members.begin(), members.end());
                    out.push_back(std::move(members));
                }
            }
        }
    }
    return out;
}

bool has_cycle(const Digraph& g) {
    for (const auto& scc : strongly_connected_components(g)) {
        if (scc.size() > 1) return true;
        const int v = scc.front();
        const auto& edges = g.adj[static_cast<std::size_t>(v)];
        if (std::find(edges.begin(), edges.end(), v) != edges.end()) return true;
    }
    return false;
}

std::vector<int> longest_path_layers(const Digraph& g) {
    const int n = static_cast<int>(g.size());
    std::vector<int> indegree(n, 0);
    for (int v = 0; v < n; ++v) {
        for (int w : g.adj[static_cast<std::size_t>(v)]) ++indegree[w];
    }
    std::vector<int> layer(n, 0), ready;
    for (int v = 0; v < n; ++v) {
        if (indegree[v] == 0) ready.push_back(v);
    }
    int visited = 0;
    for (std::size_t head = 0; head < ready.size(); ++head) {
        const int v = ready[head];
        ++visited;
        for (int w : g.adj[static_cast<std::size_t>(v)]) {
            layer[w] = std::max(layer[w], layer[v] + 1);
            if (--indegree[w] == 0) ready.push_back(w);
        }
    }
    if (visited != n) {
        fail(ErrorCode::CycleDetected, "", "graph has a cycle; cannot layer");
    }
    return layer;
}

bool LoopBreakPlan::broken(int binding_index) const {
    for (int b : state_bindings) {
        if (b == binding_index) return true;
    }
    for (const auto& ins : insertions) {
        if (ins.binding == binding_index) return true;
    }
    return false;
}

namespace {

/// Nontrivial SCCs (size > 1, or a self-loop) of the subgraph spanned by the
/// still-active bindings passing `keep`.
template <typename Keep>
std::vector<std::vector<int>> live_cycles(int n, const std::vector<Binding>& bindings,
                                          const std::vector<char>& cut, Keep keep) {
    Digraph g(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < bindings.size(); ++i) {
        if (!cut[i] && keep(bindings[i])) g.add_edge(bindings[i].producer, bindings[i].consumer);
    }
    std::vector<std::vector<int>> out;
    for (auto& scc : strongly_connected_components(g)) {
        if (scc.size() > 1) {
            out.push_back(std::move(scc));
            continue;
        }
        const int v = scc.front();
        for (std::size_t i = 0; i < bindings.size(); ++i) {
            if (!cut[i] && keep(bindings[i]) && bindings[i].producer == v &&
                bindings[i].consumer == v) {
                out.push_back(std::move(scc));
                break;
            }
        }
    }
    return out;
}

template <typename Keep>
bool acyclic_under(int n, const std::vector<Binding>& bindings, const std::vector<char>& cut,
                   Keep keep) {
    return live_cycles(n, bindings, cut, keep).empty();
}

/// Among live in-SCC bindings, the one with the smallest consumer index
/// (ties: smallest producer, then binding index). -1 when none qualifies.
int pick_cut(const std::vector<Binding>& bindings, const std::vector<char>& cut,
             const std::vector<int>& scc, bool weak_only) {
    int max_vertex = 0;
    for (int v : scc) max_vertex = std::max(max_vertex, v);
    std::vector<char> in_scc(static_cast<std::size_t>(max_vertex) + 1, 0);
    for (int v : scc) in_scc[static_cast<std::size_t>(v)] = 1;

    int best = -1;
    for (std::size_t i = 0; i < bindings.size(); ++i) {
        const Binding& b = bindings[i];
        if (cut[i] || (weak_only && !b.weak)) continue;
        if (b.producer > max_vertex || b.consumer > max_vertex) continue;
        if (!in_scc[static_cast<std::size_t>(b.producer)] ||
            !in_scc[static_cast<std::size_t>(b.consumer)]) {
            continue;
        }
        if (best < 0 || b.consumer < bindings[static_cast<std::size_t>(best)].consumer ||
            (b.consumer == bindings[static_cast<std::size_t>(best)].consumer &&
             b.producer < bindings[static_cast<std::size_t>(best)].producer)) {
            best = static_cast<int>(i);
        }
    }
    return best;
}

}  // namespace

LoopBreakPlan break_loops(int vertex_count, const std::vector<Binding>& bindings) {
    LoopBreakPlan plan;
    std::vector<char> cut(bindings.size(), 0);
    const auto feedthrough = [](const Binding& b) { return !b.weak; };
    const auto all = [](const Binding&) { return true; };

    // Phase 1: cycles among direct-feedthrough edges; each cut gets a delay
    // process. One cut per round, recomputing components in between.
    for (;;) {
        auto cycles = live_cycles(vertex_count, bindings, cut, feedthrough);
        if (cycles.empty()) break;
        int chosen = -1;
        std::vector<int>* scc_of_chosen = nullptr;
        for (auto& scc : cycles) {
            const int candidate = pick_cut(bindings, cut, scc, false);
            if (candidate < 0) continue;
            if (chosen < 0 ||
                bindings[static_cast<std::size_t>(candidate)].consumer <
                    bindings[static_cast<std::size_t>(chosen)].consumer) {
                chosen = candidate;
                scc_of_chosen = &scc;
            }
        }
        if (chosen < 0) {
            fail(ErrorCode::CycleDetected, "", "feedthrough cycle without a cuttable edge");
        }
        cut[static_cast<std::size_t>(chosen)] = 1;
        plan.insertions.push_back({*scc_of_chosen, chosen});
    }

    // Minimality sweep: drop any insertion whose binding can return without
    // recreating a feedthrough cycle, so every surviving delay is necessary
    // on its own.
    for (std::size_t k = 0; k < plan.insertions.size();) {
        const int binding = plan.insertions[k].binding;
        cut[static_cast<std::size_t>(binding)] = 0;
        if (acyclic_under(vertex_count, bindings, cut, feedthrough)) {
            plan.insertions.erase(plan.insertions.begin() + static_cast<std::ptrdiff_t>(k));
        } else {
            cut[static_cast<std::size_t>(binding)] = 1;
            ++k;
        }
    }

    // Phase 2: remaining cycles necessarily pass through a weak binding;
    // turn one per round into a previous-pass state read.
    for (;;) {
        auto cycles = live_cycles(vertex_count, bindings, cut, all);
        if (cycles.empty()) break;
        int chosen = -1;
        for (const auto& scc : cycles) {
            const int candidate = pick_cut(bindings, cut, scc, true);
            if (candidate < 0) continue;
            if (chosen < 0 ||
                bindings[static_cast<std::size_t>(candidate)].consumer <
                    bindings[static_cast<std::size_t>(chosen)].consumer) {
                chosen = candidate;
            }
        }
        if (chosen < 0) {
            fail(ErrorCode::CycleDetected, "",
                 "cycle without a breakable binding survived loop analysis");
        }
        cut[static_cast<std::size_t>(chosen)] = 1;
        plan.state_bindings.push_back(chosen);
    }

    for (std::size_t k = 0; k < plan.state_bindings.size();) {
        const int binding = plan.state_bindings[k];
        cut[static_cast<std::size_t>(binding)] = 0;
        if (acyclic_under(vertex_count, bindings, cut, all)) {
            plan.state_bindings.erase(plan.state_bindings.begin() +
                                      static_cast<std::ptrdiff_t>(k));
        } else {
            cut[static_cast<std::size_t>(binding)] = 1;
            ++k;
        }
    }
    return plan;
}

}  // namespace emtgrid::graphs
