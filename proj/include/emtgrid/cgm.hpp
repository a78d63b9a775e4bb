#pragma once

#include <string>
#include <vector>

#include "emtgrid/kernels.hpp"
#include "emtgrid/model.hpp"

namespace emtgrid {

/// Logical operand of a basic process, resolved to an arena slot when the
/// schedule is emitted. `stale` reads take the previous pass's value through
/// a latched shadow cell.
struct Ref {
    enum class Target {
        None,
        NodeVoltage,    // index: node
        BranchCurrent,  // index: canonical component
        BlockOutput,    // index: block (including inserted delays)
    };
    Target target = Target::None;
    int index = -1;
    double sign = 1.0;
    bool stale = false;

    bool operator==(const Ref&) const = default;
};

/// One vertex of the computation graph: a typed sequential process bound to
/// its code-database kernel, baked constants and logical ports.
struct BasicProcess {
    int id = -1;
    ProcessKind kind = ProcessKind::NortonUpdate;
    KernelId code = KernelId::NortonResistor;
    std::string name;    // owning component/block id, or generated for inserted delays
    int entity = -1;     // canonical component index or block index
    std::vector<Ref> inputs;
    std::vector<double> consts;
    int state_len = 0;

    bool operator==(const BasicProcess&) const = default;
};

/// The compiler IR: basic processes plus data-dependency edges, together
/// with the electrical tables the solve/factorize singletons execute.
struct Cgm {
    double dt = 0.0;
    int steps = 0;
    int node_count = 0;
    int comp_count = 0;
    int block_count = 0;  // model blocks plus inserted delays
    std::vector<BasicProcess> vertices;
    std::vector<std::pair<int, int>> edges;  // producer -> consumer, sorted

    SparsePattern pattern;
    std::vector<std::vector<std::pair<int, double>>> entry_terms;  // per nnz: (component, sign)
    std::vector<std::vector<int>> node_gather;  // per node: contrib slots 2c / 2c+1
    std::vector<std::array<int, 2>> terminals;  // per canonical component

    std::vector<std::pair<std::string, Ref>> channels;  // recorded channels
    std::vector<int> block_state_len;                   // per block

    [[nodiscard]] int norton_id(int comp) const { return comp; }
    [[nodiscard]] int injection_id(int comp) const { return comp_count + comp; }
    [[nodiscard]] int factorize_id() const { return 2 * comp_count; }
    [[nodiscard]] int solve_id() const { return 2 * comp_count + 1; }
    [[nodiscard]] int block_vertex_id(int block) const { return 2 * comp_count + 2 + block; }

    bool operator==(const Cgm&) const = default;
};

/// Everything about a broken algebraic loop: the strongly connected
/// component, the chosen edge, and the inserted delay (empty when the cycle
/// was cut at an integrator input instead).
struct LoopReport {
    struct Broken {
        std::vector<std::string> cycle;
        std::string producer;
        std::string consumer;
        std::string inserted_delay;  // empty: converted to a state read

        bool operator==(const Broken&) const = default;
    };
    std::vector<Broken> loops;

    [[nodiscard]] int insertion_count() const {
        int n = 0;
        for (const auto& l : loops) n += l.inserted_delay.empty() ? 0 : 1;
        return n;
    }

    bool operator==(const LoopReport&) const = default;
};

struct DeviceProfile {
    std::string name = "cpu-serial";
    Strategy affinity = Strategy::Serial;
    int capacity = 1;  // workers (layer_parallel) or lanes (vectorized)
    bool allow_tiling = true;
    std::string notes;

    bool operator==(const DeviceProfile&) const = default;
};

/// Built-in profiles: cpu-serial, cpu-parallel, cpu-vector.
DeviceProfile builtin_profile(const std::string& name);

/// Per-scenario values extracted after structural verification.
struct LaneData {
    std::vector<std::vector<double>> vertex_consts;  // per vertex id
    InitialElectrical initial;

    bool operator==(const LaneData&) const = default;
};

struct Ldag {
    Cgm graph;
    std::vector<int> layer;  // per vertex
    int layer_count = 0;
    struct Group {
        ProcessKind kind = ProcessKind::NortonUpdate;
        int lane_base = 0;
        std::vector<int> members;  // vertex ids, ascending

        bool operator==(const Group&) const = default;
    };
    std::vector<std::vector<Group>> groups;  // per layer; empty until grouped
    bool grouped = false;
    int width = 1;
    std::vector<LaneData> lanes;  // width entries; lane 0 is the base model

    bool operator==(const Ldag&) const = default;
};

/// Parameter overrides shared by every scenario of one topology.
struct ScenarioOverride {
    std::string component;
    std::string param;
    double value = 0.0;

    bool operator==(const ScenarioOverride&) const = default;
};

struct ScenarioBatch {
    std::string base_document;  // pre-expansion document text
    std::vector<std::vector<ScenarioOverride>> rows;

    [[nodiscard]] int size() const { return static_cast<int>(rows.size()); }
};

/// Applies one override row to a document and re-parses (pv macros
/// re-expand with the new parameters).
std::string apply_overrides(const std::string& document,
                            const std::vector<ScenarioOverride>& row);

// --- compiler passes ---------------------------------------------------------

/// Translates a validated model into the computation graph: one norton and
/// one injection process per component, factorize/solve singletons, one
/// process per control block; edges follow the EMT data flow, actuator
/// commands and delay inputs bind through state instead of edges.
Cgm build_cgm(const NetworkModel& model);

/// Cuts every cycle: direct-feedthrough cycles get an inserted one-step
/// delay process, cycles through integrator inputs become previous-pass
/// state reads. The result is acyclic as a whole graph.
std::pair<Cgm, LoopReport> break_algebraic_loops(Cgm graph);

/// Longest-path layering; layer count equals longest path length + 1.
Ldag layer_graph(Cgm graph);

/// Partitions every layer into same-kind groups with contiguous lane ids,
/// ordered by kind then process id.
Ldag group_layer_processes(Ldag ldag, const DeviceProfile& profile);

/// Widens the plan to one lane per scenario. Throws TopologyMismatch when a
/// row changes the compiled structure rather than parameter values.
Ldag vectorize(Ldag ldag, const ScenarioBatch& batch);

/// Structure-only comparison (kinds, names, ports, edges; constants ignored).
bool structural_equal(const Cgm& a, const Cgm& b);

}  // namespace emtgrid
