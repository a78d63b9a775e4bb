#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emtgrid/cgm.hpp"

namespace emtgrid {

/// A resolved arena read: slot index (-1 reads 0.0, the ground sentinel)
/// and the sign applied to the value.
struct PortRef {
    int slot = -1;
    double sign = 1.0;

    bool operator==(const PortRef&) const = default;
};

/// Tables driving the factorize/solve singleton kernels, all in arena slots.
struct SolverTables {
    SparsePattern pattern;
    std::vector<std::vector<std::pair<int, double>>> entry_terms;  // (g slot, sign) per nnz
    std::vector<std::vector<int>> gather;                          // contrib slots per node
    struct Finalize {
        int i = -1, g = -1, h = -1, va = -1, vb = -1;
        bool operator==(const Finalize&) const = default;
    };
    std::vector<Finalize> finalize;  // per component, canonical order
    std::vector<int> watch;          // dirty slot + switch changed slots
    int dirty = -1;
    int fcount = -1;
    int v_base = -1;
    int matrix = -1, l = -1, u = -1, scratch = -1;
    int l_nnz = 0, u_nnz = 0;

    bool operator==(const SolverTables&) const = default;
};

/// The layered, grouped, lane-annotated execution plan; serializes to the
/// line-oriented schedule-description file (grammar in docs/schedule_format.md).
struct ScheduleProgram {
    std::string profile = "cpu-serial";
    int width = 1;
    double dt = 0.0;
    int steps = 0;
    int node_count = 0, comp_count = 0, block_count = 0;
    int arena_extent = 0, const_extent = 0;
    std::vector<double> const_table;                     // const_extent * width, slot-major
    std::vector<std::pair<std::string, int>> channels;   // name -> arena slot
    std::vector<std::pair<int, int>> latch;              // live slot -> shadow slot
    SolverTables solver;

    struct Proc {
        int id = -1;
        ProcessKind kind = ProcessKind::NortonUpdate;
        KernelId code = KernelId::NortonResistor;
        int lane = 0;
        std::vector<PortRef> in;
        int out = -1, out_len = 0;
        int out2 = -1;  // norton history slot
        int state = -1, state_len = 0;
        int par = -1, par_len = 0;

        bool operator==(const Proc&) const = default;
    };
    struct Group {
        ProcessKind kind = ProcessKind::NortonUpdate;
        int lane_base = 0;
        std::vector<Proc> procs;

        bool operator==(const Group&) const = default;
    };
    std::vector<std::vector<Group>> layers;

    [[nodiscard]] int layer_count() const { return static_cast<int>(layers.size()); }
    [[nodiscard]] int process_count() const;

    [[nodiscard]] std::string serialize() const;
    static ScheduleProgram parse(const std::string& text);

    bool operator==(const ScheduleProgram&) const = default;
};

/// Emits the schedule for a grouped (and, for width > 1, vectorized) plan.
/// Verifies per-layer write-set disjointness and the profile capacity.
ScheduleProgram emit_schedule(const Ldag& ldag, const DeviceProfile& profile);

/// Initial arena contents (extent*width): v0/i0-consistent electrical state,
/// switch states, and a set dirty flag forcing the first factorization.
Eigen::VectorXd build_initial_arena(const ScheduleProgram& schedule, const Ldag& ldag);

/// State snapshot file ("STATE v1 extent=<n> width=<N>").
std::string serialize_state(const Eigen::VectorXd& arena, int extent, int width);
Eigen::VectorXd parse_state(const std::string& text, int* width_out = nullptr);

}  // namespace emtgrid
