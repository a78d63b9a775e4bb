#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include <Eigen/Dense>

#include "emtgrid/model.hpp"
#include "emtgrid/sparse.hpp"
#include "emtgrid/waveform.hpp"

namespace emtgrid {

// Branch orientation convention used everywhere: branch voltage
// v = v(terminals[1]) - v(terminals[0]) and branch current flows from the
// second terminal to the first, so that the Norton history current enters
// terminals[0] (I[t0] += I_hist, I[t1] -= I_hist) and every companion obeys
// the uniform relation i = G*v + I_hist.

constexpr double kSwitchOnSiemens = 1e4;
constexpr double kSwitchOffSiemens = 1e-8;
constexpr double kDivergenceLimit = 1e12;

/// Norton equivalent of one component for one step.
struct CompanionModel {
    double conductance = 0.0;
    double history_current = 0.0;
    std::string component;
    int node_a = -1;  // terminals[0] index, -1 ground
    int node_b = -1;  // terminals[1]
};

/// Kernel catalog: one entry per code-database template.
enum class KernelId : int {
    NortonResistor = 0,
    NortonInductor,
    NortonCapacitor,
    NortonSeriesRL,
    NortonVoltageSource,
    NortonCurrentSource,
    NortonControlledSource,
    NortonSwitch,
    InjectionPair,
    FactorizeSystem,
    SolveSystem,
    CtlGain,
    CtlSum,
    CtlIntegrator,
    CtlFirstOrderLag,
    CtlLimiter,
    CtlPiController,
    CtlComparator,
    CtlConstant,
    CtlDelay,
};

constexpr int kKernelCount = 20;

std::string_view to_string(KernelId id);
KernelId kernel_id_from(std::string_view name, const std::string& where);

// --- shared kernel arithmetic; the code generator mirrors these exactly ---

namespace kern {

inline double source_value(double magnitude, double omega, double phase, double t) {
    return omega == 0.0 ? magnitude : magnitude * std::cos(omega * t + phase);
}
inline double hist_inductor(double g, double v_prev, double i_prev) {
    return i_prev + g * v_prev;
}
inline double hist_capacitor(double g, double v_prev, double i_prev) {
    return -i_prev - g * v_prev;
}
inline double hist_series_rl(double g, double decay, double v_prev, double i_prev) {
    return decay * i_prev + g * v_prev;
}
inline double ctl_integrate(double half_dt, double y_prev, double u_prev, double u) {
    return y_prev + half_dt * (u + u_prev);
}
inline double ctl_lag(double c_state, double c_input, double y_prev, double u_prev, double u) {
    return c_state * y_prev + c_input * (u + u_prev);
}
inline double ctl_clamp(double u, double lo, double hi) {
    return u < lo ? lo : (u > hi ? hi : u);
}

}  // namespace kern

/// Per-component constants baked at compile time. Layouts by kernel:
///   NortonResistor        [g]
///   NortonInductor        [g]                       g = dt/(2L)
///   NortonCapacitor       [g]                       g = 2C/dt
///   NortonSeriesRL        [g, decay]                g = dt/(2L+R*dt)
///   NortonVoltageSource   [g, magnitude, omega, phase]   g = 1/rs
///   NortonCurrentSource   [magnitude, omega, phase]
///   NortonControlledSource[gain]
///   NortonSwitch          [g_on, g_off, initial, t0, t1, ...]
struct CompanionSpec {
    KernelId code = KernelId::NortonResistor;
    std::vector<double> consts;
    int state_slots = 0;  // switch: [state, changed]
};

CompanionSpec bake_companion(const ComponentInstance& component, double dt);

/// Control block constants baked at compile time. Layouts by kind:
///   Gain          [k]
///   Sum           []            (signs live in the port bindings)
///   Integrator    [dt/2]
///   FirstOrderLag [c_state, c_input]   (2T-dt)/(2T+dt), k*dt/(2T+dt)
///   Limiter       [min, max]
///   PiController  [kp, ki*dt/2]
///   Comparator    []
///   Constant      [value]
///   Delay         []
std::vector<double> bake_block(const ControlBlock& block, double dt);
int block_state_slots(BlockKind kind);

// --- spec-level operations -------------------------------------------------

struct ElectricalState {
    Eigen::VectorXd node_voltages;
    Eigen::VectorXd branch_currents;  // canonical component order
    Eigen::VectorXd injections;
    std::vector<int> switch_states;
    double time = 0.0;
};

struct ControlState {
    std::vector<double> slots;
};

/// Norton update of one component from its previous branch voltage/current.
/// `actuator_value` feeds controlled sources, `switch_closed` overrides the
/// time-derived switch state when non-negative.
CompanionModel companion_update(const ComponentInstance& component, double dt, double v_prev,
                                double i_prev, double actuator_value = 0.0, double time = 0.0,
                                int switch_closed = -1);

/// Stamps the system conductance matrix for the model at step width dt.
/// `switch_closed` maps switch component ids to their state; unlisted
/// switches use their initial state.
SparseConductanceMatrix assemble_conductance(const NetworkModel& model, double dt,
                                             const std::map<std::string, bool>& switch_closed = {});

/// Sums history currents per node in ascending component-id order.
Eigen::VectorXd accumulate_injections(int node_count, std::vector<CompanionModel> companions);

/// One control block evaluation; `inputs` arrive already signed. Returns the
/// block output and advances `state` in place.
double eval_control_block(BlockKind kind, const ParamMap& params, ControlState& state,
                          const std::vector<double>& inputs, double dt);

// --- execution plan shared by the serial stepper and the compiler -----------

struct ElectricalPlan {
    int node_count = 0;
    std::vector<int> comp_order;  // canonical -> model component index
    std::vector<CompanionSpec> specs;
    std::vector<std::array<int, 2>> terminals;  // node indices, -1 ground
    SparsePattern pattern;
    /// Per matrix entry: signed conductance terms (canonical component, sign).
    std::vector<std::vector<std::pair<int, double>>> entry_terms;
    /// Per node: contribution slots (2c for +I_hist at t0, 2c+1 for -I_hist
    /// at t1), ascending component id.
    std::vector<std::vector<int>> node_gather;

    [[nodiscard]] int component_count() const { return static_cast<int>(comp_order.size()); }
};

ElectricalPlan build_electrical_plan(const NetworkModel& model, double dt);

/// Initial node voltages and branch currents: zero unless the document
/// supplies v0/i0, with single-capacitor nodes balanced so the first
/// trapezoidal step sees consistent history.
struct InitialElectrical {
    Eigen::VectorXd node_voltage;
    Eigen::VectorXd branch_current;  // canonical order
};

InitialElectrical build_initial_state(const NetworkModel& model, const ElectricalPlan& plan);

struct RunOptions {
    double divergence_limit = kDivergenceLimit;
    bool check_kcl = false;  // assert ||G v - I||_inf <= 1e-9 ||I||_inf per step
    int steps_override = -1;
    int warmup_steps = 0;
    std::function<void(int step, const Eigen::VectorXd& injections, const Eigen::VectorXd& voltages)>
        solve_probe;
    int* factor_count = nullptr;
    double* measured_seconds = nullptr;  // step-loop wall clock after warm-up
};

/// The serial reference stepper: the bitwise ground truth every other
/// backend must reproduce.
WaveformSet run_serial(const NetworkModel& model, const TaskConfig& config,
                       const RunOptions& options = {});

}  // namespace emtgrid
