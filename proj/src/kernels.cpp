#include "emtgrid/kernels.hpp"

#include <algorithm>
#include <chrono>
#include <numbers>
#include <set>

#include "emtgrid/graphs.hpp"

namespace emtgrid {

namespace {

constexpr std::array<std::string_view, kKernelCount> kKernelNames = {
    "norton.resistor", "norton.inductor",  "norton.capacitor", "norton.series_rl",
    "norton.vsource",  "norton.isource",   "norton.csource",   "norton.switch",
    "inject.pair",     "lu.factor",        "lu.solve",
    "ctl.gain",        "ctl.sum",          "ctl.integrator",   "ctl.lag",
    "ctl.limiter",     "ctl.pi",           "ctl.comparator",   "ctl.constant",
    "ctl.delay",
};

}  // namespace

std::string_view to_string(KernelId id) {
    return kKernelNames[static_cast<std::size_t>(id)];
}

KernelId kernel_id_from(std::string_view name, const std::string& where) {
    for (std::size_t i = 0; i < kKernelNames.size(); ++i) {
        if (kKernelNames[i] == name) return static_cast<KernelId>(i);
    }
    fail(ErrorCode::UnknownKind, where, "unknown kernel '" + std::string(name) + "'");
}

CompanionSpec bake_companion(const ComponentInstance& c, double dt) {
    CompanionSpec spec;
    const std::string& where = c.id;
    switch (c.kind) {
        case ComponentKind::Resistor:
            spec.code = KernelId::NortonResistor;
            spec.consts = {1.0 / require_number(c.params, "resistance", where)};
            break;
        case ComponentKind::Inductor:
            spec.code = KernelId::NortonInductor;
            spec.consts = {dt / (2.0 * require_number(c.params, "inductance", where))};
            break;
        case ComponentKind::Capacitor:
            spec.code = KernelId::NortonCapacitor;
            spec.consts = {2.0 * require_number(c.params, "capacitance", where) / dt};
            break;
        case ComponentKind::SeriesRL: {
            const double r = require_number(c.params, "resistance", where);
            const double l = require_number(c.params, "inductance", where);
            const double denom = 2.0 * l + r * dt;
            spec.code = KernelId::NortonSeriesRL;
            spec.consts = {dt / denom, (2.0 * l - r * dt) / denom};
            break;
        }
        case ComponentKind::VoltageSource: {
            spec.code = KernelId::NortonVoltageSource;
            spec.consts = {1.0 / number_or(c.params, "rs", 1e-3),
                           require_number(c.params, "magnitude", where),
                           2.0 * std::numbers::pi * number_or(c.params, "frequency", 0.0),
                           number_or(c.params, "phase", 0.0)};
            break;
        }
        case ComponentKind::CurrentSource:
            spec.code = KernelId::NortonCurrentSource;
            spec.consts = {require_number(c.params, "magnitude", where),
                           2.0 * std::numbers::pi * number_or(c.params, "frequency", 0.0),
                           number_or(c.params, "phase", 0.0)};
            break;
        case ComponentKind::ControlledCurrentSource:
            spec.code = KernelId::NortonControlledSource;
            spec.consts = {number_or(c.params, "gain", 1.0)};
            break;
        case ComponentKind::Switch: {
            spec.code = KernelId::NortonSwitch;
            const bool closed = std::get<std::string>(c.params.at("state")) == "closed";
            spec.consts = {kSwitchOnSiemens, kSwitchOffSiemens, closed ? 1.0 : 0.0};
            auto it = c.params.find("toggle_times");
            if (it != c.params.end()) {
                for (double t : std::get<std::vector<double>>(it->second)) {
                    spec.consts.push_back(t);
                }
            }
            spec.state_slots = 2;  // [state, changed]
            break;
        }
        case ComponentKind::PvSubsystem:
            fail(ErrorCode::UnknownComponentKind, where,
                 "pv_subsystem must be expanded before compilation");
    }
    return spec;
}

std::vector<double> bake_block(const ControlBlock& b, double dt) {
    switch (b.kind) {
        case BlockKind::Gain:
            return {require_number(b.params, "k", b.id)};
        case BlockKind::Sum:
            return {};
        case BlockKind::Integrator:
            return {dt / 2.0};
        case BlockKind::FirstOrderLag: {
            const double t_lag = require_number(b.params, "T", b.id);
            const double k = number_or(b.params, "k", 1.0);
            const double denom = 2.0 * t_lag + dt;
            return {(2.0 * t_lag - dt) / denom, k * dt / denom};
        }
        case BlockKind::Limiter:
            return {require_number(b.params, "min", b.id), require_number(b.params, "max", b.id)};
        case BlockKind::PiController:
            return {require_number(b.params, "kp", b.id),
                    require_number(b.params, "ki", b.id) * dt / 2.0};
        case BlockKind::Comparator:
            return {};
        case BlockKind::Constant:
            return {require_number(b.params, "value", b.id)};
        case BlockKind::Delay:
            return {};
    }
    return {};
}

int block_state_slots(BlockKind kind) {
    switch (kind) {
        case BlockKind::Integrator:
        case BlockKind::FirstOrderLag:
        case BlockKind::PiController:
            return 2;  // [accumulator, previous input]
        case BlockKind::Delay:
            return 1;  // register (public-op form only)
        default:
            return 0;
    }
}

namespace {

int switch_state_at(const CompanionSpec& spec, double t) {
    int state = spec.consts[2] != 0.0 ? 1 : 0;
    for (std::size_t j = 3; j < spec.consts.size(); ++j) {
        if (t >= spec.consts[j]) state ^= 1;
    }
    return state;
}

/// Norton update core over baked constants.
void norton_eval(const CompanionSpec& spec, double v_prev, double i_prev, double actuator,
                 double t, double* state, double& g, double& h) {
    switch (spec.code) {
        case KernelId::NortonResistor:
            g = spec.consts[0];
            h = 0.0;
            break;
        case KernelId::NortonInductor:
            g = spec.consts[0];
            h = kern::hist_inductor(g, v_prev, i_prev);
            break;
        case KernelId::NortonCapacitor:
            g = spec.consts[0];
            h = kern::hist_capacitor(g, v_prev, i_prev);
            break;
        case KernelId::NortonSeriesRL:
            g = spec.consts[0];
            h = kern::hist_series_rl(g, spec.consts[1], v_prev, i_prev);
            break;
        case KernelId::NortonVoltageSource:
            g = spec.consts[0];
            h = g * kern::source_value(spec.consts[1], spec.consts[2], spec.consts[3], t);
            break;
        case KernelId::NortonCurrentSource:
            g = 0.0;
            h = kern::source_value(spec.consts[0], spec.consts[1], spec.consts[2], t);
            break;
        case KernelId::NortonControlledSource:
            g = 0.0;
            h = spec.consts[0] * actuator;
            break;
        case KernelId::NortonSwitch: {
            const int now = switch_state_at(spec, t);
            if (state != nullptr) {
                state[1] = (static_cast<double>(now) != state[0]) ? 1.0 : 0.0;
                state[0] = static_cast<double>(now);
            }
            g = now != 0 ? spec.consts[0] : spec.consts[1];
            h = 0.0;
            break;
        }
        default:
            fail(ErrorCode::UnknownKind, "", "not a norton kernel");
    }
}

}  // namespace

CompanionModel companion_update(const ComponentInstance& component, double dt, double v_prev,
                                double i_prev, double actuator_value, double time,
                                int switch_closed) {
    if (!std::isfinite(v_prev) || !std::isfinite(i_prev)) {
        fail(ErrorCode::NonFiniteState, component.id, "previous state is not finite");
    }
    CompanionSpec spec = bake_companion(component, dt);
    if (component.kind == ComponentKind::Switch && switch_closed >= 0) {
        spec.consts[2] = switch_closed != 0 ? 1.0 : 0.0;
        spec.consts.resize(3);  // explicit state overrides the schedule
    }
    CompanionModel out;
    out.component = component.id;
    double state[2] = {spec.consts.size() > 2 ? spec.consts[2] : 0.0, 0.0};
    norton_eval(spec, v_prev, i_prev, actuator_value, time, state, out.conductance,
                out.history_current);
    return out;
}

SparseConductanceMatrix assemble_conductance(const NetworkModel& model, double dt,
                                             const std::map<std::string, bool>& switch_closed) {
    const ElectricalPlan plan = build_electrical_plan(model, dt);
    std::vector<double> g(plan.comp_order.size(), 0.0);
    for (std::size_t c = 0; c < plan.comp_order.size(); ++c) {
        const auto& comp = model.components[static_cast<std::size_t>(plan.comp_order[c])];
        const CompanionSpec& spec = plan.specs[c];
        if (spec.code == KernelId::NortonSwitch) {
            auto it = switch_closed.find(comp.id);
            const bool closed = it != switch_closed.end() ? it->second : spec.consts[2] != 0.0;
            g[c] = closed ? spec.consts[0] : spec.consts[1];
        } else if (spec.code == KernelId::NortonCurrentSource ||
                   spec.code == KernelId::NortonControlledSource) {
            g[c] = 0.0;
        } else {
            g[c] = spec.consts[0];
        }
    }
    SparseConductanceMatrix matrix;
    matrix.pattern = plan.pattern;
    matrix.values.assign(static_cast<std::size_t>(plan.pattern.nnz()), 0.0);
    for (int k = 0; k < plan.pattern.nnz(); ++k) {
        double sum = 0.0;
        for (const auto& [comp, sign] : plan.entry_terms[static_cast<std::size_t>(k)]) {
            sum += sign * g[static_cast<std::size_t>(comp)];
        }
        matrix.values[static_cast<std::size_t>(k)] = sum;
    }
    return matrix;
}

Eigen::VectorXd accumulate_injections(int node_count, std::vector<CompanionModel> companions) {
    std::sort(companions.begin(), companions.end(),
              [](const CompanionModel& a, const CompanionModel& b) {
                  return a.component < b.component;
              });
    Eigen::VectorXd injections = Eigen::VectorXd::Zero(node_count);
    for (const auto& c : companions) {
        if (c.node_a >= 0) injections[c.node_a] += c.history_current;
        if (c.node_b >= 0) injections[c.node_b] -= c.history_current;
    }
    return injections;
}

double eval_control_block(BlockKind kind, const ParamMap& params, ControlState& state,
                          const std::vector<double>& inputs, double dt) {
    ControlBlock probe;
    probe.kind = kind;
    probe.params = params;
    const std::vector<double> consts = bake_block(probe, dt);
    const int needed_state = block_state_slots(kind);
    if (static_cast<int>(state.slots.size()) < needed_state) {
        state.slots.resize(static_cast<std::size_t>(needed_state), 0.0);
    }

    const auto need = [&](std::size_t n) {
        if (inputs.size() != n) {
            fail(ErrorCode::ArityMismatch, std::string(to_string(kind)),
                 "expected " + std::to_string(n) + " input(s), got " +
                     std::to_string(inputs.size()));
        }
    };

    switch (kind) {
        case BlockKind::Gain:
            need(1);
            return consts[0] * inputs[0];
        case BlockKind::Sum: {
            if (inputs.size() < 2) {
                fail(ErrorCode::ArityMismatch, "sum", "needs at least 2 inputs");
            }
            double sum = 0.0;
            for (double u : inputs) sum += u;
            return sum;
        }
        case BlockKind::Integrator: {
            need(1);
            const double y = kern::ctl_integrate(consts[0], state.slots[0], state.slots[1], inputs[0]);
            state.slots[0] = y;
            state.slots[1] = inputs[0];
            return y;
        }
        case BlockKind::FirstOrderLag: {
            need(1);
            const double y = kern::ctl_lag(consts[0], consts[1], state.slots[0], state.slots[1],
                                           inputs[0]);
            state.slots[0] = y;
            state.slots[1] = inputs[0];
            return y;
        }
        case BlockKind::Limiter:
            need(1);
            return kern::ctl_clamp(inputs[0], consts[0], consts[1]);
        case BlockKind::PiController: {
            need(1);
            const double s = kern::ctl_integrate(consts[1], state.slots[0], state.slots[1], inputs[0]);
            state.slots[0] = s;
            state.slots[1] = inputs[0];
            return consts[0] * inputs[0] + s;
        }
        case BlockKind::Comparator:
            need(2);
            return inputs[0] >= inputs[1] ? 1.0 : 0.0;
        case BlockKind::Constant:
            need(0);
            return consts[0];
        case BlockKind::Delay: {
            need(1);
            const double y = state.slots[0];
            state.slots[0] = inputs[0];
            return y;
        }
    }
    fail(ErrorCode::UnknownKind, "", "unhandled block kind");
}

ElectricalPlan build_electrical_plan(const NetworkModel& model, double dt) {
    ElectricalPlan plan;
    plan.node_count = static_cast<int>(model.nodes.size());
    plan.comp_order = canonical_component_order(model);

    std::map<std::string, int> node_of;
    for (std::size_t i = 0; i < model.nodes.size(); ++i) {
        node_of[model.nodes[i]] = static_cast<int>(i);
    }
    const auto resolve = [&](const std::string& id) -> int {
        if (id == "0") return -1;
        auto it = node_of.find(id);
        if (it == node_of.end()) fail(ErrorCode::DanglingReference, id, "node not declared");
        return it->second;
    };

    std::vector<std::pair<int, int>> pairs;
    for (std::size_t c = 0; c < plan.comp_order.size(); ++c) {
        const auto& comp = model.components[static_cast<std::size_t>(plan.comp_order[c])];
        plan.specs.push_back(bake_companion(comp, dt));
        const int a = resolve(comp.terminals[0]);
        const int b = resolve(comp.terminals[1]);
        if (a == b) {
            fail(ErrorCode::InvalidParameter, comp.id, "terminals must differ");
        }
        plan.terminals.push_back({a, b});
        if (a >= 0) pairs.emplace_back(a, a);
        if (b >= 0) pairs.emplace_back(b, b);
        if (a >= 0 && b >= 0) {
            pairs.emplace_back(a, b);
            pairs.emplace_back(b, a);
        }
    }
    plan.pattern = pattern_from_pairs(plan.node_count, std::move(pairs));

    plan.entry_terms.assign(static_cast<std::size_t>(plan.pattern.nnz()), {});
    plan.node_gather.assign(static_cast<std::size_t>(plan.node_count), {});
    for (std::size_t c = 0; c < plan.comp_order.size(); ++c) {
        const auto [a, b] = plan.terminals[c];
        const int ci = static_cast<int>(c);
        if (a >= 0) {
            plan.entry_terms[static_cast<std::size_t>(plan.pattern.find(a, a))].emplace_back(ci, 1.0);
            plan.node_gather[static_cast<std::size_t>(a)].push_back(2 * ci);
        }
        if (b >= 0) {
            plan.entry_terms[static_cast<std::size_t>(plan.pattern.find(b, b))].emplace_back(ci, 1.0);
            plan.node_gather[static_cast<std::size_t>(b)].push_back(2 * ci + 1);
        }
        if (a >= 0 && b >= 0) {
            plan.entry_terms[static_cast<std::size_t>(plan.pattern.find(a, b))].emplace_back(ci, -1.0);
            plan.entry_terms[static_cast<std::size_t>(plan.pattern.find(b, a))].emplace_back(ci, -1.0);
        }
    }
    return plan;
}

InitialElectrical build_initial_state(const NetworkModel& model, const ElectricalPlan& plan) {
    InitialElectrical init;
    init.node_voltage = Eigen::VectorXd::Zero(plan.node_count);
    init.branch_current = Eigen::VectorXd::Zero(plan.component_count());

    // Node voltages from v0 parameters (v0 = v(terminals[0]) - v(terminals[1])).
    for (int c = 0; c < plan.component_count(); ++c) {
        const auto& comp = model.components[static_cast<std::size_t>(plan.comp_order[c])];
        auto it = comp.params.find("v0");
        if (it == comp.params.end()) continue;
        const double v0 = std::get<double>(it->second);
        const auto [a, b] = plan.terminals[static_cast<std::size_t>(c)];
        if (a >= 0) {
            init.node_voltage[a] = (b >= 0 ? init.node_voltage[b] : 0.0) + v0;
        } else if (b >= 0) {
            init.node_voltage[b] = -v0;
        }
    }

    // Branch currents: explicit i0, then instantaneous relations.
    std::vector<char> fixed(static_cast<std::size_t>(plan.component_count()), 0);
    for (int c = 0; c < plan.component_count(); ++c) {
        const auto& comp = model.components[static_cast<std::size_t>(plan.comp_order[c])];
        const CompanionSpec& spec = plan.specs[static_cast<std::size_t>(c)];
        const auto [a, b] = plan.terminals[static_cast<std::size_t>(c)];
        const double vs = (b >= 0 ? init.node_voltage[b] : 0.0) -
                          (a >= 0 ? init.node_voltage[a] : 0.0);
        auto it = comp.params.find("i0");
        if (it != comp.params.end()) {
            init.branch_current[c] = std::get<double>(it->second);
            fixed[static_cast<std::size_t>(c)] = 1;
            continue;
        }
        switch (spec.code) {
            case KernelId::NortonResistor:
                init.branch_current[c] = spec.consts[0] * vs;
                fixed[static_cast<std::size_t>(c)] = 1;
                break;
            case KernelId::NortonSwitch:
                init.branch_current[c] =
                    (spec.consts[2] != 0.0 ? spec.consts[0] : spec.consts[1]) * vs;
                fixed[static_cast<std::size_t>(c)] = 1;
                break;
            case KernelId::NortonVoltageSource:
                init.branch_current[c] =
                    spec.consts[0] * vs +
                    spec.consts[0] * kern::source_value(spec.consts[1], spec.consts[2],
                                                        spec.consts[3], 0.0);
                fixed[static_cast<std::size_t>(c)] = 1;
                break;
            case KernelId::NortonCurrentSource:
                init.branch_current[c] =
                    kern::source_value(spec.consts[0], spec.consts[1], spec.consts[2], 0.0);
                fixed[static_cast<std::size_t>(c)] = 1;
                break;
            case KernelId::NortonControlledSource:
                init.branch_current[c] = 0.0;  // actuator commands start at zero
                fixed[static_cast<std::size_t>(c)] = 1;
                break;
            default:
                break;  // inductor/series_rl default 0, capacitor balanced below
        }
    }

    // Balance nodes carrying exactly one open capacitor so the first step
    // sees a consistent history current.
    for (int n = 0; n < plan.node_count; ++n) {
        int cap = -1;
        int cap_sign = 0;
        bool unique = true;
        double residual = 0.0;
        for (int c = 0; c < plan.component_count(); ++c) {
            const auto [a, b] = plan.terminals[static_cast<std::size_t>(c)];
            int sign = 0;
            if (a == n) sign = 1;
            if (b == n) sign = -1;
            if (sign == 0) continue;
            if (!fixed[static_cast<std::size_t>(c)] &&
                plan.specs[static_cast<std::size_t>(c)].code == KernelId::NortonCapacitor) {
                if (cap >= 0) unique = false;
                cap = c;
                cap_sign = sign;
            } else {
                residual += sign * init.branch_current[c];
            }
        }
        if (cap >= 0 && unique) {
            init.branch_current[cap] = -residual * cap_sign;
            fixed[static_cast<std::size_t>(cap)] = 1;
        }
    }
    return init;
}

// --- serial reference stepper ----------------------------------------------

namespace {

struct ControlSource {
    enum class Kind { BlockLive, BlockShadow, MeterVoltage, MeterCurrent };
    Kind kind = Kind::BlockLive;
    int index = -1;
    double sign = 1.0;
};

/// Resolved control wiring shared with the compiler's semantics: live edges,
/// shadow reads for delay inputs / broken loop bindings / actuator commands,
/// and a deterministic evaluation order.
struct ControlPlan {
    std::vector<int> block_order;                          // canonical -> model index
    std::vector<std::vector<double>> consts;               // per block
    std::vector<std::vector<ControlSource>> inputs;        // per block
    std::vector<int> eval_order;                           // canonical indices
    std::vector<int> latch;                                // producers to shadow, ascending
    std::vector<int> actuator_block;                       // per canonical component, -1 none
};

ControlPlan analyze_control(const NetworkModel& model, const ElectricalPlan& eplan, double dt) {
    ControlPlan plan;
    plan.block_order = canonical_block_order(model);
    const int nblocks = static_cast<int>(plan.block_order.size());

    std::map<std::string, int> block_pos;
    for (int b = 0; b < nblocks; ++b) {
        block_pos[model.control_blocks[static_cast<std::size_t>(plan.block_order[b])].id] = b;
    }
    std::map<std::string, int> comp_pos;
    for (int c = 0; c < eplan.component_count(); ++c) {
        comp_pos[model.components[static_cast<std::size_t>(eplan.comp_order[c])].id] = c;
    }
    std::map<std::string, int> node_pos;
    for (std::size_t i = 0; i < model.nodes.size(); ++i) {
        node_pos[model.nodes[i]] = static_cast<int>(i);
    }

    struct MeterTarget {
        bool voltage = true;
        int index = -1;
    };
    std::map<std::string, MeterTarget> meters;
    for (const auto& cp : model.couplings) {
        if (cp.direction != CouplingDirection::Meter) continue;
        auto node = node_pos.find(cp.electrical_ref);
        if (node != node_pos.end()) {
            meters[cp.signal_ref] = {true, node->second};
        } else {
            meters[cp.signal_ref] = {false, comp_pos.at(cp.electrical_ref)};
        }
    }

    // Block-to-block bindings for loop analysis; delay inputs are always
    // previous-pass reads and stay out of the edge set.
    struct BindingRef {
        int consumer;
        std::size_t input_pos;
    };
    std::vector<graphs::Binding> bindings;
    std::vector<BindingRef> binding_refs;
    plan.consts.resize(static_cast<std::size_t>(nblocks));
    plan.inputs.resize(static_cast<std::size_t>(nblocks));
    for (int b = 0; b < nblocks; ++b) {
        const auto& block = model.control_blocks[static_cast<std::size_t>(plan.block_order[b])];
        plan.consts[static_cast<std::size_t>(b)] = bake_block(block, dt);
        for (std::size_t j = 0; j < block.inputs.size(); ++j) {
            const SignalRef& in = block.inputs[j];
            ControlSource src;
            src.sign = in.sign;
            auto producer = block_pos.find(in.id);
            if (producer != block_pos.end()) {
                src.kind = block.kind == BlockKind::Delay ? ControlSource::Kind::BlockShadow
                                                          : ControlSource::Kind::BlockLive;
                src.index = producer->second;
                if (block.kind != BlockKind::Delay) {
                    bindings.push_back({producer->second, b, block.kind == BlockKind::Integrator});
                    binding_refs.push_back({b, j});
                }
            } else {
                const MeterTarget meter = meters.at(in.id);
                src.kind = meter.voltage ? ControlSource::Kind::MeterVoltage
                                         : ControlSource::Kind::MeterCurrent;
                src.index = meter.index;
            }
            plan.inputs[static_cast<std::size_t>(b)].push_back(src);
        }
    }

    const graphs::LoopBreakPlan broken = graphs::break_loops(nblocks, bindings);
    std::set<int> latch_set;
    const auto shadow_binding = [&](int binding_index) {
        const BindingRef ref = binding_refs[static_cast<std::size_t>(binding_index)];
        ControlSource& src =
            plan.inputs[static_cast<std::size_t>(ref.consumer)][ref.input_pos];
        src.kind = ControlSource::Kind::BlockShadow;
        latch_set.insert(src.index);
    };
    for (int idx : broken.state_bindings) shadow_binding(idx);
    for (const auto& ins : broken.insertions) shadow_binding(ins.binding);

    // Delay inputs and actuator commands always read the previous pass.
    for (int b = 0; b < nblocks; ++b) {
        for (const auto& src : plan.inputs[static_cast<std::size_t>(b)]) {
            if (src.kind == ControlSource::Kind::BlockShadow) latch_set.insert(src.index);
        }
    }
    plan.actuator_block.assign(static_cast<std::size_t>(eplan.component_count()), -1);
    for (const auto& cp : model.couplings) {
        if (cp.direction != CouplingDirection::Actuator) continue;
        const int comp = comp_pos.at(cp.electrical_ref);
        const int producer = block_pos.at(cp.signal_ref);
        plan.actuator_block[static_cast<std::size_t>(comp)] = producer;
        latch_set.insert(producer);
    }
    plan.latch.assign(latch_set.begin(), latch_set.end());

    // Evaluation order: any topological order of the live edges gives the
    // same values; Kahn with ascending tie-break keeps it reproducible.
    graphs::Digraph live(static_cast<std::size_t>(nblocks));
    std::vector<int> indegree(static_cast<std::size_t>(nblocks), 0);
    for (std::size_t i = 0; i < bindings.size(); ++i) {
        if (broken.broken(static_cast<int>(i))) continue;
        live.add_edge(bindings[i].producer, bindings[i].consumer);
        ++indegree[static_cast<std::size_t>(bindings[i].consumer)];
    }
    std::set<int> ready;
    for (int b = 0; b < nblocks; ++b) {
        if (indegree[static_cast<std::size_t>(b)] == 0) ready.insert(b);
    }
    while (!ready.empty()) {
        const int b = *ready.begin();
        ready.erase(ready.begin());
        plan.eval_order.push_back(b);
        for (int w : live.adj[static_cast<std::size_t>(b)]) {
            if (--indegree[static_cast<std::size_t>(w)] == 0) ready.insert(w);
        }
    }
    if (static_cast<int>(plan.eval_order.size()) != nblocks) {
        fail(ErrorCode::CycleDetected, "", "control graph still cyclic after loop breaking");
    }
    return plan;
}

struct ChannelSlot {
    enum class Kind { Voltage, Current, BlockOutput };
    Kind kind = Kind::Voltage;
    int index = -1;
};

std::vector<ChannelSlot> resolve_channels(const NetworkModel& model, const ElectricalPlan& eplan,
                                          const ControlPlan& cplan) {
    std::map<std::string, int> comp_pos, block_pos, node_pos;
    for (int c = 0; c < eplan.component_count(); ++c) {
        comp_pos[model.components[static_cast<std::size_t>(eplan.comp_order[c])].id] = c;
    }
    for (std::size_t b = 0; b < cplan.block_order.size(); ++b) {
        block_pos[model.control_blocks[static_cast<std::size_t>(cplan.block_order[b])].id] =
            static_cast<int>(b);
    }
    for (std::size_t i = 0; i < model.nodes.size(); ++i) {
        node_pos[model.nodes[i]] = static_cast<int>(i);
    }
    std::map<std::string, std::pair<bool, std::string>> meters;
    for (const auto& cp : model.couplings) {
        if (cp.direction == CouplingDirection::Meter) {
            meters[cp.signal_ref] = {node_pos.count(cp.electrical_ref) != 0U, cp.electrical_ref};
        }
    }

    std::vector<ChannelSlot> slots;
    for (const auto& ch : model.task.channels) {
        switch (ch.kind) {
            case ChannelKind::NodeVoltage:
                slots.push_back({ChannelSlot::Kind::Voltage, node_pos.at(ch.ref)});
                break;
            case ChannelKind::BranchCurrent:
                slots.push_back({ChannelSlot::Kind::Current, comp_pos.at(ch.ref)});
                break;
            case ChannelKind::Signal: {
                auto blk = block_pos.find(ch.ref);
                if (blk != block_pos.end()) {
                    slots.push_back({ChannelSlot::Kind::BlockOutput, blk->second});
                } else {
                    const auto& [is_node, ref] = meters.at(ch.ref);
                    if (is_node) {
                        slots.push_back({ChannelSlot::Kind::Voltage, node_pos.at(ref)});
                    } else {
                        slots.push_back({ChannelSlot::Kind::Current, comp_pos.at(ref)});
                    }
                }
                break;
            }
        }
    }
    return slots;
}

}  // namespace

WaveformSet run_serial(const NetworkModel& model, const TaskConfig& config,
                       const RunOptions& options) {
    const double dt = config.dt;
    const ElectricalPlan eplan = build_electrical_plan(model, dt);
    const ControlPlan cplan = analyze_control(model, eplan, dt);
    const LuSymbolic symbolic = lu_symbolic(eplan.pattern);
    const int n = eplan.node_count;
    const int m = eplan.component_count();
    const int nblocks = static_cast<int>(cplan.block_order.size());
    const int steps = options.steps_override >= 0 ? options.steps_override : config.steps();

    const InitialElectrical init = build_initial_state(model, eplan);
    Eigen::VectorXd voltage = init.node_voltage;
    Eigen::VectorXd current = init.branch_current;
    std::vector<double> g(static_cast<std::size_t>(m), 0.0);
    std::vector<double> hist(static_cast<std::size_t>(m), 0.0);
    std::vector<double> contrib(static_cast<std::size_t>(2 * m), 0.0);
    std::vector<double> sw_state(static_cast<std::size_t>(m), 0.0);
    std::vector<double> sw_changed(static_cast<std::size_t>(m), 0.0);
    for (int c = 0; c < m; ++c) {
        if (eplan.specs[static_cast<std::size_t>(c)].code == KernelId::NortonSwitch) {
            sw_state[static_cast<std::size_t>(c)] = eplan.specs[static_cast<std::size_t>(c)].consts[2];
        }
    }
    std::vector<double> matrix_values(static_cast<std::size_t>(eplan.pattern.nnz()), 0.0);
    std::vector<double> l_values(static_cast<std::size_t>(symbolic.l_nnz()), 0.0);
    std::vector<double> u_values(static_cast<std::size_t>(symbolic.u_nnz()), 0.0);
    std::vector<double> scratch(static_cast<std::size_t>(n), 0.0);
    Eigen::VectorXd injections = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);

    std::vector<double> out(static_cast<std::size_t>(nblocks), 0.0);
    std::vector<double> shadow(static_cast<std::size_t>(nblocks), 0.0);
    std::vector<std::vector<double>> block_state(static_cast<std::size_t>(nblocks));
    for (int b = 0; b < nblocks; ++b) {
        const auto& block = model.control_blocks[static_cast<std::size_t>(cplan.block_order[b])];
        block_state[static_cast<std::size_t>(b)].assign(
            static_cast<std::size_t>(block_state_slots(block.kind)), 0.0);
    }

    const std::vector<ChannelSlot> channels = resolve_channels(model, eplan, cplan);
    WaveformSet waves;
    for (const auto& ch : model.task.channels) waves.channels.push_back(ch.spelled());
    waves.width = 1;
    waves.values.resize(steps, static_cast<Eigen::Index>(channels.size()));

    bool dirty = true;
    int factor_count = 0;

    auto measured_from = std::chrono::steady_clock::now();
    for (int step = 0; step < steps; ++step) {
        if (step == options.warmup_steps) measured_from = std::chrono::steady_clock::now();
        const double t = static_cast<double>(step + 1) * dt;

        // Norton updates, ascending component id.
        for (int c = 0; c < m; ++c) {
            const CompanionSpec& spec = eplan.specs[static_cast<std::size_t>(c)];
            const auto [a, b] = eplan.terminals[static_cast<std::size_t>(c)];
            const double vs = (b >= 0 ? voltage[b] : 0.0) - (a >= 0 ? voltage[a] : 0.0);
            const int actuator = cplan.actuator_block[static_cast<std::size_t>(c)];
            const double cmd = actuator >= 0 ? shadow[static_cast<std::size_t>(actuator)] : 0.0;
            double state[2] = {sw_state[static_cast<std::size_t>(c)], 0.0};
            norton_eval(spec, vs, current[c], cmd, t, state, g[static_cast<std::size_t>(c)],
                        hist[static_cast<std::size_t>(c)]);
            sw_state[static_cast<std::size_t>(c)] = state[0];
            sw_changed[static_cast<std::size_t>(c)] = state[1];
        }

        // Injection contributions.
        for (int c = 0; c < m; ++c) {
            contrib[static_cast<std::size_t>(2 * c)] = hist[static_cast<std::size_t>(c)];
            contrib[static_cast<std::size_t>(2 * c + 1)] = -hist[static_cast<std::size_t>(c)];
        }

        // Refactorization only when a switch changed state.
        for (int c = 0; c < m; ++c) {
            if (sw_changed[static_cast<std::size_t>(c)] != 0.0) dirty = true;
        }
        if (dirty && n > 0) {
            for (int k = 0; k < eplan.pattern.nnz(); ++k) {
                double sum = 0.0;
                for (const auto& [comp, sign] : eplan.entry_terms[static_cast<std::size_t>(k)]) {
                    sum += sign * g[static_cast<std::size_t>(comp)];
                }
                matrix_values[static_cast<std::size_t>(k)] = sum;
            }
            lu_factor(symbolic, eplan.pattern, matrix_values.data(), 1, l_values.data(),
                      u_values.data(), scratch.data());
            ++factor_count;
            dirty = false;
        } else if (dirty) {
            ++factor_count;
            dirty = false;
        }

        // Gather and solve.
        for (int node = 0; node < n; ++node) {
            double sum = 0.0;
            for (int slot : eplan.node_gather[static_cast<std::size_t>(node)]) {
                sum += contrib[static_cast<std::size_t>(slot)];
            }
            injections[node] = sum;
        }
        rhs = injections;
        if (n > 0) {
            lu_solve(symbolic, l_values.data(), u_values.data(), 1, rhs.data());
        }
        voltage = rhs;
        for (int c = 0; c < m; ++c) {
            const auto [a, b] = eplan.terminals[static_cast<std::size_t>(c)];
            const double vs = (b >= 0 ? voltage[b] : 0.0) - (a >= 0 ? voltage[a] : 0.0);
            current[c] = g[static_cast<std::size_t>(c)] * vs + hist[static_cast<std::size_t>(c)];
        }

        for (int node = 0; node < n; ++node) {
            if (!(std::abs(voltage[node]) <= options.divergence_limit)) {
                fail(ErrorCode::NonFiniteState, model.nodes[static_cast<std::size_t>(node)],
                     "node voltage diverged at step " + std::to_string(step));
            }
        }
        if (options.check_kcl && n > 0) {
            double residual = 0.0;
            for (int row = 0; row < n; ++row) {
                double sum = 0.0;
                for (int k = eplan.pattern.row_ptr[static_cast<std::size_t>(row)];
                     k < eplan.pattern.row_ptr[static_cast<std::size_t>(row) + 1]; ++k) {
                    sum += matrix_values[static_cast<std::size_t>(k)] *
                           voltage[eplan.pattern.col_idx[static_cast<std::size_t>(k)]];
                }
                residual = std::max(residual, std::abs(sum - injections[row]));
            }
            const double bound = 1e-9 * injections.cwiseAbs().maxCoeff();
            if (residual > bound) {
                fail(ErrorCode::SingularSystem, "step " + std::to_string(step),
                     "KCL residual " + format_g17(residual) + " exceeds " + format_g17(bound));
            }
        }
        if (options.solve_probe) options.solve_probe(step, injections, voltage);

        // Control phase: meters read this pass's solution, shadow reads the
        // previous pass.
        for (int b : cplan.eval_order) {
            const auto& block = model.control_blocks[static_cast<std::size_t>(cplan.block_order[b])];
            const auto& consts = cplan.consts[static_cast<std::size_t>(b)];
            const auto& sources = cplan.inputs[static_cast<std::size_t>(b)];
            auto& state = block_state[static_cast<std::size_t>(b)];

            double u[2] = {0.0, 0.0};
            double sum = 0.0;
            for (std::size_t j = 0; j < sources.size(); ++j) {
                const ControlSource& src = sources[j];
                double value = 0.0;
                switch (src.kind) {
                    case ControlSource::Kind::BlockLive: value = out[static_cast<std::size_t>(src.index)]; break;
                    case ControlSource::Kind::BlockShadow: value = shadow[static_cast<std::size_t>(src.index)]; break;
                    case ControlSource::Kind::MeterVoltage: value = voltage[src.index]; break;
                    case ControlSource::Kind::MeterCurrent: value = current[src.index]; break;
                }
                value *= src.sign;
                if (j < 2) u[j] = value;
                sum += value;
            }

            double y = 0.0;
            switch (block.kind) {
                case BlockKind::Gain: y = consts[0] * u[0]; break;
                case BlockKind::Sum: y = sum; break;
                case BlockKind::Integrator:
                    y = kern::ctl_integrate(consts[0], state[0], state[1], u[0]);
                    state[0] = y;
                    state[1] = u[0];
                    break;
                case BlockKind::FirstOrderLag:
                    y = kern::ctl_lag(consts[0], consts[1], state[0], state[1], u[0]);
                    state[0] = y;
                    state[1] = u[0];
                    break;
                case BlockKind::Limiter: y = kern::ctl_clamp(u[0], consts[0], consts[1]); break;
                case BlockKind::PiController:
                    state[0] = kern::ctl_integrate(consts[1], state[0], state[1], u[0]);
                    state[1] = u[0];
                    y = consts[0] * u[0] + state[0];
                    break;
                case BlockKind::Comparator: y = u[0] >= u[1] ? 1.0 : 0.0; break;
                case BlockKind::Constant: y = consts[0]; break;
                case BlockKind::Delay: y = u[0]; break;  // input source is a shadow read
            }
            out[static_cast<std::size_t>(b)] = y;
        }

        waves.time.push_back(t);
        for (std::size_t ch = 0; ch < channels.size(); ++ch) {
            double value = 0.0;
            switch (channels[ch].kind) {
                case ChannelSlot::Kind::Voltage: value = voltage[channels[ch].index]; break;
                case ChannelSlot::Kind::Current: value = current[channels[ch].index]; break;
                case ChannelSlot::Kind::BlockOutput:
                    value = out[static_cast<std::size_t>(channels[ch].index)];
                    break;
            }
            waves.values(step, static_cast<Eigen::Index>(ch)) = value;
        }

        for (int p : cplan.latch) {
            shadow[static_cast<std::size_t>(p)] = out[static_cast<std::size_t>(p)];
        }
    }

    if (options.factor_count != nullptr) *options.factor_count = factor_count;
    if (options.measured_seconds != nullptr) {
        *options.measured_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - measured_from)
                .count();
    }
    return waves;
}

}  // namespace emtgrid
