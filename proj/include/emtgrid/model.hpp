#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "emtgrid/common.hpp"

namespace emtgrid {

using ParamValue = std::variant<double, std::string, std::vector<double>>;
using ParamMap = std::map<std::string, ParamValue>;

struct ComponentInstance {
    std::string id;
    ComponentKind kind = ComponentKind::Resistor;
    ParamMap params;
    std::vector<std::string> terminals;  // node ids, "0" is ground

    bool operator==(const ComponentInstance&) const = default;
};

/// One signed input reference of a control block ("-x" in the document
/// negates; signs are only meaningful on sum blocks).
struct SignalRef {
    std::string id;
    double sign = 1.0;

    bool operator==(const SignalRef&) const = default;
};

struct ControlBlock {
    std::string id;
    BlockKind kind = BlockKind::Gain;
    ParamMap params;
    std::vector<SignalRef> inputs;

    [[nodiscard]] bool feedthrough() const { return direct_feedthrough(kind); }

    bool operator==(const ControlBlock&) const = default;
};

enum class CouplingDirection { Meter, Actuator };

struct Coupling {
    CouplingDirection direction = CouplingDirection::Meter;
    std::string electrical_ref;  // node or component id (meter), component id (actuator)
    std::string signal_ref;      // published signal name (meter), source signal (actuator)

    bool operator==(const Coupling&) const = default;
};

enum class Strategy { Serial, LayerParallel, Vectorized };

std::string_view to_string(Strategy strategy);
Strategy strategy_from(std::string_view name, const std::string& where);

enum class ChannelKind { NodeVoltage, BranchCurrent, Signal };

/// A recorded channel, written "v:<node>", "i:<component>" or "s:<signal>".
struct Channel {
    ChannelKind kind = ChannelKind::NodeVoltage;
    std::string ref;

    [[nodiscard]] std::string spelled() const;
    bool operator==(const Channel&) const = default;
};

Channel channel_from(std::string_view spelled, const std::string& where);

struct TaskConfig {
    double dt = 0.0;
    double duration = 0.0;
    std::vector<Channel> channels;
    std::string device_profile;
    Strategy strategy = Strategy::Serial;

    [[nodiscard]] int steps() const;

    bool operator==(const TaskConfig&) const = default;
};

struct NetworkModel {
    std::vector<std::string> nodes;  // non-ground, document order
    std::vector<ComponentInstance> components;
    std::vector<ControlBlock> control_blocks;
    std::vector<Coupling> couplings;
    TaskConfig task;

    bool operator==(const NetworkModel&) const = default;
};

struct ValidationIssue {
    enum class Severity { Error, Warning };
    Severity severity = Severity::Error;
    std::string code;     // e.g. "FloatingNode", "AlgebraicLoopPresent"
    std::string where;    // offending identifier or location
    std::string message;

    bool operator==(const ValidationIssue&) const = default;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;

    [[nodiscard]] bool runnable() const {
        for (const auto& i : issues) {
            if (i.severity == ValidationIssue::Severity::Error) return false;
        }
        return true;
    }
    [[nodiscard]] bool empty() const { return issues.empty(); }

    bool operator==(const ValidationReport&) const = default;
};

/// Parses a model/task document, expands pv_subsystem macro components and
/// checks every structural invariant. Throws Error on any violation.
NetworkModel parse_model(const std::string& document);

/// Canonical document text for a model; parse_model(serialize_model(m)) == m.
std::string serialize_model(const NetworkModel& model);

/// Structural analysis of an already-built model. Never throws; reference
/// violations come back as error-severity issues, soft findings (floating
/// nodes, algebraic loops) as warnings. Pure: identical models yield
/// identical reports.
ValidationReport validate(const NetworkModel& model);

// --- lookups shared by the compiler and the serial stepper ---

/// Index of a node id within model.nodes, -1 for ground ("0").
/// Throws DanglingReference if undeclared.
int node_index(const NetworkModel& model, const std::string& id);

/// Components sorted by ascending id: the canonical stamping and
/// accumulation order used everywhere.
std::vector<int> canonical_component_order(const NetworkModel& model);

/// Control blocks sorted by ascending id.
std::vector<int> canonical_block_order(const NetworkModel& model);

double require_number(const ParamMap& params, const std::string& key,
                      const std::string& where);
double number_or(const ParamMap& params, const std::string& key, double fallback);

/// Control blocks per expanded pv_subsystem instance.
constexpr int kPvControlBlockCount = 78;

}  // namespace emtgrid
