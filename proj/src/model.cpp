#include "emtgrid/model.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include <json.hpp>

#include "emtgrid/graphs.hpp"

namespace emtgrid {

using nlohmann::json;

std::string_view to_string(Strategy strategy) {
    switch (strategy) {
        case Strategy::Serial: return "serial";
        case Strategy::LayerParallel: return "layer_parallel";
        case Strategy::Vectorized: return "vectorized";
    }
    return "serial";
}

Strategy strategy_from(std::string_view name, const std::string& where) {
    if (name == "serial") return Strategy::Serial;
    if (name == "layer_parallel") return Strategy::LayerParallel;
    if (name == "vectorized") return Strategy::Vectorized;
    fail(ErrorCode::MalformedDocument, where,
         "unknown strategy '" + std::string(name) + "'");
}

std::string Channel::spelled() const {
    switch (kind) {
        case ChannelKind::NodeVoltage: return "v:" + ref;
        case ChannelKind::BranchCurrent: return "i:" + ref;
        case ChannelKind::Signal: return "s:" + ref;
    }
    return ref;
}

Channel channel_from(std::string_view spelled, const std::string& where) {
    if (spelled.size() > 2 && spelled[1] == ':') {
        const std::string ref(spelled.substr(2));
        switch (spelled[0]) {
            case 'v': return {ChannelKind::NodeVoltage, ref};
            case 'i': return {ChannelKind::BranchCurrent, ref};
            case 's': return {ChannelKind::Signal, ref};
            default: break;
        }
    }
    fail(ErrorCode::MalformedDocument, where,
         "channel must be spelled v:<node>, i:<component> or s:<signal>, got '" +
             std::string(spelled) + "'");
}

int TaskConfig::steps() const {
    return static_cast<int>(std::ceil(duration / dt - 1e-9));
}

double require_number(const ParamMap& params, const std::string& key,
                      const std::string& where) {
    auto it = params.find(key);
    if (it == params.end() || !std::holds_alternative<double>(it->second)) {
        fail(ErrorCode::InvalidParameter, where, "missing numeric parameter '" + key + "'");
    }
    return std::get<double>(it->second);
}

double number_or(const ParamMap& params, const std::string& key, double fallback) {
    auto it = params.find(key);
    if (it == params.end()) return fallback;
    if (!std::holds_alternative<double>(it->second)) {
        fail(ErrorCode::InvalidParameter, key, "parameter '" + key + "' must be numeric");
    }
    return std::get<double>(it->second);
}

namespace {

void require_keys(const json& obj, std::initializer_list<const char*> allowed,
                  const std::string& where) {
    for (const auto& item : obj.items()) {
        bool known = false;
        for (const char* k : allowed) {
            if (item.key() == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            fail(ErrorCode::MalformedDocument, where,
                 "unknown key '" + item.key() + "'");
        }
    }
}

ParamValue param_value_from(const json& value, const std::string& where) {
    if (value.is_number()) return value.get<double>();
    if (value.is_string()) return value.get<std::string>();
    if (value.is_array()) {
        std::vector<double> list;
        for (const auto& v : value) {
            if (!v.is_number()) {
                fail(ErrorCode::MalformedDocument, where,
                     "array parameters must hold numbers only");
            }
            list.push_back(v.get<double>());
        }
        return list;
    }
    fail(ErrorCode::MalformedDocument, where, "parameter must be number, string or array");
}

json param_value_to_json(const ParamValue& value) {
    if (std::holds_alternative<double>(value)) return std::get<double>(value);
    if (std::holds_alternative<std::string>(value)) return std::get<std::string>(value);
    return std::get<std::vector<double>>(value);
}

SignalRef signal_ref_from(const std::string& spelled) {
    if (!spelled.empty() && spelled[0] == '-') return {spelled.substr(1), -1.0};
    if (!spelled.empty() && spelled[0] == '+') return {spelled.substr(1), 1.0};
    return {spelled, 1.0};
}

std::string signal_ref_spelled(const SignalRef& ref) {
    return ref.sign < 0 ? "-" + ref.id : ref.id;
}

void check_positive(double value, const std::string& name, const std::string& where) {
    if (!(value > 0.0) || !std::isfinite(value)) {
        fail(ErrorCode::InvalidParameter, where, name + " must be strictly positive");
    }
}

void check_param_keys(const ParamMap& params, std::initializer_list<const char*> allowed,
                      const std::string& where) {
    for (const auto& [key, value] : params) {
        bool known = false;
        for (const char* k : allowed) {
            if (key == k) {
                known = true;
                break;
            }
        }
        if (!known) {
            fail(ErrorCode::InvalidParameter, where, "unknown parameter '" + key + "'");
        }
    }
}

/// Per-kind parameter and arity validation for one component.
void check_component(const ComponentInstance& c) {
    const std::string& where = c.id;
    const std::size_t arity = c.kind == ComponentKind::PvSubsystem ? 1 : 2;
    if (c.terminals.size() != arity) {
        fail(ErrorCode::InvalidParameter, where,
             std::string(to_string(c.kind)) + " needs " + std::to_string(arity) +
                 " terminals, got " + std::to_string(c.terminals.size()));
    }
    switch (c.kind) {
        case ComponentKind::Resistor:
            check_param_keys(c.params, {"resistance"}, where);
            check_positive(require_number(c.params, "resistance", where), "resistance", where);
            break;
        case ComponentKind::Inductor:
            check_param_keys(c.params, {"inductance", "i0"}, where);
            check_positive(require_number(c.params, "inductance", where), "inductance", where);
            break;
        case ComponentKind::Capacitor:
            check_param_keys(c.params, {"capacitance", "v0"}, where);
            check_positive(require_number(c.params, "capacitance", where), "capacitance", where);
            break;
        case ComponentKind::SeriesRL:
            check_param_keys(c.params, {"resistance", "inductance", "i0"}, where);
            check_positive(require_number(c.params, "resistance", where), "resistance", where);
            check_positive(require_number(c.params, "inductance", where), "inductance", where);
            break;
        case ComponentKind::VoltageSource:
            check_param_keys(c.params, {"magnitude", "frequency", "phase", "rs"}, where);
            require_number(c.params, "magnitude", where);
            check_positive(number_or(c.params, "rs", 1e-3), "rs", where);
            break;
        case ComponentKind::CurrentSource:
            check_param_keys(c.params, {"magnitude", "frequency", "phase"}, where);
            require_number(c.params, "magnitude", where);
            break;
        case ComponentKind::Switch: {
            check_param_keys(c.params, {"state", "toggle_times"}, where);
            auto it = c.params.find("state");
            if (it == c.params.end() || !std::holds_alternative<std::string>(it->second) ||
                (std::get<std::string>(it->second) != "open" &&
                 std::get<std::string>(it->second) != "closed")) {
                fail(ErrorCode::InvalidParameter, where,
                     "switch state must be \"open\" or \"closed\"");
            }
            auto tt = c.params.find("toggle_times");
            if (tt != c.params.end()) {
                if (!std::holds_alternative<std::vector<double>>(tt->second)) {
                    fail(ErrorCode::InvalidParameter, where, "toggle_times must be an array");
                }
                const auto& times = std::get<std::vector<double>>(tt->second);
                if (!std::is_sorted(times.begin(), times.end())) {
                    fail(ErrorCode::InvalidParameter, where, "toggle_times must ascend");
                }
            }
            break;
        }
        case ComponentKind::ControlledCurrentSource:
            check_param_keys(c.params, {"gain"}, where);
            number_or(c.params, "gain", 1.0);
            break;
        case ComponentKind::PvSubsystem:
            check_param_keys(c.params, {"irradiance", "temperature"}, where);
            if (require_number(c.params, "irradiance", where) < 0.0) {
                fail(ErrorCode::InvalidParameter, where, "irradiance must be non-negative");
            }
            require_number(c.params, "temperature", where);
            break;
    }
}

struct BlockShape {
    int min_inputs;
    int max_inputs;  // -1: unbounded
    std::vector<const char*> required;
};

BlockShape block_shape(BlockKind kind) {
    switch (kind) {
        case BlockKind::Gain: return {1, 1, {"k"}};
        case BlockKind::Sum: return {2, -1, {}};
        case BlockKind::Integrator: return {1, 1, {}};
        case BlockKind::FirstOrderLag: return {1, 1, {"T"}};
        case BlockKind::Limiter: return {1, 1, {"min", "max"}};
        case BlockKind::PiController: return {1, 1, {"kp", "ki"}};
        case BlockKind::Comparator: return {2, 2, {}};
        case BlockKind::Constant: return {0, 0, {"value"}};
        case BlockKind::Delay: return {1, 1, {}};
    }
    return {0, 0, {}};
}

void check_block(const ControlBlock& b) {
    switch (b.kind) {
        case BlockKind::Gain: check_param_keys(b.params, {"k"}, b.id); break;
        case BlockKind::FirstOrderLag: check_param_keys(b.params, {"T", "k"}, b.id); break;
        case BlockKind::Limiter: check_param_keys(b.params, {"min", "max"}, b.id); break;
        case BlockKind::PiController: check_param_keys(b.params, {"kp", "ki"}, b.id); break;
        case BlockKind::Constant: check_param_keys(b.params, {"value"}, b.id); break;
        default: check_param_keys(b.params, {}, b.id); break;
    }
    const BlockShape shape = block_shape(b.kind);
    const int n = static_cast<int>(b.inputs.size());
    if (n < shape.min_inputs || (shape.max_inputs >= 0 && n > shape.max_inputs)) {
        fail(ErrorCode::ArityMismatch, b.id,
             std::string(to_string(b.kind)) + " expects " +
                 std::to_string(shape.min_inputs) +
                 (shape.max_inputs < 0 ? "+ inputs" :
                  shape.max_inputs == shape.min_inputs ? " input(s)" :
                      ".." + std::to_string(shape.max_inputs) + " inputs") +
                 ", got " + std::to_string(n));
    }
    for (const char* key : shape.required) require_number(b.params, key, b.id);
    if (b.kind == BlockKind::FirstOrderLag) {
        check_positive(require_number(b.params, "T", b.id), "T", b.id);
    }
    if (b.kind == BlockKind::Limiter &&
        require_number(b.params, "min", b.id) > require_number(b.params, "max", b.id)) {
        fail(ErrorCode::InvalidParameter, b.id, "limiter min must not exceed max");
    }
    if (b.kind != BlockKind::Sum) {
        for (const auto& in : b.inputs) {
            if (in.sign < 0) {
                fail(ErrorCode::InvalidParameter, b.id,
                     "signed inputs are only meaningful on sum blocks");
            }
        }
    }
}

/// Expands one pv_subsystem macro into its electrical triple and the fixed
/// 78-block regulator chain: a dc-link voltage loop (reference, error sum,
/// PI, limiter), 17 parallel branches of 4 smoothing lags feeding a mixing
/// sum and output scaling, a one-step command delay driving the grid-side
/// source, plus an over-voltage comparator and an error integrator tap.
struct PvExpansion {
    std::string dc_node;
    std::vector<ComponentInstance> components;
    std::vector<ControlBlock> blocks;
    std::vector<Coupling> couplings;
};

PvExpansion expand_pv(const ComponentInstance& pv) {
    constexpr double kDcLinkFarads = 0.005;
    constexpr double kDcReferenceVolts = 800.0;
    constexpr double kTripVolts = 880.0;
    constexpr double kMaxCommandAmps = 50.0;
    constexpr int kLagBranches = 17;
    constexpr int kLagDepth = 4;

    const std::string& id = pv.id;
    const std::string grid_node = pv.terminals.at(0);
    const double irradiance = require_number(pv.params, "irradiance", id);
    const double temperature = require_number(pv.params, "temperature", id);
    // Simple irradiance/temperature photocurrent law, 10 A at STC.
    const double photocurrent =
        10.0 * (irradiance / 1000.0) * (1.0 + 0.0004 * (temperature - 25.0));

    PvExpansion out;
    out.dc_node = id + ".dc";

    out.components.push_back({id + ".src",
                              ComponentKind::CurrentSource,
                              {{"frequency", 0.0}, {"magnitude", photocurrent}, {"phase", 0.0}},
                              {out.dc_node, "0"}});
    out.components.push_back({id + ".cap",
                              ComponentKind::Capacitor,
                              {{"capacitance", kDcLinkFarads}, {"v0", kDcReferenceVolts}},
                              {out.dc_node, "0"}});
    out.components.push_back({id + ".inj",
                              ComponentKind::ControlledCurrentSource,
                              {{"gain", 1.0}},
                              {grid_node, out.dc_node}});

    auto block = [&out](std::string bid, BlockKind kind, ParamMap params,
                        std::vector<SignalRef> inputs) {
        out.blocks.push_back({std::move(bid), kind, std::move(params), std::move(inputs)});
    };

    block(id + ".ref", BlockKind::Constant, {{"value", kDcReferenceVolts}}, {});
    block(id + ".err", BlockKind::Sum, {}, {{id + ".vdc", 1.0}, {id + ".ref", -1.0}});
    block(id + ".pi", BlockKind::PiController, {{"ki", 20.0}, {"kp", 0.5}},
          {{id + ".err", 1.0}});
    block(id + ".lim", BlockKind::Limiter, {{"max", kMaxCommandAmps}, {"min", 0.0}},
          {{id + ".pi", 1.0}});

    std::vector<SignalRef> mix_inputs;
    for (int branch = 0; branch < kLagBranches; ++branch) {
        for (int stage = 0; stage < kLagDepth; ++stage) {
            const std::string bid =
                id + ".f" + std::to_string(branch) + "_" + std::to_string(stage);
            const std::string src =
                stage == 0 ? id + ".lim"
                           : id + ".f" + std::to_string(branch) + "_" + std::to_string(stage - 1);
            block(bid, BlockKind::FirstOrderLag, {{"T", 0.001}, {"k", 1.0}}, {{src, 1.0}});
        }
        mix_inputs.push_back({id + ".f" + std::to_string(branch) + "_" +
                                  std::to_string(kLagDepth - 1),
                              1.0});
    }
    block(id + ".mix", BlockKind::Sum, {}, std::move(mix_inputs));
    block(id + ".scale", BlockKind::Gain, {{"k", 1.0 / kLagBranches}}, {{id + ".mix", 1.0}});
    block(id + ".cmd", BlockKind::Delay, {}, {{id + ".scale", 1.0}});
    block(id + ".trip", BlockKind::Constant, {{"value", kTripVolts}}, {});
    block(id + ".ovp", BlockKind::Comparator, {}, {{id + ".vdc", 1.0}, {id + ".trip", 1.0}});
    block(id + ".acc", BlockKind::Integrator, {}, {{id + ".err", 1.0}});

    out.couplings.push_back({CouplingDirection::Meter, out.dc_node, id + ".vdc"});
    out.couplings.push_back({CouplingDirection::Actuator, id + ".inj", id + ".cmd"});
    return out;
}

/// Reference resolution and uniqueness checks, shared between parse (throwing
/// sink) and validate (collecting sink).
void check_model(const NetworkModel& model,
                 const std::function<void(ErrorCode, const std::string&, const std::string&)>& sink) {
    std::set<std::string> node_set;
    for (const auto& n : model.nodes) {
        if (n == "0") {
            sink(ErrorCode::DuplicateIdentifier, n, "ground \"0\" must not be declared");
        } else if (!node_set.insert(n).second) {
            sink(ErrorCode::DuplicateIdentifier, n, "node declared twice");
        }
    }

    std::set<std::string> component_ids;
    for (const auto& c : model.components) {
        if (!component_ids.insert(c.id).second) {
            sink(ErrorCode::DuplicateIdentifier, c.id, "component id declared twice");
        }
        for (const auto& t : c.terminals) {
            if (t != "0" && node_set.find(t) == node_set.end()) {
                sink(ErrorCode::DanglingReference, c.id,
                     "terminal references undeclared node '" + t + "'");
            }
        }
    }

    std::set<std::string> block_ids;
    for (const auto& b : model.control_blocks) {
        if (!block_ids.insert(b.id).second) {
            sink(ErrorCode::DuplicateIdentifier, b.id, "control block id declared twice");
        }
    }

    std::set<std::string> signal_ids;  // meter-published signals
    for (const auto& cp : model.couplings) {
        if (cp.direction == CouplingDirection::Meter) {
            if (!signal_ids.insert(cp.signal_ref).second) {
                sink(ErrorCode::DuplicateIdentifier, cp.signal_ref,
                     "meter signal published twice");
            }
            if (block_ids.count(cp.signal_ref) != 0U) {
                sink(ErrorCode::DuplicateIdentifier, cp.signal_ref,
                     "meter signal collides with a control block id");
            }
            const bool is_node = node_set.count(cp.electrical_ref) != 0U;
            const bool is_comp = component_ids.count(cp.electrical_ref) != 0U;
            if (is_node && is_comp) {
                sink(ErrorCode::DuplicateIdentifier, cp.electrical_ref,
                     "meter reference matches both a node and a component");
            } else if (!is_node && !is_comp) {
                sink(ErrorCode::DanglingReference, cp.electrical_ref,
                     "meter references neither a node nor a component");
            }
        }
    }

    std::set<std::string> actuated;
    for (const auto& cp : model.couplings) {
        if (cp.direction != CouplingDirection::Actuator) continue;
        if (block_ids.count(cp.signal_ref) == 0U) {
            sink(ErrorCode::DanglingReference, cp.signal_ref,
                 "actuator signal must be a control block output");
        }
        auto comp = std::find_if(model.components.begin(), model.components.end(),
                                 [&](const ComponentInstance& c) { return c.id == cp.electrical_ref; });
        if (comp == model.components.end()) {
            sink(ErrorCode::DanglingReference, cp.electrical_ref,
                 "actuator references unknown component");
        } else if (comp->kind != ComponentKind::ControlledCurrentSource) {
            sink(ErrorCode::InvalidParameter, cp.electrical_ref,
                 "actuator target must be a controlled_current_source");
        } else if (!actuated.insert(cp.electrical_ref).second) {
            sink(ErrorCode::DuplicateIdentifier, cp.electrical_ref,
                 "controlled source driven by two actuators");
        }
    }

    for (const auto& b : model.control_blocks) {
        for (const auto& in : b.inputs) {
            if (block_ids.count(in.id) == 0U && signal_ids.count(in.id) == 0U) {
                sink(ErrorCode::DanglingReference, b.id,
                     "input '" + in.id + "' resolves to no block output or meter signal");
            } else if (b.kind == BlockKind::Delay && block_ids.count(in.id) == 0U) {
                sink(ErrorCode::InvalidParameter, b.id,
                     "delay input must be a control block output");
            }
        }
    }

    if (!(model.task.dt > 0.0)) {
        sink(ErrorCode::InvalidParameter, "task.dt", "dt must be strictly positive");
    } else if (model.task.duration < model.task.dt) {
        sink(ErrorCode::InvalidParameter, "task.duration", "duration must be at least dt");
    }
    for (const auto& ch : model.task.channels) {
        bool ok = false;
        switch (ch.kind) {
            case ChannelKind::NodeVoltage: ok = node_set.count(ch.ref) != 0U; break;
            case ChannelKind::BranchCurrent: ok = component_ids.count(ch.ref) != 0U; break;
            case ChannelKind::Signal:
                ok = block_ids.count(ch.ref) != 0U || signal_ids.count(ch.ref) != 0U;
                break;
        }
        if (!ok) {
            sink(ErrorCode::DanglingReference, ch.spelled(), "channel does not resolve");
        }
    }
}

}  // namespace

NetworkModel parse_model(const std::string& document) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::MalformedDocument, "byte " + std::to_string(e.byte), e.what());
    }
    if (!doc.is_object()) {
        fail(ErrorCode::MalformedDocument, "/", "document root must be an object");
    }
    require_keys(doc, {"nodes", "components", "control", "couplings", "task"}, "/");

    NetworkModel model;
    for (const auto& n : doc.value("nodes", json::array())) {
        if (!n.is_string()) fail(ErrorCode::MalformedDocument, "/nodes", "node ids are strings");
        model.nodes.push_back(n.get<std::string>());
    }

    std::vector<ComponentInstance> raw_components;
    std::size_t index = 0;
    for (const auto& jc : doc.value("components", json::array())) {
        const std::string where = "/components/" + std::to_string(index++);
        require_keys(jc, {"id", "kind", "params", "terminals"}, where);
        ComponentInstance c;
        c.id = jc.value("id", "");
        if (c.id.empty()) fail(ErrorCode::MalformedDocument, where, "component id required");
        c.kind = component_kind_from(jc.value("kind", ""), c.id);
        const json params = jc.value("params", json::object());
        for (const auto& item : params.items()) {
            c.params[item.key()] = param_value_from(item.value(), c.id);
        }
        for (const auto& t : jc.value("terminals", json::array())) {
            if (!t.is_string()) fail(ErrorCode::MalformedDocument, c.id, "terminals are node ids");
            c.terminals.push_back(t.get<std::string>());
        }
        check_component(c);
        raw_components.push_back(std::move(c));
    }

    index = 0;
    for (const auto& jb : doc.value("control", json::array())) {
        const std::string where = "/control/" + std::to_string(index++);
        require_keys(jb, {"id", "kind", "params", "inputs"}, where);
        ControlBlock b;
        b.id = jb.value("id", "");
        if (b.id.empty()) fail(ErrorCode::MalformedDocument, where, "control block id required");
        b.kind = block_kind_from(jb.value("kind", ""), b.id);
        const json params = jb.value("params", json::object());
        for (const auto& item : params.items()) {
            b.params[item.key()] = param_value_from(item.value(), b.id);
        }
        for (const auto& in : jb.value("inputs", json::array())) {
            if (!in.is_string()) fail(ErrorCode::MalformedDocument, b.id, "inputs are signal ids");
            b.inputs.push_back(signal_ref_from(in.get<std::string>()));
        }
        check_block(b);
        model.control_blocks.push_back(std::move(b));
    }

    index = 0;
    for (const auto& jc : doc.value("couplings", json::array())) {
        const std::string where = "/couplings/" + std::to_string(index++);
        require_keys(jc, {"direction", "electrical_ref", "signal_ref"}, where);
        Coupling cp;
        const std::string dir = jc.value("direction", "");
        if (dir == "meter") {
            cp.direction = CouplingDirection::Meter;
        } else if (dir == "actuator") {
            cp.direction = CouplingDirection::Actuator;
        } else {
            fail(ErrorCode::MalformedDocument, where, "direction must be meter or actuator");
        }
        cp.electrical_ref = jc.value("electrical_ref", "");
        cp.signal_ref = jc.value("signal_ref", "");
        if (cp.electrical_ref.empty() || cp.signal_ref.empty()) {
            fail(ErrorCode::MalformedDocument, where, "coupling references required");
        }
        model.couplings.push_back(std::move(cp));
    }

    if (!doc.contains("task")) fail(ErrorCode::MalformedDocument, "/task", "task required");
    const json& jt = doc["task"];
    require_keys(jt, {"dt", "duration", "channels", "device_profile", "strategy"}, "/task");
    model.task.dt = jt.value("dt", 0.0);
    model.task.duration = jt.value("duration", 0.0);
    model.task.device_profile = jt.value("device_profile", "cpu-serial");
    model.task.strategy = strategy_from(jt.value("strategy", "serial"), "/task/strategy");
    for (const auto& ch : jt.value("channels", json::array())) {
        if (!ch.is_string()) fail(ErrorCode::MalformedDocument, "/task/channels", "channels are strings");
        model.task.channels.push_back(channel_from(ch.get<std::string>(), "/task/channels"));
    }

    // Macro expansion: pv_subsystem entries are replaced in place by their
    // electrical triple, with control blocks and couplings appended in
    // document order.
    for (const auto& c : raw_components) {
        if (c.kind != ComponentKind::PvSubsystem) {
            model.components.push_back(c);
            continue;
        }
        PvExpansion pv = expand_pv(c);
        model.nodes.push_back(pv.dc_node);
        for (auto& e : pv.components) model.components.push_back(std::move(e));
        for (auto& b : pv.blocks) {
            check_block(b);
            model.control_blocks.push_back(std::move(b));
        }
        for (auto& cp : pv.couplings) model.couplings.push_back(std::move(cp));
    }

    check_model(model, [](ErrorCode code, const std::string& where, const std::string& message) {
        fail(code, where, message);
    });
    return model;
}

std::string serialize_model(const NetworkModel& model) {
    json doc;
    doc["nodes"] = model.nodes;
    doc["components"] = json::array();
    for (const auto& c : model.components) {
        json jc;
        jc["id"] = c.id;
        jc["kind"] = std::string(to_string(c.kind));
        jc["params"] = json::object();
        for (const auto& [key, value] : c.params) jc["params"][key] = param_value_to_json(value);
        jc["terminals"] = c.terminals;
        doc["components"].push_back(std::move(jc));
    }
    doc["control"] = json::array();
    for (const auto& b : model.control_blocks) {
        json jb;
        jb["id"] = b.id;
        jb["kind"] = std::string(to_string(b.kind));
        jb["params"] = json::object();
        for (const auto& [key, value] : b.params) jb["params"][key] = param_value_to_json(value);
        jb["inputs"] = json::array();
        for (const auto& in : b.inputs) jb["inputs"].push_back(signal_ref_spelled(in));
        doc["control"].push_back(std::move(jb));
    }
    doc["couplings"] = json::array();
    for (const auto& cp : model.couplings) {
        json jc;
        jc["direction"] = cp.direction == CouplingDirection::Meter ? "meter" : "actuator";
        jc["electrical_ref"] = cp.electrical_ref;
        jc["signal_ref"] = cp.signal_ref;
        doc["couplings"].push_back(std::move(jc));
    }
    json jt;
    jt["dt"] = model.task.dt;
    jt["duration"] = model.task.duration;
    jt["channels"] = json::array();
    for (const auto& ch : model.task.channels) jt["channels"].push_back(ch.spelled());
    jt["device_profile"] = model.task.device_profile;
    jt["strategy"] = std::string(to_string(model.task.strategy));
    doc["task"] = std::move(jt);
    return doc.dump(2) + "\n";
}

ValidationReport validate(const NetworkModel& model) {
    ValidationReport report;
    check_model(model, [&report](ErrorCode code, const std::string& where,
                                 const std::string& message) {
        report.issues.push_back({ValidationIssue::Severity::Error,
                                 std::string(to_string(code)), where, message});
    });

    // Floating nodes: unconnected nodes, and leaf nodes whose only
    // attachment is a storage branch (its companion current has nowhere to
    // go after stamping, so the voltage merely follows the history source).
    std::map<std::string, int> degree;
    std::map<std::string, bool> storage_leaf;
    for (const auto& n : model.nodes) degree[n] = 0;
    for (const auto& c : model.components) {
        const bool storage = c.kind == ComponentKind::Inductor ||
                             c.kind == ComponentKind::Capacitor ||
                             c.kind == ComponentKind::SeriesRL;
        for (const auto& t : c.terminals) {
            if (t == "0") continue;
            ++degree[t];
            storage_leaf[t] = storage;
        }
    }
    for (const auto& n : model.nodes) {
        if (degree[n] == 0 || (degree[n] == 1 && storage_leaf[n])) {
            report.issues.push_back({ValidationIssue::Severity::Warning, "FloatingNode", n,
                                     "node floats after companion stamping"});
        }
    }

    // Controlled sources with no actuator inject nothing forever.
    std::set<std::string> actuated;
    for (const auto& cp : model.couplings) {
        if (cp.direction == CouplingDirection::Actuator) actuated.insert(cp.electrical_ref);
    }
    for (const auto& c : model.components) {
        if (c.kind == ComponentKind::ControlledCurrentSource && actuated.count(c.id) == 0U) {
            report.issues.push_back({ValidationIssue::Severity::Warning, "UnactuatedSource",
                                     c.id, "controlled source has no actuator coupling"});
        }
    }

    // Algebraic loops among direct-feedthrough control edges; the compiler
    // resolves these later by delay insertion.
    std::map<std::string, int> block_index;
    for (std::size_t i = 0; i < model.control_blocks.size(); ++i) {
        block_index[model.control_blocks[i].id] = static_cast<int>(i);
    }
    graphs::Digraph g(model.control_blocks.size());
    for (std::size_t i = 0; i < model.control_blocks.size(); ++i) {
        const auto& b = model.control_blocks[i];
        if (!b.feedthrough()) continue;
        for (const auto& in : b.inputs) {
            auto it = block_index.find(in.id);
            if (it != block_index.end()) g.add_edge(it->second, static_cast<int>(i));
        }
    }
    if (graphs::has_cycle(g)) {
        report.issues.push_back({ValidationIssue::Severity::Warning, "AlgebraicLoopPresent", "",
                                 "control graph has a direct-feedthrough cycle"});
    }
    return report;
}

int node_index(const NetworkModel& model, const std::string& id) {
    if (id == "0") return -1;
    for (std::size_t i = 0; i < model.nodes.size(); ++i) {
        if (model.nodes[i] == id) return static_cast<int>(i);
    }
    fail(ErrorCode::DanglingReference, id, "node not declared");
}

std::vector<int> canonical_component_order(const NetworkModel& model) {
    std::vector<int> order(model.components.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return model.components[static_cast<std::size_t>(a)].id <
               model.components[static_cast<std::size_t>(b)].id;
    });
    return order;
}

std::vector<int> canonical_block_order(const NetworkModel& model) {
    std::vector<int> order(model.control_blocks.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return model.control_blocks[static_cast<std::size_t>(a)].id <
               model.control_blocks[static_cast<std::size_t>(b)].id;
    });
    return order;
}

}  // namespace emtgrid
