#include "emtgrid/cgm.hpp"

#include <algorithm>
#include <map>
#include <set>

#include <json.hpp>

#include "emtgrid/graphs.hpp"

namespace emtgrid {

DeviceProfile builtin_profile(const std::string& name) {
    if (name == "cpu-serial") return {"cpu-serial", Strategy::Serial, 1, true, "no-pivot lu"};
    if (name == "cpu-parallel") {
        return {"cpu-parallel", Strategy::LayerParallel, 8, true, "no-pivot lu"};
    }
    if (name == "cpu-vector") return {"cpu-vector", Strategy::Vectorized, 4096, true, "no-pivot lu"};
    fail(ErrorCode::UnknownKind, name, "no built-in device profile with this name");
}

std::string apply_overrides(const std::string& document,
                            const std::vector<ScenarioOverride>& row) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(document);
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::MalformedDocument, "byte " + std::to_string(e.byte), e.what());
    }
    for (const auto& ov : row) {
        bool found = false;
        for (const char* section : {"components", "control"}) {
            if (!doc.contains(section)) continue;
            for (auto& jc : doc[section]) {
                if (jc.value("id", "") != ov.component) continue;
                jc["params"][ov.param] = ov.value;
                found = true;
                break;
            }
            if (found) break;
        }
        if (!found) {
            fail(ErrorCode::DanglingReference, ov.component,
                 "override targets an id the document does not declare");
        }
    }
    return doc.dump(2) + "\n";
}

namespace {

KernelId control_kernel(BlockKind kind) {
    switch (kind) {
        case BlockKind::Gain: return KernelId::CtlGain;
        case BlockKind::Sum: return KernelId::CtlSum;
        case BlockKind::Integrator: return KernelId::CtlIntegrator;
        case BlockKind::FirstOrderLag: return KernelId::CtlFirstOrderLag;
        case BlockKind::Limiter: return KernelId::CtlLimiter;
        case BlockKind::PiController: return KernelId::CtlPiController;
        case BlockKind::Comparator: return KernelId::CtlComparator;
        case BlockKind::Constant: return KernelId::CtlConstant;
        case BlockKind::Delay: return KernelId::CtlDelay;
    }
    return KernelId::CtlGain;
}

}  // namespace

Cgm build_cgm(const NetworkModel& model) {
    const double dt = model.task.dt;
    const ElectricalPlan eplan = build_electrical_plan(model, dt);
    Cgm g;
    g.dt = dt;
    g.steps = model.task.steps();
    g.node_count = eplan.node_count;
    g.comp_count = eplan.component_count();
    g.pattern = eplan.pattern;
    g.entry_terms = eplan.entry_terms;
    g.node_gather = eplan.node_gather;
    g.terminals = eplan.terminals;

    std::map<std::string, int> comp_pos, node_pos, block_pos;
    for (int c = 0; c < g.comp_count; ++c) {
        comp_pos[model.components[static_cast<std::size_t>(eplan.comp_order[c])].id] = c;
    }
    for (std::size_t i = 0; i < model.nodes.size(); ++i) {
        node_pos[model.nodes[i]] = static_cast<int>(i);
    }
    const std::vector<int> block_order = canonical_block_order(model);
    g.block_count = static_cast<int>(block_order.size());
    for (int b = 0; b < g.block_count; ++b) {
        block_pos[model.control_blocks[static_cast<std::size_t>(block_order[b])].id] = b;
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
    std::map<int, int> actuator_of;  // canonical component -> block
    for (const auto& cp : model.couplings) {
        if (cp.direction != CouplingDirection::Actuator) continue;
        actuator_of[comp_pos.at(cp.electrical_ref)] = block_pos.at(cp.signal_ref);
    }

    std::set<std::pair<int, int>> edges;

    // Norton and injection processes per component, canonical order.
    for (int c = 0; c < g.comp_count; ++c) {
        const auto& comp = model.components[static_cast<std::size_t>(eplan.comp_order[c])];
        const CompanionSpec& spec = eplan.specs[static_cast<std::size_t>(c)];
        BasicProcess norton;
        norton.id = g.norton_id(c);
        norton.kind = ProcessKind::NortonUpdate;
        norton.code = spec.code;
        norton.name = comp.id;
        norton.entity = c;
        norton.consts = spec.consts;
        norton.state_len = spec.state_slots;
        const auto [a, b] = eplan.terminals[static_cast<std::size_t>(c)];
        norton.inputs.push_back({Ref::Target::NodeVoltage, a, 1.0, false});
        norton.inputs.push_back({Ref::Target::NodeVoltage, b, 1.0, false});
        norton.inputs.push_back({Ref::Target::BranchCurrent, c, 1.0, false});
        auto act = actuator_of.find(c);
        if (act != actuator_of.end()) {
            norton.inputs.push_back({Ref::Target::BlockOutput, act->second, 1.0, true});
        }
        g.vertices.push_back(std::move(norton));
    }
    for (int c = 0; c < g.comp_count; ++c) {
        BasicProcess inject;
        inject.id = g.injection_id(c);
        inject.kind = ProcessKind::InjectionUpdate;
        inject.code = KernelId::InjectionPair;
        inject.name = model.components[static_cast<std::size_t>(eplan.comp_order[c])].id;
        inject.entity = c;
        g.vertices.push_back(std::move(inject));
        edges.insert({g.norton_id(c), g.injection_id(c)});
        edges.insert({g.norton_id(c), g.factorize_id()});
        edges.insert({g.injection_id(c), g.factorize_id()});
        edges.insert({g.injection_id(c), g.solve_id()});
    }

    BasicProcess factorize;
    factorize.id = g.factorize_id();
    factorize.kind = ProcessKind::Factorize;
    factorize.code = KernelId::FactorizeSystem;
    factorize.name = "~factorize";
    g.vertices.push_back(std::move(factorize));
    BasicProcess solve;
    solve.id = g.solve_id();
    solve.kind = ProcessKind::Solve;
    solve.code = KernelId::SolveSystem;
    solve.name = "~solve";
    g.vertices.push_back(std::move(solve));
    edges.insert({g.factorize_id(), g.solve_id()});

    // Control processes in canonical block order. Meter inputs read the
    // freshly solved electrical state (edge from solve); delay inputs and
    // actuator commands bind through state, not edges.
    for (int b = 0; b < g.block_count; ++b) {
        const auto& block = model.control_blocks[static_cast<std::size_t>(block_order[b])];
        BasicProcess proc;
        proc.id = g.block_vertex_id(b);
        proc.kind = process_kind_of(block.kind);
        proc.code = control_kernel(block.kind);
        proc.name = block.id;
        proc.entity = b;
        proc.consts = bake_block(block, dt);
        proc.state_len = block.kind == BlockKind::Delay ? 0 : block_state_slots(block.kind);
        g.block_state_len.push_back(proc.state_len);
        for (const auto& in : block.inputs) {
            auto producer = block_pos.find(in.id);
            if (producer != block_pos.end()) {
                const bool stale = block.kind == BlockKind::Delay;
                proc.inputs.push_back({Ref::Target::BlockOutput, producer->second, in.sign, stale});
                if (!stale) {
                    edges.insert({g.block_vertex_id(producer->second), proc.id});
                }
            } else {
                const MeterTarget m = meters.at(in.id);
                proc.inputs.push_back({m.voltage ? Ref::Target::NodeVoltage
                                                 : Ref::Target::BranchCurrent,
                                       m.index, in.sign, false});
                edges.insert({g.solve_id(), proc.id});
            }
        }
        g.vertices.push_back(std::move(proc));
    }

    g.edges.assign(edges.begin(), edges.end());

    for (const auto& ch : model.task.channels) {
        Ref ref;
        switch (ch.kind) {
            case ChannelKind::NodeVoltage:
                ref = {Ref::Target::NodeVoltage, node_pos.at(ch.ref), 1.0, false};
                break;
            case ChannelKind::BranchCurrent:
                ref = {Ref::Target::BranchCurrent, comp_pos.at(ch.ref), 1.0, false};
                break;
            case ChannelKind::Signal: {
                auto blk = block_pos.find(ch.ref);
                if (blk != block_pos.end()) {
                    ref = {Ref::Target::BlockOutput, blk->second, 1.0, false};
                } else {
                    const MeterTarget m = meters.at(ch.ref);
                    ref = {m.voltage ? Ref::Target::NodeVoltage : Ref::Target::BranchCurrent,
                           m.index, 1.0, false};
                }
                break;
            }
        }
        g.channels.emplace_back(ch.spelled(), ref);
    }
    return g;
}

std::pair<Cgm, LoopReport> break_algebraic_loops(Cgm graph) {
    // Candidate bindings: block-to-block live inputs. Delay inputs are born
    // stale and never participate.
    struct Site {
        int vertex;
        std::size_t input;
    };
    std::vector<graphs::Binding> bindings;
    std::vector<Site> sites;
    for (const auto& v : graph.vertices) {
        if (v.kind < ProcessKind::CtlGain) continue;
        for (std::size_t j = 0; j < v.inputs.size(); ++j) {
            const Ref& in = v.inputs[j];
            if (in.target != Ref::Target::BlockOutput || in.stale) continue;
            bindings.push_back({graph.block_vertex_id(in.index), v.id,
                                v.kind == ProcessKind::CtlIntegrator});
            sites.push_back({v.id, j});
        }
    }

    const graphs::LoopBreakPlan plan =
        graphs::break_loops(static_cast<int>(graph.vertices.size()), bindings);
    LoopReport report;
    if (plan.insertions.empty() && plan.state_bindings.empty()) {
        return {std::move(graph), report};
    }

    std::set<std::pair<int, int>> edges(graph.edges.begin(), graph.edges.end());
    const auto vertex_name = [&graph](int id) {
        return graph.vertices[static_cast<std::size_t>(id)].name;
    };

    for (int idx : plan.state_bindings) {
        const Site site = sites[static_cast<std::size_t>(idx)];
        Ref& in = graph.vertices[static_cast<std::size_t>(site.vertex)].inputs[site.input];
        edges.erase({graph.block_vertex_id(in.index), site.vertex});
        in.stale = true;
        report.loops.push_back({{}, vertex_name(graph.block_vertex_id(in.index)),
                                vertex_name(site.vertex), ""});
    }

    int counter = 0;
    for (const auto& ins : plan.insertions) {
        const Site site = sites[static_cast<std::size_t>(ins.binding)];
        Ref& in = graph.vertices[static_cast<std::size_t>(site.vertex)].inputs[site.input];
        const int producer_block = in.index;

        BasicProcess delay;
        delay.id = static_cast<int>(graph.vertices.size());
        delay.kind = ProcessKind::CtlDelay;
        delay.code = KernelId::CtlDelay;
        delay.name = "~break" + std::to_string(counter++);
        delay.entity = graph.block_count;
        delay.inputs.push_back({Ref::Target::BlockOutput, producer_block, 1.0, true});
        graph.block_state_len.push_back(0);
        ++graph.block_count;

        edges.erase({graph.block_vertex_id(producer_block), site.vertex});
        edges.insert({delay.id, site.vertex});
        in.index = delay.entity;
        in.stale = false;

        LoopReport::Broken broken;
        for (int vertex : ins.cycle) broken.cycle.push_back(vertex_name(vertex));
        broken.producer = vertex_name(graph.block_vertex_id(producer_block));
        broken.consumer = vertex_name(site.vertex);
        broken.inserted_delay = delay.name;
        report.loops.push_back(std::move(broken));

        graph.vertices.push_back(std::move(delay));
    }

    graph.edges.assign(edges.begin(), edges.end());
    return {std::move(graph), report};
}

Ldag layer_graph(Cgm graph) {
    graphs::Digraph dg(graph.vertices.size());
    for (const auto& [from, to] : graph.edges) dg.add_edge(from, to);
    Ldag out;
    out.layer = graphs::longest_path_layers(dg);
    out.layer_count = 0;
    for (int l : out.layer) out.layer_count = std::max(out.layer_count, l + 1);

    LaneData lane;
    for (const auto& v : graph.vertices) lane.vertex_consts.push_back(v.consts);
    out.lanes.push_back(std::move(lane));
    out.graph = std::move(graph);
    return out;
}

Ldag group_layer_processes(Ldag ldag, const DeviceProfile& profile) {
    (void)profile;  // grouping is profile-independent; capacity applies at emission
    ldag.groups.assign(static_cast<std::size_t>(ldag.layer_count), {});
    std::vector<std::vector<int>> members(static_cast<std::size_t>(ldag.layer_count));
    for (const auto& v : ldag.graph.vertices) {
        members[static_cast<std::size_t>(ldag.layer[static_cast<std::size_t>(v.id)])].push_back(v.id);
    }
    for (int l = 0; l < ldag.layer_count; ++l) {
        auto& ids = members[static_cast<std::size_t>(l)];
        std::sort(ids.begin(), ids.end(), [&](int a, int b) {
            const auto& va = ldag.graph.vertices[static_cast<std::size_t>(a)];
            const auto& vb = ldag.graph.vertices[static_cast<std::size_t>(b)];
            if (va.kind != vb.kind) return va.kind < vb.kind;
            return a < b;
        });
        int lane_base = 0;
        for (std::size_t i = 0; i < ids.size();) {
            std::size_t j = i;
            const ProcessKind kind = ldag.graph.vertices[static_cast<std::size_t>(ids[i])].kind;
            Ldag::Group group;
            group.kind = kind;
            group.lane_base = lane_base;
            while (j < ids.size() &&
                   ldag.graph.vertices[static_cast<std::size_t>(ids[j])].kind == kind) {
                group.members.push_back(ids[j]);
                ++j;
            }
            lane_base += static_cast<int>(group.members.size());
            ldag.groups[static_cast<std::size_t>(l)].push_back(std::move(group));
            i = j;
        }
    }
    ldag.grouped = true;
    return ldag;
}

bool structural_equal(const Cgm& a, const Cgm& b) {
    if (a.node_count != b.node_count || a.comp_count != b.comp_count ||
        a.block_count != b.block_count || a.vertices.size() != b.vertices.size() ||
        a.edges != b.edges || a.pattern != b.pattern || a.node_gather != b.node_gather ||
        a.terminals != b.terminals || a.channels.size() != b.channels.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.vertices.size(); ++i) {
        const BasicProcess& x = a.vertices[i];
        const BasicProcess& y = b.vertices[i];
        if (x.id != y.id || x.kind != y.kind || x.code != y.code || x.name != y.name ||
            x.entity != y.entity || x.inputs != y.inputs || x.state_len != y.state_len ||
            x.consts.size() != y.consts.size()) {
            return false;
        }
    }
    for (std::size_t i = 0; i < a.channels.size(); ++i) {
        if (a.channels[i] != b.channels[i]) return false;
    }
    return true;
}

Ldag vectorize(Ldag ldag, const ScenarioBatch& batch) {
    if (batch.size() < 1) {
        fail(ErrorCode::NonPositiveInput, "", "scenario batch must hold at least one row");
    }
    Ldag out = std::move(ldag);
    out.width = batch.size();
    out.lanes.clear();
    for (int s = 0; s < batch.size(); ++s) {
        const std::string doc =
            apply_overrides(batch.base_document, batch.rows[static_cast<std::size_t>(s)]);
        const NetworkModel model = parse_model(doc);
        auto [graph, report] = break_algebraic_loops(build_cgm(model));
        (void)report;
        if (!structural_equal(graph, out.graph)) {
            fail(ErrorCode::TopologyMismatch, "scenario " + std::to_string(s),
                 "override row changes the compiled structure, not just parameter values");
        }
        LaneData lane;
        for (const auto& v : graph.vertices) lane.vertex_consts.push_back(v.consts);
        lane.initial = build_initial_state(model, build_electrical_plan(model, model.task.dt));
        out.lanes.push_back(std::move(lane));
    }
    return out;
}

}  // namespace emtgrid
