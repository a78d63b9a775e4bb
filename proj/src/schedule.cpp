#include "emtgrid/schedule.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace emtgrid {

int ScheduleProgram::process_count() const {
    int n = 0;
    for (const auto& layer : layers) {
        for (const auto& group : layer) n += static_cast<int>(group.procs.size());
    }
    return n;
}

namespace {

/// Bump allocator over arena slots.
struct Alloc {
    int next = 0;
    int take(int count) {
        const int base = next;
        next += count;
        return base;
    }
};

}  // namespace

namespace {

/// Ungrouped plans emit one singleton group per process, in the same
/// (kind, id) order grouping would flatten to.
Ldag synthesize_groups(Ldag ldag) {
    Ldag grouped = group_layer_processes(std::move(ldag), DeviceProfile{});
    for (auto& layer : grouped.groups) {
        std::vector<Ldag::Group> singletons;
        for (const auto& group : layer) {
            int lane = group.lane_base;
            for (int member : group.members) {
                singletons.push_back({group.kind, lane++, {member}});
            }
        }
        layer = std::move(singletons);
    }
    return grouped;
}

}  // namespace

ScheduleProgram emit_schedule(const Ldag& ldag_in, const DeviceProfile& profile) {
    const Ldag& ldag = ldag_in;
    if (!ldag.grouped) {
        return emit_schedule(synthesize_groups(ldag_in), profile);
    }
    const Cgm& g = ldag.graph;
    for (const auto& layer : ldag.groups) {
        for (const auto& group : layer) {
            const long need = static_cast<long>(group.members.size()) * ldag.width;
            if (need > profile.capacity && !profile.allow_tiling) {
                fail(ErrorCode::CapacityExceeded, profile.name,
                     "group of " + std::to_string(group.members.size()) + " x width " +
                         std::to_string(ldag.width) + " exceeds capacity " +
                         std::to_string(profile.capacity));
            }
        }
    }

    ScheduleProgram s;
    s.profile = profile.name;
    s.width = ldag.width;
    s.dt = g.dt;
    s.steps = g.steps;
    s.node_count = g.node_count;
    s.comp_count = g.comp_count;
    s.block_count = g.block_count;

    const int n = g.node_count;
    const int m = g.comp_count;
    Alloc alloc;
    const int v_base = alloc.take(n);
    const int i_base = alloc.take(m);
    const int g_base = alloc.take(m);
    const int h_base = alloc.take(m);
    const int contrib_base = alloc.take(2 * m);
    const int out_base = alloc.take(g.block_count);

    // Per-vertex state regions, vertex id order.
    std::vector<int> state_of(g.vertices.size(), -1);
    for (const auto& v : g.vertices) {
        if (v.state_len > 0) state_of[static_cast<std::size_t>(v.id)] = alloc.take(v.state_len);
    }
    const int dirty_slot = alloc.take(1);
    const int fcount_slot = alloc.take(1);

    // Shadow cells for stale-read block outputs, ascending block index.
    std::set<int> stale_blocks;
    for (const auto& v : g.vertices) {
        for (const auto& in : v.inputs) {
            if (in.target == Ref::Target::BlockOutput && in.stale) stale_blocks.insert(in.index);
        }
    }
    std::map<int, int> shadow_of;
    for (int b : stale_blocks) {
        shadow_of[b] = alloc.take(1);
        s.latch.emplace_back(out_base + b, shadow_of[b]);
    }

    const LuSymbolic symbolic = lu_symbolic(g.pattern);
    s.solver.pattern = g.pattern;
    s.solver.v_base = v_base;
    s.solver.matrix = alloc.take(g.pattern.nnz());
    s.solver.l = alloc.take(symbolic.l_nnz());
    s.solver.u = alloc.take(symbolic.u_nnz());
    s.solver.scratch = alloc.take(n);
    s.solver.l_nnz = symbolic.l_nnz();
    s.solver.u_nnz = symbolic.u_nnz();
    s.solver.dirty = dirty_slot;
    s.solver.fcount = fcount_slot;
    for (const auto& terms : g.entry_terms) {
        std::vector<std::pair<int, double>> resolved;
        for (const auto& [comp, sign] : terms) resolved.emplace_back(g_base + comp, sign);
        s.solver.entry_terms.push_back(std::move(resolved));
    }
    for (const auto& gather : g.node_gather) {
        std::vector<int> slots;
        for (int c : gather) slots.push_back(contrib_base + c);
        s.solver.gather.push_back(std::move(slots));
    }
    for (int c = 0; c < m; ++c) {
        const auto [a, b] = g.terminals[static_cast<std::size_t>(c)];
        s.solver.finalize.push_back({i_base + c, g_base + c, h_base + c,
                                     a >= 0 ? v_base + a : -1, b >= 0 ? v_base + b : -1});
    }
    s.solver.watch.push_back(dirty_slot);
    for (const auto& v : g.vertices) {
        if (v.code == KernelId::NortonSwitch) {
            s.solver.watch.push_back(state_of[static_cast<std::size_t>(v.id)] + 1);
        }
    }

    // Constant table, vertex id order.
    std::vector<int> par_of(g.vertices.size(), -1);
    Alloc consts;
    for (const auto& v : g.vertices) {
        if (!v.consts.empty()) {
            par_of[static_cast<std::size_t>(v.id)] = consts.take(static_cast<int>(v.consts.size()));
        }
    }
    s.const_extent = consts.next;
    s.const_table.assign(static_cast<std::size_t>(s.const_extent) * ldag.width, 0.0);
    for (int lane = 0; lane < ldag.width; ++lane) {
        const LaneData& data = ldag.lanes[static_cast<std::size_t>(lane)];
        for (const auto& v : g.vertices) {
            const int par = par_of[static_cast<std::size_t>(v.id)];
            if (par < 0) continue;
            const auto& values = data.vertex_consts[static_cast<std::size_t>(v.id)];
            for (std::size_t k = 0; k < values.size(); ++k) {
                s.const_table[(static_cast<std::size_t>(par) + k) * ldag.width + lane] = values[k];
            }
        }
    }

    const auto resolve = [&](const Ref& ref) -> PortRef {
        switch (ref.target) {
            case Ref::Target::NodeVoltage:
                return {ref.index >= 0 ? v_base + ref.index : -1, ref.sign};
            case Ref::Target::BranchCurrent:
                return {i_base + ref.index, ref.sign};
            case Ref::Target::BlockOutput:
                return {ref.stale ? shadow_of.at(ref.index) : out_base + ref.index, ref.sign};
            case Ref::Target::None:
                return {-1, ref.sign};
        }
        return {-1, 1.0};
    };

    s.layers.resize(static_cast<std::size_t>(ldag.layer_count));
    for (int l = 0; l < ldag.layer_count; ++l) {
        for (const auto& group : ldag.groups[static_cast<std::size_t>(l)]) {
            ScheduleProgram::Group out_group;
            out_group.kind = group.kind;
            out_group.lane_base = group.lane_base;
            int lane = 0;
            for (int vid : group.members) {
                const BasicProcess& v = g.vertices[static_cast<std::size_t>(vid)];
                ScheduleProgram::Proc p;
                p.id = v.id;
                p.kind = v.kind;
                p.code = v.code;
                p.lane = group.lane_base + lane++;
                p.state = state_of[static_cast<std::size_t>(v.id)];
                p.state_len = v.state_len;
                p.par = par_of[static_cast<std::size_t>(v.id)];
                p.par_len = static_cast<int>(v.consts.size());
                for (const auto& in : v.inputs) p.in.push_back(resolve(in));
                switch (v.kind) {
                    case ProcessKind::NortonUpdate:
                        p.out = g_base + v.entity;
                        p.out_len = 1;
                        p.out2 = h_base + v.entity;
                        break;
                    case ProcessKind::InjectionUpdate:
                        p.in.push_back({h_base + v.entity, 1.0});
                        p.out = contrib_base + 2 * v.entity;
                        p.out_len = 2;
                        break;
                    case ProcessKind::Factorize:
                    case ProcessKind::Solve:
                        break;  // operands come from the solver tables
                    default:
                        p.out = out_base + v.entity;
                        p.out_len = 1;
                        break;
                }
                out_group.procs.push_back(std::move(p));
            }
            s.layers[static_cast<std::size_t>(l)].push_back(std::move(out_group));
        }
    }

    for (const auto& [name, ref] : g.channels) {
        s.channels.emplace_back(name, resolve(ref).slot);
    }
    s.arena_extent = alloc.next;

    // Per-layer write-set disjointness: the layer-parallel executor relies
    // on it, so a violation here is a compiler bug.
    for (const auto& layer : s.layers) {
        std::set<int> written;
        const auto claim = [&](int slot, const char* what) {
            if (slot < 0) return;
            if (!written.insert(slot).second) {
                fail(ErrorCode::DuplicateIdentifier, what,
                     "two processes of one layer write slot " + std::to_string(slot));
            }
        };
        for (const auto& group : layer) {
            for (const auto& p : group.procs) {
                for (int k = 0; k < p.out_len; ++k) claim(p.out + k, "out");
                claim(p.out2, "out2");
                for (int k = 0; k < p.state_len; ++k) claim(p.state + k, "state");
                if (p.kind == ProcessKind::Solve) {
                    for (int k = 0; k < s.node_count; ++k) claim(s.solver.v_base + k, "solve.v");
                    for (const auto& f : s.solver.finalize) claim(f.i, "solve.i");
                }
                if (p.kind == ProcessKind::Factorize) {
                    for (int k = 0; k < s.solver.pattern.nnz(); ++k) claim(s.solver.matrix + k, "factor.m");
                }
            }
        }
    }
    return s;
}

Eigen::VectorXd build_initial_arena(const ScheduleProgram& s, const Ldag& ldag) {
    Eigen::VectorXd arena =
        Eigen::VectorXd::Zero(static_cast<Eigen::Index>(s.arena_extent) * s.width);
    for (int lane = 0; lane < s.width; ++lane) {
        const InitialElectrical& init = ldag.lanes[static_cast<std::size_t>(lane)].initial;
        if (init.node_voltage.size() != s.node_count ||
            init.branch_current.size() != s.comp_count) {
            fail(ErrorCode::DimensionMismatch, "lane " + std::to_string(lane),
                 "initial electrical state does not match the schedule dimensions");
        }
        for (int node = 0; node < s.node_count; ++node) {
            arena[static_cast<Eigen::Index>(s.solver.v_base + node) * s.width + lane] =
                init.node_voltage[node];
        }
        for (int c = 0; c < s.comp_count; ++c) {
            arena[static_cast<Eigen::Index>(s.solver.finalize[static_cast<std::size_t>(c)].i) *
                      s.width + lane] = init.branch_current[c];
        }
        arena[static_cast<Eigen::Index>(s.solver.dirty) * s.width + lane] = 1.0;
    }
    // Switch state slots start at the baked initial state.
    for (const auto& layer : s.layers) {
        for (const auto& group : layer) {
            for (const auto& p : group.procs) {
                if (p.code != KernelId::NortonSwitch) continue;
                for (int lane = 0; lane < s.width; ++lane) {
                    arena[static_cast<Eigen::Index>(p.state) * s.width + lane] =
                        s.const_table[(static_cast<std::size_t>(p.par) + 2) * s.width +
                                      static_cast<std::size_t>(lane)];
                }
            }
        }
    }
    return arena;
}

// --- text form ---------------------------------------------------------------

namespace {

void put_ints(std::string& out, const std::vector<int>& values) {
    for (int v : values) {
        out += " ";
        out += format_int(v);
    }
}

struct Tokens {
    std::istringstream in;
    std::string line;
    int line_no = 0;

    explicit Tokens(const std::string& text) : in(text) {}

    bool next_line() {
        while (std::getline(in, line)) {
            ++line_no;
            if (!line.empty()) return true;
        }
        return false;
    }
    [[noreturn]] void fail_here(const std::string& message) const {
        fail(ErrorCode::MalformedDocument, "line " + std::to_string(line_no), message);
    }
};

int to_int(const std::string& token) { return std::atoi(token.c_str()); }

/// Pulls "key=value" off a header-style token.
std::string kv(const std::string& token, const char* key, Tokens& t) {
    const std::string prefix = std::string(key) + "=";
    if (token.rfind(prefix, 0) != 0) t.fail_here("expected " + prefix + "<value>");
    return token.substr(prefix.size());
}

}  // namespace

std::string ScheduleProgram::serialize() const {
    std::string out;
    out += "CGMSCHED v1 " + profile + " layers=" + format_int(layer_count()) +
           " width=" + format_int(width) + "\n";
    out += "META dt=" + format_g17(dt) + " steps=" + format_int(steps) +
           " nodes=" + format_int(node_count) + " comps=" + format_int(comp_count) +
           " blocks=" + format_int(block_count) + " extent=" + format_int(arena_extent) +
           " consts=" + format_int(const_extent) + "\n";
    for (int k = 0; k < const_extent; ++k) {
        out += "CONST " + format_int(k);
        for (int lane = 0; lane < width; ++lane) {
            out += " " + format_g17(const_table[static_cast<std::size_t>(k) * width +
                                                static_cast<std::size_t>(lane)]);
        }
        out += "\n";
    }
    for (const auto& [name, slot] : channels) {
        out += "CHANNEL " + name + " " + format_int(slot) + "\n";
    }
    for (const auto& [live, shadow] : latch) {
        out += "LATCH " + format_int(live) + " " + format_int(shadow) + "\n";
    }
    out += "MATRIX dim=" + format_int(solver.pattern.dim) +
           " nnz=" + format_int(solver.pattern.nnz()) + " lnnz=" + format_int(solver.l_nnz) +
           " unnz=" + format_int(solver.u_nnz) + " v=" + format_int(solver.v_base) +
           " mat=" + format_int(solver.matrix) + " l=" + format_int(solver.l) +
           " u=" + format_int(solver.u) + " scratch=" + format_int(solver.scratch) +
           " dirty=" + format_int(solver.dirty) + " fcount=" + format_int(solver.fcount) + "\n";
    for (int r = 0; r < solver.pattern.dim; ++r) {
        out += "ROW " + format_int(r);
        for (int k = solver.pattern.row_ptr[static_cast<std::size_t>(r)];
             k < solver.pattern.row_ptr[static_cast<std::size_t>(r) + 1]; ++k) {
            out += " " + format_int(solver.pattern.col_idx[static_cast<std::size_t>(k)]);
        }
        out += "\n";
    }
    for (std::size_t k = 0; k < solver.entry_terms.size(); ++k) {
        out += "MENTRY " + format_int(static_cast<int>(k));
        for (const auto& [slot, sign] : solver.entry_terms[k]) {
            out += " " + format_int(slot) + " " + format_g17(sign);
        }
        out += "\n";
    }
    for (std::size_t node = 0; node < solver.gather.size(); ++node) {
        out += "GATHER " + format_int(static_cast<int>(node));
        put_ints(out, solver.gather[node]);
        out += "\n";
    }
    for (std::size_t c = 0; c < solver.finalize.size(); ++c) {
        const auto& f = solver.finalize[c];
        out += "FINAL " + format_int(static_cast<int>(c));
        put_ints(out, {f.i, f.g, f.h, f.va, f.vb});
        out += "\n";
    }
    out += "WATCH";
    put_ints(out, solver.watch);
    out += "\n";
    for (int l = 0; l < layer_count(); ++l) {
        out += "LAYER " + format_int(l) + "\n";
        for (const auto& group : layers[static_cast<std::size_t>(l)]) {
            out += "GROUP kind=" + format_int(static_cast<int>(group.kind)) +
                   " count=" + format_int(static_cast<int>(group.procs.size())) +
                   " lane_base=" + format_int(group.lane_base) + "\n";
            for (const auto& p : group.procs) {
                out += "P " + format_int(p.id) + " " + format_int(static_cast<int>(p.kind)) + " " +
                       format_int(static_cast<int>(p.code)) + " " + format_int(p.lane);
                put_ints(out, {p.out, p.out_len, p.out2, p.state, p.state_len, p.par, p.par_len,
                               static_cast<int>(p.in.size())});
                for (const auto& port : p.in) {
                    out += " " + format_int(port.slot) + " " + format_g17(port.sign);
                }
                out += "\n";
            }
        }
    }
    return out;
}

ScheduleProgram ScheduleProgram::parse(const std::string& text) {
    ScheduleProgram s;
    Tokens t(text);
    if (!t.next_line()) t.fail_here("empty schedule");
    {
        std::istringstream ls(t.line);
        std::string magic, version, tok;
        ls >> magic >> version >> s.profile;
        if (magic != "CGMSCHED" || version != "v1") t.fail_here("bad schedule header");
        ls >> tok;
        const int layer_total = to_int(kv(tok, "layers", t));
        ls >> tok;
        s.width = to_int(kv(tok, "width", t));
        s.layers.resize(static_cast<std::size_t>(layer_total));
    }
    if (!t.next_line()) t.fail_here("missing META");
    {
        std::istringstream ls(t.line);
        std::string tag, tok;
        ls >> tag;
        if (tag != "META") t.fail_here("expected META");
        ls >> tok;
        s.dt = std::strtod(kv(tok, "dt", t).c_str(), nullptr);
        ls >> tok;
        s.steps = to_int(kv(tok, "steps", t));
        ls >> tok;
        s.node_count = to_int(kv(tok, "nodes", t));
        ls >> tok;
        s.comp_count = to_int(kv(tok, "comps", t));
        ls >> tok;
        s.block_count = to_int(kv(tok, "blocks", t));
        ls >> tok;
        s.arena_extent = to_int(kv(tok, "extent", t));
        ls >> tok;
        s.const_extent = to_int(kv(tok, "consts", t));
    }
    s.const_table.assign(static_cast<std::size_t>(s.const_extent) * s.width, 0.0);

    int current_layer = -1;
    ScheduleProgram::Group* group = nullptr;
    while (t.next_line()) {
        std::istringstream ls(t.line);
        std::string tag;
        ls >> tag;
        if (tag == "CONST") {
            int idx = 0;
            ls >> idx;
            for (int lane = 0; lane < s.width; ++lane) {
                ls >> s.const_table[static_cast<std::size_t>(idx) * s.width +
                                    static_cast<std::size_t>(lane)];
            }
        } else if (tag == "CHANNEL") {
            std::string name;
            int slot = 0;
            ls >> name >> slot;
            s.channels.emplace_back(name, slot);
        } else if (tag == "LATCH") {
            int live = 0, shadow = 0;
            ls >> live >> shadow;
            s.latch.emplace_back(live, shadow);
        } else if (tag == "MATRIX") {
            std::string tok;
            ls >> tok;
            s.solver.pattern.dim = to_int(kv(tok, "dim", t));
            ls >> tok;  // nnz, implied by rows
            ls >> tok;
            s.solver.l_nnz = to_int(kv(tok, "lnnz", t));
            ls >> tok;
            s.solver.u_nnz = to_int(kv(tok, "unnz", t));
            ls >> tok;
            s.solver.v_base = to_int(kv(tok, "v", t));
            ls >> tok;
            s.solver.matrix = to_int(kv(tok, "mat", t));
            ls >> tok;
            s.solver.l = to_int(kv(tok, "l", t));
            ls >> tok;
            s.solver.u = to_int(kv(tok, "u", t));
            ls >> tok;
            s.solver.scratch = to_int(kv(tok, "scratch", t));
            ls >> tok;
            s.solver.dirty = to_int(kv(tok, "dirty", t));
            ls >> tok;
            s.solver.fcount = to_int(kv(tok, "fcount", t));
            s.solver.pattern.row_ptr.assign(1, 0);
        } else if (tag == "ROW") {
            int row = 0;
            ls >> row;
            int col = 0;
            while (ls >> col) s.solver.pattern.col_idx.push_back(col);
            s.solver.pattern.row_ptr.push_back(static_cast<int>(s.solver.pattern.col_idx.size()));
        } else if (tag == "MENTRY") {
            int idx = 0;
            ls >> idx;
            std::vector<std::pair<int, double>> terms;
            int slot = 0;
            double sign = 0.0;
            while (ls >> slot >> sign) terms.emplace_back(slot, sign);
            s.solver.entry_terms.push_back(std::move(terms));
        } else if (tag == "GATHER") {
            int node = 0;
            ls >> node;
            std::vector<int> slots;
            int slot = 0;
            while (ls >> slot) slots.push_back(slot);
            s.solver.gather.push_back(std::move(slots));
        } else if (tag == "FINAL") {
            int idx = 0;
            SolverTables::Finalize f;
            ls >> idx >> f.i >> f.g >> f.h >> f.va >> f.vb;
            s.solver.finalize.push_back(f);
        } else if (tag == "WATCH") {
            int slot = 0;
            while (ls >> slot) s.solver.watch.push_back(slot);
        } else if (tag == "LAYER") {
            ls >> current_layer;
            group = nullptr;
            if (current_layer < 0 || current_layer >= s.layer_count()) {
                t.fail_here("layer index out of range");
            }
        } else if (tag == "GROUP") {
            if (current_layer < 0) t.fail_here("GROUP before LAYER");
            std::string tok;
            ScheduleProgram::Group next;
            ls >> tok;
            next.kind = static_cast<ProcessKind>(to_int(kv(tok, "kind", t)));
            ls >> tok;  // count, implied
            ls >> tok;
            next.lane_base = to_int(kv(tok, "lane_base", t));
            s.layers[static_cast<std::size_t>(current_layer)].push_back(std::move(next));
            group = &s.layers[static_cast<std::size_t>(current_layer)].back();
        } else if (tag == "P") {
            if (group == nullptr) t.fail_here("P before GROUP");
            ScheduleProgram::Proc p;
            int kind = 0, code = 0, nin = 0;
            ls >> p.id >> kind >> code >> p.lane >> p.out >> p.out_len >> p.out2 >> p.state >>
                p.state_len >> p.par >> p.par_len >> nin;
            if (kind < 0 || kind >= kProcessKindCount) t.fail_here("process kind out of range");
            // Kernel codes are validated against the registry by the
            // executors, which raise UnknownKind.
            p.kind = static_cast<ProcessKind>(kind);
            p.code = static_cast<KernelId>(code);
            for (int j = 0; j < nin; ++j) {
                PortRef port;
                if (!(ls >> port.slot >> port.sign)) t.fail_here("truncated port list");
                p.in.push_back(port);
            }
            group->procs.push_back(std::move(p));
        } else {
            t.fail_here("unknown record '" + tag + "'");
        }
    }
    if (static_cast<int>(s.solver.pattern.row_ptr.size()) != s.solver.pattern.dim + 1) {
        fail(ErrorCode::MalformedDocument, "", "matrix row count does not match dimension");
    }
    if (static_cast<int>(s.solver.entry_terms.size()) != s.solver.pattern.nnz() ||
        static_cast<int>(s.solver.gather.size()) != s.node_count ||
        static_cast<int>(s.solver.finalize.size()) != s.comp_count) {
        fail(ErrorCode::MalformedDocument, "", "solver tables are truncated");
    }
    int procs = 0;
    for (const auto& layer : s.layers) {
        for (const auto& group : layer) procs += static_cast<int>(group.procs.size());
    }
    if (procs < 2 + 2 * s.comp_count) {
        fail(ErrorCode::MalformedDocument, "", "process records are truncated");
    }
    return s;
}

std::string serialize_state(const Eigen::VectorXd& arena, int extent, int width) {
    if (arena.size() != static_cast<Eigen::Index>(extent) * width) {
        fail(ErrorCode::DimensionMismatch, "",
             "arena size does not match extent " + std::to_string(extent) + " x width " +
                 std::to_string(width));
    }
    std::string out = "STATE v1 extent=" + format_int(extent) + " width=" + format_int(width) + "\n";
    for (int slot = 0; slot < extent; ++slot) {
        for (int lane = 0; lane < width; ++lane) {
            out += (lane == 0 ? "" : " ");
            out += format_g17(arena[static_cast<Eigen::Index>(slot) * width + lane]);
        }
        out += "\n";
    }
    return out;
}

Eigen::VectorXd parse_state(const std::string& text, int* width_out) {
    Tokens t(text);
    if (!t.next_line()) t.fail_here("empty state file");
    std::istringstream ls(t.line);
    std::string magic, version, tok;
    ls >> magic >> version;
    if (magic != "STATE" || version != "v1") t.fail_here("bad state header");
    ls >> tok;
    const int extent = to_int(kv(tok, "extent", t));
    ls >> tok;
    const int width = to_int(kv(tok, "width", t));
    if (width_out != nullptr) *width_out = width;
    Eigen::VectorXd arena(static_cast<Eigen::Index>(extent) * width);
    for (int slot = 0; slot < extent; ++slot) {
        if (!t.next_line()) t.fail_here("truncated state file");
        std::istringstream vs(t.line);
        for (int lane = 0; lane < width; ++lane) {
            if (!(vs >> arena[static_cast<Eigen::Index>(slot) * width + lane])) {
                t.fail_here("truncated state row");
            }
        }
    }
    return arena;
}

}  // namespace emtgrid
