#include "emtgrid/codegen.hpp"

#include <cstdlib>
#include <filesystem>
#include <map>

#include "emtgrid/waveform.hpp"

#ifndef EMTGRID_ASSET_ROOT
#define EMTGRID_ASSET_ROOT ""
#endif
#ifndef EMTGRID_HOST_CXX
#define EMTGRID_HOST_CXX ""
#endif

namespace emtgrid {

namespace fs = std::filesystem;

std::optional<Toolchain> detect_toolchain() {
    Toolchain tc;
    if (const char* env = std::getenv("EMTGRID_CXX"); env != nullptr && *env != '\0') {
        tc.cxx = env;
    } else {
        tc.cxx = EMTGRID_HOST_CXX;
    }
    if (tc.cxx.empty()) return std::nullopt;
    return tc;
}

std::string code_database_root() {
    if (const char* env = std::getenv("EMTGRID_CODEDB"); env != nullptr && *env != '\0') {
        return env;
    }
    return std::string(EMTGRID_ASSET_ROOT) + "/codedb";
}

namespace {

std::string load_template(const std::string& dialect, const std::string& name) {
    const std::string path = code_database_root() + "/" + dialect + "/" + name + ".tpl";
    if (!fs::exists(path)) {
        fail(ErrorCode::UnknownKind, name, "no code template at " + path);
    }
    return read_file(path);
}

std::string substitute(std::string text, const std::map<std::string, std::string>& values) {
    for (const auto& [key, value] : values) {
        const std::string needle = "${" + key + "}";
        std::size_t pos = 0;
        while ((pos = text.find(needle, pos)) != std::string::npos) {
            text.replace(pos, needle.size(), value);
            pos += value.size();
        }
    }
    return text;
}

std::string int_array(const std::string& name, const std::vector<int>& values) {
    std::string out = "static const int " + name + "[] = {";
    if (values.empty()) out += "0";  // avoid zero-length arrays
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i % 20 == 0) out += "\n    ";
        out += format_int(values[i]) + ",";
    }
    out += "};\n";
    return out;
}

std::string double_array(const std::string& name, const std::vector<double>& values) {
    std::string out = "static const double " + name + "[] = {";
    if (values.empty()) out += "0";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i % 8 == 0) out += "\n    ";
        out += format_g17(values[i]) + ",";
    }
    out += "};\n";
    return out;
}

}  // namespace

std::string emit_source(const ScheduleProgram& s, const std::string& dialect) {
    if (dialect != "cpp") {
        fail(ErrorCode::UnknownDialect, dialect, "only the 'cpp' dialect is registered");
    }

    // Offset tables referenced by the prologue's factorize/solve/latch code.
    std::string tables;
    tables += "#define V_BASE " + format_int(s.solver.v_base) + "\n";
    tables += "#define MAT_BASE " + format_int(s.solver.matrix) + "\n";
    tables += "#define L_BASE " + format_int(s.solver.l) + "\n";
    tables += "#define U_BASE " + format_int(s.solver.u) + "\n";
    tables += "#define SCRATCH_BASE " + format_int(s.solver.scratch) + "\n";
    tables += "#define FCOUNT_SLOT " + format_int(s.solver.fcount) + "\n";
    tables += "#define NCOMP " + format_int(s.comp_count) + "\n";
    tables += "#define NWATCH " + format_int(static_cast<int>(s.solver.watch.size())) + "\n";
    tables += "#define NLATCH " + format_int(static_cast<int>(s.latch.size())) + "\n";
    tables += "#define NCHANNEL " + format_int(static_cast<int>(s.channels.size())) + "\n";

    tables += double_array("kConsts", s.const_table);
    tables += int_array("kARowPtr", s.solver.pattern.row_ptr);
    tables += int_array("kACol", s.solver.pattern.col_idx);

    const LuSymbolic sym = lu_symbolic(s.solver.pattern);
    tables += int_array("kLRowPtr", sym.l_row_ptr);
    tables += int_array("kLCol", sym.l_col);
    tables += int_array("kURowPtr", sym.u_row_ptr);
    tables += int_array("kUCol", sym.u_col);

    std::vector<int> entry_ptr{0}, entry_slot;
    std::vector<double> entry_sign;
    for (const auto& terms : s.solver.entry_terms) {
        for (const auto& [slot, sign] : terms) {
            entry_slot.push_back(slot);
            entry_sign.push_back(sign);
        }
        entry_ptr.push_back(static_cast<int>(entry_slot.size()));
    }
    tables += int_array("kEntryPtr", entry_ptr);
    tables += int_array("kEntrySlot", entry_slot);
    tables += double_array("kEntrySign", entry_sign);

    std::vector<int> gather_ptr{0}, gather_slot;
    for (const auto& slots : s.solver.gather) {
        for (int slot : slots) gather_slot.push_back(slot);
        gather_ptr.push_back(static_cast<int>(gather_slot.size()));
    }
    tables += int_array("kGatherPtr", gather_ptr);
    tables += int_array("kGatherSlot", gather_slot);

    std::vector<int> fi, fg, fh, fva, fvb;
    for (const auto& f : s.solver.finalize) {
        fi.push_back(f.i);
        fg.push_back(f.g);
        fh.push_back(f.h);
        fva.push_back(f.va);
        fvb.push_back(f.vb);
    }
    tables += int_array("kFinalI", fi);
    tables += int_array("kFinalG", fg);
    tables += int_array("kFinalH", fh);
    tables += int_array("kFinalVa", fva);
    tables += int_array("kFinalVb", fvb);
    tables += int_array("kWatch", s.solver.watch);

    std::vector<int> latch_live, latch_shadow;
    for (const auto& [live, shadow] : s.latch) {
        latch_live.push_back(live);
        latch_shadow.push_back(shadow);
    }
    tables += int_array("kLatchLive", latch_live);
    tables += int_array("kLatchShadow", latch_shadow);

    std::vector<int> channel_slots;
    std::string header = "time";
    for (const auto& [name, slot] : s.channels) {
        channel_slots.push_back(slot);
        if (s.width == 1) {
            header += " " + name;
        } else {
            for (int lane = 0; lane < s.width; ++lane) {
                header += " " + name + "#" + std::to_string(lane);
            }
        }
    }
    tables += int_array("kChannelSlot", channel_slots);
    tables += "static const char kHeader[] = \"" + header + "\\n\";\n";

    std::string out = substitute(load_template(dialect, "prologue"),
                                 {{"width", format_int(s.width)},
                                  {"dim", format_int(s.solver.pattern.dim)},
                                  {"nnz", format_int(s.solver.pattern.nnz())},
                                  {"extent", format_int(s.arena_extent)},
                                  {"steps", format_int(s.steps)},
                                  {"dt", format_g17(s.dt)},
                                  {"tables", tables}});

    // One call site per basic process, layer order.
    std::map<KernelId, std::string> cache;
    const auto kernel_template = [&](KernelId code) -> const std::string& {
        auto it = cache.find(code);
        if (it == cache.end()) {
            it = cache.emplace(code, load_template(dialect, std::string(to_string(code)))).first;
        }
        return it->second;
    };

    for (const auto& layer : s.layers) {
        for (const auto& group : layer) {
            for (const auto& p : group.procs) {
                std::map<std::string, std::string> values;
                values["out"] = format_int(p.out);
                values["out2"] = format_int(p.out2);
                values["state"] = format_int(p.state);
                values["par"] = format_int(p.par);
                for (std::size_t j = 0; j < p.in.size(); ++j) {
                    values["in" + std::to_string(j)] = format_int(p.in[j].slot);
                    values["sign" + std::to_string(j)] = format_g17(p.in[j].sign);
                }
                if (p.code == KernelId::NortonControlledSource) {
                    values["cmd"] = p.in.size() > 3
                                        ? "RD(" + format_int(p.in[3].slot) + ", l)"
                                        : "0.0";
                }
                if (p.code == KernelId::NortonSwitch) {
                    std::string toggles;
                    for (int j = 3; j < p.par_len; ++j) {
                        toggles += "if (t >= CP(" + format_int(p.par) + " + " + format_int(j) +
                                   ", l)) now ^= 1; ";
                    }
                    values["toggles"] = toggles;
                }
                if (p.code == KernelId::CtlSum) {
                    std::string terms;
                    for (std::size_t j = 0; j < p.in.size(); ++j) {
                        terms += "acc += " + format_g17(p.in[j].sign) + " * RD(" +
                                 format_int(p.in[j].slot) + ", l); ";
                    }
                    values["terms"] = terms;
                }
                out += substitute(kernel_template(p.code), values);
            }
        }
    }

    out += load_template(dialect, "epilogue");
    return out;
}

std::string compile_emitted(const std::string& source, const Toolchain& toolchain,
                            const std::string& work_dir) {
    if (toolchain.cxx.empty()) {
        fail(ErrorCode::ToolchainUnavailable, "", "no host compiler bound");
    }
    fs::create_directories(work_dir);
    const std::string src_path = work_dir + "/program.cpp";
    const std::string bin_path = work_dir + "/program";
    const std::string log_path = work_dir + "/compile.log";
    write_file(src_path, source);

    std::string cmd = "\"" + toolchain.cxx + "\"";
    for (const auto& flag : toolchain.flags) cmd += " " + flag;
    cmd += " -o \"" + bin_path + "\" \"" + src_path + "\" > \"" + log_path + "\" 2>&1";
    const int rc = std::system(cmd.c_str());
    if (rc != 0) {
        std::string diagnostics;
        try {
            diagnostics = read_file(log_path);
        } catch (const Error&) {
            diagnostics = "(no compiler output captured)";
        }
        if (diagnostics.empty()) diagnostics = "(compiler produced no diagnostics)";
        fail(ErrorCode::CompilationFailed, src_path, diagnostics);
    }
    return bin_path;
}

}  // namespace emtgrid
