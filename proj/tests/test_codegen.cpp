#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>

#include "emtgrid/codegen.hpp"
#include "emtgrid/exec.hpp"
#include "emtgrid/pipeline.hpp"
#include "support/oracles.hpp"

using namespace emtgrid;

namespace {

std::size_t call_sites(const std::string& source) {
    std::size_t count = 0, pos = 0;
    while ((pos = source.find("/*P*/", pos)) != std::string::npos) {
        ++count;
        pos += 5;
    }
    return count;
}

CompiledTask compile_document(const std::string& document) {
    return compile_task(parse_model(document), builtin_profile("cpu-serial"));
}

/// Compiles and runs an emitted program; returns its waveform output.
WaveformSet run_emitted(const CompiledTask& task, const std::string& tag, int steps) {
    const auto toolchain = detect_toolchain();
    REQUIRE(toolchain.has_value());
    const std::string dir = oracles::temp_dir(tag);
    const std::string source = emit_source(task.schedule, "cpp");
    const std::string binary = compile_emitted(source, *toolchain, dir);
    write_file(dir + "/state.txt", serialize_state(task.initial, task.schedule.arena_extent,
                                                   task.schedule.width));
    const std::string cmd = "\"" + binary + "\" --state \"" + dir + "/state.txt\" --steps " +
                            std::to_string(steps) + " --out \"" + dir + "/waves.txt\"";
    REQUIRE(std::system(cmd.c_str()) == 0);
    return WaveformSet::load(dir + "/waves.txt");
}

}  // namespace

TEST_CASE("emit_source: minimal resistor program has exactly four kernel call sites") {
    const std::string doc = R"({
  "nodes": ["1"],
  "components": [
    {"id": "r1", "kind": "resistor", "params": {"resistance": 2.0}, "terminals": ["1", "0"]}
  ],
  "control": [],
  "couplings": [],
  "task": {"dt": 0.0001, "duration": 0.01, "channels": ["v:1"], "device_profile": "cpu-serial", "strategy": "serial"}
})";
    const CompiledTask task = compile_document(doc);
    const std::string source = emit_source(task.schedule, "cpp");
    CHECK(call_sites(source) == 4);
}

TEST_CASE("emit_source: emission is deterministic") {
    const CompiledTask task = compile_document(oracles::feeder_document());
    CHECK(emit_source(task.schedule, "cpp") == emit_source(task.schedule, "cpp"));
}

TEST_CASE("emit_source: unknown dialect is rejected") {
    const CompiledTask task = compile_document(oracles::feeder_document());
    try {
        emit_source(task.schedule, "cuda");
        FAIL("expected UnknownDialect");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownDialect);
    }
}

TEST_CASE("compiled emitted source reproduces the interpreter on the RC case") {
    const std::string doc = oracles::rc_discharge_doc(1000.0, 1e-6, 1.0, 1e-6, 5e-3);
    const CompiledTask task = compile_document(doc);
    const WaveformSet expected = interpret(task.schedule, task.initial, 500);
    const WaveformSet emitted = run_emitted(task, "codegen_rc", 500);

    REQUIRE(emitted.steps() == expected.steps());
    double worst = 0.0;
    for (std::size_t k = 0; k < expected.steps(); ++k) {
        const double a = emitted.at(k, 0);
        const double b = expected.at(k, 0);
        worst = std::max(worst, std::abs(a - b) / std::max(1e-300, std::abs(b)));
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("compiled emitted source handles switches and controls") {
    const std::string doc = R"({
  "nodes": ["1", "2"],
  "components": [
    {"id": "vs", "kind": "voltage_source", "params": {"magnitude": 10.0, "frequency": 50.0, "phase": 0.1, "rs": 0.5}, "terminals": ["1", "0"]},
    {"id": "sw", "kind": "switch", "params": {"state": "open", "toggle_times": [0.0003]}, "terminals": ["1", "2"]},
    {"id": "rl", "kind": "resistor", "params": {"resistance": 5.0}, "terminals": ["2", "0"]},
    {"id": "cs", "kind": "controlled_current_source", "params": {"gain": 1.0}, "terminals": ["2", "0"]}
  ],
  "control": [
    {"id": "ref", "kind": "constant", "params": {"value": 2.0}, "inputs": []},
    {"id": "err", "kind": "sum", "params": {}, "inputs": ["ref", "-v2"]},
    {"id": "pi", "kind": "pi_controller", "params": {"kp": 0.1, "ki": 5.0}, "inputs": ["err"]},
    {"id": "lim", "kind": "limiter", "params": {"min": -3.0, "max": 3.0}, "inputs": ["pi"]},
    {"id": "cmd", "kind": "delay", "params": {}, "inputs": ["lim"]}
  ],
  "couplings": [
    {"direction": "meter", "electrical_ref": "2", "signal_ref": "v2"},
    {"direction": "actuator", "electrical_ref": "cs", "signal_ref": "cmd"}
  ],
  "task": {"dt": 0.0001, "duration": 0.002, "channels": ["v:2", "i:sw", "s:lim"], "device_profile": "cpu-serial", "strategy": "serial"}
})";
    const CompiledTask task = compile_document(doc);
    const WaveformSet expected = interpret(task.schedule, task.initial, 20);
    const WaveformSet emitted = run_emitted(task, "codegen_ctl", 20);
    // Same arithmetic in the same order on the same host: bitwise equal.
    CHECK(emitted.to_text() == expected.to_text());
}

TEST_CASE("compile_emitted: corrupted source fails with diagnostics") {
    const auto toolchain = detect_toolchain();
    REQUIRE(toolchain.has_value());
    const std::string dir = oracles::temp_dir("codegen_bad");
    try {
        compile_emitted("int main( { broken", *toolchain, dir);
        FAIL("expected CompilationFailed");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::CompilationFailed);
        CHECK(std::string(e.what()).size() > 40);  // compiler diagnostics included
    }
}
