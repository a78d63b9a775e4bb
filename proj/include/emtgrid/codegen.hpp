#pragma once

#include <optional>
#include <string>
#include <vector>

#include "emtgrid/schedule.hpp"

namespace emtgrid {

/// Host toolchain binding for runtime compilation of emitted sources.
struct Toolchain {
    std::string cxx;
    std::vector<std::string> flags = {"-O2", "-std=c++17", "-ffp-contract=off"};
};

/// EMTGRID_CXX environment variable, else the compiler this library was
/// built with. nullopt when neither resolves to an executable.
std::optional<Toolchain> detect_toolchain();

/// Directory holding the per-kernel code templates (EMTGRID_CODEDB
/// environment override, else the bundled data/codedb).
std::string code_database_root();

/// Assembles a standalone program for the schedule by splicing the dialect's
/// kernel templates around the emitted offset tables: one call site per
/// basic process, marked /*P*/.
std::string emit_source(const ScheduleProgram& schedule, const std::string& dialect);

/// Compiles emitted source with the bound toolchain; diagnostics from a
/// failed compile surface verbatim in the CompilationFailed error.
std::string compile_emitted(const std::string& source, const Toolchain& toolchain,
                            const std::string& work_dir);

}  // namespace emtgrid
