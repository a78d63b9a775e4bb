#include "emtgrid/common.hpp"

#include <array>
#include <cstdio>

namespace emtgrid {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::MalformedDocument: return "MalformedDocument";
        case ErrorCode::UnknownComponentKind: return "UnknownComponentKind";
        case ErrorCode::DanglingReference: return "DanglingReference";
        case ErrorCode::DuplicateIdentifier: return "DuplicateIdentifier";
        case ErrorCode::InvalidParameter: return "InvalidParameter";
        case ErrorCode::ArityMismatch: return "ArityMismatch";
        case ErrorCode::NonFiniteState: return "NonFiniteState";
        case ErrorCode::SingularMatrix: return "SingularMatrix";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::CycleDetected: return "CycleDetected";
        case ErrorCode::TopologyMismatch: return "TopologyMismatch";
        case ErrorCode::CapacityExceeded: return "CapacityExceeded";
        case ErrorCode::UnknownKind: return "UnknownKind";
        case ErrorCode::UnknownDialect: return "UnknownDialect";
        case ErrorCode::ToolchainUnavailable: return "ToolchainUnavailable";
        case ErrorCode::CompilationFailed: return "CompilationFailed";
        case ErrorCode::UnknownTask: return "UnknownTask";
        case ErrorCode::NotFinished: return "NotFinished";
        case ErrorCode::NonPositiveInput: return "NonPositiveInput";
        case ErrorCode::IoError: return "IoError";
    }
    return "UnknownError";
}

namespace {

constexpr std::array<std::string_view, 9> kComponentNames = {
    "resistor",       "inductor",       "capacitor",
    "series_rl",      "voltage_source", "current_source",
    "switch",         "controlled_current_source", "pv_subsystem",
};

constexpr std::array<std::string_view, 9> kBlockNames = {
    "gain",   "sum",           "integrator", "first_order_lag", "limiter",
    "pi_controller", "comparator", "constant",   "delay",
};

constexpr std::array<std::string_view, kProcessKindCount> kProcessNames = {
    "norton_update", "injection_update", "factorize", "solve",
    "gain",          "sum",              "integrator", "first_order_lag",
    "limiter",       "pi_controller",    "comparator", "constant",
    "delay",
};

}  // namespace

std::string_view to_string(ComponentKind kind) {
    return kComponentNames[static_cast<std::size_t>(kind)];
}

std::string_view to_string(BlockKind kind) {
    return kBlockNames[static_cast<std::size_t>(kind)];
}

std::string_view to_string(ProcessKind kind) {
    return kProcessNames[static_cast<std::size_t>(kind)];
}

ComponentKind component_kind_from(std::string_view name, const std::string& where) {
    for (std::size_t i = 0; i < kComponentNames.size(); ++i) {
        if (kComponentNames[i] == name) return static_cast<ComponentKind>(i);
    }
    fail(ErrorCode::UnknownComponentKind, where,
         "unknown component kind '" + std::string(name) + "'");
}

BlockKind block_kind_from(std::string_view name, const std::string& where) {
    for (std::size_t i = 0; i < kBlockNames.size(); ++i) {
        if (kBlockNames[i] == name) return static_cast<BlockKind>(i);
    }
    fail(ErrorCode::UnknownKind, where,
         "unknown control block kind '" + std::string(name) + "'");
}

std::string format_g17(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

std::string format_int(std::int64_t value) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%lld", static_cast<long long>(value));
    return buf;
}

}  // namespace emtgrid
