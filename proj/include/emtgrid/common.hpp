#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace emtgrid {

/// Every failure mode the library can raise, one code per contract error.
enum class ErrorCode {
    MalformedDocument,
    UnknownComponentKind,
    DanglingReference,
    DuplicateIdentifier,
    InvalidParameter,
    ArityMismatch,
    NonFiniteState,
    SingularMatrix,
    SingularSystem,
    DimensionMismatch,
    CycleDetected,
    TopologyMismatch,
    CapacityExceeded,
    UnknownKind,
    UnknownDialect,
    ToolchainUnavailable,
    CompilationFailed,
    UnknownTask,
    NotFinished,
    NonPositiveInput,
    IoError,
};

std::string_view to_string(ErrorCode code);

/// Library-wide exception type. `where` carries the offending identifier or
/// document location (a JSON-pointer-like path for parse errors).
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string where, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message +
                             (where.empty() ? "" : " (at " + where + ")")),
          code_(code),
          where_(std::move(where)) {}

    [[nodiscard]] ErrorCode code() const { return code_; }
    [[nodiscard]] const std::string& where() const { return where_; }

private:
    ErrorCode code_;
    std::string where_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& where,
                              const std::string& message) {
    throw Error(code, where, message);
}

/// Electrical component vocabulary of the model document.
enum class ComponentKind : int {
    Resistor,
    Inductor,
    Capacitor,
    SeriesRL,
    VoltageSource,
    CurrentSource,
    Switch,
    ControlledCurrentSource,
    PvSubsystem,
};

/// Control block vocabulary of the model document.
enum class BlockKind : int {
    Gain,
    Sum,
    Integrator,
    FirstOrderLag,
    Limiter,
    PiController,
    Comparator,
    Constant,
    Delay,
};

/// Vertex kinds of the computation graph: the four electrical process
/// kinds followed by one kind per control block type. The numeric order
/// is the canonical group order inside a layer.
enum class ProcessKind : int {
    NortonUpdate = 0,
    InjectionUpdate = 1,
    Factorize = 2,
    Solve = 3,
    CtlGain = 4,
    CtlSum = 5,
    CtlIntegrator = 6,
    CtlFirstOrderLag = 7,
    CtlLimiter = 8,
    CtlPiController = 9,
    CtlComparator = 10,
    CtlConstant = 11,
    CtlDelay = 12,
};

constexpr int kProcessKindCount = 13;

std::string_view to_string(ComponentKind kind);
std::string_view to_string(BlockKind kind);
std::string_view to_string(ProcessKind kind);

ComponentKind component_kind_from(std::string_view name, const std::string& where);
BlockKind block_kind_from(std::string_view name, const std::string& where);

/// A control block's output at step n depends on its step-n input unless the
/// block is a state element (integrator with stored-state output, delay).
constexpr bool direct_feedthrough(BlockKind kind) {
    return kind != BlockKind::Integrator && kind != BlockKind::Delay;
}

constexpr ProcessKind process_kind_of(BlockKind kind) {
    return static_cast<ProcessKind>(static_cast<int>(ProcessKind::CtlGain) +
                                    static_cast<int>(kind));
}

/// Formats a double with 17 significant digits, the canonical round-trip-exact
/// form used by every file format in this project.
std::string format_g17(double value);

/// Canonical decimal form for schedule/waveform text output.
std::string format_int(std::int64_t value);

}  // namespace emtgrid
