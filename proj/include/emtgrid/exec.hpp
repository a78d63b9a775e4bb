#pragma once

#include <Eigen/Dense>

#include "emtgrid/schedule.hpp"
#include "emtgrid/waveform.hpp"

namespace emtgrid {

struct ExecStats {
    int factor_count = 0;
    /// Wall-clock seconds spent in the step loop after the warm-up boundary.
    double measured_seconds = 0.0;
    int measured_steps = 0;
};

struct ExecOptions {
    double divergence_limit = kDivergenceLimit;
    /// Assert, via per-process epoch counters, that no process of layer i+1
    /// starts before all of layer i completed. Test instrumentation.
    bool check_barriers = false;
    /// Steps excluded from the measured wall-clock window.
    int warmup_steps = 0;
    ExecStats* stats = nullptr;
};

/// Executes layers strictly in order, processes in lane order, one pass per
/// integration step. Bitwise-equal to run_serial on the same model.
WaveformSet interpret(const ScheduleProgram& schedule, const Eigen::VectorXd& initial, int steps,
                      const ExecOptions& options = {});

/// Distributes intra-layer work over `workers` threads with a barrier per
/// layer. Write sets are disjoint by construction and accumulation orders are
/// baked into the schedule, so the result is bitwise-identical to interpret
/// for every worker count.
WaveformSet execute_parallel(const ScheduleProgram& schedule, const Eigen::VectorXd& initial,
                             int workers, int steps, const ExecOptions& options = {});

}  // namespace emtgrid
