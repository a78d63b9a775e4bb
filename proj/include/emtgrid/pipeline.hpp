#pragma once

#include "emtgrid/exec.hpp"
#include "emtgrid/schedule.hpp"

namespace emtgrid {

/// A schedule plus its initial arena: everything an executor needs.
struct CompiledTask {
    ScheduleProgram schedule;
    Eigen::VectorXd initial;
    LoopReport loops;
};

/// Full pipeline: build -> break loops -> layer -> group -> [vectorize] -> emit.
CompiledTask compile_task(const NetworkModel& model, const DeviceProfile& profile,
                          const ScenarioBatch* batch = nullptr);

/// Runs a compiled task with the given strategy. `workers` applies to
/// layer_parallel (0 picks the profile capacity).
WaveformSet execute_task(const CompiledTask& task, Strategy strategy, int workers = 0,
                         int steps = -1, const ExecOptions& options = {});

}  // namespace emtgrid
