#include "emtgrid/pipeline.hpp"

namespace emtgrid {

CompiledTask compile_task(const NetworkModel& model, const DeviceProfile& profile,
                          const ScenarioBatch* batch) {
    auto [graph, loops] = break_algebraic_loops(build_cgm(model));
    Ldag ldag = group_layer_processes(layer_graph(std::move(graph)), profile);
    ldag.lanes[0].initial = build_initial_state(model, build_electrical_plan(model, model.task.dt));
    if (batch != nullptr) {
        ldag = vectorize(std::move(ldag), *batch);
    }
    CompiledTask task;
    task.schedule = emit_schedule(ldag, profile);
    task.initial = build_initial_arena(task.schedule, ldag);
    task.loops = std::move(loops);
    return task;
}

WaveformSet execute_task(const CompiledTask& task, Strategy strategy, int workers, int steps,
                         const ExecOptions& options) {
    const int n = steps >= 0 ? steps : task.schedule.steps;
    switch (strategy) {
        case Strategy::Serial:
        case Strategy::Vectorized:
            return interpret(task.schedule, task.initial, n, options);
        case Strategy::LayerParallel: {
            const int w = workers > 0 ? workers : builtin_profile("cpu-parallel").capacity;
            return execute_parallel(task.schedule, task.initial, w, n, options);
        }
    }
    return interpret(task.schedule, task.initial, n, options);
}

}  // namespace emtgrid
