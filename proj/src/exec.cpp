#include "emtgrid/exec.hpp"

#include <atomic>
#include <barrier>
#include <chrono>
#include <cmath>
#include <mutex>
#include <thread>

#include "emtgrid/kernels.hpp"

namespace emtgrid {

namespace {

struct DecodedProc {
    int id = -1;
    KernelId code = KernelId::NortonResistor;
    int out = -1, out2 = -1, state = -1, par = -1, par_len = 0;
    int in_base = 0, in_count = 0;
};

/// Flattened schedule: processes layer-major in (group, lane) order.
struct Decoded {
    std::vector<DecodedProc> procs;
    std::vector<int> layer_begin;  // layer_count+1
    std::vector<int> port_slot;
    std::vector<double> port_sign;
};

Decoded decode(const ScheduleProgram& s) {
    Decoded d;
    d.layer_begin.push_back(0);
    for (const auto& layer : s.layers) {
        for (const auto& group : layer) {
            for (const auto& p : group.procs) {
                const int code = static_cast<int>(p.code);
                if (code < 0 || code >= kKernelCount) {
                    fail(ErrorCode::UnknownKind, "process " + std::to_string(p.id),
                         "kernel code " + std::to_string(code) + " is not registered");
                }
                DecodedProc dp;
                dp.id = p.id;
                dp.code = p.code;
                dp.out = p.out;
                dp.out2 = p.out2;
                dp.state = p.state;
                dp.par = p.par;
                dp.par_len = p.par_len;
                dp.in_base = static_cast<int>(d.port_slot.size());
                dp.in_count = static_cast<int>(p.in.size());
                for (const auto& port : p.in) {
                    d.port_slot.push_back(port.slot);
                    d.port_sign.push_back(port.sign);
                }
                d.procs.push_back(dp);
            }
        }
        d.layer_begin.push_back(static_cast<int>(d.procs.size()));
    }
    return d;
}

struct Engine {
    const ScheduleProgram& s;
    const Decoded& d;
    const LuSymbolic& sym;
    double* arena;           // extent * width
    const double* consts;    // const_extent * width
    int width;
    double divergence_limit;

    [[nodiscard]] double read(int slot, int lane) const {
        return slot < 0 ? 0.0 : arena[static_cast<std::size_t>(slot) * width + lane];
    }

    void run_proc(const DecodedProc& p, double t) const {
        const int w = width;
        const int* in = d.port_slot.data() + p.in_base;
        const double* sign = d.port_sign.data() + p.in_base;
        const double* par = p.par >= 0 ? consts + static_cast<std::size_t>(p.par) * w : nullptr;
        double* state = p.state >= 0 ? arena + static_cast<std::size_t>(p.state) * w : nullptr;

        switch (p.code) {
            case KernelId::NortonResistor: {
                double* g = arena + static_cast<std::size_t>(p.out) * w;
                double* h = arena + static_cast<std::size_t>(p.out2) * w;
                for (int l = 0; l < w; ++l) {
                    g[l] = par[l];
                    h[l] = 0.0;
                }
                break;
            }
            case KernelId::NortonInductor: {
                double* g = arena + static_cast<std::size_t>(p.out) * w;
                double* h = arena + static_cast<std::size_t>(p.out2) * w;
                for (int l = 0; l < w; ++l) {
                    const double vs = read(in[1], l) - read(in[0], l);
                    g[l] = par[l];
                    h[l] = kern::hist_inductor(g[l], vs, read(in[2], l));
                }
                break;
            }
            case KernelId::NortonCapacitor: {
                double* g = arena + static_cast<std::size_t>(p.out) * w;
                double* h = arena + static_cast<std::size_t>(p.out2) * w;
                for (int l = 0; l < w; ++l) {
                    const double vs = read(in[1], l) - read(in[0], l);
                    g[l] = par[l];
                    h[l] = kern::hist_capacitor(g[l], vs, read(in[2], l));
                }
                break;
            }
            case KernelId::NortonSeriesRL: {
                double* g = arena + static_cast<std::size_t>(p.out) * w;
                double* h = arena + static_cast<std::size_t>(p.out2) * w;
                for (int l = 0; l < w; ++l) {
                    const double vs = read(in[1], l) - read(in[0], l);
                    g[l] = par[l];
                    h[l] = kern::hist_series_rl(g[l], par[w + l], vs, read(in[2], l));
                }
                break;
            }
            case KernelId::NortonVoltageSource: {
                double* g = arena + static_cast<std::size_t>(p.out) * w;
                double* h = arena + static_cast<std::size_t>(p.out2) * w;
                for (int l = 0; l < w; ++l) {
                    g[l] = par[l];
                    h[l] = g[l] * kern::source_value(par[w + l], par[2 * w + l], par[3 * w + l], t);
                }
                break;
            }
            case KernelId::NortonCurrentSource: {
                double* g = arena + static_cast<std::size_t>(p.out) * w;
                double* h = arena + static_cast<std::size_t>(p.out2) * w;
                for (int l = 0; l < w; ++l) {
                    g[l] = 0.0;
                    h[l] = kern::source_value(par[l], par[w + l], par[2 * w + l], t);
                }
                break;
            }
            case KernelId::NortonControlledSource: {
                double* g = arena + static_cast<std::size_t>(p.out) * w;
                double* h = arena + static_cast<std::size_t>(p.out2) * w;
                for (int l = 0; l < w; ++l) {
                    g[l] = 0.0;
                    h[l] = par[l] * (p.in_count > 3 ? read(in[3], l) : 0.0);
                }
                break;
            }
            case KernelId::NortonSwitch: {
                double* g = arena + static_cast<std::size_t>(p.out) * w;
                double* h = arena + static_cast<std::size_t>(p.out2) * w;
                for (int l = 0; l < w; ++l) {
                    int now = par[2 * w + l] != 0.0 ? 1 : 0;
                    for (int j = 3; j < p.par_len; ++j) {
                        if (t >= par[static_cast<std::size_t>(j) * w + l]) now ^= 1;
                    }
                    state[w + l] = static_cast<double>(now) != state[l] ? 1.0 : 0.0;
                    state[l] = static_cast<double>(now);
                    g[l] = now != 0 ? par[l] : par[w + l];
                    h[l] = 0.0;
                }
                break;
            }
            case KernelId::InjectionPair: {
                double* contrib = arena + static_cast<std::size_t>(p.out) * w;
                for (int l = 0; l < w; ++l) {
                    const double h = read(in[0], l);
                    contrib[l] = h;
                    contrib[w + l] = -h;
                }
                break;
            }
            case KernelId::FactorizeSystem: {
                const SolverTables& tables = s.solver;
                bool refactor = false;
                for (int slot : tables.watch) {
                    for (int l = 0; l < w && !refactor; ++l) {
                        if (read(slot, l) != 0.0) refactor = true;
                    }
                    if (refactor) break;
                }
                if (!refactor) break;
                for (int k = 0; k < tables.pattern.nnz(); ++k) {
                    double* dst = arena + static_cast<std::size_t>(tables.matrix + k) * w;
                    for (int l = 0; l < w; ++l) dst[l] = 0.0;
                    for (const auto& [slot, sgn] : tables.entry_terms[static_cast<std::size_t>(k)]) {
                        const double* src = arena + static_cast<std::size_t>(slot) * w;
                        for (int l = 0; l < w; ++l) dst[l] += sgn * src[l];
                    }
                }
                lu_factor(sym, tables.pattern, arena + static_cast<std::size_t>(tables.matrix) * w,
                          w, arena + static_cast<std::size_t>(tables.l) * w,
                          arena + static_cast<std::size_t>(tables.u) * w,
                          arena + static_cast<std::size_t>(tables.scratch) * w);
                for (int slot : tables.watch) {
                    double* cell = arena + static_cast<std::size_t>(slot) * w;
                    for (int l = 0; l < w; ++l) cell[l] = 0.0;
                }
                double* fc = arena + static_cast<std::size_t>(tables.fcount) * w;
                for (int l = 0; l < w; ++l) fc[l] += 1.0;
                break;
            }
            case KernelId::SolveSystem: {
                const SolverTables& tables = s.solver;
                for (int node = 0; node < s.node_count; ++node) {
                    double* dst = arena + static_cast<std::size_t>(tables.v_base + node) * w;
                    for (int l = 0; l < w; ++l) dst[l] = 0.0;
                    for (int slot : tables.gather[static_cast<std::size_t>(node)]) {
                        const double* src = arena + static_cast<std::size_t>(slot) * w;
                        for (int l = 0; l < w; ++l) dst[l] += src[l];
                    }
                }
                if (s.node_count > 0) {
                    lu_solve(sym, arena + static_cast<std::size_t>(tables.l) * w,
                             arena + static_cast<std::size_t>(tables.u) * w, w,
                             arena + static_cast<std::size_t>(tables.v_base) * w);
                }
                for (const auto& f : tables.finalize) {
                    double* i = arena + static_cast<std::size_t>(f.i) * w;
                    const double* g = arena + static_cast<std::size_t>(f.g) * w;
                    const double* h = arena + static_cast<std::size_t>(f.h) * w;
                    for (int l = 0; l < w; ++l) {
                        const double vs = read(f.vb, l) - read(f.va, l);
                        i[l] = g[l] * vs + h[l];
                    }
                }
                for (int node = 0; node < s.node_count; ++node) {
                    const double* v = arena + static_cast<std::size_t>(tables.v_base + node) * w;
                    for (int l = 0; l < w; ++l) {
                        if (!(std::abs(v[l]) <= divergence_limit)) {
                            fail(ErrorCode::NonFiniteState, "node index " + std::to_string(node),
                                 "node voltage diverged");
                        }
                    }
                }
                break;
            }
            case KernelId::CtlGain: {
                double* out = arena + static_cast<std::size_t>(p.out) * w;
                for (int l = 0; l < w; ++l) out[l] = par[l] * (sign[0] * read(in[0], l));
                break;
            }
            case KernelId::CtlSum: {
                double* out = arena + static_cast<std::size_t>(p.out) * w;
                for (int l = 0; l < w; ++l) {
                    double acc = 0.0;
                    for (int j = 0; j < p.in_count; ++j) acc += sign[j] * read(in[j], l);
                    out[l] = acc;
                }
                break;
            }
            case KernelId::CtlIntegrator: {
                double* out = arena + static_cast<std::size_t>(p.out) * w;
                for (int l = 0; l < w; ++l) {
                    const double u = sign[0] * read(in[0], l);
                    const double y = kern::ctl_integrate(par[l], state[l], state[w + l], u);
                    state[l] = y;
                    state[w + l] = u;
                    out[l] = y;
                }
                break;
            }
            case KernelId::CtlFirstOrderLag: {
                double* out = arena + static_cast<std::size_t>(p.out) * w;
                for (int l = 0; l < w; ++l) {
                    const double u = sign[0] * read(in[0], l);
                    const double y = kern::ctl_lag(par[l], par[w + l], state[l], state[w + l], u);
                    state[l] = y;
                    state[w + l] = u;
                    out[l] = y;
                }
                break;
            }
            case KernelId::CtlLimiter: {
                double* out = arena + static_cast<std::size_t>(p.out) * w;
                for (int l = 0; l < w; ++l) {
                    out[l] = kern::ctl_clamp(sign[0] * read(in[0], l), par[l], par[w + l]);
                }
                break;
            }
            case KernelId::CtlPiController: {
                double* out = arena + static_cast<std::size_t>(p.out) * w;
                for (int l = 0; l < w; ++l) {
                    const double u = sign[0] * read(in[0], l);
                    state[l] = kern::ctl_integrate(par[w + l], state[l], state[w + l], u);
                    state[w + l] = u;
                    out[l] = par[l] * u + state[l];
                }
                break;
            }
            case KernelId::CtlComparator: {
                double* out = arena + static_cast<std::size_t>(p.out) * w;
                for (int l = 0; l < w; ++l) {
                    out[l] = sign[0] * read(in[0], l) >= sign[1] * read(in[1], l) ? 1.0 : 0.0;
                }
                break;
            }
            case KernelId::CtlConstant: {
                double* out = arena + static_cast<std::size_t>(p.out) * w;
                for (int l = 0; l < w; ++l) out[l] = par[l];
                break;
            }
            case KernelId::CtlDelay: {
                double* out = arena + static_cast<std::size_t>(p.out) * w;
                for (int l = 0; l < w; ++l) out[l] = sign[0] * read(in[0], l);
                break;
            }
        }
    }

    void record(WaveformSet& waves, int step, double t) const {
        waves.time.push_back(t);
        for (std::size_t ch = 0; ch < s.channels.size(); ++ch) {
            const int slot = s.channels[ch].second;
            for (int l = 0; l < width; ++l) {
                waves.values(step, static_cast<Eigen::Index>(ch) * width + l) = read(slot, l);
            }
        }
    }

    void latch() const {
        for (const auto& [live, shadow] : s.latch) {
            double* dst = arena + static_cast<std::size_t>(shadow) * width;
            const double* src = arena + static_cast<std::size_t>(live) * width;
            for (int l = 0; l < width; ++l) dst[l] = src[l];
        }
    }
};

WaveformSet make_waveset(const ScheduleProgram& s, int steps) {
    WaveformSet waves;
    for (const auto& [name, slot] : s.channels) waves.channels.push_back(name);
    waves.width = s.width;
    waves.values.resize(steps, static_cast<Eigen::Index>(s.channels.size()) * s.width);
    return waves;
}

void validate_initial(const ScheduleProgram& s, const Eigen::VectorXd& initial) {
    if (initial.size() != static_cast<Eigen::Index>(s.arena_extent) * s.width) {
        fail(ErrorCode::DimensionMismatch, "",
             "initial state size " + std::to_string(initial.size()) + " does not match extent " +
                 std::to_string(s.arena_extent) + " x width " + std::to_string(s.width));
    }
}

}  // namespace

WaveformSet interpret(const ScheduleProgram& schedule, const Eigen::VectorXd& initial, int steps,
                      const ExecOptions& options) {
    validate_initial(schedule, initial);
    const Decoded decoded = decode(schedule);
    const LuSymbolic sym = lu_symbolic(schedule.solver.pattern);
    if (sym.l_nnz() != schedule.solver.l_nnz || sym.u_nnz() != schedule.solver.u_nnz) {
        fail(ErrorCode::MalformedDocument, "", "schedule LU fill sizes are inconsistent");
    }
    Eigen::VectorXd arena = initial;
    Engine engine{schedule, decoded, sym, arena.data(), schedule.const_table.data(),
                  schedule.width, options.divergence_limit};
    WaveformSet waves = make_waveset(schedule, steps);

    auto measured_from = std::chrono::steady_clock::now();
    for (int step = 0; step < steps; ++step) {
        if (step == options.warmup_steps) measured_from = std::chrono::steady_clock::now();
        const double t = static_cast<double>(step + 1) * schedule.dt;
        for (std::size_t layer = 0; layer + 1 < decoded.layer_begin.size(); ++layer) {
            for (int k = decoded.layer_begin[layer]; k < decoded.layer_begin[layer + 1]; ++k) {
                engine.run_proc(decoded.procs[static_cast<std::size_t>(k)], t);
            }
        }
        engine.record(waves, step, t);
        engine.latch();
    }
    if (options.stats != nullptr) {
        options.stats->factor_count = static_cast<int>(engine.read(schedule.solver.fcount, 0));
        options.stats->measured_steps = steps - std::min(steps, options.warmup_steps);
        options.stats->measured_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - measured_from)
                .count();
    }
    return waves;
}

WaveformSet execute_parallel(const ScheduleProgram& schedule, const Eigen::VectorXd& initial,
                             int workers, int steps, const ExecOptions& options) {
    if (workers < 1) {
        fail(ErrorCode::NonPositiveInput, "", "worker count must be at least 1");
    }
    validate_initial(schedule, initial);
    const Decoded decoded = decode(schedule);
    const LuSymbolic sym = lu_symbolic(schedule.solver.pattern);
    if (sym.l_nnz() != schedule.solver.l_nnz || sym.u_nnz() != schedule.solver.u_nnz) {
        fail(ErrorCode::MalformedDocument, "", "schedule LU fill sizes are inconsistent");
    }
    Eigen::VectorXd arena = initial;
    Engine engine{schedule, decoded, sym, arena.data(), schedule.const_table.data(),
                  schedule.width, options.divergence_limit};
    WaveformSet waves = make_waveset(schedule, steps);

    const int layer_count = static_cast<int>(decoded.layer_begin.size()) - 1;
    std::vector<std::atomic<long>> epochs(options.check_barriers ? decoded.procs.size() : 0);
    for (auto& e : epochs) e.store(0);

    std::atomic<bool> abort{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    // The completion step runs on exactly one thread while all workers wait,
    // so plain members are safe here.
    struct Completion {
        Engine* engine;
        WaveformSet* waves;
        const ScheduleProgram* schedule;
        std::atomic<bool>* abort;
        int layer_count;
        int warmup;
        std::chrono::steady_clock::time_point* measured_from;
        int layer = 0;
        int step = 0;

        void operator()() noexcept {
            if (abort->load()) return;
            if (++layer < layer_count) return;
            layer = 0;
            const double t = static_cast<double>(step + 1) * schedule->dt;
            engine->record(*waves, step, t);
            engine->latch();
            ++step;
            if (step == warmup) *measured_from = std::chrono::steady_clock::now();
        }
    };
    auto measured_from = std::chrono::steady_clock::now();
    std::barrier sync(workers, Completion{&engine, &waves, &schedule, &abort, layer_count,
                                          options.warmup_steps, &measured_from});

    // Every worker passes the same barrier sequence; an error raises the
    // abort flag before that worker's arrival, so all threads observe it in
    // the same phase and leave the protocol together.
    const auto worker = [&](int self) {
        for (int step = 0; step < steps; ++step) {
            const double t = static_cast<double>(step + 1) * schedule.dt;
            for (int layer = 0; layer < layer_count; ++layer) {
                if (!abort.load()) {
                    try {
                        const int begin = decoded.layer_begin[static_cast<std::size_t>(layer)];
                        const int end = decoded.layer_begin[static_cast<std::size_t>(layer) + 1];
                        const int count = end - begin;
                        const int chunk = (count + workers - 1) / workers;
                        const int lo = begin + std::min(count, self * chunk);
                        const int hi = begin + std::min(count, (self + 1) * chunk);
                        if (options.check_barriers && layer > 0) {
                            const long expected = static_cast<long>(step) * layer_count + layer;
                            for (int k = decoded.layer_begin[static_cast<std::size_t>(layer) - 1];
                                 k < begin; ++k) {
                                if (epochs[static_cast<std::size_t>(k)].load() != expected) {
                                    fail(ErrorCode::CycleDetected,
                                         "process " +
                                             std::to_string(
                                                 decoded.procs[static_cast<std::size_t>(k)].id),
                                         "barrier violation: previous layer incomplete");
                                }
                            }
                        }
                        for (int k = lo; k < hi; ++k) {
                            engine.run_proc(decoded.procs[static_cast<std::size_t>(k)], t);
                            if (options.check_barriers) {
                                epochs[static_cast<std::size_t>(k)].store(
                                    static_cast<long>(step) * layer_count + layer + 1);
                            }
                        }
                    } catch (...) {
                        {
                            const std::lock_guard<std::mutex> lock(error_mutex);
                            if (!error) error = std::current_exception();
                        }
                        abort.store(true);
                    }
                }
                sync.arrive_and_wait();
                if (abort.load()) return;
            }
        }
    };

    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int self = 0; self < workers; ++self) pool.emplace_back(worker, self);
    for (auto& thread : pool) thread.join();
    if (error) std::rethrow_exception(error);

    if (options.stats != nullptr) {
        options.stats->factor_count = static_cast<int>(engine.read(schedule.solver.fcount, 0));
        options.stats->measured_steps = steps - std::min(steps, options.warmup_steps);
        options.stats->measured_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - measured_from)
                .count();
    }
    return waves;
}

}  // namespace emtgrid
