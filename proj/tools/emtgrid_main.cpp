#include <unistd.h>

#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "emtgrid/bench.hpp"
#include "emtgrid/codegen.hpp"
#include "emtgrid/grid.hpp"
#include "emtgrid/service.hpp"

using namespace emtgrid;

namespace {

std::vector<int> parse_int_list(const std::string& csv) {
    std::vector<int> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        const std::size_t comma = csv.find(',', pos);
        out.push_back(std::atoi(csv.substr(pos, comma - pos).c_str()));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::vector<WorkerSlot> parse_slots(const std::string& spec) {
    std::vector<WorkerSlot> slots;
    std::size_t pos = 0;
    int index = 0;
    while (pos < spec.size()) {
        const std::size_t comma = spec.find(',', pos);
        const std::string item = spec.substr(pos, comma - pos);
        const std::size_t colon = item.find(':');
        WorkerSlot slot;
        slot.id = "slot" + std::to_string(index++);
        slot.profile = item.substr(0, colon);
        slot.capacity = colon == std::string::npos ? 1 : std::max(1, std::atoi(item.c_str() + colon + 1));
        slots.push_back(std::move(slot));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return slots;
}

DeviceProfile profile_for(const NetworkModel& model) {
    DeviceProfile profile;
    profile.name = model.task.device_profile;
    profile.affinity = model.task.strategy;
    profile.capacity = 1 << 30;
    return profile;
}

std::string self_path() {
    char buf[4096];
    const ssize_t n = ::readlink("/proc/self/exe", buf, sizeof buf - 1);
    if (n <= 0) return "emtgrid";
    buf[n] = '\0';
    return buf;
}

void emit_or_print(const std::string& content, const std::string& out_path) {
    if (out_path.empty()) {
        std::cout << content;
    } else {
        write_file(out_path, content);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"emtgrid - EMT simulation compiler, executors and orchestration grid"};
    app.require_subcommand(1);

    std::string doc_path, out_path, backend_name = "interpret", data_dir, slots_spec;
    std::string dialect = "cpp", format_name = "table", reports_path, base_path;
    std::string id_arg, package_dir, root_node = "1";
    int steps = -1, workers = 0, port = 8000, devices = 1, replicas = 1, warmup = 100;
    int bench_steps = 1000;
    double price = 0.0, hours = 0.0;
    std::string k_list = "1,4,16,32", n_list = "1,4,16,64", backends_csv = "serial,parallel:8";
    bool do_compile = false;

    auto* validate_cmd = app.add_subcommand("validate", "parse and validate a model document");
    validate_cmd->add_option("document", doc_path)->required();

    auto* compile_cmd = app.add_subcommand("compile", "compile a model to a schedule + state");
    compile_cmd->add_option("document", doc_path)->required();
    compile_cmd->add_option("-o,--out", out_path, "output prefix (.cgmsched/.state)");

    auto* run_cmd = app.add_subcommand("run", "simulate a model document");
    run_cmd->add_option("document", doc_path)->required();
    run_cmd->add_option("--backend", backend_name, "serial|interpret|parallel[:w]|vectorized");
    run_cmd->add_option("--steps", steps);
    run_cmd->add_option("-o,--out", out_path, "waveform file");

    auto* codegen_cmd = app.add_subcommand("codegen", "emit standalone simulation source");
    codegen_cmd->add_option("document", doc_path)->required();
    codegen_cmd->add_option("--dialect", dialect);
    codegen_cmd->add_option("-o,--out", out_path);
    codegen_cmd->add_flag("--compile", do_compile, "also compile with the host toolchain");

    auto* vse_cmd = app.add_subcommand("vse", "virtual simulation engine packages");
    auto* vse_assemble = vse_cmd->add_subcommand("assemble", "package a task");
    vse_assemble->add_option("document", doc_path)->required();
    vse_assemble->add_option("-o,--out", package_dir, "package directory")->required();
    auto* vse_exec = vse_cmd->add_subcommand("exec", "run a package");
    vse_exec->add_option("package", package_dir)->required();
    vse_exec->add_option("--out", out_path)->required();
    vse_exec->add_option("--workers", workers);

    auto* grid_cmd = app.add_subcommand("grid", "task orchestration");
    grid_cmd->add_option("--data-dir", data_dir, "persistence root (or EMTGRID_DATA_DIR)");
    auto* grid_submit = grid_cmd->add_subcommand("submit", "enqueue a task");
    grid_submit->add_option("document", doc_path)->required();
    auto* grid_status = grid_cmd->add_subcommand("status", "query a task record");
    grid_status->add_option("id", id_arg)->required();
    auto* grid_fetch = grid_cmd->add_subcommand("fetch", "fetch results of a done task");
    grid_fetch->add_option("id", id_arg)->required();
    grid_fetch->add_option("-o,--out", out_path);
    auto* grid_slots = grid_cmd->add_subcommand("slots", "list worker slots");
    (void)grid_slots;
    auto* grid_run = grid_cmd->add_subcommand("run-pending", "drain the queue");
    grid_run->add_option("--slots", slots_spec, "profile:capacity,...")->required();
    auto* grid_serve = grid_cmd->add_subcommand("serve", "serve HTTP endpoints");
    grid_serve->add_option("--slots", slots_spec, "profile:capacity,...")->required();
    grid_serve->add_option("--port", port);

    auto* bench_cmd = app.add_subcommand("bench", "benchmark harness");
    bench_cmd->add_option("--base", base_path, "base model document");
    bench_cmd->add_option("--steps", bench_steps);
    bench_cmd->add_option("--warmup", warmup);
    bench_cmd->add_option("-o,--out", reports_path, "reports JSON file");
    auto* bench_scale = bench_cmd->add_subcommand("scale", "replicated large-scale cases");
    bench_scale->add_option("--k", k_list, "replication counts");
    bench_scale->add_option("--backends", backends_csv);
    bench_scale->add_option("--root", root_node);
    auto* bench_scen = bench_cmd->add_subcommand("scenarios", "multi-scenario batches");
    bench_scen->add_option("--n", n_list, "batch widths");
    bench_scen->add_option("--backend", backend_name);

    auto* cost_cmd = app.add_subcommand("cost", "rental cost estimation");
    cost_cmd->add_option("--price", price, "currency per week")->required();
    cost_cmd->add_option("--hours", hours, "wall-clock hours")->required();
    cost_cmd->add_option("--devices", devices);

    auto* report_cmd = app.add_subcommand("report", "render benchmark reports");
    report_cmd->add_option("-i,--in", reports_path)->required();
    report_cmd->add_option("--format", format_name, "table|csv|svg");
    report_cmd->add_option("-o,--out", out_path);

    auto* scale_cmd = app.add_subcommand("scale", "emit a replicated model document");
    scale_cmd->add_option("document", doc_path)->required();
    scale_cmd->add_option("--k", replicas)->required();
    scale_cmd->add_option("--root", root_node);
    scale_cmd->add_option("-o,--out", out_path);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate_cmd) {
            const NetworkModel model = parse_model(read_file(doc_path));
            const ValidationReport report = validate(model);
            for (const auto& issue : report.issues) {
                std::cout << (issue.severity == ValidationIssue::Severity::Error ? "error" : "warning")
                          << " " << issue.code << " at " << issue.where << ": " << issue.message
                          << "\n";
            }
            std::cout << (report.runnable() ? "model is runnable" : "model has errors") << "\n";
            return report.runnable() ? 0 : 1;
        }
        if (*compile_cmd) {
            const NetworkModel model = parse_model(read_file(doc_path));
            const CompiledTask task = compile_task(model, profile_for(model));
            const std::string prefix = out_path.empty() ? "task" : out_path;
            write_file(prefix + ".cgmsched", task.schedule.serialize());
            write_file(prefix + ".state", serialize_state(task.initial, task.schedule.arena_extent,
                                                          task.schedule.width));
            std::cout << "layers=" << task.schedule.layer_count()
                      << " processes=" << task.schedule.process_count()
                      << " extent=" << task.schedule.arena_extent << "\n";
            return 0;
        }
        if (*run_cmd) {
            const std::string document = read_file(doc_path);
            const NetworkModel model = parse_model(document);
            int backend_workers = 1;
            const Backend backend = backend_from(backend_name, &backend_workers);
            WaveformSet waves;
            if (backend == Backend::Serial) {
                RunOptions options;
                options.steps_override = steps;
                waves = run_serial(model, model.task, options);
            } else {
                const CompiledTask task = compile_task(model, profile_for(model));
                const int n = steps >= 0 ? steps : task.schedule.steps;
                waves = backend == Backend::Parallel
                            ? execute_parallel(task.schedule, task.initial, backend_workers, n)
                            : interpret(task.schedule, task.initial, n);
            }
            emit_or_print(waves.to_text(), out_path);
            return 0;
        }
        if (*codegen_cmd) {
            const NetworkModel model = parse_model(read_file(doc_path));
            const CompiledTask task = compile_task(model, profile_for(model));
            const std::string source = emit_source(task.schedule, dialect);
            emit_or_print(source, out_path);
            if (do_compile) {
                const auto toolchain = detect_toolchain();
                if (!toolchain) {
                    std::cerr << "no host toolchain available\n";
                    return 1;
                }
                const std::string bin =
                    compile_emitted(source, *toolchain, out_path.empty() ? "." : out_path + ".d");
                std::cout << "compiled " << bin << "\n";
            }
            return 0;
        }
        if (*vse_assemble) {
            const VsePackage package = assemble_vse(read_file(doc_path), package_dir);
            std::cout << package.task_id << "\n";
            return 0;
        }
        if (*vse_exec) {
            run_vse(package_dir, out_path, workers);
            return 0;
        }
        if (*grid_cmd) {
            Orchestrator::Config config;
            config.data_dir = data_dir;
            if (*grid_run || *grid_serve) {
                config.slots = parse_slots(slots_spec);
                config.cli_path = self_path();
            }
            Orchestrator orchestrator(std::move(config));
            if (*grid_submit) {
                std::cout << orchestrator.submit(read_file(doc_path)) << "\n";
            } else if (*grid_status) {
                const TaskRecord record = orchestrator.status(id_arg);
                std::cout << to_string(record.state);
                if (!record.note.empty()) std::cout << " (" << record.note << ")";
                if (!record.failure.empty()) std::cout << " failure: " << record.failure;
                std::cout << "\n";
            } else if (*grid_fetch) {
                emit_or_print(orchestrator.fetch_results(id_arg), out_path);
            } else if (*grid_slots) {
                for (const auto& slot : orchestrator.slots()) {
                    std::cout << slot.id << " profile=" << slot.profile
                              << " capacity=" << slot.capacity << " busy=" << slot.busy << "\n";
                }
            } else if (*grid_run) {
                orchestrator.run_pending();
                std::cout << "queue drained\n";
            } else if (*grid_serve) {
                orchestrator.start();
                GridService service(orchestrator, port);
                std::cout << "serving on 127.0.0.1:" << service.port() << "\n";
                for (;;) std::this_thread::sleep_for(std::chrono::seconds(3600));
            }
            return 0;
        }
        if (*bench_cmd) {
            const std::string base = read_file(base_path.empty() ? "data/feeder33_pv3.json"
                                                                 : base_path);
            std::vector<TimingReport> all;
            if (*bench_scale) {
                std::vector<std::pair<Backend, int>> backends;
                std::size_t pos = 0;
                while (pos < backends_csv.size()) {
                    const std::size_t comma = backends_csv.find(',', pos);
                    int w = 1;
                    const Backend backend =
                        backend_from(backends_csv.substr(pos, comma - pos), &w);
                    backends.emplace_back(backend, w);
                    if (comma == std::string::npos) break;
                    pos = comma + 1;
                }
                for (int k : parse_int_list(k_list)) {
                    const std::string document = gen_scale_case(base, k, root_node);
                    auto reports = run_benchmark("scale-k" + std::to_string(k), document,
                                                 backends, bench_steps, warmup);
                    all.insert(all.end(), reports.begin(), reports.end());
                }
            } else if (*bench_scen) {
                for (int n : parse_int_list(n_list)) {
                    std::vector<double> irradiance;
                    for (int i = 0; i < n; ++i) {
                        irradiance.push_back(600.0 + 400.0 * (i + 1) / n);
                    }
                    const ScenarioBatch batch = gen_scenarios(base, irradiance, {25.0});
                    BenchSpec spec;
                    spec.label = "scenarios-n" + std::to_string(n);
                    spec.document = base;
                    spec.backend = Backend::Vectorized;
                    spec.scenario_rows = batch.rows;
                    spec.steps = bench_steps;
                    spec.warmup = warmup;
                    TimingReport report = measure(spec);
                    report.speedup = 1.0;
                    all.push_back(std::move(report));
                }
            }
            const std::string rendered = render_report(all, ReportFormat::Table);
            std::cout << rendered;
            if (!reports_path.empty()) write_file(reports_path, reports_to_json(all));
            return 0;
        }
        if (*cost_cmd) {
            char line[64];
            std::snprintf(line, sizeof line, "%.3f\n", estimate_cost(price, hours, devices));
            std::cout << line;
            return 0;
        }
        if (*report_cmd) {
            const auto reports = reports_from_json(read_file(reports_path));
            ReportFormat format = ReportFormat::Table;
            if (format_name == "csv") format = ReportFormat::Csv;
            else if (format_name == "svg") format = ReportFormat::Svg;
            emit_or_print(render_report(reports, format), out_path);
            return 0;
        }
        if (*scale_cmd) {
            emit_or_print(gen_scale_case(read_file(doc_path), replicas, root_node), out_path);
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
