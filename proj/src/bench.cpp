#include "emtgrid/bench.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace emtgrid {

using nlohmann::json;

Backend backend_from(const std::string& name, int* workers_out) {
    if (workers_out != nullptr) *workers_out = 1;
    if (name == "serial") return Backend::Serial;
    if (name == "interpret") return Backend::Interpret;
    if (name == "vectorized") return Backend::Vectorized;
    if (name.rfind("parallel", 0) == 0) {
        if (workers_out != nullptr && name.size() > 9 && name[8] == ':') {
            *workers_out = std::max(1, std::atoi(name.c_str() + 9));
        }
        return Backend::Parallel;
    }
    fail(ErrorCode::UnknownKind, name, "unknown backend");
}

std::string backend_label(Backend backend, int workers, int width) {
    switch (backend) {
        case Backend::Serial: return "serial";
        case Backend::Interpret: return "interpret";
        case Backend::Parallel: return "parallel:" + std::to_string(workers);
        case Backend::Vectorized: return "vectorized:" + std::to_string(width);
    }
    return "interpret";
}

namespace {

std::string suffixed(const std::string& id, int copy, const std::string& root) {
    if (copy == 1) return id;
    if (id == root || id == "0") return id;
    return id + "#" + std::to_string(copy);
}

std::string suffixed_signal(const std::string& spelled, int copy) {
    // Preserve a sign prefix on control input references.
    if (!spelled.empty() && (spelled[0] == '-' || spelled[0] == '+')) {
        return spelled.substr(0, 1) + spelled.substr(1) + "#" + std::to_string(copy);
    }
    return spelled + "#" + std::to_string(copy);
}

}  // namespace

std::string gen_scale_case(const std::string& base_document, int k, const std::string& root) {
    if (k < 1) fail(ErrorCode::NonPositiveInput, "", "replication count must be at least 1");
    json base;
    try {
        base = json::parse(base_document);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::MalformedDocument, "byte " + std::to_string(e.byte), e.what());
    }
    if (k == 1) return base.dump(2) + "\n";

    json out = base;
    out["nodes"] = json::array();
    out["components"] = json::array();
    out["control"] = json::array();
    out["couplings"] = json::array();

    bool root_seen = false;
    for (const auto& n : base.value("nodes", json::array())) {
        if (n.get<std::string>() == root) root_seen = true;
    }
    if (!root_seen) {
        fail(ErrorCode::DanglingReference, root, "designated root node is not declared");
    }

    for (int copy = 1; copy <= k; ++copy) {
        for (const auto& n : base["nodes"]) {
            const std::string name = n.get<std::string>();
            if (name == root) {
                if (copy == 1) out["nodes"].push_back(name);
                continue;
            }
            out["nodes"].push_back(suffixed(name, copy, root));
        }
        for (const auto& jc : base.value("components", json::array())) {
            json c = jc;
            c["id"] = suffixed(jc.value("id", ""), copy, root);
            json terminals = json::array();
            for (const auto& t : jc.value("terminals", json::array())) {
                terminals.push_back(suffixed(t.get<std::string>(), copy, root));
            }
            c["terminals"] = terminals;
            out["components"].push_back(std::move(c));
        }
        for (const auto& jb : base.value("control", json::array())) {
            json b = jb;
            b["id"] = copy == 1 ? jb.value("id", "") : jb.value("id", "") + "#" + std::to_string(copy);
            json inputs = json::array();
            for (const auto& in : jb.value("inputs", json::array())) {
                inputs.push_back(copy == 1 ? in.get<std::string>()
                                           : suffixed_signal(in.get<std::string>(), copy));
            }
            b["inputs"] = inputs;
            out["control"].push_back(std::move(b));
        }
        for (const auto& jc : base.value("couplings", json::array())) {
            json c = jc;
            c["electrical_ref"] = suffixed(jc.value("electrical_ref", ""), copy, root);
            c["signal_ref"] = copy == 1 ? jc.value("signal_ref", "")
                                        : jc.value("signal_ref", "") + "#" + std::to_string(copy);
            out["couplings"].push_back(std::move(c));
        }
    }
    return out.dump(2) + "\n";
}

ScenarioBatch gen_scenarios(const std::string& base_document,
                            const std::vector<double>& irradiance,
                            const std::vector<double>& temperature) {
    if (irradiance.empty() || temperature.empty()) {
        fail(ErrorCode::NonPositiveInput, "", "scenario grids must be nonempty");
    }
    json base;
    try {
        base = json::parse(base_document);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::MalformedDocument, "byte " + std::to_string(e.byte), e.what());
    }
    std::vector<std::string> pv_ids;
    for (const auto& jc : base.value("components", json::array())) {
        if (jc.value("kind", "") == "pv_subsystem") pv_ids.push_back(jc.value("id", ""));
    }

    ScenarioBatch batch;
    batch.base_document = base_document;
    for (double irr : irradiance) {
        for (double temp : temperature) {
            std::vector<ScenarioOverride> row;
            for (const auto& pv : pv_ids) {
                row.push_back({pv, "irradiance", irr});
                row.push_back({pv, "temperature", temp});
            }
            batch.rows.push_back(std::move(row));
        }
    }
    return batch;
}

namespace {

struct TimedRun {
    double avg_step = 0.0;
};

TimedRun timed_run(const BenchSpec& spec, const NetworkModel& model, const CompiledTask* compiled) {
    TimedRun out;
    const int total = spec.warmup + spec.steps;
    if (spec.backend == Backend::Serial) {
        double seconds = 0.0;
        RunOptions options;
        options.steps_override = total;
        options.warmup_steps = spec.warmup;
        options.measured_seconds = &seconds;
        run_serial(model, model.task, options);
        out.avg_step = seconds / spec.steps;
        return out;
    }
    ExecStats stats;
    ExecOptions options;
    options.warmup_steps = spec.warmup;
    options.stats = &stats;
    if (spec.backend == Backend::Parallel) {
        execute_parallel(compiled->schedule, compiled->initial, spec.workers, total, options);
    } else {
        interpret(compiled->schedule, compiled->initial, total, options);
    }
    out.avg_step = stats.measured_seconds / stats.measured_steps;
    return out;
}

}  // namespace

TimingReport measure(const BenchSpec& spec) {
    const NetworkModel model = parse_model(spec.document);
    TimingReport report;
    report.label = spec.label;
    report.nodes = static_cast<int>(model.nodes.size());
    report.controls = static_cast<int>(model.control_blocks.size());
    report.workers = spec.workers;
    report.width = spec.backend == Backend::Vectorized
                       ? std::max<int>(1, static_cast<int>(spec.scenario_rows.size()))
                       : 1;
    report.backend = backend_label(spec.backend, spec.workers, report.width);
    report.measured_steps = spec.steps;
    report.task_steps = model.task.steps();

    CompiledTask compiled;
    const DeviceProfile profile{"bench", Strategy::Serial, 1 << 30, true, ""};
    if (spec.backend != Backend::Serial) {
        if (spec.backend == Backend::Vectorized && !spec.scenario_rows.empty()) {
            ScenarioBatch batch;
            batch.base_document = spec.document;
            batch.rows = spec.scenario_rows;
            compiled = compile_task(model, profile, &batch);
        } else {
            compiled = compile_task(model, profile);
        }
    }

    // Correctness gate: a vectorized batch must reproduce per-scenario
    // serial runs bitwise before any timing is reported.
    if (spec.backend == Backend::Vectorized && spec.verify && !spec.scenario_rows.empty()) {
        const int total = spec.warmup + spec.steps;
        const WaveformSet wide = interpret(compiled.schedule, compiled.initial, total);
        for (std::size_t lane = 0; lane < spec.scenario_rows.size(); ++lane) {
            const NetworkModel lane_model =
                parse_model(apply_overrides(spec.document, spec.scenario_rows[lane]));
            RunOptions options;
            options.steps_override = total;
            const WaveformSet serial = run_serial(lane_model, lane_model.task, options);
            if (wide.lane(static_cast<int>(lane)).to_text() != serial.to_text()) {
                fail(ErrorCode::TopologyMismatch, "lane " + std::to_string(lane),
                     "vectorized waveforms do not match the per-scenario serial run; "
                     "timing rejected");
            }
        }
    }

    const TimedRun first = timed_run(spec, model, &compiled);
    const TimedRun second = timed_run(spec, model, &compiled);
    report.avg_step_seconds = second.avg_step;
    const double spread = std::abs(first.avg_step - second.avg_step) /
                          std::max(first.avg_step, second.avg_step);
    report.noisy = spread > 0.20;
    return report;
}

std::vector<TimingReport> run_benchmark(const std::string& label, const std::string& document,
                                        const std::vector<std::pair<Backend, int>>& backends,
                                        int steps, int warmup) {
    std::vector<TimingReport> reports;
    BenchSpec base;
    base.label = label;
    base.document = document;
    base.backend = Backend::Interpret;
    base.steps = steps;
    base.warmup = warmup;
    TimingReport baseline = measure(base);
    baseline.speedup = 1.0;
    reports.push_back(baseline);

    for (const auto& [backend, workers] : backends) {
        if (backend == Backend::Interpret && workers <= 1) continue;  // the baseline row
        BenchSpec spec = base;
        spec.backend = backend;
        spec.workers = workers;
        TimingReport report = measure(spec);
        report.speedup = baseline.avg_step_seconds / report.avg_step_seconds;
        reports.push_back(std::move(report));
    }
    return reports;
}

std::string render_report(const std::vector<TimingReport>& reports, ReportFormat format) {
    if (reports.empty()) {
        fail(ErrorCode::NonPositiveInput, "", "nothing to report");
    }
    switch (format) {
        case ReportFormat::Csv: {
            std::string out = "case,nodes,controls,backend,width,avg_step_s,speedup\n";
            for (const auto& r : reports) {
                out += r.label + "," + format_int(r.nodes) + "," + format_int(r.controls) + "," +
                       r.backend + "," + format_int(r.width) + "," +
                       format_g17(r.avg_step_seconds) + "," + format_g17(r.speedup) + "\n";
            }
            return out;
        }
        case ReportFormat::Table: {
            std::string out = "steps_per_task=" + format_int(reports.front().task_steps) + "\n";
            out += "case                nodes controls backend        width avg_step_s   speedup\n";
            for (const auto& r : reports) {
                char line[200];
                std::snprintf(line, sizeof line, "%-19s %5d %8d %-14s %5d %11.3e %8.2f%s\n",
                              r.label.c_str(), r.nodes, r.controls, r.backend.c_str(), r.width,
                              r.avg_step_seconds, r.speedup, r.noisy ? " (noisy)" : "");
                out += line;
            }
            return out;
        }
        case ReportFormat::Svg: {
            // One bar per report row, scaled to the slowest configuration.
            double worst = 0.0;
            for (const auto& r : reports) worst = std::max(worst, r.avg_step_seconds);
            const int bar_height = 18;
            const int chart_width = 500;
            const int height = static_cast<int>(reports.size()) * (bar_height + 6) + 30;
            std::string out =
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"720\" height=\"" +
                format_int(height) + "\">\n";
            int y = 20;
            for (const auto& r : reports) {
                const int w = worst > 0.0
                                  ? static_cast<int>(chart_width * r.avg_step_seconds / worst)
                                  : 0;
                out += "<rect x=\"180\" y=\"" + format_int(y) + "\" width=\"" + format_int(w) +
                       "\" height=\"" + format_int(bar_height) + "\" fill=\"#4477aa\"/>\n";
                out += "<text x=\"4\" y=\"" + format_int(y + 13) + "\" font-size=\"11\">" +
                       r.label + " " + r.backend + "</text>\n";
                out += "<text x=\"" + format_int(188 + w) + "\" y=\"" + format_int(y + 13) +
                       "\" font-size=\"11\">" + format_g17(r.avg_step_seconds) + " s</text>\n";
                y += bar_height + 6;
            }
            out += "</svg>\n";
            return out;
        }
    }
    fail(ErrorCode::UnknownKind, "", "unknown report format");
}

std::string reports_to_json(const std::vector<TimingReport>& reports) {
    json out = json::array();
    for (const auto& r : reports) {
        json jr;
        jr["label"] = r.label;
        jr["nodes"] = r.nodes;
        jr["controls"] = r.controls;
        jr["backend"] = r.backend;
        jr["workers"] = r.workers;
        jr["width"] = r.width;
        jr["measured_steps"] = r.measured_steps;
        jr["task_steps"] = r.task_steps;
        jr["avg_step_seconds"] = r.avg_step_seconds;
        jr["speedup"] = r.speedup;
        jr["noisy"] = r.noisy;
        out.push_back(std::move(jr));
    }
    return out.dump(2) + "\n";
}

std::vector<TimingReport> reports_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(ErrorCode::MalformedDocument, "byte " + std::to_string(e.byte), e.what());
    }
    std::vector<TimingReport> out;
    for (const auto& jr : doc) {
        TimingReport r;
        r.label = jr.value("label", "");
        r.nodes = jr.value("nodes", 0);
        r.controls = jr.value("controls", 0);
        r.backend = jr.value("backend", "interpret");
        r.workers = jr.value("workers", 1);
        r.width = jr.value("width", 1);
        r.measured_steps = jr.value("measured_steps", 0);
        r.task_steps = jr.value("task_steps", 0);
        r.avg_step_seconds = jr.value("avg_step_seconds", 0.0);
        r.speedup = jr.value("speedup", 1.0);
        r.noisy = jr.value("noisy", false);
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace emtgrid
