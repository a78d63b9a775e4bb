#pragma once

#include <string>
#include <vector>

#include "emtgrid/pipeline.hpp"

namespace emtgrid {

struct TimingReport {
    std::string label;
    int nodes = 0;
    int controls = 0;
    std::string backend;  // serial | interpret | parallel:<w> | vectorized:<n>
    int workers = 1;
    int width = 1;
    int measured_steps = 0;
    int task_steps = 0;  // full task length (duration/dt)
    double avg_step_seconds = 0.0;
    double speedup = 1.0;  // vs the serial interpreter on the same case
    bool noisy = false;    // repeated runs differed by more than 20%
};

enum class Backend { Serial, Interpret, Parallel, Vectorized };

Backend backend_from(const std::string& name, int* workers_out);
std::string backend_label(Backend backend, int workers, int width);

/// Replicates the base case k times merged at the root node: copy 1 keeps
/// the original identifiers, copies 2..k suffix every non-root identifier
/// with "#<copy>".
std::string gen_scale_case(const std::string& base_document, int k,
                           const std::string& root = "1");

/// Cartesian irradiance x temperature grid (irradiance-major row order)
/// applied to every pv_subsystem of the base document.
ScenarioBatch gen_scenarios(const std::string& base_document,
                            const std::vector<double>& irradiance,
                            const std::vector<double>& temperature);

struct BenchSpec {
    std::string label;
    std::string document;
    Backend backend = Backend::Interpret;
    int workers = 1;
    std::vector<std::vector<ScenarioOverride>> scenario_rows;  // vectorized only
    int steps = 1000;
    int warmup = 100;
    bool verify = true;  // vectorized runs must match per-scenario serial runs
};

/// Measures one configuration: two timed runs (the second is reported, a
/// >20% spread sets `noisy`), correctness gated before timing.
TimingReport measure(const BenchSpec& spec);

/// Measures a baseline serial-interpreter row first, then every requested
/// backend; speedups are relative to that baseline.
std::vector<TimingReport> run_benchmark(const std::string& label, const std::string& document,
                                        const std::vector<std::pair<Backend, int>>& backends,
                                        int steps, int warmup);

enum class ReportFormat { Table, Csv, Svg };

std::string render_report(const std::vector<TimingReport>& reports, ReportFormat format);

std::string reports_to_json(const std::vector<TimingReport>& reports);
std::vector<TimingReport> reports_from_json(const std::string& text);

}  // namespace emtgrid
