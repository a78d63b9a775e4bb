#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>

#include "emtgrid/bench.hpp"
#include "emtgrid/grid.hpp"
#include "support/oracles.hpp"

using namespace emtgrid;

namespace {

int feeder_node_count(const std::string& document) {
    const NetworkModel model = parse_model(document);
    int count = 0;
    for (const auto& n : model.nodes) {
        if (n.find(".dc") == std::string::npos) ++count;
    }
    return count;
}

std::string run_cli(const std::string& args) {
#ifdef EMTGRID_CLI
    const std::string cmd = std::string("\"") + EMTGRID_CLI + "\" " + args + " 2>&1";
#else
    const std::string cmd = "emtgrid " + args + " 2>&1";
#endif
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    char buf[512];
    while (fgets(buf, sizeof buf, pipe) != nullptr) out += buf;
    pclose(pipe);
    return out;
}

}  // namespace

TEST_CASE("gen_scale_case: k=1 is structurally identical to the base") {
    const std::string base = oracles::feeder_document();
    const NetworkModel a = parse_model(base);
    const NetworkModel b = parse_model(gen_scale_case(base, 1));
    CHECK(a == b);
}

TEST_CASE("gen_scale_case: k=3 merges roots, 97 feeder nodes") {
    const std::string scaled = gen_scale_case(oracles::feeder_document(), 3);
    CHECK(feeder_node_count(scaled) == 3 * 33 - 2);
    const NetworkModel model = parse_model(scaled);
    CHECK(validate(model).runnable());
}

TEST_CASE("gen_scale_case: replication counts are exact affine functions of k") {
    const std::string base = oracles::feeder_document();
    const NetworkModel base_model = parse_model(base);
    const int n1 = feeder_node_count(base);
    const int c1 = static_cast<int>(base_model.control_blocks.size());
    for (int k : {2, 4, 7}) {
        const NetworkModel model = parse_model(gen_scale_case(base, k));
        CHECK(feeder_node_count(gen_scale_case(base, k)) == k * n1 - (k - 1));
        CHECK(static_cast<int>(model.control_blocks.size()) == k * c1);
    }
}

TEST_CASE("gen_scale_case: k=330 reaches 990 pv subsystems and 77220 control components") {
    const std::string scaled = gen_scale_case(oracles::feeder_document(), 330);
    const NetworkModel model = parse_model(scaled);
    int controlled_sources = 0;
    for (const auto& c : model.components) {
        if (c.kind == ComponentKind::ControlledCurrentSource) ++controlled_sources;
    }
    CHECK(controlled_sources == 990);  // one grid-side source per pv subsystem
    CHECK(model.control_blocks.size() == 77220);
    CHECK(feeder_node_count(scaled) == 330 * 33 - 329);
}

TEST_CASE("gen_scenarios: cartesian grids") {
    const std::string base = oracles::feeder_document();
    CHECK(gen_scenarios(base, {800.0, 1000.0}, {20.0, 30.0}).size() == 4);

    std::vector<double> irr, temp;
    for (int i = 0; i < 40; ++i) irr.push_back(500.0 + 10.0 * i);
    for (int i = 0; i < 25; ++i) temp.push_back(10.0 + i);
    CHECK(gen_scenarios(base, irr, temp).size() == 1000);

    // Row order is irradiance-major.
    const ScenarioBatch batch = gen_scenarios(base, {800.0, 1000.0}, {20.0, 30.0});
    CHECK(batch.rows[0][0].value == 800.0);
    CHECK(batch.rows[0][1].value == 20.0);
    CHECK(batch.rows[1][1].value == 30.0);
    CHECK(batch.rows[2][0].value == 1000.0);
}

TEST_CASE("gen_scenarios: degenerate single-scenario batch equals the override run") {
    const std::string base = oracles::feeder_document();
    const ScenarioBatch batch = gen_scenarios(base, {700.0}, {30.0});
    REQUIRE(batch.size() == 1);
    const NetworkModel model = parse_model(base);
    const CompiledTask task =
        compile_task(model, builtin_profile("cpu-vector"), &batch);
    const WaveformSet wide = interpret(task.schedule, task.initial, 50);

    const NetworkModel override_model = parse_model(apply_overrides(base, batch.rows[0]));
    RunOptions options;
    options.steps_override = 50;
    const WaveformSet reference = run_serial(override_model, override_model.task, options);
    CHECK(wide.to_text() == reference.to_text());
}

TEST_CASE("measure: serial versus serial speedup is close to one") {
    BenchSpec spec;
    spec.label = "feeder";
    spec.document = oracles::feeder_document();
    spec.backend = Backend::Interpret;
    spec.steps = 150;
    spec.warmup = 30;
    const TimingReport a = measure(spec);
    const TimingReport b = measure(spec);
    CHECK(a.avg_step_seconds > 0.0);
    const double ratio = a.avg_step_seconds / b.avg_step_seconds;
    CHECK(ratio > 0.4);
    CHECK(ratio < 2.5);
}

TEST_CASE("run_benchmark reports speedups against the serial interpreter") {
    const auto reports = run_benchmark("feeder", oracles::feeder_document(),
                                       {{Backend::Serial, 1}, {Backend::Parallel, 2}}, 120, 20);
    REQUIRE(reports.size() == 3);
    CHECK(reports[0].backend == "interpret");
    CHECK(reports[0].speedup == 1.0);
    CHECK(reports[1].backend == "serial");
    CHECK(reports[2].backend == "parallel:2");
    for (const auto& r : reports) {
        CHECK(r.nodes == 36);
        CHECK(r.controls == 234);
        CHECK(r.avg_step_seconds > 0.0);
        CHECK(r.speedup > 0.0);
    }
}

TEST_CASE("render_report: exact csv columns and table header") {
    TimingReport row;
    row.label = "demo";
    row.nodes = 36;
    row.controls = 234;
    row.backend = "interpret";
    row.width = 1;
    row.avg_step_seconds = 1.5e-5;
    row.speedup = 1.0;
    TaskConfig config;
    config.dt = 50e-6;
    config.duration = 60.0;
    row.task_steps = config.steps();
    CHECK(row.task_steps == 1200000);

    const std::string csv = render_report({row}, ReportFormat::Csv);
    CHECK(csv.rfind("case,nodes,controls,backend,width,avg_step_s,speedup\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);  // header + one data row

    const std::string table = render_report({row}, ReportFormat::Table);
    CHECK(table.find("steps_per_task=1200000") != std::string::npos);

    const std::string svg = render_report({row}, ReportFormat::Svg);
    CHECK(svg.rfind("<svg", 0) == 0);

    const auto round_trip = reports_from_json(reports_to_json({row}));
    REQUIRE(round_trip.size() == 1);
    CHECK(round_trip[0].label == "demo");
    CHECK(round_trip[0].task_steps == 1200000);

    CHECK_THROWS_AS(render_report({}, ReportFormat::Csv), Error);
}

TEST_CASE("rental-cost rows are exact to the millidollar") {
    CHECK(estimate_cost(115.0, 0.53, 1) == doctest::Approx(0.363).epsilon(1e-12));
    CHECK(estimate_cost(145.0, 0.29, 1) == doctest::Approx(0.250).epsilon(1e-12));
}

TEST_CASE("cli: cost, validate and run verbs") {
    CHECK(run_cli("cost --price 115 --hours 0.53") == "0.363\n");
    CHECK(run_cli("cost --price 145 --hours 0.29") == "0.250\n");
    CHECK(run_cli("cost --price 168 --hours 1.0") == "1.000\n");

    const std::string feeder = oracles::source_root() + "/data/feeder33_pv3.json";
    CHECK(run_cli("validate \"" + feeder + "\"").find("model is runnable") != std::string::npos);

    const std::string dir = oracles::temp_dir("cli_run");
    const std::string out = run_cli("run \"" + feeder + "\" --steps 50 -o \"" + dir + "/w.txt\"");
    CHECK(WaveformSet::load(dir + "/w.txt").steps() == 50);
}

TEST_CASE("cli: bench, report, scale and grid verbs round-trip") {
    const std::string feeder = oracles::source_root() + "/data/feeder33_pv3.json";
    const std::string dir = oracles::temp_dir("cli_bench");

    const std::string bench_out =
        run_cli("bench --base \"" + feeder + "\" --steps 30 --warmup 5 -o \"" + dir +
                "/reports.json\" scale --k 1 --backends serial");
    CHECK(bench_out.find("scale-k1") != std::string::npos);

    const std::string csv = run_cli("report -i \"" + dir + "/reports.json\" --format csv");
    CHECK(csv.rfind("case,nodes,controls,backend,width,avg_step_s,speedup", 0) == 0);
    const std::string svg = run_cli("report -i \"" + dir + "/reports.json\" --format svg");
    CHECK(svg.rfind("<svg", 0) == 0);

    const std::string scaled = run_cli("scale \"" + feeder + "\" --k 2 -o \"" + dir + "/k2.json\"");
    CHECK(parse_model(read_file(dir + "/k2.json")).nodes.size() == 2 * 36 - 1);

    const std::string scen_out = run_cli("bench --base \"" + feeder +
                                         "\" --steps 25 --warmup 5 scenarios --n 1,2 "
                                         "--backend vectorized");
    CHECK(scen_out.find("scenarios-n2") != std::string::npos);

    const std::string gen = run_cli("codegen \"" + feeder + "\" -o \"" + dir +
                                    "/prog.cpp\" --compile");
    CHECK(gen.find("compiled") != std::string::npos);
    CHECK(read_file(dir + "/prog.cpp").find("/*P*/") != std::string::npos);

    // Offline grid verbs against a fresh data directory.
    const std::string doc_path = dir + "/task.json";
    write_file(doc_path, oracles::rc_discharge_doc(1234.0, 1e-6, 1.0, 1e-6, 1e-4));
    const std::string grid = "grid --data-dir \"" + dir + "/grid\" ";
    std::string id = run_cli(grid + "submit \"" + doc_path + "\"");
    id.erase(id.find_last_not_of('\n') + 1);
    CHECK(id.size() == 64);
    CHECK(run_cli(grid + "status " + id).rfind("queued", 0) == 0);
    CHECK(run_cli(grid + "run-pending --slots cpu-serial:1").find("queue drained") !=
          std::string::npos);
    CHECK(run_cli(grid + "status " + id).rfind("done", 0) == 0);
    const std::string fetched = run_cli(grid + "fetch " + id);
    CHECK(fetched.rfind("time ", 0) == 0);
}
