#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <thread>

#include "emtgrid/grid.hpp"
#include "emtgrid/service.hpp"
#include "emtgrid/sha256.hpp"
#include "support/oracles.hpp"

// After Eigen: httplib's transitive system includes clash with Eigen's
// internals when seen first.
#include <httplib.h>

using namespace emtgrid;

namespace {

/// Small, fast task: RC discharge with a per-task resistance so ids differ.
std::string quick_task_doc(int variant) {
    return oracles::rc_discharge_doc(1000.0 + variant, 1e-6, 1.0, 1e-6, 1e-4);
}

/// Parses fine but hits SingularMatrix at the first factorization: two
/// inductor-only islands with no ground path.
std::string singular_task_doc() {
    return R"({
  "nodes": ["1", "2", "3", "4"],
  "components": [
    {"id": "la", "kind": "inductor", "params": {"inductance": 0.1}, "terminals": ["1", "2"]},
    {"id": "lb", "kind": "inductor", "params": {"inductance": 0.2}, "terminals": ["3", "4"]}
  ],
  "control": [],
  "couplings": [],
  "task": {"dt": 0.0001, "duration": 0.001, "channels": ["v:1"], "device_profile": "cpu-serial", "strategy": "serial"}
})";
}

int state_rank(TaskState state) {
    switch (state) {
        case TaskState::Queued: return 0;
        case TaskState::Building: return 1;
        case TaskState::Running: return 2;
        case TaskState::Done:
        case TaskState::Failed: return 3;
    }
    return 0;
}

}  // namespace

TEST_CASE("sha256 matches the reference test vector") {
    CHECK(sha256_hex("abc") ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") ==
          "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("estimate_cost reproduces the rental-cost table") {
    CHECK(estimate_cost(115.0, 0.53) == doctest::Approx(0.363).epsilon(1e-12));
    CHECK(estimate_cost(145.0, 0.29) == doctest::Approx(0.250).epsilon(1e-12));
    CHECK(estimate_cost(168.0, 1.0) == doctest::Approx(1.000).epsilon(1e-12));
    CHECK(estimate_cost(115.0, 0.53, 2) == doctest::Approx(0.726).epsilon(1e-12));
    CHECK_THROWS_AS(estimate_cost(-1.0, 1.0), Error);
    CHECK_THROWS_AS(estimate_cost(1.0, 0.0), Error);

    const CostModel cpu{"cpu-32vse", 115.0};
    const CostModel gpu{"accel", 145.0};
    CHECK(cpu.estimate(0.53) == doctest::Approx(0.363).epsilon(1e-12));
    CHECK(gpu.estimate(0.29) == doctest::Approx(0.250).epsilon(1e-12));
}

TEST_CASE("assemble_vse: re-assembly is byte-identical and checksums verify") {
    const std::string doc = quick_task_doc(0);
    const std::string dir_a = oracles::temp_dir("vse_a");
    const std::string dir_b = oracles::temp_dir("vse_b");
    const VsePackage a = assemble_vse(doc, dir_a);
    const VsePackage b = assemble_vse(doc, dir_b);
    CHECK(a.task_id == b.task_id);
    for (const char* file :
         {"manifest.json", "schedule.cgmsched", "state.txt", "program.cpp", "model.json"}) {
        CHECK(read_file(dir_a + "/" + file) == read_file(dir_b + "/" + file));
    }

    const std::string out = dir_a + "/waves.txt";
    CHECK_NOTHROW(run_vse(dir_a, out));
    CHECK(WaveformSet::load(out).steps() == 100);

    // Tampering breaks the checksum gate.
    write_file(dir_a + "/state.txt", "STATE v1 extent=1 width=1\n0\n");
    CHECK_THROWS_AS(run_vse(dir_a, out), Error);
}

TEST_CASE("assemble_vse: feeder package survives a write/read cycle") {
    const std::string dir = oracles::temp_dir("vse_feeder");
    const VsePackage package = assemble_vse(oracles::feeder_document(), dir);
    CHECK(package.task_id == task_id_for(oracles::feeder_document()));
    const std::string out = dir + "/waves.txt";
    CHECK_NOTHROW(run_vse(dir, out));  // checksums verify, schedule reloads
    CHECK(WaveformSet::load(out).steps() == 2000);
}

TEST_CASE("dispatch: FIFO within matching profiles, capacity respected") {
    std::vector<WorkerSlot> slots = {{"s0", "cpu-serial", 1, 0}, {"s1", "gpu", 2, 0}};
    const std::vector<QueuedTask> queue = {
        {"t1", "cpu-serial"}, {"t2", "cpu-serial"}, {"t3", "gpu"}, {"t4", "exotic"}, {"t5", "gpu"}};
    const auto assignments = dispatch(queue, slots);
    REQUIRE(assignments.size() == 3);
    CHECK(assignments[0] == std::pair<std::string, std::string>{"t1", "s0"});
    CHECK(assignments[1] == std::pair<std::string, std::string>{"t3", "s1"});
    CHECK(assignments[2] == std::pair<std::string, std::string>{"t5", "s1"});
    CHECK(slots[0].busy == 1);
    CHECK(slots[1].busy == 2);
}

TEST_CASE("submit is idempotent; unknown ids and unfinished fetches error") {
    Orchestrator::Config config;
    config.data_dir = oracles::temp_dir("grid_idem");
    config.slots = {{"s0", "cpu-serial", 1, 0}};
    Orchestrator orchestrator(std::move(config));

    const std::string doc = quick_task_doc(1);
    const std::string id = orchestrator.submit(doc);
    CHECK(orchestrator.submit(doc) == id);
    CHECK(orchestrator.queued().size() == 1);
    CHECK(id == task_id_for(doc));

    CHECK_THROWS_AS((void)orchestrator.status("feedfeed"), Error);
    try {
        (void)orchestrator.fetch_results(id);
        FAIL("expected NotFinished");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NotFinished);
    }
}

TEST_CASE("unmatched device profile waits with a reason note") {
    Orchestrator::Config config;
    config.data_dir = oracles::temp_dir("grid_wait");
    config.slots = {{"s0", "cpu-serial", 1, 0}};
    Orchestrator orchestrator(std::move(config));

    std::string doc = quick_task_doc(2);
    const std::string needle = "\"device_profile\": \"cpu-serial\"";
    doc.replace(doc.find(needle), needle.size(), "\"device_profile\": \"quantum\"");
    const std::string id = orchestrator.submit(doc);
    orchestrator.run_pending();
    const TaskRecord record = orchestrator.status(id);
    CHECK(record.state == TaskState::Queued);
    CHECK(record.note.find("quantum") != std::string::npos);
}

TEST_CASE("eight distinct tasks all reach done with readable results") {
    Orchestrator::Config config;
    config.data_dir = oracles::temp_dir("grid_eight");
    config.slots = {{"s0", "cpu-serial", 2, 0}, {"s1", "cpu-serial", 2, 0}};
    Orchestrator orchestrator(std::move(config));

    std::vector<std::string> ids;
    for (int variant = 0; variant < 8; ++variant) {
        ids.push_back(orchestrator.submit(quick_task_doc(10 + variant)));
    }
    orchestrator.run_pending();
    for (const auto& id : ids) {
        CHECK(orchestrator.status(id).state == TaskState::Done);
        const WaveformSet waves = WaveformSet::from_text(orchestrator.fetch_results(id));
        CHECK(waves.steps() == 100);
    }
}

TEST_CASE("dangling reference fails at build with diagnostics in the record") {
    Orchestrator::Config config;
    config.data_dir = oracles::temp_dir("grid_dangle");
    config.slots = {{"s0", "cpu-serial", 1, 0}};
    Orchestrator orchestrator(std::move(config));

    std::string doc = quick_task_doc(3);
    doc.replace(doc.find("[\"1\", \"0\"]"), 10, "[\"9\", \"0\"]");
    const std::string id = orchestrator.submit(doc);
    orchestrator.run_pending();
    const TaskRecord record = orchestrator.status(id);
    CHECK(record.state == TaskState::Failed);
    CHECK(record.failure.find("DanglingReference") != std::string::npos);
}

TEST_CASE("grid isolation: one seeded singular task fails, nineteen succeed") {
    Orchestrator::Config config;
    config.data_dir = oracles::temp_dir("grid_isolation");
    config.slots = {{"s0", "cpu-serial", 1, 0},
                    {"s1", "cpu-serial", 1, 0},
                    {"s2", "cpu-serial", 1, 0},
                    {"s3", "cpu-serial", 1, 0}};
#ifdef EMTGRID_CLI
    config.cli_path = EMTGRID_CLI;  // workers run as separate processes
#endif
    Orchestrator orchestrator(std::move(config));

    std::vector<std::string> ids;
    for (int variant = 0; variant < 19; ++variant) {
        ids.push_back(orchestrator.submit(quick_task_doc(100 + variant)));
    }
    const std::string poison = orchestrator.submit(singular_task_doc());

    // Status queries stay served while the grid runs.
    std::atomic<bool> polling{true};
    std::atomic<int> polls{0};
    std::thread poller([&] {
        std::map<std::string, int> last;
        while (polling.load()) {
            for (const auto& id : ids) {
                const TaskRecord record = orchestrator.status(id);
                const int rank = state_rank(record.state);
                auto it = last.find(id);
                if (it != last.end()) CHECK(rank >= it->second);  // monotone records
                last[id] = rank;
                ++polls;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
        }
    });

    orchestrator.run_pending();
    polling.store(false);
    poller.join();
    CHECK(polls.load() > 0);

    int done = 0, failed = 0;
    for (const auto& id : ids) {
        if (orchestrator.status(id).state == TaskState::Done) ++done;
    }
    const TaskRecord poison_record = orchestrator.status(poison);
    if (poison_record.state == TaskState::Failed) ++failed;
    CHECK(done == 19);
    CHECK(failed == 1);
    CHECK(!poison_record.failure.empty());
}

TEST_CASE("restart mid-run loses no completed result and re-queues the rest") {
    const std::string data_dir = oracles::temp_dir("grid_restart");
    std::vector<std::string> ids;
    std::string first_result;
    {
        Orchestrator::Config config;
        config.data_dir = data_dir;
        config.slots = {{"s0", "cpu-serial", 1, 0}};
        Orchestrator orchestrator(std::move(config));
        for (int variant = 0; variant < 6; ++variant) {
            ids.push_back(orchestrator.submit(quick_task_doc(200 + variant)));
        }
        orchestrator.start();
        // Wait for at least one completion, then tear down mid-run.
        for (int spin = 0; spin < 10000; ++spin) {
            if (orchestrator.status(ids[0]).state == TaskState::Done) break;
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
        }
        REQUIRE(orchestrator.status(ids[0]).state == TaskState::Done);
        first_result = orchestrator.fetch_results(ids[0]);
        orchestrator.stop();
    }
    {
        Orchestrator::Config config;
        config.data_dir = data_dir;
        config.slots = {{"s0", "cpu-serial", 1, 0}};
        Orchestrator orchestrator(std::move(config));
        CHECK(orchestrator.fetch_results(ids[0]) == first_result);  // journal replay
        orchestrator.run_pending();
        for (const auto& id : ids) {
            CHECK(orchestrator.status(id).state == TaskState::Done);
        }
    }
}

TEST_CASE("HTTP endpoints: submit, status, result, slots") {
    Orchestrator::Config config;
    config.data_dir = oracles::temp_dir("grid_http");
    config.slots = {{"s0", "cpu-serial", 1, 0}};
    Orchestrator orchestrator(std::move(config));
    orchestrator.start();
    GridService service(orchestrator, 0);
    httplib::Client client("127.0.0.1", service.port());

    const std::string doc = quick_task_doc(300);
    const auto posted = client.Post("/tasks", doc, "application/json");
    REQUIRE(posted);
    REQUIRE(posted->status == 200);
    const std::string id = task_id_for(doc);
    CHECK(posted->body.find(id) != std::string::npos);

    orchestrator.wait_idle();
    const auto status = client.Get(("/tasks/" + id).c_str());
    REQUIRE(status);
    CHECK(status->status == 200);
    CHECK(status->body.find("\"state\":\"done\"") != std::string::npos);

    const auto result = client.Get(("/tasks/" + id + "/result").c_str());
    REQUIRE(result);
    CHECK(result->status == 200);
    CHECK(result->body == orchestrator.fetch_results(id));

    const auto slots = client.Get("/slots");
    REQUIRE(slots);
    CHECK(slots->body.find("cpu-serial") != std::string::npos);

    const auto missing = client.Get("/tasks/deadbeef");
    REQUIRE(missing);
    CHECK(missing->status == 404);

    service.stop();
    orchestrator.stop();
}
