#pragma once

#include <condition_variable>
#include <deque>
#include <map>
#include <mutex>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

#include "emtgrid/pipeline.hpp"

namespace emtgrid {

enum class TaskState { Queued, Building, Running, Done, Failed };

std::string_view to_string(TaskState state);

struct SimulationTask {
    std::string id;  // sha256 of the model document
    std::string document;
    std::string device_profile;
    Strategy strategy = Strategy::Serial;
    std::int64_t submitted_ms = 0;
};

struct TaskRecord {
    std::string id;
    TaskState state = TaskState::Queued;
    std::string slot;
    std::string note;     // e.g. waiting reason for unmatched profiles
    std::string failure;  // reason when state == Failed
    double build_seconds = 0.0;
    double run_seconds = 0.0;
    std::int64_t submitted_ms = 0;
};

struct WorkerSlot {
    std::string id;
    std::string profile;
    int capacity = 1;
    int busy = 0;
};

/// Content-hash id for a model document.
std::string task_id_for(const std::string& document);

/// Weekly rental pricing of one device class.
struct CostModel {
    std::string device;
    double price_per_week = 0.0;
    static constexpr double kHoursPerWeek = 168.0;

    [[nodiscard]] double estimate(double wall_hours, int devices = 1) const;
};

/// cost = devices * (price_per_week / 168) * wall_hours, rounded to 3 decimals.
double estimate_cost(double price_per_week, double wall_hours, int devices = 1);

/// Self-sufficient virtual simulation engine package: schedule, initial
/// state, emitted source, model document and a checksum manifest. Assembly
/// is deterministic; the same task yields byte-identical packages.
struct VsePackage {
    std::string task_id;
    std::string dir;
};

VsePackage assemble_vse(const std::string& document, const std::string& dir);

/// Verifies manifest checksums and runs a package, writing the waveform
/// file. Used by the `vse exec` CLI verb inside worker processes.
void run_vse(const std::string& package_dir, const std::string& out_path, int workers = 0);

/// FIFO dispatch within matching device profiles; mutates slot busy counts
/// and returns (task id, slot id) assignments. Unmatched tasks wait.
struct QueuedTask {
    std::string id;
    std::string profile;
};
std::vector<std::pair<std::string, std::string>> dispatch(const std::vector<QueuedTask>& queue,
                                                          std::vector<WorkerSlot>& slots);

/// Single-node orchestration grid: a journaled task registry, worker slots
/// executing VSE packages (in a separate process when `cli_path` is set),
/// and content-addressed result storage under `data_dir`.
class Orchestrator {
public:
    struct Config {
        std::string data_dir;  // empty: EMTGRID_DATA_DIR environment variable
        std::vector<WorkerSlot> slots;
        std::string cli_path;  // worker executable; empty runs VSEs in-process
    };

    explicit Orchestrator(Config config);
    ~Orchestrator();

    Orchestrator(const Orchestrator&) = delete;
    Orchestrator& operator=(const Orchestrator&) = delete;

    /// Idempotent: the same document content maps to the same id without a
    /// duplicate queue entry.
    std::string submit(const std::string& document);

    [[nodiscard]] TaskRecord status(const std::string& id) const;
    [[nodiscard]] std::string fetch_results(const std::string& id) const;
    [[nodiscard]] std::vector<WorkerSlot> slots() const;
    [[nodiscard]] std::vector<std::string> queued() const;

    /// Launches slot workers that keep draining the queue.
    void start();
    /// Blocks until nothing is building/running and no queued task matches a
    /// slot profile.
    void wait_idle();
    void stop();
    /// start + wait_idle + stop.
    void run_pending();

private:
    struct Entry {
        SimulationTask task;
        TaskRecord record;
        std::string result_blob;
    };

    void journal(const std::string& line);
    void replay();
    void set_state(Entry& entry, TaskState state, const std::string& slot,
                   const std::string& detail, const std::string& result_blob, double build_s,
                   double run_s);
    void worker_loop(std::size_t slot_index);
    bool execute_one(const std::string& id, const std::string& slot_id);

    std::string root_;
    Config config_;
    mutable std::shared_mutex registry_mutex_;
    std::map<std::string, Entry> registry_;
    std::deque<std::string> queue_;
    std::vector<WorkerSlot> slots_;

    std::mutex work_mutex_;
    std::condition_variable work_cv_;
    std::condition_variable idle_cv_;
    int in_flight_ = 0;
    bool stopping_ = false;
    std::vector<std::thread> workers_;
};

}  // namespace emtgrid
