#include "emtgrid/grid.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "emtgrid/codegen.hpp"
#include "emtgrid/sha256.hpp"
#include "emtgrid/waveform.hpp"

namespace emtgrid {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(TaskState state) {
    switch (state) {
        case TaskState::Queued: return "queued";
        case TaskState::Building: return "building";
        case TaskState::Running: return "running";
        case TaskState::Done: return "done";
        case TaskState::Failed: return "failed";
    }
    return "queued";
}

namespace {

TaskState task_state_from(const std::string& name) {
    if (name == "queued") return TaskState::Queued;
    if (name == "building") return TaskState::Building;
    if (name == "running") return TaskState::Running;
    if (name == "done") return TaskState::Done;
    if (name == "failed") return TaskState::Failed;
    fail(ErrorCode::MalformedDocument, name, "unknown task state in journal");
}

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::system_clock::now().time_since_epoch())
        .count();
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

}  // namespace

std::string task_id_for(const std::string& document) { return sha256_hex(document); }

double CostModel::estimate(double wall_hours, int devices) const {
    return estimate_cost(price_per_week, wall_hours, devices);
}

double estimate_cost(double price_per_week, double wall_hours, int devices) {
    if (!(price_per_week > 0.0) || !(wall_hours > 0.0) || devices < 1) {
        fail(ErrorCode::NonPositiveInput, "",
             "price, wall-clock hours and device count must be positive");
    }
    const double cost = devices * (price_per_week / 168.0) * wall_hours;
    return std::round(cost * 1000.0) / 1000.0;
}

VsePackage assemble_vse(const std::string& document, const std::string& dir) {
    const NetworkModel model = parse_model(document);
    const ValidationReport report = validate(model);
    if (!report.runnable()) {
        std::string reasons;
        for (const auto& issue : report.issues) {
            if (issue.severity == ValidationIssue::Severity::Error) {
                reasons += issue.code + "(" + issue.where + ") ";
            }
        }
        fail(ErrorCode::CompilationFailed, "validate", reasons);
    }

    DeviceProfile profile;
    profile.name = model.task.device_profile;
    profile.affinity = model.task.strategy;
    profile.capacity = 1 << 30;
    const CompiledTask compiled = compile_task(model, profile);

    fs::create_directories(dir);
    const std::string schedule_text = compiled.schedule.serialize();
    const std::string state_text =
        serialize_state(compiled.initial, compiled.schedule.arena_extent, compiled.schedule.width);
    const std::string source_text = emit_source(compiled.schedule, "cpp");
    write_file(dir + "/schedule.cgmsched", schedule_text);
    write_file(dir + "/state.txt", state_text);
    write_file(dir + "/program.cpp", source_text);
    write_file(dir + "/model.json", document);

    json manifest;
    manifest["format"] = "vse/1";
    manifest["task"] = task_id_for(document);
    manifest["profile"] = model.task.device_profile;
    manifest["strategy"] = std::string(to_string(model.task.strategy));
    manifest["steps"] = model.task.steps();
    manifest["files"]["schedule.cgmsched"] = sha256_hex(schedule_text);
    manifest["files"]["state.txt"] = sha256_hex(state_text);
    manifest["files"]["program.cpp"] = sha256_hex(source_text);
    manifest["files"]["model.json"] = sha256_hex(document);
    write_file(dir + "/manifest.json", manifest.dump(2) + "\n");

    return {task_id_for(document), dir};
}

void run_vse(const std::string& package_dir, const std::string& out_path, int workers) {
    const json manifest = json::parse(read_file(package_dir + "/manifest.json"));
    for (const auto& item : manifest.at("files").items()) {
        const std::string content = read_file(package_dir + "/" + item.key());
        if (sha256_hex(content) != item.value().get<std::string>()) {
            fail(ErrorCode::MalformedDocument, item.key(), "package checksum mismatch");
        }
    }
    const ScheduleProgram schedule =
        ScheduleProgram::parse(read_file(package_dir + "/schedule.cgmsched"));
    int width = 1;
    const Eigen::VectorXd initial = parse_state(read_file(package_dir + "/state.txt"), &width);
    if (width != schedule.width) {
        fail(ErrorCode::DimensionMismatch, "state.txt", "state width does not match schedule");
    }
    const Strategy strategy =
        strategy_from(manifest.at("strategy").get<std::string>(), "manifest");
    const int steps = manifest.at("steps").get<int>();

    WaveformSet waves;
    if (strategy == Strategy::LayerParallel) {
        const int w = workers > 0 ? workers : 2;
        waves = execute_parallel(schedule, initial, w, steps);
    } else {
        waves = interpret(schedule, initial, steps);
    }
    waves.save(out_path);
}

std::vector<std::pair<std::string, std::string>> dispatch(const std::vector<QueuedTask>& queue,
                                                          std::vector<WorkerSlot>& slots) {
    std::vector<std::pair<std::string, std::string>> assignments;
    for (const auto& task : queue) {
        for (auto& slot : slots) {
            if (slot.profile == task.profile && slot.busy < slot.capacity) {
                ++slot.busy;
                assignments.emplace_back(task.id, slot.id);
                break;
            }
        }
    }
    return assignments;
}

// --- orchestrator ------------------------------------------------------------

Orchestrator::Orchestrator(Config config) : config_(std::move(config)) {
    root_ = config_.data_dir;
    if (root_.empty()) {
        if (const char* env = std::getenv("EMTGRID_DATA_DIR"); env != nullptr && *env != '\0') {
            root_ = env;
        } else {
            fail(ErrorCode::IoError, "EMTGRID_DATA_DIR",
                 "no data directory configured for the orchestrator");
        }
    }
    fs::create_directories(root_ + "/blobs");
    fs::create_directories(root_ + "/packages");
    slots_ = config_.slots;
    replay();
}

Orchestrator::~Orchestrator() { stop(); }

void Orchestrator::journal(const std::string& line) {
    std::ofstream out(root_ + "/journal.log", std::ios::app);
    out << line << "\n";
    out.flush();
}

void Orchestrator::replay() {
    std::ifstream in(root_ + "/journal.log");
    if (!in) return;
    std::string line;
    std::vector<std::string> order;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error&) {
            continue;  // torn tail write from a crash
        }
        const std::string event = rec.value("event", "");
        if (event == "submit") {
            const std::string id = rec.at("task").get<std::string>();
            if (registry_.count(id) != 0U) continue;
            Entry entry;
            entry.task.id = id;
            try {
                entry.task.document =
                    read_file(root_ + "/blobs/" + rec.at("doc").get<std::string>());
            } catch (const Error&) {
                continue;  // blob lost; the submit record is unusable
            }
            entry.task.device_profile = rec.value("profile", "cpu-serial");
            entry.task.strategy = strategy_from(rec.value("strategy", "serial"), "journal");
            entry.task.submitted_ms = rec.value("ms", static_cast<std::int64_t>(0));
            entry.record.id = id;
            entry.record.state = TaskState::Queued;
            entry.record.submitted_ms = entry.task.submitted_ms;
            registry_[id] = std::move(entry);
            order.push_back(id);
        } else if (event == "state") {
            auto it = registry_.find(rec.at("task").get<std::string>());
            if (it == registry_.end()) continue;
            it->second.record.state = task_state_from(rec.at("state").get<std::string>());
            it->second.record.slot = rec.value("slot", "");
            it->second.record.failure = rec.value("reason", "");
            it->second.record.build_seconds = rec.value("build_s", 0.0);
            it->second.record.run_seconds = rec.value("run_s", 0.0);
            it->second.result_blob = rec.value("result", "");
        }
    }
    // Tasks caught mid-flight by a crash or restart go back to the queue.
    for (const auto& id : order) {
        Entry& entry = registry_[id];
        if (entry.record.state == TaskState::Building || entry.record.state == TaskState::Running) {
            entry.record.state = TaskState::Queued;
            entry.record.slot.clear();
        }
        if (entry.record.state == TaskState::Queued) queue_.push_back(id);
    }
}

std::string Orchestrator::submit(const std::string& document) {
    const std::string id = task_id_for(document);
    {
        const std::unique_lock lock(registry_mutex_);
        if (registry_.count(id) != 0U) return id;  // idempotent
        const std::string blob = sha256_hex(document);
        write_file(root_ + "/blobs/" + blob, document);

        Entry entry;
        entry.task.id = id;
        entry.task.document = document;
        entry.task.submitted_ms = now_ms();
        entry.record.id = id;
        entry.record.state = TaskState::Queued;
        entry.record.submitted_ms = entry.task.submitted_ms;
        try {
            const NetworkModel model = parse_model(document);
            entry.task.device_profile = model.task.device_profile;
            entry.task.strategy = model.task.strategy;
        } catch (const Error& e) {
            entry.task.device_profile = "cpu-serial";
            entry.record.note = std::string("parse deferred: ") + e.what();
        }

        json rec;
        rec["event"] = "submit";
        rec["task"] = id;
        rec["doc"] = blob;
        rec["profile"] = entry.task.device_profile;
        rec["strategy"] = std::string(to_string(entry.task.strategy));
        rec["ms"] = entry.task.submitted_ms;
        journal(rec.dump());

        registry_[id] = std::move(entry);
        queue_.push_back(id);
    }
    {
        // Pairs the queue push with any worker's check-then-wait window.
        const std::lock_guard<std::mutex> work(work_mutex_);
    }
    work_cv_.notify_all();
    return id;
}

TaskRecord Orchestrator::status(const std::string& id) const {
    const std::shared_lock lock(registry_mutex_);
    auto it = registry_.find(id);
    if (it == registry_.end()) {
        fail(ErrorCode::UnknownTask, id, "no task with this id");
    }
    TaskRecord record = it->second.record;
    if (record.state == TaskState::Queued && record.note.empty()) {
        bool matched = false;
        for (const auto& slot : slots_) {
            if (slot.profile == it->second.task.device_profile) matched = true;
        }
        if (!matched) {
            record.note = "waiting: no worker slot offers profile '" +
                          it->second.task.device_profile + "'";
        }
    }
    return record;
}

std::string Orchestrator::fetch_results(const std::string& id) const {
    const std::shared_lock lock(registry_mutex_);
    auto it = registry_.find(id);
    if (it == registry_.end()) {
        fail(ErrorCode::UnknownTask, id, "no task with this id");
    }
    if (it->second.record.state != TaskState::Done) {
        fail(ErrorCode::NotFinished, id,
             "task is " + std::string(to_string(it->second.record.state)));
    }
    return read_file(root_ + "/blobs/" + it->second.result_blob);
}

std::vector<WorkerSlot> Orchestrator::slots() const {
    const std::shared_lock lock(registry_mutex_);
    return slots_;
}

std::vector<std::string> Orchestrator::queued() const {
    const std::shared_lock lock(registry_mutex_);
    return {queue_.begin(), queue_.end()};
}

void Orchestrator::set_state(Entry& entry, TaskState state, const std::string& slot,
                             const std::string& detail, const std::string& result_blob,
                             double build_s, double run_s) {
    entry.record.state = state;
    entry.record.slot = slot;
    entry.record.build_seconds = build_s;
    entry.record.run_seconds = run_s;
    if (state == TaskState::Failed) entry.record.failure = detail;
    entry.result_blob = result_blob;

    json rec;
    rec["event"] = "state";
    rec["task"] = entry.task.id;
    rec["state"] = std::string(to_string(state));
    if (!slot.empty()) rec["slot"] = slot;
    if (state == TaskState::Failed) rec["reason"] = detail;
    if (!result_blob.empty()) rec["result"] = result_blob;
    if (build_s > 0.0) rec["build_s"] = build_s;
    if (run_s > 0.0) rec["run_s"] = run_s;
    journal(rec.dump());
}

bool Orchestrator::execute_one(const std::string& id, const std::string& slot_id) {
    std::string document;
    {
        const std::unique_lock lock(registry_mutex_);
        auto it = registry_.find(id);
        if (it == registry_.end()) return false;
        document = it->second.task.document;
        set_state(it->second, TaskState::Building, slot_id, "", "", 0.0, 0.0);
    }

    const std::string package_dir = root_ + "/packages/" + id;
    const auto build_start = std::chrono::steady_clock::now();
    try {
        assemble_vse(document, package_dir);
    } catch (const std::exception& e) {
        const std::unique_lock lock(registry_mutex_);
        set_state(registry_.at(id), TaskState::Failed, slot_id, e.what(), "",
                  seconds_since(build_start), 0.0);
        return true;
    }
    const double build_s = seconds_since(build_start);

    {
        const std::unique_lock lock(registry_mutex_);
        set_state(registry_.at(id), TaskState::Running, slot_id, "", "", build_s, 0.0);
    }

    const std::string result_path = package_dir + "/result.tmp";
    const auto run_start = std::chrono::steady_clock::now();
    std::string failure;
    if (config_.cli_path.empty()) {
        try {
            run_vse(package_dir, result_path);
        } catch (const std::exception& e) {
            failure = e.what();
        }
    } else {
        const std::string log_path = package_dir + "/run.log";
        const std::string cmd = "\"" + config_.cli_path + "\" vse exec \"" + package_dir +
                                "\" --out \"" + result_path + "\" > \"" + log_path + "\" 2>&1";
        const int rc = std::system(cmd.c_str());
        if (rc != 0) {
            failure = "worker exited with status " + std::to_string(rc);
            try {
                const std::string log = read_file(log_path);
                if (!log.empty()) failure += ": " + log.substr(0, 512);
            } catch (const Error&) {
            }
        }
    }
    const double run_s = seconds_since(run_start);

    const std::unique_lock lock(registry_mutex_);
    if (!failure.empty()) {
        set_state(registry_.at(id), TaskState::Failed, slot_id, failure, "", build_s, run_s);
        return true;
    }
    const std::string result = read_file(result_path);
    const std::string blob = sha256_hex(result);
    write_file(root_ + "/blobs/" + blob, result);
    set_state(registry_.at(id), TaskState::Done, slot_id, "", blob, build_s, run_s);
    return true;
}

void Orchestrator::worker_loop(std::size_t slot_index) {
    const std::string slot_id = slots_[slot_index].id;
    const std::string profile = slots_[slot_index].profile;
    for (;;) {
        std::string claimed;
        {
            std::unique_lock work(work_mutex_);
            for (;;) {
                if (stopping_) return;
                {
                    const std::unique_lock lock(registry_mutex_);
                    for (auto it = queue_.begin(); it != queue_.end(); ++it) {
                        if (registry_.at(*it).task.device_profile == profile) {
                            claimed = *it;
                            queue_.erase(it);
                            break;
                        }
                    }
                }
                if (!claimed.empty()) {
                    ++in_flight_;
                    {
                        const std::unique_lock lock(registry_mutex_);
                        ++slots_[slot_index].busy;
                    }
                    break;
                }
                work_cv_.wait(work);
            }
        }
        execute_one(claimed, slot_id);
        {
            const std::unique_lock work(work_mutex_);
            --in_flight_;
            {
                const std::unique_lock lock(registry_mutex_);
                --slots_[slot_index].busy;
            }
        }
        idle_cv_.notify_all();
        work_cv_.notify_all();
    }
}

void Orchestrator::start() {
    const std::unique_lock work(work_mutex_);
    if (!workers_.empty()) return;
    stopping_ = false;
    for (std::size_t s = 0; s < slots_.size(); ++s) {
        for (int unit = 0; unit < slots_[s].capacity; ++unit) {
            workers_.emplace_back(&Orchestrator::worker_loop, this, s);
        }
    }
}

void Orchestrator::wait_idle() {
    std::unique_lock work(work_mutex_);
    idle_cv_.wait(work, [this] {
        if (in_flight_ > 0) return false;
        const std::shared_lock lock(registry_mutex_);
        for (const auto& id : queue_) {
            const std::string& profile = registry_.at(id).task.device_profile;
            for (const auto& slot : slots_) {
                if (slot.profile == profile) return false;
            }
        }
        return true;
    });
}

void Orchestrator::stop() {
    {
        const std::unique_lock work(work_mutex_);
        stopping_ = true;
    }
    work_cv_.notify_all();
    for (auto& worker : workers_) worker.join();
    workers_.clear();
}

void Orchestrator::run_pending() {
    start();
    wait_idle();
    stop();
}

}  // namespace emtgrid
