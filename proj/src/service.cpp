#include "emtgrid/service.hpp"

#include <thread>

#include <httplib.h>
#include <json.hpp>

namespace emtgrid {

using nlohmann::json;

namespace {

json record_json(const TaskRecord& record) {
    json out;
    out["id"] = record.id;
    out["state"] = std::string(to_string(record.state));
    out["slot"] = record.slot;
    out["note"] = record.note;
    out["failure"] = record.failure;
    out["build_seconds"] = record.build_seconds;
    out["run_seconds"] = record.run_seconds;
    out["submitted_ms"] = record.submitted_ms;
    return out;
}

}  // namespace

struct GridService::Impl {
    httplib::Server server;
    std::thread thread;
};

GridService::GridService(Orchestrator& orchestrator, int port) : impl_(new Impl) {
    auto& server = impl_->server;

    server.Post("/tasks", [&orchestrator](const httplib::Request& req, httplib::Response& res) {
        try {
            const std::string id = orchestrator.submit(req.body);
            json out;
            out["id"] = id;
            res.set_content(out.dump(), "application/json");
        } catch (const std::exception& e) {
            res.status = 400;
            res.set_content(e.what(), "text/plain");
        }
    });
    server.Get("/slots", [&orchestrator](const httplib::Request&, httplib::Response& res) {
        json out = json::array();
        for (const auto& slot : orchestrator.slots()) {
            json js;
            js["id"] = slot.id;
            js["profile"] = slot.profile;
            js["capacity"] = slot.capacity;
            js["busy"] = slot.busy;
            out.push_back(js);
        }
        res.set_content(out.dump(), "application/json");
    });
    server.Get(R"(/tasks/([0-9a-f]+)/result)",
               [&orchestrator](const httplib::Request& req, httplib::Response& res) {
                   try {
                       res.set_content(orchestrator.fetch_results(req.matches[1]), "text/plain");
                   } catch (const Error& e) {
                       res.status = e.code() == ErrorCode::UnknownTask ? 404 : 409;
                       res.set_content(e.what(), "text/plain");
                   }
               });
    server.Get(R"(/tasks/([0-9a-f]+))",
               [&orchestrator](const httplib::Request& req, httplib::Response& res) {
                   try {
                       res.set_content(record_json(orchestrator.status(req.matches[1])).dump(),
                                       "application/json");
                   } catch (const Error& e) {
                       res.status = 404;
                       res.set_content(e.what(), "text/plain");
                   }
               });

    if (port == 0) {
        port_ = server.bind_to_any_port("127.0.0.1");
    } else {
        if (!server.bind_to_port("127.0.0.1", port)) {
            fail(ErrorCode::IoError, "port " + std::to_string(port), "cannot bind service port");
        }
        port_ = port;
    }
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

GridService::~GridService() { stop(); }

void GridService::stop() {
    if (impl_ && impl_->server.is_running()) {
        impl_->server.stop();
    }
    if (impl_ && impl_->thread.joinable()) {
        impl_->thread.join();
    }
}

}  // namespace emtgrid
