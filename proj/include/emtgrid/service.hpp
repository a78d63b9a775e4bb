#pragma once

#include <memory>
#include <string>

#include "emtgrid/grid.hpp"

namespace emtgrid {

/// HTTP facade over an orchestrator:
///   POST /tasks            body: model document  -> {"id": ...}
///   GET  /tasks/<id>       -> task record JSON
///   GET  /tasks/<id>/result-> waveform file text
///   GET  /slots            -> slot inventory JSON
class GridService {
public:
    /// Binds 127.0.0.1; port 0 picks a free port. The orchestrator must
    /// outlive the service.
    GridService(Orchestrator& orchestrator, int port);
    ~GridService();

    [[nodiscard]] int port() const { return port_; }
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    int port_ = 0;
};

}  // namespace emtgrid
