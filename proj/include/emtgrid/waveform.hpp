#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "emtgrid/common.hpp"

namespace emtgrid {

/// Time-indexed channel recordings. For a batch of width N every channel
/// carries N value columns stored channel-major (column = channel*width+lane);
/// file columns are suffixed "#<lane>" when width > 1. Values round-trip
/// exactly through the 17-significant-digit text form.
struct WaveformSet {
    std::vector<std::string> channels;  // names without lane suffix
    int width = 1;
    std::vector<double> time;           // one entry per recorded step
    Eigen::MatrixXd values;             // rows = steps, cols = channels*width

    [[nodiscard]] std::size_t steps() const { return time.size(); }
    [[nodiscard]] double at(std::size_t step, std::size_t channel, int lane = 0) const {
        return values(static_cast<Eigen::Index>(step),
                      static_cast<Eigen::Index>(channel) * width + lane);
    }

    /// Extracts one lane of a batched set as a width-1 set with unsuffixed
    /// channel names; its text form is byte-comparable to a plain run.
    [[nodiscard]] WaveformSet lane(int lane) const;

    [[nodiscard]] std::string to_text() const;
    static WaveformSet from_text(const std::string& text);

    void save(const std::string& path) const;
    static WaveformSet load(const std::string& path);
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace emtgrid
