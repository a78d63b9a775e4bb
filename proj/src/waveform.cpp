#include "emtgrid/waveform.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace emtgrid {

WaveformSet WaveformSet::lane(int lane) const {
    WaveformSet out;
    out.channels = channels;
    out.width = 1;
    out.time = time;
    out.values.resize(values.rows(), static_cast<Eigen::Index>(channels.size()));
    for (std::size_t c = 0; c < channels.size(); ++c) {
        out.values.col(static_cast<Eigen::Index>(c)) =
            values.col(static_cast<Eigen::Index>(c) * width + lane);
    }
    return out;
}

std::string WaveformSet::to_text() const {
    std::string out = "time";
    for (const auto& name : channels) {
        if (width == 1) {
            out += " " + name;
        } else {
            for (int lane = 0; lane < width; ++lane) {
                out += " " + name + "#" + std::to_string(lane);
            }
        }
    }
    out += "\n";
    for (std::size_t row = 0; row < time.size(); ++row) {
        out += format_g17(time[row]);
        for (Eigen::Index col = 0; col < values.cols(); ++col) {
            out += " " + format_g17(values(static_cast<Eigen::Index>(row), col));
        }
        out += "\n";
    }
    return out;
}

WaveformSet WaveformSet::from_text(const std::string& text) {
    std::istringstream in(text);
    std::string header;
    if (!std::getline(in, header)) {
        fail(ErrorCode::MalformedDocument, "", "empty waveform file");
    }
    std::istringstream hs(header);
    std::string token;
    if (!(hs >> token) || token != "time") {
        fail(ErrorCode::MalformedDocument, "", "waveform header must start with 'time'");
    }
    WaveformSet out;
    std::vector<std::string> columns;
    while (hs >> token) columns.push_back(token);

    out.width = 1;
    for (const auto& col : columns) {
        const auto hash = col.rfind('#');
        std::string base = col;
        int lane = 0;
        if (hash != std::string::npos) {
            base = col.substr(0, hash);
            lane = std::atoi(col.c_str() + hash + 1);
        }
        if (out.channels.empty() || out.channels.back() != base) out.channels.push_back(base);
        out.width = std::max(out.width, lane + 1);
    }

    std::vector<double> flat;
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        double t = 0.0;
        ls >> t;
        out.time.push_back(t);
        double v = 0.0;
        std::size_t count = 0;
        while (ls >> v) {
            flat.push_back(v);
            ++count;
        }
        if (count != columns.size()) {
            fail(ErrorCode::MalformedDocument, "row " + std::to_string(rows),
                 "column count mismatch");
        }
        ++rows;
    }
    out.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < columns.size(); ++c) {
            out.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                flat[r * columns.size() + c];
        }
    }
    return out;
}

void WaveformSet::save(const std::string& path) const { write_file(path, to_text()); }

WaveformSet WaveformSet::load(const std::string& path) { return from_text(read_file(path)); }

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::IoError, path, "cannot open file for reading");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, path, "cannot open file for writing");
    out << content;
    if (!out.good()) fail(ErrorCode::IoError, path, "write failed");
}

}  // namespace emtgrid
