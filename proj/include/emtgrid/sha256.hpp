#pragma once

#include <string>
#include <string_view>

namespace emtgrid {

/// SHA-256 digest as lowercase hex; content-addressed task and blob ids.
std::string sha256_hex(std::string_view data);

}  // namespace emtgrid
