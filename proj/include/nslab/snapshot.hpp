#pragma once

#include "nslab/grid.hpp"

#include <filesystem>

namespace nslab {

/// Writes `<base>.bin` (raw little-endian f64, row-major, components
/// concatenated) and `<base>.json` (domain and layout description).
void write_snapshot(const std::filesystem::path& base, const Field& f);

/// Reads a snapshot pair written by write_snapshot; bit-exact.
Field read_snapshot(const std::filesystem::path& base);

} // namespace nslab
