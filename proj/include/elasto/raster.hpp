#pragma once

#include <filesystem>
#include <string>

#include "elasto/core.hpp"

namespace elasto {

// ELAS1 raster: a text header `ELAS1 <rows> <cols>\n` followed by
// rows*cols little-endian IEEE-754 float32 values in row-major order.
// Values are narrowed to float on write; float-representable arrays
// round-trip bit-exactly.

std::string raster_header(std::size_t rows, std::size_t cols);

void write_raster(const std::filesystem::path& path, const Array2D& array);
Array2D read_raster(const std::filesystem::path& path);

/// Encode/decode to an in-memory byte string (used by the file functions).
std::string encode_raster(const Array2D& array);
Array2D decode_raster(const std::string& bytes);

}  // namespace elasto
