#include "elasto/raster.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace elasto {
namespace {

constexpr std::string_view kMagic = "ELAS1";

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    v = ((v & 0x000000FFu) << 24) | ((v & 0x0000FF00u) << 8) | ((v & 0x00FF0000u) >> 8) |
        ((v & 0xFF000000u) >> 24);
  }
  return v;
}

std::size_t parse_dim(std::string_view token, std::string_view what) {
  std::size_t value = 0;
  const auto* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(token.data(), end, value);
  if (ec != std::errc{} || ptr != end || token.empty() || value == 0) {
    throw FormatError("ELAS1: bad " + std::string(what) + " '" + std::string(token) + "'");
  }
  return value;
}

}  // namespace

std::string raster_header(std::size_t rows, std::size_t cols) {
  return std::string(kMagic) + " " + std::to_string(rows) + " " + std::to_string(cols) + "\n";
}

std::string encode_raster(const Array2D& array) {
  if (array.rows() < 1 || array.cols() < 1) throw DimensionError("ELAS1: empty array");
  if (!array.all_finite()) throw InvalidArgument("ELAS1: refusing to write non-finite values");

  std::string out = raster_header(array.rows(), array.cols());
  const std::size_t header_len = out.size();
  out.resize(header_len + array.size() * 4);
  char* dst = out.data() + header_len;
  for (double v : array.values()) {
    const std::uint32_t bits = to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    std::memcpy(dst, &bits, 4);
    dst += 4;
  }
  return out;
}

Array2D decode_raster(const std::string& bytes) {
  const auto newline = bytes.find('\n');
  if (newline == std::string::npos || newline > 64) throw FormatError("ELAS1: missing header line");
  const std::string_view header(bytes.data(), newline);

  const auto sp1 = header.find(' ');
  const auto sp2 = sp1 == std::string_view::npos ? sp1 : header.find(' ', sp1 + 1);
  if (sp1 == std::string_view::npos || sp2 == std::string_view::npos ||
      header.substr(0, sp1) != kMagic) {
    throw FormatError("ELAS1: malformed header '" + std::string(header) + "'");
  }
  const std::size_t rows = parse_dim(header.substr(sp1 + 1, sp2 - sp1 - 1), "row count");
  const std::size_t cols = parse_dim(header.substr(sp2 + 1), "column count");

  const std::size_t payload = bytes.size() - newline - 1;
  const std::size_t expected = rows * cols * 4;
  if (payload < expected) {
    throw FormatError("ELAS1: truncated payload (" + std::to_string(payload) + " of " +
                      std::to_string(expected) + " bytes)");
  }
  if (payload > expected) throw FormatError("ELAS1: trailing bytes after payload");

  std::vector<double> values(rows * cols);
  const char* src = bytes.data() + newline + 1;
  for (auto& v : values) {
    std::uint32_t bits;
    std::memcpy(&bits, src, 4);
    src += 4;
    const float f = std::bit_cast<float>(to_little_endian(bits));
    if (!std::isfinite(f)) throw FormatError("ELAS1: non-finite value in payload");
    v = f;
  }
  return Array2D(rows, cols, std::move(values));
}

void write_raster(const std::filesystem::path& path, const Array2D& array) {
  const std::string bytes = encode_raster(array);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

Array2D read_raster(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_raster(bytes);
}

}  // namespace elasto
