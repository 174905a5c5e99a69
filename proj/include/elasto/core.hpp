#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace elasto {

// Error hierarchy shared by every module. Callers that only care about
// "something went wrong" catch elasto::Error.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
  using Error::Error;
};

class FormatError : public Error {
public:
  using Error::Error;
};

class InvalidArgument : public Error {
public:
  using Error::Error;
};

/// Raised when a metric is undefined for its input (constant signals,
/// empty overlap, degenerate classes).
class DegenerateInput : public Error {
public:
  using Error::Error;
};

/// Dense row-major 2-D array of doubles. Row index is the axial sample,
/// column index is the RF line.
class Array2D {
public:
  Array2D() = default;
  Array2D(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Array2D(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const std::vector<double>& vector() const noexcept { return data_; }

  std::vector<double> column(std::size_t c) const;
  bool same_shape(const Array2D& other) const noexcept {
    return rows_ == other.rows_ && cols_ == other.cols_;
  }
  bool all_finite() const noexcept;

  friend bool operator==(const Array2D&, const Array2D&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// A single RF echo frame (m axial samples x l lines).
struct RfFrame {
  static constexpr std::size_t kMinRows = 64;
  static constexpr std::size_t kMinLines = 8;

  Array2D samples;
  double axial_spacing = 1.0;
  double lateral_spacing = 1.0;
  std::string frame_id;

  std::size_t rows() const noexcept { return samples.rows(); }
  std::size_t lines() const noexcept { return samples.cols(); }

  /// Throws DimensionError / InvalidArgument when the frame is too small or
  /// holds non-finite samples.
  void validate() const;
};

enum class Provenance { oracle, dp_sparse, pca_coarse, refined };

std::string to_string(Provenance p);

/// Bit flags attached to estimated fields.
enum FieldFlags : std::uint32_t {
  kFieldOk = 0,
  kLateralFallback = 1u << 0,  // fewer than two lateral anchor lines
  kNotConverged = 1u << 1,     // refinement hit max_iters
};

/// Axial displacement in samples, optional lateral displacement in lines.
struct DisplacementField {
  Array2D axial;
  std::optional<Array2D> lateral;
  Provenance provenance = Provenance::oracle;
  std::uint32_t flags = kFieldOk;

  std::size_t rows() const noexcept { return axial.rows(); }
  std::size_t cols() const noexcept { return axial.cols(); }
  Array2D lateral_or_zero() const;
};

struct WeightVector {
  std::vector<double> w;
  double residual_norm = 0.0;

  std::size_t size() const noexcept { return w.size(); }
};

struct StrainImage {
  Array2D strain;
  int window_len = 0;
};

constexpr double kSuitableNccThreshold = 0.9;

struct FramePairLabel {
  double ncc = 0.0;
  bool suitable = false;

  static FramePairLabel from_ncc(double ncc, double threshold = kSuitableNccThreshold) {
    return {ncc, ncc > threshold};
  }
};

/// Rectangular region of an image, in samples.
struct Window {
  std::size_t row = 0;
  std::size_t col = 0;
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Zero-mean, unit-RMS copy of the input. Constant input yields zeros.
std::vector<double> normalize_unit_rms(std::span<const double> x);
Array2D normalize_unit_rms(const Array2D& a);

double rms(std::span<const double> x);

}  // namespace elasto
