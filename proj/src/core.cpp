#include "elasto/core.hpp"

#include <algorithm>
#include <numeric>

namespace elasto {

Array2D::Array2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw DimensionError("Array2D: data size " + std::to_string(data_.size()) +
                         " does not match " + std::to_string(rows_) + "x" +
                         std::to_string(cols_));
  }
}

std::vector<double> Array2D::column(std::size_t c) const {
  std::vector<double> out(rows_);
  for (std::size_t r = 0; r < rows_; ++r) out[r] = (*this)(r, c);
  return out;
}

bool Array2D::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

void RfFrame::validate() const {
  if (rows() < kMinRows || lines() < kMinLines) {
    throw DimensionError("RfFrame: need at least " + std::to_string(kMinRows) + "x" +
                         std::to_string(kMinLines) + " samples, got " +
                         std::to_string(rows()) + "x" + std::to_string(lines()));
  }
  if (!samples.all_finite()) throw InvalidArgument("RfFrame: non-finite sample");
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::oracle: return "oracle";
    case Provenance::dp_sparse: return "dp-sparse";
    case Provenance::pca_coarse: return "pca-coarse";
    case Provenance::refined: return "refined";
  }
  return "unknown";
}

Array2D DisplacementField::lateral_or_zero() const {
  if (lateral) return *lateral;
  return Array2D(axial.rows(), axial.cols(), 0.0);
}

double rms(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double ss = 0.0;
  for (double v : x) ss += v * v;
  return std::sqrt(ss / static_cast<double>(x.size()));
}

std::vector<double> normalize_unit_rms(std::span<const double> x) {
  std::vector<double> out(x.begin(), x.end());
  if (out.empty()) return out;
  const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
  for (double& v : out) v -= mean;
  const double r = rms(out);
  if (r > 0.0) {
    for (double& v : out) v /= r;
  }
  return out;
}

Array2D normalize_unit_rms(const Array2D& a) {
  return Array2D(a.rows(), a.cols(), normalize_unit_rms(a.values()));
}

}  // namespace elasto
