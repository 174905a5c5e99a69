#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Sparse>

#include "elasto/core.hpp"

namespace elasto::refine {

// ---------------------------------------------------------------------------
// Interpolation and warping

struct CubicSample {
  double value = 0.0;
  double d_row = 0.0;  // derivative along the axial direction
  double d_col = 0.0;  // derivative along the lateral direction
  bool inside = false;
};

/// Separable Catmull-Rom (Keys, a = -0.5) interpolation. Exact at integer
/// positions. Positions outside [0, rows-1] x [0, cols-1] are evaluated at
/// the clamped location and reported with inside = false.
CubicSample sample_cubic(const Array2D& image, double row, double col);

struct WarpedFrame {
  Array2D image;
  std::vector<std::uint8_t> mask;  // 1 where the warp stayed inside the frame

  std::size_t overlap() const;
};

/// image'(x) = image(x + d(x)).
WarpedFrame warp(const Array2D& image, const DisplacementField& d);

/// Normalised cross correlation over the samples where mask != 0 (all
/// samples when mask is empty). Throws DegenerateInput for an empty overlap
/// or a constant input.
double ncc(const Array2D& first, const Array2D& second, const std::vector<std::uint8_t>& mask = {});
double ncc(const Array2D& first, const WarpedFrame& warped);

// ---------------------------------------------------------------------------
// Strain and quality metrics

/// Least-squares slope of d.axial over rows [i-h, i+h] (truncated at the
/// borders), per column. window_len must be odd, >= 3 and <= rows.
StrainImage strain(const DisplacementField& d, int window_len);
StrainImage strain(const Array2D& axial, int window_len);

struct QualityMetrics {
  double snr = 0.0;
  double cnr = 0.0;
  bool snr_saturated = false;  // background variance was zero
  bool cnr_saturated = false;  // pooled variance was zero
};

/// SNR = mean_b / sigma_b, CNR = sqrt(2 (mean_b - mean_t)^2 / (sigma_b^2 + sigma_t^2)),
/// with population variances over each window.
QualityMetrics snr_cnr(const StrainImage& s, const Window& target, const Window& background);
QualityMetrics snr_cnr(const Array2D& s, const Window& target, const Window& background);

// ---------------------------------------------------------------------------
// Global regularised refinement

struct RefineConfig {
  double alpha1 = 5.0;  // axial derivative of axial displacement
  double alpha2 = 1.0;  // lateral derivative of axial displacement
  double beta1 = 5.0;   // axial derivative of lateral displacement
  double beta2 = 1.0;   // lateral derivative of lateral displacement
  int max_iters = 10;
  double step_tolerance = 0.01;  // mean |change| in axial samples

  void validate() const;
};

/// Quadratic model Q(u) = u^T H u - 2 rhs^T u + constant of the linearised
/// cost around a displacement estimate. Unknowns are interleaved per sample:
/// u[2p] = axial, u[2p+1] = lateral, p = row * cols + col.
struct LinearizedSystem {
  Eigen::SparseMatrix<double> hessian;
  Eigen::VectorXd rhs;
  double constant = 0.0;

  double cost(const Eigen::VectorXd& u) const;
};

LinearizedSystem linearize(const Array2D& first, const Array2D& second, const Array2D& axial,
                           const Array2D& lateral, const RefineConfig& cfg);

/// Non-linear objective: sum over in-frame samples of (first(x) - second(x + u(x)))^2
/// plus the four weighted first-difference penalties.
double energy(const Array2D& first, const Array2D& second, const Array2D& axial, const Array2D& lateral,
              const RefineConfig& cfg);

struct RefineResult {
  DisplacementField field;
  int iterations = 0;
  bool converged = false;
  std::vector<double> energy_history;  // objective at the start and after each accepted step
};

/// Gauss-Newton refinement of `initial`. Frames are normalised to zero mean
/// and unit RMS first. Each outer iteration solves one sparse linear system;
/// steps that would increase the objective are halved until they do not.
RefineResult refine(const RfFrame& first, const RfFrame& second, const DisplacementField& initial,
                    const RefineConfig& cfg = {});

}  // namespace elasto::refine
