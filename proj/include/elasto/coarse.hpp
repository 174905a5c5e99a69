#pragma once

#include <vector>

#include <Eigen/Dense>

#include "elasto/core.hpp"
#include "elasto/modes.hpp"
#include "elasto/tde.hpp"

namespace elasto::coarse {

/// Overdetermined system A w ~ c gathered at the sparse coordinates.
struct SparseSystem {
  Eigen::MatrixXd a;  // K x N, row t = (b_1(q_t), ..., b_N(q_t))
  Eigen::VectorXd c;  // K, DP values minus the mean field at q_t
  std::vector<tde::SampleCoord> coords;
};

SparseSystem build_system(const modes::ModeBasis& basis, const std::vector<tde::SampleCoord>& coords,
                          const std::vector<double>& values);

/// Tikhonov floor applied to the normal equations: 1e-8 * trace(A^T A) / N.
double tikhonov_floor(const Eigen::MatrixXd& a);

/// Least-squares weights from the floored normal equations, followed by
/// iterative refinement against the unregularised normal equations.
WeightVector solve_weights(const SparseSystem& sys);

struct CoarseResult {
  DisplacementField field;  // axial always, lateral when requested
  WeightVector weights;
  tde::SparseTde sparse;
};

/// Sparse DP -> A -> w -> mean + sum w_n b_n (axial only).
CoarseResult coarse_axial(const modes::ModeBasis& basis, const RfFrame& first, const RfFrame& second,
                          const tde::DpConfig& cfg);

/// Interpolates the per-line lateral DP estimates across lines: linear between
/// neighbouring anchor lines, constant outside them. With fewer than two
/// anchor lines the single line is replicated and kLateralFallback is set.
DisplacementField coarse_lateral(const tde::SparseTde& sparse);

/// coarse_axial plus the interpolated lateral field.
CoarseResult coarse_estimate(const modes::ModeBasis& basis, const RfFrame& first, const RfFrame& second,
                             const tde::DpConfig& cfg);

}  // namespace elasto::coarse
