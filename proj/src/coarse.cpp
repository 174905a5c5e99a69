#include "elasto/coarse.hpp"

#include <Eigen/Cholesky>

namespace elasto::coarse {

SparseSystem build_system(const modes::ModeBasis& basis, const std::vector<tde::SampleCoord>& coords,
                          const std::vector<double>& values) {
  if (coords.size() != values.size()) throw DimensionError("build_system: coords/values length mismatch");
  const auto k = static_cast<Eigen::Index>(coords.size());
  const auto n = static_cast<Eigen::Index>(basis.size());
  SparseSystem sys;
  sys.a.resize(k, n);
  sys.c.resize(k);
  sys.coords = coords;
  for (Eigen::Index t = 0; t < k; ++t) {
    const auto& q = coords[static_cast<std::size_t>(t)];
    if (q.row >= basis.rows || q.col >= basis.cols) {
      throw InvalidArgument("build_system: coordinate (" + std::to_string(q.row) + ", " + std::to_string(q.col) +
                            ") outside " + std::to_string(basis.rows) + "x" + std::to_string(basis.cols));
    }
    const auto flat = static_cast<Eigen::Index>(q.row * basis.cols + q.col);
    sys.a.row(t) = basis.modes.row(flat);
    sys.c(t) = values[static_cast<std::size_t>(t)] - basis.mean(flat);
  }
  return sys;
}

double tikhonov_floor(const Eigen::MatrixXd& a) {
  if (a.cols() == 0) return 0.0;
  return 1e-8 * a.squaredNorm() / static_cast<double>(a.cols());
}

WeightVector solve_weights(const SparseSystem& sys) {
  const auto& a = sys.a;
  if (a.rows() < a.cols()) {
    throw InvalidArgument("solve_weights: need K >= N (K = " + std::to_string(a.rows()) +
                          ", N = " + std::to_string(a.cols()) + ")");
  }
  const Eigen::MatrixXd normal = a.transpose() * a;
  const Eigen::VectorXd rhs = a.transpose() * sys.c;
  const double lambda = tikhonov_floor(a);

  WeightVector out;
  Eigen::VectorXd w = Eigen::VectorXd::Zero(a.cols());
  if (lambda > 0.0) {
    Eigen::MatrixXd floored = normal;
    floored.diagonal().array() += lambda;
    const Eigen::LLT<Eigen::MatrixXd> llt(floored);
    if (llt.info() != Eigen::Success) throw Error("solve_weights: factorisation failed");
    w = llt.solve(rhs);
    // Two refinement sweeps remove the O(lambda / sigma^2) bias in the
    // well-determined directions; null directions stay at zero.
    for (int sweep = 0; sweep < 2; ++sweep) w += llt.solve(rhs - normal * w);
  }
  out.w.assign(w.data(), w.data() + w.size());
  out.residual_norm = (a * w - sys.c).norm();
  return out;
}

CoarseResult coarse_axial(const modes::ModeBasis& basis, const RfFrame& first, const RfFrame& second,
                          const tde::DpConfig& cfg) {
  if (first.rows() != basis.rows || first.lines() != basis.cols) {
    throw DimensionError("coarse_axial: frame is " + std::to_string(first.rows()) + "x" +
                         std::to_string(first.lines()) + ", basis is " + std::to_string(basis.rows) + "x" +
                         std::to_string(basis.cols));
  }
  CoarseResult out;
  out.sparse = tde::sparse_tde(first, second, cfg);
  const SparseSystem sys = build_system(basis, out.sparse.coords, out.sparse.values);
  out.weights = solve_weights(sys);
  out.field.axial = modes::reconstruct_with_mean(basis, out.weights.w);
  out.field.provenance = Provenance::pca_coarse;
  return out;
}

DisplacementField coarse_lateral(const tde::SparseTde& sparse) {
  if (sparse.lines.empty()) throw InvalidArgument("coarse_lateral: no anchor lines");
  if (sparse.lateral.size() != sparse.lines.size()) throw DimensionError("coarse_lateral: missing lateral estimates");
  const std::size_t rows = sparse.rows;
  const std::size_t cols = sparse.cols;
  const auto& anchors = sparse.lines;

  DisplacementField field;
  field.axial = Array2D(rows, cols, 0.0);
  field.provenance = Provenance::dp_sparse;
  Array2D lateral(rows, cols);

  if (anchors.size() < 2) {
    field.flags |= kLateralFallback;
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) lateral(i, j) = sparse.lateral[0][i];
    }
  } else {
    std::size_t seg = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (j <= anchors.front()) {
        for (std::size_t i = 0; i < rows; ++i) lateral(i, j) = sparse.lateral.front()[i];
        continue;
      }
      if (j >= anchors.back()) {
        for (std::size_t i = 0; i < rows; ++i) lateral(i, j) = sparse.lateral.back()[i];
        continue;
      }
      while (anchors[seg + 1] < j) ++seg;
      const double t = static_cast<double>(j - anchors[seg]) / static_cast<double>(anchors[seg + 1] - anchors[seg]);
      const auto& lo = sparse.lateral[seg];
      const auto& hi = sparse.lateral[seg + 1];
      for (std::size_t i = 0; i < rows; ++i) lateral(i, j) = lo[i] + t * (hi[i] - lo[i]);
    }
  }
  field.lateral = std::move(lateral);
  return field;
}

CoarseResult coarse_estimate(const modes::ModeBasis& basis, const RfFrame& first, const RfFrame& second,
                             const tde::DpConfig& cfg) {
  CoarseResult out = coarse_axial(basis, first, second, cfg);
  const DisplacementField lateral = coarse_lateral(out.sparse);
  out.field.lateral = lateral.lateral;
  out.field.flags |= lateral.flags;
  return out;
}

}  // namespace elasto::coarse
