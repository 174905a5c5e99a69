#include "elasto/refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/SparseCholesky>

namespace elasto::refine {
namespace {

constexpr double kBoundsSlack = 1e-9;

struct CubicWeights {
  double w[4];
  double dw[4];
};

CubicWeights catmull_rom(double f) {
  const double f2 = f * f;
  const double f3 = f2 * f;
  return {{0.5 * (-f3 + 2 * f2 - f), 0.5 * (3 * f3 - 5 * f2 + 2), 0.5 * (-3 * f3 + 4 * f2 + f), 0.5 * (f3 - f2)},
          {0.5 * (-3 * f2 + 4 * f - 1), 0.5 * (9 * f2 - 10 * f), 0.5 * (-9 * f2 + 8 * f + 1), 0.5 * (3 * f2 - 2 * f)}};
}

void check_window(const Array2D& s, const Window& w, const char* name) {
  if (w.rows == 0 || w.cols == 0 || w.row + w.rows > s.rows() || w.col + w.cols > s.cols()) {
    throw InvalidArgument(std::string("snr_cnr: ") + name + " window outside image or empty");
  }
  if (w.rows * w.cols < 2) throw InvalidArgument(std::string("snr_cnr: ") + name + " window needs >= 2 samples");
}

std::pair<double, double> window_stats(const Array2D& s, const Window& w) {
  double sum = 0.0;
  for (std::size_t r = w.row; r < w.row + w.rows; ++r) {
    for (std::size_t c = w.col; c < w.col + w.cols; ++c) sum += s(r, c);
  }
  const double n = static_cast<double>(w.rows * w.cols);
  const double mean = sum / n;
  double ss = 0.0;
  for (std::size_t r = w.row; r < w.row + w.rows; ++r) {
    for (std::size_t c = w.col; c < w.col + w.cols; ++c) ss += (s(r, c) - mean) * (s(r, c) - mean);
  }
  return {mean, ss / n};
}

double regularization(const Array2D& axial, const Array2D& lateral, const RefineConfig& cfg) {
  double reg = 0.0;
  const std::size_t rows = axial.rows();
  const std::size_t cols = axial.cols();
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      if (i + 1 < rows) {
        const double da = axial(i + 1, j) - axial(i, j);
        const double db = lateral(i + 1, j) - lateral(i, j);
        reg += cfg.alpha1 * da * da + cfg.beta1 * db * db;
      }
      if (j + 1 < cols) {
        const double da = axial(i, j + 1) - axial(i, j);
        const double db = lateral(i, j + 1) - lateral(i, j);
        reg += cfg.alpha2 * da * da + cfg.beta2 * db * db;
      }
    }
  }
  return reg;
}

void check_shapes(const Array2D& first, const Array2D& second, const Array2D& axial, const Array2D& lateral) {
  if (!first.same_shape(second) || !first.same_shape(axial) || !first.same_shape(lateral)) {
    throw DimensionError("refine: frame and displacement dimensions disagree");
  }
}

}  // namespace

// ---------------------------------------------------------------------------

CubicSample sample_cubic(const Array2D& image, double row, double col) {
  const double max_r = static_cast<double>(image.rows() - 1);
  const double max_c = static_cast<double>(image.cols() - 1);
  CubicSample out;
  out.inside = row >= -kBoundsSlack && row <= max_r + kBoundsSlack && col >= -kBoundsSlack && col <= max_c + kBoundsSlack;
  row = std::clamp(row, 0.0, max_r);
  col = std::clamp(col, 0.0, max_c);

  const double fr = std::floor(row);
  const double fc = std::floor(col);
  const auto r0 = static_cast<long>(fr);
  const auto c0 = static_cast<long>(fc);
  const CubicWeights wr = catmull_rom(row - fr);
  const CubicWeights wc = catmull_rom(col - fc);
  const long last_r = static_cast<long>(image.rows()) - 1;
  const long last_c = static_cast<long>(image.cols()) - 1;

  for (int a = 0; a < 4; ++a) {
    const auto r = static_cast<std::size_t>(std::clamp(r0 - 1 + a, 0L, last_r));
    double v = 0.0;
    double dv = 0.0;
    for (int b = 0; b < 4; ++b) {
      const auto c = static_cast<std::size_t>(std::clamp(c0 - 1 + b, 0L, last_c));
      const double px = image(r, c);
      v += wc.w[b] * px;
      dv += wc.dw[b] * px;
    }
    out.value += wr.w[a] * v;
    out.d_row += wr.dw[a] * v;
    out.d_col += wr.w[a] * dv;
  }
  return out;
}

std::size_t WarpedFrame::overlap() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

WarpedFrame warp(const Array2D& image, const DisplacementField& d) {
  if (!image.same_shape(d.axial)) throw DimensionError("warp: displacement does not match image");
  if (!d.axial.all_finite() || (d.lateral && !d.lateral->all_finite())) {
    throw InvalidArgument("warp: non-finite displacement");
  }
  WarpedFrame out{Array2D(image.rows(), image.cols()), std::vector<std::uint8_t>(image.size(), 0)};
  for (std::size_t i = 0; i < image.rows(); ++i) {
    for (std::size_t j = 0; j < image.cols(); ++j) {
      const double dl = d.lateral ? (*d.lateral)(i, j) : 0.0;
      const CubicSample s = sample_cubic(image, static_cast<double>(i) + d.axial(i, j), static_cast<double>(j) + dl);
      out.image(i, j) = s.value;
      out.mask[i * image.cols() + j] = s.inside ? 1 : 0;
    }
  }
  return out;
}

double ncc(const Array2D& first, const Array2D& second, const std::vector<std::uint8_t>& mask) {
  if (!first.same_shape(second)) throw DimensionError("ncc: image dimensions disagree");
  if (!mask.empty() && mask.size() != first.size()) throw DimensionError("ncc: mask size mismatch");
  const auto a = first.values();
  const auto b = second.values();
  const auto use = [&](std::size_t i) { return mask.empty() || mask[i] != 0; };

  double sa = 0.0, sb = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!use(i)) continue;
    sa += a[i];
    sb += b[i];
    ++n;
  }
  if (n == 0) throw DegenerateInput("ncc: empty overlap");
  const double ma = sa / static_cast<double>(n);
  const double mb = sb / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!use(i)) continue;
    const double da = a[i] - ma;
    const double db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (saa == 0.0 || sbb == 0.0) throw DegenerateInput("ncc: constant input over the overlap");
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double ncc(const Array2D& first, const WarpedFrame& warped) { return ncc(first, warped.image, warped.mask); }

// ---------------------------------------------------------------------------

StrainImage strain(const Array2D& axial, int window_len) {
  if (window_len < 3 || window_len % 2 == 0) throw InvalidArgument("strain: window_len must be odd and >= 3");
  if (static_cast<std::size_t>(window_len) > axial.rows()) {
    throw InvalidArgument("strain: window of " + std::to_string(window_len) + " longer than column of " +
                          std::to_string(axial.rows()));
  }
  const auto rows = static_cast<long>(axial.rows());
  const long h = (window_len - 1) / 2;
  StrainImage out{Array2D(axial.rows(), axial.cols()), window_len};
  for (std::size_t j = 0; j < axial.cols(); ++j) {
    for (long i = 0; i < rows; ++i) {
      const long lo = std::max(0L, i - h);
      const long hi = std::min(rows - 1, i + h);
      const double n = static_cast<double>(hi - lo + 1);
      double st = 0.0, sd = 0.0;
      for (long t = lo; t <= hi; ++t) {
        st += static_cast<double>(t);
        sd += axial(static_cast<std::size_t>(t), j);
      }
      const double mt = st / n;
      const double md = sd / n;
      double num = 0.0, den = 0.0;
      for (long t = lo; t <= hi; ++t) {
        const double dt = static_cast<double>(t) - mt;
        num += dt * (axial(static_cast<std::size_t>(t), j) - md);
        den += dt * dt;
      }
      out.strain(static_cast<std::size_t>(i), j) = num / den;
    }
  }
  return out;
}

StrainImage strain(const DisplacementField& d, int window_len) { return strain(d.axial, window_len); }

QualityMetrics snr_cnr(const Array2D& s, const Window& target, const Window& background) {
  check_window(s, target, "target");
  check_window(s, background, "background");
  const auto [mt, vt] = window_stats(s, target);
  const auto [mb, vb] = window_stats(s, background);
  QualityMetrics q;
  if (vb > 0.0) {
    q.snr = mb / std::sqrt(vb);
  } else {
    q.snr_saturated = true;
    q.snr = mb == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), mb);
  }
  const double pooled = vb + vt;
  if (pooled > 0.0) {
    q.cnr = std::sqrt(2.0 * (mb - mt) * (mb - mt) / pooled);
  } else {
    q.cnr_saturated = true;
    q.cnr = mb == mt ? 0.0 : std::numeric_limits<double>::infinity();
  }
  return q;
}

QualityMetrics snr_cnr(const StrainImage& s, const Window& target, const Window& background) {
  return snr_cnr(s.strain, target, background);
}

// ---------------------------------------------------------------------------

void RefineConfig::validate() const {
  if (!(alpha1 >= 0.0 && alpha2 >= 0.0 && beta1 >= 0.0 && beta2 >= 0.0)) {
    throw InvalidArgument("RefineConfig: regularisation weights must be >= 0");
  }
  if (max_iters < 1) throw InvalidArgument("RefineConfig: max_iters must be >= 1");
  if (!(step_tolerance >= 0.0)) throw InvalidArgument("RefineConfig: step_tolerance must be >= 0");
}

double LinearizedSystem::cost(const Eigen::VectorXd& u) const {
  return u.dot(hessian * u) - 2.0 * rhs.dot(u) + constant;
}

LinearizedSystem linearize(const Array2D& first, const Array2D& second, const Array2D& axial,
                           const Array2D& lateral, const RefineConfig& cfg) {
  check_shapes(first, second, axial, lateral);
  const std::size_t rows = first.rows();
  const std::size_t cols = first.cols();
  const auto n = static_cast<Eigen::Index>(2 * rows * cols);

  LinearizedSystem sys;
  sys.rhs = Eigen::VectorXd::Zero(n);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(n) * 8);

  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const auto p = static_cast<Eigen::Index>(i * cols + j);
      const Eigen::Index ia = 2 * p;
      const Eigen::Index il = 2 * p + 1;
      const double a0 = axial(i, j);
      const double l0 = lateral(i, j);
      const CubicSample s = sample_cubic(second, static_cast<double>(i) + a0, static_cast<double>(j) + l0);
      double gz = 0.0, gx = 0.0, target = 0.0;
      if (s.inside) {
        gz = s.d_row;
        gx = s.d_col;
        // Residual of the linearisation expressed in absolute unknowns.
        target = first(i, j) - s.value + gz * a0 + gx * l0;
      }
      triplets.emplace_back(ia, ia, gz * gz);
      triplets.emplace_back(ia, il, gz * gx);
      triplets.emplace_back(il, ia, gz * gx);
      triplets.emplace_back(il, il, gx * gx);
      sys.rhs(ia) += gz * target;
      sys.rhs(il) += gx * target;
      sys.constant += target * target;
    }
  }

  // Weighted first differences: w * (u_q - u_p)^2 contributes w * [1 -1; -1 1].
  const auto add_difference = [&](Eigen::Index p, Eigen::Index q, double w) {
    if (w == 0.0) return;
    triplets.emplace_back(p, p, w);
    triplets.emplace_back(q, q, w);
    triplets.emplace_back(p, q, -w);
    triplets.emplace_back(q, p, -w);
  };
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) {
      const auto p = static_cast<Eigen::Index>(i * cols + j);
      if (i + 1 < rows) {
        const auto q = static_cast<Eigen::Index>((i + 1) * cols + j);
        add_difference(2 * p, 2 * q, cfg.alpha1);
        add_difference(2 * p + 1, 2 * q + 1, cfg.beta1);
      }
      if (j + 1 < cols) {
        const auto q = static_cast<Eigen::Index>(i * cols + j + 1);
        add_difference(2 * p, 2 * q, cfg.alpha2);
        add_difference(2 * p + 1, 2 * q + 1, cfg.beta2);
      }
    }
  }
  sys.hessian.resize(n, n);
  sys.hessian.setFromTriplets(triplets.begin(), triplets.end());
  return sys;
}

double energy(const Array2D& first, const Array2D& second, const Array2D& axial, const Array2D& lateral,
              const RefineConfig& cfg) {
  check_shapes(first, second, axial, lateral);
  double data = 0.0;
  for (std::size_t i = 0; i < first.rows(); ++i) {
    for (std::size_t j = 0; j < first.cols(); ++j) {
      const CubicSample s =
          sample_cubic(second, static_cast<double>(i) + axial(i, j), static_cast<double>(j) + lateral(i, j));
      if (!s.inside) continue;
      const double r = first(i, j) - s.value;
      data += r * r;
    }
  }
  return data + regularization(axial, lateral, cfg);
}

RefineResult refine(const RfFrame& first, const RfFrame& second, const DisplacementField& initial,
                    const RefineConfig& cfg) {
  cfg.validate();
  if (!first.samples.same_shape(second.samples)) throw DimensionError("refine: frame dimensions disagree");
  if (!first.samples.same_shape(initial.axial)) throw DimensionError("refine: initial field does not match frames");
  if (!initial.axial.all_finite() || (initial.lateral && !initial.lateral->all_finite())) {
    throw InvalidArgument("refine: non-finite initial displacement");
  }

  const Array2D a = normalize_unit_rms(first.samples);
  const Array2D b = normalize_unit_rms(second.samples);
  const std::size_t rows = a.rows();
  const std::size_t cols = a.cols();
  const std::size_t count = rows * cols;

  Array2D axial = initial.axial;
  Array2D lateral = initial.lateral_or_zero();
  RefineResult result;
  double current = energy(a, b, axial, lateral, cfg);
  result.energy_history.push_back(current);

  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver;
  bool analysed = false;
  Array2D trial_axial(rows, cols);
  Array2D trial_lateral(rows, cols);

  for (int it = 0; it < cfg.max_iters; ++it) {
    const LinearizedSystem sys = linearize(a, b, axial, lateral, cfg);
    if (!analysed) {
      solver.analyzePattern(sys.hessian);
      analysed = true;
    }
    solver.factorize(sys.hessian);
    if (solver.info() != Eigen::Success) break;
    const Eigen::VectorXd u = solver.solve(sys.rhs);
    if (solver.info() != Eigen::Success || !u.allFinite()) break;
    ++result.iterations;

    // Backtrack until the non-linear objective does not increase.
    double t = 1.0;
    double trial = std::numeric_limits<double>::infinity();
    double mean_change = 0.0;
    for (int halvings = 0; halvings < 6; ++halvings, t *= 0.5) {
      mean_change = 0.0;
      for (std::size_t p = 0; p < count; ++p) {
        const double da = u(static_cast<Eigen::Index>(2 * p)) - axial.values()[p];
        const double dl = u(static_cast<Eigen::Index>(2 * p + 1)) - lateral.values()[p];
        trial_axial.values()[p] = axial.values()[p] + t * da;
        trial_lateral.values()[p] = lateral.values()[p] + t * dl;
        mean_change += std::abs(t * da);
      }
      mean_change /= static_cast<double>(count);
      trial = energy(a, b, trial_axial, trial_lateral, cfg);
      if (trial <= current) break;
    }
    if (!(trial <= current)) {
      // No descent along the Gauss-Newton direction: the estimate is stationary.
      result.converged = true;
      break;
    }
    axial = trial_axial;
    lateral = trial_lateral;
    current = trial;
    result.energy_history.push_back(current);
    if (mean_change < cfg.step_tolerance) {
      result.converged = true;
      break;
    }
  }

  result.field.axial = std::move(axial);
  result.field.lateral = std::move(lateral);
  result.field.provenance = Provenance::refined;
  if (!result.converged) result.field.flags |= kNotConverged;
  return result;
}

}  // namespace elasto::refine
