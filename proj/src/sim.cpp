#include "elasto/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace elasto::sim {
namespace {

constexpr double kInclusionEdgeWidth = 1.5;  // samples, tanh blend of the stiffness step
constexpr double kTableStep = 0.25;          // resolution of the inclusion displacement table
constexpr double kPsfSupport = 4.0;          // PSF truncated at this many sigmas

struct Scatterer {
  double row;
  double col;
  double amplitude;
};

// Integrated inclusion softness: u_a = eps * (x + sum_k (1/s_k - 1) * H_k(x, y))
// where H_k is the depth integral of a smooth indicator of inclusion k. The
// integral is tabulated on a fine grid over the extended domain.
class InclusionTable {
public:
  InclusionTable(const PhantomSpec& spec, double row_lo, double row_hi, double col_lo, double col_hi)
      : row_lo_(row_lo), col_lo_(col_lo) {
    if (spec.inclusions.empty()) return;
    nr_ = static_cast<std::size_t>(std::ceil((row_hi - row_lo) / kTableStep)) + 2;
    nc_ = static_cast<std::size_t>(std::ceil((col_hi - col_lo) / kTableStep)) + 2;
    table_.assign(nr_ * nc_, 0.0);
    const double aspect = spec.lateral_spacing / spec.axial_spacing;
    // Origin of the depth integral is row 0; find its index on the table grid.
    const double origin = -row_lo_ / kTableStep;

    std::vector<double> indicator(nr_);
    for (std::size_t c = 0; c < nc_; ++c) {
      const double y = col_lo_ + static_cast<double>(c) * kTableStep;
      for (std::size_t r = 0; r < nr_; ++r) {
        const double x = row_lo_ + static_cast<double>(r) * kTableStep;
        double g = 0.0;
        for (const auto& inc : spec.inclusions) {
          const double dx = x - inc.center_row;
          const double dy = (y - inc.center_col) * aspect;
          const double dist = std::sqrt(dx * dx + dy * dy);
          const double h = 0.5 * (1.0 + std::tanh((inc.radius - dist) / kInclusionEdgeWidth));
          g += (1.0 / inc.relative_stiffness - 1.0) * h;
        }
        indicator[r] = g;
      }
      // Cumulative trapezoid from the top of the table, then shift so that
      // the integral vanishes at row 0.
      std::vector<double> cum(nr_, 0.0);
      for (std::size_t r = 1; r < nr_; ++r) {
        cum[r] = cum[r - 1] + 0.5 * (indicator[r - 1] + indicator[r]) * kTableStep;
      }
      const double at_origin = interp1(cum, origin);
      for (std::size_t r = 0; r < nr_; ++r) table_[r * nc_ + c] = cum[r] - at_origin;
    }
  }

  double operator()(double row, double col) const {
    if (table_.empty()) return 0.0;
    const double fr = std::clamp((row - row_lo_) / kTableStep, 0.0, static_cast<double>(nr_ - 1));
    const double fc = std::clamp((col - col_lo_) / kTableStep, 0.0, static_cast<double>(nc_ - 1));
    const auto r0 = std::min(static_cast<std::size_t>(fr), nr_ - 2);
    const auto c0 = std::min(static_cast<std::size_t>(fc), nc_ - 2);
    const double tr = fr - static_cast<double>(r0);
    const double tc = fc - static_cast<double>(c0);
    const auto at = [&](std::size_t r, std::size_t c) { return table_[r * nc_ + c]; };
    return (1 - tr) * ((1 - tc) * at(r0, c0) + tc * at(r0, c0 + 1)) +
           tr * ((1 - tc) * at(r0 + 1, c0) + tc * at(r0 + 1, c0 + 1));
  }

private:
  static double interp1(const std::vector<double>& v, double pos) {
    pos = std::clamp(pos, 0.0, static_cast<double>(v.size() - 1));
    const auto i = std::min(static_cast<std::size_t>(pos), v.size() - 2);
    const double t = pos - static_cast<double>(i);
    return (1 - t) * v[i] + t * v[i + 1];
  }

  double row_lo_;
  double col_lo_;
  std::size_t nr_ = 0;
  std::size_t nc_ = 0;
  std::vector<double> table_;
};

// Analytic displacement model evaluated at continuous positions.
class DisplacementModel {
public:
  DisplacementModel(const PhantomSpec& spec, const DeformationSpec& def, double row_lo, double row_hi,
                    double col_lo, double col_hi)
      : spec_(spec), def_(def), inclusions_(spec, row_lo, row_hi, col_lo, col_hi) {}

  // Returns {axial samples, lateral lines}.
  std::pair<double, double> operator()(double row, double col) const {
    double ua = 0.0;
    double ul = 0.0;
    const double eps = def_.kind == DeformationKind::axial_compression ? def_.magnitude : def_.axial_strain;
    if (eps != 0.0) ua += eps * (row + inclusions_(row, col));

    if (def_.kind == DeformationKind::in_plane_rotation && def_.magnitude != 0.0) {
      // Rigid rotation about the centre of the probe face, in physical units.
      const double pivot = 0.5 * static_cast<double>(spec_.lines - 1);
      const double X = row * spec_.axial_spacing;
      const double Y = (col - pivot) * spec_.lateral_spacing;
      const double c = std::cos(def_.magnitude);
      const double s = std::sin(def_.magnitude);
      ua += (X * c - Y * s - X) / spec_.axial_spacing;
      ul += (X * s + Y * c - Y) / spec_.lateral_spacing;
    } else if (def_.kind == DeformationKind::lateral_shift) {
      ul += def_.magnitude;
    }
    return {ua, ul};
  }

private:
  const PhantomSpec& spec_;
  const DeformationSpec& def_;
  InclusionTable inclusions_;
};

struct Domain {
  double row_lo, row_hi, col_lo, col_hi;
};

std::vector<Scatterer> draw_scatterers(const PhantomSpec& spec, const Domain& dom, std::mt19937_64& rng) {
  const double area = (dom.row_hi - dom.row_lo) * (dom.col_hi - dom.col_lo);
  const auto count = static_cast<std::size_t>(std::llround(spec.scatterer_density * area));
  std::uniform_real_distribution<double> row_dist(dom.row_lo, dom.row_hi);
  std::uniform_real_distribution<double> col_dist(dom.col_lo, dom.col_hi);
  std::normal_distribution<double> amp_dist(0.0, 1.0);
  std::vector<Scatterer> out(count);
  for (auto& s : out) {
    s.row = row_dist(rng);
    s.col = col_dist(rng);
    s.amplitude = amp_dist(rng);
  }
  return out;
}

Array2D render(const PhantomSpec& spec, const std::vector<Scatterer>& scatterers) {
  Array2D img(spec.rows, spec.lines, 0.0);
  const auto& psf = spec.psf;
  const double ra = kPsfSupport * psf.sigma_axial;
  const double rl = kPsfSupport * psf.sigma_lateral;
  const double two_pi_f = 2.0 * std::numbers::pi * psf.center_frequency;
  const double ia = 1.0 / (2.0 * psf.sigma_axial * psf.sigma_axial);
  const double il = 1.0 / (2.0 * psf.sigma_lateral * psf.sigma_lateral);
  const auto max_row = static_cast<long>(spec.rows) - 1;
  const auto max_col = static_cast<long>(spec.lines) - 1;

  std::vector<double> axial_profile;
  std::vector<double> lateral_profile;
  for (const auto& s : scatterers) {
    const long r0 = std::max(0L, static_cast<long>(std::ceil(s.row - ra)));
    const long r1 = std::min(max_row, static_cast<long>(std::floor(s.row + ra)));
    const long c0 = std::max(0L, static_cast<long>(std::ceil(s.col - rl)));
    const long c1 = std::min(max_col, static_cast<long>(std::floor(s.col + rl)));
    if (r0 > r1 || c0 > c1) continue;
    axial_profile.resize(static_cast<std::size_t>(r1 - r0 + 1));
    lateral_profile.resize(static_cast<std::size_t>(c1 - c0 + 1));
    for (long r = r0; r <= r1; ++r) {
      const double d = static_cast<double>(r) - s.row;
      axial_profile[static_cast<std::size_t>(r - r0)] = s.amplitude * std::exp(-d * d * ia) * std::cos(two_pi_f * d);
    }
    for (long c = c0; c <= c1; ++c) {
      const double d = static_cast<double>(c) - s.col;
      lateral_profile[static_cast<std::size_t>(c - c0)] = std::exp(-d * d * il);
    }
    for (long r = r0; r <= r1; ++r) {
      const double a = axial_profile[static_cast<std::size_t>(r - r0)];
      for (long c = c0; c <= c1; ++c) {
        img(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) +=
            a * lateral_profile[static_cast<std::size_t>(c - c0)];
      }
    }
  }
  return img;
}

void scale_in_place(Array2D& a, double s) {
  for (double& v : a.values()) v *= s;
}

Domain extended_domain(const PhantomSpec& spec, double pad_rows, double pad_cols) {
  // Integer pads keep the frame grid on the inclusion table nodes.
  pad_rows = std::ceil(pad_rows);
  pad_cols = std::ceil(pad_cols);
  return {-pad_rows, static_cast<double>(spec.rows - 1) + pad_rows, -pad_cols,
          static_cast<double>(spec.lines - 1) + pad_cols};
}

}  // namespace

void PhantomSpec::validate() const {
  if (rows < RfFrame::kMinRows || lines < RfFrame::kMinLines) {
    throw DimensionError("PhantomSpec: frame must be at least 64x8");
  }
  if (!(scatterer_density > 0.0)) throw InvalidArgument("PhantomSpec: scatterer_density must be > 0");
  if (!(psf.sigma_axial > 0.0) || !(psf.sigma_lateral > 0.0) || !(psf.center_frequency >= 0.0)) {
    throw InvalidArgument("PhantomSpec: invalid PSF");
  }
  if (!(background_stiffness > 0.0)) throw InvalidArgument("PhantomSpec: background_stiffness must be > 0");
  if (!(axial_spacing > 0.0) || !(lateral_spacing > 0.0)) throw InvalidArgument("PhantomSpec: spacing must be > 0");
  for (const auto& inc : inclusions) {
    if (!(inc.radius > 0.0)) throw InvalidArgument("PhantomSpec: inclusion radius must be > 0");
    if (!(inc.relative_stiffness > 0.0)) throw InvalidArgument("PhantomSpec: inclusion stiffness must be > 0");
  }
}

std::string to_string(DeformationKind kind) {
  switch (kind) {
    case DeformationKind::axial_compression: return "axial_compression";
    case DeformationKind::in_plane_rotation: return "in_plane_rotation";
    case DeformationKind::lateral_shift: return "lateral_shift";
    case DeformationKind::out_of_plane: return "out_of_plane";
  }
  return "unknown";
}

DeformationKind deformation_kind_from_string(const std::string& name) {
  for (auto k : {DeformationKind::axial_compression, DeformationKind::in_plane_rotation,
                 DeformationKind::lateral_shift, DeformationKind::out_of_plane}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown deformation kind '" + name + "'");
}

void DeformationSpec::validate() const {
  if (!std::isfinite(magnitude) || !std::isfinite(axial_strain)) {
    throw InvalidArgument("DeformationSpec: non-finite magnitude");
  }
  const auto check = [&](double bound, const char* what) {
    if (std::abs(magnitude) > bound) {
      throw InvalidArgument(std::string("DeformationSpec: ") + what + " magnitude out of range");
    }
  };
  switch (kind) {
    case DeformationKind::axial_compression: check(0.1, "compression"); break;
    case DeformationKind::in_plane_rotation: check(0.1, "rotation"); break;
    case DeformationKind::lateral_shift: check(8.0, "lateral shift"); break;
    case DeformationKind::out_of_plane:
      if (magnitude < 0.0 || magnitude > 1.0) {
        throw InvalidArgument("DeformationSpec: out_of_plane magnitude must be in [0, 1]");
      }
      break;
  }
  if (std::abs(axial_strain) > 0.1) throw InvalidArgument("DeformationSpec: axial_strain out of range");
}

DisplacementField imposed_displacement(const PhantomSpec& spec, const DeformationSpec& def) {
  spec.validate();
  def.validate();
  const Domain dom = extended_domain(spec, 1.0, 1.0);
  const DisplacementModel model(spec, def, dom.row_lo, dom.row_hi, dom.col_lo, dom.col_hi);
  DisplacementField field;
  field.axial = Array2D(spec.rows, spec.lines);
  field.lateral = Array2D(spec.rows, spec.lines);
  for (std::size_t r = 0; r < spec.rows; ++r) {
    for (std::size_t c = 0; c < spec.lines; ++c) {
      const auto [ua, ul] = model(static_cast<double>(r), static_cast<double>(c));
      field.axial(r, c) = ua;
      (*field.lateral)(r, c) = ul;
    }
  }
  field.provenance = Provenance::oracle;
  return field;
}

FramePair synthesize_pair(const PhantomSpec& spec, const DeformationSpec& def) {
  DisplacementField oracle = imposed_displacement(spec, def);

  double max_axial = 0.0;
  double max_lateral = 0.0;
  for (double v : oracle.axial.values()) max_axial = std::max(max_axial, std::abs(v));
  for (double v : oracle.lateral->values()) max_lateral = std::max(max_lateral, std::abs(v));
  if (max_axial > static_cast<double>(spec.rows) / 4.0 || max_lateral > static_cast<double>(spec.lines) / 4.0) {
    throw InvalidArgument("synthesize_pair: displacement exceeds frame bounds (axial " +
                          std::to_string(max_axial) + ", lateral " + std::to_string(max_lateral) + ")");
  }

  // Pad the scatterer domain so that displaced scatterers still fill the frame.
  const double pad_rows = kPsfSupport * spec.psf.sigma_axial + max_axial + 2.0;
  const double pad_cols = kPsfSupport * spec.psf.sigma_lateral + max_lateral + 2.0;
  const Domain dom = extended_domain(spec, pad_rows, pad_cols);
  const DisplacementModel model(spec, def, dom.row_lo, dom.row_hi, dom.col_lo, dom.col_hi);

  std::mt19937_64 rng(def.rng_seed);
  const auto scatterers = draw_scatterers(spec, dom, rng);
  auto moved = scatterers;
  for (auto& s : moved) {
    const auto [ua, ul] = model(s.row, s.col);
    s.row += ua;
    s.col += ul;
  }

  Array2D first = render(spec, scatterers);
  Array2D second = render(spec, moved);
  const double r = rms(first.values());
  const double scale = r > 0.0 ? 1.0 / r : 1.0;
  scale_in_place(first, scale);
  scale_in_place(second, scale);

  if (def.kind == DeformationKind::out_of_plane && def.magnitude > 0.0) {
    // Elevational motion brings in new scatterers: blend with an independent
    // realization, keeping the overall energy.
    std::mt19937_64 other_rng(def.rng_seed ^ 0x9E3779B97F4A7C15ull);
    Array2D fresh = render(spec, draw_scatterers(spec, dom, other_rng));
    scale_in_place(fresh, scale);
    const double phi = 0.5 * std::numbers::pi * def.magnitude;
    const double keep = std::cos(phi);
    const double mix = std::sin(phi);
    auto dst = second.values();
    auto src = fresh.values();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = keep * dst[i] + mix * src[i];
  }

  FramePair pair;
  pair.first = RfFrame{std::move(first), spec.axial_spacing, spec.lateral_spacing,
                       "sim-" + std::to_string(def.rng_seed) + "-a"};
  pair.second = RfFrame{std::move(second), spec.axial_spacing, spec.lateral_spacing,
                        "sim-" + std::to_string(def.rng_seed) + "-b"};
  pair.oracle = std::move(oracle);
  return pair;
}

NoisyFrame inject_line_noise(const RfFrame& frame, double fraction, double sigma2, std::uint64_t seed,
                             const std::vector<std::size_t>& protected_lines) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw InvalidArgument("inject_line_noise: fraction must be in [0, 1]");
  if (!(sigma2 >= 0.0)) throw InvalidArgument("inject_line_noise: sigma2 must be >= 0");

  const std::size_t lines = frame.lines();
  const auto count = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(lines)));
  std::vector<std::size_t> candidates;
  for (std::size_t j = 0; j < lines; ++j) {
    if (std::find(protected_lines.begin(), protected_lines.end(), j) == protected_lines.end()) {
      candidates.push_back(j);
    }
  }
  if (count > candidates.size()) {
    throw InvalidArgument("inject_line_noise: not enough unprotected lines for the requested fraction");
  }

  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  candidates.resize(count);
  std::sort(candidates.begin(), candidates.end());

  NoisyFrame out{frame, candidates};
  std::normal_distribution<double> noise(0.0, std::sqrt(sigma2));
  for (std::size_t j : candidates) {
    for (std::size_t r = 0; r < frame.rows(); ++r) out.frame.samples(r, j) += noise(rng);
  }
  return out;
}

}  // namespace elasto::sim
