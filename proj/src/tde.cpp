#include "elasto/tde.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

namespace elasto::tde {
namespace {

void check_pair(const RfFrame& first, const RfFrame& second) {
  if (!first.samples.same_shape(second.samples)) {
    throw DimensionError("frame dimension mismatch: " + std::to_string(first.rows()) + "x" +
                         std::to_string(first.lines()) + " vs " + std::to_string(second.rows()) + "x" +
                         std::to_string(second.lines()));
  }
}

// Fills out-of-range entries (marked NaN) with the largest in-range cost.
void fill_out_of_range(std::vector<double>& cost) {
  double worst = 0.0;
  for (double c : cost) {
    if (!std::isnan(c)) worst = std::max(worst, c);
  }
  for (double& c : cost) {
    if (std::isnan(c)) c = worst;
  }
}

Array2D normalized_columns(const Array2D& a) {
  Array2D out(a.rows(), a.cols());
  for (std::size_t c = 0; c < a.cols(); ++c) {
    const auto col = normalize_unit_rms(a.column(c));
    for (std::size_t r = 0; r < a.rows(); ++r) out(r, c) = col[r];
  }
  return out;
}

}  // namespace

void DpConfig::validate(std::size_t rows, std::size_t lines) const {
  if (!(alpha_dp >= 0.0)) throw InvalidArgument("DpConfig: alpha_dp must be >= 0");
  if (search_range < 1) throw InvalidArgument("DpConfig: search_range must be >= 1");
  if (lateral_search_range < 0) throw InvalidArgument("DpConfig: lateral_search_range must be >= 0");
  if (static_cast<double>(search_range) >= static_cast<double>(rows) / 4.0) {
    throw InvalidArgument("DpConfig: search_range must be below m/4 (" + std::to_string(rows) + " rows)");
  }
  if (line_indices.empty()) {
    if (num_lines < 1 || num_lines > lines) throw InvalidArgument("DpConfig: need 1 <= p <= l");
  } else {
    for (auto j : line_indices) {
      if (j >= lines) throw InvalidArgument("DpConfig: line index " + std::to_string(j) + " out of range");
    }
  }
}

std::vector<std::size_t> equidistant_lines(std::size_t lines, std::size_t p) {
  if (p < 1 || p > lines) throw InvalidArgument("equidistant_lines: need 1 <= p <= l");
  std::vector<std::size_t> out(p);
  for (std::size_t t = 0; t < p; ++t) {
    // Exact halves round down so that p = l selects every line once.
    const double x = (static_cast<double>(t) + 0.5) * static_cast<double>(lines) / static_cast<double>(p);
    const auto j = static_cast<std::size_t>(std::ceil(x - 0.5));
    out[t] = std::min(j, lines - 1);
  }
  return out;
}

std::vector<std::size_t> resolve_lines(const DpConfig& cfg, std::size_t lines) {
  if (cfg.line_indices.empty()) return equidistant_lines(lines, cfg.num_lines);
  auto out = cfg.line_indices;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

CostTable squared_difference_costs(std::span<const double> reference, std::span<const double> target, int range) {
  if (range < 0) throw InvalidArgument("cost table: negative range");
  CostTable table{reference.size(), range, {}};
  const std::size_t labels = table.labels();
  table.cost.assign(reference.size() * labels, std::numeric_limits<double>::quiet_NaN());
  const auto n = static_cast<long>(target.size());
  for (std::size_t i = 0; i < reference.size(); ++i) {
    for (std::size_t k = 0; k < labels; ++k) {
      const long pos = static_cast<long>(i) + static_cast<long>(k) - range;
      if (pos >= 0 && pos < n) {
        const double diff = reference[i] - target[static_cast<std::size_t>(pos)];
        table.cost[i * labels + k] = diff * diff;
      }
    }
  }
  fill_out_of_range(table.cost);
  return table;
}

DpPath optimal_path(const CostTable& costs, double alpha) {
  const std::size_t m = costs.samples;
  const std::size_t labels = costs.labels();
  if (m == 0) return {};
  if (costs.cost.size() != m * labels) throw DimensionError("optimal_path: malformed cost table");

  std::vector<double> transition(labels);  // alpha * step^2 for |step| = 0..labels-1
  for (std::size_t s = 0; s < labels; ++s) transition[s] = alpha * static_cast<double>(s * s);

  std::vector<double> prev(costs.cost.begin(), costs.cost.begin() + static_cast<long>(labels));
  std::vector<double> cur(labels);
  std::vector<std::uint16_t> back(m * labels, 0);

  for (std::size_t i = 1; i < m; ++i) {
    for (std::size_t k = 0; k < labels; ++k) {
      double best = std::numeric_limits<double>::infinity();
      std::size_t best_prev = 0;
      std::size_t best_step = labels;
      for (std::size_t kp = 0; kp < labels; ++kp) {
        const std::size_t step = k > kp ? k - kp : kp - k;
        const double cand = prev[kp] + transition[step];
        // kp ascends, so an equal-cost candidate with equal step is never preferred.
        if (cand < best || (cand == best && step < best_step)) {
          best = cand;
          best_prev = kp;
          best_step = step;
        }
      }
      cur[k] = best + costs(i, k);
      back[i * labels + k] = static_cast<std::uint16_t>(best_prev);
    }
    prev.swap(cur);
  }

  const auto range = static_cast<long>(costs.range);
  std::size_t best_k = 0;
  for (std::size_t k = 1; k < labels; ++k) {
    const long d = static_cast<long>(k) - range;
    const long bd = static_cast<long>(best_k) - range;
    if (prev[k] < prev[best_k] || (prev[k] == prev[best_k] && std::abs(d) < std::abs(bd))) best_k = k;
  }

  DpPath path;
  path.cost = prev[best_k];
  path.displacement.resize(m);
  std::size_t k = best_k;
  for (std::size_t i = m; i-- > 0;) {
    path.displacement[i] = static_cast<int>(static_cast<long>(k) - range);
    if (i > 0) k = back[i * labels + k];
  }
  return path;
}

std::vector<int> dp_line(const RfFrame& first, const RfFrame& second, std::size_t line, const DpConfig& cfg) {
  check_pair(first, second);
  if (line >= first.lines()) throw InvalidArgument("dp_line: line index out of range");
  if (!(cfg.alpha_dp >= 0.0) || cfg.search_range < 1) throw InvalidArgument("dp_line: invalid DpConfig");
  if (static_cast<double>(cfg.search_range) >= static_cast<double>(first.rows()) / 4.0) {
    throw InvalidArgument("dp_line: search_range must be below m/4");
  }
  const auto a = normalize_unit_rms(first.samples.column(line));
  const auto b = normalize_unit_rms(second.samples.column(line));
  return optimal_path(squared_difference_costs(a, b, cfg.search_range), cfg.alpha_dp).displacement;
}

std::vector<double> smooth_staircase(std::span<const double> d) {
  const std::size_t n = d.size();
  if (n == 0) return {};

  // Knots at run centres.
  std::vector<double> knot_pos;
  std::vector<double> knot_val;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= n; ++i) {
    if (i == n || d[i] != d[start]) {
      knot_pos.push_back(0.5 * static_cast<double>(start + i - 1));
      knot_val.push_back(d[start]);
      start = i;
    }
  }

  std::vector<double> out(n);
  std::size_t seg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = static_cast<double>(i);
    if (x <= knot_pos.front()) {
      out[i] = knot_val.front();
    } else if (x >= knot_pos.back()) {
      out[i] = knot_val.back();
    } else {
      while (knot_pos[seg + 1] < x) ++seg;
      const double t = (x - knot_pos[seg]) / (knot_pos[seg + 1] - knot_pos[seg]);
      out[i] = t == 0.0 ? knot_val[seg] : knot_val[seg] + t * (knot_val[seg + 1] - knot_val[seg]);
    }
  }
  return out;
}

std::vector<double> smooth_staircase(std::span<const int> d) {
  std::vector<double> as_real(d.begin(), d.end());
  return smooth_staircase(std::span<const double>(as_real));
}

namespace {

// Exact min-convolution with a quadratic kernel: out[x] = min_q f[q] + alpha (x - q)^2.
// Lower envelope of parabolas; arg receives the minimising q.
struct EnvelopeScratch {
  std::vector<std::size_t> v;
  std::vector<double> z;
  std::vector<double> g;
};

void quadratic_transform(const double* f, std::size_t n, std::size_t stride, double alpha, double* out,
                         std::uint16_t* arg, EnvelopeScratch& scratch) {
  if (alpha <= 0.0) {
    std::size_t best = 0;
    for (std::size_t q = 1; q < n; ++q)
      if (f[q * stride] < f[best * stride]) best = q;
    for (std::size_t x = 0; x < n; ++x) {
      out[x * stride] = f[best * stride];
      arg[x * stride] = static_cast<std::uint16_t>(best);
    }
    return;
  }
  auto& v = scratch.v;
  auto& z = scratch.z;
  v.resize(n);
  z.resize(n + 1);
  std::size_t k = 0;
  v[0] = 0;
  z[0] = -std::numeric_limits<double>::infinity();
  z[1] = std::numeric_limits<double>::infinity();
  auto& g = scratch.g;
  g.resize(n);
  const double inv = 1.0 / alpha;
  for (std::size_t q = 0; q < n; ++q) g[q] = f[q * stride] * inv + static_cast<double>(q * q);
  const auto fq = [&](std::size_t q) { return g[q]; };
  for (std::size_t q = 1; q < n; ++q) {
    double s = (fq(q) - fq(v[k])) / (2.0 * static_cast<double>(q - v[k]));
    while (s <= z[k]) {
      --k;
      s = (fq(q) - fq(v[k])) / (2.0 * static_cast<double>(q - v[k]));
    }
    ++k;
    v[k] = q;
    z[k] = s;
    z[k + 1] = std::numeric_limits<double>::infinity();
  }
  k = 0;
  for (std::size_t x = 0; x < n; ++x) {
    while (z[k + 1] < static_cast<double>(x)) ++k;
    const double d = static_cast<double>(x) - static_cast<double>(v[k]);
    out[x * stride] = f[v[k] * stride] + alpha * d * d;
    arg[x * stride] = static_cast<std::uint16_t>(v[k]);
  }
}

}  // namespace

std::vector<int> dp_lateral_line(const RfFrame& first, const RfFrame& second, std::size_t line,
                                 const DpConfig& cfg) {
  check_pair(first, second);
  if (line >= first.lines()) throw InvalidArgument("dp_lateral_line: line index out of range");
  if (!(cfg.alpha_dp >= 0.0) || cfg.search_range < 1 || cfg.lateral_search_range < 0) {
    throw InvalidArgument("dp_lateral_line: invalid DpConfig");
  }
  const std::size_t m = first.rows();
  const int ra = cfg.search_range;
  const int rl = cfg.lateral_search_range;
  const auto na = static_cast<std::size_t>(2 * ra + 1);
  const auto nl = static_cast<std::size_t>(2 * rl + 1);
  const std::size_t labels = na * nl;  // index = k * na + a

  const auto a = normalize_unit_rms(first.samples.column(line));
  const Array2D b = normalized_columns(second.samples);
  const auto rows = static_cast<long>(m);
  const auto cols = static_cast<long>(first.lines());

  std::vector<double> cost(m * labels, std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t k = 0; k < nl; ++k) {
      const long c = static_cast<long>(line) + static_cast<long>(k) - rl;
      if (c < 0 || c >= cols) continue;
      for (std::size_t d = 0; d < na; ++d) {
        const long r = static_cast<long>(i) + static_cast<long>(d) - ra;
        if (r < 0 || r >= rows) continue;
        const double diff = a[i] - b(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
        cost[i * labels + k * na + d] = diff * diff;
      }
    }
  }
  fill_out_of_range(cost);

  // Transition penalty alpha (da^2 + dl^2) is separable, so each step is two
  // 1-D transforms: along the axial label, then along the lateral label.
  std::vector<double> prev(cost.begin(), cost.begin() + static_cast<long>(labels));
  std::vector<double> pass1(labels), pass2(labels);
  std::vector<std::uint16_t> arg_a(labels), arg_l(labels);
  std::vector<std::uint32_t> back(m * labels, 0);
  EnvelopeScratch scratch;
  for (std::size_t i = 1; i < m; ++i) {
    for (std::size_t k = 0; k < nl; ++k)
      quadratic_transform(prev.data() + k * na, na, 1, cfg.alpha_dp, pass1.data() + k * na, arg_a.data() + k * na,
                          scratch);
    for (std::size_t d = 0; d < na; ++d)
      quadratic_transform(pass1.data() + d, nl, na, cfg.alpha_dp, pass2.data() + d, arg_l.data() + d, scratch);
    for (std::size_t k = 0; k < nl; ++k) {
      for (std::size_t d = 0; d < na; ++d) {
        const std::size_t idx = k * na + d;
        const std::size_t kp = arg_l[idx];
        const std::size_t dp = arg_a[kp * na + d];
        back[i * labels + idx] = static_cast<std::uint32_t>(kp * na + dp);
        prev[idx] = pass2[idx] + cost[i * labels + idx];
      }
    }
  }

  std::size_t best = 0;
  const auto key = [&](std::size_t idx) {
    return std::pair{std::abs(static_cast<long>(idx / na) - rl), std::abs(static_cast<long>(idx % na) - ra)};
  };
  for (std::size_t idx = 1; idx < labels; ++idx) {
    if (prev[idx] < prev[best] || (prev[idx] == prev[best] && key(idx) < key(best))) best = idx;
  }
  std::vector<int> lateral(m);
  for (std::size_t i = m; i-- > 0;) {
    lateral[i] = static_cast<int>(static_cast<long>(best / na) - rl);
    if (i > 0) best = back[i * labels + best];
  }
  return lateral;
}

SparseTde sparse_tde(const RfFrame& first, const RfFrame& second, const DpConfig& cfg) {
  check_pair(first, second);
  cfg.validate(first.rows(), first.lines());

  SparseTde out;
  out.rows = first.rows();
  out.cols = first.lines();
  out.lines = resolve_lines(cfg, first.lines());
  out.coords.reserve(out.rows * out.lines.size());
  out.values.reserve(out.rows * out.lines.size());
  for (std::size_t j : out.lines) {
    auto integer = dp_line(first, second, j, cfg);
    const auto smooth = smooth_staircase(std::span<const int>(integer));
    for (std::size_t i = 0; i < out.rows; ++i) {
      out.coords.push_back({i, j});
      out.values.push_back(smooth[i]);
    }
    const auto lateral = dp_lateral_line(first, second, j, cfg);
    out.lateral.push_back(smooth_staircase(std::span<const int>(lateral)));
    out.axial_integer.push_back(std::move(integer));
  }
  return out;
}

Array2D full_dp_axial(const RfFrame& first, const RfFrame& second, const DpConfig& cfg) {
  check_pair(first, second);
  Array2D out(first.rows(), first.lines());
  for (std::size_t j = 0; j < first.lines(); ++j) {
    const auto integer = dp_line(first, second, j, cfg);
    const auto smooth = smooth_staircase(std::span<const int>(integer));
    for (std::size_t i = 0; i < first.rows(); ++i) out(i, j) = smooth[i];
  }
  return out;
}

}  // namespace elasto::tde
