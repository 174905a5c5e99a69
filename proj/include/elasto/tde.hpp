#pragma once

#include <span>
#include <vector>

#include "elasto/core.hpp"

namespace elasto::tde {

struct DpConfig {
  double alpha_dp = 0.2;
  int search_range = 32;          // max |axial displacement| in samples
  int lateral_search_range = 8;   // max |lateral displacement| in lines
  std::size_t num_lines = 5;      // p, used when line_indices is empty
  std::vector<std::size_t> line_indices;  // explicit lines override num_lines

  void validate(std::size_t rows, std::size_t lines) const;
};

/// p lines placed at round((t + 0.5) * l / p), t = 0..p-1, exact halves rounding down.
std::vector<std::size_t> equidistant_lines(std::size_t lines, std::size_t p);

/// Lines a config resolves to for a frame with `lines` RF lines.
std::vector<std::size_t> resolve_lines(const DpConfig& cfg, std::size_t lines);

/// Data cost table, row-major m x (2R+1): entry (i, k) is the cost of
/// displacement d = k - R at sample i.
struct CostTable {
  std::size_t samples = 0;
  int range = 0;
  std::vector<double> cost;

  std::size_t labels() const noexcept { return static_cast<std::size_t>(2 * range + 1); }
  double operator()(std::size_t i, std::size_t k) const { return cost[i * labels() + k]; }
};

/// Squared-difference costs between `reference[i]` and `target[i + d]`.
/// Out-of-range lookups take the largest in-range cost of the table.
CostTable squared_difference_costs(std::span<const double> reference, std::span<const double> target, int range);

struct DpPath {
  std::vector<int> displacement;
  double cost = 0.0;
};

/// Exact minimiser of sum_i C(i, d_i) + alpha * sum_i (d_i - d_{i-1})^2.
/// Ties prefer the smaller |d_i - d_{i-1}|, then the smaller predecessor;
/// the final sample prefers the smaller |d|, then the smaller d.
DpPath optimal_path(const CostTable& costs, double alpha);

/// Axial integer displacement of one RF line. Each line pair is normalised to
/// zero mean and unit RMS before costing.
std::vector<int> dp_line(const RfFrame& first, const RfFrame& second, std::size_t line, const DpConfig& cfg);

/// Piecewise-linear curve through the centre of every constant run of `d`,
/// flat beyond the first and last run centres.
std::vector<double> smooth_staircase(std::span<const double> d);
std::vector<double> smooth_staircase(std::span<const int> d);

struct SampleCoord {
  std::size_t row = 0;
  std::size_t col = 0;
  friend bool operator==(const SampleCoord&, const SampleCoord&) = default;
};

struct SparseTde {
  std::vector<std::size_t> lines;    // the p chosen lines, ascending
  std::vector<SampleCoord> coords;   // K = m * p, line-major
  std::vector<double> values;        // smoothed axial displacement at coords
  std::vector<std::vector<int>> axial_integer;    // raw DP output per line
  std::vector<std::vector<double>> lateral;       // smoothed lateral DP per line
  std::size_t rows = 0;
  std::size_t cols = 0;
};

/// Lateral component of a DP along one RF line over joint (axial, lateral)
/// labels: same squared-difference data term and quadratic transition
/// penalty as the axial DP. Matching against neighbouring lines of the second
/// frame keeps the estimate usable when same-line axial matching decorrelates.
std::vector<int> dp_lateral_line(const RfFrame& first, const RfFrame& second, std::size_t line,
                                 const DpConfig& cfg);

SparseTde sparse_tde(const RfFrame& first, const RfFrame& second, const DpConfig& cfg);

/// Axial DP on every line, smoothed: the conventional full-frame DP estimate.
Array2D full_dp_axial(const RfFrame& first, const RfFrame& second, const DpConfig& cfg);

}  // namespace elasto::tde
