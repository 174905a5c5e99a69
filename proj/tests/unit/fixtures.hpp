#pragma once

#include "elasto/pipeline.hpp"

namespace fixture {

// Basis learned from refined compression and rotation pairs on 128x32
// frames; built once per test process.
inline const elasto::modes::ModeBasis& desk_basis() {
  static const elasto::modes::ModeBasis basis = [] {
    elasto::pipeline::CorpusConfig cfg;
    cfg.count = 40;
    cfg.seed = 31;
    return elasto::modes::learn_modes(elasto::pipeline::training_corpus(cfg), 12);
  }();
  return basis;
}

inline elasto::tde::DpConfig desk_dp() { return elasto::pipeline::dp_for_frame(128); }

// RMS / mean-absolute difference over the central `frac` of rows and columns.
inline double interior_rms(const elasto::Array2D& a, const elasto::Array2D& b, double frac = 0.8) {
  const auto r0 = static_cast<std::size_t>(static_cast<double>(a.rows()) * (1 - frac) / 2);
  const auto c0 = static_cast<std::size_t>(static_cast<double>(a.cols()) * (1 - frac) / 2);
  double s = 0;
  std::size_t n = 0;
  for (std::size_t i = r0; i < a.rows() - r0; ++i)
    for (std::size_t j = c0; j < a.cols() - c0; ++j) {
      const double d = a(i, j) - b(i, j);
      s += d * d;
      ++n;
    }
  return std::sqrt(s / static_cast<double>(n));
}

inline double interior_mae(const elasto::Array2D& a, const elasto::Array2D& b, double frac = 0.8) {
  const auto r0 = static_cast<std::size_t>(static_cast<double>(a.rows()) * (1 - frac) / 2);
  const auto c0 = static_cast<std::size_t>(static_cast<double>(a.cols()) * (1 - frac) / 2);
  double s = 0;
  std::size_t n = 0;
  for (std::size_t i = r0; i < a.rows() - r0; ++i)
    for (std::size_t j = c0; j < a.cols() - c0; ++j) {
      s += std::abs(a(i, j) - b(i, j));
      ++n;
    }
  return s / static_cast<double>(n);
}

inline elasto::sim::FramePair compression_pair(double eps, std::uint64_t seed) {
  elasto::sim::DeformationSpec def;
  def.magnitude = eps;
  def.rng_seed = seed;
  return elasto::sim::synthesize_pair({}, def);
}

}  // namespace fixture
