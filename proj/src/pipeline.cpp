#include "elasto/pipeline.hpp"

#include <algorithm>
#include <numeric>
#include <random>

namespace elasto::pipeline {
namespace {

std::mt19937_64 item_rng(std::uint64_t seed, std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

double uniform(std::mt19937_64& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

}  // namespace

tde::DpConfig dp_for_frame(std::size_t rows, tde::DpConfig base) {
  const int cap = static_cast<int>((rows - 1) / 4);
  base.search_range = std::min(base.search_range, std::max(1, cap));
  return base;
}

DisplacementField full_dp_initial(const RfFrame& first, const RfFrame& second, const tde::DpConfig& dp) {
  tde::DpConfig lateral_cfg = dp;
  lateral_cfg.line_indices.resize(first.lines());
  std::iota(lateral_cfg.line_indices.begin(), lateral_cfg.line_indices.end(), std::size_t{0});
  const tde::SparseTde sparse = tde::sparse_tde(first, second, lateral_cfg);
  DisplacementField field;
  field.axial = Array2D(first.rows(), first.lines());
  for (std::size_t t = 0; t < sparse.coords.size(); ++t) {
    field.axial(sparse.coords[t].row, sparse.coords[t].col) = sparse.values[t];
  }
  field.lateral = coarse::coarse_lateral(sparse).lateral;
  field.provenance = Provenance::dp_sparse;
  return field;
}

refine::RefineResult full_dp_refined(const RfFrame& first, const RfFrame& second, const tde::DpConfig& dp,
                                     const refine::RefineConfig& cfg) {
  return refine::refine(first, second, full_dp_initial(first, second, dp), cfg);
}

sim::DeformationSpec corpus_deformation(std::size_t index, std::uint64_t seed) {
  auto rng = item_rng(seed, index);
  sim::DeformationSpec def;
  def.rng_seed = rng();
  if (index % 2 == 0) {
    def.kind = sim::DeformationKind::axial_compression;
    def.magnitude = uniform(rng, 0.005, 0.06);
  } else {
    def.kind = sim::DeformationKind::in_plane_rotation;
    def.magnitude = uniform(rng, -0.04, 0.04);
    def.axial_strain = uniform(rng, 0.0, 0.03);
  }
  return def;
}

std::vector<Array2D> training_corpus(const CorpusConfig& cfg) {
  const tde::DpConfig dp = dp_for_frame(cfg.phantom.rows, cfg.dp);
  std::vector<Array2D> out;
  out.reserve(cfg.count);
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const auto pair = sim::synthesize_pair(cfg.phantom, corpus_deformation(i, cfg.seed));
    out.push_back(full_dp_refined(pair.first, pair.second, dp, cfg.refine).field.axial);
  }
  return out;
}

sim::DeformationSpec dataset_deformation(std::size_t index, std::uint64_t seed, double out_of_plane_fraction) {
  auto rng = item_rng(seed, index);
  sim::DeformationSpec def;
  def.rng_seed = rng();
  def.axial_strain = uniform(rng, 0.005, 0.03);
  if (uniform(rng, 0.0, 1.0) < out_of_plane_fraction) {
    def.kind = sim::DeformationKind::out_of_plane;
    def.magnitude = uniform(rng, 0.0, 1.0);
    return def;
  }
  switch (std::uniform_int_distribution<int>(0, 2)(rng)) {
    case 0:
      def.kind = sim::DeformationKind::axial_compression;
      def.magnitude = def.axial_strain;
      def.axial_strain = 0.0;
      break;
    case 1:
      def.kind = sim::DeformationKind::in_plane_rotation;
      def.magnitude = uniform(rng, -0.03, 0.03);
      break;
    default:
      def.kind = sim::DeformationKind::lateral_shift;
      def.magnitude = uniform(rng, -1.5, 1.5);
      break;
  }
  return def;
}

Dataset labelled_dataset(const modes::ModeBasis& basis, const DatasetConfig& cfg) {
  select::LabelConfig label = cfg.label;
  label.dp = dp_for_frame(cfg.phantom.rows, label.dp);
  Dataset out;
  for (std::size_t i = 0; i < cfg.count; ++i) {
    const auto def = dataset_deformation(i, cfg.seed, cfg.out_of_plane_fraction);
    const auto pair = sim::synthesize_pair(cfg.phantom, def);
    auto result = select::label_pair(pair.first, pair.second, basis, label);
    if (!result.valid) {
      ++out.invalid;
      continue;
    }
    out.instances.push_back(std::move(result.instance));
    out.deformations.push_back(def);
  }
  return out;
}

}  // namespace elasto::pipeline
