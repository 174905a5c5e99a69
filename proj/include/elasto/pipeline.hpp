#pragma once

#include <cstdint>
#include <vector>

#include "elasto/coarse.hpp"
#include "elasto/modes.hpp"
#include "elasto/refine.hpp"
#include "elasto/select.hpp"
#include "elasto/sim.hpp"
#include "elasto/tde.hpp"

// Compositions of the stage modules shared by the CLI, the acceptance suite
// and the Python bindings.
namespace elasto::pipeline {

/// DP configuration sized for a frame: the default search range is capped
/// below m/4 so small desk frames remain valid.
tde::DpConfig dp_for_frame(std::size_t rows, tde::DpConfig base = {});

/// Conventional estimate: axial DP on every line and interpolated lateral DP,
/// then refinement.
refine::RefineResult full_dp_refined(const RfFrame& first, const RfFrame& second, const tde::DpConfig& dp,
                                     const refine::RefineConfig& cfg);

/// Initial field from axial DP on every line plus interpolated lateral DP.
DisplacementField full_dp_initial(const RfFrame& first, const RfFrame& second, const tde::DpConfig& dp);

struct CorpusConfig {
  sim::PhantomSpec phantom;
  std::size_t count = 200;
  std::uint64_t seed = 1;
  tde::DpConfig dp;
  refine::RefineConfig refine;
};

/// Deformation of corpus item `index`: compressions and rotations alternate.
sim::DeformationSpec corpus_deformation(std::size_t index, std::uint64_t seed);

/// Refined displacement fields of simulated compression and rotation pairs.
std::vector<Array2D> training_corpus(const CorpusConfig& cfg);

struct DatasetConfig {
  sim::PhantomSpec phantom;
  std::size_t count = 600;
  std::uint64_t seed = 2;
  double out_of_plane_fraction = 0.5;
  select::LabelConfig label;
};

/// Mixture of in-plane deformations and out-of-plane decorrelation.
sim::DeformationSpec dataset_deformation(std::size_t index, std::uint64_t seed, double out_of_plane_fraction);

struct Dataset {
  std::vector<select::LabeledInstance> instances;
  std::vector<sim::DeformationSpec> deformations;  // parallel to instances
  std::size_t invalid = 0;                          // pairs dropped after a pipeline error
};

Dataset labelled_dataset(const modes::ModeBasis& basis, const DatasetConfig& cfg);

}  // namespace elasto::pipeline
