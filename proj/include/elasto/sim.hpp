#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "elasto/core.hpp"

namespace elasto::sim {

/// Separable Gaussian-modulated cosine point spread function.
struct Psf {
  double center_frequency = 0.15;  // cycles per axial sample
  double sigma_axial = 3.0;        // samples
  double sigma_lateral = 1.5;      // lines
};

struct Inclusion {
  double center_row = 0.0;
  double center_col = 0.0;  // in lines
  double radius = 10.0;     // in axial samples; lateral extent scaled by spacing ratio
  double relative_stiffness = 2.0;
};

struct PhantomSpec {
  std::size_t rows = 128;
  std::size_t lines = 32;
  double scatterer_density = 1.0;  // scatterers per sample x line cell
  Psf psf;
  double background_stiffness = 1.0;
  std::vector<Inclusion> inclusions;
  double axial_spacing = 0.05;   // mm per sample
  double lateral_spacing = 0.2;  // mm per line

  void validate() const;
};

enum class DeformationKind { axial_compression, in_plane_rotation, lateral_shift, out_of_plane };

std::string to_string(DeformationKind kind);
DeformationKind deformation_kind_from_string(const std::string& name);

/// magnitude: compression fraction (axial_compression), rotation angle in
/// radians (in_plane_rotation), shift in lines (lateral_shift), or
/// decorrelation in [0, 1] (out_of_plane). `axial_strain` adds a uniform
/// compression on top of the non-compression kinds.
struct DeformationSpec {
  DeformationKind kind = DeformationKind::axial_compression;
  double magnitude = 0.0;
  double axial_strain = 0.0;
  std::uint64_t rng_seed = 0;

  void validate() const;
};

struct FramePair {
  RfFrame first;
  RfFrame second;
  DisplacementField oracle;
};

/// Renders a scatterer phantom, displaces the scatterers by the imposed field
/// and renders again. Both frames share one scale factor that gives the first
/// frame unit RMS. The oracle maps first-frame samples to second-frame
/// positions: second(x + oracle(x)) ~ first(x).
FramePair synthesize_pair(const PhantomSpec& spec, const DeformationSpec& def);

/// Imposed displacement sampled on the frame grid (axial in samples, lateral in lines).
DisplacementField imposed_displacement(const PhantomSpec& spec, const DeformationSpec& def);

struct NoisyFrame {
  RfFrame frame;
  std::vector<std::size_t> noisy_lines;  // ascending
};

/// Adds i.i.d. N(0, sigma2) noise to exactly round(fraction * l) distinct
/// lines, never touching `protected_lines`. Other lines are copied unchanged.
NoisyFrame inject_line_noise(const RfFrame& frame, double fraction, double sigma2, std::uint64_t seed,
                             const std::vector<std::size_t>& protected_lines = {});

}  // namespace elasto::sim
