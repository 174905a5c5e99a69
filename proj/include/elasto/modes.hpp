#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "elasto/core.hpp"

namespace elasto::modes {

/// N principal displacement modes over an m x l grid. Vectors are flattened
/// row-major (index = row * l + col), matching Array2D.
struct ModeBasis {
  Eigen::MatrixXd modes;  // (m*l) x N, orthonormal columns
  Eigen::VectorXd mean;   // m*l
  std::vector<double> eigenvalues;  // N, descending
  double explained_variance_ratio = 0.0;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t size() const noexcept { return static_cast<std::size_t>(modes.cols()); }
  std::size_t dimension() const noexcept { return rows * cols; }
  Array2D mode_image(std::size_t n) const;
  Array2D mean_image() const;

  /// Throws Error if orthonormality or ordering is violated.
  void check_invariants(double norm_tol = 1e-9, double ortho_tol = 1e-8) const;
};

/// Mean-centred snapshot PCA over a corpus of axial displacement images.
/// Eigenvalues are those of the sample covariance (1/n) X' X'^T.
ModeBasis learn_modes(std::span<const Array2D> fields, std::size_t n_modes);

/// All non-negative eigenvalues of the (1/n) Gram matrix, descending.
std::vector<double> snapshot_spectrum(std::span<const Array2D> fields);

/// Mode dot products (no centring): the least-squares coefficients of
/// `field` in the span of the modes.
WeightVector project(const ModeBasis& basis, const Array2D& field);

/// Coefficients of `field - mean`.
WeightVector project_centered(const ModeBasis& basis, const Array2D& field);

/// sum_n w_n b_n (the mean is not added).
Array2D reconstruct(const ModeBasis& basis, std::span<const double> w);

/// mean + sum_n w_n b_n.
Array2D reconstruct_with_mean(const ModeBasis& basis, std::span<const double> w);

/// Directory layout: modes.json, mean.elas, mode_000.elas, ...
void save_basis(const ModeBasis& basis, const std::filesystem::path& dir);

/// Loads a basis and re-orthonormalises the float32-stored modes.
ModeBasis load_basis(const std::filesystem::path& dir);

/// Modified Gram-Schmidt on the columns, in place.
void orthonormalize(Eigen::MatrixXd& columns);

}  // namespace elasto::modes
