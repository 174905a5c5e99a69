#include "elasto/modes.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <Eigen/Eigenvalues>
#include <json.hpp>

#include "elasto/raster.hpp"

namespace elasto::modes {
namespace {

Eigen::MatrixXd centered_data(std::span<const Array2D> fields, Eigen::VectorXd& mean) {
  const auto rows = fields.front().rows();
  const auto cols = fields.front().cols();
  const auto dim = static_cast<Eigen::Index>(rows * cols);
  Eigen::MatrixXd x(dim, static_cast<Eigen::Index>(fields.size()));
  for (std::size_t k = 0; k < fields.size(); ++k) {
    if (fields[k].rows() != rows || fields[k].cols() != cols) {
      throw DimensionError("learn_modes: field " + std::to_string(k) + " has dimensions " +
                           std::to_string(fields[k].rows()) + "x" + std::to_string(fields[k].cols()) +
                           ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    x.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXd>(fields[k].values().data(), dim);
  }
  mean = x.rowwise().mean();
  x.colwise() -= mean;
  return x;
}

std::string mode_file(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "mode_%03zu.elas", n);
  return buf;
}

void check_dims(const ModeBasis& basis, std::size_t rows, std::size_t cols) {
  if (rows != basis.rows || cols != basis.cols) {
    throw DimensionError("mode basis is " + std::to_string(basis.rows) + "x" + std::to_string(basis.cols) +
                         ", field is " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

}  // namespace

Array2D ModeBasis::mode_image(std::size_t n) const {
  const auto col = modes.col(static_cast<Eigen::Index>(n));
  return Array2D(rows, cols, std::vector<double>(col.data(), col.data() + col.size()));
}

Array2D ModeBasis::mean_image() const {
  return Array2D(rows, cols, std::vector<double>(mean.data(), mean.data() + mean.size()));
}

void ModeBasis::check_invariants(double norm_tol, double ortho_tol) const {
  if (static_cast<std::size_t>(modes.rows()) != dimension() || static_cast<std::size_t>(mean.size()) != dimension()) {
    throw Error("ModeBasis: vector length does not match grid");
  }
  if (eigenvalues.size() != size()) throw Error("ModeBasis: eigenvalue count does not match mode count");
  const Eigen::MatrixXd gram = modes.transpose() * modes;
  for (Eigen::Index i = 0; i < gram.rows(); ++i) {
    if (std::abs(std::sqrt(gram(i, i)) - 1.0) > norm_tol) throw Error("ModeBasis: mode is not unit norm");
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(gram(i, j)) > ortho_tol) throw Error("ModeBasis: modes are not orthogonal");
    }
  }
  for (std::size_t i = 0; i < eigenvalues.size(); ++i) {
    if (eigenvalues[i] < 0.0) throw Error("ModeBasis: negative eigenvalue");
    if (i > 0 && eigenvalues[i] > eigenvalues[i - 1]) throw Error("ModeBasis: eigenvalues not descending");
  }
}

void orthonormalize(Eigen::MatrixXd& columns) {
  for (Eigen::Index j = 0; j < columns.cols(); ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (Eigen::Index i = 0; i < j; ++i) {
        columns.col(j) -= columns.col(i).dot(columns.col(j)) * columns.col(i);
      }
    }
    const double norm = columns.col(j).norm();
    if (norm == 0.0) throw Error("orthonormalize: linearly dependent columns");
    columns.col(j) /= norm;
  }
}

std::vector<double> snapshot_spectrum(std::span<const Array2D> fields) {
  if (fields.size() < 2) throw InvalidArgument("snapshot_spectrum: need at least two fields");
  Eigen::VectorXd mean;
  const Eigen::MatrixXd x = centered_data(fields, mean);
  const Eigen::MatrixXd gram = (x.transpose() * x) / static_cast<double>(fields.size());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  std::vector<double> out(solver.eigenvalues().data(), solver.eigenvalues().data() + gram.rows());
  std::reverse(out.begin(), out.end());
  for (double& v : out) v = std::max(v, 0.0);
  return out;
}

ModeBasis learn_modes(std::span<const Array2D> fields, std::size_t n_modes) {
  if (n_modes < 1) throw InvalidArgument("learn_modes: need at least one mode");
  if (fields.size() < n_modes + 1) {
    throw InvalidArgument("learn_modes: need at least N+1 = " + std::to_string(n_modes + 1) + " fields, got " +
                          std::to_string(fields.size()));
  }

  ModeBasis basis;
  basis.rows = fields.front().rows();
  basis.cols = fields.front().cols();
  const Eigen::MatrixXd x = centered_data(fields, basis.mean);
  const auto n = static_cast<double>(fields.size());

  // Snapshot method: eigenvectors v of the n x n Gram matrix map to
  // covariance eigenvectors X'v with the same eigenvalues.
  const Eigen::MatrixXd gram = (x.transpose() * x) / n;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
  if (solver.info() != Eigen::Success) throw Error("learn_modes: eigendecomposition failed");
  const Eigen::VectorXd& evals = solver.eigenvalues();  // ascending
  const Eigen::Index count = evals.size();

  const double top = std::max(evals(count - 1), 0.0);
  const double rank_tol = top * 1e-12 * static_cast<double>(count);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < count; ++i) {
    if (evals(i) > rank_tol && evals(i) > 0.0) ++rank;
  }
  if (n_modes > rank) {
    throw InvalidArgument("learn_modes: N = " + std::to_string(n_modes) + " exceeds corpus rank " +
                          std::to_string(rank));
  }

  double total = 0.0;
  for (Eigen::Index i = 0; i < count; ++i) total += std::max(evals(i), 0.0);

  basis.modes.resize(x.rows(), static_cast<Eigen::Index>(n_modes));
  double captured = 0.0;
  for (std::size_t k = 0; k < n_modes; ++k) {
    const Eigen::Index idx = count - 1 - static_cast<Eigen::Index>(k);
    basis.eigenvalues.push_back(evals(idx));
    captured += evals(idx);
    basis.modes.col(static_cast<Eigen::Index>(k)) = x * solver.eigenvectors().col(idx);
  }
  orthonormalize(basis.modes);
  for (Eigen::Index k = 0; k < basis.modes.cols(); ++k) {
    Eigen::Index arg = 0;
    basis.modes.col(k).cwiseAbs().maxCoeff(&arg);
    if (basis.modes(arg, k) < 0.0) basis.modes.col(k) *= -1.0;
  }
  basis.explained_variance_ratio = total > 0.0 ? captured / total : 0.0;
  return basis;
}

WeightVector project(const ModeBasis& basis, const Array2D& field) {
  check_dims(basis, field.rows(), field.cols());
  const Eigen::Map<const Eigen::VectorXd> x(field.values().data(), static_cast<Eigen::Index>(field.size()));
  const Eigen::VectorXd w = basis.modes.transpose() * x;
  WeightVector out;
  out.w.assign(w.data(), w.data() + w.size());
  out.residual_norm = (x - basis.modes * w).norm();
  return out;
}

WeightVector project_centered(const ModeBasis& basis, const Array2D& field) {
  check_dims(basis, field.rows(), field.cols());
  Array2D centered = field;
  auto v = centered.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= basis.mean(static_cast<Eigen::Index>(i));
  return project(basis, centered);
}

Array2D reconstruct(const ModeBasis& basis, std::span<const double> w) {
  if (w.size() != basis.size()) {
    throw DimensionError("reconstruct: got " + std::to_string(w.size()) + " weights for " +
                         std::to_string(basis.size()) + " modes");
  }
  const Eigen::Map<const Eigen::VectorXd> wv(w.data(), static_cast<Eigen::Index>(w.size()));
  const Eigen::VectorXd x = basis.modes * wv;
  return Array2D(basis.rows, basis.cols, std::vector<double>(x.data(), x.data() + x.size()));
}

Array2D reconstruct_with_mean(const ModeBasis& basis, std::span<const double> w) {
  Array2D out = reconstruct(basis, w);
  auto v = out.values();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += basis.mean(static_cast<Eigen::Index>(i));
  return out;
}

void save_basis(const ModeBasis& basis, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest;
  manifest["n_modes"] = basis.size();
  manifest["m"] = basis.rows;
  manifest["l"] = basis.cols;
  manifest["eigenvalues"] = basis.eigenvalues;
  manifest["explained_variance_ratio"] = basis.explained_variance_ratio;
  std::ofstream(dir / "modes.json") << manifest.dump(2) << "\n";
  write_raster(dir / "mean.elas", basis.mean_image());
  for (std::size_t n = 0; n < basis.size(); ++n) write_raster(dir / mode_file(n), basis.mode_image(n));
}

ModeBasis load_basis(const std::filesystem::path& dir) {
  std::ifstream in(dir / "modes.json");
  if (!in) throw Error("cannot open '" + (dir / "modes.json").string() + "'");
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("modes.json: ") + e.what());
  }

  ModeBasis basis;
  try {
    basis.rows = manifest.at("m").get<std::size_t>();
    basis.cols = manifest.at("l").get<std::size_t>();
    basis.eigenvalues = manifest.at("eigenvalues").get<std::vector<double>>();
    basis.explained_variance_ratio = manifest.at("explained_variance_ratio").get<double>();
    const auto n = manifest.at("n_modes").get<std::size_t>();
    if (basis.eigenvalues.size() != n) throw FormatError("modes.json: eigenvalue count != n_modes");
    const auto dim = static_cast<Eigen::Index>(basis.rows * basis.cols);
    basis.modes.resize(dim, static_cast<Eigen::Index>(n));
    const auto load = [&](const std::string& name) {
      const Array2D a = read_raster(dir / name);
      if (a.rows() != basis.rows || a.cols() != basis.cols) throw FormatError(name + ": dimensions disagree with modes.json");
      return Eigen::Map<const Eigen::VectorXd>(a.values().data(), dim).eval();
    };
    basis.mean = load("mean.elas");
    for (std::size_t k = 0; k < n; ++k) basis.modes.col(static_cast<Eigen::Index>(k)) = load(mode_file(k));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("modes.json: ") + e.what());
  }
  orthonormalize(basis.modes);
  return basis;
}

}  // namespace elasto::modes
