#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "elasto/coarse.hpp"
#include "elasto/core.hpp"
#include "elasto/modes.hpp"
#include "elasto/refine.hpp"
#include "elasto/tde.hpp"

namespace elasto::select {

/// Fully connected network: ReLU on hidden layers, identity output.
/// Inputs are standardised with a per-feature affine map fitted at training.
class Mlp {
public:
  struct Layer {
    Eigen::MatrixXd weights;  // out x in
    Eigen::VectorXd bias;
  };

  Mlp() = default;
  /// He-initialised network with the given layer widths (input first).
  Mlp(std::vector<std::size_t> sizes, std::uint64_t seed);

  const std::vector<std::size_t>& sizes() const noexcept { return sizes_; }
  std::size_t input_size() const noexcept { return sizes_.empty() ? 0 : sizes_.front(); }
  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }

  std::vector<double>& input_mean() noexcept { return input_mean_; }
  std::vector<double>& input_scale() noexcept { return input_scale_; }
  const std::vector<double>& input_mean() const noexcept { return input_mean_; }
  const std::vector<double>& input_scale() const noexcept { return input_scale_; }

  /// Scalar output for one feature vector.
  double forward(std::span<const double> x) const;

  /// Outputs for a batch of standardised inputs (one column per sample).
  Eigen::RowVectorXd forward_batch(const Eigen::MatrixXd& standardized) const;

  /// Mean squared error over a batch of standardised inputs and its gradient,
  /// one entry per layer.
  double batch_gradient(const Eigen::MatrixXd& standardized, const Eigen::RowVectorXd& targets,
                        std::vector<Layer>& grads) const;

  /// Loss 0.5 * (forward(x) - target)^2 and its gradient with respect to every
  /// parameter, flattened in layer order (weights row-major, then bias).
  double loss_and_gradient(std::span<const double> x, double target, std::vector<double>& grad) const;

  std::size_t parameter_count() const;
  std::vector<double> parameters() const;
  void set_parameters(std::span<const double> flat);

  bool all_finite() const;

  std::vector<double> standardize(std::span<const double> x) const;

private:
  std::vector<std::size_t> sizes_;
  std::vector<Layer> layers_;
  std::vector<double> input_mean_;
  std::vector<double> input_scale_;
};

/// Hidden widths of the frame-pair classifier.
inline constexpr std::size_t kHiddenWidths[] = {256, 128, 64};

/// Input -> 256 -> 128 -> 64 -> 1.
Mlp make_classifier(std::size_t input_size, std::uint64_t seed);

struct LabeledInstance {
  WeightVector w;
  double ncc_true = 0.0;
  bool suitable = false;
};

LabeledInstance make_instance(WeightVector w, double ncc_true, double threshold = kSuitableNccThreshold);

struct TrainConfig {
  int epochs = 200;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 32;
  double validation_fraction = 0.2;
  std::uint64_t seed = 0;
  bool append_residual = false;  // add residual_norm as an extra feature
  std::size_t min_instances = 100;
};

struct MlpModel {
  Mlp network;
  bool uses_residual = false;
  int epochs = 0;
  double learning_rate = 0.0;
  std::vector<double> train_loss;       // mean squared error per epoch
  std::vector<double> validation_loss;  // mean squared error per epoch
  std::size_t train_count = 0;
  std::size_t validation_count = 0;

  double final_validation_loss() const { return validation_loss.empty() ? 0.0 : validation_loss.back(); }
};

class TrainingDiverged : public Error {
public:
  using Error::Error;
};

/// Feature vector fed to the network.
std::vector<double> features(const WeightVector& w, bool append_residual);

/// MSE regression of ncc_true with Adam. Instances are put in a canonical
/// order before the seeded split and shuffles, so the result does not depend
/// on the order they are passed in.
MlpModel train(std::vector<LabeledInstance> instances, const TrainConfig& cfg);

double predict(const MlpModel& model, const WeightVector& w);
bool classify(const MlpModel& model, const WeightVector& w, double threshold = kSuitableNccThreshold);

void save_model(const MlpModel& model, const std::filesystem::path& dir);
MlpModel load_model(const std::filesystem::path& dir);

struct LabelConfig {
  tde::DpConfig dp;
  refine::RefineConfig refine;
  double threshold = kSuitableNccThreshold;
};

struct LabelResult {
  bool valid = true;
  std::string error;  // set when the pipeline failed and valid is false
  LabeledInstance instance;
  coarse::CoarseResult coarse;
  refine::RefineResult refined;
};

/// Coarse estimate (features), refinement, warp and NCC against the first frame.
LabelResult label_pair(const RfFrame& first, const RfFrame& second, const modes::ModeBasis& basis,
                       const LabelConfig& cfg);

using PairScorer = std::function<double(const RfFrame& anchor, const RfFrame& candidate)>;

/// Candidate indices within `window / 2` frames either side of the anchor.
std::vector<std::size_t> candidate_indices(std::size_t count, std::size_t anchor, std::size_t window = 16);

/// Highest-scoring partner; ties go to the nearer frame, then the earlier index.
std::size_t select_best(const PairScorer& score, std::span<const RfFrame> frames, std::size_t anchor,
                        std::size_t window = 16);

/// Scores candidates by the predicted NCC of their coarse weight vector.
std::size_t select_best(const MlpModel& model, const modes::ModeBasis& basis, const tde::DpConfig& dp,
                        std::span<const RfFrame> frames, std::size_t anchor, std::size_t window = 16);

struct ClassifierMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  bool degenerate = false;  // no positive ground truth or no positive prediction
};

/// Accuracy and F1 = 2 PR / (P + R) from a confusion matrix.
ClassifierMetrics confusion_metrics(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn);

ClassifierMetrics eval_classifier(const MlpModel& model, std::span<const LabeledInstance> instances,
                                  double threshold = kSuitableNccThreshold);

}  // namespace elasto::select
