#include "elasto/select.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "elasto/raster.hpp"

namespace elasto::select {
namespace {

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

struct AdamState {
  std::vector<Mlp::Layer> m;
  std::vector<Mlp::Layer> v;
};

std::vector<Mlp::Layer> zeros_like(const std::vector<Mlp::Layer>& layers) {
  std::vector<Mlp::Layer> out(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    out[i].weights = Eigen::MatrixXd::Zero(layers[i].weights.rows(), layers[i].weights.cols());
    out[i].bias = Eigen::VectorXd::Zero(layers[i].bias.size());
  }
  return out;
}

Eigen::MatrixXd standardized_matrix(const Mlp& net, const std::vector<std::vector<double>>& x,
                                    const std::vector<std::size_t>& idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(net.input_size()), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const auto s = net.standardize(x[idx[k]]);
    out.col(static_cast<Eigen::Index>(k)) = Eigen::Map<const Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
  }
  return out;
}

Eigen::RowVectorXd gather_targets(const std::vector<double>& t, const std::vector<std::size_t>& idx) {
  Eigen::RowVectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = t[idx[k]];
  return out;
}

double mse(const Mlp& net, const Eigen::MatrixXd& x, const Eigen::RowVectorXd& t) {
  if (t.size() == 0) return 0.0;
  return (net.forward_batch(x) - t).squaredNorm() / static_cast<double>(t.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Mlp

Mlp::Mlp(std::vector<std::size_t> sizes, std::uint64_t seed) : sizes_(std::move(sizes)) {
  if (sizes_.size() < 2 || sizes_.back() != 1) throw InvalidArgument("Mlp: need >= 2 layers ending in one output");
  for (auto s : sizes_) {
    if (s == 0) throw InvalidArgument("Mlp: zero-width layer");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    const auto in = static_cast<Eigen::Index>(sizes_[l]);
    const auto out = static_cast<Eigen::Index>(sizes_[l + 1]);
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(in)));
    Layer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = dist(rng);
    }
    layers_.push_back(std::move(layer));
  }
  input_mean_.assign(sizes_.front(), 0.0);
  input_scale_.assign(sizes_.front(), 1.0);
}

std::vector<double> Mlp::standardize(std::span<const double> x) const {
  if (x.size() != input_size()) {
    throw DimensionError("Mlp: expected " + std::to_string(input_size()) + " features, got " + std::to_string(x.size()));
  }
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) throw InvalidArgument("Mlp: non-finite feature");
    out[i] = (x[i] - input_mean_[i]) / input_scale_[i];
  }
  return out;
}

Eigen::RowVectorXd Mlp::forward_batch(const Eigen::MatrixXd& standardized) const {
  Eigen::MatrixXd a = standardized;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weights * a;
    z.colwise() += layers_[l].bias;
    a = l + 1 < layers_.size() ? relu(z) : z;
  }
  return a.row(0);
}

double Mlp::forward(std::span<const double> x) const {
  const auto s = standardize(x);
  const Eigen::Map<const Eigen::VectorXd> col(s.data(), static_cast<Eigen::Index>(s.size()));
  return forward_batch(col)(0);
}

double Mlp::batch_gradient(const Eigen::MatrixXd& standardized, const Eigen::RowVectorXd& targets,
                           std::vector<Layer>& grads) const {
  const auto batch = static_cast<double>(standardized.cols());
  std::vector<Eigen::MatrixXd> acts{standardized};
  std::vector<Eigen::MatrixXd> pre;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    Eigen::MatrixXd z = layers_[l].weights * acts.back();
    z.colwise() += layers_[l].bias;
    acts.push_back(l + 1 < layers_.size() ? relu(z) : z);
    pre.push_back(std::move(z));
  }
  const Eigen::RowVectorXd err = acts.back().row(0) - targets;
  const double loss = err.squaredNorm() / batch;

  grads.resize(layers_.size());
  Eigen::MatrixXd delta = (2.0 / batch) * err;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    if (l + 1 < layers_.size()) delta = delta.cwiseProduct((pre[l].array() > 0.0).cast<double>().matrix());
    grads[l].weights = delta * acts[l].transpose();
    grads[l].bias = delta.rowwise().sum();
    if (l > 0) delta = layers_[l].weights.transpose() * delta;
  }
  return loss;
}

double Mlp::loss_and_gradient(std::span<const double> x, double target, std::vector<double>& grad) const {
  const auto s = standardize(x);
  const Eigen::Map<const Eigen::VectorXd> col(s.data(), static_cast<Eigen::Index>(s.size()));
  Eigen::RowVectorXd t(1);
  t(0) = target;
  std::vector<Layer> g;
  // batch_gradient returns (y - t)^2 with gradient 2 (y - t) dy; halve both.
  const double loss = 0.5 * batch_gradient(col, t, g);
  grad.clear();
  grad.reserve(parameter_count());
  for (const auto& layer : g) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) grad.push_back(0.5 * layer.weights(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) grad.push_back(0.5 * layer.bias(r));
  }
  return loss;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

std::vector<double> Mlp::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) out.push_back(layer.weights(r, c));
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) out.push_back(layer.bias(r));
  }
  return out;
}

void Mlp::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw DimensionError("Mlp: parameter count mismatch");
  std::size_t k = 0;
  for (auto& layer : layers_) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) layer.weights(r, c) = flat[k++];
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) layer.bias(r) = flat[k++];
  }
}

bool Mlp::all_finite() const {
  for (const auto& l : layers_) {
    if (!l.weights.allFinite() || !l.bias.allFinite()) return false;
  }
  return true;
}

Mlp make_classifier(std::size_t input_size, std::uint64_t seed) {
  std::vector<std::size_t> sizes{input_size};
  sizes.insert(sizes.end(), std::begin(kHiddenWidths), std::end(kHiddenWidths));
  sizes.push_back(1);
  return Mlp(std::move(sizes), seed);
}

// ---------------------------------------------------------------------------
// Training

LabeledInstance make_instance(WeightVector w, double ncc_true, double threshold) {
  return {std::move(w), ncc_true, ncc_true > threshold};
}

std::vector<double> features(const WeightVector& w, bool append_residual) {
  std::vector<double> out = w.w;
  if (append_residual) out.push_back(w.residual_norm);
  return out;
}

MlpModel train(std::vector<LabeledInstance> instances, const TrainConfig& cfg) {
  if (instances.size() < cfg.min_instances) {
    throw InvalidArgument("train: need at least " + std::to_string(cfg.min_instances) + " instances, got " +
                          std::to_string(instances.size()));
  }
  if (cfg.batch_size == 0 || cfg.epochs < 1 || !(cfg.learning_rate > 0.0)) throw InvalidArgument("train: bad config");

  std::vector<std::vector<double>> x;
  std::vector<double> t;
  for (const auto& inst : instances) {
    x.push_back(features(inst.w, cfg.append_residual));
    t.push_back(inst.ncc_true);
  }
  const std::size_t dim = x.front().size();
  for (const auto& f : x) {
    if (f.size() != dim) throw DimensionError("train: feature vectors differ in length");
  }

  // Canonical order makes the result independent of the caller's ordering.
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (x[a] != x[b]) return x[a] < x[b];
    return t[a] < t[b];
  });

  std::mt19937_64 rng(cfg.seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * static_cast<double>(order.size())));
  const std::vector<std::size_t> val_idx(order.begin(), order.begin() + static_cast<long>(n_val));
  std::vector<std::size_t> train_idx(order.begin() + static_cast<long>(n_val), order.end());

  MlpModel model;
  model.network = make_classifier(dim, cfg.seed);
  // Start from the constant function at the mean training target: a random
  // He-initialised head leaves an O(1) random component away from the training
  // points that the fit never removes.
  model.network.layers().back().weights.setZero();
  double target_mean = 0.0;
  for (auto i : train_idx) target_mean += t[i];
  model.network.layers().back().bias.setConstant(target_mean / static_cast<double>(train_idx.size()));
  model.uses_residual = cfg.append_residual;
  model.epochs = cfg.epochs;
  model.learning_rate = cfg.learning_rate;
  model.train_count = train_idx.size();
  model.validation_count = val_idx.size();

  // Feature standardisation fitted on the training split.
  auto& mean = model.network.input_mean();
  auto& scale = model.network.input_scale();
  for (std::size_t d = 0; d < dim; ++d) {
    double s = 0.0;
    for (auto i : train_idx) s += x[i][d];
    mean[d] = s / static_cast<double>(train_idx.size());
    double v = 0.0;
    for (auto i : train_idx) v += (x[i][d] - mean[d]) * (x[i][d] - mean[d]);
    const double sd = std::sqrt(v / static_cast<double>(train_idx.size()));
    scale[d] = sd > 1e-12 ? sd : 1.0;
  }

  const Eigen::MatrixXd x_train = standardized_matrix(model.network, x, train_idx);
  const Eigen::RowVectorXd t_train = gather_targets(t, train_idx);
  const Eigen::MatrixXd x_val = standardized_matrix(model.network, x, val_idx);
  const Eigen::RowVectorXd t_val = gather_targets(t, val_idx);

  auto& layers = model.network.layers();
  AdamState adam{zeros_like(layers), zeros_like(layers)};
  std::vector<Mlp::Layer> grads;
  std::vector<Eigen::Index> cols(train_idx.size());
  std::iota(cols.begin(), cols.end(), Eigen::Index{0});
  long step = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(cols.begin(), cols.end(), rng);
    for (std::size_t start = 0; start < cols.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(cols.size(), start + cfg.batch_size);
      const auto b = static_cast<Eigen::Index>(end - start);
      Eigen::MatrixXd xb(x_train.rows(), b);
      Eigen::RowVectorXd tb(b);
      for (Eigen::Index k = 0; k < b; ++k) {
        xb.col(k) = x_train.col(cols[start + static_cast<std::size_t>(k)]);
        tb(k) = t_train(cols[start + static_cast<std::size_t>(k)]);
      }
      model.network.batch_gradient(xb, tb, grads);

      ++step;
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      const auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
        param.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
      };
      for (std::size_t l = 0; l < layers.size(); ++l) {
        update(layers[l].weights, adam.m[l].weights, adam.v[l].weights, grads[l].weights);
        update(layers[l].bias, adam.m[l].bias, adam.v[l].bias, grads[l].bias);
      }
    }
    const double train_loss = mse(model.network, x_train, t_train);
    const double val_loss = val_idx.empty() ? train_loss : mse(model.network, x_val, t_val);
    model.train_loss.push_back(train_loss);
    model.validation_loss.push_back(val_loss);
    if (!std::isfinite(val_loss) || !std::isfinite(train_loss)) {
      throw TrainingDiverged("train: loss became non-finite at epoch " + std::to_string(epoch + 1) +
                             " (train " + std::to_string(train_loss) + ", validation " + std::to_string(val_loss) +
                             "); try a smaller learning rate");
    }
  }
  return model;
}

double predict(const MlpModel& model, const WeightVector& w) {
  return model.network.forward(features(w, model.uses_residual));
}

bool classify(const MlpModel& model, const WeightVector& w, double threshold) {
  return predict(model, w) > threshold;
}

// ---------------------------------------------------------------------------
// Model files

void save_model(const MlpModel& model, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json j;
  j["layer_sizes"] = model.network.sizes();
  j["input_mean"] = model.network.input_mean();
  j["input_scale"] = model.network.input_scale();
  j["uses_residual"] = model.uses_residual;
  j["epochs"] = model.epochs;
  j["learning_rate"] = model.learning_rate;
  j["train_loss"] = model.train_loss;
  j["validation_loss"] = model.validation_loss;
  j["train_count"] = model.train_count;
  j["validation_count"] = model.validation_count;
  std::ofstream(dir / "model.json") << j.dump(2) << "\n";

  const auto& layers = model.network.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& w = layers[l].weights;
    Array2D wa(static_cast<std::size_t>(w.rows()), static_cast<std::size_t>(w.cols()));
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) wa(static_cast<std::size_t>(r), static_cast<std::size_t>(c)) = w(r, c);
    }
    Array2D ba(static_cast<std::size_t>(layers[l].bias.size()), 1);
    for (Eigen::Index r = 0; r < layers[l].bias.size(); ++r) ba(static_cast<std::size_t>(r), 0) = layers[l].bias(r);
    write_raster(dir / ("layer_" + std::to_string(l) + "_weights.elas"), wa);
    write_raster(dir / ("layer_" + std::to_string(l) + "_bias.elas"), ba);
  }
}

MlpModel load_model(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw Error("cannot open '" + (dir / "model.json").string() + "'");
  MlpModel model;
  try {
    nlohmann::json j;
    in >> j;
    const auto sizes = j.at("layer_sizes").get<std::vector<std::size_t>>();
    model.network = Mlp(sizes, 0);
    model.network.input_mean() = j.at("input_mean").get<std::vector<double>>();
    model.network.input_scale() = j.at("input_scale").get<std::vector<double>>();
    if (model.network.input_mean().size() != sizes.front() || model.network.input_scale().size() != sizes.front()) {
      throw FormatError("model.json: standardisation length mismatch");
    }
    model.uses_residual = j.value("uses_residual", false);
    model.epochs = j.value("epochs", 0);
    model.learning_rate = j.value("learning_rate", 0.0);
    model.train_loss = j.value("train_loss", std::vector<double>{});
    model.validation_loss = j.value("validation_loss", std::vector<double>{});
    model.train_count = j.value("train_count", std::size_t{0});
    model.validation_count = j.value("validation_count", std::size_t{0});
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model.json: ") + e.what());
  }
  auto& layers = model.network.layers();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Array2D wa = read_raster(dir / ("layer_" + std::to_string(l) + "_weights.elas"));
    const Array2D ba = read_raster(dir / ("layer_" + std::to_string(l) + "_bias.elas"));
    auto& w = layers[l].weights;
    if (wa.rows() != static_cast<std::size_t>(w.rows()) || wa.cols() != static_cast<std::size_t>(w.cols()) ||
        ba.rows() != static_cast<std::size_t>(layers[l].bias.size()) || ba.cols() != 1) {
      throw FormatError("model layer " + std::to_string(l) + ": shape disagrees with layer_sizes");
    }
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = wa(static_cast<std::size_t>(r), static_cast<std::size_t>(c));
      layers[l].bias(r) = ba(static_cast<std::size_t>(r), 0);
    }
  }
  return model;
}

// ---------------------------------------------------------------------------
// Labelling and selection

LabelResult label_pair(const RfFrame& first, const RfFrame& second, const modes::ModeBasis& basis,
                       const LabelConfig& cfg) {
  LabelResult out;
  try {
    first.validate();
    second.validate();
    out.coarse = coarse::coarse_estimate(basis, first, second, cfg.dp);
    out.refined = refine::refine(first, second, out.coarse.field, cfg.refine);
    const auto warped = refine::warp(second.samples, out.refined.field);
    out.instance = make_instance(out.coarse.weights, refine::ncc(first.samples, warped), cfg.threshold);
  } catch (const Error& e) {
    out.valid = false;
    out.error = e.what();
  }
  return out;
}

std::vector<std::size_t> candidate_indices(std::size_t count, std::size_t anchor, std::size_t window) {
  if (anchor >= count) throw InvalidArgument("candidate_indices: anchor out of range");
  const std::size_t half = window / 2;
  const std::size_t lo = anchor >= half ? anchor - half : 0;
  const std::size_t hi = std::min(count - 1, anchor + half);
  std::vector<std::size_t> out;
  for (std::size_t i = lo; i <= hi; ++i) {
    if (i != anchor) out.push_back(i);
  }
  return out;
}

std::size_t select_best(const PairScorer& score, std::span<const RfFrame> frames, std::size_t anchor,
                        std::size_t window) {
  const auto candidates = candidate_indices(frames.size(), anchor, window);
  if (candidates.empty()) throw InvalidArgument("select_best: no candidate frames");
  const auto distance = [&](std::size_t i) { return i > anchor ? i - anchor : anchor - i; };
  std::size_t best = candidates.front();
  double best_score = score(frames[anchor], frames[best]);
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const std::size_t i = candidates[k];
    const double s = score(frames[anchor], frames[i]);
    // Candidates ascend, so an exact tie at equal distance keeps the earlier index.
    if (s > best_score || (s == best_score && distance(i) < distance(best))) {
      best = i;
      best_score = s;
    }
  }
  return best;
}

std::size_t select_best(const MlpModel& model, const modes::ModeBasis& basis, const tde::DpConfig& dp,
                        std::span<const RfFrame> frames, std::size_t anchor, std::size_t window) {
  const PairScorer scorer = [&](const RfFrame& a, const RfFrame& b) {
    return predict(model, coarse::coarse_axial(basis, a, b, dp).weights);
  };
  return select_best(scorer, frames, anchor, window);
}

ClassifierMetrics confusion_metrics(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn) {
  ClassifierMetrics m;
  m.tp = tp;
  m.fp = fp;
  m.fn = fn;
  m.tn = tn;
  const std::size_t total = tp + fp + fn + tn;
  if (total == 0) throw DegenerateInput("eval_classifier: no instances");
  m.accuracy = static_cast<double>(tp + tn) / static_cast<double>(total);
  m.degenerate = (tp + fn == 0) || (tp + fp == 0);
  m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
  m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
  m.f1 = m.precision + m.recall > 0.0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall) : 0.0;
  return m;
}

ClassifierMetrics eval_classifier(const MlpModel& model, std::span<const LabeledInstance> instances,
                                  double threshold) {
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& inst : instances) {
    const bool predicted = classify(model, inst.w, threshold);
    if (predicted && inst.suitable) ++tp;
    else if (predicted && !inst.suitable) ++fp;
    else if (!predicted && inst.suitable) ++fn;
    else ++tn;
  }
  return confusion_metrics(tp, fp, fn, tn);
}

}  // namespace elasto::select
