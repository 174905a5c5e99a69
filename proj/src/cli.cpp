#include "elasto/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>

#include "elasto/pipeline.hpp"
#include "elasto/raster.hpp"

namespace elasto::cli {
namespace {

using json = nlohmann::json;
namespace fs = std::filesystem;

struct DpOptions {
  std::size_t num_lines = 5;
  double alpha_dp = 0.2;
  int search_range = 0;  // 0: default, capped below m/4
  int lateral_search_range = 8;

  tde::DpConfig config(std::size_t rows) const {
    tde::DpConfig cfg;
    cfg.num_lines = num_lines;
    cfg.alpha_dp = alpha_dp;
    cfg.lateral_search_range = lateral_search_range;
    if (search_range > 0) {
      cfg.search_range = search_range;
      return cfg;
    }
    return pipeline::dp_for_frame(rows, cfg);
  }

  json to_json() const {
    return {{"num_lines", num_lines},
            {"alpha_dp", alpha_dp},
            {"search_range", search_range},
            {"lateral_search_range", lateral_search_range}};
  }
};

struct RefineOptions {
  refine::RefineConfig cfg;

  json to_json() const {
    return {{"alpha1", cfg.alpha1}, {"alpha2", cfg.alpha2},     {"beta1", cfg.beta1},
            {"beta2", cfg.beta2},   {"max_iters", cfg.max_iters}, {"step_tolerance", cfg.step_tolerance}};
  }
};

struct PhantomOptions {
  std::size_t rows = 128;
  std::size_t lines = 32;
  std::vector<std::string> inclusions;  // "row,col,radius,stiffness"

  sim::PhantomSpec spec() const {
    sim::PhantomSpec s;
    s.rows = rows;
    s.lines = lines;
    for (const auto& text : inclusions) {
      std::stringstream in(text);
      std::vector<double> v;
      std::string item;
      while (std::getline(in, item, ',')) v.push_back(std::stod(item));
      if (v.size() != 4) throw InvalidArgument("--inclusion expects row,col,radius,stiffness");
      s.inclusions.push_back({v[0], v[1], v[2], v[3]});
    }
    s.validate();
    return s;
  }

  json to_json() const { return {{"rows", rows}, {"lines", lines}, {"inclusions", inclusions}}; }
};

// Collects outputs of one run and writes the manifest last.
class Run {
public:
  Run(std::string command, std::vector<std::string> argv) : command_(std::move(command)), argv_(std::move(argv)) {}

  void set_out(const fs::path& dir) { out_ = dir; }
  const fs::path& out() const { return out_; }
  json& config() { return config_; }
  json& results() { return results_; }

  void prepare() { fs::create_directories(out_); }

  void raster(const std::string& name, const Array2D& a) {
    write_raster(out_ / name, a);
    outputs_.push_back(name);
  }

  void write_json(const std::string& name, const json& j) {
    std::ofstream f(out_ / name);
    if (!f) throw Error("cannot write '" + (out_ / name).string() + "'");
    f << j.dump(2) << "\n";
    outputs_.push_back(name);
  }

  void record(const std::string& name) { outputs_.push_back(name); }

  void manifest(const std::string& status, const std::string& error = {}) {
    if (out_.empty() || !fs::exists(out_)) return;
    json m;
    m["tool"] = "elasto";
    m["command"] = command_;
    m["argv"] = argv_;
    m["seed"] = config_.value("seed", std::uint64_t{0});
    m["config"] = config_;
    m["results"] = results_;
    m["outputs"] = outputs_;
    m["status"] = status;
    if (!error.empty()) m["error"] = error;
    m["versions"] = {{"elasto", kVersion},
                     {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                   std::to_string(EIGEN_MINOR_VERSION)},
                     {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                           std::to_string(NLOHMANN_JSON_VERSION_PATCH)},
                     {"cli11", CLI11_VERSION}};
    std::ofstream f(out_ / "manifest.json");
    f << m.dump(2) << "\n";
  }

private:
  std::string command_;
  std::vector<std::string> argv_;
  fs::path out_;
  json config_ = json::object();
  json results_ = json::object();
  std::vector<std::string> outputs_;
};

RfFrame load_frame(const std::string& path) {
  RfFrame f;
  f.samples = read_raster(path);
  f.frame_id = fs::path(path).filename().string();
  f.validate();
  return f;
}

modes::ModeBasis first_modes(const modes::ModeBasis& basis, std::size_t n) {
  if (n < 1 || n > basis.size()) {
    throw InvalidArgument("basis has " + std::to_string(basis.size()) + " modes, " + std::to_string(n) + " requested");
  }
  if (n == basis.size()) return basis;
  modes::ModeBasis out = basis;
  out.modes = basis.modes.leftCols(static_cast<Eigen::Index>(n));
  out.eigenvalues.resize(n);
  const double all = std::accumulate(basis.eigenvalues.begin(), basis.eigenvalues.end(), 0.0);
  const double kept = std::accumulate(out.eigenvalues.begin(), out.eigenvalues.end(), 0.0);
  out.explained_variance_ratio = all > 0 ? basis.explained_variance_ratio * kept / all : 0.0;
  return out;
}

json weights_json(const WeightVector& w) { return {{"w", w.w}, {"residual_norm", w.residual_norm}}; }

Window parse_window(const std::string& text) {
  std::stringstream in(text);
  std::vector<std::size_t> v;
  std::string item;
  while (std::getline(in, item, ',')) v.push_back(static_cast<std::size_t>(std::stoul(item)));
  if (v.size() != 4) throw InvalidArgument("window must be row,col,rows,cols");
  return {v[0], v[1], v[2], v[3]};
}

double rms_diff(const Array2D& a, const Array2D& b) {
  double s = 0;
  for (std::size_t k = 0; k < a.size(); ++k) s += std::pow(a.values()[k] - b.values()[k], 2);
  return std::sqrt(s / static_cast<double>(a.size()));
}

void add_dp_options(CLI::App* app, DpOptions& o) {
  app->add_option("--num-lines", o.num_lines, "RF lines given to DP in the coarse stage")->capture_default_str();
  app->add_option("--alpha-dp", o.alpha_dp, "DP transition weight")->capture_default_str()->check(CLI::NonNegativeNumber);
  app->add_option("--search-range", o.search_range, "DP search range in samples (default: 32, capped below m/4)");
  app->add_option("--lateral-search-range", o.lateral_search_range, "lateral DP search range in lines")
      ->capture_default_str();
}

void add_refine_options(CLI::App* app, RefineOptions& o) {
  app->add_option("--alpha1", o.cfg.alpha1)->capture_default_str()->check(CLI::NonNegativeNumber);
  app->add_option("--alpha2", o.cfg.alpha2)->capture_default_str()->check(CLI::NonNegativeNumber);
  app->add_option("--beta1", o.cfg.beta1)->capture_default_str()->check(CLI::NonNegativeNumber);
  app->add_option("--beta2", o.cfg.beta2)->capture_default_str()->check(CLI::NonNegativeNumber);
  app->add_option("--max-iters", o.cfg.max_iters)->capture_default_str()->check(CLI::PositiveNumber);
  app->add_option("--step-tolerance", o.cfg.step_tolerance)->capture_default_str();
}

void add_phantom_options(CLI::App* app, PhantomOptions& o) {
  app->add_option("--rows", o.rows, "axial samples per line")->capture_default_str();
  app->add_option("--lines", o.lines, "RF lines")->capture_default_str();
  app->add_option("--inclusion", o.inclusions, "row,col,radius,relative_stiffness (repeatable)");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

int run(int argc, const char* const* argv) {
  CLI::App app{"Displacement and strain estimation for ultrasound RF frame pairs"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string out;
  std::uint64_t seed = 0;
  DpOptions dpo;
  RefineOptions rfo;
  PhantomOptions pho;
  std::size_t num_modes = 12;
  double ncc_threshold = kSuitableNccThreshold;
  std::size_t window = 16;
  int strain_window = 43;

  const auto add_out = [&](CLI::App* sub) { sub->add_option("--out", out, "output directory")->required(); };
  const auto add_seed = [&](CLI::App* sub) { sub->add_option("--seed", seed, "seed for all randomness")->capture_default_str(); };
  const auto add_threshold = [&](CLI::App* sub) {
    sub->add_option("--ncc-threshold", ncc_threshold, "suitability threshold on NCC")->capture_default_str();
  };

  // simulate
  auto* simulate = app.add_subcommand("simulate", "render a phantom frame pair and its oracle displacement");
  std::string kind = "axial_compression";
  double magnitude = 0.02;
  double axial_strain = 0.0;
  add_out(simulate);
  add_seed(simulate);
  add_phantom_options(simulate, pho);
  simulate->add_option("--kind", kind)
      ->capture_default_str()
      ->check(CLI::IsMember({"axial_compression", "in_plane_rotation", "lateral_shift", "out_of_plane"}));
  simulate->add_option("--magnitude", magnitude)->capture_default_str();
  simulate->add_option("--axial-strain", axial_strain, "compression added to non-compression kinds")->capture_default_str();

  // learn-modes
  auto* learn = app.add_subcommand("learn-modes", "learn principal displacement modes");
  std::size_t corpus_size = 200;
  std::vector<std::string> field_files;
  add_out(learn);
  add_seed(learn);
  add_phantom_options(learn, pho);
  add_dp_options(learn, dpo);
  add_refine_options(learn, rfo);
  learn->add_option("--num-modes", num_modes)->capture_default_str()->check(CLI::PositiveNumber);
  learn->add_option("--corpus-size", corpus_size, "simulated training fields")->capture_default_str();
  learn->add_option("--fields", field_files, "learn from these axial displacement rasters instead")
      ->check(CLI::ExistingFile);

  // estimate
  auto* estimate = app.add_subcommand("estimate", "estimate displacement (and strain) for a frame pair");
  std::string first_path, second_path, modes_dir, stage = "strain", init = "pca";
  add_out(estimate);
  add_dp_options(estimate, dpo);
  add_refine_options(estimate, rfo);
  estimate->add_option("--first", first_path)->required()->check(CLI::ExistingFile);
  estimate->add_option("--second", second_path)->required()->check(CLI::ExistingFile);
  estimate->add_option("--modes", modes_dir, "mode basis directory")->check(CLI::ExistingDirectory);
  estimate->add_option("--stage", stage)->capture_default_str()->check(CLI::IsMember({"dp", "coarse", "refined", "strain"}));
  estimate->add_option("--init", init, "refinement initialisation")->capture_default_str()->check(CLI::IsMember({"pca", "dp"}));
  estimate->add_option("--strain-window", strain_window)->capture_default_str();

  // label
  auto* label = app.add_subcommand("label", "label a frame pair by refined-warp NCC");
  add_out(label);
  add_dp_options(label, dpo);
  add_refine_options(label, rfo);
  add_threshold(label);
  label->add_option("--first", first_path)->required()->check(CLI::ExistingFile);
  label->add_option("--second", second_path)->required()->check(CLI::ExistingFile);
  label->add_option("--modes", modes_dir)->required()->check(CLI::ExistingDirectory);

  // train-classifier
  auto* train = app.add_subcommand("train-classifier", "simulate a labelled dataset and train the NCC regressor");
  std::size_t dataset_size = 600;
  double oop_fraction = 0.5;
  select::TrainConfig tcfg;
  add_out(train);
  add_seed(train);
  add_phantom_options(train, pho);
  add_dp_options(train, dpo);
  add_refine_options(train, rfo);
  add_threshold(train);
  train->add_option("--modes", modes_dir)->required()->check(CLI::ExistingDirectory);
  train->add_option("--dataset-size", dataset_size)->capture_default_str();
  train->add_option("--out-of-plane-fraction", oop_fraction)->capture_default_str()->check(CLI::Range(0.0, 1.0));
  train->add_option("--epochs", tcfg.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  train->add_option("--learning-rate", tcfg.learning_rate)->capture_default_str();
  train->add_option("--batch-size", tcfg.batch_size)->capture_default_str();
  train->add_flag("--residual", tcfg.append_residual, "append the coarse residual norm as a feature");

  // select-frames
  auto* selectf = app.add_subcommand("select-frames", "choose the best partner for an anchor frame");
  std::string model_dir;
  std::vector<std::string> frame_files;
  std::size_t anchor = 0;
  add_out(selectf);
  add_dp_options(selectf, dpo);
  selectf->add_option("--model", model_dir)->required()->check(CLI::ExistingDirectory);
  selectf->add_option("--modes", modes_dir)->required()->check(CLI::ExistingDirectory);
  selectf->add_option("--frames", frame_files, "frame sequence in acquisition order")->required()->check(CLI::ExistingFile);
  selectf->add_option("--anchor", anchor)->required();
  selectf->add_option("--window", window)->capture_default_str()->check(CLI::PositiveNumber);

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "strain SNR/CNR and/or classifier metrics");
  std::string strain_path, target_text, background_text;
  std::size_t test_size = 150;
  add_out(evaluate);
  add_seed(evaluate);
  add_phantom_options(evaluate, pho);
  add_dp_options(evaluate, dpo);
  add_refine_options(evaluate, rfo);
  add_threshold(evaluate);
  evaluate->add_option("--strain", strain_path)->check(CLI::ExistingFile);
  evaluate->add_option("--target", target_text, "row,col,rows,cols");
  evaluate->add_option("--background", background_text, "row,col,rows,cols");
  evaluate->add_option("--model", model_dir)->check(CLI::ExistingDirectory);
  evaluate->add_option("--modes", modes_dir)->check(CLI::ExistingDirectory);
  evaluate->add_option("--test-size", test_size)->capture_default_str();
  evaluate->add_option("--out-of-plane-fraction", oop_fraction)->capture_default_str()->check(CLI::Range(0.0, 1.0));

  // sweep
  auto* sweep = app.add_subcommand("sweep", "strain images over N, p or compression level");
  std::string param;
  add_out(sweep);
  add_seed(sweep);
  add_phantom_options(sweep, pho);
  add_dp_options(sweep, dpo);
  add_refine_options(sweep, rfo);
  sweep->add_option("--param", param)->required()->check(CLI::IsMember({"N", "p", "compression"}));
  sweep->add_option("--modes", modes_dir, "basis with at least 24 modes (learned if omitted)")->check(CLI::ExistingDirectory);
  sweep->add_option("--corpus-size", corpus_size, "corpus size when learning the basis")->capture_default_str();
  sweep->add_option("--magnitude", magnitude, "compression of the swept pair")->capture_default_str();
  sweep->add_option("--strain-window", strain_window)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  if (sub == evaluate && strain_path.empty() && model_dir.empty()) {
    std::cerr << "evaluate: give --strain with --target/--background, or --model with --modes\n";
    return 2;
  }
  if (sub == evaluate && !strain_path.empty() && (target_text.empty() || background_text.empty())) {
    std::cerr << "evaluate: --strain needs --target and --background\n";
    return 2;
  }
  if (sub == evaluate && !model_dir.empty() && modes_dir.empty()) {
    std::cerr << "evaluate: --model needs --modes\n";
    return 2;
  }
  if (sub == estimate && modes_dir.empty() && (stage == "coarse" || ((stage == "refined" || stage == "strain") && init == "pca"))) {
    std::cerr << "estimate: --modes is required for the coarse stage and for --init pca\n";
    return 2;
  }

  Run run(sub->get_name(), std::vector<std::string>(argv, argv + argc));
  run.set_out(out);
  auto& cfg = run.config();
  cfg["seed"] = seed;
  cfg["dp"] = dpo.to_json();
  cfg["refine"] = rfo.to_json();

  try {
    run.prepare();
    if (sub == simulate) {
      cfg["phantom"] = pho.to_json();
      cfg["deformation"] = {{"kind", kind}, {"magnitude", magnitude}, {"axial_strain", axial_strain}};
      sim::DeformationSpec def;
      def.kind = sim::deformation_kind_from_string(kind);
      def.magnitude = magnitude;
      def.axial_strain = axial_strain;
      def.rng_seed = seed;
      const auto pair = sim::synthesize_pair(pho.spec(), def);
      run.raster("first.elas", pair.first.samples);
      run.raster("second.elas", pair.second.samples);
      run.raster("oracle_axial.elas", pair.oracle.axial);
      run.raster("oracle_lateral.elas", pair.oracle.lateral_or_zero());
    } else if (sub == learn) {
      cfg["num_modes"] = num_modes;
      std::vector<Array2D> fields;
      if (!field_files.empty()) {
        cfg["fields"] = field_files;
        for (const auto& f : field_files) fields.push_back(read_raster(f));
      } else {
        cfg["phantom"] = pho.to_json();
        cfg["corpus_size"] = corpus_size;
        pipeline::CorpusConfig cc;
        cc.phantom = pho.spec();
        cc.count = corpus_size;
        cc.seed = seed;
        cc.dp = dpo.config(pho.rows);
        cc.refine = rfo.cfg;
        fields = pipeline::training_corpus(cc);
      }
      const auto basis = modes::learn_modes(fields, num_modes);
      modes::save_basis(basis, run.out());
      run.record("modes.json");
      run.results()["explained_variance_ratio"] = basis.explained_variance_ratio;
      run.results()["eigenvalues"] = basis.eigenvalues;
      std::cout << "learned " << basis.size() << " modes, explained variance ratio "
                << basis.explained_variance_ratio << "\n";
    } else if (sub == estimate) {
      cfg["stage"] = stage;
      cfg["init"] = init;
      cfg["first"] = first_path;
      cfg["second"] = second_path;
      cfg["modes"] = modes_dir;
      cfg["strain_window"] = strain_window;
      const auto f1 = load_frame(first_path);
      const auto f2 = load_frame(second_path);
      const auto dp = dpo.config(f1.rows());
      if (stage == "dp") {
        const auto d = pipeline::full_dp_initial(f1, f2, dp);
        run.raster("dp_axial.elas", d.axial);
        run.raster("dp_lateral.elas", d.lateral_or_zero());
      } else {
        DisplacementField initial;
        if (init == "pca" || stage == "coarse") {
          const auto basis = modes::load_basis(modes_dir);
          const auto c = coarse::coarse_estimate(basis, f1, f2, dp);
          initial = c.field;
          if (stage == "coarse") {
            run.raster("coarse_axial.elas", c.field.axial);
            run.raster("coarse_lateral.elas", c.field.lateral_or_zero());
            run.write_json("weights.json", weights_json(c.weights));
            run.results()["flags"] = c.field.flags;
          }
        } else {
          initial = pipeline::full_dp_initial(f1, f2, dp);
        }
        if (stage == "refined" || stage == "strain") {
          const auto r = refine::refine(f1, f2, initial, rfo.cfg);
          run.raster("refined_axial.elas", r.field.axial);
          run.raster("refined_lateral.elas", r.field.lateral_or_zero());
          run.results()["iterations"] = r.iterations;
          run.results()["converged"] = r.converged;
          run.results()["energy_history"] = r.energy_history;
          if (stage == "strain") run.raster("strain.elas", refine::strain(r.field, strain_window).strain);
        }
      }
    } else if (sub == label) {
      cfg["first"] = first_path;
      cfg["second"] = second_path;
      cfg["modes"] = modes_dir;
      cfg["ncc_threshold"] = ncc_threshold;
      const auto f1 = load_frame(first_path);
      const auto f2 = load_frame(second_path);
      select::LabelConfig lc{dpo.config(f1.rows()), rfo.cfg, ncc_threshold};
      const auto r = select::label_pair(f1, f2, modes::load_basis(modes_dir), lc);
      if (!r.valid) throw Error("labelling failed: " + r.error);
      run.write_json("label.json", {{"ncc", r.instance.ncc_true},
                                    {"suitable", r.instance.suitable},
                                    {"weights", weights_json(r.instance.w)}});
      std::cout << "NCC " << r.instance.ncc_true << (r.instance.suitable ? " suitable\n" : " unsuitable\n");
    } else if (sub == train) {
      cfg["phantom"] = pho.to_json();
      cfg["modes"] = modes_dir;
      cfg["dataset_size"] = dataset_size;
      cfg["out_of_plane_fraction"] = oop_fraction;
      cfg["ncc_threshold"] = ncc_threshold;
      cfg["train"] = {{"epochs", tcfg.epochs},
                      {"learning_rate", tcfg.learning_rate},
                      {"batch_size", tcfg.batch_size},
                      {"residual", tcfg.append_residual}};
      pipeline::DatasetConfig dc;
      dc.phantom = pho.spec();
      dc.count = dataset_size;
      dc.seed = seed;
      dc.out_of_plane_fraction = oop_fraction;
      dc.label = {dpo.config(pho.rows), rfo.cfg, ncc_threshold};
      const auto data = pipeline::labelled_dataset(modes::load_basis(modes_dir), dc);
      tcfg.seed = seed;
      const auto model = select::train(data.instances, tcfg);
      select::save_model(model, run.out());
      run.record("model.json");
      json instances = json::array();
      for (std::size_t k = 0; k < data.instances.size(); ++k) {
        instances.push_back({{"kind", sim::to_string(data.deformations[k].kind)},
                             {"magnitude", data.deformations[k].magnitude},
                             {"ncc", data.instances[k].ncc_true},
                             {"suitable", data.instances[k].suitable},
                             {"w", data.instances[k].w.w},
                             {"residual_norm", data.instances[k].w.residual_norm}});
      }
      run.write_json("dataset.json", instances);
      run.results()["invalid_pairs"] = data.invalid;
      run.results()["final_validation_mse"] = model.final_validation_loss();
      std::cout << "trained on " << model.train_count << " instances, validation MSE "
                << model.final_validation_loss() << "\n";
    } else if (sub == selectf) {
      cfg["frames"] = frame_files;
      cfg["anchor"] = anchor;
      cfg["window"] = window;
      cfg["model"] = model_dir;
      cfg["modes"] = modes_dir;
      std::vector<RfFrame> frames;
      for (const auto& f : frame_files) frames.push_back(load_frame(f));
      if (anchor >= frames.size()) throw InvalidArgument("--anchor beyond the frame sequence");
      const auto model = select::load_model(model_dir);
      const auto basis = modes::load_basis(modes_dir);
      const auto dp = dpo.config(frames.front().rows());
      json scores = json::array();
      for (auto c : select::candidate_indices(frames.size(), anchor, window)) {
        const auto est = coarse::coarse_axial(basis, frames[anchor], frames[c], dp);
        scores.push_back({{"index", c}, {"predicted_ncc", select::predict(model, est.weights)}});
      }
      const auto best = select::select_best(model, basis, dp, frames, anchor, window);
      run.write_json("selection.json", {{"anchor", anchor}, {"partner", best}, {"candidates", scores}});
      std::cout << "anchor " << anchor << " -> partner " << best << "\n";
    } else if (sub == evaluate) {
      if (!strain_path.empty()) {
        cfg["strain"] = strain_path;
        cfg["target"] = target_text;
        cfg["background"] = background_text;
        const auto q = refine::snr_cnr(read_raster(strain_path), parse_window(target_text), parse_window(background_text));
        run.results()["snr"] = q.snr_saturated ? json(nullptr) : json(q.snr);
        run.results()["cnr"] = q.cnr_saturated ? json(nullptr) : json(q.cnr);
        run.results()["snr_saturated"] = q.snr_saturated;
        run.results()["cnr_saturated"] = q.cnr_saturated;
        std::cout << "SNR " << q.snr << (q.snr_saturated ? " (saturated)" : "") << "  CNR " << q.cnr
                  << (q.cnr_saturated ? " (saturated)" : "") << "\n";
      }
      if (!model_dir.empty()) {
        cfg["model"] = model_dir;
        cfg["modes"] = modes_dir;
        cfg["test_size"] = test_size;
        cfg["phantom"] = pho.to_json();
        pipeline::DatasetConfig dc;
        dc.phantom = pho.spec();
        dc.count = test_size;
        dc.seed = seed;
        dc.out_of_plane_fraction = oop_fraction;
        dc.label = {dpo.config(pho.rows), rfo.cfg, ncc_threshold};
        const auto data = pipeline::labelled_dataset(modes::load_basis(modes_dir), dc);
        const auto m = select::eval_classifier(select::load_model(model_dir), data.instances, ncc_threshold);
        run.results()["classifier"] = {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall},
                                       {"f1", m.f1}, {"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn},
                                       {"degenerate", m.degenerate}};
        std::cout << "accuracy " << m.accuracy << "  F1 " << m.f1 << "\n";
      }
      run.write_json("metrics.json", run.results());
    } else if (sub == sweep) {
      cfg["param"] = param;
      cfg["phantom"] = pho.to_json();
      cfg["magnitude"] = magnitude;
      cfg["strain_window"] = strain_window;
      modes::ModeBasis basis;
      if (!modes_dir.empty()) {
        cfg["modes"] = modes_dir;
        basis = modes::load_basis(modes_dir);
      } else {
        cfg["corpus_size"] = corpus_size;
        pipeline::CorpusConfig cc;
        cc.phantom = pho.spec();
        cc.count = corpus_size;
        cc.seed = seed + 1;
        cc.dp = dpo.config(pho.rows);
        cc.refine = rfo.cfg;
        basis = modes::learn_modes(pipeline::training_corpus(cc), 24);
      }
      std::vector<double> values;
      if (param == "N") values = {6, 12, 24};
      if (param == "p") values = {2, 5, 10};
      if (param == "compression") values = {0.01, 0.03, 0.06};

      std::vector<Array2D> strains;
      json entries = json::array();
      for (double v : values) {
        sim::DeformationSpec def;
        def.magnitude = param == "compression" ? v : magnitude;
        def.rng_seed = seed;
        const auto pair = sim::synthesize_pair(pho.spec(), def);
        DpOptions o = dpo;
        std::size_t n = 12;
        if (param == "p") o.num_lines = static_cast<std::size_t>(v);
        if (param == "N") n = static_cast<std::size_t>(v);
        const auto b = first_modes(basis, n);
        const auto c = coarse::coarse_estimate(b, pair.first, pair.second, o.config(pho.rows));
        const auto r = refine::refine(pair.first, pair.second, c.field, rfo.cfg);
        const auto s = refine::strain(r.field, strain_window).strain;
        std::ostringstream name;
        name << "strain_" << param << "_" << v << ".elas";
        run.raster(name.str(), s);
        const auto truth = refine::strain(pair.oracle, strain_window).strain;
        entries.push_back({{"value", v},
                           {"file", name.str()},
                           {"coarse_rms_error", rms_diff(c.field.axial, pair.oracle.axial)},
                           {"refined_rms_error", rms_diff(r.field.axial, pair.oracle.axial)},
                           {"strain_rms_error", rms_diff(s, truth)}});
        strains.push_back(s);
      }
      json pairwise = json::array();
      for (std::size_t a = 0; a + 1 < strains.size(); ++a) {
        pairwise.push_back({{"a", values[a]}, {"b", values[a + 1]}, {"rms_difference", rms_diff(strains[a], strains[a + 1])}});
      }
      run.results()["runs"] = entries;
      run.results()["pairwise"] = pairwise;
      run.write_json("sweep.json", run.results());
      for (const auto& p : pairwise) {
        std::cout << param << " " << p["a"].get<double>() << " vs " << p["b"].get<double>() << ": strain RMS difference "
                  << p["rms_difference"].get<double>() << "\n";
      }
    }
    run.manifest("ok");
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    run.manifest("failed", e.what());
    return 1;
  }
  return 0;
}

}  // namespace elasto::cli
