#ifndef DEELBO_EXPERIMENT_HPP
#define DEELBO_EXPERIMENT_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "deelbo/rff_regression.hpp"

namespace deelbo {

// Everything a run needs, deserialized from a JSON config file plus CLI
// overrides. Field names match the JSON keys one to one.
struct ExperimentConfig {
  std::string task;  // gen-regression | gen-classification | fit-rff |
                     // fit-gp | fit-classifier | compare-fig2 |
                     // lemma-sweep | kappa-sweep
  std::uint64_t seed = 0;
  std::string out_dir;

  // Data: an explicit CSV wins over generation.
  std::string dataset_path;
  std::string test_dataset_path;
  int n = 20;
  double noise_var = 0.01;
  double interval_lo = -2.0;
  double interval_hi = 2.0;
  int num_classes = 2;
  double class_spread = 0.5;
  double class_radius = 2.0;
  // Rotation of the generated class layout; the pretraining source task
  // always uses angle zero, so a nonzero value makes the target task a
  // rotated variant of the source.
  double class_angle = 0.0;

  // Model.
  int feature_count = 1024;
  double noise_std = 0.1;
  double init_length_scale = 1.0;
  double init_output_scale = 1.0;
  std::string kappa_policy = "data_emphasized";
  double custom_kappa = 1.0;
  int sample_count_train = 1;
  int sample_count_eval = 10;
  std::vector<double> learning_rates = {0.1, 0.01, 0.001, 0.0001};
  int epochs = 2000;

  // Sweeps and grids.
  std::vector<int> r_sweep = {64, 256, 1024, 4096};
  std::vector<double> kappa_sweep;       // empty: filled from D/N at run time
  std::vector<double> map_sigma_grid = {0.125, 0.25, 0.5, 1.0,
                                        2.0,   4.0,  8.0};

  // Classifier options.
  std::string classifier_model = "transfer";  // transfer | rff
  std::string method = "de_elbo";             // de_elbo | map_grid
  std::string prior_variant = "l2_sp";        // l2_zero | l2_sp | ptyl
  double initial_lambda = 1.0;
  double initial_tau = 1.0;
  int backbone_hidden = 16;
  int backbone_encode = 8;
  std::string ptyl_prior_path;  // optional JSON {sigma_diag, column_factors}
  std::vector<double> alpha_over_n = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 0.0};
  std::vector<double> beta_over_n = {1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 0.0};

  // Predictive grid.
  int grid_points = 200;
  double grid_lo = -3.0;
  double grid_hi = 3.0;

  void validate() const;
  std::string to_json() const;
  static ExperimentConfig from_json(const std::string& text);
};

struct SelectionEntry {
  double learning_rate = 0.0;
  double objective = 0.0;
  bool failed = false;
  std::string reason;
};

// The serialized result of one run. Round-trips through JSON exactly.
struct FitResultFile {
  std::map<std::string, double> eta;
  double mean_norm = 0.0;
  double sigma_q_sq = 0.0;
  ObjectiveBreakdown objective;
  std::vector<SelectionEntry> selection;
  std::map<std::string, double> metrics;
  std::vector<std::string> trace_files;

  std::string to_json() const;
  static FitResultFile from_json(const std::string& text);
  bool operator==(const FitResultFile& other) const;
};

// A completed run: the result plus every artifact keyed by file name
// (config echo, result JSON, trace CSVs, grid CSVs, datasets).
struct RunOutput {
  FitResultFile result;
  std::map<std::string, std::string> artifacts;
};

// Executes the configured task. Pure: identical configs produce
// byte-identical artifacts.
RunOutput run(const ExperimentConfig& config);

// Persists all artifacts into config.out_dir (created if needed).
void write_run(const RunOutput& output, const std::string& out_dir);

// Compares freshly computed artifacts against the files already on
// disk; returns the names of files that differ or are missing.
std::vector<std::string> check_run(const RunOutput& output,
                                   const std::string& out_dir);

// FNV-1a 64-bit digest used in check reports.
std::string content_digest(const std::string& content);

}  // namespace deelbo

#endif  // DEELBO_EXPERIMENT_HPP
