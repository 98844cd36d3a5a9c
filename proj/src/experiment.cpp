#include "deelbo/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "deelbo/classifier.hpp"
#include "deelbo/dataset.hpp"
#include "deelbo/engine.hpp"
#include "deelbo/gp.hpp"
#include "deelbo/problems.hpp"
#include "deelbo/rng.hpp"
#include "deelbo/unconstrained.hpp"

namespace deelbo {

namespace {

using nlohmann::json;

const std::set<std::string> kTasks = {
    "gen-regression", "gen-classification", "fit-rff",     "fit-gp",
    "fit-classifier", "compare-fig2",       "lemma-sweep", "kappa-sweep"};

template <typename T>
T get_field(const json& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw std::invalid_argument(std::string("config: field '") + key +
                                "' has an invalid value");
  }
}

std::string format_double(double value) {
  std::ostringstream out;
  out.precision(17);
  out << value;
  return out.str();
}

Eigen::VectorXd grid_points(const ExperimentConfig& config) {
  if (config.grid_points < 2)
    throw std::invalid_argument("config: field 'grid_points' must be >= 2");
  Eigen::VectorXd grid(config.grid_points);
  const double step = (config.grid_hi - config.grid_lo) /
                      static_cast<double>(config.grid_points - 1);
  for (int i = 0; i < config.grid_points; ++i)
    grid[i] = config.grid_lo + step * i;
  return grid;
}

std::string predictive_grid_csv(const Eigen::VectorXd& x,
                                const Eigen::VectorXd& mean,
                                const Eigen::VectorXd& variance) {
  std::ostringstream out;
  out << "x,mean,std\n";
  for (Eigen::Index i = 0; i < x.size(); ++i)
    out << format_double(x[i]) << ',' << format_double(mean[i]) << ','
        << format_double(std::sqrt(variance[i])) << '\n';
  return out.str();
}

double rmse(const Eigen::VectorXd& prediction, const Eigen::VectorXd& truth) {
  return std::sqrt((prediction - truth).squaredNorm() /
                   static_cast<double>(truth.size()));
}

RegressionData load_or_generate_regression(const ExperimentConfig& config) {
  if (!config.dataset_path.empty())
    return read_regression_csv(config.dataset_path);
  return generate_toy_regression(config.n, config.noise_var,
                                 stream_seed(config.seed, "data"),
                                 config.interval_lo, config.interval_hi);
}

ClassificationData load_or_generate_classification(
    const ExperimentConfig& config) {
  if (!config.dataset_path.empty())
    return read_classification_csv(config.dataset_path);
  return generate_toy_classification(
      config.n, config.num_classes, stream_seed(config.seed, "data"),
      config.class_spread, config.class_radius, config.class_angle);
}

TemperedObjectiveConfig engine_config(const ExperimentConfig& config) {
  TemperedObjectiveConfig engine;
  if (config.kappa_policy == "standard")
    engine.kappa_policy = TemperedObjectiveConfig::KappaPolicy::kStandard;
  else if (config.kappa_policy == "data_emphasized")
    engine.kappa_policy =
        TemperedObjectiveConfig::KappaPolicy::kDataEmphasized;
  else if (config.kappa_policy == "custom")
    engine.kappa_policy = TemperedObjectiveConfig::KappaPolicy::kCustom;
  else
    throw std::invalid_argument("config: field 'kappa_policy' must be "
                                "standard, data_emphasized, or custom");
  engine.custom_kappa = config.custom_kappa;
  engine.sample_count_train = config.sample_count_train;
  engine.sample_count_eval = config.sample_count_eval;
  engine.seed = config.seed;
  return engine;
}

std::vector<SelectionEntry> selection_from(const EngineFitResult& fit) {
  std::vector<SelectionEntry> entries;
  entries.reserve(fit.candidates.size());
  for (const auto& c : fit.candidates)
    entries.push_back(
        {c.learning_rate, c.failed ? 0.0 : c.eval.total, c.failed,
         c.failure_reason});
  return entries;
}

// Round-robin 4/5 - 1/5 split over shuffled row indices (regression has
// no classes to stratify).
std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> plain_split(
    Eigen::Index n, std::uint64_t seed) {
  std::vector<Eigen::Index> indices(n);
  for (Eigen::Index i = 0; i < n; ++i) indices[i] = i;
  Rng rng(seed);
  for (std::size_t j = indices.size(); j > 1; --j)
    std::swap(indices[j - 1], indices[rng.below(j)]);
  std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (j % 5 == 4)
      split.second.push_back(indices[j]);
    else
      split.first.push_back(indices[j]);
  }
  if (split.first.empty() || split.second.empty())
    throw std::invalid_argument("split: need at least 5 rows");
  std::sort(split.first.begin(), split.first.end());
  std::sort(split.second.begin(), split.second.end());
  return split;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& X,
                          const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(i) = X.row(rows[i]);
  return out;
}

Eigen::VectorXd take_entries(const Eigen::VectorXd& v,
                             const std::vector<Eigen::Index>& rows) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) out[i] = v[rows[i]];
  return out;
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

double gaussian_nll(const Eigen::VectorXd& prediction,
                    const Eigen::VectorXd& truth, double noise_std) {
  const double noise_var = noise_std * noise_std;
  return 0.5 * ((kLog2Pi + std::log(noise_var)) +
                (prediction - truth).squaredNorm() / noise_var /
                    static_cast<double>(truth.size()));
}

// MAP + grid-search baseline for RFF regression at a fixed length-scale:
// closed-form MAP weights per output-scale candidate, selection by
// held-out Gaussian NLL, refit on the merged data.
struct MapGsColumn {
  KernelParams params;
  Eigen::VectorXd weights;
  double validation_nll = 0.0;
};

MapGsColumn map_gs_regression(const RffFeatureMap& map, double length_scale,
                              const std::vector<double>& sigma_grid,
                              const RegressionData& data, double noise_std,
                              std::uint64_t split_seed) {
  if (sigma_grid.empty())
    throw std::invalid_argument("map_gs: output-scale grid is empty");
  const auto [train_rows, val_rows] = plain_split(data.X.rows(), split_seed);
  const Eigen::MatrixXd x_train = take_rows(data.X, train_rows);
  const Eigen::VectorXd y_train = take_entries(data.y, train_rows);
  const Eigen::MatrixXd x_val = take_rows(data.X, val_rows);
  const Eigen::VectorXd y_val = take_entries(data.y, val_rows);

  MapGsColumn best;
  bool have_best = false;
  for (double sigma_k : sigma_grid) {
    const KernelParams params{length_scale, sigma_k};
    const FeatureMatrix phi_train = featurize(map, params, x_train);
    const Eigen::VectorXd weights =
        exact_posterior(phi_train, y_train, noise_std).mean;
    const FeatureMatrix phi_val = featurize(map, params, x_val);
    const double nll =
        gaussian_nll(phi_val.values * weights, y_val, noise_std);
    // Value-based tie break keeps selection independent of grid order.
    if (!have_best || nll < best.validation_nll ||
        (nll == best.validation_nll && sigma_k < best.params.output_scale)) {
      best.params = params;
      best.validation_nll = nll;
      have_best = true;
    }
  }
  const FeatureMatrix phi_full = featurize(map, best.params, data.X);
  best.weights = exact_posterior(phi_full, data.y, noise_std).mean;
  return best;
}

// --- task implementations ---

RunOutput run_gen_regression(const ExperimentConfig& config) {
  RunOutput out;
  const RegressionData data = generate_toy_regression(
      config.n, config.noise_var, stream_seed(config.seed, "data"),
      config.interval_lo, config.interval_hi);
  out.artifacts["dataset.csv"] = regression_to_csv(data);
  out.result.metrics["n"] = static_cast<double>(data.X.rows());
  out.result.metrics["input_dim"] = static_cast<double>(data.X.cols());
  return out;
}

RunOutput run_gen_classification(const ExperimentConfig& config) {
  RunOutput out;
  const ClassificationData data = generate_toy_classification(
      config.n, config.num_classes, stream_seed(config.seed, "data"),
      config.class_spread, config.class_radius, config.class_angle);
  out.artifacts["dataset.csv"] = classification_to_csv(data);
  out.result.metrics["n"] = static_cast<double>(data.X.rows());
  out.result.metrics["num_classes"] =
      static_cast<double>(data.num_classes);
  return out;
}

RunOutput run_fit_rff(const ExperimentConfig& config) {
  RunOutput out;
  const RegressionData data = load_or_generate_regression(config);
  const RffFeatureMap map =
      sample_feature_map(data.X.cols(), config.feature_count,
                         stream_seed(config.seed, "feature-map"));
  const RffRegressionProblem problem(
      map, {config.init_length_scale, config.init_output_scale},
      config.noise_std, data.X, data.y);
  const EngineFitResult fit_result =
      fit(problem, engine_config(config), config.learning_rates,
          config.epochs);
  const CandidateResult& winner = fit_result.winner();
  const KernelParams learned = problem.kernel_from_eta(winner.eta);

  for (std::size_t i = 0; i < fit_result.candidates.size(); ++i) {
    const std::string name = "trace_candidate_" + std::to_string(i) + ".csv";
    out.artifacts[name] = trace_to_csv(fit_result.candidates[i].trace);
    out.result.trace_files.push_back(name);
  }

  out.result.eta["length_scale"] = learned.length_scale;
  out.result.eta["output_scale"] = learned.output_scale;
  out.result.mean_norm = winner.q.mean.norm();
  out.result.sigma_q_sq = winner.q.variance;
  out.result.objective = winner.eval;
  out.result.selection = selection_from(fit_result);

  const FeatureMatrix phi = featurize(map, learned, data.X);
  out.result.metrics["train_rmse"] =
      rmse(phi.values * winner.q.mean, data.y);
  out.result.metrics["log_marginal"] =
      log_marginal_likelihood(phi, data.y, config.noise_std);

  if (data.X.cols() == 1) {
    const Eigen::VectorXd grid = grid_points(config);
    const FeatureMatrix phi_star = featurize(map, learned, grid);
    const Predictive pred =
        predictive_posterior(winner.q, phi_star, config.noise_std);
    out.artifacts["predictive.csv"] =
        predictive_grid_csv(grid, pred.mean, pred.variance);
  }
  return out;
}

RunOutput run_fit_gp(const ExperimentConfig& config) {
  RunOutput out;
  const RegressionData data = load_or_generate_regression(config);
  const GpHyperFit hyper = gp_fit_hyperparams(
      data.X, data.y, {config.init_length_scale, config.init_output_scale},
      config.noise_std, config.learning_rates, config.epochs);

  for (std::size_t i = 0; i < hyper.candidates.size(); ++i) {
    const auto& c = hyper.candidates[i];
    std::ostringstream csv;
    csv << "step,log_marginal\n";
    for (std::size_t s = 0; s < c.objective.size(); ++s)
      csv << s << ',' << format_double(c.objective[s]) << '\n';
    const std::string name =
        "trace_gp_candidate_" + std::to_string(i) + ".csv";
    out.artifacts[name] = csv.str();
    out.result.trace_files.push_back(name);
  }

  out.result.eta["length_scale"] = hyper.params.length_scale;
  out.result.eta["output_scale"] = hyper.params.output_scale;
  const double log_ml =
      gp_log_marginal(data.X, data.y, {hyper.params, config.noise_std});
  out.result.objective = {log_ml, 0.0, 1.0, log_ml};
  for (const auto& c : hyper.candidates)
    out.result.selection.push_back(
        {c.learning_rate, c.failed ? 0.0 : c.final_objective, c.failed,
         c.failed ? "non-finite objective" : ""});
  out.result.metrics["final_grad_norm"] = hyper.final_grad_norm;

  const GpFit fit(GpModel{hyper.params, config.noise_std}, data.X, data.y);
  out.result.metrics["train_rmse"] =
      rmse(fit.predict(data.X).mean, data.y);
  if (data.X.cols() == 1) {
    const Eigen::VectorXd grid = grid_points(config);
    const GpFit::Prediction pred = fit.predict(grid);
    out.artifacts["predictive.csv"] =
        predictive_grid_csv(grid, pred.mean, pred.variance);
  }
  return out;
}

PriorSpec prior_spec_from(const ExperimentConfig& config, Eigen::Index f,
                          std::uint64_t seed) {
  PriorSpec spec;
  if (config.prior_variant == "l2_zero")
    spec.variant = PriorSpec::Variant::kL2Zero;
  else if (config.prior_variant == "l2_sp")
    spec.variant = PriorSpec::Variant::kL2Sp;
  else if (config.prior_variant == "ptyl")
    spec.variant = PriorSpec::Variant::kPtyl;
  else
    throw std::invalid_argument(
        "config: field 'prior_variant' must be l2_zero, l2_sp, or ptyl");
  spec.initial_lambda = config.initial_lambda;
  spec.initial_tau = config.initial_tau;
  if (spec.variant == PriorSpec::Variant::kPtyl) {
    if (!config.ptyl_prior_path.empty()) {
      const json j = json::parse(read_text_file(config.ptyl_prior_path));
      const auto diag = j.at("sigma_diag").get<std::vector<double>>();
      const auto cols = j.at("column_factors")
                            .get<std::vector<std::vector<double>>>();
      spec.sigma_diag = Eigen::Map<const Eigen::VectorXd>(
          diag.data(), static_cast<Eigen::Index>(diag.size()));
      if (cols.empty())
        throw std::invalid_argument("ptyl prior: empty column_factors");
      spec.column_factors.resize(static_cast<Eigen::Index>(cols.size()),
                                 static_cast<Eigen::Index>(cols[0].size()));
      for (std::size_t i = 0; i < cols.size(); ++i) {
        if (cols[i].size() != cols[0].size())
          throw std::invalid_argument("ptyl prior: ragged column_factors");
        for (std::size_t k = 0; k < cols[i].size(); ++k)
          spec.column_factors(static_cast<Eigen::Index>(i),
                              static_cast<Eigen::Index>(k)) = cols[i][k];
      }
    } else {
      // Stand-in for a source-task posterior: unit base covariance plus
      // a small random rank-3 component.
      Rng rng(stream_seed(seed, "ptyl-prior"));
      spec.sigma_diag = Eigen::VectorXd::Constant(f, 2.0);
      spec.column_factors = 0.1 * rng.normal_matrix(f, 3);
    }
  }
  return spec;
}

// Pretrains the backbone on a generated source task; stands in for
// source-task weights. Fixed schedule so the result depends only on the
// seed streams.
Eigen::VectorXd pretrain_backbone(const ToyBackbone& backbone,
                                  int num_classes, std::uint64_t seed,
                                  double spread, double radius) {
  const ClassificationData source = generate_toy_classification(
      200, num_classes, stream_seed(seed, "source-data"), spread, radius);
  Rng init_rng(stream_seed(seed, "init"));
  const Eigen::VectorXd init = backbone.random_weights(init_rng);
  const GaussianPrior zero_prior = GaussianPrior::scaled_identity(
      Eigen::VectorXd::Zero(backbone.weight_count()), 1.0);
  return fit_map_point(backbone, zero_prior, 1e-3, 1e-3, num_classes,
                       source.X, source.labels, 0.01, 800, init)
      .backbone;
}

RunOutput run_fit_classifier(const ExperimentConfig& config) {
  RunOutput out;
  const ClassificationData data = load_or_generate_classification(config);
  const int num_classes = data.num_classes;

  if (config.classifier_model == "rff") {
    const RffFeatureMap map =
        sample_feature_map(data.X.cols(), config.feature_count,
                           stream_seed(config.seed, "feature-map"));
    const RffClassifierProblem problem(
        map, {config.init_length_scale, config.init_output_scale},
        num_classes, data.X, data.labels);
    const EngineFitResult fit_result =
        fit(problem, engine_config(config), config.learning_rates,
            config.epochs);
    const CandidateResult& winner = fit_result.winner();
    const RffClassifier model = problem.model_from(winner.q, winner.eta);

    for (std::size_t i = 0; i < fit_result.candidates.size(); ++i) {
      const std::string name =
          "trace_candidate_" + std::to_string(i) + ".csv";
      out.artifacts[name] = trace_to_csv(fit_result.candidates[i].trace);
      out.result.trace_files.push_back(name);
    }
    out.result.eta["length_scale"] = model.kernel.length_scale;
    out.result.eta["output_scale"] = model.kernel.output_scale;
    out.result.mean_norm = winner.q.mean.norm();
    out.result.sigma_q_sq = winner.q.variance;
    out.result.objective = winner.eval;
    out.result.selection = selection_from(fit_result);

    const Eigen::MatrixXd probs = predict_point(model, data.X);
    out.result.metrics["train_accuracy"] = accuracy(probs, data.labels);
    out.result.metrics["train_nll"] = mean_nll(probs, data.labels);
    const Eigen::MatrixXd mc_probs = predict_mc(
        model, data.X, config.sample_count_eval,
        stream_seed(config.seed, "mc-eval", 1));
    out.result.metrics["train_accuracy_mc"] =
        accuracy(mc_probs, data.labels);
    return out;
  }

  if (config.classifier_model != "transfer")
    throw std::invalid_argument(
        "config: field 'classifier_model' must be transfer or rff");

  const ToyBackbone backbone(data.X.cols(), config.backbone_hidden,
                             config.backbone_encode);
  const Eigen::VectorXd pretrained =
      pretrain_backbone(backbone, num_classes, config.seed,
                        config.class_spread, config.class_radius);
  const PriorSpec spec =
      prior_spec_from(config, backbone.weight_count(), config.seed);

  if (config.method == "map_grid") {
    const double n = static_cast<double>(data.X.rows());
    MapGrid grids;
    for (double a : config.alpha_over_n) grids.alpha.push_back(a * n);
    for (double b : config.beta_over_n) grids.beta.push_back(b * n);
    const MapFitResult map_fit = fit_map_grid_search(
        backbone, spec.build_backbone_prior(pretrained), num_classes,
        data.X, data.labels, grids, config.learning_rates, config.epochs,
        stream_seed(config.seed, "split"));
    ToyTransferModel model{backbone, map_fit.backbone, map_fit.head, 1.0,
                           pretrained};
    const Eigen::MatrixXd probs = predict_point(model, data.X);
    out.result.eta["alpha"] = map_fit.winner.alpha;
    out.result.eta["beta"] = map_fit.winner.beta;
    out.result.mean_norm = map_fit.backbone.norm();
    out.result.metrics["train_accuracy"] = accuracy(probs, data.labels);
    out.result.metrics["train_nll"] = mean_nll(probs, data.labels);
    out.result.metrics["validation_nll"] = map_fit.winner.validation_nll;
    for (const auto& cell : map_fit.cells)
      out.result.selection.push_back(
          {cell.learning_rate, cell.failed ? 0.0 : -cell.validation_nll,
           cell.failed, cell.failed ? "cell failed" : ""});
    if (!config.test_dataset_path.empty()) {
      const ClassificationData test =
          read_classification_csv(config.test_dataset_path);
      const Eigen::MatrixXd test_probs = predict_point(model, test.X);
      out.result.metrics["test_accuracy"] = accuracy(test_probs, test.labels);
      out.result.metrics["test_nll"] = mean_nll(test_probs, test.labels);
    }
    return out;
  }
  if (config.method != "de_elbo")
    throw std::invalid_argument(
        "config: field 'method' must be de_elbo or map_grid");

  const ClassifierFit fit_result = fit_de_elbo_classifier(
      backbone, pretrained, spec, data.X, data.labels, num_classes,
      engine_config(config), config.learning_rates, config.epochs);
  const CandidateResult& winner = fit_result.engine.winner();

  for (std::size_t i = 0; i < fit_result.engine.candidates.size(); ++i) {
    const std::string name = "trace_candidate_" + std::to_string(i) + ".csv";
    out.artifacts[name] = trace_to_csv(fit_result.engine.candidates[i].trace);
    out.result.trace_files.push_back(name);
  }
  out.result.eta["lambda"] = winner.scales.lambda;
  out.result.eta["tau"] = winner.scales.tau;
  out.result.mean_norm = winner.q.mean.norm();
  out.result.sigma_q_sq = winner.q.variance;
  out.result.objective = winner.eval;
  out.result.selection = selection_from(fit_result.engine);

  const Eigen::MatrixXd probs = predict_point(fit_result.model, data.X);
  out.result.metrics["train_accuracy"] = accuracy(probs, data.labels);
  out.result.metrics["train_nll"] = mean_nll(probs, data.labels);
  const Eigen::MatrixXd mc_probs =
      predict_mc(fit_result.model, data.X, config.sample_count_eval,
                 stream_seed(config.seed, "mc-eval", 1));
  out.result.metrics["train_accuracy_mc"] = accuracy(mc_probs, data.labels);
  if (!config.test_dataset_path.empty()) {
    const ClassificationData test =
        read_classification_csv(config.test_dataset_path);
    const Eigen::MatrixXd test_probs =
        predict_point(fit_result.model, test.X);
    out.result.metrics["test_accuracy"] = accuracy(test_probs, test.labels);
    out.result.metrics["test_nll"] = mean_nll(test_probs, test.labels);
  }
  return out;
}

RunOutput run_compare_fig2(const ExperimentConfig& config) {
  RunOutput out;
  const RegressionData data = load_or_generate_regression(config);
  if (data.X.cols() != 1)
    throw std::invalid_argument("compare-fig2: needs univariate inputs");
  const Eigen::VectorXd grid = grid_points(config);
  const RffFeatureMap map =
      sample_feature_map(1, config.feature_count,
                         stream_seed(config.seed, "feature-map"));

  // Columns (a), (b): MAP + grid search at fixed length-scales.
  struct NamedColumn {
    std::string file;
    Eigen::VectorXd mean;
  };
  std::vector<NamedColumn> columns;
  for (const auto& [tag, fixed_length] :
       std::vector<std::pair<std::string, double>>{{"map_ls1", 1.0},
                                                   {"map_ls20", 20.0}}) {
    const MapGsColumn column = map_gs_regression(
        map, fixed_length, config.map_sigma_grid, data, config.noise_std,
        stream_seed(config.seed, "split"));
    const FeatureMatrix phi_star = featurize(map, column.params, grid);
    const Eigen::VectorXd mean = phi_star.values * column.weights;
    const Eigen::VectorXd variance = Eigen::VectorXd::Constant(
        grid.size(), config.noise_std * config.noise_std);
    out.artifacts["fig2_" + tag + ".csv"] =
        predictive_grid_csv(grid, mean, variance);
    out.result.metrics[tag + "_output_scale"] = column.params.output_scale;
    columns.push_back({tag, mean});
  }

  // Columns (c), (d): ELBo and DE-ELBo learned RFF fits.
  const RffRegressionProblem problem(
      map, {config.init_length_scale, config.init_output_scale},
      config.noise_std, data.X, data.y);
  struct VariationalColumn {
    std::string tag;
    TemperedObjectiveConfig::KappaPolicy policy;
    EngineFitResult fit;
  };
  std::vector<VariationalColumn> vfits;
  for (const auto& [tag, policy] :
       std::vector<std::pair<std::string,
                             TemperedObjectiveConfig::KappaPolicy>>{
           {"elbo", TemperedObjectiveConfig::KappaPolicy::kStandard},
           {"de_elbo",
            TemperedObjectiveConfig::KappaPolicy::kDataEmphasized}}) {
    TemperedObjectiveConfig cfg = engine_config(config);
    cfg.kappa_policy = policy;
    vfits.push_back(
        {tag, policy, fit(problem, cfg, config.learning_rates, config.epochs)});
  }

  Eigen::VectorXd elbo_mean, de_mean;
  for (const auto& column : vfits) {
    const CandidateResult& winner = column.fit.winner();
    const KernelParams learned = problem.kernel_from_eta(winner.eta);
    const FeatureMatrix phi_star = featurize(map, learned, grid);
    const Predictive pred =
        predictive_posterior(winner.q, phi_star, config.noise_std);
    out.artifacts["fig2_" + column.tag + ".csv"] =
        predictive_grid_csv(grid, pred.mean, pred.variance);
    out.result.metrics[column.tag + "_length_scale"] = learned.length_scale;
    out.result.metrics[column.tag + "_output_scale"] = learned.output_scale;
    out.result.metrics[column.tag + "_sigma_q_sq"] = winner.q.variance;
    for (std::size_t i = 0; i < column.fit.candidates.size(); ++i) {
      const std::string name =
          "trace_" + column.tag + "_candidate_" + std::to_string(i) + ".csv";
      out.artifacts[name] = trace_to_csv(column.fit.candidates[i].trace);
      out.result.trace_files.push_back(name);
    }
    if (column.tag == "elbo")
      elbo_mean = pred.mean;
    else
      de_mean = pred.mean;
  }

  // Column (e): exact GP oracle with marginal-likelihood learning.
  const GpHyperFit hyper = gp_fit_hyperparams(
      data.X, data.y, {config.init_length_scale, config.init_output_scale},
      config.noise_std, config.learning_rates, config.epochs);
  const GpFit gp_fit(GpModel{hyper.params, config.noise_std}, data.X, data.y);
  const GpFit::Prediction gp_pred = gp_fit.predict(grid);
  out.artifacts["fig2_gp.csv"] =
      predictive_grid_csv(grid, gp_pred.mean, gp_pred.variance);
  out.result.metrics["gp_length_scale"] = hyper.params.length_scale;
  out.result.metrics["gp_output_scale"] = hyper.params.output_scale;

  out.result.metrics["l2_elbo_to_gp"] = (elbo_mean - gp_pred.mean).norm();
  out.result.metrics["l2_de_elbo_to_gp"] = (de_mean - gp_pred.mean).norm();
  out.result.eta["length_scale"] =
      out.result.metrics["de_elbo_length_scale"];
  out.result.eta["output_scale"] =
      out.result.metrics["de_elbo_output_scale"];
  const CandidateResult& de_winner = vfits[1].fit.winner();
  out.result.mean_norm = de_winner.q.mean.norm();
  out.result.sigma_q_sq = de_winner.q.variance;
  out.result.objective = de_winner.eval;
  out.result.selection = selection_from(vfits[1].fit);
  return out;
}

RunOutput run_lemma_sweep(const ExperimentConfig& config) {
  RunOutput out;
  const RegressionData data = load_or_generate_regression(config);
  const KernelParams params{config.init_length_scale,
                            config.init_output_scale};
  std::ostringstream csv;
  csv << "feature_count,sigma_q_sq_elbo,sigma_q_sq_de_elbo\n";
  std::vector<double> de_values;
  double previous = 0.0;
  bool increasing = true;
  for (std::size_t i = 0; i < config.r_sweep.size(); ++i) {
    const int r = config.r_sweep[i];
    const RffFeatureMap map = sample_feature_map(
        data.X.cols(), r,
        stream_seed(config.seed, "feature-map", static_cast<std::uint64_t>(r)));
    const FeatureMatrix phi = featurize(map, params, data.X);
    const double v_elbo =
        optimal_isotropic_variance(phi, config.noise_std, 1.0);
    const double kappa_de = static_cast<double>(r) /
                            static_cast<double>(data.X.rows());
    const double v_de =
        optimal_isotropic_variance(phi, config.noise_std, kappa_de);
    csv << r << ',' << format_double(v_elbo) << ',' << format_double(v_de)
        << '\n';
    if (i > 0 && v_elbo <= previous) increasing = false;
    previous = v_elbo;
    de_values.push_back(v_de);
  }
  out.artifacts["lemma_sweep.csv"] = csv.str();
  const double de_min =
      *std::min_element(de_values.begin(), de_values.end());
  const double de_max =
      *std::max_element(de_values.begin(), de_values.end());
  out.result.metrics["elbo_increasing"] = increasing ? 1.0 : 0.0;
  out.result.metrics["de_relative_spread"] = (de_max - de_min) / de_min;
  return out;
}

RunOutput run_kappa_sweep(const ExperimentConfig& config) {
  RunOutput out;
  const RegressionData data = load_or_generate_regression(config);
  if (data.X.cols() != 1)
    throw std::invalid_argument("kappa-sweep: needs univariate inputs");
  const Eigen::VectorXd grid = grid_points(config);
  const RffFeatureMap map =
      sample_feature_map(1, config.feature_count,
                         stream_seed(config.seed, "feature-map"));

  std::vector<double> kappas = config.kappa_sweep;
  if (kappas.empty()) {
    kappas = {1.0, 2.0, 5.0, 10.0, 25.0, 50.0, 100.0};
    kappas.push_back(static_cast<double>(config.feature_count) /
                     static_cast<double>(data.X.rows()));
    std::sort(kappas.begin(), kappas.end());
    kappas.erase(std::unique(kappas.begin(), kappas.end()), kappas.end());
  }

  const GpHyperFit hyper = gp_fit_hyperparams(
      data.X, data.y, {config.init_length_scale, config.init_output_scale},
      config.noise_std, config.learning_rates, config.epochs);
  const GpFit gp_fit(GpModel{hyper.params, config.noise_std}, data.X, data.y);
  const Eigen::VectorXd gp_mean = gp_fit.predict(grid).mean;

  const RffRegressionProblem problem(
      map, {config.init_length_scale, config.init_output_scale},
      config.noise_std, data.X, data.y);
  std::ostringstream csv;
  csv << "kappa,train_rmse,l2_to_gp,sigma_q_sq\n";
  for (double kappa : kappas) {
    TemperedObjectiveConfig cfg = engine_config(config);
    cfg.kappa_policy = TemperedObjectiveConfig::KappaPolicy::kCustom;
    cfg.custom_kappa = kappa;
    const EngineFitResult fit_result =
        fit(problem, cfg, config.learning_rates, config.epochs);
    const CandidateResult& winner = fit_result.winner();
    const KernelParams learned = problem.kernel_from_eta(winner.eta);
    const FeatureMatrix phi = featurize(map, learned, data.X);
    const FeatureMatrix phi_star = featurize(map, learned, grid);
    const Predictive pred =
        predictive_posterior(winner.q, phi_star, config.noise_std);
    csv << format_double(kappa) << ','
        << format_double(rmse(phi.values * winner.q.mean, data.y)) << ','
        << format_double((pred.mean - gp_mean).norm()) << ','
        << format_double(winner.q.variance) << '\n';
  }
  out.artifacts["kappa_sweep.csv"] = csv.str();
  out.result.metrics["gp_length_scale"] = hyper.params.length_scale;
  out.result.metrics["gp_output_scale"] = hyper.params.output_scale;
  return out;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (kTasks.find(task) == kTasks.end())
    throw std::invalid_argument("config: field 'task' has unknown value '" +
                                task + "'");
  if (out_dir.empty())
    throw std::invalid_argument("config: field 'out_dir' is required");
  if (n < 2) throw std::invalid_argument("config: field 'n' must be >= 2");
  if (feature_count < 1)
    throw std::invalid_argument("config: field 'feature_count' must be >= 1");
  if (!(noise_std > 0.0))
    throw std::invalid_argument("config: field 'noise_std' must be > 0");
  if (epochs < 1)
    throw std::invalid_argument("config: field 'epochs' must be >= 1");
  if (learning_rates.empty())
    throw std::invalid_argument(
        "config: field 'learning_rates' must be non-empty");
}

namespace {

const std::set<std::string> kConfigKeys = {
    "task",           "seed",
    "out_dir",        "dataset_path",
    "test_dataset_path", "n",
    "noise_var",      "interval_lo",
    "interval_hi",    "num_classes",
    "class_spread",   "class_radius",
    "class_angle",
    "feature_count",  "noise_std",
    "init_length_scale", "init_output_scale",
    "kappa_policy",   "custom_kappa",
    "sample_count_train", "sample_count_eval",
    "learning_rates", "epochs",
    "r_sweep",        "kappa_sweep",
    "map_sigma_grid", "classifier_model",
    "method",         "prior_variant",
    "initial_lambda", "initial_tau",
    "backbone_hidden", "backbone_encode",
    "ptyl_prior_path", "alpha_over_n",
    "beta_over_n",    "grid_points",
    "grid_lo",        "grid_hi"};

}  // namespace

std::string ExperimentConfig::to_json() const {
  json j;
  j["task"] = task;
  j["seed"] = seed;
  j["out_dir"] = out_dir;
  j["dataset_path"] = dataset_path;
  j["test_dataset_path"] = test_dataset_path;
  j["n"] = n;
  j["noise_var"] = noise_var;
  j["interval_lo"] = interval_lo;
  j["interval_hi"] = interval_hi;
  j["num_classes"] = num_classes;
  j["class_spread"] = class_spread;
  j["class_radius"] = class_radius;
  j["class_angle"] = class_angle;
  j["feature_count"] = feature_count;
  j["noise_std"] = noise_std;
  j["init_length_scale"] = init_length_scale;
  j["init_output_scale"] = init_output_scale;
  j["kappa_policy"] = kappa_policy;
  j["custom_kappa"] = custom_kappa;
  j["sample_count_train"] = sample_count_train;
  j["sample_count_eval"] = sample_count_eval;
  j["learning_rates"] = learning_rates;
  j["epochs"] = epochs;
  j["r_sweep"] = r_sweep;
  j["kappa_sweep"] = kappa_sweep;
  j["map_sigma_grid"] = map_sigma_grid;
  j["classifier_model"] = classifier_model;
  j["method"] = method;
  j["prior_variant"] = prior_variant;
  j["initial_lambda"] = initial_lambda;
  j["initial_tau"] = initial_tau;
  j["backbone_hidden"] = backbone_hidden;
  j["backbone_encode"] = backbone_encode;
  j["ptyl_prior_path"] = ptyl_prior_path;
  j["alpha_over_n"] = alpha_over_n;
  j["beta_over_n"] = beta_over_n;
  j["grid_points"] = grid_points;
  j["grid_lo"] = grid_lo;
  j["grid_hi"] = grid_hi;
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: invalid JSON: ") +
                                e.what());
  }
  if (!j.is_object())
    throw std::invalid_argument("config: top level must be an object");
  for (const auto& item : j.items())
    if (kConfigKeys.find(item.key()) == kConfigKeys.end())
      throw std::invalid_argument("config: unknown field '" + item.key() +
                                  "'");
  ExperimentConfig c;
  c.task = get_field<std::string>(j, "task", c.task);
  c.seed = get_field<std::uint64_t>(j, "seed", c.seed);
  c.out_dir = get_field<std::string>(j, "out_dir", c.out_dir);
  c.dataset_path = get_field<std::string>(j, "dataset_path", c.dataset_path);
  c.test_dataset_path =
      get_field<std::string>(j, "test_dataset_path", c.test_dataset_path);
  c.n = get_field<int>(j, "n", c.n);
  c.noise_var = get_field<double>(j, "noise_var", c.noise_var);
  c.interval_lo = get_field<double>(j, "interval_lo", c.interval_lo);
  c.interval_hi = get_field<double>(j, "interval_hi", c.interval_hi);
  c.num_classes = get_field<int>(j, "num_classes", c.num_classes);
  c.class_spread = get_field<double>(j, "class_spread", c.class_spread);
  c.class_radius = get_field<double>(j, "class_radius", c.class_radius);
  c.class_angle = get_field<double>(j, "class_angle", c.class_angle);
  c.feature_count = get_field<int>(j, "feature_count", c.feature_count);
  c.noise_std = get_field<double>(j, "noise_std", c.noise_std);
  c.init_length_scale =
      get_field<double>(j, "init_length_scale", c.init_length_scale);
  c.init_output_scale =
      get_field<double>(j, "init_output_scale", c.init_output_scale);
  c.kappa_policy = get_field<std::string>(j, "kappa_policy", c.kappa_policy);
  c.custom_kappa = get_field<double>(j, "custom_kappa", c.custom_kappa);
  c.sample_count_train =
      get_field<int>(j, "sample_count_train", c.sample_count_train);
  c.sample_count_eval =
      get_field<int>(j, "sample_count_eval", c.sample_count_eval);
  c.learning_rates =
      get_field<std::vector<double>>(j, "learning_rates", c.learning_rates);
  c.epochs = get_field<int>(j, "epochs", c.epochs);
  c.r_sweep = get_field<std::vector<int>>(j, "r_sweep", c.r_sweep);
  c.kappa_sweep =
      get_field<std::vector<double>>(j, "kappa_sweep", c.kappa_sweep);
  c.map_sigma_grid =
      get_field<std::vector<double>>(j, "map_sigma_grid", c.map_sigma_grid);
  c.classifier_model =
      get_field<std::string>(j, "classifier_model", c.classifier_model);
  c.method = get_field<std::string>(j, "method", c.method);
  c.prior_variant =
      get_field<std::string>(j, "prior_variant", c.prior_variant);
  c.initial_lambda = get_field<double>(j, "initial_lambda", c.initial_lambda);
  c.initial_tau = get_field<double>(j, "initial_tau", c.initial_tau);
  c.backbone_hidden = get_field<int>(j, "backbone_hidden", c.backbone_hidden);
  c.backbone_encode = get_field<int>(j, "backbone_encode", c.backbone_encode);
  c.ptyl_prior_path =
      get_field<std::string>(j, "ptyl_prior_path", c.ptyl_prior_path);
  c.alpha_over_n =
      get_field<std::vector<double>>(j, "alpha_over_n", c.alpha_over_n);
  c.beta_over_n =
      get_field<std::vector<double>>(j, "beta_over_n", c.beta_over_n);
  c.grid_points = get_field<int>(j, "grid_points", c.grid_points);
  c.grid_lo = get_field<double>(j, "grid_lo", c.grid_lo);
  c.grid_hi = get_field<double>(j, "grid_hi", c.grid_hi);
  return c;
}

std::string FitResultFile::to_json() const {
  json j;
  j["eta"] = eta;
  j["psi"] = {{"mean_norm", mean_norm}, {"sigma_q_sq", sigma_q_sq}};
  j["objective"] = {{"expected_loglik", objective.expected_loglik},
                    {"kl", objective.kl},
                    {"kappa", objective.kappa},
                    {"total", objective.total}};
  j["selection"] = json::array();
  for (const auto& entry : selection)
    j["selection"].push_back({{"learning_rate", entry.learning_rate},
                              {"objective", entry.objective},
                              {"failed", entry.failed},
                              {"reason", entry.reason}});
  j["metrics"] = metrics;
  j["trace_files"] = trace_files;
  return j.dump(2) + "\n";
}

FitResultFile FitResultFile::from_json(const std::string& text) {
  const json j = json::parse(text);
  FitResultFile r;
  r.eta = j.at("eta").get<std::map<std::string, double>>();
  r.mean_norm = j.at("psi").at("mean_norm").get<double>();
  r.sigma_q_sq = j.at("psi").at("sigma_q_sq").get<double>();
  r.objective.expected_loglik =
      j.at("objective").at("expected_loglik").get<double>();
  r.objective.kl = j.at("objective").at("kl").get<double>();
  r.objective.kappa = j.at("objective").at("kappa").get<double>();
  r.objective.total = j.at("objective").at("total").get<double>();
  for (const auto& entry : j.at("selection"))
    r.selection.push_back({entry.at("learning_rate").get<double>(),
                           entry.at("objective").get<double>(),
                           entry.at("failed").get<bool>(),
                           entry.at("reason").get<std::string>()});
  r.metrics = j.at("metrics").get<std::map<std::string, double>>();
  r.trace_files = j.at("trace_files").get<std::vector<std::string>>();
  return r;
}

bool FitResultFile::operator==(const FitResultFile& other) const {
  auto entry_equal = [](const SelectionEntry& a, const SelectionEntry& b) {
    return a.learning_rate == b.learning_rate &&
           a.objective == b.objective && a.failed == b.failed &&
           a.reason == b.reason;
  };
  if (selection.size() != other.selection.size()) return false;
  for (std::size_t i = 0; i < selection.size(); ++i)
    if (!entry_equal(selection[i], other.selection[i])) return false;
  return eta == other.eta && mean_norm == other.mean_norm &&
         sigma_q_sq == other.sigma_q_sq &&
         objective.expected_loglik == other.objective.expected_loglik &&
         objective.kl == other.objective.kl &&
         objective.kappa == other.objective.kappa &&
         objective.total == other.objective.total &&
         metrics == other.metrics && trace_files == other.trace_files;
}

RunOutput run(const ExperimentConfig& config) {
  config.validate();
  RunOutput out;
  if (config.task == "gen-regression")
    out = run_gen_regression(config);
  else if (config.task == "gen-classification")
    out = run_gen_classification(config);
  else if (config.task == "fit-rff")
    out = run_fit_rff(config);
  else if (config.task == "fit-gp")
    out = run_fit_gp(config);
  else if (config.task == "fit-classifier")
    out = run_fit_classifier(config);
  else if (config.task == "compare-fig2")
    out = run_compare_fig2(config);
  else if (config.task == "lemma-sweep")
    out = run_lemma_sweep(config);
  else if (config.task == "kappa-sweep")
    out = run_kappa_sweep(config);
  out.artifacts["config.json"] = config.to_json();
  out.artifacts["result.json"] = out.result.to_json();
  return out;
}

void write_run(const RunOutput& output, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  for (const auto& [name, content] : output.artifacts)
    write_text_file((std::filesystem::path(out_dir) / name).string(),
                    content);
}

std::vector<std::string> check_run(const RunOutput& output,
                                   const std::string& out_dir) {
  std::vector<std::string> mismatched;
  for (const auto& [name, content] : output.artifacts) {
    const auto path = std::filesystem::path(out_dir) / name;
    if (!std::filesystem::exists(path)) {
      mismatched.push_back(name + " (missing)");
      continue;
    }
    if (read_text_file(path.string()) != content)
      mismatched.push_back(name);
  }
  return mismatched;
}

std::string content_digest(const std::string& content) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : content) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream out;
  out << std::hex << h;
  return out.str();
}

}  // namespace deelbo
