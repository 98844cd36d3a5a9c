// Command-line harness: data generation, single fits, figure
// reproductions, and sweeps. Every subcommand accepts --config <json>
// plus flag overrides; identical configs produce byte-identical outputs,
// and --check re-runs and verifies the files already on disk.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "deelbo/dataset.hpp"
#include "deelbo/experiment.hpp"

namespace {

struct CliState {
  std::string config_path;
  bool check = false;
  deelbo::ExperimentConfig values;

  CLI::Option* seed = nullptr;
  CLI::Option* out_dir = nullptr;
  CLI::Option* dataset = nullptr;
  CLI::Option* test_dataset = nullptr;
  CLI::Option* n = nullptr;
  CLI::Option* noise_var = nullptr;
  CLI::Option* num_classes = nullptr;
  CLI::Option* class_spread = nullptr;
  CLI::Option* class_radius = nullptr;
  CLI::Option* class_angle = nullptr;
  CLI::Option* feature_count = nullptr;
  CLI::Option* noise_std = nullptr;
  CLI::Option* init_length_scale = nullptr;
  CLI::Option* init_output_scale = nullptr;
  CLI::Option* kappa_policy = nullptr;
  CLI::Option* custom_kappa = nullptr;
  CLI::Option* learning_rates = nullptr;
  CLI::Option* epochs = nullptr;
  CLI::Option* classifier_model = nullptr;
  CLI::Option* method = nullptr;
  CLI::Option* prior_variant = nullptr;
  CLI::Option* initial_lambda = nullptr;
  CLI::Option* initial_tau = nullptr;
  CLI::Option* backbone_hidden = nullptr;
  CLI::Option* backbone_encode = nullptr;
  CLI::Option* ptyl_prior = nullptr;
  CLI::Option* grid_points = nullptr;
  CLI::Option* grid_lo = nullptr;
  CLI::Option* grid_hi = nullptr;
  CLI::Option* sample_count_eval = nullptr;
};

CliState* add_task_options(CLI::App* sub) {
  auto state = std::make_shared<CliState>();
  sub->add_option("--config", state->config_path,
                  "JSON config file; flags override its fields");
  sub->add_flag("--check", state->check,
                "verify existing artifacts instead of writing");
  auto& v = state->values;
  state->seed = sub->add_option("--seed", v.seed, "root seed");
  state->out_dir = sub->add_option("--out-dir", v.out_dir,
                                   "output directory (default "
                                   "$DEELBO_OUT_ROOT/<task>)");
  state->dataset = sub->add_option("--dataset", v.dataset_path);
  state->test_dataset =
      sub->add_option("--test-dataset", v.test_dataset_path);
  state->n = sub->add_option("--n", v.n, "training-set size");
  state->noise_var = sub->add_option("--noise-var", v.noise_var);
  state->num_classes = sub->add_option("--num-classes", v.num_classes);
  state->class_spread = sub->add_option("--class-spread", v.class_spread);
  state->class_radius = sub->add_option("--class-radius", v.class_radius);
  state->class_angle =
      sub->add_option("--class-angle", v.class_angle,
                      "rotation of the generated class layout (radians)");
  state->feature_count =
      sub->add_option("--feature-count", v.feature_count, "R");
  state->noise_std = sub->add_option("--noise-std", v.noise_std, "sigma_y");
  state->init_length_scale =
      sub->add_option("--init-length-scale", v.init_length_scale);
  state->init_output_scale =
      sub->add_option("--init-output-scale", v.init_output_scale);
  state->kappa_policy =
      sub->add_option("--kappa-policy", v.kappa_policy,
                      "standard | data_emphasized | custom");
  state->custom_kappa = sub->add_option("--custom-kappa", v.custom_kappa);
  state->learning_rates =
      sub->add_option("--learning-rates", v.learning_rates)
          ->delimiter(',');
  state->epochs = sub->add_option("--epochs", v.epochs);
  state->classifier_model =
      sub->add_option("--classifier-model", v.classifier_model,
                      "transfer | rff");
  state->method =
      sub->add_option("--method", v.method, "de_elbo | map_grid");
  state->prior_variant =
      sub->add_option("--prior-variant", v.prior_variant,
                      "l2_zero | l2_sp | ptyl");
  state->initial_lambda =
      sub->add_option("--initial-lambda", v.initial_lambda);
  state->initial_tau = sub->add_option("--initial-tau", v.initial_tau);
  state->backbone_hidden =
      sub->add_option("--backbone-hidden", v.backbone_hidden);
  state->backbone_encode =
      sub->add_option("--backbone-encode", v.backbone_encode);
  state->ptyl_prior = sub->add_option("--ptyl-prior", v.ptyl_prior_path);
  state->grid_points = sub->add_option("--grid-points", v.grid_points);
  state->grid_lo = sub->add_option("--grid-lo", v.grid_lo);
  state->grid_hi = sub->add_option("--grid-hi", v.grid_hi);
  state->sample_count_eval =
      sub->add_option("--sample-count-eval", v.sample_count_eval);
  // Keep the state alive for the app's lifetime.
  static std::vector<std::shared_ptr<CliState>> keep_alive;
  keep_alive.push_back(state);
  return state.get();
}

deelbo::ExperimentConfig resolve_config(const std::string& task,
                                        const CliState& cli) {
  deelbo::ExperimentConfig config;
  if (!cli.config_path.empty())
    config = deelbo::ExperimentConfig::from_json(
        deelbo::read_text_file(cli.config_path));
  config.task = task;

  auto overlay = [](CLI::Option* opt, auto& target, const auto& value) {
    if (opt != nullptr && opt->count() > 0) target = value;
  };
  const auto& v = cli.values;
  overlay(cli.seed, config.seed, v.seed);
  overlay(cli.out_dir, config.out_dir, v.out_dir);
  overlay(cli.dataset, config.dataset_path, v.dataset_path);
  overlay(cli.test_dataset, config.test_dataset_path, v.test_dataset_path);
  overlay(cli.n, config.n, v.n);
  overlay(cli.noise_var, config.noise_var, v.noise_var);
  overlay(cli.num_classes, config.num_classes, v.num_classes);
  overlay(cli.class_spread, config.class_spread, v.class_spread);
  overlay(cli.class_radius, config.class_radius, v.class_radius);
  overlay(cli.class_angle, config.class_angle, v.class_angle);
  overlay(cli.feature_count, config.feature_count, v.feature_count);
  overlay(cli.noise_std, config.noise_std, v.noise_std);
  overlay(cli.init_length_scale, config.init_length_scale,
          v.init_length_scale);
  overlay(cli.init_output_scale, config.init_output_scale,
          v.init_output_scale);
  overlay(cli.kappa_policy, config.kappa_policy, v.kappa_policy);
  overlay(cli.custom_kappa, config.custom_kappa, v.custom_kappa);
  overlay(cli.learning_rates, config.learning_rates, v.learning_rates);
  overlay(cli.epochs, config.epochs, v.epochs);
  overlay(cli.classifier_model, config.classifier_model, v.classifier_model);
  overlay(cli.method, config.method, v.method);
  overlay(cli.prior_variant, config.prior_variant, v.prior_variant);
  overlay(cli.initial_lambda, config.initial_lambda, v.initial_lambda);
  overlay(cli.initial_tau, config.initial_tau, v.initial_tau);
  overlay(cli.backbone_hidden, config.backbone_hidden, v.backbone_hidden);
  overlay(cli.backbone_encode, config.backbone_encode, v.backbone_encode);
  overlay(cli.ptyl_prior, config.ptyl_prior_path, v.ptyl_prior_path);
  overlay(cli.grid_points, config.grid_points, v.grid_points);
  overlay(cli.grid_lo, config.grid_lo, v.grid_lo);
  overlay(cli.grid_hi, config.grid_hi, v.grid_hi);
  overlay(cli.sample_count_eval, config.sample_count_eval,
          v.sample_count_eval);

  if (config.out_dir.empty()) {
    const char* root = std::getenv("DEELBO_OUT_ROOT");
    if (root != nullptr && *root != '\0')
      config.out_dir =
          (std::filesystem::path(root) / config.task).string();
  }
  return config;
}

int execute(const std::string& task, const CliState& cli) {
  const deelbo::ExperimentConfig config = resolve_config(task, cli);
  const deelbo::RunOutput output = deelbo::run(config);
  if (cli.check) {
    const std::vector<std::string> mismatched =
        deelbo::check_run(output, config.out_dir);
    if (!mismatched.empty()) {
      std::cerr << "check failed, " << mismatched.size()
                << " artifact(s) differ:\n";
      for (const auto& name : mismatched) std::cerr << "  " << name << '\n';
      return 2;
    }
    std::cout << "check ok: " << output.artifacts.size()
              << " artifacts match " << config.out_dir << '\n';
    return 0;
  }
  deelbo::write_run(output, config.out_dir);
  std::cout << task << " -> " << config.out_dir << '\n';
  for (const auto& [name, content] : output.artifacts)
    std::cout << "  " << name << "  fnv1a:" << deelbo::content_digest(content)
              << '\n';
  for (const auto& [key, value] : output.result.metrics)
    std::cout << "  metric " << key << " = " << value << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"data-emphasized ELBo fitting harness"};
  app.require_subcommand(1);

  const std::vector<std::string> tasks = {
      "gen-regression", "gen-classification", "fit-rff",     "fit-gp",
      "fit-classifier", "compare-fig2",       "lemma-sweep", "kappa-sweep"};
  std::vector<std::pair<std::string, CliState*>> states;
  for (const auto& task : tasks) {
    CLI::App* sub = app.add_subcommand(task);
    states.emplace_back(task, add_task_options(sub));
  }

  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& [task, state] : states)
      if (app.got_subcommand(task)) return execute(task, *state);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
