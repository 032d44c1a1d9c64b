#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "reloop/cli/commands.hpp"
#include "reloop/errors.hpp"
#include "reloop/io/scenario_config.hpp"
#include "reloop/version.hpp"

namespace {

using namespace reloop;

void add_analysis_flags(CLI::App* cmd, cli::AnalysisOptions& o, std::string& estimators) {
  cmd->add_option("--input", o.input, "contrast CSV")->required();
  cmd->add_option("--remnant-predictions", o.remnant_predictions,
                  "CSV of contrast_id, unit_id, yhat_r");
  cmd->add_option("--remnant-model", o.remnant_model, "remnant model JSON");
  cmd->add_option("--alpha", o.alpha, "test level")->capture_default_str();
  cmd->add_option("--min-arm", o.min_arm, "minimum units per arm (default 5(k+2)+1)");
  cmd->add_option("--binom-alpha", o.binom_alpha, "randomization check level")
      ->capture_default_str();
  cmd->add_option("--seed", o.seed, "master seed")->capture_default_str();
  cmd->add_option("--estimators", estimators, "comma list of estimators (default all)");
  cmd->add_option("--trees", o.trees, "trees per forest")->capture_default_str();
  cmd->add_option("--threads", o.threads, "worker threads")->capture_default_str();
}

void write_output(const std::string& text, const std::string& path) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw DataError("failed writing " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Design-based effect estimation for Bernoulli-randomized experiments"};
  app.set_version_flag("--version", std::string(kToolVersion));
  app.require_subcommand(1);
  std::string out_path;
  std::string estimators;

  cli::AnalysisOptions validate_opts;
  auto* validate = app.add_subcommand("validate", "apply the exclusion rules");
  add_analysis_flags(validate, validate_opts, estimators);

  cli::AnalysisOptions analyze_opts;
  auto* analyze = app.add_subcommand("analyze", "estimate effects for every contrast");
  add_analysis_flags(analyze, analyze_opts, estimators);

  cli::SubgroupOptions subgroup_opts;
  std::string covariates;
  auto* subgroup = app.add_subcommand("subgroup", "tercile subgroup effects");
  add_analysis_flags(subgroup, subgroup_opts.analysis, estimators);
  subgroup->add_option("--covariates", covariates, "comma list (default all)");
  subgroup->add_option("--subgroup-min-arm", subgroup_opts.subgroup_min_arm)
      ->capture_default_str();

  cli::PoststratOptions post_opts;
  auto* post = app.add_subcommand("poststratify", "post-stratified population effects");
  add_analysis_flags(post, post_opts.analysis, estimators);
  post->add_option("--weights", post_opts.weights, "CSV of group, pi")->required();
  post->add_option("--subgroup-min-arm", post_opts.subgroup_min_arm)->capture_default_str();

  cli::SimulateOptions sim_opts;
  auto* simulate = app.add_subcommand("simulate", "synthetic bias, variance and coverage");
  simulate->add_option("--config", sim_opts.config, "scenario file")->required();
  simulate->add_option("--seed", sim_opts.seed)->capture_default_str();
  simulate->add_option("--threads", sim_opts.threads)->capture_default_str();

  auto* remnant = app.add_subcommand("remnant", "train or apply a remnant model");
  remnant->require_subcommand(1);
  cli::RemnantTrainOptions train_opts;
  auto* train = remnant->add_subcommand("train", "fit a ridge model on remnant rows");
  train->add_option("--input", train_opts.input, "CSV with y and feature columns")->required();
  train->add_option("--lambda", train_opts.lambda, "ridge penalty")->capture_default_str();
  train->add_option("--covariates", covariates, "feature columns (default all but y)");
  cli::RemnantPredictOptions predict_opts;
  auto* predict = remnant->add_subcommand("predict", "predictions for a contrast CSV");
  predict->add_option("--input", predict_opts.input, "contrast CSV")->required();
  predict->add_option("--remnant-model", predict_opts.model)->required();

  for (CLI::App* cmd : {validate, analyze, subgroup, post, simulate, train, predict}) {
    cmd->add_option("--out", out_path, "output file (default stdout)");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  auto split = [](const std::string& list) {
    std::vector<std::string> items;
    std::stringstream ss(list);
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) items.push_back(item);
    }
    return items;
  };

  try {
    std::string text;
    for (cli::AnalysisOptions* o : {&validate_opts, &analyze_opts, &subgroup_opts.analysis,
                                    &post_opts.analysis}) {
      if (!estimators.empty()) o->estimators = io::parse_estimator_list(estimators);
    }
    if (*validate) {
      text = cli::cmd_validate(validate_opts);
    } else if (*analyze) {
      text = cli::cmd_analyze(analyze_opts);
    } else if (*subgroup) {
      subgroup_opts.covariates = split(covariates);
      text = cli::cmd_subgroup(subgroup_opts);
    } else if (*post) {
      text = cli::cmd_poststratify(post_opts);
    } else if (*simulate) {
      text = cli::cmd_simulate(sim_opts);
    } else if (*train) {
      train_opts.features = split(covariates);
      text = cli::cmd_remnant_train(train_opts);
    } else if (*predict) {
      text = cli::cmd_remnant_predict(predict_opts);
    }
    write_output(text, out_path);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << cli::error_record(e).dump() << '\n';
    return cli::exit_code(e);
  }
}
