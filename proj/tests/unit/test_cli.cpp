#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "reloop/cli/commands.hpp"
#include "reloop/errors.hpp"
#include "unit/fdr_oracle.hpp"

using namespace reloop;
using namespace reloop::cli;
using nlohmann::json;

namespace {

std::string fixture(const std::string& name) { return std::string(RELOOP_FIXTURES) + "/" + name; }

std::string temp_file(const std::string& name, const std::string& text) {
  const auto path = (std::filesystem::temp_directory_path() / name).string();
  std::ofstream out(path);
  out << text;
  return path;
}

AnalysisOptions fixture_options() {
  AnalysisOptions o;
  o.input = fixture("contrasts.csv");
  o.trees = 20;
  o.seed = 5;
  return o;
}

std::vector<std::string> reasons(const json& contrast) {
  return contrast["validation"]["reasons"].get<std::vector<std::string>>();
}

}  // namespace

TEST(CliValidate, ConstantOutcomesAreRejected) {
  AnalysisOptions o;
  o.input = fixture("constant4.csv");
  o.min_arm = 2;
  const auto doc = json::parse(cmd_validate(o));
  ASSERT_EQ(doc["contrasts"].size(), 1u);
  EXPECT_FALSE(doc["contrasts"][0]["validation"]["eligible"].get<bool>());
  EXPECT_EQ(reasons(doc["contrasts"][0]), (std::vector<std::string>{"ZeroOutcomeVariance"}));
  const auto an = json::parse(cmd_analyze(o));
  EXPECT_TRUE(an["contrasts"][0]["estimates"].is_null());
}

TEST(CliValidate, EachExclusionRule) {
  AnalysisOptions o;
  o.input = fixture("validation.csv");
  const auto doc = json::parse(cmd_validate(o));
  const auto& cs = doc["contrasts"];
  ASSERT_EQ(cs.size(), 4u);
  EXPECT_EQ(cs[0]["contrast_id"], "ok");
  EXPECT_TRUE(reasons(cs[0]).empty());
  EXPECT_EQ(reasons(cs[1]), (std::vector<std::string>{"ZeroOutcomeVariance"}));
  EXPECT_EQ(reasons(cs[2]),
            (std::vector<std::string>{"ArmTooSmall", "RandomizationProbSuspect"}));
  EXPECT_EQ(reasons(cs[3]), (std::vector<std::string>{"RandomizationProbSuspect"}));
  EXPECT_EQ(cs[0]["validation"]["min_per_arm"], 11);
  EXPECT_EQ(doc["summary"]["eligible"], 1);
}

TEST(CliAnalyze, ReportsEveryEstimator) {
  const auto doc = json::parse(cmd_analyze(fixture_options()));
  EXPECT_EQ(doc["tool"], "reloop");
  EXPECT_EQ(doc["command"], "analyze");
  EXPECT_EQ(doc["seed"], 5);
  const auto& ests = doc["contrasts"][0]["estimates"];
  ASSERT_EQ(ests.size(), 6u);
  for (const auto& e : ests) {
    EXPECT_TRUE(e["skip_reason"].is_null()) << e["estimator"];
    EXPECT_LT(e["ci_lo"].get<double>(), e["ci_hi"].get<double>());
  }
  EXPECT_TRUE(ests[0]["variance_ratio"]["Loop_x"].is_number());
  EXPECT_FALSE(ests[0]["variance_ratio"].contains("TTest"));
  const double ratio = ests[4]["variance_ratio"]["TTest"].get<double>();
  EXPECT_NEAR(ratio, ests[0]["var_hat"].get<double>() / ests[4]["var_hat"].get<double>(), 1e-12);
}

TEST(CliAnalyze, FdrCountsMatchRecomputation) {
  const auto doc = json::parse(cmd_analyze(fixture_options()));
  for (std::size_t k = 0; k < doc["fdr"].size(); ++k) {
    std::vector<double> p;
    std::size_t bh_flags = 0;
    std::vector<double> adjusted;
    for (const auto& c : doc["contrasts"]) {
      const auto& e = c["estimates"][k];
      if (e["p_value"].is_null()) continue;
      p.push_back(e["p_value"].get<double>());
      adjusted.push_back(e["bh_adjusted_p"].get<double>());
      bh_flags += e["bh_rejected"].get<bool>();
    }
    const auto& f = doc["fdr"][k];
    const auto want = reloop::testing::brute_step_up(p, 0.05, false);
    const auto want_by = reloop::testing::brute_step_up(p, 0.05, true);
    std::size_t n_bh = 0, n_by = 0, n_raw = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      n_bh += want.rejected[i];
      n_by += want_by.rejected[i];
      n_raw += p[i] <= 0.05;
      EXPECT_NEAR(adjusted[i], want.adjusted[i], 1e-15);
    }
    EXPECT_EQ(f["tests"], p.size());
    EXPECT_EQ(f["bh_rejections"], n_bh);
    EXPECT_EQ(f["bh_rejections"], bh_flags);
    EXPECT_EQ(f["by_rejections"], n_by);
    EXPECT_EQ(f["unadjusted_rejections"], n_raw);
  }
}

TEST(CliAnalyze, DeterministicAcrossRunsAndThreads) {
  auto o = fixture_options();
  const std::string a = cmd_analyze(o);
  EXPECT_EQ(a, cmd_analyze(o));
  o.threads = 4;
  EXPECT_EQ(a, cmd_analyze(o));
  o.seed = 6;
  EXPECT_NE(a, cmd_analyze(o));
}

TEST(CliAnalyze, WithoutRemnantSkipsRemnantEstimators) {
  auto o = fixture_options();
  o.input = temp_file("reloop_noremnant.csv",
                      "contrast_id,z,y,x\nA,1,1.2,0.1\nA,0,0.3,0.4\nA,1,2.0,-1\nA,0,0.1,2\n"
                      "A,1,1.7,0.5\nA,0,-0.4,0.3\n");
  o.min_arm = 2;
  const auto doc = json::parse(cmd_analyze(o));
  const auto& ests = doc["contrasts"][0]["estimates"];
  EXPECT_TRUE(ests[0]["skip_reason"].is_null());
  EXPECT_TRUE(ests[1]["skip_reason"].is_string());
  EXPECT_TRUE(ests[1]["tau_hat"].is_null());
  EXPECT_TRUE(ests[1]["bh_adjusted_p"].is_null());
  std::remove(o.input.c_str());
}

TEST(CliSubgroup, SchemesAndSummary) {
  SubgroupOptions o;
  o.analysis = fixture_options();
  o.analysis.estimators = {EstimatorId::TTest, EstimatorId::ReLoop};
  o.covariates = {"x1"};
  o.subgroup_min_arm = 5;
  const auto doc = json::parse(cmd_subgroup(o));
  ASSERT_EQ(doc["schemes"].size(), 1u);
  EXPECT_LT(doc["schemes"][0]["q_lo"].get<double>(), doc["schemes"][0]["q_hi"].get<double>());
  EXPECT_EQ(doc["summary"]["subgroups"], 4);
  const std::string text = cmd_subgroup(o);
  o.analysis.threads = 3;
  EXPECT_EQ(text, cmd_subgroup(o));
  o.covariates = {"nope"};
  EXPECT_THROW(cmd_subgroup(o), ConfigError);
}

TEST(CliPoststratify, CombinesGroupEstimates) {
  PoststratOptions o;
  o.analysis = fixture_options();
  o.analysis.estimators = {EstimatorId::TTest};
  o.weights = fixture("weights.csv");
  const auto doc = json::parse(cmd_poststratify(o));
  for (const auto& c : doc["contrasts"]) {
    const auto& g = c["groups"];
    ASSERT_EQ(g.size(), 2u);
    const double want = 0.3 * g[0]["estimates"][0]["tau_hat"].get<double>() +
                        0.7 * g[1]["estimates"][0]["tau_hat"].get<double>();
    EXPECT_NEAR(c["post_stratified"][0]["tau_hat"].get<double>(), want, 1e-12);
  }
  const auto bad = temp_file("reloop_badweights.csv", "group,pi\nG1,1\n");
  o.weights = bad;
  EXPECT_THROW(cmd_poststratify(o), DataError);
  std::remove(bad.c_str());
}

TEST(CliRemnant, TrainPredictAnalyze) {
  RemnantTrainOptions t;
  t.input = fixture("remnant_train.csv");
  t.lambda = 0.5;
  const std::string model_text = cmd_remnant_train(t);
  EXPECT_EQ(json::parse(model_text)["format"], "reloop-remnant-model");
  const auto model = temp_file("reloop_cli_model.json", model_text);
  RemnantPredictOptions p;
  p.input = fixture("contrasts.csv");
  p.model = model;
  const std::string preds_text = cmd_remnant_predict(p);
  EXPECT_EQ(preds_text.rfind("contrast_id,unit_id,yhat_r\n", 0), 0u);
  const auto preds = temp_file("reloop_cli_preds.csv", preds_text);

  auto a = fixture_options();
  a.remnant_model = model;
  auto b = fixture_options();
  b.remnant_predictions = preds;
  const auto da = json::parse(cmd_analyze(a));
  const auto db = json::parse(cmd_analyze(b));
  EXPECT_EQ(da["contrasts"], db["contrasts"]);
  a.remnant_predictions = preds;
  EXPECT_THROW(cmd_analyze(a), ConfigError);
  std::remove(model.c_str());
  std::remove(preds.c_str());
}

TEST(CliSimulate, ExactModeAndDeterminism) {
  const auto cfg = temp_file("reloop_sim.conf",
                             "n = 6\nk = 2\nrho = 0.6\ntau = 0.4\nremnant_size = 100\n"
                             "mode = exact\nestimators = TTest, ReLoop\n");
  SimulateOptions o;
  o.config = cfg;
  o.seed = 3;
  const std::string a = cmd_simulate(o);
  o.threads = 3;
  EXPECT_EQ(a, cmd_simulate(o));
  const auto doc = json::parse(a);
  EXPECT_EQ(doc["mode"], "exact");
  ASSERT_EQ(doc["results"].size(), 2u);
  EXPECT_EQ(doc["results"][1]["assignments"], 64);
  EXPECT_NEAR(doc["results"][1]["bias"].get<double>(), 0.0, 1e-12);
  std::remove(cfg.c_str());
}

TEST(CliSimulate, BaselineMustBeSimulated) {
  const auto cfg = temp_file("reloop_sim_bad.conf",
                             "n = 20\nestimators = ReLoop\nbaselines = TTest\n");
  SimulateOptions o;
  o.config = cfg;
  EXPECT_THROW(cmd_simulate(o), ConfigError);
  std::remove(cfg.c_str());
}

TEST(CliErrors, RecordsAndExitCodes) {
  const ParseError pe("bad", 3, 7);
  const auto r = error_record(pe);
  EXPECT_EQ(r["error"]["kind"], "ParseError");
  EXPECT_EQ(r["error"]["line"], 3);
  EXPECT_EQ(r["error"]["column"], 7);
  const auto d = error_record(DataError("oops"));
  EXPECT_EQ(d["error"]["kind"], "DataError");
  EXPECT_TRUE(d["error"]["line"].is_null());
  EXPECT_EQ(error_record(std::runtime_error("x"))["error"]["kind"], "InternalError");
  EXPECT_EQ(exit_code(PreconditionError("p")), 3);
  EXPECT_EQ(exit_code(ConfigError("c")), 2);
  EXPECT_EQ(exit_code(std::runtime_error("x")), 1);

  AnalysisOptions o;
  o.input = temp_file("reloop_bad.csv", "contrast_id,z,y\nA,1,\"x\"y\n");
  try {
    cmd_analyze(o);
    ADD_FAILURE();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  std::remove(o.input.c_str());
}
