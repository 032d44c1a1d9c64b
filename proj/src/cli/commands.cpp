#include "reloop/cli/commands.hpp"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "reloop/errors.hpp"
#include "reloop/inference.hpp"
#include "reloop/io/contrast_io.hpp"
#include "reloop/io/csv.hpp"
#include "reloop/io/scenario_config.hpp"
#include "reloop/parallel.hpp"
#include "reloop/remnant_model.hpp"
#include "reloop/simulation.hpp"
#include "reloop/subgroups.hpp"
#include "reloop/version.hpp"

namespace reloop::cli {

using Json = nlohmann::ordered_json;

namespace {

const EstimatorId kRatioBaselines[] = {EstimatorId::TTest, EstimatorId::LoopX};

std::string render(const Json& doc) { return doc.dump(2) + "\n"; }

Json header(const char* command, std::uint64_t seed) {
  Json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["command"] = command;
  j["seed"] = seed;
  return j;
}

Json optional_string(const std::optional<std::string>& s) {
  return s ? Json(*s) : Json(nullptr);
}

Json estimator_names(const std::vector<EstimatorId>& ids) {
  Json arr = Json::array();
  for (EstimatorId id : ids) arr.push_back(std::string(to_string(id)));
  return arr;
}

Json config_echo(const AnalysisOptions& o) {
  Json c;
  c["input"] = o.input;
  c["remnant_predictions"] = optional_string(o.remnant_predictions);
  c["remnant_model"] = optional_string(o.remnant_model);
  c["alpha"] = o.alpha;
  c["min_arm"] = o.min_arm ? Json(*o.min_arm) : Json(nullptr);
  c["binom_alpha"] = o.binom_alpha;
  c["estimators"] = estimator_names(o.estimators);
  c["trees"] = o.trees;
  return c;
}

void check_options(const AnalysisOptions& o) {
  if (!(o.alpha > 0.0 && o.alpha < 1.0)) throw ConfigError("--alpha must lie in (0,1)");
  if (!(o.binom_alpha > 0.0 && o.binom_alpha < 1.0)) {
    throw ConfigError("--binom-alpha must lie in (0,1)");
  }
  if (o.trees == 0) throw ConfigError("--trees must be at least 1");
  if (o.min_arm && *o.min_arm == 0) throw ConfigError("--min-arm must be positive");
  if (o.remnant_predictions && o.remnant_model) {
    throw ConfigError("--remnant-predictions and --remnant-model are mutually exclusive");
  }
}

struct Batch {
  std::vector<ContrastDataset> contrasts;
  std::vector<std::string> covariate_names;
  std::size_t dropped_rows = 0;
};

Batch load_batch(const AnalysisOptions& o) {
  check_options(o);
  io::ContrastBatch raw = io::load_contrasts_file(o.input);
  Batch b;
  b.covariate_names = raw.covariate_names;
  b.dropped_rows = raw.dropped_rows;
  if (o.remnant_predictions) {
    const io::RemnantPredictions preds = io::load_remnant_predictions(*o.remnant_predictions);
    for (const auto& ds : raw.contrasts) b.contrasts.push_back(io::attach_remnant(ds, preds));
  } else if (o.remnant_model) {
    const RemnantModel model = load_remnant_model(*o.remnant_model);
    for (const auto& ds : raw.contrasts) b.contrasts.push_back(io::attach_remnant(ds, model));
  } else {
    b.contrasts = std::move(raw.contrasts);
  }
  return b;
}

EstimationPlan make_plan(const AnalysisOptions& o) {
  EstimationPlan plan;
  // Canonical order, matching the order estimate_all reports in.
  plan.estimators.clear();
  for (EstimatorId id : all_estimators()) {
    if (std::find(o.estimators.begin(), o.estimators.end(), id) != o.estimators.end()) {
      plan.estimators.push_back(id);
    }
  }
  plan.forest.trees = o.trees;
  plan.forest.seed = o.seed;
  return plan;
}

ValidationVerdict validate(const ContrastDataset& ds, const AnalysisOptions& o) {
  return validate_contrast(ds, o.min_arm.value_or(default_min_per_arm(ds.k())), o.binom_alpha);
}

Json verdict_json(const ValidationVerdict& v, std::size_t min_per_arm) {
  Json j;
  j["eligible"] = v.eligible;
  j["reasons"] = Json::array();
  for (RejectionReason r : v.reasons) j["reasons"].push_back(std::string(to_string(r)));
  j["binom_p"] = v.binom_p;
  j["n1"] = v.n1;
  j["n0"] = v.n0;
  j["min_per_arm"] = min_per_arm;
  return j;
}

const EffectEstimate* find_estimate(const std::vector<EstimatorOutcome>& outcomes,
                                    EstimatorId id) {
  for (const auto& o : outcomes) {
    if (o.estimator == id && o.estimate) return &*o.estimate;
  }
  return nullptr;
}

// One estimator's entry; numeric fields are null when it was skipped.
Json outcome_json(const EstimatorOutcome& o, const std::vector<EstimatorOutcome>& all,
                  double alpha) {
  Json j;
  j["estimator"] = std::string(to_string(o.estimator));
  j["skip_reason"] = o.estimate ? Json(nullptr) : Json(o.skip_reason);
  const char* fields[] = {"tau_hat", "var_hat", "se", "ci_lo", "ci_hi", "p_value",
                          "n",       "n1",      "n0", "p"};
  if (!o.estimate) {
    for (const char* f : fields) j[f] = nullptr;
  } else {
    const EffectEstimate& e = *o.estimate;
    const InferenceResult inf = z_inference(e, alpha);
    j["tau_hat"] = e.tau_hat;
    j["var_hat"] = e.var_hat;
    j["se"] = inf.se;
    j["ci_lo"] = inf.ci_lo;
    j["ci_hi"] = inf.ci_hi;
    j["p_value"] = inf.p_value;
    j["n"] = e.n;
    j["n1"] = e.n1;
    j["n0"] = e.n0;
    j["p"] = e.p;
  }
  Json ratios;
  for (EstimatorId base : kRatioBaselines) {
    if (base == o.estimator) continue;
    const EffectEstimate* b = find_estimate(all, base);
    const bool ok = o.estimate && b && o.estimate->var_hat > 0.0;
    ratios[std::string(to_string(base))] =
        ok ? Json(variance_ratio(b->var_hat, o.estimate->var_hat)) : Json(nullptr);
  }
  j["variance_ratio"] = ratios;
  return j;
}

Json outcomes_json(const std::vector<EstimatorOutcome>& outcomes, double alpha) {
  Json arr = Json::array();
  for (const auto& o : outcomes) arr.push_back(outcome_json(o, outcomes, alpha));
  return arr;
}

}  // namespace

std::string cmd_validate(const AnalysisOptions& opts) {
  const Batch b = load_batch(opts);
  Json doc = header("validate", opts.seed);
  doc["config"] = config_echo(opts);
  doc["dropped_rows"] = b.dropped_rows;
  doc["covariates"] = b.covariate_names;
  Json arr = Json::array();
  std::size_t eligible = 0;
  for (const auto& ds : b.contrasts) {
    const std::size_t min_arm = opts.min_arm.value_or(default_min_per_arm(ds.k()));
    const ValidationVerdict v = validate_contrast(ds, min_arm, opts.binom_alpha);
    eligible += v.eligible;
    Json c;
    c["contrast_id"] = ds.contrast_id();
    c["n"] = ds.n();
    c["validation"] = verdict_json(v, min_arm);
    arr.push_back(std::move(c));
  }
  doc["contrasts"] = std::move(arr);
  doc["summary"] = {{"contrasts", b.contrasts.size()}, {"eligible", eligible}};
  return render(doc);
}

std::string cmd_analyze(const AnalysisOptions& opts) {
  const Batch b = load_batch(opts);
  const EstimationPlan plan = make_plan(opts);
  const std::size_t C = b.contrasts.size();
  std::vector<ValidationVerdict> verdicts(C);
  std::vector<std::vector<EstimatorOutcome>> results(C);
  parallel_for(C, opts.threads, [&](std::size_t c) {
    verdicts[c] = validate(b.contrasts[c], opts);
    if (verdicts[c].eligible) results[c] = estimate_all(b.contrasts[c], plan);
  });

  Json doc = header("analyze", opts.seed);
  doc["config"] = config_echo(opts);
  doc["dropped_rows"] = b.dropped_rows;
  doc["covariates"] = b.covariate_names;

  Json contrasts = Json::array();
  for (std::size_t c = 0; c < C; ++c) {
    const ContrastDataset& ds = b.contrasts[c];
    Json j;
    j["contrast_id"] = ds.contrast_id();
    j["n"] = ds.n();
    j["validation"] =
        verdict_json(verdicts[c], opts.min_arm.value_or(default_min_per_arm(ds.k())));
    j["estimates"] = verdicts[c].eligible ? outcomes_json(results[c], opts.alpha) : Json(nullptr);
    contrasts.push_back(std::move(j));
  }

  // Batch FDR adjustment per estimator across the contrasts that produced it.
  Json fdr = Json::array();
  for (std::size_t k = 0; k < plan.estimators.size(); ++k) {
    const EstimatorId id = plan.estimators[k];
    std::vector<std::size_t> where;
    std::vector<double> pvals;
    for (std::size_t c = 0; c < C; ++c) {
      if (!verdicts[c].eligible) continue;
      if (const EffectEstimate* e = find_estimate(results[c], id)) {
        where.push_back(c);
        pvals.push_back(z_inference(*e, opts.alpha).p_value);
      }
    }
    const FdrAdjustment bh = bh_adjust(pvals, opts.alpha);
    const FdrAdjustment by = by_adjust(pvals, opts.alpha);
    std::size_t raw_rejections = 0;
    for (std::size_t i = 0; i < where.size(); ++i) {
      raw_rejections += pvals[i] <= opts.alpha;
      Json& entry = contrasts[where[i]]["estimates"][k];
      entry["bh_adjusted_p"] = bh.adjusted[i];
      entry["bh_rejected"] = static_cast<bool>(bh.rejected[i]);
      entry["by_adjusted_p"] = by.adjusted[i];
      entry["by_rejected"] = static_cast<bool>(by.rejected[i]);
    }
    for (std::size_t c = 0; c < C; ++c) {
      if (!verdicts[c].eligible || find_estimate(results[c], id)) continue;
      Json& entry = contrasts[c]["estimates"][k];
      entry["bh_adjusted_p"] = nullptr;
      entry["bh_rejected"] = nullptr;
      entry["by_adjusted_p"] = nullptr;
      entry["by_rejected"] = nullptr;
    }
    Json f;
    f["estimator"] = std::string(to_string(id));
    f["tests"] = pvals.size();
    f["alpha"] = opts.alpha;
    f["unadjusted_rejections"] = raw_rejections;
    f["bh_rejections"] = bh.rejections();
    f["by_rejections"] = by.rejections();
    fdr.push_back(std::move(f));
  }
  doc["contrasts"] = std::move(contrasts);
  doc["fdr"] = std::move(fdr);
  return render(doc);
}

std::string cmd_subgroup(const SubgroupOptions& opts) {
  const AnalysisOptions& a = opts.analysis;
  const Batch b = load_batch(a);
  if (opts.subgroup_min_arm == 0) throw ConfigError("--subgroup-min-arm must be positive");
  std::vector<std::size_t> covs;
  if (opts.covariates.empty()) {
    for (std::size_t j = 0; j < b.covariate_names.size(); ++j) covs.push_back(j);
  } else {
    for (const std::string& name : opts.covariates) {
      const auto pos = std::find(b.covariate_names.begin(), b.covariate_names.end(), name);
      if (pos == b.covariate_names.end()) throw ConfigError("unknown covariate '" + name + "'");
      covs.push_back(static_cast<std::size_t>(pos - b.covariate_names.begin()));
    }
  }
  const EstimationPlan plan = make_plan(a);
  const std::size_t C = b.contrasts.size();
  std::vector<ValidationVerdict> verdicts(C);
  for (std::size_t c = 0; c < C; ++c) verdicts[c] = validate(b.contrasts[c], a);
  std::vector<ContrastDataset> eligible;
  for (std::size_t c = 0; c < C; ++c) {
    if (verdicts[c].eligible) eligible.push_back(b.contrasts[c]);
  }
  std::vector<SubgroupScheme> schemes;
  if (!eligible.empty()) {
    for (std::size_t cov : covs) schemes.push_back(make_scheme(eligible, cov));
  }

  // One work item per (contrast, scheme).
  const std::size_t S = schemes.size();
  std::vector<std::vector<SubgroupResult>> results(C * S);
  parallel_for(C * S, a.threads, [&](std::size_t idx) {
    const std::size_t c = idx / S;
    if (!verdicts[c].eligible) return;
    results[idx] = estimate_subgroups(b.contrasts[c], schemes[idx % S], plan,
                                      opts.subgroup_min_arm);
  });

  Json doc = header("subgroup", a.seed);
  Json cfg = config_echo(a);
  cfg["covariates"] = opts.covariates;
  cfg["subgroup_min_arm"] = opts.subgroup_min_arm;
  doc["config"] = std::move(cfg);
  Json sj = Json::array();
  for (const auto& s : schemes) {
    sj.push_back({{"covariate", s.covariate_name}, {"q_lo", s.q_lo}, {"q_hi", s.q_hi}});
  }
  doc["schemes"] = std::move(sj);

  std::size_t considered = 0, estimated = 0, skipped = 0, produced = 0;
  Json contrasts = Json::array();
  for (std::size_t c = 0; c < C; ++c) {
    const ContrastDataset& ds = b.contrasts[c];
    Json j;
    j["contrast_id"] = ds.contrast_id();
    j["validation"] =
        verdict_json(verdicts[c], a.min_arm.value_or(default_min_per_arm(ds.k())));
    if (!verdicts[c].eligible) {
      j["subgroups"] = nullptr;
      contrasts.push_back(std::move(j));
      continue;
    }
    Json subs = Json::array();
    for (std::size_t s = 0; s < S; ++s) {
      for (const SubgroupResult& r : results[c * S + s]) {
        ++considered;
        Json g;
        g["covariate"] = schemes[s].covariate_name;
        g["side"] = std::string(to_string(r.side));
        g["n1"] = r.n1;
        g["n0"] = r.n0;
        g["skipped"] = r.skipped ? Json(std::string(to_string(*r.skipped))) : Json(nullptr);
        if (r.skipped) {
          ++skipped;
          g["estimates"] = nullptr;
        } else {
          ++estimated;
          for (const auto& o : r.outcomes) produced += o.estimate.has_value();
          g["estimates"] = outcomes_json(r.outcomes, a.alpha);
        }
        subs.push_back(std::move(g));
      }
    }
    j["subgroups"] = std::move(subs);
    contrasts.push_back(std::move(j));
  }
  doc["contrasts"] = std::move(contrasts);
  doc["summary"] = {{"subgroups", considered},
                    {"estimated", estimated},
                    {"skipped", skipped},
                    {"estimates_produced", produced}};
  return render(doc);
}

std::string cmd_poststratify(const PoststratOptions& opts) {
  const AnalysisOptions& a = opts.analysis;
  const Batch b = load_batch(a);
  const PopulationWeights weights = io::load_weights(opts.weights);
  if (opts.subgroup_min_arm == 0) throw ConfigError("--subgroup-min-arm must be positive");
  for (const auto& ds : b.contrasts) {
    for (const auto& u : ds.units()) {
      if (!u.group) {
        throw DataError("column 'group': unit '" + u.unit_id + "' of contrast '" +
                        ds.contrast_id() + "' has no group label");
      }
      if (!weights.weight(*u.group)) {
        throw DataError("column 'group': label '" + *u.group + "' has no population weight");
      }
    }
  }
  const EstimationPlan plan = make_plan(a);
  const auto& shares = weights.shares();
  const std::size_t C = b.contrasts.size();
  const std::size_t G = shares.size();
  std::vector<ValidationVerdict> verdicts(C);
  for (std::size_t c = 0; c < C; ++c) verdicts[c] = validate(b.contrasts[c], a);

  struct GroupRun {
    std::size_t n = 0, n1 = 0, n0 = 0;
    std::optional<RejectionReason> skipped;
    std::vector<EstimatorOutcome> outcomes;
  };
  std::vector<GroupRun> runs(C * G);
  parallel_for(C * G, a.threads, [&](std::size_t idx) {
    const std::size_t c = idx / G;
    if (!verdicts[c].eligible) return;
    const std::string& label = shares[idx % G].first;
    const ContrastDataset sub =
        b.contrasts[c].filter([&](const UnitRecord& u) { return *u.group == label; });
    GroupRun& r = runs[idx];
    r.n = sub.n();
    r.n1 = sub.n_treated();
    r.n0 = sub.n_control();
    if (std::min(r.n1, r.n0) < opts.subgroup_min_arm) {
      r.skipped = RejectionReason::ArmTooSmall;
    } else if (validate_contrast(sub, 1, 0.5).has(RejectionReason::ZeroOutcomeVariance)) {
      r.skipped = RejectionReason::ZeroOutcomeVariance;
    } else {
      r.outcomes = estimate_all(sub, plan);
    }
  });

  Json doc = header("poststratify", a.seed);
  Json cfg = config_echo(a);
  cfg["weights"] = opts.weights;
  cfg["subgroup_min_arm"] = opts.subgroup_min_arm;
  doc["config"] = std::move(cfg);
  Json wj = Json::array();
  for (const auto& [label, pi] : shares) wj.push_back({{"group", label}, {"pi", pi}});
  doc["weights"] = std::move(wj);

  Json contrasts = Json::array();
  for (std::size_t c = 0; c < C; ++c) {
    const ContrastDataset& ds = b.contrasts[c];
    Json j;
    j["contrast_id"] = ds.contrast_id();
    j["validation"] =
        verdict_json(verdicts[c], a.min_arm.value_or(default_min_per_arm(ds.k())));
    if (!verdicts[c].eligible) {
      j["groups"] = nullptr;
      j["post_stratified"] = nullptr;
      contrasts.push_back(std::move(j));
      continue;
    }
    Json groups = Json::array();
    for (std::size_t g = 0; g < G; ++g) {
      const GroupRun& r = runs[c * G + g];
      Json gj;
      gj["group"] = shares[g].first;
      gj["pi"] = shares[g].second;
      gj["sample_share"] = static_cast<double>(r.n) / static_cast<double>(ds.n());
      gj["n1"] = r.n1;
      gj["n0"] = r.n0;
      gj["skipped"] = r.skipped ? Json(std::string(to_string(*r.skipped))) : Json(nullptr);
      gj["estimates"] = r.skipped ? Json(nullptr) : outcomes_json(r.outcomes, a.alpha);
      groups.push_back(std::move(gj));
    }
    j["groups"] = std::move(groups);

    Json post = Json::array();
    for (EstimatorId id : plan.estimators) {
      std::map<std::string, EffectEstimate> per_group;
      std::string missing;
      for (std::size_t g = 0; g < G; ++g) {
        const EffectEstimate* e = find_estimate(runs[c * G + g].outcomes, id);
        if (e) {
          per_group.emplace(shares[g].first, *e);
        } else if (missing.empty()) {
          missing = shares[g].first;
        }
      }
      EstimatorOutcome o;
      o.estimator = id;
      if (missing.empty()) {
        o.estimate = post_stratify(per_group, weights);
      } else {
        o.skip_reason = "no estimate for group '" + missing + "'";
      }
      Json pj = outcome_json(o, {}, a.alpha);
      pj.erase("variance_ratio");
      post.push_back(std::move(pj));
    }
    j["post_stratified"] = std::move(post);
    contrasts.push_back(std::move(j));
  }
  doc["contrasts"] = std::move(contrasts);
  return render(doc);
}

std::string cmd_simulate(const SimulateOptions& opts) {
  io::ScenarioConfig cfg = io::load_scenario_file(opts.config);
  cfg.forest.seed = opts.seed;
  for (const std::string& base : cfg.baselines) {
    const auto id = parse_estimator_id(base);
    if (!id || std::find(cfg.estimators.begin(), cfg.estimators.end(), *id) ==
                   cfg.estimators.end()) {
      throw ConfigError("baseline '" + base + "' is not among the simulated estimators");
    }
  }
  const SyntheticDraw draw = gen_synthetic(cfg.spec, opts.seed);
  const SyntheticPopulation& pop = draw.population;
  std::vector<Pipeline> pipelines;
  for (EstimatorId id : cfg.estimators) pipelines.push_back(estimator_pipeline(id, cfg.forest));

  Json doc = header("simulate", opts.seed);
  doc["config"] = io::to_json(cfg);
  Json pj;
  pj["n"] = pop.n();
  pj["sate"] = pop.sate();
  const double share = pop.group_share();
  pj["group_share"] = share;
  if (share > 0.0 && share < 1.0) {
    const double t1 = pop.group_effect("G1");
    const double t2 = pop.group_effect("G2");
    pj["pate"] = pop.pate();
    pj["external_bias"] = decompose_bias(share, cfg.spec.group_share_population, t1, t2);
  } else {
    pj["pate"] = nullptr;
    pj["external_bias"] = nullptr;
  }
  doc["population"] = std::move(pj);

  Json results = Json::array();
  if (cfg.mode == io::SimulationMode::Exact) {
    for (const Pipeline& p : pipelines) {
      const ExactMoments m = exact_expectation(pop, p, opts.threads);
      Json r;
      r["estimator"] = p.name;
      r["mean_tau"] = m.mean_tau;
      r["bias"] = m.mean_tau - m.sate;
      r["var_tau"] = m.var_tau;
      r["mean_var_hat"] = m.mean_var_hat;
      r["mass"] = m.mass;
      r["assignments"] = m.assignments;
      results.push_back(std::move(r));
    }
  } else {
    const MonteCarloSummary s = monte_carlo(pop, pipelines, cfg.replications, opts.seed,
                                            cfg.alpha, cfg.baselines, opts.threads);
    for (const MonteCarloStats& st : s.pipelines) {
      Json r;
      r["estimator"] = st.name;
      r["replications"] = st.replications;
      r["failures"] = st.failures;
      r["mean_tau"] = st.mean_tau;
      r["bias"] = st.bias;
      r["bias_se"] = st.bias_se;
      r["emp_var"] = st.emp_var;
      r["mean_var_hat"] = st.mean_var_hat;
      r["coverage"] = st.coverage;
      r["coverage_se"] = st.coverage_se;
      Json ratios = Json::object();
      for (const auto& [base, ratio] : st.variance_ratios) ratios[base] = ratio;
      r["variance_ratio"] = std::move(ratios);
      results.push_back(std::move(r));
    }
  }
  doc["mode"] = cfg.mode == io::SimulationMode::Exact ? "exact" : "monte_carlo";
  doc["results"] = std::move(results);
  return render(doc);
}

std::string cmd_remnant_train(const RemnantTrainOptions& opts) {
  const io::RemnantTable t = io::load_remnant_table(opts.input, opts.features);
  const RemnantModel model = train_remnant(t.features, t.outcomes, opts.lambda, t.names);
  return render(to_json(model));
}

std::string cmd_remnant_predict(const RemnantPredictOptions& opts) {
  const io::ContrastBatch batch = io::load_contrasts_file(opts.input);
  const RemnantModel model = load_remnant_model(opts.model);
  std::ostringstream out;
  out << "contrast_id,unit_id,yhat_r\n";
  for (const auto& ds : batch.contrasts) {
    const ContrastDataset with = io::attach_remnant(ds, model);
    for (const auto& u : with.units()) {
      out << io::csv_field(ds.contrast_id()) << ',' << io::csv_field(u.unit_id) << ','
          << io::format_double(*u.yhat_r) << '\n';
    }
  }
  return out.str();
}

nlohmann::ordered_json error_record(const std::exception& e) {
  Json err;
  const auto* re = dynamic_cast<const Error*>(&e);
  err["kind"] = re ? re->kind() : "InternalError";
  err["message"] = e.what();
  if (const auto* pe = dynamic_cast<const ParseError*>(&e)) {
    err["line"] = pe->line() ? Json(pe->line()) : Json(nullptr);
    err["column"] = pe->column() ? Json(pe->column()) : Json(nullptr);
  } else {
    err["line"] = nullptr;
    err["column"] = nullptr;
  }
  return Json{{"error", err}};
}

int exit_code(const std::exception& e) {
  if (dynamic_cast<const PreconditionError*>(&e)) return 3;
  if (dynamic_cast<const Error*>(&e)) return 2;
  return 1;
}

}  // namespace reloop::cli
