#include "tplrecon/eval.hpp"

#include <cmath>

#include <json.hpp>

namespace tplrecon {

using nlohmann::json;

double reconstruction_loss(const Template& f_hat, const Template& f, Metric metric) {
  if (f_hat.dim() != f.dim()) throw Error(ErrorCode::kDimMismatch, "dim mismatch");
  if (metric == Metric::kSed) return sed_score(f_hat, f).value;
  return 1.0 - cosine_score(f_hat, f).value;
}

bool passes_system(const Template& f_hat, const Template& f, const Threshold& threshold) {
  return threshold.accepts(match_score(threshold.metric(), f_hat, f).value);
}

double scenario_disfe(const Template& f_hat, const IdentityModel& model,
                      std::size_t identity, const Threshold& threshold,
                      std::size_t trials, RngSeed seed) {
  if (trials == 0) throw Error(ErrorCode::kInvalidArgument, "empty trial set");
  if (identity >= model.num_identities()) {
    throw Error(ErrorCode::kUnknownIdentity, "identity not in model");
  }
  const bool unit = unit_for(threshold.metric());
  std::size_t hits = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const Template fresh = sample_template(model, identity, unit, derive_seed(seed, "disfe", t));
    if (passes_system(f_hat, fresh, threshold)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

const char* attack_name(AttackKind kind) noexcept {
  switch (kind) {
    case AttackKind::kScoreSed: return "score-sed";
    case AttackKind::kScoreCosine: return "score-cos";
    case AttackKind::kHillClimb: return "hill";
    case AttackKind::kBinaryBaseline: return "binary-baseline";
    case AttackKind::kBinaryOurs: return "binary-ours";
  }
  return "unknown";
}

AttackKind parse_attack(const std::string& name) {
  for (auto k : {AttackKind::kScoreSed, AttackKind::kScoreCosine, AttackKind::kHillClimb,
                 AttackKind::kBinaryBaseline, AttackKind::kBinaryOurs}) {
    if (name == attack_name(k)) return k;
  }
  throw Error(ErrorCode::kInvalidArgument, "unknown attack '" + name + "'");
}

void ExperimentConfig::validate() const {
  if (attacks.empty()) throw Error(ErrorCode::kInvalidArgument, "attack list is empty");
  if (fmrs.empty()) throw Error(ErrorCode::kInvalidArgument, "no FMR targets");
  for (double f : fmrs) {
    if (!(f > 0.0 && f < 1.0)) throw Error(ErrorCode::kInvalidArgument, "FMR must be in (0, 1)");
  }
  if (targets == 0) throw Error(ErrorCode::kInvalidArgument, "need at least one target");
  if (!model_dir && targets > model.num_identities) {
    throw Error(ErrorCode::kInvalidArgument, "more targets than identities");
  }
  if (calibration_pairs == 0) throw Error(ErrorCode::kInvalidArgument, "calibration_pairs must be > 0");
  if (!(oracle_sigma >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "oracle sigma must be >= 0");
  if (jobs == 0) throw Error(ErrorCode::kInvalidArgument, "jobs must be >= 1");
  for (const auto& a : attacks) {
    switch (a.kind) {
      case AttackKind::kScoreSed:
      case AttackKind::kBinaryOurs:
        if (metric != Metric::kSed) {
          throw Error(ErrorCode::kInvalidArgument,
                      std::string(attack_name(a.kind)) + " requires the sed metric");
        }
        break;
      case AttackKind::kScoreCosine:
        if (metric != Metric::kCosine) {
          throw Error(ErrorCode::kInvalidArgument, "score-cos requires the cosine metric");
        }
        break;
      default:
        break;
    }
    if (a.kind == AttackKind::kBinaryOurs && a.precision == 0) {
      throw Error(ErrorCode::kInvalidArgument, "precision must be >= 1");
    }
    if (a.kind == AttackKind::kBinaryOurs && !(a.threshold_scale > 0.0)) {
      throw Error(ErrorCode::kInvalidArgument, "threshold_scale must be > 0");
    }
  }
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  ExperimentConfig c;
  try {
    const json j = json::parse(text);
    if (j.contains("model")) {
      const auto& m = j["model"];
      c.model.dim = m.value("dim", c.model.dim);
      c.model.num_identities = m.value("identities", c.model.num_identities);
      c.model.within_noise_sigma = m.value("sigma_w", c.model.within_noise_sigma);
      c.model.center_concentration = m.value("conc", c.model.center_concentration);
      c.model.seed.value = m.value("seed", c.model.seed.value);
    }
    if (j.contains("model_dir") && !j["model_dir"].is_null()) {
      c.model_dir = j["model_dir"].get<std::string>();
    }
    c.metric = parse_metric(j.value("metric", std::string("sed")));
    if (j.contains("fmrs")) c.fmrs = j["fmrs"].get<std::vector<double>>();
    c.calibration_pairs = j.value("calibration_pairs", c.calibration_pairs);
    for (const auto& a : j.value("attacks", json::array())) {
      AttackSpec s;
      s.kind = parse_attack(a.is_string() ? a.get<std::string>() : a.at("name").get<std::string>());
      if (a.is_object()) {
        s.hill.step_size = a.value("step_size", s.hill.step_size);
        if (s.kind == AttackKind::kHillClimb && a.contains("budget")) {
          s.hill.budget = a["budget"].get<std::uint64_t>();
        }
        s.precision = a.value("precision", s.precision);
        s.threshold_scale = a.value("threshold_scale", s.threshold_scale);
        if (s.kind == AttackKind::kBinaryBaseline && a.contains("budget") &&
            a["budget"].is_number()) {
          s.baseline_budget = a["budget"].get<std::size_t>();
        }
      }
      c.attacks.push_back(s);
    }
    c.targets = j.value("targets", c.targets);
    c.seed.value = j.value("seed", c.seed.value);
    c.oracle_sigma = j.value("oracle_sigma", c.oracle_sigma);
    if (j.contains("query_limit") && !j["query_limit"].is_null()) {
      c.query_limit = j["query_limit"].get<std::uint64_t>();
    }
    c.breaking_set_size = j.value("breaking_set_size", c.breaking_set_size);
    c.disfe_trials = j.value("disfe_trials", c.disfe_trials);
    c.jobs = j.value("jobs", c.jobs);
    c.record_time = j.value("record_time", c.record_time);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("experiment config: ") + e.what());
  }
  return c;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json attacks = json::array();
  for (const auto& a : c.attacks) {
    json o = {{"name", attack_name(a.kind)}};
    switch (a.kind) {
      case AttackKind::kHillClimb:
        o["step_size"] = a.hill.step_size;
        o["budget"] = a.hill.budget;
        break;
      case AttackKind::kBinaryOurs:
        o["precision"] = a.precision;
        o["threshold_scale"] = a.threshold_scale;
        break;
      case AttackKind::kBinaryBaseline:
        if (a.baseline_budget) o["budget"] = *a.baseline_budget;
        else o["budget"] = "match";
        break;
      default:
        break;
    }
    attacks.push_back(o);
  }
  json j = {
      {"model",
       {{"dim", c.model.dim},
        {"identities", c.model.num_identities},
        {"sigma_w", c.model.within_noise_sigma},
        {"conc", c.model.center_concentration},
        {"seed", c.model.seed.value}}},
      {"metric", metric_name(c.metric)},
      {"fmrs", c.fmrs},
      {"calibration_pairs", c.calibration_pairs},
      {"attacks", attacks},
      {"targets", c.targets},
      {"seed", c.seed.value},
      {"oracle_sigma", c.oracle_sigma},
      {"query_limit", c.query_limit ? json(*c.query_limit) : json(nullptr)},
      {"breaking_set_size", c.breaking_set_size},
      {"disfe_trials", c.disfe_trials},
      {"jobs", c.jobs},
      {"record_time", c.record_time},
  };
  if (c.model_dir) j["model_dir"] = c.model_dir->string();
  return j.dump();
}

}  // namespace tplrecon
