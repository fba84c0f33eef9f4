#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "tplrecon/eval.hpp"

namespace tplrecon {
namespace {

std::vector<std::size_t> pick_targets(std::size_t identities, std::size_t count, RngSeed seed) {
  std::vector<std::size_t> ids(identities);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng(derive_seed(seed, "targets"));
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + rng.below(identities - i);
    std::swap(ids[i], ids[j]);
  }
  ids.resize(count);
  return ids;
}

std::vector<double> running_average_losses(const BreakingSet& set,
                                           const std::vector<std::size_t>& accepted,
                                           const Template& truth, Metric metric) {
  std::vector<double> losses;
  losses.reserve(accepted.size());
  std::vector<double> sum(truth.dim(), 0.0);
  std::vector<double> avg(truth.dim());
  for (std::size_t k = 0; k < accepted.size(); ++k) {
    const Template& m = set.members[accepted[k]];
    for (std::size_t j = 0; j < sum.size(); ++j) {
      sum[j] += m[j];
      avg[j] = sum[j] / static_cast<double>(k + 1);
    }
    losses.push_back(reconstruction_loss(Template(avg), truth, metric));
  }
  return losses;
}

struct UnitContext {
  const ExperimentConfig& config;
  const IdentityModel& model;
  const std::vector<CalibrationResult>& calibrations;
};

// All attacks for one (target, fmr). binary-ours runs before the baseline so
// the baseline can be given the same query budget.
std::vector<ExperimentRow> run_unit(const UnitContext& ctx, std::size_t target,
                                    std::size_t fmr_index) {
  const ExperimentConfig& cfg = ctx.config;
  const IdentityModel& model = ctx.model;
  const double fmr = cfg.fmrs[fmr_index];
  const Threshold threshold = ctx.calibrations[fmr_index].threshold;
  const Template truth = enrollment_template(model, target, cfg.metric,
                                             derive_seed(cfg.seed, "enroll"));
  const std::string claim = std::to_string(target);
  const std::size_t dim = model.dim();
  const bool unit = unit_for(cfg.metric);
  const RngSeed bset_seed = derive_seed(cfg.seed, "breaking-set", target);

  std::vector<std::size_t> order(cfg.attacks.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_partition(order.begin(), order.end(), [&](std::size_t i) {
    return cfg.attacks[i].kind == AttackKind::kBinaryOurs;
  });

  std::optional<std::uint64_t> ours_queries;
  unsigned ours_precision = 20;
  std::vector<ExperimentRow> rows(cfg.attacks.size());

  for (std::size_t ai : order) {
    const AttackSpec& spec = cfg.attacks[ai];
    ExperimentRow row;
    row.identity = target;
    row.attack = attack_name(spec.kind);
    row.metric = cfg.metric;
    row.fmr = fmr;

    const bool binary =
        spec.kind == AttackKind::kBinaryBaseline || spec.kind == AttackKind::kBinaryOurs;
    OracleConfig oc;
    oc.metric = cfg.metric;
    oc.mode = binary ? OracleMode::kBinaryOnly : OracleMode::kScoreReleasing;
    oc.threshold = threshold;
    oc.score_noise_sigma = cfg.oracle_sigma;
    oc.query_limit = cfg.query_limit;
    oc.noise_seed = derive_seed(derive_seed(cfg.seed, "noise", target),
                                row.attack + "@" + std::to_string(fmr_index));
    Oracle oracle(oc);
    oracle.enroll(claim, truth);
    const RngSeed attack_seed = derive_seed(cfg.seed, "attack:" + row.attack, target);

    try {
      ReconstructionResult res = [&]() -> ReconstructionResult {
        switch (spec.kind) {
          case AttackKind::kScoreSed:
            return attack_score_sed(oracle, claim, dim, attack_seed);
          case AttackKind::kScoreCosine:
            return attack_score_cosine(oracle, claim, dim, attack_seed);
          case AttackKind::kHillClimb:
            return hill_climb(oracle, claim, dim, spec.hill, attack_seed);
          case AttackKind::kBinaryOurs: {
            const std::size_t size = cfg.breaking_set_size
                                         ? cfg.breaking_set_size
                                         : static_cast<std::size_t>(std::ceil(20.0 / fmr));
            const BreakingSet set = gen_breaking_set(model, target, size, unit, bset_seed);
            BinaryAttackConfig bc;
            bc.precision = spec.precision;
            bc.threshold_estimate = threshold.value() * spec.threshold_scale;
            return attack_binary_ours(oracle, claim, dim, bc, set, attack_seed);
          }
          case AttackKind::kBinaryBaseline: {
            std::size_t size = 0;
            if (spec.baseline_budget) {
              size = *spec.baseline_budget;
            } else if (ours_queries) {
              size = static_cast<std::size_t>(*ours_queries);
            } else {
              size = static_cast<std::size_t>(ours_precision) * (dim + 1) +
                     static_cast<std::size_t>(std::llround(1.0 / fmr));
            }
            const BreakingSet set = gen_breaking_set(model, target, size, unit, bset_seed);
            auto r = attack_binary_baseline(oracle, claim, set);
            row.convergence = running_average_losses(set, r.accepted_indices, truth, cfg.metric);
            return r;
          }
        }
        throw Error(ErrorCode::kInternal, "unhandled attack");
      }();
      row.loss = reconstruction_loss(res.recovered, truth, cfg.metric);
      row.queries = res.queries_used;
      row.time_s = cfg.record_time ? res.wall_time_seconds : 0.0;
      row.passed = passes_system(res.recovered, truth, threshold);
      row.seed_queries = res.seed_queries;
      row.redraws = res.redraws;
      row.disfe_rate = cfg.disfe_trials == 0
                           ? 0.0
                           : scenario_disfe(res.recovered, model, target, threshold,
                                            cfg.disfe_trials,
                                            derive_seed(cfg.seed, "disfe", target));
      if (spec.kind == AttackKind::kBinaryOurs) {
        ours_queries = res.queries_used;
        ours_precision = spec.precision;
      }
    } catch (const Error& e) {
      row.ok = false;
      row.error = std::string(error_code_name(e.code())) + ": " + e.what();
      row.loss = std::numeric_limits<double>::quiet_NaN();
      row.queries = oracle.queries();
      row.passed = false;
    }
    rows[ai] = std::move(row);
  }
  return rows;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  if (config.model_dir) {
    const IdentityModel model = load_model(*config.model_dir);
    return run_experiment(config, model);
  }
  return run_experiment(config, gen_identity_model(config.model));
}

ExperimentReport run_experiment(const ExperimentConfig& config, const IdentityModel& model) {
  config.validate();
  if (config.targets > model.num_identities()) {
    throw Error(ErrorCode::kInvalidArgument, "more targets than identities");
  }

  ExperimentReport report;
  report.config_json = experiment_config_to_json(config);

  std::vector<CalibrationResult> calibrations;
  for (double fmr : config.fmrs) {
    calibrations.push_back(calibrate_from_model(model, config.metric, fmr,
                                                config.calibration_pairs,
                                                derive_seed(config.seed, "calibration")));
    const auto& c = calibrations.back();
    report.calibration.push_back({fmr, c.threshold.value(), c.achieved_fmr, c.sample_size});
  }

  const auto targets = pick_targets(model.num_identities(), config.targets, config.seed);
  const std::size_t units = targets.size() * config.fmrs.size();
  std::vector<std::vector<ExperimentRow>> results(units);
  const UnitContext ctx{config, model, calibrations};

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t u = next++; u < units; u = next++) {
      results[u] = run_unit(ctx, targets[u / config.fmrs.size()], u % config.fmrs.size());
    }
  };
  const unsigned jobs = std::min<std::size_t>(config.jobs, units);
  if (jobs <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }

  for (auto& unit_rows : results) {
    for (auto& r : unit_rows) report.rows.push_back(std::move(r));
  }
  report.aggregates = compute_aggregates(report.rows);
  return report;
}

}  // namespace tplrecon
