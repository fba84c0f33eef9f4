#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tplrecon/attacks.hpp"
#include "tplrecon/matcher.hpp"
#include "tplrecon/synth.hpp"

namespace tplrecon {

/// SED: squared distance. Cosine: 1 - cosine similarity. 0 means exact.
double reconstruction_loss(const Template& f_hat, const Template& f, Metric metric);

/// Whether the reconstruction would itself be accepted against `f`.
bool passes_system(const Template& f_hat, const Template& f, const Threshold& threshold);

/// Template-space analogue of the different-sample/same-extractor scenario:
/// fraction of fresh samples of `identity` that `f_hat` matches.
double scenario_disfe(const Template& f_hat, const IdentityModel& model,
                      std::size_t identity, const Threshold& threshold,
                      std::size_t trials, RngSeed seed);

enum class AttackKind { kScoreSed, kScoreCosine, kHillClimb, kBinaryBaseline, kBinaryOurs };

const char* attack_name(AttackKind kind) noexcept;
AttackKind parse_attack(const std::string& name);

struct AttackSpec {
  AttackKind kind = AttackKind::kScoreSed;
  HillClimbConfig hill{};
  unsigned precision = 20;
  // Attacker's threshold estimate as a multiple of the calibrated threshold.
  double threshold_scale = 1.0;
  // Baseline breaking-set size; empty matches binary-ours' queries on the
  // same target (or P*(d+1) + 1/FMR when binary-ours is not selected).
  std::optional<std::size_t> baseline_budget;
};

struct ExperimentConfig {
  IdentityModelParams model{};
  std::optional<std::filesystem::path> model_dir;
  Metric metric = Metric::kSed;
  std::vector<double> fmrs{0.01};
  std::size_t calibration_pairs = 100000;
  std::vector<AttackSpec> attacks;
  std::size_t targets = 50;
  RngSeed seed{7};
  double oracle_sigma = 0.0;
  std::optional<std::uint64_t> query_limit;
  // Breaking set for binary-ours; 0 picks ceil(20 / fmr).
  std::size_t breaking_set_size = 0;
  std::size_t disfe_trials = 100;
  unsigned jobs = 1;
  // When false, time_s is written as 0 so reruns are byte-identical.
  bool record_time = true;

  void validate() const;
};

ExperimentConfig experiment_config_from_json(const std::string& text);
std::string experiment_config_to_json(const ExperimentConfig& config);

struct ExperimentRow {
  std::size_t identity = 0;
  std::string attack;
  Metric metric = Metric::kSed;
  double fmr = 0.0;
  bool ok = true;
  std::string error;
  double loss = 0.0;  // NaN for failed rows
  std::uint64_t queries = 0;
  double time_s = 0.0;
  bool passed = false;
  std::uint64_t seed_queries = 0;
  std::uint64_t redraws = 0;
  double disfe_rate = 0.0;
  // Baseline only: loss of the running average after k accepted points.
  std::vector<double> convergence;
};

struct AggregateRow {
  std::string attack;
  double fmr = 0.0;
  std::size_t rows = 0;
  std::size_t failures = 0;
  double mean_loss = 0.0;
  double std_loss = 0.0;
  double median_loss = 0.0;
  double mean_queries = 0.0;
  double success_rate = 0.0;
};

struct CalibrationRecord {
  double fmr = 0.0;
  double threshold = 0.0;
  double achieved_fmr = 0.0;
  std::size_t sample_size = 0;
};

struct ExperimentReport {
  std::string config_json;
  std::vector<CalibrationRecord> calibration;
  std::vector<ExperimentRow> rows;
  std::vector<AggregateRow> aggregates;
};

ExperimentReport run_experiment(const ExperimentConfig& config);
ExperimentReport run_experiment(const ExperimentConfig& config, const IdentityModel& model);

std::vector<AggregateRow> compute_aggregates(const std::vector<ExperimentRow>& rows);

enum class ReportFormat { kCsv, kJson };

std::string report_to_csv(const ExperimentReport& report);
std::string report_to_json(const ExperimentReport& report);
/// Throws kParse if stored aggregates disagree with the rows.
ExperimentReport report_from_json(const std::string& text);
bool reports_equal(const ExperimentReport& a, const ExperimentReport& b);
void emit_report(const ExperimentReport& report, ReportFormat format,
                 const std::filesystem::path& path);
ExperimentReport load_report(const std::filesystem::path& path);

struct ConvergencePoint {
  double fmr = 0.0;
  std::size_t accepted = 0;
  double mean_loss = 0.0;
  std::size_t targets = 0;
};

/// Mean baseline loss after k accepted points, over targets that reached k.
std::vector<ConvergencePoint> baseline_convergence(const ExperimentReport& report);
std::string convergence_to_csv(const std::vector<ConvergencePoint>& points);

std::string report_summary(const ExperimentReport& report);

}  // namespace tplrecon
