#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tplrecon/rng.hpp"
#include "tplrecon/template.hpp"

namespace tplrecon {

struct MatchScore {
  double value = 0.0;
  Metric metric = Metric::kSed;
};

/// Decision threshold. SED accepts score <= value, cosine accepts
/// score >= value; equality accepts in both cases.
class Threshold {
 public:
  Threshold(double value, Metric metric);

  double value() const noexcept { return value_; }
  Metric metric() const noexcept { return metric_; }
  bool accepts(double score) const noexcept {
    return metric_ == Metric::kSed ? score <= value_ : score >= value_;
  }

 private:
  double value_;
  Metric metric_;
};

double sed(std::span<const double> a, std::span<const double> b);
MatchScore sed_score(const Template& a, const Template& b);
MatchScore cosine_score(const Template& a, const Template& b);
MatchScore match_score(Metric metric, const Template& a, const Template& b);

struct CalibrationResult {
  Threshold threshold;
  double achieved_fmr = 0.0;
  std::size_t sample_size = 0;
  // Fewer than 1/target_fmr samples were supplied.
  bool undersampled = false;
};

/// Empirical-quantile threshold that never accepts more than
/// floor(target_fmr * n) of the supplied impostor scores.
CalibrationResult calibrate_threshold(std::span<const MatchScore> impostor_scores,
                                      double target_fmr);
CalibrationResult calibrate_threshold(Metric metric,
                                      std::span<const double> impostor_scores,
                                      double target_fmr);

enum class OracleMode { kScoreReleasing, kBinaryOnly };

const char* mode_name(OracleMode mode) noexcept;
OracleMode parse_mode(const std::string& name);

struct OracleConfig {
  Metric metric = Metric::kSed;
  OracleMode mode = OracleMode::kScoreReleasing;
  std::optional<Threshold> threshold;
  double score_noise_sigma = 0.0;
  std::optional<std::uint64_t> query_limit;
  RngSeed noise_seed{};

  void validate() const;
};

class QueryLedger {
 public:
  void record(const std::string& claim);
  void reset();

  std::uint64_t count() const noexcept { return count_; }
  std::uint64_t count_for(const std::string& claim) const;
  const std::map<std::string, std::uint64_t>& per_identity() const noexcept {
    return per_identity_;
  }

 private:
  std::uint64_t count_ = 0;
  std::map<std::string, std::uint64_t> per_identity_;
};

/// What an attack sees: a black box that answers authentication attempts.
/// Local and remote oracles implement the same contract.
class MatchingOracle {
 public:
  virtual ~MatchingOracle() = default;

  virtual MatchScore authenticate_score(std::string_view claim,
                                        const Template& probe) = 0;
  virtual bool authenticate_binary(std::string_view claim,
                                   const Template& probe) = 0;
  // Authentication attempts served to this client so far.
  virtual std::uint64_t queries() const = 0;
};

/// In-process matching module. Enrolled templates never leave the object;
/// only scores or accept/reject bits do. Calls are serialized internally.
class Oracle final : public MatchingOracle {
 public:
  explicit Oracle(OracleConfig config);

  void enroll(const std::string& claim, Template enrolled);
  bool is_enrolled(std::string_view claim) const;
  std::optional<std::size_t> enrolled_dim(std::string_view claim) const;

  MatchScore authenticate_score(std::string_view claim,
                                const Template& probe) override;
  bool authenticate_binary(std::string_view claim, const Template& probe) override;
  std::uint64_t queries() const override;

  QueryLedger ledger() const;
  void reset_ledger();
  const OracleConfig& config() const noexcept { return config_; }

 private:
  double noisy_score(const std::string& claim, const Template& probe);

  OracleConfig config_;
  std::map<std::string, Template, std::less<>> enrolled_;
  QueryLedger ledger_;
  Rng noise_rng_;
  mutable std::mutex mutex_;
};

}  // namespace tplrecon
