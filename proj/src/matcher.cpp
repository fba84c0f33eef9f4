#include "tplrecon/matcher.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace tplrecon {

Threshold::Threshold(double value, Metric metric) : value_(value), metric_(metric) {
  if (!std::isfinite(value)) {
    throw Error(ErrorCode::kInvalidArgument, "threshold must be finite");
  }
  if (metric == Metric::kSed && !(value > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "SED threshold must be > 0");
  }
  if (metric == Metric::kCosine && !(value > -1.0 && value < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "cosine threshold must be in (-1, 1)");
  }
}

double sed(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw Error(ErrorCode::kDimMismatch, "dim mismatch: " + std::to_string(a.size()) +
                                             " vs " + std::to_string(b.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    sum += diff * diff;
  }
  return sum;
}

MatchScore sed_score(const Template& a, const Template& b) {
  return {sed(a.values(), b.values()), Metric::kSed};
}

MatchScore cosine_score(const Template& a, const Template& b) {
  if (a.dim() != b.dim()) {
    throw Error(ErrorCode::kDimMismatch, "dim mismatch");
  }
  const double na = l2_norm(a);
  const double nb = l2_norm(b);
  if (na == 0.0 || nb == 0.0) {
    throw Error(ErrorCode::kDegenerateTemplate, "cosine of a zero vector");
  }
  double dot = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) dot += a[i] * b[i];
  return {std::clamp(dot / (na * nb), -1.0, 1.0), Metric::kCosine};
}

MatchScore match_score(Metric metric, const Template& a, const Template& b) {
  return metric == Metric::kSed ? sed_score(a, b) : cosine_score(a, b);
}

CalibrationResult calibrate_threshold(std::span<const MatchScore> impostor_scores,
                                      double target_fmr) {
  if (impostor_scores.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty impostor sample");
  }
  const Metric metric = impostor_scores.front().metric;
  std::vector<double> values;
  values.reserve(impostor_scores.size());
  for (const auto& s : impostor_scores) {
    if (s.metric != metric) {
      throw Error(ErrorCode::kInvalidArgument, "mixed metrics in impostor sample");
    }
    values.push_back(s.value);
  }
  return calibrate_threshold(metric, values, target_fmr);
}

CalibrationResult calibrate_threshold(Metric metric,
                                      std::span<const double> impostor_scores,
                                      double target_fmr) {
  if (impostor_scores.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "empty impostor sample");
  }
  if (!(target_fmr > 0.0 && target_fmr < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "target FMR must be in (0, 1)");
  }
  const std::size_t n = impostor_scores.size();

  // Sort so that the accept side comes first: ascending for SED,
  // descending for cosine.
  std::vector<double> sorted(impostor_scores.begin(), impostor_scores.end());
  if (metric == Metric::kSed) {
    std::sort(sorted.begin(), sorted.end());
  } else {
    std::sort(sorted.begin(), sorted.end(), std::greater<>());
  }

  const auto allowed =
      static_cast<std::size_t>(std::floor(target_fmr * static_cast<double>(n) + 1e-9));

  // Largest accept set of size <= allowed whose boundary sits on a sample
  // value; ties at the boundary shrink it.
  std::size_t accepted = allowed;
  while (accepted > 0 && accepted < n && sorted[accepted] == sorted[accepted - 1]) {
    --accepted;
  }
  double value = 0.0;
  if (accepted > 0) {
    value = sorted[accepted - 1];
  } else {
    const double toward = metric == Metric::kSed
                              ? -std::numeric_limits<double>::infinity()
                              : std::numeric_limits<double>::infinity();
    value = std::nextafter(sorted.front(), toward);
  }

  CalibrationResult result{Threshold(value, metric), 0.0, n, false};
  result.achieved_fmr = static_cast<double>(accepted) / static_cast<double>(n);
  result.undersampled = static_cast<double>(n) < 1.0 / target_fmr;
  return result;
}

const char* mode_name(OracleMode mode) noexcept {
  return mode == OracleMode::kScoreReleasing ? "score" : "binary";
}

OracleMode parse_mode(const std::string& name) {
  if (name == "score" || name == "score-releasing") return OracleMode::kScoreReleasing;
  if (name == "binary" || name == "binary-only") return OracleMode::kBinaryOnly;
  throw Error(ErrorCode::kInvalidArgument, "unknown oracle mode '" + name + "'");
}

void OracleConfig::validate() const {
  if (mode == OracleMode::kBinaryOnly && !threshold) {
    throw Error(ErrorCode::kInvalidArgument, "binary-only oracle requires a threshold");
  }
  if (threshold && threshold->metric() != metric) {
    throw Error(ErrorCode::kInvalidArgument, "threshold metric differs from oracle metric");
  }
  if (!(score_noise_sigma >= 0.0) || !std::isfinite(score_noise_sigma)) {
    throw Error(ErrorCode::kInvalidArgument, "score noise sigma must be >= 0");
  }
  if (query_limit && *query_limit == 0) {
    throw Error(ErrorCode::kInvalidArgument, "query limit must be positive");
  }
}

void QueryLedger::record(const std::string& claim) {
  ++count_;
  ++per_identity_[claim];
}

void QueryLedger::reset() {
  count_ = 0;
  per_identity_.clear();
}

std::uint64_t QueryLedger::count_for(const std::string& claim) const {
  const auto it = per_identity_.find(claim);
  return it == per_identity_.end() ? 0 : it->second;
}

Oracle::Oracle(OracleConfig config)
    : config_(std::move(config)), noise_rng_(config_.noise_seed) {
  config_.validate();
}

void Oracle::enroll(const std::string& claim, Template enrolled) {
  std::lock_guard lock(mutex_);
  enrolled_.insert_or_assign(claim, std::move(enrolled));
}

bool Oracle::is_enrolled(std::string_view claim) const {
  std::lock_guard lock(mutex_);
  return enrolled_.find(claim) != enrolled_.end();
}

std::optional<std::size_t> Oracle::enrolled_dim(std::string_view claim) const {
  std::lock_guard lock(mutex_);
  const auto it = enrolled_.find(claim);
  if (it == enrolled_.end()) return std::nullopt;
  return it->second.dim();
}

// Caller holds mutex_.
double Oracle::noisy_score(const std::string& claim, const Template& probe) {
  const auto it = enrolled_.find(claim);
  if (it == enrolled_.end()) {
    throw Error(ErrorCode::kUnknownIdentity, "unknown identity '" + claim + "'");
  }
  if (it->second.dim() != probe.dim()) {
    throw Error(ErrorCode::kDimMismatch, "probe dim " + std::to_string(probe.dim()) +
                                             " does not match enrollment");
  }
  if (config_.query_limit && ledger_.count() >= *config_.query_limit) {
    throw Error(ErrorCode::kLockedOut, "locked out");
  }
  double value = match_score(config_.metric, it->second, probe).value;
  if (config_.score_noise_sigma > 0.0) {
    value += config_.score_noise_sigma * noise_rng_.normal();
  }
  ledger_.record(claim);
  return value;
}

MatchScore Oracle::authenticate_score(std::string_view claim, const Template& probe) {
  if (config_.mode != OracleMode::kScoreReleasing) {
    throw Error(ErrorCode::kWrongMode, "oracle does not release scores");
  }
  std::lock_guard lock(mutex_);
  return {noisy_score(std::string(claim), probe), config_.metric};
}

bool Oracle::authenticate_binary(std::string_view claim, const Template& probe) {
  if (config_.mode != OracleMode::kBinaryOnly) {
    throw Error(ErrorCode::kWrongMode, "oracle is not in binary-only mode");
  }
  std::lock_guard lock(mutex_);
  return config_.threshold->accepts(noisy_score(std::string(claim), probe));
}

std::uint64_t Oracle::queries() const {
  std::lock_guard lock(mutex_);
  return ledger_.count();
}

QueryLedger Oracle::ledger() const {
  std::lock_guard lock(mutex_);
  return ledger_;
}

void Oracle::reset_ledger() {
  std::lock_guard lock(mutex_);
  ledger_.reset();
}

}  // namespace tplrecon
