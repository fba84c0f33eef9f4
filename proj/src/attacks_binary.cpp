#include <chrono>
#include <cmath>

#include "tplrecon/attacks.hpp"

namespace tplrecon {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<double> midpoint(std::span<const double> a, std::span<const double> b) {
  std::vector<double> m(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) m[j] = 0.5 * (a[j] + b[j]);
  return m;
}

}  // namespace

ReconstructionResult attack_binary_baseline(MatchingOracle& oracle, std::string_view claim,
                                            const BreakingSet& breaking_set) {
  if (breaking_set.size() == 0) {
    throw Error(ErrorCode::kInvalidArgument, "empty breaking set");
  }
  const auto start = Clock::now();
  const std::uint64_t before = oracle.queries();
  const std::size_t dim = breaking_set.members.front().dim();

  std::vector<double> sum(dim, 0.0);
  std::vector<std::size_t> accepted;
  for (std::size_t k = 0; k < breaking_set.size(); ++k) {
    const Template& b = breaking_set.members[k];
    if (oracle.authenticate_binary(claim, b)) {
      accepted.push_back(k);
      for (std::size_t j = 0; j < dim; ++j) sum[j] += b[j];
    }
  }
  if (accepted.empty()) {
    throw Error(ErrorCode::kNoFalseMatch, "no false match found");
  }
  for (double& x : sum) x /= static_cast<double>(accepted.size());

  ReconstructionResult result{Template(std::move(sum)), oracle.queries() - before,
                              seconds_since(start), "binary-baseline"};
  result.params["breaking_set_size"] = static_cast<double>(breaking_set.size());
  result.params["accepted"] = static_cast<double>(accepted.size());
  result.accepted_indices = std::move(accepted);
  return result;
}

SeedMatch find_seed_match(MatchingOracle& oracle, std::string_view claim,
                          const BreakingSet& breaking_set, std::size_t max_attempts) {
  const std::size_t limit =
      max_attempts == 0 ? breaking_set.size() : std::min(max_attempts, breaking_set.size());
  for (std::size_t k = 0; k < limit; ++k) {
    if (oracle.authenticate_binary(claim, breaking_set.members[k])) {
      return SeedMatch{breaking_set.members[k], k + 1, k};
    }
  }
  throw Error(ErrorCode::kNoFalseMatch,
              "no false match found in " + std::to_string(limit) + " attempts");
}

BoundaryPoint boundary_point(MatchingOracle& oracle, std::string_view claim,
                             const Template& inside, const BoundaryConfig& config,
                             RngSeed seed) {
  if (!(config.threshold_estimate > 0.0) || !std::isfinite(config.threshold_estimate)) {
    throw Error(ErrorCode::kInvalidArgument, "threshold estimate must be > 0");
  }
  if (config.precision == 0) throw Error(ErrorCode::kInvalidArgument, "precision must be >= 1");

  const std::size_t dim = inside.dim();
  const auto c = inside.values();
  const std::uint64_t before = oracle.queries();
  unsigned redraws = 0;
  std::uint64_t draw_index = 0;

  for (int stage = 0; stage < 2; ++stage) {
    const double estimate = config.threshold_estimate * (stage == 0 ? 1.0 : 2.0);
    const double reach = 2.0 * std::sqrt(estimate);
    for (unsigned draw = 0; draw <= config.max_redraws; ++draw, ++draw_index) {
      Rng rng(derive_seed(seed, "direction", draw_index));
      const auto r = random_unit_vector(rng, dim);

      std::vector<double> lo(c.begin(), c.end());
      std::vector<double> hi(dim);
      for (std::size_t j = 0; j < dim; ++j) hi[j] = c[j] + reach * r[j];
      const std::vector<double> outside = hi;

      bool saw_reject = false;
      for (unsigned p = 0; p < config.precision; ++p) {
        auto m = midpoint(lo, hi);
        if (oracle.authenticate_binary(claim, Template(m))) {
          lo = std::move(m);
        } else {
          hi = std::move(m);
          saw_reject = true;
        }
      }
      // The bracket is only valid if its outer end was actually rejected.
      if (!saw_reject && oracle.authenticate_binary(claim, Template(outside))) {
        ++redraws;
        continue;
      }
      return BoundaryPoint{Template(midpoint(lo, hi)), oracle.queries() - before, redraws,
                           stage == 1};
    }
  }
  throw Error(ErrorCode::kOutsidePointNotFound, "outside point not found; T estimate too small");
}

ReconstructionResult attack_binary_ours(MatchingOracle& oracle, std::string_view claim,
                                        std::size_t dim, const BinaryAttackConfig& config,
                                        const BreakingSet& breaking_set, RngSeed seed) {
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "dim must be >= 1");
  if (config.precision == 0) throw Error(ErrorCode::kInvalidArgument, "precision must be >= 1");
  const auto start = Clock::now();
  const std::uint64_t before = oracle.queries();

  const SeedMatch seed_match =
      find_seed_match(oracle, claim, breaking_set, config.max_seed_attempts);
  if (seed_match.match.dim() != dim) {
    throw Error(ErrorCode::kDimMismatch, "breaking set dim differs from attack dim");
  }

  const BoundaryConfig bconf{config.threshold_estimate, config.precision, config.max_redraws};
  std::uint64_t redraws = 0;
  std::vector<std::size_t> attempts(dim + 1, 0);
  auto find_point = [&](std::size_t i) {
    const RngSeed s = derive_seed(derive_seed(seed, "boundary", i), "attempt", attempts[i]);
    BoundaryPoint bp = boundary_point(oracle, claim, seed_match.match, bconf, s);
    redraws += bp.redraws;
    return std::move(bp.point);
  };

  std::vector<Template> points;
  points.reserve(dim + 1);
  for (std::size_t i = 0; i <= dim; ++i) points.push_back(find_point(i));

  std::uint64_t resamples = 0;
  std::optional<Template> center;
  while (!center) {
    try {
      center = solve_center_from_equidistant_points(points);
    } catch (const SingularSystemError& e) {
      if (resamples >= config.resample_attempts_on_singularity) throw;
      ++resamples;
      ++attempts[e.row()];
      points[e.row()] = find_point(e.row());
    }
  }

  ReconstructionResult result{std::move(*center), oracle.queries() - before,
                              seconds_since(start), "binary-ours"};
  result.params["precision"] = config.precision;
  result.params["threshold_estimate"] = config.threshold_estimate;
  result.seed_queries = seed_match.queries;
  result.redraws = redraws;
  result.resamples = resamples;
  return result;
}

}  // namespace tplrecon
