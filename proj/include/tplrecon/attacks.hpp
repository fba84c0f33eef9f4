#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tplrecon/matcher.hpp"
#include "tplrecon/rng.hpp"
#include "tplrecon/synth.hpp"
#include "tplrecon/template.hpp"

namespace tplrecon {

struct ReconstructionResult {
  Template recovered;
  // Oracle ledger delta across the attack.
  std::uint64_t queries_used = 0;
  double wall_time_seconds = 0.0;
  std::string attack_name;
  std::map<std::string, double> params;

  // Binary attacks: attempts spent finding the first false match.
  std::uint64_t seed_queries = 0;
  // Outside points that had to be re-drawn (binary-ours).
  std::uint64_t redraws = 0;
  // Probes or boundary points replaced after a singular solve.
  std::uint64_t resamples = 0;
  // Hill climbing: initial score followed by the score of each accepted step.
  std::vector<double> score_trace;
  // Baseline: breaking-set indices of accepted members, in query order.
  std::vector<std::size_t> accepted_indices;
};

// ---- algebraic core ------------------------------------------------------

/// Center f of a set of d+1 points q_i with known squared distances s_i.
/// Subtracting the last equation |q_i - f|^2 = s_i from the others leaves the
/// linear system 2 (q_i - q_d) . f = |q_i|^2 - |q_d|^2 - (s_i - s_d).
std::vector<double> solve_center(std::span<const std::vector<double>> points,
                                 std::span<const double> squared_distances);

/// Points that share one unknown distance to the center; the radius cancels.
Template solve_center_from_equidistant_points(std::span<const Template> points);

// ---- score-releasing oracle attacks ---------------------------------------

// Produces probe `index` for retry `attempt`; tests swap in degenerate probes.
using ProbeGenerator =
    std::function<std::vector<double>(std::size_t index, std::size_t attempt)>;

struct AlgebraicAttackOptions {
  std::size_t max_resamples = 4;
  ProbeGenerator probes;  // empty: i.i.d. standard Gaussian from the seed
  // Cosine attack only: orthonormalize the default Gaussian draws (Gram-Schmidt)
  // so the probe matrix is orthogonal and score noise is not amplified.
  // Custom probe generators are used as given.
  bool orthonormal_cosine_probes = true;
};

ReconstructionResult attack_score_sed(MatchingOracle& oracle, std::string_view claim,
                                      std::size_t dim, RngSeed seed,
                                      const AlgebraicAttackOptions& options = {});

ReconstructionResult attack_score_cosine(MatchingOracle& oracle, std::string_view claim,
                                         std::size_t dim, RngSeed seed,
                                         const AlgebraicAttackOptions& options = {});

struct HillClimbConfig {
  double step_size = 0.07;
  // Perturbation queries after the initial probe; total queries = 1 + budget.
  std::uint64_t budget = 4000;
};

ReconstructionResult hill_climb(MatchingOracle& oracle, std::string_view claim,
                                std::size_t dim, const HillClimbConfig& config,
                                RngSeed seed);

// ---- binary-only oracle attacks -------------------------------------------

/// Queries every breaking-set member and averages the accepted ones.
ReconstructionResult attack_binary_baseline(MatchingOracle& oracle, std::string_view claim,
                                            const BreakingSet& breaking_set);

struct SeedMatch {
  Template match;
  std::uint64_t queries = 0;
  std::size_t index = 0;
};

/// First accepted breaking-set member. `max_attempts` of 0 scans the whole set.
SeedMatch find_seed_match(MatchingOracle& oracle, std::string_view claim,
                          const BreakingSet& breaking_set, std::size_t max_attempts = 0);

struct BoundaryConfig {
  // Attacker's guess of the SED threshold; the outside point sits
  // 2 * sqrt(threshold_estimate) away from the inside point.
  double threshold_estimate = 1.0;
  unsigned precision = 20;
  unsigned max_redraws = 8;
};

struct BoundaryPoint {
  Template point;
  std::uint64_t queries = 0;
  unsigned redraws = 0;
  bool doubled_estimate = false;
};

/// Bisects between an accepted point and a point 2*sqrt(T) away in a random
/// direction. Costs exactly `precision` queries unless every midpoint was
/// accepted, in which case the outside point itself is checked (one extra
/// query) and re-drawn if it turns out to be accepted.
BoundaryPoint boundary_point(MatchingOracle& oracle, std::string_view claim,
                             const Template& inside, const BoundaryConfig& config,
                             RngSeed seed);

struct BinaryAttackConfig {
  unsigned precision = 20;
  double threshold_estimate = 1.0;
  // Cap on breaking-set members tried for the first match; 0 = all.
  std::size_t max_seed_attempts = 0;
  std::size_t resample_attempts_on_singularity = 4;
  unsigned max_redraws = 8;
};

/// First false match, d+1 boundary points, then the equidistant-point solve.
ReconstructionResult attack_binary_ours(MatchingOracle& oracle, std::string_view claim,
                                        std::size_t dim, const BinaryAttackConfig& config,
                                        const BreakingSet& breaking_set, RngSeed seed);

std::vector<double> random_unit_vector(Rng& rng, std::size_t dim);

}  // namespace tplrecon
