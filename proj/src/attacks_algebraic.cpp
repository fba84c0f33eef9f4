#include <chrono>
#include <cmath>

#include "tplrecon/attacks.hpp"
#include "tplrecon/linalg.hpp"

namespace tplrecon {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

std::vector<double> gaussian_probe(RngSeed seed, std::size_t index, std::size_t attempt,
                                   std::size_t dim) {
  Rng rng(derive_seed(derive_seed(seed, "probe", index), "attempt", attempt));
  std::vector<double> q(dim);
  for (double& x : q) x = rng.normal();
  return q;
}

// Gram-Schmidt over i.i.d. Gaussian draws; a draw that collapses onto the
// span of the earlier ones is replaced by the next attempt.
std::vector<std::vector<double>> orthonormal_probes(RngSeed seed, std::size_t dim) {
  std::vector<std::vector<double>> basis;
  basis.reserve(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t attempt = 0;; ++attempt) {
      auto v = gaussian_probe(seed, i, attempt, dim);
      const double before = std::sqrt(squared_norm(v));
      for (int pass = 0; pass < 2; ++pass) {
        for (const auto& b : basis) {
          double d = 0.0;
          for (std::size_t j = 0; j < dim; ++j) d += v[j] * b[j];
          for (std::size_t j = 0; j < dim; ++j) v[j] -= d * b[j];
        }
      }
      const double after = std::sqrt(squared_norm(v));
      if (after > 1e-6 * before) {
        for (double& x : v) x /= after;
        basis.push_back(std::move(v));
        break;
      }
    }
  }
  return basis;
}

}  // namespace

std::vector<double> random_unit_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  double n2 = 0.0;
  do {
    for (double& x : v) x = rng.normal();
    n2 = squared_norm(v);
  } while (n2 == 0.0);
  const double n = std::sqrt(n2);
  for (double& x : v) x /= n;
  return v;
}

std::vector<double> solve_center(std::span<const std::vector<double>> points,
                                 std::span<const double> squared_distances) {
  if (points.size() < 2) {
    throw Error(ErrorCode::kInvalidArgument, "need d+1 points");
  }
  const std::size_t dim = points.front().size();
  if (points.size() != dim + 1) {
    throw Error(ErrorCode::kInvalidArgument,
                "need exactly d+1 = " + std::to_string(dim + 1) + " points, got " +
                    std::to_string(points.size()));
  }
  if (squared_distances.size() != points.size()) {
    throw Error(ErrorCode::kDimMismatch, "one squared distance per point required");
  }
  const auto& ref = points.back();
  for (const auto& p : points) {
    if (p.size() != dim) throw Error(ErrorCode::kDimMismatch, "points differ in dim");
  }
  const double ref_norm2 = squared_norm(ref);
  const double ref_s = squared_distances.back();

  DenseMatrix a(dim, dim);
  std::vector<double> b(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const auto& q = points[i];
    auto row = a.row(i);
    for (std::size_t j = 0; j < dim; ++j) row[j] = 2.0 * (q[j] - ref[j]);
    b[i] = (squared_norm(q) - ref_norm2) - (squared_distances[i] - ref_s);
  }
  return solve_linear_system(std::move(a), std::move(b));
}

Template solve_center_from_equidistant_points(std::span<const Template> points) {
  std::vector<std::vector<double>> raw;
  raw.reserve(points.size());
  for (const auto& p : points) raw.emplace_back(p.values().begin(), p.values().end());
  const std::vector<double> zeros(points.size(), 0.0);
  return Template(solve_center(raw, zeros));
}

ReconstructionResult attack_score_sed(MatchingOracle& oracle, std::string_view claim,
                                      std::size_t dim, RngSeed seed,
                                      const AlgebraicAttackOptions& options) {
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "dim must be >= 1");
  const auto start = Clock::now();
  const std::uint64_t before = oracle.queries();
  auto make_probe = [&](std::size_t i, std::size_t attempt) {
    return options.probes ? options.probes(i, attempt) : gaussian_probe(seed, i, attempt, dim);
  };

  const std::size_t count = dim + 1;
  std::vector<std::vector<double>> probes(count);
  std::vector<double> scores(count);
  std::vector<std::size_t> attempts(count, 0);
  auto submit = [&](std::size_t i) {
    probes[i] = make_probe(i, attempts[i]);
    scores[i] = oracle.authenticate_score(claim, Template(probes[i])).value;
  };
  for (std::size_t i = 0; i < count; ++i) submit(i);

  std::uint64_t resamples = 0;
  std::vector<double> center;
  for (;;) {
    try {
      center = solve_center(probes, scores);
      break;
    } catch (const SingularSystemError& e) {
      if (resamples >= options.max_resamples) throw;
      ++resamples;
      const std::size_t i = e.row();
      ++attempts[i];
      submit(i);
    }
  }

  ReconstructionResult result{Template(std::move(center)), oracle.queries() - before,
                              seconds_since(start), "score-sed"};
  result.params["dim"] = static_cast<double>(dim);
  result.resamples = resamples;
  return result;
}

ReconstructionResult attack_score_cosine(MatchingOracle& oracle, std::string_view claim,
                                         std::size_t dim, RngSeed seed,
                                         const AlgebraicAttackOptions& options) {
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "dim must be >= 1");
  const auto start = Clock::now();
  const std::uint64_t before = oracle.queries();
  auto make_probe = [&](std::size_t i, std::size_t attempt) {
    auto raw = options.probes ? options.probes(i, attempt) : gaussian_probe(seed, i, attempt, dim);
    return normalized(raw);
  };

  std::vector<std::vector<double>> basis;
  if (!options.probes && options.orthonormal_cosine_probes) {
    basis = orthonormal_probes(seed, dim);
  }

  // With unit target and unit probes each score is the inner product f . q_i.
  DenseMatrix a(dim, dim);
  std::vector<double> c(dim);
  std::vector<std::size_t> attempts(dim, 0);
  auto submit = [&](std::size_t i) {
    const auto q = basis.empty() || attempts[i] > 0 ? make_probe(i, attempts[i]) : basis[i];
    std::copy(q.begin(), q.end(), a.row(i).begin());
    c[i] = oracle.authenticate_score(claim, Template(q, true)).value;
  };
  for (std::size_t i = 0; i < dim; ++i) submit(i);

  std::uint64_t resamples = 0;
  std::vector<double> f;
  for (;;) {
    try {
      f = solve_linear_system(a, c);
      break;
    } catch (const SingularSystemError& e) {
      if (resamples >= options.max_resamples) throw;
      ++resamples;
      ++attempts[e.row()];
      submit(e.row());
    }
  }

  ReconstructionResult result{Template(normalized(f), true), oracle.queries() - before,
                              seconds_since(start), "score-cos"};
  result.params["dim"] = static_cast<double>(dim);
  result.resamples = resamples;
  return result;
}

ReconstructionResult hill_climb(MatchingOracle& oracle, std::string_view claim,
                                std::size_t dim, const HillClimbConfig& config,
                                RngSeed seed) {
  if (dim == 0) throw Error(ErrorCode::kInvalidArgument, "dim must be >= 1");
  if (!(config.step_size > 0.0)) {
    throw Error(ErrorCode::kInvalidArgument, "step size must be > 0");
  }
  const auto start = Clock::now();
  const std::uint64_t before = oracle.queries();
  Rng rng(derive_seed(seed, "hill-climb"));

  std::vector<double> current(dim);
  for (double& x : current) x = rng.normal();
  const MatchScore initial = oracle.authenticate_score(claim, Template(current));
  const bool lower_is_better = initial.metric == Metric::kSed;
  double best = initial.value;
  std::vector<double> trace{best};

  std::vector<double> candidate(dim);
  for (std::uint64_t it = 0; it < config.budget; ++it) {
    const auto dir = random_unit_vector(rng, dim);
    for (std::size_t j = 0; j < dim; ++j) candidate[j] = current[j] + config.step_size * dir[j];
    const double s = oracle.authenticate_score(claim, Template(candidate)).value;
    if (lower_is_better ? s < best : s > best) {
      best = s;
      current.swap(candidate);
      trace.push_back(best);
    }
  }

  Template recovered = lower_is_better ? Template(std::move(current))
                                       : Template(normalized(current), true);
  ReconstructionResult result{std::move(recovered), oracle.queries() - before,
                              seconds_since(start), "hill"};
  result.params["step_size"] = config.step_size;
  result.params["budget"] = static_cast<double>(config.budget);
  result.score_trace = std::move(trace);
  return result;
}

}  // namespace tplrecon
