#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

#include "tplrecon/matcher.hpp"
#include "tplrecon/rng.hpp"
#include "tplrecon/template.hpp"

namespace tplrecon {

struct IdentityModelParams {
  std::size_t dim = 128;
  std::size_t num_identities = 10000;
  double within_noise_sigma = 0.01;
  // 0 draws centers uniformly on the sphere; larger values pull them
  // towards a shared mean direction.
  double center_concentration = 0.0;
  RngSeed seed{1};
};

/// Synthetic population of identities: each identity is a unit center and
/// its samples are center + isotropic Gaussian noise.
struct IdentityModel {
  IdentityModelParams params;
  std::vector<Template> centers;

  std::size_t dim() const noexcept { return params.dim; }
  std::size_t num_identities() const noexcept { return centers.size(); }
};

IdentityModel gen_identity_model(const IdentityModelParams& params);

Template sample_template(const IdentityModel& model, std::size_t identity,
                         bool unit_norm, RngSeed seed);

struct BreakingSet {
  std::size_t excluded_identity = 0;
  std::vector<std::size_t> labels;
  std::vector<Template> members;

  std::size_t size() const noexcept { return members.size(); }
};

/// Impostor samples for a target: identities other than `exclude_identity`
/// visited round-robin from a seed-chosen offset, each with fresh noise.
BreakingSet gen_breaking_set(const IdentityModel& model, std::size_t exclude_identity,
                             std::size_t size, bool unit_norm, RngSeed seed);

/// Scores of `pairs` random (i, j != i) sample pairs.
std::vector<double> impostor_scores(const IdentityModel& model, Metric metric,
                                    std::size_t pairs, RngSeed seed);
std::vector<double> genuine_scores(const IdentityModel& model, Metric metric,
                                   std::size_t pairs, RngSeed seed);

// Templates are unit-normalized exactly in cosine contexts.
inline bool unit_for(Metric metric) noexcept { return metric == Metric::kCosine; }

/// Enrollment sample of `identity`; the same (model, identity, seed) always
/// yields the same template, so servers and experiments agree on it.
Template enrollment_template(const IdentityModel& model, std::size_t identity,
                             Metric metric, RngSeed enroll_seed);

CalibrationResult calibrate_from_model(const IdentityModel& model, Metric metric,
                                       double target_fmr, std::size_t pairs,
                                       RngSeed seed);

// Directory layout: manifest.json plus centers/NNNNNN.tpl.
void save_model(const IdentityModel& model, const std::filesystem::path& dir);
IdentityModel load_model(const std::filesystem::path& dir);
IdentityModelParams read_manifest(const std::filesystem::path& manifest_path);

}  // namespace tplrecon
