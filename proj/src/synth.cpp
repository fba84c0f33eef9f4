#include "tplrecon/synth.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tplrecon {
namespace {

void check_params(const IdentityModelParams& p) {
  if (p.dim < 2) throw Error(ErrorCode::kInvalidArgument, "model dim must be >= 2");
  if (p.num_identities < 2) {
    throw Error(ErrorCode::kInvalidArgument, "model needs at least 2 identities");
  }
  if (!(p.within_noise_sigma >= 0.0) || !std::isfinite(p.within_noise_sigma)) {
    throw Error(ErrorCode::kInvalidArgument, "within-identity sigma must be >= 0");
  }
  if (!(p.center_concentration >= 0.0) || !std::isfinite(p.center_concentration)) {
    throw Error(ErrorCode::kInvalidArgument, "center concentration must be >= 0");
  }
}

std::vector<double> gaussian_vector(Rng& rng, std::size_t dim) {
  std::vector<double> v(dim);
  for (double& x : v) x = rng.normal();
  return v;
}

std::string center_file_name(std::size_t id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06zu.tpl", id);
  return buf;
}

std::size_t other_identity(std::size_t exclude, std::size_t k) {
  return k < exclude ? k : k + 1;
}

}  // namespace

IdentityModel gen_identity_model(const IdentityModelParams& params) {
  check_params(params);
  IdentityModel model{params, {}};
  model.centers.reserve(params.num_identities);

  Rng mean_rng(derive_seed(params.seed, "mean-direction"));
  const std::vector<double> mean = normalized(gaussian_vector(mean_rng, params.dim));

  Rng rng(derive_seed(params.seed, "centers"));
  const double spread = 1.0 / std::sqrt(static_cast<double>(params.dim));
  for (std::size_t i = 0; i < params.num_identities; ++i) {
    std::vector<double> c = gaussian_vector(rng, params.dim);
    for (std::size_t k = 0; k < params.dim; ++k) {
      c[k] = c[k] * spread + params.center_concentration * mean[k];
    }
    model.centers.emplace_back(normalized(c), true);
  }
  return model;
}

Template sample_template(const IdentityModel& model, std::size_t identity,
                         bool unit_norm, RngSeed seed) {
  if (identity >= model.num_identities()) {
    throw Error(ErrorCode::kUnknownIdentity,
                "identity " + std::to_string(identity) + " not in model");
  }
  const auto center = model.centers[identity].values();
  const double sigma = model.params.within_noise_sigma;
  std::vector<double> v(center.begin(), center.end());
  if (sigma > 0.0) {
    Rng rng(seed);
    for (double& x : v) x += sigma * rng.normal();
  }
  if (unit_norm) return Template(normalized(v), true);
  return Template(std::move(v), false);
}

BreakingSet gen_breaking_set(const IdentityModel& model, std::size_t exclude_identity,
                             std::size_t size, bool unit_norm, RngSeed seed) {
  const std::size_t n = model.num_identities();
  if (n < 2) {
    throw Error(ErrorCode::kInvalidArgument, "breaking set needs a second identity");
  }
  if (exclude_identity >= n) {
    throw Error(ErrorCode::kUnknownIdentity, "excluded identity not in model");
  }
  if (size == 0) throw Error(ErrorCode::kInvalidArgument, "breaking set size must be >= 1");

  BreakingSet set;
  set.excluded_identity = exclude_identity;
  set.labels.reserve(size);
  set.members.reserve(size);
  Rng rng(derive_seed(seed, "offset"));
  const std::size_t offset = rng.below(n - 1);
  for (std::size_t k = 0; k < size; ++k) {
    const std::size_t id = other_identity(exclude_identity, (offset + k) % (n - 1));
    set.labels.push_back(id);
    set.members.push_back(sample_template(model, id, unit_norm, derive_seed(seed, "member", k)));
  }
  return set;
}

std::vector<double> impostor_scores(const IdentityModel& model, Metric metric,
                                    std::size_t pairs, RngSeed seed) {
  const std::size_t n = model.num_identities();
  const bool unit = unit_for(metric);
  Rng rng(derive_seed(seed, "impostor-pairs"));
  std::vector<double> scores;
  scores.reserve(pairs);
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::size_t i = rng.below(n);
    const std::size_t j = other_identity(i, rng.below(n - 1));
    const Template a = sample_template(model, i, unit, derive_seed(seed, "a", k));
    const Template b = sample_template(model, j, unit, derive_seed(seed, "b", k));
    scores.push_back(match_score(metric, a, b).value);
  }
  return scores;
}

std::vector<double> genuine_scores(const IdentityModel& model, Metric metric,
                                   std::size_t pairs, RngSeed seed) {
  const bool unit = unit_for(metric);
  Rng rng(derive_seed(seed, "genuine-pairs"));
  std::vector<double> scores;
  scores.reserve(pairs);
  for (std::size_t k = 0; k < pairs; ++k) {
    const std::size_t i = rng.below(model.num_identities());
    const Template a = sample_template(model, i, unit, derive_seed(seed, "a", k));
    const Template b = sample_template(model, i, unit, derive_seed(seed, "b", k));
    scores.push_back(match_score(metric, a, b).value);
  }
  return scores;
}

Template enrollment_template(const IdentityModel& model, std::size_t identity,
                             Metric metric, RngSeed enroll_seed) {
  return sample_template(model, identity, unit_for(metric),
                         derive_seed(enroll_seed, "enroll", identity));
}

CalibrationResult calibrate_from_model(const IdentityModel& model, Metric metric,
                                       double target_fmr, std::size_t pairs,
                                       RngSeed seed) {
  const auto scores = impostor_scores(model, metric, pairs, seed);
  return calibrate_threshold(metric, scores, target_fmr);
}

void save_model(const IdentityModel& model, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir / "centers", ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());
  for (std::size_t i = 0; i < model.centers.size(); ++i) {
    write_template(model.centers[i], dir / "centers" / center_file_name(i));
  }
  nlohmann::json manifest = {
      {"dim", model.params.dim},
      {"identities", model.params.num_identities},
      {"sigma_w", model.params.within_noise_sigma},
      {"conc", model.params.center_concentration},
      {"seed", model.params.seed.value},
      {"centers_dir", "centers"},
  };
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

IdentityModelParams read_manifest(const std::filesystem::path& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + manifest_path.string());
  nlohmann::json j;
  try {
    in >> j;
    IdentityModelParams p;
    p.dim = j.at("dim").get<std::size_t>();
    p.num_identities = j.at("identities").get<std::size_t>();
    p.within_noise_sigma = j.at("sigma_w").get<double>();
    p.center_concentration = j.at("conc").get<double>();
    p.seed = RngSeed{j.at("seed").get<std::uint64_t>()};
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, "bad manifest " + manifest_path.string() + ": " + e.what());
  }
}

IdentityModel load_model(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path =
      fs::is_directory(dir) ? dir / "manifest.json" : fs::path(dir);
  const fs::path root = manifest_path.parent_path();
  IdentityModel model{read_manifest(manifest_path), {}};
  check_params(model.params);
  model.centers.reserve(model.params.num_identities);
  for (std::size_t i = 0; i < model.params.num_identities; ++i) {
    Template c = read_template(root / "centers" / center_file_name(i));
    if (c.dim() != model.params.dim) {
      throw Error(ErrorCode::kDimMismatch, "center " + std::to_string(i) + " has wrong dim");
    }
    model.centers.push_back(std::move(c));
  }
  return model;
}

}  // namespace tplrecon
