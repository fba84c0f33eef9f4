#include "tplrecon/tplrecon.h"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <string>
#include <variant>

#include <json.hpp>

#include "tplrecon/attacks.hpp"
#include "tplrecon/eval.hpp"
#include "tplrecon/netoracle.hpp"

using namespace tplrecon;

struct tpr_template {
  Template value;
};
struct tpr_model {
  IdentityModel value;
};
struct tpr_oracle {
  std::variant<std::unique_ptr<Oracle>, std::unique_ptr<RemoteOracle>> impl;

  MatchingOracle& get() {
    return std::visit([](auto& p) -> MatchingOracle& { return *p; }, impl);
  }
};
struct tpr_result {
  ReconstructionResult value;
};
struct tpr_report {
  ExperimentReport value;
};
struct tpr_server {
  std::unique_ptr<OracleServer> value;
};

namespace {

thread_local std::string g_last_error;

tpr_status fail(tpr_status status, std::string message) {
  g_last_error = std::move(message);
  return status;
}

template <typename F>
tpr_status guarded(F&& f) {
  try {
    f();
    g_last_error.clear();
    return TPR_OK;
  } catch (const Error& e) {
    return fail(static_cast<tpr_status>(e.code()), e.what());
  } catch (const nlohmann::json::exception& e) {
    return fail(TPR_E_PARSE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(TPR_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(TPR_E_INTERNAL, e.what());
  }
}

#define TPR_REQUIRE(cond)                                                  \
  do {                                                                     \
    if (!(cond)) return fail(TPR_E_INVALID_ARGUMENT, "null argument: " #cond); \
  } while (0)

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

Metric to_metric(tpr_metric m) { return m == TPR_METRIC_COSINE ? Metric::kCosine : Metric::kSed; }

}  // namespace

extern "C" {

const char* tpr_version(void) { return "0.1.0"; }

const char* tpr_last_error(void) { return g_last_error.c_str(); }

const char* tpr_status_name(tpr_status status) {
  if (status == TPR_OK) return "OK";
  return error_code_name(static_cast<ErrorCode>(status));
}

void tpr_string_free(char* s) { std::free(s); }

tpr_status tpr_template_new(const double* values, size_t dim, int unit_norm,
                            tpr_template** out) {
  TPR_REQUIRE(out);
  TPR_REQUIRE(values || dim == 0);
  return guarded([&] {
    *out = new tpr_template{Template(std::vector<double>(values, values + dim), unit_norm != 0)};
  });
}

void tpr_template_free(tpr_template* t) { delete t; }

size_t tpr_template_dim(const tpr_template* t) { return t ? t->value.dim() : 0; }

int tpr_template_is_unit(const tpr_template* t) { return t && t->value.unit_norm() ? 1 : 0; }

size_t tpr_template_values(const tpr_template* t, double* out, size_t capacity) {
  if (!t) return 0;
  const auto v = t->value.values();
  if (out) std::memcpy(out, v.data(), std::min(capacity, v.size()) * sizeof(double));
  return v.size();
}

tpr_status tpr_template_read(const char* path, tpr_template** out) {
  TPR_REQUIRE(path && out);
  return guarded([&] { *out = new tpr_template{read_template(path)}; });
}

tpr_status tpr_template_write(const tpr_template* t, const char* path) {
  TPR_REQUIRE(t && path);
  return guarded([&] { write_template(t->value, path); });
}

tpr_status tpr_template_to_json(const tpr_template* t, char** out_json) {
  TPR_REQUIRE(t && out_json);
  return guarded([&] { *out_json = dup_string(template_to_json(t->value)); });
}

tpr_status tpr_template_normalize(const tpr_template* t, tpr_template** out) {
  TPR_REQUIRE(t && out);
  return guarded([&] { *out = new tpr_template{normalize(t->value)}; });
}

tpr_status tpr_reconstruction_loss(const tpr_template* recovered, const tpr_template* truth,
                                   tpr_metric metric, double* out_loss) {
  TPR_REQUIRE(recovered && truth && out_loss);
  return guarded(
      [&] { *out_loss = reconstruction_loss(recovered->value, truth->value, to_metric(metric)); });
}

void tpr_model_params_default(tpr_model_params* params) {
  if (!params) return;
  const IdentityModelParams d;
  *params = {d.dim, d.num_identities, d.within_noise_sigma, d.center_concentration, d.seed.value};
}

tpr_status tpr_model_generate(const tpr_model_params* params, tpr_model** out) {
  TPR_REQUIRE(params && out);
  return guarded([&] {
    IdentityModelParams p;
    p.dim = params->dim;
    p.num_identities = params->identities;
    p.within_noise_sigma = params->sigma_w;
    p.center_concentration = params->conc;
    p.seed = RngSeed{params->seed};
    *out = new tpr_model{gen_identity_model(p)};
  });
}

tpr_status tpr_model_save(const tpr_model* m, const char* dir) {
  TPR_REQUIRE(m && dir);
  return guarded([&] { save_model(m->value, dir); });
}

tpr_status tpr_model_load(const char* dir, tpr_model** out) {
  TPR_REQUIRE(dir && out);
  return guarded([&] { *out = new tpr_model{load_model(dir)}; });
}

tpr_status tpr_model_params_get(const tpr_model* m, tpr_model_params* out) {
  TPR_REQUIRE(m && out);
  const auto& p = m->value.params;
  *out = {p.dim, p.num_identities, p.within_noise_sigma, p.center_concentration, p.seed.value};
  return TPR_OK;
}

void tpr_model_free(tpr_model* m) { delete m; }

tpr_status tpr_model_sample(const tpr_model* m, size_t identity, int unit_norm, uint64_t seed,
                            tpr_template** out) {
  TPR_REQUIRE(m && out);
  return guarded([&] {
    *out = new tpr_template{sample_template(m->value, identity, unit_norm != 0, RngSeed{seed})};
  });
}

tpr_status tpr_model_enrollment(const tpr_model* m, size_t identity, tpr_metric metric,
                                uint64_t enroll_seed, tpr_template** out) {
  TPR_REQUIRE(m && out);
  return guarded([&] {
    *out = new tpr_template{
        enrollment_template(m->value, identity, to_metric(metric), RngSeed{enroll_seed})};
  });
}

tpr_status tpr_calibrate(const tpr_model* m, tpr_metric metric, double target_fmr, size_t pairs,
                         uint64_t seed, tpr_calibration* out) {
  TPR_REQUIRE(m && out);
  return guarded([&] {
    const auto c = calibrate_from_model(m->value, to_metric(metric), target_fmr, pairs,
                                        RngSeed{seed});
    *out = {c.threshold.value(), c.achieved_fmr, c.sample_size};
  });
}

tpr_status tpr_measure_fmr(const tpr_model* m, tpr_metric metric, double threshold,
                           size_t pairs, uint64_t seed, double* out_fmr) {
  TPR_REQUIRE(m && out_fmr);
  return guarded([&] {
    if (pairs == 0) throw Error(ErrorCode::kInvalidArgument, "pairs must be > 0");
    const Threshold t(threshold, to_metric(metric));
    const auto scores = impostor_scores(m->value, to_metric(metric), pairs, RngSeed{seed});
    std::size_t hits = 0;
    for (double s : scores) hits += t.accepts(s) ? 1 : 0;
    *out_fmr = static_cast<double>(hits) / static_cast<double>(pairs);
  });
}

tpr_status tpr_oracle_new_local(const tpr_oracle_config* config, tpr_oracle** out) {
  TPR_REQUIRE(config && out);
  return guarded([&] {
    OracleConfig c;
    c.metric = to_metric(config->metric);
    c.mode = config->mode == TPR_MODE_BINARY ? OracleMode::kBinaryOnly
                                             : OracleMode::kScoreReleasing;
    if (config->has_threshold) c.threshold = Threshold(config->threshold, c.metric);
    c.score_noise_sigma = config->sigma;
    if (config->query_limit) c.query_limit = config->query_limit;
    c.noise_seed = RngSeed{config->noise_seed};
    *out = new tpr_oracle{std::make_unique<Oracle>(c)};
  });
}

tpr_status tpr_oracle_connect(const char* address, tpr_mode mode, tpr_oracle** out) {
  TPR_REQUIRE(address && out);
  return guarded([&] {
    const auto m = mode == TPR_MODE_BINARY ? OracleMode::kBinaryOnly : OracleMode::kScoreReleasing;
    *out = new tpr_oracle{std::make_unique<RemoteOracle>(address, m)};
  });
}

void tpr_oracle_free(tpr_oracle* o) { delete o; }

tpr_status tpr_oracle_enroll(tpr_oracle* o, const char* claim, const tpr_template* t) {
  TPR_REQUIRE(o && claim && t);
  return guarded([&] {
    std::visit([&](auto& p) { p->enroll(claim, t->value); }, o->impl);
  });
}

tpr_status tpr_oracle_auth_score(tpr_oracle* o, const char* claim, const tpr_template* probe,
                                 double* out_score) {
  TPR_REQUIRE(o && claim && probe && out_score);
  return guarded([&] { *out_score = o->get().authenticate_score(claim, probe->value).value; });
}

tpr_status tpr_oracle_auth_binary(tpr_oracle* o, const char* claim, const tpr_template* probe,
                                  int* out_match) {
  TPR_REQUIRE(o && claim && probe && out_match);
  return guarded([&] { *out_match = o->get().authenticate_binary(claim, probe->value) ? 1 : 0; });
}

tpr_status tpr_oracle_queries(const tpr_oracle* o, uint64_t* out) {
  TPR_REQUIRE(o && out);
  return guarded([&] { *out = const_cast<tpr_oracle*>(o)->get().queries(); });
}

tpr_status tpr_attack_run(tpr_oracle* o, const char* claim, const char* attack_json,
                          const tpr_model* model, tpr_result** out) {
  TPR_REQUIRE(o && claim && attack_json && out);
  return guarded([&] {
    const auto j = nlohmann::json::parse(attack_json);
    const AttackKind kind = parse_attack(j.at("attack").get<std::string>());
    std::size_t dim = j.value("dim", std::size_t{0});
    if (dim == 0 && model) dim = model->value.dim();
    const RngSeed seed{j.value("seed", std::uint64_t{0})};
    MatchingOracle& oracle = o->get();

    auto breaking_set = [&] {
      if (!model) throw Error(ErrorCode::kInvalidArgument, "binary attacks need a model");
      const std::size_t exclude = j.at("exclude_identity").get<std::size_t>();
      const std::size_t size = j.at("breaking_set_size").get<std::size_t>();
      return gen_breaking_set(model->value, exclude, size, j.value("unit", false),
                              RngSeed{j.value("breaking_set_seed", seed.value)});
    };

    ReconstructionResult r = [&]() -> ReconstructionResult {
      switch (kind) {
        case AttackKind::kScoreSed:
          return attack_score_sed(oracle, claim, dim, seed);
        case AttackKind::kScoreCosine:
          return attack_score_cosine(oracle, claim, dim, seed);
        case AttackKind::kHillClimb: {
          HillClimbConfig hc;
          hc.step_size = j.value("step_size", hc.step_size);
          hc.budget = j.value("budget", hc.budget);
          return hill_climb(oracle, claim, dim, hc, seed);
        }
        case AttackKind::kBinaryBaseline:
          return attack_binary_baseline(oracle, claim, breaking_set());
        case AttackKind::kBinaryOurs: {
          BinaryAttackConfig bc;
          bc.precision = j.value("precision", bc.precision);
          bc.threshold_estimate = j.at("threshold_estimate").get<double>();
          return attack_binary_ours(oracle, claim, dim, bc, breaking_set(), seed);
        }
      }
      throw Error(ErrorCode::kInternal, "unhandled attack");
    }();
    *out = new tpr_result{std::move(r)};
  });
}

void tpr_result_free(tpr_result* r) { delete r; }

tpr_status tpr_result_recovered(const tpr_result* r, tpr_template** out) {
  TPR_REQUIRE(r && out);
  return guarded([&] { *out = new tpr_template{r->value.recovered}; });
}

uint64_t tpr_result_queries(const tpr_result* r) { return r ? r->value.queries_used : 0; }

uint64_t tpr_result_seed_queries(const tpr_result* r) { return r ? r->value.seed_queries : 0; }

double tpr_result_seconds(const tpr_result* r) { return r ? r->value.wall_time_seconds : 0.0; }

tpr_status tpr_result_to_json(const tpr_result* r, char** out_json) {
  TPR_REQUIRE(r && out_json);
  return guarded([&] {
    const auto& v = r->value;
    nlohmann::json j = {{"attack", v.attack_name},
                        {"queries", v.queries_used},
                        {"time_s", v.wall_time_seconds},
                        {"seed_queries", v.seed_queries},
                        {"redraws", v.redraws},
                        {"resamples", v.resamples},
                        {"params", v.params},
                        {"dim", v.recovered.dim()}};
    *out_json = dup_string(j.dump());
  });
}

tpr_status tpr_experiment_run(const char* config_json, tpr_report** out) {
  TPR_REQUIRE(config_json && out);
  return guarded([&] {
    *out = new tpr_report{run_experiment(experiment_config_from_json(config_json))};
  });
}

void tpr_report_free(tpr_report* r) { delete r; }

tpr_status tpr_report_write(const tpr_report* r, tpr_report_format format, const char* path) {
  TPR_REQUIRE(r && path);
  return guarded([&] {
    emit_report(r->value, format == TPR_FORMAT_CSV ? ReportFormat::kCsv : ReportFormat::kJson,
                path);
  });
}

tpr_status tpr_report_write_convergence(const tpr_report* r, const char* path) {
  TPR_REQUIRE(r && path);
  return guarded([&] {
    std::FILE* f = std::fopen(path, "wb");
    if (!f) throw Error(ErrorCode::kIo, std::string("cannot open ") + path);
    const std::string csv = convergence_to_csv(baseline_convergence(r->value));
    const bool ok = std::fwrite(csv.data(), 1, csv.size(), f) == csv.size();
    std::fclose(f);
    if (!ok) throw Error(ErrorCode::kIo, std::string("write failed: ") + path);
  });
}

tpr_status tpr_report_load(const char* path, tpr_report** out) {
  TPR_REQUIRE(path && out);
  return guarded([&] { *out = new tpr_report{load_report(path)}; });
}

tpr_status tpr_report_summary(const tpr_report* r, char** out_text) {
  TPR_REQUIRE(r && out_text);
  return guarded([&] { *out_text = dup_string(report_summary(r->value)); });
}

size_t tpr_report_rows(const tpr_report* r) { return r ? r->value.rows.size() : 0; }

size_t tpr_report_failed_rows(const tpr_report* r) {
  if (!r) return 0;
  std::size_t n = 0;
  for (const auto& row : r->value.rows) n += row.ok ? 0 : 1;
  return n;
}

tpr_status tpr_server_start(const char* config_json, tpr_server** out) {
  TPR_REQUIRE(config_json && out);
  return guarded([&] {
    auto server = std::make_unique<OracleServer>(server_config_from_json(config_json));
    server->start();
    *out = new tpr_server{std::move(server)};
  });
}

uint16_t tpr_server_port(const tpr_server* s) { return s ? s->value->port() : 0; }

void tpr_server_wait(tpr_server* s) {
  if (s) s->value->wait();
}

void tpr_server_stop(tpr_server* s) {
  if (s) s->value->stop();
}

void tpr_server_free(tpr_server* s) { delete s; }

}  // extern "C"
