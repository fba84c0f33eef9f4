// Command-line front end. Talks to the library only through the C API.

#include <csignal>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tplrecon/tplrecon.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

// Raised when a C API call fails; carries the status for exit-code mapping.
struct ApiFailure {
  tpr_status status;
  std::string message;
};

void check(tpr_status s) {
  if (s != TPR_OK) throw ApiFailure{s, tpr_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Handle {
  T* p = nullptr;
  Handle() = default;
  Handle(const Handle&) = delete;
  Handle& operator=(const Handle&) = delete;
  ~Handle() { if (p) Free(p); }
  T** out() { return &p; }
  T* get() const { return p; }
};

using TemplateH = Handle<tpr_template, tpr_template_free>;
using ModelH = Handle<tpr_model, tpr_model_free>;
using OracleH = Handle<tpr_oracle, tpr_oracle_free>;
using ResultH = Handle<tpr_result, tpr_result_free>;
using ReportH = Handle<tpr_report, tpr_report_free>;
using ServerH = Handle<tpr_server, tpr_server_free>;

std::string take_string(char* s) {
  std::string out(s ? s : "");
  tpr_string_free(s);
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ApiFailure{TPR_E_IO, "cannot read " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw ApiFailure{TPR_E_IO, "cannot write " + path.string()};
}

void print_error_json(tpr_status status, const std::string& message) {
  const json j = {{"error", {{"code", tpr_status_name(status)}, {"message", message}}}};
  std::cerr << j.dump() << '\n';
}

bool is_usage_status(tpr_status s) {
  return s == TPR_E_INVALID_ARGUMENT || s == TPR_E_PARSE;
}

tpr_metric metric_from(const std::string& name) {
  return name == "cosine" ? TPR_METRIC_COSINE : TPR_METRIC_SED;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---- gen-model ------------------------------------------------------------

struct GenModelArgs {
  tpr_model_params params{};
  std::string out;
};

int run_gen_model(const GenModelArgs& a) {
  ModelH model;
  check(tpr_model_generate(&a.params, model.out()));
  check(tpr_model_save(model.get(), a.out.c_str()));
  std::cout << "model: dim=" << a.params.dim << " identities=" << a.params.identities
            << " sigma_w=" << fmt(a.params.sigma_w) << " conc=" << fmt(a.params.conc)
            << " seed=" << a.params.seed << " -> " << (fs::path(a.out) / "manifest.json").string()
            << '\n';
  return kExitOk;
}

// ---- calibrate ------------------------------------------------------------

struct CalibrateArgs {
  std::string model;
  std::string metric = "sed";
  double fmr = 0.01;
  std::size_t pairs = 100000;
  std::uint64_t seed = 7;
  std::size_t verify_pairs = 0;
  std::string out;
};

int run_calibrate(const CalibrateArgs& a) {
  ModelH model;
  check(tpr_model_load(a.model.c_str(), model.out()));
  const tpr_metric metric = metric_from(a.metric);
  tpr_calibration cal{};
  check(tpr_calibrate(model.get(), metric, a.fmr, a.pairs, a.seed, &cal));
  json j = {{"metric", a.metric},
            {"target_fmr", a.fmr},
            {"threshold", cal.threshold},
            {"achieved_fmr", cal.achieved_fmr},
            {"sample_size", cal.sample_size}};
  std::cout << "threshold=" << fmt(cal.threshold) << " achieved_fmr=" << fmt(cal.achieved_fmr)
            << " pairs=" << cal.sample_size << '\n';
  if (a.verify_pairs > 0) {
    double measured = 0.0;
    check(tpr_measure_fmr(model.get(), metric, cal.threshold, a.verify_pairs, a.seed + 1,
                          &measured));
    j["verified_fmr"] = measured;
    j["verify_pairs"] = a.verify_pairs;
    std::cout << "fresh-pair fmr=" << fmt(measured) << " over " << a.verify_pairs << " pairs\n";
  }
  if (!a.out.empty()) write_file(a.out, j.dump(2) + "\n");
  return kExitOk;
}

// ---- serve ----------------------------------------------------------------

struct ServeArgs {
  std::string config;
  std::string bind;
  std::string model;
};

int run_serve(const ServeArgs& a) {
  json cfg = json::parse(read_file(a.config));
  if (!a.bind.empty()) cfg["bind"] = a.bind;
  if (!a.model.empty()) cfg["model_manifest"] = a.model;

  sigset_t set;
  sigemptyset(&set);
  sigaddset(&set, SIGINT);
  sigaddset(&set, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &set, nullptr);

  ServerH server;
  check(tpr_server_start(cfg.dump().c_str(), server.out()));
  std::string host = cfg.value("bind", std::string("127.0.0.1:0"));
  host = host.substr(0, host.rfind(':'));
  std::cout << "listening on tcp://" << host << ':' << tpr_server_port(server.get()) << std::endl;

  int sig = 0;
  sigwait(&set, &sig);
  std::cerr << "signal " << sig << ", shutting down\n";
  tpr_server_stop(server.get());
  return kExitOk;
}

// ---- attack ---------------------------------------------------------------

struct AttackArgs {
  std::string model;
  std::size_t target = 0;
  std::string attack;
  std::string oracle = "local";
  double fmr = 0.01;
  unsigned precision = 20;
  std::string metric;
  double sigma = 0.0;
  std::uint64_t seed = 7;
  std::uint64_t enroll_seed = 7;
  std::size_t calibration_pairs = 100000;
  std::optional<double> threshold_estimate;
  std::size_t breaking_set_size = 0;
  double step_size = 0.07;
  std::uint64_t budget = 4000;
  std::string out;
};

int run_attack(const AttackArgs& a) {
  const std::string metric_str =
      !a.metric.empty() ? a.metric : (a.attack == "score-cos" ? "cosine" : "sed");
  const tpr_metric metric = metric_from(metric_str);
  const bool binary = a.attack == "binary-baseline" || a.attack == "binary-ours";
  const std::string claim = std::to_string(a.target);

  ModelH model;
  check(tpr_model_load(a.model.c_str(), model.out()));
  tpr_model_params mp{};
  check(tpr_model_params_get(model.get(), &mp));
  if (a.target >= mp.identities) {
    throw ApiFailure{TPR_E_INVALID_ARGUMENT, "target-id out of range"};
  }

  TemplateH truth;
  check(tpr_model_enrollment(model.get(), a.target, metric, a.enroll_seed, truth.out()));

  // The attacker's population model gives the threshold at the published FMR.
  tpr_calibration cal{};
  check(tpr_calibrate(model.get(), metric, a.fmr, a.calibration_pairs, a.seed, &cal));

  OracleH oracle;
  if (a.oracle == "local") {
    tpr_oracle_config oc{};
    oc.metric = metric;
    oc.mode = binary ? TPR_MODE_BINARY : TPR_MODE_SCORE;
    oc.threshold = cal.threshold;
    oc.has_threshold = 1;
    oc.sigma = a.sigma;
    oc.noise_seed = a.seed;
    check(tpr_oracle_new_local(&oc, oracle.out()));
    check(tpr_oracle_enroll(oracle.get(), claim.c_str(), truth.get()));
  } else {
    check(tpr_oracle_connect(a.oracle.c_str(), binary ? TPR_MODE_BINARY : TPR_MODE_SCORE,
                             oracle.out()));
  }

  json spec = {{"attack", a.attack}, {"dim", mp.dim}, {"seed", a.seed}};
  if (a.attack == "hill") {
    spec["step_size"] = a.step_size;
    spec["budget"] = a.budget;
  }
  if (binary) {
    std::size_t size = a.breaking_set_size;
    if (size == 0) {
      size = a.attack == "binary-ours"
                 ? static_cast<std::size_t>(std::ceil(20.0 / a.fmr))
                 : a.precision * (mp.dim + 1) + static_cast<std::size_t>(std::llround(1.0 / a.fmr));
    }
    spec["precision"] = a.precision;
    spec["threshold_estimate"] = a.threshold_estimate.value_or(cal.threshold);
    spec["exclude_identity"] = a.target;
    spec["breaking_set_size"] = size;
    spec["breaking_set_seed"] = a.seed ^ 0x9e3779b97f4a7c15ULL;
    spec["unit"] = metric == TPR_METRIC_COSINE;
  }

  ResultH result;
  check(tpr_attack_run(oracle.get(), claim.c_str(), spec.dump().c_str(), model.get(),
                       result.out()));
  TemplateH recovered;
  check(tpr_result_recovered(result.get(), recovered.out()));
  double loss = 0.0;
  check(tpr_reconstruction_loss(recovered.get(), truth.get(), metric, &loss));

  json row = json::parse(take_string([&] {
    char* s = nullptr;
    check(tpr_result_to_json(result.get(), &s));
    return s;
  }()));
  row["identity"] = a.target;
  row["metric"] = metric_str;
  row["fmr"] = a.fmr;
  row["loss"] = loss;
  row["oracle"] = a.oracle;
  row["threshold"] = cal.threshold;

  fs::create_directories(a.out);
  check(tpr_template_write(recovered.get(), (fs::path(a.out) / "recovered.tpl").c_str()));
  write_file(fs::path(a.out) / "result.json", row.dump(2) + "\n");

  std::cout << a.attack << " identity=" << a.target << " loss=" << fmt(loss)
            << " queries=" << tpr_result_queries(result.get())
            << " seed_queries=" << tpr_result_seed_queries(result.get())
            << " time_s=" << fmt(tpr_result_seconds(result.get())) << '\n';
  return kExitOk;
}

// ---- experiment -----------------------------------------------------------

struct ExperimentArgs {
  std::string config;
  std::string out;
  unsigned jobs = 0;
  bool no_timing = false;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> targets;
};

int run_experiment(const ExperimentArgs& a) {
  json cfg;
  try {
    cfg = json::parse(read_file(a.config));
  } catch (const json::exception& e) {
    throw ApiFailure{TPR_E_PARSE, std::string("config: ") + e.what()};
  }
  if (a.jobs > 0) cfg["jobs"] = a.jobs;
  if (a.no_timing) cfg["record_time"] = false;
  if (a.seed) cfg["seed"] = *a.seed;
  if (a.targets) cfg["targets"] = *a.targets;

  std::cerr << "running experiment from " << a.config << '\n';
  ReportH report;
  check(tpr_experiment_run(cfg.dump().c_str(), report.out()));

  fs::create_directories(a.out);
  const fs::path out(a.out);
  check(tpr_report_write(report.get(), TPR_FORMAT_CSV, (out / "results.csv").c_str()));
  check(tpr_report_write(report.get(), TPR_FORMAT_JSON, (out / "results.json").c_str()));
  check(tpr_report_write_convergence(report.get(), (out / "baseline_convergence.csv").c_str()));

  char* summary = nullptr;
  check(tpr_report_summary(report.get(), &summary));
  std::cout << take_string(summary);

  const std::size_t rows = tpr_report_rows(report.get());
  const std::size_t failed = tpr_report_failed_rows(report.get());
  if (failed > 0) std::cerr << failed << " of " << rows << " rows failed\n";
  return rows > 0 && failed == rows ? kExitRuntime : kExitOk;
}

// ---- report ---------------------------------------------------------------

struct ReportArgs {
  std::string in;
  std::string csv;
};

int run_report(const ReportArgs& a) {
  ReportH report;
  check(tpr_report_load(a.in.c_str(), report.out()));
  char* summary = nullptr;
  check(tpr_report_summary(report.get(), &summary));
  std::cout << take_string(summary);
  if (!a.csv.empty()) check(tpr_report_write(report.get(), TPR_FORMAT_CSV, a.csv.c_str()));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Template reconstruction attack laboratory"};
  app.require_subcommand(1);

  const std::vector<std::string> attack_names = {"score-sed", "score-cos", "hill",
                                                 "binary-baseline", "binary-ours"};
  const std::vector<std::string> metric_names = {"sed", "cosine"};

  GenModelArgs gen;
  tpr_model_params_default(&gen.params);
  auto* gen_cmd = app.add_subcommand("gen-model", "Generate a synthetic identity model");
  gen_cmd->add_option("--dim", gen.params.dim, "Template dimension")->check(CLI::PositiveNumber);
  gen_cmd->add_option("--identities", gen.params.identities, "Number of identities")
      ->check(CLI::Range(std::size_t{2}, std::size_t{100000000}));
  gen_cmd->add_option("--sigma", gen.params.sigma_w, "Within-identity noise std-dev")
      ->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--conc", gen.params.conc, "Center concentration")
      ->check(CLI::NonNegativeNumber);
  gen_cmd->add_option("--seed", gen.params.seed, "Model seed");
  gen_cmd->add_option("--out", gen.out, "Output directory")->required();

  CalibrateArgs cal;
  auto* cal_cmd = app.add_subcommand("calibrate", "Calibrate a threshold for a target FMR");
  cal_cmd->add_option("--model", cal.model, "Model directory or manifest")->required();
  cal_cmd->add_option("--metric", cal.metric)->check(CLI::IsMember(metric_names));
  cal_cmd->add_option("--fmr", cal.fmr, "Target false match rate")
      ->check(CLI::Range(0.0, 1.0));
  cal_cmd->add_option("--pairs", cal.pairs, "Impostor pairs")->check(CLI::PositiveNumber);
  cal_cmd->add_option("--seed", cal.seed);
  cal_cmd->add_option("--verify-pairs", cal.verify_pairs,
                      "Re-measure FMR on this many fresh pairs");
  cal_cmd->add_option("--out", cal.out, "Write the calibration as JSON");

  ServeArgs serve;
  auto* serve_cmd = app.add_subcommand("serve", "Run a TCP matching oracle");
  serve_cmd->add_option("--config", serve.config, "Server config JSON")->required();
  serve_cmd->add_option("--bind", serve.bind, "host:port (overrides config)");
  serve_cmd->add_option("--model", serve.model, "Model manifest (overrides config)");

  AttackArgs atk;
  std::optional<double> threshold_estimate;
  auto* atk_cmd = app.add_subcommand("attack", "Run one attack against one identity");
  atk_cmd->add_option("--model", atk.model, "Model directory or manifest")->required();
  atk_cmd->add_option("--target-id", atk.target)->required();
  atk_cmd->add_option("--attack", atk.attack)->required()->check(CLI::IsMember(attack_names));
  atk_cmd->add_option("--oracle", atk.oracle, "local or tcp://host:port");
  atk_cmd->add_option("--fmr", atk.fmr)->check(CLI::Range(0.0, 1.0));
  atk_cmd->add_option("--precision", atk.precision)->check(CLI::PositiveNumber);
  atk_cmd->add_option("--metric", atk.metric)->check(CLI::IsMember(metric_names));
  atk_cmd->add_option("--sigma", atk.sigma, "Score noise of the local oracle")
      ->check(CLI::NonNegativeNumber);
  atk_cmd->add_option("--seed", atk.seed);
  atk_cmd->add_option("--enroll-seed", atk.enroll_seed);
  atk_cmd->add_option("--calibration-pairs", atk.calibration_pairs)->check(CLI::PositiveNumber);
  atk_cmd->add_option("--threshold-estimate", threshold_estimate);
  atk_cmd->add_option("--breaking-set-size", atk.breaking_set_size);
  atk_cmd->add_option("--step-size", atk.step_size);
  atk_cmd->add_option("--budget", atk.budget);
  atk_cmd->add_option("--out", atk.out, "Output directory")->required();

  ExperimentArgs exp;
  std::optional<std::uint64_t> exp_seed;
  std::optional<std::size_t> exp_targets;
  auto* exp_cmd = app.add_subcommand("experiment", "Run a batch experiment");
  exp_cmd->add_option("--config", exp.config, "Experiment config JSON")->required();
  exp_cmd->add_option("--out", exp.out, "Output directory")->required();
  exp_cmd->add_option("--jobs", exp.jobs)->check(CLI::PositiveNumber);
  exp_cmd->add_flag("--no-timing", exp.no_timing, "Write time_s as 0 for byte-stable reruns");
  exp_cmd->add_option("--seed", exp_seed);
  exp_cmd->add_option("--targets", exp_targets);

  ReportArgs rep;
  auto* rep_cmd = app.add_subcommand("report", "Summarize a saved JSON report");
  rep_cmd->add_option("--in", rep.in, "results.json")->required();
  rep_cmd->add_option("--csv", rep.csv, "Re-emit the rows as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen_cmd) return run_gen_model(gen);
    if (*cal_cmd) return run_calibrate(cal);
    if (*serve_cmd) return run_serve(serve);
    if (*atk_cmd) {
      atk.threshold_estimate = threshold_estimate;
      return run_attack(atk);
    }
    if (*exp_cmd) {
      exp.seed = exp_seed;
      exp.targets = exp_targets;
      return run_experiment(exp);
    }
    if (*rep_cmd) return run_report(rep);
  } catch (const ApiFailure& f) {
    print_error_json(f.status, f.message);
    return is_usage_status(f.status) ? kExitUsage : kExitRuntime;
  } catch (const std::exception& e) {
    print_error_json(TPR_E_INTERNAL, e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}
