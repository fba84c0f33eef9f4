#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "tplrecon/eval.hpp"

namespace tplrecon {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_from(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

bool same_double(double a, double b) {
  return (std::isnan(a) && std::isnan(b)) || a == b;
}

bool close(double a, double b) {
  if (std::isnan(a) || std::isnan(b)) return std::isnan(a) && std::isnan(b);
  return std::abs(a - b) <= 1e-12 * std::max(1.0, std::max(std::abs(a), std::abs(b)));
}

}  // namespace

std::vector<AggregateRow> compute_aggregates(const std::vector<ExperimentRow>& rows) {
  // Groups keep first-appearance order.
  std::vector<std::pair<std::string, double>> keys;
  std::map<std::pair<std::string, double>, std::vector<const ExperimentRow*>> groups;
  for (const auto& r : rows) {
    auto key = std::make_pair(r.attack, r.fmr);
    if (!groups.count(key)) keys.push_back(key);
    groups[key].push_back(&r);
  }

  std::vector<AggregateRow> out;
  for (const auto& key : keys) {
    const auto& members = groups[key];
    AggregateRow a;
    a.attack = key.first;
    a.fmr = key.second;
    a.rows = members.size();
    std::vector<double> losses;
    double queries = 0.0;
    std::size_t passed = 0;
    for (const auto* r : members) {
      queries += static_cast<double>(r->queries);
      if (r->passed) ++passed;
      if (r->ok) losses.push_back(r->loss);
      else ++a.failures;
    }
    a.mean_queries = queries / static_cast<double>(a.rows);
    a.success_rate = static_cast<double>(passed) / static_cast<double>(a.rows);
    if (losses.empty()) {
      a.mean_loss = a.std_loss = a.median_loss = std::numeric_limits<double>::quiet_NaN();
    } else {
      double sum = 0.0;
      for (double l : losses) sum += l;
      a.mean_loss = sum / static_cast<double>(losses.size());
      double ss = 0.0;
      for (double l : losses) ss += (l - a.mean_loss) * (l - a.mean_loss);
      a.std_loss = losses.size() > 1 ? std::sqrt(ss / static_cast<double>(losses.size() - 1)) : 0.0;
      std::sort(losses.begin(), losses.end());
      const std::size_t n = losses.size();
      a.median_loss = n % 2 ? losses[n / 2] : 0.5 * (losses[n / 2 - 1] + losses[n / 2]);
    }
    out.push_back(a);
  }
  return out;
}

std::string report_to_csv(const ExperimentReport& report) {
  std::ostringstream os;
  os << "identity,attack,metric,fmr,loss,queries,time_s,passed\n";
  for (const auto& r : report.rows) {
    os << r.identity << ',' << r.attack << ',' << metric_name(r.metric) << ','
       << fmt_double(r.fmr) << ',' << fmt_double(r.loss) << ',' << r.queries << ','
       << fmt_double(r.time_s) << ',' << (r.passed ? "true" : "false") << '\n';
  }
  return os.str();
}

std::string report_to_json(const ExperimentReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) {
    json o = {{"identity", r.identity},       {"attack", r.attack},
              {"metric", metric_name(r.metric)}, {"fmr", r.fmr},
              {"ok", r.ok},                   {"loss", number_or_null(r.loss)},
              {"queries", r.queries},         {"time_s", r.time_s},
              {"passed", r.passed},           {"seed_queries", r.seed_queries},
              {"redraws", r.redraws},         {"disfe_rate", r.disfe_rate}};
    if (!r.ok) o["error"] = r.error;
    if (!r.convergence.empty()) o["convergence"] = r.convergence;
    rows.push_back(std::move(o));
  }
  json aggs = json::array();
  for (const auto& a : report.aggregates) {
    aggs.push_back({{"attack", a.attack},
                    {"fmr", a.fmr},
                    {"rows", a.rows},
                    {"failures", a.failures},
                    {"mean_loss", number_or_null(a.mean_loss)},
                    {"std_loss", number_or_null(a.std_loss)},
                    {"median_loss", number_or_null(a.median_loss)},
                    {"mean_queries", a.mean_queries},
                    {"success_rate", a.success_rate}});
  }
  json cal = json::array();
  for (const auto& c : report.calibration) {
    cal.push_back({{"fmr", c.fmr},
                   {"threshold", c.threshold},
                   {"achieved_fmr", c.achieved_fmr},
                   {"sample_size", c.sample_size}});
  }
  json j = {{"config", report.config_json.empty() ? json::object()
                                                  : json::parse(report.config_json)},
            {"calibration", cal},
            {"rows", rows},
            {"aggregates", aggs}};
  return j.dump(1);
}

ExperimentReport report_from_json(const std::string& text) {
  ExperimentReport report;
  std::vector<AggregateRow> stored;
  try {
    const json j = json::parse(text);
    if (j.contains("config") && !j["config"].empty()) report.config_json = j["config"].dump();
    for (const auto& c : j.value("calibration", json::array())) {
      report.calibration.push_back({c.at("fmr").get<double>(), c.at("threshold").get<double>(),
                                    c.at("achieved_fmr").get<double>(),
                                    c.at("sample_size").get<std::size_t>()});
    }
    for (const auto& o : j.at("rows")) {
      ExperimentRow r;
      r.identity = o.at("identity").get<std::size_t>();
      r.attack = o.at("attack").get<std::string>();
      r.metric = parse_metric(o.at("metric").get<std::string>());
      r.fmr = o.at("fmr").get<double>();
      r.ok = o.value("ok", true);
      r.error = o.value("error", std::string());
      r.loss = number_from(o.at("loss"));
      r.queries = o.at("queries").get<std::uint64_t>();
      r.time_s = o.at("time_s").get<double>();
      r.passed = o.at("passed").get<bool>();
      r.seed_queries = o.value("seed_queries", std::uint64_t{0});
      r.redraws = o.value("redraws", std::uint64_t{0});
      r.disfe_rate = o.value("disfe_rate", 0.0);
      if (o.contains("convergence")) r.convergence = o["convergence"].get<std::vector<double>>();
      report.rows.push_back(std::move(r));
    }
    for (const auto& o : j.at("aggregates")) {
      AggregateRow a;
      a.attack = o.at("attack").get<std::string>();
      a.fmr = o.at("fmr").get<double>();
      a.rows = o.at("rows").get<std::size_t>();
      a.failures = o.at("failures").get<std::size_t>();
      a.mean_loss = number_from(o.at("mean_loss"));
      a.std_loss = number_from(o.at("std_loss"));
      a.median_loss = number_from(o.at("median_loss"));
      a.mean_queries = o.at("mean_queries").get<double>();
      a.success_rate = o.at("success_rate").get<double>();
      stored.push_back(a);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("report json: ") + e.what());
  }

  report.aggregates = compute_aggregates(report.rows);
  bool consistent = stored.size() == report.aggregates.size();
  for (std::size_t i = 0; consistent && i < stored.size(); ++i) {
    const auto& s = stored[i];
    const auto& c = report.aggregates[i];
    consistent = s.attack == c.attack && s.fmr == c.fmr && s.rows == c.rows &&
                 s.failures == c.failures && close(s.mean_loss, c.mean_loss) &&
                 close(s.std_loss, c.std_loss) && close(s.median_loss, c.median_loss) &&
                 close(s.mean_queries, c.mean_queries) && close(s.success_rate, c.success_rate);
  }
  if (!consistent) {
    throw Error(ErrorCode::kParse, "report aggregates do not match its rows");
  }
  report.aggregates = std::move(stored);
  return report;
}

bool reports_equal(const ExperimentReport& a, const ExperimentReport& b) {
  if (a.rows.size() != b.rows.size() || a.aggregates.size() != b.aggregates.size() ||
      a.calibration.size() != b.calibration.size()) {
    return false;
  }
  if (!a.config_json.empty() && !b.config_json.empty() &&
      json::parse(a.config_json) != json::parse(b.config_json)) {
    return false;
  }
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    const auto& x = a.rows[i];
    const auto& y = b.rows[i];
    if (x.identity != y.identity || x.attack != y.attack || x.metric != y.metric ||
        x.fmr != y.fmr || x.ok != y.ok || x.error != y.error || !same_double(x.loss, y.loss) ||
        x.queries != y.queries || x.time_s != y.time_s || x.passed != y.passed ||
        x.seed_queries != y.seed_queries || x.redraws != y.redraws ||
        x.disfe_rate != y.disfe_rate || x.convergence != y.convergence) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.aggregates.size(); ++i) {
    const auto& x = a.aggregates[i];
    const auto& y = b.aggregates[i];
    if (x.attack != y.attack || x.fmr != y.fmr || x.rows != y.rows ||
        x.failures != y.failures || !same_double(x.mean_loss, y.mean_loss) ||
        !same_double(x.std_loss, y.std_loss) || !same_double(x.median_loss, y.median_loss) ||
        x.mean_queries != y.mean_queries || x.success_rate != y.success_rate) {
      return false;
    }
  }
  for (std::size_t i = 0; i < a.calibration.size(); ++i) {
    const auto& x = a.calibration[i];
    const auto& y = b.calibration[i];
    if (x.fmr != y.fmr || x.threshold != y.threshold || x.achieved_fmr != y.achieved_fmr ||
        x.sample_size != y.sample_size) {
      return false;
    }
  }
  return true;
}

void emit_report(const ExperimentReport& report, ReportFormat format,
                 const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out << (format == ReportFormat::kCsv ? report_to_csv(report) : report_to_json(report));
  if (format == ReportFormat::kJson) out << '\n';
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

ExperimentReport load_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return report_from_json(ss.str());
}

std::vector<ConvergencePoint> baseline_convergence(const ExperimentReport& report) {
  std::vector<double> fmrs;
  for (const auto& r : report.rows) {
    if (r.attack == attack_name(AttackKind::kBinaryBaseline) &&
        std::find(fmrs.begin(), fmrs.end(), r.fmr) == fmrs.end()) {
      fmrs.push_back(r.fmr);
    }
  }
  std::vector<ConvergencePoint> out;
  for (double fmr : fmrs) {
    std::vector<double> sums;
    std::vector<std::size_t> counts;
    for (const auto& r : report.rows) {
      if (r.attack != attack_name(AttackKind::kBinaryBaseline) || r.fmr != fmr || !r.ok) continue;
      if (r.convergence.size() > sums.size()) {
        sums.resize(r.convergence.size(), 0.0);
        counts.resize(r.convergence.size(), 0);
      }
      for (std::size_t k = 0; k < r.convergence.size(); ++k) {
        sums[k] += r.convergence[k];
        ++counts[k];
      }
    }
    for (std::size_t k = 0; k < sums.size(); ++k) {
      out.push_back({fmr, k + 1, sums[k] / static_cast<double>(counts[k]), counts[k]});
    }
  }
  return out;
}

std::string convergence_to_csv(const std::vector<ConvergencePoint>& points) {
  std::ostringstream os;
  os << "fmr,accepted,mean_loss,targets\n";
  for (const auto& p : points) {
    os << fmt_double(p.fmr) << ',' << p.accepted << ',' << fmt_double(p.mean_loss) << ','
       << p.targets << '\n';
  }
  return os.str();
}

std::string report_summary(const ExperimentReport& report) {
  std::ostringstream os;
  for (const auto& c : report.calibration) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "calibration fmr=%g threshold=%.6g achieved=%.4g n=%zu\n",
                  c.fmr, c.threshold, c.achieved_fmr, c.sample_size);
    os << buf;
  }
  os << "attack            fmr      rows fail  mean_loss     std_loss      median_loss   "
        "mean_queries  success\n";
  for (const auto& a : report.aggregates) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-17s %-8g %-4zu %-4zu  %-12.4g  %-12.4g  %-12.4g  %-12.1f  %.3f\n",
                  a.attack.c_str(), a.fmr, a.rows, a.failures, a.mean_loss, a.std_loss,
                  a.median_loss, a.mean_queries, a.success_rate);
    os << buf;
  }
  return os.str();
}

}  // namespace tplrecon
