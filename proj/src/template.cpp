#include "tplrecon/template.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

namespace tplrecon {
namespace {

constexpr char kMagic[4] = {'T', 'P', 'L', '1'};
constexpr std::size_t kHeaderSize = 4 + 4 + 1;

static_assert(std::endian::native == std::endian::little,
              "template codec assumes a little-endian host");

void check_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw Error(ErrorCode::kNonFinite, "non-finite template value");
    }
  }
}

}  // namespace

const char* metric_name(Metric metric) noexcept {
  return metric == Metric::kSed ? "sed" : "cosine";
}

Metric parse_metric(const std::string& name) {
  if (name == "sed" || name == "SED") return Metric::kSed;
  if (name == "cosine" || name == "cos" || name == "Cosine") return Metric::kCosine;
  throw Error(ErrorCode::kInvalidArgument, "unknown metric '" + name + "'");
}

Template::Template(std::vector<double> values, bool unit_norm)
    : values_(std::move(values)), unit_norm_(unit_norm) {
  if (values_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "template dim must be >= 1");
  }
  check_finite(values_);
  if (unit_norm_ && std::abs(l2_norm(values_) - 1.0) > kUnitTolerance) {
    throw Error(ErrorCode::kInvalidArgument,
                "template tagged unit-norm but norm deviates from 1");
  }
}

double l2_norm(std::span<const double> v) noexcept {
  // Scaled accumulation keeps tiny and huge vectors from under/overflowing.
  double scale = 0.0;
  for (double x : v) scale = std::max(scale, std::abs(x));
  if (scale == 0.0) return 0.0;
  double sum = 0.0;
  for (double x : v) {
    const double y = x / scale;
    sum += y * y;
  }
  return scale * std::sqrt(sum);
}

std::vector<double> normalized(std::span<const double> v) {
  const double n = l2_norm(v);
  if (n == 0.0) {
    throw Error(ErrorCode::kDegenerateTemplate, "degenerate template");
  }
  std::vector<double> out(v.begin(), v.end());
  for (double& x : out) x /= n;
  return out;
}

Template normalize(const Template& t) {
  return Template(normalized(t.values()), true);
}

std::vector<unsigned char> encode_template(const Template& t) {
  std::vector<unsigned char> out(kHeaderSize + t.dim() * sizeof(double));
  std::memcpy(out.data(), kMagic, 4);
  const auto dim = static_cast<std::uint32_t>(t.dim());
  std::memcpy(out.data() + 4, &dim, 4);
  out[8] = t.unit_norm() ? 1 : 0;
  std::memcpy(out.data() + kHeaderSize, t.values().data(),
              t.dim() * sizeof(double));
  return out;
}

Template decode_template(std::span<const unsigned char> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw Error(ErrorCode::kBadMagic, "bad magic");
  }
  if (bytes.size() < kHeaderSize) {
    throw Error(ErrorCode::kLengthMismatch, "length mismatch: truncated header");
  }
  std::uint32_t dim = 0;
  std::memcpy(&dim, bytes.data() + 4, 4);
  const unsigned char flag = bytes[8];
  const std::size_t payload = bytes.size() - kHeaderSize;
  if (dim == 0 || payload != static_cast<std::size_t>(dim) * sizeof(double)) {
    throw Error(ErrorCode::kLengthMismatch,
                "length mismatch: dim " + std::to_string(dim) + " vs " +
                    std::to_string(payload) + " payload bytes");
  }
  if (flag > 1) {
    throw Error(ErrorCode::kParse, "invalid norm flag");
  }
  std::vector<double> values(dim);
  std::memcpy(values.data(), bytes.data() + kHeaderSize, payload);
  check_finite(values);
  return Template(std::move(values), flag == 1);
}

void write_template(const Template& t, const std::filesystem::path& path) {
  const auto bytes = encode_template(t);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path.string());
}

Template read_template(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  return decode_template(bytes);
}

std::string template_to_json(const Template& t) {
  nlohmann::json j;
  j["dim"] = t.dim();
  j["unit"] = t.unit_norm();
  j["values"] = std::vector<double>(t.values().begin(), t.values().end());
  return j.dump();
}

Template template_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("template json: ") + e.what());
  }
  if (!j.is_object() || !j.contains("values") || !j["values"].is_array()) {
    throw Error(ErrorCode::kParse, "template json: missing values array");
  }
  std::vector<double> values;
  for (const auto& v : j["values"]) {
    if (!v.is_number()) throw Error(ErrorCode::kNonFinite, "non-numeric template value");
    values.push_back(v.get<double>());
  }
  if (j.contains("dim") && j["dim"].get<std::size_t>() != values.size()) {
    throw Error(ErrorCode::kLengthMismatch, "length mismatch");
  }
  const bool unit = j.value("unit", false);
  return Template(std::move(values), unit);
}

}  // namespace tplrecon
