#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tplrecon/error.hpp"

namespace tplrecon {

enum class Metric { kSed, kCosine };

const char* metric_name(Metric metric) noexcept;
Metric parse_metric(const std::string& name);

/// A biometric feature vector. Immutable once constructed; every value is
/// finite and dim >= 1. Templates tagged unit-norm have |norm - 1| <= 1e-9.
class Template {
 public:
  static constexpr double kUnitTolerance = 1e-9;

  explicit Template(std::vector<double> values, bool unit_norm = false);

  std::size_t dim() const noexcept { return values_.size(); }
  bool unit_norm() const noexcept { return unit_norm_; }
  std::span<const double> values() const noexcept { return values_; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  friend bool operator==(const Template&, const Template&) = default;

 private:
  std::vector<double> values_;
  bool unit_norm_;
};

double l2_norm(std::span<const double> v) noexcept;
inline double l2_norm(const Template& t) noexcept { return l2_norm(t.values()); }

/// Throws kDegenerateTemplate on a zero vector. Result is tagged unit-norm.
Template normalize(const Template& t);
std::vector<double> normalized(std::span<const double> v);

// Binary form: "TPL1", u32 dim, u8 unit flag, dim x f64, all little-endian.
std::vector<unsigned char> encode_template(const Template& t);
Template decode_template(std::span<const unsigned char> bytes);

void write_template(const Template& t, const std::filesystem::path& path);
Template read_template(const std::filesystem::path& path);

// {"dim": n, "unit": bool, "values": [...]}
std::string template_to_json(const Template& t);
Template template_from_json(const std::string& text);

}  // namespace tplrecon
