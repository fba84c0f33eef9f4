#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "tplrecon/matcher.hpp"
#include "tplrecon/synth.hpp"

using namespace tplrecon;

namespace {

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
  Rng rng(RngSeed{seed});
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

Oracle make_oracle(Metric metric, OracleMode mode, std::optional<double> threshold,
                   double sigma = 0.0, std::optional<std::uint64_t> limit = std::nullopt) {
  OracleConfig c;
  c.metric = metric;
  c.mode = mode;
  if (threshold) c.threshold = Threshold(*threshold, metric);
  c.score_noise_sigma = sigma;
  c.query_limit = limit;
  c.noise_seed = RngSeed{99};
  return Oracle(c);
}

}  // namespace

TEST(SedScore, ThreeFourFive) {
  EXPECT_EQ(sed_score(Template({1.0, 2.0}), Template({4.0, 6.0})).value, 25.0);
}

TEST(SedScore, SelfIsZero) {
  const Template t(gaussian(10, 1));
  EXPECT_EQ(sed_score(t, t).value, 0.0);
}

TEST(SedScore, MatchesBruteForceAndIsSymmetric) {
  const auto a = gaussian(32, 2), b = gaussian(32, 3);
  long double acc = 0.0L;
  for (std::size_t i = 0; i < 32; ++i) acc += (static_cast<long double>(a[i]) - b[i]) * (a[i] - b[i]);
  const double s = sed_score(Template(a), Template(b)).value;
  EXPECT_NEAR(s, static_cast<double>(acc), 1e-12);
  EXPECT_EQ(s, sed_score(Template(b), Template(a)).value);
}

TEST(SedScore, DimMismatch) {
  try {
    sed_score(Template({1.0}), Template({1.0, 2.0}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kDimMismatch);
  }
}

TEST(CosineScore, OrthogonalIsZero) {
  EXPECT_EQ(cosine_score(Template({1.0, 0.0}), Template({0.0, 1.0})).value, 0.0);
}

TEST(CosineScore, SelfIsOne) {
  const Template u = normalize(Template(gaussian(12, 4)));
  EXPECT_NEAR(cosine_score(u, u).value, 1.0, 1e-15);
}

TEST(CosineScore, MatchesAngleDefinition) {
  // Independent path: law of cosines on the normalized vectors.
  const auto a = gaussian(32, 5), b = gaussian(32, 6);
  const auto na = normalized(a), nb = normalized(b);
  double d2 = 0.0;
  for (std::size_t i = 0; i < 32; ++i) d2 += (na[i] - nb[i]) * (na[i] - nb[i]);
  const double expected = 1.0 - d2 / 2.0;
  EXPECT_NEAR(cosine_score(Template(a), Template(b)).value, expected, 1e-12);
}

TEST(CosineScore, ZeroVectorErrors) {
  EXPECT_THROW(cosine_score(Template({0.0, 0.0}), Template({1.0, 0.0})), Error);
}

TEST(ThresholdValidation, Ranges) {
  EXPECT_THROW(Threshold(0.0, Metric::kSed), Error);
  EXPECT_THROW(Threshold(-1.0, Metric::kSed), Error);
  EXPECT_THROW(Threshold(1.0, Metric::kCosine), Error);
  EXPECT_THROW(Threshold(-1.0, Metric::kCosine), Error);
  EXPECT_NO_THROW(Threshold(0.5, Metric::kCosine));
}

TEST(ThresholdValidation, TieAccepts) {
  EXPECT_TRUE(Threshold(2.0, Metric::kSed).accepts(2.0));
  EXPECT_FALSE(Threshold(2.0, Metric::kSed).accepts(std::nextafter(2.0, 3.0)));
  EXPECT_TRUE(Threshold(0.5, Metric::kCosine).accepts(0.5));
  EXPECT_FALSE(Threshold(0.5, Metric::kCosine).accepts(std::nextafter(0.5, 0.0)));
}

TEST(Calibrate, OneToHundredAtOnePercent) {
  std::vector<double> scores(100);
  std::iota(scores.begin(), scores.end(), 1.0);
  std::reverse(scores.begin(), scores.end());  // input order must not matter
  const auto r = calibrate_threshold(Metric::kSed, scores, 0.01);
  std::size_t accepted = 0;
  for (double s : scores) accepted += r.threshold.accepts(s) ? 1 : 0;
  EXPECT_EQ(accepted, 1u);
  EXPECT_TRUE(r.threshold.accepts(1.0));
  EXPECT_DOUBLE_EQ(r.achieved_fmr, 0.01);
  EXPECT_EQ(r.sample_size, 100u);
}

TEST(Calibrate, CosineTakesUpperTail) {
  std::vector<double> scores;
  for (int i = 0; i < 1000; ++i) scores.push_back(-0.999 + 0.0019 * i);
  const auto r = calibrate_threshold(Metric::kCosine, scores, 0.05);
  std::size_t accepted = 0;
  for (double s : scores) accepted += r.threshold.accepts(s) ? 1 : 0;
  EXPECT_EQ(accepted, 50u);
  EXPECT_DOUBLE_EQ(r.achieved_fmr, 0.05);
}

TEST(Calibrate, AllEqualScoresAcceptNothing) {
  // Ties shrink the accept set; with every score tied, nothing can be
  // accepted without exceeding the target, so the threshold moves just past v.
  const std::vector<double> scores(200, 3.5);
  const auto r = calibrate_threshold(Metric::kSed, scores, 0.1);
  EXPECT_LT(r.threshold.value(), 3.5);
  EXPECT_EQ(r.threshold.value(), std::nextafter(3.5, 0.0));
  EXPECT_EQ(r.achieved_fmr, 0.0);
  const auto c = calibrate_threshold(Metric::kCosine, std::vector<double>(50, 0.25), 0.1);
  EXPECT_EQ(c.threshold.value(), std::nextafter(0.25, 1.0));
  EXPECT_EQ(c.achieved_fmr, 0.0);
}

TEST(Calibrate, NeverExceedsTargetOnSample) {
  Rng rng(RngSeed{8});
  std::vector<double> scores(5000);
  for (auto& s : scores) s = std::floor(rng.uniform() * 200.0) + 1.0;  // heavy ties
  for (double fmr : {0.001, 0.01, 0.05, 0.3}) {
    const auto r = calibrate_threshold(Metric::kSed, scores, fmr);
    std::size_t accepted = 0;
    for (double s : scores) accepted += r.threshold.accepts(s) ? 1 : 0;
    EXPECT_LE(static_cast<double>(accepted), fmr * 5000 + 1e-9);
    EXPECT_DOUBLE_EQ(r.achieved_fmr, accepted / 5000.0);
  }
}

TEST(Calibrate, Errors) {
  EXPECT_THROW(calibrate_threshold(Metric::kSed, std::vector<double>{}, 0.01), Error);
  const std::vector<MatchScore> mixed = {{1.0, Metric::kSed}, {0.5, Metric::kCosine}};
  EXPECT_THROW(calibrate_threshold(mixed, 0.5), Error);
  EXPECT_THROW(calibrate_threshold(Metric::kSed, std::vector<double>{1.0}, 0.0), Error);
}

TEST(Calibrate, UndersampledFlag) {
  const std::vector<double> few(50, 1.0);
  EXPECT_TRUE(calibrate_threshold(Metric::kSed, few, 0.01).undersampled);
}

TEST(Calibrate, FreshSampleAtOnePercent) {
  IdentityModelParams p;
  p.dim = 128;
  p.num_identities = 2000;
  p.seed = RngSeed{21};
  const IdentityModel model = gen_identity_model(p);
  const auto cal = calibrate_from_model(model, Metric::kSed, 0.01, 100000, RngSeed{1});
  const auto fresh = impostor_scores(model, Metric::kSed, 100000, RngSeed{2});
  std::size_t hits = 0;
  for (double s : fresh) hits += cal.threshold.accepts(s) ? 1 : 0;
  const double fmr = hits / 100000.0;
  EXPECT_GE(fmr, 0.008);
  EXPECT_LE(fmr, 0.012);
}

TEST(OracleConfigValidation, BinaryNeedsThreshold) {
  OracleConfig c;
  c.mode = OracleMode::kBinaryOnly;
  EXPECT_THROW(c.validate(), Error);
  c.threshold = Threshold(0.5, Metric::kCosine);
  EXPECT_THROW(c.validate(), Error);  // metric mismatch
  c.metric = Metric::kCosine;
  EXPECT_NO_THROW(c.validate());
  c.score_noise_sigma = -1.0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(AuthenticateScore, SelfMatchIsZero) {
  Oracle o = make_oracle(Metric::kSed, OracleMode::kScoreReleasing, std::nullopt);
  const Template f(gaussian(16, 1));
  o.enroll("a", f);
  EXPECT_EQ(o.authenticate_score("a", f).value, 0.0);
}

TEST(AuthenticateScore, NoiseFreePassthrough) {
  for (Metric m : {Metric::kSed, Metric::kCosine}) {
    Oracle o = make_oracle(m, OracleMode::kScoreReleasing, std::nullopt);
    const Template f = normalize(Template(gaussian(16, 2)));
    o.enroll("a", f);
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Template q(gaussian(16, 50 + s));
      EXPECT_EQ(o.authenticate_score("a", q).value, match_score(m, f, q).value);
    }
  }
}

TEST(AuthenticateScore, NoiseStdDev) {
  Oracle o = make_oracle(Metric::kSed, OracleMode::kScoreReleasing, std::nullopt, 0.01);
  const Template f(gaussian(8, 3));
  const Template q(gaussian(8, 4));
  o.enroll("a", f);
  const double raw = sed_score(f, q).value;
  const int n = 10000;
  std::vector<double> xs(n);
  for (auto& x : xs) x = o.authenticate_score("a", q).value;
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / (n - 1));
  EXPECT_GE(sd, 0.009);
  EXPECT_LE(sd, 0.011);
  EXPECT_NEAR(mean, raw, 5 * 0.01 / std::sqrt(n));
}

TEST(AuthenticateScore, ErrorsAndLockout) {
  Oracle o = make_oracle(Metric::kSed, OracleMode::kScoreReleasing, std::nullopt, 0.0, 3);
  const Template f({1.0, 2.0});
  o.enroll("a", f);
  try {
    o.authenticate_score("nobody", f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownIdentity);
  }
  EXPECT_THROW(o.authenticate_score("a", Template({1.0, 2.0, 3.0})), Error);
  EXPECT_THROW(o.authenticate_binary("a", f), Error);
  EXPECT_EQ(o.queries(), 0u);
  for (int i = 0; i < 3; ++i) o.authenticate_score("a", f);
  try {
    o.authenticate_score("a", f);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kLockedOut);
    EXPECT_STREQ(e.what(), "locked out");
  }
  EXPECT_EQ(o.queries(), 3u);
}

TEST(AuthenticateBinary, SelfAcceptFarReject) {
  const double T = 0.8;
  Oracle o = make_oracle(Metric::kSed, OracleMode::kBinaryOnly, T);
  const Template f(gaussian(8, 7));
  o.enroll("a", f);
  EXPECT_TRUE(o.authenticate_binary("a", f));
  std::vector<double> far(f.values().begin(), f.values().end());
  far[3] += 2.0 * std::sqrt(T);  // distance^2 = 4T
  EXPECT_FALSE(o.authenticate_binary("a", Template(far)));
  EXPECT_THROW(o.authenticate_score("a", f), Error);
}

TEST(AuthenticateBinary, AxisSweepFlipsAtBoundary) {
  const double T = 1.3;
  Oracle o = make_oracle(Metric::kSed, OracleMode::kBinaryOnly, T);
  const Template f({0.5, -0.25, 2.0});
  o.enroll("a", f);
  const double h = 1e-3;
  std::optional<std::size_t> flip;
  bool prev = true;
  for (std::size_t k = 0; k <= 3000; ++k) {
    const double t = h * static_cast<double>(k);
    const bool acc = o.authenticate_binary("a", Template({0.5 + t, -0.25, 2.0}));
    if (prev && !acc && !flip) flip = k;
    if (flip) EXPECT_FALSE(acc) << "re-accept after the flip at step " << k;
    prev = acc;
  }
  ASSERT_TRUE(flip.has_value());
  const double t_in = h * static_cast<double>(*flip - 1);
  const double t_out = h * static_cast<double>(*flip);
  EXPECT_LE(t_in * t_in, T);
  EXPECT_GT(t_out * t_out, T);
}

TEST(AuthenticateBinary, GridEquivalenceAtDimTwo) {
  for (Metric m : {Metric::kSed, Metric::kCosine}) {
    const double T = m == Metric::kSed ? 0.7 : 0.6;
    Oracle o = make_oracle(m, OracleMode::kBinaryOnly, T);
    const Template f = m == Metric::kSed ? Template({0.3, -0.4}) : normalize(Template({0.3, -0.4}));
    o.enroll("a", f);
    const Threshold thr(T, m);
    std::uint64_t n = 0;
    for (int i = -60; i <= 60; ++i) {
      for (int j = -60; j <= 60; ++j) {
        if (i == 0 && j == 0 && m == Metric::kCosine) continue;
        const Template q({i / 40.0, j / 40.0});
        const double raw = m == Metric::kSed
                               ? (q[0] - f[0]) * (q[0] - f[0]) + (q[1] - f[1]) * (q[1] - f[1])
                               : (q[0] * f[0] + q[1] * f[1]) / std::hypot(q[0], q[1]);
        const bool expected = m == Metric::kSed ? raw <= T : raw >= T;
        ASSERT_EQ(o.authenticate_binary("a", q), expected) << i << "," << j;
        ++n;
        (void)thr;
      }
    }
    EXPECT_EQ(o.queries(), n);
  }
}

TEST(Ledger, CountsEveryCallRegardlessOfOutcome) {
  Oracle o = make_oracle(Metric::kSed, OracleMode::kBinaryOnly, 1.0);
  o.enroll("a", Template({0.0, 0.0}));
  o.enroll("b", Template({5.0, 5.0}));
  std::uint64_t accepted = 0;
  for (int i = 0; i < 100; ++i) {
    accepted += o.authenticate_binary(i % 3 ? "a" : "b", Template({i * 0.05, 0.0})) ? 1 : 0;
  }
  EXPECT_GT(accepted, 0u);
  EXPECT_LT(accepted, 100u);
  const QueryLedger l = o.ledger();
  EXPECT_EQ(l.count(), 100u);
  EXPECT_EQ(l.count_for("a") + l.count_for("b"), 100u);
  EXPECT_EQ(l.count_for("b"), 34u);
  o.reset_ledger();
  EXPECT_EQ(o.queries(), 0u);
}

TEST(Mode, NamesRoundTrip) {
  EXPECT_EQ(parse_mode(mode_name(OracleMode::kBinaryOnly)), OracleMode::kBinaryOnly);
  EXPECT_EQ(parse_mode(mode_name(OracleMode::kScoreReleasing)), OracleMode::kScoreReleasing);
  EXPECT_THROW(parse_mode("loud"), Error);
}
