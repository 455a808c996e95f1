// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "codecert/oracle.hpp"
#include "support/random_code.hpp"

using namespace codecert;
using namespace codecert::oracle;

TEST(EnumerateBeta, Examples) {
  const auto f = enumerate_beta(3, 2, 1);
  EXPECT_EQ(f.numerator, 2u);
  EXPECT_EQ(f.denominator, 3u);
  EXPECT_EQ(enumerate_beta(6, 6, 1).value(), 1.0);
  EXPECT_EQ(enumerate_beta(5, 0, 3).value(), 0.0);
  const auto g = enumerate_beta(10, 3, 2);
  EXPECT_EQ(g.numerator, 64u);  // 120 - C(8,3)
  EXPECT_EQ(g.denominator, 120u);
  EXPECT_THROW(enumerate_beta(21, 3, 1), UsageError);
}

TEST(EnumerateBeta, AgreesWithProductFormula) {
  for (std::size_t h = 0; h <= 12; ++h)
    for (std::size_t k = 0; k <= h; ++k)
      for (std::size_t r = 0; r <= h; ++r)
        EXPECT_NEAR(enumerate_beta(h, k, r).value(), beta_factor(h, k, r), 1e-12) << h << " " << k << " " << r;
}

TEST(ForEachSubset, CountsBinomials) {
  std::size_t count = 0;
  for_each_subset(10, 4, [&](std::uint32_t mask) {
    EXPECT_EQ(__builtin_popcount(mask), 4);
    ++count;
  });
  EXPECT_EQ(count, 210u);
}

TEST(McBetaEstimate, Examples) {
  EXPECT_NEAR(mc_beta_estimate(3, 2, 1, 1000000, 1), 2.0 / 3.0, 0.002);
  EXPECT_NEAR(mc_beta_estimate(10, 3, 2, 1000000, 2), 8.0 / 15.0, 0.002);
  EXPECT_EQ(mc_beta_estimate(9, 4, 0, 100, 3), 0.0);
}

TEST(McBetaEstimate, WithinThreeSigma) {
  RandomStream rng(40);
  constexpr std::uint64_t kTrials = 200000;
  for (int i = 0; i < 25; ++i) {
    const std::size_t h = 1 + rng.below(40);
    const std::size_t k = rng.below(h + 1);
    const std::size_t r = rng.below(h + 1);
    const double b = beta_factor(h, k, r);
    const double tol = 3 * std::sqrt(b * (1 - b) / kTrials) + 1e-12;
    EXPECT_NEAR(mc_beta_estimate(h, k, r, kTrials, rng.next()), b, tol) << h << " " << k << " " << r;
  }
}

TEST(ExactSmoothedScore, Examples) {
  const auto s = CodeSnippet::parse("int f(int a, int b) { return a + b + c; }", Language::c);
  ASSERT_EQ(s.identifier_count(), 4u);
  IdentifierPresenceClassifier one(WordSet{"a"});
  EXPECT_DOUBLE_EQ(exact_smoothed_score(s, 1, 2, one), 0.5);  // C(3,1) / C(4,2)
  IdentifierPresenceClassifier all(WordSet{"f", "a", "b", "c"});
  EXPECT_DOUBLE_EQ(exact_smoothed_score(s, 1, 1, all), 1.0);
  IdentifierPresenceClassifier none(WordSet{});
  EXPECT_DOUBLE_EQ(exact_smoothed_score(s, 0, 1, none), 1.0);
}

TEST(ExactSmoothedScore, MatchesMembershipShortcut) {
  // Real masking + classification agrees with counting retained sets that
  // meet the watch set, for h up to 10.
  RandomStream rng(41);
  for (int i = 0; i < 60; ++i) {
    const auto names = testkit::random_identifiers(rng, 1 + rng.below(10));
    const auto s = CodeSnippet::parse(testkit::random_c_function(rng, names), Language::c);
    WordSet watch;
    std::uint32_t watched = 0;
    for (std::size_t e = 0; e < names.size(); ++e)
      if (rng.below(3) == 0) {
        watch.insert(names[e]);
        watched |= 1u << e;
      }
    const std::size_t k = rng.below(names.size() + 1);
    IdentifierPresenceClassifier model(watch);
    EXPECT_DOUBLE_EQ(exact_smoothed_score(s, 1, k, model), membership_hit_score(names.size(), k, watched));
  }
}

TEST(SoundnessSweep, RadiusZeroIsTrivial) {
  const auto s = CodeSnippet::parse("int f(int a) { return a; }", Language::c);
  SmoothingConfig c;
  c.mode = SmoothingMode::mask;
  c.perturb_fraction = 0.5;
  IdentifierPresenceClassifier model(WordSet{"a"});
  const auto r = soundness_sweep(s, c, model);
  EXPECT_EQ(r.violations, 0u);
  EXPECT_EQ(r.adversaries, 0u);
}

TEST(SoundnessSweep, SeparatedWatchSetHasNoViolations) {
  // h = 6, k = 1, every identifier watched: score 1 and radius > 0.
  const auto s = CodeSnippet::parse("int f(int a, int b, int c, int d) { return a + b + c + d + e; }", Language::c);
  ASSERT_EQ(s.identifier_count(), 6u);
  SmoothingConfig c;
  c.mode = SmoothingMode::mask;
  c.n_samples = 1000;
  c.perturb_fraction = 5.0 / 6.0;
  IdentifierPresenceClassifier model(WordSet{"f", "a", "b", "c", "d", "e"});
  const auto r = soundness_sweep(s, c, model);
  ASSERT_GT(*r.certificate.radius, 0u);
  EXPECT_GT(r.adversaries, 0u);
  EXPECT_EQ(r.violations, 0u);
}

TEST(SoundnessSweep, HalvedBetaIsCaught) {
  // h = 10, k = 1, every identifier watched: the true radius is 4, the
  // corrupted factor claims 9, and flipping 9 identifiers leaves g_hit = 0.1.
  std::string src = "int f(int a0";
  for (int i = 1; i < 9; ++i) src += ", int a" + std::to_string(i);
  src += ") { return 0; }";
  const auto s = CodeSnippet::parse(src, Language::c);
  ASSERT_EQ(s.identifier_count(), 10u);
  WordSet watch;
  for (const auto& e : s.identifiers()) watch.insert(e.name);
  SmoothingConfig c;
  c.mode = SmoothingMode::mask;
  c.n_samples = 1000;
  IdentifierPresenceClassifier model(watch);
  EXPECT_EQ(soundness_sweep(s, c, model).violations, 0u);
  const auto corrupted = soundness_sweep(
      s, c, model, [](std::size_t h, std::size_t k, std::size_t r) { return beta_factor(h, k, r) / 2; });
  EXPECT_EQ(*corrupted.certificate.radius, 9u);
  EXPECT_GE(corrupted.violations, 1u);
}

TEST(BetaQuantileOracle, ClosedFormsAndAgreement) {
  EXPECT_NEAR(beta_quantile_oracle(0.3, 1, 1), 0.3, 1e-9);
  EXPECT_NEAR(beta_quantile_oracle(0.001, 1000, 1), std::pow(0.001, 0.001), 1e-9);
  for (double a : {1.0, 2.5, 31.6, 316.0, 1000.0})
    for (double b : {1.0, 4.0, 100.0, 1000.0})
      for (double p : {0.001, 0.5, 0.999})
        EXPECT_NEAR(beta_quantile_oracle(p, a, b), math::beta_quantile(p, a, b), 1e-7) << p << " " << a << " " << b;
  EXPECT_THROW(beta_quantile_oracle(0.5, 0.5, 2), UsageError);
}

TEST(Coverage, ExactAndSimulatedAgree) {
  for (double p : {0.6, 0.9}) {
    const double exact = exact_coverage(p, 100, 0.001);
    const double sim = coverage_experiment(p, 100, 0.001, 20000, 42);
    EXPECT_NEAR(sim, exact, 4 * std::sqrt(exact * (1 - exact) / 20000) + 1e-4);
  }
}

TEST(Coverage, HalfAlphaCollapsesTheInterval) {
  // At alpha = 0.5 both bounds are medians of the same Beta, so the
  // interval is tiny and almost never contains p.
  EXPECT_LT(coverage_experiment(0.5, 100, 0.5, 10000, 43), 0.2);
}

TEST(Coverage, IncreasesAsAlphaShrinks) {
  double prev = 0.0;
  for (double alpha : {0.4, 0.2, 0.05, 0.01, 0.001}) {
    const double c = exact_coverage(0.7, 200, alpha);
    EXPECT_GE(c, prev);
    prev = c;
  }
}

TEST(OracleReport, AbsError) {
  const auto r = make_report("q", 0.25, 0.5, 10);
  EXPECT_EQ(r.abs_error, 0.25);
  EXPECT_EQ(r.trials_or_enumerated, 10u);
}

TEST(SoundnessSweep, ModerateScoreOverclaimsAtATie) {
  // h = 4, k = 1, three of four watched: score 0.75 and radius 1 under the
  // upper-scaled rule, yet flipping one watched name leaves a 0.5 tie.
  const auto s = CodeSnippet::parse("int f(int a, int b) { return a + b + c; }", Language::c);
  SmoothingConfig c;
  c.mode = SmoothingMode::mask;
  c.n_samples = 1000;
  c.perturb_fraction = 0.75;
  IdentifierPresenceClassifier model(WordSet{"f", "a", "b"});
  const auto r = soundness_sweep(s, c, model);
  EXPECT_EQ(*r.certificate.radius, 1u);
  EXPECT_EQ(r.violations, 3u);
  EXPECT_EQ(r.ties, 3u);
}
