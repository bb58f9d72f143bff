// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "dereverb/losses/losses.hpp"
#include "dereverb/nets/generator.hpp"
#include "support/gradcheck.hpp"
#include "support/loss_fixtures.hpp"

using namespace dereverb;
using namespace dereverb::testing;

TEST(HingeLoss, GeneratorBoundaryValues) {
  EXPECT_EQ(hinge_gen_loss(score_maps(1.0)).item(), 0.0);
  EXPECT_EQ(hinge_gen_loss(score_maps(0.0)).item(), 1.0);
  EXPECT_EQ(hinge_gen_loss(score_maps(2.0)).item(), 0.0);
}

TEST(HingeLoss, DiscriminatorBoundaryValues) {
  EXPECT_EQ(hinge_disc_loss(score_maps(1.0), score_maps(-1.0)).item(), 0.0);
  EXPECT_EQ(hinge_disc_loss(score_maps(0.0), score_maps(0.0)).item(), 2.0);
  EXPECT_EQ(hinge_disc_loss(score_maps(-1.0), score_maps(1.0)).item(), 4.0);
  EXPECT_THROW(hinge_disc_loss(score_maps(0.0), std::vector<TD>{constant({1}, 0)}), InvalidArgument);
}

TEST(SpectralLoss, ZeroForEqualMagnitudes) {
  const auto a = noise({2, 8192}, 1);
  EXPECT_EQ(multiscale_spec_loss(a, a).item(), 0.0);
  EXPECT_EQ(multiscale_spec_loss(a, nn::scale(a, -1.0)).item(), 0.0);
  const auto b = noise({2, 8192}, 2);
  EXPECT_GT(multiscale_spec_loss(a, b).item(), 0.0);
}

TEST(SpectralLoss, MatchesDirectSummation) {
  for (std::uint64_t seed : {3, 4}) {
    const auto a = noise({1, 8192}, seed), b = noise({1, 8192}, seed + 10, 0.1);
    EXPECT_NEAR(multiscale_spec_loss(a, b).item(), direct_spec_loss(a.value(), b.value()), 1e-6);
  }
}

TEST(SpectralLoss, WaveformOverloadAndPreconditions) {
  const auto a = noise({1, 8192}, 5), b = noise({1, 8192}, 6);
  EXPECT_DOUBLE_EQ(multiscale_spec_loss(Waveform(a.value()), Waveform(b.value())),
                   multiscale_spec_loss(a, b).item());
  EXPECT_THROW(multiscale_spec_loss(a, noise({1, 8000}, 6)), InvalidArgument);
  EXPECT_THROW(multiscale_spec_loss(Waveform(a.value()), Waveform::zeros(10)), InvalidArgument);
  EXPECT_THROW(multiscale_spec_loss(noise({1, 32}, 1), noise({1, 32}, 2)), InvalidArgument);
}

TEST(SpectralLoss, GradientMatchesFiniteDifferences) {
  auto a = noise({1, 4096}, 7, 0.3, true);
  const auto b = noise({1, 4096}, 8);
  const auto r = gradcheck([&] { return multiscale_spec_loss(a, b); }, {{"a", a}}, 1e-6, 400);
  EXPECT_LT(r.worst_relative_error, 1e-3) << r.worst_tensor;
}

TEST(CycleLoss, IdentityGeneratorsGiveZero) {
  auto id = [](const TD& x) { return x; };
  const auto x = noise({2, 8192}, 1), y = noise({2, 8192}, 2);
  const auto [lr, ld] = cycle_losses(id, id, x, y);
  EXPECT_EQ(lr.item(), 0.0);
  EXPECT_EQ(ld.item(), 0.0);
}

TEST(CycleLoss, ZeroingGeneratorReducesToKnownValue) {
  auto g_dr = make_generator(1);
  auto zero = [](const TD& x) { return nn::scale(x, 0.0); };
  const auto x = noise({1, 8192}, 3);
  const auto [lr, ld] = cycle_losses(zero, g_dr, x, noise({1, 8192}, 4));
  const double expected = multiscale_spec_loss(g_dr(constant({1, 8192}, 0.0)), x).item();
  EXPECT_DOUBLE_EQ(lr.item(), expected);
  EXPECT_GT(lr.item(), 0.0);
}

TEST(CycleLoss, GradientMatchesFiniteDifferencesForEveryParameter) {
  auto g_rd = make_generator(11), g_dr = make_generator(12);
  const auto x = noise({1, 4096}, 5), y = noise({1, 4096}, 6);
  const auto r = gradcheck(
      [&] {
        const auto [lr, ld] = cycle_losses(g_rd, g_dr, x, y);
        return nn::add(lr, ld);
      },
      join(leaves(g_rd, "g_rd."), leaves(g_dr, "g_dr.")), 1e-6, 1000000);
  EXPECT_LT(r.worst_relative_error, 1e-3) << r.worst_tensor;
}

TEST(FeatureCycleLoss, ZeroForIdenticalInputs) {
  auto d_r = make_discriminator(1), d_d = make_discriminator(2);
  const auto x = noise({2, 4096}, 1), y = noise({2, 4096}, 2);
  const auto [fr, fd] = feature_cycle_losses(d_r, d_d, x, x, y, y);
  EXPECT_EQ(fr.item(), 0.0);
  EXPECT_EQ(fd.item(), 0.0);
}

TEST(FeatureCycleLoss, PositiveForAnyPerturbation) {
  auto d_r = make_discriminator(3), d_d = make_discriminator(4);
  nn::NoGradGuard guard;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto x = noise({1, 4096}, 1000 + seed), y = noise({1, 4096}, 2000 + seed);
    const auto dx = noise({1, 4096}, 3000 + seed, 1e-3);
    const auto [fr, fd] = feature_cycle_losses(d_r, d_d, x, nn::add(x, dx), y, nn::add(y, dx));
    ASSERT_GT(fr.item(), 0.0) << seed;
    ASSERT_GT(fd.item(), 0.0) << seed;
  }
}

TEST(FeatureCycleLoss, InvariantToConsistentBatchPermutation) {
  auto d = make_discriminator(5);
  const auto a = noise({3, 4096}, 1), b = noise({3, 4096}, 2);
  auto permute = [](const TD& t) {
    const std::size_t l = t.dim(1);
    std::vector<double> v(t.size());
    const std::size_t order[] = {2, 0, 1};
    for (std::size_t i = 0; i < 3; ++i) std::copy_n(t.data() + order[i] * l, l, v.data() + i * l);
    return TD::from(t.shape(), std::move(v));
  };
  const double base = feature_loss(d(a).features, d(b).features).item();
  const double perm = feature_loss(d(permute(a)).features, d(permute(b)).features).item();
  EXPECT_NEAR(base, perm, 1e-12 * base);
}

TEST(FeatureCycleLoss, ShapeMismatchIsRejected) {
  auto d = make_discriminator(6);
  EXPECT_THROW(feature_loss(d(noise({1, 4096}, 1)).features, d(noise({1, 8192}, 2)).features), InvalidArgument);
  Features one_scale(1);
  EXPECT_THROW(feature_loss(d(noise({1, 4096}, 1)).features, one_scale), InvalidArgument);
}

TEST(FeatureCycleLoss, GradientMatchesFiniteDifferences) {
  auto g_rd = make_generator(21), g_dr = make_generator(22);
  auto d_r = make_discriminator(23), d_d = make_discriminator(24);
  const auto x = noise({1, 4096}, 7), y = noise({1, 4096}, 8);
  const auto r = gradcheck(
      [&] {
        const auto [fr, fd] = feature_cycle_losses(d_r, d_d, x, g_dr(g_rd(x)), y, g_rd(g_dr(y)));
        return nn::add(fr, fd);
      },
      join(leaves(g_rd, "g_rd."), leaves(g_dr, "g_dr."), leaves(d_r, "d_r."), leaves(d_d, "d_d.")), 1e-6, 60);
  EXPECT_LT(r.worst_relative_error, 1e-3) << r.worst_tensor;
}

TEST(IdentityLoss, ReducesToKnownValues) {
  const auto y = noise({1, 8192}, 9);
  EXPECT_EQ(identity_loss([](const TD& t) { return t; }, y).item(), 0.0);
  EXPECT_DOUBLE_EQ(identity_loss([](const TD& t) { return nn::scale(t, 0.0); }, y).item(),
                   multiscale_spec_loss(constant({1, 8192}, 0.0), y).item());
}

TEST(IdentityLoss, DecreasesTowardIdentity) {
  const auto y = noise({1, 8192}, 10);
  double previous = INFINITY;
  for (double c : {0.1, 0.3, 0.5, 0.7, 0.9, 1.0}) {
    const double l = identity_loss([c](const TD& t) { return nn::scale(t, c); }, y).item();
    EXPECT_LT(l, previous) << c;
    previous = l;
  }
}

TEST(IdentityLoss, GradientMatchesFiniteDifferences) {
  auto g_rd = make_generator(31);
  const auto y = noise({1, 4096}, 11);
  const auto r = gradcheck([&] { return identity_loss(g_rd, y); }, leaves(g_rd, "g_rd."), 1e-6, 200);
  EXPECT_LT(r.worst_relative_error, 1e-3) << r.worst_tensor;
}

TEST(AdversarialLoss, GradientsMatchFiniteDifferences) {
  auto g = make_generator(41);
  auto d = make_discriminator(42);
  const auto x = noise({1, 4096}, 12), y = noise({1, 4096}, 13, 0.5);
  const auto rg = gradcheck([&] { return hinge_gen_loss(d(g(x)).scores); },
                            join(leaves(g, "g."), leaves(d, "d.")), 1e-6, 60);
  EXPECT_LT(rg.worst_relative_error, 1e-3) << rg.worst_tensor;
  const auto rd = gradcheck(
      [&] {
        TD fake;
        {
          nn::NoGradGuard guard;
          fake = g(x);
        }
        return hinge_disc_loss(d(y).scores, d(fake).scores);
      },
      leaves(d, "d."), 1e-6, 60);
  EXPECT_LT(rd.worst_relative_error, 1e-3) << rd.worst_tensor;
}

TEST(TotalLoss, WeightedSumExamples) {
  GeneratorLossComponents ones{1, 1, 1, 1, 1, 1, 1};
  EXPECT_DOUBLE_EQ(total_generator_loss(ones, LossWeights{}), 4.7);
  EXPECT_EQ(total_generator_loss(ones, LossWeights{0, 0, 0, 0}), 0.0);
  LossWeights no_id;
  no_id.id = 0;
  EXPECT_DOUBLE_EQ(total_generator_loss(ones, no_id), 4.2);
}

TEST(TotalLoss, LinearInEachWeight) {
  const GeneratorLossComponents c{0.3, 0.7, 1.1, 0.2, 0.9, 1.7, 0.4};
  const LossWeights base{};
  for (int k = 0; k < 4; ++k) {
    auto w1 = base, w2 = base, w3 = base;
    double* f[] = {&w1.gan, &w1.cycle, &w1.feat, &w1.id};
    double* g[] = {&w2.gan, &w2.cycle, &w2.feat, &w2.id};
    double* h[] = {&w3.gan, &w3.cycle, &w3.feat, &w3.id};
    *f[k] = 0.0;
    *g[k] = 1.0;
    *h[k] = 3.0;
    const double l0 = total_generator_loss(c, w1), l1 = total_generator_loss(c, w2), l3 = total_generator_loss(c, w3);
    EXPECT_NEAR(l3 - l0, 3 * (l1 - l0), 1e-12) << k;
  }
}

TEST(TotalLoss, NonFiniteComponentIsNamed) {
  GeneratorLossComponents c{1, 1, 1, 1, 1, 1, 1};
  c.featcycle_d = NAN;
  try {
    total_generator_loss(c, LossWeights{});
    FAIL() << "expected an error";
  } catch (const DivergenceError& e) {
    EXPECT_NE(std::string(e.what()).find("featcycle_d"), std::string::npos);
  }
  c.featcycle_d = 1;
  c.id_d = INFINITY;
  EXPECT_THROW(total_generator_loss(c, LossWeights{}), DivergenceError);
}

TEST(TotalLoss, TensorTotalMatchesScalarTotal) {
  auto g_rd = make_generator(51), g_dr = make_generator(52);
  auto d_r = make_discriminator(53), d_d = make_discriminator(54);
  const auto terms = unpaired_generator_terms(g_rd, g_dr, d_r, d_d, noise({2, 4096}, 1), noise({2, 4096}, 2));
  const LossWeights w{};
  EXPECT_NEAR(terms.total(w).item(), total_generator_loss(terms.values(), w), 1e-6);
  const auto v = terms.values();
  for (double x : {v.gen_r2d, v.gen_d2r, v.cycle_r, v.cycle_d, v.featcycle_r, v.featcycle_d, v.id_d})
    EXPECT_GE(x, 0.0);
}

TEST(TotalLoss, FullObjectiveGradientMatchesFiniteDifferences) {
  auto g_rd = make_generator(61), g_dr = make_generator(62);
  auto d_r = make_discriminator(63), d_d = make_discriminator(64);
  const auto x = noise({1, 4096}, 3), y = noise({1, 4096}, 4);
  const auto r = gradcheck(
      [&] { return unpaired_generator_terms(g_rd, g_dr, d_r, d_d, x, y).total(LossWeights{}); },
      join(leaves(g_rd, "g_rd."), leaves(g_dr, "g_dr.")), 1e-6, 40);
  EXPECT_LT(r.worst_relative_error, 1e-3) << r.worst_tensor;
}

TEST(PairedLoss, ZeroAtPerfectOutput) {
  const auto target = noise({1, 4096}, 1);
  auto g = [&](const TD&) { return target; };
  // Scores pinned at 1.5; features are the input itself.
  auto d = [](const TD& x) {
    DiscriminatorOutput<double> o;
    for (int s = 0; s < 3; ++s) {
      o.scores.push_back(nn::add_scalar(nn::scale(x, 0.0), 1.5));
      o.features.push_back({x});
    }
    return o;
  };
  const auto t = paired_loss(g, d, noise({1, 4096}, 2), target);
  EXPECT_EQ(t.total.item(), 0.0);
}

TEST(PairedLoss, FeatureWeightIsExactAndLinear) {
  auto g = make_generator(71);
  auto d = make_discriminator(72);
  const auto x = noise({1, 4096}, 3), target = noise({1, 4096}, 4);
  const auto t100 = paired_loss(g, d, x, target);
  EXPECT_EQ(t100.total.item(), t100.hinge.item() + 100.0 * t100.feature.item());
  const auto t200 = paired_loss(g, d, x, target, 200.0);
  EXPECT_NEAR(t200.total.item() - t200.hinge.item(), 2 * (t100.total.item() - t100.hinge.item()),
              1e-12 * t200.total.item());
  EXPECT_THROW(paired_loss(g, d, x, noise({1, 5000}, 4)), InvalidArgument);
}

TEST(PairedLoss, GradientMatchesFiniteDifferences) {
  auto g = make_generator(81);
  auto d = make_discriminator(82);
  const auto x = noise({1, 4096}, 5), target = noise({1, 4096}, 6);
  const auto r = gradcheck([&] { return paired_loss(g, d, x, target).total; }, leaves(g, "g."), 1e-6, 200);
  EXPECT_LT(r.worst_relative_error, 1e-3) << r.worst_tensor;
}

TEST(LossReport, KeepsOrderAndFlagsNonFinite) {
  LossReport r;
  r.set("b", 1.0);
  r.set("a", 2.0);
  r.set("b", 3.0);
  EXPECT_EQ(r.values.size(), 2u);
  EXPECT_EQ(r.values[0].first, "b");
  EXPECT_EQ(r.get("b"), 3.0);
  EXPECT_EQ(r.first_non_finite(), "");
  r.set("c", NAN);
  EXPECT_EQ(r.first_non_finite(), "c");
  EXPECT_EQ(r.to_json().dump(), R"({"b":3.0,"a":2.0,"c":null})");
  EXPECT_THROW(r.get("zzz"), InvalidArgument);
}

TEST(LossWeights, DefaultsAndValidation) {
  const LossWeights w;
  EXPECT_EQ(w.gan, 1.0);
  EXPECT_EQ(w.cycle, 0.1);
  EXPECT_EQ(w.feat, 1.0);
  EXPECT_EQ(w.id, 0.5);
  EXPECT_THROW(LossWeights::from_json({{"cycle", -1.0}}), InvalidArgument);
  EXPECT_EQ(LossWeights::from_json(w.to_json()).id, 0.5);
}
