#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support/fidelity.hpp"
#include "vqsgen/model/autoencoder.hpp"
#include "vqsgen/sketch/raster.hpp"

using namespace vqsgen;

namespace {

AEConfig small_config() { return AEConfig{16, {4, 8}, {1, 1}, 16, 1.0}; }

std::vector<StrokeImage> random_strokes(std::size_t count, std::size_t canvas, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_real_distribution<double> u(0.15 * canvas, 0.85 * canvas);
  std::vector<StrokeImage> out;
  for (std::size_t i = 0; i < count; ++i) {
    Polyline p;
    for (int k = 0; k < 4; ++k) p.points.push_back({u(rng), u(rng)});
    out.push_back(decouple_stroke(rasterize_stroke(p, canvas, 2)).first);
  }
  return out;
}

}  // namespace

TEST(Encode, CoordinateChannelsAreLinearRamps) {
  StrokeAutoencoder ae(small_config(), 1);
  StrokeImage img(16);
  img.at(3, 7) = 1.0;
  const Var x = ae.coord_input({&img});
  ASSERT_EQ(x.shape(), (Shape{1, 3, 16, 16}));
  const auto& v = x.vec();
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t c = 0; c < 16; ++c) {
      const double ramp = -1.0 + 2.0 * static_cast<double>(c) / 15.0;
      EXPECT_DOUBLE_EQ(v[(0 * 16 + y) * 16 + c], img.at(y, c));
      EXPECT_DOUBLE_EQ(v[(1 * 16 + y) * 16 + c], ramp);
      EXPECT_DOUBLE_EQ(v[(2 * 16 + c) * 16 + y], ramp);
    }
}

TEST(Encode, DeterministicAndSized) {
  StrokeAutoencoder ae(small_config(), 2);
  const auto imgs = random_strokes(3, 16, 4);
  const auto a = ae.encode(imgs[0]), b = ae.encode(StrokeImage(imgs[0]));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a.size(), 16u);
  const auto all = ae.encode_all(imgs, 2);
  ASSERT_EQ(all.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 16; ++j) EXPECT_NEAR(all[i][j], ae.encode(imgs[i])[j], 1e-12);
  StrokeAutoencoder twin(small_config(), 2);
  EXPECT_EQ(twin.encode(imgs[1]), ae.encode(imgs[1]));
}

TEST(Encode, PaperPresetEmbeddingIs256) {
  const AEConfig p = AEConfig::paper();
  EXPECT_EQ(p.d_e, 256u);
  EXPECT_EQ(p.canvas_size, 256u);
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(AEConfig::tiny().d_e, 64u);
}

TEST(Decode, UntrainedOutputsAreInRange) {
  StrokeAutoencoder ae(small_config(), 3);
  const auto [img, dist] = ae.decode(ae.encode(random_strokes(1, 16, 5)[0]));
  EXPECT_EQ(img.size(), 16u);
  EXPECT_EQ(dist.size(), 16u);
  for (double v : img.pixels()) EXPECT_TRUE(std::isfinite(v) && v > 0.0 && v < 1.0);
  for (double v : dist.pixels()) EXPECT_TRUE(std::isfinite(v) && v > 0.0 && v < 1.0);
}

TEST(Errors, ShapeMismatches) {
  StrokeAutoencoder ae(small_config(), 1);
  EXPECT_THROW(ae.encode(StrokeImage(8)), ShapeError);
  EXPECT_THROW(ae.decode(std::vector<double>(15)), ShapeError);
  EXPECT_THROW(StrokeAutoencoder(AEConfig{18, {4, 8}, {1, 1}, 16, 1.0}), std::invalid_argument);
  EXPECT_THROW(StrokeAutoencoder(AEConfig{16, {4, 8}, {1, 1}, 15, 1.0}), std::invalid_argument);
  EXPECT_THROW(StrokeAutoencoder(AEConfig{16, {4, 8}, {1, 0}, 16, 1.0}), std::invalid_argument);
  EXPECT_THROW(train_autoencoder(ae, {}, {}), std::invalid_argument);
}

TEST(AELoss, ZeroWhenBothBranchesMatch) {
  const Var img = Var::from({1, 1, 2, 2}, {1, 0, 0.5, 0.25});
  const Var dist = Var::from({1, 1, 2, 2}, {0, 0.3, 0.6, 1});
  EXPECT_EQ(ae_loss(img, img, dist, dist, 1.0).item(), 0.0);
}

TEST(AELoss, HandComputed2x2) {
  const Var img = Var::from({1, 1, 2, 2}, {1, 0, 0, 1});
  const Var recon = Var::from({1, 1, 2, 2}, {0.5, 0, 0.25, 1});
  const Var dg = Var::from({1, 1, 2, 2}, {0, 0.5, 0.5, 0});
  const Var dp = Var::from({1, 1, 2, 2}, {0, 0.5, 0, 0.5});
  // Reconstruction: (0.25 + 0.0625) / 4; distance: (0.25 + 0.25) / 4.
  EXPECT_DOUBLE_EQ(ae_loss(img, recon, dp, dg, 1.0).item(), 0.078125 + 0.125);
  EXPECT_DOUBLE_EQ(ae_loss(img, recon, dp, dg, 2.0).item(), 0.078125 + 0.25);
  EXPECT_DOUBLE_EQ(ae_loss(img, recon, dp, dg, 0.0).item(), 0.078125);
}

TEST(AELoss, NonNegativeOnRandomInputs) {
  Rng rng(9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < 20; ++t) {
    std::vector<double> a(8), b(8), c(8), d(8);
    for (std::size_t i = 0; i < 8; ++i) a[i] = u(rng), b[i] = u(rng), c[i] = u(rng), d[i] = u(rng);
    EXPECT_GT(ae_loss(Var::from({2, 1, 2, 2}, a), Var::from({2, 1, 2, 2}, b), Var::from({2, 1, 2, 2}, c),
                      Var::from({2, 1, 2, 2}, d), 1.0)
                  .item(),
              0.0);
  }
}

TEST(AELoss, GradientsMatchFiniteDifferences) {
  const harness::FidelityResult r = harness::autoencoder_fidelity();
  EXPECT_TRUE(r.passed) << "worst " << r.worst << " rel " << r.max_rel_err;
  EXPECT_LT(r.max_rel_err, 1e-3);
  EXPECT_GT(r.checked, 10 * r.excluded);
}

TEST(Training, LossDecreasesAndIsDeterministic) {
  const auto imgs = random_strokes(6, 16, 7);
  AETrainOptions opt;
  opt.epochs = 30;
  opt.batch_size = 3;
  opt.schedule = {LrSchedule::Kind::StepDecay, 3e-3, 10, 0.5};
  StrokeAutoencoder a(small_config(), 5), b(small_config(), 5);
  const auto ca = train_autoencoder(a, imgs, opt), cb = train_autoencoder(b, imgs, opt);
  ASSERT_EQ(ca.size(), 30u);
  EXPECT_EQ(ca, cb);
  for (double l : ca) EXPECT_TRUE(std::isfinite(l));
  EXPECT_LT(ca.back(), ca.front());
  EXPECT_EQ(a.encode(imgs[0]), b.encode(imgs[0]));
}

TEST(Training, DivergenceReportsEpochAndBatch) {
  const auto imgs = random_strokes(2, 16, 8);
  StrokeAutoencoder ae(small_config(), 5);
  AETrainOptions opt;
  opt.epochs = 1;
  opt.schedule = {LrSchedule::Kind::Constant, 1e300, 10, 1.0};
  try {
    for (int i = 0; i < 3; ++i) train_autoencoder(ae, imgs, opt);
    GTEST_SKIP() << "huge step stayed finite";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
  }
}
