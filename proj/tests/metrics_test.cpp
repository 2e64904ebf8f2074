#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <filesystem>
#include <random>

#include "support/oracles.hpp"
#include "vqsgen/metrics/metrics.hpp"

using namespace vqsgen;
using namespace vqsgen::oracle;

namespace {

FeatureSet gaussian(std::size_t m, const std::vector<double>& mu, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  FeatureSet f;
  for (std::size_t i = 0; i < m; ++i) {
    std::vector<double> r(mu);
    for (double& v : r) v += n(rng);
    f.rows.push_back(r);
  }
  return f;
}

StrokeBBox box(int x0, int y0, int x1, int y1) {
  return {(x1 - x0) / 128.0, (y1 - y0) / 128.0, (x0 + x1) / 128.0, (y0 + y1) / 128.0};
}

}  // namespace

TEST(Fid, SameSamplesGiveZero) {
  const FeatureSet a = gaussian(50, {1, -2, 0.5, 3}, 1.3, 1);
  EXPECT_LT(std::abs(fid(a, a)), 1e-6);
}

TEST(Fid, SymmetricAndMatchesGeneralEigenOracle) {
  const FeatureSet a = gaussian(40, {0, 0, 0}, 1.0, 2), b = gaussian(60, {1, 0.5, -1}, 2.0, 3);
  EXPECT_NEAR(fid(a, b), fid(b, a), 1e-6);
  EXPECT_NEAR(fid(a, b), fid_general_eigen(a, b), 1e-8);
}

TEST(Fid, ShiftedGaussiansApproachSquaredMeanGap) {
  const std::vector<double> mu{1.0, -1.0, 0.5, 2.0};
  const double expect = 1.0 + 1.0 + 0.25 + 4.0;
  const double v = fid(gaussian(10000, {0, 0, 0, 0}, 1.0, 4), gaussian(10000, mu, 1.0, 5));
  EXPECT_NEAR(v, expect, 0.05 * expect);
}

TEST(Fid, OneDimensionMatchesScalarFormula) {
  const FeatureSet a{{{1}, {2}, {4}, {7}}, ""}, b{{{0}, {3}, {-1}}, ""};
  auto ms = [](const std::vector<double>& v) {
    double m = 0, s = 0;
    for (double x : v) m += x / static_cast<double>(v.size());
    for (double x : v) s += (x - m) * (x - m) / static_cast<double>(v.size() - 1);
    return std::pair{m, std::sqrt(s)};
  };
  const auto [ma, sa] = ms({1, 2, 4, 7});
  const auto [mb, sb] = ms({0, 3, -1});
  EXPECT_NEAR(fid(a, b), (ma - mb) * (ma - mb) + (sa - sb) * (sa - sb), 1e-12);
}

TEST(Fid, ErrorsAndWarnings) {
  EXPECT_THROW(fid(FeatureSet{{{1, 2}}, ""}, FeatureSet{{{1, 2}, {3, 4}}, ""}), MetricError);
  EXPECT_THROW(fid(FeatureSet{{{1}, {2}}, ""}, FeatureSet{{{1, 2}, {3, 4}}, ""}), MetricError);
  EXPECT_THROW(fid(FeatureSet{{{1}, {NAN}}, ""}, FeatureSet{{{1}, {2}}, ""}), MetricError);
  const FidReport r = fid_report(gaussian(3, {0, 0, 0, 0}, 1.0, 6), gaussian(20, {0, 0, 0, 0}, 1.0, 7));
  EXPECT_EQ(r.warnings.size(), 1u);
  EXPECT_GE(r.value, -1e-9);
}

TEST(Gd, HandCases) {
  EXPECT_EQ(gd(FeatureSet{{{2, 5}}, ""}, FeatureSet{{{2, 5}}, ""}), 0.0);
  EXPECT_EQ(gd(FeatureSet{{{0}}, ""}, FeatureSet{{{3}}, ""}), 3.0);
  EXPECT_EQ(gd(FeatureSet{{{0, 0}, {3, 4}}, ""}, FeatureSet{{{0, 0}}, ""}), 2.5);
}

TEST(Gd, MatchesDoubleLoopOracleAndIsSymmetric) {
  const FeatureSet a{{{0, 1}, {2, -1}, {4, 4}}, ""}, b{{{1, 1}, {-3, 0}, {0.5, 2}}, ""};
  double want = 0;
  for (const auto& x : a.rows)
    for (const auto& y : b.rows) want += std::hypot(x[0] - y[0], x[1] - y[1]);
  want /= 9.0;
  EXPECT_NEAR(gd(a, b), want, 1e-14);
  EXPECT_NEAR(gd(b, a), gd(a, b), 1e-14);
  EXPECT_THROW(gd(a, FeatureSet{{{1}}, ""}), MetricError);
}

TEST(BoxIou, HandCases) {
  EXPECT_EQ(bbox_iou(box(8, 8, 32, 40), box(8, 8, 32, 40)), 1.0);
  EXPECT_EQ(bbox_iou(box(0, 0, 10, 10), box(20, 20, 30, 30)), 0.0);
  // Two equal squares offset by half their width share a third of the union.
  EXPECT_NEAR(bbox_iou(box(0, 0, 32, 32), box(16, 0, 48, 32)), 1.0 / 3.0, 1e-15);
  EXPECT_EQ(bbox_iou({0, 0, 0.5, 0.5}, {0, 0, 0.5, 0.5}), 1.0);
  EXPECT_EQ(bbox_iou({0, 0, 0.5, 0.5}, {0, 0, 0.25, 0.5}), 0.0);
  EXPECT_EQ(bbox_iou({0, 0, 0.5, 0.5}, box(0, 0, 64, 64)), 0.0);
}

TEST(BoxIou, MatchesRasterOracleOnLatticeBoxes) {
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<int> c(0, 64);
  std::vector<StrokeBBox> pred, gt;
  for (int t = 0; t < 200; ++t) {
    int x0 = c(rng), x1 = c(rng), y0 = c(rng), y1 = c(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    int u0 = c(rng), u1 = c(rng), v0 = c(rng), v1 = c(rng);
    if (u0 > u1) std::swap(u0, u1);
    if (v0 > v1) std::swap(v0, v1);
    pred.push_back(box(x0, y0, x1, y1));
    gt.push_back(box(u0, v0, u1, v1));
    EXPECT_NEAR(bbox_iou(pred.back(), gt.back()), raster_iou(pred.back(), gt.back()), 1e-12) << t;
  }
  double want = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) want += raster_iou(pred[i], gt[i]) / 200.0;
  EXPECT_NEAR(mean_bbox_iou(pred, gt), want, 1e-12);
  EXPECT_THROW(mean_bbox_iou(pred, {}), MetricError);
}

TEST(Classifier, ScoresByCounting) {
  std::vector<StrokeImage> imgs(5, StrokeImage(4));
  for (std::size_t i = 0; i < 5; ++i) imgs[i].at(0, 0) = static_cast<double>(i) / 4.0;
  const ClassifierPort always0 = [](const StrokeImage&) { return std::vector<double>{1.0, 0.0}; };
  const ClassifierScores s0 = cs_sds(imgs, always0, 0);
  EXPECT_EQ(s0.cs, 1.0);
  EXPECT_EQ(s0.sds_ent, 0.0);
  const ClassifierPort uniform = [](const StrokeImage&) { return std::vector<double>(3, 1.0 / 3.0); };
  EXPECT_NEAR(cs_sds(imgs, uniform, 1).sds_ent, std::log(3.0), 1e-12);
  // Pixel (0,0) above one half votes class 1: images 3 and 4.
  const ClassifierPort threshold = [](const StrokeImage& im) {
    return im.at(0, 0) > 0.5 ? std::vector<double>{0.0, 1.0} : std::vector<double>{1.0, 0.0};
  };
  const ClassifierScores s1 = cs_sds(imgs, threshold, 1);
  EXPECT_EQ(s1.cs, 2.0 / 5.0);
  EXPECT_NEAR(s1.sds_ent, -(0.4 * std::log(0.4) + 0.6 * std::log(0.6)), 1e-12);
  EXPECT_THROW(cs_sds(imgs, ClassifierPort{}, 0), MetricError);
  const ClassifierPort bad = [](const StrokeImage&) { return std::vector<double>{0.7, 0.7}; };
  EXPECT_THROW(cs_sds(imgs, bad, 0), MetricError);
}

TEST(Classifier, NearestCentroid) {
  StrokeImage a(2), b(2), q(2);
  a.at(0, 0) = 1.0;
  b.at(1, 1) = 1.0;
  q.at(1, 1) = 0.8;
  q.at(0, 0) = 0.1;
  const NearestCentroid nc({a, b}, {0, 1}, 2);
  EXPECT_EQ(nc.predict(a), 0u);
  EXPECT_EQ(nc.predict(q), 1u);
  EXPECT_EQ(nc.port()(q), (std::vector<double>{0.0, 1.0}));
  EXPECT_THROW(NearestCentroid({a}, {0}, 2), MetricError);
}

TEST(Features, FileRoundTrip) {
  const auto path = (std::filesystem::temp_directory_path() / "vqsgen_features_test.txt").string();
  FeatureSet f{{{0.1, -2.5e-7}, {3.0, 1.0 / 3.0}}, "stage1-encoder"};
  write_features(path, f);
  const FeatureSet g = read_features(path);
  EXPECT_EQ(g.rows, f.rows);
  EXPECT_EQ(g.provenance, "stage1-encoder");
  std::filesystem::remove(path);
  EXPECT_THROW(read_features(path), MetricError);
}
