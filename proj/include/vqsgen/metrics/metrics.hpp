#pragma once

// Feature-distribution and box metrics: Frechet distance, pairwise diversity,
// bounding-box IoU, and classifier-based scores over a pluggable classifier.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqsgen/sketch/types.hpp"

namespace vqsgen {

class MetricError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// M x d feature rows plus the name of the extractor that produced them.
struct FeatureSet {
  std::vector<std::vector<double>> rows;
  std::string provenance;

  std::size_t size() const { return rows.size(); }
  std::size_t dim() const { return rows.empty() ? 0 : rows[0].size(); }

  void validate(const std::string& what) const {
    for (const auto& r : rows) {
      if (r.size() != dim()) throw MetricError(what + ": ragged feature rows");
      for (double v : r)
        if (!std::isfinite(v)) throw MetricError(what + ": non-finite feature value");
    }
  }

  Eigen::MatrixXd matrix() const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(size()), static_cast<Eigen::Index>(dim()));
    for (std::size_t i = 0; i < size(); ++i)
      for (std::size_t j = 0; j < dim(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    return m;
  }
};

/// Text form: optional "# provenance: ..." line, then one whitespace-separated row per line.
inline FeatureSet read_features(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MetricError("cannot open feature file '" + path + "'");
  FeatureSet f;
  for (std::string line; std::getline(in, line);) {
    if (line.rfind("# provenance:", 0) == 0) {
      f.provenance = line.substr(13);
      f.provenance.erase(0, f.provenance.find_first_not_of(' '));
      continue;
    }
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    std::vector<double> row;
    for (std::string tok; ss >> tok;) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument(tok);
      } catch (const std::exception&) {
        throw MetricError("feature file '" + path + "': '" + tok + "' is not a number");
      }
    }
    if (!row.empty()) f.rows.push_back(std::move(row));
  }
  f.validate("feature file '" + path + "'");
  return f;
}

inline void write_features(const std::string& path, const FeatureSet& f) {
  std::ofstream out(path);
  if (!out) throw MetricError("cannot write feature file '" + path + "'");
  out.precision(17);
  if (!f.provenance.empty()) out << "# provenance: " << f.provenance << "\n";
  for (const auto& r : f.rows) {
    for (std::size_t j = 0; j < r.size(); ++j) out << (j ? " " : "") << r[j];
    out << "\n";
  }
}

struct FidReport {
  double value = 0.0;
  double min_eigenvalue = 0.0;  // of the symmetrized covariance product
  std::vector<std::string> warnings;
};

namespace detail {

inline void mean_cov(const FeatureSet& f, Eigen::VectorXd& mu, Eigen::MatrixXd& cov) {
  const Eigen::MatrixXd X = f.matrix();
  mu = X.colwise().mean().transpose();
  const Eigen::MatrixXd C = X.rowwise() - mu.transpose();
  cov = (C.transpose() * C) / static_cast<double>(X.rows() - 1);
}

inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& s) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (s + s.transpose()));
  return es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace detail

/// |mu_a - mu_b|^2 + tr(S_a + S_b - 2 (S_a S_b)^(1/2)). The product's root
/// comes from the symmetric form S_a^(1/2) S_b S_a^(1/2); eigenvalues below
/// -1e-8 (relative to the largest) are an error, smaller negatives are clipped.
inline FidReport fid_report(const FeatureSet& a, const FeatureSet& b) {
  a.validate("fid");
  b.validate("fid");
  if (a.size() < 2 || b.size() < 2) throw MetricError("fid: each feature set needs at least 2 rows");
  if (a.dim() != b.dim()) throw MetricError("fid: feature dimensions differ (" + std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
  FidReport r;
  const std::size_t d = a.dim();
  for (const FeatureSet* f : {&a, &b})
    if (f->size() < d + 1)
      r.warnings.push_back("fid: " + std::to_string(f->size()) + " samples for dimension " + std::to_string(d) + "; covariance is singular");
  Eigen::VectorXd ma, mb;
  Eigen::MatrixXd sa, sb;
  detail::mean_cov(a, ma, sa);
  detail::mean_cov(b, mb, sb);
  const Eigen::MatrixXd ra = detail::psd_sqrt(sa);
  const Eigen::MatrixXd m = ra * sb * ra;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  r.min_eigenvalue = ev.minCoeff();
  if (r.min_eigenvalue < -1e-8 * scale) {
    std::ostringstream msg;
    msg << "fid: covariance product is not positive semi-definite (eigenvalues in [" << r.min_eigenvalue << ", " << ev.maxCoeff()
        << "], ratio " << r.min_eigenvalue / scale << ")";
    throw MetricError(msg.str());
  }
  double tr_sqrt = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) tr_sqrt += std::sqrt(std::max(ev(i), 0.0));
  r.value = (ma - mb).squaredNorm() + sa.trace() + sb.trace() - 2.0 * tr_sqrt;
  return r;
}

inline double fid(const FeatureSet& a, const FeatureSet& b) { return fid_report(a, b).value; }

/// Mean Euclidean distance over every cross pair.
inline double gd(const FeatureSet& a, const FeatureSet& b) {
  a.validate("gd");
  b.validate("gd");
  if (a.size() == 0 || b.size() == 0) throw MetricError("gd: empty feature set");
  if (a.dim() != b.dim()) throw MetricError("gd: feature dimensions differ");
  double total = 0.0;
  for (const auto& x : a.rows)
    for (const auto& y : b.rows) {
      double s = 0.0;
      for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
      total += std::sqrt(s);
    }
  return total / (static_cast<double>(a.size()) * static_cast<double>(b.size()));
}

/// Area IoU of two boxes. When both have zero area the pair scores 1 if the
/// boxes coincide and 0 otherwise.
inline double bbox_iou(const StrokeBBox& a, const StrokeBBox& b) {
  const double iw = std::max(0.0, std::min(a.right(), b.right()) - std::max(a.left(), b.left()));
  const double ih = std::max(0.0, std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top()));
  const double inter = iw * ih;
  const double uni = 4.0 * a.half_w * a.half_h + 4.0 * b.half_w * b.half_h - inter;
  if (uni <= 0.0) return a == b ? 1.0 : 0.0;
  return inter / uni;
}

inline double mean_bbox_iou(const std::vector<StrokeBBox>& pred, const std::vector<StrokeBBox>& gt) {
  if (pred.size() != gt.size())
    throw MetricError("mean_bbox_iou: " + std::to_string(pred.size()) + " predictions for " + std::to_string(gt.size()) + " boxes");
  if (pred.empty()) throw MetricError("mean_bbox_iou: no boxes");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += bbox_iou(pred[i], gt[i]);
  return s / static_cast<double>(pred.size());
}

/// image -> probability vector over K classes.
using ClassifierPort = std::function<std::vector<double>(const StrokeImage&)>;

struct ClassifierScores {
  double cs = 0.0;
  double sds_ent = 0.0;  // Shannon entropy (nats) of the mean prediction
  std::size_t samples = 0;
};

inline ClassifierScores cs_sds(const std::vector<StrokeImage>& samples, const ClassifierPort& classifier, std::size_t target) {
  if (!classifier) throw MetricError("classifier required");
  if (samples.empty()) throw MetricError("cs_sds: no samples");
  std::vector<double> mean;
  std::size_t hits = 0;
  for (const StrokeImage& img : samples) {
    const std::vector<double> p = classifier(img);
    if (p.empty()) throw MetricError("cs_sds: classifier returned no classes");
    if (mean.empty()) mean.assign(p.size(), 0.0);
    if (p.size() != mean.size()) throw MetricError("cs_sds: classifier changed its class count");
    double sum = 0.0;
    for (double v : p) {
      if (!(v >= 0.0)) throw MetricError("cs_sds: classifier returned a negative or non-finite probability");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-6) throw MetricError("cs_sds: classifier outputs must sum to 1");
    if (target >= p.size()) throw MetricError("cs_sds: target class out of range");
    if (static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) == target) ++hits;
    for (std::size_t k = 0; k < p.size(); ++k) mean[k] += p[k];
  }
  ClassifierScores s;
  s.samples = samples.size();
  s.cs = static_cast<double>(hits) / static_cast<double>(samples.size());
  for (double& m : mean) {
    m /= static_cast<double>(samples.size());
    if (m > 0.0) s.sds_ent -= m * std::log(m);
  }
  return s;
}

/// One-hot classifier assigning each image to the class with the nearest mean image (L2).
class NearestCentroid {
 public:
  NearestCentroid(const std::vector<StrokeImage>& images, const std::vector<std::size_t>& labels, std::size_t classes) {
    if (images.size() != labels.size() || images.empty()) throw MetricError("NearestCentroid: need one label per image");
    const std::size_t n = images[0].pixels().size();
    centroids_.assign(classes, std::vector<double>(n, 0.0));
    std::vector<std::size_t> counts(classes, 0);
    for (std::size_t i = 0; i < images.size(); ++i) {
      if (labels[i] >= classes) throw MetricError("NearestCentroid: label out of range");
      if (images[i].pixels().size() != n) throw MetricError("NearestCentroid: images differ in size");
      for (std::size_t p = 0; p < n; ++p) centroids_[labels[i]][p] += images[i].pixels()[p];
      ++counts[labels[i]];
    }
    for (std::size_t k = 0; k < classes; ++k) {
      if (counts[k] == 0) throw MetricError("NearestCentroid: class " + std::to_string(k) + " has no examples");
      for (double& v : centroids_[k]) v /= static_cast<double>(counts[k]);
    }
  }

  std::size_t predict(const StrokeImage& img) const {
    std::size_t best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < centroids_.size(); ++k) {
      if (img.pixels().size() != centroids_[k].size()) throw MetricError("NearestCentroid: image size mismatch");
      double d = 0.0;
      for (std::size_t p = 0; p < img.pixels().size(); ++p) d += (img.pixels()[p] - centroids_[k][p]) * (img.pixels()[p] - centroids_[k][p]);
      if (d < best_d) best_d = d, best = k;
    }
    return best;
  }

  ClassifierPort port() const {
    return [this](const StrokeImage& img) {
      std::vector<double> p(centroids_.size(), 0.0);
      p[predict(img)] = 1.0;
      return p;
    };
  }

 private:
  std::vector<std::vector<double>> centroids_;
};

}  // namespace vqsgen
