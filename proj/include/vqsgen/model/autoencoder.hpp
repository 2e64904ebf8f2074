#pragma once

// Stroke latent embedding: a CoordConv CNN encoder and a decoder with a
// reconstruction branch and a distance-field branch.

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "vqsgen/core/conv.hpp"
#include "vqsgen/core/optim.hpp"
#include "vqsgen/core/params.hpp"
#include "vqsgen/sketch/distance_field.hpp"
#include "vqsgen/sketch/types.hpp"

namespace vqsgen {

struct AEConfig {
  std::size_t canvas_size = 64;
  std::vector<std::size_t> block_channels = {16, 32, 64, 128};
  // 3x3 convolutions per block; each block ends in a 2x2 max pool.
  std::vector<std::size_t> block_reps = {1, 1, 2, 1};
  std::size_t d_e = 64;
  double lambda_d = 1.0;

  static AEConfig tiny() { return {}; }
  static AEConfig paper() { return {256, {64, 128, 256, 512}, {1, 1, 2, 1}, 256, 1.0}; }

  std::size_t bottleneck_side() const { return canvas_size >> block_channels.size(); }
  std::size_t bottleneck_channels() const { return d_e / (bottleneck_side() * bottleneck_side()); }

  void validate() const {
    if (block_channels.empty() || block_channels.size() != block_reps.size())
      throw std::invalid_argument("AEConfig: block_channels and block_reps must be non-empty and equal length");
    for (std::size_t r : block_reps)
      if (r == 0) throw std::invalid_argument("AEConfig: block_reps entries must be >= 1");
    const std::size_t side = bottleneck_side();
    if (side == 0 || (side << block_channels.size()) != canvas_size)
      throw std::invalid_argument("AEConfig: canvas_size must be divisible by 2^blocks");
    if (d_e == 0 || d_e % (side * side) != 0)
      throw std::invalid_argument("AEConfig: d_e must be a positive multiple of the bottleneck area " + std::to_string(side * side));
  }
};

/// Mean-per-pixel reconstruction error plus lambda_d times the distance-map error.
inline Var ae_loss(const Var& img, const Var& recon, const Var& dist_pred, const Var& dist_gt, double lambda_d) {
  Var l = mse(recon, img);
  if (lambda_d == 0.0) return l;
  return add(l, scale(mse(dist_pred, dist_gt), lambda_d));
}

class StrokeAutoencoder {
 public:
  StrokeAutoencoder() = default;
  explicit StrokeAutoencoder(AEConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    auto conv = [&](const std::string& name, std::size_t cout, std::size_t cin, std::size_t k) {
      Layer l{params_.add(name + "/w", kaiming({cout, cin, k, k}, cin * k * k, rng)), params_.add(name + "/b", zeros_param({cout}))};
      return l;
    };
    std::size_t cin = 3;
    for (std::size_t b = 0; b < cfg_.block_channels.size(); ++b)
      for (std::size_t r = 0; r < cfg_.block_reps[b]; ++r) {
        enc_.push_back(conv("ae/enc/b" + std::to_string(b) + "/c" + std::to_string(r), cfg_.block_channels[b], cin, 3));
        cin = cfg_.block_channels[b];
      }
    enc_neck_ = conv("ae/enc/neck", cfg_.bottleneck_channels(), cin, 1);
    for (const char* branch : {"recon", "dist"}) {
      Branch br;
      const std::string p = std::string("ae/dec_") + branch;
      std::size_t c = cfg_.block_channels.back();
      br.neck = conv(p + "/neck", c, cfg_.bottleneck_channels(), 1);
      for (std::size_t b = cfg_.block_channels.size(); b-- > 0;) {
        const std::size_t out = cfg_.block_channels[b];
        const std::string bp = p + "/b" + std::to_string(b);
        // A 2x2 stride-2 transposed conv feeds each output from Cin inputs.
        br.up.push_back({params_.add(bp + "/up/w", kaiming({c, out, 2, 2}, c, rng)), params_.add(bp + "/up/b", zeros_param({out}))});
        std::vector<Layer> convs;
        for (std::size_t r = 1; r < cfg_.block_reps[b]; ++r) convs.push_back(conv(bp + "/c" + std::to_string(r), out, out, 3));
        br.convs.push_back(std::move(convs));
        c = out;
      }
      br.head = conv(p + "/head", 1, c, 3);
      // Start the sigmoid outputs near 0.5 rather than saturated.
      for (double& v : br.head.w.mutable_values()) v *= 0.1;
      if (std::string(branch) == "recon") br.head.b.mutable_values()[0] = kReconHeadBias;
      (std::string(branch) == "recon" ? recon_ : dist_) = std::move(br);
    }
  }

  const AEConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// Grayscale pixels plus x and y ramps in [-1, 1] as a [B, 3, S, S] input.
  Var coord_input(const std::vector<const StrokeImage*>& imgs) const {
    const std::size_t S = cfg_.canvas_size, P = S * S;
    std::vector<double> v(imgs.size() * 3 * P);
    for (std::size_t n = 0; n < imgs.size(); ++n) {
      if (imgs[n]->size() != S)
        throw ShapeError("encode: image is " + std::to_string(imgs[n]->size()) + "x" + std::to_string(imgs[n]->size()) +
                         ", model canvas is " + std::to_string(S));
      double* dst = v.data() + n * 3 * P;
      std::copy(imgs[n]->pixels().begin(), imgs[n]->pixels().end(), dst);
      for (std::size_t y = 0; y < S; ++y)
        for (std::size_t x = 0; x < S; ++x) {
          dst[P + y * S + x] = ramp(x);
          dst[2 * P + y * S + x] = ramp(y);
        }
    }
    return Var::from({imgs.size(), 3, S, S}, std::move(v));
  }

  /// [B, 3, S, S] -> [B, d_e]
  Var encode_batch(const Var& x) const {
    Var h = x;
    std::size_t k = 0;
    for (std::size_t b = 0; b < cfg_.block_channels.size(); ++b) {
      for (std::size_t r = 0; r < cfg_.block_reps[b]; ++r, ++k) h = relu(conv2d(h, enc_[k].w, enc_[k].b, 1, 1));
      h = maxpool2d(h, 2, 2);
    }
    return flatten(conv2d(h, enc_neck_.w, enc_neck_.b));
  }

  /// [B, d_e] -> (reconstruction, distance map), each [B, 1, S, S] in (0, 1).
  std::pair<Var, Var> decode_batch(const Var& e) const {
    if (e.rank() != 2 || e.dim(1) != cfg_.d_e)
      throw ShapeError("decode: expected [B, " + std::to_string(cfg_.d_e) + "], got " + shape_str(e.shape()));
    const std::size_t s = cfg_.bottleneck_side();
    Var z = reshape(e, {e.dim(0), cfg_.bottleneck_channels(), s, s});
    return {run_branch(recon_, z), run_branch(dist_, z)};
  }

  std::vector<double> encode(const StrokeImage& img) const {
    NoGradGuard ng;
    return encode_batch(coord_input({&img})).vec();
  }

  std::vector<std::vector<double>> encode_all(const std::vector<StrokeImage>& imgs, std::size_t chunk = 32) const {
    NoGradGuard ng;
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < imgs.size(); i += chunk) {
      std::vector<const StrokeImage*> part;
      for (std::size_t j = i; j < std::min(imgs.size(), i + chunk); ++j) part.push_back(&imgs[j]);
      Var e = encode_batch(coord_input(part));
      for (std::size_t j = 0; j < part.size(); ++j)
        out.emplace_back(e.vec().begin() + static_cast<std::ptrdiff_t>(j * cfg_.d_e),
                         e.vec().begin() + static_cast<std::ptrdiff_t>((j + 1) * cfg_.d_e));
    }
    return out;
  }

  std::pair<StrokeImage, DistanceMap> decode(const std::vector<double>& emb) const {
    if (emb.size() != cfg_.d_e)
      throw ShapeError("decode: embedding has " + std::to_string(emb.size()) + " values, expected " + std::to_string(cfg_.d_e));
    NoGradGuard ng;
    auto [r, d] = decode_batch(Var::from({1, cfg_.d_e}, emb));
    return {StrokeImage(cfg_.canvas_size, r.vec()), DistanceMap(cfg_.canvas_size, d.vec())};
  }

 private:
  // Stroke images are mostly background; start the reconstruction near sigmoid(-3).
  static constexpr double kReconHeadBias = -3.0;

  struct Layer {
    Var w, b;
  };
  struct Branch {
    Layer neck;
    std::vector<Layer> up;
    std::vector<std::vector<Layer>> convs;
    Layer head;
  };

  double ramp(std::size_t i) const {
    return cfg_.canvas_size == 1 ? 0.0 : -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(cfg_.canvas_size - 1);
  }

  Var run_branch(const Branch& br, const Var& z) const {
    Var h = relu(conv2d(z, br.neck.w, br.neck.b));
    for (std::size_t i = 0; i < br.up.size(); ++i) {
      h = relu(conv_transpose2d(h, br.up[i].w, br.up[i].b, 2));
      for (const Layer& l : br.convs[i]) h = relu(conv2d(h, l.w, l.b, 1, 1));
    }
    return sigmoid(conv2d(h, br.head.w, br.head.b, 1, 1));
  }

  AEConfig cfg_;
  ParamSet params_;
  std::vector<Layer> enc_;
  Layer enc_neck_;
  Branch recon_, dist_;
};

struct AETrainOptions {
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  LrSchedule schedule{LrSchedule::Kind::StepDecay, 1e-4, 10, 0.5};
  std::uint64_t seed = 0;
  std::size_t patience = 0;
  std::function<void(std::size_t epoch, double loss)> on_epoch;
  // Replaces the training images for one epoch (online augmentation).
  std::function<std::vector<StrokeImage>(std::size_t epoch)> epoch_data;
};

struct AEBatchSet {
  std::vector<StrokeImage> images;
  std::vector<DistanceMap> dists;

  explicit AEBatchSet(std::vector<StrokeImage> imgs) : images(std::move(imgs)) {
    for (const StrokeImage& im : images) dists.push_back(distance_field(im));
  }
};

/// One shuffled pass with Adam; returns the sample-weighted mean loss.
inline double ae_train_epoch(StrokeAutoencoder& ae, const AEBatchSet& data, AdamState& adam, std::size_t batch_size, Rng& rng,
                             std::size_t epoch = 0) {
  const std::size_t n = data.images.size(), S = ae.config().canvas_size;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const std::vector<Var> vars = ae.params().vars();
  double total = 0.0;
  for (std::size_t start = 0, bi = 0; start < n; start += batch_size, ++bi) {
    const std::size_t m = std::min(batch_size, n - start);
    std::vector<const StrokeImage*> imgs;
    std::vector<double> target, dist;
    for (std::size_t j = 0; j < m; ++j) {
      const std::size_t k = order[start + j];
      imgs.push_back(&data.images[k]);
      target.insert(target.end(), data.images[k].pixels().begin(), data.images[k].pixels().end());
      dist.insert(dist.end(), data.dists[k].pixels().begin(), data.dists[k].pixels().end());
    }
    try {
      Var x = ae.coord_input(imgs);
      auto [recon, dpred] = ae.decode_batch(ae.encode_batch(x));
      Var loss = ae_loss(Var::from({m, 1, S, S}, std::move(target)), recon, dpred, Var::from({m, 1, S, S}, std::move(dist)),
                         ae.config().lambda_d);
      ae.params().zero_grad();
      backward(loss);
      adam_step(adam, vars);
      total += loss.item() * static_cast<double>(m);
    } catch (const NumericError& e) {
      throw NumericError("autoencoder training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(bi) +
                         " (lr " + std::to_string(adam.lr) + "): " + e.what());
    }
  }
  return total / static_cast<double>(n);
}

/// Per-epoch mean losses; deterministic in (model init, data, options).
inline std::vector<double> train_autoencoder(StrokeAutoencoder& ae, const std::vector<StrokeImage>& images, const AETrainOptions& opt) {
  if (images.empty()) throw std::invalid_argument("train_autoencoder: empty dataset");
  retain_heap_memory();
  const AEBatchSet data(images);
  AdamState adam;
  Rng rng(opt.seed);
  EarlyStop stop{opt.patience};
  std::vector<double> curve;
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    adam.lr = lr_at(opt.schedule, e);
    curve.push_back(opt.epoch_data ? ae_train_epoch(ae, AEBatchSet(opt.epoch_data(e)), adam, opt.batch_size, rng, e)
                                   : ae_train_epoch(ae, data, adam, opt.batch_size, rng, e));
    if (opt.on_epoch) opt.on_epoch(e, curve.back());
    if (stop.update(curve.back())) break;
  }
  return curve;
}

}  // namespace vqsgen
