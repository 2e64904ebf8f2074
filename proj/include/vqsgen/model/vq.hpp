#pragma once

// Sequence tokenizers over a sketch's strokes: a 1D convolutional encoder,
// nearest-code quantization into a codebook and a mirrored decoder, one
// instance for shape embeddings and one for position quads.

#include <algorithm>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "vqsgen/core/checkpoint.hpp"
#include "vqsgen/core/conv.hpp"
#include "vqsgen/core/optim.hpp"
#include "vqsgen/core/params.hpp"
#include "vqsgen/sketch/types.hpp"

namespace vqsgen {

struct SeqCoderConfig {
  // Kernel-3 convolutions along the stroke axis; the last block width is the code dimension.
  std::vector<std::size_t> block_dims = {64, 64, 32};
  std::vector<std::size_t> block_reps = {2, 1, 1};

  std::size_t code_dim() const { return block_dims.back(); }

  /// Output width of every encoder layer, in order.
  std::vector<std::size_t> layer_dims() const {
    std::vector<std::size_t> out;
    for (std::size_t b = 0; b < block_dims.size(); ++b) out.insert(out.end(), block_reps[b], block_dims[b]);
    return out;
  }

  void validate() const {
    if (block_dims.empty() || block_dims.size() != block_reps.size())
      throw std::invalid_argument("SeqCoderConfig: block_dims and block_reps must be non-empty and equal length");
    for (std::size_t i = 0; i < block_dims.size(); ++i)
      if (block_dims[i] == 0 || block_reps[i] == 0) throw std::invalid_argument("SeqCoderConfig: zero block width or repeat");
  }
};

struct VQConfig {
  SeqCoderConfig coder;
  std::size_t codes = 64;
  double alpha = 0.8;
  std::size_t n_max = 20;

  static VQConfig tiny() { return {}; }
  static VQConfig paper() { return {{{256, 256, 512}, {3, 3, 2}}, 8192, 0.8, 20}; }

  void validate() const {
    coder.validate();
    if (codes == 0) throw std::invalid_argument("VQConfig: codes must be positive");
    if (n_max == 0) throw std::invalid_argument("VQConfig: n_max must be positive");
  }
};

using CodeIndex = std::size_t;

/// V x d table of code vectors.
class Codebook {
 public:
  Codebook() = default;
  Codebook(std::size_t V, std::size_t d) : codes_(Var::zeros({V, d}, true)) {}
  explicit Codebook(Var codes) : codes_(std::move(codes)) {
    if (codes_.rank() != 2) throw ShapeError("Codebook: codes must be [V, d], got " + shape_str(codes_.shape()));
  }

  std::size_t size() const { return codes_.dim(0); }
  std::size_t dim() const { return codes_.dim(1); }
  const Var& codes() const { return codes_; }
  Var& codes() { return codes_; }

  std::vector<double> row(CodeIndex i) const {
    if (i >= size()) throw std::out_of_range("code index " + std::to_string(i) + " >= " + std::to_string(size()));
    return {codes_.vec().begin() + static_cast<std::ptrdiff_t>(i * dim()),
            codes_.vec().begin() + static_cast<std::ptrdiff_t>((i + 1) * dim())};
  }

  /// Nearest code by squared Euclidean distance; ties go to the lowest index.
  CodeIndex nearest(const double* z) const {
    const std::size_t d = dim();
    const double* c = codes_.vec().data();
    CodeIndex best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < size(); ++j, c += d) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) s += (z[k] - c[k]) * (z[k] - c[k]);
      if (s < best_d) {
        best_d = s;
        best = j;
      }
    }
    return best;
  }

  /// Row-major rows of width dim() -> one index per row.
  std::vector<CodeIndex> quantize(const std::vector<double>& rows) const {
    if (rows.size() % dim() != 0)
      throw ShapeError("quantize: " + std::to_string(rows.size()) + " values is not a multiple of code dim " + std::to_string(dim()));
    std::vector<CodeIndex> out(rows.size() / dim());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = nearest(rows.data() + i * dim());
    return out;
  }

 private:
  Var codes_;
};

struct VQLossTerms {
  Var total, commitment, codebook, reconstruction;
};

/// z[R, d] encoder rows, code_rows[R, d] their gathered codes, recon[R, D]
/// the decoder output and target[R, D] its reference. Each term is a squared
/// norm averaged over rows; the two quantization terms share a value and
/// differ only in which side the gradient reaches.
inline VQLossTerms vq_loss(const Var& z, const Var& code_rows, const Var& recon, const Var& target, double alpha) {
  if (z.shape() != code_rows.shape() || z.rank() != 2) throw ShapeError("vq_loss", z.shape(), code_rows.shape());
  if (recon.shape() != target.shape() || recon.rank() != 2 || recon.dim(0) != z.dim(0))
    throw ShapeError("vq_loss", recon.shape(), target.shape());
  const double d = static_cast<double>(z.dim(1)), D = static_cast<double>(recon.dim(1));
  VQLossTerms t;
  t.commitment = scale(mse(z, detach(code_rows)), d);
  t.codebook = scale(mse(detach(z), code_rows), d);
  t.reconstruction = scale(mse(recon, target), D);
  t.total = add(scale(add(t.commitment, t.codebook), alpha), t.reconstruction);
  return t;
}

/// Position quads leaving the unit canvas are pulled back inside.
struct ClampedBBox {
  StrokeBBox bbox;
  bool clipped = false;
};

inline ClampedBBox clamp_bbox(const StrokeBBox& raw) {
  ClampedBBox out{raw, false};
  StrokeBBox& b = out.bbox;
  b.half_w = std::clamp(b.half_w, 0.0, 0.5);
  b.half_h = std::clamp(b.half_h, 0.0, 0.5);
  b.cx = std::clamp(b.cx, b.half_w, 1.0 - b.half_w);
  b.cy = std::clamp(b.cy, b.half_h, 1.0 - b.half_h);
  out.clipped = !(b == raw);
  return out;
}

/// Variable-length sequences of feature vectors packed into [B, C, L] with a
/// validity mask; L is the longest sequence.
struct SeqBatch {
  std::size_t batch = 0, length = 0, channels = 0;
  std::vector<std::size_t> lengths;
  std::vector<double> mask;       // [B * L]
  std::vector<std::size_t> valid; // flat b * L + i of every real position
  Var input;                      // [B, C, L], zero at padding
  Var target;                     // [R, C] rows at the valid positions

  static SeqBatch pack(const std::vector<std::vector<std::vector<double>>>& seqs, std::size_t channels) {
    SeqBatch s;
    s.batch = seqs.size();
    s.channels = channels;
    for (const auto& q : seqs) {
      if (q.empty()) throw std::invalid_argument("SeqBatch: empty sequence");
      s.length = std::max(s.length, q.size());
      s.lengths.push_back(q.size());
    }
    std::vector<double> x(s.batch * channels * s.length, 0.0), tgt;
    s.mask.assign(s.batch * s.length, 0.0);
    for (std::size_t b = 0; b < s.batch; ++b)
      for (std::size_t i = 0; i < seqs[b].size(); ++i) {
        const auto& v = seqs[b][i];
        if (v.size() != channels)
          throw ShapeError("SeqBatch: feature has " + std::to_string(v.size()) + " values, expected " + std::to_string(channels));
        for (std::size_t c = 0; c < channels; ++c) x[(b * channels + c) * s.length + i] = v[c];
        tgt.insert(tgt.end(), v.begin(), v.end());
        s.mask[b * s.length + i] = 1.0;
        s.valid.push_back(b * s.length + i);
      }
    s.input = Var::from({s.batch, channels, s.length}, std::move(x));
    s.target = Var::from({s.valid.size(), channels}, std::move(tgt));
    return s;
  }

  /// The mask broadcast to [B, C, L].
  Var mask_for(std::size_t C) const {
    std::vector<double> m(batch * C * length);
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t c = 0; c < C; ++c) std::copy_n(mask.data() + b * length, length, m.data() + (b * C + c) * length);
    return Var::from({batch, C, length}, std::move(m));
  }
};

/// Encoder/decoder pair for one stream. Inputs are standardized with fixed
/// per-channel statistics before encoding; decoder outputs live in the same
/// standardized space.
class SeqCoder {
 public:
  SeqCoder() = default;
  SeqCoder(const std::string& prefix, std::size_t in_dim, const SeqCoderConfig& cfg, Rng& rng) : in_dim_(in_dim) {
    cfg.validate();
    if (in_dim == 0) throw std::invalid_argument("SeqCoder: zero input width");
    auto layer = [&](const std::string& name, std::size_t cout, std::size_t cin) {
      return Layer{params_.add(name + "/w", kaiming({cout, cin, 3}, cin * 3, rng)), params_.add(name + "/b", zeros_param({cout}))};
    };
    const std::vector<std::size_t> dims = cfg.layer_dims();
    std::size_t cin = in_dim;
    for (std::size_t k = 0; k < dims.size(); ++k) {
      enc_.push_back(layer(prefix + "/enc/l" + std::to_string(k), dims[k], cin));
      cin = dims[k];
    }
    // Mirror: layer k of the decoder undoes encoder layer L-1-k.
    for (std::size_t k = 0; k < dims.size(); ++k) {
      const std::size_t out = k + 1 < dims.size() ? dims[dims.size() - 2 - k] : in_dim;
      dec_.push_back(layer(prefix + "/dec/l" + std::to_string(k), out, cin));
      cin = out;
    }
    mean_ = buffers_.add(prefix + "/norm/mean", Var::zeros({in_dim}));
    std_ = buffers_.add(prefix + "/norm/std", Var::full({in_dim}, 1.0));
  }

  std::size_t in_dim() const { return in_dim_; }
  std::size_t code_dim() const { return enc_.back().w.dim(0); }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  ParamSet& buffers() { return buffers_; }
  const ParamSet& buffers() const { return buffers_; }

  /// Per-channel mean and standard deviation (floored at 1e-6) from raw features.
  void fit_normalization(const std::vector<std::vector<double>>& feats) {
    if (feats.empty()) throw std::invalid_argument("fit_normalization: no features");
    auto m = mean_.mutable_values();
    auto s = std_.mutable_values();
    const double n = static_cast<double>(feats.size());
    for (std::size_t c = 0; c < in_dim_; ++c) {
      double mu = 0.0, var = 0.0;
      for (const auto& f : feats) mu += f.at(c);
      mu /= n;
      for (const auto& f : feats) var += (f[c] - mu) * (f[c] - mu);
      m[c] = mu;
      s[c] = std::max(std::sqrt(var / n), 1e-6);
    }
  }

  std::vector<double> normalize(const std::vector<double>& raw) const {
    if (raw.size() != in_dim_) throw ShapeError("SeqCoder: feature has " + std::to_string(raw.size()) + " values, expected " + std::to_string(in_dim_));
    std::vector<double> out(in_dim_);
    for (std::size_t c = 0; c < in_dim_; ++c) out[c] = (raw[c] - mean_[c]) / std_[c];
    return out;
  }

  std::vector<double> denormalize(const double* v) const {
    std::vector<double> out(in_dim_);
    for (std::size_t c = 0; c < in_dim_; ++c) out[c] = v[c] * std_[c] + mean_[c];
    return out;
  }

  /// [B, in, L] -> [B, d, L]; padded positions stay zero after every layer.
  Var encode(const Var& x, const SeqBatch& sb) const { return run(enc_, x, sb); }
  /// [B, d, L] -> [B, in, L]
  Var decode(const Var& q, const SeqBatch& sb) const { return run(dec_, q, sb); }

 private:
  struct Layer {
    Var w, b;
  };

  static Var run(const std::vector<Layer>& layers, Var h, const SeqBatch& sb) {
    for (std::size_t k = 0; k < layers.size(); ++k) {
      h = conv1d(h, layers[k].w, layers[k].b, 1, 1);
      if (k + 1 < layers.size()) h = relu(h);
      h = mul(h, sb.mask_for(h.dim(1)));
    }
    return h;
  }

  std::size_t in_dim_ = 0;
  ParamSet params_, buffers_;
  std::vector<Layer> enc_, dec_;
  Var mean_, std_;
};

/// Rows of a [B, C, L] tensor at the batch's valid positions -> [R, C].
inline Var gather_positions(const Var& h, const SeqBatch& sb) {
  const std::size_t C = h.dim(1);
  return embedding(reshape(transpose_last2(h), {sb.batch * sb.length, C}), sb.valid);
}

/// Inverse of gather_positions: [R, C] rows placed into a zero-padded [B, C, L].
inline Var scatter_positions(const Var& rows, const SeqBatch& sb) {
  const std::size_t C = rows.dim(1), R = rows.dim(0);
  std::vector<std::size_t> map(sb.batch * sb.length, R);
  for (std::size_t r = 0; r < R; ++r) map[sb.valid[r]] = r;
  Var table = concat({rows, Var::zeros({1, C})}, 0);
  return transpose_last2(reshape(embedding(table, map), {sb.batch, sb.length, C}));
}

struct StreamForward {
  VQLossTerms loss;
  std::vector<CodeIndex> indices;
  Var z;      // [R, d]
  Var recon;  // [R, in], standardized space
};

/// Encode, quantize, decode with a straight-through pass from the decoder to
/// the encoder, and score against the standardized inputs.
inline StreamForward stream_forward(const SeqCoder& coder, const Codebook& book, const SeqBatch& sb, double alpha) {
  StreamForward f;
  f.z = gather_positions(coder.encode(sb.input, sb), sb);
  f.indices = book.quantize(f.z.vec());
  Var c = embedding(book.codes(), f.indices);
  Var q = add(f.z, detach(sub(c, f.z)));
  f.recon = gather_positions(coder.decode(scatter_positions(q, sb), sb), sb);
  f.loss = vq_loss(f.z, c, f.recon, sb.target, alpha);
  return f;
}

inline std::vector<double> bbox_quad(const StrokeBBox& b) { return {b.half_w, b.half_h, b.cx, b.cy}; }
inline StrokeBBox quad_bbox(const double* q) { return {q[0], q[1], q[2], q[3]}; }

struct TokenizedStroke {
  CodeIndex shape_idx = 0;
  CodeIndex loc_idx = 0;
  StrokeLabel label;
  bool operator==(const TokenizedStroke&) const = default;
};

/// Per-sketch sequences of stroke embeddings and position quads.
struct StrokeSequence {
  std::vector<std::vector<double>> embeddings;
  std::vector<StrokeBBox> boxes;
  std::vector<StrokeLabel> labels;
};

class VQTokenizer {
 public:
  VQTokenizer() = default;
  VQTokenizer(VQConfig cfg, std::size_t embed_dim, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    shape_ = SeqCoder("vq/shape", embed_dim, cfg_.coder, rng);
    loc_ = SeqCoder("vq/loc", 4, cfg_.coder, rng);
    const std::size_t d = cfg_.coder.code_dim();
    shape_book_ = Codebook(normal_init({cfg_.codes, d}, 1.0, rng));
    loc_book_ = Codebook(normal_init({cfg_.codes, d}, 1.0, rng));
    params_.extend(shape_.params());
    params_.add("vq/shape/codes", shape_book_.codes());
    params_.extend(loc_.params());
    params_.add("vq/loc/codes", loc_book_.codes());
    buffers_.extend(shape_.buffers());
    buffers_.extend(loc_.buffers());
  }

  const VQConfig& config() const { return cfg_; }
  std::size_t embed_dim() const { return shape_.in_dim(); }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  ParamSet& buffers() { return buffers_; }
  const ParamSet& buffers() const { return buffers_; }
  SeqCoder& shape_coder() { return shape_; }
  SeqCoder& loc_coder() { return loc_; }
  const SeqCoder& shape_coder() const { return shape_; }
  const SeqCoder& loc_coder() const { return loc_; }
  const Codebook& shape_book() const { return shape_book_; }
  const Codebook& loc_book() const { return loc_book_; }
  Codebook& shape_book() { return shape_book_; }
  Codebook& loc_book() { return loc_book_; }

  SeqBatch shape_batch(const std::vector<const StrokeSequence*>& seqs) const {
    std::vector<std::vector<std::vector<double>>> rows;
    for (const StrokeSequence* s : seqs) {
      check_length(s->embeddings.size());
      auto& r = rows.emplace_back();
      for (const auto& e : s->embeddings) r.push_back(shape_.normalize(e));
    }
    return SeqBatch::pack(rows, shape_.in_dim());
  }

  SeqBatch loc_batch(const std::vector<const StrokeSequence*>& seqs) const {
    std::vector<std::vector<std::vector<double>>> rows;
    for (const StrokeSequence* s : seqs) {
      check_length(s->boxes.size());
      auto& r = rows.emplace_back();
      for (const auto& b : s->boxes) r.push_back(loc_.normalize(bbox_quad(b)));
    }
    return SeqBatch::pack(rows, 4);
  }

  /// N x d feature matrix of one stream for a single sequence.
  std::vector<std::vector<double>> encode_sequence(const StrokeSequence& s, bool location) const {
    NoGradGuard ng;
    const SeqBatch sb = location ? loc_batch({&s}) : shape_batch({&s});
    const SeqCoder& c = location ? loc_ : shape_;
    Var z = gather_positions(c.encode(sb.input, sb), sb);
    std::vector<std::vector<double>> out;
    const std::size_t d = z.dim(1);
    for (std::size_t r = 0; r < z.dim(0); ++r)
      out.emplace_back(z.vec().begin() + static_cast<std::ptrdiff_t>(r * d), z.vec().begin() + static_cast<std::ptrdiff_t>((r + 1) * d));
    return out;
  }

  std::vector<TokenizedStroke> tokenize(const StrokeSequence& s) const {
    if (s.embeddings.size() != s.boxes.size() || s.labels.size() != s.boxes.size())
      throw std::invalid_argument("tokenize: embeddings, boxes and labels differ in length");
    NoGradGuard ng;
    const SeqBatch ss = shape_batch({&s}), ls = loc_batch({&s});
    const auto si = shape_book_.quantize(gather_positions(shape_.encode(ss.input, ss), ss).vec());
    const auto li = loc_book_.quantize(gather_positions(loc_.encode(ls.input, ls), ls).vec());
    std::vector<TokenizedStroke> out;
    for (std::size_t i = 0; i < si.size(); ++i) out.push_back({si[i], li[i], s.labels[i]});
    return out;
  }

  /// Stroke embeddings from a sequence of shape codes.
  std::vector<std::vector<double>> decode_shape(const std::vector<CodeIndex>& idx) const {
    NoGradGuard ng;
    Var rows = decode_rows(shape_, shape_book_, idx);
    std::vector<std::vector<double>> out;
    for (std::size_t r = 0; r < idx.size(); ++r) out.push_back(shape_.denormalize(rows.vec().data() + r * shape_.in_dim()));
    return out;
  }

  /// Position quads from a sequence of location codes, clamped onto the canvas.
  std::vector<ClampedBBox> decode_location(const std::vector<CodeIndex>& idx) const {
    NoGradGuard ng;
    Var rows = decode_rows(loc_, loc_book_, idx);
    std::vector<ClampedBBox> out;
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const std::vector<double> q = loc_.denormalize(rows.vec().data() + r * 4);
      out.push_back(clamp_bbox(quad_bbox(q.data())));
    }
    return out;
  }

  /// Fresh codebooks drawn from encoder outputs: a permutation of the rows,
  /// wrapping around when there are fewer rows than codes.
  void init_codebooks(const std::vector<const StrokeSequence*>& first_batch, Rng& rng) {
    NoGradGuard ng;
    const SeqBatch ss = shape_batch(first_batch), ls = loc_batch(first_batch);
    seed_book(shape_book_, gather_positions(shape_.encode(ss.input, ss), ss), rng);
    seed_book(loc_book_, gather_positions(loc_.encode(ls.input, ls), ls), rng);
  }

  std::size_t check_length(std::size_t n) const {
    if (n == 0) throw std::invalid_argument("tokenizer: empty stroke sequence");
    if (n > cfg_.n_max)
      throw std::invalid_argument("tokenizer: sequence of " + std::to_string(n) + " strokes exceeds N_max " + std::to_string(cfg_.n_max));
    return n;
  }

 private:
  Var decode_rows(const SeqCoder& coder, const Codebook& book, const std::vector<CodeIndex>& idx) const {
    check_length(idx.size());
    for (CodeIndex i : idx)
      if (i >= book.size()) throw std::out_of_range("code index " + std::to_string(i) + " >= " + std::to_string(book.size()));
    std::vector<std::vector<std::vector<double>>> shell(1, std::vector<std::vector<double>>(idx.size(), std::vector<double>(book.dim())));
    const SeqBatch sb = SeqBatch::pack(shell, book.dim());
    return gather_positions(coder.decode(scatter_positions(embedding(book.codes(), idx), sb), sb), sb);
  }

  static void seed_book(Codebook& book, const Var& z, Rng& rng) {
    const std::size_t R = z.dim(0), d = z.dim(1);
    std::vector<std::size_t> perm(R);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    auto dst = book.codes().mutable_values();
    for (std::size_t j = 0; j < book.size(); ++j) std::copy_n(z.vec().data() + perm[j % R] * d, d, dst.data() + j * d);
  }

  VQConfig cfg_;
  SeqCoder shape_, loc_;
  Codebook shape_book_, loc_book_;
  ParamSet params_, buffers_;
};

/// Blends code a toward code b in `steps` evenly spaced stops, snapping each
/// blend to its nearest code.
inline std::vector<CodeIndex> interpolate_codes(CodeIndex a, CodeIndex b, std::size_t steps, const Codebook& book) {
  if (steps < 2) throw std::invalid_argument("interpolate_codes: steps must be >= 2");
  const std::vector<double> ca = book.row(a), cb = book.row(b);
  std::vector<CodeIndex> out;
  std::vector<double> mix(book.dim());
  for (std::size_t t = 0; t < steps; ++t) {
    const double w = static_cast<double>(t) / static_cast<double>(steps - 1);
    for (std::size_t k = 0; k < mix.size(); ++k) mix[k] = (1.0 - w) * ca[k] + w * cb[k];
    out.push_back(t == 0 ? a : t + 1 == steps ? b : book.nearest(mix.data()));
  }
  return out;
}

struct CodeUsage {
  std::vector<std::size_t> shape_hist, loc_hist;
  std::size_t total = 0;

  static double active(const std::vector<std::size_t>& h) {
    return h.empty() ? 0.0 : static_cast<double>(std::count_if(h.begin(), h.end(), [](std::size_t c) { return c > 0; })) /
                                 static_cast<double>(h.size());
  }
  double shape_active() const { return active(shape_hist); }
  double loc_active() const { return active(loc_hist); }
};

inline CodeUsage codebook_utilization(const std::vector<std::vector<TokenizedStroke>>& tokenized, const VQTokenizer& tok) {
  CodeUsage u{std::vector<std::size_t>(tok.shape_book().size()), std::vector<std::size_t>(tok.loc_book().size()), 0};
  for (const auto& seq : tokenized)
    for (const TokenizedStroke& t : seq) {
      ++u.shape_hist.at(t.shape_idx);
      ++u.loc_hist.at(t.loc_idx);
      ++u.total;
    }
  return u;
}

/// Writes one codebook as a checkpoint container holding a single V x d array.
inline void export_codebook(const Codebook& book, const std::string& name, const std::string& path) {
  Checkpoint ck;
  ck.manifest["kind"] = "codebook";
  ck.manifest["name"] = name;
  ck.manifest["V"] = std::to_string(book.size());
  ck.manifest["d"] = std::to_string(book.dim());
  ck.put(name, book.codes());
  ck.save(path);
}

struct VQTrainOptions {
  std::size_t epochs = 100;
  std::size_t batch_size = 8;
  LrSchedule schedule{LrSchedule::Kind::StepDecay, 1e-4, 10, 0.5};
  std::uint64_t seed = 0;
  std::size_t patience = 0;
  std::function<void(std::size_t epoch, double loss)> on_epoch;
  // Replaces the training sequences for one epoch (online augmentation).
  std::function<std::vector<StrokeSequence>(std::size_t epoch)> epoch_data;
};

/// Fits input statistics, seeds both codebooks from the first shuffled batch
/// and trains encoders, decoders and codes jointly on the summed stream losses.
/// Returns the per-epoch sequence-weighted mean loss.
inline std::vector<double> train_tokenizer(VQTokenizer& tok, const std::vector<StrokeSequence>& data, const VQTrainOptions& opt) {
  if (data.empty()) throw std::invalid_argument("train_tokenizer: empty dataset");
  if (opt.batch_size == 0) throw std::invalid_argument("train_tokenizer: batch_size must be positive");
  std::vector<std::vector<double>> embs, quads;
  for (const StrokeSequence& s : data) {
    tok.check_length(s.embeddings.size());
    if (s.boxes.size() != s.embeddings.size()) throw std::invalid_argument("train_tokenizer: embeddings and boxes differ in length");
    embs.insert(embs.end(), s.embeddings.begin(), s.embeddings.end());
    for (const StrokeBBox& b : s.boxes) quads.push_back(bbox_quad(b));
  }
  tok.shape_coder().fit_normalization(embs);
  tok.loc_coder().fit_normalization(quads);

  Rng rng(opt.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::vector<Var> vars = tok.params().vars();
  AdamState adam;
  EarlyStop stop{opt.patience};
  std::vector<double> curve;
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    adam.lr = lr_at(opt.schedule, e);
    std::vector<StrokeSequence> fresh;
    if (opt.epoch_data) {
      fresh = opt.epoch_data(e);
      if (fresh.size() != data.size()) throw std::invalid_argument("train_tokenizer: epoch_data changed the dataset size");
      for (const StrokeSequence& s : fresh) tok.check_length(s.embeddings.size());
    }
    const std::vector<StrokeSequence>& epoch_set = opt.epoch_data ? fresh : data;
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0, bi = 0; start < order.size(); start += opt.batch_size, ++bi) {
      std::vector<const StrokeSequence*> batch;
      for (std::size_t j = start; j < std::min(order.size(), start + opt.batch_size); ++j) batch.push_back(&epoch_set[order[j]]);
      if (e == 0 && bi == 0) tok.init_codebooks(batch, rng);
      try {
        const StreamForward fs = stream_forward(tok.shape_coder(), tok.shape_book(), tok.shape_batch(batch), tok.config().alpha);
        const StreamForward fl = stream_forward(tok.loc_coder(), tok.loc_book(), tok.loc_batch(batch), tok.config().alpha);
        Var loss = add(fs.loss.total, fl.loss.total);
        tok.params().zero_grad();
        backward(loss);
        adam_step(adam, vars);
        total += loss.item() * static_cast<double>(batch.size());
      } catch (const NumericError& err) {
        throw NumericError("tokenizer training diverged at epoch " + std::to_string(e) + ", batch " + std::to_string(bi) + " (lr " +
                           std::to_string(adam.lr) + "): " + err.what());
      }
    }
    curve.push_back(total / static_cast<double>(data.size()));
    if (opt.on_epoch) opt.on_epoch(e, curve.back());
    if (stop.update(curve.back())) break;
  }
  return curve;
}

}  // namespace vqsgen
