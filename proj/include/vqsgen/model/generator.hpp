#pragma once

// Cascaded autoregressive decoders over stroke tokens. A label transformer
// reads (shape code, location code, label) triples and predicts the next
// label; a code transformer reads its fused features plus that label and
// predicts the next shape and location codes.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vqsgen/core/optim.hpp"
#include "vqsgen/core/params.hpp"
#include "vqsgen/model/vq.hpp"

namespace vqsgen {

struct TransformerConfig {
  std::size_t model_dim = 128;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ffn_mult = 4;

  void validate() const {
    if (model_dim == 0 || layers == 0 || heads == 0 || ffn_mult == 0)
      throw std::invalid_argument("TransformerConfig: sizes must be positive");
    if (model_dim % heads != 0)
      throw std::invalid_argument("TransformerConfig: model_dim " + std::to_string(model_dim) + " not divisible by heads " +
                                  std::to_string(heads));
  }
};

struct GenConfig {
  TransformerConfig label, code;
  std::size_t num_labels = 1;  // C semantic labels; END and STR take slots C and C+1
  std::size_t codes = 64;      // V
  std::size_t code_dim = 32;   // d
  std::size_t n_max = 20;
  std::size_t num_classes = 0; // class-token conditioning rows; 0 disables

  static GenConfig tiny(std::size_t C, std::size_t V = 64, std::size_t d = 32) { return {{}, {}, C, V, d, 20, 0}; }
  static GenConfig paper(std::size_t C, std::size_t V = 8192, std::size_t d = 512) {
    return {{512, 8, 8, 4}, {512, 8, 8, 4}, C, V, d, 20, 0};
  }

  std::size_t end_label() const { return num_labels; }
  std::size_t str_label() const { return num_labels + 1; }

  void validate() const {
    label.validate();
    code.validate();
    if (label.model_dim != code.model_dim) throw std::invalid_argument("GenConfig: both decoders must share model_dim");
    if (num_labels == 0 || codes == 0 || code_dim == 0 || n_max == 0) throw std::invalid_argument("GenConfig: sizes must be positive");
  }
};

/// One generated or ground-truth stroke token; label is in [0, C).
struct GenToken {
  std::size_t label = 0;
  CodeIndex shape_idx = 0;
  CodeIndex loc_idx = 0;
  bool operator==(const GenToken&) const = default;
};

inline std::vector<GenToken> to_gen_tokens(const std::vector<TokenizedStroke>& t) {
  std::vector<GenToken> out;
  for (const TokenizedStroke& s : t) out.push_back({s.label.index, s.shape_idx, s.loc_idx});
  return out;
}

/// What occupies position 0 of the sequence.
struct Condition {
  enum class Kind { Start, Class, Vector };
  Kind kind = Kind::Start;
  std::size_t class_index = 0;
  std::vector<double> vector;

  static Condition start() { return {}; }
  static Condition cls(std::size_t k) { return {Kind::Class, k, {}}; }
  static Condition vec(std::vector<double> v) { return {Kind::Vector, 0, std::move(v)}; }
};

struct GenSequence {
  std::vector<GenToken> tokens;
  Condition condition;
};

inline std::vector<double> sinusoid(std::size_t pos, std::size_t D) {
  std::vector<double> pe(D);
  for (std::size_t i = 0; i < D; ++i) {
    const double freq = std::pow(10000.0, -static_cast<double>(i - i % 2) / static_cast<double>(D));
    pe[i] = i % 2 == 0 ? std::sin(static_cast<double>(pos) * freq) : std::cos(static_cast<double>(pos) * freq);
  }
  return pe;
}

/// Pre-norm causal transformer stack over [B, L, D].
class CausalTransformer {
 public:
  CausalTransformer() = default;
  CausalTransformer(const std::string& prefix, const TransformerConfig& cfg, ParamSet& ps, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const std::size_t D = cfg.model_dim, F = D * cfg.ffn_mult;
    auto w = [&](const std::string& n, std::size_t r, std::size_t c) { return ps.add(prefix + n, normal_init({r, c}, 0.02, rng)); };
    auto z = [&](const std::string& n, std::size_t c) { return ps.add(prefix + n, zeros_param({c})); };
    auto o = [&](const std::string& n, std::size_t c) { return ps.add(prefix + n, ones_param({c})); };
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::string p = "/l" + std::to_string(l);
      layers_.push_back({o(p + "/ln1/g", D), z(p + "/ln1/b", D), w(p + "/attn/wq", D, D), z(p + "/attn/bq", D),
                         w(p + "/attn/wk", D, D), z(p + "/attn/bk", D), w(p + "/attn/wv", D, D), z(p + "/attn/bv", D),
                         w(p + "/attn/wo", D, D), z(p + "/attn/bo", D), o(p + "/ln2/g", D), z(p + "/ln2/b", D),
                         w(p + "/ffn/w1", D, F), z(p + "/ffn/b1", F), w(p + "/ffn/w2", F, D), z(p + "/ffn/b2", D)});
    }
    lnf_g_ = o("/lnf/g", D);
    lnf_b_ = z("/lnf/b", D);
  }

  Var forward(Var x) const {
    const std::size_t B = x.dim(0), L = x.dim(1), D = x.dim(2), H = cfg_.heads, dh = D / H;
    std::vector<double> m(L * L, 0.0);
    for (std::size_t i = 0; i < L; ++i)
      for (std::size_t j = i + 1; j < L; ++j) m[i * L + j] = -1e9;
    const Var mask = Var::from({L, L}, std::move(m));
    auto heads = [&](const Var& t) { return swap_axes12(reshape(t, {B, L, H, dh})); };
    for (const Layer& ly : layers_) {
      Var h = layernorm(x, ly.ln1_g, ly.ln1_b);
      Var q = heads(linear(h, ly.wq, ly.bq)), k = heads(linear(h, ly.wk, ly.bk)), v = heads(linear(h, ly.wv, ly.bv));
      Var att = softmax(add(scale(bmm(q, transpose_last2(k)), 1.0 / std::sqrt(static_cast<double>(dh))), mask));
      Var ctx = reshape(swap_axes12(bmm(att, v)), {B, L, D});
      x = add(x, linear(ctx, ly.wo, ly.bo));
      h = layernorm(x, ly.ln2_g, ly.ln2_b);
      x = add(x, linear(relu(linear(h, ly.w1, ly.b1)), ly.w2, ly.b2));
    }
    return layernorm(x, lnf_g_, lnf_b_);
  }

 private:
  struct Layer {
    Var ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, w1, b1, w2, b2;
  };
  TransformerConfig cfg_;
  std::vector<Layer> layers_;
  Var lnf_g_, lnf_b_;
};

/// Logits for every position of a padded batch; L = longest sequence + 1.
struct GenLogits {
  std::size_t batch = 0, length = 0;
  std::vector<std::size_t> lengths;  // tokens per sequence, excluding position 0
  Var fuse;                          // [B, L, D]
  Var label;                         // [B, L, C+1]: position i predicts the label of token i+1, or END
  Var shape, loc;                    // [B, L, V]: position i predicts the codes of token i+1
};

struct GenTargets {
  std::vector<int> label, shape, loc;  // -1 where ignored
};

class SketchGenerator {
 public:
  SketchGenerator() = default;
  SketchGenerator(GenConfig cfg, std::uint64_t seed = 0) : cfg_(std::move(cfg)) {
    cfg_.validate();
    Rng rng(seed);
    const std::size_t D = cfg_.label.model_dim, C = cfg_.num_labels, V = cfg_.codes, d = cfg_.code_dim;
    emb_shape_ = params_.add("gen/label/emb_shape", normal_init({d, D}, 0.02, rng));
    emb_loc_ = params_.add("gen/label/emb_loc", normal_init({d, D}, 0.02, rng));
    emb_label_ = params_.add("gen/label/emb_label", normal_init({C + 2, D}, 0.02, rng));
    if (cfg_.num_classes > 0) emb_class_ = params_.add("gen/label/emb_class", normal_init({cfg_.num_classes, D}, 0.02, rng));
    label_tf_ = CausalTransformer("gen/label/tf", cfg_.label, params_, rng);
    label_head_w_ = params_.add("gen/label/head/w", normal_init({D, C + 1}, 0.02, rng));
    label_head_b_ = params_.add("gen/label/head/b", zeros_param({C + 1}));
    emb_cond_ = params_.add("gen/code/emb_label", normal_init({C, D}, 0.02, rng));
    code_tf_ = CausalTransformer("gen/code/tf", cfg_.code, params_, rng);
    shape_head_w_ = params_.add("gen/code/shape_head/w", normal_init({D, V}, 0.02, rng));
    shape_head_b_ = params_.add("gen/code/shape_head/b", zeros_param({V}));
    loc_head_w_ = params_.add("gen/code/loc_head/w", normal_init({D, V}, 0.02, rng));
    loc_head_b_ = params_.add("gen/code/loc_head/b", zeros_param({V}));
    shape_codes_ = Var::zeros({V, d});
    loc_codes_ = Var::zeros({V, d});
  }

  const GenConfig& config() const { return cfg_; }
  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  /// Code vectors fed to the input embeddings; copied, never trained here.
  void set_codebooks(const Codebook& shape, const Codebook& loc) {
    if (shape.size() != cfg_.codes || loc.size() != cfg_.codes || shape.dim() != cfg_.code_dim || loc.dim() != cfg_.code_dim)
      throw ShapeError("set_codebooks: expected " + std::to_string(cfg_.codes) + " x " + std::to_string(cfg_.code_dim) + " books");
    shape_codes_ = Var::from(shape.codes().shape(), shape.codes().vec());
    loc_codes_ = Var::from(loc.codes().shape(), loc.codes().vec());
  }
  const Var& shape_codes() const { return shape_codes_; }
  const Var& loc_codes() const { return loc_codes_; }

  void validate(const GenSequence& s, std::size_t max_tokens) const {
    if (s.tokens.size() > max_tokens)
      throw std::invalid_argument("generator: " + std::to_string(s.tokens.size()) + " tokens exceed the limit of " + std::to_string(max_tokens));
    for (const GenToken& t : s.tokens) {
      if (t.label >= cfg_.num_labels) throw std::out_of_range("generator: label " + std::to_string(t.label) + " out of range");
      if (t.shape_idx >= cfg_.codes || t.loc_idx >= cfg_.codes) throw std::out_of_range("generator: code index out of range");
    }
    if (s.condition.kind == Condition::Kind::Class && s.condition.class_index >= cfg_.num_classes)
      throw std::out_of_range("generator: class " + std::to_string(s.condition.class_index) + " out of range for " +
                              std::to_string(cfg_.num_classes) + " classes");
    if (s.condition.kind == Condition::Kind::Vector && s.condition.vector.size() != cfg_.label.model_dim)
      throw ShapeError("generator: condition vector must have " + std::to_string(cfg_.label.model_dim) + " values");
  }

  /// Input features [B, L, D]: condition at position 0; for tokens,
  /// Emb(c) + Emb(d) + Emb(l); a sinusoidal position code everywhere.
  Var embed(const std::vector<const GenSequence*>& seqs, std::size_t L) const {
    const std::size_t B = seqs.size(), D = cfg_.label.model_dim, d = cfg_.code_dim, V = cfg_.codes;
    const std::size_t K = cfg_.num_classes, C2 = cfg_.num_labels + 2;
    std::vector<Var> parts{emb_label_};
    if (K > 0) parts.push_back(emb_class_);
    std::vector<double> vec_rows, pe(B * L * D);
    std::size_t nvec = 0;
    std::vector<std::size_t> lab(B * L), sidx(B * L, V), lidx(B * L, V);
    for (std::size_t b = 0; b < B; ++b) {
      const GenSequence& s = *seqs[b];
      for (std::size_t i = 0; i < L; ++i) {
        const auto p = sinusoid(i, D);
        std::copy(p.begin(), p.end(), pe.begin() + static_cast<std::ptrdiff_t>((b * L + i) * D));
      }
      switch (s.condition.kind) {
        case Condition::Kind::Start: lab[b * L] = cfg_.str_label(); break;
        case Condition::Kind::Class: lab[b * L] = C2 + s.condition.class_index; break;
        case Condition::Kind::Vector:
          lab[b * L] = C2 + K + nvec++;
          vec_rows.insert(vec_rows.end(), s.condition.vector.begin(), s.condition.vector.end());
          break;
      }
      for (std::size_t i = 1; i < L; ++i) lab[b * L + i] = SIZE_MAX;
      for (std::size_t i = 0; i < s.tokens.size(); ++i) {
        lab[b * L + i + 1] = s.tokens[i].label;
        sidx[b * L + i + 1] = s.tokens[i].shape_idx;
        lidx[b * L + i + 1] = s.tokens[i].loc_idx;
      }
    }
    if (nvec > 0) parts.push_back(Var::from({nvec, D}, std::move(vec_rows)));
    const std::size_t zero_row = C2 + K + nvec;
    parts.push_back(Var::zeros({1, D}));
    for (std::size_t& v : lab)
      if (v == SIZE_MAX) v = zero_row;
    Var x = embedding(concat(parts, 0), lab);
    const Var zs = concat({shape_codes_, Var::zeros({1, d})}, 0), zl = concat({loc_codes_, Var::zeros({1, d})}, 0);
    x = add(x, matmul(embedding(zs, sidx), emb_shape_));
    x = add(x, matmul(embedding(zl, lidx), emb_loc_));
    x = add(x, Var::from({B * L, D}, std::move(pe)));
    return reshape(x, {B, L, D});
  }

  /// Runs both decoders on a padded batch. next_labels[b][i] conditions the
  /// code decoder at position i (the label of token i+1); missing entries
  /// fall back to a zero feature.
  GenLogits forward(const std::vector<const GenSequence*>& seqs, const std::vector<std::vector<std::size_t>>& next_labels) const {
    if (seqs.empty()) throw std::invalid_argument("generator: empty batch");
    GenLogits g;
    g.batch = seqs.size();
    for (const GenSequence* s : seqs) {
      validate(*s, cfg_.n_max);
      g.lengths.push_back(s->tokens.size());
      g.length = std::max(g.length, s->tokens.size() + 1);
    }
    const std::size_t B = g.batch, L = g.length, D = cfg_.label.model_dim, C = cfg_.num_labels;
    g.fuse = label_tf_.forward(embed(seqs, L));
    g.label = linear(g.fuse, label_head_w_, label_head_b_);
    std::vector<std::size_t> cond(B * L, C);
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < std::min(L, next_labels.at(b).size()); ++i) {
        if (next_labels[b][i] >= C) throw std::invalid_argument("code decoder: END or STR cannot condition the code heads");
        cond[b * L + i] = next_labels[b][i];
      }
    Var h = add(g.fuse, reshape(embedding(concat({emb_cond_, Var::zeros({1, D})}, 0), cond), {B, L, D}));
    h = code_tf_.forward(h);
    g.shape = linear(h, shape_head_w_, shape_head_b_);
    g.loc = linear(h, loc_head_w_, loc_head_b_);
    return g;
  }

  /// Ground-truth next labels for teacher forcing.
  static std::vector<std::vector<std::size_t>> next_labels(const std::vector<const GenSequence*>& seqs) {
    std::vector<std::vector<std::size_t>> out;
    for (const GenSequence* s : seqs) {
      auto& v = out.emplace_back();
      for (const GenToken& t : s->tokens) v.push_back(t.label);
    }
    return out;
  }

  GenTargets targets(const std::vector<const GenSequence*>& seqs, std::size_t L) const {
    GenTargets t;
    const std::size_t B = seqs.size();
    t.label.assign(B * L, -1);
    t.shape.assign(B * L, -1);
    t.loc.assign(B * L, -1);
    for (std::size_t b = 0; b < B; ++b) {
      const auto& tok = seqs[b]->tokens;
      for (std::size_t i = 0; i < tok.size(); ++i) {
        t.label[b * L + i] = static_cast<int>(tok[i].label);
        t.shape[b * L + i] = static_cast<int>(tok[i].shape_idx);
        t.loc[b * L + i] = static_cast<int>(tok[i].loc_idx);
      }
      t.label[b * L + tok.size()] = static_cast<int>(cfg_.end_label());
    }
    return t;
  }

  std::size_t context_length(const std::vector<const GenSequence*>& seqs) const {
    std::size_t L = 0;
    for (const GenSequence* s : seqs) L = std::max(L, s->tokens.size() + 1);
    return L;
  }

  /// Sum of the three per-head cross-entropies, each averaged over its
  /// scored positions (every label step including END; every real token's codes).
  Var gen_loss(const std::vector<const GenSequence*>& seqs, const std::vector<std::vector<std::size_t>>* conditioning = nullptr) const {
    const GenLogits g = forward(seqs, conditioning ? *conditioning : next_labels(seqs));
    const GenTargets t = targets(seqs, g.length);
    return add(add(cross_entropy(g.label, t.label), cross_entropy(g.shape, t.shape)), cross_entropy(g.loc, t.loc));
  }

  /// Total log-probability of each sequence under teacher forcing, END included.
  std::vector<double> log_prob(const std::vector<const GenSequence*>& seqs) const {
    NoGradGuard ng;
    const GenLogits g = forward(seqs, next_labels(seqs));
    const GenTargets t = targets(seqs, g.length);
    std::vector<double> out;
    for (std::size_t b = 0; b < seqs.size(); ++b) {
      double lp = 0.0;
      for (std::size_t i = 0; i < g.length; ++i) {
        const std::size_t r = b * g.length + i;
        lp += row_log_prob(g.label, r, t.label[r]) + row_log_prob(g.shape, r, t.shape[r]) + row_log_prob(g.loc, r, t.loc[r]);
      }
      out.push_back(lp);
    }
    return out;
  }

  /// Next-label logits over C+1 (END last) and the fused feature at the last position.
  std::pair<std::vector<double>, std::vector<double>> label_forward(const GenSequence& prefix) const {
    NoGradGuard ng;
    const GenLogits g = forward({&prefix}, {{}});
    const std::size_t last = prefix.tokens.size(), D = cfg_.label.model_dim, W = cfg_.num_labels + 1;
    return {slice(g.label, last, W), slice(g.fuse, last, D)};
  }

  /// Shape and location logits for the token after `prefix`, given its label.
  std::pair<std::vector<double>, std::vector<double>> code_forward(const GenSequence& prefix, std::size_t next_label) const {
    if (next_label >= cfg_.num_labels) throw std::invalid_argument("code_forward: END cannot condition the code heads");
    NoGradGuard ng;
    std::vector<std::size_t> cond;
    for (const GenToken& t : prefix.tokens) cond.push_back(t.label);
    cond.push_back(next_label);
    const GenLogits g = forward({&prefix}, {cond});
    const std::size_t last = prefix.tokens.size();
    return {slice(g.shape, last, cfg_.codes), slice(g.loc, last, cfg_.codes)};
  }

 private:
  static double row_log_prob(const Var& logits, std::size_t r, int target) {
    if (target < 0) return 0.0;
    const std::size_t K = logits.shape().back();
    const double* x = logits.vec().data() + r * K;
    const double m = *std::max_element(x, x + K);
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k) z += std::exp(x[k] - m);
    return x[target] - m - std::log(z);
  }

  static std::vector<double> slice(const Var& v, std::size_t row, std::size_t width) {
    return {v.vec().begin() + static_cast<std::ptrdiff_t>(row * width), v.vec().begin() + static_cast<std::ptrdiff_t>((row + 1) * width)};
  }

  GenConfig cfg_;
  ParamSet params_;
  Var emb_shape_, emb_loc_, emb_label_, emb_class_, emb_cond_;
  CausalTransformer label_tf_, code_tf_;
  Var label_head_w_, label_head_b_, shape_head_w_, shape_head_b_, loc_head_w_, loc_head_b_;
  Var shape_codes_, loc_codes_;
};

inline std::vector<double> softmax_vec(const std::vector<double>& logits, double temperature = 1.0) {
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  std::vector<double> p(logits.size());
  const double m = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp((logits[i] - m) / temperature));
  for (double& v : p) v /= z;
  return p;
}

/// Indices of the smallest descending-probability prefix whose mass reaches p;
/// equal probabilities order by lower index.
inline std::vector<std::size_t> nucleus(const std::vector<double>& probs, double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("nucleus: p must be in (0, 1]");
  if (probs.empty()) throw std::invalid_argument("nucleus: empty distribution");
  std::vector<std::size_t> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return probs[a] > probs[b]; });
  double mass = 0.0;
  std::size_t k = 0;
  while (k < order.size()) {
    mass += probs[order[k++]];
    if (mass >= p) break;
  }
  order.resize(k);
  return order;
}

struct SamplingConfig {
  double p_n = 0.9;
  double temperature = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(p_n > 0.0 && p_n <= 1.0)) throw std::invalid_argument("sampling: p_n must be in (0, 1]");
    if (!(temperature > 0.0)) throw std::invalid_argument("sampling: temperature must be positive");
  }
};

/// Temperature-scaled softmax, nucleus truncation, then a draw in proportion
/// to the renormalized nucleus mass.
inline std::size_t nucleus_sample(const std::vector<double>& logits, double p, double temperature, Rng& rng) {
  const std::vector<double> probs = softmax_vec(logits, temperature);
  const std::vector<std::size_t> nuc = nucleus(probs, p);
  double mass = 0.0;
  for (std::size_t i : nuc) mass += probs[i];
  double u = std::uniform_real_distribution<double>(0.0, mass)(rng);
  for (std::size_t i : nuc) {
    if (u < probs[i]) return i;
    u -= probs[i];
  }
  return nuc.back();
}

/// Per position, the ground-truth token with probability `ratio`, else the prediction.
inline std::vector<GenToken> teacher_forcing_mix(const std::vector<GenToken>& gt, const std::vector<GenToken>& pred, double ratio,
                                                 Rng& rng) {
  if (!(ratio >= 0.0 && ratio <= 1.0)) throw std::invalid_argument("teacher_forcing_mix: ratio must be in [0, 1]");
  if (gt.size() != pred.size()) throw std::invalid_argument("teacher_forcing_mix: length mismatch");
  std::bernoulli_distribution keep(ratio);
  std::vector<GenToken> out(gt.size());
  for (std::size_t i = 0; i < gt.size(); ++i) out[i] = keep(rng) ? gt[i] : pred[i];
  return out;
}

/// Linear decay from 1 at the first epoch to ratio_min at the last.
inline double teacher_forcing_ratio(std::size_t epoch, std::size_t epochs, double ratio_min) {
  if (epochs <= 1) return 1.0;
  return 1.0 - (1.0 - ratio_min) * static_cast<double>(epoch) / static_cast<double>(epochs - 1);
}

/// Autoregressive sampling after `prefix` until END or N_max tokens. The
/// prefix tokens are kept verbatim at the front.
inline std::vector<GenToken> sample_tokens(const SketchGenerator& gen, const Condition& condition, const std::vector<GenToken>& prefix,
                                           const SamplingConfig& sampling) {
  sampling.validate();
  const GenConfig& cfg = gen.config();
  if (prefix.size() >= cfg.n_max)
    throw std::invalid_argument("complete: prefix of " + std::to_string(prefix.size()) + " strokes leaves no room under N_max " +
                                std::to_string(cfg.n_max));
  GenSequence seq{prefix, condition};
  gen.validate(seq, cfg.n_max);
  Rng rng(sampling.seed);
  while (seq.tokens.size() < cfg.n_max) {
    const std::size_t label = nucleus_sample(gen.label_forward(seq).first, sampling.p_n, sampling.temperature, rng);
    if (label == cfg.end_label()) break;
    auto [sl, ll] = gen.code_forward(seq, label);
    const std::size_t s = nucleus_sample(sl, sampling.p_n, sampling.temperature, rng);
    const std::size_t l = nucleus_sample(ll, sampling.p_n, sampling.temperature, rng);
    seq.tokens.push_back({label, s, l});
  }
  return seq.tokens;
}

struct GenTrainOptions {
  std::size_t epochs = 100;
  std::size_t batch_size = 4;
  LrSchedule schedule{LrSchedule::Kind::Constant, 1e-5, 10, 1.0};
  double teacher_forcing_min = 0.5;
  std::uint64_t seed = 0;
  std::size_t patience = 0;
  std::function<void(std::size_t epoch, double loss)> on_epoch;
  // Replaces the training sequences for one epoch (online augmentation).
  std::function<std::vector<GenSequence>(std::size_t epoch)> epoch_data;
};

/// Greedy one-step predictions at every position under ground-truth context:
/// pred[i] is what the model would emit as token i given tokens < i.
inline std::vector<GenToken> greedy_predictions(const SketchGenerator& gen, const GenSequence& s) {
  NoGradGuard ng;
  const GenLogits g = gen.forward({&s}, SketchGenerator::next_labels({&s}));
  const std::size_t C = gen.config().num_labels, V = gen.config().codes;
  auto argmax = [](const double* x, std::size_t n) { return static_cast<std::size_t>(std::max_element(x, x + n) - x); };
  std::vector<GenToken> out;
  for (std::size_t i = 0; i < s.tokens.size(); ++i) {
    // END is not a token; the best real label stands in.
    const std::size_t lab = argmax(g.label.vec().data() + i * (C + 1), C);
    out.push_back({lab, argmax(g.shape.vec().data() + i * V, V), argmax(g.loc.vec().data() + i * V, V)});
  }
  return out;
}

/// Adam on gen_loss with decaying teacher forcing: inputs mix ground truth
/// and the model's own greedy predictions; targets are always ground truth.
inline std::vector<double> train_generator(SketchGenerator& gen, const std::vector<GenSequence>& data, const GenTrainOptions& opt) {
  if (data.empty()) throw std::invalid_argument("train_generator: empty dataset");
  if (opt.batch_size == 0) throw std::invalid_argument("train_generator: batch_size must be positive");
  for (const GenSequence& s : data) gen.validate(s, gen.config().n_max);
  Rng rng(opt.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  const std::vector<Var> vars = gen.params().vars();
  AdamState adam;
  EarlyStop stop{opt.patience};
  std::vector<double> curve;
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    adam.lr = lr_at(opt.schedule, e);
    const double ratio = teacher_forcing_ratio(e, opt.epochs, opt.teacher_forcing_min);
    std::vector<GenSequence> fresh;
    if (opt.epoch_data) {
      fresh = opt.epoch_data(e);
      if (fresh.size() != data.size()) throw std::invalid_argument("train_generator: epoch_data changed the dataset size");
      for (const GenSequence& s : fresh) gen.validate(s, gen.config().n_max);
    }
    const std::vector<GenSequence>& epoch_set = opt.epoch_data ? fresh : data;
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t start = 0, bi = 0; start < order.size(); start += opt.batch_size, ++bi) {
      std::vector<GenSequence> inputs;
      std::vector<const GenSequence*> gt;
      for (std::size_t j = start; j < std::min(order.size(), start + opt.batch_size); ++j) {
        const GenSequence& s = epoch_set[order[j]];
        gt.push_back(&s);
        GenSequence in = s;
        if (ratio < 1.0) in.tokens = teacher_forcing_mix(s.tokens, greedy_predictions(gen, s), ratio, rng);
        inputs.push_back(std::move(in));
      }
      std::vector<const GenSequence*> in_ptrs;
      for (const GenSequence& s : inputs) in_ptrs.push_back(&s);
      try {
        // Mixed tokens feed the inputs; ground-truth labels condition the code heads.
        const GenLogits g = gen.forward(in_ptrs, SketchGenerator::next_labels(gt));
        const GenTargets t = gen.targets(gt, g.length);
        Var loss = add(add(cross_entropy(g.label, t.label), cross_entropy(g.shape, t.shape)), cross_entropy(g.loc, t.loc));
        gen.params().zero_grad();
        backward(loss);
        adam_step(adam, vars);
        total += loss.item() * static_cast<double>(gt.size());
      } catch (const NumericError& err) {
        throw NumericError("generator training diverged at epoch " + std::to_string(e) + ", batch " + std::to_string(bi) + " (lr " +
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
