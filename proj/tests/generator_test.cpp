#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <random>

#include "support/oracles.hpp"
#include "support/fidelity.hpp"
#include "vqsgen/model/generator.hpp"

using namespace vqsgen;
using namespace vqsgen::oracle;
using harness::random_gen_sequences;
using harness::toy_generator;

namespace {

double entropy(const std::vector<double>& p) {
  double h = 0.0;
  for (double v : p)
    if (v > 0) h -= v * std::log(v);
  return h;
}

}  // namespace

TEST(Nucleus, HandExample) {
  EXPECT_EQ(nucleus({0.5, 0.3, 0.2}, 0.7), (std::vector<std::size_t>{0, 1}));
  Rng rng(1);
  std::size_t zeros = 0, n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = nucleus_sample(logits_of({0.5, 0.3, 0.2}), 0.7, 1.0, rng);
    ASSERT_LT(k, 2u);
    zeros += k == 0;
  }
  EXPECT_NEAR(static_cast<double>(zeros) / n, 0.625, 0.01);
}

TEST(Nucleus, TinyThresholdIsArgmax) {
  Rng rng(2);
  const std::vector<double> p{0.1, 0.25, 0.3, 0.2, 0.15};
  for (int i = 0; i < 200; ++i) EXPECT_EQ(nucleus_sample(logits_of(p), 1e-9, 1.0, rng), 2u);
}

TEST(Nucleus, TiesOrderByLowerIndex) {
  EXPECT_EQ(nucleus({0.25, 0.25, 0.25, 0.25}, 0.5), (std::vector<std::size_t>{0, 1}));
  EXPECT_EQ(nucleus({0.1, 0.3, 0.3, 0.3}, 0.3), (std::vector<std::size_t>{1}));
}

TEST(Nucleus, FullMassMatchesDistribution) {
  Rng rng(3);
  const std::vector<double> p{0.05, 0.4, 0.15, 0.3, 0.1};
  std::vector<double> freq(p.size(), 0.0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) freq[nucleus_sample(logits_of(p), 1.0, 1.0, rng)] += 1.0 / n;
  for (std::size_t k = 0; k < p.size(); ++k) EXPECT_NEAR(freq[k], p[k], 0.01) << k;
}

TEST(Nucleus, MatchesBruteForceOnRandomDistributions) {
  Rng rng(4);
  std::uniform_int_distribution<std::size_t> K(1, 32);
  std::gamma_distribution<double> g(0.5, 1.0);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> p(K(rng));
    double z = 0.0;
    for (double& v : p) z += (v = g(rng) + 1e-12);
    for (double& v : p) v /= z;
    for (int k = 1; k <= 10; ++k) EXPECT_EQ(nucleus(p, k / 10.0), oracle_nucleus(p, k / 10.0));
  }
}

TEST(Nucleus, TemperatureScalesLogitsFirst) {
  const std::vector<double> logits{2.0, 1.0, 0.0};
  const auto hot = softmax_vec(logits, 2.0);
  const auto ref = softmax_vec({1.0, 0.5, 0.0});
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(hot[i], ref[i], 1e-15);
  EXPECT_THROW(softmax_vec(logits, 0.0), std::invalid_argument);
  EXPECT_THROW(nucleus({1.0}, 0.0), std::invalid_argument);
  EXPECT_THROW(nucleus({1.0}, 1.5), std::invalid_argument);
}

TEST(TeacherForcing, MixRatios) {
  std::vector<GenToken> gt(10000), pred(10000);
  for (std::size_t i = 0; i < gt.size(); ++i) {
    gt[i] = {0, i % 7, i % 5};
    pred[i] = {1, 0, 0};
  }
  Rng rng(5);
  EXPECT_EQ(teacher_forcing_mix(gt, pred, 1.0, rng), gt);
  EXPECT_EQ(teacher_forcing_mix(gt, pred, 0.0, rng), pred);
  const auto half = teacher_forcing_mix(gt, pred, 0.5, rng);
  const double frac = static_cast<double>(std::count_if(half.begin(), half.end(), [](const GenToken& t) { return t.label == 0; })) / 1e4;
  EXPECT_NEAR(frac, 0.5, 0.02);
  Rng a(9), b(9);
  EXPECT_EQ(teacher_forcing_mix(gt, pred, 0.3, a), teacher_forcing_mix(gt, pred, 0.3, b));
  EXPECT_THROW(teacher_forcing_mix(gt, pred, 1.5, rng), std::invalid_argument);
}

TEST(TeacherForcing, LinearSchedule) {
  EXPECT_EQ(teacher_forcing_ratio(0, 11, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(teacher_forcing_ratio(5, 11, 0.5), 0.75);
  EXPECT_DOUBLE_EQ(teacher_forcing_ratio(10, 11, 0.5), 0.5);
  EXPECT_EQ(teacher_forcing_ratio(0, 1, 0.5), 1.0);
}

TEST(Embedding, LabelTermIsAdditive) {
  SketchGenerator gen = toy_generator(1);
  const GenSequence a{{{0, 2, 3}, {1, 4, 0}}, {}}, b{{{2, 2, 3}, {1, 4, 0}}, {}};
  NoGradGuard ng;
  const Var ea = gen.embed({&a}, 3), eb = gen.embed({&b}, 3);
  const Var table = gen.params().find("gen/label/emb_label");
  const std::size_t D = 8;
  for (std::size_t k = 0; k < D; ++k) {
    EXPECT_NEAR(eb[D + k] - ea[D + k], table[2 * D + k] - table[0 * D + k], 1e-12);
    EXPECT_EQ(ea[k], eb[k]);
    EXPECT_EQ(ea[2 * D + k], eb[2 * D + k]);
  }
  Var t = table;
  for (double& v : t.mutable_values()) v = 0.0;
  const Var za = gen.embed({&a}, 3), zb = gen.embed({&b}, 3);
  EXPECT_EQ(za.vec(), zb.vec());
}

TEST(Embedding, PaperWidths) {
  const GenConfig paper = GenConfig::paper(10);
  EXPECT_EQ(paper.label.model_dim, 512u);
  EXPECT_EQ(paper.codes, 8192u);
  GenConfig slim = paper;
  slim.label.layers = slim.code.layers = 1;
  SketchGenerator gen(slim, 1);
  const GenSequence s{{{3, 100, 8000}}, {}};
  NoGradGuard ng;
  EXPECT_EQ(gen.embed({&s}, 2).shape(), (Shape{1, 2, 512}));
  auto [sl, ll] = gen.code_forward(s, 4);
  EXPECT_EQ(sl.size(), 8192u);
  EXPECT_EQ(ll.size(), 8192u);
  EXPECT_EQ(gen.label_forward(s).first.size(), 11u);
}

TEST(Forward, DistributionsNormalizeAndStartNearUniform) {
  GenConfig cfg = GenConfig::tiny(6, 64, 32);
  SketchGenerator gen(cfg, 2);
  Rng rng(6);
  gen.set_codebooks(Codebook(normal_init({64, 32}, 1.0, rng)), Codebook(normal_init({64, 32}, 1.0, rng)));
  const GenSequence s{{{1, 5, 9}, {4, 63, 0}}, {}};
  const auto lab = softmax_vec(gen.label_forward(s).first);
  EXPECT_NEAR(std::accumulate(lab.begin(), lab.end(), 0.0), 1.0, 1e-6);
  EXPECT_GT(entropy(lab), 0.9 * std::log(7.0));
  auto [sl, ll] = gen.code_forward(s, 2);
  const auto ps = softmax_vec(sl);
  EXPECT_NEAR(std::accumulate(ps.begin(), ps.end(), 0.0), 1.0, 1e-6);
  const auto pl = softmax_vec(ll);
  EXPECT_NEAR(std::accumulate(pl.begin(), pl.end(), 0.0), 1.0, 1e-6);
  EXPECT_THROW(gen.code_forward(s, 6), std::invalid_argument);
}

TEST(Forward, CausalityUnderPerturbation) {
  SketchGenerator gen = toy_generator(3);
  const GenSequence a{{{0, 1, 2}, {1, 3, 4}, {2, 0, 1}, {0, 4, 4}}, {}};
  GenSequence b = a;
  b.tokens[2] = {1, 2, 0};
  NoGradGuard ng;
  const auto na = SketchGenerator::next_labels({&a}), nb = SketchGenerator::next_labels({&b});
  const GenLogits ga = gen.forward({&a}, na), gb = gen.forward({&b}, nb);
  // Token 2 sits at position 3; its label conditions the code heads from position 2.
  auto row_equal = [](const Var& x, const Var& y, std::size_t pos, std::size_t w) {
    for (std::size_t k = 0; k < w; ++k)
      if (x[pos * w + k] != y[pos * w + k]) return false;
    return true;
  };
  for (std::size_t pos = 0; pos < 5; ++pos) {
    EXPECT_EQ(row_equal(ga.label, gb.label, pos, 4), pos < 3) << pos;
    EXPECT_EQ(row_equal(ga.shape, gb.shape, pos, 5), pos < 2) << pos;
    EXPECT_EQ(row_equal(ga.loc, gb.loc, pos, 5), pos < 2) << pos;
  }
}

TEST(Forward, PaddingMatchesSingleSequence) {
  SketchGenerator gen = toy_generator(4);
  const GenSequence shortseq{{{2, 1, 1}}, {}}, longseq{{{0, 1, 2}, {1, 3, 4}, {2, 0, 1}}, {}};
  const auto alone = gen.log_prob({&shortseq});
  const auto mixed = gen.log_prob({&longseq, &shortseq});
  EXPECT_NEAR(alone[0], mixed[1], 1e-12);
}

TEST(GenLoss, UniformHeadsGiveEntropySum) {
  SketchGenerator gen = toy_generator(5);
  for (const char* n : {"gen/label/head/w", "gen/label/head/b", "gen/code/shape_head/w", "gen/code/shape_head/b", "gen/code/loc_head/w",
                        "gen/code/loc_head/b"}) {
    Var v = gen.params().find(n);
    for (double& x : v.mutable_values()) x = 0.0;
  }
  const GenSequence s{{{0, 1, 2}, {1, 3, 4}}, {}};
  const double expect = std::log(4.0) + 2.0 * std::log(5.0);
  EXPECT_NEAR(gen.gen_loss({&s}).item(), expect, 1e-12);
}

TEST(GenLoss, ConfidentCorrectHeadsApproachZero) {
  // The three-way sum reaches zero exactly when each head is one-hot on its target.
  const Var sure = Var::from({2, 3}, {60, 0, 0, 0, 0, 60});
  EXPECT_LT(cross_entropy(sure, {0, 2}).item(), 1e-20);
}

TEST(GenLoss, ChainRuleMatchesStepwise) {
  SketchGenerator gen = toy_generator(6, 2);
  Rng rng(7);
  const std::vector<GenSequence> seqs = random_gen_sequences(12, gen.config(), rng);
  std::vector<const GenSequence*> batch;
  for (const GenSequence& s : seqs) batch.push_back(&s);
  const std::vector<double> lp = gen.log_prob(batch);
  for (std::size_t i = 0; i < seqs.size(); ++i) EXPECT_NEAR(lp[i], stepwise_log_prob(gen, seqs[i]), 1e-6) << i;
}

TEST(GenLoss, GradientsMatchFiniteDifferences) {
  const harness::FidelityResult r = harness::generator_fidelity();
  EXPECT_LT(r.max_rel_err, 1e-3) << r.worst;
  EXPECT_GT(r.checked, 10 * r.excluded);
  EXPECT_TRUE(r.passed);
}

TEST(Generate, TerminatesAndIsDeterministic) {
  SketchGenerator gen = toy_generator(8, 2);
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const SamplingConfig sc{0.9, 1.0, seed};
    const auto a = sample_tokens(gen, Condition::start(), {}, sc);
    EXPECT_LE(a.size(), gen.config().n_max);
    EXPECT_EQ(a, sample_tokens(gen, Condition::start(), {}, sc));
    for (const GenToken& t : a) {
      EXPECT_LT(t.label, gen.config().num_labels);
      EXPECT_LT(t.shape_idx, gen.config().codes);
      EXPECT_LT(t.loc_idx, gen.config().codes);
    }
    EXPECT_EQ(sample_tokens(gen, Condition::cls(1), {}, sc), sample_tokens(gen, Condition::cls(1), {}, sc));
  }
  EXPECT_THROW(sample_tokens(gen, Condition::cls(2), {}, {}), std::out_of_range);
  EXPECT_THROW(sample_tokens(gen, Condition::vec({1.0}), {}, {}), ShapeError);
  EXPECT_NO_THROW(sample_tokens(gen, Condition::vec(std::vector<double>(8, 0.1)), {}, {}));
}

TEST(Generate, CompletionKeepsPrefixAndRespectsCapacity) {
  SketchGenerator gen = toy_generator(9);
  const std::vector<GenToken> prefix{{1, 2, 3}, {0, 4, 1}};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto out = sample_tokens(gen, Condition::start(), prefix, {0.9, 1.0, seed});
    ASSERT_GE(out.size(), 2u);
    EXPECT_EQ(out[0], prefix[0]);
    EXPECT_EQ(out[1], prefix[1]);
  }
  const std::vector<GenToken> nearly(gen.config().n_max - 1, GenToken{1, 1, 1});
  EXPECT_LE(sample_tokens(gen, Condition::start(), nearly, {}).size(), gen.config().n_max);
  const std::vector<GenToken> full(gen.config().n_max, GenToken{1, 1, 1});
  EXPECT_THROW(sample_tokens(gen, Condition::start(), full, {}), std::invalid_argument);
  const SamplingConfig sc{0.8, 0.7, 3};
  EXPECT_EQ(sample_tokens(gen, Condition::start(), {}, sc), sample_tokens(gen, Condition::start(), std::vector<GenToken>{}, sc));
}

TEST(Training, LearnsLabelToCodeConditioning) {
  GenConfig cfg = harness::toy_generator_config();
  cfg.label = cfg.code = {16, 2, 2, 2};
  SketchGenerator gen(cfg, 10);
  Rng rng(11);
  gen.set_codebooks(Codebook(normal_init({5, 4}, 1.0, rng)), Codebook(normal_init({5, 4}, 1.0, rng)));
  // Label k always carries shape code k + 1 and location code 4 - k.
  std::vector<GenSequence> data;
  std::uniform_int_distribution<std::size_t> lab(0, 2), len(1, 4);
  for (int i = 0; i < 48; ++i) {
    GenSequence s;
    for (std::size_t k = 0, n = len(rng); k < n; ++k) {
      const std::size_t l = lab(rng);
      s.tokens.push_back({l, l + 1, 4 - l});
    }
    data.push_back(s);
  }
  GenTrainOptions opt;
  opt.epochs = 60;
  opt.schedule = {LrSchedule::Kind::Constant, 3e-3, 10, 1.0};
  const auto curve = train_generator(gen, data, opt);
  EXPECT_LT(curve.back(), 0.7 * curve.front());
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t l = 0; l < 3; ++l) {
      const GenSequence ctx{{{k, k + 1, 4 - k}}, {}};
      auto [sl, ll] = gen.code_forward(ctx, l);
      EXPECT_EQ(std::max_element(sl.begin(), sl.end()) - sl.begin(), static_cast<long>(l + 1)) << k << "," << l;
      EXPECT_EQ(std::max_element(ll.begin(), ll.end()) - ll.begin(), static_cast<long>(4 - l)) << k << "," << l;
    }
  GenTrainOptions same = opt;
  same.epochs = 3;
  SketchGenerator g1(cfg, 1), g2(cfg, 1);
  g1.set_codebooks(Codebook(Var::from({5, 4}, gen.shape_codes().vec())), Codebook(Var::from({5, 4}, gen.loc_codes().vec())));
  g2.set_codebooks(Codebook(Var::from({5, 4}, gen.shape_codes().vec())), Codebook(Var::from({5, 4}, gen.loc_codes().vec())));
  EXPECT_EQ(train_generator(g1, data, same), train_generator(g2, data, same));
}
