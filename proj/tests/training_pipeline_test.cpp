#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "vqsgen/pipeline/pipeline.hpp"
#include "vqsgen/sketch/synthetic.hpp"

using namespace vqsgen;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("vqsgen_" + name + "_" + std::to_string(::getpid()))) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string write_synthetic(const fs::path& dir, std::size_t per_class, std::uint64_t seed = 0) {
  SyntheticOptions o;
  o.per_class = per_class;
  o.seed = seed;
  const std::string p = (dir / "data.ndjson").string();
  write_dataset_file(p, synthetic_header(), synthetic_sketches(o));
  return p;
}

PipelineConfig micro_config(const fs::path& dir, const std::string& dataset) {
  PipelineConfig c = PipelineConfig::parse(
      "preset=tiny\n"
      "canvas_size=16\nline_width=1\nn_max=4\n"
      "ae_blocks=4,8\nae_reps=1,1\nd_e=16\nae_epochs=4\nae_batch=4\n"
      "vq_dims=8,8\nvq_reps=1,1\ncodes=8\nvq_epochs=4\n"
      "gen_dim=8\ngen_heads=2\ngen_ffn=2\ngen_epochs=4\ngen_lr=3e-3\n"
      "class_conditional=1\n");
  c.dataset = dataset;
  c.artifacts = (dir / "art").string();
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Config, PresetsResolveAndOverride) {
  const PipelineConfig t = PipelineConfig::parse("preset=tiny\n");
  EXPECT_EQ(t.canvas_size, 64u);
  EXPECT_EQ(t.d_e, 64u);
  EXPECT_EQ(t.codes, 64u);
  EXPECT_EQ(t.vq_dims.back(), 32u);
  EXPECT_EQ(t.gen_dim, 128u);
  EXPECT_EQ(t.vq.batch, 8u);
  EXPECT_EQ(t.gen.batch, 4u);
  const PipelineConfig p = PipelineConfig::parse("# paper scale\npreset = paper\n\n");
  EXPECT_EQ(p.canvas_size, 256u);
  EXPECT_EQ(p.d_e, 256u);
  EXPECT_EQ(p.codes, 8192u);
  EXPECT_EQ(p.vq_dims.back(), 512u);
  EXPECT_EQ(p.gen_dim, 512u);
  EXPECT_EQ(p.ae.lr, 1e-4);
  EXPECT_EQ(p.ae.lr_step, 10u);
  EXPECT_EQ(p.gen.lr, 1e-5);
  EXPECT_EQ(p.gen.schedule().kind, LrSchedule::Kind::Constant);
  EXPECT_EQ(p.vq.batch, 64u);
  EXPECT_EQ(p.gen.batch, 8u);
  // Order does not matter: the preset is applied before every override.
  const PipelineConfig o = PipelineConfig::parse("codes=16\npreset=paper\nalpha=0.5\n");
  EXPECT_EQ(o.codes, 16u);
  EXPECT_EQ(o.alpha, 0.5);
  EXPECT_EQ(o.d_e, 256u);
}

TEST(Config, Errors) {
  EXPECT_THROW(PipelineConfig::parse("bogus=1\n"), ConfigError);
  EXPECT_THROW(PipelineConfig::parse("codes=ten\n"), ConfigError);
  EXPECT_THROW(PipelineConfig::parse("codes=0\n"), ConfigError);
  EXPECT_THROW(PipelineConfig::parse("alpha=-1\n"), ConfigError);
  EXPECT_THROW(PipelineConfig::parse("preset=huge\n"), ConfigError);
  EXPECT_THROW(PipelineConfig::parse("canvas_size=60\n"), ConfigError);
  EXPECT_THROW(PipelineConfig::parse("just a line\n"), ConfigError);
  EXPECT_THROW(PipelineConfig::parse("overlong=clip\n"), ConfigError);
  EXPECT_THROW(PipelineConfig::load("/nonexistent/config.txt"), ConfigError);
}

TEST(Config, TextRoundTripAndHash) {
  PipelineConfig c = PipelineConfig::parse("preset=tiny\nalpha=0.7\nae_blocks=8,16,32,64\nseed=9\n");
  const PipelineConfig r = PipelineConfig::parse(c.to_text());
  EXPECT_EQ(r.to_text(), c.to_text());
  EXPECT_EQ(r.hash(), c.hash());
  PipelineConfig moved = c;
  moved.dataset = "/elsewhere/data.ndjson";
  moved.artifacts = "/elsewhere/art";
  EXPECT_EQ(moved.hash(), c.hash());
  PipelineConfig changed = c;
  changed.alpha = 0.71;
  EXPECT_NE(changed.hash(), c.hash());
  EXPECT_EQ(c.hash().size(), 16u);
}

TEST(Dataset, SyntheticFixtureKeepsSketchesAndStrokes) {
  TempDir t("ds");
  SyntheticOptions o;
  o.per_class = 2;
  auto raw = synthetic_sketches(o);
  raw.resize(3);
  const std::string path = (t.path / "three.ndjson").string();
  write_dataset_file(path, synthetic_header(), raw);
  PipelineConfig cfg = PipelineConfig::tiny();
  const LoadedDataset ds = load_dataset(path, cfg);
  ASSERT_EQ(ds.sketches.size(), 3u);
  EXPECT_EQ(ds.skipped, 0u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(ds.sketches[i].strokes.size(), raw[i].strokes.size());
    EXPECT_EQ(ds.sketches[i].id, raw[i].id);
    EXPECT_EQ(ds.sketches[i].category, raw[i].category == "circles" ? 0u : 1u);
    for (const auto& s : ds.sketches[i].strokes) EXPECT_EQ(s.shape.size(), 64u);
  }
  EXPECT_EQ(ds.sketches[0].strokes[0].label.index, 0u);
  EXPECT_EQ(ds.sketches[1].strokes[0].label.index, 1u);
}

TEST(Dataset, OverlongPolicyAndErrors) {
  TempDir t("ds2");
  SyntheticOptions o;
  o.per_class = 2;
  const std::string path = write_synthetic(t.path, 2);
  PipelineConfig cfg = PipelineConfig::tiny();
  cfg.n_max = 1;
  const LoadedDataset tr = load_dataset(path, cfg);
  EXPECT_EQ(tr.sketches.size(), 4u);
  EXPECT_EQ(tr.truncated, 4u);
  for (const auto& s : tr.sketches) EXPECT_EQ(s.strokes.size(), 1u);
  cfg.overlong = "skip";
  EXPECT_THROW(load_dataset(path, cfg), PipelineError);  // every record skipped
  cfg.n_max = 2;
  EXPECT_EQ(load_dataset(path, cfg).sketches.size(), 4u);

  const std::string empty = (t.path / "empty.ndjson").string();
  std::ofstream(empty).close();
  EXPECT_THROW(load_dataset(empty, cfg), SketchError);
  const std::string bad = (t.path / "bad.ndjson").string();
  std::ofstream(bad) << "{\"format\":\"other\"}\n";
  EXPECT_THROW(load_dataset(bad, cfg), SketchError);
  EXPECT_THROW(load_dataset((t.path / "missing.ndjson").string(), cfg), SketchError);

  EXPECT_EQ(resolve_config(cfg, synthetic_header()).num_labels, 2u);
  cfg.num_labels = 3;
  EXPECT_THROW(resolve_config(cfg, synthetic_header()), ConfigError);
}

TEST(Stages, PredecessorArtifactsRequired) {
  TempDir t("order");
  const PipelineConfig cfg = micro_config(t.path, write_synthetic(t.path, 2));
  Pipeline p(cfg);
  try {
    p.run_stage(3);
    FAIL() << "stage 3 ran without stage 2";
  } catch (const PipelineError& e) {
    EXPECT_NE(std::string(e.what()).find("stage 1"), std::string::npos) << e.what();
  }
  p.run_stage(1);
  try {
    p.run_stage(3);
    FAIL() << "stage 3 ran without stage 2";
  } catch (const PipelineError& e) {
    EXPECT_NE(std::string(e.what()).find("requires stage 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(p.run_stage(4), PipelineError);
}

TEST(Stages, LockIsExclusive) {
  TempDir t("lock");
  const PipelineConfig cfg = micro_config(t.path, write_synthetic(t.path, 2));
  {
    Pipeline a(cfg);
    EXPECT_TRUE(fs::exists(fs::path(cfg.artifacts) / ".lock"));
    EXPECT_THROW(Pipeline b(cfg), PipelineError);
  }
  EXPECT_FALSE(fs::exists(fs::path(cfg.artifacts) / ".lock"));
  EXPECT_NO_THROW(Pipeline c(cfg));
}

TEST(Stages, RunAllRecordsFreezesAndReproduces) {
  TempDir t("all");
  const PipelineConfig cfg = micro_config(t.path, write_synthetic(t.path, 2));
  std::vector<std::vector<double>> stage1_curves;
  std::vector<std::vector<std::vector<double>>> ae_after, tok_after;
  {
    Pipeline p(cfg);
    p.run_stage(1);
    stage1_curves.push_back(p.manifest().find(1)->loss_curve);
    ae_after.push_back(p.models().ae.params().snapshot());
    p.run_stage(2);
    tok_after.push_back(p.models().tok.params().snapshot());
    EXPECT_EQ(p.models().ae.params().snapshot(), ae_after[0]);
    p.run_stage(3);
    EXPECT_EQ(p.models().ae.params().snapshot(), ae_after[0]);
    EXPECT_EQ(p.models().tok.params().snapshot(), tok_after[0]);

    const RunManifest& m = p.manifest();
    ASSERT_EQ(m.stages.size(), 3u);
    for (int k = 1; k <= 3; ++k) {
      EXPECT_EQ(m.stages[static_cast<std::size_t>(k - 1)].stage, k);
      EXPECT_EQ(m.stages[static_cast<std::size_t>(k - 1)].status, "done");
      EXPECT_EQ(m.stages[static_cast<std::size_t>(k - 1)].loss_curve.size(), 4u);
      EXPECT_TRUE(fs::exists(stage_artifact(cfg.artifacts, k)));
    }
    EXPECT_EQ(m.config_hash, p.config().hash());
  }
  const auto saved = RunManifest::load(cfg.artifacts);
  ASSERT_TRUE(saved);
  EXPECT_EQ(saved->to_json(), Pipeline(cfg).manifest().to_json());
  EXPECT_EQ(saved->config.at("num_labels"), "2");

  // A fresh invocation rerunning stage 1 reproduces the curve bit for bit and drops later stages.
  {
    Pipeline p(cfg);
    p.run_stage(1);
    EXPECT_EQ(p.manifest().find(1)->loss_curve, stage1_curves[0]);
    EXPECT_EQ(p.models().ae.params().snapshot(), ae_after[0]);
    EXPECT_EQ(p.manifest().stages.size(), 1u);
    EXPECT_FALSE(fs::exists(stage_artifact(cfg.artifacts, 3)));
    EXPECT_THROW(load_models(cfg.artifacts, 2), PipelineError);
    p.run_stage(2);
    EXPECT_EQ(p.models().tok.params().snapshot(), tok_after[0]);
  }
}

TEST(Checkpoints, RoundTripAndHashRefusal) {
  TempDir t("ckpt");
  const PipelineConfig cfg = micro_config(t.path, write_synthetic(t.path, 2));
  std::vector<GenToken> sampled;
  std::vector<double> emb;
  const StrokeImage probe = [] {
    StrokeImage im(16);
    for (std::size_t i = 4; i < 12; ++i) im.at(i, i) = 1.0;
    return im;
  }();
  {
    Pipeline p(cfg);
    p.run_all();
    emb = p.models().ae.encode(probe);
    sampled = sample_tokens(p.models().gen, Condition::cls(1), {}, {0.9, 1.0, 5});
  }
  const Models m = load_models(cfg.artifacts);
  EXPECT_EQ(m.stages, 3);
  EXPECT_EQ(m.ae.encode(probe), emb);
  EXPECT_EQ(sample_tokens(m.gen, Condition::cls(1), {}, {0.9, 1.0, 5}), sampled);

  for (int k = 1; k <= 3; ++k) {
    const fs::path a = stage_artifact(cfg.artifacts, k), b = t.path / ("copy" + std::to_string(k) + ".ckpt");
    Checkpoint::load(a.string()).save(b.string());
    EXPECT_EQ(slurp(a), slurp(b)) << "stage " << k;
    EXPECT_EQ(slurp(a), stage_checkpoint(k, m).serialize()) << "stage " << k;
  }
  EXPECT_THROW(Checkpoint::load(stage_artifact(cfg.artifacts, 1).string(), "0000000000000000"), ConfigMismatchError);
  EXPECT_NO_THROW(Checkpoint::load(stage_artifact(cfg.artifacts, 1).string(), "0000000000000000", true));

  PipelineConfig other = cfg;
  other.alpha = 0.5;
  other.save((fs::path(cfg.artifacts) / "config.txt").string());
  EXPECT_THROW(load_models(cfg.artifacts), ConfigMismatchError);
}

TEST(Stages, ConfigChangeInvalidatesEarlierStages) {
  TempDir t("cfgchange");
  PipelineConfig cfg = micro_config(t.path, write_synthetic(t.path, 2));
  {
    Pipeline p(cfg);
    p.run_stage(1);
  }
  cfg.alpha = 0.5;
  Pipeline p(cfg);
  EXPECT_TRUE(p.manifest().stages.empty());
  EXPECT_THROW(p.run_stage(2), PipelineError);
}

TEST(Stages, OnlineAugmentationChangesEpochDataDeterministically) {
  TempDir t("aug");
  PipelineConfig cfg = micro_config(t.path, write_synthetic(t.path, 2));
  cfg.augment = {1.0, 10.0, 0.02, 0.1, 5.0, 0.0, 1, 8};
  Pipeline p(cfg);
  const auto e0 = augmented_sketches(p.dataset(), p.config(), 1, 0), e1 = augmented_sketches(p.dataset(), p.config(), 1, 1);
  ASSERT_EQ(e0.size(), p.dataset().sketches.size());
  EXPECT_NE(stroke_shapes(e0)[0].pixels(), stroke_shapes(e1)[0].pixels());
  EXPECT_EQ(stroke_shapes(augmented_sketches(p.dataset(), p.config(), 1, 1))[0].pixels(), stroke_shapes(e1)[0].pixels());
  p.run_all();
  const auto c1 = p.manifest().find(1)->loss_curve;
  cfg.augment = {};
  cfg.artifacts = (t.path / "plain").string();
  Pipeline q(cfg);
  q.run_stage(1);
  EXPECT_NE(q.manifest().find(1)->loss_curve, c1);
}
