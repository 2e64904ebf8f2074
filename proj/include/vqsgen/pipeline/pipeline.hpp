#pragma once

// Three-stage training orchestration over an artifacts directory:
//
//   <artifacts>/config.txt         resolved configuration
//   <artifacts>/manifest.json      run manifest (config hash, stage records)
//   <artifacts>/.lock              held while a run owns the directory
//   <artifacts>/stage1/ae.ckpt     stroke autoencoder ("ae/" arrays)
//   <artifacts>/stage2/vq.ckpt     tokenizers and codebooks ("vq/" arrays)
//   <artifacts>/stage3/gen.ckpt    cascaded decoders ("gen/" arrays)

#include <fcntl.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "vqsgen/core/checkpoint.hpp"
#include "vqsgen/metrics/metrics.hpp"
#include "vqsgen/model/autoencoder.hpp"
#include "vqsgen/model/generator.hpp"
#include "vqsgen/model/sketch_codec.hpp"
#include "vqsgen/model/vq.hpp"
#include "vqsgen/pipeline/config.hpp"
#include "vqsgen/sketch/augment.hpp"
#include "vqsgen/sketch/dataset_io.hpp"
#include "vqsgen/sketch/preprocess.hpp"

namespace vqsgen {

namespace fs = std::filesystem;

class PipelineError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(mix(seed) ^ a) ^ b) ^ c);
}

// ---------------------------------------------------------------------------
// Dataset

struct LoadedDataset {
  DatasetHeader header;
  std::vector<RawSketch> raw;   // preprocessed vector form at source scale
  std::vector<Sketch> sketches;  // decoupled triplets at the model canvas
  std::size_t records = 0;
  std::size_t skipped = 0;
  std::size_t truncated = 0;
  std::vector<std::string> warnings;

  std::size_t category_of(const RawSketch& s) const {
    return static_cast<std::size_t>(std::find(header.categories.begin(), header.categories.end(), s.category) - header.categories.begin());
  }
};

inline Sketch raster_sketch(const RawSketch& raw, const LoadedDataset& ds, const PipelineConfig& cfg) {
  return to_sketch(raw, ds.header.labels, ds.category_of(raw), ds.header.canvas_size, cfg.canvas_size, cfg.line_width);
}

/// Parses, preprocesses and decouples a dataset. Records that fail any step
/// are skipped with a warning; sketches over N_max strokes are truncated or
/// skipped per `overlong`. More than half skipped is an error.
inline LoadedDataset load_dataset(const std::string& path, const PipelineConfig& cfg) {
  DatasetFile file = read_dataset_file(path);
  LoadedDataset ds;
  ds.header = file.header;
  ds.records = file.sketches.size() + file.skipped;
  ds.skipped = file.skipped;
  ds.warnings = file.warnings;
  PreprocessOptions pre;
  pre.merge_eps = cfg.merge_eps;
  for (const RawSketch& r : file.sketches) {
    try {
      RawSketch p = preprocess_sketch(r, pre);
      if (p.strokes.size() > cfg.n_max) {
        if (cfg.overlong == "skip") throw SketchError(std::to_string(p.strokes.size()) + " strokes exceed N_max " + std::to_string(cfg.n_max));
        p.strokes.resize(cfg.n_max);
        ++ds.truncated;
      }
      Sketch s = raster_sketch(p, ds, cfg);
      ds.raw.push_back(std::move(p));
      ds.sketches.push_back(std::move(s));
    } catch (const SketchError& e) {
      ++ds.skipped;
      ds.warnings.push_back("sketch '" + r.id + "': " + e.what());
    }
  }
  if (ds.sketches.empty()) throw PipelineError("dataset '" + path + "' has no usable sketches");
  if (2 * ds.skipped > ds.records)
    throw PipelineError("dataset '" + path + "': " + std::to_string(ds.skipped) + " of " + std::to_string(ds.records) + " records skipped");
  return ds;
}

/// Fills num_labels from the dataset header, or checks an explicit value against it.
inline PipelineConfig resolve_config(PipelineConfig cfg, const DatasetHeader& h) {
  if (cfg.num_labels == 0) cfg.num_labels = h.labels.size();
  else if (cfg.num_labels != h.labels.size())
    throw ConfigError("config num_labels=" + std::to_string(cfg.num_labels) + " but the dataset declares " + std::to_string(h.labels.size()) +
                      " labels");
  return cfg;
}

// ---------------------------------------------------------------------------
// Manifest and lock

inline std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline const char* stage_name(int k) {
  switch (k) {
    case 1: return "autoencoder";
    case 2: return "tokenizer";
    case 3: return "generator";
  }
  throw PipelineError("unknown stage " + std::to_string(k));
}

inline fs::path stage_artifact(const fs::path& dir, int k) {
  switch (k) {
    case 1: return dir / "stage1" / "ae.ckpt";
    case 2: return dir / "stage2" / "vq.ckpt";
    case 3: return dir / "stage3" / "gen.ckpt";
  }
  throw PipelineError("unknown stage " + std::to_string(k));
}

struct StageRecord {
  int stage = 0;
  std::string status;  // done
  std::vector<double> loss_curve;
  std::vector<std::string> artifacts;
  std::string started, finished;
  double seconds = 0.0;
};

struct RunManifest {
  std::string config_hash;
  std::map<std::string, std::string> config;
  nlohmann::json dataset = nlohmann::json::object();
  std::vector<StageRecord> stages;

  const StageRecord* find(int k) const {
    for (const StageRecord& s : stages)
      if (s.stage == k) return &s;
    return nullptr;
  }

  /// Keeps stages before k and appends r; later stages become stale and are dropped.
  void record(StageRecord r) {
    std::vector<StageRecord> kept;
    for (StageRecord& s : stages)
      if (s.stage < r.stage) kept.push_back(std::move(s));
    kept.push_back(std::move(r));
    stages = std::move(kept);
  }

  nlohmann::json to_json() const {
    nlohmann::json st = nlohmann::json::array();
    for (const StageRecord& s : stages)
      st.push_back({{"stage", s.stage},
                    {"name", stage_name(s.stage)},
                    {"status", s.status},
                    {"loss_curve", s.loss_curve},
                    {"artifacts", s.artifacts},
                    {"started", s.started},
                    {"finished", s.finished},
                    {"seconds", s.seconds}});
    return {{"format", "vqsgen-run"}, {"version", 1}, {"config_hash", config_hash}, {"config", config}, {"dataset", dataset}, {"stages", st}};
  }

  static RunManifest from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "vqsgen-run") throw PipelineError("manifest: not a vqsgen run manifest");
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.config = j.at("config").get<std::map<std::string, std::string>>();
    m.dataset = j.at("dataset");
    int prev = 0;
    for (const auto& s : j.at("stages")) {
      StageRecord r;
      r.stage = s.at("stage").get<int>();
      if (r.stage != prev + 1) throw PipelineError("manifest: stages out of order");
      prev = r.stage;
      r.status = s.at("status").get<std::string>();
      r.loss_curve = s.at("loss_curve").get<std::vector<double>>();
      r.artifacts = s.at("artifacts").get<std::vector<std::string>>();
      r.started = s.at("started").get<std::string>();
      r.finished = s.at("finished").get<std::string>();
      r.seconds = s.at("seconds").get<double>();
      m.stages.push_back(std::move(r));
    }
    return m;
  }

  static std::optional<RunManifest> load(const fs::path& dir) {
    const fs::path p = dir / "manifest.json";
    if (!fs::exists(p)) return std::nullopt;
    std::ifstream in(p);
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
      throw PipelineError("manifest " + p.string() + " is unreadable: " + e.what());
    }
  }

  /// Written to a temporary file and renamed into place.
  void save(const fs::path& dir) const {
    const fs::path p = dir / "manifest.json", tmp = dir / "manifest.json.tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) throw PipelineError("cannot write " + tmp.string());
      out << to_json().dump(2) << "\n";
    }
    fs::rename(tmp, p);
  }
};

/// Exclusive ownership of an artifacts directory for the lifetime of the object.
class DirLock {
 public:
  explicit DirLock(const fs::path& dir) : path_(dir / ".lock") {
    fs::create_directories(dir);
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
      std::ifstream in(path_);
      std::string owner;
      std::getline(in, owner);
      throw PipelineError("artifacts directory " + dir.string() + " is locked by pid " + (owner.empty() ? "?" : owner) + "; remove " +
                          path_.string() + " if no run is active");
    }
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;
  ~DirLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

// ---------------------------------------------------------------------------
// Models and checkpoints

/// Everything inference needs, reconstructed from an artifacts directory.
struct Models {
  PipelineConfig cfg;
  DatasetHeader header;
  StrokeAutoencoder ae;
  VQTokenizer tok;
  SketchGenerator gen;
  int stages = 0;  // number of trained stages loaded
};

inline GenConfig models_gen_config(const PipelineConfig& cfg, const DatasetHeader& h) { return cfg.gen_config(h.categories.size()); }

inline Checkpoint stage_checkpoint(int k, const Models& m) {
  Checkpoint ck;
  ck.manifest = {{"kind", stage_name(k)}, {"config_hash", m.cfg.hash()}, {"preset", m.cfg.preset}};
  if (k == 1) {
    ck.put_all(m.ae.params(), "ae/");
  } else if (k == 2) {
    ck.put_all(m.tok.params());
    ck.put_all(m.tok.buffers());
  } else {
    ck.put_all(m.gen.params());
    ck.put("gen/codebook/shape", m.gen.shape_codes());
    ck.put("gen/codebook/loc", m.gen.loc_codes());
  }
  return ck;
}

inline void restore_stage(int k, Models& m, const Checkpoint& ck) {
  if (k == 1) {
    ck.restore(m.ae.params(), "ae/");
  } else if (k == 2) {
    ck.restore(m.tok.params());
    ck.restore(m.tok.buffers());
  } else {
    ck.restore(m.gen.params());
    auto book = [&ck](const std::string& name) {
      const NamedArray& a = ck.get(name);
      return Codebook(Var::from(a.shape, a.data));
    };
    m.gen.set_codebooks(book("gen/codebook/shape"), book("gen/codebook/loc"));
  }
}

/// Freshly initialized models for a resolved config.
inline Models init_models(const PipelineConfig& cfg, const DatasetHeader& h) {
  Models m;
  m.cfg = cfg;
  m.header = h;
  m.ae = StrokeAutoencoder(cfg.ae_config(), derive_seed(cfg.seed, 1));
  m.tok = VQTokenizer(cfg.vq_config(), cfg.d_e, derive_seed(cfg.seed, 2));
  m.gen = SketchGenerator(models_gen_config(cfg, h), derive_seed(cfg.seed, 3));
  return m;
}

inline DatasetHeader header_from_manifest(const RunManifest& man) {
  DatasetHeader h;
  h.canvas_size = man.dataset.at("canvas_size").get<double>();
  h.labels = man.dataset.at("labels").get<std::vector<std::string>>();
  h.categories = man.dataset.at("categories").get<std::vector<std::string>>();
  return h;
}

/// Loads the resolved config and the first `upto` stages. Refuses artifacts
/// written for a different config hash unless `force`.
inline Models load_models(const fs::path& dir, int upto = 3, bool force = false) {
  const auto man = RunManifest::load(dir);
  if (!man) throw PipelineError("no manifest in " + dir.string() + "; run training first");
  PipelineConfig cfg = PipelineConfig::load((dir / "config.txt").string());
  if (!force && cfg.hash() != man->config_hash)
    throw ConfigMismatchError("config.txt in " + dir.string() + " does not match the manifest's config hash");
  Models m = init_models(cfg, header_from_manifest(*man));
  for (int k = 1; k <= upto; ++k) {
    const StageRecord* r = man->find(k);
    if (!r || r->status != "done") throw PipelineError("stage " + std::to_string(k) + " (" + stage_name(k) + ") has not been trained in " + dir.string());
    restore_stage(k, m, Checkpoint::load(stage_artifact(dir, k).string(), man->config_hash, force));
    m.stages = k;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Stage data

inline std::vector<RawSketch> augmented(const LoadedDataset& ds, const PipelineConfig& cfg, int stage, std::size_t epoch) {
  std::vector<RawSketch> out;
  for (std::size_t i = 0; i < ds.raw.size(); ++i)
    out.push_back(augment_sketch(ds.raw[i], derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(stage), epoch, i), cfg.augment,
                                 ds.header.canvas_size));
  return out;
}

/// Rasterizes augmented sketches, keeping the original for any that no longer rasterize.
inline std::vector<Sketch> augmented_sketches(const LoadedDataset& ds, const PipelineConfig& cfg, int stage, std::size_t epoch) {
  const std::vector<RawSketch> raw = augmented(ds, cfg, stage, epoch);
  std::vector<Sketch> out;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    try {
      out.push_back(raster_sketch(raw[i], ds, cfg));
    } catch (const SketchError&) {
      out.push_back(ds.sketches[i]);
    }
  }
  return out;
}

inline std::vector<StrokeImage> stroke_shapes(const std::vector<Sketch>& sketches) {
  std::vector<StrokeImage> out;
  for (const Sketch& s : sketches)
    for (const StrokeTriplet& t : s.strokes) out.push_back(t.shape);
  return out;
}

inline std::vector<StrokeSequence> stroke_sequences(const std::vector<Sketch>& sketches, const StrokeAutoencoder& ae) {
  std::vector<StrokeSequence> out;
  for (const Sketch& s : sketches) out.push_back(stroke_sequence(s, ae));
  return out;
}

inline Condition sketch_condition(const Sketch& s, const PipelineConfig& cfg) {
  return cfg.class_conditional ? Condition::cls(s.category) : Condition::start();
}

inline std::vector<GenSequence> gen_sequences(const std::vector<Sketch>& sketches, const Models& m) {
  std::vector<GenSequence> out;
  for (const Sketch& s : sketches) out.push_back({to_gen_tokens(tokenize_sketch(s, m.ae, m.tok)), sketch_condition(s, m.cfg)});
  return out;
}

// ---------------------------------------------------------------------------
// Stages

struct StageProgress {
  std::function<void(int stage, std::size_t epoch, double loss)> on_epoch;
};

inline std::vector<double> train_stage(int k, Models& m, const LoadedDataset& ds, const StageProgress& progress = {}) {
  const PipelineConfig& cfg = m.cfg;
  const bool aug = !cfg.augment.identity();
  auto report = [&progress, k](std::size_t e, double l) {
    if (progress.on_epoch) progress.on_epoch(k, e, l);
  };
  if (k == 1) {
    AETrainOptions o;
    o.epochs = cfg.ae.epochs;
    o.batch_size = cfg.ae.batch;
    o.schedule = cfg.ae.schedule();
    o.seed = derive_seed(cfg.seed, 11);
    o.patience = cfg.ae.patience;
    o.on_epoch = report;
    if (aug) o.epoch_data = [&](std::size_t e) { return stroke_shapes(augmented_sketches(ds, cfg, 1, e)); };
    return train_autoencoder(m.ae, stroke_shapes(ds.sketches), o);
  }
  if (k == 2) {
    VQTrainOptions o;
    o.epochs = cfg.vq.epochs;
    o.batch_size = cfg.vq.batch;
    o.schedule = cfg.vq.schedule();
    o.seed = derive_seed(cfg.seed, 12);
    o.patience = cfg.vq.patience;
    o.on_epoch = report;
    if (aug) o.epoch_data = [&](std::size_t e) { return stroke_sequences(augmented_sketches(ds, cfg, 2, e), m.ae); };
    return train_tokenizer(m.tok, stroke_sequences(ds.sketches, m.ae), o);
  }
  if (k == 3) {
    m.gen.set_codebooks(m.tok.shape_book(), m.tok.loc_book());
    GenTrainOptions o;
    o.epochs = cfg.gen.epochs;
    o.batch_size = cfg.gen.batch;
    o.schedule = cfg.gen.schedule();
    o.teacher_forcing_min = cfg.tf_min;
    o.seed = derive_seed(cfg.seed, 13);
    o.patience = cfg.gen.patience;
    o.on_epoch = report;
    if (aug) o.epoch_data = [&](std::size_t e) { return gen_sequences(augmented_sketches(ds, cfg, 3, e), m); };
    return train_generator(m.gen, gen_sequences(ds.sketches, m), o);
  }
  throw PipelineError("unknown stage " + std::to_string(k));
}

/// Owns an artifacts directory for one invocation: dataset, resolved config,
/// manifest and models trained so far.
class Pipeline {
 public:
  explicit Pipeline(const PipelineConfig& cfg, StageProgress progress = {})
      : dir_(cfg.artifacts), lock_(dir_), progress_(std::move(progress)) {
    if (cfg.dataset.empty()) throw ConfigError("config key 'dataset' is required for training");
    ds_ = load_dataset(cfg.dataset, cfg);
    cfg_ = resolve_config(cfg, ds_.header);
    cfg_.validate();
    auto man = RunManifest::load(dir_);
    if (man && man->config_hash == cfg_.hash()) {
      man_ = std::move(*man);
    } else {
      // A different config invalidates every earlier stage.
      man_.config_hash = cfg_.hash();
    }
    man_.config = cfg_.to_map();
    man_.dataset = {{"path", cfg_.dataset},
                    {"records", ds_.records},
                    {"sketches", ds_.sketches.size()},
                    {"skipped", ds_.skipped},
                    {"truncated", ds_.truncated},
                    {"canvas_size", ds_.header.canvas_size},
                    {"labels", ds_.header.labels},
                    {"categories", ds_.header.categories}};
    models_ = init_models(cfg_, ds_.header);
  }

  const PipelineConfig& config() const { return cfg_; }
  const LoadedDataset& dataset() const { return ds_; }
  const RunManifest& manifest() const { return man_; }
  const Models& models() const { return models_; }
  Models& models() { return models_; }

  /// Trains stage k from the saved artifacts of stages 1..k-1.
  const StageRecord& run_stage(int k) {
    stage_name(k);
    for (int j = 1; j < k; ++j) {
      const StageRecord* r = man_.find(j);
      const fs::path art = stage_artifact(dir_, j);
      if (!r || r->status != "done" || !fs::exists(art))
        throw PipelineError("stage " + std::to_string(k) + " requires stage " + std::to_string(j) + " (" + stage_name(j) + ") artifacts: " +
                            (fs::exists(art) ? "not recorded for this config" : art.string() + " is missing"));
      if (models_.stages < j) {
        restore_stage(j, models_, Checkpoint::load(art.string(), cfg_.hash()));
        models_.stages = j;
      }
    }
    models_ = reinit_from(k);
    StageRecord rec;
    rec.stage = k;
    rec.started = utc_now();
    const auto t0 = std::chrono::steady_clock::now();
    rec.loss_curve = train_stage(k, models_, ds_, progress_);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    rec.finished = utc_now();
    const fs::path art = stage_artifact(dir_, k);
    fs::create_directories(art.parent_path());
    stage_checkpoint(k, models_).save(art.string());
    for (int j = k + 1; j <= 3; ++j) {
      std::error_code ec;
      fs::remove(stage_artifact(dir_, j), ec);
      fs::remove(stage_artifact(dir_, j).string() + ".txt", ec);
    }
    rec.artifacts = {fs::relative(art, dir_).string()};
    rec.status = "done";
    models_.stages = k;
    man_.record(std::move(rec));
    cfg_.save((dir_ / "config.txt").string());
    man_.save(dir_);
    return *man_.find(k);
  }

  const RunManifest& run_all() {
    for (int k = 1; k <= 3; ++k) run_stage(k);
    return man_;
  }

 private:
  // Stage k and later start from their seeded initialization.
  Models reinit_from(int k) const {
    Models fresh = init_models(cfg_, ds_.header);
    Models m = models_;
    if (k <= 1) m.ae = fresh.ae;
    if (k <= 2) m.tok = fresh.tok;
    m.gen = fresh.gen;
    return m;
  }

  fs::path dir_;
  DirLock lock_;
  StageProgress progress_;
  PipelineConfig cfg_;
  LoadedDataset ds_;
  RunManifest man_;
  Models models_;
};

// ---------------------------------------------------------------------------
// Reconstruction

struct ReconstructionReport {
  std::vector<double> sketch_mse;  // per-pixel MSE of the assembled canvas
  double mean_mse = 0.0;
  double max_mse = 0.0;
  double mean_iou = 0.0;  // over every stroke box
  std::size_t clipped = 0;
};

/// tokenize -> detokenize against each sketch's own assembled canvas and boxes.
inline ReconstructionReport reconstruction_report(const Models& m, const std::vector<Sketch>& sketches) {
  ReconstructionReport r;
  std::vector<StrokeBBox> pred, gt;
  const std::size_t S = m.cfg.canvas_size;
  for (const Sketch& s : sketches) {
    const DecodedSketch d = detokenize(tokenize_sketch(s, m.ae, m.tok), m.ae, m.tok);
    const StrokeImage ref = assemble_sketch(s, S);
    double e = 0.0;
    for (std::size_t p = 0; p < ref.pixels().size(); ++p) e += (d.image.pixels()[p] - ref.pixels()[p]) * (d.image.pixels()[p] - ref.pixels()[p]);
    r.sketch_mse.push_back(e / static_cast<double>(ref.pixels().size()));
    for (std::size_t i = 0; i < s.strokes.size(); ++i) {
      gt.push_back(s.strokes[i].bbox);
      pred.push_back(d.sketch.strokes[i].bbox);
      r.clipped += d.clipped[i];
    }
  }
  for (double e : r.sketch_mse) {
    r.mean_mse += e / static_cast<double>(r.sketch_mse.size());
    r.max_mse = std::max(r.max_mse, e);
  }
  r.mean_iou = mean_bbox_iou(pred, gt);
  return r;
}

// ---------------------------------------------------------------------------
// Sampling and features

/// n unconditioned (or class-cycled, when the model is class-conditional)
/// samples; sample i draws with seed derive_seed(seed, i).
inline std::vector<DecodedSketch> sample_sketches(const Models& m, std::size_t n, std::uint64_t seed, double p_n = 0.9) {
  std::vector<DecodedSketch> out;
  const std::size_t K = m.gen.config().num_classes;
  for (std::size_t i = 0; i < n; ++i) {
    const Condition c = K > 0 ? Condition::cls(i % K) : Condition::start();
    std::vector<TokenizedStroke> toks;
    for (const GenToken& t : sample_tokens(m.gen, c, {}, {p_n, 1.0, derive_seed(seed, i)}))
      toks.push_back({t.shape_idx, t.loc_idx, {t.label, m.cfg.num_labels}});
    out.push_back(detokenize(toks, m.ae, m.tok));
  }
  return out;
}

inline constexpr const char* kEncoderFeatures = "stage1-encoder";

/// Frozen stroke-encoder embeddings of whole assembled sketch images.
inline FeatureSet encoder_features(const Models& m, const std::vector<StrokeImage>& images) {
  return {m.ae.encode_all(images), kEncoderFeatures};
}

}  // namespace vqsgen
