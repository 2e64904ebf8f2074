// vqsgen: preprocessing, staged training, sampling, evaluation and the
// inference service. Errors are one JSON line on stderr with a nonzero exit.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "vqsgen/service/server.hpp"
#include "vqsgen/sketch/synthetic.hpp"

namespace fs = std::filesystem;
using namespace vqsgen;

namespace {

enum Exit { kOk = 0, kFailure = 1, kUsage = 2, kConfig = 3, kPipeline = 4, kRequest = 5 };

struct CliError : std::runtime_error {
  CliError(int code, const std::string& kind, const std::string& msg) : std::runtime_error(msg), code(code), kind(kind) {}
  int code;
  std::string kind;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CliError(kUsage, "io", "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !(out << text)) throw CliError(kFailure, "io", "cannot write '" + path + "'");
}

void emit(const json& j) { std::cout << j.dump() << std::endl; }

/// --config file, then every --<key> flag, applied preset first.
struct ConfigFlags {
  std::string file;
  std::map<std::string, std::string> values;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", file, "key=value config file");
    for (const auto& f : detail::config_fields()) cmd->add_option("--" + f.key, values[f.key], "config key " + f.key);
  }

  PipelineConfig build() const {
    std::string text = file.empty() ? "" : read_file(file) + "\n";
    for (const auto& [k, v] : values)
      if (!v.empty()) text += k + "=" + v + "\n";
    return PipelineConfig::parse(text);
  }
};

struct InferenceFlags {
  std::string artifacts, request, out, json_out, stroke_dir, category;
  std::optional<std::uint64_t> seed;
  std::optional<double> p_n, temperature;
  std::optional<std::size_t> cls;
  bool force = false;

  void attach(CLI::App* cmd, bool request_required) {
    cmd->add_option("--artifacts", artifacts, "trained artifacts directory")->required();
    auto* r = cmd->add_option("--request", request, "request body as JSON (service schema)");
    if (request_required) r->required();
    cmd->add_option("--out", out, "composite image (.png or .pgm)");
    cmd->add_option("--json", json_out, "write the full response JSON here");
    cmd->add_option("--stroke-dir", stroke_dir, "write each stroke raster as stroke_<i>.pgm");
    cmd->add_option("--seed", seed, "sampling seed");
    cmd->add_option("--p_n", p_n, "nucleus mass");
    cmd->add_option("--temperature", temperature, "softmax temperature");
    cmd->add_option("--class", cls, "class index condition");
    cmd->add_option("--category", category, "category name condition");
    cmd->add_flag("--force", force, "load artifacts despite a config hash mismatch");
  }

  int run(ServiceMode mode) const {
    json body = request.empty() ? json::object() : json::parse(read_file(request));
    if (!body.is_object()) throw CliError(kRequest, "request", "request file must hold a JSON object");
    if (mode == ServiceMode::Complete && !body.contains("prefix")) body["prefix"] = json::array();
    if (seed) body["sampling"]["seed"] = *seed;
    if (p_n) body["sampling"]["p_n"] = *p_n;
    if (temperature) body["sampling"]["temperature"] = *temperature;
    if (cls) body["condition"] = {{"class", *cls}};
    if (!category.empty()) body["condition"] = {{"category", category}};
    const InferenceService svc(load_models(artifacts, 3, force));
    const ServiceRequest req = svc.parse(mode, body, InferenceService::server_seed());
    const ServiceResponse res = svc.run(req);
    svc.check_composite(res);
    if (!out.empty()) write_image(out, to_gray8(res.composite));
    if (!json_out.empty()) write_text(json_out, svc.to_json(res).dump(2) + "\n");
    if (!stroke_dir.empty()) {
      fs::create_directories(stroke_dir);
      for (std::size_t i = 0; i < res.strokes.size(); ++i)
        write_image((fs::path(stroke_dir) / ("stroke_" + std::to_string(i) + ".pgm")).string(), to_gray8(res.strokes[i].raster));
    }
    std::size_t committed = 0, clipped = 0;
    for (const ServiceStroke& s : res.strokes) committed += s.committed, clipped += s.clipped;
    emit({{"mode", mode_name(mode)},
          {"seed", req.sampling.seed},
          {"strokes", res.strokes.size()},
          {"committed", committed},
          {"clipped", clipped},
          {"out", out}});
    return kOk;
  }
};

std::string kv_line(const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string s;
  for (const auto& [k, v] : kv) s += (s.empty() ? "" : " ") + k + "=" + v;
  return s;
}

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(10);
  ss << v;
  return ss.str();
}

struct EvalFlags {
  std::string metric, a, b, artifacts, dataset, dump;
  std::size_t samples = 0;
  std::uint64_t seed = 0;

  void attach(CLI::App* cmd) {
    cmd->add_option("--metric", metric, "gd | fid | iou | recon")->required()->check(CLI::IsMember({"gd", "fid", "iou", "recon"}));
    cmd->add_option("--a", a, "feature file (gd/fid) or predicted boxes (iou)");
    cmd->add_option("--b", b, "feature file (gd/fid) or ground-truth boxes (iou)");
    cmd->add_option("--artifacts", artifacts, "trained artifacts (feature extraction and recon)");
    cmd->add_option("--dataset", dataset, "reference dataset (feature extraction and recon)");
    cmd->add_option("--samples", samples, "generated samples to compare (default: dataset size)");
    cmd->add_option("--seed", seed, "sampling seed for generated samples");
    cmd->add_option("--dump-features", dump, "write extracted features to <prefix>_real.txt and <prefix>_gen.txt");
  }

  static std::vector<StrokeBBox> boxes(const std::string& path) {
    const FeatureSet f = read_features(path);
    if (f.size() > 0 && f.dim() != 4) throw MetricError("box file '" + path + "' needs 4 columns: half_w half_h cx cy");
    std::vector<StrokeBBox> out;
    for (const auto& r : f.rows) out.push_back({r[0], r[1], r[2], r[3]});
    return out;
  }

  Models models() const {
    if (artifacts.empty() || dataset.empty()) throw CliError(kUsage, "usage", "--metric " + metric + " needs --artifacts and --dataset");
    return load_models(artifacts, metric == "recon" ? 2 : 3);
  }

  std::vector<Sketch> reference(const Models& m) const {
    PipelineConfig cfg = m.cfg;
    return load_dataset(dataset, cfg).sketches;
  }

  int run() const {
    if (metric == "iou") {
      if (a.empty() || b.empty()) throw CliError(kUsage, "usage", "--metric iou needs --a and --b box files");
      const auto pa = boxes(a), pb = boxes(b);
      emit_line({{"metric", "iou"}, {"value", num(mean_bbox_iou(pa, pb))}, {"boxes", std::to_string(pa.size())}});
      return kOk;
    }
    if (metric == "recon") {
      const Models m = models();
      const ReconstructionReport r = reconstruction_report(m, reference(m));
      emit_line({{"metric", "recon"},
                 {"mean_mse", num(r.mean_mse)},
                 {"max_mse", num(r.max_mse)},
                 {"mean_iou", num(r.mean_iou)},
                 {"clipped", std::to_string(r.clipped)},
                 {"sketches", std::to_string(r.sketch_mse.size())}});
      return kOk;
    }
    FeatureSet fa, fb;
    if (!a.empty() || !b.empty()) {
      if (a.empty() || b.empty()) throw CliError(kUsage, "usage", "--a and --b go together");
      fa = read_features(a);
      fb = read_features(b);
    } else {
      const Models m = models();
      std::vector<StrokeImage> real, gen;
      for (const Sketch& s : reference(m)) real.push_back(assemble_sketch(s, m.cfg.canvas_size));
      for (const DecodedSketch& d : sample_sketches(m, samples ? samples : real.size(), seed)) gen.push_back(d.image);
      fa = encoder_features(m, real);
      fb = encoder_features(m, gen);
      if (!dump.empty()) {
        write_features(dump + "_real.txt", fa);
        write_features(dump + "_gen.txt", fb);
      }
    }
    std::vector<std::pair<std::string, std::string>> kv{{"metric", metric}};
    if (metric == "gd") {
      kv.emplace_back("value", num(gd(fa, fb)));
    } else {
      const FidReport r = fid_report(fa, fb);
      kv.emplace_back("value", num(r.value));
      kv.emplace_back("min_eigenvalue", num(r.min_eigenvalue));
      for (const std::string& w : r.warnings) std::cerr << "warning: " << w << "\n";
    }
    kv.emplace_back("a_samples", std::to_string(fa.size()));
    kv.emplace_back("b_samples", std::to_string(fb.size()));
    kv.emplace_back("provenance_a", fa.provenance.empty() ? "unknown" : fa.provenance);
    kv.emplace_back("provenance_b", fb.provenance.empty() ? "unknown" : fb.provenance);
    emit_line(kv);
    return kOk;
  }

  static void emit_line(const std::vector<std::pair<std::string, std::string>>& kv) { std::cout << kv_line(kv) << std::endl; }
};

int cmd_preprocess(const ConfigFlags& cf, const std::string& out) {
  const PipelineConfig cfg = cf.build();
  if (cfg.dataset.empty()) throw CliError(kUsage, "usage", "--dataset is required");
  const LoadedDataset ds = load_dataset(cfg.dataset, cfg);
  write_dataset_file(out, ds.header, ds.raw);
  for (const std::string& w : ds.warnings) std::cerr << "warning: " << w << "\n";
  emit({{"records", ds.records}, {"kept", ds.raw.size()}, {"skipped", ds.skipped}, {"truncated", ds.truncated}, {"out", out}});
  return kOk;
}

int cmd_train(const ConfigFlags& cf, const std::string& stage, std::size_t log_every) {
  PipelineConfig cfg = cf.build();
  if (cfg.artifacts.empty()) throw CliError(kUsage, "usage", "--artifacts is required");
  StageProgress progress{[log_every](int k, std::size_t epoch, double loss) {
    if (log_every > 0 && (epoch + 1) % log_every == 0) std::cerr << "stage " << k << " epoch " << epoch + 1 << " loss " << loss << "\n";
  }};
  Pipeline p(cfg, progress);
  std::vector<int> stages;
  if (stage == "all") {
    stages = {1, 2, 3};
  } else {
    stages = {std::stoi(stage)};
  }
  for (int k : stages) {
    const StageRecord& r = p.run_stage(k);
    emit({{"stage", k},
          {"name", stage_name(k)},
          {"epochs", r.loss_curve.size()},
          {"first_loss", r.loss_curve.empty() ? 0.0 : r.loss_curve.front()},
          {"final_loss", r.loss_curve.empty() ? 0.0 : r.loss_curve.back()},
          {"seconds", r.seconds},
          {"config_hash", p.manifest().config_hash}});
  }
  return kOk;
}

int cmd_export(const std::string& artifacts, const std::string& out) {
  const Models m = load_models(artifacts, 2);
  auto rows = [](const Codebook& b) {
    json r = json::array();
    for (CodeIndex i = 0; i < b.size(); ++i) r.push_back(b.row(i));
    return r;
  };
  const json j{{"format", "vqsgen-codebook"},
               {"version", 1},
               {"config_hash", m.cfg.hash()},
               {"codes", m.tok.shape_book().size()},
               {"dim", m.tok.shape_book().dim()},
               {"shape", rows(m.tok.shape_book())},
               {"loc", rows(m.tok.loc_book())}};
  write_text(out, j.dump() + "\n");
  emit({{"codes", m.tok.shape_book().size()}, {"dim", m.tok.shape_book().dim()}, {"out", out}});
  return kOk;
}

int cmd_synthetic(const SyntheticOptions& o, const std::string& out) {
  const auto sketches = synthetic_sketches(o);
  write_dataset_file(out, synthetic_header(), sketches);
  emit({{"sketches", sketches.size()}, {"out", out}});
  return kOk;
}

int cmd_serve(const std::string& artifacts, const std::string& host, int port) {
  const InferenceService svc(load_models(artifacts, 3));
  httplib::Server srv;
  mount_service(srv, svc);
  const int bound = port == 0 ? srv.bind_to_any_port(host) : (srv.bind_to_port(host, port) ? port : -1);
  if (bound < 0) throw CliError(kFailure, "io", "cannot bind " + host + ":" + std::to_string(port));
  emit({{"listening", host + ":" + std::to_string(bound)}, {"port", bound}});
  if (!srv.listen_after_bind()) throw CliError(kFailure, "io", "server stopped unexpectedly");
  return kOk;
}

int fail(const std::string& command, int code, const std::string& kind, const std::string& msg, const std::string& field = "") {
  json e{{"command", command}, {"kind", kind}, {"message", msg}};
  if (!field.empty()) e["field"] = field;
  std::cerr << json{{"error", e}}.dump() << std::endl;
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  retain_heap_memory();
  CLI::App app{"Stroke-level vector-quantized sketch generator"};
  app.require_subcommand(1);

  ConfigFlags pre_cfg, train_cfg;
  std::string pre_out, stage = "all";
  std::size_t log_every = 10;
  auto* pre = app.add_subcommand("preprocess", "clean, merge and length-check a dataset file");
  pre_cfg.attach(pre);
  pre->add_option("--out", pre_out, "output dataset file")->required();

  auto* train = app.add_subcommand("train", "train stage 1, 2, 3 or all");
  train_cfg.attach(train);
  train->add_option("--stage", stage, "1 | 2 | 3 | all")->check(CLI::IsMember({"1", "2", "3", "all"}));
  train->add_option("--log-every", log_every, "print the loss every n epochs (0: never)");

  InferenceFlags gen_f, comp_f, interp_f;
  auto* gen = app.add_subcommand("generate", "sample a sketch");
  gen_f.attach(gen, false);
  auto* comp = app.add_subcommand("complete", "continue a partial sketch");
  comp_f.attach(comp, false);
  auto* interp = app.add_subcommand("interpolate", "walk the shape codebook between two strokes");
  interp_f.attach(interp, true);

  EvalFlags eval_f;
  auto* eval = app.add_subcommand("eval", "gd, fid, box iou or reconstruction metrics");
  eval_f.attach(eval);

  std::string exp_art, exp_out;
  auto* exp = app.add_subcommand("export-codebook", "write the shape and location codebooks as JSON");
  exp->add_option("--artifacts", exp_art, "trained artifacts directory")->required();
  exp->add_option("--out", exp_out, "output JSON file")->required();

  SyntheticOptions syn;
  std::string syn_out;
  auto* synth = app.add_subcommand("synthetic", "write the circles-vs-crosses toy dataset");
  synth->add_option("--out", syn_out, "output dataset file")->required();
  synth->add_option("--per-class", syn.per_class, "sketches per class");
  synth->add_option("--seed", syn.seed, "jitter seed");

  std::string srv_art, host = "127.0.0.1";
  int port = 8080;
  auto* serve = app.add_subcommand("serve", "run the HTTP inference service");
  serve->add_option("--artifacts", srv_art, "trained artifacts directory")->required();
  serve->add_option("--host", host, "bind address");
  serve->add_option("--port", port, "TCP port (0 picks a free one)");

  std::string command = argc > 1 ? argv[1] : "";
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(command, kUsage, "usage", e.what());
  }
  try {
    if (*pre) return cmd_preprocess(pre_cfg, pre_out);
    if (*train) return cmd_train(train_cfg, stage, log_every);
    if (*gen) return gen_f.run(ServiceMode::Generate);
    if (*comp) return comp_f.run(ServiceMode::Complete);
    if (*interp) return interp_f.run(ServiceMode::Interpolate);
    if (*eval) return eval_f.run();
    if (*exp) return cmd_export(exp_art, exp_out);
    if (*synth) return cmd_synthetic(syn, syn_out);
    if (*serve) return cmd_serve(srv_art, host, port);
  } catch (const CliError& e) {
    return fail(command, e.code, e.kind, e.what());
  } catch (const RequestError& e) {
    return fail(command, kRequest, "request", e.what(), e.field());
  } catch (const json::exception& e) {
    return fail(command, kRequest, "request", e.what());
  } catch (const ConfigError& e) {
    return fail(command, kConfig, "config", e.what());
  } catch (const PipelineError& e) {
    return fail(command, kPipeline, "pipeline", e.what());
  } catch (const std::exception& e) {
    return fail(command, kFailure, "error", e.what());
  }
  return kUsage;
}
