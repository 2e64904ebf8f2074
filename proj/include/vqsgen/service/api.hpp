#pragma once

// Inference service shared by the CLI and the HTTP server: request
// validation, generate / complete / interpolate, and the response schema.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "vqsgen/model/sketch_codec.hpp"
#include "vqsgen/pipeline/pipeline.hpp"
#include "vqsgen/service/image.hpp"
#include "vqsgen/service/trace.hpp"

namespace vqsgen {

using json = nlohmann::json;

inline constexpr int kApiVersion = 1;
inline constexpr std::size_t kMaxInterpolationSteps = 64;
inline constexpr std::uint64_t kMaxServerSeed = (1ull << 53) - 1;

/// A request that fails validation; maps to a 4xx reply naming the field.
class RequestError : public std::runtime_error {
 public:
  RequestError(std::string field, const std::string& message, int status = 400)
      : std::runtime_error(message), field_(std::move(field)), status_(status) {}
  const std::string& field() const { return field_; }
  int status() const { return status_; }

 private:
  std::string field_;
  int status_;
};

enum class ServiceMode { Generate, Complete, Interpolate };

inline const char* mode_name(ServiceMode m) {
  switch (m) {
    case ServiceMode::Generate: return "generate";
    case ServiceMode::Complete: return "complete";
    case ServiceMode::Interpolate: return "interpolate";
  }
  return "?";
}

struct StrokeInput {
  Polyline polyline;  // request frame
  std::size_t label = 0;
};

struct ServiceRequest {
  ServiceMode mode = ServiceMode::Generate;
  Condition condition;
  json condition_echo;  // null when absent
  SamplingConfig sampling;
  double canvas_size = 0.0;  // frame of request points
  std::vector<StrokeInput> prefix;
  StrokeInput from, to;
  std::size_t steps = 8;
};

struct ServiceStroke {
  StrokeImage raster;  // placed on the model canvas
  StrokeBBox bbox;
  std::size_t label = 0;
  bool committed = false;
  bool clipped = false;
  std::optional<CodeIndex> shape_code, loc_code;
  std::vector<Point> points;  // echoed request polyline for committed strokes
};

struct ServiceResponse {
  ServiceMode mode = ServiceMode::Generate;
  SamplingConfig sampling;
  json condition_echo;
  double request_canvas = 0.0;
  std::vector<ServiceStroke> strokes;
  StrokeImage composite;
  double timing_ms = 0.0;
};

namespace detail {

inline std::string join_field(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline void only_keys(const json& obj, const std::string& path, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw RequestError(path.empty() ? "body" : path, "must be a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) throw RequestError(join_field(path, it.key()), "unknown field");
}

inline double number_field(const json& v, const std::string& field) {
  if (!v.is_number()) throw RequestError(field, "must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) throw RequestError(field, "must be finite");
  return d;
}

inline std::uint64_t index_field(const json& v, const std::string& field) {
  if (v.is_number_unsigned()) return v.get<std::uint64_t>();
  if (v.is_number_integer()) {
    if (v.get<std::int64_t>() < 0) throw RequestError(field, "must be a non-negative integer");
    return static_cast<std::uint64_t>(v.get<std::int64_t>());
  }
  throw RequestError(field, "must be a non-negative integer");
}

inline json bbox_json(const StrokeBBox& b) { return {{"cx", b.cx}, {"cy", b.cy}, {"half_w", b.half_w}, {"half_h", b.half_h}}; }

inline json outline_json(const StrokeImage& img) {
  json out = json::array();
  for (const Polyline& line : trace_outline(img)) {
    json pts = json::array();
    for (const Point& p : line.points) pts.push_back({p.x, p.y});
    out.push_back(std::move(pts));
  }
  return out;
}

inline std::string incident_id() {
  static std::atomic<std::uint64_t> counter{0};
  const auto now = static_cast<std::uint64_t>(std::chrono::system_clock::now().time_since_epoch().count());
  return "inc-" + hex64(derive_seed(now, counter.fetch_add(1)));
}

}  // namespace detail

struct ServiceReply {
  int status = 200;
  std::string body;
  std::string content_type = "application/json";
};

class InferenceService {
 public:
  explicit InferenceService(Models m) : m_(std::move(m)) {
    if (m_.stages < 3) throw PipelineError("the service needs all three trained stages");
  }

  const Models& models() const { return m_; }
  std::size_t canvas() const { return m_.cfg.canvas_size; }

  json model_info() const {
    const GenConfig& g = m_.gen.config();
    return {{"api_version", kApiVersion},
            {"preset", m_.cfg.preset},
            {"config_hash", m_.cfg.hash()},
            {"num_labels", g.num_labels},
            {"labels", m_.header.labels},
            {"codes", g.codes},
            {"n_max", g.n_max},
            {"canvas_size", m_.cfg.canvas_size},
            {"line_width", m_.cfg.line_width},
            {"categories", m_.header.categories},
            {"class_conditional", g.num_classes > 0},
            {"condition_dim", g.label.model_dim}};
  }

  /// Validates a request body; `fallback_seed` is used when none is given.
  ServiceRequest parse(ServiceMode mode, const json& body, std::uint64_t fallback_seed) const {
    ServiceRequest r;
    r.mode = mode;
    std::set<std::string> keys{"condition", "sampling", "canvas_size"};
    if (mode == ServiceMode::Complete) keys.insert("prefix");
    if (mode == ServiceMode::Interpolate) keys.insert({"from", "to", "steps"});
    detail::only_keys(body, "", keys);
    r.canvas_size = static_cast<double>(canvas());
    if (body.contains("canvas_size")) {
      r.canvas_size = detail::number_field(body["canvas_size"], "canvas_size");
      if (r.canvas_size <= 0.0) throw RequestError("canvas_size", "must be positive");
    }
    r.sampling.seed = fallback_seed;
    if (body.contains("sampling")) parse_sampling(body["sampling"], r.sampling);
    r.condition_echo = nullptr;
    if (body.contains("condition")) parse_condition(body["condition"], r);
    if (mode == ServiceMode::Complete) {
      if (!body.contains("prefix")) throw RequestError("prefix", "required (may be an empty array)");
      const json& p = body["prefix"];
      if (!p.is_array()) throw RequestError("prefix", "must be an array of strokes");
      if (p.size() >= m_.gen.config().n_max)
        throw RequestError("prefix", std::to_string(p.size()) + " strokes leave no room under n_max " + std::to_string(m_.gen.config().n_max));
      for (std::size_t i = 0; i < p.size(); ++i) r.prefix.push_back(parse_stroke(p[i], "prefix[" + std::to_string(i) + "]"));
    }
    if (mode == ServiceMode::Interpolate) {
      for (const char* k : {"from", "to"})
        if (!body.contains(k)) throw RequestError(k, "required");
      r.from = parse_stroke(body["from"], "from");
      r.to = parse_stroke(body["to"], "to");
      if (body.contains("steps")) {
        r.steps = detail::index_field(body["steps"], "steps");
        if (r.steps < 2 || r.steps > kMaxInterpolationSteps)
          throw RequestError("steps", "must be in [2, " + std::to_string(kMaxInterpolationSteps) + "]");
      }
    }
    return r;
  }

  ServiceResponse run(const ServiceRequest& r) const {
    const auto t0 = std::chrono::steady_clock::now();
    ServiceResponse out;
    out.mode = r.mode;
    out.sampling = r.sampling;
    out.condition_echo = r.condition_echo;
    out.request_canvas = r.canvas_size;
    if (r.mode == ServiceMode::Interpolate) {
      interpolate(r, out);
    } else {
      sample(r, out);
    }
    out.composite = StrokeImage(canvas());
    for (const ServiceStroke& s : out.strokes)
      for (std::size_t i = 0; i < out.composite.pixels().size(); ++i)
        out.composite.pixels()[i] = std::max(out.composite.pixels()[i], s.raster.pixels()[i]);
    out.timing_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return out;
  }

  /// Rebuilds the composite from the 8-bit stroke rasters and compares bytes.
  void check_composite(const ServiceResponse& r) const {
    Gray8 acc{canvas(), std::vector<std::uint8_t>(canvas() * canvas(), 0)};
    for (const ServiceStroke& s : r.strokes) {
      if (s.raster.size() != canvas()) throw std::logic_error("stroke raster is not on the model canvas");
      const Gray8 g = to_gray8(s.raster);
      for (std::size_t i = 0; i < acc.px.size(); ++i) acc.px[i] = std::max(acc.px[i], g.px[i]);
    }
    if (!(acc == to_gray8(r.composite))) throw std::logic_error("strokes do not assemble into the composite");
  }

  json to_json(const ServiceResponse& r) const {
    json strokes = json::array();
    std::size_t committed = 0;
    for (std::size_t i = 0; i < r.strokes.size(); ++i) {
      const ServiceStroke& s = r.strokes[i];
      committed += s.committed;
      json js{{"index", i},
              {"committed", s.committed},
              {"label", s.label},
              {"label_name", m_.header.labels.at(s.label)},
              {"bbox", detail::bbox_json(s.bbox)},
              {"clipped", s.clipped},
              {"shape_code", s.shape_code ? json(*s.shape_code) : json(nullptr)},
              {"loc_code", s.loc_code ? json(*s.loc_code) : json(nullptr)},
              {"raster", png_base64(s.raster)},
              {"outline", detail::outline_json(s.raster)}};
      if (s.committed) {
        json pts = json::array();
        for (const Point& p : s.points) pts.push_back({p.x, p.y});
        js["points"] = std::move(pts);
      }
      strokes.push_back(std::move(js));
    }
    return {{"api_version", kApiVersion},
            {"mode", mode_name(r.mode)},
            {"seed", r.sampling.seed},
            {"sampling", {{"p_n", r.sampling.p_n}, {"temperature", r.sampling.temperature}, {"seed", r.sampling.seed}}},
            {"condition", r.condition_echo},
            {"canvas_size", canvas()},
            {"request_canvas_size", r.request_canvas},
            {"committed_count", committed},
            {"strokes", std::move(strokes)},
            {"composite", png_base64(r.composite)},
            {"timing_ms", r.timing_ms}};
  }

  /// Full request cycle for one endpoint; never throws.
  ServiceReply handle(ServiceMode mode, const std::string& body, std::uint64_t fallback_seed) const {
    ServiceRequest req;
    try {
      json j;
      try {
        j = json::parse(body);
      } catch (const json::parse_error& e) {
        throw RequestError("body", std::string("malformed JSON: ") + e.what());
      }
      req = parse(mode, j, fallback_seed);
    } catch (const RequestError& e) {
      return error_reply(e.status(), {{"code", "invalid_request"}, {"field", e.field()}, {"message", e.what()}});
    }
    try {
      const ServiceResponse r = run(req);
      check_composite(r);
      return {200, to_json(r).dump()};
    } catch (const std::exception& e) {
      const std::string id = detail::incident_id();
      std::fprintf(stderr, "incident %s: %s: %s\n", id.c_str(), mode_name(mode), e.what());
      return error_reply(500, {{"code", "inference_failed"}, {"incident", id}, {"message", e.what()}});
    }
  }

  static std::uint64_t server_seed() {
    thread_local std::mt19937_64 rng(std::random_device{}());
    return std::uniform_int_distribution<std::uint64_t>(0, kMaxServerSeed)(rng);
  }

  static ServiceReply error_reply(int status, json error) {
    error["status"] = status;
    return {status, json{{"api_version", kApiVersion}, {"error", std::move(error)}}.dump()};
  }

 private:
  void parse_sampling(const json& s, SamplingConfig& out) const {
    detail::only_keys(s, "sampling", {"p_n", "temperature", "seed"});
    if (s.contains("p_n")) {
      out.p_n = detail::number_field(s["p_n"], "sampling.p_n");
      if (!(out.p_n > 0.0 && out.p_n <= 1.0)) throw RequestError("sampling.p_n", "must be in (0, 1]");
    }
    if (s.contains("temperature")) {
      out.temperature = detail::number_field(s["temperature"], "sampling.temperature");
      if (!(out.temperature > 0.0)) throw RequestError("sampling.temperature", "must be positive");
    }
    if (s.contains("seed")) out.seed = detail::index_field(s["seed"], "sampling.seed");
  }

  void parse_condition(const json& c, ServiceRequest& r) const {
    detail::only_keys(c, "condition", {"class", "category", "vector"});
    if (c.size() != 1) throw RequestError("condition", "must hold exactly one of class, category, vector");
    const GenConfig& g = m_.gen.config();
    if (c.contains("vector")) {
      const json& v = c["vector"];
      if (!v.is_array() || v.size() != g.label.model_dim)
        throw RequestError("condition.vector", "must be an array of " + std::to_string(g.label.model_dim) + " numbers");
      std::vector<double> vec;
      for (std::size_t i = 0; i < v.size(); ++i) vec.push_back(detail::number_field(v[i], "condition.vector[" + std::to_string(i) + "]"));
      r.condition = Condition::vec(std::move(vec));
      r.condition_echo = {{"vector", v}};
      return;
    }
    if (g.num_classes == 0) throw RequestError(c.contains("class") ? "condition.class" : "condition.category", "model is not class-conditional");
    std::size_t k = 0;
    if (c.contains("class")) {
      k = detail::index_field(c["class"], "condition.class");
      if (k >= g.num_classes) throw RequestError("condition.class", "must be below " + std::to_string(g.num_classes));
    } else {
      if (!c["category"].is_string()) throw RequestError("condition.category", "must be a string");
      const auto& cats = m_.header.categories;
      const auto it = std::find(cats.begin(), cats.end(), c["category"].get<std::string>());
      if (it == cats.end()) throw RequestError("condition.category", "unknown category '" + c["category"].get<std::string>() + "'");
      k = static_cast<std::size_t>(it - cats.begin());
    }
    r.condition = Condition::cls(k);
    r.condition_echo = {{"class", k}, {"category", m_.header.categories.at(k)}};
  }

  StrokeInput parse_stroke(const json& s, const std::string& path) const {
    detail::only_keys(s, path, {"points", "label"});
    StrokeInput out;
    if (!s.contains("points")) throw RequestError(path + ".points", "required");
    if (!s.contains("label")) throw RequestError(path + ".label", "required");
    const json& pts = s["points"];
    if (!pts.is_array() || pts.empty()) throw RequestError(path + ".points", "must be a non-empty array of [x, y] pairs");
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const std::string f = path + ".points[" + std::to_string(i) + "]";
      if (!pts[i].is_array() || pts[i].size() != 2) throw RequestError(f, "must be an [x, y] pair");
      out.polyline.points.push_back({detail::number_field(pts[i][0], f + "[0]"), detail::number_field(pts[i][1], f + "[1]")});
    }
    const auto& labels = m_.header.labels;
    const json& l = s["label"];
    if (l.is_string()) {
      const auto it = std::find(labels.begin(), labels.end(), l.get<std::string>());
      if (it == labels.end()) throw RequestError(path + ".label", "unknown label '" + l.get<std::string>() + "'");
      out.label = static_cast<std::size_t>(it - labels.begin());
    } else {
      out.label = detail::index_field(l, path + ".label");
      if (out.label >= labels.size()) throw RequestError(path + ".label", "must be below " + std::to_string(labels.size()));
    }
    return out;
  }

  /// Request-frame polyline -> model-canvas raster, exactly as training data is rasterized.
  StrokeImage raster_of(const StrokeInput& s, double source_canvas) const {
    const double k = static_cast<double>(canvas()) / source_canvas;
    Polyline scaled = s.polyline;
    for (Point& p : scaled.points) p = {p.x * k, p.y * k};
    return rasterize_stroke(scaled, canvas(), m_.cfg.line_width);
  }

  std::vector<TokenizedStroke> tokenize_inputs(const std::vector<StrokeImage>& rasters, const std::vector<std::size_t>& labels) const {
    Sketch sk;
    for (std::size_t i = 0; i < rasters.size(); ++i) {
      auto [shape, bbox] = decouple_stroke(rasters[i]);
      sk.strokes.push_back({std::move(shape), bbox, {labels[i], m_.header.labels.size()}});
    }
    return tokenize_sketch(sk, m_.ae, m_.tok);
  }

  void sample(const ServiceRequest& r, ServiceResponse& out) const {
    std::vector<StrokeImage> rasters;
    std::vector<std::size_t> labels;
    for (const StrokeInput& s : r.prefix) {
      rasters.push_back(raster_of(s, r.canvas_size));
      labels.push_back(s.label);
    }
    std::vector<GenToken> prefix;
    if (!rasters.empty()) prefix = to_gen_tokens(tokenize_inputs(rasters, labels));
    const std::vector<GenToken> all = sample_tokens(m_.gen, r.condition, prefix, r.sampling);
    std::vector<TokenizedStroke> toks;
    for (const GenToken& t : all) toks.push_back({t.shape_idx, t.loc_idx, {t.label, m_.header.labels.size()}});
    const DecodedSketch d = detokenize(toks, m_.ae, m_.tok);
    for (std::size_t i = 0; i < all.size(); ++i) {
      ServiceStroke s;
      s.label = all[i].label;
      s.shape_code = all[i].shape_idx;
      s.loc_code = all[i].loc_idx;
      if (i < rasters.size()) {
        s.committed = true;
        s.raster = rasters[i];
        s.bbox = compute_bbox(rasters[i]);
        s.points = r.prefix[i].polyline.points;
      } else {
        const Placement p = recompose(d.sketch.strokes[i].shape, d.sketch.strokes[i].bbox);
        s.raster = p.image;
        s.bbox = d.sketch.strokes[i].bbox;
        s.clipped = d.clipped[i] || p.clipped;
      }
      out.strokes.push_back(std::move(s));
    }
  }

  void interpolate(const ServiceRequest& r, ServiceResponse& out) const {
    const StrokeImage ra = raster_of(r.from, r.canvas_size), rb = raster_of(r.to, r.canvas_size);
    const auto ta = tokenize_inputs({ra}, {r.from.label}), tb = tokenize_inputs({rb}, {r.to.label});
    const StrokeBBox ba = compute_bbox(ra), bb = compute_bbox(rb);
    const std::vector<CodeIndex> codes = interpolate_codes(ta[0].shape_idx, tb[0].shape_idx, r.steps, m_.tok.shape_book());
    for (std::size_t t = 0; t < codes.size(); ++t) {
      const double w = static_cast<double>(t) / static_cast<double>(codes.size() - 1);
      const StrokeBBox box{(1 - w) * ba.half_w + w * bb.half_w, (1 - w) * ba.half_h + w * bb.half_h, (1 - w) * ba.cx + w * bb.cx,
                           (1 - w) * ba.cy + w * bb.cy};
      const Placement p = recompose(m_.ae.decode(m_.tok.decode_shape({codes[t]})[0]).first, box);
      ServiceStroke s;
      s.raster = p.image;
      s.bbox = box;
      s.label = t + 1 == codes.size() ? r.to.label : r.from.label;
      s.clipped = p.clipped;
      s.shape_code = codes[t];
      out.strokes.push_back(std::move(s));
    }
  }

  Models m_;
};

}  // namespace vqsgen
