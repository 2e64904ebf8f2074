#pragma once

// Pipeline configuration as a plain-text "key=value" file.
//
// `preset` (tiny | paper) is applied first and resolves every architecture
// and schedule field; any other key then overrides the preset value. Blank
// lines and lines starting with '#' are ignored.

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vqsgen/core/checkpoint.hpp"
#include "vqsgen/core/optim.hpp"
#include "vqsgen/model/autoencoder.hpp"
#include "vqsgen/model/generator.hpp"
#include "vqsgen/model/vq.hpp"
#include "vqsgen/sketch/augment.hpp"

namespace vqsgen {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StageSchedule {
  double lr = 1e-4;
  std::size_t lr_step = 10;
  double lr_decay = 0.5;  // 1 disables decay
  std::size_t batch = 8;
  std::size_t epochs = 100;
  std::size_t patience = 0;  // 0 disables early stopping

  LrSchedule schedule() const {
    return lr_decay == 1.0 ? LrSchedule{LrSchedule::Kind::Constant, lr, 1, 1.0} : LrSchedule{LrSchedule::Kind::StepDecay, lr, lr_step, lr_decay};
  }
};

struct PipelineConfig {
  std::string preset = "tiny";
  std::string dataset;
  std::string artifacts = "artifacts";

  // Data
  std::size_t canvas_size = 64;
  std::size_t line_width = 2;
  std::size_t n_max = 20;
  std::string overlong = "truncate";  // truncate | skip
  double merge_eps = 2.0;
  std::size_t num_labels = 0;  // 0 takes the dataset header's label count
  bool class_conditional = false;

  // Stage 1
  std::vector<std::size_t> ae_blocks = {16, 32, 64, 128};
  std::vector<std::size_t> ae_reps = {1, 1, 2, 1};
  std::size_t d_e = 64;
  double lambda_d = 1.0;
  StageSchedule ae{2e-3, 150, 0.5, 4, 300, 0};

  // Stage 2
  std::vector<std::size_t> vq_dims = {64, 64, 32};
  std::vector<std::size_t> vq_reps = {2, 1, 1};
  std::size_t codes = 64;
  double alpha = 0.8;
  StageSchedule vq{2e-3, 100, 0.5, 8, 300, 0};

  // Stage 3
  std::size_t gen_dim = 128;
  std::size_t gen_layers = 2;
  std::size_t gen_heads = 4;
  std::size_t gen_ffn = 4;
  double tf_min = 0.5;
  StageSchedule gen{1e-3, 1, 1.0, 4, 100, 0};

  AugmentPolicy augment;
  std::uint64_t seed = 0;

  static PipelineConfig tiny() { return {}; }

  static PipelineConfig paper() {
    PipelineConfig c;
    c.preset = "paper";
    c.canvas_size = 256;
    c.line_width = 3;
    c.ae_blocks = {64, 128, 256, 512};
    c.ae_reps = {1, 1, 2, 1};
    c.d_e = 256;
    c.ae = {1e-4, 10, 0.5, 8, 100, 0};
    c.vq_dims = {256, 256, 512};
    c.vq_reps = {3, 3, 2};
    c.codes = 8192;
    c.vq = {1e-4, 10, 0.5, 64, 100, 0};
    c.gen_dim = 512;
    c.gen_layers = 8;
    c.gen_heads = 8;
    c.gen = {1e-5, 1, 1.0, 8, 100, 0};
    c.augment = {0.3, 15.0, 0.05, 0.1, 10.0, 0.1, 1, 8};
    return c;
  }

  static PipelineConfig from_preset(const std::string& name) {
    if (name == "tiny") return tiny();
    if (name == "paper") return paper();
    throw ConfigError("unknown preset '" + name + "' (expected tiny or paper)");
  }

  AEConfig ae_config() const { return AEConfig{canvas_size, ae_blocks, ae_reps, d_e, lambda_d}; }

  VQConfig vq_config() const {
    VQConfig v;
    v.coder = {vq_dims, vq_reps};
    v.codes = codes;
    v.alpha = alpha;
    v.n_max = n_max;
    return v;
  }

  /// Needs the resolved label count and the dataset's category count.
  GenConfig gen_config(std::size_t num_categories) const {
    GenConfig g;
    g.label = g.code = {gen_dim, gen_layers, gen_heads, gen_ffn};
    g.num_labels = num_labels;
    g.codes = codes;
    g.code_dim = vq_dims.empty() ? 0 : vq_dims.back();
    g.n_max = n_max;
    g.num_classes = class_conditional ? num_categories : 0;
    return g;
  }

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;
  std::string hash() const;
  void set(const std::string& key, const std::string& value);

  static PipelineConfig parse(const std::string& text);
  static PipelineConfig load(const std::string& path);
  void save(const std::string& path) const;
};

namespace detail {

inline std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string fmt(std::size_t v) { return std::to_string(v); }

inline std::string fmt(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline double parse_real(const std::string& key, const std::string& s) {
  double v = 0.0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError("config key '" + key + "': '" + s + "' is not a number");
  return v;
}

inline std::size_t parse_count(const std::string& key, const std::string& s) {
  std::size_t v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError("config key '" + key + "': '" + s + "' is not a non-negative integer");
  return v;
}

inline std::vector<std::size_t> parse_list(const std::string& key, const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  for (std::string item; std::getline(ss, item, ',');) out.push_back(parse_count(key, item));
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
  if (s == "1" || s == "true") return true;
  if (s == "0" || s == "false") return false;
  throw ConfigError("config key '" + key + "': '" + s + "' is not a boolean");
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

struct ConfigField {
  std::string key;
  bool hashed;  // paths are echoed but excluded from the hash
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

inline const std::vector<ConfigField>& config_fields() {
  using C = PipelineConfig;
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    auto str = [&f](const std::string& k, bool hashed, std::string C::*m) {
      f.push_back({k, hashed, [m](const C& c) { return c.*m; }, [m](C& c, const std::string& v) { c.*m = v; }});
    };
    auto count = [&f](const std::string& k, auto get) {
      f.push_back({k, true, [get](const C& c) { return fmt(static_cast<std::size_t>(get(const_cast<C&>(c)))); },
                   [get, k](C& c, const std::string& v) { get(c) = parse_count(k, v); }});
    };
    auto real = [&f](const std::string& k, auto get) {
      f.push_back({k, true, [get](const C& c) { return fmt(static_cast<double>(get(const_cast<C&>(c)))); },
                   [get, k](C& c, const std::string& v) { get(c) = parse_real(k, v); }});
    };
    auto list = [&f](const std::string& k, std::vector<std::size_t> C::*m) {
      f.push_back({k, true, [m](const C& c) { return fmt(c.*m); }, [m, k](C& c, const std::string& v) { c.*m = parse_list(k, v); }});
    };
    auto stage = [&](const std::string& p, StageSchedule C::*m) {
      real(p + "_lr", [m](C& c) -> double& { return (c.*m).lr; });
      count(p + "_lr_step", [m](C& c) -> std::size_t& { return (c.*m).lr_step; });
      real(p + "_lr_decay", [m](C& c) -> double& { return (c.*m).lr_decay; });
      count(p + "_batch", [m](C& c) -> std::size_t& { return (c.*m).batch; });
      count(p + "_epochs", [m](C& c) -> std::size_t& { return (c.*m).epochs; });
      count(p + "_patience", [m](C& c) -> std::size_t& { return (c.*m).patience; });
    };
    str("preset", true, &C::preset);
    str("dataset", false, &C::dataset);
    str("artifacts", false, &C::artifacts);
    count("canvas_size", [](C& c) -> std::size_t& { return c.canvas_size; });
    count("line_width", [](C& c) -> std::size_t& { return c.line_width; });
    count("n_max", [](C& c) -> std::size_t& { return c.n_max; });
    str("overlong", true, &C::overlong);
    real("merge_eps", [](C& c) -> double& { return c.merge_eps; });
    count("num_labels", [](C& c) -> std::size_t& { return c.num_labels; });
    f.push_back({"class_conditional", true, [](const C& c) { return std::string(c.class_conditional ? "1" : "0"); },
                 [](C& c, const std::string& v) { c.class_conditional = parse_bool("class_conditional", v); }});
    list("ae_blocks", &C::ae_blocks);
    list("ae_reps", &C::ae_reps);
    count("d_e", [](C& c) -> std::size_t& { return c.d_e; });
    real("lambda_d", [](C& c) -> double& { return c.lambda_d; });
    stage("ae", &C::ae);
    list("vq_dims", &C::vq_dims);
    list("vq_reps", &C::vq_reps);
    count("codes", [](C& c) -> std::size_t& { return c.codes; });
    real("alpha", [](C& c) -> double& { return c.alpha; });
    stage("vq", &C::vq);
    count("gen_dim", [](C& c) -> std::size_t& { return c.gen_dim; });
    count("gen_layers", [](C& c) -> std::size_t& { return c.gen_layers; });
    count("gen_heads", [](C& c) -> std::size_t& { return c.gen_heads; });
    count("gen_ffn", [](C& c) -> std::size_t& { return c.gen_ffn; });
    real("tf_min", [](C& c) -> double& { return c.tf_min; });
    stage("gen", &C::gen);
    real("aug_stroke_prob", [](C& c) -> double& { return c.augment.stroke_prob; });
    real("aug_stroke_rotate", [](C& c) -> double& { return c.augment.stroke_rotate_deg; });
    real("aug_stroke_translate", [](C& c) -> double& { return c.augment.stroke_translate; });
    real("aug_stroke_scale", [](C& c) -> double& { return c.augment.stroke_scale; });
    real("aug_sketch_rotate", [](C& c) -> double& { return c.augment.sketch_rotate_deg; });
    real("aug_removal", [](C& c) -> double& { return c.augment.removal_prob; });
    count("aug_min_keep", [](C& c) -> std::size_t& { return c.augment.min_keep; });
    count("seed", [](C& c) -> std::uint64_t& { return c.seed; });
    return f;
  }();
  return fields;
}

}  // namespace detail

inline void PipelineConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields())
    if (f.key == key) {
      if (key == "preset") {
        PipelineConfig p = from_preset(value);
        p.dataset = dataset;
        p.artifacts = artifacts;
        *this = std::move(p);
      } else {
        f.set(*this, value);
      }
      return;
    }
  throw ConfigError("unknown config key '" + key + "'");
}

inline void PipelineConfig::validate() const {
  auto positive = [](const std::string& k, double v) {
    if (!(v > 0.0)) throw ConfigError("config key '" + k + "' must be positive");
  };
  positive("canvas_size", static_cast<double>(canvas_size));
  positive("line_width", static_cast<double>(line_width));
  positive("n_max", static_cast<double>(n_max));
  positive("d_e", static_cast<double>(d_e));
  positive("codes", static_cast<double>(codes));
  positive("alpha", alpha);
  if (overlong != "truncate" && overlong != "skip") throw ConfigError("config key 'overlong' must be truncate or skip");
  if (lambda_d < 0.0) throw ConfigError("config key 'lambda_d' must be non-negative");
  if (!(tf_min >= 0.0 && tf_min <= 1.0)) throw ConfigError("config key 'tf_min' must be in [0, 1]");
  for (const auto& [name, s] : {std::pair{"ae", ae}, std::pair{"vq", vq}, std::pair{"gen", gen}}) {
    positive(std::string(name) + "_lr", s.lr);
    positive(std::string(name) + "_lr_step", static_cast<double>(s.lr_step));
    positive(std::string(name) + "_lr_decay", s.lr_decay);
    positive(std::string(name) + "_batch", static_cast<double>(s.batch));
    positive(std::string(name) + "_epochs", static_cast<double>(s.epochs));
  }
  try {
    ae_config().validate();
    vq_config().validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (gen_dim % 2 != 0 || gen_heads == 0 || gen_dim % gen_heads != 0 || gen_layers == 0 || gen_ffn == 0)
    throw ConfigError("config: gen_dim must be even and divisible by gen_heads; gen_layers and gen_ffn positive");
}

inline std::map<std::string, std::string> PipelineConfig::to_map() const {
  std::map<std::string, std::string> m;
  for (const auto& f : detail::config_fields()) m[f.key] = f.get(*this);
  return m;
}

/// Every key in registry order, preset first so that re-parsing is exact.
inline std::string PipelineConfig::to_text() const {
  std::string out;
  for (const auto& f : detail::config_fields()) out += f.key + "=" + f.get(*this) + "\n";
  return out;
}

/// FNV-1a over the canonical text of every hashed key.
inline std::string PipelineConfig::hash() const {
  std::string canon;
  for (const auto& f : detail::config_fields())
    if (f.hashed) canon += f.key + "=" + f.get(*this) + "\n";
  return hex64(fnv1a(canon.data(), canon.size()));
}

inline PipelineConfig PipelineConfig::parse(const std::string& text) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream in(text);
  std::size_t lineno = 0;
  for (std::string line; std::getline(in, line);) {
    ++lineno;
    const std::string t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    kv.emplace_back(detail::trim(t.substr(0, eq)), detail::trim(t.substr(eq + 1)));
  }
  PipelineConfig c;
  for (const auto& [k, v] : kv)
    if (k == "preset") c = from_preset(v);
  for (const auto& [k, v] : kv)
    if (k != "preset") c.set(k, v);
  c.validate();
  return c;
}

inline PipelineConfig PipelineConfig::load(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse(ss.str());
}

inline void PipelineConfig::save(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot write config '" + path + "'");
  f << to_text();
}

}  // namespace vqsgen
