#include "hop/config.hpp"

#include <set>

#include "hop/binary_io.hpp"

namespace hop {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

/// Reads fields of one JSON object and rejects any key it never asked for.
class Fields {
 public:
  Fields(const json& obj, std::string where) : obj_(obj), where_(std::move(where)) {
    require(obj_.is_object(), ErrorKind::kConfig,
            (where_.empty() ? std::string("config") : where_) + " must be a JSON object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      fail(ErrorKind::kConfig, "bad value type for key '" + path(key) + "'");
    }
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = obj_.find(key);
    return it == obj_.end() ? nullptr : &*it;
  }

  bool has(const std::string& key) const { return obj_.contains(key); }

  std::string path(const std::string& key) const {
    return where_.empty() ? key : where_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, value] : obj_.items())
      require(seen_.contains(key), ErrorKind::kConfig, "unknown key '" + path(key) + "'");
  }

 private:
  const json& obj_;
  std::string where_;
  std::set<std::string> seen_;
};

std::string join(const std::string& where, const std::string& key) {
  return where.empty() ? key : where + "." + key;
}

}  // namespace

SynthSpec parse_synth_spec(const json& doc, const std::string& where) {
  SynthSpec s;
  Fields f(doc, where);
  f.get("problems", s.problems);
  f.get("classes", s.classes);
  f.get("channels", s.channels);
  f.get("train_per_class", s.train_per_class);
  f.get("val_per_class", s.val_per_class);
  f.get("test_per_class", s.test_per_class);
  f.get("min_length", s.min_length);
  f.get("max_length", s.max_length);
  f.get("seed", s.seed);
  f.get("sequence_offset", s.sequence_offset);
  f.get("cls_token", s.cls_token);
  if (const json* preset = f.child("preset")) {
    Fields p(*preset, join(where, "preset"));
    p.get("scale_ratio", s.preset_scale_ratio);
    p.get("skew", s.preset_skew);
    p.finish();
  }
  if (const json* dists = f.child("distributions")) {
    const std::string dw = join(where, "distributions");
    require(dists->is_array(), ErrorKind::kConfig, dw + " must be an array of arrays");
    for (std::size_t t = 0; t < dists->size(); ++t) {
      const json& per_problem = (*dists)[t];
      require(per_problem.is_array(), ErrorKind::kConfig,
              dw + "[" + std::to_string(t) + "] must be an array");
      std::vector<ClassDistribution> classes;
      for (std::size_t c = 0; c < per_problem.size(); ++c) {
        ClassDistribution d;
        Fields cf(per_problem[c], dw + "[" + std::to_string(t) + "][" + std::to_string(c) + "]");
        cf.get("mean", d.mean);
        cf.get("scale", d.scale);
        cf.get("skew", d.skew);
        cf.finish();
        classes.push_back(d);
      }
      s.distributions.push_back(std::move(classes));
    }
  }
  f.finish();
  s.validate();
  return s;
}

SynthSpec load_synth_spec(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kConfig, path.string() + ": invalid JSON: " + e.what());
  }
  return parse_synth_spec(doc);
}

void RunConfig::validate() const {
  require(!seeds.empty(), ErrorKind::kConfig, "seeds must list at least one seed");
  model.validate();
  train.validate();
  require(data.synthetic.has_value() != !data.problems.empty(), ErrorKind::kConfig,
          "data must define exactly one of 'synthetic' or 'problems'");
  if (data.synthetic) {
    require(data.synthetic->channels == model.backbone.channels, ErrorKind::kConfig,
            "backbone.channels must equal data.synthetic.channels");
    require(data.synthetic->max_length <= model.backbone.max_len, ErrorKind::kConfig,
            "data.synthetic.max_length exceeds backbone.max_len");
  }
  require(diagnostics.moment_distance_order >= 0 &&
              diagnostics.moment_distance_order <= kMaxMomentOrder,
          ErrorKind::kConfig, "diagnostics.moment_distance_order must be in [0, 5]");
}

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  Fields f(doc, "");
  std::string output_dir;
  f.get("output_dir", output_dir);
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  f.get("seeds", cfg.seeds);
  f.get("permute_order", cfg.permute_order);

  std::string mode(to_string(cfg.model.mode));
  f.get("mode", mode);
  cfg.model.mode = parse_routing_mode(mode);
  std::string baseline(to_string(cfg.model.baseline));
  f.get("baseline", baseline);
  cfg.model.baseline = parse_baseline(baseline);

  if (const json* p = f.child("pooling")) {
    Fields pf(*p, "pooling");
    std::string kind(to_string(cfg.model.pooling.kind));
    pf.get("kind", kind);
    cfg.model.pooling.kind = parse_pooling_kind(kind);
    pf.get("order", cfg.model.pooling.order);
    pf.finish();
  }

  bool channels_given = false;
  if (const json* b = f.child("backbone")) {
    Fields bf(*b, "backbone");
    std::string kind(to_string(cfg.model.backbone.kind));
    bf.get("kind", kind);
    cfg.model.backbone.kind = parse_backbone_kind(kind);
    channels_given = bf.has("channels");
    bf.get("channels", cfg.model.backbone.channels);
    bf.get("max_len", cfg.model.backbone.max_len);
    bf.get("seed", cfg.model.backbone.seed);
    bf.finish();
  }

  if (const json* a = f.child("adapter")) {
    Fields af(*a, "adapter");
    af.get("bottleneck", cfg.model.bottleneck);
    af.finish();
  }

  if (const json* t = f.child("train")) {
    Fields tf(*t, "train");
    tf.get("lr", cfg.train.lr);
    tf.get("batch_size", cfg.train.batch_size);
    tf.get("max_epochs", cfg.train.max_epochs);
    tf.get("patience", cfg.train.patience);
    tf.get("dropout", cfg.train.dropout);
    tf.get("beta1", cfg.train.beta1);
    tf.get("beta2", cfg.train.beta2);
    tf.get("eps", cfg.train.eps);
    tf.get("seed", cfg.train.seed);
    tf.finish();
  }

  if (const json* d = f.child("data")) {
    Fields df(*d, "data");
    if (const json* s = df.child("synthetic")) cfg.data.synthetic = parse_synth_spec(*s, "data.synthetic");
    if (const json* ps = df.child("problems")) {
      require(ps->is_array(), ErrorKind::kConfig, "data.problems must be an array");
      for (std::size_t i = 0; i < ps->size(); ++i) {
        Fields pf((*ps)[i], "data.problems[" + std::to_string(i) + "]");
        ProblemSource src;
        std::string path, format = "hopd";
        pf.get("name", src.name);
        pf.get("path", path);
        pf.get("format", format);
        pf.get("classes", src.classes);
        pf.finish();
        require(!path.empty(), ErrorKind::kConfig,
                "data.problems[" + std::to_string(i) + "].path is required");
        src.path = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path)
                                                             : base_dir / path;
        if (format == "hopd")
          src.format = ProblemFormat::kHopd;
        else if (format == "text")
          src.format = ProblemFormat::kText;
        else
          fail(ErrorKind::kConfig, "data.problems[" + std::to_string(i) +
                                       "].format must be 'hopd' or 'text'");
        cfg.data.problems.push_back(std::move(src));
      }
    }
    df.finish();
  }

  if (const json* g = f.child("diagnostics")) {
    Fields gf(*g, "diagnostics");
    gf.get("moment_distance_order", cfg.diagnostics.moment_distance_order);
    gf.finish();
  }
  f.finish();

  if (cfg.data.synthetic && !channels_given)
    cfg.model.backbone.channels = cfg.data.synthetic->channels;
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  json doc;
  try {
    doc = json::parse(io::read_file(path));
  } catch (const json::parse_error& e) {
    fail(ErrorKind::kConfig, path.string() + ": invalid JSON: " + e.what());
  }
  return parse_run_config(doc, path.parent_path());
}

ordered_json to_json(const SynthSpec& s) {
  ordered_json j = {{"problems", s.problems},
                    {"classes", s.classes},
                    {"channels", s.channels},
                    {"train_per_class", s.train_per_class},
                    {"val_per_class", s.val_per_class},
                    {"test_per_class", s.test_per_class},
                    {"min_length", s.min_length},
                    {"max_length", s.max_length},
                    {"seed", s.seed},
                    {"sequence_offset", s.sequence_offset},
                    {"cls_token", s.cls_token},
                    {"preset", {{"scale_ratio", s.preset_scale_ratio}, {"skew", s.preset_skew}}}};
  if (!s.distributions.empty()) {
    ordered_json d = ordered_json::array();
    for (const auto& p : s.distributions) {
      ordered_json row = ordered_json::array();
      for (const auto& c : p)
        row.push_back({{"mean", c.mean}, {"scale", c.scale}, {"skew", c.skew}});
      d.push_back(row);
    }
    j["distributions"] = d;
  }
  return j;
}

ordered_json to_json(const RunConfig& c) {
  ordered_json data;
  if (c.data.synthetic) {
    data["synthetic"] = to_json(*c.data.synthetic);
  } else {
    ordered_json ps = ordered_json::array();
    for (const auto& p : c.data.problems)
      ps.push_back({{"name", p.name},
                    {"path", p.path.string()},
                    {"format", p.format == ProblemFormat::kHopd ? "hopd" : "text"},
                    {"classes", p.classes}});
    data["problems"] = ps;
  }
  return {{"output_dir", c.output_dir.string()},
          {"seeds", c.seeds},
          {"permute_order", c.permute_order},
          {"mode", to_string(c.model.mode)},
          {"baseline", to_string(c.model.baseline)},
          {"pooling", {{"kind", to_string(c.model.pooling.kind)}, {"order", c.model.pooling.order}}},
          {"backbone",
           {{"kind", to_string(c.model.backbone.kind)},
            {"channels", c.model.backbone.channels},
            {"max_len", c.model.backbone.max_len},
            {"seed", c.model.backbone.seed}}},
          {"adapter", {{"bottleneck", c.model.bottleneck}}},
          {"train",
           {{"lr", c.train.lr},
            {"batch_size", c.train.batch_size},
            {"max_epochs", c.train.max_epochs},
            {"patience", c.train.patience},
            {"dropout", c.train.dropout},
            {"beta1", c.train.beta1},
            {"beta2", c.train.beta2},
            {"eps", c.train.eps},
            {"seed", c.train.seed}}},
          {"data", data},
          {"diagnostics", {{"moment_distance_order", c.diagnostics.moment_distance_order}}}};
}

}  // namespace hop
