#include "hop/model.hpp"

#include <json.hpp>

#include "hop/binary_io.hpp"

namespace hop {

using nlohmann::json;

std::string_view to_string(BackboneKind kind) {
  return kind == BackboneKind::kFile ? "file" : "hashing";
}
std::string_view to_string(RoutingMode mode) { return mode == RoutingMode::kTil ? "til" : "dil"; }
std::string_view to_string(Baseline baseline) {
  switch (baseline) {
    case Baseline::kHop: return "hop";
    case Baseline::kFt: return "ft";
    case Baseline::kSdl: return "sdl";
  }
  return "unknown";
}

BackboneKind parse_backbone_kind(std::string_view name) {
  if (name == "file") return BackboneKind::kFile;
  if (name == "hashing") return BackboneKind::kHashing;
  fail(ErrorKind::kConfig, "unknown backbone kind '" + std::string(name) + "'");
}
RoutingMode parse_routing_mode(std::string_view name) {
  if (name == "til") return RoutingMode::kTil;
  if (name == "dil") return RoutingMode::kDil;
  fail(ErrorKind::kConfig, "unknown mode '" + std::string(name) + "' (expected til or dil)");
}
Baseline parse_baseline(std::string_view name) {
  if (name == "hop") return Baseline::kHop;
  if (name == "ft") return Baseline::kFt;
  if (name == "sdl") return Baseline::kSdl;
  fail(ErrorKind::kConfig, "unknown baseline '" + std::string(name) + "'");
}

std::uint64_t BackboneSpec::checksum() const {
  io::Writer w;
  w.u32(static_cast<std::uint32_t>(kind));
  w.u64(channels);
  w.u64(max_len);
  w.u64(seed);
  return fnv1a64(w.buffer(), 0);
}

void ModelConfig::validate() const {
  require(backbone.channels >= 1, ErrorKind::kConfig, "backbone channels (Q) must be >= 1");
  require(backbone.max_len >= 1, ErrorKind::kConfig, "backbone max_len must be >= 1");
  require(bottleneck >= 1, ErrorKind::kConfig, "adapter bottleneck must be >= 1");
  pooling.validate();
}

std::size_t parameters_per_problem(std::size_t channels, std::size_t bottleneck,
                                   std::size_t feature_width, std::size_t classes) {
  const std::size_t q = channels, a = bottleneck, w = feature_width, n = classes;
  return q * a + a + a * q + q + w * w + w + w * n + n;
}

std::vector<Matrix*> TrainableSet::tensors() const {
  std::vector<Matrix*> out;
  if (adapter)
    for (auto* t : adapter->tensors()) out.push_back(t);
  if (head)
    for (auto* t : head->tensors()) out.push_back(t);
  return out;
}

std::size_t TrainableSet::parameter_count() const {
  return (adapter ? adapter->parameter_count() : 0) + (head ? head->parameter_count() : 0);
}

Model::Model(ModelConfig config) : config_(std::move(config)) { config_.validate(); }

std::int64_t Model::adapter_slot(std::size_t problem) const {
  const bool own = config_.mode == RoutingMode::kTil && config_.baseline != Baseline::kFt;
  return own ? static_cast<std::int64_t>(problem) : kShared;
}

std::int64_t Model::head_slot(std::size_t problem) const {
  return config_.mode == RoutingMode::kTil ? static_cast<std::int64_t>(problem) : kShared;
}

bool Model::knows(std::size_t problem) const { return classes_.contains(problem); }

std::size_t Model::classes(std::size_t problem) const {
  auto it = classes_.find(problem);
  require(it != classes_.end(), ErrorKind::kRouting,
          "unknown problem id " + std::to_string(problem));
  return it->second;
}

void Model::init_problem(std::size_t problem, std::size_t classes, Rng& rng) {
  require(!knows(problem), ErrorKind::kState,
          "problem " + std::to_string(problem) + " is already initialized");
  require(classes >= 1, ErrorKind::kConfig, "class count must be >= 1");
  if (config_.mode == RoutingMode::kDil && !order_.empty())
    require(classes == classes_.at(order_.front()), ErrorKind::kConfig,
            "DIL requires every problem to share N_C");

  const std::size_t q = config_.backbone.channels;
  const bool fresh_each_problem = config_.baseline == Baseline::kSdl;

  const std::int64_t aslot = adapter_slot(problem);
  if (aslot != kShared && config_.baseline == Baseline::kHop && !order_.empty()) {
    // Carry the most recent problem's trained adapter forward.
    adapters_[aslot] = adapters_.at(adapter_slot(order_.back()));
  } else if (!adapters_.contains(aslot) || fresh_each_problem) {
    adapters_[aslot] = AdapterParams<float>::initial(q, config_.bottleneck, rng);
  }

  const std::int64_t hslot = head_slot(problem);
  if (!heads_.contains(hslot) || hslot != kShared || fresh_each_problem)
    heads_[hslot] = HeadParams<float>::initial(config_.feature_width(), classes, rng);

  classes_[problem] = classes;
  order_.push_back(problem);
}

std::size_t Model::route(std::optional<std::size_t> problem, const char* what) const {
  require(!order_.empty(), ErrorKind::kState, std::string(what) + ": model has no problems yet");
  if (config_.mode == RoutingMode::kDil) return order_.back();
  require(problem.has_value(), ErrorKind::kRouting,
          std::string(what) + ": TIL needs a problem identifier");
  require(knows(*problem), ErrorKind::kRouting,
          std::string(what) + ": unknown problem id " + std::to_string(*problem));
  return *problem;
}

const AdapterParams<float>& Model::adapter(std::optional<std::size_t> problem) const {
  return adapters_.at(adapter_slot(route(problem, "adapter")));
}

const HeadParams<float>& Model::head(std::optional<std::size_t> problem) const {
  return heads_.at(head_slot(route(problem, "head")));
}

Pipeline<float> Model::pipeline(std::optional<std::size_t> problem) const {
  return {&adapter(problem), &head(problem), config_.pooling, 0.0};
}

TrainableSet Model::trainable(std::size_t problem) {
  const std::size_t p = route(problem, "trainable");
  return {&adapters_.at(adapter_slot(p)), &heads_.at(head_slot(p))};
}

std::size_t Model::parameter_count(std::size_t problem) const {
  return adapter(problem).parameter_count() + head(problem).parameter_count();
}

Matrix Model::forward(std::span<const EmbeddedSequence> batch, std::optional<std::size_t> problem,
                      bool training, Rng& rng, double dropout_rate) const {
  const Pipeline<float> pipe = pipeline(problem);
  const TokenBatch<float> tb = make_batch(batch, config_.backbone.channels);
  const Matrix adapted = adapter_forward(*pipe.adapter, tb.tokens);
  const Matrix pooled = pool_batch(adapted, tb.layout, pipe.pooling);
  const auto dropped = dropout(pooled, dropout_rate, rng, training);
  return head_forward(*pipe.head, dropped.out);
}

std::size_t Model::predict(const EmbeddedSequence& sample,
                           std::optional<std::size_t> problem) const {
  Rng unused(0);
  const Matrix logits =
      forward(std::span<const EmbeddedSequence>(&sample, 1), problem, false, unused);
  return argmax(logits.row(0));
}

namespace {

template <typename Range>
TokenBatch<float> stack(const Range& samples, std::size_t channels) {
  TokenBatch<float> b;
  b.layout.offsets.push_back(0);
  std::size_t total = 0;
  for (const EmbeddedSequence& s : samples) {
    require(s.channels() == channels, ErrorKind::kShape,
            "sample has Q = " + std::to_string(s.channels()) + ", model expects " +
                std::to_string(channels));
    require(s.length() >= 1, ErrorKind::kEmptySequence, "sample has no tokens");
    total += s.length();
    b.layout.offsets.push_back(total);
    b.labels.push_back(s.label);
  }
  b.tokens = Matrix(total, channels);
  std::size_t row = 0;
  for (const EmbeddedSequence& s : samples) {
    std::copy(s.tokens.values().begin(), s.tokens.values().end(),
              b.tokens.data() + row * channels);
    row += s.length();
  }
  return b;
}

struct Deref {
  std::span<const EmbeddedSequence* const> items;
  struct It {
    const EmbeddedSequence* const* p;
    const EmbeddedSequence& operator*() const { return **p; }
    It& operator++() {
      ++p;
      return *this;
    }
    bool operator!=(const It& o) const { return p != o.p; }
  };
  It begin() const { return {items.data()}; }
  It end() const { return {items.data() + items.size()}; }
};

// ----------------------------------------------------------- checkpoints

constexpr std::string_view kModelMagic = "HOPM";
constexpr std::uint32_t kModelVersion = 1;

void put_tensor(io::Writer& w, const Matrix& m) {
  w.u32(static_cast<std::uint32_t>(m.rows()));
  w.u32(static_cast<std::uint32_t>(m.cols()));
  for (float v : m.values()) w.f32(v);
}

Matrix get_tensor(io::Reader& r) {
  const std::uint32_t rows = r.u32(), cols = r.u32();
  r.need(std::size_t{rows} * cols * sizeof(float));
  Matrix m(rows, cols);
  for (float& v : m.values()) v = r.f32();
  return m;
}

json shape_of(const Matrix& m) { return json::array({m.rows(), m.cols()}); }

}  // namespace

TokenBatch<float> make_batch(std::span<const EmbeddedSequence> samples,
                             std::size_t expected_channels) {
  return stack(samples, expected_channels);
}

TokenBatch<float> make_batch(std::span<const EmbeddedSequence* const> samples,
                             std::size_t expected_channels) {
  return stack(Deref{samples}, expected_channels);
}

void Model::save(const std::filesystem::path& path, std::uint64_t seed) const {
  io::Writer w;
  w.bytes(kModelMagic);
  w.u32(kModelVersion);
  w.u32(static_cast<std::uint32_t>(config_.backbone.kind));
  w.u32(static_cast<std::uint32_t>(config_.backbone.channels));
  w.u32(static_cast<std::uint32_t>(config_.backbone.max_len));
  w.u64(config_.backbone.seed);
  w.u32(static_cast<std::uint32_t>(config_.pooling.kind));
  w.u32(static_cast<std::uint32_t>(config_.pooling.order));
  w.u32(static_cast<std::uint32_t>(config_.mode));
  w.u32(static_cast<std::uint32_t>(config_.baseline));
  w.u32(static_cast<std::uint32_t>(config_.bottleneck));
  w.u32(static_cast<std::uint32_t>(order_.size()));
  for (std::size_t p : order_) {
    w.u64(p);
    w.u32(static_cast<std::uint32_t>(classes_.at(p)));
  }
  json tensors = json::array();
  w.u32(static_cast<std::uint32_t>(adapters_.size()));
  for (const auto& [slot, a] : adapters_) {
    w.i64(slot);
    const char* names[] = {"w_down", "b_down", "w_up", "b_up"};
    auto ts = a.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) {
      put_tensor(w, *ts[i]);
      tensors.push_back({{"name", "adapter[" + std::to_string(slot) + "]." + names[i]},
                         {"shape", shape_of(*ts[i])}});
    }
  }
  w.u32(static_cast<std::uint32_t>(heads_.size()));
  for (const auto& [slot, h] : heads_) {
    w.i64(slot);
    const char* names[] = {"w1", "b1", "w2", "b2"};
    auto ts = h.tensors();
    for (std::size_t i = 0; i < ts.size(); ++i) {
      put_tensor(w, *ts[i]);
      tensors.push_back({{"name", "head[" + std::to_string(slot) + "]." + names[i]},
                         {"shape", shape_of(*ts[i])}});
    }
  }
  io::write_file(path, w.buffer());

  json problems = json::array();
  for (std::size_t p : order_)
    problems.push_back({{"id", p},
                        {"classes", classes_.at(p)},
                        {"adapter_slot", adapter_slot(p)},
                        {"head_slot", head_slot(p)},
                        {"trainable_parameters", parameter_count(p)}});
  json manifest = {
      {"format", "HOPM"},
      {"version", kModelVersion},
      {"seed", seed},
      {"backbone",
       {{"kind", to_string(config_.backbone.kind)},
        {"channels", config_.backbone.channels},
        {"max_len", config_.backbone.max_len},
        {"seed", config_.backbone.seed}}},
      {"pooling", {{"kind", to_string(config_.pooling.kind)}, {"order", config_.pooling.order}}},
      {"mode", to_string(config_.mode)},
      {"baseline", to_string(config_.baseline)},
      {"bottleneck", config_.bottleneck},
      {"problems", problems},
      {"tensors", tensors},
      {"checksum", "crc32:" + io::crc32_hex(w.buffer())}};
  auto mp = path;
  mp += ".json";
  io::write_file(mp, manifest.dump(2) + "\n");
}

Model Model::load(const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  io::Reader r(bytes, "HOPM");
  require(bytes.size() >= 4 && bytes.substr(0, 4) == kModelMagic, ErrorKind::kFormat,
          path.string() + ": bad magic, not a HOPM checkpoint");
  r.bytes(4);
  const std::uint32_t version = r.u32();
  require(version == kModelVersion, ErrorKind::kFormat,
          "unsupported HOPM version " + std::to_string(version));
  ModelConfig cfg;
  const std::uint32_t bkind = r.u32();
  require(bkind <= 1, ErrorKind::kFormat, "bad backbone kind in checkpoint");
  cfg.backbone.kind = static_cast<BackboneKind>(bkind);
  cfg.backbone.channels = r.u32();
  cfg.backbone.max_len = r.u32();
  cfg.backbone.seed = r.u64();
  const std::uint32_t pkind = r.u32();
  require(pkind <= static_cast<std::uint32_t>(PoolingKind::kMomentsCls), ErrorKind::kFormat,
          "bad pooling kind in checkpoint");
  cfg.pooling.kind = static_cast<PoolingKind>(pkind);
  cfg.pooling.order = static_cast<int>(r.u32());
  const std::uint32_t mode = r.u32(), baseline = r.u32();
  require(mode <= 1 && baseline <= 2, ErrorKind::kFormat, "bad routing fields in checkpoint");
  cfg.mode = static_cast<RoutingMode>(mode);
  cfg.baseline = static_cast<Baseline>(baseline);
  cfg.bottleneck = r.u32();
  Model m(cfg);
  const std::uint32_t nproblems = r.u32();
  for (std::uint32_t i = 0; i < nproblems; ++i) {
    const std::size_t id = r.u64();
    m.classes_[id] = r.u32();
    m.order_.push_back(id);
  }
  const std::uint32_t nadapters = r.u32();
  for (std::uint32_t i = 0; i < nadapters; ++i) {
    const std::int64_t slot = r.i64();
    AdapterParams<float> a;
    for (Matrix* t : a.tensors()) *t = get_tensor(r);
    m.adapters_[slot] = std::move(a);
  }
  const std::uint32_t nheads = r.u32();
  for (std::uint32_t i = 0; i < nheads; ++i) {
    const std::int64_t slot = r.i64();
    HeadParams<float> h;
    for (Matrix* t : h.tensors()) *t = get_tensor(r);
    m.heads_[slot] = std::move(h);
  }
  require(r.remaining() == 0, ErrorKind::kCorruption, path.string() + ": trailing bytes");
  return m;
}

}  // namespace hop
