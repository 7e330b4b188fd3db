#include "hop/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hop/binary_io.hpp"
#include "hop/rng.hpp"

namespace hop {

using nlohmann::json;

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "unknown";
}

const SampleList& ProblemDataset::split(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kVal: return val;
    default: return test;
  }
}

SampleList& ProblemDataset::split(Split s) {
  return const_cast<SampleList&>(std::as_const(*this).split(s));
}

namespace {

void validate_sample(const EmbeddedSequence& s, std::size_t channels, std::size_t classes,
                     std::size_t max_len, const std::string& where) {
  require(s.length() >= 1, ErrorKind::kValidation, where + ": empty sequence (L = 0)");
  require(s.length() <= max_len, ErrorKind::kValidation,
          where + ": L = " + std::to_string(s.length()) + " exceeds max_len " +
              std::to_string(max_len));
  require(s.channels() == channels, ErrorKind::kShape,
          where + ": Q = " + std::to_string(s.channels()) + ", expected " +
              std::to_string(channels));
  require(s.label < classes, ErrorKind::kValidation,
          where + ": label " + std::to_string(s.label) + " >= N_C " + std::to_string(classes));
  require(s.tokens.all_finite(), ErrorKind::kValidation, where + ": non-finite value");
}

}  // namespace

void ProblemDataset::validate(std::size_t max_len) const {
  require(classes >= 1, ErrorKind::kValidation, name + ": N_C must be positive");
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    const auto& samples = split(s);
    const std::string where = name + "/" + std::string(to_string(s));
    require(!samples.empty(), ErrorKind::kData, where + ": split is empty");
    for (std::size_t i = 0; i < samples.size(); ++i)
      validate_sample(samples[i], channels, classes, max_len,
                      where + "[" + std::to_string(i) + "]");
  }
}

// ----------------------------------------------------------------- HOPD

std::string encode_split(const SplitFile& split) {
  io::Writer w;
  w.bytes(kHopdMagic);
  w.u32(kHopdVersion);
  w.u32(static_cast<std::uint32_t>(split.channels));
  w.u32(static_cast<std::uint32_t>(split.classes));
  w.u32(static_cast<std::uint32_t>(split.samples.size()));
  for (const auto& s : split.samples) {
    require(s.channels() == split.channels, ErrorKind::kShape,
            "encode_split: sample channel count differs from header");
    w.u32(static_cast<std::uint32_t>(s.length()));
    w.u32(static_cast<std::uint32_t>(s.label));
    for (float v : s.tokens.values()) w.f32(v);
  }
  return w.buffer();
}

SplitFile decode_split(std::string_view bytes, std::optional<std::size_t> expected_channels,
                       std::size_t max_len) {
  io::Reader r(bytes, "HOPD");
  if (bytes.size() < kHopdMagic.size() && kHopdMagic.starts_with(bytes))
    fail(ErrorKind::kCorruption, "truncated HOPD file: " + std::to_string(bytes.size()) + " bytes");
  if (bytes.substr(0, kHopdMagic.size()) != kHopdMagic)
    fail(ErrorKind::kFormat, "bad magic: not a HOPD file");
  r.bytes(kHopdMagic.size());
  const std::uint32_t version = r.u32();
  require(version == kHopdVersion, ErrorKind::kFormat,
          "unsupported HOPD version " + std::to_string(version));
  SplitFile out;
  out.channels = r.u32();
  out.classes = r.u32();
  const std::uint32_t count = r.u32();
  require(out.channels >= 1, ErrorKind::kFormat, "HOPD header has Q = 0");
  if (expected_channels)
    require(out.channels == *expected_channels, ErrorKind::kShape,
            "HOPD Q = " + std::to_string(out.channels) + " but backbone Q = " +
                std::to_string(*expected_channels));
  out.samples.reserve(std::min<std::size_t>(count, r.remaining() / 8));
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t length = r.u32();
    const std::uint32_t label = r.u32();
    const std::string where = "sample " + std::to_string(i);
    require(length >= 1, ErrorKind::kValidation, where + ": L = 0");
    require(length <= max_len, ErrorKind::kValidation,
            where + ": L = " + std::to_string(length) + " exceeds max_len " +
                std::to_string(max_len));
    r.need(std::size_t{length} * out.channels * sizeof(float));
    EmbeddedSequence s{Matrix(length, out.channels), label};
    for (float& v : s.tokens.values()) v = r.f32();
    validate_sample(s, out.channels, out.classes, max_len, where);
    out.samples.push_back(std::move(s));
  }
  require(r.remaining() == 0, ErrorKind::kCorruption,
          "HOPD: " + std::to_string(r.remaining()) + " trailing bytes");
  return out;
}

std::filesystem::path manifest_path(const std::filesystem::path& hopd_path) {
  auto p = hopd_path;
  p += ".json";
  return p;
}

void write_split(const std::filesystem::path& path, const SplitFile& split,
                 std::string_view name, Split which) {
  const std::string bytes = encode_split(split);
  io::write_file(path, bytes);
  std::size_t tokens = 0, longest = 0;
  for (const auto& s : split.samples) {
    tokens += s.length();
    longest = std::max(longest, s.length());
  }
  json m = {{"format", "HOPD"},
            {"version", kHopdVersion},
            {"name", name},
            {"split", to_string(which)},
            {"channels", split.channels},
            {"classes", split.classes},
            {"count", split.samples.size()},
            {"total_tokens", tokens},
            {"max_length", longest},
            {"payload_bytes", bytes.size()},
            {"checksum", "crc32:" + io::crc32_hex(bytes)}};
  io::write_file(manifest_path(path), m.dump(2) + "\n");
}

std::optional<SplitManifest> read_manifest(const std::filesystem::path& hopd_path) {
  const auto mp = manifest_path(hopd_path);
  if (!std::filesystem::exists(mp)) return std::nullopt;
  json m;
  try {
    m = json::parse(io::read_file(mp));
    SplitManifest out;
    out.name = m.at("name").get<std::string>();
    out.split = m.at("split").get<std::string>();
    out.channels = m.at("channels").get<std::size_t>();
    out.classes = m.at("classes").get<std::size_t>();
    out.count = m.at("count").get<std::size_t>();
    out.total_tokens = m.value("total_tokens", std::size_t{0});
    out.max_length = m.value("max_length", std::size_t{0});
    out.checksum = m.at("checksum").get<std::string>();
    return out;
  } catch (const json::exception& e) {
    fail(ErrorKind::kFormat, mp.string() + ": malformed manifest: " + e.what());
  }
}

SplitFile read_split(const std::filesystem::path& path,
                     std::optional<std::size_t> expected_channels, std::size_t max_len) {
  const std::string bytes = io::read_file(path);
  if (auto manifest = read_manifest(path)) {
    const std::string actual = "crc32:" + io::crc32_hex(bytes);
    require(manifest->checksum == actual, ErrorKind::kCorruption,
            path.string() + ": checksum mismatch (manifest " + manifest->checksum + ", file " +
                actual + ")");
  }
  return decode_split(bytes, expected_channels, max_len);
}

void write_dataset(const std::filesystem::path& dir, const ProblemDataset& dataset) {
  std::filesystem::create_directories(dir);
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    SplitFile f{dataset.channels, dataset.classes, dataset.split(s)};
    write_split(dir / (std::string(to_string(s)) + ".hopd"), f, dataset.name, s);
  }
}

ProblemDataset read_dataset(const std::filesystem::path& dir,
                            std::optional<std::size_t> expected_channels, std::size_t max_len) {
  ProblemDataset d;
  d.name = dir.filename().string();
  bool first = true;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    const auto path = dir / (std::string(to_string(s)) + ".hopd");
    SplitFile f = read_split(path, expected_channels, max_len);
    if (first) {
      d.channels = f.channels;
      d.classes = f.classes;
      if (auto m = read_manifest(path)) d.name = m->name;
      first = false;
    }
    require(f.channels == d.channels && f.classes == d.classes, ErrorKind::kShape,
            path.string() + ": header disagrees with the other splits");
    d.split(s) = std::move(f.samples);
  }
  d.validate(max_len);
  return d;
}

// -------------------------------------------------------- hashing embedder

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = 0xCBF29CE484222325ULL ^ mix64(seed);
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::vector<std::string> tokenize(std::string_view text, std::size_t max_len) {
  std::vector<std::string> tokens;
  std::string current;
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (std::isspace(c)) {
      if (!current.empty()) tokens.push_back(std::exchange(current, {}));
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
    if (tokens.size() == max_len) return tokens;
  }
  if (!current.empty() && tokens.size() < max_len) tokens.push_back(std::move(current));
  return tokens;
}

Matrix hash_embed(std::string_view text, std::size_t channels, std::size_t max_len,
                  std::uint64_t seed) {
  require(channels >= 1, ErrorKind::kConfig, "hash_embed: Q must be positive");
  const auto tokens = tokenize(text, max_len);
  require(!tokens.empty(), ErrorKind::kEmptySequence, "hash_embed: no tokens in text");
  Matrix out(tokens.size(), channels);
  for (std::size_t d = 0; d < tokens.size(); ++d) {
    Rng rng(fnv1a64(tokens[d], seed));
    for (float& v : out.row(d)) v = static_cast<float>(rng.normal());
  }
  return out;
}

SampleList read_text_split(const std::filesystem::path& path, std::size_t channels,
                           std::size_t max_len, std::uint64_t seed) {
  std::istringstream in(io::read_file(path));
  SampleList out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    const std::string where = path.string() + ":" + std::to_string(lineno);
    require(tab != std::string::npos, ErrorKind::kParse, where + ": expected label<TAB>text");
    std::size_t label = 0;
    try {
      std::size_t used = 0;
      label = std::stoul(line.substr(0, tab), &used);
      require(used == tab, ErrorKind::kParse, where + ": bad label");
    } catch (const std::logic_error&) {
      fail(ErrorKind::kParse, where + ": bad label");
    }
    out.push_back({hash_embed(std::string_view(line).substr(tab + 1), channels, max_len, seed),
                   label});
  }
  return out;
}

// -------------------------------------------------------------- synthetic

double skewed_standard(double z, double skew) {
  return (z + skew * (z * z - 1.0)) / std::sqrt(1.0 + 2.0 * skew * skew);
}

double skewed_standard_third_moment(double skew) {
  return (6.0 * skew + 8.0 * skew * skew * skew) / std::pow(1.0 + 2.0 * skew * skew, 1.5);
}

void SynthSpec::validate() const {
  require(problems >= 1, ErrorKind::kConfig, "synthetic: problems must be >= 1");
  require(classes >= 2, ErrorKind::kConfig, "synthetic: classes must be >= 2");
  require(channels >= 1, ErrorKind::kConfig, "synthetic: channels (Q) must be >= 1");
  require(train_per_class >= 1 && val_per_class >= 1 && test_per_class >= 1,
          ErrorKind::kConfig, "synthetic: every split needs at least one sample per class");
  require(min_length >= 1 && min_length <= max_length, ErrorKind::kConfig,
          "synthetic: need 1 <= min_length <= max_length");
  require(!cls_token || min_length >= 2, ErrorKind::kConfig,
          "synthetic: cls_token needs min_length >= 2");
  require(sequence_offset >= 0.0, ErrorKind::kConfig, "synthetic: sequence_offset must be >= 0");
  if (!distributions.empty()) {
    require(distributions.size() == problems, ErrorKind::kConfig,
            "synthetic: distributions must list every problem");
    for (const auto& p : distributions) {
      require(p.size() == classes, ErrorKind::kConfig,
              "synthetic: distributions must list every class");
      for (const auto& c : p)
        require(c.scale > 0.0 && std::isfinite(c.mean) && std::isfinite(c.skew),
                ErrorKind::kConfig, "synthetic: class scale must be positive");
    }
  }
}

std::vector<std::vector<ClassDistribution>> moment_separable_distributions(
    std::size_t problems, std::size_t classes, double scale_ratio, double skew,
    std::uint64_t seed) {
  std::vector<std::vector<ClassDistribution>> out(problems);
  for (std::size_t t = 0; t < problems; ++t) {
    Rng rng(derive_seed(seed, {0x5EED, t}));
    std::vector<std::size_t> rank(classes);
    for (std::size_t c = 0; c < classes; ++c) rank[c] = c;
    shuffle(std::span<std::size_t>(rank), rng);
    for (std::size_t c = 0; c < classes; ++c) {
      const double pos = classes == 1 ? 0.0
                                      : static_cast<double>(rank[c]) /
                                            static_cast<double>(classes - 1);
      out[t].push_back({0.0, std::pow(scale_ratio, static_cast<double>(rank[c])),
                        skew * (2.0 * pos - 1.0)});
    }
  }
  return out;
}

namespace {

SampleList draw_split(const SynthSpec& spec, const std::vector<ClassDistribution>& dists,
                      const std::vector<double>& cls_vector, std::size_t per_class, Rng& rng) {
  SampleList out;
  out.reserve(per_class * spec.classes);
  std::vector<double> offset(spec.channels);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    const auto& dist = dists[c];
    for (std::size_t i = 0; i < per_class; ++i) {
      const std::size_t length =
          spec.min_length + rng.below(spec.max_length - spec.min_length + 1);
      for (double& o : offset) o = spec.sequence_offset * rng.normal();
      EmbeddedSequence s{Matrix(length, spec.channels), c};
      for (std::size_t d = 0; d < length; ++d) {
        auto row = s.tokens.row(d);
        for (std::size_t q = 0; q < spec.channels; ++q) {
          const double v =
              spec.cls_token && d == 0
                  ? cls_vector[q]
                  : dist.mean + dist.scale * skewed_standard(rng.normal(), dist.skew) + offset[q];
          row[q] = static_cast<float>(v);
        }
      }
      out.push_back(std::move(s));
    }
  }
  shuffle(std::span<EmbeddedSequence>(out), rng);
  return out;
}

}  // namespace

std::vector<ProblemDataset> generate_synthetic(const SynthSpec& spec) {
  spec.validate();
  const auto dists = spec.distributions.empty()
                         ? moment_separable_distributions(spec.problems, spec.classes,
                                                          spec.preset_scale_ratio,
                                                          spec.preset_skew, spec.seed)
                         : spec.distributions;
  std::vector<ProblemDataset> out;
  for (std::size_t t = 0; t < spec.problems; ++t) {
    ProblemDataset d;
    d.id = t;
    d.name = "synth-" + std::to_string(t);
    d.classes = spec.classes;
    d.channels = spec.channels;
    Rng cls_rng(derive_seed(spec.seed, {0xC15, t}));
    std::vector<double> cls_vector(spec.channels);
    for (double& v : cls_vector) v = cls_rng.normal();
    const std::size_t counts[] = {spec.train_per_class, spec.val_per_class, spec.test_per_class};
    for (std::size_t s = 0; s < 3; ++s) {
      Rng rng(derive_seed(spec.seed, {t, s}));
      d.split(static_cast<Split>(s)) = draw_split(spec, dists[t], cls_vector, counts[s], rng);
    }
    out.push_back(std::move(d));
  }
  return out;
}

}  // namespace hop
