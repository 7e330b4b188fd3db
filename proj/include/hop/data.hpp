#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hop/matrix.hpp"

namespace hop {

/// One sample: L×Q frozen token embeddings (no padding rows) and its label.
struct EmbeddedSequence {
  Matrix tokens;
  std::size_t label = 0;

  std::size_t length() const { return tokens.rows(); }
  std::size_t channels() const { return tokens.cols(); }

  friend bool operator==(const EmbeddedSequence&, const EmbeddedSequence&) = default;
};

using SampleList = std::vector<EmbeddedSequence>;

enum class Split { kTrain, kVal, kTest };
std::string_view to_string(Split split);

/// One continual-learning problem with its three splits.
struct ProblemDataset {
  std::size_t id = 0;
  std::string name;
  std::size_t classes = 0;
  std::size_t channels = 0;
  SampleList train;
  SampleList val;
  SampleList test;

  const SampleList& split(Split s) const;
  SampleList& split(Split s);

  /// Checks the invariants every split must hold (non-empty, L in
  /// [1, max_len], labels < N_C, finite values, uniform Q).
  void validate(std::size_t max_len) const;
};

// ---------------------------------------------------------------------------
// HOPD split files.
//
//   "HOPD" | version u32 | Q u32 | N_C u32 | count u32 |
//   count × ( L u32 | label u32 | L·Q float32 )
//
// All little-endian. A sibling `<file>.json` manifest records name, split,
// shape, counts and the CRC-32 of the whole .hopd file.
// ---------------------------------------------------------------------------

inline constexpr std::string_view kHopdMagic = "HOPD";
inline constexpr std::uint32_t kHopdVersion = 1;
inline constexpr std::size_t kDefaultMaxLen = 128;

struct SplitFile {
  std::size_t channels = 0;
  std::size_t classes = 0;
  SampleList samples;
};

struct SplitManifest {
  std::string name;
  std::string split;
  std::size_t channels = 0;
  std::size_t classes = 0;
  std::size_t count = 0;
  std::size_t total_tokens = 0;
  std::size_t max_length = 0;
  std::string checksum;  // "crc32:xxxxxxxx"
};

std::string encode_split(const SplitFile& split);

/// Parses an in-memory HOPD image. Throws format/corruption/validation errors;
/// never returns a partial result.
SplitFile decode_split(std::string_view bytes, std::optional<std::size_t> expected_channels,
                       std::size_t max_len = kDefaultMaxLen);

std::filesystem::path manifest_path(const std::filesystem::path& hopd_path);

void write_split(const std::filesystem::path& path, const SplitFile& split,
                 std::string_view name, Split which);

/// Reads a .hopd file, verifying the sibling manifest checksum when present.
SplitFile read_split(const std::filesystem::path& path,
                     std::optional<std::size_t> expected_channels = std::nullopt,
                     std::size_t max_len = kDefaultMaxLen);

std::optional<SplitManifest> read_manifest(const std::filesystem::path& hopd_path);

/// Dataset directory: train.hopd, val.hopd, test.hopd (+ manifests).
void write_dataset(const std::filesystem::path& dir, const ProblemDataset& dataset);
ProblemDataset read_dataset(const std::filesystem::path& dir,
                            std::optional<std::size_t> expected_channels = std::nullopt,
                            std::size_t max_len = kDefaultMaxLen);

// ---------------------------------------------------------------------------
// Hashing embedder: a deterministic frozen stand-in for a pretrained encoder.
// ---------------------------------------------------------------------------

/// Seeded FNV-1a 64.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed);

/// Lowercases, splits on whitespace and truncates to `max_len` tokens.
std::vector<std::string> tokenize(std::string_view text, std::size_t max_len);

/// Each token's hash seeds an Rng that draws a unit-variance Q-vector, so
/// equal tokens map to equal rows.
Matrix hash_embed(std::string_view text, std::size_t channels, std::size_t max_len,
                  std::uint64_t seed);

/// Text split file: one "label<TAB>text" line per sample.
SampleList read_text_split(const std::filesystem::path& path, std::size_t channels,
                           std::size_t max_len, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic moment-controlled streams.
// ---------------------------------------------------------------------------

/// Token distribution of one class: location, scale and skew of a
/// standardized skewed draw.
struct ClassDistribution {
  double mean = 0.0;
  double scale = 1.0;
  double skew = 0.0;  // γ of the quadratic skew transform, see skewed_standard()
};

/// Maps a standard normal z to (z + γ(z² − 1)) / √(1 + 2γ²): zero mean, unit
/// variance, third moment (6γ + 8γ³) / (1 + 2γ²)^{3/2}.
double skewed_standard(double z, double skew);
double skewed_standard_third_moment(double skew);

struct SynthSpec {
  std::size_t problems = 5;
  std::size_t classes = 2;
  std::size_t channels = 8;
  std::size_t train_per_class = 120;
  std::size_t val_per_class = 40;
  std::size_t test_per_class = 100;
  std::size_t min_length = 24;
  std::size_t max_length = 40;
  std::uint64_t seed = 7;
  /// Std of a per-sequence, per-channel offset shared by all tokens of a
  /// sequence and independent of the class.
  double sequence_offset = 0.0;
  /// Position 0 holds a fixed per-problem vector, identical for every
  /// sequence of the problem, instead of a draw.
  bool cls_token = false;
  /// Preset parameters used when `distributions` is empty.
  double preset_scale_ratio = 1.5;
  double preset_skew = 0.4;
  /// distributions[t][c]: problem t, class c. Empty: use the
  /// moment-separable preset.
  std::vector<std::vector<ClassDistribution>> distributions;

  void validate() const;
};

/// Preset in which every problem's classes share the same mean and differ in
/// scale by `scale_ratio` and in skew sign; which class is wider is drawn per
/// problem.
std::vector<std::vector<ClassDistribution>> moment_separable_distributions(
    std::size_t problems, std::size_t classes, double scale_ratio, double skew,
    std::uint64_t seed);

std::vector<ProblemDataset> generate_synthetic(const SynthSpec& spec);

}  // namespace hop
