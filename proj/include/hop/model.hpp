#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hop/data.hpp"
#include "hop/layers.hpp"
#include "hop/pooling.hpp"
#include "hop/rng.hpp"

namespace hop {

enum class BackboneKind { kFile, kHashing };
enum class RoutingMode { kTil, kDil };
enum class Baseline { kHop, kFt, kSdl };

std::string_view to_string(BackboneKind kind);
std::string_view to_string(RoutingMode mode);
std::string_view to_string(Baseline baseline);
BackboneKind parse_backbone_kind(std::string_view name);
RoutingMode parse_routing_mode(std::string_view name);
Baseline parse_baseline(std::string_view name);

/// Frozen token-embedding source. It has no trainable state: FILE reads
/// precomputed embeddings, HASHING embeds text with `hash_embed`.
struct BackboneSpec {
  BackboneKind kind = BackboneKind::kFile;
  std::size_t channels = 768;
  std::size_t max_len = kDefaultMaxLen;
  std::uint64_t seed = 0;

  /// Fingerprint of everything that defines the backbone's output.
  std::uint64_t checksum() const;

  friend bool operator==(const BackboneSpec&, const BackboneSpec&) = default;
};

inline constexpr std::size_t kDefaultBottleneck = 64;

struct ModelConfig {
  BackboneSpec backbone;
  PoolingSpec pooling;
  RoutingMode mode = RoutingMode::kTil;
  Baseline baseline = Baseline::kHop;
  std::size_t bottleneck = kDefaultBottleneck;

  void validate() const;
  std::size_t feature_width() const { return pooling.output_width(backbone.channels); }
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Closed-form trainable parameter count of one adapter set plus one head:
/// Q·A + A + A·Q + Q + W² + W + W·N_C + N_C with W the pooled width (p·Q for
/// moment pooling).
std::size_t parameters_per_problem(std::size_t channels, std::size_t bottleneck,
                                   std::size_t feature_width, std::size_t classes);

/// Non-owning view of the parameters one problem trains.
struct TrainableSet {
  AdapterParams<float>* adapter = nullptr;
  HeadParams<float>* head = nullptr;

  std::vector<Matrix*> tensors() const;
  std::size_t parameter_count() const;
};

/// Frozen backbone + adapters + pooling + MLP heads, with TIL/DIL routing.
///
/// Slots: TIL/HOP and TIL/SDL own one adapter and one head per problem;
/// TIL/FT shares one adapter and owns a head per problem; DIL shares one
/// adapter and one head across the whole sequence.
class Model {
 public:
  explicit Model(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const BackboneSpec& backbone() const { return config_.backbone; }

  /// Creates (or, per baseline, carries over) the parameters for `problem`.
  /// Throws a state error if `problem` was already initialized.
  void init_problem(std::size_t problem, std::size_t classes, Rng& rng);

  bool knows(std::size_t problem) const;
  std::size_t classes(std::size_t problem) const;
  const std::vector<std::size_t>& problems() const { return order_; }

  /// Logits for a batch. TIL routes by `problem` (required); DIL ignores it.
  /// Dropout is applied only when `training`.
  Matrix forward(std::span<const EmbeddedSequence> batch, std::optional<std::size_t> problem,
                 bool training, Rng& rng, double dropout_rate = 0.0) const;

  /// Argmax class; ties go to the lowest index.
  std::size_t predict(const EmbeddedSequence& sample,
                      std::optional<std::size_t> problem = std::nullopt) const;

  /// Inference pipeline for `problem` (dropout off).
  Pipeline<float> pipeline(std::optional<std::size_t> problem) const;

  /// Mutable view of what training `problem` may update.
  TrainableSet trainable(std::size_t problem);

  const AdapterParams<float>& adapter(std::optional<std::size_t> problem) const;
  const HeadParams<float>& head(std::optional<std::size_t> problem) const;

  /// Trainable parameters owned by `problem` (adapter set + head).
  std::size_t parameter_count(std::size_t problem) const;

  void save(const std::filesystem::path& path, std::uint64_t seed) const;
  static Model load(const std::filesystem::path& path);

  friend bool operator==(const Model&, const Model&) = default;

 private:
  static constexpr std::int64_t kShared = -1;

  std::int64_t adapter_slot(std::size_t problem) const;
  std::int64_t head_slot(std::size_t problem) const;
  std::size_t route(std::optional<std::size_t> problem, const char* what) const;

  ModelConfig config_;
  std::map<std::int64_t, AdapterParams<float>> adapters_;
  std::map<std::int64_t, HeadParams<float>> heads_;
  std::map<std::size_t, std::size_t> classes_;
  std::vector<std::size_t> order_;  // problems in initialization order
};

/// Stacks samples into one ragged token batch.
TokenBatch<float> make_batch(std::span<const EmbeddedSequence> samples,
                             std::size_t expected_channels);
TokenBatch<float> make_batch(std::span<const EmbeddedSequence* const> samples,
                             std::size_t expected_channels);

}  // namespace hop
