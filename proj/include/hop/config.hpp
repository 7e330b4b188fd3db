#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hop/data.hpp"
#include "hop/harness.hpp"
#include "hop/model.hpp"
#include "hop/optim.hpp"

namespace hop {

struct DataConfig {
  std::optional<SynthSpec> synthetic;
  std::vector<ProblemSource> problems;
};

struct DiagnosticsConfig {
  int moment_distance_order = 0;  // 0: off
};

/// Everything `hop run` needs. Parsed from JSON; unknown keys are rejected.
struct RunConfig {
  std::filesystem::path output_dir = "hop-run";
  std::vector<std::uint64_t> seeds = {0};
  bool permute_order = true;
  ModelConfig model;
  TrainConfig train;
  DataConfig data;
  DiagnosticsConfig diagnostics;

  void validate() const;
};

RunConfig parse_run_config(const nlohmann::json& doc,
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

SynthSpec parse_synth_spec(const nlohmann::json& doc, const std::string& where = "");
SynthSpec load_synth_spec(const std::filesystem::path& path);

nlohmann::ordered_json to_json(const RunConfig& cfg);
nlohmann::ordered_json to_json(const SynthSpec& spec);

}  // namespace hop
