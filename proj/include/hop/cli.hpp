#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hop/config.hpp"
#include "hop/error.hpp"
#include "hop/matrix.hpp"
#include "hop/metrics.hpp"

namespace hop::cli {

/// Process exit codes.
enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

int exit_code_for(ErrorKind kind);

/// One-line JSON error record for standard error.
std::string error_line(ErrorKind kind, const std::string& message);

/// "%.9g"-formatted CSV, one row per line.
std::string format_matrix_csv(const MatrixD& m);
MatrixD parse_matrix_csv(const std::string& text);

/// Rounds to 9 significant digits so JSON output stays short and stable.
double round9(double v);

nlohmann::ordered_json to_json(const MetricsReport& report);

struct RunOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::vector<std::uint64_t>> seeds;
  std::size_t jobs = 1;
};

int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err);
int cmd_gen_synth(const std::optional<std::filesystem::path>& spec,
                  const std::filesystem::path& out_dir, std::ostream& out, std::ostream& err);
int cmd_metrics(const std::filesystem::path& matrix,
                const std::optional<std::filesystem::path>& curves, std::ostream& out,
                std::ostream& err);
int cmd_inspect(const std::filesystem::path& dataset, std::ostream& out, std::ostream& err);

/// Full command-line entry point (`hop <subcommand> ...`).
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hop::cli
