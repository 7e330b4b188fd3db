#include <gtest/gtest.h>

#include <sstream>

#include <json.hpp>

#include "hop/binary_io.hpp"
#include "hop/cli.hpp"
#include "hop/data.hpp"
#include "hop/model.hpp"
#include "support.hpp"

using namespace hop;
using hop::testing::TempDir;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = cli::main(args, out, err);
  return {code, out.str(), err.str()};
}

void write_config(const fs::path& path, const fs::path& out_dir, const std::string& extra = "") {
  io::write_file(path, R"({"output_dir": ")" + out_dir.string() + R"(", "seeds": [0, 1],
    "pooling": {"kind": "moments", "order": 2}, "adapter": {"bottleneck": 4},
    "train": {"lr": 0.01, "max_epochs": 2, "patience": 2},
    "data": {"synthetic": {"problems": 3, "channels": 4, "train_per_class": 12,
             "val_per_class": 4, "test_per_class": 6, "min_length": 3, "max_length": 8}})" +
                           extra + "}");
}

json error_json(const std::string& err) {
  EXPECT_EQ(err.find('\n'), err.size() - 1) << "error must be a single line";
  return json::parse(err);
}

}  // namespace

TEST(CliRun, WritesAllArtifacts) {
  TempDir dir("cli-run");
  write_config(dir / "run.json", dir / "out");
  const auto r = run({"run", "--config", (dir / "run.json").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  for (const char* f :
       {"accuracy_matrix.csv", "mf1_matrix.csv", "metrics.json", "history.jsonl", "manifest.json"})
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;

  // Every artifact parses back with the library's own readers.
  const auto acc = cli::parse_matrix_csv(io::read_file(dir / "out" / "accuracy_matrix.csv"));
  EXPECT_EQ(acc.rows(), 3u);
  cli::parse_matrix_csv(io::read_file(dir / "out" / "mf1_matrix.csv"));
  const auto metrics = json::parse(io::read_file(dir / "out" / "metrics.json"));
  EXPECT_EQ(metrics["per_seed"].size(), 2u);
  for (const char* key : {"mAcc", "MF1", "BwT", "FwT", "Forg", "Pla"})
    EXPECT_TRUE(metrics["mean"].contains(key)) << key;
  const auto manifest = json::parse(io::read_file(dir / "out" / "manifest.json"));
  EXPECT_EQ(manifest["runs"].size(), 2u);
  std::istringstream history(io::read_file(dir / "out" / "history.jsonl"));
  std::string line;
  std::size_t lines = 0;
  while (std::getline(history, line)) {
    EXPECT_TRUE(json::parse(line).contains("val_loss"));
    ++lines;
  }
  EXPECT_GT(lines, 0u);
  const auto model = Model::load(dir / "out" / "seed-1" / "model.hopm");
  EXPECT_EQ(model.problems().size(), 3u);
}

TEST(CliRun, ParameterCountsMatchFormula) {
  TempDir dir("cli-params");
  write_config(dir / "run.json", dir / "out");
  ASSERT_EQ(run({"run", "--config", (dir / "run.json").string()}).code, 0);
  const auto metrics = json::parse(io::read_file(dir / "out" / "metrics.json"));
  for (const auto& entry : metrics["trainable_parameters"])
    EXPECT_EQ(entry["trainable_parameters"].get<std::size_t>(),
              parameters_per_problem(4, 4, 8, 2));
}

TEST(CliRun, SameConfigTwiceIsByteIdentical) {
  TempDir dir("cli-det");
  write_config(dir / "a.json", dir / "a");
  write_config(dir / "b.json", dir / "b");
  ASSERT_EQ(run({"run", "--config", (dir / "a.json").string()}).code, 0);
  ASSERT_EQ(run({"run", "--config", (dir / "b.json").string(), "--jobs", "2"}).code, 0);
  for (const char* f : {"metrics.json", "accuracy_matrix.csv", "mf1_matrix.csv", "history.jsonl"})
    EXPECT_EQ(io::read_file(dir / "a" / f), io::read_file(dir / "b" / f)) << f;
}

TEST(CliRun, FlagsOverrideConfig) {
  TempDir dir("cli-flags");
  write_config(dir / "run.json", dir / "ignored");
  const auto r = run({"run", "--config", (dir / "run.json").string(), "--out",
                      (dir / "here").string(), "--seeds", "5,6,7"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_FALSE(fs::exists(dir / "ignored"));
  const auto metrics = json::parse(io::read_file(dir / "here" / "metrics.json"));
  EXPECT_EQ(metrics["seeds"], json::array({5, 6, 7}));
  EXPECT_TRUE(fs::exists(dir / "here" / "seed-7" / "accuracy_matrix.csv"));
}

TEST(CliRun, UnknownKeyExitsWithUsageCode) {
  TempDir dir("cli-unknown");
  write_config(dir / "run.json", dir / "out", R"(, "epochs": 3)");
  const auto r = run({"run", "--config", (dir / "run.json").string()});
  EXPECT_EQ(r.code, 1);
  const auto e = error_json(r.err);
  EXPECT_EQ(e["error"], "config");
  EXPECT_NE(e["message"].get<std::string>().find("epochs"), std::string::npos);
}

TEST(CliRun, MissingDatasetIsDataError) {
  TempDir dir("cli-missing");
  io::write_file(dir / "run.json", R"({"backbone": {"channels": 4},
      "data": {"problems": [{"name": "a", "path": "nope"}, {"name": "b", "path": "nope2"}]}})");
  const auto r = run({"run", "--config", (dir / "run.json").string()});
  EXPECT_EQ(r.code, 2);
  error_json(r.err);
}

TEST(CliRun, DivergenceExitsWithThree) {
  TempDir dir("cli-diverge");
  write_config(dir / "run.json", dir / "out");
  auto doc = json::parse(io::read_file(dir / "run.json"));
  doc["train"]["lr"] = 1e30;
  doc["pooling"]["order"] = 5;
  doc["data"]["synthetic"]["preset"] = {{"scale_ratio", 50.0}, {"skew", 0.0}};
  io::write_file(dir / "run.json", doc.dump());
  const auto r = run({"run", "--config", (dir / "run.json").string()});
  EXPECT_EQ(r.code, 3) << r.err;
  EXPECT_EQ(error_json(r.err)["error"], "divergence");
}

TEST(CliUsage, NoSubcommandOrBadFlag) {
  EXPECT_EQ(run({}).code, 1);
  EXPECT_EQ(run({"run"}).code, 1);
  EXPECT_EQ(run({"frobnicate"}).code, 1);
  EXPECT_EQ(run({"run", "--config", "x.json", "--jobs", "0"}).code, 1);
  const auto help = run({"--help"});
  EXPECT_EQ(help.code, 0);
  EXPECT_NE(help.out.find("gen-synth"), std::string::npos);
}

TEST(CliGenSynth, DefaultSpecWritesEveryProblem) {
  TempDir dir("cli-gen");
  const auto r = run({"gen-synth", "--out", (dir / "a").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const SynthSpec defaults;
  std::size_t problem_dirs = 0;
  for (const auto& entry : fs::directory_iterator(dir / "a")) {
    if (!entry.is_directory()) continue;
    ++problem_dirs;
    for (const char* f : {"train.hopd", "val.hopd", "test.hopd"})
      EXPECT_TRUE(fs::exists(entry.path() / f)) << entry.path() << f;
    EXPECT_NO_THROW(read_dataset(entry.path(), defaults.channels));
  }
  EXPECT_EQ(problem_dirs, defaults.problems);
}

TEST(CliGenSynth, SameSeedIdenticalFiles) {
  TempDir dir("cli-gen-det");
  io::write_file(dir / "spec.json", R"({"problems": 2, "channels": 3, "seed": 11})");
  ASSERT_EQ(run({"gen-synth", "--config", (dir / "spec.json").string(), "--out",
                 (dir / "a").string()}).code, 0);
  ASSERT_EQ(run({"gen-synth", "--config", (dir / "spec.json").string(), "--out",
                 (dir / "b").string()}).code, 0);
  for (const auto& entry : fs::recursive_directory_iterator(dir / "a")) {
    if (!entry.is_regular_file()) continue;
    const auto rel = fs::relative(entry.path(), dir / "a");
    EXPECT_EQ(io::read_file(entry.path()), io::read_file(dir / "b" / rel)) << rel;
  }
}

TEST(CliGenSynth, ZeroChannelsFails) {
  TempDir dir("cli-gen-bad");
  io::write_file(dir / "spec.json", R"({"channels": 0})");
  const auto r = run({"gen-synth", "--config", (dir / "spec.json").string(), "--out",
                      (dir / "a").string()});
  EXPECT_NE(r.code, 0);
  error_json(r.err);
}

TEST(CliMetrics, FixtureMatrix) {
  TempDir dir("cli-metrics");
  io::write_file(dir / "a.csv", "0.9,0.5,0.4\n0.8,0.85,0.45\n0.7,0.8,0.9\n");
  const auto r = run({"metrics", "--matrix", (dir / "a.csv").string(), "--curves",
                      (dir / "curves.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_NEAR(j["mAcc"].get<double>(), 0.8, 1e-9);
  EXPECT_NEAR(j["BwT"].get<double>(), -0.125, 1e-9);
  EXPECT_NEAR(j["Forg"].get<double>(), 0.125, 1e-9);
  EXPECT_NEAR(j["FwT"].get<double>(), 0.45, 1e-9);
  EXPECT_NEAR(j["Pla"].get<double>(), 0.883333, 1e-6);
  const std::string curves = io::read_file(dir / "curves.csv");
  EXPECT_EQ(curves.substr(0, curves.find('\n')), "stage,mAcc_t,mAcc_t_seen,Pla_t,Forg_t");
  EXPECT_NE(curves.find("3,0.8,0.8,0.9,"), std::string::npos);
}

TEST(CliMetrics, ConstantMatrix) {
  TempDir dir("cli-metrics-const");
  io::write_file(dir / "a.csv", "0.5,0.5\n0.5,0.5\n");
  const auto r = run({"metrics", "--matrix", (dir / "a.csv").string()});
  ASSERT_EQ(r.code, 0);
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["BwT"].get<double>(), 0.0);
  EXPECT_EQ(j["Forg"].get<double>(), 0.0);
}

TEST(CliMetrics, OneByOneIsSizeError) {
  TempDir dir("cli-metrics-1");
  io::write_file(dir / "a.csv", "0.5\n");
  const auto r = run({"metrics", "--matrix", (dir / "a.csv").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(error_json(r.err)["error"], "size");
}

TEST(CliMetrics, RaggedCsvIsParseError) {
  TempDir dir("cli-metrics-ragged");
  io::write_file(dir / "a.csv", "0.5,0.5\n0.5\n");
  const auto r = run({"metrics", "--matrix", (dir / "a.csv").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(error_json(r.err)["error"], "parse");
}

TEST(CliMetrics, CsvRoundTripKeepsNineDigits) {
  MatrixD m{{1.0 / 3.0, 0.5}, {0.123456789123, 1.0}};
  const auto back = cli::parse_matrix_csv(cli::format_matrix_csv(m));
  EXPECT_EQ(cli::format_matrix_csv(back), cli::format_matrix_csv(m));
  EXPECT_EQ(cli::format_matrix_csv(m), "0.333333333,0.5\n0.123456789,1\n");
}

TEST(CliInspect, SummaryOfValidFile) {
  TempDir dir("cli-inspect");
  ASSERT_EQ(run({"gen-synth", "--out", (dir / "gen").string()}).code, 0);
  const fs::path file = dir / "gen" / "synth-0" / "test.hopd";
  ASSERT_TRUE(fs::exists(file));
  const auto r = run({"inspect", file.string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  EXPECT_EQ(j["channels"], 8);
  EXPECT_EQ(j["classes"], 2);
  EXPECT_EQ(j["count"], 200);
  EXPECT_EQ(j["checksum"], "ok");
  EXPECT_EQ(j["moments"]["variance"]["per_channel"].size(), 8u);
  const auto whole = run({"inspect", (dir / "gen" / "synth-0").string()});
  ASSERT_EQ(whole.code, 0);
  EXPECT_EQ(json::parse(whole.out).size(), 3u);
}

TEST(CliInspect, CorruptedPayloadFails) {
  TempDir dir("cli-inspect-bad");
  ASSERT_EQ(run({"gen-synth", "--out", (dir / "gen").string()}).code, 0);
  const fs::path file = dir / "gen" / "synth-0" / "val.hopd";
  std::string bytes = io::read_file(file);
  bytes[bytes.size() - 3] ^= 0x11;
  io::write_file(file, bytes);
  const auto r = run({"inspect", file.string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(json::parse(r.out)["checksum"], "mismatch");
  EXPECT_EQ(error_json(r.err)["error"], "corruption");
}

TEST(CliInspect, ConstantDatasetHasZeroVariance) {
  TempDir dir("cli-inspect-const");
  SplitFile f{2, 2, {{Matrix(4, 2, 1.5f), 0}, {Matrix(3, 2, 1.5f), 1}}};
  write_split(dir / "c.hopd", f, "const", Split::kTest);
  const auto r = run({"inspect", (dir / "c.hopd").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = json::parse(r.out);
  for (const auto& v : j["moments"]["variance"]["per_channel"]) EXPECT_EQ(v.get<double>(), 0.0);
  EXPECT_EQ(j["moments"]["mean"]["per_channel"][0].get<double>(), 1.5);
}

TEST(CliInspect, BadMagicIsFormatError) {
  TempDir dir("cli-inspect-magic");
  io::write_file(dir / "x.hopd", "NOPE and more bytes");
  const auto r = run({"inspect", (dir / "x.hopd").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_EQ(error_json(r.err)["error"], "format");
}
