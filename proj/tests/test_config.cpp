#include <gtest/gtest.h>

#include "hop/binary_io.hpp"
#include "hop/config.hpp"
#include "hop/error.hpp"
#include "support.hpp"

using namespace hop;
using nlohmann::json;

namespace {

json minimal() {
  return json::parse(R"({"data": {"synthetic": {"problems": 2, "channels": 4}}})");
}

std::string error_message(const json& doc) {
  try {
    parse_run_config(doc);
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
    return e.what();
  }
  ADD_FAILURE() << "config accepted";
  return {};
}

}  // namespace

TEST(Config, Defaults) {
  const auto cfg = parse_run_config(minimal());
  EXPECT_EQ(cfg.seeds, std::vector<std::uint64_t>{0});
  EXPECT_EQ(cfg.model.mode, RoutingMode::kTil);
  EXPECT_EQ(cfg.model.baseline, Baseline::kHop);
  EXPECT_EQ(cfg.model.pooling.kind, PoolingKind::kMoments);
  EXPECT_EQ(cfg.model.pooling.order, 3);
  EXPECT_EQ(cfg.model.backbone.channels, 4u);
  EXPECT_EQ(cfg.model.bottleneck, 64u);
  EXPECT_DOUBLE_EQ(cfg.train.lr, 1e-3);
  EXPECT_EQ(cfg.train.patience, 5u);
}

TEST(Config, UnknownTopLevelKeyIsNamed) {
  auto doc = minimal();
  doc["learning_rate"] = 0.1;
  EXPECT_NE(error_message(doc).find("learning_rate"), std::string::npos);
}

TEST(Config, UnknownNestedKeyIsNamedWithPath) {
  auto doc = minimal();
  doc["train"] = {{"lr", 0.1}, {"momentum", 0.9}};
  EXPECT_NE(error_message(doc).find("train.momentum"), std::string::npos);
  doc = minimal();
  doc["data"]["synthetic"]["colour"] = 1;
  EXPECT_NE(error_message(doc).find("data.synthetic.colour"), std::string::npos);
}

TEST(Config, WrongTypeIsRejected) {
  auto doc = minimal();
  doc["seeds"] = "zero";
  error_message(doc);
}

TEST(Config, InvalidValuesAreRejected) {
  auto doc = minimal();
  doc["pooling"] = {{"kind", "moments"}, {"order", 7}};
  error_message(doc);
  doc = minimal();
  doc["mode"] = "cil";
  error_message(doc);
  doc = minimal();
  doc["train"] = {{"max_epochs", 2}, {"patience", 3}};
  error_message(doc);
  doc = minimal();
  doc["backbone"] = {{"channels", 8}};
  error_message(doc);
}

TEST(Config, DataNeedsExactlyOneSource) {
  error_message(json::object());
  auto doc = minimal();
  doc["data"]["problems"] = json::array({{{"path", "x"}}});
  error_message(doc);
}

TEST(Config, RelativeProblemPathsResolveAgainstConfigDir) {
  hop::testing::TempDir dir("config");
  io::write_file(dir / "run.json", R"({"backbone": {"channels": 4},
      "data": {"problems": [{"name": "a", "path": "data/a"}, {"name": "b", "path": "/abs/b"}]}})");
  const auto cfg = load_run_config(dir / "run.json");
  ASSERT_EQ(cfg.data.problems.size(), 2u);
  EXPECT_EQ(cfg.data.problems[0].path, dir / "data/a");
  EXPECT_EQ(cfg.data.problems[1].path, std::filesystem::path("/abs/b"));
}

TEST(Config, InvalidJsonIsConfigError) {
  hop::testing::TempDir dir("config-bad");
  io::write_file(dir / "run.json", "{ not json");
  try {
    load_run_config(dir / "run.json");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kConfig);
  }
}

TEST(Config, SerializedConfigParsesBackToSameValues) {
  auto doc = minimal();
  doc["mode"] = "dil";
  doc["baseline"] = "ft";
  doc["seeds"] = {3, 4};
  doc["pooling"] = {{"kind", "moments_cls"}, {"order", 4}};
  doc["train"] = {{"lr", 0.02}, {"dropout", 0.0}};
  doc["data"]["synthetic"]["preset"] = {{"scale_ratio", 2.0}, {"skew", 0.1}};
  const auto cfg = parse_run_config(doc);
  const auto again = parse_run_config(json::parse(to_json(cfg).dump()));
  EXPECT_EQ(again.model, cfg.model);
  EXPECT_EQ(again.seeds, cfg.seeds);
  EXPECT_EQ(again.train.lr, cfg.train.lr);
  EXPECT_EQ(again.data.synthetic->preset_scale_ratio, 2.0);
  EXPECT_EQ(to_json(again).dump(), to_json(cfg).dump());
}

TEST(Config, SynthSpecExplicitDistributions) {
  const auto spec = parse_synth_spec(json::parse(R"({"problems": 1, "classes": 2,
      "distributions": [[{"mean": 0, "scale": 1, "skew": 0}, {"mean": 0, "scale": 2, "skew": 0.5}]]})"));
  ASSERT_EQ(spec.distributions.size(), 1u);
  EXPECT_DOUBLE_EQ(spec.distributions[0][1].scale, 2.0);
  EXPECT_DOUBLE_EQ(spec.distributions[0][1].skew, 0.5);
  EXPECT_THROW(parse_synth_spec(json::parse(R"({"problems": 2, "distributions": [[]]})")), Error);
}
