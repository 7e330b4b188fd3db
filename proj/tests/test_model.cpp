#include <gtest/gtest.h>

#include "hop/binary_io.hpp"
#include "hop/error.hpp"
#include "hop/model.hpp"
#include "hop/optim.hpp"
#include "hop/train.hpp"
#include "support.hpp"

using namespace hop;
using hop::testing::random_matrix;

namespace {

ModelConfig config(RoutingMode mode, Baseline baseline, std::size_t q = 4, int order = 3) {
  ModelConfig c;
  c.backbone.channels = q;
  c.pooling = {PoolingKind::kMoments, order};
  c.mode = mode;
  c.baseline = baseline;
  c.bottleneck = 3;
  return c;
}

SampleList random_samples(Rng& rng, std::size_t n, std::size_t q, std::size_t classes) {
  SampleList out;
  for (std::size_t i = 0; i < n; ++i)
    out.push_back({random_matrix<float>(2 + rng.below(6), q, rng), rng.below(classes)});
  return out;
}

// Moves every trainable parameter of `problem` so a later comparison can
// tell whether it was touched.
void perturb(Model& m, std::size_t problem, Rng& rng) {
  for (Matrix* t : m.trainable(problem).tensors())
    for (float& v : t->values()) v += static_cast<float>(rng.uniform(-0.1, 0.1));
}

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kState;
}

}  // namespace

TEST(Model, LogitsShape) {
  Model m(config(RoutingMode::kTil, Baseline::kHop));
  Rng rng(40);
  m.init_problem(0, 2, rng);
  auto batch = random_samples(rng, 3, 4, 2);
  Matrix logits = m.forward(batch, 0, false, rng);
  EXPECT_EQ(logits.rows(), 3u);
  EXPECT_EQ(logits.cols(), 2u);
}

TEST(Model, FirstAdapterIsIdentity) {
  Model m(config(RoutingMode::kTil, Baseline::kHop));
  Rng rng(41);
  m.init_problem(0, 2, rng);
  EXPECT_EQ(m.adapter(0).w_up, Matrix(3, 4, 0.0f));
  auto batch = random_samples(rng, 4, 4, 2);
  auto pipe = m.pipeline(0);
  Pipeline<float> bare{nullptr, pipe.head, pipe.pooling, 0.0};
  EXPECT_EQ(m.forward(batch, 0, false, rng), pipeline_logits(bare, make_batch(batch, 4)));
}

TEST(Model, HopCopiesPreviousTrainedAdapter) {
  Model m(config(RoutingMode::kTil, Baseline::kHop));
  Rng rng(42);
  m.init_problem(0, 2, rng);
  perturb(m, 0, rng);
  m.init_problem(1, 3, rng);
  EXPECT_EQ(m.adapter(1), m.adapter(0));
  EXPECT_EQ(m.head(1).classes(), 3u);
}

TEST(Model, SdlStartsFromFreshSeededInit) {
  Model m(config(RoutingMode::kTil, Baseline::kSdl));
  Rng rng(43);
  m.init_problem(0, 2, rng);
  perturb(m, 0, rng);
  Rng init(7), twin(7);
  m.init_problem(1, 2, init);
  EXPECT_NE(m.adapter(1), m.adapter(0));
  EXPECT_EQ(m.adapter(1), AdapterParams<float>::initial(4, 3, twin));
}

TEST(Model, TilIsolationUnderTrainingNextProblem) {
  for (Baseline b : {Baseline::kHop, Baseline::kSdl}) {
    Model m(config(RoutingMode::kTil, b));
    Rng rng(44);
    m.init_problem(0, 2, rng);
    auto batch = random_samples(rng, 5, 4, 2);
    const Matrix before = m.forward(batch, 0, false, rng);
    m.init_problem(1, 2, rng);
    perturb(m, 1, rng);
    EXPECT_EQ(m.forward(batch, 0, false, rng), before);
  }
}

TEST(Model, FtSharesAdapterInTil) {
  Model m(config(RoutingMode::kTil, Baseline::kFt));
  Rng rng(45);
  m.init_problem(0, 2, rng);
  m.init_problem(1, 2, rng);
  perturb(m, 1, rng);
  EXPECT_EQ(m.adapter(0), m.adapter(1));
  EXPECT_NE(m.head(0), m.head(1));
}

TEST(Model, DilSharesEverythingAndIgnoresProblemId) {
  Model m(config(RoutingMode::kDil, Baseline::kHop));
  Rng rng(46);
  m.init_problem(0, 2, rng);
  m.init_problem(1, 2, rng);
  EXPECT_EQ(&m.head(0), &m.head(1));
  EXPECT_EQ(&m.adapter(0), &m.adapter(1));
  auto batch = random_samples(rng, 3, 4, 2);
  EXPECT_EQ(m.forward(batch, 0, false, rng), m.forward(batch, std::nullopt, false, rng));
  for (const auto& s : batch) EXPECT_EQ(m.predict(s, 1), m.predict(s));
}

TEST(Model, DilClassMismatchIsConfigError) {
  Model m(config(RoutingMode::kDil, Baseline::kFt));
  Rng rng(47);
  m.init_problem(0, 2, rng);
  EXPECT_EQ(kind_of([&] { m.init_problem(1, 3, rng); }), ErrorKind::kConfig);
}

TEST(Model, RoutingErrors) {
  Model m(config(RoutingMode::kTil, Baseline::kHop));
  Rng rng(48);
  m.init_problem(0, 2, rng);
  auto batch = random_samples(rng, 1, 4, 2);
  EXPECT_EQ(kind_of([&] { m.forward(batch, 5, false, rng); }), ErrorKind::kRouting);
  EXPECT_EQ(kind_of([&] { m.predict(batch[0]); }), ErrorKind::kRouting);
  EXPECT_EQ(kind_of([&] { m.init_problem(0, 2, rng); }), ErrorKind::kState);
}

TEST(Model, ChannelMismatchIsShapeError) {
  Model m(config(RoutingMode::kTil, Baseline::kHop));
  Rng rng(49);
  m.init_problem(0, 2, rng);
  auto batch = random_samples(rng, 1, 5, 2);
  EXPECT_EQ(kind_of([&] { m.forward(batch, 0, false, rng); }), ErrorKind::kShape);
}

TEST(Model, ParameterCountMatchesFormula) {
  for (int order : {1, 2, 3, 5}) {
    Model m(config(RoutingMode::kTil, Baseline::kHop, 6, order));
    Rng rng(50);
    m.init_problem(0, 4, rng);
    const std::size_t W = 6 * static_cast<std::size_t>(order);
    const std::size_t expected = 6 * 3 + 3 + 3 * 6 + 6 + W * W + W + W * 4 + 4;
    EXPECT_EQ(parameters_per_problem(6, 3, W, 4), expected);
    EXPECT_EQ(m.parameter_count(0), expected);
    EXPECT_EQ(m.trainable(0).parameter_count(), expected);
  }
}

TEST(Model, CheckpointRoundTrip) {
  hop::testing::TempDir dir("ckpt");
  Model m(config(RoutingMode::kTil, Baseline::kHop));
  Rng rng(51);
  m.init_problem(3, 2, rng);
  perturb(m, 3, rng);
  m.init_problem(1, 4, rng);
  m.save(dir / "model.hopm", 123);
  EXPECT_TRUE(std::filesystem::exists(dir / "model.hopm.json"));
  Model back = Model::load(dir / "model.hopm");
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.problems(), m.problems());
}

TEST(Model, CorruptCheckpointIsRejected) {
  hop::testing::TempDir dir("ckpt-bad");
  Model m(config(RoutingMode::kDil, Baseline::kFt));
  Rng rng(52);
  m.init_problem(0, 2, rng);
  m.save(dir / "model.hopm", 1);
  std::string bytes = hop::io::read_file(dir / "model.hopm");
  hop::io::write_file(dir / "model.hopm", bytes.substr(0, bytes.size() / 2));
  EXPECT_THROW(Model::load(dir / "model.hopm"), Error);
  bytes[0] = 'X';
  hop::io::write_file(dir / "model.hopm", bytes);
  EXPECT_EQ(kind_of([&] { Model::load(dir / "model.hopm"); }), ErrorKind::kFormat);
}

TEST(Model, BackboneChecksumUnchangedByTraining) {
  ModelConfig c = config(RoutingMode::kTil, Baseline::kHop);
  Model m(c);
  const auto before = m.backbone().checksum();
  Rng rng(53);
  m.init_problem(0, 2, rng);
  auto train = random_samples(rng, 20, 4, 2), val = random_samples(rng, 6, 4, 2);
  TrainConfig tc;
  tc.max_epochs = 2;
  tc.patience = 2;
  train_problem(m, 0, train, val, tc);
  EXPECT_EQ(m.backbone().checksum(), before);
  EXPECT_EQ(m.backbone(), c.backbone);
}
