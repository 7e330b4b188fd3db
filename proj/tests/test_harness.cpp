#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "hop/binary_io.hpp"
#include "hop/error.hpp"
#include "hop/harness.hpp"
#include "support.hpp"

using namespace hop;

namespace {

ErrorKind kind_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error raised";
  return ErrorKind::kState;
}

std::vector<ProblemDataset> small_stream(std::size_t problems, std::size_t classes = 2) {
  SynthSpec s;
  s.problems = problems;
  s.classes = classes;
  s.channels = 4;
  s.train_per_class = 20;
  s.val_per_class = 6;
  s.test_per_class = 10;
  s.min_length = 4;
  s.max_length = 10;
  return generate_synthetic(s);
}

SequenceSpec spec_for(RoutingMode mode, Baseline baseline, std::uint64_t seed = 0) {
  SequenceSpec spec;
  spec.model.backbone.channels = 4;
  spec.model.pooling = {PoolingKind::kMoments, 2};
  spec.model.mode = mode;
  spec.model.baseline = baseline;
  spec.model.bottleneck = 4;
  spec.train.lr = 0.01;
  spec.train.max_epochs = 3;
  spec.train.patience = 2;
  spec.seed = seed;
  return spec;
}

}  // namespace

TEST(AccuracyMatrix, RowsWrittenOnce) {
  AccuracyMatrix m(2);
  const std::vector<double> row{0.5, 0.25};
  EXPECT_FALSE(m.complete());
  m.set_row(0, row);
  EXPECT_EQ(kind_of([&] { m.set_row(0, row); }), ErrorKind::kState);
  m.set_row(1, row);
  EXPECT_TRUE(m.complete());
}

TEST(AccuracyMatrix, EntriesMustBeProbabilities) {
  AccuracyMatrix m(2);
  const std::vector<double> bad{0.5, 1.5};
  EXPECT_THROW(m.set_row(0, bad), Error);
}

TEST(ProblemOrder, DeterministicPermutation) {
  const auto a = problem_order(7, 3, true), b = problem_order(7, 3, true);
  EXPECT_EQ(a, b);
  std::vector<std::size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  std::vector<std::size_t> ids(7);
  std::iota(ids.begin(), ids.end(), 0);
  EXPECT_EQ(sorted, ids);
  EXPECT_EQ(problem_order(7, 3, false), ids);
  bool differs = false;
  for (std::uint64_t s = 0; s < 5 && !differs; ++s) differs = problem_order(7, s, true) != a;
  EXPECT_TRUE(differs);
}

TEST(Curves, ByHand) {
  MatrixD a{{0.1, 0.2, 0.3}, {0.4, 0.5, 0.6}, {0.5, 0.7, 0.9}};
  const auto c = per_problem_curves(a);
  EXPECT_NEAR(c.mean_all[2], 0.7, 1e-15);
  EXPECT_NEAR(c.mean_seen[2], 0.7, 1e-15);
  EXPECT_NEAR(c.mean_seen[0], 0.1, 1e-15);
  EXPECT_NEAR(c.mean_seen[1], 0.45, 1e-15);
}

TEST(Curves, SingleProblemAndConstant) {
  const auto one = per_problem_curves(MatrixD(1, 1, 0.8));
  EXPECT_EQ(one.mean_all, std::vector<double>{0.8});
  EXPECT_EQ(one.mean_seen, std::vector<double>{0.8});
  const auto c = per_problem_curves(MatrixD(3, 3, 0.25));
  for (std::size_t t = 0; t < 3; ++t) {
    EXPECT_DOUBLE_EQ(c.mean_all[t], 0.25);
    EXPECT_DOUBLE_EQ(c.mean_seen[t], 0.25);
  }
}

TEST(MeanMatrix, SingleSeedIsIdentity) {
  MatrixD a{{0.1, 0.2}, {0.3, 0.4}};
  EXPECT_EQ(mean_matrix(std::span(&a, 1)), a);
}

TEST(RunSequence, SdlIsolatesProblems) {
  InMemoryProvider provider(small_stream(2));
  auto r = run_sequence(provider, spec_for(RoutingMode::kTil, Baseline::kSdl));
  EXPECT_TRUE(r.accuracy.complete());
  EXPECT_EQ(r.accuracy(1, 0), r.accuracy(0, 0));
}

TEST(RunSequence, ZeroLearningRateGivesIdenticalRows) {
  InMemoryProvider provider(small_stream(2));
  auto spec = spec_for(RoutingMode::kDil, Baseline::kFt);
  spec.train.lr = 0.0;
  auto r = run_sequence(provider, spec);
  for (std::size_t j = 0; j < 2; ++j) EXPECT_EQ(r.accuracy(0, j), r.accuracy(1, j));
}

TEST(RunSequence, HopTilLowerTriangleConstant) {
  InMemoryProvider provider(small_stream(5));
  auto r = run_sequence(provider, spec_for(RoutingMode::kTil, Baseline::kHop, 4));
  ASSERT_EQ(r.accuracy.size(), 5u);
  for (std::size_t j = 0; j < 5; ++j)
    for (std::size_t i = j; i < 5; ++i) {
      EXPECT_EQ(r.accuracy(i, j), r.accuracy(j, j));
      EXPECT_EQ(r.macro_f1(i, j), r.macro_f1(j, j));
    }
  EXPECT_EQ(r.metrics.forgetting, 0.0);
  EXPECT_EQ(r.metrics.backward_transfer, 0.0);
}

TEST(RunSequence, HoldsOneTrainingSplitAtATime) {
  InMemoryProvider provider(small_stream(4));
  run_sequence(provider, spec_for(RoutingMode::kTil, Baseline::kFt));
  EXPECT_EQ(provider.peak_training_splits(), 1u);
  EXPECT_EQ(provider.live_training_splits(), 0u);
}

TEST(RunSequence, ReportsOrderTimingsAndParameters) {
  InMemoryProvider provider(small_stream(3));
  auto spec = spec_for(RoutingMode::kTil, Baseline::kHop, 9);
  auto r = run_sequence(provider, spec);
  EXPECT_EQ(r.order, problem_order(3, 9, true));
  EXPECT_EQ(r.stage_seconds.size(), 3u);
  ASSERT_EQ(r.parameters_per_stage.size(), 3u);
  EXPECT_EQ(r.parameters_per_stage[0], parameters_per_problem(4, 4, 8, 2));
  EXPECT_FALSE(r.history.empty());
  ASSERT_TRUE(r.model.has_value());
}

TEST(RunSequence, SameSeedIsBitIdentical) {
  auto spec = spec_for(RoutingMode::kDil, Baseline::kHop, 2);
  InMemoryProvider p1(small_stream(3)), p2(small_stream(3));
  auto a = run_sequence(p1, spec), b = run_sequence(p2, spec);
  EXPECT_EQ(a.accuracy.values(), b.accuracy.values());
  EXPECT_EQ(a.macro_f1.values(), b.macro_f1.values());
  EXPECT_EQ(*a.model, *b.model);
}

TEST(RunSequence, DilClassMismatchIsConfigError) {
  auto problems = small_stream(2);
  auto three = small_stream(1, 3);
  problems[1] = three[0];
  InMemoryProvider provider(problems);
  EXPECT_EQ(kind_of([&] { run_sequence(provider, spec_for(RoutingMode::kDil, Baseline::kFt)); }),
            ErrorKind::kConfig);
}

TEST(RunSequence, NeedsTwoProblems) {
  InMemoryProvider provider(small_stream(1));
  EXPECT_THROW(run_sequence(provider, spec_for(RoutingMode::kTil, Baseline::kHop)), Error);
}

TEST(FileProvider, ReadsHopdDirectories) {
  hop::testing::TempDir dir("provider");
  auto problems = small_stream(2);
  std::vector<ProblemSource> sources;
  for (const auto& p : problems) {
    write_dataset(dir / p.name, p);
    sources.push_back({p.name, dir / p.name, ProblemFormat::kHopd, 0});
  }
  BackboneSpec backbone;
  backbone.channels = 4;
  FileProvider files(sources, backbone);
  InMemoryProvider memory(problems);
  EXPECT_EQ(files.info(1).classes, 2u);
  EXPECT_EQ(files.load_test(1), memory.load_test(1));
  auto spec = spec_for(RoutingMode::kTil, Baseline::kHop);
  EXPECT_EQ(run_sequence(files, spec).accuracy.values(),
            run_sequence(memory, spec).accuracy.values());
}

TEST(FileProvider, TextProblemsNeedHashingBackbone) {
  hop::testing::TempDir dir("text-provider");
  for (const char* split : {"train", "val", "test"})
    io::write_file(dir / "p" / (std::string(split) + ".tsv"), "0\tgood\n1\tbad\n");
  std::vector<ProblemSource> sources{{"p", dir / "p", ProblemFormat::kText, 2}};
  BackboneSpec file_backbone;
  file_backbone.channels = 4;
  EXPECT_EQ(kind_of([&] { FileProvider(sources, file_backbone); }), ErrorKind::kConfig);
  BackboneSpec hashing = file_backbone;
  hashing.kind = BackboneKind::kHashing;
  FileProvider provider(sources, hashing);
  const auto test = provider.load_test(0);
  ASSERT_EQ(test.size(), 2u);
  EXPECT_EQ(test[0].tokens, hash_embed("good", 4, hashing.max_len, hashing.seed));
}
