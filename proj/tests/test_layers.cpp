#include <gtest/gtest.h>

#include <cmath>

#include "hop/layers.hpp"
#include "hop/ops.hpp"
#include "support.hpp"

using namespace hop;
using hop::testing::random_matrix;

namespace hop {
void PrintTo(const PoolingSpec& spec, std::ostream* os) { *os << spec.describe(); }
}  // namespace hop

namespace {

TokenBatch<double> random_batch(Rng& rng, std::size_t batch, std::size_t channels,
                                std::size_t classes) {
  TokenBatch<double> b;
  b.layout.offsets = {0};
  for (std::size_t i = 0; i < batch; ++i) {
    b.layout.offsets.push_back(b.layout.offsets.back() + 2 + rng.below(5));
    b.labels.push_back(rng.below(classes));
  }
  b.tokens = random_matrix<double>(b.layout.offsets.back(), channels, rng);
  return b;
}

// Adapter with a non-zero up-projection so every path carries gradient.
AdapterParams<double> live_adapter(std::size_t q, std::size_t a, Rng& rng) {
  auto p = AdapterParams<double>::initial(q, a, rng);
  p.w_up = random_matrix<double>(a, q, rng, -0.5, 0.5);
  p.b_up = random_matrix<double>(1, q, rng, -0.1, 0.1);
  p.b_down = random_matrix<double>(1, a, rng, -0.1, 0.1);
  return p;
}

}  // namespace

TEST(Adapter, ZeroUpProjectionIsIdentity) {
  Rng rng(30);
  auto p = AdapterParams<float>::initial(6, 4, rng);
  EXPECT_EQ(p.w_up, Matrix(4, 6, 0.0f));
  EXPECT_EQ(p.b_up, Matrix(1, 6, 0.0f));
  Matrix x = random_matrix<float>(9, 6, rng);
  EXPECT_EQ(adapter_forward(p, x), x);
}

TEST(Adapter, InitialDownProjectionIsFanInBounded) {
  Rng rng(31);
  auto p = AdapterParams<double>::initial(16, 8, rng);
  const double bound = 1.0 / std::sqrt(16.0);
  for (double v : p.w_down.values()) EXPECT_LE(std::abs(v), bound);
  EXPECT_EQ(p.parameter_count(), 16u * 8 + 8 + 8 * 16 + 16);
}

TEST(Head, ZeroWeightsGiveZeroLogitsAndLogCLoss) {
  Rng rng(32);
  auto head = HeadParams<double>::zeros_like(HeadParams<double>::initial(6, 3, rng));
  auto batch = random_batch(rng, 4, 2, 3);
  auto adapter = AdapterParams<double>::initial(2, 3, rng);
  Pipeline<double> pipe{&adapter, &head, {PoolingKind::kMoments, 3}, 0.0};
  MatrixD logits = pipeline_logits(pipe, batch);
  EXPECT_EQ(logits.rows(), 4u);
  EXPECT_EQ(logits.cols(), 3u);
  EXPECT_EQ(logits, MatrixD(4, 3, 0.0));
  Rng drop(0);
  EXPECT_NEAR(pipeline_loss(pipe, batch, drop), std::log(3.0), 1e-15);
}

TEST(Head, ShapesFollowPooledWidth) {
  Rng rng(33);
  auto head = HeadParams<float>::initial(24, 5, rng);
  EXPECT_EQ(head.w1.rows(), 24u);
  EXPECT_EQ(head.w1.cols(), 24u);
  EXPECT_EQ(head.w2.rows(), 24u);
  EXPECT_EQ(head.w2.cols(), 5u);
  EXPECT_EQ(head.b1, Matrix(1, 24, 0.0f));
  EXPECT_EQ(head.b2, Matrix(1, 5, 0.0f));
}

// Every parameter coordinate of adapter and head, for each pooling kind,
// against central differences of the training loss.
class PipelineGradient : public ::testing::TestWithParam<PoolingSpec> {};

TEST_P(PipelineGradient, MatchesFiniteDifferences) {
  const PoolingSpec spec = GetParam();
  Rng rng(34);
  const std::size_t Q = 3, A = 2, C = 3;
  auto adapter = live_adapter(Q, A, rng);
  auto head = HeadParams<double>::initial(spec.output_width(Q), C, rng);
  head.b1 = random_matrix<double>(1, head.b1.cols(), rng, -0.1, 0.1);
  auto batch = random_batch(rng, 3, Q, C);
  Pipeline<double> pipe{&adapter, &head, spec, 0.3};

  Rng stream(77);
  auto grads = pipeline_gradients(pipe, batch, stream);
  ASSERT_TRUE(grads.adapter.has_value());

  auto loss_at = [&] {
    Rng s(77);
    return pipeline_loss(pipe, batch, s);
  };
  auto check = [&](BasicMatrix<double>& param, const BasicMatrix<double>& grad,
                   const char* name) {
    const double h = 1e-6;
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double saved = param.data()[i];
      param.data()[i] = saved + h;
      const double up = loss_at();
      param.data()[i] = saved - h;
      const double down = loss_at();
      param.data()[i] = saved;
      const double fd = (up - down) / (2 * h);
      EXPECT_LT(hop::testing::relative_error(grad.data()[i], fd), 1e-4)
          << spec.describe() << " " << name << "[" << i << "] analytic " << grad.data()[i]
          << " fd " << fd;
    }
  };
  auto ap = adapter.tensors();
  auto ag = grads.adapter->tensors();
  const char* anames[] = {"w_down", "b_down", "w_up", "b_up"};
  for (std::size_t t = 0; t < 4; ++t) check(*ap[t], *ag[t], anames[t]);
  auto hp = head.tensors();
  auto hg = grads.head.tensors();
  const char* hnames[] = {"w1", "b1", "w2", "b2"};
  for (std::size_t t = 0; t < 4; ++t) check(*hp[t], *hg[t], hnames[t]);
}

INSTANTIATE_TEST_SUITE_P(
    AllKinds, PipelineGradient,
    ::testing::Values(PoolingSpec{PoolingKind::kCls, 1}, PoolingSpec{PoolingKind::kAvg, 1},
                      PoolingSpec{PoolingKind::kMax, 1}, PoolingSpec{PoolingKind::kAvgMax, 1},
                      PoolingSpec{PoolingKind::kStdDev, 1}, PoolingSpec{PoolingKind::kMoments, 2},
                      PoolingSpec{PoolingKind::kMoments, 3},
                      PoolingSpec{PoolingKind::kMomentsCls, 3}),
    [](const auto& info) {
      return std::string(to_string(info.param.kind)) + std::to_string(info.param.order);
    });

TEST(Pipeline, NoAdapterMatchesIdentityAdapter) {
  Rng rng(35);
  auto adapter = AdapterParams<float>::initial(4, 3, rng);
  auto head = HeadParams<float>::initial(12, 2, rng);
  TokenBatch<float> batch;
  batch.layout.offsets = {0, 5, 7};
  batch.tokens = random_matrix<float>(7, 4, rng);
  batch.labels = {0, 1};
  Pipeline<float> with{&adapter, &head, {PoolingKind::kMoments, 3}, 0.0};
  Pipeline<float> without{nullptr, &head, {PoolingKind::kMoments, 3}, 0.0};
  EXPECT_EQ(pipeline_logits(with, batch), pipeline_logits(without, batch));
}
