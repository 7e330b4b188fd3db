#include "hop/ops.hpp"

#include <cmath>
#include <string>

namespace hop {

template <typename T>
BasicMatrix<T> relu_forward(const BasicMatrix<T>& x) {
  BasicMatrix<T> out(x.rows(), x.cols());
  auto in = x.values();
  auto o = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > T{0} ? in[i] : T{0};
  return out;
}

template <typename T>
BasicMatrix<T> relu_backward(const BasicMatrix<T>& x, const BasicMatrix<T>& grad_out) {
  require(x.rows() == grad_out.rows() && x.cols() == grad_out.cols(), ErrorKind::kShape,
          "relu_backward: shape mismatch");
  BasicMatrix<T> out(x.rows(), x.cols());
  auto in = x.values();
  auto g = grad_out.values();
  auto o = out.values();
  for (std::size_t i = 0; i < in.size(); ++i) o[i] = in[i] > T{0} ? g[i] : T{0};
  return out;
}

namespace {

template <typename T>
void check_labels(const BasicMatrix<T>& logits, std::span<const std::size_t> labels) {
  require(logits.rows() >= 1, ErrorKind::kShape, "cross entropy: empty batch");
  require(labels.size() == logits.rows(), ErrorKind::kShape,
          "cross entropy: " + std::to_string(labels.size()) + " labels for " +
              std::to_string(logits.rows()) + " rows");
  for (std::size_t label : labels)
    require(label < logits.cols(), ErrorKind::kLabel,
            "label " + std::to_string(label) + " out of range for " +
                std::to_string(logits.cols()) + " classes");
}

// log Σ exp(row) with max subtraction; returns (max, sum of shifted exps).
template <typename T>
std::pair<double, double> shifted_exp_sum(std::span<const T> row) {
  double mx = row[0];
  for (T v : row) mx = std::max(mx, static_cast<double>(v));
  double s = 0.0;
  for (T v : row) s += std::exp(static_cast<double>(v) - mx);
  return {mx, s};
}

}  // namespace

template <typename T>
double cross_entropy_loss(const BasicMatrix<T>& logits, std::span<const std::size_t> labels) {
  check_labels(logits, labels);
  double total = 0.0;
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    auto row = logits.row(b);
    auto [mx, s] = shifted_exp_sum(row);
    total += std::log(s) - (static_cast<double>(row[labels[b]]) - mx);
  }
  return total / static_cast<double>(logits.rows());
}

template <typename T>
LossAndGrad<T> softmax_cross_entropy(const BasicMatrix<T>& logits,
                                     std::span<const std::size_t> labels) {
  check_labels(logits, labels);
  const double inv_b = 1.0 / static_cast<double>(logits.rows());
  LossAndGrad<T> result{0.0, BasicMatrix<T>(logits.rows(), logits.cols())};
  double total = 0.0;
  for (std::size_t b = 0; b < logits.rows(); ++b) {
    auto row = logits.row(b);
    auto [mx, s] = shifted_exp_sum(row);
    total += std::log(s) - (static_cast<double>(row[labels[b]]) - mx);
    auto g = result.grad.row(b);
    for (std::size_t c = 0; c < row.size(); ++c) {
      double p = std::exp(static_cast<double>(row[c]) - mx) / s;
      if (c == labels[b]) p -= 1.0;
      g[c] = static_cast<T>(p * inv_b);
    }
  }
  result.loss = total * inv_b;
  return result;
}

template <typename T>
DropoutResult<T> dropout(const BasicMatrix<T>& x, double rate, Rng& rng, bool training) {
  require(rate >= 0.0 && rate < 1.0, ErrorKind::kConfig,
          "dropout rate must be in [0, 1), got " + std::to_string(rate));
  if (!training || rate == 0.0) return {x, {}};
  DropoutResult<T> r{BasicMatrix<T>(x.rows(), x.cols()), DropoutMask(x.size())};
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  auto in = x.values();
  auto out = r.out.values();
  for (std::size_t i = 0; i < in.size(); ++i) {
    r.mask[i] = rng.uniform() >= rate ? 1 : 0;
    out[i] = r.mask[i] ? in[i] * scale : T{0};
  }
  return r;
}

template <typename T>
BasicMatrix<T> dropout_backward(const BasicMatrix<T>& grad_out, const DropoutMask& mask,
                                double rate) {
  if (mask.empty()) return grad_out;
  require(mask.size() == grad_out.size(), ErrorKind::kShape, "dropout mask size mismatch");
  BasicMatrix<T> out(grad_out.rows(), grad_out.cols());
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  auto g = grad_out.values();
  auto o = out.values();
  for (std::size_t i = 0; i < g.size(); ++i) o[i] = mask[i] ? g[i] * scale : T{0};
  return out;
}

template <typename T>
std::size_t argmax(std::span<const T> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

#define HOP_INSTANTIATE_OPS(T)                                                          \
  template BasicMatrix<T> relu_forward(const BasicMatrix<T>&);                          \
  template BasicMatrix<T> relu_backward(const BasicMatrix<T>&, const BasicMatrix<T>&);  \
  template LossAndGrad<T> softmax_cross_entropy(const BasicMatrix<T>&,                  \
                                                std::span<const std::size_t>);          \
  template double cross_entropy_loss(const BasicMatrix<T>&, std::span<const std::size_t>); \
  template DropoutResult<T> dropout(const BasicMatrix<T>&, double, Rng&, bool);         \
  template BasicMatrix<T> dropout_backward(const BasicMatrix<T>&, const DropoutMask&,   \
                                           double);                                     \
  template std::size_t argmax(std::span<const T>);

HOP_INSTANTIATE_OPS(float)
HOP_INSTANTIATE_OPS(double)

}  // namespace hop
