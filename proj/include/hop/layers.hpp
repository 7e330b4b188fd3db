#pragma once

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "hop/matrix.hpp"
#include "hop/ops.hpp"
#include "hop/pooling.hpp"
#include "hop/rng.hpp"

namespace hop {

/// Residual bottleneck adapter applied token-wise:
///   y = x + relu(x · W_down + b_down) · W_up + b_up
/// Biases are 1×N matrices so every parameter is a matrix.
template <typename T>
struct AdapterParams {
  BasicMatrix<T> w_down;  // Q×A
  BasicMatrix<T> b_down;  // 1×A
  BasicMatrix<T> w_up;    // A×Q
  BasicMatrix<T> b_up;    // 1×Q

  std::size_t channels() const { return w_down.rows(); }
  std::size_t bottleneck() const { return w_down.cols(); }
  std::size_t parameter_count() const {
    return w_down.size() + b_down.size() + w_up.size() + b_up.size();
  }

  std::array<BasicMatrix<T>*, 4> tensors() { return {&w_down, &b_down, &w_up, &b_up}; }
  std::array<const BasicMatrix<T>*, 4> tensors() const {
    return {&w_down, &b_down, &w_up, &b_up};
  }

  /// Fan-in uniform down-projection, zero up-projection: identity at init.
  static AdapterParams initial(std::size_t channels, std::size_t bottleneck, Rng& rng);
  static AdapterParams zeros_like(const AdapterParams& other);

  friend bool operator==(const AdapterParams&, const AdapterParams&) = default;
};

/// Two-layer MLP head: width p·Q hidden layer with ReLU, then N_C logits.
template <typename T>
struct HeadParams {
  BasicMatrix<T> w1;  // W×W
  BasicMatrix<T> b1;  // 1×W
  BasicMatrix<T> w2;  // W×N_C
  BasicMatrix<T> b2;  // 1×N_C

  std::size_t input_width() const { return w1.rows(); }
  std::size_t classes() const { return w2.cols(); }
  std::size_t parameter_count() const { return w1.size() + b1.size() + w2.size() + b2.size(); }

  std::array<BasicMatrix<T>*, 4> tensors() { return {&w1, &b1, &w2, &b2}; }
  std::array<const BasicMatrix<T>*, 4> tensors() const { return {&w1, &b1, &w2, &b2}; }

  static HeadParams initial(std::size_t input_width, std::size_t classes, Rng& rng);
  static HeadParams zeros_like(const HeadParams& other);

  friend bool operator==(const HeadParams&, const HeadParams&) = default;
};

template <typename T>
struct AdapterCache {
  BasicMatrix<T> input;
  BasicMatrix<T> pre;     // x · W_down + b_down
  BasicMatrix<T> hidden;  // relu(pre)
};

template <typename T>
BasicMatrix<T> adapter_forward(const AdapterParams<T>& params, const BasicMatrix<T>& tokens,
                               AdapterCache<T>* cache = nullptr);

/// Parameter gradients only; the backbone input is frozen.
template <typename T>
AdapterParams<T> adapter_backward(const AdapterParams<T>& params, const AdapterCache<T>& cache,
                                  const BasicMatrix<T>& grad_out);

template <typename T>
struct HeadCache {
  BasicMatrix<T> input;
  BasicMatrix<T> pre;
  BasicMatrix<T> hidden;
};

template <typename T>
BasicMatrix<T> head_forward(const HeadParams<T>& params, const BasicMatrix<T>& features,
                            HeadCache<T>* cache = nullptr);

template <typename T>
struct HeadGradients {
  HeadParams<T> params;
  BasicMatrix<T> input;
};

template <typename T>
HeadGradients<T> head_backward(const HeadParams<T>& params, const HeadCache<T>& cache,
                               const BasicMatrix<T>& grad_logits);

/// A stacked ragged batch of token matrices with labels.
template <typename T>
struct TokenBatch {
  BasicMatrix<T> tokens;
  RaggedLayout layout;
  std::vector<std::size_t> labels;

  std::size_t size() const { return layout.batch(); }
};

/// Full classifier path: adapter (optional) → pooling → dropout → head.
template <typename T>
struct Pipeline {
  const AdapterParams<T>* adapter = nullptr;  // null: no adapter
  const HeadParams<T>* head = nullptr;
  PoolingSpec pooling;
  double dropout = 0.0;
};

template <typename T>
BasicMatrix<T> pipeline_logits(const Pipeline<T>& pipe, const TokenBatch<T>& batch);

template <typename T>
struct PipelineGradients {
  double loss = 0.0;
  std::optional<AdapterParams<T>> adapter;
  HeadParams<T> head;
};

/// Training-mode forward and backward through cross-entropy.
template <typename T>
PipelineGradients<T> pipeline_gradients(const Pipeline<T>& pipe, const TokenBatch<T>& batch,
                                        Rng& rng);

/// Training-mode loss for a fixed dropout stream (finite differences).
template <typename T>
double pipeline_loss(const Pipeline<T>& pipe, const TokenBatch<T>& batch, Rng& rng);

}  // namespace hop
