#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "hop/kernels.hpp"
#include "hop/matrix.hpp"
#include "hop/rng.hpp"

namespace hop {

template <typename T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b,
                      Accumulation acc = Accumulation::kWide) {
  return kernels::matmul(a, b, acc);
}

template <typename T>
BasicMatrix<T> relu_forward(const BasicMatrix<T>& x);

/// Passes `grad_out` where x > 0; a tie at zero gets zero gradient.
template <typename T>
BasicMatrix<T> relu_backward(const BasicMatrix<T>& x, const BasicMatrix<T>& grad_out);

template <typename T>
struct LossAndGrad {
  double loss = 0.0;
  BasicMatrix<T> grad;
};

/// Mean cross-entropy of row-wise softmax; grad = (softmax − onehot) / B.
template <typename T>
LossAndGrad<T> softmax_cross_entropy(const BasicMatrix<T>& logits,
                                     std::span<const std::size_t> labels);

/// Loss only, without allocating the gradient.
template <typename T>
double cross_entropy_loss(const BasicMatrix<T>& logits, std::span<const std::size_t> labels);

using DropoutMask = std::vector<std::uint8_t>;

template <typename T>
struct DropoutResult {
  BasicMatrix<T> out;
  DropoutMask mask;  // empty when dropout was the identity
};

/// Inverted dropout. Identity at inference or when rate == 0.
template <typename T>
DropoutResult<T> dropout(const BasicMatrix<T>& x, double rate, Rng& rng, bool training);

template <typename T>
BasicMatrix<T> dropout_backward(const BasicMatrix<T>& grad_out, const DropoutMask& mask,
                                double rate);

/// Index of the largest entry; ties go to the lowest index.
template <typename T>
std::size_t argmax(std::span<const T> values);

}  // namespace hop
