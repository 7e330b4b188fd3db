#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hop/matrix.hpp"

namespace hop {

struct TrainConfig {
  double lr = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 10;
  std::size_t patience = 5;
  double dropout = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

/// First/second moment estimates for each tensor of one parameter group.
struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::uint64_t step = 0;

  /// Zero moments shaped like `params`, step 0.
  static AdamState for_params(std::span<Matrix* const> params);
};

/// One bias-corrected Adam update of every tensor in `params`.
void adam_step(std::span<Matrix* const> params, std::span<const Matrix* const> grads,
               AdamState& state, const TrainConfig& cfg);

}  // namespace hop
