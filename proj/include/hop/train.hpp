#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hop/data.hpp"
#include "hop/model.hpp"
#include "hop/optim.hpp"

namespace hop {

struct EpochRecord {
  std::size_t problem = 0;
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

/// One structured-text (JSON) line per epoch.
std::string format_epoch(const EpochRecord& record);

struct TrainResult {
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;  // 1-based epoch whose parameters were restored
  bool stopped_early = false;
};

using EpochObserver = std::function<void(const EpochRecord&, const Model&)>;

/// Trains only the parameters `model.trainable(problem)` exposes, with Adam on
/// mini-batches of a per-epoch shuffle, early stopping on validation loss and
/// restore of the best epoch.
TrainResult train_problem(Model& model, std::size_t problem, const SampleList& train,
                          const SampleList& val, const TrainConfig& cfg,
                          const EpochObserver& observer = {});

struct Evaluation {
  double accuracy = 0.0;
  double macro_f1 = 0.0;
  double loss = 0.0;
  std::vector<std::size_t> predictions;
};

/// Inference-mode accuracy, macro-F1 and mean cross-entropy of `pipe`.
Evaluation evaluate(const Pipeline<float>& pipe, const SampleList& split, std::size_t classes,
                    std::size_t channels);

Evaluation evaluate(const Model& model, const SampleList& split,
                    std::optional<std::size_t> problem);

}  // namespace hop
