#include "hop/train.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "hop/metrics.hpp"

namespace hop {

namespace {

constexpr std::size_t kEvalChunk = 256;

std::vector<Matrix> snapshot(const TrainableSet& set) {
  std::vector<Matrix> out;
  for (const Matrix* t : set.tensors()) out.push_back(*t);
  return out;
}

void restore(const TrainableSet& set, const std::vector<Matrix>& saved) {
  auto tensors = set.tensors();
  for (std::size_t i = 0; i < tensors.size(); ++i) *tensors[i] = saved[i];
}

}  // namespace

std::string format_epoch(const EpochRecord& r) {
  nlohmann::ordered_json j = {{"problem", r.problem},
                              {"epoch", r.epoch},
                              {"train_loss", r.train_loss},
                              {"val_loss", r.val_loss},
                              {"val_acc", r.val_accuracy}};
  return j.dump();
}

Evaluation evaluate(const Pipeline<float>& pipe, const SampleList& split, std::size_t classes,
                    std::size_t channels) {
  require(!split.empty(), ErrorKind::kData, "evaluate: empty split");
  Evaluation e;
  std::vector<std::size_t> labels;
  double loss_sum = 0.0;
  for (std::size_t start = 0; start < split.size(); start += kEvalChunk) {
    const std::size_t n = std::min(kEvalChunk, split.size() - start);
    const auto chunk = std::span<const EmbeddedSequence>(split).subspan(start, n);
    const TokenBatch<float> batch = make_batch(chunk, channels);
    const Matrix logits = pipeline_logits(pipe, batch);
    loss_sum += cross_entropy_loss(logits, batch.labels) * static_cast<double>(n);
    for (std::size_t b = 0; b < n; ++b) {
      e.predictions.push_back(argmax(logits.row(b)));
      labels.push_back(batch.labels[b]);
    }
  }
  e.accuracy = accuracy(labels, e.predictions);
  e.macro_f1 = macro_f1(labels, e.predictions, classes);
  e.loss = loss_sum / static_cast<double>(split.size());
  return e;
}

Evaluation evaluate(const Model& model, const SampleList& split,
                    std::optional<std::size_t> problem) {
  const std::size_t routed = model.config().mode == RoutingMode::kDil
                                 ? model.problems().back()
                                 : problem.value_or(std::numeric_limits<std::size_t>::max());
  return evaluate(model.pipeline(problem), split, model.classes(routed),
                  model.backbone().channels);
}

TrainResult train_problem(Model& model, std::size_t problem, const SampleList& train,
                          const SampleList& val, const TrainConfig& cfg,
                          const EpochObserver& observer) {
  cfg.validate();
  require(!train.empty(), ErrorKind::kData, "train_problem: empty training split");
  require(!val.empty(), ErrorKind::kData, "train_problem: empty validation split");
  require(model.knows(problem), ErrorKind::kState,
          "train_problem: problem " + std::to_string(problem) + " was not initialized");

  const TrainableSet params = model.trainable(problem);
  std::vector<Matrix*> tensors = params.tensors();
  AdamState adam = AdamState::for_params(tensors);
  Rng rng(derive_seed(cfg.seed, {0x7EA1, problem}));
  const std::size_t channels = model.backbone().channels;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result;
  double best_val = std::numeric_limits<double>::infinity();
  std::vector<Matrix> best = snapshot(params);
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle(std::span<std::size_t>(order), rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      std::vector<const EmbeddedSequence*> members;
      members.reserve(n);
      for (std::size_t k = 0; k < n; ++k) members.push_back(&train[order[start + k]]);
      const TokenBatch<float> batch = make_batch(members, channels);

      Pipeline<float> pipe = model.pipeline(problem);
      pipe.dropout = cfg.dropout;
      PipelineGradients<float> g = pipeline_gradients(pipe, batch, rng);
      if (!std::isfinite(g.loss))
        fail(ErrorKind::kDivergence, "non-finite training loss at problem " +
                                         std::to_string(problem) + ", epoch " +
                                         std::to_string(epoch) + ", batch starting at " +
                                         std::to_string(start));
      loss_sum += g.loss * static_cast<double>(n);

      std::vector<const Matrix*> grads;
      for (const Matrix* t : g.adapter->tensors()) grads.push_back(t);
      for (const Matrix* t : g.head.tensors()) grads.push_back(t);
      adam_step(tensors, grads, adam, cfg);
    }

    const Evaluation v = evaluate(model.pipeline(problem), val, model.classes(problem), channels);
    require(std::isfinite(v.loss), ErrorKind::kDivergence,
            "non-finite validation loss at problem " + std::to_string(problem) + ", epoch " +
                std::to_string(epoch));
    EpochRecord rec{problem, epoch, loss_sum / static_cast<double>(train.size()), v.loss,
                    v.accuracy};
    result.history.push_back(rec);
    if (observer) observer(rec, model);

    if (v.loss < best_val) {
      best_val = v.loss;
      best = snapshot(params);
      result.best_epoch = epoch;
      stale = 0;
    } else if (++stale >= cfg.patience) {
      result.stopped_early = true;
      break;
    }
  }
  restore(params, best);
  return result;
}

}  // namespace hop
