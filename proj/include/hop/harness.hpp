#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hop/data.hpp"
#include "hop/matrix.hpp"
#include "hop/metrics.hpp"
#include "hop/model.hpp"
#include "hop/optim.hpp"
#include "hop/train.hpp"

namespace hop {

struct ProblemInfo {
  std::string name;
  std::size_t classes = 0;
};

/// Training data of one problem, alive only while the lease is held.
struct TrainingSplits {
  SampleList train;
  SampleList val;
};

/// Source of CL problems. Training splits are handed out one stage at a time;
/// `live_training_splits()` counts those not yet released.
class ProblemProvider {
 public:
  virtual ~ProblemProvider() = default;

  virtual std::size_t size() const = 0;
  virtual ProblemInfo info(std::size_t problem) const = 0;
  virtual std::size_t channels() const = 0;
  virtual SampleList load_test(std::size_t problem) = 0;

  class Lease {
   public:
    Lease(ProblemProvider& owner, TrainingSplits splits);
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    ~Lease();

    const TrainingSplits& splits() const { return splits_; }

   private:
    ProblemProvider& owner_;
    TrainingSplits splits_;
  };

  std::unique_ptr<Lease> lease_training(std::size_t problem);

  std::size_t live_training_splits() const { return live_; }
  std::size_t peak_training_splits() const { return peak_; }

 protected:
  virtual TrainingSplits load_training(std::size_t problem) = 0;

 private:
  std::size_t live_ = 0;
  std::size_t peak_ = 0;
};

/// Serves copies of in-memory datasets.
class InMemoryProvider : public ProblemProvider {
 public:
  explicit InMemoryProvider(std::vector<ProblemDataset> problems);

  std::size_t size() const override { return problems_.size(); }
  ProblemInfo info(std::size_t problem) const override;
  std::size_t channels() const override;
  SampleList load_test(std::size_t problem) override;

 protected:
  TrainingSplits load_training(std::size_t problem) override;

 private:
  std::vector<ProblemDataset> problems_;
};

enum class ProblemFormat { kHopd, kText };

struct ProblemSource {
  std::string name;
  std::filesystem::path path;  // directory holding train/val/test files
  ProblemFormat format = ProblemFormat::kHopd;
  std::size_t classes = 0;  // required for text problems
};

/// Reads each split from disk on demand (HOPD files or hashed text).
class FileProvider : public ProblemProvider {
 public:
  FileProvider(std::vector<ProblemSource> sources, BackboneSpec backbone);

  std::size_t size() const override { return sources_.size(); }
  ProblemInfo info(std::size_t problem) const override;
  std::size_t channels() const override { return backbone_.channels; }
  SampleList load_test(std::size_t problem) override;

 protected:
  TrainingSplits load_training(std::size_t problem) override;

 private:
  SampleList load(std::size_t problem, Split split) const;

  std::vector<ProblemSource> sources_;
  BackboneSpec backbone_;
  std::vector<ProblemInfo> infos_;
};

/// T×T matrix whose row i is written once, right after stage i.
class AccuracyMatrix {
 public:
  explicit AccuracyMatrix(std::size_t problems);

  std::size_t size() const { return values_.rows(); }
  void set_row(std::size_t stage, std::span<const double> row);
  bool complete() const;
  double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
  const MatrixD& values() const { return values_; }

 private:
  MatrixD values_;
  std::vector<bool> written_;
};

struct SequenceSpec {
  ModelConfig model;
  TrainConfig train;
  std::uint64_t seed = 0;
  /// Permute the problem order with a Fisher–Yates shuffle keyed by `seed`.
  bool permute_order = true;
};

struct SequenceResult {
  std::uint64_t seed = 0;
  std::vector<std::size_t> order;  // problem id trained at each stage
  AccuracyMatrix accuracy;
  AccuracyMatrix macro_f1;
  std::vector<double> stage_seconds;
  std::vector<std::size_t> parameters_per_stage;
  std::vector<EpochRecord> history;
  MetricsReport metrics;
  std::optional<Model> model;
};

/// Problem order for `seed` (identity when `permute` is false).
std::vector<std::size_t> problem_order(std::size_t problems, std::uint64_t seed, bool permute);

/// Trains the problems in sequence and fills both T×T matrices. Columns are
/// in stage order. Problems not yet trained are evaluated (TIL) through the
/// latest adapter and a seeded fresh head, or (DIL) through the shared model.
SequenceResult run_sequence(ProblemProvider& provider, const SequenceSpec& spec);

struct ProblemCurves {
  std::vector<double> mean_all;   // mAcc_t: row t averaged over all T columns
  std::vector<double> mean_seen;  // mAcc_{t,≤T}: row t averaged over columns 0..t
};

ProblemCurves per_problem_curves(const MatrixD& accuracy);

/// Stage-wise mean of per-seed matrices.
MatrixD mean_matrix(std::span<const MatrixD> matrices);

}  // namespace hop
