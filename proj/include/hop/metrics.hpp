#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "hop/data.hpp"
#include "hop/matrix.hpp"

namespace hop {

/// Fraction of positions where `predictions` equals `labels`.
double accuracy(std::span<const std::size_t> labels, std::span<const std::size_t> predictions);

/// Unweighted mean over all `classes` of per-class F1 = 2PR/(P+R). A class
/// with P + R = 0 (including one absent from both inputs) scores 0 and still
/// counts in the mean.
double macro_f1(std::span<const std::size_t> labels, std::span<const std::size_t> predictions,
                std::size_t classes);

/// Continual-learning summary of a T×T accuracy matrix a, where a(i, j) is
/// the accuracy on problem j's test set after training stage i (0-indexed).
///
///   mAcc = mean_j a(T-1, j)
///   Pla  = mean_t a(t, t)
///   BwT  = mean_{j<T-1} [a(T-1, j) − a(j, j)]
///   Forg = mean_{j<T-1} [max_{j≤i<T-1} a(i, j) − a(T-1, j)]
///   FwT  = mean of the strict upper triangle, i.e. accuracy on problems not
///          yet trained, with no random-baseline subtraction
///
/// Forgetting is taken per problem since the matrix holds per-problem
/// accuracy.
struct MetricsReport {
  double mean_accuracy = 0.0;
  std::optional<double> macro_f1;  // mean of the last row of the MF1 matrix
  double backward_transfer = 0.0;
  double forward_transfer = 0.0;
  double forgetting = 0.0;
  double plasticity = 0.0;
  std::vector<double> per_problem_forgetting;  // size T-1
  std::vector<double> per_problem_plasticity;  // size T
};

MetricsReport compute_metrics(const MatrixD& accuracy,
                              const MatrixD* macro_f1_matrix = nullptr);

/// Elementwise mean of per-seed reports (scalars and per-problem vectors).
MetricsReport average_reports(std::span<const MetricsReport> reports);

/// 1-D Wasserstein-1 distance between two empirical distributions: mean
/// |difference| of sorted samples for equal sizes, otherwise the integral of
/// |F⁻¹ − G⁻¹| over the merged quantile breakpoints.
double wasserstein_1d(std::span<const double> u, std::span<const double> v);

struct MomentDistance {
  int order = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population std over problem pairs
  std::size_t pairs = 0;
};

/// For each order k ≤ `max_order`, computes every sample's k-th central
/// moment (order 1: the mean) per channel, takes the per-channel 1-D
/// Wasserstein distance between every pair of problems and averages it over
/// channels; reports the mean and std of that distance over pairs.
std::vector<MomentDistance> moment_distance_report(std::span<const ProblemDataset> problems,
                                                   int max_order, Split split = Split::kTest);

}  // namespace hop
