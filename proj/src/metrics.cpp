#include "hop/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hop/pooling.hpp"

namespace hop {

double accuracy(std::span<const std::size_t> labels, std::span<const std::size_t> predictions) {
  require(labels.size() == predictions.size(), ErrorKind::kShape,
          "accuracy: label/prediction count mismatch");
  require(!labels.empty(), ErrorKind::kData, "accuracy: empty split");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) correct += labels[i] == predictions[i];
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double macro_f1(std::span<const std::size_t> labels, std::span<const std::size_t> predictions,
                std::size_t classes) {
  require(labels.size() == predictions.size(), ErrorKind::kShape,
          "macro_f1: label/prediction count mismatch");
  require(!labels.empty(), ErrorKind::kData, "macro_f1: empty split");
  require(classes >= 1, ErrorKind::kConfig, "macro_f1: classes must be >= 1");
  std::vector<std::size_t> tp(classes), fp(classes), fn(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    require(labels[i] < classes && predictions[i] < classes, ErrorKind::kLabel,
            "macro_f1: class index out of range");
    if (labels[i] == predictions[i]) {
      ++tp[labels[i]];
    } else {
      ++fp[predictions[i]];
      ++fn[labels[i]];
    }
  }
  double total = 0.0;
  for (std::size_t c = 0; c < classes; ++c) {
    const double predicted = static_cast<double>(tp[c] + fp[c]);
    const double actual = static_cast<double>(tp[c] + fn[c]);
    const double p = predicted > 0 ? static_cast<double>(tp[c]) / predicted : 0.0;
    const double r = actual > 0 ? static_cast<double>(tp[c]) / actual : 0.0;
    total += (p + r) > 0 ? 2.0 * p * r / (p + r) : 0.0;
  }
  return total / static_cast<double>(classes);
}

MetricsReport compute_metrics(const MatrixD& a, const MatrixD* f1) {
  require(a.rows() == a.cols(), ErrorKind::kShape, "accuracy matrix must be square");
  const std::size_t T = a.rows();
  require(T >= 2, ErrorKind::kSize,
          "metrics need at least 2 problems, got T = " + std::to_string(T));
  MetricsReport r;
  const std::size_t last = T - 1;
  const double inv_t = 1.0 / static_cast<double>(T);
  const double inv_prev = 1.0 / static_cast<double>(T - 1);

  for (std::size_t j = 0; j < T; ++j) r.mean_accuracy += a(last, j);
  r.mean_accuracy *= inv_t;

  for (std::size_t t = 0; t < T; ++t) {
    r.per_problem_plasticity.push_back(a(t, t));
    r.plasticity += a(t, t);
  }
  r.plasticity *= inv_t;

  for (std::size_t j = 0; j < last; ++j) {
    r.backward_transfer += a(last, j) - a(j, j);
    double best = a(j, j);
    for (std::size_t i = j + 1; i < last; ++i) best = std::max(best, a(i, j));
    const double forg = best - a(last, j);
    r.per_problem_forgetting.push_back(forg);
    r.forgetting += forg;
  }
  r.backward_transfer *= inv_prev;
  r.forgetting *= inv_prev;

  double upper = 0.0;
  for (std::size_t i = 0; i < T; ++i)
    for (std::size_t j = i + 1; j < T; ++j) upper += a(i, j);
  r.forward_transfer = 2.0 * upper / static_cast<double>(T * (T - 1));

  if (f1) {
    require(f1->rows() == T && f1->cols() == T, ErrorKind::kShape,
            "MF1 matrix shape differs from accuracy matrix");
    double s = 0.0;
    for (std::size_t j = 0; j < T; ++j) s += (*f1)(last, j);
    r.macro_f1 = s * inv_t;
  }
  return r;
}

MetricsReport average_reports(std::span<const MetricsReport> reports) {
  require(!reports.empty(), ErrorKind::kData, "average_reports: no reports");
  MetricsReport out = reports.front();
  const double n = static_cast<double>(reports.size());
  auto mean_of = [&](auto field) {
    double s = 0.0;
    for (const auto& r : reports) s += field(r);
    return s / n;
  };
  out.mean_accuracy = mean_of([](const MetricsReport& r) { return r.mean_accuracy; });
  out.backward_transfer = mean_of([](const MetricsReport& r) { return r.backward_transfer; });
  out.forward_transfer = mean_of([](const MetricsReport& r) { return r.forward_transfer; });
  out.forgetting = mean_of([](const MetricsReport& r) { return r.forgetting; });
  out.plasticity = mean_of([](const MetricsReport& r) { return r.plasticity; });
  if (out.macro_f1)
    out.macro_f1 = mean_of([](const MetricsReport& r) { return r.macro_f1.value_or(0.0); });
  for (std::size_t j = 0; j < out.per_problem_forgetting.size(); ++j)
    out.per_problem_forgetting[j] =
        mean_of([j](const MetricsReport& r) { return r.per_problem_forgetting.at(j); });
  for (std::size_t j = 0; j < out.per_problem_plasticity.size(); ++j)
    out.per_problem_plasticity[j] =
        mean_of([j](const MetricsReport& r) { return r.per_problem_plasticity.at(j); });
  return out;
}

double wasserstein_1d(std::span<const double> u, std::span<const double> v) {
  require(!u.empty() && !v.empty(), ErrorKind::kData, "wasserstein_1d: empty sample");
  std::vector<double> a(u.begin(), u.end()), b(v.begin(), v.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / static_cast<double>(a.size());
  }
  // Walk the merged quantile grid {i/n} ∪ {j/m}; both inverse CDFs are
  // constant between consecutive breakpoints. Breakpoints are compared as
  // exact cross products i·m vs j·n.
  const std::size_t n = a.size(), m = b.size();
  std::size_t i = 0, j = 0;
  double total = 0.0;
  std::size_t prev_num = 0;  // current position t = prev_num / (n·m)
  while (i < n && j < m) {
    const std::size_t next_a = (i + 1) * m;
    const std::size_t next_b = (j + 1) * n;
    const std::size_t next = std::min(next_a, next_b);
    total += static_cast<double>(next - prev_num) * std::abs(a[i] - b[j]);
    prev_num = next;
    if (next_a == next) ++i;
    if (next_b == next) ++j;
  }
  return total / static_cast<double>(n * m);
}

std::vector<MomentDistance> moment_distance_report(std::span<const ProblemDataset> problems,
                                                   int max_order, Split split) {
  require(problems.size() >= 2, ErrorKind::kData,
          "moment_distance_report needs at least 2 problems");
  require(max_order >= 1 && max_order <= kMaxMomentOrder, ErrorKind::kConfig,
          "moment_distance_report: order must be in [1, " + std::to_string(kMaxMomentOrder) + "]");
  const std::size_t Q = problems.front().channels;
  for (const auto& p : problems)
    require(p.channels == Q, ErrorKind::kShape, "moment_distance_report: Q differs across problems");

  // features[t][k-1][q] = per-sample k-th moment values of channel q.
  const auto P = static_cast<std::size_t>(max_order);
  std::vector<std::vector<std::vector<std::vector<double>>>> features(problems.size());
  for (std::size_t t = 0; t < problems.size(); ++t) {
    const SampleList& samples = problems[t].split(split);
    require(!samples.empty(), ErrorKind::kData, problems[t].name + ": split is empty");
    features[t].assign(P, std::vector<std::vector<double>>(Q));
    for (const auto& s : samples) {
      const auto m = central_moments(s.tokens.cast<double>(), max_order);
      for (std::size_t k = 0; k < P; ++k)
        for (std::size_t q = 0; q < Q; ++q) features[t][k][q].push_back(m.values[k * Q + q]);
    }
  }

  std::vector<MomentDistance> out;
  for (std::size_t k = 0; k < P; ++k) {
    std::vector<double> distances;
    for (std::size_t a = 0; a < problems.size(); ++a) {
      for (std::size_t b = a + 1; b < problems.size(); ++b) {
        double s = 0.0;
        for (std::size_t q = 0; q < Q; ++q)
          s += wasserstein_1d(features[a][k][q], features[b][k][q]);
        distances.push_back(s / static_cast<double>(Q));
      }
    }
    MomentDistance d;
    d.order = static_cast<int>(k + 1);
    d.pairs = distances.size();
    for (double x : distances) d.mean += x;
    d.mean /= static_cast<double>(distances.size());
    for (double x : distances) d.stddev += (x - d.mean) * (x - d.mean);
    d.stddev = std::sqrt(d.stddev / static_cast<double>(distances.size()));
    out.push_back(d);
  }
  return out;
}

}  // namespace hop
