#include "hop/harness.hpp"

#include <algorithm>
#include <chrono>
#include <numeric>

#include "hop/binary_io.hpp"

namespace hop {

// -------------------------------------------------------------- providers

ProblemProvider::Lease::Lease(ProblemProvider& owner, TrainingSplits splits)
    : owner_(owner), splits_(std::move(splits)) {
  ++owner_.live_;
  owner_.peak_ = std::max(owner_.peak_, owner_.live_);
}

ProblemProvider::Lease::~Lease() { --owner_.live_; }

std::unique_ptr<ProblemProvider::Lease> ProblemProvider::lease_training(std::size_t problem) {
  return std::make_unique<Lease>(*this, load_training(problem));
}

InMemoryProvider::InMemoryProvider(std::vector<ProblemDataset> problems)
    : problems_(std::move(problems)) {
  require(!problems_.empty(), ErrorKind::kData, "no problems given");
  for (const auto& p : problems_)
    require(p.channels == problems_.front().channels, ErrorKind::kShape,
            p.name + ": channel count differs from the first problem");
}

ProblemInfo InMemoryProvider::info(std::size_t problem) const {
  const auto& p = problems_.at(problem);
  return {p.name, p.classes};
}

std::size_t InMemoryProvider::channels() const { return problems_.front().channels; }

SampleList InMemoryProvider::load_test(std::size_t problem) { return problems_.at(problem).test; }

TrainingSplits InMemoryProvider::load_training(std::size_t problem) {
  const auto& p = problems_.at(problem);
  return {p.train, p.val};
}

namespace {

std::filesystem::path split_path(const ProblemSource& s, Split split) {
  return s.path / (std::string(to_string(split)) + (s.format == ProblemFormat::kHopd ? ".hopd"
                                                                                    : ".tsv"));
}

}  // namespace

FileProvider::FileProvider(std::vector<ProblemSource> sources, BackboneSpec backbone)
    : sources_(std::move(sources)), backbone_(backbone) {
  require(!sources_.empty(), ErrorKind::kConfig, "no problems configured");
  for (const auto& s : sources_) {
    ProblemInfo info{s.name, s.classes};
    if (s.format == ProblemFormat::kHopd) {
      // Only the fixed-size header is needed here.
      const std::string bytes = io::read_file(split_path(s, Split::kTest));
      io::Reader r(bytes, split_path(s, Split::kTest).string());
      require(r.bytes(4) == kHopdMagic, ErrorKind::kFormat,
              split_path(s, Split::kTest).string() + ": bad magic, not a HOPD file");
      r.u32();
      const std::size_t q = r.u32();
      require(q == backbone_.channels, ErrorKind::kShape,
              s.name + ": file Q = " + std::to_string(q) + " but backbone Q = " +
                  std::to_string(backbone_.channels));
      info.classes = r.u32();
    } else {
      require(backbone_.kind == BackboneKind::kHashing, ErrorKind::kConfig,
              s.name + ": text problems need the hashing backbone");
      require(s.classes >= 1, ErrorKind::kConfig, s.name + ": text problems need 'classes'");
    }
    if (info.name.empty()) info.name = s.path.filename().string();
    infos_.push_back(info);
  }
}

ProblemInfo FileProvider::info(std::size_t problem) const { return infos_.at(problem); }

SampleList FileProvider::load(std::size_t problem, Split split) const {
  const auto& s = sources_.at(problem);
  SampleList out;
  if (s.format == ProblemFormat::kHopd) {
    SplitFile f = read_split(split_path(s, split), backbone_.channels, backbone_.max_len);
    require(f.classes == infos_[problem].classes, ErrorKind::kShape,
            s.name + ": N_C differs across splits");
    out = std::move(f.samples);
  } else {
    out = read_text_split(split_path(s, split), backbone_.channels, backbone_.max_len,
                          backbone_.seed);
    for (const auto& x : out)
      require(x.label < s.classes, ErrorKind::kValidation,
              s.name + ": label " + std::to_string(x.label) + " >= classes");
  }
  require(!out.empty(), ErrorKind::kData,
          s.name + "/" + std::string(to_string(split)) + ": split is empty");
  return out;
}

SampleList FileProvider::load_test(std::size_t problem) { return load(problem, Split::kTest); }

TrainingSplits FileProvider::load_training(std::size_t problem) {
  return {load(problem, Split::kTrain), load(problem, Split::kVal)};
}

// --------------------------------------------------------- accuracy matrix

AccuracyMatrix::AccuracyMatrix(std::size_t problems)
    : values_(problems, problems), written_(problems, false) {}

void AccuracyMatrix::set_row(std::size_t stage, std::span<const double> row) {
  require(stage < size(), ErrorKind::kShape, "accuracy matrix: stage out of range");
  require(row.size() == size(), ErrorKind::kShape, "accuracy matrix: row width mismatch");
  require(!written_[stage], ErrorKind::kState,
          "accuracy matrix: row " + std::to_string(stage) + " already written");
  for (std::size_t j = 0; j < row.size(); ++j) {
    require(row[j] >= 0.0 && row[j] <= 1.0, ErrorKind::kValidation,
            "accuracy matrix entries must lie in [0, 1]");
    values_(stage, j) = row[j];
  }
  written_[stage] = true;
}

bool AccuracyMatrix::complete() const {
  return std::all_of(written_.begin(), written_.end(), [](bool w) { return w; });
}

// ---------------------------------------------------------------- sequence

std::vector<std::size_t> problem_order(std::size_t problems, std::uint64_t seed, bool permute) {
  std::vector<std::size_t> order(problems);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (permute) {
    Rng rng(derive_seed(seed, {0x0DE5}));
    shuffle(std::span<std::size_t>(order), rng);
  }
  return order;
}

SequenceResult run_sequence(ProblemProvider& provider, const SequenceSpec& spec) {
  const std::size_t T = provider.size();
  require(T >= 2, ErrorKind::kConfig, "a sequence needs at least 2 problems");
  spec.model.validate();
  spec.train.validate();
  require(provider.channels() == spec.model.backbone.channels, ErrorKind::kShape,
          "problem Q = " + std::to_string(provider.channels()) + " but backbone Q = " +
              std::to_string(spec.model.backbone.channels));
  if (spec.model.mode == RoutingMode::kDil)
    for (std::size_t p = 1; p < T; ++p)
      require(provider.info(p).classes == provider.info(0).classes, ErrorKind::kConfig,
              "DIL requires every problem to share N_C (" + provider.info(p).name + " has " +
                  std::to_string(provider.info(p).classes) + ", " + provider.info(0).name +
                  " has " + std::to_string(provider.info(0).classes) + ")");

  SequenceResult result{spec.seed, problem_order(T, spec.seed, spec.permute_order),
                        AccuracyMatrix(T), AccuracyMatrix(T), {}, {}, {}, {}, std::nullopt};
  Model model(spec.model);
  TrainConfig train_cfg = spec.train;
  train_cfg.seed = derive_seed(spec.train.seed, {spec.seed});

  std::vector<std::optional<SampleList>> tests(T);
  auto test_of = [&](std::size_t problem) -> const SampleList& {
    if (!tests[problem]) tests[problem] = provider.load_test(problem);
    return *tests[problem];
  };

  const std::size_t channels = spec.model.backbone.channels;
  for (std::size_t stage = 0; stage < T; ++stage) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t current = result.order[stage];
    Rng init_rng(derive_seed(spec.seed, {0x1417, stage}));
    model.init_problem(current, provider.info(current).classes, init_rng);
    {
      auto lease = provider.lease_training(current);
      TrainResult tr = train_problem(model, current, lease->splits().train,
                                     lease->splits().val, train_cfg);
      result.history.insert(result.history.end(), tr.history.begin(), tr.history.end());
    }
    result.parameters_per_stage.push_back(model.parameter_count(current));

    std::vector<double> acc_row(T), f1_row(T);
    for (std::size_t col = 0; col < T; ++col) {
      const std::size_t target = result.order[col];
      const std::size_t classes = provider.info(target).classes;
      Evaluation e;
      if (spec.model.mode == RoutingMode::kDil || col <= stage) {
        e = evaluate(model.pipeline(spec.model.mode == RoutingMode::kDil
                                        ? std::optional<std::size_t>{}
                                        : std::optional<std::size_t>{target}),
                     test_of(target), classes, channels);
      } else {
        Rng head_rng(derive_seed(spec.seed, {0xF07, stage, col}));
        const auto head =
            HeadParams<float>::initial(spec.model.feature_width(), classes, head_rng);
        const Pipeline<float> pipe{&model.adapter(current), &head, spec.model.pooling, 0.0};
        e = evaluate(pipe, test_of(target), classes, channels);
      }
      acc_row[col] = e.accuracy;
      f1_row[col] = e.macro_f1;
    }
    result.accuracy.set_row(stage, acc_row);
    result.macro_f1.set_row(stage, f1_row);
    result.stage_seconds.push_back(
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  result.metrics = compute_metrics(result.accuracy.values(), &result.macro_f1.values());
  result.model = std::move(model);
  return result;
}

ProblemCurves per_problem_curves(const MatrixD& a) {
  require(a.rows() == a.cols() && a.rows() >= 1, ErrorKind::kShape,
          "per_problem_curves: need a non-empty square matrix");
  ProblemCurves c;
  const std::size_t T = a.rows();
  for (std::size_t t = 0; t < T; ++t) {
    double all = 0.0, seen = 0.0;
    for (std::size_t j = 0; j < T; ++j) {
      all += a(t, j);
      if (j <= t) seen += a(t, j);
    }
    c.mean_all.push_back(all / static_cast<double>(T));
    c.mean_seen.push_back(seen / static_cast<double>(t + 1));
  }
  return c;
}

MatrixD mean_matrix(std::span<const MatrixD> matrices) {
  require(!matrices.empty(), ErrorKind::kData, "mean_matrix: nothing to average");
  MatrixD out(matrices.front().rows(), matrices.front().cols());
  for (const auto& m : matrices) {
    require(m.rows() == out.rows() && m.cols() == out.cols(), ErrorKind::kShape,
            "mean_matrix: shape mismatch");
    for (std::size_t k = 0; k < m.size(); ++k) out.values()[k] += m.values()[k];
  }
  for (double& v : out.values()) v /= static_cast<double>(matrices.size());
  return out;
}

}  // namespace hop
