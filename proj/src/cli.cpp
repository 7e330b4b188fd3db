#include "hop/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdio>
#include <exception>
#include <iostream>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "hop/binary_io.hpp"
#include "hop/harness.hpp"
#include "hop/pooling.hpp"

namespace hop::cli {

using nlohmann::json;
using nlohmann::ordered_json;
namespace fs = std::filesystem;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig:
    case ErrorKind::kRouting:
    case ErrorKind::kState:
      return kUsage;
    case ErrorKind::kDivergence:
      return kDivergence;
    default:
      return kData;
  }
}

std::string error_line(ErrorKind kind, const std::string& message) {
  ordered_json j = {{"error", to_string(kind)},
                    {"exit_code", exit_code_for(kind)},
                    {"message", message}};
  return j.dump();
}

double round9(double v) {
  if (!std::isfinite(v)) return v;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return std::strtod(buf, nullptr);
}

std::string format_matrix_csv(const MatrixD& m) {
  std::string out;
  char buf[32];
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.9g", m(i, j));
      if (j) out += ',';
      out += buf;
    }
    out += '\n';
  }
  return out;
}

MatrixD parse_matrix_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      const auto first = cell.find_first_not_of(" \t");
      const auto last = cell.find_last_not_of(" \t");
      require(first != std::string::npos, ErrorKind::kParse,
              "line " + std::to_string(lineno) + ": empty cell");
      cell = cell.substr(first, last - first + 1);
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      require(end == cell.c_str() + cell.size() && std::isfinite(v), ErrorKind::kParse,
              "line " + std::to_string(lineno) + ": not a number: '" + cell + "'");
      row.push_back(v);
    }
    if (!line.empty() && line.back() == ',')
      fail(ErrorKind::kParse, "line " + std::to_string(lineno) + ": trailing comma");
    if (!rows.empty())
      require(row.size() == rows.front().size(), ErrorKind::kParse,
              "ragged CSV: line " + std::to_string(lineno) + " has " +
                  std::to_string(row.size()) + " values, expected " +
                  std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorKind::kParse, "matrix CSV is empty");
  require(rows.size() == rows.front().size(), ErrorKind::kParse,
          "matrix must be square, got " + std::to_string(rows.size()) + "x" +
              std::to_string(rows.front().size()));
  MatrixD m(rows.size(), rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows.size(); ++j) m(i, j) = rows[i][j];
  return m;
}

ordered_json to_json(const MetricsReport& r) {
  auto rounded = [](const std::vector<double>& v) {
    std::vector<double> out;
    for (double x : v) out.push_back(round9(x));
    return out;
  };
  ordered_json j = {{"mAcc", round9(r.mean_accuracy)}};
  j["MF1"] = r.macro_f1 ? ordered_json(round9(*r.macro_f1)) : ordered_json(nullptr);
  j["BwT"] = round9(r.backward_transfer);
  j["FwT"] = round9(r.forward_transfer);
  j["Forg"] = round9(r.forgetting);
  j["Pla"] = round9(r.plasticity);
  j["per_problem_forgetting"] = rounded(r.per_problem_forgetting);
  j["per_problem_plasticity"] = rounded(r.per_problem_plasticity);
  return j;
}

namespace {

template <typename Fn>
int guarded(std::ostream& err, Fn&& body) {
  try {
    return body();
  } catch (const Error& e) {
    err << error_line(e.kind(), e.what()) << '\n';
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << error_line(ErrorKind::kIo, e.what()) << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << error_line(ErrorKind::kData, e.what()) << '\n';
    return kData;
  }
}

void write_text(const fs::path& path, const std::string& text) { io::write_file(path, text); }

std::unique_ptr<ProblemProvider> make_provider(const RunConfig& cfg,
                                               const std::vector<ProblemDataset>& synth) {
  if (cfg.data.synthetic) return std::make_unique<InMemoryProvider>(synth);
  return std::make_unique<FileProvider>(cfg.data.problems, cfg.model.backbone);
}

ordered_json run_metrics_json(const RunConfig& cfg, const std::vector<SequenceResult>& runs,
                              const std::vector<std::string>& names,
                              const std::optional<std::vector<MomentDistance>>& distances) {
  std::vector<MetricsReport> reports;
  ordered_json per_seed = ordered_json::array();
  for (const auto& r : runs) {
    reports.push_back(r.metrics);
    ordered_json entry = {{"seed", r.seed}, {"order", r.order}};
    const ordered_json fields = to_json(r.metrics);
    for (auto it = fields.begin(); it != fields.end(); ++it) entry[it.key()] = it.value();
    per_seed.push_back(entry);
  }
  const std::size_t T = names.size();
  ordered_json params = ordered_json::array();
  const auto& first = runs.front();
  for (std::size_t stage = 0; stage < T; ++stage)
    params.push_back({{"problem", names[first.order[stage]]},
                      {"trainable_parameters", first.parameters_per_stage[stage]}});

  ordered_json j = {
      {"mode", to_string(cfg.model.mode)},
      {"baseline", to_string(cfg.model.baseline)},
      {"pooling", cfg.model.pooling.describe()},
      {"problems", T},
      {"problem_names", names},
      {"seeds", cfg.seeds},
      {"definitions",
       {{"FwT", "mean of the strict upper triangle of the accuracy matrix (raw accuracy)"},
        {"Forg", "mean over problems j<T of max_{j<=i<T} a[i][j] - a[T][j]"},
        {"seed_mean", "metrics averaged over seeds; matrices averaged by stage position"}}},
      {"mean", to_json(average_reports(reports))},
      {"per_seed", per_seed},
      {"trainable_parameters", params}};
  if (distances) {
    ordered_json d = ordered_json::array();
    for (const auto& m : *distances)
      d.push_back({{"order", m.order},
                   {"mean", round9(m.mean)},
                   {"std", round9(m.stddev)},
                   {"pairs", m.pairs}});
    j["moment_distances"] = d;
  }
  return j;
}

std::vector<SequenceResult> run_all_seeds(const RunConfig& cfg,
                                          const std::vector<ProblemDataset>& synth,
                                          std::size_t jobs) {
  const std::size_t n = cfg.seeds.size();
  std::vector<std::optional<SequenceResult>> results(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        auto provider = make_provider(cfg, synth);
        SequenceSpec spec{cfg.model, cfg.train, cfg.seeds[k], cfg.permute_order};
        results[k] = run_sequence(*provider, spec);
      } catch (...) {
        errors[k] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::clamp<std::size_t>(jobs, 1, n);
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  std::vector<SequenceResult> out;
  for (auto& r : results) out.push_back(std::move(*r));
  return out;
}

}  // namespace

int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto started = std::chrono::steady_clock::now();
    RunConfig cfg = load_run_config(options.config);
    if (options.out) cfg.output_dir = *options.out;
    if (options.seeds) cfg.seeds = *options.seeds;
    require(options.jobs >= 1, ErrorKind::kConfig, "--jobs must be >= 1");
    cfg.validate();

    std::vector<ProblemDataset> synth;
    if (cfg.data.synthetic) synth = generate_synthetic(*cfg.data.synthetic);
    auto probe = make_provider(cfg, synth);
    std::vector<std::string> names;
    for (std::size_t p = 0; p < probe->size(); ++p) names.push_back(probe->info(p).name);

    std::optional<std::vector<MomentDistance>> distances;
    if (cfg.diagnostics.moment_distance_order > 0) {
      std::vector<ProblemDataset> tests;
      for (std::size_t p = 0; p < probe->size(); ++p) {
        ProblemDataset d;
        d.name = names[p];
        d.classes = probe->info(p).classes;
        d.channels = probe->channels();
        d.test = probe->load_test(p);
        tests.push_back(std::move(d));
      }
      distances = moment_distance_report(tests, cfg.diagnostics.moment_distance_order);
    }
    probe.reset();

    const std::vector<SequenceResult> runs = run_all_seeds(cfg, synth, options.jobs);

    const fs::path dir = cfg.output_dir;
    fs::create_directories(dir);
    std::vector<MatrixD> accs, f1s;
    std::string history;
    ordered_json run_entries = ordered_json::array();
    for (const auto& r : runs) {
      accs.push_back(r.accuracy.values());
      f1s.push_back(r.macro_f1.values());
      const fs::path seed_dir = dir / ("seed-" + std::to_string(r.seed));
      write_text(seed_dir / "accuracy_matrix.csv", format_matrix_csv(r.accuracy.values()));
      write_text(seed_dir / "mf1_matrix.csv", format_matrix_csv(r.macro_f1.values()));
      r.model->save(seed_dir / "model.hopm", r.seed);
      for (const auto& e : r.history) {
        ordered_json line = {{"seed", r.seed},
                             {"problem", names[e.problem]},
                             {"epoch", e.epoch},
                             {"train_loss", round9(e.train_loss)},
                             {"val_loss", round9(e.val_loss)},
                             {"val_acc", round9(e.val_accuracy)}};
        history += line.dump() + "\n";
      }
      double total = 0.0;
      for (double s : r.stage_seconds) total += s;
      run_entries.push_back({{"seed", r.seed},
                             {"order", r.order},
                             {"stage_seconds", r.stage_seconds},
                             {"total_seconds", total},
                             {"parameters_per_stage", r.parameters_per_stage},
                             {"checkpoint", (seed_dir / "model.hopm").string()}});
    }
    write_text(dir / "accuracy_matrix.csv", format_matrix_csv(mean_matrix(accs)));
    write_text(dir / "mf1_matrix.csv", format_matrix_csv(mean_matrix(f1s)));
    write_text(dir / "history.jsonl", history);
    const ordered_json metrics = run_metrics_json(cfg, runs, names, distances);
    write_text(dir / "metrics.json", metrics.dump(2) + "\n");

    const std::size_t width = cfg.model.feature_width();
    ordered_json formula = ordered_json::array();
    for (std::size_t p = 0; p < names.size(); ++p) {
      const std::size_t classes = runs.front().model->classes(p);
      formula.push_back({{"problem", names[p]},
                         {"classes", classes},
                         {"formula", parameters_per_problem(cfg.model.backbone.channels,
                                                            cfg.model.bottleneck, width,
                                                            classes)}});
    }
    ordered_json manifest = {
        {"tool", "hop"},
        {"config", to_json(cfg)},
        {"seeds", cfg.seeds},
        {"jobs", options.jobs},
        {"backbone_checksum", cfg.model.backbone.checksum()},
        {"parameters", formula},
        {"runs", run_entries},
        {"wall_seconds",
         std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()},
        {"artifacts",
         {"accuracy_matrix.csv", "mf1_matrix.csv", "metrics.json", "history.jsonl",
          "manifest.json"}}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    const auto& mean = metrics["mean"];
    out << "run complete: problems=" << names.size() << " seeds=" << cfg.seeds.size()
        << " mAcc=" << mean["mAcc"].dump() << " MF1=" << mean["MF1"].dump()
        << " BwT=" << mean["BwT"].dump() << " FwT=" << mean["FwT"].dump()
        << " Forg=" << mean["Forg"].dump() << " Pla=" << mean["Pla"].dump() << " out=" << dir.string()
        << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_gen_synth(const std::optional<fs::path>& spec_path, const fs::path& out_dir,
                  std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const SynthSpec spec = spec_path ? load_synth_spec(*spec_path) : SynthSpec{};
    spec.validate();
    const auto problems = generate_synthetic(spec);
    for (const auto& p : problems) write_dataset(out_dir / p.name, p);
    write_text(out_dir / "synth_spec.json", to_json(spec).dump(2) + "\n");
    out << "wrote " << problems.size() << " problems to " << out_dir.string() << '\n';
    return static_cast<int>(kOk);
  });
}

int cmd_metrics(const fs::path& matrix, const std::optional<fs::path>& curves, std::ostream& out,
                std::ostream& err) {
  return guarded(err, [&] {
    const MatrixD a = parse_matrix_csv(io::read_file(matrix));
    const MetricsReport report = compute_metrics(a);
    ordered_json j = {{"problems", a.rows()}};
    const ordered_json fields = to_json(report);
    for (auto it = fields.begin(); it != fields.end(); ++it) j[it.key()] = it.value();
    out << j.dump(2) << '\n';
    if (curves) {
      const ProblemCurves c = per_problem_curves(a);
      std::string csv = "stage,mAcc_t,mAcc_t_seen,Pla_t,Forg_t\n";
      char buf[160];
      for (std::size_t t = 0; t < a.rows(); ++t) {
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,%.9g,", t + 1, c.mean_all[t],
                      c.mean_seen[t], report.per_problem_plasticity[t]);
        csv += buf;
        if (t < report.per_problem_forgetting.size()) {
          std::snprintf(buf, sizeof buf, "%.9g", report.per_problem_forgetting[t]);
          csv += buf;
        }
        csv += '\n';
      }
      write_text(*curves, csv);
    }
    return static_cast<int>(kOk);
  });
}

namespace {

ordered_json inspect_file(const fs::path& path, bool& ok) {
  const std::string bytes = io::read_file(path);
  ordered_json j = {{"path", path.string()}};
  const auto manifest = read_manifest(path);
  const std::string actual = "crc32:" + io::crc32_hex(bytes);
  if (manifest) {
    j["manifest"] = {{"name", manifest->name},
                     {"split", manifest->split},
                     {"channels", manifest->channels},
                     {"classes", manifest->classes},
                     {"count", manifest->count},
                     {"checksum", manifest->checksum}};
    const bool match = manifest->checksum == actual;
    j["checksum"] = match ? "ok" : "mismatch";
    if (!match) {
      ok = false;
      j["checksum_actual"] = actual;
      return j;
    }
  } else {
    j["manifest"] = nullptr;
    j["checksum"] = "unverified";
  }
  j["checksum_actual"] = actual;

  const SplitFile f = decode_split(bytes, std::nullopt, std::numeric_limits<std::size_t>::max());
  const std::size_t Q = f.channels;
  std::size_t tokens = 0, min_len = std::numeric_limits<std::size_t>::max(), max_len = 0;
  std::vector<std::size_t> label_counts(f.classes);
  for (const auto& s : f.samples) {
    tokens += s.length();
    min_len = std::min(min_len, s.length());
    max_len = std::max(max_len, s.length());
    ++label_counts.at(s.label);
  }
  j["channels"] = Q;
  j["classes"] = f.classes;
  j["count"] = f.samples.size();
  j["length"] = {{"min", f.samples.empty() ? 0 : min_len},
                 {"max", max_len},
                 {"mean", f.samples.empty() ? 0.0 : round9(static_cast<double>(tokens) /
                                                           static_cast<double>(f.samples.size()))}};
  j["label_counts"] = label_counts;

  if (tokens > 0) {
    // Per-channel moments of all tokens in the file, orders 1-4.
    MatrixD all(tokens, Q);
    std::size_t row = 0;
    for (const auto& s : f.samples)
      for (std::size_t d = 0; d < s.length(); ++d, ++row)
        for (std::size_t q = 0; q < Q; ++q) all(row, q) = s.tokens(d, q);
    const auto m = central_moments(all, 4);
    ordered_json moments = ordered_json::object();
    const char* names[] = {"mean", "variance", "m3", "m4"};
    for (std::size_t k = 0; k < 4; ++k) {
      std::vector<double> per_channel;
      double avg = 0.0;
      for (std::size_t q = 0; q < Q; ++q) {
        per_channel.push_back(round9(m.values[k * Q + q]));
        avg += m.values[k * Q + q];
      }
      moments[names[k]] = {{"channel_mean", round9(avg / static_cast<double>(Q))},
                           {"per_channel", per_channel}};
    }
    j["moments"] = moments;
  }
  return j;
}

}  // namespace

int cmd_inspect(const fs::path& dataset, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require(fs::exists(dataset), ErrorKind::kIo, "no such file or directory: " + dataset.string());
    bool ok = true;
    ordered_json report;
    if (fs::is_directory(dataset)) {
      report = ordered_json::array();
      for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
        const fs::path p = dataset / (std::string(to_string(s)) + ".hopd");
        if (fs::exists(p)) report.push_back(inspect_file(p, ok));
      }
      require(!report.empty(), ErrorKind::kData, dataset.string() + ": no .hopd files found");
    } else {
      report = inspect_file(dataset, ok);
    }
    out << report.dump(2) << '\n';
    if (!ok) {
      err << error_line(ErrorKind::kCorruption, dataset.string() + ": checksum mismatch") << '\n';
      return static_cast<int>(kData);
    }
    return static_cast<int>(kOk);
  });
}

int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"High-order moment pooling continual-learning toolkit", "hop"};
  app.require_subcommand(1);

  RunOptions run;
  std::string run_out;
  std::vector<std::uint64_t> seeds;
  auto* run_cmd = app.add_subcommand("run", "Run a continual-learning sequence from a config");
  run_cmd->add_option("--config", run.config, "Run config (JSON)")->required();
  run_cmd->add_option("--out", run_out, "Output directory (overrides config)");
  run_cmd->add_option("--seeds", seeds, "Comma-separated seeds (overrides config)")
      ->delimiter(',');
  run_cmd->add_option("--jobs", run.jobs, "Seeds to run in parallel")->check(CLI::PositiveNumber);

  std::string synth_config, synth_out;
  auto* gen_cmd = app.add_subcommand("gen-synth", "Write a synthetic problem stream as HOPD files");
  gen_cmd->add_option("--config", synth_config, "Synthetic spec (JSON); defaults if omitted");
  gen_cmd->add_option("--out", synth_out, "Output directory")->required();

  std::string matrix, curves;
  auto* metrics_cmd = app.add_subcommand("metrics", "Compute CL metrics from an accuracy matrix CSV");
  metrics_cmd->add_option("--matrix", matrix, "T x T accuracy matrix CSV")->required();
  metrics_cmd->add_option("--curves", curves, "Write per-problem curve CSV here");

  std::string dataset;
  auto* inspect_cmd = app.add_subcommand("inspect", "Summarize a HOPD file or dataset directory");
  inspect_cmd->add_option("dataset", dataset, "Path to a .hopd file or dataset directory")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << error_line(ErrorKind::kConfig, e.what()) << '\n';
    return kUsage;
  }

  if (*run_cmd) {
    if (!run_out.empty()) run.out = run_out;
    if (!seeds.empty()) run.seeds = seeds;
    return cmd_run(run, out, err);
  }
  if (*gen_cmd)
    return cmd_gen_synth(synth_config.empty() ? std::nullopt
                                              : std::optional<fs::path>(synth_config),
                         synth_out, out, err);
  if (*metrics_cmd)
    return cmd_metrics(matrix, curves.empty() ? std::nullopt : std::optional<fs::path>(curves),
                       out, err);
  return cmd_inspect(dataset, out, err);
}

int main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"hop"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return main(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace hop::cli
