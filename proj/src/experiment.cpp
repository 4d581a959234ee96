#include "nrl/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include <json.hpp>

#include "nrl/checkpoint.hpp"
#include "nrl/error.hpp"
#include "nrl/grouping_sampler.hpp"
#include "nrl/text.hpp"
#include "nrl/trainer.hpp"

namespace nrl {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string() + ": cannot open for writing");
  out << content;
  if (!out) throw IoError(path.string() + ": write failed");
}

std::string checkpoint_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%03d.ckpt", epoch);
  return buf;
}

class RunLog {
 public:
  explicit RunLog(const fs::path& path) : out_(path, std::ios::app) {
    if (!out_) throw IoError(path.string() + ": cannot open for writing");
  }
  void line(const std::string& text) {
    out_ << text << '\n';
    out_.flush();
  }

 private:
  std::ofstream out_;
};

// Runs one stage; on failure writes error.txt and rethrows the same error
// category with the stage name prefixed.
template <typename Fn>
auto stage(const char* name, const fs::path& run_dir, RunLog* log, Fn&& fn) -> decltype(fn()) {
  const auto fail = [&](const std::exception& e) {
    const std::string message = std::string("stage ") + name + ": " + e.what();
    std::ofstream err(run_dir / "error.txt");
    err << message << '\n';
    if (log) log->line("FAILED " + message);
    return message;
  };
  if (log) log->line(std::string("stage ") + name);
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError(fail(e));
  } catch (const DataError& e) {
    throw DataError(fail(e));
  } catch (const IoError& e) {
    throw IoError(fail(e));
  } catch (const TrainingError& e) {
    throw TrainingError(fail(e));
  }
}

std::vector<fs::path> epoch_checkpoints(const fs::path& dir) {
  std::vector<fs::path> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string name = e.path().filename().string();
    if (name.starts_with("epoch_") && name.ends_with(".ckpt")) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

void write_report_files(const fs::path& run_dir, const MetricsReport& report) {
  write_file(run_dir / "report.json", report_to_json(report));
  write_file(run_dir / "report.txt", report_to_text(report));
  write_roc_csv(run_dir / "roc.csv", report);
  write_confusion_csv(run_dir / "confusion.csv", report);
}

MetricsReport summarize(std::vector<MetricsReport> reports) {
  const Last3Summary s = reports.size() == 3 ? average_last3(reports) : average_reports(reports);
  MetricsReport out = s.report;
  if (reports.size() != 3) {
    out.warnings.push_back("run has " + std::to_string(reports.size()) +
                           " epoch(s); accuracy averaged over those instead of the last three");
  }
  return out;
}

}  // namespace

PreparedData prepare_data(const ExperimentConfig& config) {
  config.validate();
  DatasetPair pair = load_datasets(config.dataset);
  PreparedData out;
  out.test = std::move(pair.test);
  out.class_names = std::move(pair.class_names);
  out.warnings = std::move(pair.warnings);
  const NoiseSettings& n = config.noise;
  if (!n.manifest.empty()) {
    out.train = apply_manifest(pair.train, read_manifest(n.manifest));
  } else if (n.kind == NoiseKind::instance_dependent) {
    TrainConfig proxy = config.train;
    proxy.method = Method::default_baseline;
    proxy.stage1_epochs = 0;
    proxy.stage2_epochs = n.instance_proxy_epochs;
    proxy.learning_rate = n.instance_proxy_learning_rate;
    proxy.lr_decay_factor = 1.0;
    out.train = inject_instance_dependent(pair.train, n.rate, proxy, n.seed, n.instance_tolerance);
  } else {
    out.train = inject_instance_independent(pair.train, n.kind, n.rate, n.convention, n.seed);
  }
  return out;
}

RunResult run_experiment(const ExperimentConfig& config, const fs::path& run_dir) {
  std::error_code ec;
  fs::create_directories(run_dir / "checkpoints", ec);
  if (ec) throw IoError(run_dir.string() + ": cannot create run directory: " + ec.message());
  fs::remove(run_dir / "error.txt", ec);
  for (const char* stale : {"metrics.log", "run.log", "batches.log"}) fs::remove(run_dir / stale, ec);
  for (const auto& p : epoch_checkpoints(run_dir / "checkpoints")) fs::remove(p, ec);

  RunLog log(run_dir / "run.log");
  const auto started = std::chrono::steady_clock::now();
  RunResult result;
  result.directory = run_dir;

  stage("config", run_dir, &log, [&] {
    config.validate();
    write_file(run_dir / "config.snapshot", serialize_config(config));
  });

  PreparedData data = stage("inject", run_dir, &log, [&] {
    PreparedData d = prepare_data(config);
    write_manifest(run_dir / "manifest.txt", manifest_of(d.train));
    log.line("train " + std::to_string(d.train.size()) + " test " + std::to_string(d.test.size()) +
             " realized noise " + text::format_double(d.train.provenance.realized_rate));
    return d;
  });
  for (const auto& w : data.warnings) {
    log.line("warning: " + w);
    result.warnings.push_back(w);
  }

  stage("group", run_dir, &log, [&] {
    const TrainConfig& t = config.train;
    if (t.method != Method::ours || t.mixup_grouping == MixupGrouping::inter_class) return;
    GroupingResult g = build_groups(data.train.records, t.group_size, t.seed, t.remainder_policy);
    if (g.groups.size() < static_cast<std::size_t>(t.groups_per_batch)) {
      throw ValidationError("only " + std::to_string(g.groups.size()) + " mini-groups for K=" +
                            std::to_string(t.groups_per_batch));
    }
    for (const auto& w : g.warnings) {
      log.line("warning: " + w);
      result.warnings.push_back(w);
    }
  });

  std::vector<MetricsReport> last;
  stage("train", run_dir, &log, [&] {
    const TrainConfig& t = config.train;
    const Image& probe = data.train.images.front();
    TrainState state = init_state(t, model_config_for(t, probe.channels, probe.height, probe.width,
                                                      data.train.num_classes));
    std::ofstream metrics(run_dir / "metrics.log", std::ios::binary);
    if (!metrics) throw IoError((run_dir / "metrics.log").string() + ": cannot open for writing");
    std::ofstream batches;
    if (t.log_batches) batches.open(run_dir / "batches.log", std::ios::binary);
    const int total = t.total_epochs();
    double best = -1.0;
    TrainHooks hooks;
    hooks.on_batch = [&](const std::string& line) { batches << line << '\n'; };
    hooks.on_epoch_end = [&](TrainState& s, const EpochMetrics& m, const MetricsReport* report) {
      metrics << epoch_metrics_to_json(m) << '\n';
      metrics.flush();
      if (m.epoch >= total - 3) {
        save_checkpoint(run_dir / "checkpoints" / checkpoint_name(m.epoch), s);
        if (report) last.push_back(*report);
      }
      if (m.test_accuracy > best) {
        best = m.test_accuracy;
        save_checkpoint(run_dir / "checkpoints" / "best.ckpt", s);
      }
      std::ostringstream os;
      os << "epoch " << m.epoch << " " << to_string(m.phase) << " loss " << m.loss << " test " << m.test_accuracy;
      log.line(os.str());
    };
    train(state, data.train, &data.test, hooks);
    if (last.empty()) throw TrainingError("training ran no epochs");
  });

  result.report = stage("evaluate", run_dir, &log, [&] {
    MetricsReport report = summarize(last);
    write_report_files(run_dir, report);
    if (config.export_features) {
      TrainState snap = load_checkpoint(run_dir / "checkpoints" / checkpoint_name(report.epoch));
      export_features(*snap.model, data.test, run_dir / "features.tsv", config.train.eval_batch_size);
    }
    return report;
  });
  for (const auto& w : result.report.warnings) result.warnings.push_back(w);

  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  log.line("done in " + text::format_double(std::round(seconds * 10.0) / 10.0) + " s; accuracy (last-3 avg) " +
           text::format_double(result.report.accuracy_last3_avg));
  return result;
}

MetricsReport evaluate_checkpoint(const fs::path& checkpoint, const ExperimentConfig& config) {
  const DatasetPair pair = load_datasets(config.dataset);
  TrainState state = load_checkpoint(checkpoint);
  MetricsReport r = evaluate(*state.model, pair.test, config.train.eval_batch_size);
  r.epoch = state.epoch - 1;
  return r;
}

MetricsReport evaluate_run(const fs::path& run_dir) {
  const ExperimentConfig config = parse_config(read_file(run_dir / "config.snapshot"));
  const auto ckpts = epoch_checkpoints(run_dir / "checkpoints");
  if (ckpts.empty()) throw IoError((run_dir / "checkpoints").string() + ": no epoch checkpoints");
  const DatasetPair pair = load_datasets(config.dataset);
  std::vector<MetricsReport> reports;
  const std::size_t first = ckpts.size() > 3 ? ckpts.size() - 3 : 0;
  for (std::size_t i = first; i < ckpts.size(); ++i) {
    TrainState state = load_checkpoint(ckpts[i]);
    MetricsReport r = evaluate(*state.model, pair.test, config.train.eval_batch_size);
    r.epoch = state.epoch - 1;
    reports.push_back(std::move(r));
  }
  return summarize(std::move(reports));
}

std::string sweep_run_name(const ExperimentConfig& c) {
  std::ostringstream os;
  os << c.name << '-' << to_string(c.train.method) << '-' << to_string(c.noise.kind) << "-r"
     << text::format_double(c.noise.rate) << "-m" << c.train.group_size << "-n" << c.train.mixup_head_layers << "-z"
     << c.train.projection_layers << "-s" << c.train.seed;
  return os.str();
}

std::vector<fs::path> run_sweep(const ExperimentConfig& base, const SweepGrid& grid, const fs::path& out_dir) {
  auto axis = [](const auto& values, auto fallback) {
    using T = std::decay_t<decltype(fallback)>;
    return values.empty() ? std::vector<T>{fallback} : std::vector<T>(values.begin(), values.end());
  };
  std::vector<ExperimentConfig> points;
  for (Method method : axis(grid.methods, base.train.method))
    for (double rate : axis(grid.rates, base.noise.rate))
      for (int m : axis(grid.group_sizes, base.train.group_size))
        for (int n : axis(grid.mixup_head_layers, base.train.mixup_head_layers))
          for (int z : axis(grid.projection_layers, base.train.projection_layers))
            for (std::uint64_t seed : axis(grid.seeds, base.train.seed)) {
              ExperimentConfig c = base;
              c.train.method = method;
              c.noise.rate = rate;
              if (rate == 0.0) c.noise.kind = NoiseKind::none;
              c.train.group_size = m;
              c.train.mixup_head_layers = n;
              c.train.projection_layers = z;
              c.train.seed = seed;
              c.validate();
              points.push_back(std::move(c));
            }
  std::vector<fs::path> dirs;
  for (const auto& c : points) {
    const fs::path dir = out_dir / sweep_run_name(c);
    run_experiment(c, dir);
    dirs.push_back(dir);
  }
  return dirs;
}

std::string aggregate_reports(const std::vector<fs::path>& run_dirs) {
  std::ostringstream os;
  os << "run\tmethod\tnoise\trate\tM\tN\tZ\tseed\taccuracy_last3_avg\tmacro_f1\tmean_auc\n";
  os << std::fixed << std::setprecision(2);
  for (const auto& dir : run_dirs) {
    const ExperimentConfig c = parse_config(read_file(dir / "config.snapshot"));
    const MetricsReport r = report_from_json(read_file(dir / "report.json"));
    double auc = 0.0;
    int defined = 0;
    for (double a : r.auc) {
      if (std::isfinite(a)) {
        auc += a;
        ++defined;
      }
    }
    os << dir.filename().string() << '\t' << to_string(c.train.method) << '\t' << to_string(c.noise.kind) << '\t'
       << text::format_double(c.noise.rate) << '\t' << c.train.group_size << '\t' << c.train.mixup_head_layers << '\t'
       << c.train.projection_layers << '\t' << c.train.seed << '\t' << r.accuracy_last3_avg << '\t' << r.macro_f1
       << '\t' << std::setprecision(4) << (defined > 0 ? auc / defined : 0.0) << std::setprecision(2) << '\n';
  }
  return os.str();
}

}  // namespace nrl
