// nrl: command-line front end.
//
//   nrl inject   --config c.json --noise symmetric --rate 0.4 --out manifest.txt
//   nrl train    --config c.json --out runs/a
//   nrl evaluate --run runs/a            (or --checkpoint f.ckpt --config c.json)
//   nrl sweep    --config c.json --noise symmetric --rates 0,0.1,0.2,0.3,0.4 --out runs
//   nrl report   runs/a runs/b ...       (or --dir runs)
//
// Exit codes: 0 ok, 2 usage or config error, 3 data error, 4 training error, 5 I/O error.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nrl/config.hpp"
#include "nrl/error.hpp"
#include "nrl/experiment.hpp"
#include "nrl/text.hpp"

namespace fs = std::filesystem;
using namespace nrl;

namespace {

enum Exit { kOk = 0, kUsage = 2, kData = 3, kTraining = 4, kIo = 5 };

ExperimentConfig config_or_default(const std::string& path) {
  return path.empty() ? ExperimentConfig{} : load_config(path);
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& csv, Parse parse) {
  std::vector<T> out;
  if (csv.empty()) return out;
  for (const auto& item : text::split(csv, ',')) out.push_back(parse(std::string(text::trim(item))));
  return out;
}

void emit(const std::string& out_path, const std::string& content) {
  if (out_path.empty()) {
    std::cout << content;
    return;
  }
  std::ofstream f(out_path);
  if (!f) throw IoError(out_path + ": cannot open for writing");
  f << content;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Noise-robust image classification toolkit"};
  app.require_subcommand(1);

  // inject
  auto* inject = app.add_subcommand("inject", "corrupt the training labels of a dataset and write a manifest");
  std::string inject_config, inject_noise = "symmetric", inject_convention, inject_out = "manifest.txt";
  double inject_rate = 0.0;
  long long inject_seed = -1;
  inject->add_option("--config", inject_config, "experiment config (dataset and noise settings)");
  inject->add_option("--noise", inject_noise, "none | symmetric | asymmetric | instance_dependent");
  inject->add_option("--rate", inject_rate, "noise rate P")->required();
  inject->add_option("--convention", inject_convention, "uniform_all | uniform_off_diagonal");
  inject->add_option("--seed", inject_seed, "noise seed (default: config value)");
  inject->add_option("--out", inject_out, "manifest path");

  // train
  auto* train = app.add_subcommand("train", "run the full pipeline from a config file");
  std::string train_config, train_out;
  train->add_option("--config", train_config, "experiment config")->required();
  train->add_option("--out", train_out, "run directory (default: runs/<name>)");

  // evaluate
  auto* evaluate = app.add_subcommand("evaluate", "score checkpoints on the test split");
  std::string eval_run, eval_ckpt, eval_config, eval_out;
  bool eval_json = false;
  evaluate->add_option("--run", eval_run, "run directory: re-evaluate its last three checkpoints");
  evaluate->add_option("--checkpoint", eval_ckpt, "single checkpoint file (needs --config)");
  evaluate->add_option("--config", eval_config, "experiment config for --checkpoint");
  evaluate->add_option("--out", eval_out, "write the report here instead of stdout");
  evaluate->add_flag("--json", eval_json, "machine-readable report");

  // sweep
  auto* sweep = app.add_subcommand("sweep", "run a grid of experiments");
  std::string sweep_config, sweep_noise, sweep_rates, sweep_sizes, sweep_heads, sweep_proj, sweep_methods,
      sweep_seeds, sweep_out = "runs";
  sweep->add_option("--config", sweep_config, "base experiment config");
  sweep->add_option("--noise", sweep_noise, "noise kind for every point");
  sweep->add_option("--rates", sweep_rates, "comma-separated noise rates, e.g. 0,0.1,0.2,0.3,0.4");
  sweep->add_option("--group-sizes", sweep_sizes, "comma-separated mixup sizes M, e.g. 2,3,4,5");
  sweep->add_option("--head-layers", sweep_heads, "comma-separated mixup-head depths N");
  sweep->add_option("--projection-layers", sweep_proj, "comma-separated projection depths Z");
  sweep->add_option("--methods", sweep_methods, "comma-separated: ours,default,label_smooth");
  sweep->add_option("--seeds", sweep_seeds, "comma-separated training seeds");
  sweep->add_option("--out", sweep_out, "parent directory for the runs");

  // report
  auto* report = app.add_subcommand("report", "aggregate run directories into a comparison table");
  std::vector<std::string> report_runs;
  std::string report_dir, report_out;
  report->add_option("runs", report_runs, "run directories");
  report->add_option("--dir", report_dir, "use every run directory below this one");
  report->add_option("--out", report_out, "write the table here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*inject) {
      ExperimentConfig c = config_or_default(inject_config);
      c.noise.kind = parse_noise_kind(inject_noise);
      c.noise.rate = inject_rate;
      c.noise.manifest.clear();
      if (!inject_convention.empty()) c.noise.convention = parse_convention(inject_convention);
      if (inject_seed >= 0) c.noise.seed = static_cast<std::uint64_t>(inject_seed);
      c.validate();
      const PreparedData data = prepare_data(c);
      write_manifest(inject_out, manifest_of(data.train));
      std::cout << "wrote " << inject_out << ": " << data.train.size() << " records, realized noise rate "
                << text::format_double(data.train.provenance.realized_rate) << '\n';
    } else if (*train) {
      const ExperimentConfig c = load_config(train_config);
      const fs::path dir = train_out.empty() ? fs::path("runs") / c.name : fs::path(train_out);
      const RunResult r = run_experiment(c, dir);
      for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
      std::cout << "run " << dir.string() << ": accuracy (last-3 avg) "
                << text::format_double(r.report.accuracy_last3_avg) << '\n';
    } else if (*evaluate) {
      MetricsReport r;
      if (!eval_run.empty()) {
        r = evaluate_run(eval_run);
      } else if (!eval_ckpt.empty() && !eval_config.empty()) {
        r = evaluate_checkpoint(eval_ckpt, load_config(eval_config));
      } else {
        std::cerr << "evaluate: pass --run DIR, or --checkpoint FILE with --config FILE\n";
        return kUsage;
      }
      emit(eval_out, eval_json ? report_to_json(r) : report_to_text(r));
    } else if (*sweep) {
      ExperimentConfig base = config_or_default(sweep_config);
      if (!sweep_noise.empty()) base.noise.kind = parse_noise_kind(sweep_noise);
      SweepGrid grid;
      grid.rates = parse_list<double>(sweep_rates, [](const std::string& s) { return text::parse_double(s); });
      const auto to_int = [](const std::string& s) { return static_cast<int>(text::parse_int(s)); };
      grid.group_sizes = parse_list<int>(sweep_sizes, to_int);
      grid.mixup_head_layers = parse_list<int>(sweep_heads, to_int);
      grid.projection_layers = parse_list<int>(sweep_proj, to_int);
      grid.methods = parse_list<Method>(sweep_methods, [](const std::string& s) { return parse_method(s); });
      grid.seeds = parse_list<std::uint64_t>(
          sweep_seeds, [](const std::string& s) { return static_cast<std::uint64_t>(text::parse_int(s)); });
      const auto dirs = run_sweep(base, grid, sweep_out);
      for (const auto& d : dirs) std::cout << d.string() << '\n';
    } else if (*report) {
      std::vector<fs::path> dirs(report_runs.begin(), report_runs.end());
      if (!report_dir.empty()) {
        for (const auto& e : fs::directory_iterator(report_dir)) {
          if (fs::exists(e.path() / "report.json")) dirs.push_back(e.path());
        }
        std::sort(dirs.begin(), dirs.end());
      }
      if (dirs.empty()) {
        std::cerr << "report: no run directories given\n";
        return kUsage;
      }
      emit(report_out, aggregate_reports(dirs));
    }
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kData;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << '\n';
    return kTraining;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  }
  return kOk;
}
