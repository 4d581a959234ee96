#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "nrl/config.hpp"
#include "nrl/error.hpp"
#include "nrl/experiment.hpp"

using namespace nrl;

namespace fs = std::filesystem;

namespace {

fs::path workdir() {
  static const fs::path dir = [] {
    const auto d = fs::temp_directory_path() / "nrl_test_experiment";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny(const std::string& name) {
  ExperimentConfig c;
  c.name = name;
  c.dataset.height = 8;
  c.dataset.width = 8;
  c.dataset.synthetic.train_size = 64;
  c.dataset.synthetic.test_size = 32;
  c.dataset.synthetic.seed = 3;
  c.noise.kind = NoiseKind::symmetric;
  c.noise.rate = 0.2;
  c.noise.seed = 1;
  c.train.stage1_epochs = 1;
  c.train.stage2_epochs = 3;
  c.train.toy_feature_dim = 8;
  c.train.projection_dim = 6;
  c.train.eval_batch_size = 16;
  return c;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NRL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("a run directory is complete and re-evaluates to its own report") {
  ExperimentConfig c = tiny("full");
  c.export_features = true;
  c.train.log_batches = true;
  const fs::path dir = workdir() / "full";
  const RunResult r = run_experiment(c, dir);
  for (const char* f : {"config.snapshot", "manifest.txt", "metrics.log", "run.log", "batches.log", "report.json",
                        "report.txt", "roc.csv", "confusion.csv", "features.tsv", "checkpoints/best.ckpt",
                        "checkpoints/epoch_001.ckpt", "checkpoints/epoch_002.ckpt", "checkpoints/epoch_003.ckpt"}) {
    CAPTURE(f);
    CHECK(fs::exists(dir / f));
  }
  CHECK(!fs::exists(dir / "checkpoints/epoch_000.ckpt"));
  CHECK(!fs::exists(dir / "error.txt"));
  CHECK(parse_config(slurp(dir / "config.snapshot")) == c);

  std::istringstream metrics(slurp(dir / "metrics.log"));
  std::string line;
  int epochs = 0;
  while (std::getline(metrics, line)) ++epochs;
  CHECK(epochs == 4);

  const MetricsReport again = evaluate_run(dir);
  CHECK(report_to_json(again) == slurp(dir / "report.json"));
  CHECK(again.accuracy_last3_avg == r.report.accuracy_last3_avg);
  const MetricsReport one = evaluate_checkpoint(dir / "checkpoints/epoch_003.ckpt", c);
  CHECK(one.epoch == 3);
}

TEST_CASE("identical config and seed give byte-identical metrics logs") {
  ExperimentConfig c = tiny("det");
  c.train.mixup_grouping = MixupGrouping::inter_class;
  run_experiment(c, workdir() / "det_a");
  run_experiment(c, workdir() / "det_b");
  const std::string a = slurp(workdir() / "det_a" / "metrics.log");
  CHECK(!a.empty());
  CHECK(a == slurp(workdir() / "det_b" / "metrics.log"));
  CHECK(slurp(workdir() / "det_a" / "report.json") == slurp(workdir() / "det_b" / "report.json"));
  c.train.seed = 2;
  run_experiment(c, workdir() / "det_c");
  CHECK(a != slurp(workdir() / "det_c" / "metrics.log"));
}

TEST_CASE("smoke: zero warm-up and one joint epoch") {
  ExperimentConfig c = tiny("smoke");
  c.train.stage1_epochs = 0;
  c.train.stage2_epochs = 1;
  const RunResult r = run_experiment(c, workdir() / "smoke");
  CHECK(fs::exists(workdir() / "smoke" / "report.json"));
  CHECK(!r.warnings.empty());  // fewer than three epochs to average
}

TEST_CASE("baselines and manifest replay") {
  ExperimentConfig c = tiny("base");
  c.train.method = Method::label_smooth;
  run_experiment(c, workdir() / "ls");
  ExperimentConfig replay = tiny("replay");
  replay.train.method = Method::label_smooth;
  replay.noise.seed = 999;  // ignored: the manifest wins
  replay.noise.manifest = (workdir() / "ls" / "manifest.txt").string();
  run_experiment(replay, workdir() / "replay");
  CHECK(slurp(workdir() / "ls" / "metrics.log") == slurp(workdir() / "replay" / "metrics.log"));
}

TEST_CASE("failures name their stage and leave error.txt") {
  ExperimentConfig c = tiny("fail");
  c.dataset.source = DatasetSource::folder;
  c.dataset.train_root = (workdir() / "no_such_dir").string();
  c.dataset.test_root = c.dataset.train_root;
  const fs::path dir = workdir() / "fail";
  CHECK_THROWS_WITH_AS(run_experiment(c, dir), doctest::Contains("stage inject"), DataError);
  CHECK(fs::exists(dir / "error.txt"));
  CHECK_THROWS_AS(evaluate_run(workdir() / "missing_run"), IoError);
}

TEST_CASE("sweep over the five noise rates and the comparison table") {
  ExperimentConfig c = tiny("sw");
  c.train.stage1_epochs = 0;
  c.train.stage2_epochs = 1;
  c.train.use_contrastive = false;
  SweepGrid g;
  g.rates = {0.0, 0.1, 0.2, 0.3, 0.4};
  const auto dirs = run_sweep(c, g, workdir() / "sweep");
  CHECK(dirs.size() == 5);
  for (const auto& d : dirs) CHECK(fs::exists(d / "report.json"));
  CHECK(dirs[0].filename() == "sw-ours-none-r0-m4-n2-z1-s0");
  CHECK(dirs[4].filename() == "sw-ours-symmetric-r0.4-m4-n2-z1-s0");
  const std::string table = aggregate_reports(dirs);
  CHECK(std::count(table.begin(), table.end(), '\n') == 6);
  CHECK(table.rfind("run\tmethod\tnoise\trate", 0) == 0);
}

TEST_CASE("command line") {
  const fs::path w = workdir() / "cli";
  fs::create_directories(w);
  ExperimentConfig c = tiny("cli");
  c.train.stage1_epochs = 0;
  c.train.stage2_epochs = 1;
  save_config(w / "c.json", c);
  const std::string cfg = (w / "c.json").string();

  CHECK(run_cli("train --config " + cfg + " --out " + (w / "run").string()) == 0);
  CHECK(fs::exists(w / "run" / "report.json"));
  CHECK(run_cli("evaluate --run " + (w / "run").string() + " --json --out " + (w / "eval.json").string()) == 0);
  CHECK(slurp(w / "eval.json") == slurp(w / "run" / "report.json"));
  CHECK(run_cli("inject --config " + cfg + " --noise symmetric --rate 0.4 --out " + (w / "m.txt").string()) == 0);
  CHECK(fs::exists(w / "m.txt"));
  CHECK(run_cli("sweep --config " + cfg + " --noise symmetric --rates 0,0.1,0.2,0.3,0.4 --out " +
                (w / "sweep").string()) == 0);
  CHECK(std::distance(fs::directory_iterator(w / "sweep"), fs::directory_iterator{}) == 5);
  CHECK(run_cli("report --dir " + (w / "sweep").string() + " --out " + (w / "table.tsv").string()) == 0);
  CHECK(fs::exists(w / "table.tsv"));

  CHECK(run_cli("") == 2);
  CHECK(run_cli("train --bogus-flag") == 2);
  CHECK(run_cli("train --config " + (w / "missing.json").string()) == 5);
  std::ofstream(w / "bad.json") << R"({"train": {"group_size": 0}})";
  CHECK(run_cli("train --config " + (w / "bad.json").string()) == 2);
  ExperimentConfig nodata = c;
  nodata.dataset.source = DatasetSource::folder;
  nodata.dataset.train_root = nodata.dataset.test_root = (w / "nothing").string();
  save_config(w / "nodata.json", nodata);
  CHECK(run_cli("train --config " + (w / "nodata.json").string() + " --out " + (w / "nd").string()) == 3);
}
