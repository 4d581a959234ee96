#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "nrl/checkpoint.hpp"
#include "nrl/error.hpp"
#include "support.hpp"

using namespace nrl;
using namespace nrl::testing;

namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "nrl_test_ckpt";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_CASE("save and load reproduce the state") {
  const auto data = tiny_synthetic(48, 16);
  TrainConfig c = tiny_config();
  c.stage2_epochs = 2;
  TrainState st = tiny_state(c, data.train);
  train_stage1(st, data.train, &data.test);
  const auto path = scratch("a.ckpt");
  save_checkpoint(path, st);
  TrainState back = load_checkpoint(path);
  CHECK(back.config == st.config);
  CHECK(back.model_config == st.model_config);
  CHECK(back.epoch == st.epoch);
  CHECK(back.phase == st.phase);
  CHECK(back.history == st.history);
  auto a = st.all_parameters();
  auto b = back.all_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i]->name == b[i]->name);
    CHECK(a[i]->value == b[i]->value);
    CHECK(st.optimizer.steps_taken(a[i]) == back.optimizer.steps_taken(b[i]));
  }
}

TEST_CASE("resuming from a checkpoint matches uninterrupted training") {
  const auto data = tiny_synthetic(48, 16);
  TrainConfig c = tiny_config();
  c.stage2_epochs = 2;
  TrainState full = tiny_state(c, data.train);
  train(full, data.train);

  TrainState part = tiny_state(c, data.train);
  TrainHooks stop;
  // stop after the first stage-2 epoch by saving and abandoning the state
  const auto path = scratch("resume.ckpt");
  bool saved = false;
  stop.on_epoch_end = [&](TrainState& s, const EpochMetrics& m, const MetricsReport*) {
    if (m.epoch == 1 && !saved) {
      save_checkpoint(path, s);
      saved = true;
    }
  };
  train(part, data.train, nullptr, stop);
  REQUIRE(saved);
  TrainState resumed = load_checkpoint(path);
  train(resumed, data.train);
  CHECK(resumed.history == full.history);
  CHECK(parameter_checksum(resumed.all_parameters()) == parameter_checksum(full.all_parameters()));
}

TEST_CASE("corrupt checkpoints are rejected") {
  const auto data = tiny_synthetic(16, 8);
  TrainState st = tiny_state(tiny_config(), data.train);
  const auto path = scratch("c.ckpt");
  save_checkpoint(path, st);
  const auto size = fs::file_size(path);

  fs::resize_file(path, size - 8);
  CHECK_THROWS_AS(load_checkpoint(path), IoError);

  save_checkpoint(path, st);
  {
    std::ofstream extra(path, std::ios::app | std::ios::binary);
    extra << "junk";
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);

  {
    std::ofstream bad(path);
    bad << "not a checkpoint\n";
  }
  CHECK_THROWS_AS(load_checkpoint(path), IoError);
  CHECK_THROWS_AS(load_checkpoint(scratch("missing.ckpt")), IoError);
  fs::remove_all(path.parent_path());
}

TEST_CASE("metrics log records round trip") {
  EpochMetrics m;
  m.epoch = 7;
  m.phase = TrainPhase::stage2;
  m.learning_rate = 1e-4;
  m.steps = 12;
  m.loss = 1.0 / 3;
  m.sigma_mix = 1.2345678901234567;
  m.test_accuracy = 91.25;
  const std::string line = epoch_metrics_to_json(m);
  CHECK(line.find('\n') == std::string::npos);
  CHECK(epoch_metrics_from_json(line) == m);
}
