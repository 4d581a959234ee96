#include "nrl/checkpoint.hpp"

#include <bit>
#include <fstream>

#include <json.hpp>

#include "nrl/error.hpp"

namespace nrl {

using json = nlohmann::ordered_json;

namespace {

constexpr std::string_view kMagic = "# nrl checkpoint v1";

static_assert(std::endian::native == std::endian::little, "checkpoint payload assumes a little-endian host");

json model_to_json(const ModelConfig& m) {
  return json{{"encoder", to_string(m.encoder)},
              {"input_channels", m.input_channels},
              {"input_height", m.input_height},
              {"input_width", m.input_width},
              {"num_classes", m.num_classes},
              {"group_size", m.group_size},
              {"projection_layers", m.projection_layers},
              {"projection_dim", m.projection_dim},
              {"mixup_head_layers", m.mixup_head_layers},
              {"toy_feature_dim", m.toy_feature_dim}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.encoder = parse_encoder_kind(j.at("encoder").get<std::string>());
  m.input_channels = j.at("input_channels").get<int>();
  m.input_height = j.at("input_height").get<int>();
  m.input_width = j.at("input_width").get<int>();
  m.num_classes = j.at("num_classes").get<int>();
  m.group_size = j.at("group_size").get<int>();
  m.projection_layers = j.at("projection_layers").get<int>();
  m.projection_dim = j.at("projection_dim").get<int>();
  m.mixup_head_layers = j.at("mixup_head_layers").get<int>();
  m.toy_feature_dim = j.at("toy_feature_dim").get<int>();
  return m;
}

json metrics_json(const EpochMetrics& m) {
  return json{{"epoch", m.epoch},
              {"phase", to_string(m.phase)},
              {"learning_rate", m.learning_rate},
              {"steps", m.steps},
              {"loss", m.loss},
              {"contrastive_loss", m.contrastive_loss},
              {"mix_loss", m.mix_loss},
              {"supervised_loss", m.supervised_loss},
              {"sigma_mix", m.sigma_mix},
              {"sigma_supervised", m.sigma_supervised},
              {"train_accuracy", m.train_accuracy},
              {"test_accuracy", m.test_accuracy}};
}

EpochMetrics metrics_from(const json& j) {
  EpochMetrics m;
  m.epoch = j.at("epoch").get<int>();
  m.phase = parse_train_phase(j.at("phase").get<std::string>());
  m.learning_rate = j.at("learning_rate").get<double>();
  m.steps = j.at("steps").get<int>();
  m.loss = j.at("loss").get<double>();
  m.contrastive_loss = j.at("contrastive_loss").get<double>();
  m.mix_loss = j.at("mix_loss").get<double>();
  m.supervised_loss = j.at("supervised_loss").get<double>();
  m.sigma_mix = j.at("sigma_mix").get<double>();
  m.sigma_supervised = j.at("sigma_supervised").get<double>();
  m.train_accuracy = j.at("train_accuracy").get<double>();
  m.test_accuracy = j.at("test_accuracy").get<double>();
  return m;
}

void write_block(std::ostream& out, const nn::Mat& m) {
  out.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
}

void read_block(std::istream& in, nn::Mat& m, const std::filesystem::path& path) {
  in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  if (!in) throw IoError(path.string() + ": checkpoint payload is truncated");
}

}  // namespace

std::string epoch_metrics_to_json(const EpochMetrics& m) { return metrics_json(m).dump(); }

EpochMetrics epoch_metrics_from_json(const std::string& line) {
  try {
    return metrics_from(json::parse(line));
  } catch (const json::exception& e) {
    throw ValidationError(std::string("metrics record: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, TrainState& state) {
  auto params = state.all_parameters();
  const auto slots = state.optimizer.export_state(params);
  json header;
  header["train"] = json::parse(serialize_train_config(state.config));
  header["model"] = model_to_json(state.model_config);
  header["epoch"] = state.epoch;
  header["phase"] = to_string(state.phase);
  json history = json::array();
  for (const auto& m : state.history) history.push_back(metrics_json(m));
  header["history"] = history;
  json table = json::array();
  for (std::size_t i = 0; i < params.size(); ++i) {
    table.push_back(json{{"name", params[i]->name},
                         {"rows", params[i]->value.rows()},
                         {"cols", params[i]->value.cols()},
                         {"adam_steps", slots[i].t}});
  }
  header["parameters"] = table;

  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError(tmp.string() + ": cannot open for writing");
    out << kMagic << '\n' << header.dump() << '\n';
    for (const auto* p : params) write_block(out, p->value);
    for (const auto& s : slots) {
      if (s.t == 0) continue;
      write_block(out, s.m);
      write_block(out, s.v);
    }
    if (!out) throw IoError(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path.string() + ": cannot move checkpoint into place: " + ec.message());
}

TrainState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path.string() + ": cannot open checkpoint");
  std::string magic, header_line;
  if (!std::getline(in, magic) || magic != kMagic) {
    throw IoError(path.string() + ": not a version-1 checkpoint (bad magic line)");
  }
  if (!std::getline(in, header_line)) throw IoError(path.string() + ": checkpoint header missing");

  TrainState state;
  json header;
  try {
    header = json::parse(header_line);
    const TrainConfig train = parse_train_config(header.at("train").dump());
    const ModelConfig model = model_from_json(header.at("model"));
    state = init_state(train, model);
    state.epoch = header.at("epoch").get<int>();
    state.phase = parse_train_phase(header.at("phase").get<std::string>());
    for (const auto& m : header.at("history")) state.history.push_back(metrics_from(m));
  } catch (const json::exception& e) {
    throw IoError(path.string() + ": malformed checkpoint header: " + e.what());
  } catch (const ValidationError& e) {
    throw IoError(path.string() + ": invalid checkpoint header: " + e.what());
  }

  auto params = state.all_parameters();
  const json& table = header.at("parameters");
  if (table.size() != params.size()) {
    throw IoError(path.string() + ": checkpoint has " + std::to_string(table.size()) + " parameters, model expects " +
                  std::to_string(params.size()));
  }
  std::vector<nn::AdamSlot> slots(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const json& e = table[i];
    if (e.at("name").get<std::string>() != params[i]->name || e.at("rows").get<long>() != params[i]->value.rows() ||
        e.at("cols").get<long>() != params[i]->value.cols()) {
      throw IoError(path.string() + ": parameter " + std::to_string(i) + " (" + e.at("name").get<std::string>() +
                    ") does not match the model's " + params[i]->name);
    }
    slots[i].t = e.at("adam_steps").get<long>();
    read_block(in, params[i]->value, path);
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (slots[i].t == 0) continue;
    slots[i].m.resize(params[i]->value.rows(), params[i]->value.cols());
    slots[i].v.resize(params[i]->value.rows(), params[i]->value.cols());
    read_block(in, slots[i].m, path);
    read_block(in, slots[i].v, path);
  }
  if (in.peek() != std::char_traits<char>::eof()) throw IoError(path.string() + ": trailing bytes after checkpoint payload");
  state.optimizer.import_state(params, std::move(slots));
  return state;
}

}  // namespace nrl
