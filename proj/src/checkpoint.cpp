#include "ccaug/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "ccaug/diffaug.hpp"

#include <json.hpp>

namespace ccaug {

namespace {

constexpr char kMagic[8] = {'C', 'C', 'A', 'G', 'C', 'K', 'P', 'T'};

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  CCAUG_CHECK(in.good(), "checkpoint truncated: " + path);
  return v;
}

void write_floats(std::ofstream& out, std::span<const float> values) {
  out.write(reinterpret_cast<const char*>(values.data()),
            std::streamsize(values.size() * sizeof(float)));
}

std::vector<float> read_floats(std::ifstream& in, std::size_t count, const std::string& path) {
  std::vector<float> values(count);
  in.read(reinterpret_cast<char*>(values.data()), std::streamsize(count * sizeof(float)));
  CCAUG_CHECK(in.good() || (count == 0 && !in.bad()), "checkpoint truncated: " + path);
  return values;
}

nlohmann::json adam_json(const AdamState& state) {
  return {{"step_count", state.step_count}, {"slots", state.slots.size()}};
}

void write_adam(std::ofstream& out, const AdamState& state) {
  for (const auto& slot : state.slots) {
    write_floats(out, slot.m);
    write_floats(out, slot.v);
  }
}

AdamState read_adam(std::ifstream& in, const nlohmann::json& j,
                    const std::vector<std::size_t>& param_sizes, const std::string& path) {
  AdamState state;
  state.step_count = j.at("step_count").get<std::int64_t>();
  const auto slots = j.at("slots").get<std::size_t>();
  CCAUG_CHECK(slots == 0 || slots == param_sizes.size(),
              "checkpoint optimizer state does not match its parameter group: " + path);
  state.slots.resize(slots);
  for (std::size_t s = 0; s < slots; ++s) {
    state.slots[s].m = read_floats(in, param_sizes[s], path);
    state.slots[s].v = read_floats(in, param_sizes[s], path);
  }
  return state;
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
  const auto& cfg = checkpoint.net_config();
  const auto& head = checkpoint.head;

  nlohmann::json header;
  header["train_config"] = {{"reg_weight", checkpoint.train_config.reg_weight},
                            {"learning_rate", checkpoint.train_config.learning_rate},
                            {"weight_decay", checkpoint.train_config.weight_decay},
                            {"epochs", checkpoint.train_config.epochs},
                            {"batch_size", checkpoint.train_config.batch_size},
                            {"test_copies", checkpoint.train_config.test_copies},
                            {"seed", checkpoint.train_config.seed}};
  header["net_config"] = {{"in_channels", cfg.in_channels},
                          {"image_size", cfg.image_size},
                          {"num_classes", cfg.num_classes},
                          {"channels", cfg.channels}};
  std::vector<std::string> kinds;
  for (auto k : head.spec.kinds) kinds.emplace_back(transform_kind_name(k));
  header["transforms"] = kinds;
  header["head_classes"] = head.num_classes();
  header["net_opt"] = adam_json(checkpoint.net_opt);
  header["head_opt"] = adam_json(checkpoint.head_opt);
  header["width_history_rows"] = checkpoint.width_history.size();
  header["experiment"] = checkpoint.experiment_json;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  CCAUG_CHECK(out.good(), "cannot write checkpoint: " + path);
  out.write(kMagic, sizeof(kMagic));
  write_raw(out, kCheckpointVersion);
  const std::string htext = header.dump();
  write_raw(out, std::uint64_t(htext.size()));
  out.write(htext.data(), std::streamsize(htext.size()));

  for (const auto& p : checkpoint.weights.all_params()) write_floats(out, p.values());
  write_floats(out, head.raw.values());
  write_adam(out, checkpoint.net_opt);
  write_adam(out, checkpoint.head_opt);
  for (const auto& row : checkpoint.width_history) {
    CCAUG_CHECK(row.size() == head.raw.size(), "checkpoint width history row has wrong size");
    write_floats(out, row);
  }
  CCAUG_CHECK(out.good(), "failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  CCAUG_CHECK(in.good(), "cannot open checkpoint: " + path);
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  CCAUG_CHECK(in.good() && std::memcmp(magic, kMagic, sizeof(magic)) == 0,
              "not a checkpoint file: " + path);
  const auto version = read_raw<std::uint32_t>(in, path);
  CCAUG_CHECK(version == kCheckpointVersion,
              "unsupported checkpoint version " + std::to_string(version) + ": " + path);
  const auto hsize = read_raw<std::uint64_t>(in, path);
  CCAUG_CHECK(hsize < (1ull << 30), "checkpoint header size is implausible: " + path);
  std::string htext(hsize, '\0');
  in.read(htext.data(), std::streamsize(hsize));
  CCAUG_CHECK(in.good(), "checkpoint truncated: " + path);
  const auto header = nlohmann::json::parse(htext);

  TrainConfig tc;
  const auto& jt = header.at("train_config");
  tc.reg_weight = jt.at("reg_weight").get<float>();
  tc.learning_rate = jt.at("learning_rate").get<float>();
  tc.weight_decay = jt.at("weight_decay").get<float>();
  tc.epochs = jt.at("epochs").get<int>();
  tc.batch_size = jt.at("batch_size").get<int>();
  tc.test_copies = jt.at("test_copies").get<int>();
  tc.seed = jt.at("seed").get<std::uint64_t>();

  NetworkConfig cfg;
  const auto& jn = header.at("net_config");
  cfg.in_channels = jn.at("in_channels").get<int>();
  cfg.image_size = jn.at("image_size").get<int>();
  cfg.num_classes = jn.at("num_classes").get<int>();
  const auto channels = jn.at("channels").get<std::vector<int>>();
  CCAUG_CHECK(channels.size() == cfg.channels.size(), "checkpoint channel list has wrong size");
  std::copy(channels.begin(), channels.end(), cfg.channels.begin());
  cfg.validate();

  std::vector<TransformKind> kinds;
  for (const auto& name : header.at("transforms").get<std::vector<std::string>>())
    kinds.push_back(transform_kind_from_name(name));
  TransformSpec spec(std::move(kinds));
  const int head_classes = header.at("head_classes").get<int>();
  CCAUG_CHECK(head_classes >= 1, "checkpoint head class count must be positive: " + path);

  // Tensor shapes all follow from the configs; blobs appear in all_params order.
  NetworkWeights weights;
  weights.config = cfg;
  int ic = cfg.in_channels;
  std::vector<std::size_t> net_sizes;
  for (int l = 0; l < 5; ++l) {
    const int oc = cfg.channels[static_cast<std::size_t>(l)];
    const auto ksize = std::size_t(oc) * ic * 9;
    weights.conv_kernels.push_back(
        Tensor::param({oc, ic, 3, 3}, read_floats(in, ksize, path)));
    net_sizes.push_back(ksize);
    weights.conv_biases.push_back(
        Tensor::param({oc}, read_floats(in, std::size_t(oc), path)));
    net_sizes.push_back(std::size_t(oc));
    ic = oc;
  }
  const int feat = cfg.channels[4];
  const auto fsize = std::size_t(feat) * cfg.num_classes;
  weights.fc_weight = Tensor::param({feat, cfg.num_classes}, read_floats(in, fsize, path));
  net_sizes.push_back(fsize);
  weights.fc_bias =
      Tensor::param({cfg.num_classes}, read_floats(in, std::size_t(cfg.num_classes), path));
  net_sizes.push_back(std::size_t(cfg.num_classes));

  const auto head_size = std::size_t(spec.dims()) * head_classes;
  AugMatrix head(Tensor::param({spec.dims(), head_classes}, read_floats(in, head_size, path)),
                 spec);

  AdamState net_opt = read_adam(in, header.at("net_opt"), net_sizes, path);
  AdamState head_opt = read_adam(in, header.at("head_opt"), {head_size}, path);

  const auto rows = header.at("width_history_rows").get<std::size_t>();
  std::vector<std::vector<float>> width_history(rows);
  for (auto& row : width_history) row = read_floats(in, head_size, path);

  return Checkpoint{tc,
                    std::move(weights),
                    std::move(head),
                    std::move(net_opt),
                    std::move(head_opt),
                    std::move(width_history),
                    header.at("experiment").get<std::string>()};
}

}  // namespace ccaug
