#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ccaug/checkpoint.hpp"
#include "ccaug/trainer.hpp"

using ccaug::AugMatrix;
using ccaug::Checkpoint;
using ccaug::Dataset;
using ccaug::NetworkConfig;
using ccaug::NetworkWeights;
using ccaug::RngStream;
using ccaug::Tensor;
using ccaug::TrainConfig;
using ccaug::TransformSpec;

namespace {

std::filesystem::path tmp_path(const std::string& name) {
  static const auto dir = [] {
    auto d = std::filesystem::temp_directory_path() / "ccaug_ckpt_tests";
    std::filesystem::create_directories(d);
    return d;
  }();
  return dir / name;
}

Dataset noise_dataset(int n, int size, int num_classes, std::uint64_t seed) {
  Dataset ds;
  ds.channels = 1;
  ds.height = size;
  ds.width = size;
  ds.num_classes = num_classes;
  RngStream rng(seed);
  ds.items.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& item = ds.items[static_cast<std::size_t>(i)];
    item.label = i % num_classes;
    item.pixels.resize(static_cast<std::size_t>(size) * size);
    for (auto& p : item.pixels) p = float(rng.next_double());
  }
  return ds;
}

Checkpoint trained_checkpoint() {
  NetworkConfig cfg;
  cfg.in_channels = 1;
  cfg.image_size = 8;
  cfg.num_classes = 2;
  cfg.channels = {2, 2, 3, 3, 4};

  const auto ds = noise_dataset(10, 8, 2, 21);
  auto head = AugMatrix::init(TransformSpec::rotation_brightness(), 2);
  RngStream wrng(3, 0, 0, ccaug::stream_tag::weight_init);
  auto weights = ccaug::init_weights<float>(cfg, wrng);

  TrainConfig tc;
  tc.epochs = 2;
  tc.batch_size = 5;
  tc.seed = 17;
  auto ck = ccaug::train(tc, ds, head, weights);
  ck.experiment_json = "{\"preset\":\"none\",\"note\":\"round trip\"}";
  return ck;
}

bool same_tensor(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.values().data(), b.values().data(), a.size() * sizeof(float)) == 0;
}

void check_same_checkpoint(const Checkpoint& a, const Checkpoint& b) {
  CHECK(a.train_config == b.train_config);
  CHECK(a.net_config() == b.net_config());

  const auto pa = a.weights.all_params();
  const auto pb = b.weights.all_params();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) CHECK(same_tensor(pa[i], pb[i]));

  CHECK(a.head.spec.kinds == b.head.spec.kinds);
  CHECK(same_tensor(a.head.raw, b.head.raw));

  CHECK(a.net_opt.step_count == b.net_opt.step_count);
  CHECK(a.head_opt.step_count == b.head_opt.step_count);
  REQUIRE(a.net_opt.slots.size() == b.net_opt.slots.size());
  for (std::size_t i = 0; i < a.net_opt.slots.size(); ++i) {
    CHECK(a.net_opt.slots[i].m == b.net_opt.slots[i].m);
    CHECK(a.net_opt.slots[i].v == b.net_opt.slots[i].v);
  }
  REQUIRE(a.head_opt.slots.size() == b.head_opt.slots.size());
  for (std::size_t i = 0; i < a.head_opt.slots.size(); ++i) {
    CHECK(a.head_opt.slots[i].m == b.head_opt.slots[i].m);
    CHECK(a.head_opt.slots[i].v == b.head_opt.slots[i].v);
  }

  CHECK(a.width_history == b.width_history);
  CHECK(a.experiment_json == b.experiment_json);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

void dump(const std::filesystem::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(bytes.data(), std::streamsize(bytes.size()));
}

}  // namespace

TEST_CASE("a trained checkpoint survives a save/load round trip bitwise") {
  const auto ck = trained_checkpoint();
  const auto path = tmp_path("trained.ckpt").string();
  ccaug::save_checkpoint(path, ck);
  const auto back = ccaug::load_checkpoint(path);
  check_same_checkpoint(ck, back);

  // The trained artifact is the interesting case: both optimizer groups have
  // populated moments and the history has one row per epoch plus the init.
  CHECK(back.net_opt.step_count == 4);
  CHECK(back.width_history.size() == 3);
  REQUIRE(back.net_opt.slots.size() == 12);
  bool any_nonzero = false;
  for (const auto& slot : back.net_opt.slots)
    for (float m : slot.m) any_nonzero = any_nonzero || m != 0.0f;
  CHECK(any_nonzero);
}

TEST_CASE("an untrained checkpoint with empty optimizer state round trips") {
  auto ck = trained_checkpoint();
  ck.net_opt = ccaug::AdamState{};
  ck.head_opt = ccaug::AdamState{};
  ck.width_history.clear();
  ck.experiment_json.clear();
  const auto path = tmp_path("fresh.ckpt").string();
  ccaug::save_checkpoint(path, ck);
  const auto back = ccaug::load_checkpoint(path);
  check_same_checkpoint(ck, back);
  CHECK(back.net_opt.slots.empty());
  CHECK(back.width_history.empty());
}

TEST_CASE("saving twice produces identical bytes") {
  const auto ck = trained_checkpoint();
  const auto p1 = tmp_path("bytes1.ckpt");
  const auto p2 = tmp_path("bytes2.ckpt");
  ccaug::save_checkpoint(p1.string(), ck);
  ccaug::save_checkpoint(p2.string(), ck);
  CHECK(slurp(p1) == slurp(p2));
}

TEST_CASE("corrupted checkpoint files are rejected") {
  const auto ck = trained_checkpoint();
  const auto good_path = tmp_path("good.ckpt");
  ccaug::save_checkpoint(good_path.string(), ck);
  const auto good = slurp(good_path);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(ccaug::load_checkpoint(tmp_path("absent.ckpt").string()), ccaug::Error);
  }
  SUBCASE("wrong magic") {
    auto bad = good;
    bad[0] = 'X';
    const auto p = tmp_path("magic.ckpt");
    dump(p, bad);
    CHECK_THROWS_AS(ccaug::load_checkpoint(p.string()), ccaug::Error);
  }
  SUBCASE("unsupported version") {
    auto bad = good;
    bad[8] = 2;  // little-endian u32 version right after the 8-byte magic
    const auto p = tmp_path("version.ckpt");
    dump(p, bad);
    CHECK_THROWS_AS(ccaug::load_checkpoint(p.string()), ccaug::Error);
  }
  SUBCASE("truncated payload") {
    const auto p = tmp_path("truncated.ckpt");
    dump(p, good.substr(0, good.size() - 7));
    CHECK_THROWS_AS(ccaug::load_checkpoint(p.string()), ccaug::Error);
  }
  SUBCASE("truncated header") {
    const auto p = tmp_path("short.ckpt");
    dump(p, good.substr(0, 20));
    CHECK_THROWS_AS(ccaug::load_checkpoint(p.string()), ccaug::Error);
  }
}
