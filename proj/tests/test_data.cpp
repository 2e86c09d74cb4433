#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "ccaug/data.hpp"
#include "ccaug/rng.hpp"
#include "support/formats.hpp"
#include "support/oracles.hpp"

using ccaug::CifarVariant;
using ccaug::Dataset;
using ccaug::LabeledImage;
using ccaug::RngStream;

namespace {

std::string tmp_path(const std::string& name) {
  static const std::filesystem::path dir = [] {
    auto d = std::filesystem::temp_directory_path() / "ccaug_test_data";
    std::filesystem::create_directories(d);
    return d;
  }();
  return (dir / name).string();
}

Dataset make_dataset(int n, int channels, int h, int w, int num_classes, std::uint64_t seed) {
  Dataset ds;
  ds.channels = channels;
  ds.height = h;
  ds.width = w;
  ds.num_classes = num_classes;
  RngStream rng(seed);
  ds.items.resize(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    auto& item = ds.items[static_cast<std::size_t>(i)];
    item.pixels = testsupport::quantized_noise(rng, std::size_t(channels) * h * w);
    item.label = i % num_classes;
  }
  return ds;
}

const std::vector<std::string>& cifar10_names() {
  static const std::vector<std::string> names{"airplane", "automobile", "bird", "cat", "deer",
                                              "dog",      "frog",       "horse", "ship", "truck"};
  return names;
}

std::vector<std::uint8_t> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void dump(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
}

bool same_pixels(const LabeledImage& a, const LabeledImage& b) {
  return a.pixels.size() == b.pixels.size() &&
         std::memcmp(a.pixels.data(), b.pixels.data(), a.pixels.size() * sizeof(float)) == 0;
}

bool same_items(const Dataset& a, const Dataset& b) {
  if (a.items.size() != b.items.size()) return false;
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    const auto& x = a.items[i];
    const auto& y = b.items[i];
    if (x.label != y.label || x.corrupted != y.corrupted) return false;
    if (std::memcmp(&x.corruption_param, &y.corruption_param, sizeof(float)) != 0) return false;
    if (!same_pixels(x, y)) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("mnist files round-trip through writer and loader") {
  auto ds = make_dataset(12, 1, 8, 8, 10, 501);
  const auto img = tmp_path("rt-images-idx3-ubyte");
  const auto lab = tmp_path("rt-labels-idx1-ubyte");
  testsupport::write_mnist(img, lab, ds);

  const auto back = ccaug::load_mnist(img, lab);
  back.validate();
  CHECK(back.channels == 1);
  CHECK(back.height == 8);
  CHECK(back.width == 8);
  CHECK(back.num_classes == 10);
  REQUIRE(back.items.size() == ds.items.size());
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    CHECK(back.items[i].label == ds.items[i].label);
    CHECK(same_pixels(back.items[i], ds.items[i]));
    CHECK_FALSE(back.items[i].corrupted);
  }

  // Non-square dimensions come from the header, not an assumption.
  auto odd = make_dataset(3, 1, 5, 7, 10, 502);
  const auto img2 = tmp_path("odd-images-idx3-ubyte");
  const auto lab2 = tmp_path("odd-labels-idx1-ubyte");
  testsupport::write_mnist(img2, lab2, odd);
  const auto back2 = ccaug::load_mnist(img2, lab2);
  CHECK(back2.height == 5);
  CHECK(back2.width == 7);
  CHECK(same_pixels(back2.items[1], odd.items[1]));
}

TEST_CASE("mnist pixel bytes scale linearly onto [0,1]") {
  const auto img = tmp_path("scale-images-idx3-ubyte");
  const auto lab = tmp_path("scale-labels-idx1-ubyte");
  {
    std::ofstream out(img, std::ios::binary | std::ios::trunc);
    testsupport::write_be32(out, 0x00000803);
    testsupport::write_be32(out, 1);
    testsupport::write_be32(out, 2);
    testsupport::write_be32(out, 2);
    const std::uint8_t bytes[4] = {0, 255, 128, 51};
    out.write(reinterpret_cast<const char*>(bytes), 4);
  }
  {
    std::ofstream out(lab, std::ios::binary | std::ios::trunc);
    testsupport::write_be32(out, 0x00000801);
    testsupport::write_be32(out, 1);
    const std::uint8_t b = 7;
    out.write(reinterpret_cast<const char*>(&b), 1);
  }
  const auto ds = ccaug::load_mnist(img, lab);
  REQUIRE(ds.items.size() == 1);
  CHECK(ds.items[0].pixels[0] == 0.0f);
  CHECK(ds.items[0].pixels[1] == 1.0f);
  CHECK(ds.items[0].pixels[2] == 128.0f / 255.0f);
  CHECK(ds.items[0].pixels[3] == 51.0f / 255.0f);
  CHECK(ds.items[0].label == 7);
}

TEST_CASE("mnist loader rejects malformed files") {
  auto ds = make_dataset(3, 1, 4, 4, 10, 503);
  const auto img = tmp_path("bad-images-idx3-ubyte");
  const auto lab = tmp_path("bad-labels-idx1-ubyte");
  testsupport::write_mnist(img, lab, ds);

  SUBCASE("missing file") {
    CHECK_THROWS_AS(ccaug::load_mnist(tmp_path("nope"), lab), ccaug::Error);
  }
  SUBCASE("swapped magic numbers") {
    // A label file in the image slot (and vice versa) must not be accepted.
    CHECK_THROWS_AS(ccaug::load_mnist(lab, lab), ccaug::Error);
    CHECK_THROWS_AS(ccaug::load_mnist(img, img), ccaug::Error);
  }
  SUBCASE("truncated image payload") {
    auto bytes = slurp(img);
    bytes.pop_back();
    const auto cut = tmp_path("cut-images-idx3-ubyte");
    dump(cut, bytes);
    CHECK_THROWS_AS(ccaug::load_mnist(cut, lab), ccaug::Error);
  }
  SUBCASE("truncated header") {
    const auto cut = tmp_path("cut-header");
    dump(cut, std::vector<std::uint8_t>(8, 0));
    CHECK_THROWS_AS(ccaug::load_mnist(cut, lab), ccaug::Error);
  }
  SUBCASE("image/label count mismatch") {
    auto two = ds;
    two.items.resize(2);
    const auto lab2 = tmp_path("two-labels-idx1-ubyte");
    testsupport::write_mnist(tmp_path("two-images-idx3-ubyte"), lab2, two);
    CHECK_THROWS_AS(ccaug::load_mnist(img, lab2), ccaug::Error);
  }
  SUBCASE("label byte out of range") {
    auto bytes = slurp(lab);
    bytes[8] = 12;
    const auto badlab = tmp_path("range-labels-idx1-ubyte");
    dump(badlab, bytes);
    CHECK_THROWS_AS(ccaug::load_mnist(img, badlab), ccaug::Error);
  }
}

TEST_CASE("cifar10 batches round-trip and decode channel planes") {
  auto ds = make_dataset(6, 3, 32, 32, 10, 504);
  const auto path = tmp_path("cifar10_rt.bin");
  testsupport::write_cifar(path, CifarVariant::Cifar10, ds);

  const auto back = ccaug::load_cifar({path}, CifarVariant::Cifar10);
  back.validate();
  CHECK(back.channels == 3);
  CHECK(back.height == 32);
  CHECK(back.width == 32);
  CHECK(back.num_classes == 10);
  REQUIRE(back.items.size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(back.items[i].label == ds.items[i].label);
    CHECK(same_pixels(back.items[i], ds.items[i]));
  }

  SUBCASE("plane order is R then G then B") {
    Dataset flat;
    flat.channels = 3;
    flat.height = 32;
    flat.width = 32;
    flat.num_classes = 10;
    LabeledImage item;
    item.label = 4;
    item.pixels.assign(3 * 1024, 0.0f);
    for (int p = 0; p < 1024; ++p) item.pixels[static_cast<std::size_t>(p)] = 1.0f;
    for (int p = 0; p < 1024; ++p) item.pixels[static_cast<std::size_t>(2048 + p)] = 102.0f / 255.0f;
    flat.items.push_back(item);
    const auto single = tmp_path("cifar10_planes.bin");
    testsupport::write_cifar(single, CifarVariant::Cifar10, flat);
    const auto got = ccaug::load_cifar({single}, CifarVariant::Cifar10);
    REQUIRE(got.items.size() == 1);
    for (int p = 0; p < 1024; ++p) {
      CHECK(got.items[0].pixels[static_cast<std::size_t>(p)] == 1.0f);
      CHECK(got.items[0].pixels[static_cast<std::size_t>(1024 + p)] == 0.0f);
      CHECK(got.items[0].pixels[static_cast<std::size_t>(2048 + p)] == 102.0f / 255.0f);
    }
  }

  SUBCASE("multiple batch files concatenate in order") {
    auto more = make_dataset(4, 3, 32, 32, 10, 505);
    const auto path2 = tmp_path("cifar10_rt2.bin");
    testsupport::write_cifar(path2, CifarVariant::Cifar10, more);
    const auto both = ccaug::load_cifar({path, path2}, CifarVariant::Cifar10);
    REQUIRE(both.items.size() == 10);
    CHECK(same_pixels(both.items[0], ds.items[0]));
    CHECK(same_pixels(both.items[6], more.items[0]));
    CHECK(both.items[9].label == more.items[3].label);
  }
}

TEST_CASE("cifar100 records carry a coarse byte then the fine label") {
  auto ds = make_dataset(3, 3, 32, 32, 100, 506);
  ds.items[0].label = 42;
  ds.items[1].label = 7;
  ds.items[2].label = 99;
  const auto path = tmp_path("cifar100_rt.bin");
  testsupport::write_cifar(path, CifarVariant::Cifar100, ds, {9, 3, 0});

  const auto back = ccaug::load_cifar({path}, CifarVariant::Cifar100);
  CHECK(back.num_classes == 100);
  REQUIRE(back.items.size() == 3);
  CHECK(back.items[0].label == 42);
  CHECK(back.items[1].label == 7);
  CHECK(back.items[2].label == 99);
  for (std::size_t i = 0; i < 3; ++i) CHECK(same_pixels(back.items[i], ds.items[i]));

  // Record length therefore differs from the cifar10 layout.
  CHECK(slurp(path).size() == 3 * 3074);
  CHECK_THROWS_AS(ccaug::load_cifar({path}, CifarVariant::Cifar10), ccaug::Error);
}

TEST_CASE("cifar loader rejects bad lengths and label bytes") {
  auto ds = make_dataset(2, 3, 32, 32, 10, 507);
  const auto path = tmp_path("cifar10_bad.bin");
  testsupport::write_cifar(path, CifarVariant::Cifar10, ds);

  SUBCASE("stray trailing byte") {
    auto bytes = slurp(path);
    bytes.push_back(0);
    const auto odd = tmp_path("cifar10_trailing.bin");
    dump(odd, bytes);
    CHECK_THROWS_AS(ccaug::load_cifar({odd}, CifarVariant::Cifar10), ccaug::Error);
  }
  SUBCASE("empty file") {
    const auto empty = tmp_path("cifar10_empty.bin");
    dump(empty, {});
    CHECK_THROWS_AS(ccaug::load_cifar({empty}, CifarVariant::Cifar10), ccaug::Error);
    CHECK_THROWS_AS(ccaug::load_cifar({}, CifarVariant::Cifar10), ccaug::Error);
  }
  SUBCASE("label byte beyond the class count") {
    auto bytes = slurp(path);
    bytes[0] = 10;
    const auto bad = tmp_path("cifar10_label.bin");
    dump(bad, bytes);
    CHECK_THROWS_AS(ccaug::load_cifar({bad}, CifarVariant::Cifar10), ccaug::Error);
  }
}

TEST_CASE("class name files load one trimmed name per line") {
  const auto path = tmp_path("names.txt");
  {
    std::ofstream out(path, std::ios::trunc);
    out << "airplane\r\n";
    for (std::size_t i = 1; i < cifar10_names().size(); ++i) out << cifar10_names()[i] << "\n";
    out << "\n\n";  // trailing blank lines are tolerated
  }
  const auto names = ccaug::load_class_names(path);
  REQUIRE(names.size() == 10);
  CHECK(names == cifar10_names());

  Dataset ds;
  ds.channels = 3;
  ds.height = 32;
  ds.width = 32;
  ds.num_classes = 10;
  ds.class_names = names;
  // The brightness corruption set resolves through this metadata.
  CHECK(ds.class_index_for("airplane") == 0);
  CHECK(ds.class_index_for("bird") == 2);
  CHECK(ds.class_index_for("cat") == 3);
  CHECK(ds.class_index_for("deer") == 4);
  CHECK(ds.class_index_for("ship") == 8);
  CHECK_THROWS_AS(ds.class_index_for("submarine"), ccaug::Error);

  SUBCASE("interior blank lines are rejected") {
    const auto bad = tmp_path("names_blank.txt");
    {
      std::ofstream out(bad, std::ios::trunc);
      out << "cat\n\ndog\n";
    }
    CHECK_THROWS_AS(ccaug::load_class_names(bad), ccaug::Error);
  }
  SUBCASE("missing file is an error") {
    CHECK_THROWS_AS(ccaug::load_class_names(tmp_path("no_names.txt")), ccaug::Error);
  }
}

TEST_CASE("rotation corruption draws stay inside each class's range") {
  const int per_class = 200;
  auto src = make_dataset(per_class * 10, 1, 8, 8, 10, 508);
  const float quarter = std::numbers::pi_v<float> / 4.0f;
  std::vector<float> widths(10, std::numbers::pi_v<float>);
  widths[6] = quarter;
  widths[9] = quarter;

  const auto out = ccaug::corrupt_rotation(src, widths, 91);
  out.validate();
  REQUIRE(out.items.size() == src.items.size());

  std::vector<std::vector<double>> by_class(10);
  for (std::size_t i = 0; i < out.items.size(); ++i) {
    const auto& item = out.items[i];
    CHECK(item.corrupted);
    CHECK(item.label == src.items[i].label);
    const float r = widths[static_cast<std::size_t>(item.label)];
    CHECK(std::abs(item.corruption_param) <= r);
    by_class[static_cast<std::size_t>(item.label)].push_back(double(item.corruption_param));
  }

  // Realized angles look uniform on [-r, r] within each class.
  for (int c = 0; c < 10; ++c) {
    const double r = double(widths[static_cast<std::size_t>(c)]);
    const double d = oracle::ks_statistic(by_class[static_cast<std::size_t>(c)],
                                          [r](double x) { return (x + r) / (2.0 * r); });
    CHECK(d < 1.628 / std::sqrt(double(per_class)));
  }

  // The images were actually rotated.
  int changed = 0;
  for (std::size_t i = 0; i < out.items.size(); ++i)
    if (!same_pixels(out.items[i], src.items[i])) ++changed;
  CHECK(changed > int(out.items.size()) * 9 / 10);
}

TEST_CASE("rotation corruption is deterministic and position-keyed") {
  auto src = make_dataset(60, 1, 8, 8, 10, 509);
  std::vector<float> widths(10, 1.0f);

  const auto a = ccaug::corrupt_rotation(src, widths, 14);
  const auto b = ccaug::corrupt_rotation(src, widths, 14);
  CHECK(same_items(a, b));

  const auto c = ccaug::corrupt_rotation(src, widths, 15);
  CHECK_FALSE(same_items(a, c));

  // Draws key off the item's position, so corrupting a prefix equals
  // truncating the corrupted whole.
  const auto head_first = ccaug::corrupt_rotation(ccaug::truncate(src, 25), widths, 14);
  const auto head_after = ccaug::truncate(a, 25);
  CHECK(same_items(head_first, head_after));
}

TEST_CASE("zero rotation half-width leaves a class untouched") {
  auto src = make_dataset(40, 1, 8, 8, 10, 510);
  std::vector<float> widths(10, 2.0f);
  widths[0] = 0.0f;

  const auto out = ccaug::corrupt_rotation(src, widths, 33);
  for (std::size_t i = 0; i < out.items.size(); ++i) {
    if (out.items[i].label == 0) {
      CHECK(same_pixels(out.items[i], src.items[i]));
      CHECK_FALSE(out.items[i].corrupted);
      CHECK(out.items[i].corruption_param == 0.0f);
    } else {
      CHECK(out.items[i].corrupted);
    }
  }
}

TEST_CASE("rotation corruption validates its inputs") {
  auto src = make_dataset(4, 1, 8, 8, 10, 511);
  std::vector<float> widths(10, 1.0f);

  std::vector<float> short_widths(9, 1.0f);
  CHECK_THROWS_AS(ccaug::corrupt_rotation(src, short_widths, 1), ccaug::Error);

  auto neg = widths;
  neg[3] = -0.5f;
  CHECK_THROWS_AS(ccaug::corrupt_rotation(src, neg, 1), ccaug::Error);

  auto wide = widths;
  wide[3] = 4.0f;
  CHECK_THROWS_AS(ccaug::corrupt_rotation(src, wide, 1), ccaug::Error);

  auto rect = make_dataset(4, 1, 5, 7, 10, 512);
  CHECK_THROWS_AS(ccaug::corrupt_rotation(rect, widths, 1), ccaug::Error);

  // The full rotation range itself is allowed.
  std::vector<float> full(10, std::numbers::pi_v<float>);
  CHECK_NOTHROW(ccaug::corrupt_rotation(src, full, 1));
}

TEST_CASE("brightness corruption shifts only the named classes") {
  const int per_class = 200;
  auto src = make_dataset(per_class * 10, 3, 4, 4, 10, 513);
  src.class_names = cifar10_names();
  // Mid-range pixels so the clamp never engages in the bound checks below.
  for (auto& item : src.items)
    for (auto& p : item.pixels) p = 0.25f + p * 0.5f;

  const std::vector<std::string> chosen{"airplane", "bird", "cat", "deer", "ship"};
  const std::vector<int> chosen_labels{0, 2, 3, 4, 8};
  const float hw = 0.2f;

  const auto out = ccaug::corrupt_brightness(src, chosen, hw, 77);
  out.validate();

  std::vector<double> params;
  for (std::size_t i = 0; i < out.items.size(); ++i) {
    const auto& item = out.items[i];
    const bool selected = std::find(chosen_labels.begin(), chosen_labels.end(), item.label) !=
                          chosen_labels.end();
    if (!selected) {
      CHECK(same_pixels(item, src.items[i]));
      CHECK_FALSE(item.corrupted);
      continue;
    }
    CHECK(item.corrupted);
    CHECK(std::abs(item.corruption_param) <= hw);
    params.push_back(double(item.corruption_param));
    // Every pixel moved by exactly the recorded shift (no clamping here).
    for (std::size_t p = 0; p < item.pixels.size(); ++p)
      CHECK(item.pixels[p] == src.items[i].pixels[p] + item.corruption_param);
  }
  REQUIRE(params.size() == std::size_t(per_class) * chosen.size());

  const double d = oracle::ks_statistic(params, [hw](double x) { return (x + hw) / (2.0 * hw); });
  CHECK(d < 1.628 / std::sqrt(double(params.size())));

  CHECK(same_items(out, ccaug::corrupt_brightness(src, chosen, hw, 77)));
  CHECK_FALSE(same_items(out, ccaug::corrupt_brightness(src, chosen, hw, 78)));
}

TEST_CASE("brightness corruption clamps to [0,1] and validates inputs") {
  auto src = make_dataset(30, 3, 4, 4, 10, 514);
  src.class_names = cifar10_names();

  const auto out = ccaug::corrupt_brightness(src, cifar10_names(), 0.9f, 5);
  bool clamped = false;
  for (std::size_t i = 0; i < out.items.size(); ++i) {
    for (std::size_t p = 0; p < out.items[i].pixels.size(); ++p) {
      const float v = out.items[i].pixels[p];
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
      const float raw = src.items[i].pixels[p] + out.items[i].corruption_param;
      if (raw != v) clamped = true;
      CHECK(v == std::min(1.0f, std::max(0.0f, raw)));
    }
  }
  CHECK(clamped);  // 0.9 shifts on [0,1] pixels must saturate somewhere

  CHECK(same_items(src, ccaug::corrupt_brightness(src, {}, 0.2f, 5)));
  CHECK(same_items(src, ccaug::corrupt_brightness(src, {"cat"}, 0.0f, 5)));
  CHECK_THROWS_AS(ccaug::corrupt_brightness(src, {"submarine"}, 0.2f, 5), ccaug::Error);
  CHECK_THROWS_AS(ccaug::corrupt_brightness(src, {"cat"}, 1.5f, 5), ccaug::Error);
  CHECK_THROWS_AS(ccaug::corrupt_brightness(src, {"cat"}, -0.1f, 5), ccaug::Error);
}

TEST_CASE("cifar100 subsetting keeps ten classes and remaps by metadata") {
  Dataset full;
  full.channels = 3;
  full.height = 32;
  full.width = 32;
  full.num_classes = 100;
  full.class_names.resize(100);
  for (int i = 0; i < 100; ++i) full.class_names[static_cast<std::size_t>(i)] = "filler" + std::to_string(i);
  // Scatter the chosen names across the index space.
  const std::vector<int> where{12, 25, 33, 41, 87, 49, 58, 66, 70, 74};
  const auto& chosen = ccaug::cifar100_subset_names();
  for (std::size_t i = 0; i < chosen.size(); ++i)
    full.class_names[static_cast<std::size_t>(where[i])] = chosen[i];

  RngStream rng(515);
  auto add_item = [&](int label) {
    LabeledImage item;
    item.label = label;
    item.pixels = testsupport::quantized_noise(rng, 3 * 32 * 32);
    full.items.push_back(std::move(item));
  };
  for (int rep = 0; rep < 3; ++rep)
    for (int idx : where) add_item(idx);
  add_item(3);
  add_item(50);
  add_item(99);

  const auto sub = ccaug::cifar100_subset(full);
  sub.validate();
  CHECK(sub.num_classes == 10);
  CHECK(sub.class_names == chosen);
  REQUIRE(sub.items.size() == 30);  // filler classes dropped
  for (int rep = 0; rep < 3; ++rep)
    for (std::size_t i = 0; i < 10; ++i) {
      const auto& kept = sub.items[static_cast<std::size_t>(rep) * 10 + i];
      CHECK(kept.label == int(i));
      CHECK(same_pixels(kept, full.items[static_cast<std::size_t>(rep) * 10 + i]));
    }

  Dataset anonymous = full;
  anonymous.class_names.clear();
  CHECK_THROWS_AS(ccaug::cifar100_subset(anonymous), ccaug::Error);
}

TEST_CASE("truncate keeps the first n items") {
  auto src = make_dataset(10, 1, 4, 4, 10, 516);

  const auto five = ccaug::truncate(src, 5);
  REQUIRE(five.items.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(same_pixels(five.items[i], src.items[i]));
  CHECK(five.num_classes == src.num_classes);

  CHECK(ccaug::truncate(src, 10).items.size() == 10);
  CHECK(ccaug::truncate(src, 99).items.size() == 10);
  CHECK(ccaug::truncate(src, 0).items.empty());
  CHECK_THROWS_AS(ccaug::truncate(src, -1), ccaug::Error);
}

TEST_CASE("dataset cache round-trips bitwise") {
  auto src = make_dataset(25, 1, 8, 8, 10, 517);
  src.class_names.clear();
  std::vector<float> widths(10, 1.5f);
  widths[2] = 0.0f;
  const auto corrupted = ccaug::corrupt_rotation(src, widths, 99);
  const std::string spec = R"({"preset":"mnist-rot-69","corruption_seed":99})";

  const auto path = tmp_path("cache.bin");
  ccaug::save_dataset_cache(path, corrupted, spec);
  const auto back = ccaug::load_dataset_cache(path);

  CHECK(back.spec_json == spec);
  CHECK(back.dataset.channels == corrupted.channels);
  CHECK(back.dataset.height == corrupted.height);
  CHECK(back.dataset.width == corrupted.width);
  CHECK(back.dataset.num_classes == corrupted.num_classes);
  CHECK(back.dataset.class_names == corrupted.class_names);
  CHECK(same_items(back.dataset, corrupted));

  SUBCASE("named classes survive the round-trip") {
    auto named = corrupted;
    named.class_names = cifar10_names();
    const auto path2 = tmp_path("cache_named.bin");
    ccaug::save_dataset_cache(path2, named, "{}");
    CHECK(ccaug::load_dataset_cache(path2).dataset.class_names == cifar10_names());
  }
}

TEST_CASE("dataset cache rejects foreign and damaged files") {
  auto src = make_dataset(4, 1, 8, 8, 10, 518);
  const auto path = tmp_path("cache_ok.bin");
  ccaug::save_dataset_cache(path, src, "{}");

  SUBCASE("junk file") {
    const auto junk = tmp_path("cache_junk.bin");
    dump(junk, {'h', 'e', 'l', 'l', 'o', ' ', 'x', 'x', 0, 0, 0, 0});
    CHECK_THROWS_AS(ccaug::load_dataset_cache(junk), ccaug::Error);
  }
  SUBCASE("unsupported version") {
    auto bytes = slurp(path);
    bytes[8] = 2;  // little-endian version word sits after the 8-byte magic
    const auto newer = tmp_path("cache_version.bin");
    dump(newer, bytes);
    CHECK_THROWS_AS(ccaug::load_dataset_cache(newer), ccaug::Error);
  }
  SUBCASE("truncated payload") {
    auto bytes = slurp(path);
    bytes.resize(bytes.size() - 5);
    const auto cut = tmp_path("cache_cut.bin");
    dump(cut, bytes);
    CHECK_THROWS_AS(ccaug::load_dataset_cache(cut), ccaug::Error);
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(ccaug::load_dataset_cache(tmp_path("cache_none.bin")), ccaug::Error);
  }
}

TEST_CASE("dataset validation catches malformed containers") {
  auto ok = make_dataset(3, 1, 4, 4, 10, 519);
  CHECK_NOTHROW(ok.validate());

  auto bad_pixel = ok;
  bad_pixel.items[0].pixels[5] = 1.5f;
  CHECK_THROWS_AS(bad_pixel.validate(), ccaug::Error);

  auto bad_label = ok;
  bad_label.items[1].label = 10;
  CHECK_THROWS_AS(bad_label.validate(), ccaug::Error);

  auto bad_count = ok;
  bad_count.items[2].pixels.pop_back();
  CHECK_THROWS_AS(bad_count.validate(), ccaug::Error);

  auto bad_names = ok;
  bad_names.class_names = {"one", "two"};
  CHECK_THROWS_AS(bad_names.validate(), ccaug::Error);

  auto bad_dims = ok;
  bad_dims.height = 0;
  CHECK_THROWS_AS(bad_dims.validate(), ccaug::Error);
}
