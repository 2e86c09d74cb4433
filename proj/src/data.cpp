#include "ccaug/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <numbers>
#include <unordered_map>

#include "ccaug/diffaug.hpp"
#include "ccaug/rng.hpp"

#include <json.hpp>

namespace ccaug {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  CCAUG_CHECK(in.good(), "cannot open file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return bytes;
}

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) |
         (std::uint32_t(p[2]) << 8) | std::uint32_t(p[3]);
}

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

}  // namespace

void Dataset::validate() const {
  CCAUG_CHECK(channels >= 1 && height >= 1 && width >= 1, "Dataset: bad image dimensions");
  CCAUG_CHECK(num_classes >= 1, "Dataset: needs at least one class");
  CCAUG_CHECK(class_names.empty() ||
                  class_names.size() == static_cast<std::size_t>(num_classes),
              "Dataset: class name count does not match class count");
  const std::size_t expect = static_cast<std::size_t>(channels) * height * width;
  for (const auto& item : items) {
    CCAUG_CHECK(item.pixels.size() == expect, "Dataset: item pixel count mismatch");
    CCAUG_CHECK(item.label >= 0 && item.label < num_classes, "Dataset: label out of range");
    for (float p : item.pixels)
      CCAUG_CHECK(p >= 0.0f && p <= 1.0f, "Dataset: pixel outside [0,1]");
  }
}

int Dataset::class_index_for(const std::string& name) const {
  for (std::size_t i = 0; i < class_names.size(); ++i)
    if (class_names[i] == name) return static_cast<int>(i);
  fail("unknown class name: " + name);
}

Dataset load_mnist(const std::string& image_file, const std::string& label_file) {
  const auto ibytes = read_file(image_file);
  CCAUG_CHECK(ibytes.size() >= 16, "MNIST image file truncated: " + image_file);
  CCAUG_CHECK(read_be32(ibytes.data()) == kIdxImagesMagic,
              "MNIST image file has wrong magic number: " + image_file);
  const std::uint32_t count = read_be32(ibytes.data() + 4);
  const std::uint32_t rows = read_be32(ibytes.data() + 8);
  const std::uint32_t cols = read_be32(ibytes.data() + 12);
  CCAUG_CHECK(ibytes.size() == 16 + std::size_t(count) * rows * cols,
              "MNIST image file truncated: " + image_file);

  const auto lbytes = read_file(label_file);
  CCAUG_CHECK(lbytes.size() >= 8, "MNIST label file truncated: " + label_file);
  CCAUG_CHECK(read_be32(lbytes.data()) == kIdxLabelsMagic,
              "MNIST label file has wrong magic number: " + label_file);
  const std::uint32_t lcount = read_be32(lbytes.data() + 4);
  CCAUG_CHECK(lbytes.size() == 8 + std::size_t(lcount), "MNIST label file truncated: " + label_file);
  CCAUG_CHECK(count == lcount, "MNIST image/label count mismatch");

  Dataset ds;
  ds.channels = 1;
  ds.height = static_cast<int>(rows);
  ds.width = static_cast<int>(cols);
  ds.num_classes = 10;
  ds.items.resize(count);
  const std::size_t plane = std::size_t(rows) * cols;
  for (std::uint32_t i = 0; i < count; ++i) {
    auto& item = ds.items[i];
    item.pixels.resize(plane);
    const std::uint8_t* src = ibytes.data() + 16 + std::size_t(i) * plane;
    for (std::size_t p = 0; p < plane; ++p) item.pixels[p] = float(src[p]) / 255.0f;
    const int label = lbytes[8 + i];
    CCAUG_CHECK(label >= 0 && label <= 9, "MNIST label byte out of range");
    item.label = label;
  }
  return ds;
}

Dataset load_cifar(const std::vector<std::string>& batch_files, CifarVariant variant) {
  CCAUG_CHECK(!batch_files.empty(), "load_cifar: no batch files given");
  const bool fine = variant == CifarVariant::Cifar100;
  const std::size_t record = fine ? 3074 : 3073;
  Dataset ds;
  ds.channels = 3;
  ds.height = 32;
  ds.width = 32;
  ds.num_classes = fine ? 100 : 10;
  for (const auto& path : batch_files) {
    const auto bytes = read_file(path);
    CCAUG_CHECK(!bytes.empty() && bytes.size() % record == 0,
                "CIFAR batch file length is not a multiple of the record size: " + path);
    const std::size_t n = bytes.size() / record;
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint8_t* rec = bytes.data() + i * record;
      LabeledImage item;
      item.label = fine ? rec[1] : rec[0];  // cifar100: coarse byte, then fine byte
      CCAUG_CHECK(item.label < ds.num_classes, "CIFAR label byte out of range");
      item.pixels.resize(3 * 1024);
      const std::uint8_t* planes = rec + (fine ? 2 : 1);
      for (std::size_t p = 0; p < 3 * 1024; ++p) item.pixels[p] = float(planes[p]) / 255.0f;
      ds.items.push_back(std::move(item));
    }
  }
  return ds;
}

std::vector<std::string> load_class_names(const std::string& path) {
  std::ifstream in(path);
  CCAUG_CHECK(in.good(), "cannot open class name file: " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    names.push_back(line);
  }
  while (!names.empty() && names.back().empty()) names.pop_back();
  for (const auto& n : names) CCAUG_CHECK(!n.empty(), "blank class name in " + path);
  return names;
}

Dataset corrupt_rotation(const Dataset& src, std::span<const float> half_widths,
                         std::uint64_t seed) {
  CCAUG_CHECK(static_cast<int>(half_widths.size()) == src.num_classes,
              "corrupt_rotation: one half-width per class required");
  for (float r : half_widths)
    CCAUG_CHECK(r >= 0.0f && r <= std::numbers::pi_v<float>,
                "corrupt_rotation: half-width outside [0, pi]");
  CCAUG_CHECK(src.height == src.width, "corrupt_rotation: images must be square");
  Dataset out = src;
  for (std::size_t i = 0; i < out.items.size(); ++i) {
    auto& item = out.items[i];
    const float r = half_widths[static_cast<std::size_t>(item.label)];
    if (r == 0.0f) continue;
    RngStream rng(seed, i);
    const float angle = r * float(rng.next_symmetric());
    item.pixels = rotate_image<float>(item.pixels, out.channels, out.height, out.width, angle);
    item.corruption_param = angle;
    item.corrupted = true;
  }
  return out;
}

Dataset corrupt_brightness(const Dataset& src, const std::vector<std::string>& class_names,
                           float half_width, std::uint64_t seed) {
  CCAUG_CHECK(half_width >= 0.0f && half_width <= 1.0f,
              "corrupt_brightness: half-width outside [0, 1]");
  std::vector<bool> selected(static_cast<std::size_t>(src.num_classes), false);
  for (const auto& name : class_names)
    selected[static_cast<std::size_t>(src.class_index_for(name))] = true;
  Dataset out = src;
  if (class_names.empty() || half_width == 0.0f) return out;
  for (std::size_t i = 0; i < out.items.size(); ++i) {
    auto& item = out.items[i];
    if (!selected[static_cast<std::size_t>(item.label)]) continue;
    RngStream rng(seed, i);
    const float shift = half_width * float(rng.next_symmetric());
    for (float& p : item.pixels) p = std::min(1.0f, std::max(0.0f, p + shift));
    item.corruption_param = shift;
    item.corrupted = true;
  }
  return out;
}

const std::vector<std::string>& cifar100_subset_names() {
  static const std::vector<std::string> names{"beetle", "clock",  "crab", "flatfish",
                                              "sunflower", "house", "plain", "road",
                                              "sea",    "skyscraper"};
  return names;
}

Dataset cifar100_subset(const Dataset& full) {
  CCAUG_CHECK(!full.class_names.empty(),
              "cifar100_subset: the fine label name listing is required");
  const auto& names = cifar100_subset_names();
  std::unordered_map<int, int> remap;
  for (std::size_t i = 0; i < names.size(); ++i)
    remap[full.class_index_for(names[i])] = static_cast<int>(i);

  Dataset out;
  out.channels = full.channels;
  out.height = full.height;
  out.width = full.width;
  out.num_classes = static_cast<int>(names.size());
  out.class_names = names;
  for (const auto& item : full.items) {
    auto it = remap.find(item.label);
    if (it == remap.end()) continue;
    LabeledImage kept = item;  // pixels untouched by design
    kept.label = it->second;
    out.items.push_back(std::move(kept));
  }
  return out;
}

Dataset truncate(const Dataset& src, int n) {
  CCAUG_CHECK(n >= 0, "truncate: negative count");
  Dataset out = src;
  if (static_cast<std::size_t>(n) < out.items.size()) out.items.resize(static_cast<std::size_t>(n));
  return out;
}

namespace {

constexpr char kCacheMagic[8] = {'C', 'C', 'A', 'G', 'D', 'S', '\0', '\0'};
constexpr std::uint32_t kCacheVersion = 1;

template <typename T>
void write_raw(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& path) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  CCAUG_CHECK(in.good(), "dataset cache truncated: " + path);
  return v;
}

}  // namespace

void save_dataset_cache(const std::string& path, const Dataset& dataset,
                        const std::string& spec_json) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  CCAUG_CHECK(out.good(), "cannot write dataset cache: " + path);
  out.write(kCacheMagic, sizeof(kCacheMagic));
  write_raw(out, kCacheVersion);

  nlohmann::json header;
  header["channels"] = dataset.channels;
  header["height"] = dataset.height;
  header["width"] = dataset.width;
  header["num_classes"] = dataset.num_classes;
  header["class_names"] = dataset.class_names;
  header["count"] = dataset.items.size();
  header["spec"] = spec_json;
  const std::string htext = header.dump();
  write_raw(out, std::uint64_t(htext.size()));
  out.write(htext.data(), std::streamsize(htext.size()));

  for (const auto& item : dataset.items) {
    write_raw(out, std::int32_t(item.label));
    write_raw(out, item.corruption_param);
    write_raw(out, std::uint8_t(item.corrupted ? 1 : 0));
    out.write(reinterpret_cast<const char*>(item.pixels.data()),
              std::streamsize(item.pixels.size() * sizeof(float)));
  }
  CCAUG_CHECK(out.good(), "failed writing dataset cache: " + path);
}

CachedDataset load_dataset_cache(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  CCAUG_CHECK(in.good(), "cannot open dataset cache: " + path);
  char magic[8] = {};
  in.read(magic, sizeof(magic));
  CCAUG_CHECK(in.good() && std::memcmp(magic, kCacheMagic, sizeof(magic)) == 0,
              "not a dataset cache file: " + path);
  const auto version = read_raw<std::uint32_t>(in, path);
  CCAUG_CHECK(version == kCacheVersion,
              "unsupported dataset cache version " + std::to_string(version) + ": " + path);
  const auto hsize = read_raw<std::uint64_t>(in, path);
  std::string htext(hsize, '\0');
  in.read(htext.data(), std::streamsize(hsize));
  CCAUG_CHECK(in.good(), "dataset cache truncated: " + path);
  const auto header = nlohmann::json::parse(htext);

  CachedDataset out;
  out.spec_json = header.at("spec").get<std::string>();
  Dataset& ds = out.dataset;
  ds.channels = header.at("channels").get<int>();
  ds.height = header.at("height").get<int>();
  ds.width = header.at("width").get<int>();
  ds.num_classes = header.at("num_classes").get<int>();
  ds.class_names = header.at("class_names").get<std::vector<std::string>>();
  const auto count = header.at("count").get<std::uint64_t>();
  const std::size_t plane = std::size_t(ds.channels) * ds.height * ds.width;
  ds.items.resize(count);
  for (auto& item : ds.items) {
    item.label = read_raw<std::int32_t>(in, path);
    item.corruption_param = read_raw<float>(in, path);
    item.corrupted = read_raw<std::uint8_t>(in, path) != 0;
    item.pixels.resize(plane);
    in.read(reinterpret_cast<char*>(item.pixels.data()),
            std::streamsize(plane * sizeof(float)));
    CCAUG_CHECK(in.good(), "dataset cache truncated: " + path);
  }
  return out;
}

}  // namespace ccaug
