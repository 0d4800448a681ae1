#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "transnet/data.hpp"
#include "transnet/image_io.hpp"

namespace transnet {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kManifestVersion = 1;

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

ImageU8 to_image(const float* chw, std::size_t channels, std::size_t height, std::size_t width) {
  ImageU8 img{width, height, channels, std::vector<std::uint8_t>(channels * height * width)};
  const std::size_t plane = height * width;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) img.pixels[i * channels + c] = to_byte(chw[c * plane + i]);
  }
  return img;
}

void from_image(const ImageU8& img, float* chw) {
  const std::size_t plane = img.height * img.width;
  for (std::size_t c = 0; c < img.channels; ++c) {
    for (std::size_t i = 0; i < plane; ++i) {
      chw[c * plane + i] = static_cast<float>(img.pixels[i * img.channels + c]) / 255.0f;
    }
  }
}

ImageU8 read_checked(const fs::path& path, std::size_t channels, std::size_t height,
                     std::size_t width) {
  auto img = read_netpbm(path);
  if (img.channels != channels || img.height != height || img.width != width) {
    throw LoadError(path.string() + ": image is " + std::to_string(img.channels) + "x" +
                    std::to_string(img.height) + "x" + std::to_string(img.width) + ", expected " +
                    std::to_string(channels) + "x" + std::to_string(height) + "x" +
                    std::to_string(width));
  }
  return img;
}

std::string frame_name(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "frame_%03zu.ppm", i);
  return buf;
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw LoadError(path.string() + ": cannot open for writing");
  out << j.dump(2) << '\n';
  if (!out) throw LoadError(path.string() + ": write failed");
}

json read_manifest(const fs::path& root) {
  const auto path = root / "manifest.json";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError(path.string() + ": cannot open manifest");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw LoadError(path.string() + ": malformed manifest: " + e.what());
  }
}

template <typename V>
V field(const json& j, const char* key, const fs::path& where) {
  try {
    return j.at(key).get<V>();
  } catch (const json::exception& e) {
    throw LoadError(where.string() + ": bad or missing field '" + key + "': " + e.what());
  }
}

bool is_frame_file(const fs::path& p) {
  const auto name = p.filename().string();
  return name.starts_with("frame_") && p.extension() == ".ppm";
}

std::size_t count_frames(const fs::path& dir) {
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_frame_file(e.path())) ++n;
  }
  return n;
}

}  // namespace

void write_clip_dataset(const ClipDataset& ds, const fs::path& root) {
  validate(ds);
  const auto& g = ds.geometry;
  json clips = json::array();
  const std::size_t frame_size = g.channels * g.height * g.width;
  for (const auto& item : ds.items) {
    const fs::path rel = fs::path(ds.class_names[item.label]) / item.id;
    fs::create_directories(root / rel);
    for (std::size_t i = 0; i < g.frames; ++i) {
      write_netpbm(root / rel / frame_name(i),
                   to_image(item.frames.raw() + i * frame_size, g.channels, g.height, g.width));
    }
    clips.push_back({{"id", item.id}, {"label", ds.class_names[item.label]}, {"path", rel.generic_string()}});
  }
  json manifest = {{"kind", "actions"},
                   {"format_version", kManifestVersion},
                   {"class_names", ds.class_names},
                   {"n", g.frames},
                   {"height", g.height},
                   {"width", g.width},
                   {"channels", g.channels},
                   {"clips", std::move(clips)}};
  write_json(root / "manifest.json", manifest);
}

ClipDataset load_clip_dataset(const fs::path& root) {
  const auto manifest = read_manifest(root);
  const auto where = root / "manifest.json";
  if (field<std::string>(manifest, "kind", where) != "actions") {
    throw LoadError(where.string() + ": not an action dataset");
  }
  ClipDataset ds;
  ds.class_names = field<std::vector<std::string>>(manifest, "class_names", where);
  ds.geometry.frames = field<std::size_t>(manifest, "n", where);
  ds.geometry.height = field<std::size_t>(manifest, "height", where);
  ds.geometry.width = field<std::size_t>(manifest, "width", where);
  ds.geometry.channels = field<std::size_t>(manifest, "channels", where);
  const auto& g = ds.geometry;
  if (g.frames == 0 || g.height == 0 || g.width == 0 || (g.channels != 1 && g.channels != 3)) {
    throw LoadError(where.string() + ": invalid geometry");
  }
  std::map<std::string, std::size_t, std::less<>> label_of;
  for (std::size_t i = 0; i < ds.class_names.size(); ++i) label_of[ds.class_names[i]] = i;

  const std::size_t frame_size = g.channels * g.height * g.width;
  if (!manifest.contains("clips") || !manifest["clips"].is_array()) {
    throw LoadError(where.string() + ": missing clip list");
  }
  for (const auto& entry : manifest["clips"]) {
    ClipItem item;
    item.id = field<std::string>(entry, "id", where);
    const auto label = field<std::string>(entry, "label", where);
    const auto it = label_of.find(label);
    if (it == label_of.end()) {
      throw LoadError(where.string() + ": clip " + item.id + " has unknown class '" + label + "'");
    }
    item.label = it->second;
    const fs::path dir = root / field<std::string>(entry, "path", where);
    if (!fs::is_directory(dir)) throw LoadError(dir.string() + ": clip directory missing");
    const std::size_t found = count_frames(dir);
    if (found != g.frames) {
      throw LoadError("clip " + item.id + " (" + dir.string() + "): " + std::to_string(found) +
                      " frames, manifest says " + std::to_string(g.frames));
    }
    item.frames = Tensor({g.frames, g.channels, g.height, g.width});
    for (std::size_t i = 0; i < g.frames; ++i) {
      const auto img = read_checked(dir / frame_name(i), g.channels, g.height, g.width);
      from_image(img, item.frames.raw() + i * frame_size);
    }
    ds.items.push_back(std::move(item));
  }
  return ds;
}

void write_seg_dataset(const SegDataset& ds, const fs::path& root) {
  validate(ds);
  json pairs = json::array();
  for (const auto& item : ds.items) {
    const fs::path rel = fs::path("pairs") / item.id;
    fs::create_directories(root / rel);
    write_netpbm(root / rel / "image.ppm",
                 to_image(item.image.raw(), ds.channels, ds.height, ds.width));
    write_netpbm(root / rel / "mask.pgm", to_image(item.mask.raw(), 1, ds.height, ds.width));
    pairs.push_back({{"id", item.id},
                     {"image", (rel / "image.ppm").generic_string()},
                     {"mask", (rel / "mask.pgm").generic_string()}});
  }
  json manifest = {{"kind", "segmentation"},
                   {"format_version", kManifestVersion},
                   {"height", ds.height},
                   {"width", ds.width},
                   {"channels", ds.channels},
                   {"pairs", std::move(pairs)}};
  write_json(root / "manifest.json", manifest);
}

SegDataset load_seg_dataset(const fs::path& root) {
  const auto manifest = read_manifest(root);
  const auto where = root / "manifest.json";
  if (field<std::string>(manifest, "kind", where) != "segmentation") {
    throw LoadError(where.string() + ": not a segmentation dataset");
  }
  SegDataset ds;
  ds.height = field<std::size_t>(manifest, "height", where);
  ds.width = field<std::size_t>(manifest, "width", where);
  ds.channels = field<std::size_t>(manifest, "channels", where);
  if (ds.height == 0 || ds.width == 0 || (ds.channels != 1 && ds.channels != 3)) {
    throw LoadError(where.string() + ": invalid geometry");
  }
  if (!manifest.contains("pairs") || !manifest["pairs"].is_array()) {
    throw LoadError(where.string() + ": missing pair list");
  }
  for (const auto& entry : manifest["pairs"]) {
    SegItem item;
    item.id = field<std::string>(entry, "id", where);
    item.image = Tensor({ds.channels, ds.height, ds.width});
    item.mask = Tensor({1, ds.height, ds.width});
    from_image(read_checked(root / field<std::string>(entry, "image", where), ds.channels, ds.height,
                            ds.width),
               item.image.raw());
    from_image(read_checked(root / field<std::string>(entry, "mask", where), 1, ds.height, ds.width),
               item.mask.raw());
    ds.items.push_back(std::move(item));
  }
  return ds;
}

std::string dataset_kind(const fs::path& root) {
  return field<std::string>(read_manifest(root), "kind", root / "manifest.json");
}

std::vector<Tensor> load_frame_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw LoadError(dir.string() + ": not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_frame_file(e.path())) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw DataError(dir.string() + ": no frame_*.ppm files");
  std::vector<Tensor> frames;
  for (const auto& f : files) {
    const auto img = read_netpbm(f);
    if (!frames.empty() && (frames.front().dim(1) != img.height || frames.front().dim(2) != img.width ||
                            frames.front().dim(0) != img.channels)) {
      throw LoadError(f.string() + ": frame geometry differs from the first frame");
    }
    Tensor t({img.channels, img.height, img.width});
    from_image(img, t.raw());
    frames.push_back(std::move(t));
  }
  return frames;
}

}  // namespace transnet
