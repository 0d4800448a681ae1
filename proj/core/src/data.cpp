#include "transnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

namespace transnet {

namespace {

constexpr double kPi = std::numbers::pi;

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::uint64_t state = seed;
  std::uint64_t x = splitmix64(state) ^ (stream * 0x9e3779b97f4a7c15ULL);
  state = x;
  std::uint64_t y = splitmix64(state) ^ (index * 0xbf58476d1ce4e5b9ULL);
  state = y;
  return splitmix64(state);
}

enum Stream : std::uint64_t { kActionStream = 1, kSegStream = 2, kShapeClsStream = 3 };

float quantize(double v) {
  const double clamped = std::clamp(v, 0.0, 1.0);
  return static_cast<float>(std::lround(clamped * 255.0)) / 255.0f;
}

double segment_distance(const Distractor& d, double x, double y) {
  const double vx = d.x1 - d.x0;
  const double vy = d.y1 - d.y0;
  const double len2 = vx * vx + vy * vy;
  double t = len2 > 0 ? ((x - d.x0) * vx + (y - d.y0) * vy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double px = d.x0 + t * vx - x;
  const double py = d.y0 + t * vy - y;
  return std::sqrt(px * px + py * py);
}

std::vector<Distractor> random_distractors(Rng& rng, std::size_t min_count, std::size_t max_count,
                                           std::size_t height, std::size_t width) {
  const auto count = static_cast<std::size_t>(
      rng.range(static_cast<std::int64_t>(min_count), static_cast<std::int64_t>(max_count)));
  std::vector<Distractor> out;
  for (std::size_t i = 0; i < count; ++i) {
    Distractor d;
    d.x0 = rng.uniform(0.0, static_cast<double>(width - 1));
    d.y0 = rng.uniform(0.0, static_cast<double>(height - 1));
    d.x1 = rng.uniform(0.0, static_cast<double>(width - 1));
    d.y1 = rng.uniform(0.0, static_cast<double>(height - 1));
    d.half_width = rng.uniform(0.5, 1.0);
    d.level = rng.uniform(0.25, 0.4);
    out.push_back(d);
  }
  return out;
}

SceneStyle random_style(Rng& rng, std::size_t min_distractors, std::size_t max_distractors,
                        std::size_t height, std::size_t width) {
  SceneStyle s;
  s.background_level = rng.uniform(0.08, 0.2);
  s.shape_level = rng.uniform(0.75, 0.95);
  s.noise = 0.01;
  s.distractors = random_distractors(rng, min_distractors, max_distractors, height, width);
  return s;
}

/// Size parameters for a static scene, relative to the short image side.
ShapePose random_static_shape(ShapeKind kind, Rng& rng, std::size_t height, std::size_t width) {
  const double side = static_cast<double>(std::min(height, width));
  ShapePose p;
  p.kind = kind;
  p.angle = rng.uniform(0.0, 2.0 * kPi);
  switch (kind) {
    case ShapeKind::kDisc:
      p.size = rng.uniform(0.12, 0.25) * side;
      break;
    case ShapeKind::kBar:
      p.size = rng.uniform(0.2, 0.4) * side;
      p.thickness = rng.uniform(0.06, 0.12) * side;
      break;
    case ShapeKind::kSquare:
      p.size = rng.uniform(0.1, 0.2) * side;
      break;
    case ShapeKind::kRing:
      p.size = rng.uniform(0.15, 0.28) * side;
      p.thickness = rng.uniform(0.45, 0.6);
      break;
    case ShapeKind::kCross:
      p.size = rng.uniform(0.2, 0.35) * side;
      p.thickness = rng.uniform(0.05, 0.09) * side;
      break;
    case ShapeKind::kTriangle:
      p.size = rng.uniform(0.15, 0.3) * side;
      break;
  }
  const double r = std::min(shape_extent(p), 0.45 * side);
  p.cx = rng.uniform(r, static_cast<double>(width - 1) - r);
  p.cy = rng.uniform(r, static_cast<double>(height - 1) - r);
  return p;
}

/// The disc or bar that action clips move and segmentation pairs mask.
ShapePose random_actor(Rng& rng, double side, bool bar) {
  ShapePose p;
  p.kind = bar ? ShapeKind::kBar : ShapeKind::kDisc;
  if (bar) {
    p.size = rng.uniform(0.25, 0.32) * side;
    p.thickness = rng.uniform(0.10, 0.14) * side;
  } else {
    p.size = rng.uniform(0.18, 0.25) * side;
  }
  p.angle = rng.uniform(0.0, 2.0 * kPi);
  return p;
}

// Largest bounding radius a moving action shape may have.
double max_action_extent(double side) { return std::hypot(0.32, 0.14) * side; }

void check_action_geometry(std::size_t frames, std::size_t height, std::size_t width) {
  if (frames < 2) throw ConfigError("action dataset: frames must be >= 2");
  if (height < 16 || width < 16) throw ConfigError("action dataset: height and width must be >= 16");
  const double side = static_cast<double>(std::min(height, width));
  const double room = static_cast<double>(std::min(height, width)) - 3.0 - max_action_extent(side);
  if (room < static_cast<double>(frames - 1)) {
    throw ConfigError("action dataset: " + std::to_string(height) + "x" + std::to_string(width) +
                      " is too small to render " + std::to_string(frames) + "-frame motion");
  }
}

ClipItem render_action_clip(std::size_t label, std::size_t index, Rng& rng, std::size_t frames,
                            std::size_t height, std::size_t width) {
  const double side = static_cast<double>(std::min(height, width));
  const double w = static_cast<double>(width);
  const double h = static_cast<double>(height);
  const auto& names = action_class_names();

  // rotate needs an orientation to show, so it always gets the bar
  ShapePose base = random_actor(rng, side, label == 5 || rng.bernoulli(0.5));
  const double extent = shape_extent(base);
  const SceneStyle style = random_style(rng, 1, 3, height, width);

  const auto centre_range = [&](double limit) {
    return std::pair<double, double>{1.0 + 0.5 * extent, limit - 2.0 - 0.5 * extent};
  };
  const auto [xlo, xhi] = centre_range(w);
  const auto [ylo, yhi] = centre_range(h);

  std::vector<ShapePose> poses(frames, base);
  const double denom = static_cast<double>(frames - 1);
  switch (label) {
    case 0:    // translate_right
    case 1: {  // translate_left
      const double room = xhi - xlo;
      const auto max_step = std::clamp<std::int64_t>(static_cast<std::int64_t>(room / denom), 1, 4);
      const double step = static_cast<double>(rng.range(std::min<std::int64_t>(2, max_step), max_step));
      const double travel = step * denom;
      const double x0 = rng.uniform(xlo, std::max(xlo, xhi - travel));
      const double y0 = rng.uniform(ylo, yhi);
      for (std::size_t i = 0; i < frames; ++i) {
        const double offset = step * static_cast<double>(i);
        poses[i].cx = label == 0 ? x0 + offset : x0 + travel - offset;
        poses[i].cy = y0;
      }
      break;
    }
    case 2:    // scale_up
    case 3: {  // scale_down
      const double x0 = rng.uniform(xlo, xhi);
      const double y0 = rng.uniform(ylo, yhi);
      const double start = rng.uniform(0.45, 0.55);
      for (std::size_t i = 0; i < frames; ++i) {
        const double t = static_cast<double>(i) / denom;
        const double f = label == 2 ? start + (1.0 - start) * t : 1.0 - (1.0 - start) * t;
        poses[i].cx = x0;
        poses[i].cy = y0;
        poses[i].size = base.size * f;
        poses[i].thickness = base.kind == ShapeKind::kBar ? base.thickness * std::max(f, 0.7)
                                                           : base.thickness;
      }
      break;
    }
    case 4: {  // oscillate_vertical
      const double max_amp = std::max(1.0, (yhi - ylo) / 2.0);
      const double amp = std::min(rng.uniform(0.22, 0.3) * h, max_amp);
      const double yc = rng.uniform(ylo + amp, std::max(ylo + amp, yhi - amp));
      const double x0 = rng.uniform(xlo, xhi);
      const double cycles = rng.uniform(0.8, 1.2);
      for (std::size_t i = 0; i < frames; ++i) {
        const double t = static_cast<double>(i) / denom;
        poses[i].cx = x0;
        poses[i].cy = yc + amp * std::sin(2.0 * kPi * cycles * t);
      }
      break;
    }
    default: {  // rotate: the bar spins about its centre
      const double x0 = rng.uniform(xlo, xhi);
      const double y0 = rng.uniform(ylo, yhi);
      const double speed = rng.uniform(20.0, 25.0) * kPi / 180.0;
      for (std::size_t i = 0; i < frames; ++i) {
        poses[i].angle = base.angle + speed * static_cast<double>(i);
        poses[i].cx = x0;
        poses[i].cy = y0;
      }
      break;
    }
  }

  ClipItem item;
  char id[64];
  std::snprintf(id, sizeof(id), "%s_%04zu", names[label].c_str(), index);
  item.id = id;
  item.label = label;
  item.frames = Tensor({frames, 3, height, width});
  const std::size_t frame_size = 3 * height * width;
  for (std::size_t i = 0; i < frames; ++i) {
    const auto frame = render_frame(poses[i], style, height, width, rng);
    std::copy(frame.data().begin(), frame.data().end(), item.frames.raw() + i * frame_size);
  }
  return item;
}

std::size_t train_count_for(std::size_t m, double fraction) {
  auto count = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(m) - 1e-9));
  return std::clamp<std::size_t>(count, 1, m - 1);
}

void check_fraction(double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("train_fraction must be in (0,1), got " + std::to_string(fraction));
  }
}

}  // namespace

// ---------------------------------------------------------------------------

void validate(const ClipDataset& ds) {
  const auto& g = ds.geometry;
  const Shape expect{g.frames, g.channels, g.height, g.width};
  for (const auto& item : ds.items) {
    if (item.label >= ds.class_names.size()) {
      throw DataError("clip " + item.id + ": label " + std::to_string(item.label) + " out of range");
    }
    if (item.frames.shape() != expect) {
      throw DataError("clip " + item.id + ": frames " + to_string(item.frames.shape()) +
                      " expected " + to_string(expect));
    }
  }
}

void validate(const SegDataset& ds) {
  const Shape img{ds.channels, ds.height, ds.width};
  const Shape msk{1, ds.height, ds.width};
  for (const auto& item : ds.items) {
    if (item.image.shape() != img || item.mask.shape() != msk) {
      throw DataError("segmentation pair " + item.id + ": geometry mismatch");
    }
    for (auto v : item.mask.data()) {
      if (!(v >= 0.0f && v <= 1.0f)) throw DataError("segmentation pair " + item.id + ": mask outside [0,1]");
    }
  }
}

const std::vector<std::string>& shape_kind_names() {
  static const std::vector<std::string> names{"disc", "bar", "square", "ring", "cross", "triangle"};
  return names;
}

const std::vector<std::string>& action_class_names() {
  static const std::vector<std::string> names{"translate_right", "translate_left",
                                              "scale_up",        "scale_down",
                                              "oscillate_vertical", "rotate"};
  return names;
}

bool shape_contains(const ShapePose& p, double x, double y) {
  const double dx = x - p.cx;
  const double dy = y - p.cy;
  const double c = std::cos(p.angle);
  const double s = std::sin(p.angle);
  const double u = dx * c + dy * s;
  const double v = -dx * s + dy * c;
  switch (p.kind) {
    case ShapeKind::kDisc:
      return dx * dx + dy * dy <= p.size * p.size;
    case ShapeKind::kBar:
      return std::abs(u) <= p.size && std::abs(v) <= p.thickness;
    case ShapeKind::kSquare:
      return std::abs(u) <= p.size && std::abs(v) <= p.size;
    case ShapeKind::kRing: {
      const double d2 = dx * dx + dy * dy;
      const double inner = p.size * p.thickness;
      return d2 <= p.size * p.size && d2 >= inner * inner;
    }
    case ShapeKind::kCross:
      return (std::abs(u) <= p.size && std::abs(v) <= p.thickness) ||
             (std::abs(v) <= p.size && std::abs(u) <= p.thickness);
    case ShapeKind::kTriangle: {
      // equilateral: inside iff the projection on each edge normal is <= inradius
      const double inradius = p.size / 2.0;
      for (int k = 0; k < 3; ++k) {
        const double a = p.angle + kPi / 3.0 + 2.0 * kPi * k / 3.0;
        if (dx * std::cos(a) + dy * std::sin(a) > inradius) return false;
      }
      return true;
    }
  }
  return false;
}

double shape_extent(const ShapePose& p) {
  switch (p.kind) {
    case ShapeKind::kBar:
    case ShapeKind::kCross:
      return std::hypot(p.size, p.thickness);
    case ShapeKind::kSquare:
      return p.size * std::numbers::sqrt2;
    default:
      return p.size;
  }
}

Tensor render_frame(const ShapePose& pose, const SceneStyle& style, std::size_t height,
                    std::size_t width, Rng& noise_rng) {
  Tensor out({3, height, width});
  const std::size_t plane = height * width;
  const double wx = width > 1 ? static_cast<double>(width - 1) : 1.0;
  const double hy = height > 1 ? static_cast<double>(height - 1) : 1.0;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = static_cast<double>(x);
      const double fy = static_cast<double>(y);
      const double gains[3] = {0.05 + 0.95 * fx / wx, 0.05 + 0.95 * fy / hy, 1.0};
      double flat = -1.0;
      double level = style.background_level;
      if (shape_contains(pose, fx, fy)) {
        level = style.shape_level;
      } else {
        for (const auto& d : style.distractors) {
          if (segment_distance(d, fx, fy) <= d.half_width) flat = d.level;
        }
      }
      for (std::size_t c = 0; c < 3; ++c) {
        const double base = flat >= 0.0 ? flat : level * gains[c];
        const double noise = noise_rng.uniform(-style.noise, style.noise);
        out[c * plane + y * width + x] = quantize(base + noise);
      }
    }
  }
  return out;
}

Tensor render_mask(const ShapePose& pose, std::size_t height, std::size_t width) {
  Tensor mask({1, height, width});
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      mask[y * width + x] =
          shape_contains(pose, static_cast<double>(x), static_cast<double>(y)) ? 1.0f : 0.0f;
    }
  }
  return mask;
}

// ---------------------------------------------------------------------------

ClipDataset gen_action_dataset(std::uint64_t seed, std::size_t clips_per_class, std::size_t frames,
                               std::size_t height, std::size_t width) {
  check_action_geometry(frames, height, width);
  ClipDataset ds;
  ds.class_names = action_class_names();
  ds.geometry = {frames, height, width, 3};
  ds.items.reserve(clips_per_class * ds.class_names.size());
  for (std::size_t label = 0; label < ds.class_names.size(); ++label) {
    for (std::size_t k = 0; k < clips_per_class; ++k) {
      Rng rng(derive_seed(seed, kActionStream, label * clips_per_class + k));
      ds.items.push_back(render_action_clip(label, k, rng, frames, height, width));
    }
  }
  return ds;
}

SegDataset gen_segmentation_dataset(std::uint64_t seed, std::size_t count, std::size_t height,
                                    std::size_t width) {
  if (count == 0) throw ConfigError("segmentation dataset: count must be >= 1");
  if (height < 8 || width < 8) throw ConfigError("segmentation dataset: height and width must be >= 8");
  SegDataset ds;
  ds.height = height;
  ds.width = width;
  ds.channels = 3;
  ds.items.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, kSegStream, i));
    auto pose = random_actor(rng, static_cast<double>(std::min(height, width)), rng.bernoulli(0.5));
    const double margin = 1.0 + 0.5 * shape_extent(pose);
    pose.cx = rng.uniform(margin, static_cast<double>(width) - 1.0 - margin);
    pose.cy = rng.uniform(margin, static_cast<double>(height) - 1.0 - margin);
    const auto style = random_style(rng, 1, 3, height, width);
    SegItem item;
    char id[32];
    std::snprintf(id, sizeof(id), "pair_%05zu", i);
    item.id = id;
    item.image = render_frame(pose, style, height, width, rng);
    item.mask = render_mask(pose, height, width);
    ds.items.push_back(std::move(item));
  }
  return ds;
}

ImageDataset gen_shape_classification_dataset(std::uint64_t seed, std::size_t per_class,
                                              std::size_t height, std::size_t width) {
  if (per_class == 0) throw ConfigError("shape classification dataset: per_class must be >= 1");
  if (height < 8 || width < 8) throw ConfigError("shape classification dataset: image too small");
  ImageDataset ds;
  ds.class_names = shape_kind_names();
  ds.height = height;
  ds.width = width;
  ds.channels = 3;
  for (std::size_t label = 0; label < kShapeKindCount; ++label) {
    for (std::size_t k = 0; k < per_class; ++k) {
      Rng rng(derive_seed(seed, kShapeClsStream, label * per_class + k));
      const auto pose = random_static_shape(static_cast<ShapeKind>(label), rng, height, width);
      const auto style = random_style(rng, 1, 3, height, width);
      ImageItem item;
      item.id = ds.class_names[label] + "_" + std::to_string(k);
      item.image = render_frame(pose, style, height, width, rng);
      item.label = label;
      ds.items.push_back(std::move(item));
    }
  }
  return ds;
}

// ---------------------------------------------------------------------------

std::vector<std::size_t> sample_frame_indices(std::size_t available, std::size_t n) {
  if (available == 0) throw DataError("sample_frames: input has no frames");
  if (n == 0) throw ConfigError("sample_frames: n must be >= 1");
  std::vector<std::size_t> out;
  out.reserve(n);
  if (available < n) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(std::min(i, available - 1));
    return out;
  }
  if (n == 1) return {0};
  const std::size_t span = available - 1;
  const std::size_t denom = n - 1;
  for (std::size_t i = 0; i < n; ++i) {
    // round-half-up of i*span/denom in exact integer arithmetic
    out.push_back((2 * i * span + denom) / (2 * denom));
  }
  return out;
}

std::pair<ClipDataset, ClipDataset> split_dataset(const ClipDataset& ds, double train_fraction,
                                                  std::uint64_t seed) {
  check_fraction(train_fraction);
  std::vector<std::vector<std::size_t>> per_class(ds.class_names.size());
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    if (ds.items[i].label >= per_class.size()) throw DataError("split: label out of range");
    per_class[ds.items[i].label].push_back(i);
  }
  Rng rng(seed);
  std::vector<bool> to_train(ds.items.size(), false);
  for (std::size_t c = 0; c < per_class.size(); ++c) {
    auto& idx = per_class[c];
    if (idx.size() < 2) {
      throw DataError("split: class '" + ds.class_names[c] + "' has " + std::to_string(idx.size()) +
                      " items, need at least 2");
    }
    rng.shuffle(idx.begin(), idx.end());
    const std::size_t k = train_count_for(idx.size(), train_fraction);
    for (std::size_t j = 0; j < k; ++j) to_train[idx[j]] = true;
  }
  ClipDataset train{ds.class_names, ds.geometry, {}};
  ClipDataset test{ds.class_names, ds.geometry, {}};
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    (to_train[i] ? train : test).items.push_back(ds.items[i]);
  }
  return {std::move(train), std::move(test)};
}

std::pair<SegDataset, SegDataset> split_dataset(const SegDataset& ds, double train_fraction,
                                                std::uint64_t seed) {
  check_fraction(train_fraction);
  if (ds.items.size() < 2) throw DataError("split: segmentation dataset needs at least 2 pairs");
  std::vector<std::size_t> idx(ds.items.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx.begin(), idx.end());
  const std::size_t k = train_count_for(idx.size(), train_fraction);
  std::vector<bool> to_train(ds.items.size(), false);
  for (std::size_t j = 0; j < k; ++j) to_train[idx[j]] = true;
  SegDataset train{ds.height, ds.width, ds.channels, {}};
  SegDataset test{ds.height, ds.width, ds.channels, {}};
  for (std::size_t i = 0; i < ds.items.size(); ++i) {
    (to_train[i] ? train : test).items.push_back(ds.items[i]);
  }
  return {std::move(train), std::move(test)};
}

}  // namespace transnet
