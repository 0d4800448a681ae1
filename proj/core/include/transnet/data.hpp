#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "transnet/tensor.hpp"

namespace transnet {

// ---------------------------------------------------------------------------
// Datasets

struct ClipGeometry {
  std::size_t frames = 8;  // n
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  friend bool operator==(const ClipGeometry&, const ClipGeometry&) = default;
};

struct ClipItem {
  std::string id;
  Tensor frames;  // [n, C, H, W], values in [0,1]
  std::size_t label = 0;
};

/// Labeled fixed-length clips. Every item has exactly geometry.frames frames
/// and label < class_names.size().
struct ClipDataset {
  std::vector<std::string> class_names;
  ClipGeometry geometry;
  std::vector<ClipItem> items;

  std::size_t size() const noexcept { return items.size(); }
};

struct SegItem {
  std::string id;
  Tensor image;  // [C, H, W]
  Tensor mask;   // [1, H, W], values in {0,1}
};

struct SegDataset {
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  std::vector<SegItem> items;

  std::size_t size() const noexcept { return items.size(); }
};

struct ImageItem {
  std::string id;
  Tensor image;  // [C, H, W]
  std::size_t label = 0;
};

/// Single-frame classification data (the classification-pretraining task).
struct ImageDataset {
  std::vector<std::string> class_names;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t channels = 3;
  std::vector<ImageItem> items;

  std::size_t size() const noexcept { return items.size(); }
};

/// Throws DataError when an item violates the dataset invariants.
void validate(const ClipDataset& ds);
void validate(const SegDataset& ds);

// ---------------------------------------------------------------------------
// Synthetic renderer

enum class ShapeKind { kDisc, kBar, kSquare, kRing, kCross, kTriangle };
inline constexpr std::size_t kShapeKindCount = 6;
const std::vector<std::string>& shape_kind_names();

/// Six motion classes mirroring a six-action benchmark.
const std::vector<std::string>& action_class_names();

struct ShapePose {
  ShapeKind kind = ShapeKind::kDisc;
  double cx = 0.0;
  double cy = 0.0;
  double size = 1.0;       // radius / half-length / circumradius
  double thickness = 1.0;  // half-thickness for bars and crosses, inner ratio for rings
  double angle = 0.0;      // radians
};

/// Pixel-centre inclusion test: pixel (x, y) belongs to the shape iff this
/// returns true for (x, y).
bool shape_contains(const ShapePose& pose, double x, double y);

/// Bounding radius of the shape around its centre.
double shape_extent(const ShapePose& pose);

struct Distractor {
  double x0 = 0, y0 = 0, x1 = 0, y1 = 0;  // line segment
  double half_width = 0.5;
  double level = 0.3;
};

/// Appearance of one scene. Background and shape intensities are modulated
/// by a fixed lighting gradient (red brightens left to right, green top to
/// bottom); distractors are flat gray.
struct SceneStyle {
  double background_level = 0.15;
  double shape_level = 0.85;
  double noise = 0.04;
  std::vector<Distractor> distractors;
};

/// Renders [3,H,W] quantized to k/255.
Tensor render_frame(const ShapePose& pose, const SceneStyle& style, std::size_t height,
                    std::size_t width, Rng& noise_rng);
/// Exact shape support as [1,H,W] with values {0,1}.
Tensor render_mask(const ShapePose& pose, std::size_t height, std::size_t width);

/// Brightness threshold that separates shape pixels from everything else in
/// the blue (unmodulated) channel of a rendered frame.
inline constexpr double kShapeThreshold = 0.55;

// ---------------------------------------------------------------------------
// Generators

/// clips_per_class clips for each of the six motion classes, in class order.
ClipDataset gen_action_dataset(std::uint64_t seed, std::size_t clips_per_class, std::size_t frames,
                               std::size_t height, std::size_t width);

SegDataset gen_segmentation_dataset(std::uint64_t seed, std::size_t count, std::size_t height,
                                    std::size_t width);

/// Shape-category classification over the six ShapeKinds.
ImageDataset gen_shape_classification_dataset(std::uint64_t seed, std::size_t per_class,
                                              std::size_t height, std::size_t width);

// ---------------------------------------------------------------------------
// Sampling and splitting

/// Indices round(i*(T-1)/(n-1)) for i in [0,n); if T < n the last frame is
/// repeated. DataError when T == 0.
std::vector<std::size_t> sample_frame_indices(std::size_t available, std::size_t n);

template <typename Frame>
std::vector<Frame> sample_frames(const std::vector<Frame>& frames, std::size_t n) {
  std::vector<Frame> out;
  for (auto i : sample_frame_indices(frames.size(), n)) out.push_back(frames[i]);
  return out;
}

/// Stratified split: each class is shuffled with `seed` and its first
/// ceil(fraction*m) items (clamped to [1, m-1]) go to train. Both outputs
/// keep the original item order.
std::pair<ClipDataset, ClipDataset> split_dataset(const ClipDataset& ds, double train_fraction,
                                                  std::uint64_t seed);

/// Same stratified rule for segmentation pairs (one pseudo-class).
std::pair<SegDataset, SegDataset> split_dataset(const SegDataset& ds, double train_fraction,
                                                std::uint64_t seed);

// ---------------------------------------------------------------------------
// On-disk layout
//
//   <root>/manifest.json
//   <root>/<class>/<clip_id>/frame_000.ppm ...       (actions)
//   <root>/pairs/<id>/image.ppm, mask.pgm           (segmentation)

void write_clip_dataset(const ClipDataset& ds, const std::filesystem::path& root);
ClipDataset load_clip_dataset(const std::filesystem::path& root);

void write_seg_dataset(const SegDataset& ds, const std::filesystem::path& root);
SegDataset load_seg_dataset(const std::filesystem::path& root);

/// Manifest "kind" field of a dataset directory ("actions" or "segmentation").
std::string dataset_kind(const std::filesystem::path& root);

/// Loads every frame_*.ppm of a directory in name order, [C,H,W] each.
std::vector<Tensor> load_frame_directory(const std::filesystem::path& dir);

}  // namespace transnet
