#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kmoco/image.hpp"

namespace kmoco {

enum class Variant : std::uint32_t { kObjectCentric = 0, kSceneCentric = 1, kVideo = 2 };

const char* variant_name(Variant v);
Variant parse_variant(const std::string& s);  // "object" | "scene" | "video"

// Shape archetypes, one per class: disc, square, triangle, cross, ring,
// diamond, frame, ellipse. Each class also has its own two-tone texture;
// classes 8..15 reuse the archetypes with different textures.
inline constexpr std::size_t kMaxClasses = 16;

struct SynthRecord {
  ImageTensor image;
  std::vector<std::uint32_t> labels;  // class of instance id i+1
  std::vector<std::uint16_t> mask;    // H·W instance ids, 0 = background
  std::uint32_t sequence = 0;         // 1-based sequence id for video frames, else 0
};

struct SynthDataset {
  int height = 0, width = 0, channels = 3;
  Variant variant = Variant::kObjectCentric;
  std::uint64_t seed = 0;
  std::vector<SynthRecord> records;

  std::size_t size() const { return records.size(); }
  std::size_t num_classes() const;  // max label + 1
  // Object-centric label (class of instance 1).
  std::uint32_t label(std::size_t i) const { return records.at(i).labels.at(0); }
};

// Per-pixel semantic map: 0 = background, class c → c + 1.
std::vector<int> semantic_mask(const SynthRecord& r);

struct GenerateSpec {
  Variant variant = Variant::kObjectCentric;
  std::size_t classes = 8;
  std::size_t count = 256;
  std::uint64_t seed = 0;
  int objects_min = 1, objects_max = 1;  // scene-centric object count range
  int side = 64;
  // If non-empty, object-centric images are drawn with exactly these per-class
  // counts (long-tailed sets); `count` is ignored.
  std::vector<std::size_t> per_class_counts;
};

// Object-centric: one roughly centred shape per image, labels cycle through
// classes. Scene-centric: objects_min..objects_max non-overlapping shapes at
// random positions. SamplingError if placement keeps failing.
SynthDataset generate(const GenerateSpec& spec);

// Power-law class sizes for long-tailed sets:
//   n_c = max(n_min, round(n_max · (c+1)^−γ)),  γ = log(n_max/n_min) / log(C).
// `alpha` is the nominal Pareto power and is carried for reporting only; the
// curve is pinned by its end points n_0 = n_max and n_{C−1} = n_min.
struct LongTailSpec {
  std::size_t classes = 16;
  std::size_t n_max = 256;
  std::size_t n_min = 1;
  double alpha = 6.0;
};
std::vector<std::size_t> longtail_counts(const LongTailSpec& spec);

struct VideoSpec {
  std::size_t classes = 8;
  std::size_t sequences = 4;
  std::size_t frames = 8;  // ≥ 2
  std::uint64_t seed = 0;
  int side = 64;
  int objects_min = 1, objects_max = 3;
  double speed_min = 1.0, speed_max = 3.0;  // pixels per frame
  double jitter = 0.5;                      // per-frame positional noise (px, std-dev)
};

// Each sequence moves its shapes along straight lines (plus jitter) over a
// fixed background. Instance ids are stable across frames and every object
// stays fully visible.
SynthDataset generate_video(const VideoSpec& spec);

// Mask centroid (row, col) of instance `id`; NaN if absent.
std::pair<double, double> mask_centroid(const SynthRecord& r, int width, std::uint16_t id);

// File layout (little-endian):
//   "KMDS" | u32 version | u64 count | u32 H | u32 W | u32 C | u32 variant
//   per record: f32 image[H·W·C] | u32 label count | u32 labels[] |
//               u16 mask[H·W] | u32 sequence id
inline constexpr std::uint32_t kDatasetVersion = 1;
void write_dataset(const std::string& path, const SynthDataset& ds);
SynthDataset read_dataset(const std::string& path);

}  // namespace kmoco
