#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kmoco/augment.hpp"
#include "kmoco/crop.hpp"
#include "kmoco/encoder.hpp"
#include "kmoco/eval.hpp"
#include "kmoco/losses.hpp"
#include "kmoco/optim.hpp"
#include "kmoco/synth.hpp"

namespace kmoco {

enum class QueueUpdate { kPost, kPre };

struct TrainConfig {
  std::string dataset;
  std::size_t epochs = 30;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  std::size_t checkpoint_interval = 0;  // epochs between checkpoints; 0 = final only
  std::size_t warmup_epochs = 5;
  QueueUpdate queue_update = QueueUpdate::kPost;
  bool prefetch = true;
  bool log_wall_time = false;

  EncoderConfig encoder;
  double momentum = 0.999;
  double momentum_low = 0.995;  // used when lower_momentum is set

  CropSpec large{0.2, 1.0, 3.0 / 4.0, 4.0 / 3.0, 32};
  CropSpec small{0.05, 0.14, 3.0 / 4.0, 4.0 / 3.0, 16};
  std::size_t n_small = 2;
  double min_overlap = 0.2;
  double iou_max = 1.0;  // 1 disables the pair constraint

  std::string standard_policy = AugPolicy::standard().to_string();
  std::string strong_policy = AugPolicy::strong().to_string();
  double p_strong = 0.5;

  double tau = 0.2;
  double lambda = 0.4;
  std::size_t k = 20;
  std::size_t queue_size = 512;
  NnDenominator denominator = NnDenominator::kIncludeTargets;

  SgdConfig optim{0.003, 0.9, 1e-4, 0};

  // Component switches: MC, CC, m↓, A⁺, NN.
  bool multicrop = false;
  bool constraint = false;
  bool lower_momentum = false;
  bool strong_aug = false;
  bool nn = false;

  std::size_t effective_small_views() const { return multicrop ? n_small : 0; }
  double effective_min_overlap() const { return constraint ? min_overlap : 0.0; }
  double effective_momentum() const { return lower_momentum ? momentum_low : momentum; }
  double effective_p_strong() const { return strong_aug ? p_strong : 0.0; }
  double effective_lambda() const { return nn ? lambda : 0.0; }

  void validate() const;  // ConfigError
};

struct GenConfig {
  Variant variant = Variant::kSceneCentric;
  std::size_t classes = 8;
  std::size_t count = 256;
  int objects_min = 2, objects_max = 4;
  int side = 64;
  bool longtail = false;
  LongTailSpec longtail_spec{8, 64, 2, 6.0};
  std::size_t sequences = 4, frames = 8;
  double speed_min = 1.0, speed_max = 3.0, jitter = 0.5;
};

struct ProbeSettings {
  std::string dataset;  // labelled object-centric set
  int side = 32;
  ProbeConfig probe;
};

struct RetrievalSettings {
  std::string train, val;
  RetrievalConfig retrieval;
};

struct PropagationSettings {
  std::string dataset;  // video set
  PropagationConfig propagation;
  int tolerance = 1;
};

struct CropStatsSettings {
  std::vector<std::string> presets{"moco", "simclr"};
  std::size_t pairs = 10000;
  std::size_t bins = 20;
  int side = 64;
  std::vector<double> iou_grid;  // non-empty: also run the threshold sweep
};

struct AblateSettings {
  std::string preset = "table4";  // table4 | lambda | iou
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::vector<double> lambdas{0.0, 0.1, 0.2, 0.4, 0.8};
  std::vector<double> iou_grid{1.0, 0.3, 0.1};
};

// Everything a subcommand can be told. Text form: `key = value` lines under
// `[section]` headers, `#` comments. Every field has a key; unknown keys,
// malformed values and duplicate keys are ConfigErrors.
struct ExperimentConfig {
  TrainConfig train;
  GenConfig gen;
  ProbeSettings probe;
  RetrievalSettings retrieval;
  PropagationSettings propagation;
  CropStatsSettings crop_stats;
  AblateSettings ablate;

  // Applies one "section.key=value" override.
  void set(const std::string& dotted_key, const std::string& value);
  std::string get(const std::string& dotted_key) const;

  // Canonical text: every key in a fixed order, shortest round-trip numbers.
  std::string to_text() const;
  static ExperimentConfig parse(const std::string& text);
  static ExperimentConfig load(const std::string& path);  // IoError if unreadable

  std::vector<std::string> keys() const;
};

// FNV-1a 64 of the canonical text, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);
std::uint64_t fnv1a64(const std::string& bytes);
std::string hex64(std::uint64_t v);

// Scale ranges of the crop-stats presets.
CropSpec crop_preset(const std::string& name, int out_side);

}  // namespace kmoco
