#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "kmoco/augment.hpp"
#include "kmoco/checkpoint.hpp"
#include "kmoco/config.hpp"
#include "kmoco/crop.hpp"
#include "kmoco/encoder.hpp"
#include "kmoco/memory_bank.hpp"
#include "kmoco/optim.hpp"
#include "kmoco/synth.hpp"

namespace kmoco {

// ---- views -------------------------------------------------------------------

struct ViewConfig {
  CropSpec large, small;
  std::size_t n_small = 0;
  double min_overlap = 0.0;
  double iou_max = 1.0;
  AugPolicy standard, strong;
  double p_strong = 0.0;
};

// Resolves the component switches of a TrainConfig into concrete view
// parameters (small crops share the large aspect-ratio range).
ViewConfig view_config(const TrainConfig& cfg);

struct ViewSet {
  ImageTensor anchor;               // standard policy only
  ImageTensor large;                // mixed policy
  std::vector<ImageTensor> small;   // mixed policy
  CropRect anchor_rect, large_rect;
  std::vector<CropRect> small_rects;
  std::size_t strong_views = 0;
};

// Anchor and large positive from the large spec (iou ≤ iou_max between them
// when iou_max < 1), then n_small crops constrained against the anchor rect.
ViewSet make_views(const ImageTensor& image, const ViewConfig& vc, Rng& rng,
                   MulticropStats* stats = nullptr);

// ---- batches and bookkeeping --------------------------------------------------------

enum class ViewKind : std::uint8_t { kAnchor, kLarge, kSmall };

struct PreparedBatch {
  std::vector<std::size_t> image_ids;
  Tensor anchors;  // [B, 3, L, L]
  Tensor large;    // [B, 3, L, L]
  Tensor small;    // [B·N, 3, S, S], empty when N = 0
  std::size_t n_small = 0;
  // Kind tag for every row handed to each branch, in row order.
  std::vector<ViewKind> momentum_rows, online_rows;
  MulticropStats crops;
  std::size_t small_overlap_violations = 0;  // vs the configured min_overlap
  double min_small_overlap = 1.0;
  std::size_t strong_views = 0;
};

// Where every view went. Small views may only ever appear in *_online.
struct Provenance {
  std::size_t anchors_momentum = 0, large_momentum = 0, small_momentum = 0;
  std::size_t anchors_online = 0, large_online = 0, small_online = 0;
  std::size_t queue_from_anchor = 0, queue_from_large = 0, queue_from_small = 0;
  std::size_t small_emitted = 0, small_violations = 0, small_fallbacks = 0, small_resampled = 0;
  double min_small_overlap = 1.0;
};

struct StepMetrics {
  std::size_t epoch = 0, step = 0;
  double lr = 0.0;
  double instance = 0.0, nn = 0.0, total = 0.0;
  bool nn_active = false;
  double wall_ms = 0.0;
};

struct EpochMetrics {
  std::size_t epoch = 0, steps = 0;
  double instance = 0.0, nn = 0.0, total = 0.0;  // means over the epoch
  double lr_end = 0.0;
};

// ---- trainer -------------------------------------------------------------------

class Trainer {
 public:
  Trainer(TrainConfig cfg, const SynthDataset& data);

  const TrainConfig& config() const { return cfg_; }
  EncoderPair& encoders() { return enc_; }
  const EncoderPair& encoders() const { return enc_; }
  DualQueue& bank() { return bank_; }
  const DualQueue& bank() const { return bank_; }
  const OptimizerState& optimizer() const { return opt_; }
  const Provenance& provenance() const { return prov_; }
  std::size_t steps_per_epoch() const;
  std::size_t global_step() const { return opt_.step(); }

  // Image order of an epoch: a permutation drawn from (seed, epoch).
  std::vector<std::size_t> epoch_order(std::size_t epoch) const;
  // Views for the given images; a pure function of (seed, epoch, image id).
  PreparedBatch prepare(std::size_t epoch, std::span<const std::size_t> image_ids) const;
  StepMetrics train_step(const PreparedBatch& batch, std::size_t epoch);

  // Encoders, bank, optimizer velocities and metadata.
  TensorTable snapshot(std::size_t epoch) const;
  void restore(const TensorTable& table);

 private:
  TrainConfig cfg_;
  ViewConfig views_;
  const SynthDataset* data_;
  EncoderPair enc_;
  DualQueue bank_;
  OptimizerState opt_;
  Provenance prov_;
};

struct PretrainHooks {
  std::function<void(const StepMetrics&)> on_step;
  std::function<void(const EpochMetrics&)> on_epoch;
  // Called at checkpoint intervals and after the last epoch.
  std::function<void(const TensorTable&, std::size_t epoch, bool final)> on_checkpoint;
  // Called with the current state before a NumericError propagates.
  std::function<void(const TensorTable&)> on_abort;
};

struct PretrainResult {
  std::vector<StepMetrics> steps;
  std::vector<EpochMetrics> epochs;
  Provenance provenance;
  TensorTable final_state;
};

// The full loop: cosine schedule over epochs·steps_per_epoch, NN term from
// warmup_epochs on, optional one-batch prefetch on a worker thread.
PretrainResult pretrain(const TrainConfig& cfg, const SynthDataset& data, const PretrainHooks& hooks = {});

// Hash of the training settings, stored in checkpoint metadata.
std::string config_fingerprint(const TrainConfig& cfg);

}  // namespace kmoco
