#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "kmoco/config.hpp"
#include "kmoco/eval.hpp"
#include "kmoco/synth.hpp"
#include "kmoco/trainer.hpp"

// Orchestration shared by the CLI and the acceptance suite: scoring a
// backbone with each protocol and running config grids.
namespace kmoco {

std::vector<std::uint32_t> object_labels(const SynthDataset& ds);

ProbeResult probe_backbone(const ParamSet& g, const SynthDataset& probe_set, const ProbeSettings& s,
                           std::uint64_t seed);

// Dense views of every image: spatial backbone maps plus semantic masks.
std::vector<DenseImage> dense_images(const ParamSet& g, const SynthDataset& ds);
RetrievalResult retrieval_backbone(const ParamSet& g, const SynthDataset& train, const SynthDataset& val,
                                   const RetrievalConfig& cfg);

struct SequenceScore {
  std::uint32_t sequence = 0;
  std::size_t frames = 0, objects = 0;
  double J = 0.0, F = 0.0;  // means over frames 1..T−1
};

// Frame ranges of each sequence in a video set, in file order.
std::vector<std::vector<std::size_t>> video_sequences(const SynthDataset& ds);

// Propagates the first-frame instance mask of each sequence through
// `frames` (per-frame [D, h, w] maps on an h×w grid dividing the image) and
// scores frames 1..T−1 against the ground truth at image resolution. The
// radius in `cfg` is given in image pixels and scaled to the grid.
SequenceScore score_sequence(const SynthDataset& ds, const std::vector<std::size_t>& frames_idx,
                             const std::vector<Tensor>& frames, const PropagationConfig& cfg, int tolerance);
std::vector<SequenceScore> propagation_backbone(const ParamSet& g, const SynthDataset& video,
                                                const PropagationSettings& s);

// ---- grids ---------------------------------------------------------------------

struct GridCell {
  std::string name;
  TrainConfig train;
};

// table4: two-crop, +MC, +MC+CC, +MC+CC+A⁺, +MC+CC+A⁺+NN.
// lambda: the full method for each ablate.lambdas value.
// iou:    two-crop with crop.iou_max over ablate.iou_grid.
std::vector<GridCell> ablation_grid(const ExperimentConfig& cfg);
std::vector<GridCell> iou_grid(const TrainConfig& base, const std::vector<double>& thresholds);

struct CellResult {
  std::string name;
  std::uint64_t seed = 0;
  double final_loss = 0.0;  // mean total loss over the last epoch
  double probe_accuracy = 0.0;
  double probe_train_accuracy = 0.0;
  bool finite = true;
  Provenance provenance;
};

CellResult run_cell(const GridCell& cell, std::uint64_t seed, const SynthDataset& train,
                    const SynthDataset& probe_set, const ProbeSettings& probe);

// Every (cell, seed) pair; rows come back in grid order, seeds innermost.
// `workers` > 1 runs cells on that many threads (each cell single-threaded).
std::vector<CellResult> run_grid(const std::vector<GridCell>& cells, const std::vector<std::uint64_t>& seeds,
                                 const SynthDataset& train, const SynthDataset& probe_set,
                                 const ProbeSettings& probe, std::size_t workers);

struct CellSummary {
  std::string name;
  double mean_loss = 0.0, mean_accuracy = 0.0;
  std::size_t runs = 0;
};
std::vector<CellSummary> summarize(const std::vector<CellResult>& rows);

std::string grid_csv(const std::vector<CellResult>& rows);
std::string summary_csv(const std::vector<CellSummary>& rows);

}  // namespace kmoco
