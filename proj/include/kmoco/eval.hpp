#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "kmoco/encoder.hpp"
#include "kmoco/synth.hpp"
#include "kmoco/tensor.hpp"

namespace kmoco {

// ---- frozen feature extraction ----------------------------------------------

// Pooled backbone features [n × C_g] of whole images resized to `side`.
// Runs on constant copies of g, so the parameters are never touched.
Tensor frozen_features(const ParamSet& g, const SynthDataset& ds, int side, std::size_t chunk = 32);

// Spatial backbone maps, one [C_g, h, w] tensor per image (before pooling),
// for images at their native resolution.
std::vector<Tensor> frozen_spatial(const ParamSet& g, const SynthDataset& ds,
                                   std::span<const std::size_t> which, std::size_t chunk = 16);

// ---- linear probe ------------------------------------------------------------

struct ProbeConfig {
  std::size_t epochs = 100;
  double lr = 0.1;
  double weight_decay = 1e-4;
  std::size_t batch = 64;
  double train_fraction = 0.7;
  std::uint64_t seed = 0;
};

struct ProbeResult {
  double accuracy = 0.0;  // held-out top-1
  double train_accuracy = 0.0;
  std::size_t n_train = 0, n_test = 0, classes = 0;
  std::vector<double> per_class_accuracy;  // held-out, NaN when a class is absent
};

// Softmax linear classifier on standardized features (per-dimension std is
// floored at 1e-8), trained by minibatch SGD. The split is stratified per
// class. Fewer than two classes is a ConfigError.
ProbeResult linear_probe(const Tensor& features, std::span<const std::uint32_t> labels,
                         const ProbeConfig& cfg);

// ---- k-means -----------------------------------------------------------------

struct KMeansResult {
  std::vector<std::size_t> assign;
  Tensor centroids;                // [K × d]
  std::vector<double> objective;   // after each assignment step
  std::size_t reseeded = 0;        // empty clusters moved to the farthest point
};

// k-means++ seeding then Lloyd iterations until assignments stop changing or
// `iters` is reached. points: [n × d], n ≥ K (ConfigError otherwise).
KMeansResult kmeans(const Tensor& points, std::size_t K, std::size_t iters, std::uint64_t seed);

// ---- segment retrieval -------------------------------------------------------

// A frozen dense view of one image: embedding map [D, h, w] plus the
// ground-truth semantic map at image resolution (0 = background).
struct DenseImage {
  Tensor embedding;
  std::vector<int> semantic;
  int height = 0, width = 0;
};

struct SegmentDescriptor {
  std::size_t image = 0;
  std::size_t region = 0;
  std::vector<double> descriptor;  // unit norm
  int majority_class = 0;
};

struct RetrievalConfig {
  std::size_t clusters = 15;
  std::size_t kmeans_iters = 30;
  std::uint64_t seed = 0;
};

struct RetrievalResult {
  double miou = 0.0;
  std::vector<double> per_class_iou;  // index = semantic class, NaN if absent in gt and pred
  std::size_t train_regions = 0, val_regions = 0;
};

// Splits each image into K-means regions over its pixel embeddings and pools
// one descriptor per region. Region maps are upsampled to image resolution
// by nearest cell.
std::vector<SegmentDescriptor> describe_segments(const DenseImage& im, std::size_t image_id,
                                                 const RetrievalConfig& cfg,
                                                 std::vector<std::size_t>* pixel_region = nullptr);

// Each validation region takes the class of its single nearest training
// descriptor (cosine, unweighted). mIoU over classes 0..num_classes−1 that
// occur in ground truth or prediction. Empty val set is a ConfigError.
RetrievalResult segment_retrieval(const std::vector<DenseImage>& train, const std::vector<DenseImage>& val,
                                  std::size_t num_classes, const RetrievalConfig& cfg);

// ---- video label propagation ---------------------------------------------------

struct PropagationConfig {
  std::size_t k_prop = 5;
  int radius = 8;  // in embedding-map cells
  double temperature = 0.07;
  std::size_t context = 2;  // previous frames used as reference
};

struct PropagationResult {
  std::vector<std::vector<int>> masks;   // per frame, h·w hard labels
  std::vector<std::vector<double>> soft; // per frame, h·w·L soft labels
};

// frames: per-frame embedding maps [D, h, w]. first_mask: h·w labels in
// [0, num_labels). Frame t draws on the predictions of frames
// t−context … t−1 (frame 0 is the given mask). Per pixel the k_prop most
// similar reference cells inside the (2·radius+1)² window are combined with
// softmax(sim / temperature) weights. Ties in similarity go to the spatially
// closer cell, then to the earlier frame and scan position.
PropagationResult propagate_labels(const std::vector<Tensor>& frames, const std::vector<int>& first_mask,
                                   std::size_t num_labels, const PropagationConfig& cfg);

// ---- J & F -------------------------------------------------------------------

struct JFScore {
  double J = 0.0, F = 0.0;
  std::size_t objects = 0;
  std::size_t skipped = 0;  // objects listed but absent from ground truth
};

// Per object id in `ids` (or every nonzero id in gt when empty): region
// Jaccard and boundary F-measure with a `tolerance`-pixel band (Chebyshev).
// Objects with an empty ground-truth mask are skipped.
JFScore jaccard_and_f(const std::vector<int>& pred, const std::vector<int>& gt, int height, int width,
                      int tolerance = 1, std::span<const int> ids = {});

// Label map helpers for running propagation on feature maps coarser than
// the masks: majority-vote downsampling and nearest upsampling.
std::vector<int> downsample_labels(const std::vector<int>& mask, int height, int width, int factor,
                                   std::size_t num_labels);
std::vector<int> upsample_labels(const std::vector<int>& mask, int height, int width, int factor);

}  // namespace kmoco
