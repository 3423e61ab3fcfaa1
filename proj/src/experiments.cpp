#include "kmoco/experiments.hpp"

#include <omp.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "kmoco/errors.hpp"

namespace kmoco {

std::vector<std::uint32_t> object_labels(const SynthDataset& ds) {
  std::vector<std::uint32_t> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    if (ds.records[i].labels.empty()) throw ConfigError("probe set image " + std::to_string(i) + " has no label");
    out.push_back(ds.label(i));
  }
  return out;
}

ProbeResult probe_backbone(const ParamSet& g, const SynthDataset& probe_set, const ProbeSettings& s,
                           std::uint64_t seed) {
  if (probe_set.variant != Variant::kObjectCentric)
    throw ConfigError("the linear probe needs an object-centric (single label) set");
  ProbeConfig pc = s.probe;
  pc.seed = seed;
  return linear_probe(frozen_features(g, probe_set, s.side), object_labels(probe_set), pc);
}

std::vector<DenseImage> dense_images(const ParamSet& g, const SynthDataset& ds) {
  std::vector<std::size_t> all(ds.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  auto maps = frozen_spatial(g, ds, all);
  std::vector<DenseImage> out(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    out[i].embedding = std::move(maps[i]);
    out[i].semantic = semantic_mask(ds.records[i]);
    out[i].height = ds.height;
    out[i].width = ds.width;
  }
  return out;
}

RetrievalResult retrieval_backbone(const ParamSet& g, const SynthDataset& train, const SynthDataset& val,
                                   const RetrievalConfig& cfg) {
  const std::size_t classes = std::max(train.num_classes(), val.num_classes()) + 1;
  return segment_retrieval(dense_images(g, train), dense_images(g, val), classes, cfg);
}

std::vector<std::vector<std::size_t>> video_sequences(const SynthDataset& ds) {
  std::vector<std::vector<std::size_t>> out;
  std::map<std::uint32_t, std::size_t> slot;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto id = ds.records[i].sequence;
    if (id == 0) throw ConfigError("propagation needs a video set (record " + std::to_string(i) + " has no sequence)");
    auto [it, fresh] = slot.emplace(id, out.size());
    if (fresh) out.emplace_back();
    out[it->second].push_back(i);
  }
  return out;
}

SequenceScore score_sequence(const SynthDataset& ds, const std::vector<std::size_t>& idx,
                             const std::vector<Tensor>& frames, const PropagationConfig& cfg, int tolerance) {
  if (idx.size() < 2 || frames.size() != idx.size()) throw ConfigError("a sequence needs at least two frames");
  const int H = ds.height, W = ds.width;
  const int h = static_cast<int>(frames.front().dim(1));
  if (H % h || W % static_cast<int>(frames.front().dim(2)) || H / h != W / static_cast<int>(frames.front().dim(2)))
    throw DimensionError("embedding grid must divide the image evenly");
  const int factor = H / h;

  const auto& first = ds.records[idx.front()];
  std::vector<int> first_mask(first.mask.begin(), first.mask.end());
  const std::size_t labels = first.labels.size() + 1;
  PropagationConfig grid_cfg = cfg;
  grid_cfg.radius = std::max(1, static_cast<int>(std::lround(static_cast<double>(cfg.radius) / factor)));
  const auto coarse = factor == 1 ? first_mask : downsample_labels(first_mask, H, W, factor, labels);
  const PropagationResult pr = propagate_labels(frames, coarse, labels, grid_cfg);

  SequenceScore sc;
  sc.sequence = first.sequence;
  sc.frames = idx.size();
  sc.objects = first.labels.size();
  for (std::size_t t = 1; t < idx.size(); ++t) {
    const auto& rec = ds.records[idx[t]];
    const std::vector<int> gt(rec.mask.begin(), rec.mask.end());
    const auto pred = factor == 1 ? pr.masks[t] : upsample_labels(pr.masks[t], h, h, factor);
    std::vector<int> ids;
    for (std::size_t o = 1; o <= first.labels.size(); ++o) ids.push_back(static_cast<int>(o));
    const JFScore s = jaccard_and_f(pred, gt, H, W, tolerance, ids);
    sc.J += s.J;
    sc.F += s.F;
  }
  sc.J /= static_cast<double>(idx.size() - 1);
  sc.F /= static_cast<double>(idx.size() - 1);
  return sc;
}

std::vector<SequenceScore> propagation_backbone(const ParamSet& g, const SynthDataset& video,
                                                const PropagationSettings& s) {
  std::vector<SequenceScore> out;
  for (const auto& idx : video_sequences(video)) {
    const auto frames = frozen_spatial(g, video, idx);
    out.push_back(score_sequence(video, idx, frames, s.propagation, s.tolerance));
  }
  return out;
}

// ---- grids ---------------------------------------------------------------------------

std::vector<GridCell> iou_grid(const TrainConfig& base, const std::vector<double>& thresholds) {
  std::vector<GridCell> cells;
  for (double t : thresholds) {
    GridCell c{"iou_max=" + [&] {
                 std::ostringstream os;
                 os << t;
                 return os.str();
               }(),
               base};
    c.train.iou_max = t;
    c.train.multicrop = c.train.constraint = c.train.strong_aug = c.train.nn = c.train.lower_momentum = false;
    cells.push_back(std::move(c));
  }
  return cells;
}

std::vector<GridCell> ablation_grid(const ExperimentConfig& cfg) {
  const TrainConfig& base = cfg.train;
  std::vector<GridCell> cells;
  const std::string& preset = cfg.ablate.preset;
  if (preset == "table4") {
    TrainConfig t = base;
    t.multicrop = t.constraint = t.strong_aug = t.nn = t.lower_momentum = false;
    cells.push_back({"two-crop", t});
    t.multicrop = true;
    cells.push_back({"+MC", t});
    t.constraint = true;
    cells.push_back({"+MC+CC", t});
    t.strong_aug = true;
    cells.push_back({"+MC+CC+A+", t});
    t.nn = true;
    cells.push_back({"+MC+CC+A+ +NN", t});
  } else if (preset == "lambda") {
    for (double l : cfg.ablate.lambdas) {
      TrainConfig t = base;
      t.multicrop = t.constraint = t.strong_aug = t.nn = true;
      t.lambda = l;
      std::ostringstream os;
      os << "lambda=" << l;
      cells.push_back({os.str(), t});
    }
  } else if (preset == "iou") {
    cells = iou_grid(base, cfg.ablate.iou_grid);
  } else {
    throw ConfigError("unknown ablate.preset '" + preset + "' (table4 | lambda | iou)");
  }
  return cells;
}

CellResult run_cell(const GridCell& cell, std::uint64_t seed, const SynthDataset& train,
                    const SynthDataset& probe_set, const ProbeSettings& probe) {
  TrainConfig cfg = cell.train;
  cfg.seed = seed;
  CellResult r;
  r.name = cell.name;
  r.seed = seed;
  const PretrainResult pr = pretrain(cfg, train);
  r.provenance = pr.provenance;
  r.final_loss = pr.epochs.empty() ? 0.0 : pr.epochs.back().total;
  for (const auto& s : pr.steps) r.finite = r.finite && std::isfinite(s.total);
  Trainer holder(cfg, train);
  holder.restore(pr.final_state);
  const ProbeResult p = probe_backbone(holder.encoders().g(), probe_set, probe, seed);
  r.probe_accuracy = p.accuracy;
  r.probe_train_accuracy = p.train_accuracy;
  return r;
}

std::vector<CellResult> run_grid(const std::vector<GridCell>& cells, const std::vector<std::uint64_t>& seeds,
                                 const SynthDataset& train, const SynthDataset& probe_set,
                                 const ProbeSettings& probe, std::size_t workers) {
  const std::size_t n = cells.size() * seeds.size();
  std::vector<CellResult> out(n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i)
      out[i] = run_cell(cells[i / seeds.size()], seeds[i % seeds.size()], train, probe_set, probe);
    return out;
  }
  // Cells on worker threads, each with a single OpenMP thread.
  std::atomic<std::size_t> next{0};
  std::exception_ptr err;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      omp_set_num_threads(1);
      for (std::size_t i; (i = next++) < n;) {
        try {
          out[i] = run_cell(cells[i / seeds.size()], seeds[i % seeds.size()], train, probe_set, probe);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!err) err = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (err) std::rethrow_exception(err);
  return out;
}

std::vector<CellSummary> summarize(const std::vector<CellResult>& rows) {
  std::vector<CellSummary> out;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const CellSummary& s) { return s.name == r.name; });
    if (it == out.end()) {
      out.push_back({r.name});
      it = out.end() - 1;
    }
    it->mean_loss += r.final_loss;
    it->mean_accuracy += r.probe_accuracy;
    ++it->runs;
  }
  for (auto& s : out) {
    s.mean_loss /= s.runs;
    s.mean_accuracy /= s.runs;
  }
  return out;
}

std::string grid_csv(const std::vector<CellResult>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "cell,seed,final_loss,probe_accuracy,probe_train_accuracy,small_emitted,small_violations,"
        "small_in_momentum,small_in_queue\n";
  for (const auto& r : rows)
    os << '"' << r.name << "\"," << r.seed << ',' << r.final_loss << ',' << r.probe_accuracy << ','
       << r.probe_train_accuracy << ',' << r.provenance.small_emitted << ',' << r.provenance.small_violations << ','
       << r.provenance.small_momentum << ',' << r.provenance.queue_from_small << '\n';
  return os.str();
}

std::string summary_csv(const std::vector<CellSummary>& rows) {
  std::ostringstream os;
  os.precision(17);
  os << "cell,runs,mean_final_loss,mean_probe_accuracy\n";
  for (const auto& s : rows) os << '"' << s.name << "\"," << s.runs << ',' << s.mean_loss << ',' << s.mean_accuracy << '\n';
  return os.str();
}

}  // namespace kmoco
