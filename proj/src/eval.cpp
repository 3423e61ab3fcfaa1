#include "kmoco/eval.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "kmoco/crop.hpp"
#include "kmoco/errors.hpp"
#include "kmoco/kernels.hpp"
#include "kmoco/rng.hpp"

namespace kmoco {

namespace {

ImageTensor resized(const ImageTensor& im, int side) {
  if (im.height == side && im.width == side) return im;
  CropRect full{0, 0, static_cast<double>(im.width), static_cast<double>(im.height), im.width, im.height};
  return crop_and_resize(im, full, side);
}

void normalize_rows(std::vector<double>& x, std::size_t n, std::size_t d) {
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += x[i * d + j] * x[i * d + j];
    if (s <= 0.0) continue;
    const double inv = 1.0 / std::sqrt(s);
    for (std::size_t j = 0; j < d; ++j) x[i * d + j] *= inv;
  }
}

// [D, h, w] → [h·w × D]
std::vector<double> cells_by_row(const Tensor& emb) {
  const std::size_t D = emb.dim(0), hw = emb.dim(1) * emb.dim(2);
  std::vector<double> out(hw * D);
  for (std::size_t d = 0; d < D; ++d)
    for (std::size_t p = 0; p < hw; ++p) out[p * D + d] = emb[d * hw + p];
  return out;
}

}  // namespace

Tensor frozen_features(const ParamSet& g, const SynthDataset& ds, int side, std::size_t chunk) {
  const ParamSet frozen = constant_copy(g);
  const std::size_t n = ds.size();
  std::size_t dim = 0;
  std::vector<double> out;
  for (std::size_t s = 0; s < n; s += chunk) {
    std::vector<ImageTensor> ims;
    for (std::size_t i = s; i < std::min(n, s + chunk); ++i) ims.push_back(resized(ds.records[i].image, side));
    const ad::Var f = ad::global_avg_pool(backbone_spatial(frozen, ad::constant(to_batch(ims))));
    dim = f.shape()[1];
    out.insert(out.end(), f.value().vec().begin(), f.value().vec().end());
  }
  return Tensor({n, dim}, std::move(out));
}

std::vector<Tensor> frozen_spatial(const ParamSet& g, const SynthDataset& ds,
                                   std::span<const std::size_t> which, std::size_t chunk) {
  const ParamSet frozen = constant_copy(g);
  std::vector<Tensor> out;
  for (std::size_t s = 0; s < which.size(); s += chunk) {
    std::vector<ImageTensor> ims;
    for (std::size_t i = s; i < std::min(which.size(), s + chunk); ++i) ims.push_back(ds.records.at(which[i]).image);
    const ad::Var f = backbone_spatial(frozen, ad::constant(to_batch(ims)));
    const auto& sh = f.shape();
    const std::size_t per = sh[1] * sh[2] * sh[3];
    for (std::size_t b = 0; b < sh[0]; ++b) {
      std::vector<double> v(f.value().vec().begin() + b * per, f.value().vec().begin() + (b + 1) * per);
      out.emplace_back(Shape{sh[1], sh[2], sh[3]}, std::move(v));
    }
  }
  return out;
}

// ---- linear probe --------------------------------------------------------------

ProbeResult linear_probe(const Tensor& features, std::span<const std::uint32_t> labels,
                         const ProbeConfig& cfg) {
  if (features.rank() != 2 || features.dim(0) != labels.size())
    throw DimensionError("linear_probe: features must be [n × d] with one label per row");
  if (!(cfg.train_fraction > 0.0 && cfg.train_fraction < 1.0))
    throw ConfigError("linear_probe: train_fraction must be in (0, 1)");
  if (cfg.batch == 0) throw ConfigError("linear_probe: batch must be positive");
  const std::size_t n = features.dim(0), d = features.dim(1);
  const std::size_t C = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
  std::vector<std::vector<std::size_t>> by_class(C);
  for (std::size_t i = 0; i < n; ++i) by_class[labels[i]].push_back(i);
  const auto present = std::count_if(by_class.begin(), by_class.end(), [](auto& v) { return !v.empty(); });
  if (present < 2) throw ConfigError("linear_probe needs at least two classes");

  // Stratified split.
  Rng split_rng = derive_rng(cfg.seed, {0x5b117ULL});
  std::vector<std::size_t> train, test;
  for (auto& idx : by_class) {
    std::shuffle(idx.begin(), idx.end(), split_rng);
    std::size_t nt = static_cast<std::size_t>(std::floor(cfg.train_fraction * idx.size()));
    if (idx.size() >= 2) nt = std::clamp<std::size_t>(nt, 1, idx.size() - 1);
    else nt = idx.size();
    train.insert(train.end(), idx.begin(), idx.begin() + nt);
    test.insert(test.end(), idx.begin() + nt, idx.end());
  }
  std::sort(train.begin(), train.end());
  std::sort(test.begin(), test.end());

  // Standardize with training statistics.
  std::vector<double> mu(d, 0.0), sd(d, 0.0);
  for (auto i : train)
    for (std::size_t j = 0; j < d; ++j) mu[j] += features.at(i, j);
  for (auto& v : mu) v /= train.size();
  for (auto i : train)
    for (std::size_t j = 0; j < d; ++j) sd[j] += (features.at(i, j) - mu[j]) * (features.at(i, j) - mu[j]);
  for (auto& v : sd) v = std::max(std::sqrt(v / train.size()), 1e-8);
  auto x = [&](std::size_t i, std::size_t j) {
    const double s = (features.at(i, j) - mu[j]) / sd[j];
    return std::abs(s) < 1e-12 ? 0.0 : s;
  };

  std::vector<double> W(d * C, 0.0), b(C, 0.0), vW(d * C, 0.0), vb(C, 0.0), gW(d * C), gb(C), p(C);
  auto logits = [&](std::size_t i, std::vector<double>& out) {
    for (std::size_t c = 0; c < C; ++c) out[c] = b[c];
    for (std::size_t j = 0; j < d; ++j) {
      const double xv = x(i, j);
      if (xv == 0.0) continue;
      for (std::size_t c = 0; c < C; ++c) out[c] += xv * W[j * C + c];
    }
  };

  Rng order_rng = derive_rng(cfg.seed, {0x0bde5ULL});
  std::vector<std::size_t> order = train;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), order_rng);
    for (std::size_t s = 0; s < order.size(); s += cfg.batch) {
      const std::size_t e = std::min(order.size(), s + cfg.batch);
      std::fill(gW.begin(), gW.end(), 0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      for (std::size_t t = s; t < e; ++t) {
        const std::size_t i = order[t];
        logits(i, p);
        const double mx = *std::max_element(p.begin(), p.end());
        double z = 0.0;
        for (auto& v : p) z += (v = std::exp(v - mx));
        for (auto& v : p) v /= z;
        p[labels[i]] -= 1.0;
        for (std::size_t c = 0; c < C; ++c) gb[c] += p[c];
        for (std::size_t j = 0; j < d; ++j) {
          const double xv = x(i, j);
          if (xv == 0.0) continue;
          for (std::size_t c = 0; c < C; ++c) gW[j * C + c] += xv * p[c];
        }
      }
      const double inv = 1.0 / (e - s);
      for (std::size_t q = 0; q < W.size(); ++q) {
        vW[q] = 0.9 * vW[q] + gW[q] * inv + cfg.weight_decay * W[q];
        W[q] -= cfg.lr * vW[q];
      }
      for (std::size_t c = 0; c < C; ++c) {
        vb[c] = 0.9 * vb[c] + gb[c] * inv;
        b[c] -= cfg.lr * vb[c];
      }
    }
  }

  auto predict = [&](std::size_t i) {
    logits(i, p);
    return static_cast<std::uint32_t>(std::max_element(p.begin(), p.end()) - p.begin());
  };
  ProbeResult r;
  r.n_train = train.size();
  r.n_test = test.size();
  r.classes = C;
  std::size_t hit = 0;
  for (auto i : train) hit += predict(i) == labels[i];
  r.train_accuracy = train.empty() ? 0.0 : static_cast<double>(hit) / train.size();
  std::vector<std::size_t> cls_hit(C, 0), cls_n(C, 0);
  hit = 0;
  for (auto i : test) {
    const bool ok = predict(i) == labels[i];
    hit += ok;
    cls_hit[labels[i]] += ok;
    ++cls_n[labels[i]];
  }
  r.accuracy = test.empty() ? 0.0 : static_cast<double>(hit) / test.size();
  for (std::size_t c = 0; c < C; ++c)
    r.per_class_accuracy.push_back(cls_n[c] ? static_cast<double>(cls_hit[c]) / cls_n[c] : std::nan(""));
  return r;
}

// ---- k-means -------------------------------------------------------------------

KMeansResult kmeans(const Tensor& points, std::size_t K, std::size_t iters, std::uint64_t seed) {
  if (points.rank() != 2) throw DimensionError("kmeans: points must be [n × d]");
  const std::size_t n = points.dim(0), d = points.dim(1);
  if (K == 0 || n < K) throw ConfigError("kmeans needs 1 <= K <= n");
  const double* P = points.data().data();
  Rng rng = derive_rng(seed, {0x6b6dULL});

  KMeansResult r;
  r.centroids = Tensor({K, d});
  double* Cd = r.centroids.data().data();
  auto set_centroid = [&](std::size_t c, std::size_t i) { std::copy(P + i * d, P + (i + 1) * d, Cd + c * d); };

  // k-means++ seeding.
  std::vector<double> dist(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> assign(n, 0);
  set_centroid(0, static_cast<std::size_t>(randint(rng, 0, static_cast<long>(n) - 1)));
  for (std::size_t c = 1; c < K; ++c) {
    std::vector<std::size_t> a1(n);
    std::vector<double> d1(n);
    kernels::parallel::nearest_centroid(n, 1, d, P, Cd + (c - 1) * d, a1.data(), d1.data());
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += (dist[i] = std::min(dist[i], d1[i]));
    std::size_t pick = n - 1;
    if (total <= 0.0) {
      pick = static_cast<std::size_t>(randint(rng, 0, static_cast<long>(n) - 1));
    } else {
      double u = uniform01(rng) * total;
      for (std::size_t i = 0; i < n; ++i) {
        if (dist[i] <= 0.0) continue;
        if (u < dist[i]) {
          pick = i;
          break;
        }
        u -= dist[i];
        pick = i;
      }
    }
    set_centroid(c, pick);
  }

  std::vector<std::size_t> prev;
  for (std::size_t it = 0; it < std::max<std::size_t>(iters, 1); ++it) {
    kernels::parallel::nearest_centroid(n, K, d, P, Cd, assign.data(), dist.data());
    r.objective.push_back(std::accumulate(dist.begin(), dist.end(), 0.0));
    if (assign == prev) break;
    prev = assign;

    std::vector<double> sum(K * d, 0.0);
    std::vector<std::size_t> count(K, 0);
    for (std::size_t i = 0; i < n; ++i) {
      ++count[assign[i]];
      for (std::size_t j = 0; j < d; ++j) sum[assign[i] * d + j] += P[i * d + j];
    }
    for (std::size_t c = 0; c < K; ++c)
      if (count[c])
        for (std::size_t j = 0; j < d; ++j) Cd[c * d + j] = sum[c * d + j] / count[c];
    // Empty clusters take the points farthest from their current centroid.
    for (std::size_t c = 0; c < K; ++c) {
      if (count[c]) continue;
      std::size_t far = 0;
      double best = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          const double diff = P[i * d + j] - Cd[assign[i] * d + j];
          s += diff * diff;
        }
        if (s > best) {
          best = s;
          far = i;
        }
      }
      set_centroid(c, far);
      --count[assign[far]];
      assign[far] = c;
      count[c] = 1;
      prev.clear();
      ++r.reseeded;
    }
  }
  r.assign = std::move(assign);
  return r;
}

// ---- segment retrieval -----------------------------------------------------------

std::vector<SegmentDescriptor> describe_segments(const DenseImage& im, std::size_t image_id,
                                                 const RetrievalConfig& cfg,
                                                 std::vector<std::size_t>* pixel_region) {
  if (im.embedding.rank() != 3) throw DimensionError("dense embedding must be [D, h, w]");
  const std::size_t D = im.embedding.dim(0), h = im.embedding.dim(1), w = im.embedding.dim(2);
  const std::size_t H = im.height, W = im.width;
  if (im.semantic.size() != H * W || H % h || W % w)
    throw DimensionError("semantic map must be H·W with H, W multiples of the embedding grid");
  std::vector<double> cells = cells_by_row(im.embedding);
  normalize_rows(cells, h * w, D);
  const Tensor pts({h * w, D}, cells);
  const KMeansResult km = kmeans(pts, std::min(cfg.clusters, h * w), cfg.kmeans_iters,
                                 derive_rng(cfg.seed, {image_id})());

  // Compact region ids in cluster order.
  std::vector<long> region_of(km.centroids.dim(0), -1);
  std::size_t regions = 0;
  for (auto a : km.assign)
    if (region_of[a] < 0) region_of[a] = 0;
  for (auto& r : region_of)
    if (r == 0) r = static_cast<long>(regions++);

  std::vector<SegmentDescriptor> out(regions);
  std::vector<std::size_t> cell_count(regions, 0);
  for (std::size_t r = 0; r < regions; ++r) {
    out[r].image = image_id;
    out[r].region = r;
    out[r].descriptor.assign(D, 0.0);
  }
  for (std::size_t p = 0; p < h * w; ++p) {
    auto& s = out[region_of[km.assign[p]]];
    ++cell_count[s.region];
    for (std::size_t j = 0; j < D; ++j) s.descriptor[j] += cells[p * D + j];
  }
  for (auto& s : out) normalize_rows(s.descriptor, 1, D);

  std::vector<std::vector<std::size_t>> votes(regions);
  if (pixel_region) pixel_region->assign(H * W, 0);
  const std::size_t fy = H / h, fx = W / w;
  for (std::size_t r = 0; r < H; ++r)
    for (std::size_t c = 0; c < W; ++c) {
      const std::size_t reg = region_of[km.assign[(r / fy) * w + c / fx]];
      if (pixel_region) (*pixel_region)[r * W + c] = reg;
      const int cls = im.semantic[r * W + c];
      if (cls < 0) throw DimensionError("semantic labels must be nonnegative");
      if (votes[reg].size() <= static_cast<std::size_t>(cls)) votes[reg].resize(cls + 1, 0);
      ++votes[reg][cls];
    }
  for (std::size_t r = 0; r < regions; ++r)
    out[r].majority_class = static_cast<int>(std::max_element(votes[r].begin(), votes[r].end()) - votes[r].begin());
  return out;
}

RetrievalResult segment_retrieval(const std::vector<DenseImage>& train, const std::vector<DenseImage>& val,
                                  std::size_t num_classes, const RetrievalConfig& cfg) {
  if (val.empty()) throw ConfigError("segment_retrieval: validation set is empty");
  if (train.empty()) throw ConfigError("segment_retrieval: training set is empty");

  std::vector<SegmentDescriptor> bank;
  for (std::size_t i = 0; i < train.size(); ++i) {
    auto d = describe_segments(train[i], i, cfg);
    bank.insert(bank.end(), d.begin(), d.end());
  }
  const std::size_t D = bank.front().descriptor.size();
  std::vector<double> bank_mat(bank.size() * D);
  for (std::size_t i = 0; i < bank.size(); ++i)
    std::copy(bank[i].descriptor.begin(), bank[i].descriptor.end(), bank_mat.begin() + i * D);

  RetrievalResult res;
  res.train_regions = bank.size();
  std::vector<double> inter(num_classes, 0.0), uni(num_classes, 0.0);
  for (std::size_t v = 0; v < val.size(); ++v) {
    std::vector<std::size_t> pixel_region;
    // Val images use ids after the training ones so their k-means streams differ.
    const auto segs = describe_segments(val[v], train.size() + v, cfg, &pixel_region);
    if (segs.front().descriptor.size() != D) throw DimensionError("train and val embedding widths differ");
    res.val_regions += segs.size();
    std::vector<double> q(segs.size() * D), sims(segs.size() * bank.size());
    for (std::size_t s = 0; s < segs.size(); ++s)
      std::copy(segs[s].descriptor.begin(), segs[s].descriptor.end(), q.begin() + s * D);
    kernels::parallel::gemm_nt(segs.size(), bank.size(), D, q.data(), bank_mat.data(), sims.data(), false);
    std::vector<int> region_class(segs.size());
    for (std::size_t s = 0; s < segs.size(); ++s) {
      const double* row = sims.data() + s * bank.size();
      region_class[s] = bank[std::max_element(row, row + bank.size()) - row].majority_class;
    }
    const auto& gt = val[v].semantic;
    for (std::size_t p = 0; p < gt.size(); ++p) {
      const std::size_t pred = static_cast<std::size_t>(region_class[pixel_region[p]]);
      const std::size_t truth = static_cast<std::size_t>(gt[p]);
      if (pred >= num_classes || truth >= num_classes)
        throw DimensionError("segment_retrieval: class id exceeds num_classes");
      if (pred == truth) {
        inter[truth] += 1;
        uni[truth] += 1;
      } else {
        uni[truth] += 1;
        uni[pred] += 1;
      }
    }
  }
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (uni[c] == 0) {
      res.per_class_iou.push_back(std::nan(""));
      continue;
    }
    res.per_class_iou.push_back(inter[c] / uni[c]);
    sum += inter[c] / uni[c];
    ++counted;
  }
  res.miou = counted ? sum / counted : 0.0;
  return res;
}

// ---- propagation -------------------------------------------------------------------

PropagationResult propagate_labels(const std::vector<Tensor>& frames, const std::vector<int>& first_mask,
                                   std::size_t num_labels, const PropagationConfig& cfg) {
  if (frames.empty()) throw ConfigError("propagate_labels: no frames");
  if (cfg.k_prop < 1 || cfg.radius < 1 || cfg.context < 1 || !(cfg.temperature > 0.0))
    throw ConfigError("propagation needs k_prop >= 1, radius >= 1, context >= 1, temperature > 0");
  if (num_labels == 0) throw ConfigError("propagate_labels: need at least one label");
  const auto& f0 = frames.front();
  if (f0.rank() != 3) throw DimensionError("frame embeddings must be [D, h, w]");
  const std::size_t D = f0.dim(0);
  const int h = static_cast<int>(f0.dim(1)), w = static_cast<int>(f0.dim(2));
  const std::size_t hw = static_cast<std::size_t>(h) * w, L = num_labels;
  if (first_mask.size() != hw) throw DimensionError("first mask does not match the embedding grid");

  std::vector<std::vector<double>> emb;
  for (const auto& f : frames) {
    if (f.shape() != f0.shape()) throw DimensionError("frame embeddings differ in shape");
    emb.push_back(cells_by_row(f));
    normalize_rows(emb.back(), hw, D);
  }

  PropagationResult res;
  res.soft.assign(frames.size(), std::vector<double>(hw * L, 0.0));
  res.masks.assign(frames.size(), std::vector<int>(hw, 0));
  for (std::size_t p = 0; p < hw; ++p) {
    const int l = first_mask[p];
    if (l < 0 || static_cast<std::size_t>(l) >= L) throw DimensionError("first mask label out of range");
    res.soft[0][p * L + l] = 1.0;
    res.masks[0][p] = l;
  }

  struct Cand {
    double sim;
    int dist2;
    std::size_t frame, cell;
  };
  for (std::size_t t = 1; t < frames.size(); ++t) {
    const std::size_t f_lo = t >= cfg.context ? t - cfg.context : 0;
#pragma omp parallel for schedule(static)
    for (long pl = 0; pl < static_cast<long>(hw); ++pl) {
      const std::size_t p = static_cast<std::size_t>(pl);
      const int r = static_cast<int>(p) / w, c = static_cast<int>(p) % w;
      const double* q = emb[t].data() + p * D;
      std::vector<Cand> cands;
      for (std::size_t f = f_lo; f < t; ++f)
        for (int rr = std::max(0, r - cfg.radius); rr <= std::min(h - 1, r + cfg.radius); ++rr)
          for (int cc = std::max(0, c - cfg.radius); cc <= std::min(w - 1, c + cfg.radius); ++cc) {
            const std::size_t cell = static_cast<std::size_t>(rr) * w + cc;
            const double* e = emb[f].data() + cell * D;
            double s = 0.0;
            for (std::size_t j = 0; j < D; ++j) s += q[j] * e[j];
            cands.push_back({s, (rr - r) * (rr - r) + (cc - c) * (cc - c), f, cell});
          }
      const std::size_t k = std::min(cfg.k_prop, cands.size());
      std::partial_sort(cands.begin(), cands.begin() + k, cands.end(), [](const Cand& a, const Cand& b) {
        if (a.sim != b.sim) return a.sim > b.sim;
        if (a.dist2 != b.dist2) return a.dist2 < b.dist2;
        if (a.frame != b.frame) return a.frame < b.frame;
        return a.cell < b.cell;
      });
      double z = 0.0;
      std::vector<double> wts(k);
      for (std::size_t i = 0; i < k; ++i) z += (wts[i] = std::exp((cands[i].sim - cands[0].sim) / cfg.temperature));
      double* out = res.soft[t].data() + p * L;
      for (std::size_t i = 0; i < k; ++i) {
        const double* src = res.soft[cands[i].frame].data() + cands[i].cell * L;
        for (std::size_t l = 0; l < L; ++l) out[l] += wts[i] / z * src[l];
      }
      res.masks[t][p] = static_cast<int>(std::max_element(out, out + L) - out);
    }
  }
  return res;
}

// ---- J & F ---------------------------------------------------------------------------

namespace {

std::vector<char> boundary(const std::vector<char>& m, int H, int W) {
  std::vector<char> b(m.size(), 0);
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      if (!m[r * W + c]) continue;
      const int nb[4][2] = {{r - 1, c}, {r + 1, c}, {r, c - 1}, {r, c + 1}};
      for (const auto& q : nb)
        if (q[0] >= 0 && q[0] < H && q[1] >= 0 && q[1] < W && !m[q[0] * W + q[1]]) b[r * W + c] = 1;
    }
  return b;
}

// Fraction of `from` boundary pixels within `tol` (Chebyshev) of a `to` pixel.
double matched(const std::vector<char>& from, const std::vector<char>& to, int H, int W, int tol) {
  std::size_t n = 0, hit = 0;
  for (int r = 0; r < H; ++r)
    for (int c = 0; c < W; ++c) {
      if (!from[r * W + c]) continue;
      ++n;
      bool ok = false;
      for (int rr = std::max(0, r - tol); rr <= std::min(H - 1, r + tol) && !ok; ++rr)
        for (int cc = std::max(0, c - tol); cc <= std::min(W - 1, c + tol) && !ok; ++cc) ok = to[rr * W + cc];
      hit += ok;
    }
  return n ? static_cast<double>(hit) / n : 0.0;
}

}  // namespace

JFScore jaccard_and_f(const std::vector<int>& pred, const std::vector<int>& gt, int height, int width,
                      int tolerance, std::span<const int> ids) {
  const std::size_t hw = static_cast<std::size_t>(height) * width;
  if (pred.size() != hw || gt.size() != hw) throw DimensionError("jaccard_and_f: mask sizes differ");
  if (tolerance < 0) throw ConfigError("jaccard_and_f: tolerance must be nonnegative");
  std::vector<int> objects(ids.begin(), ids.end());
  if (objects.empty()) {
    for (int v : gt)
      if (v != 0) objects.push_back(v);
    std::sort(objects.begin(), objects.end());
    objects.erase(std::unique(objects.begin(), objects.end()), objects.end());
  }
  JFScore s;
  for (int id : objects) {
    std::vector<char> a(hw), b(hw);
    std::size_t inter = 0, uni = 0, na = 0, nb = 0;
    for (std::size_t p = 0; p < hw; ++p) {
      a[p] = pred[p] == id;
      b[p] = gt[p] == id;
      inter += a[p] && b[p];
      uni += a[p] || b[p];
      na += a[p];
      nb += b[p];
    }
    if (nb == 0) {
      std::cerr << "warning: object " << id << " is absent from the ground truth; skipped\n";
      ++s.skipped;
      continue;
    }
    s.J += static_cast<double>(inter) / uni;
    if (na > 0) {
      const auto ba = boundary(a, height, width), bb = boundary(b, height, width);
      const double P = matched(ba, bb, height, width, tolerance);
      const double R = matched(bb, ba, height, width, tolerance);
      if (P + R > 0) s.F += 2 * P * R / (P + R);
    }
    ++s.objects;
  }
  if (s.objects) {
    s.J /= s.objects;
    s.F /= s.objects;
  }
  return s;
}

std::vector<int> downsample_labels(const std::vector<int>& mask, int height, int width, int factor,
                                   std::size_t num_labels) {
  if (factor < 1 || height % factor || width % factor) throw DimensionError("downsample factor must divide the mask");
  const int h = height / factor, w = width / factor;
  std::vector<int> out(static_cast<std::size_t>(h) * w);
  std::vector<std::size_t> votes(num_labels);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) {
      std::fill(votes.begin(), votes.end(), 0);
      for (int dr = 0; dr < factor; ++dr)
        for (int dc = 0; dc < factor; ++dc) ++votes.at(mask[(r * factor + dr) * width + c * factor + dc]);
      out[r * w + c] = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    }
  return out;
}

std::vector<int> upsample_labels(const std::vector<int>& mask, int height, int width, int factor) {
  std::vector<int> out(static_cast<std::size_t>(height) * width * factor * factor);
  const int W = width * factor;
  for (int r = 0; r < height * factor; ++r)
    for (int c = 0; c < W; ++c) out[r * W + c] = mask[(r / factor) * width + c / factor];
  return out;
}

}  // namespace kmoco
