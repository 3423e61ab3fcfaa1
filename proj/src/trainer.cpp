#include "kmoco/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <exception>
#include <future>
#include <mutex>
#include <numeric>
#include <optional>

#include "kmoco/errors.hpp"
#include "kmoco/losses.hpp"

namespace kmoco {

namespace {

constexpr std::uint64_t kInitTag = 0x1417;
constexpr std::uint64_t kBankTag = 0xba4c;
constexpr std::uint64_t kOrderTag = 0x0de5;
constexpr std::uint64_t kViewTag = 0x71e3;

}  // namespace

ViewConfig view_config(const TrainConfig& cfg) {
  ViewConfig v;
  v.large = cfg.large;
  v.small = cfg.small;
  v.small.ratio_lo = cfg.large.ratio_lo;
  v.small.ratio_hi = cfg.large.ratio_hi;
  v.n_small = cfg.effective_small_views();
  v.min_overlap = cfg.effective_min_overlap();
  v.iou_max = cfg.iou_max;
  v.standard = AugPolicy::parse(cfg.standard_policy);
  v.strong = AugPolicy::parse(cfg.strong_policy);
  v.standard.validate();
  v.strong.validate();
  v.p_strong = cfg.effective_p_strong();
  return v;
}

ViewSet make_views(const ImageTensor& image, const ViewConfig& vc, Rng& rng, MulticropStats* stats) {
  ViewSet v;
  if (vc.iou_max < 1.0) {
    std::tie(v.anchor_rect, v.large_rect) =
        sample_pair_iou_bounded(rng, image.width, image.height, vc.large, vc.iou_max);
  } else {
    v.anchor_rect = sample_rrc(rng, image.width, image.height, vc.large);
    v.large_rect = sample_rrc(rng, image.width, image.height, vc.large);
  }
  v.small_rects = sample_constrained_multicrop(rng, v.anchor_rect, vc.n_small, vc.small, vc.min_overlap,
                                               kDefaultRejectionBudget, stats);

  v.anchor = apply_policy(crop_and_resize(image, v.anchor_rect, vc.large.out_side), vc.standard, rng);
  bool strong = false;
  v.large = apply_mixed(crop_and_resize(image, v.large_rect, vc.large.out_side), vc.standard, vc.strong,
                        vc.p_strong, rng, &strong);
  v.strong_views += strong;
  for (const auto& r : v.small_rects) {
    v.small.push_back(apply_mixed(crop_and_resize(image, r, vc.small.out_side), vc.standard, vc.strong,
                                  vc.p_strong, rng, &strong));
    v.strong_views += strong;
  }
  return v;
}

// ---- Trainer ---------------------------------------------------------------------

Trainer::Trainer(TrainConfig cfg, const SynthDataset& data) : cfg_(std::move(cfg)), data_(&data) {
  cfg_.encoder.large_side = cfg_.large.out_side;
  cfg_.encoder.small_side = cfg_.small.out_side;
  cfg_.validate();
  views_ = view_config(cfg_);
  if (data.size() < cfg_.batch_size)
    throw ConfigError("dataset has " + std::to_string(data.size()) + " images, fewer than one batch of " +
                      std::to_string(cfg_.batch_size));
  if (data.channels != 3) throw ConfigError("training expects 3-channel images");

  Rng init_rng = derive_rng(cfg_.seed, {kInitTag});
  enc_ = EncoderPair(cfg_.encoder, cfg_.effective_momentum(), init_rng);
  Rng bank_rng = derive_rng(cfg_.seed, {kBankTag});
  bank_ = DualQueue(cfg_.queue_size, cfg_.encoder.embed_dim, cfg_.encoder.feature_dim(), bank_rng);
  SgdConfig sgd = cfg_.optim;
  sgd.total_steps = cfg_.epochs * steps_per_epoch();
  const auto params = enc_.online_params();
  opt_ = OptimizerState(sgd, params);
}

std::size_t Trainer::steps_per_epoch() const { return data_->size() / cfg_.batch_size; }

std::vector<std::size_t> Trainer::epoch_order(std::size_t epoch) const {
  std::vector<std::size_t> order(data_->size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = derive_rng(cfg_.seed, {kOrderTag, epoch});
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

PreparedBatch Trainer::prepare(std::size_t epoch, std::span<const std::size_t> image_ids) const {
  const std::size_t B = image_ids.size();
  std::vector<ViewSet> views(B);
  std::vector<MulticropStats> stats(B);
  std::exception_ptr err;
  std::mutex mu;
#pragma omp parallel for schedule(static)
  for (long i = 0; i < static_cast<long>(B); ++i) {
    try {
      Rng rng = derive_rng(cfg_.seed, {kViewTag, epoch, image_ids[i]});
      views[i] = make_views(data_->records.at(image_ids[i]).image, views_, rng, &stats[i]);
    } catch (...) {
      std::lock_guard lock(mu);
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);

  PreparedBatch b;
  b.image_ids.assign(image_ids.begin(), image_ids.end());
  b.n_small = views_.n_small;
  std::vector<ImageTensor> anchors, large, small;
  for (std::size_t i = 0; i < B; ++i) {
    anchors.push_back(std::move(views[i].anchor));
    large.push_back(std::move(views[i].large));
    b.momentum_rows.push_back(ViewKind::kAnchor);
    b.online_rows.push_back(ViewKind::kLarge);
    for (std::size_t j = 0; j < views[i].small.size(); ++j) {
      small.push_back(std::move(views[i].small[j]));
      b.online_rows.push_back(ViewKind::kSmall);
      const double ov = overlap_fraction(views[i].small_rects[j], views[i].anchor_rect);
      b.min_small_overlap = std::min(b.min_small_overlap, ov);
      if (cfg_.constraint && ov < cfg_.min_overlap) ++b.small_overlap_violations;
    }
    b.crops.emitted += stats[i].emitted;
    b.crops.resampled += stats[i].resampled;
    b.crops.fallbacks += stats[i].fallbacks;
    b.strong_views += views[i].strong_views;
  }
  b.anchors = to_batch(anchors);
  b.large = to_batch(large);
  if (!small.empty()) b.small = to_batch(small);
  return b;
}

StepMetrics Trainer::train_step(const PreparedBatch& b, std::size_t epoch) {
  const std::size_t B = b.image_ids.size(), N = b.n_small, V = N + 1;
  const EncoderConfig& ec = cfg_.encoder;

  // Momentum branch: anchors only.
  for (auto k : b.momentum_rows) {
    prov_.anchors_momentum += k == ViewKind::kAnchor;
    prov_.large_momentum += k == ViewKind::kLarge;
    prov_.small_momentum += k == ViewKind::kSmall;
  }
  const ad::Var a_g = forward_backbone(ec, enc_.g_momentum(), ad::constant(b.anchors));
  const ad::Var a_h = forward_head(ec, enc_.h_momentum(), a_g);

  // Online branch: every positive, grouped per anchor as [large, small...].
  for (auto k : b.online_rows) {
    prov_.anchors_online += k == ViewKind::kAnchor;
    prov_.large_online += k == ViewKind::kLarge;
    prov_.small_online += k == ViewKind::kSmall;
  }
  ad::Var pos_g = forward_backbone(ec, enc_.g(), ad::constant(b.large));
  if (N > 0) {
    const ad::Var small_g = forward_backbone(ec, enc_.g(), ad::constant(b.small));
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < B; ++i) {
      order.push_back(i);
      for (std::size_t j = 0; j < N; ++j) order.push_back(B + i * N + j);
    }
    pos_g = ad::gather_rows(ad::concat({pos_g, small_g}, 0), order);
  }
  const ad::Var pos_h = forward_head(ec, enc_.h(), pos_g);

  auto enqueue = [&] {
    std::vector<std::int64_t> ids(b.image_ids.begin(), b.image_ids.end());
    bank_.enqueue(a_h.value(), a_g.value(), ids);
    for (auto k : b.momentum_rows) {
      prov_.queue_from_anchor += k == ViewKind::kAnchor;
      prov_.queue_from_large += k == ViewKind::kLarge;
      prov_.queue_from_small += k == ViewKind::kSmall;
    }
  };
  if (cfg_.queue_update == QueueUpdate::kPre) enqueue();

  LossBatch lb;
  lb.positives = pos_h;
  lb.anchors = a_h.value();
  lb.views_per_anchor = V;
  lb.tau = cfg_.tau;
  lb.lambda = cfg_.effective_lambda();
  lb.k = cfg_.k;
  lb.denominator = cfg_.denominator;

  // Neighbours are mined on detached pre-head features against Q_g.
  std::vector<std::vector<std::size_t>> indices;
  const bool nn_on = lb.lambda > 0.0 && epoch >= cfg_.warmup_epochs && bank_.filled() >= cfg_.k;
  if (nn_on) indices = bank_.topk_neighbors(pos_g.value(), cfg_.k);

  StepMetrics m;
  m.epoch = epoch;
  m.step = opt_.step();
  m.lr = opt_.current_lr();
  const LossTerms terms = total_loss(lb, bank_, indices);
  m.instance = terms.instance;
  m.nn = terms.nn;
  m.nn_active = terms.nn_active;
  m.total = terms.total.value().item();

  enc_.zero_grad();
  ad::backward(terms.total);
  auto params = enc_.online_params();
  sgd_step(params, opt_);
  enc_.ema_update();

  if (cfg_.queue_update == QueueUpdate::kPost) enqueue();

  prov_.small_emitted += b.crops.emitted;
  prov_.small_resampled += b.crops.resampled;
  prov_.small_fallbacks += b.crops.fallbacks;
  prov_.small_violations += b.small_overlap_violations;
  if (N > 0) prov_.min_small_overlap = std::min(prov_.min_small_overlap, b.min_small_overlap);
  return m;
}

TensorTable Trainer::snapshot(std::size_t epoch) const {
  TensorTable t;
  enc_.save(t);
  bank_.save(t);
  std::size_t i = 0;
  for (const auto& v : opt_.velocity()) t.put("opt.v." + std::to_string(i++), v);
  t.metadata["config_hash"] = config_fingerprint(cfg_);
  t.metadata["epoch"] = std::to_string(epoch);
  t.metadata["step"] = std::to_string(opt_.step());
  t.metadata["seed"] = std::to_string(cfg_.seed);
  return t;
}

void Trainer::restore(const TensorTable& table) {
  enc_.load(table);
  bank_.load(table);
  std::vector<Tensor> velocity;
  for (std::size_t i = 0; i < opt_.velocity().size(); ++i) {
    const std::string name = "opt.v." + std::to_string(i);
    if (!table.contains(name)) {
      velocity.clear();
      break;
    }
    velocity.push_back(table.get(name));
  }
  const auto step = table.metadata.find("step");
  if (!velocity.empty()) opt_.restore(std::move(velocity), step == table.metadata.end() ? 0 : std::stoull(step->second));
}

std::string config_fingerprint(const TrainConfig& cfg) {
  // runtime knobs that cannot change the numbers stay out of the hash
  ExperimentConfig e;
  e.train = cfg;
  e.train.prefetch = TrainConfig{}.prefetch;
  e.train.log_wall_time = TrainConfig{}.log_wall_time;
  return config_hash(e);
}

// ---- pretrain -----------------------------------------------------------------------

PretrainResult pretrain(const TrainConfig& cfg, const SynthDataset& data, const PretrainHooks& hooks) {
  Trainer tr(cfg, data);
  PretrainResult res;
  const std::size_t spe = tr.steps_per_epoch(), B = cfg.batch_size;

  struct Job {
    std::size_t epoch;
    std::vector<std::size_t> ids;
  };
  std::vector<Job> jobs;
  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const auto order = tr.epoch_order(e);
    for (std::size_t s = 0; s < spe; ++s) jobs.push_back({e, {order.begin() + s * B, order.begin() + (s + 1) * B}});
  }

  const Trainer& view_source = tr;
  auto prep = [&view_source](const Job& j) { return view_source.prepare(j.epoch, j.ids); };
  std::optional<std::future<PreparedBatch>> next;
  if (cfg.prefetch && !jobs.empty()) next = std::async(std::launch::async, prep, jobs[0]);

  EpochMetrics em;
  std::size_t epoch = 0;
  try {
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      epoch = jobs[j].epoch;
      PreparedBatch batch = cfg.prefetch ? next->get() : prep(jobs[j]);
      if (cfg.prefetch && j + 1 < jobs.size()) next = std::async(std::launch::async, prep, jobs[j + 1]);

      const auto t0 = std::chrono::steady_clock::now();
      StepMetrics m = tr.train_step(batch, epoch);
      if (cfg.log_wall_time)
        m.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      res.steps.push_back(m);
      if (hooks.on_step) hooks.on_step(m);

      em.epoch = epoch;
      ++em.steps;
      em.instance += m.instance;
      em.nn += m.nn;
      em.total += m.total;
      em.lr_end = m.lr;
      const bool epoch_done = j + 1 == jobs.size() || jobs[j + 1].epoch != epoch;
      if (!epoch_done) continue;
      em.instance /= em.steps;
      em.nn /= em.steps;
      em.total /= em.steps;
      res.epochs.push_back(em);
      if (hooks.on_epoch) hooks.on_epoch(em);
      em = EpochMetrics{};
      if (cfg.checkpoint_interval && (epoch + 1) % cfg.checkpoint_interval == 0 && epoch + 1 < cfg.epochs &&
          hooks.on_checkpoint)
        hooks.on_checkpoint(tr.snapshot(epoch + 1), epoch + 1, false);
    }
  } catch (const NumericError&) {
    if (next && next->valid()) next->wait();
    if (hooks.on_abort) hooks.on_abort(tr.snapshot(epoch));
    throw;
  } catch (...) {
    if (next && next->valid()) next->wait();
    throw;
  }

  res.provenance = tr.provenance();
  res.final_state = tr.snapshot(cfg.epochs);
  if (hooks.on_checkpoint) hooks.on_checkpoint(res.final_state, cfg.epochs, true);
  return res;
}

}  // namespace kmoco
