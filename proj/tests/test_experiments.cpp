#include <doctest.h>

#include "kmoco/errors.hpp"
#include "kmoco/experiments.hpp"
#include "support.hpp"

using namespace kmoco;

namespace {

TrainConfig tiny() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.queue_size = 16;
  c.k = 3;
  c.warmup_epochs = 1;
  c.encoder.channels = {4, 6, 8};
  c.encoder.head_hidden = 8;
  c.encoder.embed_dim = 6;
  c.large.out_side = 16;
  c.small.out_side = 8;
  c.prefetch = false;
  return c;
}

SynthDataset make(Variant v, std::size_t count, std::uint64_t seed) {
  GenerateSpec s;
  s.variant = v;
  s.classes = 4;
  s.count = count;
  s.objects_min = 1;
  s.objects_max = 2;
  s.side = 32;
  s.seed = seed;
  return generate(s);
}

ProbeSettings small_probe() {
  ProbeSettings p;
  p.side = 16;
  p.probe.epochs = 5;
  return p;
}

}  // namespace

TEST_CASE("table4 grid is cumulative and leaves lower momentum off") {
  ExperimentConfig cfg;
  const auto g = ablation_grid(cfg);
  REQUIRE(g.size() == 5);
  CHECK(g[0].name == "two-crop");
  CHECK(g[4].name == "+MC+CC+A+ +NN");
  const bool want[5][4] = {{0, 0, 0, 0}, {1, 0, 0, 0}, {1, 1, 0, 0}, {1, 1, 1, 0}, {1, 1, 1, 1}};
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(g[i].train.multicrop == want[i][0]);
    CHECK(g[i].train.constraint == want[i][1]);
    CHECK(g[i].train.strong_aug == want[i][2]);
    CHECK(g[i].train.nn == want[i][3]);
    CHECK_FALSE(g[i].train.lower_momentum);
  }
}

TEST_CASE("lambda and iou grids") {
  ExperimentConfig cfg;
  cfg.ablate.preset = "lambda";
  const auto l = ablation_grid(cfg);
  REQUIRE(l.size() == cfg.ablate.lambdas.size());
  for (std::size_t i = 0; i < l.size(); ++i) {
    CHECK(l[i].train.lambda == cfg.ablate.lambdas[i]);
    CHECK(l[i].train.nn);
    CHECK(l[i].train.multicrop);
  }
  cfg.ablate.preset = "iou";
  const auto u = ablation_grid(cfg);
  REQUIRE(u.size() == 3);
  CHECK(u[2].train.iou_max == 0.1);
  CHECK_FALSE(u[2].train.multicrop);
  CHECK(iou_grid(TrainConfig{}, {0.5})[0].name == "iou_max=0.5");
  cfg.ablate.preset = "everything";
  CHECK_THROWS_AS(ablation_grid(cfg), ConfigError);
}

TEST_CASE("run_grid: rows in order, identical with one or two workers") {
  const SynthDataset train = make(Variant::kSceneCentric, 8, 1), probe = make(Variant::kObjectCentric, 24, 2);
  std::vector<GridCell> cells{{"a", tiny()}, {"b", tiny()}};
  cells[1].train.multicrop = true;
  const std::vector<std::uint64_t> seeds{0, 1};
  const auto serial = run_grid(cells, seeds, train, probe, small_probe(), 1);
  const auto threaded = run_grid(cells, seeds, train, probe, small_probe(), 2);
  REQUIRE(serial.size() == 4);
  REQUIRE(threaded.size() == 4);
  const char* names[] = {"a", "a", "b", "b"};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(serial[i].name == names[i]);
    CHECK(serial[i].seed == seeds[i % 2]);
    CHECK(serial[i].finite);
    CHECK(serial[i].final_loss == threaded[i].final_loss);
    CHECK(serial[i].probe_accuracy == threaded[i].probe_accuracy);
  }
  CHECK(serial[0].final_loss != serial[1].final_loss);

  const auto sum = summarize(serial);
  REQUIRE(sum.size() == 2);
  CHECK(sum[0].runs == 2);
  CHECK(sum[0].mean_loss == doctest::Approx((serial[0].final_loss + serial[1].final_loss) / 2));
  const std::string csv = grid_csv(serial);
  CHECK(csv.rfind("cell,seed,", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 5);
  const std::string scsv = summary_csv(sum);
  CHECK(std::count(scsv.begin(), scsv.end(), '\n') == 3);
}

TEST_CASE("probe, retrieval and propagation on a random backbone") {
  Rng rng = derive_rng(81);
  const TrainConfig c = tiny();
  const ParamSet g = init_backbone(c.encoder, rng);
  const SynthDataset obj = make(Variant::kObjectCentric, 24, 3), scene = make(Variant::kSceneCentric, 6, 4);

  CHECK(object_labels(obj).size() == 24);
  const ProbeResult p = probe_backbone(g, obj, small_probe(), 0);
  CHECK(p.accuracy >= 0.0);
  CHECK(p.accuracy <= 1.0);
  CHECK_THROWS_AS(probe_backbone(g, scene, small_probe(), 0), ConfigError);

  RetrievalConfig rc;
  rc.clusters = 4;
  const RetrievalResult r = retrieval_backbone(g, scene, make(Variant::kSceneCentric, 4, 5), rc);
  CHECK(r.miou >= 0.0);
  CHECK(r.miou <= 1.0);

  VideoSpec v;
  v.sequences = 2;
  v.frames = 4;
  v.side = 32;
  const SynthDataset vid = generate_video(v);
  const auto seqs = video_sequences(vid);
  REQUIRE(seqs.size() == 2);
  CHECK(seqs[1] == std::vector<std::size_t>{4, 5, 6, 7});
  PropagationSettings ps;
  const auto scores = propagation_backbone(g, vid, ps);
  REQUIRE(scores.size() == 2);
  for (const auto& s : scores) {
    CHECK(s.frames == 4);
    CHECK(s.J >= 0.0);
    CHECK(s.J <= 1.0);
  }
  CHECK_THROWS_AS(video_sequences(scene), ConfigError);
}

TEST_CASE("score_sequence: instance-coded maps, full and half resolution") {
  VideoSpec v;
  v.sequences = 1;
  v.frames = 5;
  v.side = 32;
  v.speed_min = v.speed_max = 0.0;
  v.jitter = 0.0;
  const SynthDataset vid = generate_video(v);
  const auto seqs = video_sequences(vid);
  // one-hot of the instance id at the top-left pixel of each cell
  auto coded = [&](int cell) {
    const int n = 32 / cell;
    std::vector<Tensor> maps;
    for (auto i : seqs[0]) {
      Tensor t({4, std::size_t(n), std::size_t(n)}, 0.0);
      for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) t[vid.records[i].mask[(cell * r) * 32 + cell * c] * n * n + r * n + c] = 1.0;
      maps.push_back(t);
    }
    return maps;
  };
  const SequenceScore full = score_sequence(vid, seqs[0], coded(1), PropagationConfig{}, 1);
  CHECK(full.frames == 5);
  CHECK(full.objects >= 1);
  CHECK(full.J == 1.0);
  CHECK(full.F == 1.0);
  // half resolution: the coarse grid costs boundary pixels only
  const SequenceScore half = score_sequence(vid, seqs[0], coded(2), PropagationConfig{}, 1);
  CHECK(half.J > 0.5);
  CHECK(half.J < 1.0);
}
