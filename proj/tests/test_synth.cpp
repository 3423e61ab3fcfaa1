#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "kmoco/errors.hpp"
#include "kmoco/synth.hpp"
#include "support.hpp"

using namespace kmoco;

namespace {

bool same(const SynthDataset& a, const SynthDataset& b) {
  if (a.height != b.height || a.width != b.width || a.variant != b.variant || a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const auto &x = a.records[i], &y = b.records[i];
    if (!(x.image == y.image) || x.labels != y.labels || x.mask != y.mask || x.sequence != y.sequence) return false;
  }
  return true;
}

// Mask ids present must be exactly 1..n with n = labels.size().
bool dense_ids(const SynthRecord& r) {
  std::set<std::uint16_t> ids(r.mask.begin(), r.mask.end());
  ids.erase(0);
  if (ids.size() != r.labels.size()) return false;
  std::uint16_t want = 1;
  for (auto id : ids)
    if (id != want++) return false;
  return true;
}

std::filesystem::path tmp(const char* name) { return std::filesystem::temp_directory_path() / name; }

}  // namespace

TEST_CASE("object-centric: one shape per image, labels in range, masks dense") {
  GenerateSpec s;
  s.classes = 4;
  s.count = 4;
  s.seed = 3;
  const SynthDataset ds = generate(s);
  REQUIRE(ds.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& r = ds.records[i];
    CHECK(r.labels.size() == 1);
    CHECK(r.labels[0] < 4);
    CHECK(std::count_if(r.mask.begin(), r.mask.end(), [](auto m) { return m != 0; }) > 0);
    CHECK(dense_ids(r));
    CHECK(r.image.in_range());
  }
  CHECK(ds.num_classes() == 4);
}

TEST_CASE("scene-centric: object counts stay in range") {
  GenerateSpec s;
  s.variant = Variant::kSceneCentric;
  s.classes = 6;
  s.count = 40;
  s.objects_min = 3;
  s.objects_max = 8;
  s.seed = 5;
  const SynthDataset ds = generate(s);
  double mean = 0;
  for (const auto& r : ds.records) {
    CHECK(r.labels.size() >= 3);
    CHECK(r.labels.size() <= 8);
    CHECK(dense_ids(r));
    for (auto l : r.labels) CHECK(l < 6);
    mean += r.labels.size();
  }
  mean /= ds.size();
  CHECK(mean >= 3);
  CHECK(mean <= 8);
}

TEST_CASE("same seed twice gives bit-identical datasets, a different seed does not") {
  GenerateSpec s;
  s.variant = Variant::kSceneCentric;
  s.count = 12;
  s.seed = 9;
  CHECK(same(generate(s), generate(s)));
  GenerateSpec t = s;
  t.seed = 10;
  CHECK_FALSE(same(generate(s), generate(t)));
}

TEST_CASE("shape area fraction is stable across image sides") {
  auto mean_area = [](int side) {
    GenerateSpec s;
    s.count = 64;
    s.side = side;
    s.seed = 11;
    const SynthDataset ds = generate(s);
    double a = 0;
    for (const auto& r : ds.records)
      a += static_cast<double>(std::count_if(r.mask.begin(), r.mask.end(), [](auto m) { return m != 0; })) /
           r.mask.size();
    return a / ds.size();
  };
  const double small = mean_area(32), large = mean_area(96);
  CHECK(std::abs(small - large) / large < 0.15);
}

TEST_CASE("generation rejects bad specs") {
  GenerateSpec s;
  s.classes = 1;
  CHECK_THROWS_AS(generate(s), ConfigError);
  s.classes = 8;
  s.count = 4;
  CHECK_THROWS_AS(generate(s), ConfigError);
  s.count = 16;
  s.objects_min = 3;
  s.objects_max = 2;
  s.variant = Variant::kSceneCentric;
  CHECK_THROWS_AS(generate(s), ConfigError);
  // forty big objects cannot fit without overlap
  s.objects_min = s.objects_max = 40;
  s.side = 16;
  CHECK_THROWS(generate(s));
  CHECK_THROWS_AS(parse_variant("photo"), ConfigError);
}

TEST_CASE("long-tail counts: examples and properties") {
  CHECK(longtail_counts({1, 50, 3, 6.0}) == std::vector<std::size_t>{50});
  const auto c = longtail_counts({16, 256, 1, 6.0});
  REQUIRE(c.size() == 16);
  CHECK(c[0] == 256);
  CHECK(c[3] == 16);
  CHECK(c[15] == 1);

  Rng rng = derive_rng(51);
  for (int t = 0; t < 200; ++t) {
    LongTailSpec s{kt::pick(rng, 2, 40), 0, kt::pick(rng, 1, 20), 6.0};
    s.n_max = s.n_min + kt::pick(rng, 0, 500);
    const auto n = longtail_counts(s);
    CHECK(n.front() == s.n_max);
    CHECK(n.back() == s.n_min);
    double analytic = 0, got = 0;
    const double g = s.n_max == s.n_min ? 0.0 : std::log(double(s.n_max) / s.n_min) / std::log(double(s.classes));
    for (std::size_t i = 0; i < n.size(); ++i) {
      if (i) CHECK(n[i] <= n[i - 1]);
      analytic += std::max<double>(s.n_min, s.n_max * std::pow(i + 1.0, -g));
      got += n[i];
    }
    CHECK(std::abs(got - analytic) <= s.classes);
  }
  CHECK_THROWS_AS(longtail_counts({4, 2, 5, 6.0}), ConfigError);
}

TEST_CASE("long-tailed object sets follow the per-class counts") {
  GenerateSpec s;
  s.classes = 4;
  s.per_class_counts = {8, 4, 2, 1};
  const SynthDataset ds = generate(s);
  CHECK(ds.size() == 15);
  std::vector<std::size_t> seen(4);
  for (std::size_t i = 0; i < ds.size(); ++i) ++seen[ds.label(i)];
  CHECK(seen == s.per_class_counts);
}

TEST_CASE("video: static trajectories give identical masks") {
  VideoSpec v;
  v.sequences = 2;
  v.frames = 5;
  v.speed_min = v.speed_max = 0.0;
  v.jitter = 0.0;
  v.seed = 4;
  const SynthDataset ds = generate_video(v);
  CHECK(ds.variant == Variant::kVideo);
  REQUIRE(ds.size() == 10);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const std::size_t first = (i / 5) * 5;
    CHECK(ds.records[i].sequence == i / 5 + 1);
    CHECK(ds.records[i].mask == ds.records[first].mask);
  }
}

TEST_CASE("video: one shape at 2 px/frame moves its centroid 2 px per frame") {
  VideoSpec v;
  v.sequences = 3;
  v.frames = 6;
  v.speed_min = v.speed_max = 2.0;
  v.jitter = 0.0;
  v.objects_min = v.objects_max = 1;
  v.seed = 8;
  const SynthDataset ds = generate_video(v);
  for (std::size_t s = 0; s < 3; ++s)
    for (std::size_t f = 1; f < 6; ++f) {
      const auto a = mask_centroid(ds.records[s * 6 + f - 1], ds.width, 1);
      const auto b = mask_centroid(ds.records[s * 6 + f], ds.width, 1);
      const double d = std::hypot(b.first - a.first, b.second - a.second);
      CHECK(std::abs(d - 2.0) <= 0.5);
    }
}

TEST_CASE("video: identities and label sets never change within a sequence") {
  VideoSpec v;
  v.sequences = 4;
  v.frames = 8;
  v.seed = 12;
  const SynthDataset ds = generate_video(v);
  for (std::size_t s = 0; s < 4; ++s) {
    const auto& first = ds.records[s * 8];
    for (std::size_t f = 0; f < 8; ++f) {
      const auto& r = ds.records[s * 8 + f];
      CHECK(r.labels == first.labels);
      CHECK(dense_ids(r));
      CHECK(r.labels.size() >= 1);
      CHECK(r.labels.size() <= 3);
    }
  }
  v.frames = 1;
  CHECK_THROWS_AS(generate_video(v), ConfigError);
}

TEST_CASE("KMDS files round-trip; bad files raise FormatError") {
  GenerateSpec s;
  s.variant = Variant::kSceneCentric;
  s.count = 9;
  s.side = 24;
  s.seed = 2;
  const SynthDataset ds = generate(s);
  const auto p = tmp("kmoco_test.kmds");
  write_dataset(p.string(), ds);
  CHECK(same(read_dataset(p.string()), ds));

  VideoSpec v;
  v.sequences = 2;
  v.frames = 3;
  v.side = 24;
  const SynthDataset vid = generate_video(v);
  write_dataset(p.string(), vid);
  CHECK(same(read_dataset(p.string()), vid));

  // wrong magic
  {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  CHECK_THROWS_AS(read_dataset(p.string()), FormatError);
  // wrong version
  write_dataset(p.string(), ds);
  {
    std::fstream f(p, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(4);
    const std::uint32_t bad = 99;
    f.write(reinterpret_cast<const char*>(&bad), 4);
  }
  CHECK_THROWS_AS(read_dataset(p.string()), FormatError);
  // truncated
  write_dataset(p.string(), ds);
  std::filesystem::resize_file(p, std::filesystem::file_size(p) / 2);
  CHECK_THROWS_AS(read_dataset(p.string()), FormatError);
  std::filesystem::remove(p);
  CHECK_THROWS_AS(read_dataset(p.string()), IoError);
}
