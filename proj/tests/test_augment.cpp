#include <doctest.h>

#include "kmoco/augment.hpp"
#include "kmoco/errors.hpp"
#include "support.hpp"

using namespace kmoco;

namespace {

ImageTensor noise(Rng& rng, int h = 12, int w = 10) {
  ImageTensor im(h, w);
  for (auto& v : im.data) v = static_cast<float>(uniform01(rng));
  return im;
}

}  // namespace

TEST_CASE("a policy with all probabilities zero is the identity") {
  Rng rng = derive_rng(1);
  const ImageTensor im = noise(rng);
  AugPolicy p = AugPolicy::standard();
  for (auto& op : p.ops) op.probability = 0.0;
  CHECK(apply_policy(im, p, rng) == im);
}

TEST_CASE("flip twice is the identity") {
  Rng rng = derive_rng(2);
  const ImageTensor im = noise(rng, 5, 7);
  const AugPolicy p = AugPolicy::parse("hflip@1");
  const ImageTensor once = apply_policy(im, p, rng);
  CHECK_FALSE(once == im);
  CHECK(once.at(2, 0, 1) == im.at(2, 6, 1));
  CHECK(apply_policy(once, p, rng) == im);
}

TEST_CASE("grayscale uses luma weights 0.299, 0.587, 0.114") {
  ImageTensor im(1, 1);
  im.at(0, 0, 0) = 1.0f;
  to_grayscale(im);
  for (int c = 0; c < 3; ++c) CHECK(im.at(0, 0, c) == doctest::Approx(0.299f));
  ImageTensor g(1, 1);
  g.at(0, 0, 1) = 1.0f;
  to_grayscale(g);
  CHECK(g.at(0, 0, 2) == doctest::Approx(0.587f));
}

TEST_CASE("every pipeline keeps values in [0, 1] and is deterministic per seed") {
  Rng rng = derive_rng(3);
  const AugPolicy std_p = AugPolicy::standard(), strong = AugPolicy::strong();
  for (int t = 0; t < 200; ++t) {
    const ImageTensor im = noise(rng);
    Rng a = derive_rng(100 + t), b = derive_rng(100 + t);
    const ImageTensor x = apply_mixed(im, std_p, strong, 0.5, a);
    CHECK(x.in_range());
    CHECK(x == apply_mixed(im, std_p, strong, 0.5, b));
  }
  // extreme magnitudes too
  const AugPolicy wild = AugPolicy::parse(
      "brightness@1:1, contrast@1:1, saturation@1:1, hue@1:0.5, blur@1:5, posterize@1:1, solarize@1:0, sharpness@1:1");
  for (int t = 0; t < 50; ++t) CHECK(apply_policy(noise(rng), wild, rng).in_range());
}

TEST_CASE("gaussian blur preserves a constant image and the interior mean") {
  ImageTensor flat(16, 16, 3, 0.42f);
  gaussian_blur(flat, 1.7);
  for (float v : flat.data) CHECK(v == doctest::Approx(0.42f).epsilon(1e-6));

  // a periodic pattern: the mean over an interior window is preserved
  ImageTensor im(40, 40, 1);
  for (int r = 0; r < 40; ++r)
    for (int c = 0; c < 40; ++c) im.at(r, c, 0) = static_cast<float>((r + c) % 2);
  ImageTensor blurred = im;
  gaussian_blur(blurred, 1.0);
  double a = 0, b = 0;
  for (int r = 10; r < 30; ++r)
    for (int c = 10; c < 30; ++c) {
      a += im.at(r, c, 0);
      b += blurred.at(r, c, 0);
    }
  CHECK(std::abs(a - b) / 400.0 < 1e-6);
}

TEST_CASE("apply_mixed: degenerate mixes and the binomial count") {
  Rng rng = derive_rng(4);
  const ImageTensor im = noise(rng);
  const AugPolicy std_p = AugPolicy::standard(), strong = AugPolicy::strong();
  for (int t = 0; t < 20; ++t) {
    Rng a = derive_rng(t), b = derive_rng(t);
    bool used = true;
    const ImageTensor x = apply_mixed(im, std_p, strong, 0.0, a, &used);
    CHECK_FALSE(used);
    // same stream: one uniform draw for the branch, then the policy
    (void)uniform01(b);
    CHECK(x == apply_policy(im, std_p, b));

    Rng c = derive_rng(t), d = derive_rng(t);
    const ImageTensor y = apply_mixed(im, std_p, strong, 1.0, c, &used);
    CHECK(used);
    (void)uniform01(d);
    CHECK(y == apply_policy(im, strong, d));
  }
  int strong_count = 0;
  const AugPolicy none;
  for (int t = 0; t < 10000; ++t) {
    bool used = false;
    apply_mixed(im, none, none, 0.5, rng, &used);
    strong_count += used;
  }
  CHECK(std::abs(strong_count - 5000) <= 150);
  CHECK_THROWS_AS(apply_mixed(im, std_p, strong, 1.5, rng), ConfigError);
}

TEST_CASE("policy text round-trips and rejects bad input") {
  for (const AugPolicy& p : {AugPolicy::standard(), AugPolicy::strong()}) {
    const AugPolicy q = AugPolicy::parse(p.to_string());
    REQUIRE(q.ops.size() == p.ops.size());
    for (std::size_t i = 0; i < p.ops.size(); ++i) {
      CHECK(q.ops[i].kind == p.ops[i].kind);
      CHECK(q.ops[i].probability == p.ops[i].probability);
      CHECK(q.ops[i].magnitude == p.ops[i].magnitude);
    }
  }
  CHECK(AugPolicy::parse("").ops.empty());
  CHECK_THROWS_AS(AugPolicy::parse("wobble@0.5"), ConfigError);
  CHECK_THROWS_AS(AugPolicy::parse("brightness"), ConfigError);
  CHECK_THROWS_AS(AugPolicy::parse("brightness@1.5:0.2").validate(), ConfigError);
  CHECK_THROWS_AS(AugPolicy::parse("blur@0.5:9").validate(), ConfigError);
}

TEST_CASE("standard defaults: flip, jitter 0.4/0.4/0.4/0.1 at 0.8, grayscale 0.2, blur 0.5") {
  const AugPolicy p = AugPolicy::standard();
  auto find = [&](AugKind k) -> const AugOp* {
    for (const auto& op : p.ops)
      if (op.kind == k) return &op;
    return nullptr;
  };
  REQUIRE(find(AugKind::kHorizontalFlip));
  CHECK(find(AugKind::kHorizontalFlip)->probability == 0.5);
  for (AugKind k : {AugKind::kBrightness, AugKind::kContrast, AugKind::kSaturation}) {
    REQUIRE(find(k));
    CHECK(find(k)->probability == 0.8);
    CHECK(find(k)->magnitude == 0.4);
  }
  CHECK(find(AugKind::kHue)->magnitude == 0.1);
  CHECK(find(AugKind::kGrayscale)->probability == 0.2);
  CHECK(find(AugKind::kGaussianBlur)->probability == 0.5);
  // the strong list has no hue, saturation or grayscale
  for (const auto& op : AugPolicy::strong().ops) {
    CHECK(op.kind != AugKind::kHue);
    CHECK(op.kind != AugKind::kSaturation);
    CHECK(op.kind != AugKind::kGrayscale);
  }
}

TEST_CASE("individual ops: hand-evaluated values") {
  ImageTensor im(1, 2);
  im.at(0, 0, 0) = 0.6f;
  im.at(0, 1, 0) = 0.2f;
  ImageTensor s = im;
  solarize(s, 0.5);
  CHECK(s.at(0, 0, 0) == doctest::Approx(0.4f));
  CHECK(s.at(0, 1, 0) == doctest::Approx(0.2f));
  ImageTensor p = im;
  posterize(p, 1);  // keeps the top bit: 0.6 → 128/255, 0.2 → 0
  CHECK(p.at(0, 0, 0) == doctest::Approx(128.0f / 255.0f));
  CHECK(p.at(0, 1, 0) == 0.0f);
  ImageTensor b = im;
  adjust_brightness(b, 2.0);
  CHECK(b.at(0, 0, 0) == 1.0f);
  CHECK(b.at(0, 1, 0) == doctest::Approx(0.4f));
  ImageTensor h = im;
  rotate_hue(h, 1.0);  // a full turn
  for (std::size_t i = 0; i < h.data.size(); ++i) CHECK(h.data[i] == doctest::Approx(im.data[i]).epsilon(1e-5));
}
