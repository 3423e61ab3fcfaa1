#include "kmoco/synth.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>

#include "kmoco/binio.hpp"
#include "kmoco/errors.hpp"
#include "kmoco/rng.hpp"

namespace kmoco {

namespace {

struct Color {
  double r, g, b;
};

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

// Two octaves of value noise around a random base colour.
ImageTensor render_background(Rng& rng, int side, Color& base) {
  const double grey = uniform(rng, 0.3, 0.7);
  base = {grey + uniform(rng, -0.04, 0.04), grey + uniform(rng, -0.04, 0.04), grey + uniform(rng, -0.04, 0.04)};
  ImageTensor im(side, side, 3);
  for (int octave = 0; octave < 2; ++octave) {
    const int cells = 4 << octave;
    const double amp = 0.02 / (1 << octave);
    std::vector<double> grid((cells + 1) * (cells + 1) * 3);
    for (auto& v : grid) v = uniform(rng, -1.0, 1.0);
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c) {
        const double gy = (r + 0.5) * cells / side, gx = (c + 0.5) * cells / side;
        const int y0 = static_cast<int>(gy), x0 = static_cast<int>(gx);
        const double ty = smoothstep(gy - y0), tx = smoothstep(gx - x0);
        for (int ch = 0; ch < 3; ++ch) {
          auto at = [&](int y, int x) { return grid[(y * (cells + 1) + x) * 3 + ch]; };
          const double top = at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx;
          const double bot = at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx;
          im.at(r, c, ch) += static_cast<float>(amp * (top * (1 - ty) + bot * ty));
        }
      }
  }
  const double b[3] = {base.r, base.g, base.b};
  for (int r = 0; r < side; ++r)
    for (int c = 0; c < side; ++c)
      for (int ch = 0; ch < 3; ++ch) im.at(r, c, ch) += static_cast<float>(b[ch]);
  im.clamp01();
  return im;
}

// Object colours come from a small palette, so colour alone says little
// about which image a crop came from.
Color contrasting_color(Rng& rng, const Color& bg) {
  static constexpr Color kPalette[] = {{0.85, 0.2, 0.2}, {0.2, 0.7, 0.25}, {0.2, 0.35, 0.85},
                                       {0.9, 0.8, 0.2},  {0.1, 0.1, 0.1},  {0.95, 0.95, 0.95}};
  for (;;) {
    const Color& p = kPalette[randint(rng, 0, 5)];
    Color c{std::clamp(p.r + uniform(rng, -0.05, 0.05), 0.0, 1.0), std::clamp(p.g + uniform(rng, -0.05, 0.05), 0.0, 1.0),
            std::clamp(p.b + uniform(rng, -0.05, 0.05), 0.0, 1.0)};
    if (std::abs(c.r - bg.r) + std::abs(c.g - bg.g) + std::abs(c.b - bg.b) >= 0.45) return c;
  }
}

// Inside test in shape coordinates, where the bounding radius maps to 1.
bool inside(std::size_t archetype, double u, double v) {
  const double au = std::abs(u), av = std::abs(v);
  switch (archetype % 8) {
    case 0: return u * u + v * v <= 1.0;
    case 1: return std::max(au, av) <= 0.85;
    case 2: return v <= 0.8 && v >= -0.9 && au <= 0.9 * (v + 0.9) / 1.7;
    case 3: return (au <= 0.3 && av <= 0.95) || (av <= 0.3 && au <= 0.95);
    case 4: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.55 * 0.55;
    }
    case 5: return au + av <= 1.0;
    case 6: return std::max(au, av) <= 0.9 && std::max(au, av) >= 0.5;
    default: return u * u + (v / 0.5) * (v / 0.5) <= 1.0;
  }
}

// Class texture in shape coordinates: 0 solid, 1 horizontal stripes,
// 2 vertical stripes, 3 diagonal, 4 checker, 5 rings, 6 dots, 7 anti-diagonal.
// Classes 8..15 reuse the archetype of c − 8 with texture (c + 4) mod 8.
bool texture(std::size_t cls, double u, double v) {
  const std::size_t t = cls < 8 ? cls : (cls + 4) % 8;
  auto band = [](double x) { return static_cast<long>(std::floor(x)) % 2 != 0; };
  switch (t) {
    case 0: return false;
    case 1: return band((v + 1.0) * 1.5);
    case 2: return band((u + 1.0) * 1.5);
    case 3: return band((u + v + 2.0) * 1.25);
    case 4: return band((u + 1.0) * 1.5) != band((v + 1.0) * 1.5);
    case 5: return band(std::sqrt(u * u + v * v) * 2.5);
    case 6: {
      const double fu = (u + 1.0) * 1.5 - std::floor((u + 1.0) * 1.5) - 0.5;
      const double fv = (v + 1.0) * 1.5 - std::floor((v + 1.0) * 1.5) - 0.5;
      return fu * fu + fv * fv < 0.09;
    }
    default: return band((u - v + 2.0) * 1.25);
  }
}

struct Placed {
  double cx, cy, radius;
  std::size_t cls;
  Color color;
};

std::size_t draw_shape(ImageTensor& im, std::vector<std::uint16_t>& mask, std::uint16_t id,
                       const Placed& s) {
  const int side = im.width;
  std::size_t pixels = 0;
  const int r0 = std::max(0, static_cast<int>(std::floor(s.cy - s.radius)));
  const int r1 = std::min(side - 1, static_cast<int>(std::ceil(s.cy + s.radius)));
  const int c0 = std::max(0, static_cast<int>(std::floor(s.cx - s.radius)));
  const int c1 = std::min(side - 1, static_cast<int>(std::ceil(s.cx + s.radius)));
  for (int r = r0; r <= r1; ++r)
    for (int c = c0; c <= c1; ++c) {
      const double u = (c + 0.5 - s.cx) / s.radius, v = (r + 0.5 - s.cy) / s.radius;
      if (!inside(s.cls, u, v)) continue;
      const double shade = texture(s.cls, u, v) ? 0.55 : 1.0;
      im.at(r, c, 0) = static_cast<float>(s.color.r * shade);
      im.at(r, c, 1) = static_cast<float>(s.color.g * shade);
      im.at(r, c, 2) = static_cast<float>(s.color.b * shade);
      mask[static_cast<std::size_t>(r) * side + c] = id;
      ++pixels;
    }
  return pixels;
}

bool boxes_overlap(const Placed& a, const Placed& b, double gap) {
  return std::abs(a.cx - b.cx) < a.radius + b.radius + gap &&
         std::abs(a.cy - b.cy) < a.radius + b.radius + gap;
}

SynthRecord render(Rng& rng, int side, const std::vector<Placed>& shapes, const ImageTensor* bg) {
  SynthRecord rec;
  Color base{};
  rec.image = bg ? *bg : render_background(rng, side, base);
  rec.mask.assign(static_cast<std::size_t>(side) * side, 0);
  for (std::size_t i = 0; i < shapes.size(); ++i) {
    if (draw_shape(rec.image, rec.mask, static_cast<std::uint16_t>(i + 1), shapes[i]) == 0)
      throw SamplingError("generated object has no visible pixels");
    rec.labels.push_back(static_cast<std::uint32_t>(shapes[i].cls));
  }
  return rec;
}

void check_classes(std::size_t classes) {
  if (classes < 2 || classes > kMaxClasses)
    throw ConfigError("class count must be in [2, " + std::to_string(kMaxClasses) + "]");
}

// Runs body(i) for i in [0, n) across threads, rethrowing the first error.
template <typename F>
void parallel_records(std::size_t n, F&& body) {
  std::exception_ptr err;
  std::mutex mu;
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(n); ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(mu);
      if (!err) err = std::current_exception();
    }
  }
  if (err) std::rethrow_exception(err);
}

}  // namespace

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::kObjectCentric: return "object";
    case Variant::kSceneCentric: return "scene";
    case Variant::kVideo: return "video";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "object") return Variant::kObjectCentric;
  if (s == "scene") return Variant::kSceneCentric;
  if (s == "video") return Variant::kVideo;
  throw ConfigError("unknown dataset variant '" + s + "' (object | scene | video)");
}

std::size_t SynthDataset::num_classes() const {
  std::uint32_t mx = 0;
  bool any = false;
  for (const auto& r : records)
    for (auto l : r.labels) {
      mx = std::max(mx, l);
      any = true;
    }
  return any ? mx + 1 : 0;
}

std::vector<int> semantic_mask(const SynthRecord& r) {
  std::vector<int> out(r.mask.size(), 0);
  for (std::size_t i = 0; i < r.mask.size(); ++i)
    if (r.mask[i]) out[i] = static_cast<int>(r.labels.at(r.mask[i] - 1)) + 1;
  return out;
}

SynthDataset generate(const GenerateSpec& spec) {
  check_classes(spec.classes);
  if (spec.side < 16) throw ConfigError("image side must be at least 16");
  std::vector<std::uint32_t> labels;
  if (!spec.per_class_counts.empty()) {
    if (spec.variant != Variant::kObjectCentric)
      throw ConfigError("per-class counts apply to object-centric sets only");
    if (spec.per_class_counts.size() != spec.classes)
      throw ConfigError("per_class_counts must have one entry per class");
    for (std::size_t c = 0; c < spec.classes; ++c)
      labels.insert(labels.end(), spec.per_class_counts[c], static_cast<std::uint32_t>(c));
    Rng shuffle_rng = derive_rng(spec.seed, {0xfeedULL});
    std::shuffle(labels.begin(), labels.end(), shuffle_rng);
  } else {
    if (spec.count < spec.classes) throw ConfigError("dataset needs at least one image per class");
    for (std::size_t i = 0; i < spec.count; ++i) labels.push_back(static_cast<std::uint32_t>(i % spec.classes));
  }
  if (spec.variant == Variant::kSceneCentric &&
      (spec.objects_min < 1 || spec.objects_max < spec.objects_min))
    throw ConfigError("objects range must satisfy 1 <= min <= max");
  if (spec.variant == Variant::kVideo) throw ConfigError("use generate_video for video sets");

  SynthDataset ds;
  ds.height = ds.width = spec.side;
  ds.variant = spec.variant;
  ds.seed = spec.seed;
  ds.records.resize(labels.size());
  const double side = spec.side;

  parallel_records(labels.size(), [&](std::size_t i) {
    Rng rng = derive_rng(spec.seed, {i});
    Color bg{};
    ImageTensor background = render_background(rng, spec.side, bg);
    std::vector<Placed> shapes;
    if (spec.variant == Variant::kObjectCentric) {
      const double radius = uniform(rng, 0.26, 0.38) * side;
      shapes.push_back({side / 2 + uniform(rng, -0.08, 0.08) * side,
                        side / 2 + uniform(rng, -0.08, 0.08) * side, radius, labels[i],
                        contrasting_color(rng, bg)});
    } else {
      const int n = static_cast<int>(randint(rng, spec.objects_min, spec.objects_max));
      // crowded scenes shrink their objects so the total footprint stays near three
      const double shrink = n > 3 ? std::sqrt(3.0 / n) : 1.0;
      for (int k = 0; k < n; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
          const double radius = uniform(rng, 0.12, 0.18) * shrink * side;
          Placed p{uniform(rng, radius, side - radius), uniform(rng, radius, side - radius), radius,
                   static_cast<std::size_t>(randint(rng, 0, static_cast<long>(spec.classes) - 1)), {}};
          if (std::none_of(shapes.begin(), shapes.end(),
                           [&](const Placed& q) { return boxes_overlap(p, q, 1.0); })) {
            p.color = contrasting_color(rng, bg);
            shapes.push_back(p);
            placed = true;
          }
        }
        if (!placed)
          throw SamplingError("could not place " + std::to_string(n) + " objects in image " +
                              std::to_string(i));
      }
    }
    ds.records[i] = render(rng, spec.side, shapes, &background);
  });
  return ds;
}

std::vector<std::size_t> longtail_counts(const LongTailSpec& spec) {
  if (spec.classes == 0) throw ConfigError("long-tail spec needs at least one class");
  if (spec.n_min < 1 || spec.n_max < spec.n_min)
    throw ConfigError("long-tail spec needs n_max >= n_min >= 1");
  if (spec.classes == 1) return {spec.n_max};
  const double gamma = std::log(static_cast<double>(spec.n_max) / spec.n_min) /
                       std::log(static_cast<double>(spec.classes));
  std::vector<std::size_t> out(spec.classes);
  for (std::size_t c = 0; c < spec.classes; ++c) {
    const double v = std::round(spec.n_max * std::pow(static_cast<double>(c + 1), -gamma));
    out[c] = std::max(spec.n_min, static_cast<std::size_t>(v));
  }
  return out;
}

SynthDataset generate_video(const VideoSpec& spec) {
  check_classes(spec.classes);
  if (spec.frames < 2) throw ConfigError("video sequences need at least 2 frames");
  if (spec.objects_min < 1 || spec.objects_max < spec.objects_min)
    throw ConfigError("objects range must satisfy 1 <= min <= max");
  if (spec.speed_min < 0 || spec.speed_max < spec.speed_min)
    throw ConfigError("speed range must satisfy 0 <= min <= max");

  SynthDataset ds;
  ds.height = ds.width = spec.side;
  ds.variant = Variant::kVideo;
  ds.seed = spec.seed;
  ds.records.resize(spec.sequences * spec.frames);
  const double side = spec.side;
  const double T = static_cast<double>(spec.frames - 1);

  parallel_records(spec.sequences, [&](std::size_t s) {
    Rng rng = derive_rng(spec.seed, {s});
    Color bg{};
    const ImageTensor background = render_background(rng, spec.side, bg);
    int n = static_cast<int>(randint(rng, spec.objects_min, spec.objects_max));

    // Trajectories: position(t) = start + velocity·t + jitter_t.
    struct Track {
      Placed shape;
      double vx, vy;
      std::vector<double> jx, jy;
    };
    std::vector<Track> tracks;
    auto position = [](const Track& tr, std::size_t t) {
      return std::pair{tr.shape.cx + tr.vx * t + tr.jx[t], tr.shape.cy + tr.vy * t + tr.jy[t]};
    };
    for (; n >= 1; --n) {
      tracks.clear();
      for (int k = 0; k < n; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 300 && !placed; ++attempt) {
          Track tr;
          const double radius = uniform(rng, 0.10, 0.15) * side;
          const double speed = uniform(rng, spec.speed_min, spec.speed_max);
          const double angle = uniform(rng, 0.0, 2.0 * 3.14159265358979323846);
          tr.vx = speed * std::cos(angle);
          tr.vy = speed * std::sin(angle);
          tr.jx.resize(spec.frames);
          tr.jy.resize(spec.frames);
          for (std::size_t t = 0; t < spec.frames; ++t) {
            tr.jx[t] = spec.jitter * normal(rng);
            tr.jy[t] = spec.jitter * normal(rng);
          }
          // Start so the straight path stays in frame, with a jitter margin.
          const double margin = radius + 3.0 * spec.jitter + 1.0;
          const double xlo = margin - std::min(0.0, tr.vx * T), xhi = side - margin - std::max(0.0, tr.vx * T);
          const double ylo = margin - std::min(0.0, tr.vy * T), yhi = side - margin - std::max(0.0, tr.vy * T);
          if (xlo > xhi || ylo > yhi) continue;
          tr.shape = {uniform(rng, xlo, xhi), uniform(rng, ylo, yhi), radius,
                      static_cast<std::size_t>(randint(rng, 0, static_cast<long>(spec.classes) - 1)), {}};
          bool ok = true;
          for (std::size_t t = 0; ok && t < spec.frames; ++t) {
            auto [x, y] = position(tr, t);
            if (x - radius < 0 || y - radius < 0 || x + radius > side || y + radius > side) ok = false;
            for (const auto& other : tracks) {
              auto [ox, oy] = position(other, t);
              Placed a{x, y, radius, 0, {}}, b{ox, oy, other.shape.radius, 0, {}};
              if (boxes_overlap(a, b, 1.0)) ok = false;
            }
          }
          if (!ok) continue;
          tr.shape.color = contrasting_color(rng, bg);
          tracks.push_back(tr);
          placed = true;
        }
        if (!placed) break;
      }
      if (static_cast<int>(tracks.size()) == n) break;
    }

    for (std::size_t t = 0; t < spec.frames; ++t) {
      std::vector<Placed> shapes;
      for (const auto& tr : tracks) {
        Placed p = tr.shape;
        std::tie(p.cx, p.cy) = position(tr, t);
        shapes.push_back(p);
      }
      SynthRecord rec = render(rng, spec.side, shapes, &background);
      rec.sequence = static_cast<std::uint32_t>(s + 1);
      ds.records[s * spec.frames + t] = std::move(rec);
    }
  });
  return ds;
}

std::pair<double, double> mask_centroid(const SynthRecord& r, int width, std::uint16_t id) {
  double sr = 0, sc = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < r.mask.size(); ++i)
    if (r.mask[i] == id) {
      sr += static_cast<double>(i / width);
      sc += static_cast<double>(i % width);
      ++n;
    }
  if (n == 0) return {std::nan(""), std::nan("")};
  return {sr / n, sc / n};
}

void write_dataset(const std::string& path, const SynthDataset& ds) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write("KMDS", 4);
  binio::put<std::uint32_t>(os, kDatasetVersion);
  binio::put<std::uint64_t>(os, ds.records.size());
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.height));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.width));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.channels));
  binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(ds.variant));
  for (const auto& r : ds.records) {
    for (float v : r.image.data) binio::put<float>(os, v);
    binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(r.labels.size()));
    for (auto l : r.labels) binio::put<std::uint32_t>(os, l);
    for (auto m : r.mask) binio::put<std::uint16_t>(os, m);
    binio::put<std::uint32_t>(os, r.sequence);
  }
  if (!os) throw IoError("write failed for " + path);
}

SynthDataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open dataset " + path);
  binio::expect_magic(is, "KMDS");
  const auto version = binio::get<std::uint32_t>(is);
  if (version != kDatasetVersion)
    throw FormatError("dataset version " + std::to_string(version) + " not supported");
  SynthDataset ds;
  const auto count = binio::get<std::uint64_t>(is);
  ds.height = static_cast<int>(binio::get<std::uint32_t>(is));
  ds.width = static_cast<int>(binio::get<std::uint32_t>(is));
  ds.channels = static_cast<int>(binio::get<std::uint32_t>(is));
  const auto variant = binio::get<std::uint32_t>(is);
  if (variant > 2) throw FormatError("unknown dataset variant " + std::to_string(variant));
  ds.variant = static_cast<Variant>(variant);
  if (ds.height <= 0 || ds.width <= 0 || ds.channels <= 0 || ds.height > 4096 || ds.width > 4096)
    throw FormatError("dataset dimensions out of range");
  const std::size_t hw = static_cast<std::size_t>(ds.height) * ds.width;
  for (std::uint64_t i = 0; i < count; ++i) {
    SynthRecord r;
    r.image = ImageTensor(ds.height, ds.width, ds.channels);
    for (auto& v : r.image.data) v = binio::get<float>(is);
    const auto nl = binio::get<std::uint32_t>(is);
    if (nl > 65535) throw FormatError("label count out of range");
    r.labels.resize(nl);
    for (auto& l : r.labels) l = binio::get<std::uint32_t>(is);
    r.mask.resize(hw);
    for (auto& m : r.mask) m = binio::get<std::uint16_t>(is);
    r.sequence = binio::get<std::uint32_t>(is);
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace kmoco
