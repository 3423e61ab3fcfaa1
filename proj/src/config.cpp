#include "kmoco/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "kmoco/errors.hpp"

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed fields share the size_t codec");

namespace kmoco {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

[[noreturn]] void bad(const std::string& key, const std::string& value, const char* want) {
  throw ConfigError("config key '" + key + "': cannot parse '" + value + "' as " + want);
}

// ---- value codecs --------------------------------------------------------------

std::string fmt(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}
std::string fmt(std::size_t v) { return std::to_string(v); }
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "true" : "false"; }
std::string fmt(const std::string& v) { return v; }
std::string fmt(Variant v) { return variant_name(v); }
std::string fmt(QueueUpdate v) { return v == QueueUpdate::kPost ? "post" : "pre"; }
std::string fmt(NnDenominator v) {
  return v == NnDenominator::kIncludeTargets ? "include_targets" : "exclude_targets";
}
template <typename T>
std::string fmt(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
  return out;
}
std::string fmt(const std::array<std::size_t, 3>& v) {
  return std::to_string(v[0]) + "," + std::to_string(v[1]) + "," + std::to_string(v[2]);
}

template <typename T>
T parse_int(const std::string& key, const std::string& s) {
  T v{};
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) bad(key, s, "an integer");
  return v;
}

void parse_into(const std::string& key, const std::string& s, double& out) {
  double v = 0;
  auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) bad(key, s, "a number");
  out = v;
}
void parse_into(const std::string& key, const std::string& s, std::size_t& out) {
  out = parse_int<std::size_t>(key, s);
}
void parse_into(const std::string& key, const std::string& s, int& out) { out = parse_int<int>(key, s); }
void parse_into(const std::string& key, const std::string& s, bool& out) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") out = true;
  else if (s == "false" || s == "0" || s == "no" || s == "off") out = false;
  else bad(key, s, "a boolean");
}
void parse_into(const std::string&, const std::string& s, std::string& out) { out = s; }
void parse_into(const std::string&, const std::string& s, Variant& out) { out = parse_variant(s); }
void parse_into(const std::string& key, const std::string& s, QueueUpdate& out) {
  if (s == "post") out = QueueUpdate::kPost;
  else if (s == "pre") out = QueueUpdate::kPre;
  else bad(key, s, "pre | post");
}
void parse_into(const std::string& key, const std::string& s, NnDenominator& out) {
  if (s == "include_targets" || s == "include") out = NnDenominator::kIncludeTargets;
  else if (s == "exclude_targets" || s == "exclude") out = NnDenominator::kExcludeTargets;
  else bad(key, s, "include_targets | exclude_targets");
}
void parse_into(const std::string& key, const std::string& s, std::array<std::size_t, 3>& out) {
  const auto parts = split(s, ',');
  if (parts.size() != 3) bad(key, s, "three comma-separated integers");
  for (int i = 0; i < 3; ++i) out[i] = parse_int<std::size_t>(key, parts[i]);
}
template <typename T>
void parse_into(const std::string& key, const std::string& s, std::vector<T>& out) {
  std::vector<T> v;
  for (const auto& p : split(s, ',')) {
    T x{};
    if constexpr (std::is_same_v<T, std::uint64_t>) x = parse_int<std::uint64_t>(key, p);
    else parse_into(key, p, x);
    v.push_back(x);
  }
  out = std::move(v);
}

// ---- field registry -------------------------------------------------------------

struct Field {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
};

template <typename Acc>
Field field(std::string key, Acc acc) {
  Field f;
  f.key = key;
  f.get = [acc](const ExperimentConfig& c) { return fmt(acc(const_cast<ExperimentConfig&>(c))); };
  f.set = [acc, key](ExperimentConfig& c, const std::string& v) { parse_into(key, v, acc(c)); };
  return f;
}

#define KM_FIELD(key, expr) field(key, [](ExperimentConfig& c) -> auto& { return expr; })

const std::vector<Field>& registry() {
  static const std::vector<Field> fields = {
      KM_FIELD("train.dataset", c.train.dataset),
      KM_FIELD("train.epochs", c.train.epochs),
      KM_FIELD("train.batch_size", c.train.batch_size),
      KM_FIELD("train.seed", c.train.seed),
      KM_FIELD("train.checkpoint_interval", c.train.checkpoint_interval),
      KM_FIELD("train.warmup_epochs", c.train.warmup_epochs),
      KM_FIELD("train.queue_update", c.train.queue_update),
      KM_FIELD("train.prefetch", c.train.prefetch),
      KM_FIELD("train.log_wall_time", c.train.log_wall_time),

      KM_FIELD("model.channels", c.train.encoder.channels),
      KM_FIELD("model.head_hidden", c.train.encoder.head_hidden),
      KM_FIELD("model.head_bias", c.train.encoder.head_bias),
      KM_FIELD("model.embed_dim", c.train.encoder.embed_dim),
      KM_FIELD("model.momentum", c.train.momentum),
      KM_FIELD("model.momentum_low", c.train.momentum_low),

      KM_FIELD("crop.large_scale_lo", c.train.large.scale_lo),
      KM_FIELD("crop.large_scale_hi", c.train.large.scale_hi),
      KM_FIELD("crop.large_side", c.train.large.out_side),
      KM_FIELD("crop.small_scale_lo", c.train.small.scale_lo),
      KM_FIELD("crop.small_scale_hi", c.train.small.scale_hi),
      KM_FIELD("crop.small_side", c.train.small.out_side),
      KM_FIELD("crop.ratio_lo", c.train.large.ratio_lo),
      KM_FIELD("crop.ratio_hi", c.train.large.ratio_hi),
      KM_FIELD("crop.n_small", c.train.n_small),
      KM_FIELD("crop.min_overlap", c.train.min_overlap),
      KM_FIELD("crop.iou_max", c.train.iou_max),

      KM_FIELD("aug.standard", c.train.standard_policy),
      KM_FIELD("aug.strong", c.train.strong_policy),
      KM_FIELD("aug.p_strong", c.train.p_strong),

      KM_FIELD("loss.tau", c.train.tau),
      KM_FIELD("loss.lambda", c.train.lambda),
      KM_FIELD("loss.k", c.train.k),
      KM_FIELD("loss.queue_size", c.train.queue_size),
      KM_FIELD("loss.nn_denominator", c.train.denominator),

      KM_FIELD("optim.lr", c.train.optim.base_lr),
      KM_FIELD("optim.momentum", c.train.optim.momentum),
      KM_FIELD("optim.weight_decay", c.train.optim.weight_decay),

      KM_FIELD("flags.multicrop", c.train.multicrop),
      KM_FIELD("flags.constraint", c.train.constraint),
      KM_FIELD("flags.lower_momentum", c.train.lower_momentum),
      KM_FIELD("flags.strong_aug", c.train.strong_aug),
      KM_FIELD("flags.nn", c.train.nn),

      KM_FIELD("gen.variant", c.gen.variant),
      KM_FIELD("gen.classes", c.gen.classes),
      KM_FIELD("gen.count", c.gen.count),
      KM_FIELD("gen.objects_min", c.gen.objects_min),
      KM_FIELD("gen.objects_max", c.gen.objects_max),
      KM_FIELD("gen.side", c.gen.side),
      KM_FIELD("gen.longtail", c.gen.longtail),
      KM_FIELD("gen.n_max", c.gen.longtail_spec.n_max),
      KM_FIELD("gen.n_min", c.gen.longtail_spec.n_min),
      KM_FIELD("gen.alpha", c.gen.longtail_spec.alpha),
      KM_FIELD("gen.sequences", c.gen.sequences),
      KM_FIELD("gen.frames", c.gen.frames),
      KM_FIELD("gen.speed_min", c.gen.speed_min),
      KM_FIELD("gen.speed_max", c.gen.speed_max),
      KM_FIELD("gen.jitter", c.gen.jitter),

      KM_FIELD("probe.dataset", c.probe.dataset),
      KM_FIELD("probe.side", c.probe.side),
      KM_FIELD("probe.epochs", c.probe.probe.epochs),
      KM_FIELD("probe.lr", c.probe.probe.lr),
      KM_FIELD("probe.weight_decay", c.probe.probe.weight_decay),
      KM_FIELD("probe.batch", c.probe.probe.batch),
      KM_FIELD("probe.train_fraction", c.probe.probe.train_fraction),

      KM_FIELD("retrieval.train", c.retrieval.train),
      KM_FIELD("retrieval.val", c.retrieval.val),
      KM_FIELD("retrieval.clusters", c.retrieval.retrieval.clusters),
      KM_FIELD("retrieval.iters", c.retrieval.retrieval.kmeans_iters),

      KM_FIELD("propagation.dataset", c.propagation.dataset),
      KM_FIELD("propagation.k_prop", c.propagation.propagation.k_prop),
      KM_FIELD("propagation.radius", c.propagation.propagation.radius),
      KM_FIELD("propagation.temperature", c.propagation.propagation.temperature),
      KM_FIELD("propagation.context", c.propagation.propagation.context),
      KM_FIELD("propagation.tolerance", c.propagation.tolerance),

      KM_FIELD("crop_stats.presets", c.crop_stats.presets),
      KM_FIELD("crop_stats.pairs", c.crop_stats.pairs),
      KM_FIELD("crop_stats.bins", c.crop_stats.bins),
      KM_FIELD("crop_stats.side", c.crop_stats.side),
      KM_FIELD("crop_stats.iou_grid", c.crop_stats.iou_grid),

      KM_FIELD("ablate.preset", c.ablate.preset),
      KM_FIELD("ablate.seeds", c.ablate.seeds),
      KM_FIELD("ablate.lambdas", c.ablate.lambdas),
      KM_FIELD("ablate.iou_grid", c.ablate.iou_grid),
  };
  return fields;
}

#undef KM_FIELD

const Field& find_field(const std::string& key) {
  for (const auto& f : registry())
    if (f.key == key) return f;
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError(what);
  };
  need(batch_size >= 1, "train.batch_size must be positive");
  need(queue_size >= batch_size, "loss.queue_size must be at least train.batch_size");
  need(tau > 0.0, "loss.tau must be positive");
  need(lambda >= 0.0, "loss.lambda must be nonnegative");
  need(k >= 1 && k <= queue_size, "loss.k must be in [1, queue_size]");
  need(momentum >= 0.0 && momentum <= 1.0, "model.momentum must be in [0, 1]");
  need(momentum_low >= 0.0 && momentum_low <= 1.0, "model.momentum_low must be in [0, 1]");
  need(iou_max >= 0.0 && iou_max <= 1.0, "crop.iou_max must be in [0, 1]");
  need(min_overlap >= 0.0 && min_overlap <= 1.0, "crop.min_overlap must be in [0, 1]");
  need(p_strong >= 0.0 && p_strong <= 1.0, "aug.p_strong must be in [0, 1]");
  need(optim.base_lr >= 0.0 && optim.momentum >= 0.0 && optim.weight_decay >= 0.0,
       "optim values must be nonnegative");
  large.validate();
  CropSpec s = small;
  s.ratio_lo = large.ratio_lo;
  s.ratio_hi = large.ratio_hi;
  s.validate();
  EncoderConfig e = encoder;
  e.large_side = large.out_side;
  e.small_side = small.out_side;
  e.validate();
  AugPolicy::parse(standard_policy).validate();
  AugPolicy::parse(strong_policy).validate();
}

void ExperimentConfig::set(const std::string& dotted_key, const std::string& value) {
  find_field(trim(dotted_key)).set(*this, trim(value));
}

std::string ExperimentConfig::get(const std::string& dotted_key) const { return find_field(dotted_key).get(*this); }

std::vector<std::string> ExperimentConfig::keys() const {
  std::vector<std::string> out;
  for (const auto& f : registry()) out.push_back(f.key);
  return out;
}

std::string ExperimentConfig::to_text() const {
  std::string out, section;
  for (const auto& f : registry()) {
    const auto dot = f.key.find('.');
    const std::string sec = f.key.substr(0, dot);
    if (sec != section) {
      out += (section.empty() ? "" : "\n") + std::string("[") + sec + "]\n";
      section = sec;
    }
    out += f.key.substr(dot + 1) + " = " + f.get(*this) + "\n";
  }
  return out;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  std::set<std::string> seen;
  for (std::size_t lineno = 1; std::getline(is, line); ++lineno) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.find('.') == std::string::npos) {
      if (section.empty()) throw ConfigError(where + "key '" + key + "' outside any [section]");
      key = section + "." + key;
    }
    if (!seen.insert(key).second) throw ConfigError(where + "duplicate key '" + key + "'");
    try {
      cfg.set(key, line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[i] = digits[v & 0xf];
  return s;
}

std::string config_hash(const ExperimentConfig& cfg) { return hex64(fnv1a64(cfg.to_text())); }

CropSpec crop_preset(const std::string& name, int out_side) {
  CropSpec s;
  s.out_side = out_side;
  if (name == "moco") s.scale_lo = 0.2;
  else if (name == "simclr" || name == "byol") s.scale_lo = 0.08;
  else if (name == "multicrop-small") {
    s.scale_lo = 0.05;
    s.scale_hi = 0.14;
  } else
    throw ConfigError("unknown crop preset '" + name + "' (moco | simclr | byol | multicrop-small)");
  return s;
}

}  // namespace kmoco
