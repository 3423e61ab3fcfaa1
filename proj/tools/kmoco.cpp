// kmoco: command-line driver for data generation, pretraining, evaluation
// and experiment grids. Every run writes config.txt and manifest.json into
// its --out directory next to the artifacts.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "kmoco/checkpoint.hpp"
#include "kmoco/config.hpp"
#include "kmoco/crop.hpp"
#include "kmoco/errors.hpp"
#include "kmoco/experiments.hpp"
#include "kmoco/metrics.hpp"
#include "kmoco/rng.hpp"
#include "kmoco/synth.hpp"
#include "kmoco/trainer.hpp"

namespace fs = std::filesystem;
using namespace kmoco;

namespace {

enum Exit : int {
  kOk = 0,
  kUsage = 1,
  kConfig = 2,
  kIo = 3,
  kFormat = 4,
  kNumeric = 5,
  kOther = 6,
  kInternal = 7,
};

struct Options {
  std::string config;
  std::string out = "run";
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;
  std::string checkpoint;
  std::vector<std::string> inputs;  // report
};

class Run {
 public:
  Run(std::string sub, const Options& o) : opt_(o) {
    cfg_ = o.config.empty() ? ExperimentConfig{} : ExperimentConfig::load(o.config);
    for (const auto& kv : o.sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t"), e = s.find_last_not_of(" \t");
        return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
      };
      cfg_.set(trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
    }
    if (o.seed) cfg_.train.seed = *o.seed;
    fs::create_directories(o.out);
    // Hash of the stored copy, fixed before any work starts.
    man_.subcommand = std::move(sub);
    man_.config_path = path("config.txt");
    write_text(man_.config_path, cfg_.to_text());
    man_.config_hash = config_hash(cfg_);
    man_.seed = cfg_.train.seed;
    man_.started = utc_now();
  }

  ExperimentConfig& cfg() { return cfg_; }
  const Options& opts() const { return opt_; }
  std::string path(const std::string& name) const { return (fs::path(opt_.out) / name).string(); }

  // Registers an artifact and returns its path.
  std::string artifact(const std::string& name) {
    const auto p = path(name);
    if (std::find(man_.artifacts.begin(), man_.artifacts.end(), p) == man_.artifacts.end()) man_.artifacts.push_back(p);
    return p;
  }

  void finish() {
    man_.finished = utc_now();
    man_.write(path("manifest.json"));
  }

 private:
  Options opt_;
  ExperimentConfig cfg_;
  RunManifest man_;
};

std::string num(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

SynthDataset load_set(const std::string& p, const char* key) {
  if (p.empty()) throw ConfigError(std::string(key) + " is not set");
  return read_dataset(p);
}

// Online backbone from a pretrain checkpoint.
ParamSet load_backbone(const std::string& ckpt, const TrainConfig& tc) {
  if (ckpt.empty()) throw ConfigError("--checkpoint is required");
  const TensorTable table = read_tensor_table(ckpt);
  Rng rng = derive_rng(tc.seed);
  EncoderPair enc(tc.encoder, tc.momentum, rng);
  enc.load(table);
  return enc.g();
}

// ---- subcommands ------------------------------------------------------------------

void cmd_gen_data(Run& run) {
  const GenConfig& g = run.cfg().gen;
  const std::uint64_t seed = run.cfg().train.seed;
  SynthDataset ds;
  if (g.variant == Variant::kVideo) {
    VideoSpec vs;
    vs.classes = g.classes;
    vs.sequences = g.sequences;
    vs.frames = g.frames;
    vs.seed = seed;
    vs.side = g.side;
    vs.objects_min = g.objects_min;
    vs.objects_max = g.objects_max;
    vs.speed_min = g.speed_min;
    vs.speed_max = g.speed_max;
    vs.jitter = g.jitter;
    ds = generate_video(vs);
  } else {
    GenerateSpec gs;
    gs.variant = g.variant;
    gs.classes = g.classes;
    gs.count = g.count;
    gs.seed = seed;
    gs.objects_min = g.objects_min;
    gs.objects_max = g.objects_max;
    gs.side = g.side;
    if (g.longtail) {
      if (g.variant != Variant::kObjectCentric) throw ConfigError("gen.longtail needs gen.variant = object");
      LongTailSpec lt = g.longtail_spec;
      lt.classes = g.classes;
      gs.per_class_counts = longtail_counts(lt);
    }
    ds = generate(gs);
  }
  write_dataset(run.artifact("dataset.kmds"), ds);
  std::cout << "wrote " << ds.size() << " images (" << variant_name(ds.variant) << ", " << ds.width << "x"
            << ds.height << ") to " << run.path("dataset.kmds") << "\n";
}

void cmd_pretrain(Run& run) {
  const TrainConfig& tc = run.cfg().train;
  const SynthDataset data = load_set(tc.dataset, "train.dataset");
  MetricsLog log(run.artifact("metrics.jsonl"));
  PretrainHooks hooks;
  hooks.on_step = [&](const StepMetrics& m) { log.append(step_event(m, tc.log_wall_time)); };
  hooks.on_epoch = [&](const EpochMetrics& m) {
    log.append(epoch_event(m));
    std::cout << "epoch " << m.epoch << " loss " << m.total << " (inst " << m.instance << ", nn " << m.nn << ")\n";
  };
  hooks.on_checkpoint = [&](const TensorTable& t, std::size_t epoch, bool final) {
    write_tensor_table(run.artifact(final ? "checkpoint.kmco" : "checkpoint-epoch" + std::to_string(epoch) + ".kmco"),
                       t);
  };
  hooks.on_abort = [&](const TensorTable& t) {
    write_tensor_table(run.artifact("abort.kmco"), t);
    run.finish();
  };
  const PretrainResult r = pretrain(tc, data, hooks);
  write_epoch_csv(run.artifact("epochs.csv"), r.epochs);

  const Provenance& p = r.provenance;
  nlohmann::ordered_json j;
  j["event"] = "provenance";
  j["small_emitted"] = p.small_emitted;
  j["small_violations"] = p.small_violations;
  j["small_momentum"] = p.small_momentum;
  j["queue_from_small"] = p.queue_from_small;
  j["queue_from_anchor"] = p.queue_from_anchor;
  log.append(j.dump());
}

void cmd_probe(Run& run) {
  const ExperimentConfig& c = run.cfg();
  const ParamSet g = load_backbone(run.opts().checkpoint, c.train);
  const SynthDataset set = load_set(c.probe.dataset, "probe.dataset");
  const ProbeResult r = probe_backbone(g, set, c.probe, c.train.seed);

  std::ostringstream os;
  os << "class,accuracy\n";
  for (std::size_t k = 0; k < r.per_class_accuracy.size(); ++k) os << k << ',' << num(r.per_class_accuracy[k]) << '\n';
  os << "all," << num(r.accuracy) << '\n';
  write_text(run.artifact("probe.csv"), os.str());

  MetricsLog log(run.artifact("metrics.jsonl"));
  nlohmann::ordered_json j;
  j["event"] = "probe";
  j["accuracy"] = r.accuracy;
  j["train_accuracy"] = r.train_accuracy;
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  log.append(j.dump());
  std::cout << "probe accuracy " << r.accuracy << " (train " << r.train_accuracy << ", " << r.n_test << " test images)\n";
}

void cmd_segment_retrieval(Run& run) {
  const ExperimentConfig& c = run.cfg();
  const ParamSet g = load_backbone(run.opts().checkpoint, c.train);
  const SynthDataset train = load_set(c.retrieval.train, "retrieval.train");
  const SynthDataset val = load_set(c.retrieval.val, "retrieval.val");
  RetrievalConfig rc = c.retrieval.retrieval;
  rc.seed = c.train.seed;
  const RetrievalResult r = retrieval_backbone(g, train, val, rc);

  std::ostringstream os;
  os << "class,iou\n";
  for (std::size_t k = 0; k < r.per_class_iou.size(); ++k)
    if (!std::isnan(r.per_class_iou[k])) os << k << ',' << num(r.per_class_iou[k]) << '\n';
  os << "mean," << num(r.miou) << '\n';
  write_text(run.artifact("retrieval.csv"), os.str());

  MetricsLog log(run.artifact("metrics.jsonl"));
  nlohmann::ordered_json j;
  j["event"] = "segment_retrieval";
  j["miou"] = r.miou;
  j["train_regions"] = r.train_regions;
  j["val_regions"] = r.val_regions;
  log.append(j.dump());
  std::cout << "segment retrieval mIoU " << r.miou << "\n";
}

void cmd_propagate(Run& run) {
  const ExperimentConfig& c = run.cfg();
  const ParamSet g = load_backbone(run.opts().checkpoint, c.train);
  const SynthDataset video = load_set(c.propagation.dataset, "propagation.dataset");
  const auto scores = propagation_backbone(g, video, c.propagation);

  std::ostringstream os;
  os << "sequence,frames,objects,J,F\n";
  double J = 0, F = 0;
  for (const auto& s : scores) {
    os << s.sequence << ',' << s.frames << ',' << s.objects << ',' << num(s.J) << ',' << num(s.F) << '\n';
    J += s.J;
    F += s.F;
  }
  J /= static_cast<double>(scores.size());
  F /= static_cast<double>(scores.size());
  os << "mean,,," << num(J) << ',' << num(F) << '\n';
  write_text(run.artifact("propagation.csv"), os.str());

  MetricsLog log(run.artifact("metrics.jsonl"));
  nlohmann::ordered_json j;
  j["event"] = "propagate";
  j["J"] = J;
  j["F"] = F;
  j["J&F"] = (J + F) / 2;
  j["sequences"] = scores.size();
  log.append(j.dump());
  std::cout << "propagation J " << J << " F " << F << "\n";
}

std::size_t worker_count() {
  if (const char* env = std::getenv("KMCO_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end || v < 1) throw ConfigError(std::string("KMCO_THREADS must be a positive integer, got '") + env + "'");
    return static_cast<std::size_t>(v);
  }
  return 1;
}

std::vector<CellResult> grid_run(Run& run, const std::vector<GridCell>& cells) {
  const ExperimentConfig& c = run.cfg();
  const SynthDataset train = load_set(c.train.dataset, "train.dataset");
  const SynthDataset probe = load_set(c.probe.dataset, "probe.dataset");
  std::cout << cells.size() << " cells x " << c.ablate.seeds.size() << " seeds\n";
  return run_grid(cells, c.ablate.seeds, train, probe, c.probe, worker_count());
}

void cmd_crop_stats(Run& run) {
  const CropStatsSettings& s = run.cfg().crop_stats;
  std::ostringstream summary;
  summary << "preset,scale_lo,scale_hi,pairs,below_0.1,exact_zero\n";
  for (const auto& name : s.presets) {
    const CropSpec spec = crop_preset(name, s.side);
    Rng rng = derive_rng(run.cfg().train.seed, {fnv1a64(name)});
    const IouHistogram h = crop_iou_histogram(rng, s.side, s.side, spec, s.pairs, s.bins);
    std::ostringstream os;
    os << "bin_left,bin_right,count\n";
    for (std::size_t b = 0; b < h.counts.size(); ++b)
      os << num(h.edges[b]) << ',' << num(h.edges[b + 1]) << ',' << h.counts[b] << '\n';
    write_text(run.artifact("crop_iou_" + name + ".csv"), os.str());
    summary << name << ',' << num(spec.scale_lo) << ',' << num(spec.scale_hi) << ',' << h.pairs << ',' << h.below_01
            << ',' << h.exact_zero << '\n';
    std::cout << name << ": " << h.below_01 << "/" << h.pairs << " pairs below IoU 0.1, " << h.exact_zero
              << " disjoint\n";
  }
  write_text(run.artifact("crop_stats.csv"), summary.str());

  if (!s.iou_grid.empty()) {
    const auto rows = grid_run(run, iou_grid(run.cfg().train, s.iou_grid));
    write_text(run.artifact("iou_sweep_runs.csv"), grid_csv(rows));
    write_text(run.artifact("iou_sweep.csv"), summary_csv(summarize(rows)));
  }
}

void cmd_ablate(Run& run) {
  const auto cells = ablation_grid(run.cfg());
  const auto rows = grid_run(run, cells);
  const auto sums = summarize(rows);
  write_text(run.artifact("ablate_runs.csv"), grid_csv(rows));
  write_text(run.artifact("ablate.csv"), summary_csv(sums));
  std::ostringstream os;
  os << std::left << std::setw(24) << "cell" << std::right << std::setw(12) << "final loss" << std::setw(12)
     << "probe acc" << '\n';
  os << std::fixed;
  for (const auto& s : sums)
    os << std::left << std::setw(24) << s.name << std::right << std::setw(12) << std::setprecision(4) << s.mean_loss
       << std::setw(12) << std::setprecision(4) << s.mean_accuracy << '\n';
  write_text(run.artifact("ablate.txt"), os.str());
  std::cout << os.str();
}

// Summary of metrics.jsonl files (or run directories holding one). The
// output depends only on the inputs.
void cmd_report(Run& run) {
  const auto& in = run.opts().inputs;
  if (in.empty()) throw ConfigError("report needs at least one metrics file or run directory");
  std::ostringstream csv, txt;
  csv << "source,event,key,value\n";
  for (const auto& raw : in) {
    const fs::path p = fs::is_directory(raw) ? fs::path(raw) / "metrics.jsonl" : fs::path(raw);
    const std::string text = read_text(p.string());
    std::istringstream lines(text);
    std::string line;
    std::size_t n_steps = 0, n_lines = 0;
    nlohmann::json last_epoch, first_epoch;
    std::vector<nlohmann::json> evals;
    while (std::getline(lines, line)) {
      if (line.empty()) continue;
      ++n_lines;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(p.string() + ":" + std::to_string(n_lines) + ": not a JSON object");
      }
      const std::string ev = j.value("event", "");
      if (ev == "step") {
        ++n_steps;
      } else if (ev == "epoch") {
        if (first_epoch.is_null()) first_epoch = j;
        last_epoch = j;
      } else {
        evals.push_back(j);
      }
    }
    txt << p.string() << "\n";
    if (n_steps) txt << "  steps: " << n_steps << "\n";
    if (!last_epoch.is_null()) {
      txt << "  loss: epoch " << first_epoch["epoch"] << " " << num(first_epoch["total"].get<double>()) << " -> epoch "
          << last_epoch["epoch"] << " " << num(last_epoch["total"].get<double>()) << "\n";
      csv << p.string() << ",epoch,final_total," << num(last_epoch["total"].get<double>()) << '\n';
      csv << p.string() << ",epoch,epochs," << last_epoch["epoch"].get<std::size_t>() + 1 << '\n';
    }
    for (const auto& e : evals) {
      const std::string ev = e.value("event", "");
      txt << "  " << ev << ":";
      for (const auto& [k, v] : e.items()) {
        if (k == "event") continue;
        const std::string val = v.is_number_float() ? num(v.get<double>()) : v.dump();
        txt << " " << k << "=" << val;
        csv << p.string() << ',' << ev << ',' << k << ',' << val << '\n';
      }
      txt << "\n";
    }
  }
  write_text(run.artifact("report.txt"), txt.str());
  write_text(run.artifact("report.csv"), csv.str());
  std::cout << txt.str();
}

int fail(int code, const std::string& kind, const std::exception& e) {
  std::cerr << "kmoco: " << kind << ": " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kmoco: nearest-neighbour MoCo on synthetic data"};
  app.require_subcommand(1);
  Options opt;

  using Handler = void (*)(Run&);
  const std::vector<std::tuple<std::string, std::string, Handler>> subs = {
      {"gen-data", "write a synthetic dataset", cmd_gen_data},
      {"pretrain", "self-supervised pretraining; writes checkpoint and metrics", cmd_pretrain},
      {"probe", "linear probe of a checkpoint's frozen backbone", cmd_probe},
      {"segment-retrieval", "unsupervised segment retrieval mIoU of a checkpoint", cmd_segment_retrieval},
      {"propagate", "video label propagation J/F of a checkpoint", cmd_propagate},
      {"crop-stats", "IoU histograms of crop pairs, optional iou_max sweep", cmd_crop_stats},
      {"ablate", "config grid (table4 | lambda | iou) over shared seeds", cmd_ablate},
      {"report", "summarize metrics files", cmd_report},
  };
  std::map<CLI::App*, Handler> handlers;
  for (const auto& [name, desc, fn] : subs) {
    auto* sc = app.add_subcommand(name, desc);
    sc->add_option("--config", opt.config, "experiment config file");
    sc->add_option("--out", opt.out, "output directory")->capture_default_str();
    sc->add_option("--seed", opt.seed, "overrides train.seed");
    sc->add_option("--set", opt.sets, "key=value override, applied after the file")->take_all()->allow_extra_args(false);
    if (name == "probe" || name == "segment-retrieval" || name == "propagate")
      sc->add_option("--checkpoint", opt.checkpoint, "pretrain checkpoint")->required();
    if (name == "report") sc->add_option("inputs", opt.inputs, "metrics.jsonl files or run directories")->required();
    handlers[sc] = fn;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    for (auto& [sc, fn] : handlers) {
      if (!sc->parsed()) continue;
      Run run(sc->get_name(), opt);
      fn(run);
      run.finish();
    }
    return kOk;
  } catch (const ConfigError& e) {
    return fail(kConfig, "config error", e);
  } catch (const IoError& e) {
    return fail(kIo, "io error", e);
  } catch (const FormatError& e) {
    return fail(kFormat, "format error", e);
  } catch (const NumericError& e) {
    return fail(kNumeric, "numeric error", e);
  } catch (const Error& e) {
    return fail(kOther, "error", e);
  } catch (const fs::filesystem_error& e) {
    return fail(kIo, "io error", e);
  } catch (const std::exception& e) {
    return fail(kInternal, "internal error", e);
  }
}
