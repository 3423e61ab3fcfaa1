#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <sys/wait.h>

#include "kmoco/checkpoint.hpp"
#include "kmoco/config.hpp"
#include "kmoco/trainer.hpp"

using namespace kmoco;
namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::current_path() / "cli_scratch";

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

int run(const std::string& args) {
  const std::string cmd = std::string(KMOCO_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

// A network and data small enough that every subcommand finishes in seconds.
const char* kTinyConfig = R"([train]
epochs = 2
batch_size = 4
warmup_epochs = 1
prefetch = false
[model]
channels = 4,6,8
head_hidden = 8
embed_dim = 6
[crop]
large_side = 16
small_side = 8
[loss]
queue_size = 16
k = 3
[gen]
classes = 4
count = 16
side = 32
objects_min = 1
objects_max = 2
sequences = 2
frames = 3
[probe]
side = 16
epochs = 5
[retrieval]
clusters = 4
[crop_stats]
pairs = 500
bins = 10
[ablate]
seeds = 0
)";

struct Fixture {
  fs::path cfg, obj, scene, video;
  Fixture() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    cfg = kRoot / "tiny.cfg";
    std::ofstream(cfg) << kTinyConfig;
    const std::string c = "--config " + cfg.string();
    REQUIRE(run("gen-data " + c + " --out " + (kRoot / "obj").string() + " --set gen.variant=object") == 0);
    REQUIRE(run("gen-data " + c + " --out " + (kRoot / "scene").string() + " --set gen.variant=scene") == 0);
    REQUIRE(run("gen-data " + c + " --out " + (kRoot / "video").string() + " --set gen.variant=video") == 0);
    obj = kRoot / "obj" / "dataset.kmds";
    scene = kRoot / "scene" / "dataset.kmds";
    video = kRoot / "video" / "dataset.kmds";
  }
  std::string base() const {
    return "--config " + cfg.string() + " --set train.dataset=" + scene.string() + " --set probe.dataset=" +
           obj.string() + " --set retrieval.train=" + scene.string() + " --set retrieval.val=" + scene.string() +
           " --set propagation.dataset=" + video.string();
  }
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

}  // namespace

TEST_CASE("exit codes: usage, config, I/O and format errors are distinct") {
  const auto& f = fixture();
  const std::string out = " --out " + (kRoot / "err").string();
  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("pretrain " + f.base() + out + " --set loss.temperature=0.2") == 2);
  CHECK(run("pretrain " + f.base() + out + " --set loss.tau=-1") == 2);
  CHECK(run("pretrain --config /nonexistent.cfg" + out) == 3);
  CHECK(run("probe " + f.base() + out + " --checkpoint /nonexistent.kmco") == 3);
  // a checkpoint with a future version number
  const fs::path bad = kRoot / "future.kmco";
  {
    std::ofstream os(bad, std::ios::binary);
    const std::uint32_t v = 99, n = 0;
    os.write("KMCO", 4);
    os.write(reinterpret_cast<const char*>(&v), 4);
    os.write(reinterpret_cast<const char*>(&n), 4);
  }
  CHECK(run("probe " + f.base() + out + " --checkpoint " + bad.string()) == 4);
}

TEST_CASE("pretrain with epochs=0 writes the initial state; manifest hash matches config.txt") {
  const auto& f = fixture();
  const fs::path out = kRoot / "init";
  REQUIRE(run("pretrain " + f.base() + " --out " + out.string() + " --set train.epochs=0") == 0);
  const ExperimentConfig stored = ExperimentConfig::load((out / "config.txt").string());
  const SynthDataset ds = read_dataset(f.scene.string());
  const Trainer init(stored.train, ds);
  const TensorTable ck = read_tensor_table((out / "checkpoint.kmco").string());
  const TensorTable want = init.snapshot(0);
  REQUIRE(ck.tensors.size() == want.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    CHECK(ck.tensors[i].first == want.tensors[i].first);
    CHECK(ck.tensors[i].second == want.tensors[i].second);
  }

  const auto man = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(man["config_hash"].get<std::string>() == config_hash(stored));
  CHECK(man["subcommand"].get<std::string>() == "pretrain");
  CHECK(man["artifacts"].size() >= 2);
}

TEST_CASE("pretrain is bit-reproducible and the scoring subcommands consume its checkpoint") {
  const auto& f = fixture();
  const fs::path a = kRoot / "run_a", b = kRoot / "run_b";
  REQUIRE(run("pretrain " + f.base() + " --out " + a.string() + " --seed 3") == 0);
  REQUIRE(run("pretrain " + f.base() + " --out " + b.string() + " --seed 3") == 0);
  CHECK(slurp(a / "checkpoint.kmco") == slurp(b / "checkpoint.kmco"));
  CHECK(slurp(a / "metrics.jsonl") == slurp(b / "metrics.jsonl"));
  CHECK(fs::exists(a / "epochs.csv"));

  const std::string ck = " --checkpoint " + (a / "checkpoint.kmco").string();
  REQUIRE(run("probe " + f.base() + " --out " + (a / "probe").string() + ck) == 0);
  CHECK(fs::exists(a / "probe" / "probe.csv"));
  REQUIRE(run("segment-retrieval " + f.base() + " --out " + (a / "seg").string() + ck) == 0);
  CHECK(fs::exists(a / "seg" / "retrieval.csv"));
  REQUIRE(run("propagate " + f.base() + " --out " + (a / "prop").string() + ck) == 0);
  const std::string prop = slurp(a / "prop" / "propagation.csv");
  CHECK(prop.rfind("sequence,frames,objects,J,F", 0) == 0);

  // report: same inputs, same bytes
  const std::string in = " " + a.string() + " " + (a / "probe").string();
  REQUIRE(run("report --out " + (kRoot / "rep1").string() + in) == 0);
  REQUIRE(run("report --out " + (kRoot / "rep2").string() + in) == 0);
  const std::string r1 = slurp(kRoot / "rep1" / "report.txt");
  CHECK_FALSE(r1.empty());
  CHECK(r1 == slurp(kRoot / "rep2" / "report.txt"));
  CHECK(slurp(kRoot / "rep1" / "report.csv") == slurp(kRoot / "rep2" / "report.csv"));
  CHECK(run("report --out " + (kRoot / "rep3").string() + " " + (kRoot / "missing").string()) == 3);
}

TEST_CASE("crop-stats writes one histogram per preset") {
  const auto& f = fixture();
  const fs::path out = kRoot / "crops";
  REQUIRE(run("crop-stats " + f.base() + " --out " + out.string()) == 0);
  for (const char* name : {"moco", "simclr"}) {
    const std::string h = slurp(out / (std::string("crop_iou_") + name + ".csv"));
    CHECK(h.rfind("bin_left,bin_right,count", 0) == 0);
    CHECK(std::count(h.begin(), h.end(), '\n') == 11);
  }
  CHECK(fs::exists(out / "crop_stats.csv"));
  CHECK_FALSE(fs::exists(out / "iou_sweep.csv"));
}

TEST_CASE("ablate runs the five table4 cells") {
  const auto& f = fixture();
  const fs::path out = kRoot / "ablate";
  REQUIRE(run("ablate " + f.base() + " --out " + out.string()) == 0);
  const std::string s = slurp(out / "ablate.csv");
  CHECK(std::count(s.begin(), s.end(), '\n') == 6);
  CHECK(s.find("+MC+CC+A+ +NN") != std::string::npos);
  CHECK(fs::exists(out / "ablate.txt"));
}
