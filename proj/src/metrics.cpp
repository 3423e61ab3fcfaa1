#include "kmoco/metrics.hpp"

#include <ctime>
#include <sstream>

#include <json.hpp>

#include "kmoco/errors.hpp"

namespace kmoco {

using nlohmann::ordered_json;

MetricsLog::MetricsLog(const std::string& path) : path_(path), out_(path, std::ios::trunc) {
  if (!out_) throw IoError("cannot write metrics file " + path);
}

void MetricsLog::append(const std::string& json_object) {
  out_ << json_object << '\n';
  out_.flush();
  if (!out_) throw IoError("write failed for " + path_);
}

std::string step_event(const StepMetrics& m, bool with_wall_time) {
  ordered_json j;
  j["event"] = "step";
  j["epoch"] = m.epoch;
  j["step"] = m.step;
  j["lr"] = m.lr;
  j["inst"] = m.instance;
  j["nn"] = m.nn;
  j["total"] = m.total;
  j["nn_active"] = m.nn_active;
  if (with_wall_time) j["wall_ms"] = m.wall_ms;
  return j.dump();
}

std::string epoch_event(const EpochMetrics& m) {
  ordered_json j;
  j["event"] = "epoch";
  j["epoch"] = m.epoch;
  j["steps"] = m.steps;
  j["inst"] = m.instance;
  j["nn"] = m.nn;
  j["total"] = m.total;
  j["lr"] = m.lr_end;
  return j.dump();
}

void write_epoch_csv(const std::string& path, const std::vector<EpochMetrics>& epochs) {
  std::ostringstream os;
  os.precision(17);
  os << "epoch,steps,inst,nn,total,lr\n";
  for (const auto& e : epochs)
    os << e.epoch << ',' << e.steps << ',' << e.instance << ',' << e.nn << ',' << e.total << ',' << e.lr_end << '\n';
  write_text(path, os.str());
}

void RunManifest::write(const std::string& path) const {
  ordered_json j;
  j["subcommand"] = subcommand;
  j["config"] = config_path;
  j["config_hash"] = config_hash;
  j["seed"] = seed;
  j["started"] = started;
  j["finished"] = finished;
  j["artifacts"] = artifacts;
  write_text(path, j.dump(2) + "\n");
}

std::string utc_now() {
  const std::time_t t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace kmoco
