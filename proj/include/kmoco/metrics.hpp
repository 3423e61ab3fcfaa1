#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "kmoco/trainer.hpp"

namespace kmoco {

// Append-only JSON-lines log: one object per step or evaluation event.
class MetricsLog {
 public:
  MetricsLog() = default;
  explicit MetricsLog(const std::string& path);  // truncates; IoError if unwritable

  // `json_object` must be a single-line JSON object.
  void append(const std::string& json_object);
  const std::string& path() const { return path_; }
  explicit operator bool() const { return out_.is_open(); }

 private:
  std::string path_;
  std::ofstream out_;
};

std::string step_event(const StepMetrics& m, bool with_wall_time);
std::string epoch_event(const EpochMetrics& m);
void write_epoch_csv(const std::string& path, const std::vector<EpochMetrics>& epochs);

// Per-run record of what was run and what was written.
struct RunManifest {
  std::string subcommand;
  std::string config_path;  // copy stored in the run directory
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string started, finished;  // UTC, ISO 8601
  std::vector<std::string> artifacts;

  void write(const std::string& path) const;
};

std::string utc_now();

// Writes `text` to `path`, replacing it (IoError on failure).
void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace kmoco
