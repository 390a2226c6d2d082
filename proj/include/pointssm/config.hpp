#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointssm/model.hpp"
#include "pointssm/train.hpp"

// Experiment configuration: a flat `key = value` file with [model], [data],
// [train], and [bench] sections, plus dotted command-line overrides. Every
// effective value can be echoed back, and the canonical echo is hashed into
// the reproducibility manifest.
namespace pointssm {

// Synthetic dataset knobs shared by the experiment commands.
struct DataSettings {
  int64_t train_per_class = 64;
  int64_t test_per_class = 32;
  double noise_sigma = 0.02;
  uint64_t seed = 0;
};

struct BenchSettings {
  std::vector<int64_t> lengths = {1024, 2048, 4096, 8192};
  std::string block = "both";  // selective_ssm | masked_attention | both
  int64_t repeat = 5;
  int64_t channels = 32;
};

struct RunConfig {
  ModelConfig model = ModelConfig::desk_profile();
  DataSettings data;
  TrainConfig train;
  BenchSettings bench;

  // Throws ConfigError listing every violation across all sections.
  void validate() const;
};

// Parses `key = value` lines under [section] headers; `#` and `;` start
// comments. Unknown sections or keys, malformed lines, and unparsable values
// are collected and reported together in one ConfigError naming each item.
void apply_config_text(RunConfig& cfg, const std::string& text,
                       const std::string& origin);
void apply_config_file(RunConfig& cfg, const std::string& path);

// One dotted override, e.g. apply_override(cfg, "train.epochs", "12").
void apply_override(RunConfig& cfg, const std::string& dotted_key,
                    const std::string& value);

// Canonical listing: one `section.key = value` line per effective value in a
// fixed order. This is both the run-log echo and the hash input.
std::string echo_config(const RunConfig& cfg);

// FNV-1a (64-bit) over the canonical listing, rendered as 16 hex digits.
std::string config_hash(const RunConfig& cfg);

}  // namespace pointssm
