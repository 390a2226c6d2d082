#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "pointssm/model.hpp"
#include "pointssm/tensor.hpp"

// Versioned model container: a text manifest (format version, flat config
// snapshot, seeds, tensor table) followed by a little-endian 32-bit float
// payload. Round trips byte-identically.
namespace pointssm {

struct Checkpoint {
  int version = 1;
  std::map<std::string, std::string> config;
  std::map<std::string, uint64_t> seeds;
  std::vector<std::pair<std::string, Tensor>> tensors;  // manifest order

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Flat key-value snapshot of a model config (and back).
std::map<std::string, std::string> config_to_kv(const ModelConfig& cfg,
                                                ModelMode mode);
ModelConfig config_from_kv(const std::map<std::string, std::string>& kv,
                           ModelMode* mode_out = nullptr);

Checkpoint checkpoint_from_model(Model& m,
                                 const std::map<std::string, uint64_t>& seeds);

// Strict: every model tensor must be present with a matching shape and no
// checkpoint tensor may be left over. Values are copied into the model.
void load_into_model(const Checkpoint& ckpt, Model& m);

// Name-matching transfer for fine-tuning: copies tensors that exist in both
// with equal shapes, reports checkpoint-only names as dropped and model-only
// names as fresh. Shape conflicts on shared names are errors.
struct TransferReport {
  std::vector<std::string> loaded;
  std::vector<std::string> dropped;
  std::vector<std::string> fresh;
};
TransferReport transfer_into_model(const Checkpoint& ckpt, Model& m);

}  // namespace pointssm
