#include "pointssm/checkpoint.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "pointssm/common.hpp"

namespace pointssm {

namespace {

constexpr const char* kMagic = "pointssm-checkpoint";
constexpr int kVersion = 1;

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void append_f32_le(std::string& out, float f) {
  uint32_t bits;
  std::memcpy(&bits, &f, 4);
  out.push_back(char(bits & 0xff));
  out.push_back(char((bits >> 8) & 0xff));
  out.push_back(char((bits >> 16) & 0xff));
  out.push_back(char((bits >> 24) & 0xff));
}

float read_f32_le(const unsigned char* p) {
  uint32_t bits = uint32_t(p[0]) | (uint32_t(p[1]) << 8) |
                  (uint32_t(p[2]) << 16) | (uint32_t(p[3]) << 24);
  float f;
  std::memcpy(&f, &bits, 4);
  return f;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return &t;
  return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
  std::ostringstream head;
  head << kMagic << ' ' << ckpt.version << '\n';
  for (const auto& [k, v] : ckpt.config) head << "config " << k << ' ' << v << '\n';
  for (const auto& [k, v] : ckpt.seeds) head << "seed " << k << ' ' << v << '\n';
  std::string payload;
  for (const auto& [name, t] : ckpt.tensors) {
    head << "tensor " << name << ' ' << t.ndim();
    for (int64_t d = 0; d < t.ndim(); ++d) head << ' ' << t.dim(d);
    head << '\n';
    for (int64_t i = 0; i < t.numel(); ++i)
      append_f32_le(payload, float(t.data()[i]));
  }
  head << "payload " << payload.size() << '\n';

  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  std::string h = head.str();
  out.write(h.data(), std::streamsize(h.size()));
  out.write(payload.data(), std::streamsize(payload.size()));
  if (!out) throw DataError("short write while saving checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read checkpoint: " + path);
  std::string all((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());

  Checkpoint ckpt;
  size_t pos = 0;
  struct PendingTensor {
    std::string name;
    std::vector<int64_t> shape;
  };
  std::vector<PendingTensor> pending;
  int64_t declared_payload = -1;
  bool saw_magic = false;

  while (pos < all.size()) {
    size_t eol = all.find('\n', pos);
    if (eol == std::string::npos)
      throw DataError("checkpoint manifest ended before payload line");
    std::string line = all.substr(pos, eol - pos);
    pos = eol + 1;
    std::istringstream ss(line);
    std::string word;
    ss >> word;
    if (!saw_magic) {
      if (word != kMagic) throw DataError("not a checkpoint file: bad magic");
      int v = -1;
      ss >> v;
      if (v != kVersion)
        throw DataError("unsupported checkpoint version: " +
                        std::to_string(v));
      ckpt.version = v;
      saw_magic = true;
      continue;
    }
    if (word == "config") {
      std::string key;
      ss >> key;
      std::string value;
      std::getline(ss, value);
      if (!value.empty() && value.front() == ' ') value.erase(0, 1);
      ckpt.config[key] = value;
    } else if (word == "seed") {
      std::string key;
      uint64_t v = 0;
      ss >> key >> v;
      ckpt.seeds[key] = v;
    } else if (word == "tensor") {
      PendingTensor t;
      int64_t ndim = 0;
      ss >> t.name >> ndim;
      if (t.name.empty() || ndim < 0 || ndim > 8)
        throw DataError("malformed tensor line: " + line);
      for (int64_t d = 0; d < ndim; ++d) {
        int64_t v = -1;
        ss >> v;
        if (v < 0) throw DataError("malformed tensor shape: " + line);
        t.shape.push_back(v);
      }
      for (const PendingTensor& prev : pending)
        if (prev.name == t.name)
          throw DataError("duplicate tensor name: " + t.name);
      pending.push_back(std::move(t));
    } else if (word == "payload") {
      ss >> declared_payload;
      if (declared_payload < 0)
        throw DataError("malformed payload line: " + line);
      break;
    } else {
      throw DataError("unknown manifest line: " + line);
    }
  }
  if (declared_payload < 0)
    throw DataError("checkpoint manifest lacks a payload line");

  int64_t expected = 0;
  for (const PendingTensor& t : pending) {
    int64_t n = 1;
    for (int64_t d : t.shape) n *= d;
    expected += n * 4;
  }
  if (expected != declared_payload)
    throw DataError("manifest shapes disagree with declared payload length");
  if (all.size() - pos != size_t(declared_payload))
    throw DataError("truncated or oversized checkpoint payload");

  const unsigned char* p =
      reinterpret_cast<const unsigned char*>(all.data()) + pos;
  for (const PendingTensor& t : pending) {
    int64_t n = 1;
    for (int64_t d : t.shape) n *= d;
    std::vector<double> values(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i, p += 4)
      values[size_t(i)] = double(read_f32_le(p));
    ckpt.tensors.emplace_back(
        t.name, Tensor::from_vector(t.shape, std::move(values)));
  }
  return ckpt;
}

std::map<std::string, std::string> config_to_kv(const ModelConfig& cfg,
                                                ModelMode mode) {
  std::map<std::string, std::string> kv;
  kv["mode"] = mode == ModelMode::pretrain ? "pretrain" : "classify";
  kv["num_points"] = std::to_string(cfg.num_points);
  kv["num_patches"] = std::to_string(cfg.num_patches);
  kv["patch_size"] = std::to_string(cfg.patch_size);
  kv["embed_dim"] = std::to_string(cfg.embed_dim);
  kv["encoder_layers"] = std::to_string(cfg.encoder_layers);
  kv["decoder_layers"] = std::to_string(cfg.decoder_layers);
  kv["mask_ratio"] = format_double(cfg.mask_ratio);
  std::string curves;
  for (const CurveSpec& c : cfg.curves) {
    if (!curves.empty()) curves += ',';
    curves += curve_to_string(c);
  }
  kv["curves"] = curves;
  kv["grid_bits"] = std::to_string(cfg.grid_bits);
  kv["num_classes"] = std::to_string(cfg.num_classes);
  kv["block_kind"] = block_kind_to_string(cfg.block_kind);
  kv["pooling"] = pooling_to_string(cfg.pooling);
  kv["state_dim"] = std::to_string(cfg.state_dim);
  kv["conv_kernel"] = std::to_string(cfg.conv_kernel);
  kv["expand"] = std::to_string(cfg.expand);
  return kv;
}

ModelConfig config_from_kv(const std::map<std::string, std::string>& kv,
                           ModelMode* mode_out) {
  ModelConfig cfg;
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end())
      throw DataError(std::string("checkpoint config lacks key: ") + key);
    return it->second;
  };
  cfg.num_points = std::stoll(get("num_points"));
  cfg.num_patches = std::stoll(get("num_patches"));
  cfg.patch_size = std::stoll(get("patch_size"));
  cfg.embed_dim = std::stoll(get("embed_dim"));
  cfg.encoder_layers = std::stoll(get("encoder_layers"));
  cfg.decoder_layers = std::stoll(get("decoder_layers"));
  cfg.mask_ratio = std::stod(get("mask_ratio"));
  cfg.curves.clear();
  std::istringstream curves(get("curves"));
  std::string item;
  while (std::getline(curves, item, ','))
    if (!item.empty()) cfg.curves.push_back(curve_from_string(item));
  cfg.grid_bits = int(std::stoi(get("grid_bits")));
  cfg.num_classes = std::stoll(get("num_classes"));
  cfg.block_kind = block_kind_from_string(get("block_kind"));
  cfg.pooling = pooling_from_string(get("pooling"));
  cfg.state_dim = std::stoll(get("state_dim"));
  cfg.conv_kernel = std::stoll(get("conv_kernel"));
  cfg.expand = std::stoll(get("expand"));
  if (mode_out)
    *mode_out = get("mode") == std::string("pretrain") ? ModelMode::pretrain
                                                       : ModelMode::classify;
  return cfg;
}

Checkpoint checkpoint_from_model(Model& m,
                                 const std::map<std::string, uint64_t>& seeds) {
  Checkpoint ckpt;
  ckpt.config = config_to_kv(m.config, m.mode);
  ckpt.seeds = seeds;
  for (const NamedParam& p : named_parameters(m))
    ckpt.tensors.emplace_back(p.name, p.tensor);
  return ckpt;
}

namespace {

void copy_values(const Tensor& src, Tensor& dst, const std::string& name) {
  if (src.shape() != dst.shape()) {
    std::ostringstream msg;
    msg << "shape mismatch for tensor " << name << ": checkpoint [";
    for (int64_t d = 0; d < src.ndim(); ++d)
      msg << (d ? "," : "") << src.dim(d);
    msg << "] vs model [";
    for (int64_t d = 0; d < dst.ndim(); ++d)
      msg << (d ? "," : "") << dst.dim(d);
    msg << "]";
    throw DataError(msg.str());
  }
  for (int64_t i = 0; i < src.numel(); ++i) dst.data()[i] = src.data()[i];
}

}  // namespace

void load_into_model(const Checkpoint& ckpt, Model& m) {
  std::vector<NamedParam> params = named_parameters(m);
  std::vector<bool> used(ckpt.tensors.size(), false);
  for (NamedParam& p : params) {
    bool found = false;
    for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
      if (ckpt.tensors[i].first == p.name) {
        copy_values(ckpt.tensors[i].second, p.tensor, p.name);
        used[i] = true;
        found = true;
        break;
      }
    }
    if (!found)
      throw DataError("checkpoint lacks tensor required by model: " + p.name);
  }
  for (size_t i = 0; i < used.size(); ++i)
    if (!used[i])
      throw DataError("checkpoint tensor unknown to model: " +
                      ckpt.tensors[i].first);
}

TransferReport transfer_into_model(const Checkpoint& ckpt, Model& m) {
  TransferReport report;
  std::vector<NamedParam> params = named_parameters(m);
  std::vector<bool> used(ckpt.tensors.size(), false);
  for (NamedParam& p : params) {
    bool found = false;
    for (size_t i = 0; i < ckpt.tensors.size(); ++i) {
      if (ckpt.tensors[i].first == p.name) {
        copy_values(ckpt.tensors[i].second, p.tensor, p.name);
        used[i] = true;
        found = true;
        break;
      }
    }
    if (found)
      report.loaded.push_back(p.name);
    else
      report.fresh.push_back(p.name);
  }
  for (size_t i = 0; i < used.size(); ++i)
    if (!used[i]) report.dropped.push_back(ckpt.tensors[i].first);
  return report;
}

}  // namespace pointssm
