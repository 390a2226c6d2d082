#include "pointssm/config.hpp"

#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "pointssm/common.hpp"

namespace pointssm {

namespace {

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

int64_t parse_int(const std::string& text) {
  size_t used = 0;
  long long v = std::stoll(text, &used);
  if (used != text.size()) throw std::invalid_argument("trailing characters");
  return v;
}

uint64_t parse_uint(const std::string& text) {
  size_t used = 0;
  unsigned long long v = std::stoull(text, &used);
  if (used != text.size() || text.find('-') != std::string::npos)
    throw std::invalid_argument("not a non-negative integer");
  return v;
}

double parse_real(const std::string& text) {
  size_t used = 0;
  double v = std::stod(text, &used);
  if (used != text.size()) throw std::invalid_argument("trailing characters");
  return v;
}

bool parse_bool(const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("expected true/false");
}

std::string curves_to_string(const std::vector<CurveSpec>& curves) {
  std::string out;
  for (const CurveSpec& c : curves) {
    if (!out.empty()) out += ',';
    out += curve_to_string(c);
  }
  return out;
}

std::vector<CurveSpec> curves_from_string(const std::string& text) {
  std::vector<CurveSpec> curves;
  std::istringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ','))
    curves.push_back(curve_from_string(item));
  if (curves.empty()) throw std::invalid_argument("empty curve list");
  return curves;
}

std::string lengths_to_string(const std::vector<int64_t>& lengths) {
  std::string out;
  for (int64_t l : lengths) {
    if (!out.empty()) out += ',';
    out += std::to_string(l);
  }
  return out;
}

std::vector<int64_t> lengths_from_string(const std::string& text) {
  std::vector<int64_t> lengths;
  std::istringstream stream(text);
  std::string item;
  while (std::getline(stream, item, ',')) lengths.push_back(parse_int(item));
  if (lengths.empty()) throw std::invalid_argument("empty length list");
  return lengths;
}

struct Entry {
  const char* key;  // dotted section.key
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

// Single source of truth: this table drives parsing, overrides, the echo
// listing, and unknown-key detection.
const std::vector<Entry>& entries() {
  auto int_entry = [](const char* key, auto member) {
    return Entry{key,
                 [member](const RunConfig& c) {
                   return std::to_string(std::invoke(member, c));
                 },
                 [member](RunConfig& c, const std::string& v) {
                   std::invoke(member, c) = parse_int(v);
                 }};
  };
  auto real_entry = [](const char* key, auto member) {
    return Entry{key,
                 [member](const RunConfig& c) {
                   return format_double(std::invoke(member, c));
                 },
                 [member](RunConfig& c, const std::string& v) {
                   std::invoke(member, c) = parse_real(v);
                 }};
  };
  static const std::vector<Entry> table = {
      int_entry("model.num_points", [](auto& c) -> auto& { return c.model.num_points; }),
      int_entry("model.num_patches", [](auto& c) -> auto& { return c.model.num_patches; }),
      int_entry("model.patch_size", [](auto& c) -> auto& { return c.model.patch_size; }),
      int_entry("model.embed_dim", [](auto& c) -> auto& { return c.model.embed_dim; }),
      int_entry("model.encoder_layers", [](auto& c) -> auto& { return c.model.encoder_layers; }),
      int_entry("model.decoder_layers", [](auto& c) -> auto& { return c.model.decoder_layers; }),
      real_entry("model.mask_ratio", [](auto& c) -> auto& { return c.model.mask_ratio; }),
      Entry{"model.curves",
            [](const RunConfig& c) { return curves_to_string(c.model.curves); },
            [](RunConfig& c, const std::string& v) {
              c.model.curves = curves_from_string(v);
            }},
      Entry{"model.grid_bits",
            [](const RunConfig& c) { return std::to_string(c.model.grid_bits); },
            [](RunConfig& c, const std::string& v) {
              c.model.grid_bits = int(parse_int(v));
            }},
      int_entry("model.num_classes", [](auto& c) -> auto& { return c.model.num_classes; }),
      Entry{"model.block_kind",
            [](const RunConfig& c) {
              return block_kind_to_string(c.model.block_kind);
            },
            [](RunConfig& c, const std::string& v) {
              c.model.block_kind = block_kind_from_string(v);
            }},
      Entry{"model.pooling",
            [](const RunConfig& c) { return pooling_to_string(c.model.pooling); },
            [](RunConfig& c, const std::string& v) {
              c.model.pooling = pooling_from_string(v);
            }},
      int_entry("model.state_dim", [](auto& c) -> auto& { return c.model.state_dim; }),
      int_entry("model.conv_kernel", [](auto& c) -> auto& { return c.model.conv_kernel; }),
      int_entry("model.expand", [](auto& c) -> auto& { return c.model.expand; }),

      int_entry("data.train_per_class", [](auto& c) -> auto& { return c.data.train_per_class; }),
      int_entry("data.test_per_class", [](auto& c) -> auto& { return c.data.test_per_class; }),
      real_entry("data.noise_sigma", [](auto& c) -> auto& { return c.data.noise_sigma; }),
      Entry{"data.seed",
            [](const RunConfig& c) { return std::to_string(c.data.seed); },
            [](RunConfig& c, const std::string& v) { c.data.seed = parse_uint(v); }},

      int_entry("train.epochs", [](auto& c) -> auto& { return c.train.epochs; }),
      int_entry("train.warmup_epochs", [](auto& c) -> auto& { return c.train.warmup_epochs; }),
      int_entry("train.batch_size", [](auto& c) -> auto& { return c.train.batch_size; }),
      real_entry("train.base_lr", [](auto& c) -> auto& { return c.train.base_lr; }),
      real_entry("train.min_lr", [](auto& c) -> auto& { return c.train.min_lr; }),
      real_entry("train.weight_decay", [](auto& c) -> auto& { return c.train.weight_decay; }),
      real_entry("train.clip_norm", [](auto& c) -> auto& { return c.train.clip_norm; }),
      Entry{"train.seed",
            [](const RunConfig& c) { return std::to_string(c.train.seed); },
            [](RunConfig& c, const std::string& v) { c.train.seed = parse_uint(v); }},
      Entry{"train.augment",
            [](const RunConfig& c) { return augment_to_string(c.train.augment); },
            [](RunConfig& c, const std::string& v) {
              c.train.augment = augment_from_string(v);
            }},
      Entry{"train.head_only",
            [](const RunConfig& c) {
              return std::string(c.train.head_only ? "true" : "false");
            },
            [](RunConfig& c, const std::string& v) {
              c.train.head_only = parse_bool(v);
            }},

      Entry{"bench.lengths",
            [](const RunConfig& c) { return lengths_to_string(c.bench.lengths); },
            [](RunConfig& c, const std::string& v) {
              c.bench.lengths = lengths_from_string(v);
            }},
      Entry{"bench.block",
            [](const RunConfig& c) { return c.bench.block; },
            [](RunConfig& c, const std::string& v) {
              if (v != "both" && v != "selective_ssm" && v != "masked_attention")
                throw std::invalid_argument(
                    "expected both, selective_ssm, or masked_attention");
              c.bench.block = v;
            }},
      int_entry("bench.repeat", [](auto& c) -> auto& { return c.bench.repeat; }),
      int_entry("bench.channels", [](auto& c) -> auto& { return c.bench.channels; }),
  };
  return table;
}

const Entry* find_entry(const std::string& dotted_key) {
  for (const Entry& e : entries())
    if (dotted_key == e.key) return &e;
  return nullptr;
}

std::string trim(const std::string& text) {
  size_t a = text.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = text.find_last_not_of(" \t\r");
  return text.substr(a, b - a + 1);
}

}  // namespace

void RunConfig::validate() const {
  std::vector<std::string> problems;
  auto collect = [&](const std::function<void()>& check) {
    try {
      check();
    } catch (const ConfigError& e) {
      problems.push_back(e.what());
    }
  };
  collect([&] { model.validate(); });
  collect([&] { train.validate(); });
  if (data.train_per_class < 1) problems.push_back("data.train_per_class must be >= 1");
  if (data.test_per_class < 1) problems.push_back("data.test_per_class must be >= 1");
  if (data.noise_sigma < 0) problems.push_back("data.noise_sigma must be >= 0");
  if (bench.lengths.empty()) problems.push_back("bench.lengths must be non-empty");
  for (size_t i = 1; i < bench.lengths.size(); ++i)
    if (bench.lengths[i] <= bench.lengths[i - 1]) {
      problems.push_back("bench.lengths must be strictly ascending");
      break;
    }
  if (!bench.lengths.empty() && bench.lengths.front() < 1)
    problems.push_back("bench.lengths must be positive");
  if (bench.repeat < 1) problems.push_back("bench.repeat must be >= 1");
  if (bench.channels < 1) problems.push_back("bench.channels must be >= 1");
  if (problems.empty()) return;
  std::string msg = "invalid configuration:";
  for (const std::string& p : problems) msg += "\n  - " + p;
  throw ConfigError(msg);
}

void apply_config_text(RunConfig& cfg, const std::string& text,
                       const std::string& origin) {
  std::vector<std::string> problems;
  std::string section;
  std::istringstream stream(text);
  std::string raw;
  int64_t line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    std::string line = raw;
    size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.resize(comment);
    line = trim(line);
    if (line.empty()) continue;
    auto where = [&] {
      return origin + " line " + std::to_string(line_no);
    };
    if (line.front() == '[') {
      if (line.back() != ']') {
        problems.push_back(where() + ": unterminated section header");
        continue;
      }
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "data" && section != "train" &&
          section != "bench") {
        problems.push_back(where() + ": unknown section [" + section + "]");
        section.clear();
      }
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) {
      problems.push_back(where() + ": expected key = value");
      continue;
    }
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (section.empty()) {
      problems.push_back(where() + ": key '" + key + "' outside any section");
      continue;
    }
    std::string dotted = section + "." + key;
    const Entry* entry = find_entry(dotted);
    if (entry == nullptr) {
      problems.push_back(where() + ": unknown key '" + dotted + "'");
      continue;
    }
    try {
      entry->set(cfg, value);
    } catch (const std::exception& e) {
      problems.push_back(where() + ": bad value for '" + dotted + "': " +
                         e.what());
    }
  }
  if (problems.empty()) return;
  std::string msg = "configuration errors:";
  for (const std::string& p : problems) msg += "\n  - " + p;
  throw ConfigError(msg);
}

void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file: " + path);
  std::ostringstream text;
  text << in.rdbuf();
  apply_config_text(cfg, text.str(), path);
}

void apply_override(RunConfig& cfg, const std::string& dotted_key,
                    const std::string& value) {
  const Entry* entry = find_entry(dotted_key);
  if (entry == nullptr)
    throw ConfigError("unknown configuration key '" + dotted_key + "'");
  try {
    entry->set(cfg, value);
  } catch (const std::exception& e) {
    throw ConfigError("bad value for '" + dotted_key + "': " + e.what());
  }
}

std::string echo_config(const RunConfig& cfg) {
  std::string out;
  for (const Entry& e : entries()) {
    out += e.key;
    out += " = ";
    out += e.get(cfg);
    out += '\n';
  }
  return out;
}

std::string config_hash(const RunConfig& cfg) {
  uint64_t hash = 1469598103934665603ull;  // FNV offset basis
  for (char c : echo_config(cfg)) {
    hash ^= uint64_t(static_cast<unsigned char>(c));
    hash *= 1099511628211ull;  // FNV prime
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)hash);
  return buf;
}

}  // namespace pointssm
