#include "pointssm/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "pointssm/common.hpp"
#include "pointssm/ops.hpp"
#include "pointssm/rng.hpp"

namespace pointssm {

namespace {

constexpr int64_t kPointMlpHidden = 128;   // first tokenizer stage width
constexpr int64_t kPointMlpLocal = 256;    // per-point feature width
constexpr int64_t kPatchMlpHidden = 512;   // second tokenizer stage width
constexpr int64_t kPosHidden = 128;
constexpr int64_t kHeadHidden = 256;
constexpr double kHeadDropout = 0.5;

Tensor fan_in_weight(int64_t in, int64_t out, Rng& rng) {
  double bound = 1.0 / std::sqrt(double(in));
  return Tensor::uniform({in, out}, rng, -bound, bound, true);
}

MlpPairParams init_mlp_pair(int64_t in, int64_t hidden, int64_t out, Rng& rng) {
  MlpPairParams p;
  p.w1 = fan_in_weight(in, hidden, rng);
  p.b1 = Tensor::zeros({hidden}, true);
  p.w2 = fan_in_weight(hidden, out, rng);
  p.b2 = Tensor::zeros({out}, true);
  return p;
}

void push(std::vector<NamedParam>& out, const std::string& name,
          const Tensor& t, bool no_decay) {
  out.push_back(NamedParam{name, t, no_decay});
}

void register_block(std::vector<NamedParam>& out, const std::string& prefix,
                    MambaBlockParams& b) {
  push(out, prefix + ".ln_gamma", b.ln_gamma, true);
  push(out, prefix + ".ln_beta", b.ln_beta, true);
  push(out, prefix + ".w_main", b.w_main, false);
  push(out, prefix + ".w_gate", b.w_gate, false);
  push(out, prefix + ".w_out", b.w_out, false);
  switch (b.kind) {
    case BlockKind::selective_ssm:
      push(out, prefix + ".conv_kernel", b.conv_kernel, false);
      push(out, prefix + ".conv_bias", b.conv_bias, true);
      push(out, prefix + ".ssm.w_b", b.ssm.w_b, false);
      push(out, prefix + ".ssm.w_c", b.ssm.w_c, false);
      push(out, prefix + ".ssm.w_dt_down", b.ssm.w_dt_down, false);
      push(out, prefix + ".ssm.w_dt_up", b.ssm.w_dt_up, false);
      push(out, prefix + ".ssm.dt_bias", b.ssm.dt_bias, true);
      push(out, prefix + ".ssm.a_log", b.ssm.a_log, true);
      push(out, prefix + ".ssm.d_skip", b.ssm.d_skip, true);
      break;
    case BlockKind::identity:
      break;
    case BlockKind::masked_attention:
      push(out, prefix + ".w_q", b.w_q, false);
      push(out, prefix + ".w_k", b.w_k, false);
      push(out, prefix + ".w_v", b.w_v, false);
      break;
    case BlockKind::mlp:
      push(out, prefix + ".w_mlp1", b.w_mlp1, false);
      push(out, prefix + ".b_mlp1", b.b_mlp1, true);
      push(out, prefix + ".w_mlp2", b.w_mlp2, false);
      push(out, prefix + ".b_mlp2", b.b_mlp2, true);
      break;
  }
}

int64_t block_parameters(const ModelConfig& cfg, BlockKind kind) {
  int64_t c = cfg.embed_dim, i = cfg.inner();
  int64_t total = 2 * c + 3 * c * i;  // norm affine + main/gate/out projections
  switch (kind) {
    case BlockKind::selective_ssm:
      total += cfg.conv_kernel * i + i;               // conv kernel + bias
      total += 2 * i * cfg.state_dim;                 // w_b, w_c
      total += 2 * i * cfg.dt_rank() + i;             // step projections + bias
      total += i * cfg.state_dim + i;                 // a_log + d_skip
      break;
    case BlockKind::identity:
      break;
    case BlockKind::masked_attention:
      total += 3 * i * i;
      break;
    case BlockKind::mlp:
      total += 2 * i * i + 2 * i;
      break;
  }
  return total;
}

}  // namespace

Pooling pooling_from_string(const std::string& name) {
  if (name == "avg") return Pooling::avg;
  if (name == "max") return Pooling::max;
  if (name == "cls_before") return Pooling::cls_before;
  if (name == "cls_after") return Pooling::cls_after;
  if (name == "cls_middle") return Pooling::cls_middle;
  throw std::invalid_argument("unknown pooling: " + name);
}

std::string pooling_to_string(Pooling p) {
  switch (p) {
    case Pooling::avg: return "avg";
    case Pooling::max: return "max";
    case Pooling::cls_before: return "cls_before";
    case Pooling::cls_after: return "cls_after";
    case Pooling::cls_middle: return "cls_middle";
  }
  throw std::invalid_argument("unknown pooling value");
}

void ModelConfig::validate() const {
  std::vector<std::string> problems;
  auto need = [&](bool ok, const std::string& msg) {
    if (!ok) problems.push_back(msg);
  };
  need(num_points >= 1, "num_points must be >= 1");
  need(num_patches >= 1, "num_patches must be >= 1");
  need(num_patches <= num_points, "num_patches must not exceed num_points");
  need(patch_size >= 1, "patch_size must be >= 1");
  need(patch_size <= num_points, "patch_size must not exceed num_points");
  need(embed_dim >= 1, "embed_dim must be >= 1");
  need(encoder_layers >= 0, "encoder_layers must be >= 0");
  need(decoder_layers >= 1, "decoder_layers must be >= 1");
  need(mask_ratio > 0.0 && mask_ratio < 1.0, "mask_ratio must lie in (0, 1)");
  need(!curves.empty(), "at least one curve is required");
  need(grid_bits >= 1 && grid_bits <= 20, "grid_bits must lie in [1, 20]");
  need(num_classes >= 2, "num_classes must be >= 2");
  need(state_dim >= 1, "state_dim must be >= 1");
  need(conv_kernel >= 1, "conv_kernel must be >= 1");
  need(expand >= 1, "expand must be >= 1");
  if (!problems.empty()) {
    std::ostringstream msg;
    msg << "invalid model config:";
    for (const std::string& p : problems) msg << "\n  - " << p;
    throw ConfigError(msg.str());
  }
}

ModelConfig ModelConfig::desk_profile() {
  ModelConfig cfg;
  cfg.num_points = 512;
  cfg.num_patches = 32;
  cfg.patch_size = 16;
  cfg.embed_dim = 64;
  cfg.encoder_layers = 4;
  cfg.decoder_layers = 2;
  cfg.num_classes = 4;
  return cfg;
}

ModelConfig ModelConfig::paper_profile() { return ModelConfig{}; }

Model init_model(const ModelConfig& cfg, ModelMode mode, Rng& rng) {
  cfg.validate();
  Model m;
  m.config = cfg;
  m.mode = mode;
  const int64_t c = cfg.embed_dim;

  m.tokenizer.w1 = fan_in_weight(3, kPointMlpHidden, rng);
  m.tokenizer.b1 = Tensor::zeros({kPointMlpHidden}, true);
  m.tokenizer.w2 = fan_in_weight(kPointMlpHidden, kPointMlpLocal, rng);
  m.tokenizer.b2 = Tensor::zeros({kPointMlpLocal}, true);
  m.tokenizer.w3 = fan_in_weight(2 * kPointMlpLocal, kPatchMlpHidden, rng);
  m.tokenizer.b3 = Tensor::zeros({kPatchMlpHidden}, true);
  m.tokenizer.w4 = fan_in_weight(kPatchMlpHidden, c, rng);
  m.tokenizer.b4 = Tensor::zeros({c}, true);

  m.pos = init_mlp_pair(3, kPosHidden, c, rng);

  const int64_t groups = int64_t(cfg.curves.size());
  m.ind_gamma = Tensor::full({groups, c}, 1.0, true);
  m.ind_beta = Tensor::zeros({groups, c}, true);

  for (int64_t l = 0; l < cfg.encoder_layers; ++l)
    m.encoder.push_back(init_block(cfg.block_kind, c, cfg.inner(),
                                   cfg.state_dim, cfg.dt_rank(),
                                   cfg.conv_kernel, rng));

  if (mode == ModelMode::classify) {
    if (cfg.uses_cls_token()) m.cls_token = Tensor::randn({c}, rng, 0.02, true);
    m.head = init_mlp_pair(c, kHeadHidden, cfg.num_classes, rng);
  } else {
    for (int64_t l = 0; l < cfg.decoder_layers; ++l)
      m.decoder.push_back(init_block(BlockKind::selective_ssm, c, cfg.inner(),
                                     cfg.state_dim, cfg.dt_rank(),
                                     cfg.conv_kernel, rng));
    m.mask_token = Tensor::randn({c}, rng, 0.02, true);
    m.recon_w = fan_in_weight(c, cfg.patch_size * 3, rng);
    m.recon_b = Tensor::zeros({cfg.patch_size * 3}, true);
  }
  return m;
}

std::vector<NamedParam> named_parameters(Model& m) {
  std::vector<NamedParam> out;
  push(out, "tokenizer.w1", m.tokenizer.w1, false);
  push(out, "tokenizer.b1", m.tokenizer.b1, true);
  push(out, "tokenizer.w2", m.tokenizer.w2, false);
  push(out, "tokenizer.b2", m.tokenizer.b2, true);
  push(out, "tokenizer.w3", m.tokenizer.w3, false);
  push(out, "tokenizer.b3", m.tokenizer.b3, true);
  push(out, "tokenizer.w4", m.tokenizer.w4, false);
  push(out, "tokenizer.b4", m.tokenizer.b4, true);
  push(out, "pos.w1", m.pos.w1, false);
  push(out, "pos.b1", m.pos.b1, true);
  push(out, "pos.w2", m.pos.w2, false);
  push(out, "pos.b2", m.pos.b2, true);
  push(out, "indicator.gamma", m.ind_gamma, true);
  push(out, "indicator.beta", m.ind_beta, true);
  for (size_t l = 0; l < m.encoder.size(); ++l)
    register_block(out, "enc." + std::to_string(l), m.encoder[l]);
  if (m.mode == ModelMode::classify) {
    if (m.cls_token.defined()) push(out, "cls_token", m.cls_token, true);
    push(out, "head.w1", m.head.w1, false);
    push(out, "head.b1", m.head.b1, true);
    push(out, "head.w2", m.head.w2, false);
    push(out, "head.b2", m.head.b2, true);
  } else {
    for (size_t l = 0; l < m.decoder.size(); ++l)
      register_block(out, "dec." + std::to_string(l), m.decoder[l]);
    push(out, "mask_token", m.mask_token, true);
    push(out, "recon.w", m.recon_w, false);
    push(out, "recon.b", m.recon_b, true);
  }
  return out;
}

int64_t total_parameters(const Model& m) {
  int64_t total = 0;
  for (const NamedParam& p : named_parameters(const_cast<Model&>(m)))
    total += p.tensor.numel();
  return total;
}

int64_t indicator_parameters(const ModelConfig& cfg) {
  return int64_t(cfg.curves.size()) * 2 * cfg.embed_dim;
}

int64_t count_parameters(const ModelConfig& cfg, ModelMode mode) {
  cfg.validate();
  const int64_t c = cfg.embed_dim;
  int64_t total = 0;
  // tokenizer
  total += 3 * kPointMlpHidden + kPointMlpHidden;
  total += kPointMlpHidden * kPointMlpLocal + kPointMlpLocal;
  total += 2 * kPointMlpLocal * kPatchMlpHidden + kPatchMlpHidden;
  total += kPatchMlpHidden * c + c;
  // positional embedding
  total += 3 * kPosHidden + kPosHidden + kPosHidden * c + c;
  total += indicator_parameters(cfg);
  total += cfg.encoder_layers * block_parameters(cfg, cfg.block_kind);
  if (mode == ModelMode::classify) {
    if (cfg.uses_cls_token()) total += c;
    total += c * kHeadHidden + kHeadHidden;
    total += kHeadHidden * cfg.num_classes + cfg.num_classes;
  } else {
    total += cfg.decoder_layers * block_parameters(cfg, BlockKind::selective_ssm);
    total += c;                                    // mask token
    total += c * cfg.patch_size * 3 + cfg.patch_size * 3;  // recon head
  }
  return total;
}

PatchSet build_patch_set(const PointCloud& cloud, const ModelConfig& cfg,
                         int64_t fps_start) {
  if (int64_t(cloud.size()) < cfg.num_patches)
    throw DataError("cloud has fewer points than num_patches");
  if (int64_t(cloud.size()) < cfg.patch_size)
    throw DataError("cloud has fewer points than patch_size");
  PatchSet ps;
  ps.key_indices = farthest_point_sampling(cloud, cfg.num_patches, fps_start);
  ps.patches = make_patches(cloud, ps.key_indices, cfg.patch_size);
  const int64_t n = cfg.num_patches, k = cfg.patch_size;
  std::vector<double> centers(static_cast<size_t>(n * 3));
  std::vector<double> rel(static_cast<size_t>(n * k * 3));
  for (int64_t p = 0; p < n; ++p) {
    const PointPatch& patch = ps.patches[size_t(p)];
    ps.key_points.push_back(patch.key_point);
    for (int d = 0; d < 3; ++d) centers[size_t(p * 3 + d)] = patch.key_point[size_t(d)];
    for (int64_t j = 0; j < k; ++j)
      for (int d = 0; d < 3; ++d)
        rel[size_t((p * k + j) * 3 + d)] =
            patch.relative_points[size_t(j)][size_t(d)];
  }
  ps.centers = Tensor::from_vector({n, 3}, centers);
  ps.rel_points = Tensor::from_vector({n * k, 3}, rel);
  return ps;
}

Tensor tokenize_patches(const Tensor& rel, int64_t k,
                        const TokenizerParams& t) {
  if (rel.ndim() != 2 || rel.dim(1) != 3)
    throw std::invalid_argument("tokenize_patches: expected [P*k, 3] input");
  if (k < 1 || rel.dim(0) % k != 0)
    throw std::invalid_argument(
        "tokenize_patches: row count is not a multiple of patch_size");
  Tensor h = relu(linear(rel, t.w1, t.b1));
  h = linear(h, t.w2, t.b2);                   // [P*k, 256]
  Tensor global = segment_max(h, k);           // [P, 256]
  Tensor both = concat_cols(h, segment_broadcast(global, k));  // [P*k, 512]
  Tensor h2 = relu(linear(both, t.w3, t.b3));
  h2 = linear(h2, t.w4, t.b4);                 // [P*k, C]
  return segment_max(h2, k);                   // [P, C]
}

Tensor mlp_pair(const Tensor& x, const MlpPairParams& p) {
  return linear(relu(linear(x, p.w1, p.b1)), p.w2, p.b2);
}

EncodeResult encode(const Model& m, const PointCloud& cloud,
                    int64_t fps_start) {
  const ModelConfig& cfg = m.config;
  PatchSet ps = build_patch_set(cloud, cfg, fps_start);
  Tensor base = add(tokenize_patches(ps.rel_points, cfg.patch_size, m.tokenizer),
                    mlp_pair(ps.centers, m.pos));
  EncodeResult res;
  res.tokens_per_curve = cfg.num_patches;
  std::vector<Tensor> parts;
  for (size_t g = 0; g < cfg.curves.size(); ++g) {
    SerializedOrder so = serialize(ps.key_points, cfg.curves[g], cfg.grid_bits);
    std::vector<int> tags(static_cast<size_t>(cfg.num_patches), int(g));
    parts.push_back(rowwise_affine_by_tag(gather_rows(base, so.order), tags,
                                          m.ind_gamma, m.ind_beta));
    res.orders.push_back(std::move(so.order));
  }
  Tensor z = parts.size() == 1 ? parts[0] : concat_rows(parts);
  if (m.mode == ModelMode::classify && cfg.uses_cls_token()) {
    Tensor cls_row = reshape(m.cls_token, {1, cfg.embed_dim});
    const int64_t rows = z.dim(0);
    if (cfg.pooling == Pooling::cls_before) {
      z = concat_rows({cls_row, z});
      res.cls_index = 0;
    } else if (cfg.pooling == Pooling::cls_after) {
      z = concat_rows({z, cls_row});
      res.cls_index = rows;
    } else {  // cls_middle
      const int64_t mid = rows / 2;
      std::vector<int64_t> top(static_cast<size_t>(mid));
      std::vector<int64_t> bottom(static_cast<size_t>(rows - mid));
      std::iota(top.begin(), top.end(), 0);
      std::iota(bottom.begin(), bottom.end(), mid);
      z = concat_rows({gather_rows(z, top), cls_row, gather_rows(z, bottom)});
      res.cls_index = mid;
    }
  }
  for (const MambaBlockParams& b : m.encoder) z = block_forward(z, b);
  res.features = z;
  return res;
}

Tensor classify_logits(const Model& m, const EncodeResult& enc, bool train,
                       Rng& rng) {
  if (m.mode != ModelMode::classify)
    throw std::logic_error("classify_logits: model is not in classify mode");
  if (!enc.features.defined() || enc.features.dim(0) == 0)
    throw std::invalid_argument("classify_logits: empty feature sequence");
  Tensor pooled;
  switch (m.config.pooling) {
    case Pooling::avg: pooled = mean_rows(enc.features); break;
    case Pooling::max: pooled = max_rows(enc.features); break;
    default:
      if (enc.cls_index < 0)
        throw std::invalid_argument("classify_logits: missing class token");
      pooled = reshape(gather_rows(enc.features, {enc.cls_index}),
                       {m.config.embed_dim});
  }
  Tensor h = relu(linear(reshape(pooled, {1, m.config.embed_dim}), m.head.w1,
                         m.head.b1));
  h = dropout(h, kHeadDropout, rng, train);
  return reshape(linear(h, m.head.w2, m.head.b2), {m.config.num_classes});
}

MaskSelection choose_mask(int64_t n, double ratio, Rng& rng) {
  if (n < 2) throw std::invalid_argument("choose_mask: need at least 2 tokens");
  if (!(ratio > 0.0 && ratio < 1.0))
    throw std::invalid_argument("choose_mask: ratio must lie in (0, 1)");
  const int64_t masked = int64_t(std::floor(ratio * double(n)));
  if (masked == 0 || masked == n)
    throw std::invalid_argument(
        "choose_mask: ratio leaves zero masked or zero visible tokens");
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  rng.shuffle(idx);
  MaskSelection sel;
  sel.masked.assign(idx.begin(), idx.begin() + masked);
  sel.visible.assign(idx.begin() + masked, idx.end());
  std::sort(sel.masked.begin(), sel.masked.end());
  std::sort(sel.visible.begin(), sel.visible.end());
  return sel;
}

Tensor encode_visible(const Model& m, const PatchSet& ps,
                      const std::vector<int64_t>& order,
                      const std::vector<int64_t>& visible, int curve_tag) {
  const ModelConfig& cfg = m.config;
  const int64_t k = cfg.patch_size;
  // tokenize only the surviving patches, in serialized-visible order
  std::vector<int64_t> rel_rows;
  rel_rows.reserve(visible.size() * size_t(k));
  for (int64_t rank : visible) {
    const int64_t patch = order[size_t(rank)];
    for (int64_t j = 0; j < k; ++j) rel_rows.push_back(patch * k + j);
  }
  Tensor tokens = tokenize_patches(gather_rows(ps.rel_points, rel_rows), k,
                                   m.tokenizer);
  std::vector<int64_t> center_rows;
  center_rows.reserve(visible.size());
  for (int64_t rank : visible) center_rows.push_back(order[size_t(rank)]);
  Tensor pos = mlp_pair(gather_rows(ps.centers, center_rows), m.pos);
  std::vector<int> tags(visible.size(), curve_tag);
  Tensor z = rowwise_affine_by_tag(add(tokens, pos), tags, m.ind_gamma,
                                   m.ind_beta);
  for (const MambaBlockParams& b : m.encoder) z = block_forward(z, b);
  return z;
}

ReconstructResult reconstruct(const Model& m, const PointCloud& cloud,
                              int curve_tag, Rng& mask_rng,
                              int64_t fps_start) {
  if (m.mode != ModelMode::pretrain)
    throw std::logic_error("reconstruct: model is not in pretrain mode");
  const ModelConfig& cfg = m.config;
  if (curve_tag < 0 || size_t(curve_tag) >= cfg.curves.size())
    throw std::invalid_argument("reconstruct: curve tag out of range");

  ReconstructResult res;
  res.curve_tag = curve_tag;
  res.patch_set = build_patch_set(cloud, cfg, fps_start);
  res.order = serialize(res.patch_set.key_points, cfg.curves[size_t(curve_tag)],
                        cfg.grid_bits)
                  .order;
  res.mask = choose_mask(cfg.num_patches, cfg.mask_ratio, mask_rng);
  const int64_t n = cfg.num_patches, k = cfg.patch_size;
  const int64_t num_visible = int64_t(res.mask.visible.size());
  const int64_t num_masked = int64_t(res.mask.masked.size());

  Tensor enc_out = encode_visible(m, res.patch_set, res.order,
                                  res.mask.visible, curve_tag);

  // decoder input: encoder outputs and mask tokens interleaved back into
  // serialized order, every position re-given its positional embedding
  std::vector<int64_t> slot(static_cast<size_t>(n), -1);
  for (int64_t i = 0; i < num_visible; ++i)
    slot[size_t(res.mask.visible[size_t(i)])] = i;
  for (int64_t i = 0; i < num_masked; ++i)
    slot[size_t(res.mask.masked[size_t(i)])] = num_visible + i;
  Tensor stacked = concat_rows(
      {enc_out, broadcast_rows(m.mask_token, num_masked)});
  Tensor pos_all = mlp_pair(gather_rows(res.patch_set.centers, res.order),
                            m.pos);
  Tensor z = add(gather_rows(stacked, slot), pos_all);
  for (const MambaBlockParams& b : m.decoder) z = mamba_block(z, b);

  Tensor masked_feats = gather_rows(z, res.mask.masked);
  res.predicted = linear(masked_feats, m.recon_w, m.recon_b);  // [m, k*3]

  Tensor loss_sum;
  for (int64_t i = 0; i < num_masked; ++i) {
    const int64_t patch = res.order[size_t(res.mask.masked[size_t(i)])];
    Tensor pred_patch = reshape(gather_rows(res.predicted, {i}), {k, 3});
    Tensor one = chamfer_to_fixed(
        pred_patch, res.patch_set.patches[size_t(patch)].relative_points);
    loss_sum = loss_sum.defined() ? add(loss_sum, one) : one;
  }
  res.loss = scale(loss_sum, 1.0 / double(num_masked));
  return res;
}

}  // namespace pointssm
