#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "pointssm/common.hpp"
#include "pointssm/model.hpp"
#include "pointssm/ops.hpp"
#include "pointssm/rng.hpp"

using namespace pointssm;

namespace {

PointCloud random_cloud(int64_t m, Rng& rng, double lo = -1, double hi = 1) {
  PointCloud cloud(static_cast<size_t>(m));
  for (auto& p : cloud)
    for (double& v : p) v = rng.uniform(lo, hi);
  return cloud;
}

PointCloud sphere_cloud(int64_t m, Rng& rng) {
  PointCloud cloud(static_cast<size_t>(m));
  for (auto& p : cloud) {
    double norm = 0;
    for (double& v : p) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : p) v /= norm;
  }
  return cloud;
}

ModelConfig tiny_config(int64_t n = 8, int64_t k = 4, int64_t c = 16,
                        int64_t enc = 2, int64_t dec = 1) {
  ModelConfig cfg = ModelConfig::desk_profile();
  cfg.num_points = 64;
  cfg.num_patches = n;
  cfg.patch_size = k;
  cfg.embed_dim = c;
  cfg.encoder_layers = enc;
  cfg.decoder_layers = dec;
  cfg.state_dim = 4;
  cfg.conv_kernel = 3;
  return cfg;
}

// straight-line tokenizer: raw loops, no tensor ops
std::vector<double> oracle_tokenize(const std::vector<double>& rel, int64_t P,
                                    int64_t k, const TokenizerParams& t,
                                    int64_t c) {
  auto lin = [](const std::vector<double>& x, int64_t rows, int64_t in,
                const Tensor& w, const Tensor& b, bool do_relu) {
    int64_t out_dim = w.dim(1);
    std::vector<double> y(static_cast<size_t>(rows * out_dim), 0.0);
    for (int64_t r = 0; r < rows; ++r)
      for (int64_t o = 0; o < out_dim; ++o) {
        double acc = b.data()[o];
        for (int64_t i = 0; i < in; ++i)
          acc += x[size_t(r * in + i)] * w.data()[i * out_dim + o];
        y[size_t(r * out_dim + o)] = do_relu ? std::max(acc, 0.0) : acc;
      }
    return y;
  };
  std::vector<double> h = lin(rel, P * k, 3, t.w1, t.b1, true);
  h = lin(h, P * k, 128, t.w2, t.b2, false);  // [P*k, 256]
  std::vector<double> tokens(static_cast<size_t>(P * c));
  for (int64_t p = 0; p < P; ++p) {
    std::vector<double> global(256, -1e300);
    for (int64_t j = 0; j < k; ++j)
      for (int64_t ch = 0; ch < 256; ++ch)
        global[size_t(ch)] = std::max(global[size_t(ch)],
                                      h[size_t(((p * k) + j) * 256 + ch)]);
    std::vector<double> both(static_cast<size_t>(k * 512));
    for (int64_t j = 0; j < k; ++j) {
      for (int64_t ch = 0; ch < 256; ++ch)
        both[size_t(j * 512 + ch)] = h[size_t(((p * k) + j) * 256 + ch)];
      for (int64_t ch = 0; ch < 256; ++ch)
        both[size_t(j * 512 + 256 + ch)] = global[size_t(ch)];
    }
    std::vector<double> h2 = lin(both, k, 512, t.w3, t.b3, true);
    h2 = lin(h2, k, 512, t.w4, t.b4, false);  // [k, c]
    for (int64_t ch = 0; ch < c; ++ch) {
      double best = -1e300;
      for (int64_t j = 0; j < k; ++j)
        best = std::max(best, h2[size_t(j * c + ch)]);
      tokens[size_t(p * c + ch)] = best;
    }
  }
  return tokens;
}

}  // namespace

TEST_CASE("pooling names round trip") {
  for (const char* name :
       {"avg", "max", "cls_before", "cls_after", "cls_middle"})
    CHECK(pooling_to_string(pooling_from_string(name)) == name);
  CHECK_THROWS_AS((void)pooling_from_string("sum"), std::invalid_argument);
}

TEST_CASE("config validation lists every violation") {
  ModelConfig::desk_profile().validate();
  ModelConfig::paper_profile().validate();
  ModelConfig bad = ModelConfig::desk_profile();
  bad.mask_ratio = 1.5;
  bad.grid_bits = 0;
  bad.num_patches = 4096;  // exceeds num_points
  try {
    bad.validate();
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    std::string msg = e.what();
    CHECK(msg.find("mask_ratio") != std::string::npos);
    CHECK(msg.find("grid_bits") != std::string::npos);
    CHECK(msg.find("num_patches") != std::string::npos);
  }
}

TEST_CASE("tokenizer matches a straight-line reimplementation") {
  Rng rng(21);
  ModelConfig cfg = tiny_config();
  Model m = init_model(cfg, ModelMode::classify, rng);
  const int64_t P = 3, k = cfg.patch_size, c = cfg.embed_dim;
  Tensor rel = Tensor::uniform({P * k, 3}, rng, -1, 1);
  Tensor tokens = tokenize_patches(rel, k, m.tokenizer);
  std::vector<double> flat(rel.data(), rel.data() + rel.numel());
  std::vector<double> expect = oracle_tokenize(flat, P, k, m.tokenizer, c);
  REQUIRE(tokens.numel() == int64_t(expect.size()));
  for (int64_t i = 0; i < tokens.numel(); ++i)
    CHECK(std::fabs(tokens.data()[i] - expect[size_t(i)]) <= 1e-12);
}

TEST_CASE("tokens are invariant to point order inside a patch") {
  Rng rng(22);
  ModelConfig cfg = tiny_config();
  Model m = init_model(cfg, ModelMode::classify, rng);
  const int64_t k = cfg.patch_size;
  Tensor rel = Tensor::uniform({2 * k, 3}, rng, -1, 1);
  Tensor base = tokenize_patches(rel, k, m.tokenizer);

  std::vector<int64_t> perm_rows;
  for (int64_t p = 0; p < 2; ++p) {
    std::vector<int64_t> local(static_cast<size_t>(k));
    for (int64_t j = 0; j < k; ++j) local[size_t(j)] = p * k + j;
    rng.shuffle(local);
    perm_rows.insert(perm_rows.end(), local.begin(), local.end());
  }
  Tensor shuffled = gather_rows(rel, perm_rows);
  Tensor moved = tokenize_patches(shuffled, k, m.tokenizer);
  for (int64_t i = 0; i < base.numel(); ++i)
    CHECK(moved.data()[i] == base.data()[i]);

  // two identical patches give identical tokens
  std::vector<int64_t> dup_rows;
  for (int64_t j = 0; j < k; ++j) dup_rows.push_back(j);
  for (int64_t j = 0; j < k; ++j) dup_rows.push_back(j);
  Tensor dup = tokenize_patches(gather_rows(rel, dup_rows), k, m.tokenizer);
  for (int64_t ch = 0; ch < cfg.embed_dim; ++ch)
    CHECK(dup.data()[ch] == dup.data()[cfg.embed_dim + ch]);

  CHECK_THROWS_AS((void)tokenize_patches(Tensor::zeros({5, 3}), 4, m.tokenizer),
                  std::invalid_argument);
}

TEST_CASE("order indicator applies the tagged affine map") {
  Tensor gamma = Tensor::from_vector({2, 2}, {1, 1, 2, 2});
  Tensor beta = Tensor::from_vector({2, 2}, {0, 0, 1, 1});
  Tensor x = Tensor::from_vector({2, 2}, {0.5, -1.0, 0.5, -1.0});
  Tensor y = rowwise_affine_by_tag(x, {0, 1}, gamma, beta);
  CHECK(y.data()[0] == 0.5);   // identity curve
  CHECK(y.data()[1] == -1.0);
  CHECK(y.data()[2] == 2.0);   // scale 2 shift 1
  CHECK(y.data()[3] == -1.0);
}

TEST_CASE("parameter counts: closed form, registry, and published scale") {
  ModelConfig paper = ModelConfig::paper_profile();
  CHECK(indicator_parameters(paper) == 1536);
  const int64_t classify_count = count_parameters(paper, ModelMode::classify);
  CHECK(classify_count == 12222479);
  CHECK(std::fabs(double(classify_count) - 12.3e6) <= 0.10 * 12.3e6);

  // zero-layer encoder: tokenizer + positional MLP + indicators + head,
  // summed by hand from the layer shapes
  ModelConfig flat = paper;
  flat.encoder_layers = 0;
  const int64_t tokenizer = (3 * 128 + 128) + (128 * 256 + 256) +
                            (512 * 512 + 512) + (512 * 384 + 384);
  const int64_t pos = (3 * 128 + 128) + (128 * 384 + 384);
  const int64_t indicators = 2 * (384 + 384);
  const int64_t head = (384 * 256 + 256) + (256 * 15 + 15);
  CHECK(count_parameters(flat, ModelMode::classify) ==
        tokenizer + pos + indicators + head);

  // the registry agrees with the closed form for every block kind and mode
  Rng rng(23);
  for (BlockKind kind : {BlockKind::selective_ssm, BlockKind::identity,
                         BlockKind::masked_attention, BlockKind::mlp}) {
    ModelConfig cfg = tiny_config(8, 4, 16, 2, 1);
    cfg.block_kind = kind;
    for (ModelMode mode : {ModelMode::classify, ModelMode::pretrain}) {
      Model m = init_model(cfg, mode, rng);
      CHECK(total_parameters(m) == count_parameters(cfg, mode));
    }
  }

  // class-token pooling adds exactly C parameters
  ModelConfig cls_cfg = tiny_config();
  cls_cfg.pooling = Pooling::cls_after;
  CHECK(count_parameters(cls_cfg, ModelMode::classify) ==
        count_parameters(tiny_config(), ModelMode::classify) +
            cls_cfg.embed_dim);

  // unique names
  Model m = init_model(tiny_config(), ModelMode::pretrain, rng);
  std::vector<NamedParam> params = named_parameters(m);
  std::vector<std::string> names;
  for (const NamedParam& p : params) names.push_back(p.name);
  std::sort(names.begin(), names.end());
  CHECK(std::adjacent_find(names.begin(), names.end()) == names.end());
}

TEST_CASE("encode length follows the curve bank and class-token placement") {
  Rng rng(24);
  PointCloud cloud = random_cloud(64, rng);
  ModelConfig cfg = tiny_config();
  const int64_t n = cfg.num_patches;

  ModelConfig single = cfg;
  single.curves = {{CurveKind::hilbert, 0}};
  Model ms = init_model(single, ModelMode::classify, rng);
  CHECK(encode(ms, cloud).features.dim(0) == n);

  Model md = init_model(cfg, ModelMode::classify, rng);
  EncodeResult dual = encode(md, cloud);
  CHECK(dual.features.dim(0) == 2 * n);
  CHECK(dual.cls_index == -1);
  CHECK(dual.orders.size() == 2);

  struct Placement {
    Pooling pooling;
    int64_t index;
  };
  for (Placement pl : {Placement{Pooling::cls_before, 0},
                       Placement{Pooling::cls_after, 2 * n},
                       Placement{Pooling::cls_middle, n}}) {
    ModelConfig with_cls = cfg;
    with_cls.pooling = pl.pooling;
    Model mc = init_model(with_cls, ModelMode::classify, rng);
    EncodeResult enc = encode(mc, cloud);
    CHECK(enc.features.dim(0) == 2 * n + 1);
    CHECK(enc.cls_index == pl.index);
  }

  PointCloud toosmall = random_cloud(4, rng);
  CHECK_THROWS_AS((void)encode(md, toosmall), DataError);
}

TEST_CASE("translation moves features only through the positional path") {
  Rng rng(25);
  // dyadic coordinates + integer shifts keep the relative-coordinate
  // arithmetic exact, so the comparison below can be bitwise
  PointCloud cloud = random_cloud(64, rng);
  for (auto& p : cloud)
    for (double& v : p) v = std::round(v * 1048576.0) / 1048576.0;
  ModelConfig cfg = tiny_config();
  Model m = init_model(cfg, ModelMode::classify, rng);
  for (Tensor* t : {&m.pos.w1, &m.pos.b1, &m.pos.w2, &m.pos.b2})
    for (int64_t i = 0; i < t->numel(); ++i) t->data()[i] = 0.0;

  Tensor base = encode(m, cloud).features;
  PointCloud moved = cloud;
  for (auto& p : moved) {
    p[0] += 3.0;
    p[1] -= 1.0;
    p[2] += 2.0;
  }
  Tensor shifted = encode(m, moved).features;
  for (int64_t i = 0; i < base.numel(); ++i)
    CHECK(shifted.data()[i] == base.data()[i]);
}

TEST_CASE("first-curve features are independent of the second curve half") {
  Rng rng(26);
  PointCloud cloud = random_cloud(64, rng);
  ModelConfig cfg = tiny_config();
  Model dual = init_model(cfg, ModelMode::classify, rng);

  Model first_only = dual;  // shares every weight tensor
  first_only.config.curves = {cfg.curves[0]};

  Tensor both = encode(dual, cloud).features;
  Tensor solo = encode(first_only, cloud).features;
  REQUIRE(solo.dim(0) == cfg.num_patches);
  for (int64_t i = 0; i < solo.numel(); ++i)
    CHECK(both.data()[i] == solo.data()[i]);
}

TEST_CASE("perturbing one patch leaves all earlier sequence positions unchanged") {
  Rng rng(27);
  PointCloud cloud = random_cloud(64, rng);
  ModelConfig cfg = tiny_config();
  Model m = init_model(cfg, ModelMode::classify, rng);

  PatchSet ps = build_patch_set(cloud, cfg);
  EncodeResult base = encode(m, cloud);

  // membership count per cloud point, and the patches touching each point
  std::vector<std::vector<int64_t>> touching(cloud.size());
  for (int64_t p = 0; p < cfg.num_patches; ++p)
    for (int64_t idx : ps.patches[size_t(p)].member_indices)
      touching[size_t(idx)].push_back(p);

  // serialized rank of each patch per curve half
  std::vector<int64_t> earliest(static_cast<size_t>(cfg.num_patches));
  for (int64_t p = 0; p < cfg.num_patches; ++p) {
    int64_t e = base.features.dim(0);
    for (size_t g = 0; g < base.orders.size(); ++g)
      for (int64_t r = 0; r < cfg.num_patches; ++r)
        if (base.orders[g][size_t(r)] == p)
          e = std::min(e, int64_t(g) * cfg.num_patches + r);
    earliest[size_t(p)] = e;
  }

  // pick the non-key point whose patches all appear latest in the sequence
  std::vector<bool> is_key(cloud.size(), false);
  for (int64_t k : ps.key_indices) is_key[size_t(k)] = true;
  int64_t pick = -1, pick_rank = -1;
  for (size_t i = 0; i < cloud.size(); ++i) {
    if (is_key[i] || touching[i].empty()) continue;
    int64_t e = base.features.dim(0);
    for (int64_t p : touching[i]) e = std::min(e, earliest[size_t(p)]);
    if (e > pick_rank) {
      pick_rank = e;
      pick = int64_t(i);
    }
  }
  REQUIRE(pick >= 0);
  REQUIRE(pick_rank > 0);

  PointCloud moved = cloud;
  moved[size_t(pick)][2] += 0.02;
  PatchSet ps2 = build_patch_set(moved, cfg);
  REQUIRE(ps2.key_indices == ps.key_indices);  // selection undisturbed
  EncodeResult probe = encode(m, moved);
  REQUIRE(probe.orders == base.orders);

  double prefix = 0, tail = 0;
  for (int64_t r = 0; r < base.features.dim(0); ++r)
    for (int64_t ch = 0; ch < cfg.embed_dim; ++ch) {
      double d = std::fabs(probe.features.data()[r * cfg.embed_dim + ch] -
                           base.features.data()[r * cfg.embed_dim + ch]);
      if (r < pick_rank)
        prefix = std::max(prefix, d);
      else
        tail = std::max(tail, d);
    }
  CHECK(prefix == 0.0);
  CHECK(tail > 0.0);
}

TEST_CASE("classification head matches a hand-computed pooling path") {
  Rng rng(28);
  ModelConfig cfg = tiny_config();
  Model m = init_model(cfg, ModelMode::classify, rng);
  const int64_t c = cfg.embed_dim, rows = 6;
  EncodeResult enc;
  enc.features = Tensor::uniform({rows, c}, rng, -1, 1);

  Rng drop_rng(1);
  Tensor logits = classify_logits(m, enc, false, drop_rng);
  REQUIRE(logits.numel() == cfg.num_classes);

  std::vector<double> pooled(static_cast<size_t>(c), 0.0);
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t ch = 0; ch < c; ++ch)
      pooled[size_t(ch)] += enc.features.data()[r * c + ch] / double(rows);
  std::vector<double> hidden(256);
  for (int64_t o = 0; o < 256; ++o) {
    double acc = m.head.b1.data()[o];
    for (int64_t i = 0; i < c; ++i)
      acc += pooled[size_t(i)] * m.head.w1.data()[i * 256 + o];
    hidden[size_t(o)] = std::max(acc, 0.0);
  }
  for (int64_t o = 0; o < cfg.num_classes; ++o) {
    double acc = m.head.b2.data()[o];
    for (int64_t i = 0; i < 256; ++i)
      acc += hidden[size_t(i)] * m.head.w2.data()[i * cfg.num_classes + o];
    CHECK(std::fabs(logits.data()[o] - acc) <= 1e-12);
  }

  // zero head -> zero logits
  Model zero = m;
  for (Tensor* t : {&zero.head.w1, &zero.head.b1, &zero.head.w2, &zero.head.b2})
    for (int64_t i = 0; i < t->numel(); ++i) t->data()[i] = 0.0;
  Tensor z = classify_logits(zero, enc, false, drop_rng);
  for (int64_t i = 0; i < z.numel(); ++i) CHECK(z.data()[i] == 0.0);

  // class-token pooling reads exactly the class-token row
  ModelConfig cls_cfg = cfg;
  cls_cfg.pooling = Pooling::cls_middle;
  Model mc = init_model(cls_cfg, ModelMode::classify, rng);
  EncodeResult enc2;
  enc2.features = enc.features;
  enc2.cls_index = 2;
  Tensor via_cls = classify_logits(mc, enc2, false, drop_rng);
  std::vector<double> row(static_cast<size_t>(c));
  for (int64_t ch = 0; ch < c; ++ch)
    row[size_t(ch)] = enc.features.data()[2 * c + ch];
  for (int64_t o = 0; o < 256; ++o) {
    double acc = mc.head.b1.data()[o];
    for (int64_t i = 0; i < c; ++i)
      acc += row[size_t(i)] * mc.head.w1.data()[i * 256 + o];
    hidden[size_t(o)] = std::max(acc, 0.0);
  }
  for (int64_t o = 0; o < cfg.num_classes; ++o) {
    double acc = mc.head.b2.data()[o];
    for (int64_t i = 0; i < 256; ++i)
      acc += hidden[size_t(i)] * mc.head.w2.data()[i * cfg.num_classes + o];
    CHECK(std::fabs(via_cls.data()[o] - acc) <= 1e-12);
  }

  EncodeResult empty;
  CHECK_THROWS_AS((void)classify_logits(m, empty, false, drop_rng),
                  std::invalid_argument);
}

TEST_CASE("mask selection: counts, determinism, uniformity") {
  Rng a(99), b(99);
  MaskSelection s1 = choose_mask(10, 0.6, a);
  MaskSelection s2 = choose_mask(10, 0.6, b);
  CHECK(s1.masked.size() == 6);
  CHECK(s1.visible.size() == 4);
  CHECK(s1.masked == s2.masked);
  CHECK(s1.visible == s2.visible);
  CHECK(std::is_sorted(s1.masked.begin(), s1.masked.end()));
  CHECK(std::is_sorted(s1.visible.begin(), s1.visible.end()));

  Rng c(5);
  CHECK_THROWS_AS((void)choose_mask(10, 0.05, c), std::invalid_argument);
  CHECK_THROWS_AS((void)choose_mask(10, 0.0, c), std::invalid_argument);
  CHECK_THROWS_AS((void)choose_mask(10, 1.0, c), std::invalid_argument);
  MaskSelection lopsided = choose_mask(10, 0.99, c);
  CHECK(lopsided.masked.size() == 9);
  CHECK(lopsided.visible.size() == 1);

  // every position is masked at a rate close to the ratio
  const int64_t n = 64, draws = 10000;
  std::vector<int64_t> hits(static_cast<size_t>(n), 0);
  Rng mc_rng(123);
  for (int64_t d = 0; d < draws; ++d) {
    MaskSelection s = choose_mask(n, 0.6, mc_rng);
    for (int64_t pos : s.masked) ++hits[size_t(pos)];
  }
  for (int64_t i = 0; i < n; ++i) {
    double freq = double(hits[size_t(i)]) / double(draws);
    CHECK(freq >= 0.58);
    CHECK(freq <= 0.62);
  }
}

TEST_CASE("reconstruction loss is finite, positive, and seed-deterministic") {
  Rng rng(30);
  PointCloud cloud = sphere_cloud(64, rng);
  ModelConfig cfg = tiny_config();
  Model m = init_model(cfg, ModelMode::pretrain, rng);

  Rng mask1(7), mask2(7);
  ReconstructResult r1 = reconstruct(m, cloud, 0, mask1);
  ReconstructResult r2 = reconstruct(m, cloud, 0, mask2);
  CHECK(std::isfinite(r1.loss.item()));
  CHECK(r1.loss.item() > 0.0);
  CHECK(r1.loss.item() == r2.loss.item());
  CHECK(r1.mask.masked == r2.mask.masked);
  CHECK(r1.predicted.dim(0) == int64_t(r1.mask.masked.size()));
  CHECK(r1.predicted.dim(1) == cfg.patch_size * 3);

  Rng mask3(8);
  ReconstructResult r3 = reconstruct(m, cloud, 1, mask3);
  CHECK(r3.loss.item() != r1.loss.item());

  Model mc = init_model(cfg, ModelMode::classify, rng);
  Rng mask4(9);
  CHECK_THROWS_AS((void)reconstruct(mc, cloud, 0, mask4), std::logic_error);
  CHECK_THROWS_AS((void)reconstruct(m, cloud, 7, mask4), std::invalid_argument);
}

TEST_CASE("extra removals after a visible prefix do not disturb its encoding") {
  Rng rng(31);
  PointCloud cloud = random_cloud(64, rng);
  ModelConfig cfg = tiny_config();
  Model m = init_model(cfg, ModelMode::pretrain, rng);
  PatchSet ps = build_patch_set(cloud, cfg);
  std::vector<int64_t> order =
      serialize(ps.key_points, cfg.curves[0], cfg.grid_bits).order;

  // both visible sets share ranks {0,1,2}; they differ only later
  std::vector<int64_t> vis_a = {0, 1, 2, 3, 4, 5};
  std::vector<int64_t> vis_b = {0, 1, 2, 6, 7};
  Tensor enc_a = encode_visible(m, ps, order, vis_a, 0);
  Tensor enc_b = encode_visible(m, ps, order, vis_b, 0);
  const int64_t c = cfg.embed_dim;
  for (int64_t r = 0; r < 3; ++r)
    for (int64_t ch = 0; ch < c; ++ch)
      CHECK(enc_a.data()[r * c + ch] == enc_b.data()[r * c + ch]);
}

TEST_CASE("gradient checks through classification and reconstruction") {
  Rng rng(32);
  ModelConfig cfg = tiny_config(8, 4, 32, 2, 1);
  PointCloud cloud = random_cloud(64, rng);
  Model m = init_model(cfg, ModelMode::classify, rng);

  auto class_loss = [&]() {
    EncodeResult enc = encode(m, cloud);
    Rng drop_rng(1);
    Tensor logits = classify_logits(m, enc, false, drop_rng);
    return softmax_cross_entropy(logits, 2);
  };
  auto param_check = [&](Tensor& slot, auto loss_fn) {
    Tensor original = slot.clone();
    double err = grad_check(
        [&](const Tensor& t) {
          slot = t;
          Tensor out = loss_fn();
          slot = original;
          return out;
        },
        original, 1e-5);
    return err;
  };
  CHECK(param_check(m.ind_gamma, class_loss) < 1e-4);
  CHECK(param_check(m.head.b2, class_loss) < 1e-4);
  CHECK(param_check(m.pos.b2, class_loss) < 1e-4);
  CHECK(param_check(m.encoder[0].ssm.dt_bias, class_loss) < 1e-4);
  CHECK(param_check(m.encoder[1].ln_gamma, class_loss) < 1e-4);

  ModelConfig pre_cfg = tiny_config(8, 4, 16, 1, 1);
  Model mp = init_model(pre_cfg, ModelMode::pretrain, rng);
  auto recon_loss = [&]() {
    Rng mask_rng(11);
    return reconstruct(mp, cloud, 0, mask_rng).loss;
  };
  CHECK(param_check(mp.mask_token, recon_loss) < 1e-4);
  CHECK(param_check(mp.recon_b, recon_loss) < 1e-4);
  CHECK(param_check(mp.ind_beta, recon_loss) < 1e-4);
  CHECK(param_check(mp.decoder[0].conv_bias, recon_loss) < 1e-4);
}
