#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointssm/curves.hpp"
#include "pointssm/geometry.hpp"
#include "pointssm/ssm.hpp"
#include "pointssm/tensor.hpp"

// Full network assembly: patch tokenizer, curve order indicators, block
// stack, classification head, and the masked reconstruction path.
namespace pointssm {

enum class Pooling { avg, max, cls_before, cls_after, cls_middle };
Pooling pooling_from_string(const std::string& name);
std::string pooling_to_string(Pooling p);

// Which parameter groups a model instance owns.
enum class ModelMode { pretrain, classify };

struct ModelConfig {
  int64_t num_points = 1024;   // points per input cloud
  int64_t num_patches = 64;    // key points selected by FPS
  int64_t patch_size = 32;     // neighbors per patch (includes the key point)
  int64_t embed_dim = 384;     // token width C
  int64_t encoder_layers = 12;
  int64_t decoder_layers = 4;
  double mask_ratio = 0.6;
  std::vector<CurveSpec> curves = {{CurveKind::hilbert, 0},
                                   {CurveKind::trans_hilbert, 0}};
  int grid_bits = 9;
  int64_t num_classes = 15;
  BlockKind block_kind = BlockKind::selective_ssm;  // encoder mixer variant
  Pooling pooling = Pooling::avg;
  int64_t state_dim = 16;
  int64_t conv_kernel = 4;
  int64_t expand = 2;

  int64_t inner() const { return expand * embed_dim; }
  int64_t dt_rank() const { return (embed_dim + 15) / 16; }
  bool uses_cls_token() const {
    return pooling == Pooling::cls_before || pooling == Pooling::cls_after ||
           pooling == Pooling::cls_middle;
  }
  void validate() const;  // throws ConfigError with every violation listed

  // Small profile for laptop-scale experiments and tests.
  static ModelConfig desk_profile();
  // Published-scale dimensions, used for parameter accounting.
  static ModelConfig paper_profile();
};

// Per-point MLP 3->128->256, max over the patch, global vector concatenated
// back per point, 512->512->C, max again.
struct TokenizerParams {
  Tensor w1, b1, w2, b2;  // 3->128->256
  Tensor w3, b3, w4, b4;  // 512->512->C
};

struct MlpPairParams {
  Tensor w1, b1, w2, b2;
};

struct Model {
  ModelConfig config;
  ModelMode mode = ModelMode::classify;
  TokenizerParams tokenizer;
  MlpPairParams pos;  // key-point coordinates -> 128 -> C
  Tensor ind_gamma;   // [curves, C] per-curve token scale
  Tensor ind_beta;    // [curves, C] per-curve token shift
  std::vector<MambaBlockParams> encoder;
  // classify mode only
  Tensor cls_token;    // [C], present when pooling uses a class token
  MlpPairParams head;  // C -> 256 -> num_classes
  // pretrain mode only
  std::vector<MambaBlockParams> decoder;  // always selective_ssm blocks
  Tensor mask_token;                      // [C]
  Tensor recon_w;                         // [C, patch_size*3]
  Tensor recon_b;                         // [patch_size*3]
};

Model init_model(const ModelConfig& cfg, ModelMode mode, Rng& rng);

struct NamedParam {
  std::string name;
  Tensor tensor;   // shares storage with the model tensor
  bool no_decay;   // true for biases, gains, and special state-space scalars
};
std::vector<NamedParam> named_parameters(Model& m);
int64_t total_parameters(const Model& m);
// Closed-form count; equals the sum over named_parameters.
int64_t count_parameters(const ModelConfig& cfg, ModelMode mode);
// The order-indicator share alone (2*C per configured curve).
int64_t indicator_parameters(const ModelConfig& cfg);

// Key points, their patches, and flattened relative coordinates, all in
// FPS selection order.
struct PatchSet {
  std::vector<int64_t> key_indices;
  PointCloud key_points;
  std::vector<PointPatch> patches;
  Tensor centers;     // [n, 3]
  Tensor rel_points;  // [n*k, 3]
};
PatchSet build_patch_set(const PointCloud& cloud, const ModelConfig& cfg,
                         int64_t fps_start = 0);

// rel[P*k, 3] -> [P, C] patch tokens; invariant to point order inside a patch.
Tensor tokenize_patches(const Tensor& rel, int64_t k, const TokenizerParams& t);
Tensor mlp_pair(const Tensor& x, const MlpPairParams& p);

struct EncodeResult {
  Tensor features;  // [G*n (+1 with cls), C]
  std::vector<std::vector<int64_t>> orders;  // serialized order per curve
  int64_t cls_index = -1;
  int64_t tokens_per_curve = 0;
};
EncodeResult encode(const Model& m, const PointCloud& cloud,
                    int64_t fps_start = 0);

// Pool + MLP head; dropout active only when train is true.
Tensor classify_logits(const Model& m, const EncodeResult& enc, bool train,
                       Rng& rng);

struct MaskSelection {
  std::vector<int64_t> visible;  // serialized ranks kept, ascending
  std::vector<int64_t> masked;   // serialized ranks hidden, ascending
};
// floor(ratio*n) masked positions drawn uniformly without replacement.
MaskSelection choose_mask(int64_t n, double ratio, Rng& rng);

// Encoder pass over the visible subsequence of one curve's serialized tokens.
Tensor encode_visible(const Model& m, const PatchSet& ps,
                      const std::vector<int64_t>& order,
                      const std::vector<int64_t>& visible, int curve_tag);

struct ReconstructResult {
  Tensor loss;       // scalar: mean Chamfer over masked patches
  Tensor predicted;  // [masked, k*3] relative coordinates
  std::vector<int64_t> order;
  MaskSelection mask;
  int curve_tag = 0;
  PatchSet patch_set;
};
ReconstructResult reconstruct(const Model& m, const PointCloud& cloud,
                              int curve_tag, Rng& mask_rng,
                              int64_t fps_start = 0);

}  // namespace pointssm
