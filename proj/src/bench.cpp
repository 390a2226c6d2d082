#include "pointssm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <new>
#include <sstream>
#include <stdexcept>

#include "pointssm/common.hpp"
#include "pointssm/ops.hpp"
#include "pointssm/rng.hpp"

namespace pointssm {

namespace {

// Per-element costs of the nonlinearities under the MAC = 2 convention.
constexpr int64_t kSiluCost = 4;      // sigmoid (exp, add, div) + multiply
constexpr int64_t kSoftplusCost = 4;  // exp, add, log (+ guard)
constexpr int64_t kLayerNormCost = 7; // mean, variance, normalize, affine
constexpr int64_t kSoftmaxCost = 5;   // max-subtract, exp, sum, divide

// Shared by every kind: pre-norm, main/gate projections, gate activation,
// gating product, output projection, residual add.
int64_t shell_flops(int64_t l, const BlockDims& d) {
  int64_t c = d.width, in = d.inner();
  return kLayerNormCost * l * c  // layer norm
         + 2 * l * c * in        // main projection
         + 2 * l * c * in        // gate projection
         + kSiluCost * l * in    // gate SiLU
         + l * in                // mixed * gate
         + 2 * l * in * c        // output projection
         + l * c;                // residual
}

int64_t ssm_mixer_flops(int64_t l, const BlockDims& d) {
  int64_t in = d.inner(), n = d.state, k = d.conv_kernel, r = d.dt_rank();
  int64_t flops = 2 * l * in * k + l * in;  // depthwise conv + bias
  flops += kSiluCost * l * in;              // conv activation
  flops += 2 * l * in * n;                  // B projection
  flops += 2 * l * in * n;                  // C projection
  flops += 2 * l * in * r + 2 * l * r * in + l * in;  // low-rank dt + bias
  flops += kSoftplusCost * l * in;          // dt softplus
  // Per (t, channel, state): discretize A and B (5), advance the recurrence
  // (4), read out through C (2).
  flops += 11 * l * in * n;
  flops += 2 * l * in;  // D skip
  return flops;
}

}  // namespace

int64_t attention_score_flops(int64_t length, const BlockDims& dims) {
  int64_t in = dims.inner();
  int64_t pairs = length * (length + 1) / 2;  // causal triangle
  // Per pair: score dot product (2*inner) + scale (1), softmax bookkeeping
  // (kSoftmaxCost), value mix (2*inner).
  return pairs * (2 * in + 1 + kSoftmaxCost + 2 * in);
}

int64_t block_flops(BlockKind kind, int64_t length, const BlockDims& dims) {
  if (length < 1) throw std::invalid_argument("block_flops: length must be >= 1");
  int64_t l = length, in = dims.inner();
  int64_t flops = shell_flops(l, dims);
  switch (kind) {
    case BlockKind::selective_ssm:
      flops += ssm_mixer_flops(l, dims);
      break;
    case BlockKind::identity:
      break;
    case BlockKind::masked_attention:
      flops += 3 * 2 * l * in * in;  // q, k, v projections
      flops += attention_score_flops(l, dims);
      break;
    case BlockKind::mlp:
      flops += 2 * (2 * l * in * in + l * in);  // two biased linears
      flops += l * in;                          // relu
      break;
  }
  return flops;
}

int64_t block_peak_bytes(BlockKind kind, int64_t length, const BlockDims& dims) {
  int64_t l = length, c = dims.width, in = dims.inner();
  // Live at the gating product: normalized input, main, gate, mixed, product,
  // output, residual copy.
  int64_t doubles = 3 * l * c + 4 * l * in;
  switch (kind) {
    case BlockKind::selective_ssm:
      // conv output + activation + dt/B/C projections + scan output.
      doubles += 4 * l * in + 2 * l * dims.state + l * dims.dt_rank();
      break;
    case BlockKind::identity:
      break;
    case BlockKind::masked_attention:
      doubles += 3 * l * in + l;  // q, k, v + one streaming score row
      break;
    case BlockKind::mlp:
      doubles += 2 * l * in;
      break;
  }
  return 8 * doubles;
}

Tensor attention_forward_streaming(const Tensor& z, const MambaBlockParams& p) {
  if (p.kind != BlockKind::masked_attention)
    throw std::invalid_argument(
        "attention_forward_streaming: params must use the masked_attention kind");
  if (z.ndim() != 2 || z.dim(1) != p.width)
    throw std::invalid_argument(
        "attention_forward_streaming: input must be [L, width]");
  Tensor zp = layer_norm(z, p.ln_gamma, p.ln_beta);
  Tensor main = linear(zp, p.w_main);
  Tensor gate = silu(linear(zp, p.w_gate));
  Tensor qm = linear(main, p.w_q);
  Tensor km = linear(main, p.w_k);
  Tensor vm = linear(main, p.w_v);

  const int64_t l = z.dim(0), in = p.inner;
  const double inv_scale = 1.0 / std::sqrt(double(in));
  Tensor mixed = Tensor::zeros({l, in});
  std::vector<double> row(static_cast<size_t>(l));
  for (int64_t i = 0; i < l; ++i) {
    const double* qi = qm.data() + i * in;
    double peak = -std::numeric_limits<double>::infinity();
    for (int64_t j = 0; j <= i; ++j) {
      const double* kj = km.data() + j * in;
      double s = 0.0;
      for (int64_t d = 0; d < in; ++d) s += qi[d] * kj[d];
      s *= inv_scale;
      row[size_t(j)] = s;
      peak = std::max(peak, s);
    }
    double denom = 0.0;
    for (int64_t j = 0; j <= i; ++j) {
      row[size_t(j)] = std::exp(row[size_t(j)] - peak);
      denom += row[size_t(j)];
    }
    double* out = mixed.data() + i * in;
    for (int64_t j = 0; j <= i; ++j) {
      const double w = row[size_t(j)] / denom;
      const double* vj = vm.data() + j * in;
      for (int64_t d = 0; d < in; ++d) out[d] += w * vj[d];
    }
  }
  return add(linear(mul(mixed, gate), p.w_out), z);
}

BenchRow bench_block(BlockKind kind, int64_t length, const BlockDims& dims,
                     int repeat, uint64_t seed) {
  if (repeat < 1) throw std::invalid_argument("bench_block: repeat must be >= 1");
  if (kind != BlockKind::selective_ssm && kind != BlockKind::masked_attention)
    throw std::invalid_argument(
        "bench_block: only selective_ssm and masked_attention are benchmarked");
  BenchRow row;
  row.length = length;
  row.kind = kind;
  row.flops = block_flops(kind, length, dims);
  row.peak_bytes = block_peak_bytes(kind, length, dims);
  try {
    Rng rng(derive_seed(seed, "bench", uint64_t(length)));
    MambaBlockParams params = init_block(kind, dims.width, dims.inner(),
                                         dims.state, dims.dt_rank(),
                                         dims.conv_kernel, rng);
    Tensor input = Tensor::uniform({length, dims.width}, rng, -1.0, 1.0);
    std::vector<double> times_ms(static_cast<size_t>(repeat));
    for (int r = 0; r < repeat; ++r) {
      auto begin = std::chrono::steady_clock::now();
      Tensor out = kind == BlockKind::selective_ssm
                       ? block_forward(input, params)
                       : attention_forward_streaming(input, params);
      auto end = std::chrono::steady_clock::now();
      if (!std::isfinite(out.data()[0]))
        throw NumericError("bench_block: non-finite output");
      times_ms[size_t(r)] =
          std::chrono::duration<double, std::milli>(end - begin).count();
    }
    std::sort(times_ms.begin(), times_ms.end());
    size_t mid = times_ms.size() / 2;
    row.median_ms = times_ms.size() % 2 == 1
                        ? times_ms[mid]
                        : 0.5 * (times_ms[mid - 1] + times_ms[mid]);
  } catch (const std::bad_alloc&) {
    row.oom = true;
    row.median_ms = std::numeric_limits<double>::quiet_NaN();
  }
  return row;
}

std::string bench_csv(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  out << "length,block,median_ms,flops_estimate,peak_bytes_estimate\n";
  for (const BenchRow& r : rows) {
    out << r.length << ',' << block_kind_to_string(r.kind) << ',';
    if (r.oom) {
      out << "oom";
    } else {
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.6f", r.median_ms);
      out << buf;
    }
    out << ',' << r.flops << ',' << r.peak_bytes << '\n';
  }
  return out.str();
}

std::string doubling_summary(const std::vector<BenchRow>& rows) {
  std::ostringstream out;
  for (const BenchRow& hi : rows) {
    for (const BenchRow& lo : rows) {
      if (lo.kind != hi.kind || hi.length != 2 * lo.length) continue;
      out << block_kind_to_string(hi.kind) << " " << lo.length << " -> "
          << hi.length << ": ";
      if (lo.oom || hi.oom) {
        out << "time ratio unavailable (oom)";
      } else {
        char buf[64];
        std::snprintf(buf, sizeof buf, "time ratio %.2f",
                      hi.median_ms / lo.median_ms);
        out << buf;
      }
      char fbuf[64];
      std::snprintf(fbuf, sizeof fbuf, ", flops ratio %.3f",
                    double(hi.flops) / double(lo.flops));
      out << fbuf << '\n';
    }
  }
  return out.str();
}

}  // namespace pointssm
