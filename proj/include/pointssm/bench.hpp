#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointssm/ssm.hpp"

// Complexity accounting and a timing harness for the sequence-mixing blocks.
// The harness feeds a predefined random token sequence straight into one
// block (no point tokenizer), so the numbers isolate the mixer itself.
namespace pointssm {

// Block dimensions the counts depend on. Matches the model's conventions:
// inner = expand * width with expand fixed at 2, dt_rank = ceil(width / 16).
struct BlockDims {
  int64_t width = 32;
  int64_t state = 16;
  int64_t conv_kernel = 4;

  int64_t inner() const { return 2 * width; }
  int64_t dt_rank() const { return (width + 15) / 16; }
};

// Closed-form forward-pass FLOP count for one block at sequence length L.
// Convention: a multiply-accumulate is 2 FLOPs; activations, normalization,
// and softmax bookkeeping are counted per element with small fixed costs.
int64_t block_flops(BlockKind kind, int64_t length, const BlockDims& dims);

// The causal score + value-mixing term of masked attention alone: the part
// that is quadratic in L. Its doubling ratio tends to 4 from below because
// the causal triangle holds L(L+1)/2 pairs rather than L^2.
int64_t attention_score_flops(int64_t length, const BlockDims& dims);

// Rough high-water mark of transient buffer bytes for one forward pass as
// the harness runs it (attention uses the streaming path below, so both
// block kinds are linear in L here; time, not memory, carries the contrast).
int64_t block_peak_bytes(BlockKind kind, int64_t length, const BlockDims& dims);

// Forward pass of the masked-attention block computing one score row at a
// time instead of materializing the [L, L] matrix, so long sequences fit in
// memory. Matches block_forward on the same parameters to rounding error.
// Not differentiable: run it outside any gradient tape.
Tensor attention_forward_streaming(const Tensor& z, const MambaBlockParams& p);

struct BenchRow {
  int64_t length = 0;
  BlockKind kind = BlockKind::selective_ssm;
  double median_ms = 0.0;  // NaN when the row ran out of memory
  int64_t flops = 0;
  int64_t peak_bytes = 0;
  bool oom = false;
};

// Times one block forward on a fixed random [L, width] sequence, median over
// `repeat` runs. selective_ssm rows run block_forward; masked_attention rows
// run the streaming forward. An out-of-memory row is reported, not fatal.
BenchRow bench_block(BlockKind kind, int64_t length, const BlockDims& dims,
                     int repeat, uint64_t seed);

// CSV with header `length,block,median_ms,flops_estimate,peak_bytes_estimate`;
// out-of-memory rows carry the token `oom` in the median_ms column.
std::string bench_csv(const std::vector<BenchRow>& rows);

// One line per (kind, L -> 2L) pair present in the rows: measured wall-time
// ratio alongside the closed-form FLOP ratio.
std::string doubling_summary(const std::vector<BenchRow>& rows);

}  // namespace pointssm
