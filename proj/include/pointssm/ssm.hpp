#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pointssm/rng.hpp"
#include "pointssm/tensor.hpp"

namespace pointssm {

// Parameters of one selective state-space mixer over sequences of width
// `inner`. The state transition is diagonal: A = -exp(a_log), one negative
// value per (channel, state) pair, which keeps every discretized step a
// contraction.
struct SelectiveSsmParams {
  int64_t inner = 0;
  int64_t state = 0;    // N
  int64_t dt_rank = 0;  // low-rank width of the step-size projection
  Tensor a_log;         // [inner, state]
  Tensor d_skip;        // [inner]
  Tensor w_b;           // [inner, state]
  Tensor w_c;           // [inner, state]
  Tensor w_dt_down;     // [inner, dt_rank]
  Tensor w_dt_up;       // [dt_rank, inner]
  Tensor dt_bias;       // [inner]
};

SelectiveSsmParams init_selective_ssm(int64_t inner, int64_t state,
                                      int64_t dt_rank, Rng& rng);

// Input-dependent per-timestep quantities.
struct SelectiveParameters {
  Tensor b_seq;   // [L, state]
  Tensor c_seq;   // [L, state]
  Tensor dt_pre;  // [L, inner], pre-activation of the step size
  Tensor dt;      // [L, inner], softplus(dt_pre) > 0
};

SelectiveParameters selective_parameters(const Tensor& x,
                                         const SelectiveSsmParams& p);

// A = -exp(a_log)
Tensor a_from_log(const Tensor& a_log);

// Exact zero-order-hold discretization of a diagonal system for one step:
// abar = exp(a*dt), bbar = (exp(a*dt) - 1)/a * b, with the series limit
// dt*b when |a*dt| < 1e-4. Plain-number helper used by oracles and tests.
void zoh_discretize(const std::vector<double>& a_diag,
                    const std::vector<double>& b_t, double dt,
                    std::vector<double>& abar_out,
                    std::vector<double>& bbar_out);

// Recurrent forward pass: h_t = abar_t h_{t-1} + bbar_t x_t,
// y_t = c_t . h_t + d x_t, h_0 = 0. Differentiable; O(L*inner*state) time.
Tensor ssm_scan(const Tensor& x, const SelectiveSsmParams& p,
                bool simplified_b = false);

// O(L^2) materialization of the same map through cumulative-sum exponents
// (a genuinely different floating-point route than the scan's repeated
// products). Test oracle only; rejects L > 256. Not differentiable.
Tensor ssm_matrix_form(const Tensor& x, const SelectiveSsmParams& p,
                       bool simplified_b = false);

// Full hidden-state history as plain numbers, row-major [L][inner][state].
// Not differentiable; used by the partition probe and stability checks.
std::vector<double> scan_hidden_states(const Tensor& x,
                                       const SelectiveSsmParams& p,
                                       bool simplified_b = false);

enum class TransferMode { exact, relu_approx };

// The sequence map written as an explicit lower-triangular operator
// y'[i][d] = sum_j w[i][j][d] * x[j][d] (the d_skip term excluded), together
// with its rank-one-per-state factors: w[i][j][d] = sum_n q(i,n) *
// t(i,j,d,n) * k(j,d,n). In relu_approx mode the cumulative step-size sums
// inside t() use relu of the pre-activation instead of softplus.
struct TransferMatrixView {
  int64_t length = 0;
  int64_t inner = 0;
  int64_t state = 0;
  std::vector<double> w;       // [L][L][inner], exactly 0 above the diagonal
  std::vector<double> q;       // [L][state]
  std::vector<double> k;       // [L][inner][state]
  std::vector<double> a_diag;  // [inner][state]
  std::vector<double> decay_prefix;  // [L][inner] inclusive step-size sums

  double w_at(int64_t i, int64_t j, int64_t d) const;
  double q_at(int64_t i, int64_t n) const;
  double k_at(int64_t j, int64_t d, int64_t n) const;
  // exp(a_dn * (S_i - S_j)); equals 1 when i == j
  double t_at(int64_t i, int64_t j, int64_t d, int64_t n) const;
  // y'[i][d] = sum_{j<=i} w[i][j][d] x[j][d]
  std::vector<double> apply(const Tensor& x) const;
};

TransferMatrixView transfer_matrix(const Tensor& x, const SelectiveSsmParams& p,
                                   TransferMode mode,
                                   bool simplified_b = false);

// Sequence-mixing blocks: pre-norm, a projected main branch fed to a token
// mixer, a SiLU gate, and a projected residual. The selective_ssm kind runs
// conv -> SiLU -> scan as its mixer; identity passes the projection through;
// masked_attention is single-head causal attention; mlp acts per position.
enum class BlockKind { selective_ssm, identity, masked_attention, mlp };

BlockKind block_kind_from_string(const std::string& name);
std::string block_kind_to_string(BlockKind kind);

struct MambaBlockParams {
  BlockKind kind = BlockKind::selective_ssm;
  int64_t width = 0;  // C
  int64_t inner = 0;  // expand * C
  Tensor ln_gamma;    // [C]
  Tensor ln_beta;     // [C]
  Tensor w_main;      // [C, inner]
  Tensor w_gate;      // [C, inner]
  Tensor w_out;       // [inner, C]
  // selective_ssm kind only
  Tensor conv_kernel;  // [K, inner]
  Tensor conv_bias;    // [inner]
  SelectiveSsmParams ssm;
  // masked_attention kind only
  Tensor w_q, w_k, w_v;  // [inner, inner]
  // mlp kind only
  Tensor w_mlp1, b_mlp1;  // [inner, inner], [inner]
  Tensor w_mlp2, b_mlp2;  // [inner, inner], [inner]
};

MambaBlockParams init_block(BlockKind kind, int64_t width, int64_t inner,
                            int64_t state, int64_t dt_rank, int64_t conv_k,
                            Rng& rng);

Tensor block_forward(const Tensor& z, const MambaBlockParams& p,
                     bool simplified_b = false);

// The standard block: block_forward with the selective_ssm mixer.
Tensor mamba_block(const Tensor& z, const MambaBlockParams& p,
                   bool simplified_b = false);

// Splits the sequence in half, perturbs one half, and measures how much each
// half's hidden states move. The first half must be exactly unaffected by
// tail perturbations (strict causality); information must generically flow
// forward across the boundary.
struct PartitionProbeReport {
  double head_change_on_tail_perturb = 0;  // max |dh_t|, t <= L/2 (must be 0)
  double tail_change_on_tail_perturb = 0;  // max |dh_t|, t > L/2
  double tail_change_on_head_perturb = 0;  // max |dh_t|, t > L/2
};

PartitionProbeReport block_partition_probe(const Tensor& x,
                                           const SelectiveSsmParams& p,
                                           uint64_t seed);

}  // namespace pointssm
