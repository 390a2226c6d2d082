#pragma once

#include <array>
#include <functional>
#include <vector>

#include "pointssm/tensor.hpp"

// Differentiable op library. Every op computes eagerly and, when a GradTape
// is active and some input requires grad, records a backward closure. Ops
// never mutate their inputs. Shapes are checked up front; outputs pass the
// finite guard.
namespace pointssm {

// -- elementwise ------------------------------------------------------------
Tensor add(const Tensor& a, const Tensor& b);   // same shape
Tensor sub(const Tensor& a, const Tensor& b);   // same shape
Tensor mul(const Tensor& a, const Tensor& b);   // same shape
Tensor scale(const Tensor& a, double s);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor silu(const Tensor& a);      // x * sigmoid(x)
Tensor softplus(const Tensor& a);  // log(1 + e^x), overflow-safe

// broadcast a row vector v[C] over the rows of x[..., C]
Tensor add_rowvec(const Tensor& x, const Tensor& v);
Tensor mul_rowvec(const Tensor& x, const Tensor& v);

// -- linear algebra ----------------------------------------------------------
Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K] x [K,N]
Tensor transpose2d(const Tensor& a);              // [M,N] -> [N,M]
// x[..., In] @ w[In, Out] (+ b[Out]); leading dims flattened
Tensor linear(const Tensor& x, const Tensor& w);
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// -- normalization / convolution ---------------------------------------------
// Per-row layer norm over the last dimension with affine gamma/beta[C].
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
// Causal per-channel convolution: x[L,C], kernel[K,C], bias[C]; the input is
// zero-padded with K-1 steps on the left, so out[t] sees x[t-K+1..t] only and
// kernel row K-1 multiplies the current step.
Tensor causal_depthwise_conv1d(const Tensor& x, const Tensor& kernel,
                               const Tensor& bias);

// -- reductions / shape ------------------------------------------------------
Tensor max_rows(const Tensor& x);   // [R,C] -> [C], channel-wise max
Tensor mean_rows(const Tensor& x);  // [R,C] -> [C]
Tensor sum_all(const Tensor& x);    // -> scalar
Tensor mean_all(const Tensor& x);   // -> scalar
// x[n*seg, C] -> [n, C]: channel max within each consecutive segment
Tensor segment_max(const Tensor& x, int64_t seg);
// g[n, C] -> [n*seg, C]: repeat each row seg times
Tensor segment_broadcast(const Tensor& g, int64_t seg);
Tensor broadcast_rows(const Tensor& v, int64_t rows);  // [C] -> [rows, C]
Tensor concat_rows(const std::vector<Tensor>& parts);  // [Ri,C] or [C] rows
Tensor concat_cols(const Tensor& a, const Tensor& b);  // [R,Ca] | [R,Cb]
Tensor gather_rows(const Tensor& x, const std::vector<int64_t>& rows);
Tensor reshape(const Tensor& x, std::vector<int64_t> shape);  // same numel

// per-row affine selected by tag: out[r] = x[r] * gamma[tag[r]] + beta[tag[r]]
Tensor rowwise_affine_by_tag(const Tensor& x, const std::vector<int>& tags,
                             const Tensor& gamma, const Tensor& beta);

// -- attention / losses -------------------------------------------------------
// scores[L,L] -> row-stochastic lower-triangular attention weights
Tensor causal_masked_softmax(const Tensor& scores);
// inverted dropout, identity when train == false
Tensor dropout(const Tensor& x, double p, Rng& rng, bool train);
// logits[K] (1-D) vs integer label -> scalar NLL
Tensor softmax_cross_entropy(const Tensor& logits, int64_t label);
// Two-sided mean squared Chamfer between pred[P,3] and a fixed target set,
// differentiable w.r.t. pred.
Tensor chamfer_to_fixed(const Tensor& pred,
                        const std::vector<std::array<double, 3>>& target);

// -- selective scan -----------------------------------------------------------
// Recurrence over u[L,D] with per-step discretization:
//   abar = exp(A*delta), bbar = ((exp(A*delta)-1)/A)*B   (ZOH)
//   h_t = abar*h_{t-1} + bbar*u_t,  y_t = C_t . h_t + D*u_t
// bbar falls back to delta*B when |A*delta| < 1e-4 or simplified_b is set.
// A[D,N] (negative), delta[L,D] (positive), B,C [L,N], d_skip[D].
// Backward recomputes hidden states chunk-wise from checkpoints.
Tensor selective_scan(const Tensor& u, const Tensor& delta, const Tensor& A,
                      const Tensor& B, const Tensor& C, const Tensor& d_skip,
                      bool simplified_b);

// -- gradient checking ---------------------------------------------------------
// Central finite differences against the tape gradient for a scalar-valued f.
// Returns max over coordinates of |analytic - numeric| / max(|a|,|n|,1).
// f must be deterministic and must not retain state between calls.
double grad_check(const std::function<Tensor(const Tensor&)>& f,
                  const Tensor& point, double h = 1e-5);

}  // namespace pointssm
