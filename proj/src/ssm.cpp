#include "pointssm/ssm.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pointssm/ops.hpp"

namespace pointssm {

namespace {

constexpr double kSeriesCutoff = 1e-4;
constexpr int64_t kOracleMaxLen = 256;

// coefficient multiplying b in the discretized input weight
double bbar_coef(double a, double dt, bool simplified) {
  double z = a * dt;
  if (simplified || std::fabs(z) < kSeriesCutoff) return dt;
  return (std::exp(z) - 1.0) / a;
}

double softplus_val(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }

void check_input(const Tensor& x, const SelectiveSsmParams& p, const char* op) {
  if (x.ndim() != 2 || x.dim(1) != p.inner)
    throw std::invalid_argument(std::string(op) + ": input must be [L, inner]");
  if (x.dim(0) < 1)
    throw std::invalid_argument(std::string(op) + ": empty sequence");
}

// projections evaluated with plain loops, independent of the tensor op
// implementations; used by the oracles and probes
struct PlainSelective {
  std::vector<double> b, c;        // [L][state]
  std::vector<double> dt_pre, dt;  // [L][inner]
  std::vector<double> a;           // [inner][state]
  std::vector<double> d;           // [inner]
};

PlainSelective plain_selective(const Tensor& x, const SelectiveSsmParams& p) {
  int64_t l = x.dim(0), din = p.inner, n = p.state, r = p.dt_rank;
  PlainSelective out;
  out.b.assign(size_t(l * n), 0.0);
  out.c.assign(size_t(l * n), 0.0);
  out.dt_pre.assign(size_t(l * din), 0.0);
  out.dt.assign(size_t(l * din), 0.0);
  out.a.assign(size_t(din * n), 0.0);
  out.d.assign(size_t(din), 0.0);
  for (int64_t dd = 0; dd < din; ++dd) {
    out.d[size_t(dd)] = p.d_skip.data()[dd];
    for (int64_t s = 0; s < n; ++s)
      out.a[size_t(dd * n + s)] = -std::exp(p.a_log.data()[dd * n + s]);
  }
  std::vector<double> low(static_cast<size_t>(r));
  for (int64_t t = 0; t < l; ++t) {
    const double* xr = x.data() + t * din;
    for (int64_t s = 0; s < n; ++s) {
      double accb = 0, accc = 0;
      for (int64_t dd = 0; dd < din; ++dd) {
        accb += xr[dd] * p.w_b.data()[dd * n + s];
        accc += xr[dd] * p.w_c.data()[dd * n + s];
      }
      out.b[size_t(t * n + s)] = accb;
      out.c[size_t(t * n + s)] = accc;
    }
    for (int64_t rr = 0; rr < r; ++rr) {
      double acc = 0;
      for (int64_t dd = 0; dd < din; ++dd)
        acc += xr[dd] * p.w_dt_down.data()[dd * r + rr];
      low[size_t(rr)] = acc;
    }
    for (int64_t dd = 0; dd < din; ++dd) {
      double acc = p.dt_bias.data()[dd];
      for (int64_t rr = 0; rr < r; ++rr)
        acc += low[size_t(rr)] * p.w_dt_up.data()[rr * din + dd];
      out.dt_pre[size_t(t * din + dd)] = acc;
      out.dt[size_t(t * din + dd)] = softplus_val(acc);
    }
  }
  return out;
}

}  // namespace

SelectiveSsmParams init_selective_ssm(int64_t inner, int64_t state,
                                      int64_t dt_rank, Rng& rng) {
  if (inner < 1 || state < 1 || dt_rank < 1)
    throw std::invalid_argument("init_selective_ssm: dimensions must be >= 1");
  SelectiveSsmParams p;
  p.inner = inner;
  p.state = state;
  p.dt_rank = dt_rank;
  // a_log so that A_n = -(n+1): negative real spectrum, larger n decays faster
  p.a_log = Tensor::empty({inner, state}, true);
  for (int64_t d = 0; d < inner; ++d)
    for (int64_t n = 0; n < state; ++n)
      p.a_log.data()[d * state + n] = std::log(double(n + 1));
  p.d_skip = Tensor::full({inner}, 1.0, true);
  double wb = 1.0 / std::sqrt(double(inner));
  p.w_b = Tensor::uniform({inner, state}, rng, -wb, wb, true);
  p.w_c = Tensor::uniform({inner, state}, rng, -wb, wb, true);
  p.w_dt_down = Tensor::uniform({inner, dt_rank}, rng, -wb, wb, true);
  double wr = 1.0 / std::sqrt(double(dt_rank));
  p.w_dt_up = Tensor::uniform({dt_rank, inner}, rng, -wr, wr, true);
  // bias chosen so the initial step size is log-uniform in [1e-3, 1e-1]
  p.dt_bias = Tensor::empty({inner}, true);
  for (int64_t d = 0; d < inner; ++d) {
    double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
    p.dt_bias.data()[d] = std::log(std::expm1(dt));  // inverse softplus
  }
  return p;
}

SelectiveParameters selective_parameters(const Tensor& x,
                                         const SelectiveSsmParams& p) {
  check_input(x, p, "selective_parameters");
  SelectiveParameters out;
  out.b_seq = linear(x, p.w_b);
  out.c_seq = linear(x, p.w_c);
  out.dt_pre = add_rowvec(linear(linear(x, p.w_dt_down), p.w_dt_up), p.dt_bias);
  out.dt = softplus(out.dt_pre);
  return out;
}

Tensor a_from_log(const Tensor& a_log) { return neg(exp(a_log)); }

void zoh_discretize(const std::vector<double>& a_diag,
                    const std::vector<double>& b_t, double dt,
                    std::vector<double>& abar_out,
                    std::vector<double>& bbar_out) {
  if (dt <= 0) throw std::invalid_argument("zoh_discretize: dt must be positive");
  if (a_diag.size() != b_t.size())
    throw std::invalid_argument("zoh_discretize: a and b size mismatch");
  abar_out.resize(a_diag.size());
  bbar_out.resize(a_diag.size());
  for (size_t i = 0; i < a_diag.size(); ++i) {
    abar_out[i] = std::exp(a_diag[i] * dt);
    bbar_out[i] = bbar_coef(a_diag[i], dt, false) * b_t[i];
  }
}

Tensor ssm_scan(const Tensor& x, const SelectiveSsmParams& p,
                bool simplified_b) {
  check_input(x, p, "ssm_scan");
  SelectiveParameters sp = selective_parameters(x, p);
  Tensor a = a_from_log(p.a_log);
  return selective_scan(x, sp.dt, a, sp.b_seq, sp.c_seq, p.d_skip, simplified_b);
}

Tensor ssm_matrix_form(const Tensor& x, const SelectiveSsmParams& p,
                       bool simplified_b) {
  check_input(x, p, "ssm_matrix_form");
  int64_t l = x.dim(0), din = p.inner, n = p.state;
  if (l > kOracleMaxLen)
    throw std::invalid_argument("ssm_matrix_form: oracle limited to L <= 256");
  PlainSelective sp = plain_selective(x, p);
  // inclusive per-channel step-size prefix sums: the decay from step i to
  // step t is exp(a * (prefix[t] - prefix[i])), one exp of a sum rather than
  // the scan's product of exps
  std::vector<double> prefix(size_t(l * din), 0.0);
  for (int64_t d = 0; d < din; ++d) {
    double run = 0;
    for (int64_t t = 0; t < l; ++t) {
      run += sp.dt[size_t(t * din + d)];
      prefix[size_t(t * din + d)] = run;
    }
  }
  Tensor y = Tensor::zeros({l, din});
  for (int64_t t = 0; t < l; ++t)
    for (int64_t d = 0; d < din; ++d) {
      double acc = 0;
      for (int64_t s = 0; s < n; ++s) {
        double a = sp.a[size_t(d * n + s)];
        double h = 0;
        for (int64_t i = 0; i <= t; ++i) {
          double decay = std::exp(a * (prefix[size_t(t * din + d)] -
                                       prefix[size_t(i * din + d)]));
          double bbar = bbar_coef(a, sp.dt[size_t(i * din + d)], simplified_b) *
                        sp.b[size_t(i * n + s)];
          h += decay * bbar * x.data()[i * din + d];
        }
        acc += sp.c[size_t(t * n + s)] * h;
      }
      y.data()[t * din + d] = acc + sp.d[size_t(d)] * x.data()[t * din + d];
    }
  return y;
}

std::vector<double> scan_hidden_states(const Tensor& x,
                                       const SelectiveSsmParams& p,
                                       bool simplified_b) {
  check_input(x, p, "scan_hidden_states");
  int64_t l = x.dim(0), din = p.inner, n = p.state;
  PlainSelective sp = plain_selective(x, p);
  std::vector<double> history(size_t(l * din * n), 0.0);
  std::vector<double> h(size_t(din * n), 0.0);
  for (int64_t t = 0; t < l; ++t) {
    for (int64_t d = 0; d < din; ++d) {
      double dt = sp.dt[size_t(t * din + d)];
      for (int64_t s = 0; s < n; ++s) {
        double a = sp.a[size_t(d * n + s)];
        double abar = std::exp(a * dt);
        double bbar = bbar_coef(a, dt, simplified_b) * sp.b[size_t(t * n + s)];
        h[size_t(d * n + s)] =
            abar * h[size_t(d * n + s)] + bbar * x.data()[t * din + d];
      }
    }
    std::copy(h.begin(), h.end(), history.begin() + t * din * n);
  }
  return history;
}

double TransferMatrixView::w_at(int64_t i, int64_t j, int64_t d) const {
  return w[size_t((i * length + j) * inner + d)];
}
double TransferMatrixView::q_at(int64_t i, int64_t n) const {
  return q[size_t(i * state + n)];
}
double TransferMatrixView::k_at(int64_t j, int64_t d, int64_t n) const {
  return k[size_t((j * inner + d) * state + n)];
}
double TransferMatrixView::t_at(int64_t i, int64_t j, int64_t d, int64_t n) const {
  if (j > i) return 0.0;
  double gap = decay_prefix[size_t(i * inner + d)] -
               decay_prefix[size_t(j * inner + d)];
  return std::exp(a_diag[size_t(d * state + n)] * gap);
}

std::vector<double> TransferMatrixView::apply(const Tensor& x) const {
  if (x.ndim() != 2 || x.dim(0) != length || x.dim(1) != inner)
    throw std::invalid_argument("transfer apply: input shape mismatch");
  std::vector<double> y(size_t(length * inner), 0.0);
  for (int64_t i = 0; i < length; ++i)
    for (int64_t j = 0; j <= i; ++j)
      for (int64_t d = 0; d < inner; ++d)
        y[size_t(i * inner + d)] += w_at(i, j, d) * x.data()[j * inner + d];
  return y;
}

TransferMatrixView transfer_matrix(const Tensor& x, const SelectiveSsmParams& p,
                                   TransferMode mode, bool simplified_b) {
  check_input(x, p, "transfer_matrix");
  int64_t l = x.dim(0), din = p.inner, n = p.state;
  if (l > kOracleMaxLen)
    throw std::invalid_argument("transfer_matrix: oracle limited to L <= 256");
  PlainSelective sp = plain_selective(x, p);
  TransferMatrixView view;
  view.length = l;
  view.inner = din;
  view.state = n;
  view.q = sp.c;
  view.a_diag = sp.a;
  view.k.assign(size_t(l * din * n), 0.0);
  for (int64_t t = 0; t < l; ++t)
    for (int64_t d = 0; d < din; ++d)
      for (int64_t s = 0; s < n; ++s)
        view.k[size_t((t * din + d) * n + s)] =
            bbar_coef(sp.a[size_t(d * n + s)], sp.dt[size_t(t * din + d)],
                      simplified_b) *
            sp.b[size_t(t * n + s)];
  // cumulative step sizes; the approximate mode swaps softplus for relu in
  // the exponent only, the per-step input weights keep the exact step size
  view.decay_prefix.assign(size_t(l * din), 0.0);
  for (int64_t d = 0; d < din; ++d) {
    double run = 0;
    for (int64_t t = 0; t < l; ++t) {
      run += mode == TransferMode::exact
                 ? sp.dt[size_t(t * din + d)]
                 : std::max(sp.dt_pre[size_t(t * din + d)], 0.0);
      view.decay_prefix[size_t(t * din + d)] = run;
    }
  }
  view.w.assign(size_t(l * l * din), 0.0);
  for (int64_t i = 0; i < l; ++i)
    for (int64_t j = 0; j <= i; ++j)
      for (int64_t d = 0; d < din; ++d) {
        double acc = 0;
        for (int64_t s = 0; s < n; ++s)
          acc += view.q_at(i, s) * view.t_at(i, j, d, s) * view.k_at(j, d, s);
        view.w[size_t((i * l + j) * din + d)] = acc;
      }
  return view;
}

BlockKind block_kind_from_string(const std::string& name) {
  if (name == "selective_ssm") return BlockKind::selective_ssm;
  if (name == "identity") return BlockKind::identity;
  if (name == "masked_attention") return BlockKind::masked_attention;
  if (name == "mlp") return BlockKind::mlp;
  throw std::invalid_argument(
      "block kind '" + name +
      "' unknown (expected selective_ssm, identity, masked_attention, mlp)");
}

std::string block_kind_to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::selective_ssm: return "selective_ssm";
    case BlockKind::identity: return "identity";
    case BlockKind::masked_attention: return "masked_attention";
    case BlockKind::mlp: return "mlp";
  }
  return "selective_ssm";
}

MambaBlockParams init_block(BlockKind kind, int64_t width, int64_t inner,
                            int64_t state, int64_t dt_rank, int64_t conv_k,
                            Rng& rng) {
  if (width < 1 || inner < 1)
    throw std::invalid_argument("init_block: dimensions must be >= 1");
  MambaBlockParams p;
  p.kind = kind;
  p.width = width;
  p.inner = inner;
  p.ln_gamma = Tensor::full({width}, 1.0, true);
  p.ln_beta = Tensor::zeros({width}, true);
  double wc = 1.0 / std::sqrt(double(width));
  p.w_main = Tensor::uniform({width, inner}, rng, -wc, wc, true);
  p.w_gate = Tensor::uniform({width, inner}, rng, -wc, wc, true);
  double wi = 1.0 / std::sqrt(double(inner));
  p.w_out = Tensor::uniform({inner, width}, rng, -wi, wi, true);
  switch (kind) {
    case BlockKind::selective_ssm: {
      if (conv_k < 1) throw std::invalid_argument("init_block: conv width must be >= 1");
      double wk = 1.0 / std::sqrt(double(conv_k));
      p.conv_kernel = Tensor::uniform({conv_k, inner}, rng, -wk, wk, true);
      p.conv_bias = Tensor::zeros({inner}, true);
      p.ssm = init_selective_ssm(inner, state, dt_rank, rng);
      break;
    }
    case BlockKind::identity:
      break;
    case BlockKind::masked_attention:
      p.w_q = Tensor::uniform({inner, inner}, rng, -wi, wi, true);
      p.w_k = Tensor::uniform({inner, inner}, rng, -wi, wi, true);
      p.w_v = Tensor::uniform({inner, inner}, rng, -wi, wi, true);
      break;
    case BlockKind::mlp:
      p.w_mlp1 = Tensor::uniform({inner, inner}, rng, -wi, wi, true);
      p.b_mlp1 = Tensor::zeros({inner}, true);
      p.w_mlp2 = Tensor::uniform({inner, inner}, rng, -wi, wi, true);
      p.b_mlp2 = Tensor::zeros({inner}, true);
      break;
  }
  return p;
}

Tensor block_forward(const Tensor& z, const MambaBlockParams& p,
                     bool simplified_b) {
  if (z.ndim() != 2 || z.dim(1) != p.width)
    throw std::invalid_argument("block_forward: input must be [L, width]");
  Tensor zp = layer_norm(z, p.ln_gamma, p.ln_beta);
  Tensor main = linear(zp, p.w_main);
  Tensor gate = silu(linear(zp, p.w_gate));
  Tensor mixed;
  switch (p.kind) {
    case BlockKind::selective_ssm:
      mixed = ssm_scan(silu(causal_depthwise_conv1d(main, p.conv_kernel,
                                                    p.conv_bias)),
                       p.ssm, simplified_b);
      break;
    case BlockKind::identity:
      mixed = main;
      break;
    case BlockKind::masked_attention: {
      Tensor qm = linear(main, p.w_q);
      Tensor km = linear(main, p.w_k);
      Tensor vm = linear(main, p.w_v);
      Tensor scores = scale(matmul(qm, transpose2d(km)),
                            1.0 / std::sqrt(double(p.inner)));
      mixed = matmul(causal_masked_softmax(scores), vm);
      break;
    }
    case BlockKind::mlp:
      mixed = linear(relu(linear(main, p.w_mlp1, p.b_mlp1)), p.w_mlp2, p.b_mlp2);
      break;
  }
  return add(linear(mul(mixed, gate), p.w_out), z);
}

Tensor mamba_block(const Tensor& z, const MambaBlockParams& p,
                   bool simplified_b) {
  if (p.kind != BlockKind::selective_ssm)
    throw std::invalid_argument("mamba_block: params must use the selective_ssm kind");
  return block_forward(z, p, simplified_b);
}

PartitionProbeReport block_partition_probe(const Tensor& x,
                                           const SelectiveSsmParams& p,
                                           uint64_t seed) {
  check_input(x, p, "block_partition_probe");
  int64_t l = x.dim(0);
  if (l % 2 != 0 || l < 2)
    throw std::invalid_argument("block_partition_probe: length must be even");
  int64_t half = l / 2, din = p.inner, n = p.state;
  std::vector<double> base = scan_hidden_states(x, p);

  auto perturbed_states = [&](bool tail) {
    Tensor xp = x.clone();
    Rng rng(derive_seed(seed, tail ? "tail" : "head"));
    int64_t lo = tail ? half : 0, hi = tail ? l : half;
    for (int64_t t = lo; t < hi; ++t)
      for (int64_t d = 0; d < din; ++d)
        xp.data()[t * din + d] += rng.uniform(-0.5, 0.5);
    return scan_hidden_states(xp, p);
  };

  auto max_diff = [&](const std::vector<double>& other, int64_t lo, int64_t hi) {
    double worst = 0;
    for (int64_t t = lo; t < hi; ++t)
      for (int64_t i = 0; i < din * n; ++i)
        worst = std::max(worst, std::fabs(other[size_t(t * din * n + i)] -
                                          base[size_t(t * din * n + i)]));
    return worst;
  };

  PartitionProbeReport report;
  std::vector<double> tail_pert = perturbed_states(true);
  report.head_change_on_tail_perturb = max_diff(tail_pert, 0, half);
  report.tail_change_on_tail_perturb = max_diff(tail_pert, half, l);
  std::vector<double> head_pert = perturbed_states(false);
  report.tail_change_on_head_perturb = max_diff(head_pert, half, l);
  return report;
}

}  // namespace pointssm
