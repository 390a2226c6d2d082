#include <cmath>
#include <vector>

#include "doctest.h"
#include "pointssm/ops.hpp"
#include "pointssm/rng.hpp"
#include "pointssm/ssm.hpp"

using namespace pointssm;

namespace {

SelectiveSsmParams tiny_params(double w_b, double w_c, double dt_value,
                               double d_skip, double a_log_value = 0.0) {
  SelectiveSsmParams p;
  p.inner = 1;
  p.state = 1;
  p.dt_rank = 1;
  p.a_log = Tensor::from_vector({1, 1}, {a_log_value});
  p.d_skip = Tensor::from_vector({1}, {d_skip});
  p.w_b = Tensor::from_vector({1, 1}, {w_b});
  p.w_c = Tensor::from_vector({1, 1}, {w_c});
  p.w_dt_down = Tensor::zeros({1, 1});
  p.w_dt_up = Tensor::zeros({1, 1});
  // bias = inverse softplus of the requested constant step size
  p.dt_bias = Tensor::from_vector({1}, {std::log(std::expm1(dt_value))});
  return p;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double worst = 0;
  for (int64_t i = 0; i < a.numel(); ++i)
    worst = std::max(worst, std::fabs(a.data()[i] - b.data()[i]));
  return worst;
}

void zero_all_weights(MambaBlockParams& p) {
  for (Tensor* t : {&p.ln_gamma, &p.ln_beta, &p.w_main, &p.w_gate, &p.w_out,
                    &p.conv_kernel, &p.conv_bias, &p.w_q, &p.w_k, &p.w_v,
                    &p.w_mlp1, &p.b_mlp1, &p.w_mlp2, &p.b_mlp2})
    if (t->defined())
      for (int64_t i = 0; i < t->numel(); ++i) t->data()[i] = 0.0;
  if (p.ssm.w_b.defined()) {
    for (Tensor* t : {&p.ssm.w_b, &p.ssm.w_c, &p.ssm.w_dt_down, &p.ssm.w_dt_up,
                      &p.ssm.a_log, &p.ssm.d_skip})
      for (int64_t i = 0; i < t->numel(); ++i) t->data()[i] = 0.0;
  }
}

}  // namespace

TEST_CASE("zoh discretization frozen values") {
  std::vector<double> abar, bbar;
  zoh_discretize({-1.0}, {1.0}, std::log(2.0), abar, bbar);
  CHECK(std::fabs(abar[0] - 0.5) <= 1e-15);
  CHECK(std::fabs(bbar[0] - 0.5) <= 1e-15);

  zoh_discretize({-2.0}, {1.5}, 0.3, abar, bbar);
  CHECK(std::fabs(abar[0] - 0.5488116360940264) <= 1e-15);
  CHECK(std::fabs(bbar[0] - 0.3383912729294802) <= 1e-15);

  // limit behavior near a*dt = 0
  zoh_discretize({-1e-9}, {2.0}, 0.01, abar, bbar);
  CHECK(std::fabs(abar[0] - 1.0) <= 1e-10);
  CHECK(std::fabs(bbar[0] - 0.02) <= 1e-12);

  CHECK_THROWS_AS(zoh_discretize({-1.0}, {1.0}, 0.0, abar, bbar),
                  std::invalid_argument);
  CHECK_THROWS_AS(zoh_discretize({-1.0}, {1.0}, -0.5, abar, bbar),
                  std::invalid_argument);
}

TEST_CASE("selective parameters: zero input, zero-bias projections") {
  Rng rng(1);
  SelectiveSsmParams p = init_selective_ssm(4, 3, 2, rng);
  for (int64_t i = 0; i < 4; ++i) p.dt_bias.data()[i] = 0.0;
  Tensor x = Tensor::zeros({5, 4});
  SelectiveParameters sp = selective_parameters(x, p);
  for (int64_t i = 0; i < sp.b_seq.numel(); ++i) CHECK(sp.b_seq.data()[i] == 0.0);
  for (int64_t i = 0; i < sp.c_seq.numel(); ++i) CHECK(sp.c_seq.data()[i] == 0.0);
  for (int64_t i = 0; i < sp.dt.numel(); ++i)
    CHECK(std::fabs(sp.dt.data()[i] - std::log(2.0)) <= 1e-15);  // softplus(0)
}

TEST_CASE("selective parameters match hand-applied projections") {
  Rng rng(2);
  SelectiveSsmParams p = init_selective_ssm(4, 3, 2, rng);
  Tensor x = Tensor::uniform({8, 4}, rng, -1, 1);
  SelectiveParameters sp = selective_parameters(x, p);
  for (int64_t t = 0; t < 8; ++t) {
    for (int64_t s = 0; s < 3; ++s) {
      double b = 0, c = 0;
      for (int64_t d = 0; d < 4; ++d) {
        b += x.data()[t * 4 + d] * p.w_b.data()[d * 3 + s];
        c += x.data()[t * 4 + d] * p.w_c.data()[d * 3 + s];
      }
      CHECK(std::fabs(sp.b_seq.data()[t * 3 + s] - b) <= 1e-12);
      CHECK(std::fabs(sp.c_seq.data()[t * 3 + s] - c) <= 1e-12);
    }
    for (int64_t d = 0; d < 4; ++d) {
      double pre = p.dt_bias.data()[d];
      for (int64_t r = 0; r < 2; ++r) {
        double low = 0;
        for (int64_t dd = 0; dd < 4; ++dd)
          low += x.data()[t * 4 + dd] * p.w_dt_down.data()[dd * 2 + r];
        pre += low * p.w_dt_up.data()[r * 4 + d];
      }
      CHECK(std::fabs(sp.dt_pre.data()[t * 4 + d] - pre) <= 1e-12);
      CHECK(sp.dt.data()[t * 4 + d] > 0.0);
    }
  }
}

TEST_CASE("ssm_scan zero input gives zero output") {
  Rng rng(3);
  SelectiveSsmParams p = init_selective_ssm(6, 4, 2, rng);
  Tensor y = ssm_scan(Tensor::zeros({9, 6}), p);
  for (int64_t i = 0; i < y.numel(); ++i) CHECK(y.data()[i] == 0.0);
}

TEST_CASE("ssm_scan single step closed form") {
  SelectiveSsmParams p = tiny_params(0.8, 1.1, 0.25, 0.5);
  Tensor x = Tensor::from_vector({1, 1}, {2.0});
  Tensor y = ssm_scan(x, p);
  double b1 = 0.8 * 2.0, c1 = 1.1 * 2.0;
  double bbar = (1.0 - std::exp(-0.25)) * b1;  // (e^{a dt}-1)/a at a=-1
  double expect = c1 * (bbar * 2.0) + 0.5 * 2.0;
  CHECK(std::fabs(y.item() - expect) <= 1e-14);
}

TEST_CASE("two-step hand expansion matches scan and matrix form") {
  SelectiveSsmParams p = tiny_params(0.8, 1.1, 0.25, 0.5);
  Tensor x = Tensor::from_vector({2, 1}, {2.0, -1.5});
  double abar = std::exp(-0.25);
  auto bb = [&](double xt) { return (1.0 - std::exp(-0.25)) * (0.8 * xt); };
  double h1 = bb(2.0) * 2.0;
  double h2 = abar * h1 + bb(-1.5) * (-1.5);
  double y1 = (1.1 * 2.0) * h1 + 0.5 * 2.0;
  double y2 = (1.1 * -1.5) * h2 + 0.5 * -1.5;

  Tensor scan = ssm_scan(x, p);
  CHECK(std::fabs(scan.data()[0] - y1) <= 1e-14);
  CHECK(std::fabs(scan.data()[1] - y2) <= 1e-14);

  Tensor mat = ssm_matrix_form(x, p);
  CHECK(std::fabs(mat.data()[0] - y1) <= 1e-14);
  CHECK(std::fabs(mat.data()[1] - y2) <= 1e-14);
}

TEST_CASE("scan agrees with matrix form on random instances") {
  struct Dims {
    int64_t l, inner, state, rank;
  };
  for (const Dims dims : {Dims{12, 6, 4, 2}, Dims{33, 5, 3, 2},
                          Dims{64, 16, 8, 4}, Dims{7, 2, 8, 1}}) {
    Rng rng(uint64_t(dims.l * 1000 + dims.inner));
    SelectiveSsmParams p =
        init_selective_ssm(dims.inner, dims.state, dims.rank, rng);
    Tensor x = Tensor::uniform({dims.l, dims.inner}, rng, -1, 1);
    for (bool simplified : {false, true}) {
      Tensor a = ssm_scan(x, p, simplified);
      Tensor b = ssm_matrix_form(x, p, simplified);
      CHECK(max_abs_diff(a, b) <= 1e-10);
    }
  }
}

TEST_CASE("matrix form rejects long sequences") {
  Rng rng(5);
  SelectiveSsmParams p = init_selective_ssm(2, 2, 1, rng);
  Tensor x = Tensor::zeros({257, 2});
  CHECK_THROWS_AS((void)ssm_matrix_form(x, p), std::invalid_argument);
  CHECK_THROWS_AS((void)transfer_matrix(x, p, TransferMode::exact),
                  std::invalid_argument);
}

TEST_CASE("transfer matrix is strictly lower triangular and reproduces the scan") {
  Rng rng(6);
  SelectiveSsmParams p = init_selective_ssm(5, 4, 2, rng);
  Tensor x = Tensor::uniform({14, 5}, rng, -1, 1);
  TransferMatrixView view = transfer_matrix(x, p, TransferMode::exact);

  for (int64_t i = 0; i < 14; ++i)
    for (int64_t j = i + 1; j < 14; ++j)
      for (int64_t d = 0; d < 5; ++d) CHECK(view.w_at(i, j, d) == 0.0);

  // w equals its own factorization
  for (int64_t i = 0; i < 14; ++i)
    for (int64_t j = 0; j <= i; ++j)
      for (int64_t d = 0; d < 5; ++d) {
        double acc = 0;
        for (int64_t n = 0; n < 4; ++n)
          acc += view.q_at(i, n) * view.t_at(i, j, d, n) * view.k_at(j, d, n);
        CHECK(std::fabs(acc - view.w_at(i, j, d)) <= 1e-12);
      }
  for (int64_t d = 0; d < 5; ++d)
    for (int64_t n = 0; n < 4; ++n) CHECK(view.t_at(3, 3, d, n) == 1.0);

  // y - d_skip * x == W x
  Tensor y = ssm_scan(x, p);
  std::vector<double> wx = view.apply(x);
  double worst = 0;
  for (int64_t t = 0; t < 14; ++t)
    for (int64_t d = 0; d < 5; ++d) {
      double lhs = y.data()[t * 5 + d] -
                   p.d_skip.data()[d] * x.data()[t * 5 + d];
      worst = std::max(worst, std::fabs(lhs - wx[size_t(t * 5 + d)]));
    }
  CHECK(worst <= 1e-10);
}

TEST_CASE("relu approximation of the transfer matrix at large step pre-activations") {
  // bias ~ 11 keeps every pre-activation >= 5, where softplus(z) - z < 2e-5
  Rng rng(7);
  SelectiveSsmParams p = init_selective_ssm(4, 4, 2, rng);
  for (int64_t d = 0; d < 4; ++d) p.dt_bias.data()[d] = 11.0;
  Tensor x = Tensor::uniform({12, 4}, rng, -0.2, 0.2);

  SelectiveParameters sp = selective_parameters(x, p);
  for (int64_t i = 0; i < sp.dt_pre.numel(); ++i)
    REQUIRE(sp.dt_pre.data()[i] >= 5.0);

  TransferMatrixView exact = transfer_matrix(x, p, TransferMode::exact);
  TransferMatrixView approx = transfer_matrix(x, p, TransferMode::relu_approx);
  double worst = 0;
  for (size_t i = 0; i < exact.w.size(); ++i) {
    double denom = std::max({std::fabs(exact.w[i]), std::fabs(approx.w[i]), 1e-30});
    worst = std::max(worst, std::fabs(exact.w[i] - approx.w[i]) / denom);
  }
  CHECK(worst <= 1e-2);
}

TEST_CASE("discretized transition is always a contraction") {
  Rng rng(8);
  SelectiveSsmParams p = init_selective_ssm(6, 5, 2, rng);
  for (int trial = 0; trial < 200; ++trial) {
    double dt = std::exp(rng.uniform(std::log(1e-4), std::log(10.0)));
    for (int64_t i = 0; i < p.a_log.numel(); ++i) {
      double a = -std::exp(p.a_log.data()[i]);
      CHECK(std::exp(a * dt) < 1.0);
      CHECK(std::exp(a * dt) > 0.0);
    }
  }
}

TEST_CASE("hidden states stay bounded over long sequences") {
  Rng rng(9);
  SelectiveSsmParams p = init_selective_ssm(4, 4, 2, rng);
  Tensor x = Tensor::uniform({4096, 4}, rng, -1, 1);
  std::vector<double> h = scan_hidden_states(x, p);
  double peak = 0;
  for (double v : h) {
    REQUIRE(std::isfinite(v));
    peak = std::max(peak, std::fabs(v));
  }
  CHECK(peak < 1e3);
}

TEST_CASE("block with zeroed weights is the identity") {
  Rng rng(10);
  MambaBlockParams p = init_block(BlockKind::selective_ssm, 4, 8, 3, 2, 3, rng);
  zero_all_weights(p);
  Tensor z = Tensor::uniform({6, 4}, rng, -1, 1);
  Tensor out = mamba_block(z, p);
  for (int64_t i = 0; i < z.numel(); ++i) CHECK(out.data()[i] == z.data()[i]);
}

TEST_CASE("identity kind with zero out-projection is a pure residual") {
  Rng rng(11);
  MambaBlockParams p = init_block(BlockKind::identity, 4, 8, 0, 0, 0, rng);
  for (int64_t i = 0; i < p.w_out.numel(); ++i) p.w_out.data()[i] = 0.0;
  Tensor z = Tensor::uniform({5, 4}, rng, -1, 1);
  Tensor out = block_forward(z, p);
  for (int64_t i = 0; i < z.numel(); ++i) CHECK(out.data()[i] == z.data()[i]);
}

TEST_CASE("sequence mixers are causal") {
  Rng rng(12);
  Tensor z = Tensor::uniform({10, 4}, rng, -1, 1);
  for (BlockKind kind : {BlockKind::selective_ssm, BlockKind::masked_attention}) {
    MambaBlockParams p = init_block(kind, 4, 8, 3, 2, 3, rng);
    Tensor base = block_forward(z, p);
    Tensor zp = z.clone();
    for (int64_t t = 6; t < 10; ++t)
      for (int64_t d = 0; d < 4; ++d) zp.data()[t * 4 + d] += rng.uniform(0.1, 1.0);
    Tensor moved = block_forward(zp, p);
    double worst = 0;
    for (int64_t t = 0; t < 6; ++t)
      for (int64_t d = 0; d < 4; ++d)
        worst = std::max(worst, std::fabs(moved.data()[t * 4 + d] -
                                          base.data()[t * 4 + d]));
    CHECK(worst < 1e-12);
    // and the future does change
    double tail = 0;
    for (int64_t t = 6; t < 10; ++t)
      for (int64_t d = 0; d < 4; ++d)
        tail = std::max(tail, std::fabs(moved.data()[t * 4 + d] -
                                        base.data()[t * 4 + d]));
    CHECK(tail > 0.0);
  }
}

TEST_CASE("mlp kind acts position-wise") {
  Rng rng(13);
  MambaBlockParams p = init_block(BlockKind::mlp, 4, 8, 0, 0, 0, rng);
  Tensor z = Tensor::uniform({7, 4}, rng, -1, 1);
  Tensor base = block_forward(z, p);
  Tensor zp = z.clone();
  for (int64_t d = 0; d < 4; ++d) zp.data()[3 * 4 + d] += 0.7;
  Tensor moved = block_forward(zp, p);
  for (int64_t t = 0; t < 7; ++t)
    for (int64_t d = 0; d < 4; ++d) {
      double diff = std::fabs(moved.data()[t * 4 + d] - base.data()[t * 4 + d]);
      if (t == 3)
        CHECK(diff >= 0.0);  // the perturbed row may move
      else
        CHECK(diff == 0.0);  // every other row is untouched
    }
}

TEST_CASE("block kind names round trip") {
  for (const char* name : {"selective_ssm", "identity", "masked_attention", "mlp"})
    CHECK(block_kind_to_string(block_kind_from_string(name)) == name);
  CHECK_THROWS_AS((void)block_kind_from_string("conv"), std::invalid_argument);
}

TEST_CASE("partition probe: strict causality and forward information flow") {
  Rng rng(14);
  SelectiveSsmParams p = init_selective_ssm(4, 3, 2, rng);
  Tensor x = Tensor::uniform({16, 4}, rng, -1, 1);
  PartitionProbeReport report = block_partition_probe(x, p, 77);
  CHECK(report.head_change_on_tail_perturb == 0.0);
  CHECK(report.tail_change_on_tail_perturb > 0.0);
  CHECK(report.tail_change_on_head_perturb > 0.0);

  // the smallest even case: h_1 ignores x_2, h_2 sees both
  Tensor two = Tensor::uniform({2, 4}, rng, -1, 1);
  PartitionProbeReport small = block_partition_probe(two, p, 78);
  CHECK(small.head_change_on_tail_perturb == 0.0);
  CHECK(small.tail_change_on_head_perturb > 0.0);

  Tensor odd = Tensor::zeros({5, 4});
  CHECK_THROWS_AS((void)block_partition_probe(odd, p, 1), std::invalid_argument);
}

TEST_CASE("gradient checks through full blocks") {
  Rng rng(15);
  Tensor z = Tensor::uniform({6, 4}, rng, -1, 1);
  for (BlockKind kind : {BlockKind::selective_ssm, BlockKind::identity,
                         BlockKind::masked_attention, BlockKind::mlp}) {
    MambaBlockParams p = init_block(kind, 4, 8, 3, 2, 3, rng);
    double err = grad_check(
        [&p](const Tensor& t) { return mean_all(block_forward(t, p)); }, z,
        1e-5);
    CHECK(err < 1e-4);
  }

  // parameter-side gradients of the ssm path
  MambaBlockParams p = init_block(BlockKind::selective_ssm, 4, 8, 3, 2, 3, rng);
  auto param_check = [&](Tensor& slot) {
    Tensor original = slot.clone();
    double err = grad_check(
        [&](const Tensor& t) {
          slot = t;
          Tensor out = mean_all(block_forward(z, p));
          slot = original;
          return out;
        },
        original, 1e-5);
    return err;
  };
  CHECK(param_check(p.ssm.a_log) < 1e-4);
  CHECK(param_check(p.ssm.dt_bias) < 1e-4);
  CHECK(param_check(p.conv_kernel) < 1e-4);
  CHECK(param_check(p.w_main) < 1e-4);
  CHECK(param_check(p.ln_gamma) < 1e-4);
}

TEST_CASE("ssm_scan gradient flows to every parameter") {
  Rng rng(16);
  SelectiveSsmParams p = init_selective_ssm(3, 2, 2, rng);
  Tensor x = Tensor::uniform({5, 3}, rng, -1, 1, true);
  GradTape tape;
  {
    TapeScope scope(tape);
    Tensor loss = mean_all(ssm_scan(x, p));
    tape.backward(loss);
  }
  auto grad_norm = [](const Tensor& t) {
    double s = 0;
    for (int64_t i = 0; i < t.numel(); ++i)
      s += t.grad()[i] * t.grad()[i];
    return s;
  };
  CHECK(grad_norm(x) > 0.0);
  CHECK(grad_norm(p.a_log) > 0.0);
  CHECK(grad_norm(p.w_b) > 0.0);
  CHECK(grad_norm(p.w_c) > 0.0);
  CHECK(grad_norm(p.w_dt_down) > 0.0);
  CHECK(grad_norm(p.w_dt_up) > 0.0);
  CHECK(grad_norm(p.dt_bias) > 0.0);
  CHECK(grad_norm(p.d_skip) > 0.0);
}
