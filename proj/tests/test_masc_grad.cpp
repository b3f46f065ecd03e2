#include <cmath>

#include "doctest.h"
#include "sscc/masc.hpp"
#include "sscc/masc_train.hpp"
#include "sscc/util.hpp"

using namespace sscc;
using namespace sscc::masc;

namespace {

MascConfig grad_cfg() {
  MascConfig cfg;
  cfg.d_model = 8;
  cfg.n_layers = 2;
  cfg.n_heads = 2;
  cfg.max_seq_len = 16;
  cfg.memory_layer = 1;
  cfg.hash_heads = 2;
  cfg.table_log2 = 5;
  cfg.slot_dim = 4;
  cfg.top_k = 2;
  cfg.conv_kernel = 3;
  cfg.lambda_aux = 0.01;
  return cfg;
}

Batch grad_batch(const MascConfig& cfg) {
  return make_batch({corpus::tokenize("routing check"), corpus::tokenize("more text!")},
                    cfg.max_seq_len);
}

}  // namespace

TEST_CASE("analytic gradients match central differences") {
  MascConfig cfg = grad_cfg();
  MascNet net(cfg, 4);
  Batch batch = grad_batch(cfg);
  const double eps = 1e-4;
  GradCheckReport rep = grad_check(net, batch, eps, 220, 99, 1);
  CAPTURE(rep.worst.empty() ? "" : rep.worst[0].tensor);
  CAPTURE(rep.worst.empty() ? 0.0 : rep.worst[0].analytic);
  CAPTURE(rep.worst.empty() ? 0.0 : rep.worst[0].fd);
  // the batch must sit safely away from any top-k selection boundary
  REQUIRE(rep.min_margin >= 10.0 * eps);
  CHECK(rep.checked >= 220);
  CHECK(rep.max_rel_err < 1e-4);
  // dead parameters (never-touched table rows etc.) agree exactly
  CHECK(rep.max_dead_fd <= 1e-8);
  CHECK(rep.dead_params > 0);
}

TEST_CASE("unreached table rows have zero gradient both ways") {
  MascConfig cfg = grad_cfg();
  MascNet net(cfg, 8);
  Batch batch = grad_batch(cfg);
  net.params.zero_grads();
  net.forward_backward(batch, 1);

  // find untouched rows in an expert table and finite-difference a few
  const double eps = 1e-4;
  Tensor& table = net.params.at("mem.E5.0");
  int checked = 0;
  for (int64_t row = 0; row < (1 << cfg.table_log2) && checked < 5; ++row) {
    bool dead = true;
    for (int s = 0; s < cfg.slot_dim; ++s) dead = dead && table.g[row * cfg.slot_dim + s] == 0.0;
    if (!dead) continue;
    int64_t idx = row * cfg.slot_dim;
    double orig = table.w[idx];
    table.w[idx] = orig + eps;
    double lp = net.forward(batch, 1).total;
    table.w[idx] = orig - eps;
    double lm = net.forward(batch, 1).total;
    table.w[idx] = orig;
    CHECK(std::abs(lp - lm) / (2 * eps) <= 1e-8);
    ++checked;
  }
  CHECK(checked == 5);
}

TEST_CASE("aux-loss-only gradient of the router matches finite differences") {
  MascConfig cfg = grad_cfg();
  MascNet net(cfg, 4);
  Batch batch = grad_batch(cfg);

  // isolate d(L_aux)/d(W_r): grads at lambda=1 minus grads at lambda=0
  net.set_lambda_aux(0.0);
  net.params.zero_grads();
  net.forward_backward(batch, 1);
  std::vector<double> g0 = net.params.at("mem.router").g;
  net.set_lambda_aux(1.0);
  net.params.zero_grads();
  net.forward_backward(batch, 1);
  std::vector<double> g1 = net.params.at("mem.router").g;
  REQUIRE(net.min_routing_logit_margin(batch) >= 1e-3);

  const double eps = 1e-4;
  Tensor& wr = net.params.at("mem.router");
  Rng rng(10);
  double max_rel = 0.0;
  for (int trial = 0; trial < 12; ++trial) {
    int64_t idx = static_cast<int64_t>(rng.below(wr.w.size()));
    double orig = wr.w[idx];
    wr.w[idx] = orig + eps;
    double ap = net.forward(batch, 1).aux;
    wr.w[idx] = orig - eps;
    double am = net.forward(batch, 1).aux;
    wr.w[idx] = orig;
    double fd = (ap - am) / (2 * eps);
    double analytic = g1[idx] - g0[idx];
    max_rel = std::max(max_rel, std::abs(analytic - fd) / std::max(std::abs(analytic), 1e-8));
  }
  CHECK(max_rel < 1e-4);
}
