#include "sscc/masc.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"
#include "sscc/nn.hpp"
#include "sscc/util.hpp"

namespace sscc::masc {

using nlohmann::json;

// ---- config ----

void MascConfig::validate() const {
  if (d_model < 2 || d_model % n_heads != 0) throw std::invalid_argument("MascConfig: d_model must be a multiple of n_heads");
  if (n_layers < 1) throw std::invalid_argument("MascConfig: n_layers must be >= 1");
  if (max_seq_len < 2) throw std::invalid_argument("MascConfig: max_seq_len must be >= 2");
  if (memory_layer < 0 || memory_layer >= n_layers)
    throw std::invalid_argument("MascConfig: memory_layer must index a layer");
  if (top_k < 1 || top_k > kNumExperts) throw std::invalid_argument("MascConfig: top_k must be in [1,4]");
  if (hash_heads < 1) throw std::invalid_argument("MascConfig: hash_heads must be >= 1");
  if (table_log2 < 4 || table_log2 > 30) throw std::invalid_argument("MascConfig: table_log2 must be in [4,30]");
  if (slot_dim < 1) throw std::invalid_argument("MascConfig: slot_dim must be >= 1");
  if (conv_kernel < 1) throw std::invalid_argument("MascConfig: conv_kernel must be >= 1");
  if (vocab_size < 2) throw std::invalid_argument("MascConfig: vocab_size must be >= 2");
  if (lambda_aux < 0.0) throw std::invalid_argument("MascConfig: lambda_aux must be >= 0");
}

std::string MascConfig::to_json() const {
  json j;
  j["d_model"] = d_model;
  j["n_layers"] = n_layers;
  j["n_heads"] = n_heads;
  j["max_seq_len"] = max_seq_len;
  j["memory_layer"] = memory_layer;
  j["hash_heads"] = hash_heads;
  j["table_log2"] = table_log2;
  j["slot_dim"] = slot_dim;
  j["top_k"] = top_k;
  j["gate_scale"] = gate_scale;
  j["lambda_aux"] = lambda_aux;
  j["conv_kernel"] = conv_kernel;
  j["vocab_size"] = vocab_size;
  j["hash_seed"] = hash_seed;
  j["memory_enabled"] = memory_enabled;
  return j.dump();
}

MascConfig MascConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  MascConfig c;
  c.d_model = j.at("d_model");
  c.n_layers = j.at("n_layers");
  c.n_heads = j.at("n_heads");
  c.max_seq_len = j.at("max_seq_len");
  c.memory_layer = j.at("memory_layer");
  c.hash_heads = j.at("hash_heads");
  c.table_log2 = j.at("table_log2");
  c.slot_dim = j.at("slot_dim");
  c.top_k = j.at("top_k");
  c.gate_scale = j.at("gate_scale");
  c.lambda_aux = j.at("lambda_aux");
  c.conv_kernel = j.at("conv_kernel");
  c.vocab_size = j.at("vocab_size");
  c.hash_seed = j.at("hash_seed");
  c.memory_enabled = j.at("memory_enabled");
  c.validate();
  return c;
}

// ---- params ----

Tensor& MascParams::add(const std::string& name, std::vector<int64_t> shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  tensors.push_back(Tensor{name, std::move(shape), std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
  index_[name] = tensors.size() - 1;
  return tensors.back();
}

void MascParams::rebuild_index() {
  index_.clear();
  for (size_t i = 0; i < tensors.size(); ++i) index_[tensors[i].name] = i;
}

Tensor& MascParams::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no tensor named " + name);
  return tensors[it->second];
}

const Tensor& MascParams::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("no tensor named " + name);
  return tensors[it->second];
}

void MascParams::init(const MascConfig& cfg, uint64_t seed) {
  cfg.validate();
  tensors.clear();
  index_.clear();
  const int c = cfg.d_model;
  const int v = cfg.vocab_size;
  const int mw = cfg.memory_width();

  add("wte", {v, c});
  add("wpe", {cfg.max_seq_len, c});
  for (int l = 0; l < cfg.n_layers; ++l) {
    std::string p = "l" + std::to_string(l) + ".";
    add(p + "ln1.g", {c});
    add(p + "attn.wq", {c, c});
    add(p + "attn.wk", {c, c});
    add(p + "attn.wv", {c, c});
    add(p + "attn.wo", {c, c});
    add(p + "ln2.g", {c});
    add(p + "mlp.fc", {4 * c, c});
    add(p + "mlp.proj", {c, 4 * c});
  }
  add("lnf.g", {c});
  add("lm_head", {v, c});
  for (int n = kMinOrder; n < kMinOrder + kNumExperts; ++n)
    for (int m = 0; m < cfg.hash_heads; ++m)
      add("mem.E" + std::to_string(n) + "." + std::to_string(m), {cfg.table_size(), cfg.slot_dim});
  add("mem.wk", {c, mw});
  add("mem.wv", {c, mw});
  add("mem.router", {kNumExperts, c});
  add("mem.conv.w", {c, cfg.conv_kernel});
  add("mem.conv.b", {c});
  add("mem.conv_ln.g", {c});

  Rng rng(seed);
  for (auto& t : tensors) {
    bool is_gain = t.name.size() >= 2 && t.name.substr(t.name.size() - 2) == ".g";
    bool is_bias = t.name == "mem.conv.b";
    if (is_gain) {
      std::fill(t.w.begin(), t.w.end(), 1.0);
    } else if (is_bias) {
      std::fill(t.w.begin(), t.w.end(), 0.0);
    } else {
      for (auto& x : t.w) x = 0.02 * rng.gaussian();
    }
  }
}

int64_t MascParams::total_params() const {
  int64_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

void MascParams::zero_grads() {
  for (auto& t : tensors) std::fill(t.g.begin(), t.g.end(), 0.0);
}

double MascParams::grad_norm() const {
  double s = 0.0;
  for (const auto& t : tensors)
    for (double g : t.g) s += g * g;
  return std::sqrt(s);
}

void MascParams::scale_grads(double s) {
  for (auto& t : tensors)
    for (double& g : t.g) g *= s;
}

void MascParams::ablate_memory() {
  for (auto& t : tensors) {
    if (t.name.rfind("mem.E", 0) == 0 || t.name == "mem.wv" || t.name == "mem.conv.w" ||
        t.name == "mem.conv.b") {
      std::fill(t.w.begin(), t.w.end(), 0.0);
    }
  }
}

// ---- standalone ops ----

std::vector<int32_t> suffix_context(const corpus::Tokens& tokens, int i, int n) {
  if (i < 1 || i > static_cast<int>(tokens.size())) throw std::out_of_range("suffix_context: bad position");
  std::vector<int32_t> ctx(n);
  for (int j = 0; j < n; ++j) {
    int src = i - n + j;  // 0-based index of element j is src (position src+1)
    ctx[j] = src < 0 ? corpus::kBos : tokens[src];
  }
  return ctx;
}

uint32_t hash_index(std::span<const int32_t> ctx, int order, int head, int table_log2,
                    uint64_t base_seed) {
  uint64_t acc = splitmix64(base_seed ^ (uint64_t(order) << 8) ^ uint64_t(head));
  for (int32_t t : ctx) acc = splitmix64(acc ^ (uint64_t(static_cast<uint32_t>(t)) + 1));
  // multiply-shift down to the table width
  uint64_t x = acc * 0x9E3779B97F4A7C15ull;
  return static_cast<uint32_t>(x >> (64 - table_log2));
}

std::vector<double> pcm_lookup(const corpus::Tokens& tokens, int i, int order, const MascParams& params,
                               const MascConfig& cfg) {
  std::vector<int32_t> ctx = suffix_context(tokens, i, order);
  std::vector<double> e(cfg.memory_width());
  for (int m = 0; m < cfg.hash_heads; ++m) {
    uint32_t idx = hash_index(ctx, order, m, cfg.table_log2, cfg.hash_seed);
    const Tensor& table = params.at("mem.E" + std::to_string(order) + "." + std::to_string(m));
    const double* row = table.w.data() + static_cast<int64_t>(idx) * cfg.slot_dim;
    std::copy(row, row + cfg.slot_dim, e.begin() + static_cast<int64_t>(m) * cfg.slot_dim);
  }
  return e;
}

namespace {

// top-k expert indices by descending pi; ties prefer the lower order
void select_topk(const double* pi, int k, std::vector<int>& sel) {
  std::array<int, kNumExperts> idx{0, 1, 2, 3};
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (pi[a] != pi[b]) return pi[a] > pi[b];
    return a < b;
  });
  sel.assign(idx.begin(), idx.begin() + k);
  std::sort(sel.begin(), sel.end());
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

RoutingDecision mmer_route(std::span<const double> hidden, const MascParams& params,
                           const MascConfig& cfg) {
  const int c = cfg.d_model;
  if (static_cast<int>(hidden.size()) != c) throw std::invalid_argument("mmer_route: bad hidden size");
  for (double x : hidden)
    if (std::isnan(x)) throw std::invalid_argument("mmer_route: NaN in hidden state");

  std::vector<double> rn(c);
  double rms_cache;
  nn::rmsnorm_fwd(hidden.data(), nullptr, rn.data(), &rms_cache, 1, c);

  const Tensor& wr = params.at("mem.router");
  double logits[kNumExperts];
  nn::matmul_fwd(rn.data(), wr.w.data(), logits, 1, c, kNumExperts, 1);

  RoutingDecision out;
  nn::softmax(logits, out.pi.data(), kNumExperts);
  std::vector<int> sel;
  select_topk(out.pi.data(), cfg.top_k, sel);
  double s = 0.0;
  for (int n : sel) s += out.pi[n];
  for (int n : sel) out.alpha[n] = out.pi[n] / s;
  for (int n : sel) out.selected_orders.push_back(n + kMinOrder);
  return out;
}

std::vector<double> routed_memory(const corpus::Tokens& tokens, int i, const RoutingDecision& routing,
                                  const MascParams& params, const MascConfig& cfg) {
  std::vector<double> e(cfg.memory_width(), 0.0);
  for (int order : routing.selected_orders) {
    double a = routing.alpha[order - kMinOrder];
    std::vector<double> en = pcm_lookup(tokens, i, order, params, cfg);
    for (int j = 0; j < cfg.memory_width(); ++j) e[j] += a * en[j];
  }
  return e;
}

GateOutput gated_fuse(std::span<const double> hidden, std::span<const double> memory,
                      const MascParams& params, const MascConfig& cfg) {
  const int c = cfg.d_model;
  const int mw = cfg.memory_width();
  if (static_cast<int>(memory.size()) != mw) throw std::invalid_argument("gated_fuse: bad memory size");

  const Tensor& wk = params.at("mem.wk");
  const Tensor& wv = params.at("mem.wv");
  std::vector<double> kvec(c), vvec(c);
  nn::matmul_fwd(memory.data(), wk.w.data(), kvec.data(), 1, mw, c, 1);
  nn::matmul_fwd(memory.data(), wv.w.data(), vvec.data(), 1, mw, c, 1);

  std::vector<double> qn(c), kn(c);
  double rq, rk;
  nn::rmsnorm_fwd(hidden.data(), nullptr, qn.data(), &rq, 1, c);
  nn::rmsnorm_fwd(kvec.data(), nullptr, kn.data(), &rk, 1, c);
  double dot = 0.0;
  for (int j = 0; j < c; ++j) dot += qn[j] * kn[j];

  GateOutput out;
  out.beta = sigmoid(dot / std::sqrt(cfg.effective_gate_scale()));
  out.v_tilde.resize(c);
  for (int j = 0; j < c; ++j) out.v_tilde[j] = out.beta * vvec[j];
  return out;
}

std::vector<double> conv_refine(std::span<const double> vt, int t, int c,
                                std::span<const double> kernel, std::span<const double> bias,
                                std::span<const double> norm_gain, bool use_norm) {
  const int kw = static_cast<int>(kernel.size()) / c;
  std::vector<double> cn(vt.begin(), vt.end());
  if (use_norm) {
    std::vector<double> rms(t);
    nn::rmsnorm_fwd(vt.data(), norm_gain.data(), cn.data(), rms.data(), t, c);
  }
  std::vector<double> y(static_cast<size_t>(t) * c);
  for (int i = 0; i < t; ++i) {
    for (int ch = 0; ch < c; ++ch) {
      double acc = bias[ch];
      for (int j = 0; j < kw && j <= i; ++j) acc += kernel[static_cast<size_t>(ch) * kw + j] * cn[static_cast<size_t>(i - j) * c + ch];
      double s = sigmoid(acc);
      y[static_cast<size_t>(i) * c + ch] = acc * s + vt[static_cast<size_t>(i) * c + ch];
    }
  }
  return y;
}

// ---- batched network ----

Batch make_batch(const std::vector<corpus::Tokens>& sequences, int max_seq_len) {
  if (sequences.empty()) throw std::invalid_argument("make_batch: no sequences");
  int t = 0;
  for (const auto& s : sequences) {
    if (static_cast<int>(s.size()) + 1 > max_seq_len)
      throw std::invalid_argument("make_batch: sequence exceeds max_seq_len");
    t = std::max(t, static_cast<int>(s.size()));
  }
  Batch batch;
  batch.b = static_cast<int>(sequences.size());
  batch.t = t;
  batch.inp.assign(static_cast<size_t>(batch.b) * t, corpus::kBos);
  batch.tgt.assign(static_cast<size_t>(batch.b) * t, -1);
  for (int b = 0; b < batch.b; ++b) {
    const auto& s = sequences[b];
    for (int i = 0; i < static_cast<int>(s.size()); ++i) {
      batch.tgt[static_cast<size_t>(b) * t + i] = s[i];
      if (i + 1 < static_cast<int>(s.size()) + 1 && i + 1 < t)
        batch.inp[static_cast<size_t>(b) * t + i + 1] = s[i];
    }
  }
  return batch;
}

struct MascNet::Acts {
  int b = 0, t = 0;
  // forward
  std::vector<std::vector<double>> x;  // n_layers+1 of [b*t*c]
  struct Layer {
    std::vector<double> ln1x, ln1_rms, q, k, v, att_probs, att_out, att_proj, res1, ln2x, ln2_rms, fc,
        fcs, mlp_out;
  };
  std::vector<Layer> layer;
  // memory branch
  std::vector<double> h_pre, rn, rn_rms, rlog, pi, alpha, eagg, kproj, vproj, kn, kn_rms, gdot, beta, vt,
      cn, cn_rms, convo, ysilu, y;
  std::vector<int> selk;       // [b*t*k]
  std::vector<uint32_t> hidx;  // [b*t*k*m], aligned with selk
  std::vector<double> lnfx, lnf_rms, logits;
  // backward twins
  std::vector<std::vector<double>> dx;
  struct DLayer {
    std::vector<double> ln1x, q, k, v, att_out, att_proj, res1, ln2x, fc, fcs, probs_scratch;
  };
  std::vector<DLayer> dlayer;
  std::vector<double> dh_extra;  // unused; kept for layout stability
  std::vector<double> drn, drlog, dpi, deagg, dkproj, dvproj, dkn, dvt, dcn, dconvo, dlnfx, dlogits;
  std::array<double, kNumExperts> load{};  // batch Load (constants in backward)
};

MascNet::MascNet(const MascConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
  cfg_.validate();
  params.init(cfg_, init_seed);
  acts_ = std::make_unique<Acts>();
}

MascNet::~MascNet() = default;

void MascNet::ensure_acts(int b, int t) {
  Acts& a = *acts_;
  if (a.b == b && a.t == t) return;
  a.b = b;
  a.t = t;
  const int c = cfg_.d_model;
  const int nh = cfg_.n_heads;
  const int v = cfg_.vocab_size;
  const int mw = cfg_.memory_width();
  const size_t bt = static_cast<size_t>(b) * t;
  auto sz = [&](std::vector<double>& vec, size_t n) { vec.assign(n, 0.0); };

  a.x.assign(cfg_.n_layers + 1, {});
  a.dx.assign(cfg_.n_layers + 1, {});
  for (auto& xv : a.x) sz(xv, bt * c);
  for (auto& xv : a.dx) sz(xv, bt * c);
  a.layer.assign(cfg_.n_layers, {});
  a.dlayer.assign(cfg_.n_layers, {});
  for (auto& L : a.layer) {
    sz(L.ln1x, bt * c);
    sz(L.ln1_rms, bt);
    sz(L.q, bt * c);
    sz(L.k, bt * c);
    sz(L.v, bt * c);
    sz(L.att_probs, static_cast<size_t>(b) * nh * t * t);
    sz(L.att_out, bt * c);
    sz(L.att_proj, bt * c);
    sz(L.res1, bt * c);
    sz(L.ln2x, bt * c);
    sz(L.ln2_rms, bt);
    sz(L.fc, bt * 4 * c);
    sz(L.fcs, bt * 4 * c);
    sz(L.mlp_out, bt * c);
  }
  for (auto& L : a.dlayer) {
    sz(L.ln1x, bt * c);
    sz(L.q, bt * c);
    sz(L.k, bt * c);
    sz(L.v, bt * c);
    sz(L.att_out, bt * c);
    sz(L.att_proj, bt * c);
    sz(L.res1, bt * c);
    sz(L.ln2x, bt * c);
    sz(L.fc, bt * 4 * c);
    sz(L.fcs, bt * 4 * c);
    sz(L.probs_scratch, static_cast<size_t>(nh) * t * t);
  }
  sz(a.h_pre, bt * c);
  sz(a.rn, bt * c);
  sz(a.rn_rms, bt);
  sz(a.rlog, bt * kNumExperts);
  sz(a.pi, bt * kNumExperts);
  sz(a.alpha, bt * kNumExperts);
  sz(a.eagg, bt * mw);
  sz(a.kproj, bt * c);
  sz(a.vproj, bt * c);
  sz(a.kn, bt * c);
  sz(a.kn_rms, bt);
  sz(a.gdot, bt);
  sz(a.beta, bt);
  sz(a.vt, bt * c);
  sz(a.cn, bt * c);
  sz(a.cn_rms, bt);
  sz(a.convo, bt * c);
  sz(a.ysilu, bt * c);
  sz(a.y, bt * c);
  a.selk.assign(bt * cfg_.top_k, 0);
  a.hidx.assign(bt * cfg_.top_k * cfg_.hash_heads, 0);
  sz(a.lnfx, bt * c);
  sz(a.lnf_rms, bt);
  sz(a.logits, bt * v);
  sz(a.drn, bt * c);
  sz(a.drlog, bt * kNumExperts);
  sz(a.dpi, bt * kNumExperts);
  sz(a.deagg, bt * mw);
  sz(a.dkproj, bt * c);
  sz(a.dvproj, bt * c);
  sz(a.dkn, bt * c);
  sz(a.dvt, bt * c);
  sz(a.dcn, bt * c);
  sz(a.dconvo, bt * c);
  sz(a.dlnfx, bt * c);
  sz(a.dlogits, bt * v);
}

LossReport MascNet::forward(const Batch& batch, int threads) { return run(batch, false, threads); }
LossReport MascNet::forward_backward(const Batch& batch, int threads) { return run(batch, true, threads); }

std::span<const double> MascNet::logits() const { return acts_->logits; }

RoutingDecision MascNet::routing_at(int b, int t) const {
  const Acts& a = *acts_;
  RoutingDecision rd;
  size_t i = static_cast<size_t>(b) * a.t + t;
  for (int n = 0; n < kNumExperts; ++n) {
    rd.pi[n] = a.pi[i * kNumExperts + n];
    rd.alpha[n] = a.alpha[i * kNumExperts + n];
  }
  for (int j = 0; j < cfg_.top_k; ++j)
    rd.selected_orders.push_back(a.selk[i * cfg_.top_k + j] + kMinOrder);
  std::sort(rd.selected_orders.begin(), rd.selected_orders.end());
  return rd;
}

double MascNet::min_routing_logit_margin(const Batch& batch) const {
  const Acts& a = *acts_;
  if (cfg_.top_k >= kNumExperts || !cfg_.memory_enabled) return 1e300;
  double margin = 1e300;
  for (size_t i = 0; i < static_cast<size_t>(a.b) * a.t; ++i) {
    if (batch.tgt[i] < 0) continue;
    std::array<double, kNumExperts> r;
    for (int n = 0; n < kNumExperts; ++n) r[n] = a.rlog[i * kNumExperts + n];
    std::sort(r.begin(), r.end(), std::greater<>());
    margin = std::min(margin, r[cfg_.top_k - 1] - r[cfg_.top_k]);
  }
  return margin;
}

LossReport MascNet::run(const Batch& batch, bool grads, int threads) {
  const int b = batch.b, t = batch.t;
  if (t > cfg_.max_seq_len) throw std::invalid_argument("MascNet: batch longer than max_seq_len");
  ensure_acts(b, t);
  Acts& a = *acts_;
  const int c = cfg_.d_model;
  const int nh = cfg_.n_heads;
  const int hd = c / nh;
  const int v = cfg_.vocab_size;
  const int mw = cfg_.memory_width();
  const int kk = cfg_.top_k;
  const int m = cfg_.hash_heads;
  const int sd = cfg_.slot_dim;
  const int kw = cfg_.conv_kernel;
  const int64_t bt = static_cast<int64_t>(b) * t;
  const int ml = cfg_.memory_layer;

  // embeddings
  {
    const double* wte = params.at("wte").w.data();
    const double* wpe = params.at("wpe").w.data();
    double* x0 = a.x[0].data();
    for (int bi = 0; bi < b; ++bi)
      for (int ti = 0; ti < t; ++ti) {
        int32_t tok = batch.inp[static_cast<size_t>(bi) * t + ti];
        const double* te = wte + static_cast<int64_t>(tok) * c;
        const double* pe = wpe + static_cast<int64_t>(ti) * c;
        double* out = x0 + (static_cast<int64_t>(bi) * t + ti) * c;
        for (int j = 0; j < c; ++j) out[j] = te[j] + pe[j];
      }
  }

  for (int l = 0; l < cfg_.n_layers; ++l) {
    auto& L = a.layer[l];
    std::string pre = "l" + std::to_string(l) + ".";
    const double* xin = a.x[l].data();
    nn::rmsnorm_fwd(xin, params.at(pre + "ln1.g").w.data(), L.ln1x.data(), L.ln1_rms.data(), bt, c);
    nn::matmul_fwd(L.ln1x.data(), params.at(pre + "attn.wq").w.data(), L.q.data(), bt, c, c, threads);
    nn::matmul_fwd(L.ln1x.data(), params.at(pre + "attn.wk").w.data(), L.k.data(), bt, c, c, threads);
    nn::matmul_fwd(L.ln1x.data(), params.at(pre + "attn.wv").w.data(), L.v.data(), bt, c, c, threads);
    for (int bi = 0; bi < b; ++bi) {
      int64_t off = static_cast<int64_t>(bi) * t * c;
      nn::attention_fwd(L.q.data() + off, L.k.data() + off, L.v.data() + off,
                        L.att_probs.data() + static_cast<int64_t>(bi) * nh * t * t, L.att_out.data() + off,
                        t, nh, hd, threads);
    }
    nn::matmul_fwd(L.att_out.data(), params.at(pre + "attn.wo").w.data(), L.att_proj.data(), bt, c, c,
                   threads);
    for (int64_t i = 0; i < bt * c; ++i) L.res1[i] = xin[i] + L.att_proj[i];
    nn::rmsnorm_fwd(L.res1.data(), params.at(pre + "ln2.g").w.data(), L.ln2x.data(), L.ln2_rms.data(), bt,
                    c);
    nn::matmul_fwd(L.ln2x.data(), params.at(pre + "mlp.fc").w.data(), L.fc.data(), bt, c, 4 * c, threads);
    nn::silu_fwd(L.fc.data(), L.fcs.data(), bt * 4 * c);
    nn::matmul_fwd(L.fcs.data(), params.at(pre + "mlp.proj").w.data(), L.mlp_out.data(), bt, 4 * c, c,
                   threads);

    double* xout = a.x[l + 1].data();
    if (l == ml && cfg_.memory_enabled) {
      for (int64_t i = 0; i < bt * c; ++i) a.h_pre[i] = L.res1[i] + L.mlp_out[i];
      // router on plain-normalized hidden state (also reused as the gate query)
      nn::rmsnorm_fwd(a.h_pre.data(), nullptr, a.rn.data(), a.rn_rms.data(), bt, c);
      nn::matmul_fwd(a.rn.data(), params.at("mem.router").w.data(), a.rlog.data(), bt, c, kNumExperts,
                     threads);
      std::vector<int> sel;
      for (int64_t i = 0; i < bt; ++i) {
        nn::softmax(a.rlog.data() + i * kNumExperts, a.pi.data() + i * kNumExperts, kNumExperts);
        select_topk(a.pi.data() + i * kNumExperts, kk, sel);
        double s = 0.0;
        for (int n : sel) s += a.pi[i * kNumExperts + n];
        for (int n = 0; n < kNumExperts; ++n) a.alpha[i * kNumExperts + n] = 0.0;
        for (int j = 0; j < kk; ++j) {
          a.selk[i * kk + j] = sel[j];
          a.alpha[i * kNumExperts + sel[j]] = a.pi[i * kNumExperts + sel[j]] / s;
        }
      }
      // hashed gather, routing-weighted aggregation
      std::fill(a.eagg.begin(), a.eagg.end(), 0.0);
      std::vector<int32_t> ctx(kMinOrder + kNumExperts - 1);
      for (int bi = 0; bi < b; ++bi) {
        const int32_t* inp = batch.inp.data() + static_cast<size_t>(bi) * t;
        for (int ti = 0; ti < t; ++ti) {
          int64_t i = static_cast<int64_t>(bi) * t + ti;
          double* e = a.eagg.data() + i * mw;
          for (int j = 0; j < kk; ++j) {
            int n_idx = a.selk[i * kk + j];
            int order = n_idx + kMinOrder;
            double al = a.alpha[i * kNumExperts + n_idx];
            ctx.resize(order);
            for (int g = 0; g < order; ++g) {
              int src = ti - order + 1 + g;
              ctx[g] = src < 0 ? corpus::kBos : inp[src];
            }
            for (int mi = 0; mi < m; ++mi) {
              uint32_t hi = hash_index(ctx, order, mi, cfg_.table_log2, cfg_.hash_seed);
              a.hidx[(i * kk + j) * m + mi] = hi;
              const Tensor& table =
                  params.at("mem.E" + std::to_string(order) + "." + std::to_string(mi));
              const double* row = table.w.data() + static_cast<int64_t>(hi) * sd;
              double* dst = e + static_cast<int64_t>(mi) * sd;
              for (int sdi = 0; sdi < sd; ++sdi) dst[sdi] += al * row[sdi];
            }
          }
        }
      }
      nn::matmul_fwd(a.eagg.data(), params.at("mem.wk").w.data(), a.kproj.data(), bt, mw, c, threads);
      nn::matmul_fwd(a.eagg.data(), params.at("mem.wv").w.data(), a.vproj.data(), bt, mw, c, threads);
      nn::rmsnorm_fwd(a.kproj.data(), nullptr, a.kn.data(), a.kn_rms.data(), bt, c);
      const double gs = std::sqrt(cfg_.effective_gate_scale());
      for (int64_t i = 0; i < bt; ++i) {
        double dot = 0.0;
        const double* qn = a.rn.data() + i * c;
        const double* kn = a.kn.data() + i * c;
        for (int j = 0; j < c; ++j) dot += qn[j] * kn[j];
        a.gdot[i] = dot / gs;
        a.beta[i] = sigmoid(a.gdot[i]);
        const double* vp = a.vproj.data() + i * c;
        double* vt = a.vt.data() + i * c;
        for (int j = 0; j < c; ++j) vt[j] = a.beta[i] * vp[j];
      }
      nn::rmsnorm_fwd(a.vt.data(), params.at("mem.conv_ln.g").w.data(), a.cn.data(), a.cn_rms.data(), bt,
                      c);
      {
        const double* kern = params.at("mem.conv.w").w.data();
        const double* bias = params.at("mem.conv.b").w.data();
        for (int bi = 0; bi < b; ++bi)
          for (int ti = 0; ti < t; ++ti) {
            int64_t i = static_cast<int64_t>(bi) * t + ti;
            double* out = a.convo.data() + i * c;
            for (int ch = 0; ch < c; ++ch) {
              double acc = bias[ch];
              for (int j = 0; j < kw && j <= ti; ++j)
                acc += kern[static_cast<int64_t>(ch) * kw + j] * a.cn[(i - j) * c + ch];
              out[ch] = acc;
            }
          }
      }
      nn::silu_fwd(a.convo.data(), a.ysilu.data(), bt * c);
      for (int64_t i = 0; i < bt * c; ++i) a.y[i] = a.ysilu[i] + a.vt[i];
      for (int64_t i = 0; i < bt * c; ++i) xout[i] = a.h_pre[i] + a.y[i];
    } else {
      for (int64_t i = 0; i < bt * c; ++i) xout[i] = L.res1[i] + L.mlp_out[i];
    }
  }

  nn::rmsnorm_fwd(a.x[cfg_.n_layers].data(), params.at("lnf.g").w.data(), a.lnfx.data(), a.lnf_rms.data(),
                  bt, c);
  nn::matmul_fwd(a.lnfx.data(), params.at("lm_head").w.data(), a.logits.data(), bt, c, v, threads);

  // ---- loss ----
  LossReport rep;
  int64_t valid = 0;
  for (int64_t i = 0; i < bt; ++i)
    if (batch.tgt[i] >= 0) ++valid;
  if (valid == 0) throw std::invalid_argument("MascNet: batch has no valid positions");
  rep.valid_positions = valid;

  if (grads) std::fill(a.dlogits.begin(), a.dlogits.end(), 0.0);
  {
    std::vector<double> p(v);
    double ce = 0.0;
    for (int64_t i = 0; i < bt; ++i) {
      int32_t tgt = batch.tgt[i];
      if (tgt < 0) continue;
      const double* row = a.logits.data() + i * v;
      nn::softmax(row, p.data(), v);
      ce -= std::log(std::max(p[tgt], 1e-300));
      if (grads) {
        double* drow = a.dlogits.data() + i * v;
        const double inv = 1.0 / static_cast<double>(valid);
        for (int j = 0; j < v; ++j) drow[j] = p[j] * inv;
        drow[tgt] -= inv;
      }
    }
    rep.ce = ce / static_cast<double>(valid);
  }

  if (cfg_.memory_enabled) {
    for (int64_t i = 0; i < bt; ++i) {
      if (batch.tgt[i] < 0) continue;
      for (int n = 0; n < kNumExperts; ++n) rep.imp[n] += a.pi[i * kNumExperts + n];
      for (int j = 0; j < kk; ++j) rep.load[a.selk[i * kk + j]] += 1.0;
    }
    for (int n = 0; n < kNumExperts; ++n) {
      rep.imp[n] /= static_cast<double>(valid);
      rep.load[n] /= static_cast<double>(kk) * valid;
    }
    for (int n = 0; n < kNumExperts; ++n) rep.aux += rep.imp[n] * rep.load[n];
    rep.aux *= kNumExperts;
    a.load = rep.load;
  }
  rep.total = rep.ce + cfg_.lambda_aux * rep.aux;

  if (!grads) return rep;

  // ---- backward ----
  for (auto& dxv : a.dx) std::fill(dxv.begin(), dxv.end(), 0.0);
  for (auto& DL : a.dlayer) {
    std::fill(DL.ln1x.begin(), DL.ln1x.end(), 0.0);
    std::fill(DL.q.begin(), DL.q.end(), 0.0);
    std::fill(DL.k.begin(), DL.k.end(), 0.0);
    std::fill(DL.v.begin(), DL.v.end(), 0.0);
    std::fill(DL.att_out.begin(), DL.att_out.end(), 0.0);
    std::fill(DL.att_proj.begin(), DL.att_proj.end(), 0.0);
    std::fill(DL.res1.begin(), DL.res1.end(), 0.0);
    std::fill(DL.ln2x.begin(), DL.ln2x.end(), 0.0);
    std::fill(DL.fc.begin(), DL.fc.end(), 0.0);
    std::fill(DL.fcs.begin(), DL.fcs.end(), 0.0);
  }
  std::fill(a.dlnfx.begin(), a.dlnfx.end(), 0.0);

  // head
  nn::matmul_bwd_x(a.dlogits.data(), params.at("lm_head").w.data(), a.dlnfx.data(), bt, c, v, threads);
  nn::matmul_bwd_w(a.lnfx.data(), a.dlogits.data(), params.at("lm_head").g.data(), bt, c, v, threads);
  nn::rmsnorm_bwd(a.x[cfg_.n_layers].data(), params.at("lnf.g").w.data(), a.lnf_rms.data(), a.dlnfx.data(),
                  a.dx[cfg_.n_layers].data(), params.at("lnf.g").g.data(), bt, c);

  for (int l = cfg_.n_layers - 1; l >= 0; --l) {
    auto& L = a.layer[l];
    auto& DL = a.dlayer[l];
    std::string pre = "l" + std::to_string(l) + ".";
    // dres2 lives in DL.res1 after the memory-branch backward below; start
    // from the incoming gradient.
    std::vector<double>& dres2 = a.dx[l + 1];

    if (l == ml && cfg_.memory_enabled) {
      // dres2 is dx[l+1]; split into dh_pre (reuse buffer) and dY
      std::fill(a.dvt.begin(), a.dvt.end(), 0.0);
      std::fill(a.dconvo.begin(), a.dconvo.end(), 0.0);
      std::fill(a.dcn.begin(), a.dcn.end(), 0.0);
      std::fill(a.dkn.begin(), a.dkn.end(), 0.0);
      std::fill(a.dkproj.begin(), a.dkproj.end(), 0.0);
      std::fill(a.dvproj.begin(), a.dvproj.end(), 0.0);
      std::fill(a.deagg.begin(), a.deagg.end(), 0.0);
      std::fill(a.drn.begin(), a.drn.end(), 0.0);
      std::fill(a.dpi.begin(), a.dpi.end(), 0.0);
      std::fill(a.drlog.begin(), a.drlog.end(), 0.0);

      const double* dnext = dres2.data();
      // y = ysilu + vt
      for (int64_t i = 0; i < bt * c; ++i) a.dvt[i] = dnext[i];
      nn::silu_bwd(a.convo.data(), dnext, a.dconvo.data(), bt * c);
      {
        const double* kern = params.at("mem.conv.w").w.data();
        double* dkern = params.at("mem.conv.w").g.data();
        double* dbias = params.at("mem.conv.b").g.data();
        for (int bi = 0; bi < b; ++bi)
          for (int ti = 0; ti < t; ++ti) {
            int64_t i = static_cast<int64_t>(bi) * t + ti;
            const double* g = a.dconvo.data() + i * c;
            for (int ch = 0; ch < c; ++ch) {
              dbias[ch] += g[ch];
              for (int j = 0; j < kw && j <= ti; ++j) {
                dkern[static_cast<int64_t>(ch) * kw + j] += g[ch] * a.cn[(i - j) * c + ch];
                a.dcn[(i - j) * c + ch] += g[ch] * kern[static_cast<int64_t>(ch) * kw + j];
              }
            }
          }
      }
      nn::rmsnorm_bwd(a.vt.data(), params.at("mem.conv_ln.g").w.data(), a.cn_rms.data(), a.dcn.data(),
                      a.dvt.data(), params.at("mem.conv_ln.g").g.data(), bt, c);
      const double gs = std::sqrt(cfg_.effective_gate_scale());
      for (int64_t i = 0; i < bt; ++i) {
        const double* dvt = a.dvt.data() + i * c;
        const double* vp = a.vproj.data() + i * c;
        double dbeta = 0.0;
        for (int j = 0; j < c; ++j) dbeta += dvt[j] * vp[j];
        double* dvp = a.dvproj.data() + i * c;
        for (int j = 0; j < c; ++j) dvp[j] += a.beta[i] * dvt[j];
        double dgd = a.beta[i] * (1.0 - a.beta[i]) * dbeta;
        const double* qn = a.rn.data() + i * c;
        const double* kn = a.kn.data() + i * c;
        double* dqn = a.drn.data() + i * c;
        double* dkn = a.dkn.data() + i * c;
        for (int j = 0; j < c; ++j) {
          dqn[j] += dgd * kn[j] / gs;
          dkn[j] += dgd * qn[j] / gs;
        }
      }
      nn::rmsnorm_bwd(a.kproj.data(), nullptr, a.kn_rms.data(), a.dkn.data(), a.dkproj.data(), nullptr, bt,
                      c);
      nn::matmul_bwd_x(a.dkproj.data(), params.at("mem.wk").w.data(), a.deagg.data(), bt, mw, c, threads);
      nn::matmul_bwd_w(a.eagg.data(), a.dkproj.data(), params.at("mem.wk").g.data(), bt, mw, c, threads);
      nn::matmul_bwd_x(a.dvproj.data(), params.at("mem.wv").w.data(), a.deagg.data(), bt, mw, c, threads);
      nn::matmul_bwd_w(a.eagg.data(), a.dvproj.data(), params.at("mem.wv").g.data(), bt, mw, c, threads);

      // expert tables and routing weights
      const double lam = cfg_.lambda_aux;
      std::vector<double> en(mw);
      for (int64_t i = 0; i < bt; ++i) {
        const double* de = a.deagg.data() + i * mw;
        double dalpha[kNumExperts] = {0, 0, 0, 0};
        double ssel = 0.0;
        for (int j = 0; j < kk; ++j) ssel += a.pi[i * kNumExperts + a.selk[i * kk + j]];
        for (int j = 0; j < kk; ++j) {
          int n_idx = a.selk[i * kk + j];
          int order = n_idx + kMinOrder;
          double al = a.alpha[i * kNumExperts + n_idx];
          double dot = 0.0;
          for (int mi = 0; mi < m; ++mi) {
            uint32_t hi = a.hidx[(i * kk + j) * m + mi];
            Tensor& table = params.at("mem.E" + std::to_string(order) + "." + std::to_string(mi));
            const double* row = table.w.data() + static_cast<int64_t>(hi) * sd;
            double* grow = table.g.data() + static_cast<int64_t>(hi) * sd;
            const double* des = de + static_cast<int64_t>(mi) * sd;
            for (int sdi = 0; sdi < sd; ++sdi) {
              dot += row[sdi] * des[sdi];
              grow[sdi] += al * des[sdi];
            }
          }
          dalpha[n_idx] = dot;
        }
        // alpha = pi / ssel over the selected set
        double wsum = 0.0;
        for (int j = 0; j < kk; ++j) {
          int n_idx = a.selk[i * kk + j];
          wsum += dalpha[n_idx] * a.alpha[i * kNumExperts + n_idx];
        }
        double* dpi = a.dpi.data() + i * kNumExperts;
        for (int j = 0; j < kk; ++j) {
          int n_idx = a.selk[i * kk + j];
          dpi[n_idx] += (dalpha[n_idx] - wsum) / ssel;
        }
        // auxiliary loss: Load held constant, Imp differentiates
        if (batch.tgt[i] >= 0) {
          for (int n = 0; n < kNumExperts; ++n)
            dpi[n] += lam * kNumExperts * a.load[n] / static_cast<double>(valid);
        }
        // softmax backward
        const double* pi = a.pi.data() + i * kNumExperts;
        double dot = 0.0;
        for (int n = 0; n < kNumExperts; ++n) dot += dpi[n] * pi[n];
        double* drl = a.drlog.data() + i * kNumExperts;
        for (int n = 0; n < kNumExperts; ++n) drl[n] = pi[n] * (dpi[n] - dot);
      }
      nn::matmul_bwd_x(a.drlog.data(), params.at("mem.router").w.data(), a.drn.data(), bt, c, kNumExperts,
                       threads);
      nn::matmul_bwd_w(a.rn.data(), a.drlog.data(), params.at("mem.router").g.data(), bt, c, kNumExperts,
                       threads);
      // h_pre receives: identity residual + normalized-query/router path
      nn::rmsnorm_bwd(a.h_pre.data(), nullptr, a.rn_rms.data(), a.drn.data(), dres2.data(), nullptr, bt,
                      c);
      // dres2 now equals dL/dh_pre; fall through to the shared layer backward
    }

    // res2 = res1 + mlp_out
    const double* dres2p = dres2.data();
    for (int64_t i = 0; i < bt * c; ++i) DL.res1[i] = dres2p[i];
    nn::matmul_bwd_x(dres2p, params.at(pre + "mlp.proj").w.data(), DL.fcs.data(), bt, 4 * c, c, threads);
    nn::matmul_bwd_w(L.fcs.data(), dres2p, params.at(pre + "mlp.proj").g.data(), bt, 4 * c, c, threads);
    nn::silu_bwd(L.fc.data(), DL.fcs.data(), DL.fc.data(), bt * 4 * c);
    nn::matmul_bwd_x(DL.fc.data(), params.at(pre + "mlp.fc").w.data(), DL.ln2x.data(), bt, c, 4 * c,
                     threads);
    nn::matmul_bwd_w(L.ln2x.data(), DL.fc.data(), params.at(pre + "mlp.fc").g.data(), bt, c, 4 * c,
                     threads);
    nn::rmsnorm_bwd(L.res1.data(), params.at(pre + "ln2.g").w.data(), L.ln2_rms.data(), DL.ln2x.data(),
                    DL.res1.data(), params.at(pre + "ln2.g").g.data(), bt, c);
    // res1 = x + att_proj
    double* dxl = a.dx[l].data();
    for (int64_t i = 0; i < bt * c; ++i) {
      dxl[i] += DL.res1[i];
      DL.att_proj[i] = DL.res1[i];
    }
    nn::matmul_bwd_x(DL.att_proj.data(), params.at(pre + "attn.wo").w.data(), DL.att_out.data(), bt, c, c,
                     threads);
    nn::matmul_bwd_w(L.att_out.data(), DL.att_proj.data(), params.at(pre + "attn.wo").g.data(), bt, c, c,
                     threads);
    for (int bi = 0; bi < b; ++bi) {
      int64_t off = static_cast<int64_t>(bi) * t * c;
      nn::attention_bwd(L.q.data() + off, L.k.data() + off, L.v.data() + off,
                        L.att_probs.data() + static_cast<int64_t>(bi) * nh * t * t, DL.att_out.data() + off,
                        DL.q.data() + off, DL.k.data() + off, DL.v.data() + off, DL.probs_scratch.data(),
                        t, nh, hd, threads);
    }
    nn::matmul_bwd_x(DL.q.data(), params.at(pre + "attn.wq").w.data(), DL.ln1x.data(), bt, c, c, threads);
    nn::matmul_bwd_w(L.ln1x.data(), DL.q.data(), params.at(pre + "attn.wq").g.data(), bt, c, c, threads);
    nn::matmul_bwd_x(DL.k.data(), params.at(pre + "attn.wk").w.data(), DL.ln1x.data(), bt, c, c, threads);
    nn::matmul_bwd_w(L.ln1x.data(), DL.k.data(), params.at(pre + "attn.wk").g.data(), bt, c, c, threads);
    nn::matmul_bwd_x(DL.v.data(), params.at(pre + "attn.wv").w.data(), DL.ln1x.data(), bt, c, c, threads);
    nn::matmul_bwd_w(L.ln1x.data(), DL.v.data(), params.at(pre + "attn.wv").g.data(), bt, c, c, threads);
    nn::rmsnorm_bwd(a.x[l].data(), params.at(pre + "ln1.g").w.data(), L.ln1_rms.data(), DL.ln1x.data(),
                    a.dx[l].data(), params.at(pre + "ln1.g").g.data(), bt, c);
  }

  // embeddings
  {
    double* dwte = params.at("wte").g.data();
    double* dwpe = params.at("wpe").g.data();
    const double* dx0 = a.dx[0].data();
    for (int bi = 0; bi < b; ++bi)
      for (int ti = 0; ti < t; ++ti) {
        int32_t tok = batch.inp[static_cast<size_t>(bi) * t + ti];
        const double* g = dx0 + (static_cast<int64_t>(bi) * t + ti) * c;
        double* te = dwte + static_cast<int64_t>(tok) * c;
        double* pe = dwpe + static_cast<int64_t>(ti) * c;
        for (int j = 0; j < c; ++j) {
          te[j] += g[j];
          pe[j] += g[j];
        }
      }
  }
  return rep;
}

// ---- incremental session ----

MascSession::MascSession(const MascParams& params, const MascConfig& cfg) : p_(params), cfg_(cfg) {
  cfg_.validate();
  kcache_.assign(cfg_.n_layers, std::vector<double>(static_cast<size_t>(cfg_.max_seq_len) * cfg_.d_model));
  vcache_.assign(cfg_.n_layers, std::vector<double>(static_cast<size_t>(cfg_.max_seq_len) * cfg_.d_model));
  vt_ring_.assign(cfg_.conv_kernel, std::vector<double>(cfg_.d_model, 0.0));
  reset();
}

void MascSession::reset() {
  pos_ = 0;
  history_.clear();
  for (auto& kc : kcache_) std::fill(kc.begin(), kc.end(), 0.0);
  for (auto& vc : vcache_) std::fill(vc.begin(), vc.end(), 0.0);
  for (auto& r : vt_ring_) std::fill(r.begin(), r.end(), 0.0);
  load_hist_ = {};
  routed_tokens_ = 0;
}

void MascSession::rebuild_from(const std::vector<int32_t>& history) {
  auto hist = history;  // copy; reset clears history_
  auto load = load_hist_;
  auto routed = routed_tokens_;
  reset();
  load_hist_ = load;
  routed_tokens_ = routed;
  for (int32_t tok : hist) push_internal(tok, false);
}

std::vector<double> MascSession::push(int32_t token) { return push_internal(token, true); }

std::vector<double> MascSession::push_internal(int32_t token, bool track) {
  if (token < 0 || token >= cfg_.vocab_size) throw std::invalid_argument("MascSession: token out of range");
  if (pos_ >= cfg_.max_seq_len) {
    // Sliding-window restart: keep the trailing half of the context. Only
    // reachable while decoding corrupted streams past the training length.
    std::vector<int32_t> keep(history_.end() - cfg_.max_seq_len / 2, history_.end());
    rebuild_from(keep);
  }
  const int c = cfg_.d_model;
  const int nh = cfg_.n_heads;
  const int hd = c / nh;
  const int t = pos_;
  history_.push_back(token);
  ++pos_;

  std::vector<double> x(c);
  {
    const double* te = p_.at("wte").w.data() + static_cast<int64_t>(token) * c;
    const double* pe = p_.at("wpe").w.data() + static_cast<int64_t>(t) * c;
    for (int j = 0; j < c; ++j) x[j] = te[j] + pe[j];
  }
  std::vector<double> ln(c), q(c), att(c), tmp(c), tmp4(4 * c);
  double rms;
  for (int l = 0; l < cfg_.n_layers; ++l) {
    std::string pre = "l" + std::to_string(l) + ".";
    std::vector<double> resid = x;
    nn::rmsnorm_fwd(x.data(), p_.at(pre + "ln1.g").w.data(), ln.data(), &rms, 1, c);
    nn::matmul_fwd(ln.data(), p_.at(pre + "attn.wq").w.data(), q.data(), 1, c, c, 1);
    double* krow = kcache_[l].data() + static_cast<int64_t>(t) * c;
    double* vrow = vcache_[l].data() + static_cast<int64_t>(t) * c;
    nn::matmul_fwd(ln.data(), p_.at(pre + "attn.wk").w.data(), krow, 1, c, c, 1);
    nn::matmul_fwd(ln.data(), p_.at(pre + "attn.wv").w.data(), vrow, 1, c, c, 1);
    const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
    std::vector<double> scores(t + 1);
    for (int h = 0; h < nh; ++h) {
      const double* qh = q.data() + h * hd;
      double mx = -1e300;
      for (int j = 0; j <= t; ++j) {
        const double* kj = kcache_[l].data() + static_cast<int64_t>(j) * c + h * hd;
        double acc = 0.0;
        for (int d = 0; d < hd; ++d) acc += qh[d] * kj[d];
        scores[j] = acc * scale;
        mx = std::max(mx, scores[j]);
      }
      double sum = 0.0;
      for (int j = 0; j <= t; ++j) {
        scores[j] = std::exp(scores[j] - mx);
        sum += scores[j];
      }
      double inv = 1.0 / sum;
      double* ah = att.data() + h * hd;
      for (int d = 0; d < hd; ++d) ah[d] = 0.0;
      for (int j = 0; j <= t; ++j) {
        const double* vj = vcache_[l].data() + static_cast<int64_t>(j) * c + h * hd;
        double pj = scores[j] * inv;
        for (int d = 0; d < hd; ++d) ah[d] += pj * vj[d];
      }
    }
    nn::matmul_fwd(att.data(), p_.at(pre + "attn.wo").w.data(), tmp.data(), 1, c, c, 1);
    for (int j = 0; j < c; ++j) x[j] = resid[j] + tmp[j];
    std::vector<double> resid2 = x;
    nn::rmsnorm_fwd(x.data(), p_.at(pre + "ln2.g").w.data(), ln.data(), &rms, 1, c);
    nn::matmul_fwd(ln.data(), p_.at(pre + "mlp.fc").w.data(), tmp4.data(), 1, c, 4 * c, 1);
    nn::silu_fwd(tmp4.data(), tmp4.data(), 4 * c);
    nn::matmul_fwd(tmp4.data(), p_.at(pre + "mlp.proj").w.data(), tmp.data(), 1, 4 * c, c, 1);
    for (int j = 0; j < c; ++j) x[j] = resid2[j] + tmp[j];

    if (l == cfg_.memory_layer && cfg_.memory_enabled) {
      RoutingDecision rd = mmer_route(x, p_, cfg_);
      if (track) {
        for (int order : rd.selected_orders) load_hist_[order - kMinOrder] += 1.0;
        ++routed_tokens_;
      }
      std::vector<double> e = routed_memory(history_, static_cast<int>(history_.size()), rd, p_, cfg_);
      GateOutput gate = gated_fuse(x, e, p_, cfg_);
      // conv over the normalized gated values, causal within the window
      std::vector<double> cn(c);
      nn::rmsnorm_fwd(gate.v_tilde.data(), p_.at("mem.conv_ln.g").w.data(), cn.data(), &rms, 1, c);
      vt_ring_[t % cfg_.conv_kernel] = cn;
      const double* kern = p_.at("mem.conv.w").w.data();
      const double* bias = p_.at("mem.conv.b").w.data();
      for (int ch = 0; ch < c; ++ch) {
        double acc = bias[ch];
        for (int j = 0; j < cfg_.conv_kernel && j <= t; ++j)
          acc += kern[static_cast<int64_t>(ch) * cfg_.conv_kernel + j] *
                 vt_ring_[(t - j) % cfg_.conv_kernel][ch];
        double s = sigmoid(acc);
        x[ch] += acc * s + gate.v_tilde[ch];
      }
    }
  }
  nn::rmsnorm_fwd(x.data(), p_.at("lnf.g").w.data(), ln.data(), &rms, 1, c);
  std::vector<double> logits(cfg_.vocab_size);
  nn::matmul_fwd(ln.data(), p_.at("lm_head").w.data(), logits.data(), 1, c, cfg_.vocab_size, 1);
  std::vector<double> probs(cfg_.vocab_size);
  nn::softmax(logits.data(), probs.data(), cfg_.vocab_size);
  return probs;
}

// ---- SourceModel adapter ----

MascModel::MascModel(std::shared_ptr<const MascParams> params, const MascConfig& cfg)
    : params_(std::move(params)), cfg_(cfg), session_(*params_, cfg_) {}

void MascModel::begin_stream() {
  session_.reset();
  fed_.clear();
  last_probs_ = session_.push(corpus::kBos);
  primed_ = true;
}

std::vector<double> MascModel::next_pmf(std::span<const int32_t> prefix) {
  bool extends = primed_ && prefix.size() >= fed_.size() && prefix.size() <= fed_.size() + 1 &&
                 std::equal(fed_.begin(), fed_.end(), prefix.begin());
  if (!extends) {
    begin_stream();
    for (int32_t tok : prefix) {
      last_probs_ = session_.push(tok);
      fed_.push_back(tok);
    }
    return last_probs_;
  }
  if (prefix.size() == fed_.size() + 1) {
    last_probs_ = session_.push(prefix.back());
    fed_.push_back(prefix.back());
  }
  return last_probs_;
}

std::array<double, kNumExperts> MascModel::load_histogram() const {
  auto h = session_.load_histogram();
  double s = 0.0;
  for (double x : h) s += x;
  if (s > 0)
    for (double& x : h) x /= s;
  return h;
}

int64_t MascModel::routed_tokens() const { return session_.routed_tokens(); }

// ---- checkpoint io ----

namespace {

void put_u32(std::vector<uint8_t>& buf, uint32_t x) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<uint8_t>(x >> (8 * i)));
}
void put_u64(std::vector<uint8_t>& buf, uint64_t x) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<uint8_t>(x >> (8 * i)));
}
void put_bytes(std::vector<uint8_t>& buf, const void* p, size_t n) {
  const auto* b = static_cast<const uint8_t*>(p);
  buf.insert(buf.end(), b, b + n);
}

struct Reader {
  const uint8_t* p;
  const uint8_t* end;
  void need(size_t n) const {
    if (static_cast<size_t>(end - p) < n) throw std::runtime_error("checkpoint truncated");
  }
  uint32_t u32() {
    need(4);
    uint32_t x = 0;
    for (int i = 3; i >= 0; --i) x = (x << 8) | p[i];
    p += 4;
    return x;
  }
  uint64_t u64() {
    need(8);
    uint64_t x = 0;
    for (int i = 7; i >= 0; --i) x = (x << 8) | p[i];
    p += 8;
    return x;
  }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p), n);
    p += n;
    return s;
  }
};

constexpr char kCkptMagic[8] = {'M', 'A', 'S', 'C', 'C', 'K', 'P', '1'};

}  // namespace

void save_checkpoint(const MascParams& params, const MascConfig& cfg, const CheckpointMeta& meta,
                     const std::string& path) {
  std::vector<uint8_t> payload;
  put_u32(payload, 1);  // version
  std::string cfg_json = cfg.to_json();
  put_u32(payload, static_cast<uint32_t>(cfg_json.size()));
  put_bytes(payload, cfg_json.data(), cfg_json.size());
  json mj;
  mj["max_train_len"] = meta.max_train_len;
  mj["steps"] = meta.steps;
  mj["val_ce"] = meta.val_ce;
  std::string meta_json = mj.dump();
  put_u32(payload, static_cast<uint32_t>(meta_json.size()));
  put_bytes(payload, meta_json.data(), meta_json.size());
  put_u32(payload, static_cast<uint32_t>(params.tensors.size()));
  for (const auto& t : params.tensors) {
    put_u32(payload, static_cast<uint32_t>(t.name.size()));
    put_bytes(payload, t.name.data(), t.name.size());
    put_u32(payload, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) put_u64(payload, static_cast<uint64_t>(d));
    for (double x : t.w) put_u64(payload, std::bit_cast<uint64_t>(x));
  }
  uint64_t checksum = fnv1a64(payload.data(), payload.size());

  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
  out.write(kCkptMagic, 8);
  out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  std::vector<uint8_t> tail;
  put_u64(tail, checksum);
  out.write(reinterpret_cast<const char*>(tail.data()), 8);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < 16 || std::memcmp(data.data(), kCkptMagic, 8) != 0)
    throw std::runtime_error("bad checkpoint magic");
  const size_t payload_len = data.size() - 16;
  uint64_t stored = 0;
  for (int i = 7; i >= 0; --i) stored = (stored << 8) | data[data.size() - 8 + i];
  uint64_t actual = fnv1a64(data.data() + 8, payload_len);
  if (stored != actual) throw std::runtime_error("checkpoint checksum mismatch");

  Reader r{data.data() + 8, data.data() + 8 + payload_len};
  uint32_t version = r.u32();
  if (version != 1) throw std::runtime_error("unsupported checkpoint version");
  Checkpoint ck;
  ck.cfg = MascConfig::from_json(r.str(r.u32()));
  json mj = json::parse(r.str(r.u32()));
  ck.meta.max_train_len = mj.value("max_train_len", int64_t(0));
  ck.meta.steps = mj.value("steps", int64_t(0));
  ck.meta.val_ce = mj.value("val_ce", 0.0);
  uint32_t count = r.u32();
  ck.params.init(ck.cfg, 0);
  if (count != ck.params.tensors.size()) throw std::runtime_error("checkpoint tensor count mismatch");
  for (uint32_t i = 0; i < count; ++i) {
    std::string name = r.str(r.u32());
    Tensor& t = ck.params.at(name);
    uint32_t ndim = r.u32();
    if (ndim != t.shape.size()) throw std::runtime_error("checkpoint tensor rank mismatch: " + name);
    for (uint32_t d = 0; d < ndim; ++d)
      if (static_cast<int64_t>(r.u64()) != t.shape[d])
        throw std::runtime_error("checkpoint tensor shape mismatch: " + name);
    for (auto& x : t.w) x = std::bit_cast<double>(r.u64());
  }
  return ck;
}

}  // namespace sscc::masc
