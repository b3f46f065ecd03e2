#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sscc/corpus.hpp"
#include "sscc/source_model.hpp"

namespace sscc::masc {

inline constexpr int kNumExperts = 4;           // n-gram orders 2..5
inline constexpr int kMinOrder = 2;

struct MascConfig {
  int d_model = 128;
  int n_layers = 2;
  int n_heads = 4;
  int max_seq_len = 256;
  int memory_layer = 1;  // memory injected after this layer (0-based)
  int hash_heads = 2;    // M
  int table_log2 = 16;   // per-order table size 2^table_log2
  int slot_dim = 64;     // memory width = hash_heads * slot_dim
  int top_k = 2;
  double gate_scale = 0.0;  // 0 -> d_model
  double lambda_aux = 0.01;
  int conv_kernel = 4;
  int vocab_size = corpus::kVocabSize;
  uint64_t hash_seed = 0x5cc0ffee1234abcdull;
  bool memory_enabled = true;

  int memory_width() const { return hash_heads * slot_dim; }
  int64_t table_size() const { return int64_t(1) << table_log2; }
  double effective_gate_scale() const { return gate_scale > 0.0 ? gate_scale : double(d_model); }
  void validate() const;

  std::string to_json() const;
  static MascConfig from_json(const std::string& json_text);
};

struct Tensor {
  std::string name;
  std::vector<int64_t> shape;
  std::vector<double> w;
  std::vector<double> g;

  int64_t size() const { return static_cast<int64_t>(w.size()); }
};

class MascParams {
 public:
  void init(const MascConfig& cfg, uint64_t seed);

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) > 0; }

  std::vector<Tensor> tensors;

  int64_t total_params() const;
  void zero_grads();
  double grad_norm() const;
  void scale_grads(double s);

  // Removes the whole memory-branch contribution: embedding tables, value
  // projection and the conv stack go to zero, so the forward pass reduces to
  // the plain backbone exactly.
  void ablate_memory();

 private:
  friend class MascNet;
  Tensor& add(const std::string& name, std::vector<int64_t> shape);
  void rebuild_index();
  std::unordered_map<std::string, size_t> index_;
};

// Per-token routing outcome (Section: MMER). Experts are indexed 0..3 for
// orders 2..5; alpha is zero outside the selected set.
struct RoutingDecision {
  std::array<double, kNumExperts> pi{};
  std::array<double, kNumExperts> alpha{};
  std::vector<int> selected_orders;  // ascending, size top_k
};

struct LossReport {
  double ce = 0.0;
  double aux = 0.0;
  double total = 0.0;
  std::array<double, kNumExperts> imp{};
  std::array<double, kNumExperts> load{};
  int64_t valid_positions = 0;
};

// ---- standalone ops (single-token reference paths; the batched net mirrors
// them and the tests cross-check the two) ----

// Order-n suffix context ending at 1-indexed position i, BOS-left-padded.
std::vector<int32_t> suffix_context(const corpus::Tokens& tokens, int i, int n);

// Deterministic multiply-shift hash of a token tuple into [0, 2^table_log2).
// Seeds derive from (base_seed, order, head) only, so indices are stable
// across runs and machines.
uint32_t hash_index(std::span<const int32_t> ctx, int order, int head, int table_log2,
                    uint64_t base_seed);

// Concatenated M-head embedding for the order-n context ending at 1-indexed
// position i.
std::vector<double> pcm_lookup(const corpus::Tokens& tokens, int i, int order, const MascParams& params,
                               const MascConfig& cfg);

RoutingDecision mmer_route(std::span<const double> hidden, const MascParams& params,
                           const MascConfig& cfg);

std::vector<double> routed_memory(const corpus::Tokens& tokens, int i, const RoutingDecision& routing,
                                  const MascParams& params, const MascConfig& cfg);

struct GateOutput {
  double beta;
  std::vector<double> v_tilde;
};
GateOutput gated_fuse(std::span<const double> hidden, std::span<const double> memory,
                      const MascParams& params, const MascConfig& cfg);

// Y = SiLU(causal depthwise conv(Norm(vt))) + vt over a [T x C] sequence.
// use_norm=false bypasses the RMS norm (closed-form test mode).
std::vector<double> conv_refine(std::span<const double> vt, int t, int c,
                                std::span<const double> kernel, std::span<const double> bias,
                                std::span<const double> norm_gain, bool use_norm);

// ---- batched network ----

struct Batch {
  int b = 0, t = 0;
  std::vector<int32_t> inp;  // [b*t], BOS-prefixed inputs, BOS right-padding
  std::vector<int32_t> tgt;  // [b*t], -1 marks padded positions
};

Batch make_batch(const std::vector<corpus::Tokens>& sequences, int max_seq_len);

class MascNet {
 public:
  MascNet(const MascConfig& cfg, uint64_t init_seed);
  ~MascNet();

  const MascConfig& config() const { return cfg_; }
  void set_memory_enabled(bool on) { cfg_.memory_enabled = on; }
  void set_lambda_aux(double l) { cfg_.lambda_aux = l; }

  MascParams params;

  LossReport forward(const Batch& batch, int threads);           // no grads
  LossReport forward_backward(const Batch& batch, int threads);  // accumulates grads

  // views into the last forward's activations
  std::span<const double> logits() const;                    // [b*t*vocab]
  RoutingDecision routing_at(int b, int t) const;
  double min_routing_logit_margin(const Batch& batch) const;  // over valid positions

 private:
  struct Acts;
  void ensure_acts(int b, int t);
  LossReport run(const Batch& batch, bool grads, int threads);

  MascConfig cfg_;
  std::unique_ptr<Acts> acts_;
};

// ---- incremental single-stream inference ----

class MascSession {
 public:
  MascSession(const MascParams& params, const MascConfig& cfg);

  void reset();
  // Feeds one token, returns the next-token probability vector.
  std::vector<double> push(int32_t token);
  const std::array<double, kNumExperts>& load_histogram() const { return load_hist_; }
  int64_t routed_tokens() const { return routed_tokens_; }

 private:
  void rebuild_from(const std::vector<int32_t>& history);
  std::vector<double> push_internal(int32_t token, bool track);

  const MascParams& p_;
  MascConfig cfg_;
  int pos_ = 0;
  std::vector<int32_t> history_;
  std::vector<std::vector<double>> kcache_, vcache_;  // per layer [maxT * C]
  std::vector<std::vector<double>> vt_ring_;          // last conv_kernel cn vectors
  std::array<double, kNumExperts> load_hist_{};
  int64_t routed_tokens_ = 0;
};

// SourceModel adapter over a frozen parameter set.
class MascModel final : public model::SourceModel {
 public:
  MascModel(std::shared_ptr<const MascParams> params, const MascConfig& cfg);

  int vocab_size() const override { return cfg_.vocab_size; }
  void begin_stream() override;
  std::vector<double> next_pmf(std::span<const int32_t> prefix) override;

  std::array<double, kNumExperts> load_histogram() const;
  int64_t routed_tokens() const;

 private:
  std::shared_ptr<const MascParams> params_;
  MascConfig cfg_;
  MascSession session_;
  std::vector<int32_t> fed_;  // prefix tokens already pushed (after BOS)
  std::vector<double> last_probs_;
  bool primed_ = false;
};

// ---- checkpoint io ----

struct CheckpointMeta {
  int64_t max_train_len = 0;  // longest training sequence (tokens incl. EOS)
  int64_t steps = 0;
  double val_ce = 0.0;
};

void save_checkpoint(const MascParams& params, const MascConfig& cfg, const CheckpointMeta& meta,
                     const std::string& path);
struct Checkpoint {
  MascParams params;
  MascConfig cfg;
  CheckpointMeta meta;
};
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sscc::masc
