#pragma once

#include <cstdint>
#include <vector>

namespace sscc::nn {

inline constexpr double kRmsEps = 1e-8;

// y[r,:] = x[r,:] * w^T with w stored row-major [out][in].
void matmul_fwd(const double* x, const double* w, double* y, int64_t rows, int in_dim, int out_dim,
                int threads);
// dx[r,:] += dy[r,:] * w
void matmul_bwd_x(const double* dy, const double* w, double* dx, int64_t rows, int in_dim, int out_dim,
                  int threads);
// dw[o,:] += sum_r dy[r,o] * x[r,:]
void matmul_bwd_w(const double* x, const double* dy, double* dw, int64_t rows, int in_dim, int out_dim,
                  int threads);

// RMS normalization, y = x / rms(x) * g. Pass g == nullptr for the plain
// (gain-free) variant. rms_cache holds one value per row for the backward.
void rmsnorm_fwd(const double* x, const double* g, double* y, double* rms_cache, int64_t rows, int dim);
void rmsnorm_bwd(const double* x, const double* g, const double* rms_cache, const double* dy, double* dx,
                 double* dg, int64_t rows, int dim);

void silu_fwd(const double* x, double* y, int64_t n);
void silu_bwd(const double* x, const double* dy, double* dx, int64_t n);

void softmax(const double* logits, double* probs, int n);

// Causal multi-head self-attention over one batch entry layout [T, C] with C
// = heads * head_dim. probs is scratch of size [heads, T, T].
void attention_fwd(const double* q, const double* k, const double* v, double* probs, double* out, int t,
                   int heads, int head_dim, int threads);
void attention_bwd(const double* q, const double* k, const double* v, const double* probs,
                   const double* dout, double* dq, double* dk, double* dv, double* dprobs_scratch, int t,
                   int heads, int head_dim, int threads);

struct AdamState {
  std::vector<double> m, v;
};

void adam_step(double* w, const double* g, AdamState& state, int64_t n, double lr, double beta1,
               double beta2, double eps, int64_t step);

}  // namespace sscc::nn
