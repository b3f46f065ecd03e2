#include "sscc/nn.hpp"

#include <algorithm>
#include <cmath>

#include "sscc/util.hpp"

namespace sscc::nn {

void matmul_fwd(const double* x, const double* w, double* y, int64_t rows, int in_dim, int out_dim,
                int threads) {
  parallel_for(rows, threads, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const double* xr = x + r * in_dim;
      double* yr = y + r * out_dim;
      for (int o = 0; o < out_dim; ++o) {
        const double* wo = w + static_cast<int64_t>(o) * in_dim;
        double acc = 0.0;
        for (int i = 0; i < in_dim; ++i) acc += xr[i] * wo[i];
        yr[o] = acc;
      }
    }
  });
}

void matmul_bwd_x(const double* dy, const double* w, double* dx, int64_t rows, int in_dim, int out_dim,
                  int threads) {
  parallel_for(rows, threads, [&](int64_t r0, int64_t r1) {
    for (int64_t r = r0; r < r1; ++r) {
      const double* dyr = dy + r * out_dim;
      double* dxr = dx + r * in_dim;
      for (int o = 0; o < out_dim; ++o) {
        const double g = dyr[o];
        if (g == 0.0) continue;
        const double* wo = w + static_cast<int64_t>(o) * in_dim;
        for (int i = 0; i < in_dim; ++i) dxr[i] += g * wo[i];
      }
    }
  });
}

void matmul_bwd_w(const double* x, const double* dy, double* dw, int64_t rows, int in_dim, int out_dim,
                  int threads) {
  // partitioned over w rows so each accumulator has a single writer
  parallel_for(out_dim, threads, [&](int64_t o0, int64_t o1) {
    for (int64_t o = o0; o < o1; ++o) {
      double* dwo = dw + o * in_dim;
      for (int64_t r = 0; r < rows; ++r) {
        const double g = dy[r * out_dim + o];
        if (g == 0.0) continue;
        const double* xr = x + r * in_dim;
        for (int i = 0; i < in_dim; ++i) dwo[i] += g * xr[i];
      }
    }
  });
}

void rmsnorm_fwd(const double* x, const double* g, double* y, double* rms_cache, int64_t rows, int dim) {
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * dim;
    double* yr = y + r * dim;
    double ms = 0.0;
    for (int i = 0; i < dim; ++i) ms += xr[i] * xr[i];
    double rms = std::sqrt(ms / dim + kRmsEps);
    rms_cache[r] = rms;
    double inv = 1.0 / rms;
    if (g) {
      for (int i = 0; i < dim; ++i) yr[i] = xr[i] * inv * g[i];
    } else {
      for (int i = 0; i < dim; ++i) yr[i] = xr[i] * inv;
    }
  }
}

void rmsnorm_bwd(const double* x, const double* g, const double* rms_cache, const double* dy, double* dx,
                 double* dg, int64_t rows, int dim) {
  for (int64_t r = 0; r < rows; ++r) {
    const double* xr = x + r * dim;
    const double* dyr = dy + r * dim;
    double* dxr = dx + r * dim;
    const double rms = rms_cache[r];
    const double inv = 1.0 / rms;
    double dot = 0.0;  // sum_i u_i * x_i with u = dy * g
    for (int i = 0; i < dim; ++i) {
      double u = g ? dyr[i] * g[i] : dyr[i];
      dot += u * xr[i];
    }
    const double c = dot / (dim * rms * rms * rms);
    for (int i = 0; i < dim; ++i) {
      double u = g ? dyr[i] * g[i] : dyr[i];
      dxr[i] += u * inv - c * xr[i];
      if (dg) dg[i] += dyr[i] * xr[i] * inv;
    }
  }
}

void silu_fwd(const double* x, double* y, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    double s = 1.0 / (1.0 + std::exp(-x[i]));
    y[i] = x[i] * s;
  }
}

void silu_bwd(const double* x, const double* dy, double* dx, int64_t n) {
  for (int64_t i = 0; i < n; ++i) {
    double s = 1.0 / (1.0 + std::exp(-x[i]));
    dx[i] += dy[i] * (s + x[i] * s * (1.0 - s));
  }
}

void softmax(const double* logits, double* probs, int n) {
  double mx = logits[0];
  for (int i = 1; i < n; ++i) mx = std::max(mx, logits[i]);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) {
    probs[i] = std::exp(logits[i] - mx);
    sum += probs[i];
  }
  double inv = 1.0 / sum;
  for (int i = 0; i < n; ++i) probs[i] *= inv;
}

void attention_fwd(const double* q, const double* k, const double* v, double* probs, double* out, int t,
                   int heads, int head_dim, int threads) {
  const int c = heads * head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  parallel_for(heads, threads, [&](int64_t h0, int64_t h1) {
    for (int64_t h = h0; h < h1; ++h) {
      double* ph = probs + h * t * t;
      for (int i = 0; i < t; ++i) {
        const double* qi = q + static_cast<int64_t>(i) * c + h * head_dim;
        double* row = ph + static_cast<int64_t>(i) * t;
        double mx = -1e300;
        for (int j = 0; j <= i; ++j) {
          const double* kj = k + static_cast<int64_t>(j) * c + h * head_dim;
          double acc = 0.0;
          for (int d = 0; d < head_dim; ++d) acc += qi[d] * kj[d];
          row[j] = acc * scale;
          mx = std::max(mx, row[j]);
        }
        double sum = 0.0;
        for (int j = 0; j <= i; ++j) {
          row[j] = std::exp(row[j] - mx);
          sum += row[j];
        }
        double inv = 1.0 / sum;
        for (int j = 0; j <= i; ++j) row[j] *= inv;
        for (int j = i + 1; j < t; ++j) row[j] = 0.0;

        double* oi = out + static_cast<int64_t>(i) * c + h * head_dim;
        for (int d = 0; d < head_dim; ++d) oi[d] = 0.0;
        for (int j = 0; j <= i; ++j) {
          const double* vj = v + static_cast<int64_t>(j) * c + h * head_dim;
          const double p = row[j];
          for (int d = 0; d < head_dim; ++d) oi[d] += p * vj[d];
        }
      }
    }
  });
}

void attention_bwd(const double* q, const double* k, const double* v, const double* probs,
                   const double* dout, double* dq, double* dk, double* dv, double* dprobs_scratch, int t,
                   int heads, int head_dim, int threads) {
  const int c = heads * head_dim;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  parallel_for(heads, threads, [&](int64_t h0, int64_t h1) {
    for (int64_t h = h0; h < h1; ++h) {
      const double* ph = probs + h * t * t;
      double* dph = dprobs_scratch + h * t * t;
      for (int i = 0; i < t; ++i) {
        const double* row = ph + static_cast<int64_t>(i) * t;
        double* drow = dph + static_cast<int64_t>(i) * t;
        const double* doi = dout + static_cast<int64_t>(i) * c + h * head_dim;
        for (int j = 0; j <= i; ++j) {
          const double* vj = v + static_cast<int64_t>(j) * c + h * head_dim;
          double* dvj = dv + static_cast<int64_t>(j) * c + h * head_dim;
          double acc = 0.0;
          const double p = row[j];
          for (int d = 0; d < head_dim; ++d) {
            acc += doi[d] * vj[d];
            dvj[d] += p * doi[d];
          }
          drow[j] = acc;
        }
        double dot = 0.0;
        for (int j = 0; j <= i; ++j) dot += drow[j] * row[j];
        const double* qi = q + static_cast<int64_t>(i) * c + h * head_dim;
        double* dqi = dq + static_cast<int64_t>(i) * c + h * head_dim;
        for (int j = 0; j <= i; ++j) {
          double ds = row[j] * (drow[j] - dot) * scale;
          const double* kj = k + static_cast<int64_t>(j) * c + h * head_dim;
          double* dkj = dk + static_cast<int64_t>(j) * c + h * head_dim;
          for (int d = 0; d < head_dim; ++d) {
            dqi[d] += ds * kj[d];
            dkj[d] += ds * qi[d];
          }
        }
      }
    }
  });
}

void adam_step(double* w, const double* g, AdamState& state, int64_t n, double lr, double beta1,
               double beta2, double eps, int64_t step) {
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
  for (int64_t i = 0; i < n; ++i) {
    state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g[i];
    state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g[i] * g[i];
    double mhat = state.m[i] / bc1;
    double vhat = state.v[i] / bc2;
    w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
  }
}

}  // namespace sscc::nn
