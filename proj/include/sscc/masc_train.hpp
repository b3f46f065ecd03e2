#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sscc/masc.hpp"

namespace sscc::masc {

struct TrainConfig {
  int steps = 2000;
  int batch_size = 32;
  double lr = 3e-4;
  double clip = 1.0;
  int eval_every = 100;
  int patience = 8;  // evals without val improvement before stopping
  uint64_t seed = 1;
  int threads = 1;
  int max_eval_sentences = 512;
};

struct TrainLogRow {
  int step = 0;
  double ce = 0.0;
  double aux = 0.0;
  std::array<double, kNumExperts> load{};
  double val_ce = std::nan("");  // populated on eval steps
};

struct TrainResult {
  double best_val_ce = 0.0;
  int best_step = 0;
  int steps_run = 0;
  int64_t max_train_len = 0;  // longest kept training sequence, tokens incl. EOS
  int64_t skipped_too_long = 0;
  std::vector<TrainLogRow> log;
};

// Adam on the full loss with global grad-norm clipping, deterministic in
// (net init, tc.seed). Early-stops on validation cross-entropy and restores
// the best parameters.
TrainResult train(MascNet& net, const std::vector<std::string>& train_sentences,
                  const std::vector<std::string>& val_sentences, const TrainConfig& tc);

double validation_ce(MascNet& net, const std::vector<std::string>& sentences, int batch_size,
                     int max_sentences, int threads);

void write_train_log_csv(const std::vector<TrainLogRow>& log, const std::string& path);

struct GradCheckEntry {
  std::string tensor;
  int64_t index = 0;
  double analytic = 0.0;
  double fd = 0.0;
  double rel_err = 0.0;
};

struct GradCheckReport {
  double max_rel_err = 0.0;
  int checked = 0;
  double min_margin = 0.0;  // smallest routing-logit gap at the top-k boundary
  int dead_params = 0;      // sampled params with zero analytic gradient
  double max_dead_fd = 0.0; // largest |central difference| among those
  std::vector<GradCheckEntry> worst;
};

// Central-difference check of d(total loss)/d(theta) over >= samples scalar
// parameters drawn across every tensor. rel err = |analytic - fd| /
// max(|analytic|, 1e-8).
GradCheckReport grad_check(MascNet& net, const Batch& batch, double eps, int samples, uint64_t seed,
                           int threads);

}  // namespace sscc::masc
