#include "sscc/masc_train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "sscc/nn.hpp"
#include "sscc/util.hpp"

namespace sscc::masc {

namespace {

std::vector<corpus::Tokens> tokenize_and_filter(const std::vector<std::string>& sentences,
                                                int max_seq_len, int64_t* skipped, int64_t* max_len) {
  std::vector<corpus::Tokens> out;
  out.reserve(sentences.size());
  for (const auto& s : sentences) {
    corpus::Tokens t = corpus::tokenize(s);
    if (static_cast<int>(t.size()) + 1 > max_seq_len) {
      if (skipped) ++*skipped;
      continue;
    }
    if (max_len) *max_len = std::max<int64_t>(*max_len, static_cast<int64_t>(t.size()));
    out.push_back(std::move(t));
  }
  return out;
}

}  // namespace

double validation_ce(MascNet& net, const std::vector<std::string>& sentences, int batch_size,
                     int max_sentences, int threads) {
  std::vector<corpus::Tokens> toks =
      tokenize_and_filter(sentences, net.config().max_seq_len, nullptr, nullptr);
  if (toks.empty()) throw std::invalid_argument("validation_ce: no usable sentences");
  if (max_sentences > 0 && static_cast<int>(toks.size()) > max_sentences)
    toks.resize(max_sentences);
  double ce_sum = 0.0;
  int64_t n = 0;
  for (size_t i = 0; i < toks.size(); i += batch_size) {
    std::vector<corpus::Tokens> chunk(toks.begin() + i,
                                      toks.begin() + std::min(toks.size(), i + batch_size));
    Batch batch = make_batch(chunk, net.config().max_seq_len);
    LossReport rep = net.forward(batch, threads);
    ce_sum += rep.ce * static_cast<double>(rep.valid_positions);
    n += rep.valid_positions;
  }
  return ce_sum / static_cast<double>(n);
}

TrainResult train(MascNet& net, const std::vector<std::string>& train_sentences,
                  const std::vector<std::string>& val_sentences, const TrainConfig& tc) {
  TrainResult res;
  std::vector<corpus::Tokens> toks = tokenize_and_filter(train_sentences, net.config().max_seq_len,
                                                         &res.skipped_too_long, &res.max_train_len);
  if (toks.empty()) throw std::invalid_argument("train: empty training set");

  std::vector<nn::AdamState> adam(net.params.tensors.size());
  for (size_t i = 0; i < adam.size(); ++i) {
    adam[i].m.assign(net.params.tensors[i].w.size(), 0.0);
    adam[i].v.assign(net.params.tensors[i].w.size(), 0.0);
  }

  std::vector<size_t> order(toks.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  uint64_t epoch = 0;
  size_t cursor = order.size();  // trigger shuffle on first use
  Rng rng(tc.seed);

  std::vector<Tensor> best;
  double best_val = 1e300;
  int best_step = 0;
  int evals_since_best = 0;
  bool stopped = false;

  for (int step = 1; step <= tc.steps && !stopped; ++step) {
    std::vector<corpus::Tokens> chunk;
    chunk.reserve(tc.batch_size);
    for (int i = 0; i < tc.batch_size; ++i) {
      if (cursor >= order.size()) {
        Rng erng(splitmix64(tc.seed ^ (0xE90C'0000ull + epoch)));
        for (size_t j = order.size() - 1; j > 0; --j)
          std::swap(order[j], order[erng.below(j + 1)]);
        cursor = 0;
        ++epoch;
      }
      chunk.push_back(toks[order[cursor++]]);
    }
    Batch batch = make_batch(chunk, net.config().max_seq_len);
    net.params.zero_grads();
    LossReport rep = net.forward_backward(batch, tc.threads);
    if (!std::isfinite(rep.total))
      throw std::runtime_error("train: loss diverged (non-finite) at step " + std::to_string(step) +
                               ", ce=" + std::to_string(rep.ce) + ", aux=" + std::to_string(rep.aux));

    double gnorm = net.params.grad_norm();
    if (tc.clip > 0.0 && gnorm > tc.clip) net.params.scale_grads(tc.clip / gnorm);
    for (size_t i = 0; i < net.params.tensors.size(); ++i) {
      Tensor& t = net.params.tensors[i];
      nn::adam_step(t.w.data(), t.g.data(), adam[i], t.size(), tc.lr, 0.9, 0.999, 1e-8, step);
    }

    TrainLogRow row;
    row.step = step;
    row.ce = rep.ce;
    row.aux = rep.aux;
    row.load = rep.load;

    if (!val_sentences.empty() && (step % tc.eval_every == 0 || step == tc.steps)) {
      double vce = validation_ce(net, val_sentences, tc.batch_size, tc.max_eval_sentences, tc.threads);
      row.val_ce = vce;
      if (vce < best_val - 1e-4) {
        best_val = vce;
        best_step = step;
        best = net.params.tensors;  // snapshot weights
        evals_since_best = 0;
      } else {
        ++evals_since_best;
        if (evals_since_best >= tc.patience) stopped = true;
      }
    }
    res.log.push_back(row);
    res.steps_run = step;
  }

  if (!best.empty()) {
    net.params.tensors = std::move(best);
  } else if (!val_sentences.empty()) {
    best_val = validation_ce(net, val_sentences, tc.batch_size, tc.max_eval_sentences, tc.threads);
    best_step = res.steps_run;
  }
  res.best_val_ce = best_val;
  res.best_step = best_step;
  return res;
}

void write_train_log_csv(const std::vector<TrainLogRow>& log, const std::string& path) {
  std::ostringstream out;
  out << "step,L_CE,L_aux,Load_2,Load_3,Load_4,Load_5,val_L_CE\n";
  out.precision(10);
  for (const auto& r : log) {
    out << r.step << ',' << r.ce << ',' << r.aux;
    for (double l : r.load) out << ',' << l;
    out << ',';
    if (!std::isnan(r.val_ce)) out << r.val_ce;
    out << '\n';
  }
  write_text_file(path, out.str());
}

GradCheckReport grad_check(MascNet& net, const Batch& batch, double eps, int samples, uint64_t seed,
                           int threads) {
  GradCheckReport rep;
  net.params.zero_grads();
  net.forward_backward(batch, threads);
  rep.min_margin = net.min_routing_logit_margin(batch);

  std::vector<std::vector<double>> analytic;
  analytic.reserve(net.params.tensors.size());
  for (const auto& t : net.params.tensors) analytic.push_back(t.g);

  Rng rng(seed);
  std::vector<std::pair<size_t, int64_t>> picks;
  size_t nt = net.params.tensors.size();
  while (picks.size() < static_cast<size_t>(samples)) {
    for (size_t ti = 0; ti < nt && picks.size() < static_cast<size_t>(samples); ++ti) {
      int64_t idx = static_cast<int64_t>(rng.below(net.params.tensors[ti].w.size()));
      picks.push_back({ti, idx});
    }
  }

  for (auto [ti, idx] : picks) {
    Tensor& t = net.params.tensors[ti];
    const double orig = t.w[idx];
    t.w[idx] = orig + eps;
    double lp = net.forward(batch, threads).total;
    t.w[idx] = orig - eps;
    double lm = net.forward(batch, threads).total;
    t.w[idx] = orig;
    double fd = (lp - lm) / (2.0 * eps);
    double a = analytic[ti][idx];
    double rel = std::abs(a - fd) / std::max(std::abs(a), 1e-8);
    ++rep.checked;
    if (a == 0.0) {
      ++rep.dead_params;
      rep.max_dead_fd = std::max(rep.max_dead_fd, std::abs(fd));
    }
    if (rel > rep.max_rel_err) rep.max_rel_err = rel;
    GradCheckEntry e{t.name, idx, a, fd, rel};
    rep.worst.push_back(e);
    std::sort(rep.worst.begin(), rep.worst.end(),
              [](const GradCheckEntry& x, const GradCheckEntry& y) { return x.rel_err > y.rel_err; });
    if (rep.worst.size() > 5) rep.worst.resize(5);
  }
  // leave the analytic grads in place for callers
  for (size_t ti = 0; ti < nt; ++ti) net.params.tensors[ti].g = analytic[ti];
  return rep;
}

}  // namespace sscc::masc
