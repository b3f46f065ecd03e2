// Command-line front end: corpus preparation, model training, single trials
// and SNR sweeps over the source/channel coding pipeline.

#include <filesystem>
#include <iostream>
#include <memory>

#include "CLI11.hpp"
#include "sscc/corpus.hpp"
#include "sscc/entropy.hpp"
#include "sscc/harness.hpp"
#include "sscc/masc.hpp"
#include "sscc/masc_train.hpp"
#include "sscc/metrics.hpp"
#include "sscc/util.hpp"

using namespace sscc;

namespace {

struct ModelPaths {
  std::string corpus_dir;
  std::string huffman;
  std::string ngram;
  std::string masc;
};

void add_model_path_options(CLI::App* cmd, ModelPaths& paths) {
  cmd->add_option("--corpus-dir", paths.corpus_dir, "prepared corpus directory")->required();
  cmd->add_option("--huffman", paths.huffman, "huffman table file")->required();
  cmd->add_option("--ngram", paths.ngram, "n-gram model file");
  cmd->add_option("--masc", paths.masc, "MASC checkpoint file");
}

harness::Models load_models(const ModelPaths& paths, const std::vector<harness::Variant>& variants) {
  harness::Models models;
  models.huffman = entropy::huffman_load(paths.huffman);
  bool need_ngram = false, need_masc = false;
  for (auto v : variants) {
    need_ngram |= v == harness::Variant::kNgramAc;
    need_masc |= v == harness::Variant::kMascAc || v == harness::Variant::kMascAcAblated;
  }
  if (need_ngram) {
    if (paths.ngram.empty()) throw std::runtime_error("--ngram required for the ngram-ac variant");
    models.ngram = std::make_shared<model::NgramModel>(model::NgramModel::load(paths.ngram));
  }
  int64_t max_len = 0;
  if (need_masc) {
    if (paths.masc.empty()) throw std::runtime_error("--masc required for the masc variants");
    auto ck = masc::load_checkpoint(paths.masc);
    auto params = std::make_shared<masc::MascParams>(std::move(ck.params));
    models.masc_params = params;
    models.masc_cfg = ck.cfg;
    max_len = ck.meta.max_train_len;
  }
  if (max_len == 0) {
    auto split = corpus::load_split(paths.corpus_dir);
    for (const auto& s : split.train)
      max_len = std::max<int64_t>(max_len, static_cast<int64_t>(s.size()) + 1);
  }
  models.max_train_len = max_len;
  return models;
}

std::vector<harness::Variant> parse_variants(const std::string& csv) {
  std::vector<harness::Variant> out;
  size_t start = 0;
  while (start <= csv.size()) {
    size_t comma = csv.find(',', start);
    std::string item = csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(harness::variant_from_string(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw std::runtime_error("no variants given");
  return out;
}

std::vector<double> parse_grid(const std::string& csv) {
  std::vector<double> out;
  size_t start = 0;
  while (start <= csv.size()) {
    size_t comma = csv.find(',', start);
    std::string item = csv.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(std::stod(item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

int cmd_prepare_corpus(const std::string& input, const std::string& out_dir, uint64_t seed) {
  std::string raw = read_text_file(input);
  corpus::CorpusSplit split = corpus::prepare_corpus(raw, seed);
  corpus::save_split(split, out_dir);
  std::cout << "train=" << split.train.size() << " val=" << split.val.size()
            << " test=" << split.test.size() << " -> " << out_dir << "\n";
  return 0;
}

int cmd_build_huffman(const std::string& corpus_dir, const std::string& out) {
  auto split = corpus::load_split(corpus_dir);
  std::vector<uint64_t> freqs(corpus::kVocabSize, 0);
  for (const auto& s : split.train) {
    for (unsigned char ch : s) ++freqs[ch];
    ++freqs[corpus::kEos];
  }
  auto table = entropy::huffman_build(freqs);
  entropy::huffman_save(table, freqs, out);
  std::cout << "huffman table over " << corpus::kVocabSize << " symbols -> " << out << "\n";
  return 0;
}

int cmd_train_ngram(const std::string& corpus_dir, int order, double alpha, const std::string& out) {
  auto split = corpus::load_split(corpus_dir);
  model::NgramModel model(order, alpha);
  model.fit(split.train);
  model.save(out);
  double bpb = model.bits_per_byte(split.val);
  std::cout << "order-" << order << " model, val bits/byte=" << bpb << " -> " << out << "\n";
  return 0;
}

struct TrainMascArgs {
  std::string corpus_dir, out, log_csv;
  masc::MascConfig cfg;
  masc::TrainConfig tc;
  uint64_t init_seed = 1;
  bool ablated = false;
};

int cmd_train_masc(const TrainMascArgs& args) {
  auto split = corpus::load_split(args.corpus_dir);
  masc::MascConfig cfg = args.cfg;
  cfg.memory_enabled = !args.ablated;
  masc::MascNet net(cfg, args.init_seed);
  std::cout << "training MASC: " << net.params.total_params() << " params, "
            << split.train.size() << " train sentences\n";
  masc::TrainResult res = masc::train(net, split.train, split.val, args.tc);
  std::cout << "best val ce=" << res.best_val_ce << " nats at step " << res.best_step
            << " (ran " << res.steps_run << ")\n";
  masc::CheckpointMeta meta;
  meta.max_train_len = res.max_train_len;
  meta.steps = res.steps_run;
  meta.val_ce = res.best_val_ce;
  masc::save_checkpoint(net.params, cfg, meta, args.out);
  if (!args.log_csv.empty()) masc::write_train_log_csv(res.log, args.log_csv);
  std::cout << "checkpoint -> " << args.out << "\n";
  return 0;
}

int cmd_run_trial(const ModelPaths& paths, const std::string& variant, const std::string& chan,
                  const std::string& mode, double snr_db, uint64_t seed, int64_t index,
                  const std::string& sentence) {
  harness::TrialConfig tc;
  tc.variant = harness::variant_from_string(variant);
  tc.channel_kind = channel::channel_kind_from_string(chan);
  tc.energy_mode = channel::energy_mode_from_string(mode);
  tc.snr_db = snr_db;
  tc.seed = seed;
  harness::Models models = load_models(paths, {tc.variant});
  fec::LdpcCode code = fec::load_code("data/ldpc_49_24.txt");

  std::string text = sentence;
  if (text.empty()) {
    auto split = corpus::load_split(paths.corpus_dir);
    if (split.test.empty()) throw std::runtime_error("empty test split");
    text = split.test[static_cast<size_t>(index) % split.test.size()];
  }
  harness::TrialResult r = harness::run_trial(index, text, tc, models, code);
  std::cout << "source:        " << r.source << "\n"
            << "reconstructed: " << r.reconstructed << "\n"
            << "payload_bits=" << r.payload_bits << " coded_bits=" << r.coded_bits
            << " pre_errs=" << r.pre_decode_bit_errors << " post_errs=" << r.post_decode_bit_errors
            << "\nbleu1=" << r.bleu1 << " bleu4=" << r.bleu4 << " lossless=" << r.lossless
            << " header_error=" << r.header_error << " guard_hit=" << r.guard_hit << "\n";
  return 0;
}

int cmd_grad_check(uint64_t seed, double eps, int samples) {
  masc::MascConfig cfg;
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
  masc::MascNet net(cfg, seed);
  masc::Batch batch = masc::make_batch(
      {corpus::tokenize("routing check"), corpus::tokenize("more text!")}, cfg.max_seq_len);
  auto rep = masc::grad_check(net, batch, eps, samples, seed ^ 0xABCD, 2);
  std::cout << "checked=" << rep.checked << " max_rel_err=" << rep.max_rel_err
            << " routing_margin=" << rep.min_margin << " dead_params=" << rep.dead_params
            << " max_dead_fd=" << rep.max_dead_fd << "\n";
  for (const auto& w : rep.worst)
    std::cout << "  " << w.tensor << "[" << w.index << "] analytic=" << w.analytic << " fd=" << w.fd
              << " rel=" << w.rel_err << "\n";
  return rep.max_rel_err < 1e-4 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"separate source/channel coding experiments with a memory-augmented source model"};
  app.require_subcommand(1);
  app.set_config("--config", "", "INI config file; flags override its keys");
  app.allow_config_extras(CLI::config_extras_mode::ignore_all);

  // prepare-corpus
  auto* prep = app.add_subcommand("prepare-corpus", "clean, dedupe, shuffle and split a text file");
  std::string prep_input, prep_out;
  uint64_t prep_seed = 1;
  prep->add_option("--input", prep_input)->required();
  prep->add_option("--out-dir", prep_out)->required();
  prep->add_option("--seed", prep_seed);

  // build-huffman
  auto* bh = app.add_subcommand("build-huffman", "unigram huffman table from the training split");
  std::string bh_corpus, bh_out;
  bh->add_option("--corpus-dir", bh_corpus)->required();
  bh->add_option("--out", bh_out)->required();

  // train-ngram
  auto* tn = app.add_subcommand("train-ngram", "count-based n-gram source model");
  std::string tn_corpus, tn_out;
  int tn_order = 3;
  double tn_alpha = 0.1;
  tn->add_option("--corpus-dir", tn_corpus)->required();
  tn->add_option("--out", tn_out)->required();
  tn->add_option("--order", tn_order);
  tn->add_option("--alpha", tn_alpha);

  // train-masc
  auto* tm = app.add_subcommand("train-masc", "train the memory-augmented source model");
  TrainMascArgs tma;
  tm->add_option("--corpus-dir", tma.corpus_dir)->required();
  tm->add_option("--out", tma.out)->required();
  tm->add_option("--log-csv", tma.log_csv);
  tm->add_option("--d-model", tma.cfg.d_model);
  tm->add_option("--n-layers", tma.cfg.n_layers);
  tm->add_option("--n-heads", tma.cfg.n_heads);
  tm->add_option("--max-seq-len", tma.cfg.max_seq_len);
  tm->add_option("--memory-layer", tma.cfg.memory_layer);
  tm->add_option("--hash-heads", tma.cfg.hash_heads);
  tm->add_option("--table-log2", tma.cfg.table_log2);
  tm->add_option("--slot-dim", tma.cfg.slot_dim);
  tm->add_option("--top-k", tma.cfg.top_k);
  tm->add_option("--lambda-aux", tma.cfg.lambda_aux);
  tm->add_option("--conv-kernel", tma.cfg.conv_kernel);
  tm->add_option("--steps", tma.tc.steps);
  tm->add_option("--batch-size", tma.tc.batch_size);
  tm->add_option("--lr", tma.tc.lr);
  tm->add_option("--clip", tma.tc.clip);
  tm->add_option("--eval-every", tma.tc.eval_every);
  tm->add_option("--patience", tma.tc.patience);
  tm->add_option("--train-seed", tma.tc.seed);
  tm->add_option("--init-seed", tma.init_seed);
  tm->add_option("--threads", tma.tc.threads);
  tm->add_flag("--ablated", tma.ablated, "train with the memory branch disabled");

  // run-trial
  auto* rt = app.add_subcommand("run-trial", "one end-to-end transmission");
  ModelPaths rt_paths;
  std::string rt_variant = "masc-ac", rt_chan = "awgn", rt_mode = "fixed-total", rt_sentence;
  double rt_snr = 4.0;
  uint64_t rt_seed = 1;
  int64_t rt_index = 0;
  add_model_path_options(rt, rt_paths);
  rt->add_option("--variant", rt_variant);
  rt->add_option("--channel", rt_chan);
  rt->add_option("--energy-mode", rt_mode);
  rt->add_option("--snr-db", rt_snr);
  rt->add_option("--seed", rt_seed);
  rt->add_option("--index", rt_index, "test-split sentence index");
  rt->add_option("--sentence", rt_sentence, "explicit sentence (overrides --index)");

  // sweep
  auto* sw = app.add_subcommand("sweep", "SNR sweep across pipeline variants");
  ModelPaths sw_paths;
  std::string sw_variants = "huffman,ngram-ac,masc-ac,masc-ac-ablated";
  std::string sw_chan = "awgn", sw_mode = "fixed-total", sw_grid = "0,1,2,3,4,5,6,7,8,9";
  std::string sw_out = "results/sweep";
  int sw_trials = 500, sw_workers = 2;
  uint64_t sw_seed = 1;
  add_model_path_options(sw, sw_paths);
  sw->add_option("--variants", sw_variants);
  sw->add_option("--channel", sw_chan);
  sw->add_option("--energy-mode", sw_mode);
  sw->add_option("--snr-grid", sw_grid);
  sw->add_option("--trials", sw_trials);
  sw->add_option("--seed", sw_seed);
  sw->add_option("--workers", sw_workers);
  sw->add_option("--out-dir", sw_out);

  // grad-check
  auto* gc = app.add_subcommand("grad-check", "finite-difference check of the training gradients");
  uint64_t gc_seed = 4;
  double gc_eps = 1e-4;
  int gc_samples = 220;
  gc->add_option("--seed", gc_seed);
  gc->add_option("--eps", gc_eps);
  gc->add_option("--samples", gc_samples);

  CLI11_PARSE(app, argc, argv);

  try {
    if (prep->parsed()) return cmd_prepare_corpus(prep_input, prep_out, prep_seed);
    if (bh->parsed()) return cmd_build_huffman(bh_corpus, bh_out);
    if (tn->parsed()) return cmd_train_ngram(tn_corpus, tn_order, tn_alpha, tn_out);
    if (tm->parsed()) return cmd_train_masc(tma);
    if (rt->parsed())
      return cmd_run_trial(rt_paths, rt_variant, rt_chan, rt_mode, rt_snr, rt_seed, rt_index,
                           rt_sentence);
    if (sw->parsed()) {
      harness::SweepConfig cfg;
      cfg.variants = parse_variants(sw_variants);
      cfg.channel_kind = channel::channel_kind_from_string(sw_chan);
      cfg.energy_mode = channel::energy_mode_from_string(sw_mode);
      cfg.snr_grid = parse_grid(sw_grid);
      cfg.trials = sw_trials;
      cfg.seed = sw_seed;
      cfg.workers = sw_workers;
      cfg.out_dir = sw_out;
      harness::Models models = load_models(sw_paths, cfg.variants);
      fec::LdpcCode code = fec::load_code("data/ldpc_49_24.txt");
      auto split = corpus::load_split(sw_paths.corpus_dir);
      auto out = harness::run_sweep(cfg, split.test, models, code);
      std::cout << "sweep complete: " << out.rows.size() << " (variant, snr) points -> "
                << cfg.out_dir << "\n";
      return 0;
    }
    if (gc->parsed()) return cmd_grad_check(gc_seed, gc_eps, gc_samples);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
