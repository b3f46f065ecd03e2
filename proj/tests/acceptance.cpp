// Acceptance suite: runs every system-level criterion end to end against the
// committed configs, golden files and the bundled sample corpus. Prints one
// PASS/FAIL line per criterion and exits nonzero on any failure.
//
// Heavy artifacts (trained checkpoints) are cached under the build tree and
// reused when the configuration and corpus are unchanged.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "sscc/channel.hpp"
#include "sscc/corpus.hpp"
#include "sscc/entropy.hpp"
#include "sscc/fec.hpp"
#include "sscc/harness.hpp"
#include "sscc/masc.hpp"
#include "sscc/masc_train.hpp"
#include "sscc/metrics.hpp"
#include "sscc/util.hpp"
#include "test_support.hpp"

using namespace sscc;
using Clock = std::chrono::steady_clock;

namespace {

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Gate {
  int failed = 0;
  void report(int id, const std::string& name, bool ok, const std::string& detail) {
    std::printf("[%s] criterion %2d: %s (%s)\n", ok ? "PASS" : "FAIL", id, name.c_str(),
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failed;
  }
};

std::map<std::string, std::string> read_ini(const std::string& path) {
  std::map<std::string, std::string> kv;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("missing config: " + path);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    size_t eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      size_t b = s.find_first_not_of(" \t");
      size_t e = s.find_last_not_of(" \t");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

std::vector<std::string> split_csv(const std::string& s) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    size_t comma = s.find(',', start);
    std::string item = s.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
    if (!item.empty()) out.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

// Runs fn(i) for i in [0, n) on two workers; results land by index.
template <typename Fn>
void parallel_trials(int64_t n, int workers, Fn fn) {
  std::atomic<int64_t> next{0};
  auto worker = [&]() {
    for (;;) {
      int64_t i = next.fetch_add(1);
      if (i >= n) return;
      fn(i);
    }
  };
  std::vector<std::thread> pool;
  for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
}

struct TrainSpec {
  masc::MascConfig cfg;
  masc::TrainConfig tc;
  uint64_t init_seed = 1;
};

TrainSpec read_train_spec(const std::string& path) {
  auto kv = read_ini(path);
  TrainSpec s;
  s.cfg.d_model = std::stoi(kv.at("d-model"));
  s.cfg.n_layers = std::stoi(kv.at("n-layers"));
  s.cfg.n_heads = std::stoi(kv.at("n-heads"));
  s.cfg.max_seq_len = std::stoi(kv.at("max-seq-len"));
  s.cfg.memory_layer = std::stoi(kv.at("memory-layer"));
  s.cfg.hash_heads = std::stoi(kv.at("hash-heads"));
  s.cfg.table_log2 = std::stoi(kv.at("table-log2"));
  s.cfg.slot_dim = std::stoi(kv.at("slot-dim"));
  s.cfg.top_k = std::stoi(kv.at("top-k"));
  s.cfg.lambda_aux = std::stod(kv.at("lambda-aux"));
  s.cfg.conv_kernel = std::stoi(kv.at("conv-kernel"));
  s.tc.steps = std::stoi(kv.at("steps"));
  s.tc.batch_size = std::stoi(kv.at("batch-size"));
  s.tc.lr = std::stod(kv.at("lr"));
  s.tc.clip = std::stod(kv.at("clip"));
  s.tc.eval_every = std::stoi(kv.at("eval-every"));
  s.tc.patience = std::stoi(kv.at("patience"));
  s.tc.seed = std::stoull(kv.at("train-seed"));
  s.tc.threads = std::stoi(kv.at("threads"));
  s.init_seed = std::stoull(kv.at("init-seed"));
  return s;
}

harness::SweepConfig read_sweep_shape(const std::string& path) {
  auto kv = read_ini(path);
  harness::SweepConfig cfg;
  for (const auto& v : split_csv(kv.at("variants"))) cfg.variants.push_back(harness::variant_from_string(v));
  cfg.channel_kind = channel::channel_kind_from_string(kv.at("channel"));
  cfg.energy_mode = channel::energy_mode_from_string(kv.at("energy-mode"));
  for (const auto& s : split_csv(kv.at("snr-grid"))) cfg.snr_grid.push_back(std::stod(s));
  cfg.trials = std::stoi(kv.at("trials"));
  cfg.seed = std::stoull(kv.at("seed"));
  cfg.workers = std::stoi(kv.at("workers"));
  return cfg;
}

double load_entropy(const std::array<double, 4>& load) {
  double h = 0;
  for (double l : load)
    if (l > 0) h -= l * std::log(l);
  return h;
}

}  // namespace

int main() {
  Gate gate;
  const std::string work = std::string(SSCC_BINARY_DIR) + "/acceptance_work";
  std::filesystem::create_directories(work);

  // ---- shared setup ----
  fec::LdpcCode code = fec::load_code("data/ldpc_49_24.txt");
  std::string raw_corpus = read_text_file("data/sample_corpus.txt");
  corpus::CorpusSplit split = corpus::prepare_corpus(raw_corpus, 1);
  corpus::save_split(split, work + "/corpus");

  std::vector<uint64_t> huff_freqs(corpus::kVocabSize, 0);
  for (const auto& s : split.train) {
    for (unsigned char ch : s) ++huff_freqs[ch];
    ++huff_freqs[corpus::kEos];
  }
  entropy::HuffmanTable huffman = entropy::huffman_build(huff_freqs);
  auto ngram = std::make_shared<model::NgramModel>(3, 0.1);
  ngram->fit(split.train);

  TrainSpec spec = read_train_spec("configs/train_masc.ini");
  const uint64_t cache_key =
      fnv1a64(raw_corpus) ^ fnv1a64(spec.cfg.to_json()) ^
      fnv1a64(std::to_string(spec.tc.steps) + "/" + std::to_string(spec.tc.seed) + "/" +
              std::to_string(spec.init_seed) + "/" + std::to_string(spec.tc.lr));
  const std::string marker_path = work + "/cache_key.txt";
  bool cache_ok = false;
  {
    std::ifstream m(marker_path);
    uint64_t stored = 0;
    if (m >> stored) cache_ok = stored == cache_key;
  }
  auto ckpt_path = [&](const std::string& name) { return work + "/" + name + ".ckpt"; };
  for (const char* n : {"masc", "ablated", "aux000", "aux001"})
    cache_ok = cache_ok && std::filesystem::exists(ckpt_path(n));

  double train_seconds = 0.0;
  bool trained_now = false;
  auto train_variant = [&](const std::string& name, bool memory, double lambda, int steps) {
    masc::MascConfig cfg = spec.cfg;
    cfg.memory_enabled = memory;
    cfg.lambda_aux = lambda;
    masc::TrainConfig tc = spec.tc;
    tc.steps = steps;
    masc::MascNet net(cfg, spec.init_seed);
    auto t0 = Clock::now();
    masc::TrainResult res = masc::train(net, split.train, split.val, tc);
    train_seconds += seconds_since(t0);
    masc::CheckpointMeta meta;
    meta.max_train_len = res.max_train_len;
    meta.steps = res.steps_run;
    meta.val_ce = res.best_val_ce;
    masc::save_checkpoint(net.params, cfg, meta, ckpt_path(name));
    if (name == "masc") masc::write_train_log_csv(res.log, work + "/masc_train_log.csv");
    std::printf("  trained %-7s steps=%d best_val_ce=%.4f\n", name.c_str(), res.steps_run,
                res.best_val_ce);
    std::fflush(stdout);
  };
  if (!cache_ok) {
    std::printf("training models (no valid cache)...\n");
    trained_now = true;
    train_variant("masc", true, spec.cfg.lambda_aux, spec.tc.steps);
    train_variant("ablated", false, 0.0, spec.tc.steps);
    train_variant("aux001", true, 0.01, spec.tc.steps / 2);
    train_variant("aux000", true, 0.0, spec.tc.steps / 2);
    std::ofstream(marker_path) << cache_key << "\n";
  } else {
    std::printf("reusing cached checkpoints under %s\n", work.c_str());
  }

  masc::Checkpoint masc_ck = masc::load_checkpoint(ckpt_path("masc"));
  masc::Checkpoint ablated_ck = masc::load_checkpoint(ckpt_path("ablated"));
  masc::Checkpoint aux000_ck = masc::load_checkpoint(ckpt_path("aux000"));
  masc::Checkpoint aux001_ck = masc::load_checkpoint(ckpt_path("aux001"));

  harness::Models models;
  models.huffman = huffman;
  models.ngram = ngram;
  models.masc_params = std::make_shared<masc::MascParams>(masc_ck.params);
  models.masc_cfg = masc_ck.cfg;
  models.max_train_len = masc_ck.meta.max_train_len;

  const std::vector<harness::Variant> all_variants = {
      harness::Variant::kHuffman, harness::Variant::kNgramAc, harness::Variant::kMascAc,
      harness::Variant::kMascAcAblated};

  // ---- criterion 1: lossless pipeline at high SNR ----
  {
    auto t0 = Clock::now();
    const size_t n_sentences = std::min<size_t>(1000, split.test.size());
    std::atomic<int64_t> losses{0}, nonperfect_bleu{0};
    for (harness::Variant v : all_variants) {
      std::vector<harness::TrialResult> results(n_sentences);
      harness::TrialConfig tc;
      tc.variant = v;
      tc.channel_kind = channel::ChannelKind::kAwgn;
      tc.energy_mode = channel::EnergyMode::kFixedTotal;
      tc.snr_db = 100.0;
      parallel_trials(n_sentences, 2, [&](int64_t i) {
        harness::TrialConfig tci = tc;
        tci.seed = splitmix64(0xC1 ^ (uint64_t(i) << 8));
        results[i] = harness::run_trial(i, split.test[i], tci, models, code);
      });
      for (const auto& r : results) {
        if (!r.lossless) ++losses;
        if (r.bleu1 != 1.0 || r.bleu4 != 1.0) ++nonperfect_bleu;
      }
    }
    double secs = seconds_since(t0);
    std::ostringstream d;
    d << n_sentences << " sentences x " << all_variants.size() << " variants, " << losses.load()
      << " non-lossless, " << nonperfect_bleu.load() << " BLEU<1, " << std::fixed
      << std::setprecision(1) << secs << "s";
    gate.report(1, "lossless pipeline at high SNR", losses == 0 && nonperfect_bleu == 0 && secs < 300.0,
                d.str());
  }

  // ---- criterion 2: arithmetic-coder optimality and golden vectors ----
  {
    Rng rng(0xAC);
    bool bounds_ok = true;
    double worst_gap = -1e9;
    for (int trial = 0; trial < 200; ++trial) {
      int v = 2 + static_cast<int>(rng.below(39));
      int len = 1 + static_cast<int>(rng.below(64));
      std::vector<double> probs(v);
      double sum = 0;
      for (auto& p : probs) {
        p = rng.uniform01();
        sum += p;
      }
      for (auto& p : probs) p /= sum;
      model::IidModel m(probs);
      entropy::AcConfig cfg;
      entropy::Pmf pmf = entropy::quantize_pmf(probs, cfg);
      corpus::Tokens toks;
      std::vector<uint64_t> fs;
      std::vector<int> tb;
      for (int i = 0; i < len; ++i) {
        int s = static_cast<int>(rng.below(v));
        toks.push_back(s);
        fs.push_back(pmf.freq(s));
        tb.push_back(entropy::kPmfTotalBits);
      }
      Bitstream bits = entropy::ac_encode(toks, m, cfg);
      auto bounds = testsup::ideal_codelen_bounds(fs, tb);
      double gap = static_cast<double>(bits.size()) - bounds.lower;
      worst_gap = std::max(worst_gap, gap);
      bounds_ok = bounds_ok && gap <= 34.0;
    }

    bool golden_ok = true;
    int golden_count = 0;
    {
      auto j = nlohmann::json::parse(read_text_file("data/ac_golden.json"));
      for (const auto& vec : j) {
        entropy::AcConfig cfg;
        cfg.precision = vec.at("precision");
        std::vector<uint64_t> freqs = vec.at("freqs").get<std::vector<uint64_t>>();
        std::vector<int> symbols = vec.at("symbols").get<std::vector<int>>();
        std::string bits_str = vec.at("bits");
        entropy::Pmf pmf = entropy::pmf_from_freqs(freqs);
        Bitstream enc_bits;
        entropy::ArithmeticEncoder enc(enc_bits, cfg);
        for (int s : symbols) enc.encode(pmf, s);
        enc.finish();
        std::vector<entropy::Pmf> pmfs(symbols.size(), pmf);
        testsup::RefArithmeticCoder ref(cfg.precision);
        golden_ok = golden_ok && enc_bits.to_string() == bits_str &&
                    ref.encode(symbols, pmfs).to_string() == bits_str;
        Bitstream stream = Bitstream::from_string(bits_str);
        entropy::ArithmeticDecoder dec(stream, cfg);
        for (int s : symbols) golden_ok = golden_ok && dec.decode(pmf) == s;
        ++golden_count;
      }
    }
    std::ostringstream d;
    d << "worst codelength excess " << std::fixed << std::setprecision(1) << worst_gap
      << " bits (cap 34), " << golden_count << " golden vectors bit-exact";
    gate.report(2, "arithmetic-coder optimality", bounds_ok && golden_ok && golden_count == 20, d.str());
  }

  // ---- criterion 3: compression ordering on the held-out split ----
  double masc_bpb = 0, ngram_bpb = 0, huff_bpb = 0;
  {
    const size_t n = std::min<size_t>(1000, split.test.size());
    std::vector<std::array<double, 3>> bits_per(n);  // masc, ngram, huffman payload bits
    parallel_trials(n, 2, [&](int64_t i) {
      corpus::Tokens toks = corpus::tokenize(split.test[i]);
      entropy::AcConfig cfg;
      masc::MascModel mm(models.masc_params, models.masc_cfg);
      bits_per[i][0] = static_cast<double>(entropy::ac_encode(toks, mm, cfg).size());
      bits_per[i][1] = static_cast<double>(entropy::ac_encode(toks, *ngram, cfg).size());
      bits_per[i][2] = static_cast<double>(entropy::huffman_encode(toks, huffman).size());
    });
    double bytes = 0, mb = 0, nb = 0, hb = 0;
    int shorter = 0;
    for (size_t i = 0; i < n; ++i) {
      bytes += static_cast<double>(split.test[i].size());
      mb += bits_per[i][0];
      nb += bits_per[i][1];
      hb += bits_per[i][2];
      shorter += bits_per[i][0] <= bits_per[i][1];
    }
    masc_bpb = mb / bytes;
    ngram_bpb = nb / bytes;
    huff_bpb = hb / bytes;
    double shorter_frac = static_cast<double>(shorter) / n;
    bool ok = masc_bpb <= 0.98 * ngram_bpb && ngram_bpb <= 0.98 * huff_bpb && shorter_frac >= 0.6 &&
              (!trained_now || train_seconds < 3600.0);
    std::ostringstream d;
    d << std::fixed << std::setprecision(3) << "bits/byte masc=" << masc_bpb
      << " ngram3=" << ngram_bpb << " huffman=" << huff_bpb << ", masc shorter on "
      << std::setprecision(1) << 100.0 * shorter_frac << "% of sentences";
    if (trained_now) d << ", training " << std::setprecision(1) << train_seconds << "s";
    gate.report(3, "compression ordering after toy-scale training", ok, d.str());
  }

  // ---- criterion 4: memory contribution at equal step budget ----
  {
    masc::MascNet mnet(masc_ck.cfg, 0);
    mnet.params = masc_ck.params;
    masc::MascNet anet(ablated_ck.cfg, 0);
    anet.params = ablated_ck.params;
    double m_ce = masc::validation_ce(mnet, split.val, spec.tc.batch_size, 0, 2);
    double a_ce = masc::validation_ce(anet, split.val, spec.tc.batch_size, 0, 2);
    std::ostringstream d;
    d << std::fixed << std::setprecision(4) << "masc val CE " << m_ce << " vs ablated " << a_ce
      << " nats/token (need gap >= 0.01)";
    gate.report(4, "memory contribution", m_ce <= a_ce - 0.01, d.str());
  }

  // ---- criteria 5 and 10: default sweep, cliff shape, determinism ----
  {
    harness::SweepConfig sweep_cfg = read_sweep_shape("configs/sweep_awgn.ini");
    sweep_cfg.out_dir = work + "/sweep_run1";
    auto t0 = Clock::now();
    harness::SweepOutput run1 = harness::run_sweep(sweep_cfg, split.test, models, code);
    double sweep_secs = seconds_since(t0);

    auto curve = [&](harness::Variant v) {
      std::vector<std::pair<double, double>> pts;  // snr, bleu1
      for (const auto& row : run1.rows)
        if (row.variant == v) pts.push_back({row.snr_db, row.bleu1.mean});
      return pts;
    };
    auto has_window = [&](const std::vector<std::pair<double, double>>& pts) {
      for (size_t a = 0; a < pts.size(); ++a)
        for (size_t b = a + 1; b < pts.size(); ++b)
          if (pts[b].first - pts[a].first <= 4.0 + 1e-9 && pts[a].second <= 0.2 &&
              pts[b].second >= 0.9)
            return true;
      return false;
    };
    auto crossing = [&](const std::vector<std::pair<double, double>>& pts) {
      for (size_t i = 0; i < pts.size(); ++i) {
        if (pts[i].second >= 0.5) {
          if (i == 0) return pts[0].first;
          double x0 = pts[i - 1].first, y0 = pts[i - 1].second;
          double x1 = pts[i].first, y1 = pts[i].second;
          return x0 + (0.5 - y0) / (y1 - y0) * (x1 - x0);
        }
      }
      return 1e9;
    };
    auto masc_pts = curve(harness::Variant::kMascAc);
    auto ablated_pts = curve(harness::Variant::kMascAcAblated);
    auto ngram_pts = curve(harness::Variant::kNgramAc);
    bool windows = has_window(masc_pts) && has_window(ablated_pts) && has_window(ngram_pts);
    double cm = crossing(masc_pts), cn = crossing(ngram_pts);
    bool order = cm <= cn;
    std::ostringstream d;
    d << std::fixed << std::setprecision(2) << "cliff windows for all AC variants: "
      << (windows ? "yes" : "NO") << "; 0.5-crossing masc " << cm << " dB vs ngram " << cn
      << " dB; " << sweep_cfg.trials << " trials/point, " << std::setprecision(0) << sweep_secs
      << "s";
    gate.report(5, "cliff effect and crossing order", windows && order, d.str());

    sweep_cfg.out_dir = work + "/sweep_run2";
    harness::SweepOutput run2 = harness::run_sweep(sweep_cfg, split.test, models, code);
    bool identical = read_text_file(run1.summary_csv) == read_text_file(run2.summary_csv) &&
                     read_text_file(run1.trials_csv) == read_text_file(run2.trials_csv);
    gate.report(10, "sweep determinism",
                identical, identical ? "summary.csv and trials.csv byte-identical across two runs"
                                     : "outputs differ between runs");
  }

  // ---- criterion 6: routing correctness ----
  {
    masc::MascConfig cfg;
    cfg.d_model = 32;
    cfg.n_layers = 2;
    cfg.n_heads = 4;
    cfg.max_seq_len = 32;
    cfg.memory_layer = 1;
    cfg.hash_heads = 2;
    cfg.table_log2 = 8;
    cfg.slot_dim = 16;
    cfg.top_k = 2;
    masc::MascParams params;
    params.init(cfg, 0xA02);
    Rng rng(0x60);
    bool ok = true;
    for (int trial = 0; trial < 10000 && ok; ++trial) {
      std::vector<double> h(cfg.d_model);
      for (auto& x : h) x = 2.5 * rng.gaussian();
      masc::RoutingDecision rd = masc::mmer_route(h, params, cfg);
      double ps = 0, as = 0, min_sel = 2, max_unsel = -1;
      std::array<bool, 4> sel{};
      for (int o : rd.selected_orders) sel[o - 2] = true;
      for (int n = 0; n < 4; ++n) {
        ps += rd.pi[n];
        as += rd.alpha[n];
        if (sel[n])
          min_sel = std::min(min_sel, rd.pi[n]);
        else
          max_unsel = std::max(max_unsel, rd.pi[n]);
      }
      ok = ok && std::abs(ps - 1.0) <= 1e-6 && std::abs(as - 1.0) <= 1e-6 &&
           rd.selected_orders.size() == 2 && min_sel >= max_unsel;
    }
    // exact ties break toward the lower order, deterministically
    {
      auto& wr = params.at("mem.router");
      std::fill(wr.w.begin(), wr.w.end(), 0.0);
      std::vector<double> h(cfg.d_model, 0.7);
      auto rd1 = masc::mmer_route(h, params, cfg);
      auto rd2 = masc::mmer_route(h, params, cfg);
      ok = ok && rd1.selected_orders == std::vector<int>{2, 3} &&
           rd2.selected_orders == rd1.selected_orders && rd1.alpha[0] == 0.5 && rd1.alpha[1] == 0.5;
    }
    gate.report(6, "routing correctness", ok, "10^4 random states + exact-tie fixture");
  }

  // ---- criterion 7: load balancing ----
  {
    // fixtures with forced values
    bool fixtures_ok = true;
    {
      masc::MascConfig cfg;
      cfg.d_model = 4;
      cfg.n_heads = 1;
      cfg.n_layers = 2;
      cfg.memory_layer = 1;
      cfg.max_seq_len = 32;
      cfg.hash_heads = 2;
      cfg.table_log2 = 5;
      cfg.slot_dim = 2;
      cfg.top_k = 2;
      masc::MascNet net(cfg, 7);
      auto zero = [&](const std::string& n) {
        auto& t = net.params.at(n);
        std::fill(t.w.begin(), t.w.end(), 0.0);
      };
      zero("mem.router");
      masc::Batch batch = masc::make_batch({corpus::tokenize("balanced!")}, cfg.max_seq_len);
      fixtures_ok = fixtures_ok && net.forward(batch, 1).aux == 1.0;

      masc::MascConfig c1 = cfg;
      c1.top_k = 1;
      masc::MascNet cnet(c1, 8);
      for (int l = 0; l < c1.n_layers; ++l) {
        std::string pre = "l" + std::to_string(l) + ".";
        for (const char* n : {"attn.wq", "attn.wk", "attn.wv", "attn.wo", "mlp.fc", "mlp.proj"}) {
          auto& t = cnet.params.at(pre + n);
          std::fill(t.w.begin(), t.w.end(), 0.0);
        }
      }
      {
        auto& t = cnet.params.at("wpe");
        std::fill(t.w.begin(), t.w.end(), 0.0);
      }
      {
        auto& t = cnet.params.at("wte");
        std::fill(t.w.begin(), t.w.end(), 0.0);
        t.w[static_cast<size_t>(corpus::kBos) * 4] = 2.0;
      }
      {
        auto& t = cnet.params.at("mem.router");
        std::fill(t.w.begin(), t.w.end(), 0.0);
        t.w[0] = 500.0;
      }
      masc::Batch collapsed = masc::make_batch({corpus::tokenize("")}, c1.max_seq_len);
      fixtures_ok = fixtures_ok && cnet.forward(collapsed, 1).aux == 4.0;
    }

    // trained model batches stay inside [1, 4]
    masc::MascNet mnet(masc_ck.cfg, 0);
    mnet.params = masc_ck.params;
    double lo = 1e9, hi = -1e9;
    for (size_t i = 0; i + 32 <= std::min<size_t>(split.val.size(), 320); i += 32) {
      std::vector<corpus::Tokens> toks;
      for (size_t j = i; j < i + 32; ++j) toks.push_back(corpus::tokenize(split.val[j]));
      auto rep = mnet.forward(masc::make_batch(toks, masc_ck.cfg.max_seq_len), 2);
      lo = std::min(lo, rep.aux);
      hi = std::max(hi, rep.aux);
    }
    bool range_ok = lo >= 1.0 && hi <= 4.0;

    // aux coefficient raises the trained load entropy at matched seeds
    auto trained_entropy = [&](const masc::Checkpoint& ck) {
      masc::MascNet net(ck.cfg, 0);
      net.params = ck.params;
      std::array<double, 4> agg{};
      int64_t total_valid = 0;
      for (size_t i = 0; i + 32 <= std::min<size_t>(split.val.size(), 320); i += 32) {
        std::vector<corpus::Tokens> toks;
        for (size_t j = i; j < i + 32; ++j) toks.push_back(corpus::tokenize(split.val[j]));
        auto rep = net.forward(masc::make_batch(toks, ck.cfg.max_seq_len), 2);
        for (int n = 0; n < 4; ++n) agg[n] += rep.load[n] * static_cast<double>(rep.valid_positions);
        total_valid += rep.valid_positions;
      }
      for (auto& x : agg) x /= static_cast<double>(total_valid);
      return load_entropy(agg);
    };
    double h_aux = trained_entropy(aux001_ck);
    double h_none = trained_entropy(aux000_ck);
    std::ostringstream d;
    d << std::fixed << std::setprecision(4) << "fixtures exact, batch L_aux in [" << lo << ", " << hi
      << "], load entropy " << h_aux << " (lambda 0.01) vs " << h_none << " (lambda 0)";
    gate.report(7, "load balancing", fixtures_ok && range_ok && h_aux >= h_none, d.str());
  }

  // ---- criterion 8: gradient check ----
  {
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
    cfg.lambda_aux = 0.01;
    masc::MascNet net(cfg, 4);
    masc::Batch batch = masc::make_batch(
        {corpus::tokenize("routing check"), corpus::tokenize("more text!")}, cfg.max_seq_len);
    const double eps = 1e-4;
    auto rep = masc::grad_check(net, batch, eps, 220, 99, 2);
    std::ostringstream d;
    d << std::scientific << std::setprecision(2) << "max rel err " << rep.max_rel_err << " over "
      << rep.checked << " params, margin " << rep.min_margin << ", dead fd " << rep.max_dead_fd;
    gate.report(8, "gradient check",
                rep.min_margin >= 10 * eps && rep.max_rel_err < 1e-4 && rep.checked >= 200 &&
                    rep.max_dead_fd <= 1e-8,
                d.str());
  }

  // ---- criterion 9: FEC sanity ----
  {
    bool algebra_ok = true;
    for (int i = 0; i < code.k; ++i) {
      std::vector<uint8_t> m(code.k, 0);
      m[i] = 1;
      auto cw = fec::ldpc_encode(m, code);
      for (int r = 0; r < code.n - code.k; ++r) {
        uint8_t s = 0;
        for (int c = 0; c < code.n; ++c) s ^= static_cast<uint8_t>(cw[c] & code.h[r][c]);
        algebra_ok = algebra_ok && s == 0;
      }
    }
    algebra_ok = algebra_ok && testsup::gf2_rank_oracle(code.h) == 25;

    bool dist_ok = true;  // no codeword of weight <= 2: nonzero, pairwise distinct columns
    for (int a = 0; a < code.n && dist_ok; ++a) {
      int w = 0;
      for (int r = 0; r < code.n - code.k; ++r) w += code.h[r][a];
      dist_ok = w > 0;
      for (int b = a + 1; b < code.n && dist_ok; ++b) {
        bool equal = true;
        for (int r = 0; r < code.n - code.k; ++r) equal = equal && code.h[r][a] == code.h[r][b];
        dist_ok = !equal;
      }
    }

    const double rate = 24.0 / 49.0;
    auto run_ber = [&](double ebno_db, int trials, uint64_t seed) {
      const double ebno = std::pow(10.0, ebno_db / 10.0);
      const double sigma2 = 1.0 / (2.0 * rate * ebno);
      Rng mrng(seed);
      channel::Channel chan(channel::ChannelKind::kAwgn, seed ^ 0xBEEF);
      int64_t errors = 0, bits = 0;
      for (int t = 0; t < trials; ++t) {
        std::vector<uint8_t> m(code.k);
        for (auto& b : m) b = static_cast<uint8_t>(mrng.below(2));
        auto cw = fec::ldpc_encode(m, code);
        auto xs = fec::bpsk_modulate(cw);
        auto out = chan.transmit(xs, 1.0, sigma2);
        auto llr = channel::compute_llr(out.y, out.h, sigma2, 1.0);
        auto res = fec::bp_decode(llr, code, 50);
        for (int i = 0; i < code.k; ++i) errors += (res.bits[i] & 1) != m[i];
        bits += code.k;
      }
      double ber = static_cast<double>(errors) / static_cast<double>(bits);
      double se = std::sqrt(std::max(ber * (1 - ber), 1e-12) / static_cast<double>(bits));
      return std::pair<double, double>(ber, se);
    };

    auto [ber4, se4] = run_ber(4.0, 100000, 0x04DB);
    double uncoded4 = 0.5 * std::erfc(std::sqrt(std::pow(10.0, 0.4)));
    bool beats_uncoded = ber4 < uncoded4;

    bool monotone = true;
    double prev_ber = 1.0, prev_se = 0.0;
    for (int snr = 0; snr <= 8; ++snr) {
      auto [b, s] = run_ber(static_cast<double>(snr), 20000, 0x900 + snr);
      if (snr > 0) monotone = monotone && b <= prev_ber + 1.96 * (s + prev_se);
      prev_ber = b;
      prev_se = s;
    }
    std::ostringstream d;
    d << std::scientific << std::setprecision(2) << "GH^T=0, rank 25, dmin>=3; BER@4dB " << ber4
      << " < uncoded " << uncoded4 << "; monotone 0-8dB: " << (monotone ? "yes" : "NO");
    gate.report(9, "FEC sanity", algebra_ok && dist_ok && beats_uncoded && monotone, d.str());
  }

  std::printf("%s: %d criterion(s) failed\n", gate.failed == 0 ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL",
              gate.failed);
  return gate.failed == 0 ? 0 : 1;
}
