#include "sscc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "json.hpp"
#include "sscc/corpus.hpp"
#include "sscc/util.hpp"

namespace sscc::harness {

Variant variant_from_string(const std::string& s) {
  if (s == "huffman") return Variant::kHuffman;
  if (s == "ngram-ac") return Variant::kNgramAc;
  if (s == "masc-ac") return Variant::kMascAc;
  if (s == "masc-ac-ablated") return Variant::kMascAcAblated;
  throw std::invalid_argument("unknown variant: " + s);
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kHuffman: return "huffman";
    case Variant::kNgramAc: return "ngram-ac";
    case Variant::kMascAc: return "masc-ac";
    case Variant::kMascAcAblated: return "masc-ac-ablated";
  }
  return "?";
}

namespace {

// The n-gram model is stateless across calls, so trials share the loaded
// instance; MASC sessions carry per-stream caches and get a fresh adapter.
struct SourceModelRef {
  model::SourceModel* ptr = nullptr;
  std::unique_ptr<model::SourceModel> owned;
};

SourceModelRef make_source_model(Variant v, const Models& models) {
  SourceModelRef ref;
  switch (v) {
    case Variant::kNgramAc:
      ref.ptr = models.ngram.get();
      break;
    case Variant::kMascAc: {
      masc::MascConfig cfg = models.masc_cfg;
      cfg.memory_enabled = true;
      ref.owned = std::make_unique<masc::MascModel>(models.masc_params, cfg);
      ref.ptr = ref.owned.get();
      break;
    }
    case Variant::kMascAcAblated: {
      // same checkpoint, memory contribution removed
      masc::MascConfig cfg = models.masc_cfg;
      cfg.memory_enabled = false;
      ref.owned = std::make_unique<masc::MascModel>(models.masc_params, cfg);
      ref.ptr = ref.owned.get();
      break;
    }
    default:
      break;
  }
  return ref;
}

}  // namespace

TrialResult run_trial(int64_t sentence_id, const std::string& sentence, const TrialConfig& tcfg,
                      const Models& models, const fec::LdpcCode& code) {
  TrialResult res;
  res.sentence_id = sentence_id;
  res.source = sentence;

  corpus::Tokens tokens = corpus::tokenize(sentence);
  entropy::AcConfig ac_cfg;

  // Huffman length doubles as the fixed-total energy reference.
  Bitstream huff_bits = entropy::huffman_encode(tokens, models.huffman);
  const double n_ref = static_cast<double>(fec::frame_block_count(huff_bits.size())) * code.n;

  Bitstream payload;
  SourceModelRef enc_model = make_source_model(tcfg.variant, models);
  try {
    if (tcfg.variant == Variant::kHuffman) {
      payload = huff_bits;
    } else {
      payload = entropy::ac_encode(tokens, *enc_model.ptr, ac_cfg);
    }
  } catch (const std::exception&) {
    res.valid = false;
    return res;
  }
  if (payload.size() > fec::kMaxFramePayloadBits) {
    res.valid = false;
    return res;
  }
  res.payload_bits = payload.size();
  if (auto* mm = dynamic_cast<masc::MascModel*>(enc_model.ptr)) res.load = mm->load_histogram();

  Bitstream message = fec::frame_payload(payload);
  const size_t blocks = message.size() / 24;
  res.coded_bits = blocks * code.n;

  channel::SigmaAmp sa =
      channel::snr_to_sigma(tcfg.snr_db, tcfg.energy_mode, res.coded_bits, n_ref);
  channel::Channel chan(tcfg.channel_kind, tcfg.seed);

  Bitstream decoded_message;
  for (size_t blk = 0; blk < blocks; ++blk) {
    std::vector<uint8_t> msg24(24);
    for (int i = 0; i < 24; ++i) msg24[i] = message[blk * 24 + i];
    std::vector<uint8_t> cw = fec::ldpc_encode(msg24, code);
    std::vector<double> xs = fec::bpsk_modulate(cw);
    auto out = chan.transmit(xs, sa.amplitude, sa.sigma2);
    std::vector<uint8_t> hard = fec::sign_to_bin(out.y);
    for (int i = 0; i < code.n; ++i) res.pre_decode_bit_errors += hard[i] != cw[i];
    std::vector<double> llr = channel::compute_llr(out.y, out.h, sa.sigma2, sa.amplitude);
    fec::BpResult bp = fec::bp_decode(llr, code, 50);
    std::vector<uint8_t> mhat = fec::extract_message(bp.bits, code);
    for (int i = 0; i < 24; ++i) {
      res.post_decode_bit_errors += (mhat[i] & 1) != msg24[i];
      decoded_message.push_back(mhat[i]);
    }
  }

  auto payload_hat = fec::deframe_payload(decoded_message);
  if (!payload_hat) {
    res.header_error = true;
    res.reconstructed.clear();
  } else {
    corpus::Tokens rec_tokens;
    if (tcfg.variant == Variant::kHuffman) {
      auto dec = entropy::huffman_decode(*payload_hat, models.huffman,
                                         entropy::HuffmanDecodeMode::kLenient, models.max_decode_tokens());
      rec_tokens = std::move(dec.tokens);
      res.guard_hit = dec.hit_guard;
    } else {
      SourceModelRef dec_model = make_source_model(tcfg.variant, models);
      auto dec = entropy::ac_decode(*payload_hat, *dec_model.ptr, ac_cfg, models.max_decode_tokens());
      rec_tokens = std::move(dec.tokens);
      res.guard_hit = dec.hit_guard;
    }
    res.reconstructed = corpus::detokenize_lenient(rec_tokens);
  }

  res.lossless = res.reconstructed == sentence;
  try {
    res.bleu1 = eval::bleu(sentence, res.reconstructed, 1);
    res.bleu4 = eval::bleu(sentence, res.reconstructed, 4);
  } catch (const std::exception&) {
    res.valid = false;
  }
  return res;
}

uint64_t sweep_config_hash(const SweepConfig& cfg) {
  std::ostringstream ss;
  for (Variant v : cfg.variants) ss << to_string(v) << ';';
  ss << to_string(cfg.channel_kind) << ';' << to_string(cfg.energy_mode) << ';';
  ss.precision(12);
  for (double s : cfg.snr_grid) ss << s << ',';
  ss << ';' << cfg.trials << ';' << cfg.seed;
  return fnv1a64(ss.str());
}

namespace {

std::string fmt(double x) {
  std::ostringstream ss;
  ss.precision(10);
  ss << x;
  return ss.str();
}

std::string fmt_hash(uint64_t h) {
  std::ostringstream ss;
  ss << std::hex << h;
  return ss.str();
}

}  // namespace

SweepOutput run_sweep(const SweepConfig& cfg, const std::vector<std::string>& test_sentences,
                      const Models& models, const fec::LdpcCode& code) {
  if (cfg.snr_grid.empty()) throw std::invalid_argument("run_sweep: empty SNR grid");
  for (size_t i = 1; i < cfg.snr_grid.size(); ++i)
    if (cfg.snr_grid[i] <= cfg.snr_grid[i - 1])
      throw std::invalid_argument("run_sweep: SNR grid must be strictly increasing");
  if (cfg.trials < 1) throw std::invalid_argument("run_sweep: trials must be >= 1");
  if (test_sentences.empty()) throw std::invalid_argument("run_sweep: no test sentences");

  struct Task {
    size_t vi, si;
    int trial;
  };
  std::vector<Task> tasks;
  for (size_t vi = 0; vi < cfg.variants.size(); ++vi)
    for (size_t si = 0; si < cfg.snr_grid.size(); ++si)
      for (int tr = 0; tr < cfg.trials; ++tr) tasks.push_back({vi, si, tr});

  std::vector<TrialResult> results(tasks.size());
  std::atomic<size_t> next{0};
  int workers = std::max(1, cfg.workers);
  auto worker = [&]() {
    for (;;) {
      size_t i = next.fetch_add(1);
      if (i >= tasks.size()) return;
      const Task& tk = tasks[i];
      TrialConfig tc;
      tc.variant = cfg.variants[tk.vi];
      tc.channel_kind = cfg.channel_kind;
      tc.energy_mode = cfg.energy_mode;
      tc.snr_db = cfg.snr_grid[tk.si];
      tc.seed = splitmix64(cfg.seed ^ (uint64_t(tk.si) << 40) ^ (uint64_t(tk.trial) << 8) ^ tk.vi);
      int64_t sid = tk.trial % static_cast<int64_t>(test_sentences.size());
      results[i] = run_trial(sid, test_sentences[sid], tc, models, code);
    }
  };
  {
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& th : pool) th.join();
  }

  std::filesystem::create_directories(cfg.out_dir);
  SweepOutput out;
  out.trials_csv = cfg.out_dir + "/trials.csv";
  out.summary_csv = cfg.out_dir + "/summary.csv";

  {
    std::ostringstream ss;
    ss << "variant,channel,energy_mode,snr_db,trial,sentence_id,payload_bits,coded_bits,"
          "pre_decode_bit_errors,post_decode_bit_errors,bleu1,bleu4,lossless,header_error,guard_hit,"
          "valid,load_2,load_3,load_4,load_5\n";
    for (size_t i = 0; i < tasks.size(); ++i) {
      const Task& tk = tasks[i];
      const TrialResult& r = results[i];
      ss << to_string(cfg.variants[tk.vi]) << ',' << to_string(cfg.channel_kind) << ','
         << to_string(cfg.energy_mode) << ',' << fmt(cfg.snr_grid[tk.si]) << ',' << tk.trial << ','
         << r.sentence_id << ',' << r.payload_bits << ',' << r.coded_bits << ','
         << r.pre_decode_bit_errors << ',' << r.post_decode_bit_errors << ',' << fmt(r.bleu1) << ','
         << fmt(r.bleu4) << ',' << int(r.lossless) << ',' << int(r.header_error) << ','
         << int(r.guard_hit) << ',' << int(r.valid);
      for (double l : r.load) ss << ',' << fmt(l);
      ss << '\n';
    }
    write_text_file(out.trials_csv, ss.str());
  }

  {
    std::ostringstream ss;
    ss << "variant,channel,energy_mode,snr_db,trials,excluded,bleu1_mean,bleu1_ci95,bleu4_mean,"
          "bleu4_ci95,payload_bits_mean,coded_bits_mean,lossless_rate\n";
    size_t idx = 0;
    for (size_t vi = 0; vi < cfg.variants.size(); ++vi) {
      for (size_t si = 0; si < cfg.snr_grid.size(); ++si) {
        std::vector<double> b1, b4, pb, cb;
        int lossless = 0, excluded = 0;
        for (int tr = 0; tr < cfg.trials; ++tr, ++idx) {
          const TrialResult& r = results[idx];
          if (!r.valid) {
            ++excluded;
            continue;
          }
          b1.push_back(r.bleu1);
          b4.push_back(r.bleu4);
          pb.push_back(static_cast<double>(r.payload_bits));
          cb.push_back(static_cast<double>(r.coded_bits));
          lossless += r.lossless;
        }
        SweepPointRow row;
        row.variant = cfg.variants[vi];
        row.snr_db = cfg.snr_grid[si];
        row.trials = cfg.trials - excluded;
        row.excluded = excluded;
        row.bleu1 = eval::mean_ci(b1);
        row.bleu4 = eval::mean_ci(b4);
        row.mean_payload_bits = eval::mean_ci(pb).mean;
        row.mean_coded_bits = eval::mean_ci(cb).mean;
        row.lossless_rate = b1.empty() ? 0.0 : static_cast<double>(lossless) / b1.size();
        out.rows.push_back(row);
        ss << to_string(row.variant) << ',' << to_string(cfg.channel_kind) << ','
           << to_string(cfg.energy_mode) << ',' << fmt(row.snr_db) << ',' << row.trials << ','
           << row.excluded << ',' << fmt(row.bleu1.mean) << ',' << fmt(row.bleu1.ci95) << ','
           << fmt(row.bleu4.mean) << ',' << fmt(row.bleu4.ci95) << ',' << fmt(row.mean_payload_bits)
           << ',' << fmt(row.mean_coded_bits) << ',' << fmt(row.lossless_rate) << '\n';
      }
    }
    write_text_file(out.summary_csv, ss.str());
  }

  // plots: one file per metric for this channel
  for (int metric = 0; metric < 2; ++metric) {
    std::vector<PlotSeries> series;
    for (size_t vi = 0; vi < cfg.variants.size(); ++vi) {
      PlotSeries s;
      s.name = to_string(cfg.variants[vi]);
      for (const auto& row : out.rows) {
        if (row.variant != cfg.variants[vi]) continue;
        s.y.push_back(metric == 0 ? row.bleu1.mean : row.bleu4.mean);
        s.ci.push_back(metric == 0 ? row.bleu1.ci95 : row.bleu4.ci95);
      }
      series.push_back(std::move(s));
    }
    std::string name = metric == 0 ? "bleu1" : "bleu4";
    svg_line_plot(cfg.out_dir + "/" + name + "_" + to_string(cfg.channel_kind) + ".svg",
                  name + " vs SNR (" + to_string(cfg.channel_kind) + ")", "SNR (dB)", name,
                  cfg.snr_grid, series);
  }

  {
    nlohmann::json manifest;
    manifest["config_hash"] = fmt_hash(sweep_config_hash(cfg));
    manifest["seed"] = cfg.seed;
    manifest["channel"] = to_string(cfg.channel_kind);
    manifest["energy_mode"] = to_string(cfg.energy_mode);
    manifest["snr_grid"] = cfg.snr_grid;
    manifest["trials_per_point"] = cfg.trials;
    std::vector<std::string> vs;
    for (Variant v : cfg.variants) vs.push_back(to_string(v));
    manifest["variants"] = vs;
    manifest["files"] = {"summary.csv", "trials.csv"};
    write_text_file(cfg.out_dir + "/manifest.json", manifest.dump(2) + "\n");
  }
  return out;
}

void svg_line_plot(const std::string& path, const std::string& title, const std::string& x_label,
                   const std::string& y_label, const std::vector<double>& x,
                   const std::vector<PlotSeries>& series) {
  const int w =  760, h = 480, ml = 60, mr = 150, mt = 40, mb = 50;
  const double pw = w - ml - mr, ph = h - mt - mb;
  double xmin = x.front(), xmax = x.back();
  if (xmax <= xmin) xmax = xmin + 1;
  double ymin = 0.0, ymax = 1.0;
  for (const auto& s : series)
    for (double v : s.y) ymax = std::max(ymax, v);
  auto px = [&](double v) { return ml + (v - xmin) / (xmax - xmin) * pw; };
  auto py = [&](double v) { return mt + ph - (v - ymin) / (ymax - ymin) * ph; };
  static const char* colors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b"};

  std::ostringstream ss;
  ss << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  ss << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  ss << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"15\">" << title
     << "</text>\n";
  // axes
  ss << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw << "\" y2=\"" << mt + ph
     << "\" stroke=\"black\"/>\n";
  ss << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml << "\" y2=\"" << mt + ph
     << "\" stroke=\"black\"/>\n";
  for (double v : x) {
    ss << "<line x1=\"" << px(v) << "\" y1=\"" << mt + ph << "\" x2=\"" << px(v) << "\" y2=\""
       << mt + ph + 4 << "\" stroke=\"black\"/>\n";
    ss << "<text x=\"" << px(v) << "\" y=\"" << mt + ph + 18 << "\" text-anchor=\"middle\" font-size=\"11\">"
       << v << "</text>\n";
  }
  for (int i = 0; i <= 5; ++i) {
    double v = ymin + (ymax - ymin) * i / 5.0;
    ss << "<line x1=\"" << ml - 4 << "\" y1=\"" << py(v) << "\" x2=\"" << ml << "\" y2=\"" << py(v)
       << "\" stroke=\"black\"/>\n";
    ss << "<text x=\"" << ml - 8 << "\" y=\"" << py(v) + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
       << v << "</text>\n";
  }
  ss << "<text x=\"" << ml + pw / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\" font-size=\"12\">"
     << x_label << "</text>\n";
  ss << "<text x=\"15\" y=\"" << mt + ph / 2 << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 15 "
     << mt + ph / 2 << ")\">" << y_label << "</text>\n";

  for (size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* col = colors[si % 6];
    ss << "<polyline fill=\"none\" stroke=\"" << col << "\" stroke-width=\"1.6\" points=\"";
    for (size_t i = 0; i < x.size() && i < s.y.size(); ++i) ss << px(x[i]) << ',' << py(s.y[i]) << ' ';
    ss << "\"/>\n";
    for (size_t i = 0; i < x.size() && i < s.y.size(); ++i) {
      ss << "<circle cx=\"" << px(x[i]) << "\" cy=\"" << py(s.y[i]) << "\" r=\"2.5\" fill=\"" << col
         << "\"/>\n";
      if (i < s.ci.size() && s.ci[i] > 0) {
        ss << "<line x1=\"" << px(x[i]) << "\" y1=\"" << py(s.y[i] - s.ci[i]) << "\" x2=\"" << px(x[i])
           << "\" y2=\"" << py(s.y[i] + s.ci[i]) << "\" stroke=\"" << col << "\"/>\n";
      }
    }
    double ly = mt + 16.0 * (si + 1);
    ss << "<line x1=\"" << ml + pw + 10 << "\" y1=\"" << ly << "\" x2=\"" << ml + pw + 30 << "\" y2=\""
       << ly << "\" stroke=\"" << col << "\" stroke-width=\"2\"/>\n";
    ss << "<text x=\"" << ml + pw + 34 << "\" y=\"" << ly + 4 << "\" font-size=\"11\">" << s.name
       << "</text>\n";
  }
  ss << "</svg>\n";
  write_text_file(path, ss.str());
}

}  // namespace sscc::harness
