#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "sscc/channel.hpp"
#include "sscc/entropy.hpp"
#include "sscc/fec.hpp"
#include "sscc/masc.hpp"
#include "sscc/metrics.hpp"

namespace sscc::harness {

enum class Variant { kHuffman, kNgramAc, kMascAc, kMascAcAblated };

Variant variant_from_string(const std::string& s);
std::string to_string(Variant v);

// Frozen model artifacts shared across trials. The Huffman table is always
// present: its coded length for a sentence is the fixed-total energy
// reference. The ablated MASC variant shares the checkpoint parameters with
// the memory branch disabled (equivalent to zeroing the memory tensors).
struct Models {
  entropy::HuffmanTable huffman;
  std::shared_ptr<model::NgramModel> ngram;
  std::shared_ptr<const masc::MascParams> masc_params;
  masc::MascConfig masc_cfg;
  int64_t max_train_len = 0;

  size_t max_decode_tokens() const {
    return 4 * static_cast<size_t>(max_train_len > 0 ? max_train_len : 256);
  }
};

struct TrialConfig {
  Variant variant = Variant::kHuffman;
  channel::ChannelKind channel_kind = channel::ChannelKind::kAwgn;
  channel::EnergyMode energy_mode = channel::EnergyMode::kFixedTotal;
  double snr_db = 0.0;
  uint64_t seed = 0;
};

struct TrialResult {
  int64_t sentence_id = 0;
  std::string source;
  std::string reconstructed;
  size_t payload_bits = 0;             // source-coded bits K
  size_t coded_bits = 0;               // LDPC-coded bits on the air
  int64_t pre_decode_bit_errors = 0;   // hard decision on y vs sent codewords
  int64_t post_decode_bit_errors = 0;  // BP output blocks vs sent blocks
  double bleu1 = 0.0;
  double bleu4 = 0.0;
  std::array<double, masc::kNumExperts> load{};  // encoder routing histogram (MASC)
  bool header_error = false;
  bool guard_hit = false;
  bool lossless = false;
  bool valid = true;  // false -> excluded from aggregation
};

TrialResult run_trial(int64_t sentence_id, const std::string& sentence, const TrialConfig& tcfg,
                      const Models& models, const fec::LdpcCode& code);

struct SweepConfig {
  std::vector<Variant> variants;
  channel::ChannelKind channel_kind = channel::ChannelKind::kAwgn;
  channel::EnergyMode energy_mode = channel::EnergyMode::kFixedTotal;
  std::vector<double> snr_grid;
  int trials = 500;
  uint64_t seed = 1;
  int workers = 2;
  std::string out_dir;
};

struct SweepPointRow {
  Variant variant;
  double snr_db = 0.0;
  int trials = 0;
  int excluded = 0;
  eval::MeanCi bleu1, bleu4;
  double mean_payload_bits = 0.0;
  double mean_coded_bits = 0.0;
  double lossless_rate = 0.0;
};

struct SweepOutput {
  std::vector<SweepPointRow> rows;
  std::string summary_csv;
  std::string trials_csv;
};

// Runs trials (variants x grid points x trials), writes summary.csv,
// trials.csv, one SVG per metric and manifest.json under cfg.out_dir.
SweepOutput run_sweep(const SweepConfig& cfg, const std::vector<std::string>& test_sentences,
                      const Models& models, const fec::LdpcCode& code);

uint64_t sweep_config_hash(const SweepConfig& cfg);

struct PlotSeries {
  std::string name;
  std::vector<double> y;
  std::vector<double> ci;
};
void svg_line_plot(const std::string& path, const std::string& title, const std::string& x_label,
                   const std::string& y_label, const std::vector<double>& x,
                   const std::vector<PlotSeries>& series);

}  // namespace sscc::harness
