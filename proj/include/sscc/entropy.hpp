#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sscc/bitstream.hpp"
#include "sscc/corpus.hpp"
#include "sscc/source_model.hpp"

namespace sscc::entropy {

struct AcConfig {
  int precision = 31;  // register width in bits, 16..62
};

// All model distributions are quantized onto this fixed total before coding,
// well under the 2^(precision-2) ceiling of a 31-bit coder.
inline constexpr int kPmfTotalBits = 20;
inline constexpr uint64_t kPmfTotal = 1ull << kPmfTotalBits;

// Integer-frequency next-token distribution. Stored as a cumulative table:
// cum[s] <= v < cum[s+1] selects symbol s; cum.back() is the total. Every
// symbol keeps frequency >= 1 so any symbol stays decodable.
struct Pmf {
  std::vector<uint64_t> cum;

  int size() const { return static_cast<int>(cum.size()) - 1; }
  uint64_t total() const { return cum.back(); }
  uint64_t freq(int s) const { return cum[s + 1] - cum[s]; }
};

// Largest-remainder quantization onto kPmfTotal with a floor of 1 per symbol.
// Rejects NaN/negative entries and sums off by more than 1e-6.
Pmf quantize_pmf(std::span<const double> probs, const AcConfig& cfg = {});

// Exact integer frequencies (tests, Huffman-side helpers). Zero frequencies
// are bumped to 1.
Pmf pmf_from_freqs(std::span<const uint64_t> freqs);

// Witten-Neal-Cleary style coder with follow-bit (pending bit) carry
// handling. One instance per stream.
class ArithmeticEncoder {
 public:
  ArithmeticEncoder(Bitstream& out, const AcConfig& cfg);
  void encode(const Pmf& pmf, int symbol);
  void finish();

 private:
  void emit(int bit);

  Bitstream& out_;
  uint64_t full_, half_, quarter_;
  uint64_t low_, high_;
  uint64_t pending_ = 0;
  bool finished_ = false;
};

// Decoder counterpart. Reads zeros past the end of the stream, so it is total
// on arbitrary (including corrupted or truncated) input.
class ArithmeticDecoder {
 public:
  ArithmeticDecoder(const Bitstream& in, const AcConfig& cfg);
  int decode(const Pmf& pmf);

 private:
  int next_bit();

  const Bitstream& in_;
  size_t pos_ = 0;
  uint64_t full_, half_, quarter_;
  uint64_t low_, high_, value_;
};

// Autoregressive coding of an EOS-terminated token sequence against a model.
Bitstream ac_encode(const corpus::Tokens& tokens, model::SourceModel& model, const AcConfig& cfg = {});

// Decodes until EOS or max_tokens, whichever comes first. Corrupted streams
// yield garbage tokens, never a failure.
struct AcDecodeResult {
  corpus::Tokens tokens;
  bool hit_guard = false;
};
AcDecodeResult ac_decode(const Bitstream& bits, model::SourceModel& model, const AcConfig& cfg,
                         size_t max_tokens);

// ---- Huffman baseline ----

struct HuffmanTable {
  std::vector<Bitstream> codes;  // per symbol, canonical form

  int size() const { return static_cast<int>(codes.size()); }
  double kraft_sum() const;
};

// Optimal prefix code for the given frequencies (zero freq bumped to 1).
// Requires at least 2 symbols.
HuffmanTable huffman_build(std::span<const uint64_t> freqs);

Bitstream huffman_encode(const corpus::Tokens& tokens, const HuffmanTable& table);

enum class HuffmanDecodeMode { kStrict, kLenient };

struct HuffmanDecodeResult {
  corpus::Tokens tokens;
  bool hit_guard = false;
  bool truncated_codeword = false;  // stream ended mid-codeword
};
// Strict mode throws on a stream ending mid-codeword; lenient mode truncates.
HuffmanDecodeResult huffman_decode(const Bitstream& bits, const HuffmanTable& table,
                                   HuffmanDecodeMode mode, size_t max_tokens);

void huffman_save(const HuffmanTable& table, std::span<const uint64_t> freqs, const std::string& path);
HuffmanTable huffman_load(const std::string& path);

}  // namespace sscc::entropy
