#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sscc/bitstream.hpp"

namespace sscc::eval {

// Sentence-level BLEU with brevity penalty and clipped n-gram precision,
// geometric mean over orders 1..max_order. Words: lowercased, punctuation
// replaced by spaces, whitespace split. Orders longer than the hypothesis are
// skipped; zero precisions are floored at 1e-9. Throws on a wordless
// reference.
double bleu(const std::string& reference, const std::string& hypothesis, int max_order);

std::vector<std::string> bleu_words(const std::string& text);

// Hamming distance / length; throws on length mismatch.
double ber(const Bitstream& sent, const Bitstream& received);
double ber_bits(const std::vector<uint8_t>& sent, const std::vector<uint8_t>& received);

struct CompressionStats {
  size_t payload_bits = 0;
  size_t source_bytes = 0;
  double bits_per_byte = 0.0;
};
CompressionStats compression_stats(const std::string& source, const Bitstream& bits);

// mean and half-width of a 95% normal-approximation confidence interval
struct MeanCi {
  double mean = 0.0;
  double ci95 = 0.0;
};
MeanCi mean_ci(const std::vector<double>& xs);

}  // namespace sscc::eval
