#include "sscc/metrics.hpp"

#include <cctype>
#include <cmath>
#include <map>
#include <stdexcept>

namespace sscc::eval {

std::vector<std::string> bleu_words(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      words.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) words.push_back(cur);
  return words;
}

namespace {

constexpr double kPrecisionFloor = 1e-9;

std::map<std::vector<std::string>, int> ngram_counts(const std::vector<std::string>& words, int n) {
  std::map<std::vector<std::string>, int> counts;
  if (static_cast<int>(words.size()) < n) return counts;
  for (size_t i = 0; i + n <= words.size(); ++i)
    ++counts[std::vector<std::string>(words.begin() + i, words.begin() + i + n)];
  return counts;
}

}  // namespace

double bleu(const std::string& reference, const std::string& hypothesis, int max_order) {
  if (max_order < 1 || max_order > 4) throw std::invalid_argument("bleu: max_order must be in [1,4]");
  std::vector<std::string> ref = bleu_words(reference);
  std::vector<std::string> hyp = bleu_words(hypothesis);
  if (ref.empty()) throw std::invalid_argument("bleu: empty reference");
  if (hyp.empty()) return 0.0;

  double log_precision = 0.0;
  int used_orders = 0;
  for (int n = 1; n <= max_order; ++n) {
    auto hyp_counts = ngram_counts(hyp, n);
    if (hyp_counts.empty()) continue;  // hypothesis shorter than n
    auto ref_counts = ngram_counts(ref, n);
    int64_t matched = 0, total = 0;
    for (const auto& [gram, cnt] : hyp_counts) {
      total += cnt;
      auto it = ref_counts.find(gram);
      if (it != ref_counts.end()) matched += std::min(cnt, it->second);
    }
    double p = total > 0 ? static_cast<double>(matched) / static_cast<double>(total) : 0.0;
    log_precision += std::log(std::max(p, kPrecisionFloor));
    ++used_orders;
  }
  if (used_orders == 0) return 0.0;
  double geo = std::exp(log_precision / used_orders);

  double bp = 1.0;
  if (hyp.size() < ref.size())
    bp = std::exp(1.0 - static_cast<double>(ref.size()) / static_cast<double>(hyp.size()));
  return bp * geo;
}

double ber(const Bitstream& sent, const Bitstream& received) {
  if (sent.size() != received.size()) throw std::invalid_argument("ber: length mismatch");
  if (sent.size() == 0) return 0.0;
  size_t diff = 0;
  for (size_t i = 0; i < sent.size(); ++i) diff += sent[i] != received[i];
  return static_cast<double>(diff) / static_cast<double>(sent.size());
}

double ber_bits(const std::vector<uint8_t>& sent, const std::vector<uint8_t>& received) {
  if (sent.size() != received.size()) throw std::invalid_argument("ber_bits: length mismatch");
  if (sent.empty()) return 0.0;
  size_t diff = 0;
  for (size_t i = 0; i < sent.size(); ++i) diff += (sent[i] & 1) != (received[i] & 1);
  return static_cast<double>(diff) / static_cast<double>(sent.size());
}

CompressionStats compression_stats(const std::string& source, const Bitstream& bits) {
  CompressionStats st;
  st.payload_bits = bits.size();
  st.source_bytes = source.size();
  st.bits_per_byte = st.source_bytes == 0 ? 0.0 : static_cast<double>(st.payload_bits) / st.source_bytes;
  return st;
}

MeanCi mean_ci(const std::vector<double>& xs) {
  MeanCi out;
  if (xs.empty()) return out;
  double sum = 0.0;
  for (double x : xs) sum += x;
  out.mean = sum / xs.size();
  if (xs.size() < 2) return out;
  double var = 0.0;
  for (double x : xs) var += (x - out.mean) * (x - out.mean);
  var /= (xs.size() - 1);
  out.ci95 = 1.96 * std::sqrt(var / xs.size());
  return out;
}

}  // namespace sscc::eval
