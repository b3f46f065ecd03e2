#include "sscc/entropy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "json.hpp"
#include "sscc/util.hpp"

namespace sscc::entropy {

namespace {

void check_precision(const AcConfig& cfg) {
  if (cfg.precision < 16 || cfg.precision > 62)
    throw std::invalid_argument("AcConfig: precision must be in [16, 62]");
}

uint64_t quant_total_for(const AcConfig& cfg) {
  // total <= 2^(precision-2) keeps interval subdivision from underflowing
  uint64_t ceiling = 1ull << (cfg.precision - 2);
  return std::min<uint64_t>(kPmfTotal, ceiling);
}

}  // namespace

Pmf quantize_pmf(std::span<const double> probs, const AcConfig& cfg) {
  check_precision(cfg);
  const size_t v = probs.size();
  if (v < 2) throw std::invalid_argument("quantize_pmf: need at least 2 symbols");
  const uint64_t total = quant_total_for(cfg);
  if (total < 2 * v) throw std::invalid_argument("quantize_pmf: vocabulary too large for precision");

  double sum = 0.0;
  for (double p : probs) {
    if (std::isnan(p)) throw std::invalid_argument("quantize_pmf: NaN probability");
    if (p < 0.0) throw std::invalid_argument("quantize_pmf: negative probability");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6) throw std::invalid_argument("quantize_pmf: probabilities do not sum to 1");

  // Floor of 1 per symbol, remaining mass by largest remainder.
  const double scale = static_cast<double>(total - v);
  std::vector<uint64_t> freq(v);
  std::vector<std::pair<double, size_t>> fracs(v);
  uint64_t assigned = 0;
  for (size_t i = 0; i < v; ++i) {
    double exact = (probs[i] / sum) * scale;
    double fl = std::floor(exact);
    freq[i] = static_cast<uint64_t>(fl) + 1;
    fracs[i] = {exact - fl, i};
    assigned += freq[i];
  }
  int64_t rem = static_cast<int64_t>(total) - static_cast<int64_t>(assigned);
  if (rem > 0) {
    std::sort(fracs.begin(), fracs.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    for (size_t j = 0; rem > 0 && j < v; ++j) {
      if (fracs[j].first <= 0.0) break;  // never top up a zero-probability symbol
      ++freq[fracs[j].second];
      --rem;
    }
    // Residual rounding slack goes to the heaviest symbol.
    while (rem > 0) {
      size_t arg = std::max_element(freq.begin(), freq.end()) - freq.begin();
      ++freq[arg];
      --rem;
    }
  }
  while (rem < 0) {
    size_t arg = std::max_element(freq.begin(), freq.end()) - freq.begin();
    if (freq[arg] <= 1) throw std::logic_error("quantize_pmf: cannot rebalance");
    --freq[arg];
    ++rem;
  }

  Pmf pmf;
  pmf.cum.resize(v + 1);
  pmf.cum[0] = 0;
  for (size_t i = 0; i < v; ++i) pmf.cum[i + 1] = pmf.cum[i] + freq[i];
  return pmf;
}

Pmf pmf_from_freqs(std::span<const uint64_t> freqs) {
  if (freqs.size() < 2) throw std::invalid_argument("pmf_from_freqs: need at least 2 symbols");
  Pmf pmf;
  pmf.cum.resize(freqs.size() + 1);
  pmf.cum[0] = 0;
  for (size_t i = 0; i < freqs.size(); ++i) pmf.cum[i + 1] = pmf.cum[i] + std::max<uint64_t>(freqs[i], 1);
  return pmf;
}

// ---- arithmetic coder ----

ArithmeticEncoder::ArithmeticEncoder(Bitstream& out, const AcConfig& cfg) : out_(out) {
  check_precision(cfg);
  full_ = 1ull << cfg.precision;
  half_ = full_ >> 1;
  quarter_ = full_ >> 2;
  low_ = 0;
  high_ = full_ - 1;
}

void ArithmeticEncoder::emit(int bit) {
  out_.push_back(bit);
  for (; pending_ > 0; --pending_) out_.push_back(bit ^ 1);
}

void ArithmeticEncoder::encode(const Pmf& pmf, int symbol) {
  if (finished_) throw std::logic_error("encode after finish");
  if (symbol < 0 || symbol >= pmf.size()) throw std::out_of_range("encode: symbol out of range");
  const uint64_t total = pmf.total();
  if (total > quarter_) throw std::overflow_error("encode: pmf total exceeds precision budget");
  if (pmf.freq(symbol) == 0) throw std::invalid_argument("encode: zero-frequency symbol");

  const uint64_t range = high_ - low_ + 1;
  using u128 = unsigned __int128;
  high_ = low_ + static_cast<uint64_t>((u128(range) * pmf.cum[symbol + 1]) / total) - 1;
  low_ = low_ + static_cast<uint64_t>((u128(range) * pmf.cum[symbol]) / total);

  for (;;) {
    if (high_ < half_) {
      emit(0);
    } else if (low_ >= half_) {
      emit(1);
      low_ -= half_;
      high_ -= half_;
    } else if (low_ >= quarter_ && high_ < half_ + quarter_) {
      ++pending_;
      low_ -= quarter_;
      high_ -= quarter_;
    } else {
      break;
    }
    low_ <<= 1;
    high_ = (high_ << 1) | 1;
  }
}

void ArithmeticEncoder::finish() {
  if (finished_) return;
  finished_ = true;
  // Pick the quarter-point that is guaranteed inside [low, high] once the
  // decoder pads the tail with zeros.
  ++pending_;
  if (low_ < quarter_)
    emit(0);
  else
    emit(1);
}

ArithmeticDecoder::ArithmeticDecoder(const Bitstream& in, const AcConfig& cfg) : in_(in) {
  check_precision(cfg);
  full_ = 1ull << cfg.precision;
  half_ = full_ >> 1;
  quarter_ = full_ >> 2;
  low_ = 0;
  high_ = full_ - 1;
  value_ = 0;
  for (int i = 0; i < cfg.precision; ++i) value_ = (value_ << 1) | static_cast<uint64_t>(next_bit());
}

int ArithmeticDecoder::next_bit() {
  if (pos_ < in_.size()) return in_[pos_++];
  return 0;
}

int ArithmeticDecoder::decode(const Pmf& pmf) {
  const uint64_t total = pmf.total();
  if (total > quarter_) throw std::overflow_error("decode: pmf total exceeds precision budget");
  const uint64_t range = high_ - low_ + 1;
  using u128 = unsigned __int128;
  const uint64_t target = static_cast<uint64_t>(((u128(value_ - low_) + 1) * total - 1) / range);

  // cum[s] <= target < cum[s+1]
  auto it = std::upper_bound(pmf.cum.begin() + 1, pmf.cum.end(), target);
  int symbol = static_cast<int>(it - pmf.cum.begin()) - 1;
  if (symbol >= pmf.size()) symbol = pmf.size() - 1;

  high_ = low_ + static_cast<uint64_t>((u128(range) * pmf.cum[symbol + 1]) / total) - 1;
  low_ = low_ + static_cast<uint64_t>((u128(range) * pmf.cum[symbol]) / total);

  for (;;) {
    if (high_ < half_) {
      // nothing
    } else if (low_ >= half_) {
      low_ -= half_;
      high_ -= half_;
      value_ -= half_;
    } else if (low_ >= quarter_ && high_ < half_ + quarter_) {
      low_ -= quarter_;
      high_ -= quarter_;
      value_ -= quarter_;
    } else {
      break;
    }
    low_ <<= 1;
    high_ = (high_ << 1) | 1;
    value_ = (value_ << 1) | static_cast<uint64_t>(next_bit());
  }
  return symbol;
}

Bitstream ac_encode(const corpus::Tokens& tokens, model::SourceModel& model, const AcConfig& cfg) {
  if (tokens.empty()) throw std::invalid_argument("ac_encode: empty token sequence");
  const int v = model.vocab_size();
  for (int32_t t : tokens)
    if (t < 0 || t >= v) throw std::invalid_argument("ac_encode: token outside model vocabulary");

  Bitstream out;
  ArithmeticEncoder enc(out, cfg);
  model.begin_stream();
  corpus::Tokens prefix;
  prefix.reserve(tokens.size());
  for (int32_t t : tokens) {
    Pmf pmf = quantize_pmf(model.next_pmf(prefix), cfg);
    enc.encode(pmf, t);
    prefix.push_back(t);
  }
  enc.finish();
  return out;
}

AcDecodeResult ac_decode(const Bitstream& bits, model::SourceModel& model, const AcConfig& cfg,
                         size_t max_tokens) {
  AcDecodeResult res;
  if (max_tokens == 0) return res;
  ArithmeticDecoder dec(bits, cfg);
  model.begin_stream();
  corpus::Tokens prefix;
  const int32_t eos = static_cast<int32_t>(model.vocab_size()) - 1;
  for (;;) {
    Pmf pmf = quantize_pmf(model.next_pmf(prefix), cfg);
    int32_t s = dec.decode(pmf);
    res.tokens.push_back(s);
    if (s == eos) break;
    if (res.tokens.size() >= max_tokens) {
      res.hit_guard = true;
      break;
    }
    prefix.push_back(s);
  }
  return res;
}

// ---- Huffman ----

double HuffmanTable::kraft_sum() const {
  double s = 0.0;
  for (const auto& c : codes)
    if (!c.empty()) s += std::ldexp(1.0, -static_cast<int>(c.size()));
  return s;
}

HuffmanTable huffman_build(std::span<const uint64_t> freqs) {
  const size_t v = freqs.size();
  if (v == 0) throw std::invalid_argument("huffman_build: empty frequency table");
  if (v < 2) throw std::invalid_argument("huffman_build: need at least 2 symbols");

  struct Node {
    uint64_t weight;
    int left = -1, right = -1;  // children; -1 marks a leaf
    int symbol = -1;
  };
  std::vector<Node> nodes;
  nodes.reserve(2 * v);
  std::vector<int> leaves;
  for (size_t s = 0; s < v; ++s) {
    nodes.push_back({std::max<uint64_t>(freqs[s], 1), -1, -1, static_cast<int>(s)});
    leaves.push_back(static_cast<int>(s));
  }
  // Two-queue construction; sorting key (weight, symbol) keeps it deterministic.
  std::sort(leaves.begin(), leaves.end(), [&](int a, int b) {
    if (nodes[a].weight != nodes[b].weight) return nodes[a].weight < nodes[b].weight;
    return nodes[a].symbol < nodes[b].symbol;
  });
  std::vector<int> internal;
  size_t li = 0, ii = 0;
  auto pop_min = [&]() {
    bool take_leaf;
    if (li >= leaves.size())
      take_leaf = false;
    else if (ii >= internal.size())
      take_leaf = true;
    else
      take_leaf = nodes[leaves[li]].weight <= nodes[internal[ii]].weight;
    return take_leaf ? leaves[li++] : internal[ii++];
  };
  for (size_t step = 0; step + 1 < v; ++step) {
    int a = pop_min();
    int b = pop_min();
    nodes.push_back({nodes[a].weight + nodes[b].weight, a, b, -1});
    internal.push_back(static_cast<int>(nodes.size()) - 1);
  }

  // Depths via iterative traversal.
  std::vector<int> depth(v, 0);
  std::vector<std::pair<int, int>> stack{{static_cast<int>(nodes.size()) - 1, 0}};
  while (!stack.empty()) {
    auto [id, d] = stack.back();
    stack.pop_back();
    const Node& n = nodes[id];
    if (n.symbol >= 0) {
      depth[n.symbol] = std::max(d, 1);  // degenerate 1-leaf tree never happens (v >= 2)
    } else {
      stack.push_back({n.left, d + 1});
      stack.push_back({n.right, d + 1});
    }
  }

  // Canonical code assignment: sort by (length, symbol).
  std::vector<int> order(v);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (depth[a] != depth[b]) return depth[a] < depth[b];
    return a < b;
  });
  HuffmanTable table;
  table.codes.resize(v);
  uint64_t code = 0;
  int prev_len = depth[order[0]];
  for (size_t i = 0; i < v; ++i) {
    int s = order[i];
    code <<= (depth[s] - prev_len);
    prev_len = depth[s];
    Bitstream b;
    for (int j = depth[s] - 1; j >= 0; --j) b.push_back(static_cast<int>((code >> j) & 1));
    table.codes[s] = std::move(b);
    ++code;
  }
  return table;
}

Bitstream huffman_encode(const corpus::Tokens& tokens, const HuffmanTable& table) {
  Bitstream out;
  for (int32_t t : tokens) {
    if (t < 0 || t >= table.size()) throw std::out_of_range("huffman_encode: symbol out of range");
    out.append(table.codes[t]);
  }
  return out;
}

HuffmanDecodeResult huffman_decode(const Bitstream& bits, const HuffmanTable& table,
                                   HuffmanDecodeMode mode, size_t max_tokens) {
  // Canonical decode tables.
  const int v = table.size();
  int max_len = 0;
  for (const auto& c : table.codes) max_len = std::max(max_len, static_cast<int>(c.size()));
  std::vector<std::vector<std::pair<uint64_t, int>>> by_len(max_len + 1);
  for (int s = 0; s < v; ++s) {
    const auto& c = table.codes[s];
    if (c.empty()) continue;
    uint64_t val = 0;
    for (size_t i = 0; i < c.size(); ++i) val = (val << 1) | c[i];
    by_len[c.size()].push_back({val, s});
  }
  for (auto& vec : by_len) std::sort(vec.begin(), vec.end());

  HuffmanDecodeResult res;
  const int32_t eos = v - 1;
  size_t pos = 0;
  while (pos < bits.size() && res.tokens.size() < max_tokens) {
    uint64_t val = 0;
    int len = 0;
    int symbol = -1;
    while (pos < bits.size() && len < max_len) {
      val = (val << 1) | bits[pos++];
      ++len;
      const auto& vec = by_len[len];
      auto it = std::lower_bound(vec.begin(), vec.end(), std::make_pair(val, -1));
      if (it != vec.end() && it->first == val) {
        symbol = it->second;
        break;
      }
    }
    if (symbol < 0) {
      // ran out of bits mid-codeword
      if (len == 0) break;
      res.truncated_codeword = true;
      if (mode == HuffmanDecodeMode::kStrict)
        throw std::runtime_error("huffman_decode: stream ends mid-codeword");
      break;
    }
    res.tokens.push_back(symbol);
    if (symbol == eos) return res;
  }
  if (res.tokens.size() >= max_tokens) res.hit_guard = true;
  return res;
}

void huffman_save(const HuffmanTable& table, std::span<const uint64_t> freqs, const std::string& path) {
  nlohmann::json j;
  j["vocab_size"] = freqs.size();
  j["freqs"] = std::vector<uint64_t>(freqs.begin(), freqs.end());
  j["code_lengths"] = [&] {
    std::vector<int> lens;
    for (const auto& c : table.codes) lens.push_back(static_cast<int>(c.size()));
    return lens;
  }();
  write_text_file(path, j.dump() + "\n");
}

HuffmanTable huffman_load(const std::string& path) {
  auto j = nlohmann::json::parse(read_text_file(path));
  std::vector<uint64_t> freqs = j.at("freqs").get<std::vector<uint64_t>>();
  HuffmanTable table = huffman_build(freqs);
  // sanity: canonical rebuild must match the recorded lengths
  auto lens = j.at("code_lengths").get<std::vector<int>>();
  for (size_t s = 0; s < lens.size(); ++s)
    if (static_cast<int>(table.codes[s].size()) != lens[s])
      throw std::runtime_error("huffman_load: table mismatch with recorded lengths");
  return table;
}

}  // namespace sscc::entropy
