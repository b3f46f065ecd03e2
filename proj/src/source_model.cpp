#include "sscc/source_model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace sscc::model {

UniformModel::UniformModel(int vocab_size) : vocab_(vocab_size) {
  if (vocab_size < 2) throw std::invalid_argument("UniformModel: vocab_size must be >= 2");
}

std::vector<double> UniformModel::next_pmf(std::span<const int32_t>) {
  return std::vector<double>(vocab_, 1.0 / vocab_);
}

IidModel::IidModel(std::vector<double> probs) : probs_(std::move(probs)) {
  if (probs_.size() < 2) throw std::invalid_argument("IidModel: need at least 2 symbols");
}

std::vector<double> IidModel::next_pmf(std::span<const int32_t>) { return probs_; }

namespace {

// Context key: leading 1 sentinel, then 9 bits per token id. Order <= 5 means
// at most 4 context tokens plus one target -> 46 bits, exact (no collisions).
uint64_t pack_key(std::span<const int32_t> ctx) {
  uint64_t key = 1;
  for (int32_t t : ctx) key = (key << 9) | static_cast<uint64_t>(t & 0x1FF);
  return key;
}

uint64_t extend_key(uint64_t ctx_key, int32_t token) {
  return (ctx_key << 9) | static_cast<uint64_t>(token & 0x1FF);
}

}  // namespace

NgramModel::NgramModel(int order, double alpha, int vocab_size)
    : order_(order), alpha_(alpha), vocab_(vocab_size) {
  if (order < 1 || order > 5) throw std::invalid_argument("NgramModel: order must be in [1, 5]");
  if (!(alpha > 0.0)) throw std::invalid_argument("NgramModel: alpha must be positive");
  if (vocab_size < 2) throw std::invalid_argument("NgramModel: vocab_size must be >= 2");
}

void NgramModel::observe(std::span<const int32_t> ctx, int32_t token) {
  uint64_t ck = pack_key(ctx);
  ++pair_counts_[extend_key(ck, token)];
  ++ctx_totals_[ck];
}

void NgramModel::fit(const std::vector<std::string>& sentences) {
  const int clen = order_ - 1;
  for (const auto& s : sentences) {
    corpus::Tokens toks = corpus::tokenize(s);
    std::vector<int32_t> padded(clen, corpus::kBos);
    padded.insert(padded.end(), toks.begin(), toks.end());
    for (size_t i = 0; i < toks.size(); ++i) {
      // all context lengths up to order-1, so backoff levels are trained too
      for (int l = 0; l <= clen; ++l) {
        std::span<const int32_t> ctx(padded.data() + i + (clen - l), static_cast<size_t>(l));
        observe(ctx, toks[i]);
      }
    }
  }
}

std::vector<double> NgramModel::pmf_for_context(std::span<const int32_t> ctx) const {
  // back off to the longest context with observations
  for (size_t l = ctx.size();; --l) {
    std::span<const int32_t> c = ctx.subspan(ctx.size() - l, l);
    uint64_t ck = pack_key(c);
    auto tot = ctx_totals_.find(ck);
    uint32_t total = (tot == ctx_totals_.end()) ? 0 : tot->second;
    if (total > 0 || l == 0) {
      std::vector<double> pmf(vocab_);
      const double denom = total + alpha_ * vocab_;
      for (int t = 0; t < vocab_; ++t) {
        auto it = pair_counts_.find(extend_key(ck, t));
        double cnt = (it == pair_counts_.end()) ? 0.0 : it->second;
        pmf[t] = (cnt + alpha_) / denom;
      }
      return pmf;
    }
  }
}

std::vector<double> NgramModel::next_pmf(std::span<const int32_t> prefix) {
  const int clen = order_ - 1;
  std::vector<int32_t> ctx;
  ctx.reserve(clen);
  for (int i = clen; i > 0; --i) {
    int64_t idx = static_cast<int64_t>(prefix.size()) - i;
    ctx.push_back(idx < 0 ? corpus::kBos : prefix[idx]);
  }
  return pmf_for_context(ctx);
}

double NgramModel::bits_per_byte(const std::vector<std::string>& sentences) const {
  double bits = 0.0;
  size_t bytes = 0;
  const int clen = order_ - 1;
  for (const auto& s : sentences) {
    corpus::Tokens toks = corpus::tokenize(s);
    std::vector<int32_t> padded(clen, corpus::kBos);
    padded.insert(padded.end(), toks.begin(), toks.end());
    for (size_t i = 0; i < toks.size(); ++i) {
      std::span<const int32_t> ctx(padded.data() + i, static_cast<size_t>(clen));
      std::vector<double> pmf = pmf_for_context(ctx);
      bits += -std::log2(pmf[toks[i]]);
    }
    bytes += s.size();
  }
  if (bytes == 0) return 0.0;
  return bits / static_cast<double>(bytes);
}

void NgramModel::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  auto put_u32 = [&](uint32_t x) {
    unsigned char b[4] = {static_cast<unsigned char>(x), static_cast<unsigned char>(x >> 8),
                          static_cast<unsigned char>(x >> 16), static_cast<unsigned char>(x >> 24)};
    out.write(reinterpret_cast<char*>(b), 4);
  };
  auto put_u64 = [&](uint64_t x) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(x >> (8 * i));
    out.write(reinterpret_cast<char*>(b), 8);
  };
  out.write("NGRM", 4);
  put_u32(1);  // version
  put_u32(static_cast<uint32_t>(order_));
  put_u64(std::bit_cast<uint64_t>(alpha_));
  put_u32(static_cast<uint32_t>(vocab_));
  // sorted (context, token, count) table
  std::vector<std::pair<uint64_t, uint32_t>> rows(pair_counts_.begin(), pair_counts_.end());
  std::sort(rows.begin(), rows.end());
  put_u64(rows.size());
  for (const auto& [key, cnt] : rows) {
    put_u64(key);
    put_u32(cnt);
  }
}

NgramModel NgramModel::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "NGRM", 4) != 0) throw std::runtime_error("bad ngram file magic");
  auto get_u32 = [&] {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    return uint32_t(b[0]) | uint32_t(b[1]) << 8 | uint32_t(b[2]) << 16 | uint32_t(b[3]) << 24;
  };
  auto get_u64 = [&] {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    uint64_t x = 0;
    for (int i = 7; i >= 0; --i) x = (x << 8) | b[i];
    return x;
  };
  uint32_t version = get_u32();
  if (version != 1) throw std::runtime_error("unsupported ngram file version");
  int order = static_cast<int>(get_u32());
  double alpha = std::bit_cast<double>(get_u64());
  int vocab = static_cast<int>(get_u32());
  NgramModel m(order, alpha, vocab);
  uint64_t n = get_u64();
  m.pair_counts_.reserve(n);
  for (uint64_t i = 0; i < n; ++i) {
    uint64_t key = get_u64();
    uint32_t cnt = get_u32();
    m.pair_counts_[key] = cnt;
    m.ctx_totals_[key >> 9] += cnt;
  }
  if (!in) throw std::runtime_error("truncated ngram file");
  return m;
}

}  // namespace sscc::model
