#include "sscc/fec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "sscc/util.hpp"

namespace sscc::fec {

void LdpcCode::finalize() {
  const int rows = n - k;
  if (static_cast<int>(h.size()) != rows) throw std::invalid_argument("LdpcCode: bad H row count");
  for (const auto& r : h)
    if (static_cast<int>(r.size()) != n) throw std::invalid_argument("LdpcCode: bad H row length");
  if (static_cast<int>(p.size()) != k) throw std::invalid_argument("LdpcCode: bad P row count");
  for (const auto& r : p)
    if (static_cast<int>(r.size()) != rows) throw std::invalid_argument("LdpcCode: bad P row length");
  row_cols.assign(rows, {});
  col_rows.assign(n, {});
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < n; ++c)
      if (h[r][c]) {
        row_cols[r].push_back(c);
        col_rows[c].push_back(r);
      }
}

namespace {

using RowMask = uint64_t;  // 49 columns fit in one word

int gf2_rank(std::vector<RowMask> rows, int ncols) {
  int rank = 0;
  for (int c = 0; c < ncols && rank < static_cast<int>(rows.size()); ++c) {
    RowMask bit = RowMask(1) << c;
    int pivot = -1;
    for (int r = rank; r < static_cast<int>(rows.size()); ++r)
      if (rows[r] & bit) {
        pivot = r;
        break;
      }
    if (pivot < 0) continue;
    std::swap(rows[rank], rows[pivot]);
    for (int r = 0; r < static_cast<int>(rows.size()); ++r)
      if (r != rank && (rows[r] & bit)) rows[r] ^= rows[rank];
    ++rank;
  }
  return rank;
}

int64_t four_cycle_count(const std::vector<uint64_t>& col_masks) {
  int64_t cycles = 0;
  for (size_t i = 0; i < col_masks.size(); ++i)
    for (size_t j = i + 1; j < col_masks.size(); ++j) {
      int ov = __builtin_popcountll(col_masks[i] & col_masks[j]);
      cycles += ov * (ov - 1) / 2;
    }
  return cycles;
}

struct Candidate {
  std::vector<std::vector<uint8_t>> h;
  std::vector<uint64_t> col_masks;
  int64_t cycles = 0;
};

std::optional<Candidate> draw_candidate(Rng& rng, int n, int rows, int col_weight) {
  Candidate cand;
  cand.h.assign(rows, std::vector<uint8_t>(n, 0));
  cand.col_masks.assign(n, 0);
  std::vector<int> row_degree(rows, 0);
  std::set<uint64_t> seen;
  for (int c = 0; c < n; ++c) {
    uint64_t mask = 0;
    for (int w = 0; w < col_weight; ++w) {
      // among rows not already used by this column, prefer the least loaded
      int best = -1;
      int best_deg = 1 << 30;
      int ties = 0;
      for (int r = 0; r < rows; ++r) {
        if (mask & (uint64_t(1) << r)) continue;
        if (row_degree[r] < best_deg) {
          best_deg = row_degree[r];
          best = r;
          ties = 1;
        } else if (row_degree[r] == best_deg) {
          // reservoir pick among equal-degree rows
          ++ties;
          if (rng.below(ties) == 0) best = r;
        }
      }
      mask |= uint64_t(1) << best;
      ++row_degree[best];
    }
    if (!seen.insert(mask).second) return std::nullopt;  // duplicate column -> weight-2 codeword
    cand.col_masks[c] = mask;
    for (int r = 0; r < rows; ++r)
      if (mask & (uint64_t(1) << r)) cand.h[r][c] = 1;
  }
  cand.cycles = four_cycle_count(cand.col_masks);
  return cand;
}

}  // namespace

LdpcCode ldpc_construct(uint64_t seed, int tries) {
  const int n = 49, k = 24, rows = n - k;
  Rng rng(seed);
  std::optional<Candidate> best;
  int attempts = 0;
  for (int t = 0; t < tries; ++t) {
    ++attempts;
    auto cand = draw_candidate(rng, n, rows, 3);
    if (!cand) continue;
    std::vector<RowMask> hrows(rows, 0);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < n; ++c)
        if (cand->h[r][c]) hrows[r] |= RowMask(1) << c;
    if (gf2_rank(hrows, n) != rows) continue;
    if (!best || cand->cycles < best->cycles) best = std::move(cand);
  }
  if (!best) throw std::runtime_error("ldpc_construct: no valid candidate within retry cap");

  // Systematize: pick 25 independent pivot columns, move them to the back.
  std::vector<RowMask> work(rows, 0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < n; ++c)
      if (best->h[r][c]) work[r] |= RowMask(1) << c;
  std::vector<int> pivot_cols;
  {
    std::vector<RowMask> elim = work;
    int r = 0;
    for (int c = 0; c < n && r < rows; ++c) {
      RowMask bit = RowMask(1) << c;
      int pr = -1;
      for (int rr = r; rr < rows; ++rr)
        if (elim[rr] & bit) {
          pr = rr;
          break;
        }
      if (pr < 0) continue;
      std::swap(elim[r], elim[pr]);
      for (int rr = 0; rr < rows; ++rr)
        if (rr != r && (elim[rr] & bit)) elim[rr] ^= elim[r];
      pivot_cols.push_back(c);
      ++r;
    }
    if (static_cast<int>(pivot_cols.size()) != rows)
      throw std::runtime_error("ldpc_construct: systematization failed");
  }

  std::vector<int> perm;  // stored position -> raw column
  {
    std::vector<uint8_t> is_pivot(n, 0);
    for (int c : pivot_cols) is_pivot[c] = 1;
    for (int c = 0; c < n; ++c)
      if (!is_pivot[c]) perm.push_back(c);
    for (int c : pivot_cols) perm.push_back(c);
  }

  LdpcCode code;
  code.n = n;
  code.k = k;
  code.col_perm = perm;
  code.h.assign(rows, std::vector<uint8_t>(n, 0));
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < n; ++c) code.h[r][c] = best->h[r][perm[c]];

  // Reduce the permuted H to [B^-1 A | I]; P = (B^-1 A)^T.
  std::vector<RowMask> red(rows, 0);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < n; ++c)
      if (code.h[r][c]) red[r] |= RowMask(1) << c;
  for (int j = 0; j < rows; ++j) {
    int c = k + j;
    RowMask bit = RowMask(1) << c;
    int pr = -1;
    for (int r = j; r < rows; ++r)
      if (red[r] & bit) {
        pr = r;
        break;
      }
    if (pr < 0) throw std::runtime_error("ldpc_construct: pivot block not invertible");
    std::swap(red[j], red[pr]);
    for (int r = 0; r < rows; ++r)
      if (r != j && (red[r] & bit)) red[r] ^= red[j];
  }
  code.p.assign(k, std::vector<uint8_t>(rows, 0));
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < rows; ++j) code.p[i][j] = static_cast<uint8_t>((red[j] >> i) & 1);

  code.finalize();
  return code;
}

void save_code(const LdpcCode& code, const std::string& path) {
  std::ostringstream out;
  for (const auto& row : code.h) {
    for (uint8_t b : row) out << int(b);
    out << '\n';
  }
  for (size_t i = 0; i < code.col_perm.size(); ++i) out << code.col_perm[i] << (i + 1 < code.col_perm.size() ? ' ' : '\n');
  for (const auto& row : code.p) {
    for (uint8_t b : row) out << int(b);
    out << '\n';
  }
  write_text_file(path, out.str());
}

LdpcCode load_code(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open LDPC code file: " + path);
  LdpcCode code;
  const int rows = code.n - code.k;
  std::string line;
  auto read_bit_line = [&](int expected) {
    if (!std::getline(in, line)) throw std::runtime_error("truncated LDPC code file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (static_cast<int>(line.size()) != expected) throw std::runtime_error("bad row length in LDPC code file");
    std::vector<uint8_t> row(expected);
    for (int i = 0; i < expected; ++i) {
      if (line[i] != '0' && line[i] != '1') throw std::runtime_error("bad character in LDPC code file");
      row[i] = static_cast<uint8_t>(line[i] - '0');
    }
    return row;
  };
  for (int r = 0; r < rows; ++r) code.h.push_back(read_bit_line(code.n));
  if (!std::getline(in, line)) throw std::runtime_error("truncated LDPC code file");
  {
    std::istringstream ss(line);
    int x;
    while (ss >> x) code.col_perm.push_back(x);
    if (static_cast<int>(code.col_perm.size()) != code.n)
      throw std::runtime_error("bad permutation length in LDPC code file");
  }
  for (int r = 0; r < code.k; ++r) code.p.push_back(read_bit_line(rows));
  code.finalize();
  return code;
}

std::vector<uint8_t> ldpc_encode(std::span<const uint8_t> msg, const LdpcCode& code) {
  if (static_cast<int>(msg.size()) != code.k) throw std::invalid_argument("ldpc_encode: message must be K bits");
  std::vector<uint8_t> cw(code.n, 0);
  for (int i = 0; i < code.k; ++i) cw[i] = msg[i] & 1;
  const int rows = code.n - code.k;
  for (int j = 0; j < rows; ++j) {
    uint8_t parity = 0;
    for (int i = 0; i < code.k; ++i) parity ^= static_cast<uint8_t>(msg[i] & code.p[i][j]);
    cw[code.k + j] = parity;
  }
  return cw;
}

std::vector<double> bpsk_modulate(std::span<const uint8_t> bits) {
  std::vector<double> sym(bits.size());
  for (size_t i = 0; i < bits.size(); ++i) sym[i] = 1.0 - 2.0 * (bits[i] & 1);
  return sym;
}

std::vector<uint8_t> sign_to_bin(std::span<const double> symbols) {
  std::vector<uint8_t> bits(symbols.size());
  for (size_t i = 0; i < symbols.size(); ++i) bits[i] = symbols[i] < 0.0 ? 1 : 0;
  return bits;
}

namespace {

bool syndrome_clear(const std::vector<uint8_t>& bits, const LdpcCode& code) {
  for (const auto& cols : code.row_cols) {
    uint8_t s = 0;
    for (int c : cols) s ^= bits[c];
    if (s) return false;
  }
  return true;
}

double clip_llr(double x) { return std::clamp(x, -kLlrClip, kLlrClip); }

}  // namespace

BpResult bp_decode(std::span<const double> llr, const LdpcCode& code, int max_iters) {
  if (static_cast<int>(llr.size()) != code.n) throw std::invalid_argument("bp_decode: LLR length mismatch");

  BpResult res;
  res.bits.resize(code.n);
  for (int c = 0; c < code.n; ++c) res.bits[c] = llr[c] < 0.0 ? 1 : 0;
  if (syndrome_clear(res.bits, code)) {
    res.converged = true;
    res.iterations = 0;
    return res;
  }

  // edge storage indexed per (row, slot)
  const int rows = code.n - code.k;
  std::vector<std::vector<double>> msg_cr(rows), msg_rc(rows);
  for (int r = 0; r < rows; ++r) {
    msg_cr[r].assign(code.row_cols[r].size(), 0.0);
    msg_rc[r].assign(code.row_cols[r].size(), 0.0);
    for (size_t e = 0; e < code.row_cols[r].size(); ++e) msg_cr[r][e] = clip_llr(llr[code.row_cols[r][e]]);
  }

  std::vector<double> posterior(code.n, 0.0);
  for (int iter = 1; iter <= max_iters; ++iter) {
    // check update: msg_rc = 2 atanh( prod_{other} tanh(msg_cr / 2) )
    for (int r = 0; r < rows; ++r) {
      const auto& cols = code.row_cols[r];
      const size_t deg = cols.size();
      for (size_t e = 0; e < deg; ++e) {
        double prod = 1.0;
        for (size_t e2 = 0; e2 < deg; ++e2) {
          if (e2 == e) continue;
          prod *= std::tanh(0.5 * msg_cr[r][e2]);
        }
        prod = std::clamp(prod, -(1.0 - 1e-15), 1.0 - 1e-15);
        msg_rc[r][e] = clip_llr(2.0 * std::atanh(prod));
      }
    }
    // variable update + posterior
    for (int c = 0; c < code.n; ++c) posterior[c] = llr[c];
    for (int r = 0; r < rows; ++r)
      for (size_t e = 0; e < code.row_cols[r].size(); ++e) posterior[code.row_cols[r][e]] += msg_rc[r][e];
    for (int r = 0; r < rows; ++r)
      for (size_t e = 0; e < code.row_cols[r].size(); ++e)
        msg_cr[r][e] = clip_llr(posterior[code.row_cols[r][e]] - msg_rc[r][e]);

    for (int c = 0; c < code.n; ++c) res.bits[c] = posterior[c] < 0.0 ? 1 : 0;
    res.iterations = iter;
    if (syndrome_clear(res.bits, code)) {
      res.converged = true;
      return res;
    }
  }
  return res;
}

std::vector<uint8_t> extract_message(std::span<const uint8_t> codeword, const LdpcCode& code) {
  if (static_cast<int>(codeword.size()) != code.n)
    throw std::invalid_argument("extract_message: codeword must be N bits");
  return std::vector<uint8_t>(codeword.begin(), codeword.begin() + code.k);
}

size_t frame_block_count(size_t payload_bits) { return 1 + (payload_bits + 23) / 24; }

Bitstream frame_payload(const Bitstream& payload) {
  if (payload.size() > kMaxFramePayloadBits) throw std::length_error("frame_payload: payload too long");
  Bitstream msg;
  uint32_t len = static_cast<uint32_t>(payload.size());
  for (int i = 15; i >= 0; --i) msg.push_back(static_cast<int>((len >> i) & 1));
  for (int i = 0; i < 8; ++i) msg.push_back(0);
  msg.append(payload);
  while (msg.size() % 24 != 0) msg.push_back(0);
  return msg;
}

std::optional<Bitstream> deframe_payload(const Bitstream& message_bits) {
  if (message_bits.size() < 24 || message_bits.size() % 24 != 0) return std::nullopt;
  uint32_t len = 0;
  for (int i = 0; i < 16; ++i) len = (len << 1) | message_bits[i];
  if (static_cast<size_t>(len) > message_bits.size() - 24) return std::nullopt;
  return message_bits.slice(24, len);
}

}  // namespace sscc::fec
