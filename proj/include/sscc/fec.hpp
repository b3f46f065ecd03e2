#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sscc/bitstream.hpp"

namespace sscc::fec {

// Systematic LDPC(49,24). h is the sparse parity-check matrix used by the BP
// decoder; codewords are x = [m | m*P] with G = [I_K | P], and G H^T = 0.
struct LdpcCode {
  int n = 49;
  int k = 24;
  std::vector<std::vector<uint8_t>> h;  // (n-k) x n
  std::vector<std::vector<uint8_t>> p;  // k x (n-k)
  std::vector<int> col_perm;            // stored-column -> column of the raw construction

  std::vector<std::vector<int>> row_cols;  // check -> variable neighbors
  std::vector<std::vector<int>> col_rows;  // variable -> check neighbors

  void finalize();  // build adjacency; validates shapes
};

// Random near-regular column-weight-3 code; candidates are retried to
// minimize 4-cycles subject to full row rank and distinct nonzero columns.
LdpcCode ldpc_construct(uint64_t seed, int tries = 400);

// Golden file: one H row per line as 0/1 chars, then the column permutation
// on one line, then the P rows.
void save_code(const LdpcCode& code, const std::string& path);
LdpcCode load_code(const std::string& path);

std::vector<uint8_t> ldpc_encode(std::span<const uint8_t> msg, const LdpcCode& code);

std::vector<double> bpsk_modulate(std::span<const uint8_t> bits);   // 0 -> +1, 1 -> -1
std::vector<uint8_t> sign_to_bin(std::span<const double> symbols);  // sign(0) counts as +1

inline constexpr double kLlrClip = 30.0;

struct BpResult {
  std::vector<uint8_t> bits;
  bool converged = false;
  int iterations = 0;
};

// Sum-product decoding on the Tanner graph of code.h. LLR sign convention:
// positive means bit 0 is more likely. Returns the hard decision of the
// posterior when the syndrome never clears.
BpResult bp_decode(std::span<const double> llr, const LdpcCode& code, int max_iters = 50);

std::vector<uint8_t> extract_message(std::span<const uint8_t> codeword, const LdpcCode& code);

// ---- framing ----
//
// Long payloads ride in 24-bit blocks: the first block carries a 16-bit
// big-endian payload bit count plus 8 zero bits, then ceil(len/24) payload
// blocks, the last zero-padded.

inline constexpr size_t kFrameHeaderBits = 16;
inline constexpr size_t kMaxFramePayloadBits = 0xFFFF;

size_t frame_block_count(size_t payload_bits);

// payload -> concatenated 24-bit message blocks (header first)
Bitstream frame_payload(const Bitstream& payload);

// Inverse on the decoded message-bit stream. nullopt when the header length
// field exceeds the bits present.
std::optional<Bitstream> deframe_payload(const Bitstream& message_bits);

}  // namespace sscc::fec
