#include "sscc/bitstream.hpp"

#include <stdexcept>

namespace sscc {

Bitstream Bitstream::slice(size_t begin, size_t count) const {
  if (begin + count > bits_.size()) throw std::out_of_range("Bitstream::slice");
  return Bitstream(std::vector<uint8_t>(bits_.begin() + begin, bits_.begin() + begin + count));
}

std::vector<uint8_t> Bitstream::serialize() const {
  if (bits_.size() > 0xFFFFFFFFull) throw std::length_error("bitstream too long");
  uint32_t n = static_cast<uint32_t>(bits_.size());
  std::vector<uint8_t> out;
  out.reserve(4 + (n + 7) / 8);
  out.push_back(static_cast<uint8_t>(n >> 24));
  out.push_back(static_cast<uint8_t>(n >> 16));
  out.push_back(static_cast<uint8_t>(n >> 8));
  out.push_back(static_cast<uint8_t>(n));
  uint8_t cur = 0;
  for (size_t i = 0; i < bits_.size(); ++i) {
    cur = static_cast<uint8_t>((cur << 1) | (bits_[i] & 1));
    if ((i & 7) == 7) {
      out.push_back(cur);
      cur = 0;
    }
  }
  if (n % 8 != 0) out.push_back(static_cast<uint8_t>(cur << (8 - n % 8)));
  return out;
}

Bitstream Bitstream::deserialize(const std::vector<uint8_t>& bytes) {
  if (bytes.size() < 4) throw std::invalid_argument("bitstream header truncated");
  uint32_t n = (uint32_t(bytes[0]) << 24) | (uint32_t(bytes[1]) << 16) | (uint32_t(bytes[2]) << 8) |
               uint32_t(bytes[3]);
  if (bytes.size() < 4 + (size_t(n) + 7) / 8) throw std::invalid_argument("bitstream payload truncated");
  std::vector<uint8_t> bits(n);
  for (uint32_t i = 0; i < n; ++i) bits[i] = (bytes[4 + i / 8] >> (7 - i % 8)) & 1;
  return Bitstream(std::move(bits));
}

std::string Bitstream::to_string() const {
  std::string s(bits_.size(), '0');
  for (size_t i = 0; i < bits_.size(); ++i) s[i] = bits_[i] ? '1' : '0';
  return s;
}

Bitstream Bitstream::from_string(const std::string& s) {
  std::vector<uint8_t> bits;
  bits.reserve(s.size());
  for (char c : s) {
    if (c == '0' || c == '1') {
      bits.push_back(static_cast<uint8_t>(c - '0'));
    } else if (c != ' ' && c != '\n' && c != '\r' && c != '\t') {
      throw std::invalid_argument("bad bit character");
    }
  }
  return Bitstream(std::move(bits));
}

}  // namespace sscc
