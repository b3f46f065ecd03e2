#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sscc {

// Ordered bit vector. Length is exactly the number of bits pushed; the
// serialized form is a 32-bit big-endian bit count followed by the bits
// packed MSB-first, final byte zero-padded.
class Bitstream {
 public:
  Bitstream() = default;
  explicit Bitstream(std::vector<uint8_t> bits) : bits_(std::move(bits)) {}

  void push_back(int bit) { bits_.push_back(static_cast<uint8_t>(bit & 1)); }
  void append(const Bitstream& other) {
    bits_.insert(bits_.end(), other.bits_.begin(), other.bits_.end());
  }

  size_t size() const { return bits_.size(); }
  bool empty() const { return bits_.empty(); }
  uint8_t operator[](size_t i) const { return bits_[i]; }
  uint8_t& operator[](size_t i) { return bits_[i]; }
  const std::vector<uint8_t>& bits() const { return bits_; }

  bool operator==(const Bitstream& other) const { return bits_ == other.bits_; }

  Bitstream slice(size_t begin, size_t count) const;

  std::vector<uint8_t> serialize() const;
  static Bitstream deserialize(const std::vector<uint8_t>& bytes);

  std::string to_string() const;                 // "0101..." (tests, golden files)
  static Bitstream from_string(const std::string& s);

 private:
  std::vector<uint8_t> bits_;
};

}  // namespace sscc
