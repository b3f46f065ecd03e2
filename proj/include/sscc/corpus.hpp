#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace sscc::corpus {

// Byte-level vocabulary: ids 0..255 are raw byte values, plus two specials.
inline constexpr int32_t kBos = 256;
inline constexpr int32_t kEos = 257;
inline constexpr int kVocabSize = 258;

using Tokens = std::vector<int32_t>;

// Maps each byte to its own token id and appends EOS. Total on all inputs.
Tokens tokenize(const std::string& text);

// Exact inverse of tokenize. Throws on BOS anywhere or EOS before the final
// position; a trailing EOS is optional.
std::string detokenize(const Tokens& tokens);

// Reconstruction path for corrupted decodes: keeps byte tokens, stops at the
// first EOS, silently drops anything else.
std::string detokenize_lenient(const Tokens& tokens);

struct CorpusSplit {
  std::vector<std::string> train, val, test;
  uint64_t seed = 0;
  std::string shuffle_algo;  // recorded so the split is reproducible
};

// Sentence extraction: lines are split at {. ! ?} followed by whitespace (or
// end of line), fragments trimmed, empties dropped.
std::vector<std::string> split_sentences(const std::string& raw);

// Split -> dedupe (first occurrence wins) -> seeded shuffle -> 80/10/10.
// Throws if fewer than 10 sentences survive dedup.
CorpusSplit prepare_corpus(const std::string& raw, uint64_t seed);

// Three text files (train.txt/val.txt/test.txt, one sentence per line) plus
// meta.json with seed, shuffle algorithm and counts.
void save_split(const CorpusSplit& split, const std::string& dir);
CorpusSplit load_split(const std::string& dir);

}  // namespace sscc::corpus
