#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "sscc/corpus.hpp"

namespace sscc::model {

// Next-token probability source shared by the arithmetic encoder and decoder.
// next_pmf must be deterministic in the prefix: the decoder replays exactly
// the PMF sequence the encoder consumed.
//
// Coders call begin_stream() once per stream and then extend the prefix one
// token at a time, which lets stateful implementations keep incremental
// caches. Implementations must still produce the same distribution for a
// prefix however it was reached.
class SourceModel {
 public:
  virtual ~SourceModel() = default;
  virtual int vocab_size() const = 0;
  virtual void begin_stream() {}
  virtual std::vector<double> next_pmf(std::span<const int32_t> prefix) = 0;
};

class UniformModel final : public SourceModel {
 public:
  explicit UniformModel(int vocab_size);
  int vocab_size() const override { return vocab_; }
  std::vector<double> next_pmf(std::span<const int32_t> prefix) override;

 private:
  int vocab_;
};

// Fixed i.i.d. distribution; test fixture for coder bounds.
class IidModel final : public SourceModel {
 public:
  explicit IidModel(std::vector<double> probs);
  int vocab_size() const override { return static_cast<int>(probs_.size()); }
  std::vector<double> next_pmf(std::span<const int32_t> prefix) override;

 private:
  std::vector<double> probs_;
};

// Count-based n-gram model with additive smoothing and backoff to the longest
// observed context:
//   p(t | ctx) = (count(ctx,t) + alpha) / (total(ctx) + alpha * V)
// falling back to the next shorter context whenever total(ctx) == 0. Contexts
// are BOS-left-padded so every position sees a full-length context.
class NgramModel final : public SourceModel {
 public:
  NgramModel(int order, double alpha, int vocab_size = corpus::kVocabSize);

  void fit(const std::vector<std::string>& sentences);

  int vocab_size() const override { return vocab_; }
  std::vector<double> next_pmf(std::span<const int32_t> prefix) override;

  int order() const { return order_; }
  double alpha() const { return alpha_; }

  // Average model cross-entropy over sentences, in bits per source byte.
  double bits_per_byte(const std::vector<std::string>& sentences) const;

  void save(const std::string& path) const;
  static NgramModel load(const std::string& path);

 private:
  std::vector<double> pmf_for_context(std::span<const int32_t> ctx) const;
  void observe(std::span<const int32_t> ctx, int32_t token);

  int order_;
  double alpha_;
  int vocab_;
  std::unordered_map<uint64_t, uint32_t> pair_counts_;  // (ctx, token) -> count
  std::unordered_map<uint64_t, uint32_t> ctx_totals_;   // ctx -> sum of counts
};

}  // namespace sscc::model
