#include <cmath>

#include "doctest.h"
#include "sscc/corpus.hpp"
#include "sscc/entropy.hpp"
#include "sscc/metrics.hpp"
#include "sscc/source_model.hpp"
#include "sscc/util.hpp"

using namespace sscc;
using namespace sscc::eval;

TEST_CASE("bleu identity") {
  for (int n = 1; n <= 4; ++n) {
    CHECK(bleu("the cat sat on the mat", "the cat sat on the mat", n) == doctest::Approx(1.0));
    CHECK(bleu("hi", "hi", n) == doctest::Approx(1.0));  // shorter than n: orders skipped
  }
}

TEST_CASE("bleu with disjoint vocabularies is at the smoothing floor") {
  double b = bleu("alpha beta gamma", "delta epsilon zeta", 1);
  CHECK(b <= 1e-9 + 1e-12);
  CHECK(b >= 0.0);
}

TEST_CASE("bleu brevity penalty: hand-computed example") {
  // ref "the cat sat" (3 words), hyp "the cat" (2 words):
  // unigram precision 2/2, BP = exp(1 - 3/2)
  double b = bleu("the cat sat", "the cat", 1);
  CHECK(b == doctest::Approx(std::exp(1.0 - 1.5)).epsilon(1e-9));
  CHECK(b == doctest::Approx(0.606531).epsilon(1e-5));
}

TEST_CASE("bleu clips repeated n-grams") {
  // hyp repeats "the" 4x but ref has it twice -> clipped precision 2/4
  double b = bleu("the man saw the dog", "the the the the", 1);
  CHECK(b == doctest::Approx(std::exp(1.0 - 5.0 / 4.0) * 0.5).epsilon(1e-9));
}

TEST_CASE("bleu edge cases") {
  CHECK_THROWS(bleu("", "something", 1));
  CHECK_THROWS(bleu("...", "something", 1));  // punctuation only -> no words
  CHECK(bleu("reference text", "", 4) == 0.0);
  CHECK_THROWS(bleu("a b", "a b", 5));
  // case and punctuation insensitivity
  CHECK(bleu("The cat, sat!", "the cat sat", 1) == doctest::Approx(1.0));
}

TEST_CASE("ber") {
  Bitstream a = Bitstream::from_string("0000000");
  Bitstream b = Bitstream::from_string("1111111");
  CHECK(ber(a, a) == 0.0);
  CHECK(ber(a, b) == 1.0);
  Bitstream c = Bitstream::from_string("0000000000000000000000000000000000000000000000000");
  Bitstream d = c;
  d[7] = 1;
  CHECK(ber(c, d) == doctest::Approx(1.0 / 49));
  CHECK_THROWS(ber(a, c));
}

TEST_CASE("compression stats: uniform model costs about log2(258) bits/byte") {
  model::UniformModel m(corpus::kVocabSize);
  entropy::AcConfig cfg;
  Rng rng(2);
  std::string s;
  for (int i = 0; i < 400; ++i) s.push_back(static_cast<char>(rng.below(256)));
  Bitstream bits = entropy::ac_encode(corpus::tokenize(s), m, cfg);
  auto st = compression_stats(s, bits);
  CHECK(st.source_bytes == 400);
  CHECK(st.payload_bits == bits.size());
  // (N+1)/N * log2(258) plus flush -> slightly above 8.01
  CHECK(st.bits_per_byte > 7.9);
  CHECK(st.bits_per_byte < 8.3);
}

TEST_CASE("skewed unigram source beats 8 bits/byte under huffman") {
  std::string text;
  Rng rng(3);
  const std::string alphabet = "eeeeeettttaaooiinnss hhrrlldd";
  for (int i = 0; i < 5000; ++i) text.push_back(alphabet[rng.below(alphabet.size())]);
  std::vector<uint64_t> freqs(corpus::kVocabSize, 0);
  for (unsigned char ch : text) ++freqs[ch];
  freqs[corpus::kEos] = 1;
  auto table = entropy::huffman_build(freqs);
  Bitstream bits = entropy::huffman_encode(corpus::tokenize(text), table);
  auto st = compression_stats(text, bits);
  CHECK(st.bits_per_byte < 8.0);
}

TEST_CASE("mean_ci") {
  auto mc = mean_ci({1.0, 1.0, 1.0, 1.0});
  CHECK(mc.mean == doctest::Approx(1.0));
  CHECK(mc.ci95 == doctest::Approx(0.0));
  auto mc2 = mean_ci({0.0, 1.0});
  CHECK(mc2.mean == doctest::Approx(0.5));
  CHECK(mc2.ci95 > 0.0);
}
