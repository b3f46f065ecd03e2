#include <cmath>

#include "doctest.h"
#include "sscc/corpus.hpp"
#include "sscc/entropy.hpp"
#include "sscc/source_model.hpp"
#include "sscc/util.hpp"
#include "test_support.hpp"

using namespace sscc;
using namespace sscc::model;

namespace {

void check_valid_pmf(const std::vector<double>& p, int v) {
  REQUIRE(static_cast<int>(p.size()) == v);
  double sum = 0;
  for (double x : p) {
    CHECK(x >= 0.0);
    sum += x;
  }
  CHECK(std::abs(sum - 1.0) < 1e-6);
}

}  // namespace

TEST_CASE("uniform model") {
  UniformModel m(258);
  auto p = m.next_pmf(std::vector<int32_t>{});
  check_valid_pmf(p, 258);
  for (double x : p) CHECK(x == doctest::Approx(1.0 / 258).epsilon(1e-12));
  auto p2 = m.next_pmf(std::vector<int32_t>{5, 6, 7});
  CHECK(p == p2);  // deterministic, context-free
}

TEST_CASE("uniform model AC codelength matches the exact-rational oracle") {
  UniformModel m(corpus::kVocabSize);
  entropy::AcConfig cfg;
  entropy::Pmf pmf = entropy::quantize_pmf(m.next_pmf(std::vector<int32_t>{}), cfg);
  Rng rng(4);
  for (int len : {10, 50, 120}) {
    std::string s;
    for (int i = 0; i < len; ++i) s.push_back(static_cast<char>(rng.below(256)));
    corpus::Tokens toks = corpus::tokenize(s);
    Bitstream bits = entropy::ac_encode(toks, m, cfg);
    std::vector<uint64_t> fs;
    std::vector<int> tb;
    for (int32_t t : toks) {
      fs.push_back(pmf.freq(t));
      tb.push_back(entropy::kPmfTotalBits);
    }
    auto bounds = testsup::ideal_codelen_bounds(fs, tb);
    // ideal ~ (len+1) * log2(258) ~ 8.01 bits/token
    CHECK(static_cast<double>(bits.size()) <= bounds.upper + 33.0);
    CHECK(static_cast<double>(bits.size()) + 2.0 >= bounds.lower);
    double per_token = static_cast<double>(bits.size()) / (len + 1);
    CHECK(per_token > 7.8);
    CHECK(per_token < 8.5);
  }
}

TEST_CASE("ngram with empty training data is uniform (pure smoothing)") {
  NgramModel m(3, 0.5, 10);
  auto p = m.next_pmf(std::vector<int32_t>{1, 2});
  check_valid_pmf(p, 10);
  for (double x : p) CHECK(x == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("counts dominate as alpha shrinks: p(b|a) -> 1 after 'abab'") {
  // 'a' is followed by 'b' twice in "abab"
  for (double alpha : {1e-3, 1e-5}) {
    NgramModel m(2, alpha);
    m.fit({"abab"});
    auto p = m.next_pmf(std::vector<int32_t>{'a'});
    CHECK(p['b'] > 2.0 / (2.0 + alpha * 258) - 1e-9);
  }
  NgramModel tight(2, 1e-7);
  tight.fit({"abab"});
  auto p = tight.next_pmf(std::vector<int32_t>{'a'});
  CHECK(p['b'] == doctest::Approx(1.0).epsilon(1e-4));
}

TEST_CASE("pmf validity on random prefixes") {
  std::vector<std::string> corpus_sents;
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    std::string s;
    for (size_t j = 0; j < 5 + rng.below(40); ++j) s.push_back(static_cast<char>('a' + rng.below(26)));
    corpus_sents.push_back(s);
  }
  NgramModel m(4, 0.2);
  m.fit(corpus_sents);
  for (int trial = 0; trial < 10000; ++trial) {
    std::vector<int32_t> prefix;
    for (size_t j = 0; j < rng.below(8); ++j)
      prefix.push_back(static_cast<int32_t>(rng.below(corpus::kVocabSize)));
    auto p = m.next_pmf(prefix);
    double sum = 0;
    bool nonneg = true;
    for (double x : p) {
      nonneg = nonneg && x >= 0.0;
      sum += x;
    }
    REQUIRE(nonneg);
    REQUIRE(std::abs(sum - 1.0) < 1e-6);
  }
}

TEST_CASE("encoder/decoder see identical pmf sequences") {
  NgramModel enc(3, 0.1);
  NgramModel dec(3, 0.1);
  std::vector<std::string> train{"the quick brown fox", "the quick blue fox"};
  enc.fit(train);
  dec.fit(train);
  std::vector<int32_t> prefix;
  corpus::Tokens toks = corpus::tokenize("the quick fox");
  enc.begin_stream();
  dec.begin_stream();
  for (int32_t t : toks) {
    CHECK(enc.next_pmf(prefix) == dec.next_pmf(prefix));
    prefix.push_back(t);
  }
}

TEST_CASE("higher order fits held-out text better on a structured corpus") {
  // sizeable synthetic corpus with strong local structure
  Rng rng(8);
  const char* stems[] = {"parliament", "commission", "council", "directive", "regulation",
                         "committee",  "agreement",  "protocol", "procedure", "amendment"};
  std::vector<std::string> train, held;
  size_t bytes = 0;
  while (bytes < 100000) {
    std::string s = "the ";
    for (int j = 0; j < 6; ++j) {
      s += stems[rng.below(10)];
      s += (j % 2) ? " of the " : " on ";
    }
    s += stems[rng.below(10)];
    s += '.';
    bytes += s.size();
    if (rng.below(10) == 0)
      held.push_back(s);
    else
      train.push_back(s);
  }
  NgramModel m1(1, 0.1), m3(3, 0.1);
  m1.fit(train);
  m3.fit(train);
  double b1 = m1.bits_per_byte(held);
  double b3 = m3.bits_per_byte(held);
  CHECK(b3 < b1);
}

TEST_CASE("ngram save/load preserves the distribution") {
  NgramModel m(3, 0.25);
  m.fit({"hello world", "hello there", "world of wonder"});
  std::string path = std::string(SSCC_BINARY_DIR) + "/ngram_test.bin";
  m.save(path);
  NgramModel loaded = NgramModel::load(path);
  CHECK(loaded.order() == 3);
  CHECK(loaded.alpha() == 0.25);
  Rng rng(14);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int32_t> prefix;
    for (size_t j = 0; j < rng.below(6); ++j)
      prefix.push_back(static_cast<int32_t>(rng.below(corpus::kVocabSize)));
    CHECK(m.next_pmf(prefix) == loaded.next_pmf(prefix));
  }
}
