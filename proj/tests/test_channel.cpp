#include <cmath>

#include "doctest.h"
#include "sscc/channel.hpp"
#include "sscc/fec.hpp"
#include "sscc/util.hpp"

using namespace sscc;
using namespace sscc::channel;

TEST_CASE("snr_to_sigma") {
  auto a = snr_to_sigma(0.0, EnergyMode::kPerSymbol, 10, 0);
  CHECK(a.sigma2 == doctest::Approx(1.0));
  CHECK(a.amplitude == 1.0);

  auto b = snr_to_sigma(3.0, EnergyMode::kPerSymbol, 10, 0);
  CHECK(b.sigma2 == doctest::Approx(std::pow(10.0, -0.3)).epsilon(1e-12));
  CHECK(b.sigma2 == doctest::Approx(0.501187).epsilon(1e-5));

  auto c = snr_to_sigma(5.0, EnergyMode::kFixedTotal, 100, 400.0);  // N = N_ref/4
  CHECK(c.amplitude == doctest::Approx(2.0));
  auto d = snr_to_sigma(5.0, EnergyMode::kFixedTotal, 400, 400.0);
  CHECK(d.amplitude == doctest::Approx(1.0));

  CHECK_THROWS(snr_to_sigma(0.0, EnergyMode::kFixedTotal, 10, 0.0));
}

TEST_CASE("noiseless limit reproduces the symbols") {
  Channel chan(ChannelKind::kAwgn, 1);
  std::vector<double> xs{1, -1, 1, 1, -1};
  auto out = chan.transmit(xs, 1.0, 1e-30);
  CHECK(out.h == 1.0);
  for (size_t i = 0; i < xs.size(); ++i) CHECK(out.y[i] == doctest::Approx(xs[i]).epsilon(1e-6));
}

TEST_CASE("awgn noise variance matches sigma2 within 2 percent") {
  Channel chan(ChannelKind::kAwgn, 7);
  const double sigma2 = 0.7;
  const size_t n = 1000000;
  std::vector<double> xs(n, 1.0);
  auto out = chan.transmit(xs, 1.0, sigma2);
  double mean = 0;
  for (double y : out.y) mean += y - 1.0;
  mean /= n;
  double var = 0;
  for (double y : out.y) var += (y - 1.0 - mean) * (y - 1.0 - mean);
  var /= n;
  CHECK(std::abs(var - sigma2) / sigma2 < 0.02);
}

TEST_CASE("rayleigh block gain: unit mean square, constant within a block") {
  Channel chan(ChannelKind::kRayleigh, 9);
  double sum_h2 = 0;
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    std::vector<double> xs{1.0};
    auto out = chan.transmit(xs, 1.0, 1e-20);
    sum_h2 += out.h * out.h;
    CHECK(out.h > 0.0);
  }
  CHECK(std::abs(sum_h2 / draws - 1.0) < 0.01);
}

TEST_CASE("fixed-total energy is invariant in payload length") {
  for (size_t n : {49ul, 98ul, 490ul}) {
    auto sa = snr_to_sigma(2.0, EnergyMode::kFixedTotal, n, 196.0);
    double total = sa.amplitude * sa.amplitude * static_cast<double>(n);  // x in {+-1}
    CHECK(total == doctest::Approx(196.0).epsilon(1e-12));
  }
}

TEST_CASE("llr formula and sign consistency") {
  std::vector<double> y{0.0, 2.0, -1.0};
  auto llr = compute_llr(y, 1.0, 1.0, 1.0);
  CHECK(llr[0] == 0.0);
  CHECK(llr[1] == doctest::Approx(4.0));
  CHECK(llr[2] == doctest::Approx(-2.0));

  // hard decision on llr signs equals sign_to_bin on y for positive h
  auto hard_llr = fec::sign_to_bin(llr);
  auto hard_y = fec::sign_to_bin(y);
  CHECK(hard_llr == hard_y);

  CHECK_THROWS(compute_llr(y, 1.0, 0.0, 1.0));
}

TEST_CASE("determinism per seed, independence across seeds") {
  std::vector<double> xs(32, 1.0);
  Channel a(ChannelKind::kRayleigh, 123), b(ChannelKind::kRayleigh, 123), c(ChannelKind::kRayleigh, 124);
  auto ya = a.transmit(xs, 1.0, 0.5);
  auto yb = b.transmit(xs, 1.0, 0.5);
  auto yc = c.transmit(xs, 1.0, 0.5);
  CHECK(ya.y == yb.y);
  CHECK(ya.h == yb.h);
  CHECK(ya.y != yc.y);
}
