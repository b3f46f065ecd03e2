#include "sscc/channel.hpp"

#include <cmath>
#include <stdexcept>

namespace sscc::channel {

ChannelKind channel_kind_from_string(const std::string& s) {
  if (s == "awgn") return ChannelKind::kAwgn;
  if (s == "rayleigh") return ChannelKind::kRayleigh;
  throw std::invalid_argument("unknown channel kind: " + s);
}

EnergyMode energy_mode_from_string(const std::string& s) {
  if (s == "per-symbol") return EnergyMode::kPerSymbol;
  if (s == "fixed-total") return EnergyMode::kFixedTotal;
  throw std::invalid_argument("unknown energy mode: " + s);
}

std::string to_string(ChannelKind k) { return k == ChannelKind::kAwgn ? "awgn" : "rayleigh"; }
std::string to_string(EnergyMode m) { return m == EnergyMode::kPerSymbol ? "per-symbol" : "fixed-total"; }

SigmaAmp snr_to_sigma(double snr_db, EnergyMode mode, size_t n, double n_ref) {
  if (n < 1) throw std::invalid_argument("snr_to_sigma: n must be >= 1");
  SigmaAmp out;
  out.sigma2 = std::pow(10.0, -snr_db / 10.0);
  out.amplitude = 1.0;
  if (mode == EnergyMode::kFixedTotal) {
    if (!(n_ref > 0.0)) throw std::invalid_argument("snr_to_sigma: fixed-total mode needs n_ref > 0");
    out.amplitude = std::sqrt(n_ref / static_cast<double>(n));
  }
  return out;
}

Channel::Output Channel::transmit(std::span<const double> xs, double amplitude, double sigma2) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("Channel::transmit: sigma2 must be > 0");
  Output out;
  out.h = 1.0;
  if (kind_ == ChannelKind::kRayleigh) {
    // Rayleigh magnitude with scale 1/sqrt(2): unit mean-square gain.
    double u = fade_.uniform01();
    out.h = std::sqrt(-std::log(u));
  }
  const double sigma = std::sqrt(sigma2);
  out.y.resize(xs.size());
  for (size_t i = 0; i < xs.size(); ++i) out.y[i] = out.h * amplitude * xs[i] + sigma * noise_.gaussian();
  return out;
}

std::vector<double> compute_llr(std::span<const double> y, double h, double sigma2, double amplitude) {
  if (!(sigma2 > 0.0)) throw std::invalid_argument("compute_llr: sigma2 must be > 0");
  std::vector<double> llr(y.size());
  const double scale = 2.0 * amplitude * h / sigma2;
  for (size_t i = 0; i < y.size(); ++i) llr[i] = scale * y[i];
  return llr;
}

}  // namespace sscc::channel
