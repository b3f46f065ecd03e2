#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sscc/util.hpp"

namespace sscc::channel {

enum class ChannelKind { kAwgn, kRayleigh };
enum class EnergyMode { kPerSymbol, kFixedTotal };

ChannelKind channel_kind_from_string(const std::string& s);
EnergyMode energy_mode_from_string(const std::string& s);
std::string to_string(ChannelKind k);
std::string to_string(EnergyMode m);

struct SigmaAmp {
  double sigma2;     // noise variance per symbol
  double amplitude;  // transmit scale applied to +-1 symbols
};

// per-symbol: amplitude 1. fixed-total: amplitude sqrt(n_ref/n), so the total
// transmitted energy equals n_ref whatever the payload length.
SigmaAmp snr_to_sigma(double snr_db, EnergyMode mode, size_t n, double n_ref);

struct ChannelConfig {
  ChannelKind kind = ChannelKind::kAwgn;
  double snr_db = 0.0;
  EnergyMode mode = EnergyMode::kPerSymbol;
  double n_ref = 0.0;  // reference length for fixed-total mode
  uint64_t seed = 0;
};

// y = h * a * x + z. Block fading: one h per transmit() call, unit mean
// square. Noise and fading draw from independent seeded streams.
class Channel {
 public:
  Channel(ChannelKind kind, uint64_t seed)
      : kind_(kind), noise_(splitmix64(seed)), fade_(splitmix64(seed ^ 0xFAD1F6D1ull)) {}

  struct Output {
    std::vector<double> y;
    double h;
  };
  Output transmit(std::span<const double> xs, double amplitude, double sigma2);

 private:
  ChannelKind kind_;
  Rng noise_;
  Rng fade_;
};

// BPSK LLRs with the channel gain known at the receiver.
std::vector<double> compute_llr(std::span<const double> y, double h, double sigma2, double amplitude);

}  // namespace sscc::channel
