#pragma once

#include <complex>
#include <cstddef>
#include <string>
#include <vector>

namespace rffi {

using Sample = std::complex<double>;

// LoRa physical-layer settings for preamble synthesis. Carrier frequency and
// coding rate are carried as metadata only; everything here is complex baseband.
struct LoraConfig {
    double carrier_freq_hz = 915e6;
    double bandwidth_hz = 62.5e3;
    int spreading_factor = 10;
    double sample_rate_hz = 1e6;
    int preamble_symbols = 10;
    std::string coding_rate = "4/5";

    // Throws ValidationError when any invariant is violated.
    void validate() const;
    double symbol_duration_s() const;
    std::size_t samples_per_symbol() const;
    std::size_t preamble_samples() const { return samples_per_symbol() * static_cast<std::size_t>(preamble_symbols); }
};

struct ComplexSignal {
    std::vector<Sample> samples;
    double sample_rate_hz = 0.0;

    std::size_t size() const noexcept { return samples.size(); }
    double energy() const noexcept;
    bool is_finite() const noexcept;
};

// A consecutive high-power / low-power transmission of the same preamble.
struct PacketPair {
    ComplexSignal high;
    ComplexSignal low;
    std::size_t gap_samples = 0;
    std::string device_id;
};

// One CSS upchirp sweeping -B/2 to +B/2 with phase starting at zero.
ComplexSignal upchirp(const LoraConfig& config);

// K identical upchirps back to back.
ComplexSignal build_preamble(const LoraConfig& config);

// Number of full STFT frames of length `window` at hop `hop` over the preamble.
std::size_t frame_count(const LoraConfig& config, std::size_t window, std::size_t hop);
std::size_t frame_count(std::size_t signal_length, std::size_t window, std::size_t hop);

// Ideal pair: both halves are the clean preamble.
PacketPair make_packet_pair(const LoraConfig& config, std::string device_id, std::size_t gap_samples);

}  // namespace rffi
