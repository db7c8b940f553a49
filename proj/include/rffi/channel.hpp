#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rffi/signal.hpp"

namespace rffi {

struct Tap {
    std::size_t delay = 0;  // samples
    double power = 1.0;     // linear, normalized over the profile
    friend bool operator==(const Tap&, const Tap&) = default;
};

// fixed: deterministic gains sqrt(power) (line of sight, no fading).
// static: one Rayleigh draw per tap, constant over the realization.
// slow: Rayleigh draw plus a bounded drift of at most `slow_drift` relative change.
// fast: Jakes sum-of-sinusoids at doppler_hz.
enum class FadingKind { kFixed, kStatic, kSlow, kFast };

const char* to_string(FadingKind kind);
FadingKind fading_from_string(const std::string& name);

struct ChannelSpec {
    std::vector<Tap> taps{Tap{}};
    FadingKind fading = FadingKind::kFixed;
    double doppler_hz = 0.0;
    std::optional<double> snr_db;  // nullopt means noiseless
    std::uint64_t seed = 0;
    double sample_rate_hz = 1e6;
    double slow_drift = 0.01;
    int oscillators = 8;

    void validate() const;
    std::size_t max_delay() const { return taps.empty() ? 0 : taps.back().delay; }
};

// Equal-weight renormalization of arbitrary tap powers; delays stay as given.
std::vector<Tap> normalize_taps(std::vector<Tap> taps);

struct ChannelRealization {
    // gains[tap][n]; constant kinds store a single entry per tap.
    std::vector<std::vector<Sample>> gains;
    std::size_t duration = 0;
    std::uint64_t seed = 0;

    bool time_varying() const { return !gains.empty() && gains.front().size() > 1; }
    Sample gain(std::size_t tap, std::size_t n) const
    {
        const auto& g = gains[tap];
        return g.size() == 1 ? g.front() : g[n];
    }
};

ChannelRealization realize(const ChannelSpec& spec, std::size_t duration_samples);

// Time-varying tapped-delay-line convolution y[n] = sum_k g_k[n] x[n - d_k],
// followed by AWGN at spec.snr_db against the mean convolved power. The
// output is max_delay samples longer than the input.
ComplexSignal apply_channel(const ComplexSignal& signal, const ChannelRealization& realization,
                            const ChannelSpec& spec);

// Only the noise-free tapped-delay-line part of apply_channel.
ComplexSignal convolve_channel(const ComplexSignal& signal, const ChannelRealization& realization,
                               const ChannelSpec& spec);

// 10 log10(sum |clean|^2 / sum |noisy - clean|^2); +inf when they are equal.
double snr_measure(const ComplexSignal& clean, const ComplexSignal& noisy);

// Normalized correlation |<a, b>| / (||a|| ||b||) between two gain segments.
double gain_correlation(const std::vector<Sample>& a, const std::vector<Sample>& b);

}  // namespace rffi
