#include "rffi/signal.hpp"

#include <cmath>
#include <numbers>

#include "rffi/errors.hpp"

namespace rffi {

void LoraConfig::validate() const
{
    require(std::isfinite(bandwidth_hz) && bandwidth_hz > 0.0, "bandwidth must be positive");
    require(std::isfinite(sample_rate_hz) && sample_rate_hz >= bandwidth_hz,
            "sample rate must be at least the bandwidth");
    require(spreading_factor >= 6 && spreading_factor <= 12, "spreading factor must be in [6, 12]");
    require(preamble_symbols >= 1, "preamble needs at least one symbol");
    const double sps = std::ldexp(1.0, spreading_factor) * sample_rate_hz / bandwidth_hz;
    const double rounded = std::round(sps);
    require(std::abs(sps - rounded) <= 1e-9 * sps && rounded >= 1.0,
            "samples per symbol (2^SF * fs / B) must be a positive integer");
}

double LoraConfig::symbol_duration_s() const
{
    return std::ldexp(1.0, spreading_factor) / bandwidth_hz;
}

std::size_t LoraConfig::samples_per_symbol() const
{
    validate();
    return static_cast<std::size_t>(std::llround(std::ldexp(1.0, spreading_factor) * sample_rate_hz / bandwidth_hz));
}

double ComplexSignal::energy() const noexcept
{
    double e = 0.0;
    for (const Sample& s : samples) {
        e += std::norm(s);
    }
    return e;
}

bool ComplexSignal::is_finite() const noexcept
{
    for (const Sample& s : samples) {
        if (!std::isfinite(s.real()) || !std::isfinite(s.imag())) {
            return false;
        }
    }
    return true;
}

ComplexSignal upchirp(const LoraConfig& config)
{
    const std::size_t n_samples = config.samples_per_symbol();
    const double bw = config.bandwidth_hz;
    const double fs = config.sample_rate_hz;
    const double period = config.symbol_duration_s();

    ComplexSignal out;
    out.sample_rate_hz = fs;
    out.samples.resize(n_samples);
    for (std::size_t n = 0; n < n_samples; ++n) {
        const double t = static_cast<double>(n) / fs;
        // f(t) = -B/2 + (B/T) t, phase is its integral.
        const double phase = 2.0 * std::numbers::pi * (-0.5 * bw * t + 0.5 * bw / period * t * t);
        out.samples[n] = std::polar(1.0, phase);
    }
    return out;
}

ComplexSignal build_preamble(const LoraConfig& config)
{
    require(config.preamble_symbols >= 1, "preamble needs at least one symbol");
    const ComplexSignal symbol = upchirp(config);
    ComplexSignal out;
    out.sample_rate_hz = symbol.sample_rate_hz;
    out.samples.reserve(symbol.size() * static_cast<std::size_t>(config.preamble_symbols));
    for (int k = 0; k < config.preamble_symbols; ++k) {
        out.samples.insert(out.samples.end(), symbol.samples.begin(), symbol.samples.end());
    }
    return out;
}

std::size_t frame_count(std::size_t signal_length, std::size_t window, std::size_t hop)
{
    require(window >= 1, "window length must be positive");
    require(hop >= 1, "hop must be positive");
    require(signal_length >= window, "signal is shorter than the STFT window");
    return (signal_length - window) / hop + 1;
}

std::size_t frame_count(const LoraConfig& config, std::size_t window, std::size_t hop)
{
    return frame_count(config.preamble_samples(), window, hop);
}

PacketPair make_packet_pair(const LoraConfig& config, std::string device_id, std::size_t gap_samples)
{
    PacketPair pair;
    pair.high = build_preamble(config);
    pair.low = pair.high;
    pair.gap_samples = gap_samples;
    pair.device_id = std::move(device_id);
    return pair;
}

}  // namespace rffi
