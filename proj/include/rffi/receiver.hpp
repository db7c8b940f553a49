#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "rffi/impairments.hpp"
#include "rffi/matrix.hpp"
#include "rffi/signal.hpp"

namespace rffi {

enum class WindowKind { kHann, kRectangular };

struct StftConfig {
    std::size_t window_len = 1024;
    std::size_t hop = 512;
    WindowKind window = WindowKind::kHann;

    void validate() const;
    std::vector<double> window_samples() const;
};

struct Spectrogram {
    ComplexMatrix bins;  // window_len x frames; row w is DFT bin w
    StftConfig config;
    PowerLevel power_level = PowerLevel::kHigh;

    std::size_t bins_count() const { return bins.rows(); }
    std::size_t frames() const { return bins.cols(); }
};

// Lag in [0, rx.size() - template.size()] maximizing |sum rx[lag + n] conj(t[n])|.
// Ties resolve to the smallest lag.
std::size_t synchronize(const ComplexSignal& rx, const ComplexSignal& reference);

ComplexSignal extract_preamble(const ComplexSignal& rx, std::size_t offset, const LoraConfig& config);

// Divides by the RMS magnitude so the output has unit RMS.
ComplexSignal rms_normalize(const ComplexSignal& signal);
double rms(const ComplexSignal& signal);

// Sliding-frame STFT; frame m covers samples [m R, m R + W). Partial tail frames
// are dropped.
Spectrogram stft(const ComplexSignal& signal, const StftConfig& config,
                 PowerLevel level = PowerLevel::kHigh);

// SPG1 container: 16-byte header {"SPG1", W, M, flags} then little-endian
// float32 (re, im) pairs, row-major W x M. flags bit 0 marks a low-power
// spectrogram, bit 1 a rectangular window.
void write_spectrogram(const std::filesystem::path& path, const Spectrogram& s);
Spectrogram read_spectrogram(const std::filesystem::path& path);

}  // namespace rffi
