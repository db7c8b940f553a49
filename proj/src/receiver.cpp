#include "rffi/receiver.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>

#include "fft.hpp"
#include "rffi/errors.hpp"

namespace rffi {

using detail::Fft;

void StftConfig::validate() const
{
    require(window_len >= 1 && std::has_single_bit(window_len), "window length must be a power of two");
    require(hop >= 1 && hop <= window_len, "hop must satisfy 1 <= R <= W");
}

std::vector<double> StftConfig::window_samples() const
{
    std::vector<double> w(window_len, 1.0);
    if (window == WindowKind::kHann) {
        // Periodic Hann.
        for (std::size_t n = 0; n < window_len; ++n) {
            w[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(n) / window_len);
        }
    }
    return w;
}

std::size_t synchronize(const ComplexSignal& rx, const ComplexSignal& reference)
{
    require(!reference.samples.empty() && reference.energy() > 0.0, "synchronization template has zero energy");
    require(rx.size() >= reference.size(), "received signal is shorter than the template");

    const std::size_t lags = rx.size() - reference.size() + 1;
    const std::size_t n = std::bit_ceil(rx.size() + reference.size());
    std::vector<Sample> a(n), b(n), fa(n), fb(n), corr(n);
    std::copy(rx.samples.begin(), rx.samples.end(), a.begin());
    std::copy(reference.samples.begin(), reference.samples.end(), b.begin());

    Fft forward(n, Fft::Direction::kForward);
    Fft inverse(n, Fft::Direction::kInverse);
    forward.execute(a, fa);
    forward.execute(b, fb);
    for (std::size_t k = 0; k < n; ++k) {
        fa[k] *= std::conj(fb[k]);
    }
    inverse.execute(fa, corr);

    std::size_t best = 0;
    double best_mag = -1.0;
    for (std::size_t lag = 0; lag < lags; ++lag) {
        const double mag = std::norm(corr[lag]);
        if (mag > best_mag) {
            best_mag = mag;
            best = lag;
        }
    }
    return best;
}

ComplexSignal extract_preamble(const ComplexSignal& rx, std::size_t offset, const LoraConfig& config)
{
    const std::size_t len = config.preamble_samples();
    require(offset <= rx.size() && rx.size() - offset >= len, "received signal does not contain a full preamble");
    ComplexSignal out;
    out.sample_rate_hz = rx.sample_rate_hz;
    out.samples.assign(rx.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                       rx.samples.begin() + static_cast<std::ptrdiff_t>(offset + len));
    return out;
}

double rms(const ComplexSignal& signal)
{
    require(!signal.samples.empty(), "cannot take the RMS of an empty signal");
    return std::sqrt(signal.energy() / static_cast<double>(signal.size()));
}

ComplexSignal rms_normalize(const ComplexSignal& signal)
{
    const double r = rms(signal);
    require(r > 0.0, "cannot normalize an all-zero signal");
    ComplexSignal out = signal;
    for (Sample& s : out.samples) {
        s /= r;
    }
    return out;
}

Spectrogram stft(const ComplexSignal& signal, const StftConfig& config, PowerLevel level)
{
    config.validate();
    const std::size_t frames = frame_count(signal.size(), config.window_len, config.hop);
    const std::size_t w_len = config.window_len;
    const std::vector<double> window = config.window_samples();

    Spectrogram s;
    s.config = config;
    s.power_level = level;
    s.bins = ComplexMatrix(w_len, frames);

    Fft fft(w_len, Fft::Direction::kForward);
    std::vector<Sample> frame(w_len), spectrum(w_len);
    for (std::size_t m = 0; m < frames; ++m) {
        const std::size_t start = m * config.hop;
        for (std::size_t n = 0; n < w_len; ++n) {
            frame[n] = signal.samples[start + n] * window[n];
        }
        fft.execute(frame, spectrum);
        for (std::size_t w = 0; w < w_len; ++w) {
            s.bins(w, m) = spectrum[w];
        }
    }
    return s;
}

namespace {

void put_u32(std::ofstream& out, std::uint32_t v)
{
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::ifstream& in)
{
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) {
        throw IoError("truncated SPG1 file");
    }
    return static_cast<std::uint32_t>(b[0]) | static_cast<std::uint32_t>(b[1]) << 8 |
           static_cast<std::uint32_t>(b[2]) << 16 | static_cast<std::uint32_t>(b[3]) << 24;
}

void put_f32(std::ofstream& out, float f)
{
    put_u32(out, std::bit_cast<std::uint32_t>(f));
}

}  // namespace

void write_spectrogram(const std::filesystem::path& path, const Spectrogram& s)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out.write("SPG1", 4);
    put_u32(out, static_cast<std::uint32_t>(s.bins.rows()));
    put_u32(out, static_cast<std::uint32_t>(s.bins.cols()));
    std::uint32_t flags = 0;
    if (s.power_level == PowerLevel::kLow) flags |= 1u;
    if (s.config.window == WindowKind::kRectangular) flags |= 2u;
    put_u32(out, flags);
    for (const Sample& v : s.bins.values()) {
        put_f32(out, static_cast<float>(v.real()));
        put_f32(out, static_cast<float>(v.imag()));
    }
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

Spectrogram read_spectrogram(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SPG1", 4) != 0) {
        throw IoError(path.string() + " is not an SPG1 file");
    }
    const std::uint32_t rows = get_u32(in);
    const std::uint32_t cols = get_u32(in);
    const std::uint32_t flags = get_u32(in);
    Spectrogram s;
    s.config.window_len = rows;
    // The container does not record the hop; half-window overlap is assumed.
    s.config.hop = rows >= 2 ? rows / 2 : 1;
    s.config.window = (flags & 2u) ? WindowKind::kRectangular : WindowKind::kHann;
    s.power_level = (flags & 1u) ? PowerLevel::kLow : PowerLevel::kHigh;
    s.bins = ComplexMatrix(rows, cols);
    for (Sample& v : s.bins.values()) {
        const float re = std::bit_cast<float>(get_u32(in));
        const float im = std::bit_cast<float>(get_u32(in));
        v = Sample(re, im);
    }
    return s;
}

}  // namespace rffi
