#include "rffi/channel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "rffi/errors.hpp"
#include "rffi/random.hpp"

namespace rffi {

namespace {

constexpr std::uint64_t kGainStream = 0x6a1;
constexpr std::uint64_t kNoiseStream = 0x4015e;

struct Oscillator {
    Sample phasor;
    Sample step;
};

// Sum-of-sinusoids process with unit mean power, advanced by phasor rotation.
// Arrival angles are stratified over [0, pi): cos is symmetric, so the full
// circle would pair oscillators at nearly the same Doppler shift.
std::vector<Sample> jakes_process(Rng& rng, double doppler_hz, double fs, int count, std::size_t n)
{
    std::vector<Oscillator> osc(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const double arrival = std::numbers::pi * (i + rng.uniform()) / count;
        const double phase = 2.0 * std::numbers::pi * rng.uniform();
        const double omega = 2.0 * std::numbers::pi * doppler_hz * std::cos(arrival) / fs;
        osc[static_cast<std::size_t>(i)] = {std::polar(1.0, phase), std::polar(1.0, omega)};
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(count));
    std::vector<Sample> out(n);
    for (std::size_t t = 0; t < n; ++t) {
        Sample sum = 0.0;
        for (auto& o : osc) {
            sum += o.phasor;
            o.phasor *= o.step;
        }
        out[t] = scale * sum;
    }
    return out;
}

Sample rayleigh_draw(Rng& rng, double power)
{
    const double sigma = std::sqrt(power / 2.0);
    const double re = rng.normal();
    const double im = rng.normal();
    return {sigma * re, sigma * im};
}

}  // namespace

const char* to_string(FadingKind kind)
{
    switch (kind) {
    case FadingKind::kFixed: return "fixed";
    case FadingKind::kStatic: return "static";
    case FadingKind::kSlow: return "slow";
    case FadingKind::kFast: return "fast";
    }
    return "unknown";
}

FadingKind fading_from_string(const std::string& name)
{
    if (name == "fixed") return FadingKind::kFixed;
    if (name == "static") return FadingKind::kStatic;
    if (name == "slow") return FadingKind::kSlow;
    if (name == "fast") return FadingKind::kFast;
    throw ValidationError("unknown fading kind: " + name);
}

void ChannelSpec::validate() const
{
    require(!taps.empty(), "channel needs at least one tap");
    double total = 0.0;
    for (std::size_t i = 0; i < taps.size(); ++i) {
        require(std::isfinite(taps[i].power) && taps[i].power >= 0.0, "tap powers must be nonnegative");
        if (i > 0) {
            require(taps[i].delay > taps[i - 1].delay, "tap delays must be strictly increasing");
        }
        total += taps[i].power;
    }
    require(std::abs(total - 1.0) <= 1e-9, "tap powers must sum to 1");
    require(std::isfinite(doppler_hz) && doppler_hz >= 0.0, "doppler must be nonnegative");
    if (fading == FadingKind::kFixed || fading == FadingKind::kStatic) {
        require(doppler_hz == 0.0, "time-invariant channels require zero doppler");
    }
    if (fading == FadingKind::kFast) {
        require(doppler_hz > 0.0, "fast fading requires a positive doppler");
    }
    require(slow_drift >= 0.0 && slow_drift <= 0.01, "slow drift is limited to 1% relative change");
    require(std::isfinite(sample_rate_hz) && sample_rate_hz > 0.0, "sample rate must be positive");
    require(oscillators >= 1, "need at least one oscillator per tap");
    if (snr_db) {
        require(std::isfinite(*snr_db), "SNR must be finite");
    }
}

std::vector<Tap> normalize_taps(std::vector<Tap> taps)
{
    double total = 0.0;
    for (const Tap& t : taps) {
        total += t.power;
    }
    require(total > 0.0, "tap powers must not all be zero");
    for (Tap& t : taps) {
        t.power /= total;
    }
    return taps;
}

ChannelRealization realize(const ChannelSpec& spec, std::size_t duration_samples)
{
    spec.validate();
    require(duration_samples >= 1, "realization duration must be positive");

    ChannelRealization real;
    real.duration = duration_samples;
    real.seed = spec.seed;
    real.gains.resize(spec.taps.size());
    for (std::size_t k = 0; k < spec.taps.size(); ++k) {
        Rng rng(derive_seed(spec.seed, {kGainStream, k}));
        const double power = spec.taps[k].power;
        switch (spec.fading) {
        case FadingKind::kFixed:
            real.gains[k] = {Sample(std::sqrt(power), 0.0)};
            break;
        case FadingKind::kStatic:
            real.gains[k] = {rayleigh_draw(rng, power)};
            break;
        case FadingKind::kSlow: {
            const Sample g0 = rayleigh_draw(rng, power);
            const double arrival = 2.0 * std::numbers::pi * rng.uniform();
            const double phase = 2.0 * std::numbers::pi * rng.uniform();
            const double omega = 2.0 * std::numbers::pi * spec.doppler_hz * std::cos(arrival) / spec.sample_rate_hz;
            const Sample z0 = std::polar(1.0, phase);
            const Sample step = std::polar(1.0, omega);
            std::vector<Sample> g(duration_samples);
            // |z - z0| <= 2, so the relative deviation never exceeds slow_drift.
            const double c = 0.5 * spec.slow_drift;
            double zr = z0.real(), zi = z0.imag();
            for (std::size_t t = 0; t < duration_samples; ++t) {
                const double dr = 1.0 + c * (zr - z0.real()), di = c * (zi - z0.imag());
                g[t] = Sample(g0.real() * dr - g0.imag() * di, g0.real() * di + g0.imag() * dr);
                const double nr = zr * step.real() - zi * step.imag();
                zi = zr * step.imag() + zi * step.real();
                zr = nr;
            }
            real.gains[k] = std::move(g);
            break;
        }
        case FadingKind::kFast: {
            std::vector<Sample> g = jakes_process(rng, spec.doppler_hz, spec.sample_rate_hz, spec.oscillators,
                                                  duration_samples);
            const double amp = std::sqrt(power);
            for (Sample& s : g) {
                s *= amp;
            }
            real.gains[k] = std::move(g);
            break;
        }
        }
    }
    return real;
}

ComplexSignal convolve_channel(const ComplexSignal& signal, const ChannelRealization& realization,
                               const ChannelSpec& spec)
{
    spec.validate();
    require(realization.gains.size() == spec.taps.size(), "realization does not match the channel taps");
    const std::size_t out_len = signal.size() + spec.max_delay();
    require(!realization.time_varying() || realization.duration >= out_len,
            "channel realization is shorter than the signal");

    ComplexSignal out;
    out.sample_rate_hz = signal.sample_rate_hz;
    out.samples.assign(out_len, Sample{});
    for (std::size_t k = 0; k < spec.taps.size(); ++k) {
        const std::size_t d = spec.taps[k].delay;
        if (!realization.time_varying()) {
            const Sample g = realization.gains[k].front();
            for (std::size_t i = 0; i < signal.size(); ++i) {
                out.samples[i + d] += g * signal.samples[i];
            }
        } else {
            const auto& g = realization.gains[k];
            for (std::size_t i = 0; i < signal.size(); ++i) {
                out.samples[i + d] += g[i + d] * signal.samples[i];
            }
        }
    }
    return out;
}

ComplexSignal apply_channel(const ComplexSignal& signal, const ChannelRealization& realization,
                            const ChannelSpec& spec)
{
    ComplexSignal out = convolve_channel(signal, realization, spec);
    if (!spec.snr_db || out.size() == 0) {
        return out;
    }
    const double power = out.energy() / static_cast<double>(out.size());
    if (power == 0.0) {
        return out;
    }
    const double noise_power = power / std::pow(10.0, *spec.snr_db / 10.0);
    const double sigma = std::sqrt(noise_power / 2.0);
    Rng rng(derive_seed(spec.seed, {kNoiseStream}));
    for (Sample& s : out.samples) {
        const double re = rng.normal();
        const double im = rng.normal();
        s += Sample(sigma * re, sigma * im);
    }
    return out;
}

double snr_measure(const ComplexSignal& clean, const ComplexSignal& noisy)
{
    require(clean.size() == noisy.size(), "signals must have equal length");
    double signal_energy = 0.0;
    double noise_energy = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        signal_energy += std::norm(clean.samples[i]);
        noise_energy += std::norm(noisy.samples[i] - clean.samples[i]);
    }
    require(signal_energy > 0.0, "clean signal has zero power");
    if (noise_energy == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return 10.0 * std::log10(signal_energy / noise_energy);
}

double gain_correlation(const std::vector<Sample>& a, const std::vector<Sample>& b)
{
    require(a.size() == b.size() && !a.empty(), "gain segments must be non-empty and equal length");
    Sample inner = 0.0;
    double ea = 0.0;
    double eb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inner += a[i] * std::conj(b[i]);
        ea += std::norm(a[i]);
        eb += std::norm(b[i]);
    }
    require(ea > 0.0 && eb > 0.0, "gain segments must have nonzero energy");
    return std::abs(inner) / std::sqrt(ea * eb);
}

}  // namespace rffi
