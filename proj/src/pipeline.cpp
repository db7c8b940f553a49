#include "rffi/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "rffi/errors.hpp"
#include "rffi/random.hpp"

namespace rffi {

ChannelPreset chamber_preset()
{
    ChannelPreset p{"chamber", {}};
    p.spec.taps = {Tap{0, 1.0}};
    p.spec.fading = FadingKind::kFixed;
    return p;
}

ChannelPreset indoor_preset()
{
    ChannelPreset p{"indoor", {}};
    p.spec.taps = {Tap{0, 0.6}, Tap{1, 0.3}, Tap{3, 0.1}};
    p.spec.fading = FadingKind::kSlow;
    p.spec.doppler_hz = 2.0;
    p.spec.slow_drift = 0.005;
    p.spec.snr_db = 20.0;
    return p;
}

ChannelPreset outdoor_preset()
{
    ChannelPreset p{"outdoor", {}};
    p.spec.taps = {Tap{0, 0.45}, Tap{1, 0.25}, Tap{2, 0.15}, Tap{3, 0.10}, Tap{4, 0.05}};
    p.spec.fading = FadingKind::kSlow;
    p.spec.doppler_hz = 5.0;
    p.spec.slow_drift = 0.01;
    p.spec.snr_db = 15.0;
    return p;
}

ChannelPreset fast_preset(double doppler_hz)
{
    ChannelPreset p{"fast", {}};
    p.spec.taps = {Tap{0, 0.6}, Tap{1, 0.3}, Tap{3, 0.1}};
    p.spec.fading = FadingKind::kFast;
    p.spec.doppler_hz = doppler_hz;
    p.spec.snr_db = 20.0;
    return p;
}

ChannelPreset preset_by_name(const std::string& name)
{
    if (name == "chamber") return chamber_preset();
    if (name == "indoor") return indoor_preset();
    if (name == "outdoor") return outdoor_preset();
    if (name == "fast") return fast_preset();
    throw ValidationError("unknown channel preset: " + name);
}

void PipelineConfig::validate() const
{
    lora.validate();
    stft.validate();
    require(image.size >= 1, "image size must be positive");
    require(image.quotient_lo < image.quotient_hi, "quotient clip range must satisfy lo < hi");
    require(image.spectrogram_range_db > 0.0, "spectrogram range must be positive");
    require(image.ridge_fraction >= 0.0 && image.ridge_fraction < 1.0, "ridge fraction must be in [0, 1)");
    require(theta > 0.0, "theta must be positive");
    require(stft.window_len <= lora.preamble_samples(), "window longer than the preamble");
}

namespace {

constexpr std::size_t kSyncSlack = 64;

ComplexSignal slice(const ComplexSignal& s, std::size_t begin, std::size_t len)
{
    require(begin + len <= s.size(), "slice out of range");
    ComplexSignal out;
    out.sample_rate_hz = s.sample_rate_hz;
    out.samples.assign(s.samples.begin() + static_cast<std::ptrdiff_t>(begin),
                       s.samples.begin() + static_cast<std::ptrdiff_t>(begin + len));
    return out;
}

}  // namespace

DeviceWaveforms transmit_waveforms(const PipelineConfig& config, const DeviceProfile& device)
{
    const ComplexSignal preamble = apply_tx_filter(build_preamble(config.lora), device.tx_ripple);
    return {device.device_id, apply_pa(preamble, device, PowerLevel::kHigh),
            apply_pa(preamble, device, PowerLevel::kLow)};
}

ReceivedPair receive_pair(const PipelineConfig& config, const DeviceProfile& device, const ChannelSpec& channel,
                          std::uint64_t pair_seed)
{
    return receive_pair(config, transmit_waveforms(config, device), channel, pair_seed);
}

ReceivedPair receive_pair(const PipelineConfig& config, const DeviceWaveforms& tx, const ChannelSpec& channel,
                          std::uint64_t pair_seed)
{
    const LoraConfig& lora = config.lora;
    const std::size_t len = lora.preamble_samples();
    require(tx.high.size() == len && tx.low.size() == len, "waveforms do not match the preamble length");
    const std::size_t sps = lora.samples_per_symbol();
    const std::size_t gap = config.gap();

    Rng rng(derive_seed(pair_seed, {0x1ead}));
    const std::size_t lead = static_cast<std::size_t>(rng.below(config.max_lead + 1));

    ComplexSignal burst;
    burst.sample_rate_hz = lora.sample_rate_hz;
    burst.samples.assign(lead + 2 * len + gap + kSyncSlack + config.max_lead, Sample{});
    std::copy(tx.high.samples.begin(), tx.high.samples.end(), burst.samples.begin() + static_cast<std::ptrdiff_t>(lead));
    std::copy(tx.low.samples.begin(), tx.low.samples.end(),
              burst.samples.begin() + static_cast<std::ptrdiff_t>(lead + len + gap));

    ChannelSpec spec = channel;
    spec.seed = derive_seed(pair_seed, {0xc4a7});
    spec.sample_rate_hz = lora.sample_rate_hz;
    const ChannelRealization real = realize(spec, burst.size() + spec.max_delay());
    const ComplexSignal rx = apply_channel(burst, real, spec);

    const ComplexSignal chirp = upchirp(lora);
    ReceivedPair out;
    out.lead = lead;
    // The high packet starts within the lead window; the low packet one
    // preamble plus gap later.
    out.offset_high = synchronize(slice(rx, 0, config.max_lead + spec.max_delay() + sps), chirp);
    const std::size_t nominal_low = out.offset_high + len + gap;
    const std::size_t search_lo = nominal_low > kSyncSlack ? nominal_low - kSyncSlack : 0;
    const std::size_t search_len = std::min(2 * kSyncSlack + sps, rx.size() - search_lo);
    out.offset_low = search_lo + synchronize(slice(rx, search_lo, search_len), chirp);

    ComplexSignal pre_h = extract_preamble(rx, out.offset_high, lora);
    ComplexSignal pre_l = extract_preamble(rx, out.offset_low, lora);
    const double scale = std::sqrt(0.5 * (pre_h.energy() + pre_l.energy()) / static_cast<double>(len));
    require(scale > 0.0, "received pair has no energy");
    for (Sample& s : pre_h.samples) s /= scale;
    for (Sample& s : pre_l.samples) s /= scale;

    out.high = stft(pre_h, config.stft, PowerLevel::kHigh);
    out.low = stft(pre_l, config.stft, PowerLevel::kLow);
    return out;
}

EnrollmentRecord enroll_device(const PipelineConfig& config, const DeviceWaveforms& tx, std::uint64_t seed)
{
    const ReceivedPair pair = receive_pair(config, tx, chamber_preset().spec, seed);
    return enroll(tx.device_id, pair.high, pair.low);
}

namespace {

template <typename T>
Matrix<T> crop(const PipelineConfig& config, const Matrix<T>& m)
{
    if (!config.image.band_crop) return m;
    return occupied_band(m, config.lora.bandwidth_hz, config.lora.sample_rate_hz);
}

}  // namespace

FingerprintImage quotient_image(const PipelineConfig& config, const ReceivedPair& pair)
{
    const ComplexMatrix low = crop(config, pair.low.bins);
    RealMatrix db = to_db(quotient(crop(config, pair.high.bins), low)).values;
    if (config.image.ridge_fraction > 0.0) {
        // Column peaks over the full band so cropping does not change the mask.
        const ComplexMatrix& full = pair.low.bins;
        for (std::size_t m = 0; m < full.cols(); ++m) {
            double peak = 0.0;
            for (std::size_t w = 0; w < full.rows(); ++w) peak = std::max(peak, std::norm(full(w, m)));
            const double cut = config.image.ridge_fraction * config.image.ridge_fraction * peak;
            for (std::size_t w = 0; w < low.rows(); ++w)
                if (std::norm(low(w, m)) < cut) db(w, m) = config.image.quotient_lo;
        }
    }
    FingerprintImage img = render_image(db, config.image.size, config.image.size, config.image.quotient_lo,
                                        config.image.quotient_hi);
    img.kind = FeatureKind::kQuotient;
    return img;
}

FingerprintImage spectrogram_image(const PipelineConfig& config, const ReceivedPair& pair)
{
    RealMatrix db = spectrogram_db(Spectrogram{crop(config, pair.high.bins), pair.high.config, PowerLevel::kHigh});
    const double peak = max_value(db);
    for (double& v : db.values()) v -= peak;
    FingerprintImage img =
        render_image(db, config.image.size, config.image.size, -config.image.spectrogram_range_db, 0.0);
    img.kind = FeatureKind::kSpectrogram;
    return img;
}

FingerprintImage feature_image(const PipelineConfig& config, const ReceivedPair& pair, FeatureKind kind)
{
    return kind == FeatureKind::kQuotient ? quotient_image(config, pair) : spectrogram_image(config, pair);
}

}  // namespace rffi
