#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

#include "rffi/channel.hpp"
#include "rffi/fingerprint.hpp"
#include "rffi/impairments.hpp"
#include "rffi/receiver.hpp"
#include "rffi/signal.hpp"

namespace rffi {

// Named channel condition. The seed in `spec` is ignored; every packet pair
// gets its own.
struct ChannelPreset {
    std::string name;
    ChannelSpec spec;
};

ChannelPreset chamber_preset();
ChannelPreset indoor_preset();
ChannelPreset outdoor_preset();
// Rayleigh taps with Doppler high enough to decorrelate the two halves of a pair.
ChannelPreset fast_preset(double doppler_hz = 300.0);
ChannelPreset preset_by_name(const std::string& name);

struct ImageConfig {
    std::size_t size = 64;
    double quotient_lo = -30.0, quotient_hi = 30.0;
    double spectrogram_range_db = 80.0;  // below the per-image maximum
    bool band_crop = true;               // keep only the occupied chirp band
    // Quotient bins whose low-power magnitude is below this fraction of the
    // column peak carry only noise; they render at quotient_lo. 0 disables.
    double ridge_fraction = 0.1;
};

struct PipelineConfig {
    LoraConfig lora;
    StftConfig stft;
    ImageConfig image;
    std::size_t gap_samples = 0;  // 0 selects one symbol
    std::size_t max_lead = 256;   // random idle samples before the burst
    double theta = kDefaultTheta;

    void validate() const;
    std::size_t gap() const { return gap_samples ? gap_samples : lora.samples_per_symbol(); }
};

struct ReceivedPair {
    Spectrogram high, low;
    std::size_t lead = 0;
    std::size_t offset_high = 0, offset_low = 0;  // detected burst positions
};

// PA outputs of one device at both power levels; identical for every packet.
struct DeviceWaveforms {
    std::string device_id;
    ComplexSignal high, low;
};

DeviceWaveforms transmit_waveforms(const PipelineConfig& config, const DeviceProfile& device);

// Transmit the high/low preamble pair of `device` through `channel` (its seed
// selects the realization and noise) and run the receiver chain up to the
// two spectrograms. Both preambles share one normalization gain so the level
// difference survives.
ReceivedPair receive_pair(const PipelineConfig& config, const DeviceWaveforms& tx, const ChannelSpec& channel,
                          std::uint64_t pair_seed);
ReceivedPair receive_pair(const PipelineConfig& config, const DeviceProfile& device, const ChannelSpec& channel,
                          std::uint64_t pair_seed);

// Chamber reference correlation used by the distortion screen.
EnrollmentRecord enroll_device(const PipelineConfig& config, const DeviceWaveforms& tx, std::uint64_t seed);

FingerprintImage quotient_image(const PipelineConfig& config, const ReceivedPair& pair);
FingerprintImage spectrogram_image(const PipelineConfig& config, const ReceivedPair& pair);
FingerprintImage feature_image(const PipelineConfig& config, const ReceivedPair& pair, FeatureKind kind);

}  // namespace rffi
