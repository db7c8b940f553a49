#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "rffi/channel.hpp"
#include "rffi/fingerprint.hpp"
#include "rffi/pipeline.hpp"
#include "rffi/receiver.hpp"

// Channel-cancellation oracles for the quotient feature.
namespace oracles {

struct Pair {
    rffi::Spectrogram high, low;
};

// PA outputs of one device pushed through a noiseless channel and the STFT.
inline Pair through(const rffi::DeviceWaveforms& tx, const rffi::ChannelSpec& c)
{
    const rffi::ChannelRealization r = rffi::realize(c, tx.high.size() + c.max_delay());
    rffi::ComplexSignal h = rffi::convolve_channel(tx.high, r, c), l = rffi::convolve_channel(tx.low, r, c);
    h.samples.resize(tx.high.size());
    l.samples.resize(tx.low.size());
    return {rffi::stft(h, rffi::StftConfig{}), rffi::stft(l, rffi::StftConfig{})};
}

// Same, through one fixed complex gain.
inline Pair through_gain(const rffi::DeviceWaveforms& tx, rffi::Sample g)
{
    rffi::ChannelRealization r;
    r.gains = {{g}};
    r.duration = 1;
    const rffi::ChannelSpec flat;
    return {rffi::stft(rffi::apply_channel(tx.high, r, flat), rffi::StftConfig{}),
            rffi::stft(rffi::apply_channel(tx.low, r, flat), rffi::StftConfig{})};
}

inline rffi::RealMatrix quotient_db(const Pair& p)
{
    return rffi::to_db(rffi::quotient(p.high, p.low)).values;
}

// Largest |dQ| over elements whose low-power operands both clear the dB
// floor; below it the bins hold FFT rounding residue, not signal.
inline double masked_gap(const Pair& a, const Pair& b)
{
    const rffi::RealMatrix qa = quotient_db(a), qb = quotient_db(b);
    const rffi::RealMatrix la = rffi::spectrogram_db(a.low), lb = rffi::spectrogram_db(b.low);
    double worst = 0.0;
    for (std::size_t i = 0; i < qa.size(); ++i)
        if (la.values()[i] > rffi::kDbFloor && lb.values()[i] > rffi::kDbFloor)
            worst = std::max(worst, std::abs(qa.values()[i] - qb.values()[i]));
    return worst;
}

// Median |dQ| over ridge bins of the reference: low-power magnitude above
// 10% of its column peak.
inline double ridge_median_gap(const Pair& p, const Pair& ref)
{
    const rffi::RealMatrix q = quotient_db(p), q_ref = quotient_db(ref);
    std::vector<double> diffs;
    for (std::size_t m = 0; m < ref.low.frames(); ++m) {
        double peak = 0.0;
        for (std::size_t w = 0; w < ref.low.bins.rows(); ++w) peak = std::max(peak, std::abs(ref.low.bins(w, m)));
        for (std::size_t w = 0; w < ref.low.bins.rows(); ++w)
            if (std::abs(ref.low.bins(w, m)) > 0.1 * peak) diffs.push_back(std::abs(q(w, m) - q_ref(w, m)));
    }
    if (diffs.empty()) return INFINITY;
    std::nth_element(diffs.begin(), diffs.begin() + diffs.size() / 2, diffs.end());
    return diffs[diffs.size() / 2];
}

inline rffi::DeviceWaveforms device_waveforms(std::uint64_t seed)
{
    const auto pop = rffi::sample_device_population(1, rffi::SalehParams{}, 0.02, seed);
    return rffi::transmit_waveforms(rffi::PipelineConfig{}, pop.front());
}

inline rffi::ChannelSpec short_multipath(std::uint64_t seed)
{
    rffi::ChannelSpec c;
    c.taps = {{0, 0.6}, {2, 0.3}, {4, 0.1}};
    c.fading = rffi::FadingKind::kStatic;
    c.seed = seed;
    return c;
}

}  // namespace oracles
