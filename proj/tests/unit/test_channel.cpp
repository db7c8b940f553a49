#include <doctest.h>

#include <cmath>
#include <limits>

#include "rffi/channel.hpp"
#include "rffi/errors.hpp"
#include "../common/support.hpp"

using namespace rffi;

namespace {

ChannelSpec three_tap(FadingKind kind)
{
    ChannelSpec c;
    c.taps = {{0, 0.6}, {2, 0.3}, {4, 0.1}};
    c.fading = kind;
    c.seed = 21;
    return c;
}

}  // namespace

TEST_CASE("channel spec validation")
{
    ChannelSpec c;
    CHECK_NOTHROW(c.validate());
    c.taps = {};
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.taps = {{0, 0.5}, {1, 0.4}};
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.taps = {{1, 0.5}, {1, 0.5}};
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c = ChannelSpec{};
    c.fading = FadingKind::kStatic;
    c.doppler_hz = 5.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);
    c.fading = FadingKind::kFast;
    c.doppler_hz = 0.0;
    CHECK_THROWS_AS(c.validate(), ValidationError);

    const auto t = normalize_taps({{0, 2.0}, {3, 6.0}});
    CHECK(t[0].power == doctest::Approx(0.25));
    CHECK(t[1].power == doctest::Approx(0.75));
    CHECK(t[1].delay == 3);
    CHECK(fading_from_string("slow") == FadingKind::kSlow);
    CHECK_THROWS_AS(fading_from_string("medium"), ValidationError);
}

TEST_CASE("static realization is constant and repeatable")
{
    ChannelSpec c;
    c.fading = FadingKind::kStatic;
    c.seed = 77;
    const ChannelRealization a = realize(c, 5000), b = realize(c, 5000);
    CHECK_FALSE(a.time_varying());
    CHECK(a.gains == b.gains);
    CHECK(a.gain(0, 0) == a.gain(0, 4999));
    c.seed = 78;
    CHECK(realize(c, 5000).gains != a.gains);
}

TEST_CASE("identity and scalar channels")
{
    const ChannelSpec c;
    const ComplexSignal x = testing::gaussian_signal(1000, 1);
    CHECK(apply_channel(x, realize(c, x.size()), c).samples == x.samples);

    ChannelRealization r;
    r.gains = {{Sample(0.3, -1.2)}};
    r.duration = 1;
    const ComplexSignal y = apply_channel(x, r, c);
    REQUIRE(y.size() == x.size());
    for (std::size_t n = 0; n < x.size(); ++n) REQUIRE(std::abs(y.samples[n] - Sample(0.3, -1.2) * x.samples[n]) < 1e-14);

    // Commutes with scaling of the input.
    ComplexSignal x2 = x;
    for (Sample& s : x2.samples) s *= 2.5;
    const ComplexSignal y2 = apply_channel(x2, r, c);
    for (std::size_t n = 0; n < x.size(); n += 7) REQUIRE(std::abs(y2.samples[n] - 2.5 * y.samples[n]) < 1e-12);
}

TEST_CASE("impulse response shows tap gains at tap delays")
{
    const ChannelSpec c = three_tap(FadingKind::kStatic);
    ComplexSignal impulse;
    impulse.sample_rate_hz = 1e6;
    impulse.samples.assign(16, Sample{});
    impulse.samples[0] = 1.0;
    const ChannelRealization r = realize(c, impulse.size() + c.max_delay());
    const ComplexSignal y = apply_channel(impulse, r, c);
    REQUIRE(y.size() == impulse.size() + 4);
    for (std::size_t n = 0; n < y.size(); ++n) {
        Sample expect{};
        for (std::size_t k = 0; k < c.taps.size(); ++k)
            if (c.taps[k].delay == n) expect = r.gain(k, 0);
        REQUIRE(std::abs(y.samples[n] - expect) < 1e-15);
    }
}

TEST_CASE("fixed fading uses sqrt of tap power")
{
    const ChannelSpec c = three_tap(FadingKind::kFixed);
    const ChannelRealization r = realize(c, 10);
    for (std::size_t k = 0; k < c.taps.size(); ++k)
        CHECK(std::abs(r.gain(k, 0) - std::sqrt(c.taps[k].power)) < 1e-15);
}

TEST_CASE("channel is linear under a fixed realization")
{
    ChannelSpec c = three_tap(FadingKind::kSlow);
    c.doppler_hz = 3.0;
    const ComplexSignal a = testing::gaussian_signal(3000, 2), b = testing::gaussian_signal(3000, 3);
    ComplexSignal s = a;
    for (std::size_t n = 0; n < s.size(); ++n) s.samples[n] += b.samples[n];
    const ChannelRealization r = realize(c, a.size() + c.max_delay());
    const ComplexSignal ya = apply_channel(a, r, c), yb = apply_channel(b, r, c), ys = apply_channel(s, r, c);
    for (std::size_t n = 0; n < ys.size(); ++n)
        REQUIRE(std::abs(ys.samples[n] - ya.samples[n] - yb.samples[n]) < 1e-12);
}

TEST_CASE("slow fading drifts by at most one percent")
{
    ChannelSpec c = three_tap(FadingKind::kSlow);
    c.doppler_hz = 5.0;
    c.slow_drift = 0.01;
    const std::size_t n = 360000;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        c.seed = seed;
        const ChannelRealization r = realize(c, n);
        REQUIRE(r.time_varying());
        for (std::size_t k = 0; k < c.taps.size(); ++k) {
            double worst = 0.0;
            for (std::size_t t = 0; t < n; t += 101)
                worst = std::max(worst, std::abs(r.gain(k, t) - r.gain(k, 0)) / std::abs(r.gain(k, 0)));
            CHECK(worst <= 0.01 + 1e-12);
        }
    }
}

TEST_CASE("fast fading decorrelates the two halves of a pair")
{
    ChannelSpec c = three_tap(FadingKind::kFast);
    c.doppler_hz = 200.0;
    const std::size_t half = 163840;
    int below = 0;
    const int trials = 10;
    for (int s = 0; s < trials; ++s) {
        c.seed = 400 + static_cast<std::uint64_t>(s);
        const ChannelRealization r = realize(c, 2 * half);
        const std::vector<Sample>& g = r.gains[0];
        const std::vector<Sample> a(g.begin(), g.begin() + half), b(g.begin() + half, g.end());
        if (gain_correlation(a, b) < 0.5) ++below;
    }
    CHECK(below >= 9);
}

TEST_CASE("AWGN lands at the requested SNR")
{
    ChannelSpec c;
    c.snr_db = 20.0;
    c.seed = 5;
    const ComplexSignal x = testing::gaussian_signal(200000, 9);
    const ChannelRealization r = realize(c, x.size());
    const ComplexSignal clean = convolve_channel(x, r, c);
    const ComplexSignal noisy = apply_channel(x, r, c);
    CHECK(std::abs(snr_measure(clean, noisy) - 20.0) <= 0.5);
    CHECK(apply_channel(x, r, c).samples == noisy.samples);
}

TEST_CASE("SNR measurement edge cases")
{
    const ComplexSignal x = testing::gaussian_signal(100, 4);
    CHECK(snr_measure(x, x) == std::numeric_limits<double>::infinity());
    ComplexSignal z = x;
    for (Sample& s : z.samples) s = 0.0;
    CHECK_THROWS_AS(snr_measure(z, x), ValidationError);
    ComplexSignal shorter = x;
    shorter.samples.pop_back();
    CHECK_THROWS_AS(snr_measure(x, shorter), ValidationError);
}

TEST_CASE("realization shorter than a time-varying output is rejected")
{
    ChannelSpec c = three_tap(FadingKind::kFast);
    c.doppler_hz = 100.0;
    const ComplexSignal x = testing::gaussian_signal(500, 1);
    CHECK_THROWS_AS(apply_channel(x, realize(c, 100), c), ValidationError);
}
