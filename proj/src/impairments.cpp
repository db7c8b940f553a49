#include "rffi/impairments.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "fft.hpp"
#include "rffi/errors.hpp"
#include "rffi/random.hpp"

namespace rffi {

void SalehParams::validate() const
{
    require(std::isfinite(alpha_a) && std::isfinite(beta_a) && std::isfinite(alpha_phi) && std::isfinite(beta_phi),
            "Saleh parameters must be finite");
    require(alpha_a > 0.0, "alpha_a must be positive");
    require(beta_a >= 0.0, "beta_a must be nonnegative");
    require(beta_phi >= 0.0, "beta_phi must be nonnegative");
}

const char* to_string(PowerLevel level)
{
    return level == PowerLevel::kHigh ? "high" : "low";
}

double TxRipple::gain_db(double f_hz) const
{
    double db = 0.0;
    for (std::size_t k = 0; k < amp_db.size(); ++k)
        db += amp_db[k] * std::cos(2.0 * std::numbers::pi * static_cast<double>(k + 1) * f_hz / bandwidth_hz + phase[k]);
    return db;
}

void TxRipple::validate() const
{
    require(amp_db.size() == phase.size(), "ripple amplitude and phase counts differ");
    if (empty()) return;
    require(bandwidth_hz > 0.0, "ripple bandwidth must be positive");
    for (std::size_t k = 0; k < amp_db.size(); ++k)
        require(std::isfinite(amp_db[k]) && std::isfinite(phase[k]), "ripple terms must be finite");
}

void DeviceProfile::validate() const
{
    pa.validate();
    tx_ripple.validate();
    require(power_high_dbm > power_low_dbm, "high power level must exceed the low power level");
    require(std::isfinite(drive_low) && drive_low > 0.0, "drive scale must be positive");
}

double DeviceProfile::drive(PowerLevel level) const
{
    if (level == PowerLevel::kLow) {
        return drive_low;
    }
    return drive_low * std::pow(10.0, (power_high_dbm - power_low_dbm) / 20.0);
}

double saleh_am_am(double r, const SalehParams& p)
{
    require(r >= 0.0, "amplitude must be nonnegative");
    return p.alpha_a * r / (1.0 + p.beta_a * r * r);
}

double saleh_am_pm(double r, const SalehParams& p)
{
    require(r >= 0.0, "amplitude must be nonnegative");
    return p.alpha_phi * r * r / (1.0 + p.beta_phi * r * r);
}

ComplexSignal apply_pa(const ComplexSignal& signal, const DeviceProfile& profile, PowerLevel level)
{
    profile.validate();
    require(signal.is_finite(), "PA input must be finite");
    const double g = profile.drive(level);
    const SalehParams& p = profile.pa;

    ComplexSignal out;
    out.sample_rate_hz = signal.sample_rate_hz;
    out.samples.resize(signal.size());
    for (std::size_t i = 0; i < signal.size(); ++i) {
        const Sample c = signal.samples[i];
        const double r = std::abs(c);
        if (r == 0.0) {
            out.samples[i] = 0.0;
            continue;
        }
        const double drive_r = g * r;
        const double gain = p.alpha_a * g / (1.0 + p.beta_a * drive_r * drive_r);
        const double phase = p.alpha_phi * drive_r * drive_r / (1.0 + p.beta_phi * drive_r * drive_r);
        // A(g r) e^{j(arg c + Phi)} = c * (A(g r) / r) * e^{j Phi}
        out.samples[i] = c * std::polar(gain, phase);
    }
    return out;
}

ComplexSignal apply_tx_filter(const ComplexSignal& signal, const TxRipple& ripple)
{
    ripple.validate();
    if (ripple.empty() || signal.size() == 0) return signal;
    require(signal.sample_rate_hz > 0.0, "sample rate must be positive");
    const std::size_t n = signal.size();
    detail::Fft fwd(n, detail::Fft::Direction::kForward);
    detail::Fft inv(n, detail::Fft::Direction::kInverse);
    std::vector<Sample> spec(n);
    fwd.execute(signal.samples, spec);
    for (std::size_t i = 0; i < n; ++i) {
        const double k = i < (n + 1) / 2 ? static_cast<double>(i) : static_cast<double>(i) - static_cast<double>(n);
        const double f = k * signal.sample_rate_hz / static_cast<double>(n);
        spec[i] *= std::pow(10.0, ripple.gain_db(f) / 20.0) / static_cast<double>(n);
    }
    ComplexSignal out;
    out.sample_rate_hz = signal.sample_rate_hz;
    out.samples.resize(n);
    inv.execute(spec, out.samples);
    return out;
}

void assign_tx_ripple(std::vector<DeviceProfile>& devices, double ripple_db, int terms, double bandwidth_hz,
                      std::uint64_t seed)
{
    require(ripple_db >= 0.0 && std::isfinite(ripple_db), "ripple must be nonnegative");
    require(terms >= 0, "ripple term count must be nonnegative");
    require(bandwidth_hz > 0.0, "ripple bandwidth must be positive");
    for (std::size_t i = 0; i < devices.size(); ++i) {
        TxRipple r;
        if (ripple_db > 0.0 && terms > 0) {
            Rng rng(derive_seed(seed, {0x419913ULL, i}));
            r.bandwidth_hz = bandwidth_hz;
            for (int k = 0; k < terms; ++k) {
                r.amp_db.push_back(ripple_db * rng.uniform());
                r.phase.push_back(2.0 * std::numbers::pi * rng.uniform());
            }
        }
        devices[i].tx_ripple = std::move(r);
    }
}

std::vector<DeviceProfile> sample_device_population(int n, const SalehParams& nominal, double spread,
                                                    std::uint64_t seed)
{
    require(n >= 1, "population needs at least one device");
    require(spread >= 0.0 && spread < 0.5, "spread must be in [0, 0.5)");
    nominal.validate();

    std::vector<DeviceProfile> devices;
    devices.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, {0x5a1e4ULL, static_cast<std::uint64_t>(i)}));
        auto factor = [&] { return 1.0 + spread * (2.0 * rng.uniform() - 1.0); };
        DeviceProfile d;
        char id[32];
        std::snprintf(id, sizeof id, "dev%02d", i);
        d.device_id = id;
        d.pa.alpha_a = nominal.alpha_a * factor();
        d.pa.beta_a = nominal.beta_a * factor();
        d.pa.alpha_phi = nominal.alpha_phi * factor();
        d.pa.beta_phi = nominal.beta_phi * factor();
        d.rng_seed = derive_seed(seed, {0xde71ceULL, static_cast<std::uint64_t>(i)});
        devices.push_back(std::move(d));
    }
    return devices;
}

}  // namespace rffi
