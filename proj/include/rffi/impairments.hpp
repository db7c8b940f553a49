#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rffi/signal.hpp"

namespace rffi {

// Saleh memoryless PA model:
//   A(r)   = alpha_a r   / (1 + beta_a r^2)      (AM/AM)
//   Phi(r) = alpha_phi r^2 / (1 + beta_phi r^2)  (AM/PM, radians)
struct SalehParams {
    double alpha_a = 2.1587;
    double beta_a = 1.1517;
    double alpha_phi = 4.0033;
    double beta_phi = 9.1040;

    void validate() const;
    friend bool operator==(const SalehParams&, const SalehParams&) = default;
};

// Smooth magnitude ripple of the transmit chain ahead of the PA (DAC and
// reconstruction filter tolerances), zero phase:
//   |H(f)| dB = sum_k amp_db[k] cos(2 pi (k + 1) f / bandwidth_hz + phase[k])
// Empty means a flat response.
struct TxRipple {
    std::vector<double> amp_db;
    std::vector<double> phase;
    double bandwidth_hz = 0.0;

    bool empty() const { return amp_db.empty(); }
    double gain_db(double f_hz) const;
    void validate() const;
    friend bool operator==(const TxRipple&, const TxRipple&) = default;
};

enum class PowerLevel { kHigh, kLow };

const char* to_string(PowerLevel level);

struct DeviceProfile {
    std::string device_id;
    SalehParams pa;
    double power_high_dbm = 17.0;
    double power_low_dbm = 10.0;
    // PA input amplitude at the low power setting, relative to the Saleh
    // input scale. The high setting is driven 10^((high-low)/20) harder.
    double drive_low = 0.5;
    std::uint64_t rng_seed = 0;
    TxRipple tx_ripple;

    void validate() const;
    double drive(PowerLevel level) const;
    friend bool operator==(const DeviceProfile&, const DeviceProfile&) = default;
};

double saleh_am_am(double r, const SalehParams& p);
double saleh_am_pm(double r, const SalehParams& p);

// Sample-wise PA distortion at the given drive level.
ComplexSignal apply_pa(const ComplexSignal& signal, const DeviceProfile& profile, PowerLevel level);

// Linear pre-PA filtering by the profile's ripple, applied circularly in the
// frequency domain. Returns the input unchanged when the ripple is empty.
ComplexSignal apply_tx_filter(const ComplexSignal& signal, const TxRipple& ripple);

// Gives every profile an independent ripple of `terms` cosine terms with
// amplitudes uniform in [0, ripple_db] and uniform phases.
void assign_tx_ripple(std::vector<DeviceProfile>& devices, double ripple_db, int terms, double bandwidth_hz,
                      std::uint64_t seed);

// `n` devices whose Saleh parameters are the nominal values scaled by
// independent uniform factors in [1 - spread, 1 + spread].
std::vector<DeviceProfile> sample_device_population(int n, const SalehParams& nominal, double spread,
                                                    std::uint64_t seed);

}  // namespace rffi
