#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "rffi/matrix.hpp"
#include "rffi/receiver.hpp"

namespace rffi {

inline constexpr double kDivisorFloor = 1e-9;
inline constexpr double kDbFloor = -80.0;
inline constexpr double kDefaultTheta = 0.2;

enum class FeatureKind { kQuotient, kSpectrogram };

const char* to_string(FeatureKind kind);
FeatureKind feature_from_string(const std::string& name);

struct QuotientMatrix {
    RealMatrix values;  // dB
    std::string device_id;
};

struct FingerprintImage {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;  // row-major height x width
    FeatureKind kind = FeatureKind::kQuotient;
    std::string label = "unlabeled";

    std::uint8_t at(std::size_t r, std::size_t c) const { return pixels[r * width + c]; }
};

struct EnrollmentRecord {
    std::string device_id;
    double rho_c = 1.0;
};

enum class Screening { kAccept, kRemove };

struct DistortionResult {
    Screening decision = Screening::kAccept;
    double rho_k = 0.0;
    double rho_d = 0.0;
};

// Per-frame maximum magnitude over frequency bins.
std::vector<double> peak_profile(const Spectrogram& s);

double pearson_corr(std::span<const double> a, std::span<const double> b);

// Correlation of the high/low peak profiles; the reference stored at enrollment.
double peak_correlation(const Spectrogram& high, const Spectrogram& low);
EnrollmentRecord enroll(std::string device_id, const Spectrogram& high, const Spectrogram& low);

// Keeps a channel-affected pair only if its peak-profile correlation stays
// within `theta` of the channel-free reference.
DistortionResult distortion_check(const Spectrogram& high, const Spectrogram& low, const EnrollmentRecord& record,
                                  double theta = kDefaultTheta);

// Element-wise S_h ./ S_l. Divisors below `floor` yield 0, which to_db maps to
// the dB floor.
ComplexMatrix quotient(const Spectrogram& high, const Spectrogram& low, double floor = kDivisorFloor);
ComplexMatrix quotient(const ComplexMatrix& high, const ComplexMatrix& low, double floor = kDivisorFloor);

// 10 log10 |q|^2, clamped below at `db_floor`.
QuotientMatrix to_db(const ComplexMatrix& q, double db_floor = kDbFloor);
RealMatrix spectrogram_db(const Spectrogram& s, double db_floor = kDbFloor);

// Rows of the occupied band |f| <= B/2, reordered from -B/2 to +B/2.
RealMatrix occupied_band(const RealMatrix& m, double bandwidth_hz, double sample_rate_hz);
ComplexMatrix occupied_band(const ComplexMatrix& m, double bandwidth_hz, double sample_rate_hz);

double max_value(const RealMatrix& m);

// Clamp to [clip_lo, clip_hi], quantize to 0..255 (round half up), then
// bilinear-resample to out_h x out_v.
FingerprintImage render_image(const RealMatrix& m, std::size_t out_h, std::size_t out_v, double clip_lo,
                              double clip_hi);

// Binary PGM (P5, maxval 255).
void write_pgm(const std::filesystem::path& path, const FingerprintImage& image);
FingerprintImage read_pgm(const std::filesystem::path& path);

}  // namespace rffi
