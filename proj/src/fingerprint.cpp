#include "rffi/fingerprint.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "rffi/errors.hpp"

namespace rffi {

const char* to_string(FeatureKind kind)
{
    return kind == FeatureKind::kQuotient ? "quotient" : "spectrogram";
}

FeatureKind feature_from_string(const std::string& name)
{
    if (name == "quotient") return FeatureKind::kQuotient;
    if (name == "spectrogram") return FeatureKind::kSpectrogram;
    throw ValidationError("unknown feature kind: " + name);
}

std::vector<double> peak_profile(const Spectrogram& s)
{
    std::vector<double> profile(s.frames(), 0.0);
    for (std::size_t w = 0; w < s.bins.rows(); ++w) {
        const auto row = s.bins.row(w);
        for (std::size_t m = 0; m < row.size(); ++m) {
            profile[m] = std::max(profile[m], std::abs(row[m]));
        }
    }
    return profile;
}

double pearson_corr(std::span<const double> a, std::span<const double> b)
{
    require(a.size() == b.size(), "correlation operands must have equal length");
    require(a.size() >= 2, "correlation needs at least two samples");
    const double n = static_cast<double>(a.size());
    double mean_a = 0.0;
    double mean_b = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        mean_a += a[i];
        mean_b += b[i];
    }
    mean_a /= n;
    mean_b /= n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - mean_a;
        const double db = b[i] - mean_b;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    require(saa > 0.0 && sbb > 0.0, "correlation operand has zero variance");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double peak_correlation(const Spectrogram& high, const Spectrogram& low)
{
    require(high.bins.rows() == low.bins.rows() && high.bins.cols() == low.bins.cols(),
            "spectrogram dimensions differ");
    const std::vector<double> ph = peak_profile(high);
    const std::vector<double> pl = peak_profile(low);
    return pearson_corr(ph, pl);
}

EnrollmentRecord enroll(std::string device_id, const Spectrogram& high, const Spectrogram& low)
{
    return {std::move(device_id), peak_correlation(high, low)};
}

DistortionResult distortion_check(const Spectrogram& high, const Spectrogram& low, const EnrollmentRecord& record,
                                  double theta)
{
    require(theta >= 0.0, "tolerance must be nonnegative");
    DistortionResult result;
    result.rho_k = peak_correlation(high, low);
    result.rho_d = std::abs(record.rho_c - result.rho_k);
    result.decision = result.rho_d <= theta ? Screening::kAccept : Screening::kRemove;
    return result;
}

ComplexMatrix quotient(const ComplexMatrix& high, const ComplexMatrix& low, double floor)
{
    require(high.rows() == low.rows() && high.cols() == low.cols(), "spectrogram dimensions differ");
    ComplexMatrix q(high.rows(), high.cols());
    const auto h = high.values();
    const auto l = low.values();
    auto out = q.values();
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = std::abs(l[i]) < floor ? Sample{} : h[i] / l[i];
    }
    return q;
}

ComplexMatrix quotient(const Spectrogram& high, const Spectrogram& low, double floor)
{
    return quotient(high.bins, low.bins, floor);
}

namespace {

double db_power(Sample v, double db_floor)
{
    const double p = std::norm(v);
    if (!(p > 0.0)) {
        return db_floor;
    }
    return std::max(db_floor, 10.0 * std::log10(p));
}

RealMatrix to_db_matrix(const ComplexMatrix& m, double db_floor)
{
    RealMatrix out(m.rows(), m.cols());
    const auto in = m.values();
    auto o = out.values();
    for (std::size_t i = 0; i < in.size(); ++i) {
        o[i] = db_power(in[i], db_floor);
    }
    return out;
}

}  // namespace

QuotientMatrix to_db(const ComplexMatrix& q, double db_floor)
{
    return {to_db_matrix(q, db_floor), {}};
}

RealMatrix spectrogram_db(const Spectrogram& s, double db_floor)
{
    return to_db_matrix(s.bins, db_floor);
}

namespace {

template <typename T>
Matrix<T> band_rows(const Matrix<T>& m, double bandwidth_hz, double sample_rate_hz)
{
    require(bandwidth_hz > 0.0 && sample_rate_hz >= bandwidth_hz, "invalid band");
    const std::size_t w = m.rows();
    require(w >= 1, "empty matrix");
    const double bin_hz = sample_rate_hz / static_cast<double>(w);
    const auto half = static_cast<std::ptrdiff_t>(std::floor(0.5 * bandwidth_hz / bin_hz + 1e-9));
    const auto sw = static_cast<std::ptrdiff_t>(w);
    // Bins -half .. half-1 so the band height is B / bin spacing.
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(-half, -sw / 2);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(half, sw - sw / 2);
    const std::ptrdiff_t height = std::max<std::ptrdiff_t>(1, hi - lo);
    Matrix<T> out(static_cast<std::size_t>(height), m.cols());
    for (std::ptrdiff_t i = 0; i < height; ++i) {
        const std::ptrdiff_t k = lo + i;
        const auto src = static_cast<std::size_t>((k % sw + sw) % sw);
        std::copy(m.row(src).begin(), m.row(src).end(), out.row(static_cast<std::size_t>(i)).begin());
    }
    return out;
}

}  // namespace

RealMatrix occupied_band(const RealMatrix& m, double bandwidth_hz, double sample_rate_hz)
{
    return band_rows(m, bandwidth_hz, sample_rate_hz);
}

ComplexMatrix occupied_band(const ComplexMatrix& m, double bandwidth_hz, double sample_rate_hz)
{
    return band_rows(m, bandwidth_hz, sample_rate_hz);
}

double max_value(const RealMatrix& m)
{
    require(!m.empty(), "empty matrix");
    return *std::max_element(m.values().begin(), m.values().end());
}

FingerprintImage render_image(const RealMatrix& m, std::size_t out_h, std::size_t out_v, double clip_lo,
                              double clip_hi)
{
    require(clip_lo < clip_hi, "clip range must satisfy lo < hi");
    require(out_h >= 1 && out_v >= 1, "output size must be positive");
    require(!m.empty(), "cannot render an empty matrix");

    const std::size_t in_h = m.rows();
    const std::size_t in_v = m.cols();
    std::vector<double> levels(in_h * in_v);
    const auto src = m.values();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const double v = std::isnan(src[i]) ? clip_lo : std::clamp(src[i], clip_lo, clip_hi);
        levels[i] = std::floor((v - clip_lo) / (clip_hi - clip_lo) * 255.0 + 0.5);
    }

    // Half-pixel-centred bilinear sampling, clamped at the borders.
    auto axis = [](std::size_t out_i, std::size_t out_n, std::size_t in_n, std::size_t& i0, std::size_t& i1,
                   double& frac) {
        double pos = (static_cast<double>(out_i) + 0.5) * static_cast<double>(in_n) / static_cast<double>(out_n) - 0.5;
        pos = std::clamp(pos, 0.0, static_cast<double>(in_n - 1));
        i0 = static_cast<std::size_t>(std::floor(pos));
        i1 = std::min(i0 + 1, in_n - 1);
        frac = pos - static_cast<double>(i0);
    };

    FingerprintImage img;
    img.height = out_h;
    img.width = out_v;
    img.pixels.resize(out_h * out_v);
    for (std::size_t r = 0; r < out_h; ++r) {
        std::size_t r0, r1;
        double fr;
        axis(r, out_h, in_h, r0, r1, fr);
        for (std::size_t c = 0; c < out_v; ++c) {
            std::size_t c0, c1;
            double fc;
            axis(c, out_v, in_v, c0, c1, fc);
            const double top = levels[r0 * in_v + c0] * (1.0 - fc) + levels[r0 * in_v + c1] * fc;
            const double bottom = levels[r1 * in_v + c0] * (1.0 - fc) + levels[r1 * in_v + c1] * fc;
            const double v = top * (1.0 - fr) + bottom * fr;
            img.pixels[r * out_v + c] = static_cast<std::uint8_t>(std::clamp(std::floor(v + 0.5), 0.0, 255.0));
        }
    }
    return img;
}

void write_pgm(const std::filesystem::path& path, const FingerprintImage& image)
{
    require(image.pixels.size() == image.height * image.width, "image buffer does not match its dimensions");
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(std::istream& in)
{
    std::string tok;
    char ch;
    while (in.get(ch)) {
        if (ch == '#') {
            std::string discard;
            std::getline(in, discard);
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!tok.empty()) break;
            continue;
        }
        tok.push_back(ch);
    }
    return tok;
}

}  // namespace

FingerprintImage read_pgm(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    if (pgm_token(in) != "P5") {
        throw IoError(path.string() + " is not a binary PGM");
    }
    FingerprintImage img;
    try {
        img.width = std::stoul(pgm_token(in));
        img.height = std::stoul(pgm_token(in));
        if (std::stoul(pgm_token(in)) != 255) {
            throw IoError(path.string() + ": only maxval 255 is supported");
        }
    } catch (const std::logic_error&) {
        throw IoError(path.string() + ": malformed PGM header");
    }
    img.pixels.resize(img.width * img.height);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
        throw IoError(path.string() + ": truncated pixel data");
    }
    return img;
}

}  // namespace rffi
