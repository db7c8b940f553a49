#include "fft.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>

#include "rffi/errors.hpp"

namespace rffi::detail {

namespace {

std::mutex& planner_mutex()
{
    static std::mutex m;
    return m;
}

}  // namespace

Fft::Fft(std::size_t size, Direction direction) : size_(size)
{
    require(size >= 1, "FFT size must be positive");
    std::lock_guard lock(planner_mutex());
    in_ = reinterpret_cast<std::complex<double>*>(fftw_malloc(sizeof(fftw_complex) * size));
    out_ = reinterpret_cast<std::complex<double>*>(fftw_malloc(sizeof(fftw_complex) * size));
    const int sign = direction == Direction::kForward ? FFTW_FORWARD : FFTW_BACKWARD;
    plan_ = fftw_plan_dft_1d(static_cast<int>(size), reinterpret_cast<fftw_complex*>(in_),
                             reinterpret_cast<fftw_complex*>(out_), sign, FFTW_ESTIMATE);
}

Fft::~Fft()
{
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(static_cast<fftw_plan>(plan_));
    fftw_free(in_);
    fftw_free(out_);
}

void Fft::execute(std::span<const std::complex<double>> in, std::span<std::complex<double>> out)
{
    require(in.size() == size_ && out.size() == size_, "FFT buffer size mismatch");
    std::copy(in.begin(), in.end(), in_);
    fftw_execute(static_cast<fftw_plan>(plan_));
    std::copy(out_, out_ + size_, out.begin());
}

}  // namespace rffi::detail
