#pragma once

#include <complex>
#include <cstddef>
#include <span>

namespace rffi::detail {

// Complex DFT of a fixed size backed by FFTW. Planning is serialized by a
// process-wide lock; an instance owns its buffers and is used by one thread.
class Fft {
public:
    enum class Direction { kForward, kInverse };

    Fft(std::size_t size, Direction direction);
    ~Fft();
    Fft(const Fft&) = delete;
    Fft& operator=(const Fft&) = delete;

    std::size_t size() const noexcept { return size_; }
    // Unnormalized transform: out[k] = sum_n in[n] e^{-+j 2 pi k n / N}.
    void execute(std::span<const std::complex<double>> in, std::span<std::complex<double>> out);

private:
    std::size_t size_;
    void* plan_;
    std::complex<double>* in_;
    std::complex<double>* out_;
};

}  // namespace rffi::detail
