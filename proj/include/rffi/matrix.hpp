#pragma once

#include <cassert>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace rffi {

// Dense row-major matrix. Rows are frequency bins and columns are time frames
// wherever a time-frequency matrix is stored.
template <typename T>
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, T fill = T{})
        : rows_(rows), cols_(cols), data_(rows * cols, fill)
    {
    }

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    T& operator()(std::size_t r, std::size_t c) noexcept
    {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }
    const T& operator()(std::size_t r, std::size_t c) const noexcept
    {
        assert(r < rows_ && c < cols_);
        return data_[r * cols_ + c];
    }

    std::span<T> values() noexcept { return data_; }
    std::span<const T> values() const noexcept { return data_; }

    std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
    std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

    friend bool operator==(const Matrix&, const Matrix&) = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<T> data_;
};

using RealMatrix = Matrix<double>;
using ComplexMatrix = Matrix<std::complex<double>>;

}  // namespace rffi
