#pragma once

#include "execrl/error.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace execrl {

// Row-major dense matrix of doubles; a plain value type for features.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

    // First n rows as a new matrix.
    Matrix head(std::size_t n) const {
        if (n > rows) throw DimensionError("Matrix::head: " + std::to_string(n) + " > " + std::to_string(rows));
        Matrix out(n, cols);
        std::copy(data.begin(), data.begin() + static_cast<std::ptrdiff_t>(n * cols), out.data.begin());
        return out;
    }

    void append_row(std::span<const double> values) {
        if (rows == 0 && cols == 0) cols = values.size();
        if (values.size() != cols)
            throw DimensionError("Matrix::append_row: width " + std::to_string(values.size()) + " vs " +
                                 std::to_string(cols));
        data.insert(data.end(), values.begin(), values.end());
        ++rows;
    }

    friend bool operator==(const Matrix&, const Matrix&) = default;
};

}  // namespace execrl
