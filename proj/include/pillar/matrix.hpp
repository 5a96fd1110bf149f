#pragma once

#include <cstddef>
#include <vector>

namespace pillar {

// Dense row-major real64 block. Used for rectangular kernel blocks
// (test x train) and score matrices; symmetric Gram matrices get their own
// type in kernels.hpp.
struct Matrix64 {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    Matrix64() = default;
    Matrix64(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

    double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }

    const double* row(std::size_t i) const { return values.data() + i * cols; }
    double* row(std::size_t i) { return values.data() + i * cols; }
};

}  // namespace pillar
