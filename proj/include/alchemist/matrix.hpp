#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "alchemist/layout.hpp"

namespace alchemist {

/// Row-major dense matrix held by a client.
struct DenseMatrix {
    Index rows = 0;
    Index cols = 0;
    std::vector<double> values;

    DenseMatrix() = default;
    DenseMatrix(Index r, Index c, double fill = 0.0) : rows(r), cols(c), values(r * c, fill) {}
    DenseMatrix(Index r, Index c, std::vector<double> v);

    double& operator()(Index i, Index j) { return values[i * cols + j]; }
    double operator()(Index i, Index j) const { return values[i * cols + j]; }

    /// Rows [begin, end) as a new matrix.
    DenseMatrix row_block(Index begin, Index end) const;
    DenseMatrix sub_block(Index r0, Index r1, Index c0, Index c1) const;

    /// Standard-normal entries from a seeded generator.
    static DenseMatrix random(Index rows, Index cols, std::uint64_t seed);
    static DenseMatrix identity(Index n);

    /// Element-wise equality of the bit patterns (distinguishes -0.0 and NaN payloads).
    bool bitwise_equal(const DenseMatrix& other) const;
    friend bool operator==(const DenseMatrix&, const DenseMatrix&) = default;
};

}  // namespace alchemist
