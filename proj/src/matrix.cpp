#include "alchemist/matrix.hpp"

#include <cstring>
#include <random>

#include <fmt/format.h>

#include "alchemist/error.hpp"

namespace alchemist {

DenseMatrix::DenseMatrix(Index r, Index c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
    if (values.size() != r * c) {
        throw Error(ErrorCode::kInvalidSource,
                    fmt::format("{} values cannot form a {}x{} matrix", values.size(), r, c));
    }
}

DenseMatrix DenseMatrix::row_block(Index begin, Index end) const { return sub_block(begin, end, 0, cols); }

DenseMatrix DenseMatrix::sub_block(Index r0, Index r1, Index c0, Index c1) const {
    if (r0 > r1 || r1 > rows || c0 > c1 || c1 > cols) {
        throw Error(ErrorCode::kInvalidSource,
                    fmt::format("block [{},{})x[{},{}) outside a {}x{} matrix", r0, r1, c0, c1, rows, cols));
    }
    DenseMatrix out(r1 - r0, c1 - c0);
    for (Index i = r0; i < r1; ++i) {
        std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(i * cols + c0), c1 - c0,
                    out.values.begin() + static_cast<std::ptrdiff_t>((i - r0) * out.cols));
    }
    return out;
}

DenseMatrix DenseMatrix::random(Index rows, Index cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    DenseMatrix out(rows, cols);
    for (auto& v : out.values) v = normal(rng);
    return out;
}

DenseMatrix DenseMatrix::identity(Index n) {
    DenseMatrix out(n, n);
    for (Index i = 0; i < n; ++i) out(i, i) = 1.0;
    return out;
}

bool DenseMatrix::bitwise_equal(const DenseMatrix& other) const {
    return rows == other.rows && cols == other.cols &&
           (values.empty() ||
            std::memcmp(values.data(), other.values.data(), values.size() * sizeof(double)) == 0);
}

}  // namespace alchemist
