#pragma once

// Reference implementations used to check the library. None of them call
// into the layout or numerics code under test.

#include <lapacke.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "alchemist/layout.hpp"
#include "alchemist/matrix.hpp"

namespace oracle {

using alchemist::DistPair;
using alchemist::DistScheme;
using alchemist::Index;
using alchemist::Rank;

// Ownership tables for a 2x3 grid, 7x7 matrix, printed with 1-based worker IDs.
inline constexpr std::array<std::array<int, 7>, 7> kGoldenMcMr{{
    {1, 3, 5, 1, 3, 5, 1},
    {2, 4, 6, 2, 4, 6, 2},
    {1, 3, 5, 1, 3, 5, 1},
    {2, 4, 6, 2, 4, 6, 2},
    {1, 3, 5, 1, 3, 5, 1},
    {2, 4, 6, 2, 4, 6, 2},
    {1, 3, 5, 1, 3, 5, 1},
}};
inline constexpr std::array<std::array<int, 7>, 7> kGoldenMrMc{{
    {1, 2, 1, 2, 1, 2, 1},
    {3, 4, 3, 4, 3, 4, 3},
    {5, 6, 5, 6, 5, 6, 5},
    {1, 2, 1, 2, 1, 2, 1},
    {3, 4, 3, 4, 3, 4, 3},
    {5, 6, 5, 6, 5, 6, 5},
    {1, 2, 1, 2, 1, 2, 1},
}};
inline constexpr std::array<std::array<int, 7>, 7> kGoldenStarVc{{
    {1, 2, 3, 4, 5, 6, 1},
    {1, 2, 3, 4, 5, 6, 1},
    {1, 2, 3, 4, 5, 6, 1},
    {1, 2, 3, 4, 5, 6, 1},
    {1, 2, 3, 4, 5, 6, 1},
    {1, 2, 3, 4, 5, 6, 1},
    {1, 2, 3, 4, 5, 6, 1},
}};
inline constexpr std::array<std::array<int, 7>, 7> kGoldenVcStar{{
    {1, 1, 1, 1, 1, 1, 1},
    {2, 2, 2, 2, 2, 2, 2},
    {3, 3, 3, 3, 3, 3, 3},
    {4, 4, 4, 4, 4, 4, 4},
    {5, 5, 5, 5, 5, 5, 5},
    {6, 6, 6, 6, 6, 6, 6},
    {1, 1, 1, 1, 1, 1, 1},
}};

// Explicit r x c table of ranks, filled column by column.
struct GridTable {
    std::size_t r, c;
    std::vector<std::vector<Rank>> cell;

    GridTable(std::size_t rows, std::size_t cols) : r(rows), c(cols), cell(rows, std::vector<Rank>(cols)) {
        Rank next = 0;
        for (std::size_t b = 0; b < c; ++b)
            for (std::size_t a = 0; a < r; ++a) cell[a][b] = next++;
    }
    std::vector<Rank> column_major() const {
        std::vector<Rank> out;
        for (std::size_t b = 0; b < c; ++b)
            for (std::size_t a = 0; a < r; ++a) out.push_back(cell[a][b]);
        return out;
    }
    std::vector<Rank> row_major() const {
        std::vector<Rank> out;
        for (std::size_t a = 0; a < r; ++a)
            for (std::size_t b = 0; b < c; ++b) out.push_back(cell[a][b]);
        return out;
    }
};

// Ranks a scheme admits for index `x` along its axis.
inline std::vector<Rank> candidates(const GridTable& g, DistScheme s, Index x) {
    std::vector<Rank> all = g.column_major();
    switch (s) {
        case DistScheme::kStar: return all;
        case DistScheme::kCirc: return {0};
        case DistScheme::kVC: return {g.column_major()[x % all.size()]};
        case DistScheme::kVR: return {g.row_major()[x % all.size()]};
        case DistScheme::kMC: {
            std::vector<Rank> out;
            for (std::size_t b = 0; b < g.c; ++b) out.push_back(g.cell[x % g.r][b]);
            return out;
        }
        case DistScheme::kMR: {
            std::vector<Rank> out;
            for (std::size_t a = 0; a < g.r; ++a) out.push_back(g.cell[a][x % g.c]);
            return out;
        }
    }
    return {};
}

// Owner as the single rank admitted by both the row and the column scheme.
inline Rank owner(std::size_t r, std::size_t c, DistPair pair, Index i, Index j) {
    GridTable g(r, c);
    auto a = candidates(g, pair.col, i);
    auto b = candidates(g, pair.row, j);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<Rank> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    if (both.size() != 1) return static_cast<Rank>(-1);
    return both.front();
}

// Total maximal same-owner runs over all source rows.
inline std::uint64_t fragments(std::size_t r, std::size_t c, DistPair pair, Index m, Index n) {
    std::uint64_t total = 0;
    for (Index i = 0; i < m; ++i) {
        Rank prev = static_cast<Rank>(-1);
        for (Index j = 0; j < n; ++j) {
            Rank o = owner(r, c, pair, i, j);
            if (j == 0 || o != prev) ++total;
            prev = o;
        }
    }
    return total;
}

// Singular values of a row-major matrix, descending.
inline std::vector<double> singular_values(const alchemist::DenseMatrix& a) {
    std::vector<double> copy = a.values;
    const auto m = static_cast<lapack_int>(a.rows);
    const auto n = static_cast<lapack_int>(a.cols);
    std::vector<double> s(std::min(a.rows, a.cols));
    std::vector<double> superb(s.size() + 1);
    double dummy = 0;
    const lapack_int info =
        LAPACKE_dgesvd(LAPACK_ROW_MAJOR, 'N', 'N', m, n, copy.data(), n, s.data(), &dummy, 1, &dummy, 1,
                       superb.data());
    if (info != 0) throw std::runtime_error("dgesvd failed: " + std::to_string(info));
    return s;
}

// ||A - A_k||_F from the full spectrum.
inline double best_rank_k_error(const std::vector<double>& sigma, std::size_t k) {
    double sum = 0;
    for (std::size_t i = k; i < sigma.size(); ++i) sum += sigma[i] * sigma[i];
    return std::sqrt(sum);
}

inline alchemist::DenseMatrix multiply(const alchemist::DenseMatrix& a, const alchemist::DenseMatrix& b) {
    alchemist::DenseMatrix c(a.rows, b.cols);
    for (Index i = 0; i < a.rows; ++i)
        for (Index j = 0; j < b.cols; ++j) {
            double acc = 0;
            for (Index t = 0; t < a.cols; ++t) acc += a(i, t) * b(t, j);
            c(i, j) = acc;
        }
    return c;
}

// ||A - U diag(S) V^T||_F.
inline double reconstruction_error(const alchemist::DenseMatrix& a, const alchemist::DenseMatrix& u,
                                   const alchemist::DenseMatrix& s, const alchemist::DenseMatrix& v) {
    double sum = 0;
    for (Index i = 0; i < a.rows; ++i)
        for (Index j = 0; j < a.cols; ++j) {
            double acc = 0;
            for (Index t = 0; t < s.rows; ++t) acc += u(i, t) * s.values[t] * v(j, t);
            const double d = a(i, j) - acc;
            sum += d * d;
        }
    return std::sqrt(sum);
}

// Type-7 quantile by sorting.
inline double quantile(std::vector<double> xs, double q) {
    std::sort(xs.begin(), xs.end());
    const double h = (static_cast<double>(xs.size()) - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = static_cast<std::size_t>(std::ceil(h));
    return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

}  // namespace oracle
