#pragma once

/// Process grids, Elemental-style distribution pairs and the index maps
/// between global matrix coordinates and per-rank local storage. Everything
/// here is a pure function of its arguments.

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace alchemist {

using Rank = std::uint32_t;
using Index = std::uint64_t;

/// 2-D arrangement of worker ranks. Ranks are placed column-major: grid
/// position (a, b) holds rank b*rows + a.
class ProcessGrid {
public:
    ProcessGrid(std::size_t rows, std::size_t cols);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return rows_ * cols_; }

    Rank rank_at(std::size_t row, std::size_t col) const noexcept {
        return static_cast<Rank>(col * rows_ + row);
    }
    std::size_t grid_row(Rank rank) const noexcept { return rank % rows_; }
    std::size_t grid_col(Rank rank) const noexcept { return rank / rows_; }

    friend bool operator==(const ProcessGrid&, const ProcessGrid&) = default;

private:
    std::size_t rows_;
    std::size_t cols_;
};

/// Most-square factorization with rows <= cols, unless force_rows is given.
ProcessGrid make_grid(std::size_t workers, std::optional<std::size_t> force_rows = std::nullopt);

enum class DistScheme : std::uint8_t { kCirc = 0, kStar = 1, kMC = 2, kMR = 3, kVC = 4, kVR = 5 };

std::string_view to_string(DistScheme scheme);
DistScheme parse_scheme(std::string_view text);

/// (column distribution, row distribution). The column distribution decides
/// how the row index i of each column is spread, the row distribution how the
/// column index j is spread.
struct DistPair {
    DistScheme col = DistScheme::kVC;
    DistScheme row = DistScheme::kStar;

    friend bool operator==(const DistPair&, const DistPair&) = default;
};

inline constexpr DistPair kVcStar{DistScheme::kVC, DistScheme::kStar};
inline constexpr DistPair kVrStar{DistScheme::kVR, DistScheme::kStar};
inline constexpr DistPair kStarVc{DistScheme::kStar, DistScheme::kVC};
inline constexpr DistPair kStarVr{DistScheme::kStar, DistScheme::kVR};
inline constexpr DistPair kMcMr{DistScheme::kMC, DistScheme::kMR};
inline constexpr DistPair kMrMc{DistScheme::kMR, DistScheme::kMC};
inline constexpr DistPair kCircCirc{DistScheme::kCirc, DistScheme::kCirc};

/// The non-redundant pairs this library stores.
inline constexpr std::array<DistPair, 7> kLegalPairs{kMcMr, kMrMc, kVcStar, kVrStar,
                                                     kStarVc, kStarVr, kCircCirc};

bool is_legal(DistPair pair) noexcept;
void require_legal(DistPair pair);

/// "[VC,STAR]". parse_pair also accepts "VC,STAR", "VC/STAR" and "*" for STAR.
std::string to_string(DistPair pair);
DistPair parse_pair(std::string_view text);

/// Arithmetic progression start, start+stride, ... with count terms.
struct Stride {
    Index start = 0;
    Index stride = 1;
    Index count = 0;

    Index at(Index k) const noexcept { return start + k * stride; }
    bool contains(Index i) const noexcept {
        return count > 0 && i >= start && (i - start) % stride == 0 && (i - start) / stride < count;
    }
    /// Terms falling in [begin, end).
    Stride restrict_to(Index begin, Index end) const noexcept;

    friend bool operator==(const Stride&, const Stride&) = default;
};

/// Rows and columns of an m x n matrix stored on one rank. Every legal pair
/// owns a cartesian product of two progressions.
struct OwnedSlice {
    Stride rows;
    Stride cols;

    Index elements() const noexcept { return rows.count * cols.count; }
};

OwnedSlice owned_slice(const ProcessGrid& grid, DistPair pair, Rank rank, Index m, Index n);

Rank owner(const ProcessGrid& grid, DistPair pair, Index i, Index j);

struct LocalCoord {
    Rank rank = 0;
    Index li = 0;
    Index lj = 0;

    friend bool operator==(const LocalCoord&, const LocalCoord&) = default;
};

LocalCoord local_of(const ProcessGrid& grid, DistPair pair, Index i, Index j);

/// Throws kNotLocal when the rank stores nothing under this pair.
std::pair<Index, Index> global_of(const ProcessGrid& grid, DistPair pair, Rank rank, Index li,
                                  Index lj);

std::pair<Index, Index> local_shape(const ProcessGrid& grid, DistPair pair, Rank rank, Index m,
                                    Index n);

struct RowRange {
    Index begin = 0;
    Index end = 0;

    friend bool operator==(const RowRange&, const RowRange&) = default;
};

/// Contiguous ranges covering [0, rows) in `parts` near-equal pieces.
std::vector<RowRange> even_partitioning(Index rows, std::size_t parts);

/// Throws kInvalidPartitioning unless the ranges are disjoint and cover [0, m).
void validate_partitioning(std::span<const RowRange> partitioning, Index m);

struct TransferEntry {
    std::size_t partition = 0;
    Rank rank = 0;
    std::uint64_t bytes = 0;
    std::uint64_t fragments = 0;
    std::uint64_t messages = 0;
};

struct TransferPlan {
    std::vector<TransferEntry> entries;
    std::uint64_t total_bytes = 0;
    std::uint64_t total_fragments = 0;
    std::uint64_t total_messages = 0;
};

/// Bytes, fragments and block frames for each (source partition, rank) with
/// data to move. A fragment is a maximal run of same-owner elements within one
/// source row; frames hold elements_per_frame(buffer_bytes, elem_bytes) each.
TransferPlan plan_transfer(std::span<const RowRange> partitioning, const ProcessGrid& grid,
                           DistPair pair, Index m, Index n, std::size_t elem_bytes,
                           std::size_t buffer_bytes);

}  // namespace alchemist
