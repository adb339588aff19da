#include "alchemist/layout.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "alchemist/error.hpp"
#include "alchemist/limits.hpp"

namespace alchemist {

ProcessGrid::ProcessGrid(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols) {
    if (rows == 0 || cols == 0) {
        throw Error(ErrorCode::kInvalidGrid, fmt::format("grid {}x{} has no workers", rows, cols));
    }
}

ProcessGrid make_grid(std::size_t workers, std::optional<std::size_t> force_rows) {
    if (workers == 0) throw Error(ErrorCode::kInvalidGrid, "a process grid needs at least one worker");
    if (force_rows) {
        if (*force_rows == 0 || workers % *force_rows != 0) {
            throw Error(ErrorCode::kInvalidGrid,
                        fmt::format("{} rows does not divide {} workers", *force_rows, workers));
        }
        return ProcessGrid(*force_rows, workers / *force_rows);
    }
    std::size_t rows = 1;
    for (std::size_t d = 1; d * d <= workers; ++d) {
        if (workers % d == 0) rows = d;
    }
    return ProcessGrid(rows, workers / rows);
}

std::string_view to_string(DistScheme scheme) {
    switch (scheme) {
        case DistScheme::kCirc: return "CIRC";
        case DistScheme::kStar: return "STAR";
        case DistScheme::kMC: return "MC";
        case DistScheme::kMR: return "MR";
        case DistScheme::kVC: return "VC";
        case DistScheme::kVR: return "VR";
    }
    return "?";
}

DistScheme parse_scheme(std::string_view text) {
    std::string up;
    for (char ch : text) {
        if (!std::isspace(static_cast<unsigned char>(ch))) {
            up.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(ch))));
        }
    }
    if (up == "CIRC" || up == "O") return DistScheme::kCirc;
    if (up == "STAR" || up == "*") return DistScheme::kStar;
    if (up == "MC") return DistScheme::kMC;
    if (up == "MR") return DistScheme::kMR;
    if (up == "VC") return DistScheme::kVC;
    if (up == "VR") return DistScheme::kVR;
    throw Error(ErrorCode::kInvalidLayout, fmt::format("unknown distribution scheme '{}'", text));
}

bool is_legal(DistPair pair) noexcept {
    return std::find(kLegalPairs.begin(), kLegalPairs.end(), pair) != kLegalPairs.end();
}

void require_legal(DistPair pair) {
    if (!is_legal(pair)) {
        throw Error(ErrorCode::kInvalidLayout,
                    fmt::format("{} is not a supported non-redundant layout", to_string(pair)));
    }
}

std::string to_string(DistPair pair) {
    return fmt::format("[{},{}]", to_string(pair.col), to_string(pair.row));
}

DistPair parse_pair(std::string_view text) {
    auto body = text;
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.front()))) body.remove_prefix(1);
    while (!body.empty() && std::isspace(static_cast<unsigned char>(body.back()))) body.remove_suffix(1);
    if (body.size() >= 2 && body.front() == '[' && body.back() == ']') {
        body = body.substr(1, body.size() - 2);
    }
    const auto sep = body.find_first_of(",/");
    if (sep == std::string_view::npos) {
        throw Error(ErrorCode::kInvalidLayout, fmt::format("cannot parse layout '{}'", text));
    }
    return DistPair{parse_scheme(body.substr(0, sep)), parse_scheme(body.substr(sep + 1))};
}

namespace {

Index count_below(const Stride& s, Index limit) {
    if (s.count == 0 || limit <= s.start) return 0;
    return std::min(s.count, (limit - s.start + s.stride - 1) / s.stride);
}

// Progression of indices along one axis of extent `extent` held by `rank`.
Stride axis_slice(const ProcessGrid& grid, DistScheme scheme, Rank rank, Index extent) {
    const Index p = grid.size();
    Index start = 0;
    Index stride = 1;
    switch (scheme) {
        case DistScheme::kStar: break;
        case DistScheme::kCirc:
            if (rank != 0) return Stride{0, 1, 0};
            break;
        case DistScheme::kMC:
            start = grid.grid_row(rank);
            stride = grid.rows();
            break;
        case DistScheme::kMR:
            start = grid.grid_col(rank);
            stride = grid.cols();
            break;
        case DistScheme::kVC:
            start = rank;
            stride = p;
            break;
        case DistScheme::kVR:
            // Position of `rank` in the row-major ordering of the grid.
            start = grid.grid_row(rank) * grid.cols() + grid.grid_col(rank);
            stride = p;
            break;
    }
    const Index count = extent > start ? (extent - start + stride - 1) / stride : 0;
    return Stride{start, stride, count};
}

// Which coordinate of the owner an index determines along one axis.
struct AxisOwner {
    Index row = 0;  // grid row contribution (MC)
    Index col = 0;  // grid col contribution (MR)
    bool has_row = false;
    bool has_col = false;
    std::optional<Rank> full;  // VC, VR, CIRC fix the rank outright
};

AxisOwner axis_owner(const ProcessGrid& grid, DistScheme scheme, Index index) {
    AxisOwner out;
    const Index p = grid.size();
    switch (scheme) {
        case DistScheme::kStar: break;
        case DistScheme::kCirc: out.full = 0; break;
        case DistScheme::kMC:
            out.row = index % grid.rows();
            out.has_row = true;
            break;
        case DistScheme::kMR:
            out.col = index % grid.cols();
            out.has_col = true;
            break;
        case DistScheme::kVC: out.full = static_cast<Rank>(index % p); break;
        case DistScheme::kVR: {
            const Index k = index % p;
            out.full = static_cast<Rank>((k % grid.cols()) * grid.rows() + k / grid.cols());
            break;
        }
    }
    return out;
}

}  // namespace

Stride Stride::restrict_to(Index begin, Index end) const noexcept {
    const Index lo = count_below(*this, begin);
    const Index hi = count_below(*this, end);
    if (hi <= lo) return Stride{start, stride, 0};
    return Stride{at(lo), stride, hi - lo};
}

OwnedSlice owned_slice(const ProcessGrid& grid, DistPair pair, Rank rank, Index m, Index n) {
    require_legal(pair);
    if (rank >= grid.size()) {
        throw Error(ErrorCode::kNotLocal, fmt::format("rank {} outside a grid of {}", rank, grid.size()));
    }
    OwnedSlice slice{axis_slice(grid, pair.col, rank, m), axis_slice(grid, pair.row, rank, n)};
    if (slice.rows.count == 0 || slice.cols.count == 0) {
        slice.rows.count = 0;
        slice.cols.count = 0;
    }
    return slice;
}

Rank owner(const ProcessGrid& grid, DistPair pair, Index i, Index j) {
    require_legal(pair);
    const AxisOwner by_row = axis_owner(grid, pair.col, i);
    const AxisOwner by_col = axis_owner(grid, pair.row, j);
    if (by_row.full) return *by_row.full;
    if (by_col.full) return *by_col.full;
    // Remaining legal pairs are [MC,MR] and [MR,MC]: one axis fixes the grid row, the other the column.
    const Index a = by_row.has_row ? by_row.row : by_col.row;
    const Index b = by_row.has_col ? by_row.col : by_col.col;
    return grid.rank_at(a, b);
}

LocalCoord local_of(const ProcessGrid& grid, DistPair pair, Index i, Index j) {
    const Rank rank = owner(grid, pair, i, j);
    const Stride rows = axis_slice(grid, pair.col, rank, i + 1);
    const Stride cols = axis_slice(grid, pair.row, rank, j + 1);
    return LocalCoord{rank, (i - rows.start) / rows.stride, (j - cols.start) / cols.stride};
}

std::pair<Index, Index> global_of(const ProcessGrid& grid, DistPair pair, Rank rank, Index li,
                                  Index lj) {
    require_legal(pair);
    if (rank >= grid.size()) {
        throw Error(ErrorCode::kNotLocal, fmt::format("rank {} outside a grid of {}", rank, grid.size()));
    }
    // An unbounded extent exposes the progression without clipping.
    constexpr Index kUnbounded = Index{1} << 62;
    const Stride rows = axis_slice(grid, pair.col, rank, kUnbounded);
    const Stride cols = axis_slice(grid, pair.row, rank, kUnbounded);
    if (rows.count == 0 || cols.count == 0) {
        throw Error(ErrorCode::kNotLocal,
                    fmt::format("rank {} stores nothing under {}", rank, to_string(pair)));
    }
    return {rows.at(li), cols.at(lj)};
}

std::pair<Index, Index> local_shape(const ProcessGrid& grid, DistPair pair, Rank rank, Index m,
                                    Index n) {
    const OwnedSlice slice = owned_slice(grid, pair, rank, m, n);
    return {slice.rows.count, slice.cols.count};
}

std::vector<RowRange> even_partitioning(Index rows, std::size_t parts) {
    if (parts == 0) throw Error(ErrorCode::kInvalidPartitioning, "need at least one partition");
    std::vector<RowRange> out;
    out.reserve(parts);
    Index begin = 0;
    for (std::size_t k = 0; k < parts; ++k) {
        const Index len = rows / parts + (k < rows % parts ? 1 : 0);
        out.push_back({begin, begin + len});
        begin += len;
    }
    return out;
}

void validate_partitioning(std::span<const RowRange> partitioning, Index m) {
    std::vector<RowRange> sorted(partitioning.begin(), partitioning.end());
    for (const auto& r : sorted) {
        if (r.begin > r.end) {
            throw Error(ErrorCode::kInvalidPartitioning,
                        fmt::format("row range [{}, {}) is reversed", r.begin, r.end));
        }
    }
    std::erase_if(sorted, [](const RowRange& r) { return r.begin == r.end; });
    std::sort(sorted.begin(), sorted.end(),
              [](const RowRange& a, const RowRange& b) { return a.begin < b.begin; });
    Index next = 0;
    for (const auto& r : sorted) {
        if (r.begin != next) {
            throw Error(ErrorCode::kInvalidPartitioning,
                        r.begin < next ? fmt::format("row range [{}, {}) overlaps", r.begin, r.end)
                                       : fmt::format("rows [{}, {}) are not covered", next, r.begin));
        }
        next = r.end;
    }
    if (next != m) {
        throw Error(ErrorCode::kInvalidPartitioning,
                    fmt::format("partitioning covers {} of {} rows", next, m));
    }
}

TransferPlan plan_transfer(std::span<const RowRange> partitioning, const ProcessGrid& grid,
                           DistPair pair, Index m, Index n, std::size_t elem_bytes,
                           std::size_t buffer_bytes) {
    require_legal(pair);
    validate_partitioning(partitioning, m);
    const std::size_t per_frame = elements_per_frame(buffer_bytes, elem_bytes);
    if (per_frame == 0) {
        throw Error(ErrorCode::kInvalidBuffer,
                    fmt::format("buffer of {} bytes cannot carry a block element", buffer_bytes));
    }

    TransferPlan plan;
    for (std::size_t part = 0; part < partitioning.size(); ++part) {
        const RowRange range = partitioning[part];
        for (Rank rank = 0; rank < grid.size(); ++rank) {
            const OwnedSlice slice = owned_slice(grid, pair, rank, m, n);
            const Index rows = slice.rows.restrict_to(range.begin, range.end).count;
            const Index elements = rows * slice.cols.count;
            if (elements == 0) continue;
            // Along a source row the rank's columns are contiguous only at unit stride.
            const Index runs_per_row = slice.cols.stride == 1 ? 1 : slice.cols.count;
            TransferEntry entry;
            entry.partition = part;
            entry.rank = rank;
            entry.bytes = elements * elem_bytes;
            entry.fragments = rows * runs_per_row;
            entry.messages = (elements + per_frame - 1) / per_frame;
            plan.total_bytes += entry.bytes;
            plan.total_fragments += entry.fragments;
            plan.total_messages += entry.messages;
            plan.entries.push_back(entry);
        }
    }
    return plan;
}

}  // namespace alchemist
