#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "alchemist/layout.hpp"
#include "alchemist/wire.hpp"

namespace alchemist {

/// One worker's piece of a distributed matrix: a dense row-major block of
/// local_shape plus a write bitmap for completion tracking.
class LocalMatrix {
public:
    LocalMatrix(const MatrixInfo& info, const OwnedSlice& slice);

    const MatrixInfo& info() const noexcept { return info_; }
    const OwnedSlice& slice() const noexcept { return slice_; }
    Index local_rows() const noexcept { return slice_.rows.count; }
    Index local_cols() const noexcept { return slice_.cols.count; }
    std::uint64_t filled() const noexcept { return filled_; }
    bool complete() const noexcept { return filled_ == slice_.elements(); }

    /// Writes a block piece; all-or-nothing. Returns elements written.
    std::uint64_t write(const BlockMessage& piece);
    /// Reads `selection` in row-major traversal order.
    BlockMessage read(const BlockSelection& selection) const;

    /// Local block as doubles (row-major, local_rows x local_cols).
    std::vector<double> values() const;
    /// Overwrites the whole local block and marks it complete.
    void assign(std::span<const double> values);

private:
    // Local (li, lj) progression covered by a global selection; throws kOwnershipViolation.
    std::pair<Stride, Stride> local_selection(const BlockSelection& selection) const;

    MatrixInfo info_;
    OwnedSlice slice_;
    std::size_t width_;
    Bytes data_;
    std::vector<std::uint8_t> written_;
    std::uint64_t filled_ = 0;
};

/// Matrices stored on one worker, keyed by (session, handle). Only the
/// owning worker's strand touches it.
class MatrixStore {
public:
    LocalMatrix& create(SessionId session, const MatrixInfo& info, const OwnedSlice& slice);
    /// Throws kStaleHandle if absent.
    LocalMatrix& get(SessionId session, HandleId handle);
    LocalMatrix* find(SessionId session, HandleId handle);
    void erase(SessionId session, HandleId handle);
    void drop_session(SessionId session);

    std::size_t size() const noexcept { return entries_.size(); }
    /// Elements held for a session across all handles.
    std::uint64_t elements(SessionId session) const;

private:
    std::map<std::pair<SessionId, HandleId>, LocalMatrix> entries_;
};

}  // namespace alchemist
