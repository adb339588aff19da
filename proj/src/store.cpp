#include "alchemist/store.hpp"

#include <cstring>

#include <fmt/format.h>

#include "alchemist/error.hpp"

namespace alchemist {

namespace {

// Local progression (indices into the owned axis) for a global progression.
Stride to_local(const Stride& owned, const Stride& global, const char* axis) {
    if (global.count == 0) return Stride{0, 1, 0};
    const Index last = global.at(global.count - 1);
    const bool aligned = global.count == 1 || global.stride % owned.stride == 0;
    if (!owned.contains(global.start) || !owned.contains(last) || !aligned) {
        throw Error(ErrorCode::kOwnershipViolation,
                    fmt::format("{} {}:{}:{} not held by this worker", axis, global.start, global.stride,
                                global.count));
    }
    return Stride{(global.start - owned.start) / owned.stride,
                  global.count == 1 ? 1 : global.stride / owned.stride, global.count};
}

}  // namespace

LocalMatrix::LocalMatrix(const MatrixInfo& info, const OwnedSlice& slice)
    : info_(info),
      slice_(slice),
      width_(elem_size(info.type)),
      data_(slice.elements() * width_),
      written_(slice.elements(), 0) {}

std::pair<Stride, Stride> LocalMatrix::local_selection(const BlockSelection& selection) const {
    if (selection.elements() == 0) return {Stride{0, 1, 0}, Stride{0, 1, 0}};
    return {to_local(slice_.rows, selection.rows, "rows"), to_local(slice_.cols, selection.cols, "cols")};
}

std::uint64_t LocalMatrix::write(const BlockMessage& piece) {
    if (piece.type != info_.type) {
        throw Error(ErrorCode::kBadArguments,
                    fmt::format("block of {} sent to a {} matrix", to_string(piece.type), to_string(info_.type)));
    }
    const std::uint64_t count = piece.count();
    if (piece.offset + count > piece.selection.elements()) {
        throw Error(ErrorCode::kDecode, "block piece runs past its selection");
    }
    if (count == 0) return 0;
    const auto [rows, cols] = local_selection(piece.selection);
    const Index ncols = local_cols();
    const std::byte* src = piece.data.data();
    std::uint64_t e = piece.offset;
    const std::uint64_t end = piece.offset + count;
    while (e < end) {
        const Index r = e / cols.count;
        const Index c0 = e % cols.count;
        const Index run = std::min<std::uint64_t>(cols.count - c0, end - e);
        const Index li = rows.at(r);
        if (cols.stride == 1) {
            const Index at = li * ncols + cols.at(c0);
            std::memcpy(data_.data() + at * width_, src, run * width_);
            for (Index k = 0; k < run; ++k) {
                filled_ += written_[at + k] == 0;
                written_[at + k] = 1;
            }
        } else {
            for (Index k = 0; k < run; ++k) {
                const Index at = li * ncols + cols.at(c0 + k);
                std::memcpy(data_.data() + at * width_, src + k * width_, width_);
                filled_ += written_[at] == 0;
                written_[at] = 1;
            }
        }
        src += run * width_;
        e += run;
    }
    return count;
}

BlockMessage LocalMatrix::read(const BlockSelection& selection) const {
    const auto [rows, cols] = local_selection(selection);
    BlockMessage out;
    out.selection = selection;
    out.type = info_.type;
    out.data.resize(selection.elements() * width_);
    const Index ncols = local_cols();
    std::byte* dst = out.data.data();
    for (Index r = 0; r < rows.count; ++r) {
        const Index li = rows.at(r);
        if (cols.stride == 1) {
            std::memcpy(dst, data_.data() + (li * ncols + cols.start) * width_, cols.count * width_);
            dst += cols.count * width_;
        } else {
            for (Index c = 0; c < cols.count; ++c) {
                std::memcpy(dst, data_.data() + (li * ncols + cols.at(c)) * width_, width_);
                dst += width_;
            }
        }
    }
    return out;
}

std::vector<double> LocalMatrix::values() const {
    BlockMessage all;
    all.type = info_.type;
    all.data = data_;
    return block_values(all);
}

void LocalMatrix::assign(std::span<const double> values) {
    if (values.size() != slice_.elements()) {
        throw Error(ErrorCode::kInternal,
                    fmt::format("assigning {} values to a {}-element local block", values.size(),
                                slice_.elements()));
    }
    data_ = make_block(BlockSelection{}, values, info_.type).data;
    std::fill(written_.begin(), written_.end(), 1);
    filled_ = slice_.elements();
}

LocalMatrix& MatrixStore::create(SessionId session, const MatrixInfo& info, const OwnedSlice& slice) {
    auto [it, inserted] = entries_.try_emplace({session, info.id}, info, slice);
    if (!inserted) {
        throw Error(ErrorCode::kInternal, fmt::format("handle {} already exists", info.id));
    }
    return it->second;
}

LocalMatrix& MatrixStore::get(SessionId session, HandleId handle) {
    if (auto* found = find(session, handle)) return *found;
    throw Error(ErrorCode::kStaleHandle, fmt::format("no matrix with handle {} in session {}", handle, session));
}

LocalMatrix* MatrixStore::find(SessionId session, HandleId handle) {
    const auto it = entries_.find({session, handle});
    return it == entries_.end() ? nullptr : &it->second;
}

void MatrixStore::erase(SessionId session, HandleId handle) { entries_.erase({session, handle}); }

void MatrixStore::drop_session(SessionId session) {
    std::erase_if(entries_, [session](const auto& kv) { return kv.first.first == session; });
}

std::uint64_t MatrixStore::elements(SessionId session) const {
    std::uint64_t total = 0;
    for (const auto& [key, matrix] : entries_) {
        if (key.first == session) total += matrix.slice().elements();
    }
    return total;
}

}  // namespace alchemist
