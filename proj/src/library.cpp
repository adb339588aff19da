#include "alchemist/library.hpp"

#include <mutex>

#include <fmt/format.h>

#include "alchemist/error.hpp"
#include "alchemist/testlib.hpp"

namespace alchemist {

std::vector<double> gather_dense(TaskContext& ctx, const MatrixInfo& info) {
    std::vector<double> dense(info.rows * info.cols, 0.0);
    std::mutex guard;
    ctx.for_each_worker([&](WorkerSlot& slot) {
        const LocalMatrix& local = slot.matrix(info.id);
        const auto values = local.values();
        const auto& s = local.slice();
        std::lock_guard lock(guard);
        for (Index li = 0; li < s.rows.count; ++li) {
            const Index i = s.rows.at(li);
            for (Index lj = 0; lj < s.cols.count; ++lj) {
                dense[i * info.cols + s.cols.at(lj)] = values[li * s.cols.count + lj];
            }
        }
    });
    return dense;
}

void scatter_dense(TaskContext& ctx, const MatrixInfo& info, std::span<const double> dense) {
    if (dense.size() != info.rows * info.cols) {
        throw Error(ErrorCode::kInternal, "dense source does not match matrix dimensions");
    }
    ctx.for_each_worker([&](WorkerSlot& slot) {
        LocalMatrix& local = slot.matrix(info.id);
        const auto& s = local.slice();
        std::vector<double> values(s.elements());
        for (Index li = 0; li < s.rows.count; ++li) {
            const Index i = s.rows.at(li);
            for (Index lj = 0; lj < s.cols.count; ++lj) {
                values[li * s.cols.count + lj] = dense[i * info.cols + s.cols.at(lj)];
            }
        }
        local.assign(values);
    });
}

MatrixInfo redistribute(TaskContext& ctx, const MatrixInfo& source, DistPair target) {
    const MatrixInfo out = ctx.create_output(source.rows, source.cols, target, source.type);
    scatter_dense(ctx, out, gather_dense(ctx, source));
    return out;
}

LibraryId LibraryRegistry::add(std::string name, std::function<std::unique_ptr<LibraryInstance>()> make) {
    if (find(name) != nullptr) {
        throw Error(ErrorCode::kInternal, fmt::format("library '{}' registered twice", name));
    }
    const auto id = static_cast<LibraryId>(entries_.size() + 1);
    entries_.push_back(LibraryEntry{id, std::move(name), std::move(make)});
    return id;
}

const LibraryEntry* LibraryRegistry::find(std::string_view name) const {
    for (const auto& e : entries_) {
        if (e.name == name) return &e;
    }
    return nullptr;
}

const LibraryEntry* LibraryRegistry::find(LibraryId id) const {
    if (id == 0 || id > entries_.size()) return nullptr;
    return &entries_[id - 1];
}

LibraryRegistry LibraryRegistry::builtin() {
    LibraryRegistry registry;
    registry.add(std::string(testlib::kName), [] { return testlib::make_instance(); });
    return registry;
}

}  // namespace alchemist
