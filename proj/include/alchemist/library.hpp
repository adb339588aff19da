#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "alchemist/layout.hpp"
#include "alchemist/store.hpp"
#include "alchemist/wire.hpp"

namespace alchemist {

/// One worker's view during a task stage. Runs on that worker's strand.
struct WorkerSlot {
    Rank rank;  // session-local rank, i.e. position in the session's grid
    SessionId session;
    MatrixStore& store;

    LocalMatrix& matrix(HandleId handle) { return store.get(session, handle); }
};

/// What a library function sees of the session that invoked it.
class TaskContext {
public:
    virtual ~TaskContext() = default;

    virtual SessionId session() const = 0;
    virtual const ProcessGrid& grid() const = 0;

    /// Throws kStaleHandle for unknown ids and kNotReady unless complete on every worker.
    virtual MatrixInfo input(HandleId handle) = 0;
    /// New handle in the session with local blocks allocated on every worker.
    virtual MatrixInfo create_output(Index rows, Index cols, DistPair layout,
                                     ElemType type = ElemType::kF64) = 0;
    virtual void release(HandleId handle) = 0;
    /// Runs `stage` on every worker of the session concurrently and waits for all.
    virtual void for_each_worker(const std::function<void(WorkerSlot&)>& stage) = 0;
};

/// Dense row-major copy of a distributed matrix, assembled on the driver.
std::vector<double> gather_dense(TaskContext& ctx, const MatrixInfo& info);
/// Fills every worker's block of `info` from a dense row-major matrix.
void scatter_dense(TaskContext& ctx, const MatrixInfo& info, std::span<const double> dense);
/// Copy of `source` under `target` layout (driver-mediated exchange).
MatrixInfo redistribute(TaskContext& ctx, const MatrixInfo& source, DistPair target);

/// Per-session state of a loaded library.
class LibraryInstance {
public:
    virtual ~LibraryInstance() = default;
    /// Throws kUnknownFunction / kBadArguments / library-specific errors.
    virtual std::vector<Value> run(TaskContext& ctx, std::string_view function,
                                   std::span<const Value> args) = 0;
};

struct LibraryEntry {
    LibraryId id;
    std::string name;
    std::function<std::unique_ptr<LibraryInstance>()> make;
};

/// Libraries loadable by name; ids are assigned in registration order from 1.
class LibraryRegistry {
public:
    LibraryId add(std::string name, std::function<std::unique_ptr<LibraryInstance>()> make);
    const LibraryEntry* find(std::string_view name) const;
    const LibraryEntry* find(LibraryId id) const;

    /// Registry holding the built-in libraries ("testlib").
    static LibraryRegistry builtin();

private:
    std::vector<LibraryEntry> entries_;
};

}  // namespace alchemist
