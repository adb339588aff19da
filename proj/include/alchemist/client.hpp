#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "alchemist/layout.hpp"
#include "alchemist/matrix.hpp"
#include "alchemist/net.hpp"
#include "alchemist/wire.hpp"

namespace alchemist {

/// A matrix held as a grid of chunks, addressed as (name, bi, bj).
struct BlockedSource {
    std::string name;
    std::vector<Index> row_offsets;  // chunk-row boundaries, 0 .. rows
    std::vector<Index> col_offsets;  // chunk-col boundaries, 0 .. cols
    std::map<std::pair<std::size_t, std::size_t>, DenseMatrix> chunks;

    Index rows() const noexcept { return row_offsets.empty() ? 0 : row_offsets.back(); }
    Index cols() const noexcept { return col_offsets.empty() ? 0 : col_offsets.back(); }

    /// Throws kInvalidSource on missing chunks or chunks that do not fit their slot.
    void validate() const;
    static BlockedSource from_dense(std::string name, const DenseMatrix& dense, Index chunk_rows,
                                    Index chunk_cols);
};

/// Row-partitioned source, one dense slab per partition.
struct RowPartitionedSource {
    Index cols = 0;
    std::vector<std::pair<RowRange, DenseMatrix>> partitions;

    Index rows() const;
    std::vector<RowRange> ranges() const;
    /// Throws kInvalidSource unless the ranges are disjoint, covering and match their slabs.
    void validate() const;
    static RowPartitionedSource from_dense(const DenseMatrix& dense, std::size_t parts);
};

struct ClientOptions {
    /// Buffer size proposed at handshake; the server may lower it.
    std::size_t buffer_bytes = kDefaultBufferBytes;
};

/// Called for every block frame the client sends: (session-local rank, piece).
using BlockObserver = std::function<void(Rank, const BlockMessage&)>;

/// One client's session with a gateway: a driver connection plus, after
/// request_workers, one connection per allocated worker.
class ClientSession {
public:
    static ClientSession connect(const std::string& host, std::uint16_t port, ClientOptions options = {});
    /// Reads "host:port" as written by the daemon's --address-file.
    static ClientSession from_address_file(const std::string& path, ClientOptions options = {});

    ClientSession(ClientSession&&) noexcept;
    ClientSession& operator=(ClientSession&&) noexcept;
    ~ClientSession();

    SessionId id() const noexcept;
    std::size_t buffer_bytes() const noexcept;

    const std::vector<WorkerInfo>& request_workers(std::size_t count);
    const std::vector<WorkerInfo>& workers() const noexcept;
    /// Session grid; throws kPrecondition before request_workers.
    const ProcessGrid& grid() const;
    WorkerList list_workers();

    LibraryId load_library(const std::string& name);

    CreateMatrixReply create_matrix(Index rows, Index cols, DistPair layout, ElemType type = ElemType::kF64);

    MatrixInfo send_matrix(const DenseMatrix& matrix, DistPair layout, ElemType type = ElemType::kF64);
    MatrixInfo send_blocked(const BlockedSource& source, DistPair layout, ElemType type = ElemType::kF64);
    MatrixInfo send_partitioned(const RowPartitionedSource& source, DistPair layout,
                                ElemType type = ElemType::kF64);

    DenseMatrix fetch_matrix(HandleId handle);
    DenseMatrix fetch_matrix(const MatrixInfo& info);

    std::vector<Value> run(LibraryId library, const std::string& function, std::vector<Value> args);
    std::vector<Value> run(const std::string& library, const std::string& function, std::vector<Value> args);

    /// Matrix descriptors this session knows about (sent or returned by tasks).
    const std::map<HandleId, MatrixInfo>& handles() const noexcept;

    void close();
    bool is_open() const noexcept;

    void set_block_observer(BlockObserver observer);
    /// Block frames sent per session-local rank since the session opened.
    std::vector<std::uint64_t> block_frames_sent() const;
    /// Largest frame written on any of this session's connections.
    std::uint64_t largest_frame_sent() const;

    struct State;

private:
    explicit ClientSession(std::unique_ptr<State> state);
    std::unique_ptr<State> state_;
};

}  // namespace alchemist
