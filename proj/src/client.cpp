#include "alchemist/client.hpp"

#include <algorithm>
#include <fstream>
#include <mutex>
#include <thread>

#include <fmt/format.h>

#include "alchemist/error.hpp"

namespace alchemist {

// ---------------------------------------------------------------------------
// Sources

void BlockedSource::validate() const {
    const auto monotone = [](const std::vector<Index>& v) {
        return !v.empty() && v.front() == 0 && std::is_sorted(v.begin(), v.end()) &&
               std::adjacent_find(v.begin(), v.end()) == v.end();
    };
    if (!monotone(row_offsets) || !monotone(col_offsets)) {
        throw Error(ErrorCode::kInvalidSource, fmt::format("source '{}' has malformed chunk offsets", name));
    }
    const std::size_t nbr = row_offsets.size() - 1;
    const std::size_t nbc = col_offsets.size() - 1;
    for (const auto& [key, chunk] : chunks) {
        if (key.first >= nbr || key.second >= nbc) {
            throw Error(ErrorCode::kInvalidSource,
                        fmt::format("chunk ({}, {}, {}) lies outside the chunk grid", name, key.first, key.second));
        }
    }
    for (std::size_t bi = 0; bi < nbr; ++bi) {
        for (std::size_t bj = 0; bj < nbc; ++bj) {
            const auto it = chunks.find({bi, bj});
            if (it == chunks.end()) {
                throw Error(ErrorCode::kInvalidSource, fmt::format("chunk ({}, {}, {}) is missing", name, bi, bj));
            }
            const Index h = row_offsets[bi + 1] - row_offsets[bi];
            const Index w = col_offsets[bj + 1] - col_offsets[bj];
            if (it->second.rows != h || it->second.cols != w) {
                throw Error(ErrorCode::kInvalidSource,
                            fmt::format("chunk ({}, {}, {}) is {}x{} but its slot is {}x{}", name, bi, bj,
                                        it->second.rows, it->second.cols, h, w));
            }
        }
    }
}

BlockedSource BlockedSource::from_dense(std::string name, const DenseMatrix& dense, Index chunk_rows,
                                        Index chunk_cols) {
    if (chunk_rows == 0 || chunk_cols == 0) throw Error(ErrorCode::kInvalidSource, "chunk dimensions must be positive");
    BlockedSource out;
    out.name = std::move(name);
    for (Index r = 0; r < dense.rows; r += chunk_rows) out.row_offsets.push_back(r);
    out.row_offsets.push_back(dense.rows);
    for (Index c = 0; c < dense.cols; c += chunk_cols) out.col_offsets.push_back(c);
    out.col_offsets.push_back(dense.cols);
    // An empty dimension still gets one (empty) chunk row/column.
    if (out.row_offsets.size() == 1) out.row_offsets.push_back(0);
    if (out.col_offsets.size() == 1) out.col_offsets.push_back(0);
    for (std::size_t bi = 0; bi + 1 < out.row_offsets.size(); ++bi) {
        for (std::size_t bj = 0; bj + 1 < out.col_offsets.size(); ++bj) {
            out.chunks.emplace(std::pair{bi, bj},
                               dense.sub_block(out.row_offsets[bi], out.row_offsets[bi + 1], out.col_offsets[bj],
                                               out.col_offsets[bj + 1]));
        }
    }
    return out;
}

Index RowPartitionedSource::rows() const {
    Index total = 0;
    for (const auto& [range, slab] : partitions) total = std::max(total, range.end);
    return total;
}

std::vector<RowRange> RowPartitionedSource::ranges() const {
    std::vector<RowRange> out;
    for (const auto& [range, slab] : partitions) out.push_back(range);
    return out;
}

void RowPartitionedSource::validate() const {
    const auto rs = ranges();
    try {
        validate_partitioning(rs, rows());
    } catch (const Error& e) {
        throw Error(ErrorCode::kInvalidSource, e.what());
    }
    for (const auto& [range, slab] : partitions) {
        if (slab.rows != range.end - range.begin || slab.cols != cols) {
            throw Error(ErrorCode::kInvalidSource,
                        fmt::format("partition [{}, {}) holds a {}x{} slab", range.begin, range.end, slab.rows,
                                    slab.cols));
        }
    }
}

RowPartitionedSource RowPartitionedSource::from_dense(const DenseMatrix& dense, std::size_t parts) {
    RowPartitionedSource out;
    out.cols = dense.cols;
    for (const auto& range : even_partitioning(dense.rows, parts)) {
        out.partitions.emplace_back(range, dense.row_block(range.begin, range.end));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Session

namespace {

struct Tile {
    Index r0, r1, c0, c1;
    const DenseMatrix* data;
};

// Next reply on a channel; ERROR frames become exceptions.
Frame await_reply(net::Channel& channel) {
    auto frame = channel.recv();
    if (!frame) throw Error(ErrorCode::kConnection, "gateway closed the connection");
    if (frame->command == Command::kError) {
        const ErrorReply err = decode_error(frame->payload);
        throw Error(static_cast<ErrorCode>(err.code), err.message);
    }
    return std::move(*frame);
}

Frame expect_ok(net::Channel& channel) {
    Frame frame = await_reply(channel);
    if (frame.command != Command::kOk) {
        throw Error(ErrorCode::kDecode, fmt::format("expected OK, got {}", to_string(frame.command)));
    }
    return frame;
}

// Runs fn(k) for k in [0, n) on separate threads; rethrows the first failure.
template <class F>
void for_each_concurrently(std::size_t n, F&& fn) {
    std::vector<std::exception_ptr> errors(n);
    {
        std::vector<std::jthread> threads;
        threads.reserve(n);
        for (std::size_t k = 0; k < n; ++k) {
            threads.emplace_back([&, k] {
                try {
                    fn(k);
                } catch (...) {
                    errors[k] = std::current_exception();
                }
            });
        }
    }
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
}

}  // namespace

struct WorkerLink {
    WorkerInfo info;
    net::Channel channel;
    std::uint64_t block_frames = 0;
};

struct ClientSession::State {
    std::string host;
    std::uint16_t port = 0;
    ClientOptions options;
    net::Channel driver;
    SessionId id = 0;
    std::size_t buffer = kMinBufferBytes;
    bool open = false;

    std::vector<WorkerInfo> workers;
    std::optional<ProcessGrid> grid;
    std::vector<std::unique_ptr<WorkerLink>> links;
    std::map<std::string, LibraryId> libraries;
    std::map<HandleId, MatrixInfo> handles;

    std::mutex observer_mutex;
    BlockObserver observer;

    Frame call(Command command, Bytes payload = {}) {
        if (!open) throw Error(ErrorCode::kStaleSession, fmt::format("session {} is closed", id));
        driver.send(Frame{kProtocolVersion, command, id, std::move(payload)});
        return expect_ok(driver);
    }

    void remember(const std::vector<Value>& values) {
        for (const auto& v : values) {
            if (const auto* m = std::get_if<MatrixInfo>(&v)) handles[m->id] = *m;
        }
    }

    void require_workers() const {
        if (!grid) throw Error(ErrorCode::kPrecondition, "no workers allocated; call request_workers first");
    }

    MatrixInfo send_tiles(Index rows, Index cols, const std::vector<Tile>& tiles, DistPair layout, ElemType type);
};

MatrixInfo ClientSession::State::send_tiles(Index rows, Index cols, const std::vector<Tile>& tiles,
                                            DistPair layout, ElemType type) {
    require_workers();
    require_legal(layout);
    const CreateMatrixReply created = decode_create_reply(
        call(Command::kCreateMatrix, encode_create_matrix(CreateMatrixRequest{rows, cols, layout, type})).payload);
    const MatrixInfo info = created.info;
    const ProcessGrid g = *grid;

    // Sequential within a worker, concurrent across workers.
    for_each_concurrently(links.size(), [&](std::size_t k) {
        const auto rank = static_cast<Rank>(k);
        WorkerLink& link = *links[k];
        const OwnedSlice slice = owned_slice(g, layout, rank, rows, cols);
        if (slice.elements() == 0) return;
        for (const Tile& tile : tiles) {
            const Stride tr = slice.rows.restrict_to(tile.r0, tile.r1);
            const Stride tc = slice.cols.restrict_to(tile.c0, tile.c1);
            if (tr.count == 0 || tc.count == 0) continue;
            std::vector<double> values;
            values.reserve(tr.count * tc.count);
            for (Index a = 0; a < tr.count; ++a) {
                const Index li = tr.at(a) - tile.r0;
                for (Index b = 0; b < tc.count; ++b) values.push_back((*tile.data)(li, tc.at(b) - tile.c0));
            }
            const BlockSelection selection{info.id, tr, tc};
            const std::size_t per_frame = elements_per_frame(buffer, elem_size(type));
            if (per_frame == 0) throw Error(ErrorCode::kInvalidBuffer, "buffer cannot hold one element");
            std::size_t done = 0;
            do {
                const std::size_t take = std::min(per_frame, values.size() - done);
                Frame frame{kProtocolVersion, Command::kSendBlock, id,
                            encode_block_piece(selection, type, done, std::span(values).subspan(done, take))};
                {
                    std::lock_guard lock(observer_mutex);
                    if (observer) observer(rank, decode_block(frame.payload));
                }
                link.channel.send(frame);
                ++link.block_frames;
                expect_ok(link.channel);
                done += take;
            } while (done < values.size());
        }
    });
    handles[info.id] = info;
    return info;
}

ClientSession::ClientSession(std::unique_ptr<State> state) : state_(std::move(state)) {}
ClientSession::ClientSession(ClientSession&&) noexcept = default;
ClientSession& ClientSession::operator=(ClientSession&&) noexcept = default;

ClientSession::~ClientSession() {
    if (state_ && state_->open) {
        try {
            close();
        } catch (const std::exception&) {
        }
    }
}

ClientSession ClientSession::connect(const std::string& host, std::uint16_t port, ClientOptions options) {
    auto state = std::make_unique<State>();
    state->host = host;
    state->port = port;
    state->options = options;
    state->driver = net::Channel(net::connect_to(host, port), kMinBufferBytes);
    state->driver.send(Frame{kProtocolVersion, Command::kHandshake, 0, encode_u64(options.buffer_bytes)});
    const Frame ok = expect_ok(state->driver);
    state->id = ok.session_id;
    state->buffer = decode_u64(ok.payload);
    state->driver.set_buffer_bytes(state->buffer);
    state->open = true;
    return ClientSession(std::move(state));
}

ClientSession ClientSession::from_address_file(const std::string& path, ClientOptions options) {
    std::ifstream in(path);
    std::string line;
    if (!in || !std::getline(in, line)) {
        throw Error(ErrorCode::kConnection, fmt::format("cannot read address file {}", path));
    }
    const auto colon = line.rfind(':');
    if (colon == std::string::npos) {
        throw Error(ErrorCode::kConnection, fmt::format("address file {} has no host:port", path));
    }
    const auto port = std::stoul(line.substr(colon + 1));
    return connect(line.substr(0, colon), static_cast<std::uint16_t>(port), options);
}

SessionId ClientSession::id() const noexcept { return state_->id; }
std::size_t ClientSession::buffer_bytes() const noexcept { return state_->buffer; }
const std::vector<WorkerInfo>& ClientSession::workers() const noexcept { return state_->workers; }
const std::map<HandleId, MatrixInfo>& ClientSession::handles() const noexcept { return state_->handles; }
bool ClientSession::is_open() const noexcept { return state_->open; }

const ProcessGrid& ClientSession::grid() const {
    state_->require_workers();
    return *state_->grid;
}

const std::vector<WorkerInfo>& ClientSession::request_workers(std::size_t count) {
    State& s = *state_;
    const WorkerList list = decode_worker_list(s.call(Command::kRequestWorkers, encode_u32(static_cast<std::uint32_t>(count))).payload);
    std::vector<std::unique_ptr<WorkerLink>> links;
    for (const auto& w : list.workers) {
        auto link = std::make_unique<WorkerLink>();
        link->info = w;
        net::Socket sock;
        try {
            sock = net::connect_to(w.host, w.port);
        } catch (const Error&) {
            // Advertised name may not resolve from here; the driver's address does.
            sock = net::connect_to(s.host, w.port);
        }
        link->channel = net::Channel(std::move(sock), kMinBufferBytes);
        link->channel.send(Frame{kProtocolVersion, Command::kHandshake, s.id, encode_u64(s.buffer)});
        const Frame ok = expect_ok(link->channel);
        link->channel.set_buffer_bytes(decode_u64(ok.payload));
        links.push_back(std::move(link));
    }
    s.links = std::move(links);
    s.workers = list.workers;
    s.grid = ProcessGrid(list.grid_rows, list.grid_cols);
    return s.workers;
}

WorkerList ClientSession::list_workers() {
    return decode_worker_list(state_->call(Command::kListWorkers).payload);
}

LibraryId ClientSession::load_library(const std::string& name) {
    const LibraryId id = decode_u32(state_->call(Command::kLoadLibrary, encode_string(name)).payload);
    state_->libraries[name] = id;
    return id;
}

CreateMatrixReply ClientSession::create_matrix(Index rows, Index cols, DistPair layout, ElemType type) {
    CreateMatrixReply reply = decode_create_reply(
        state_->call(Command::kCreateMatrix, encode_create_matrix(CreateMatrixRequest{rows, cols, layout, type})).payload);
    state_->handles[reply.info.id] = reply.info;
    return reply;
}

MatrixInfo ClientSession::send_matrix(const DenseMatrix& matrix, DistPair layout, ElemType type) {
    return state_->send_tiles(matrix.rows, matrix.cols, {Tile{0, matrix.rows, 0, matrix.cols, &matrix}}, layout,
                              type);
}

MatrixInfo ClientSession::send_blocked(const BlockedSource& source, DistPair layout, ElemType type) {
    source.validate();
    std::vector<Tile> tiles;
    for (const auto& [key, chunk] : source.chunks) {
        tiles.push_back(Tile{source.row_offsets[key.first], source.row_offsets[key.first + 1],
                             source.col_offsets[key.second], source.col_offsets[key.second + 1], &chunk});
    }
    return state_->send_tiles(source.rows(), source.cols(), tiles, layout, type);
}

MatrixInfo ClientSession::send_partitioned(const RowPartitionedSource& source, DistPair layout, ElemType type) {
    source.validate();
    std::vector<Tile> tiles;
    for (const auto& [range, slab] : source.partitions) {
        tiles.push_back(Tile{range.begin, range.end, 0, source.cols, &slab});
    }
    return state_->send_tiles(source.rows(), source.cols, tiles, layout, type);
}

DenseMatrix ClientSession::fetch_matrix(HandleId handle) {
    const auto it = state_->handles.find(handle);
    if (it == state_->handles.end()) {
        throw Error(ErrorCode::kStaleHandle, fmt::format("session {} has no handle {}", state_->id, handle));
    }
    return fetch_matrix(it->second);
}

DenseMatrix ClientSession::fetch_matrix(const MatrixInfo& info) {
    State& s = *state_;
    if (!s.open) throw Error(ErrorCode::kStaleSession, fmt::format("session {} is closed", s.id));
    s.require_workers();
    DenseMatrix out(info.rows, info.cols);
    const ProcessGrid g = *s.grid;
    for_each_concurrently(s.links.size(), [&](std::size_t k) {
        const auto rank = static_cast<Rank>(k);
        const OwnedSlice slice = owned_slice(g, info.layout, rank, info.rows, info.cols);
        if (slice.elements() == 0) return;
        net::Channel& ch = s.links[k]->channel;
        const BlockSelection selection{info.id, slice.rows, slice.cols};
        ch.send(Frame{kProtocolVersion, Command::kFetchBlock, s.id, encode_selection(selection)});
        std::uint64_t received = 0;
        while (received < selection.elements()) {
            const Frame frame = await_reply(ch);
            if (frame.command != Command::kFetchBlock) {
                throw Error(ErrorCode::kDecode, fmt::format("unexpected {} during fetch", to_string(frame.command)));
            }
            const BlockMessage piece = decode_block(frame.payload);
            if (piece.selection != selection || piece.offset != received) {
                throw Error(ErrorCode::kDecode, "fetch reply out of sequence");
            }
            const auto values = block_values(piece);
            // Each global element is written by exactly one worker thread.
            for (std::size_t e = 0; e < values.size(); ++e) {
                const Index flat = piece.offset + e;
                out(slice.rows.at(flat / slice.cols.count), slice.cols.at(flat % slice.cols.count)) = values[e];
            }
            received += values.size();
        }
    });
    return out;
}

std::vector<Value> ClientSession::run(LibraryId library, const std::string& function, std::vector<Value> args) {
    const auto payload = encode_task(TaskRequest{library, function, std::move(args)});
    auto values = decode_values(state_->call(Command::kRunTask, payload).payload);
    state_->remember(values);
    return values;
}

std::vector<Value> ClientSession::run(const std::string& library, const std::string& function,
                                      std::vector<Value> args) {
    const auto it = state_->libraries.find(library);
    const LibraryId id = it != state_->libraries.end() ? it->second : load_library(library);
    return run(id, function, std::move(args));
}

void ClientSession::close() {
    State& s = *state_;
    if (!s.open) throw Error(ErrorCode::kStaleSession, fmt::format("session {} is already closed", s.id));
    const auto shut = [&s] {
        s.open = false;
        s.handles.clear();
        for (auto& link : s.links) link->channel.socket().close();
        s.driver.socket().close();
    };
    try {
        s.call(Command::kCloseSession);
    } catch (...) {
        shut();
        throw;
    }
    shut();
}

void ClientSession::set_block_observer(BlockObserver observer) {
    std::lock_guard lock(state_->observer_mutex);
    state_->observer = std::move(observer);
}

std::vector<std::uint64_t> ClientSession::block_frames_sent() const {
    std::vector<std::uint64_t> out;
    for (const auto& link : state_->links) out.push_back(link->block_frames);
    return out;
}

std::uint64_t ClientSession::largest_frame_sent() const {
    std::uint64_t largest = state_->driver.largest_frame_sent();
    for (const auto& link : state_->links) largest = std::max(largest, link->channel.largest_frame_sent());
    return largest;
}

}  // namespace alchemist
