#include "alchemist/server.hpp"

#include <algorithm>
#include <atomic>
#include <condition_variable>
#include <fstream>
#include <future>
#include <list>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include <sys/socket.h>

#include <fmt/format.h>
#include <fmt/ranges.h>
#include <spdlog/sinks/basic_file_sink.h>
#include <spdlog/sinks/stdout_sinks.h>
#include <spdlog/spdlog.h>

#include "alchemist/error.hpp"
#include "alchemist/net.hpp"
#include "alchemist/store.hpp"
#include "alchemist/strand.hpp"

namespace alchemist {

namespace {

struct WorkerNode {
    Rank rank = 0;
    std::uint16_t port = 0;
    net::Socket listener;
    MatrixStore store;  // touched only from `strand`
    Strand strand;
    std::jthread acceptor;
};

struct Session {
    SessionId id = 0;
    std::size_t buffer_bytes = kDefaultBufferBytes;
    std::vector<Rank> ranks;  // global ranks in session-local order
    std::optional<ProcessGrid> grid;
    std::map<LibraryId, std::unique_ptr<LibraryInstance>> libraries;
    std::map<HandleId, MatrixInfo> handles;
};

struct Connection {
    int fd = -1;
    std::atomic<bool> done{false};
    std::jthread thread;
};

Frame reply(SessionId session, Command command, Bytes payload = {}) {
    return Frame{kProtocolVersion, command, session, std::move(payload)};
}

Frame error_frame(SessionId session, ErrorCode code, const std::string& message) {
    return reply(session, Command::kError, encode_error(ErrorReply{static_cast<std::uint16_t>(code), message}));
}

}  // namespace

struct Gateway::Impl {
    GatewayOptions options;
    LibraryRegistry registry;
    std::shared_ptr<spdlog::logger> log;

    net::Socket driver_listener;
    std::jthread driver_acceptor;
    std::vector<std::unique_ptr<WorkerNode>> workers;

    mutable std::mutex sessions_mutex;
    std::map<SessionId, std::shared_ptr<Session>> sessions;
    std::vector<SessionId> owner;  // per global rank, 0 if free
    SessionId next_session = 1;
    std::atomic<HandleId> next_handle{1};

    std::mutex conn_mutex;
    std::list<std::shared_ptr<Connection>> connections;

    std::atomic<std::uint64_t> largest_frame{0};
    std::mutex stop_mutex;
    std::condition_variable stop_cv;
    bool stopped = false;

    // -- connection plumbing -------------------------------------------------

    void spawn(net::Socket socket, std::function<void(net::Channel&)> serve) {
        std::lock_guard lock(conn_mutex);
        reap_locked();
        auto conn = std::make_shared<Connection>();
        conn->fd = socket.fd();
        conn->thread = std::jthread([this, conn, s = std::move(socket), serve = std::move(serve)]() mutable {
            {
                net::Channel channel(std::move(s), kMinBufferBytes);
                channel.track_largest(&largest_frame);
                try {
                    serve(channel);
                } catch (const std::exception& e) {
                    log->debug("connection ended: {}", e.what());
                }
                std::lock_guard inner(conn_mutex);
                conn->fd = -1;
            }
            conn->done = true;
        });
        connections.push_back(std::move(conn));
    }

    void reap_locked() {
        for (auto it = connections.begin(); it != connections.end();) {
            if ((*it)->done) {
                (*it)->thread.join();
                it = connections.erase(it);
            } else {
                ++it;
            }
        }
    }

    void accept_loop(const net::Socket& listener, std::function<void(net::Channel&)> serve) {
        for (;;) {
            net::Socket sock = net::accept_from(listener);
            if (!sock.valid()) return;
            spawn(std::move(sock), serve);
        }
    }

    // Reads one frame; protocol violations are answered with ERROR and end the connection.
    std::optional<Frame> next_frame(net::Channel& channel, SessionId session) {
        try {
            return channel.recv();
        } catch (const Error& e) {
            if (e.code() != ErrorCode::kConnection) {
                try {
                    channel.send(error_frame(session, e.code(), e.what()));
                } catch (const std::exception&) {
                }
            }
            throw;
        }
    }

    // -- sessions ------------------------------------------------------------

    std::shared_ptr<Session> find_session(SessionId id) const {
        std::lock_guard lock(sessions_mutex);
        const auto it = sessions.find(id);
        if (it == sessions.end()) {
            throw Error(ErrorCode::kStaleSession, fmt::format("session {} is not live", id));
        }
        return it->second;
    }

    SessionId open_session(std::size_t buffer_bytes) {
        auto session = std::make_shared<Session>();
        session->buffer_bytes = buffer_bytes;
        std::lock_guard lock(sessions_mutex);
        session->id = next_session++;
        sessions.emplace(session->id, session);
        return session->id;
    }

    WorkerList allocate(Session& session, std::size_t count) {
        if (count == 0) throw Error(ErrorCode::kPrecondition, "must request at least one worker");
        std::lock_guard lock(sessions_mutex);
        if (!session.ranks.empty()) {
            throw Error(ErrorCode::kPrecondition,
                        fmt::format("session {} already holds {} workers", session.id, session.ranks.size()));
        }
        std::vector<Rank> picked;
        for (Rank r = 0; r < owner.size() && picked.size() < count; ++r) {
            if (owner[r] == 0) picked.push_back(r);
        }
        if (picked.size() < count) {
            throw Error(ErrorCode::kOutOfWorkers,
                        fmt::format("requested {} workers but only {} are free", count, picked.size()));
        }
        for (Rank r : picked) owner[r] = session.id;
        session.ranks = picked;
        session.grid = make_grid(count);
        WorkerList list;
        list.grid_rows = static_cast<std::uint32_t>(session.grid->rows());
        list.grid_cols = static_cast<std::uint32_t>(session.grid->cols());
        for (Rank r : picked) list.workers.push_back(worker_info(r, session.id));
        return list;
    }

    WorkerInfo worker_info(Rank r, SessionId session) const {
        return WorkerInfo{r, options.host, workers[r]->port, session};
    }

    void close_session(SessionId id) {
        std::shared_ptr<Session> session;
        {
            std::lock_guard lock(sessions_mutex);
            const auto it = sessions.find(id);
            if (it == sessions.end()) {
                throw Error(ErrorCode::kStaleSession, fmt::format("session {} is not live", id));
            }
            session = it->second;
            sessions.erase(it);
            for (Rank r : session->ranks) owner[r] = 0;
        }
        for (Rank r : session->ranks) {
            WorkerNode& node = *workers[r];
            node.strand.call([&node, id] { node.store.drop_session(id); });
        }
    }

    MatrixInfo create_matrix(Session& session, const CreateMatrixRequest& request,
                             std::vector<std::pair<Index, Index>>* shapes = nullptr) {
        if (!session.grid) {
            throw Error(ErrorCode::kPrecondition, "session has no workers; request workers first");
        }
        require_legal(request.layout);
        MatrixInfo info{next_handle++, request.rows, request.cols, request.layout, request.type};
        const ProcessGrid grid = *session.grid;
        std::vector<std::future<void>> pending;
        for (Rank local = 0; local < session.ranks.size(); ++local) {
            const OwnedSlice slice = owned_slice(grid, info.layout, local, info.rows, info.cols);
            if (shapes) shapes->emplace_back(slice.rows.count, slice.cols.count);
            WorkerNode& node = *workers[session.ranks[local]];
            pending.push_back(node.strand.submit(
                [&node, id = session.id, info, slice] { node.store.create(id, info, slice); }));
        }
        for (auto& f : pending) f.get();
        session.handles.emplace(info.id, info);
        return info;
    }

    // -- driver endpoint -----------------------------------------------------

    void serve_driver(net::Channel& channel) {
        SessionId session_id = 0;
        try {
            serve_driver_frames(channel, session_id);
        } catch (...) {
            drop_if_live(session_id);
            throw;
        }
        drop_if_live(session_id);
    }

    void drop_if_live(SessionId id) {
        if (id == 0) return;
        try {
            close_session(id);
            log->info("session {} closed on disconnect", id);
        } catch (const Error&) {
        }
    }

    void serve_driver_frames(net::Channel& channel, SessionId& session_id) {
        while (auto frame = next_frame(channel, session_id)) {
            log->info("driver session={} command={}", session_id, to_string(frame->command));
            try {
                std::optional<std::size_t> negotiated;
                channel.send(handle_driver(*frame, session_id, negotiated));
                if (negotiated) channel.set_buffer_bytes(*negotiated);
            } catch (const Error& e) {
                log->info("driver session={} error={} ({})", session_id, to_string(e.code()), e.what());
                channel.send(error_frame(session_id, e.code(), e.what()));
            } catch (const std::exception& e) {
                log->error("driver session={} internal error: {}", session_id, e.what());
                channel.send(error_frame(session_id, ErrorCode::kInternal, e.what()));
            }
        }
    }

    Frame handle_driver(const Frame& frame, SessionId& session_id, std::optional<std::size_t>& negotiated) {
        if (frame.command == Command::kHandshake) {
            if (session_id != 0) {
                throw Error(ErrorCode::kPrecondition, "connection already has a session");
            }
            const std::uint64_t proposal = decode_u64(frame.payload);
            if (proposal < kMinBufferBytes) {
                throw Error(ErrorCode::kInvalidBuffer,
                            fmt::format("buffer proposal {} below minimum {}", proposal, kMinBufferBytes));
            }
            const std::size_t buffer = std::min<std::uint64_t>(proposal, options.max_buffer_bytes);
            session_id = open_session(buffer);
            log->info("session {} opened, buffer {} bytes", session_id, buffer);
            negotiated = buffer;
            return reply(session_id, Command::kOk, encode_u64(buffer));
        }
        if (session_id == 0) throw Error(ErrorCode::kStaleSession, "handshake required before commands");
        if (frame.session_id != session_id) {
            throw Error(ErrorCode::kStaleSession,
                        fmt::format("frame names session {} on the connection of session {}", frame.session_id,
                                    session_id));
        }
        auto session = find_session(session_id);
        switch (frame.command) {
            case Command::kRequestWorkers: {
                const auto list = allocate(*session, decode_u32(frame.payload));
                log->info("session {} granted workers {}", session_id, fmt::join(session->ranks, ","));
                return reply(session_id, Command::kOk, encode_worker_list(list));
            }
            case Command::kLoadLibrary: {
                const auto name = decode_string(frame.payload);
                const LibraryEntry* entry = registry.find(name);
                if (!entry) throw Error(ErrorCode::kLibraryNotFound, fmt::format("no library named '{}'", name));
                if (!session->libraries.contains(entry->id)) session->libraries.emplace(entry->id, entry->make());
                return reply(session_id, Command::kOk, encode_u32(entry->id));
            }
            case Command::kCreateMatrix: {
                CreateMatrixReply out;
                out.info = create_matrix(*session, decode_create_matrix(frame.payload), &out.local_shapes);
                return reply(session_id, Command::kOk, encode_create_reply(out));
            }
            case Command::kRunTask: return reply(session_id, Command::kOk, encode_values(run_task(*session, frame)));
            case Command::kListWorkers: {
                WorkerList list;
                if (session->grid) {
                    list.grid_rows = static_cast<std::uint32_t>(session->grid->rows());
                    list.grid_cols = static_cast<std::uint32_t>(session->grid->cols());
                }
                std::lock_guard lock(sessions_mutex);
                for (Rank r = 0; r < workers.size(); ++r) list.workers.push_back(worker_info(r, owner[r]));
                return reply(session_id, Command::kOk, encode_worker_list(list));
            }
            case Command::kCloseSession:
                close_session(session_id);
                log->info("session {} closed", session_id);
                return reply(session_id, Command::kOk);
            default:
                throw Error(ErrorCode::kUnknownCommand,
                            fmt::format("{} is not a driver command", to_string(frame.command)));
        }
    }

    std::vector<Value> run_task(Session& session, const Frame& frame);

    // -- worker endpoints ----------------------------------------------------

    void serve_worker(WorkerNode& node, net::Channel& channel) {
        SessionId session_id = 0;
        Rank local = 0;
        while (auto frame = next_frame(channel, session_id)) {
            log->debug("worker {} session={} command={}", node.rank, frame->session_id, to_string(frame->command));
            try {
                if (frame->command == Command::kHandshake) {
                    auto session = find_session(frame->session_id);
                    const auto it = std::find(session->ranks.begin(), session->ranks.end(), node.rank);
                    if (it == session->ranks.end()) {
                        throw Error(ErrorCode::kStaleSession,
                                    fmt::format("worker {} is not allocated to session {}", node.rank, session->id));
                    }
                    session_id = session->id;
                    local = static_cast<Rank>(it - session->ranks.begin());
                    channel.send(reply(session_id, Command::kOk, encode_u64(session->buffer_bytes)));
                    channel.set_buffer_bytes(session->buffer_bytes);
                    continue;
                }
                if (session_id == 0) throw Error(ErrorCode::kStaleSession, "worker handshake required");
                find_session(session_id);
                switch (frame->command) {
                    case Command::kSendBlock: {
                        const BlockMessage piece = decode_block(frame->payload);
                        const auto written = node.strand.call([&] {
                            return node.store.get(session_id, piece.selection.handle).write(piece);
                        });
                        channel.send(reply(session_id, Command::kOk, encode_u64(written)));
                        break;
                    }
                    case Command::kFetchBlock: {
                        const BlockSelection selection = decode_selection(frame->payload);
                        const BlockMessage block = node.strand.call([&] {
                            const LocalMatrix& m = node.store.get(session_id, selection.handle);
                            if (!m.complete()) {
                                throw Error(ErrorCode::kNotReady,
                                            fmt::format("handle {} has {} of {} elements on worker {}",
                                                        selection.handle, m.filled(), m.slice().elements(),
                                                        node.rank));
                            }
                            return m.read(selection);
                        });
                        for (const auto& out : chunk_block(block, channel.buffer_bytes(), session_id,
                                                           Command::kFetchBlock)) {
                            channel.send(out);
                        }
                        break;
                    }
                    default:
                        throw Error(ErrorCode::kUnknownCommand,
                                    fmt::format("{} is not a worker command", to_string(frame->command)));
                }
            } catch (const Error& e) {
                log->debug("worker {} (local {}) error: {}", node.rank, local, e.what());
                channel.send(error_frame(session_id, e.code(), e.what()));
            }
        }
    }
};

namespace {

class SessionTaskContext final : public TaskContext {
public:
    SessionTaskContext(Gateway::Impl& gw, Session& session) : gw_(gw), session_(session) {}

    SessionId session() const override { return session_.id; }
    const ProcessGrid& grid() const override { return *session_.grid; }

    MatrixInfo input(HandleId handle) override {
        const auto it = session_.handles.find(handle);
        if (it == session_.handles.end()) {
            throw Error(ErrorCode::kStaleHandle,
                        fmt::format("no matrix with handle {} in session {}", handle, session_.id));
        }
        std::atomic<bool> complete{true};
        for_each_worker([&](WorkerSlot& slot) {
            if (!slot.matrix(handle).complete()) complete = false;
        });
        if (!complete) {
            throw Error(ErrorCode::kNotReady, fmt::format("handle {} has not been fully sent", handle));
        }
        return it->second;
    }

    MatrixInfo create_output(Index rows, Index cols, DistPair layout, ElemType type) override {
        return gw_.create_matrix(session_, CreateMatrixRequest{rows, cols, layout, type});
    }

    void release(HandleId handle) override {
        for_each_worker([handle](WorkerSlot& slot) { slot.store.erase(slot.session, handle); });
        session_.handles.erase(handle);
    }

    void for_each_worker(const std::function<void(WorkerSlot&)>& stage) override {
        std::vector<std::future<void>> pending;
        for (Rank local = 0; local < session_.ranks.size(); ++local) {
            WorkerNode& node = *gw_.workers[session_.ranks[local]];
            pending.push_back(node.strand.submit([&node, &stage, local, id = session_.id] {
                WorkerSlot slot{local, id, node.store};
                stage(slot);
            }));
        }
        std::exception_ptr first;
        for (auto& f : pending) {
            try {
                f.get();
            } catch (...) {
                if (!first) first = std::current_exception();
            }
        }
        if (first) std::rethrow_exception(first);
    }

private:
    Gateway::Impl& gw_;
    Session& session_;
};

}  // namespace

std::vector<Value> Gateway::Impl::run_task(Session& session, const Frame& frame) {
    const TaskRequest task = decode_task(frame.payload);
    const auto lib = session.libraries.find(task.library);
    if (lib == session.libraries.end()) {
        throw Error(ErrorCode::kLibraryNotFound,
                    fmt::format("library {} is not loaded in session {}", task.library, session.id));
    }
    if (!session.grid) throw Error(ErrorCode::kPrecondition, "session has no workers");
    SessionTaskContext ctx(*this, session);
    log->info("session {} run {}", session.id, task.function);
    return lib->second->run(ctx, task.function, task.args);
}

Gateway::Gateway(std::unique_ptr<Impl> impl) : impl_(std::move(impl)) {}

std::unique_ptr<Gateway> Gateway::start(GatewayOptions options, LibraryRegistry registry) {
    if (options.num_workers == 0) throw Error(ErrorCode::kPrecondition, "need at least one worker");
    if (options.num_workers + options.start_port > 65535) {
        throw Error(ErrorCode::kBind, fmt::format("port range {}..{} exceeds 65535", options.start_port,
                                                  options.start_port + options.num_workers));
    }
    if (options.max_buffer_bytes < kMinBufferBytes) {
        throw Error(ErrorCode::kInvalidBuffer,
                    fmt::format("maximum buffer {} below minimum {}", options.max_buffer_bytes, kMinBufferBytes));
    }
    if (options.host.empty()) options.host = net::local_hostname();

    auto impl = std::make_unique<Impl>();
    std::vector<spdlog::sink_ptr> sinks;
    if (options.log_to_stdout) sinks.push_back(std::make_shared<spdlog::sinks::stdout_sink_mt>());
    if (options.log_path) {
        sinks.push_back(std::make_shared<spdlog::sinks::basic_file_sink_mt>(*options.log_path, true));
    }
    impl->log = std::make_shared<spdlog::logger>("alchemist", sinks.begin(), sinks.end());
    impl->log->set_pattern("[%Y-%m-%d %H:%M:%S.%e] [%l] %v");
    impl->log->set_level(options.verbose ? spdlog::level::debug : spdlog::level::info);
    impl->log->flush_on(spdlog::level::info);

    // Bind everything before accepting anything so a busy port fails fast.
    impl->driver_listener = net::listen_on(options.start_port);
    impl->owner.assign(options.num_workers, 0);
    for (std::size_t k = 0; k < options.num_workers; ++k) {
        auto node = std::make_unique<WorkerNode>();
        node->rank = static_cast<Rank>(k);
        node->port = static_cast<std::uint16_t>(options.start_port + 1 + k);
        node->listener = net::listen_on(node->port);
        impl->workers.push_back(std::move(node));
    }
    impl->options = std::move(options);
    impl->registry = std::move(registry);

    Impl* self = impl.get();
    self->driver_acceptor = std::jthread([self] {
        self->accept_loop(self->driver_listener, [self](net::Channel& ch) { self->serve_driver(ch); });
    });
    for (auto& node : self->workers) {
        WorkerNode* n = node.get();
        n->acceptor = std::jthread([self, n] {
            self->accept_loop(n->listener, [self, n](net::Channel& ch) { self->serve_worker(*n, ch); });
        });
    }

    const auto& opts = self->options;
    self->log->info("alchemist driver listening on {}:{}", opts.host, opts.start_port);
    for (const auto& node : self->workers) {
        self->log->info("worker {} listening on {}:{}", node->rank, opts.host, node->port);
    }
    if (opts.address_file) {
        std::ofstream out(*opts.address_file, std::ios::trunc);
        if (!out) {
            throw Error(ErrorCode::kPrecondition, fmt::format("cannot write address file {}", *opts.address_file));
        }
        out << opts.host << ':' << opts.start_port << '\n';
    }
    return std::unique_ptr<Gateway>(new Gateway(std::move(impl)));
}

std::unique_ptr<Gateway> Gateway::start_on_free_ports(GatewayOptions options, LibraryRegistry registry,
                                                     int attempts) {
    std::random_device entropy;
    std::mt19937 rng(entropy());
    const auto span = static_cast<int>(options.num_workers) + 1;
    std::uniform_int_distribution<int> base(20000, 60000 - span);
    for (int attempt = 1;; ++attempt) {
        options.start_port = static_cast<std::uint16_t>(base(rng));
        try {
            return start(options, registry);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::kBind || attempt >= attempts) throw;
        }
    }
}

Gateway::~Gateway() { stop(); }

void Gateway::stop() {
    {
        std::lock_guard lock(impl_->stop_mutex);
        if (impl_->stopped) return;
        impl_->stopped = true;
    }
    impl_->driver_listener.shutdown();
    for (auto& node : impl_->workers) node->listener.shutdown();
    if (impl_->driver_acceptor.joinable()) impl_->driver_acceptor.join();
    for (auto& node : impl_->workers) {
        if (node->acceptor.joinable()) node->acceptor.join();
    }
    std::list<std::shared_ptr<Connection>> live;
    {
        std::lock_guard lock(impl_->conn_mutex);
        for (auto& c : impl_->connections) {
            if (c->fd >= 0) ::shutdown(c->fd, SHUT_RDWR);
        }
        live.swap(impl_->connections);
    }
    for (auto& c : live) {
        if (c->thread.joinable()) c->thread.join();
    }
    impl_->log->info("gateway stopped");
    impl_->stop_cv.notify_all();
}

void Gateway::wait() {
    std::unique_lock lock(impl_->stop_mutex);
    impl_->stop_cv.wait(lock, [this] { return impl_->stopped; });
}

const std::string& Gateway::host() const noexcept { return impl_->options.host; }
std::uint16_t Gateway::driver_port() const noexcept { return impl_->options.start_port; }

std::vector<WorkerInfo> Gateway::workers() const {
    std::lock_guard lock(impl_->sessions_mutex);
    std::vector<WorkerInfo> out;
    for (Rank r = 0; r < impl_->workers.size(); ++r) out.push_back(impl_->worker_info(r, impl_->owner[r]));
    return out;
}

std::size_t Gateway::free_worker_count() const {
    std::lock_guard lock(impl_->sessions_mutex);
    return static_cast<std::size_t>(std::count(impl_->owner.begin(), impl_->owner.end(), SessionId{0}));
}

std::vector<SessionId> Gateway::live_sessions() const {
    std::lock_guard lock(impl_->sessions_mutex);
    std::vector<SessionId> out;
    for (const auto& [id, s] : impl_->sessions) out.push_back(id);
    return out;
}

std::vector<Rank> Gateway::session_ranks(SessionId session) const {
    return impl_->find_session(session)->ranks;
}

std::uint64_t Gateway::stored_elements(SessionId session) const {
    std::uint64_t total = 0;
    for (auto& node : impl_->workers) {
        WorkerNode* n = node.get();
        total += n->strand.call([n, session] { return n->store.elements(session); });
    }
    return total;
}

std::uint64_t Gateway::largest_frame_sent() const { return impl_->largest_frame.load(); }

}  // namespace alchemist
