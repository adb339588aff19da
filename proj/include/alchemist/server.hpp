#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "alchemist/library.hpp"
#include "alchemist/wire.hpp"

namespace alchemist {

struct GatewayOptions {
    std::size_t num_workers = 1;
    /// Driver port; worker k listens on start_port + 1 + k.
    std::uint16_t start_port = 24960;
    /// Host name advertised to clients; empty means the machine's hostname.
    std::string host;
    std::optional<std::string> log_path;
    bool log_to_stdout = true;
    bool verbose = false;
    std::size_t max_buffer_bytes = kDefaultBufferBytes;
    /// If set, "host:port" of the driver is written here once listening.
    std::optional<std::string> address_file;
};

/// A driver endpoint plus num_workers independently addressable worker
/// endpoints, all served from this process. Sessions, worker groups, the
/// library registry and the per-worker matrix stores live here.
class Gateway {
public:
    /// Binds every port up front; throws kBind naming the first busy port.
    static std::unique_ptr<Gateway> start(GatewayOptions options,
                                          LibraryRegistry registry = LibraryRegistry::builtin());

    /// Like start(), but picks a random free consecutive port range; start_port is ignored.
    static std::unique_ptr<Gateway> start_on_free_ports(GatewayOptions options,
                                                        LibraryRegistry registry = LibraryRegistry::builtin(),
                                                        int attempts = 64);

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;
    ~Gateway();

    /// Closes listeners and live connections, then joins all threads.
    void stop();
    /// Blocks until stop() is called from another thread.
    void wait();

    const std::string& host() const noexcept;
    std::uint16_t driver_port() const noexcept;
    std::vector<WorkerInfo> workers() const;

    // Introspection used by tests and the daemon's status output.
    std::size_t free_worker_count() const;
    std::vector<SessionId> live_sessions() const;
    std::vector<Rank> session_ranks(SessionId session) const;
    /// Elements stored across all workers for a session.
    std::uint64_t stored_elements(SessionId session) const;
    /// Largest frame (header + payload) written by any server connection.
    std::uint64_t largest_frame_sent() const;

    struct Impl;

private:
    explicit Gateway(std::unique_ptr<Impl> impl);
    std::unique_ptr<Impl> impl_;
};

}  // namespace alchemist
