#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>

#include "alchemist/wire.hpp"

namespace alchemist::net {

/// Owning TCP socket descriptor.
class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) noexcept : fd_(fd) {}
    Socket(Socket&& other) noexcept : fd_(std::exchange(other.fd_, -1)) {}
    Socket& operator=(Socket&& other) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket() { close(); }

    int fd() const noexcept { return fd_; }
    bool valid() const noexcept { return fd_ >= 0; }
    void close() noexcept;
    /// Unblocks any thread waiting on this socket without releasing the descriptor.
    void shutdown() noexcept;

    /// `more` hints that another write follows immediately (MSG_MORE).
    void send_all(std::span<const std::byte> bytes, bool more = false);
    /// False on orderly EOF before the first byte; throws on EOF mid-read.
    bool recv_all(std::span<std::byte> bytes);

private:
    int fd_ = -1;
};

/// Binds 0.0.0.0:port with SO_REUSEADDR; throws kBind naming the port.
Socket listen_on(std::uint16_t port, int backlog = 64);
/// Blocks; returns an invalid socket once the listener has been shut down.
Socket accept_from(const Socket& listener);
/// Throws kConnection on failure.
Socket connect_to(const std::string& host, std::uint16_t port);

std::string local_hostname();

/// Frame-level I/O over one connection, capped at the negotiated buffer size.
class Channel {
public:
    Channel() = default;
    Channel(Socket socket, std::size_t buffer_bytes)
        : socket_(std::move(socket)), buffer_bytes_(buffer_bytes) {}

    void send(const Frame& frame);
    /// nullopt on orderly close.
    std::optional<Frame> recv();

    std::size_t buffer_bytes() const noexcept { return buffer_bytes_; }
    void set_buffer_bytes(std::size_t bytes) noexcept { buffer_bytes_ = bytes; }
    Socket& socket() noexcept { return socket_; }

    std::uint64_t frames_sent() const noexcept { return frames_sent_; }
    std::uint64_t largest_frame_sent() const noexcept { return largest_sent_; }
    /// Also raise `counter` to the largest frame sent; shared across channels.
    void track_largest(std::atomic<std::uint64_t>* counter) noexcept { shared_largest_ = counter; }

private:
    Socket socket_;
    std::size_t buffer_bytes_ = kMinBufferBytes;
    std::uint64_t frames_sent_ = 0;
    std::uint64_t largest_sent_ = 0;
    std::atomic<std::uint64_t>* shared_largest_ = nullptr;
};

}  // namespace alchemist::net
