#include "alchemist/net.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cerrno>
#include <cstring>

#include <fmt/format.h>

#include "alchemist/error.hpp"

namespace alchemist::net {

Socket& Socket::operator=(Socket&& other) noexcept {
    if (this != &other) {
        close();
        fd_ = std::exchange(other.fd_, -1);
    }
    return *this;
}

void Socket::close() noexcept {
    if (fd_ >= 0) {
        ::close(fd_);
        fd_ = -1;
    }
}

void Socket::shutdown() noexcept {
    if (fd_ >= 0) ::shutdown(fd_, SHUT_RDWR);
}

void Socket::send_all(std::span<const std::byte> bytes, bool more) {
    const int flags = MSG_NOSIGNAL | (more ? MSG_MORE : 0);
    std::size_t sent = 0;
    while (sent < bytes.size()) {
        const ssize_t n = ::send(fd_, bytes.data() + sent, bytes.size() - sent, flags);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(ErrorCode::kConnection, fmt::format("send failed: {}", std::strerror(errno)));
        }
        sent += static_cast<std::size_t>(n);
    }
}

bool Socket::recv_all(std::span<std::byte> bytes) {
    std::size_t got = 0;
    while (got < bytes.size()) {
        const ssize_t n = ::recv(fd_, bytes.data() + got, bytes.size() - got, 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(ErrorCode::kConnection, fmt::format("recv failed: {}", std::strerror(errno)));
        }
        if (n == 0) {
            if (got == 0) return false;
            throw Error(ErrorCode::kIncompleteFrame, "connection closed mid-frame");
        }
        got += static_cast<std::size_t>(n);
    }
    return true;
}

Socket listen_on(std::uint16_t port, int backlog) {
    Socket sock(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock.valid()) {
        throw Error(ErrorCode::kBind, fmt::format("port {}: socket(): {}", port, std::strerror(errno)));
    }
    int one = 1;
    ::setsockopt(sock.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
    addr.sin_port = htons(port);
    if (::bind(sock.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0) {
        throw Error(ErrorCode::kBind, fmt::format("cannot bind port {}: {}", port, std::strerror(errno)));
    }
    if (::listen(sock.fd(), backlog) < 0) {
        throw Error(ErrorCode::kBind, fmt::format("cannot listen on port {}: {}", port, std::strerror(errno)));
    }
    return sock;
}

Socket accept_from(const Socket& listener) {
    for (;;) {
        const int fd = ::accept(listener.fd(), nullptr, nullptr);
        if (fd >= 0) {
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            return Socket(fd);
        }
        if (errno == EINTR || errno == ECONNABORTED) continue;
        return Socket();
    }
}

Socket connect_to(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* found = nullptr;
    const auto service = std::to_string(port);
    if (const int rc = ::getaddrinfo(host.c_str(), service.c_str(), &hints, &found); rc != 0) {
        throw Error(ErrorCode::kConnection,
                    fmt::format("cannot resolve {}:{}: {}", host, port, ::gai_strerror(rc)));
    }
    std::string last_error = "no addresses";
    for (addrinfo* ai = found; ai != nullptr; ai = ai->ai_next) {
        Socket sock(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
        if (!sock.valid()) continue;
        if (::connect(sock.fd(), ai->ai_addr, ai->ai_addrlen) == 0) {
            int one = 1;
            ::setsockopt(sock.fd(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
            ::freeaddrinfo(found);
            return sock;
        }
        last_error = std::strerror(errno);
    }
    ::freeaddrinfo(found);
    throw Error(ErrorCode::kConnection, fmt::format("cannot connect to {}:{}: {}", host, port, last_error));
}

std::string local_hostname() {
    char name[256] = {};
    if (::gethostname(name, sizeof(name) - 1) != 0) return "localhost";
    return name;
}

void Channel::send(const Frame& frame) {
    const std::size_t total = kFrameHeaderBytes + frame.payload.size();
    if (total > buffer_bytes_) {
        throw Error(ErrorCode::kFrameTooLarge,
                    fmt::format("{} frame of {} bytes exceeds buffer of {} bytes",
                                to_string(frame.command), total, buffer_bytes_));
    }
    std::array<std::byte, kFrameHeaderBytes> header;
    encode_header(FrameHeader{frame.version, frame.command, frame.session_id,
                              static_cast<std::uint32_t>(frame.payload.size())},
                  header);
    socket_.send_all(header, !frame.payload.empty());
    if (!frame.payload.empty()) socket_.send_all(frame.payload);
    ++frames_sent_;
    largest_sent_ = std::max<std::uint64_t>(largest_sent_, total);
    if (shared_largest_) {
        auto seen = shared_largest_->load(std::memory_order_relaxed);
        while (total > seen && !shared_largest_->compare_exchange_weak(seen, total, std::memory_order_relaxed)) {
        }
    }
}

std::optional<Frame> Channel::recv() {
    std::array<std::byte, kFrameHeaderBytes> header_bytes;
    if (!socket_.recv_all(header_bytes)) return std::nullopt;
    const FrameHeader header = decode_header(header_bytes, buffer_bytes_);
    Frame frame;
    frame.version = header.version;
    frame.command = header.command;
    frame.session_id = header.session_id;
    frame.payload.resize(header.payload_len);
    if (header.payload_len > 0 && !socket_.recv_all(frame.payload)) {
        throw Error(ErrorCode::kIncompleteFrame, "connection closed before payload");
    }
    return frame;
}

}  // namespace alchemist::net
