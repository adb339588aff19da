#pragma once

#include <cstddef>
#include <cstdint>

namespace alchemist {

inline constexpr std::uint8_t kProtocolVersion = 1;

// Fixed frame header: version u8, command u8, reserved u16, session u64, payload_len u32.
inline constexpr std::size_t kFrameHeaderBytes = 16;

// Block fragment metadata preceding the element payload of SEND_BLOCK / FETCH_BLOCK data frames.
inline constexpr std::size_t kBlockMetaBytes = 72;

// Per-frame overhead of a block-carrying frame.
inline constexpr std::size_t kBlockFrameOverhead = kFrameHeaderBytes + kBlockMetaBytes;

inline constexpr std::size_t kMiB = std::size_t{1} << 20;
inline constexpr std::size_t kMinBufferBytes = 4096;
inline constexpr std::size_t kDefaultBufferBytes = 100 * kMiB;

// Number of whole elements a single block frame can carry; 0 if the buffer cannot hold one.
constexpr std::size_t elements_per_frame(std::size_t buffer_bytes, std::size_t elem_bytes) {
    if (elem_bytes == 0 || buffer_bytes <= kBlockFrameOverhead) return 0;
    return (buffer_bytes - kBlockFrameOverhead) / elem_bytes;
}

}  // namespace alchemist
