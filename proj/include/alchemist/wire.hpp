#pragma once

// Binary framing and payload codecs shared by the gateway and its clients.
// All integers are little-endian. See docs/wire-protocol.md for the layout.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "alchemist/layout.hpp"
#include "alchemist/limits.hpp"

namespace alchemist {

using Bytes = std::vector<std::byte>;
using SessionId = std::uint64_t;
using HandleId = std::uint64_t;
using LibraryId = std::uint32_t;

enum class Command : std::uint8_t {
    kHandshake = 1,
    kRequestWorkers = 2,
    kLoadLibrary = 3,
    kCreateMatrix = 4,
    kSendBlock = 5,
    kFetchBlock = 6,
    kRunTask = 7,
    kListWorkers = 8,
    kCloseSession = 9,
    kError = 10,
    kOk = 11,
};

std::string_view to_string(Command command);

struct FrameHeader {
    std::uint8_t version = kProtocolVersion;
    Command command = Command::kOk;
    SessionId session_id = 0;
    std::uint32_t payload_len = 0;
};

struct Frame {
    std::uint8_t version = kProtocolVersion;
    Command command = Command::kOk;
    SessionId session_id = 0;
    Bytes payload;

    friend bool operator==(const Frame&, const Frame&) = default;
};

/// Throws kFrameTooLarge if header + payload exceeds buffer_bytes.
Bytes encode_frame(const Frame& frame, std::size_t buffer_bytes);
void encode_header(const FrameHeader& header, std::span<std::byte, kFrameHeaderBytes> out);

/// Validates version, command code and the payload cap.
FrameHeader decode_header(std::span<const std::byte> bytes, std::size_t buffer_bytes);

struct DecodedFrame {
    Frame frame;
    std::size_t consumed = 0;
};

/// Decodes one frame from the front of `bytes`; trailing bytes are left alone.
DecodedFrame decode_frame(std::span<const std::byte> bytes, std::size_t buffer_bytes);

// ---------------------------------------------------------------------------
// Primitive little-endian writer/reader.

class ByteWriter {
public:
    void u8(std::uint8_t v);
    void u16(std::uint16_t v);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void i64(std::int64_t v);
    void f64(double v);
    void str(std::string_view v);
    void raw(std::span<const std::byte> v);

    Bytes& bytes() noexcept { return out_; }
    Bytes take() noexcept { return std::move(out_); }

private:
    Bytes out_;
};

class ByteReader {
public:
    explicit ByteReader(std::span<const std::byte> in) : in_(in) {}

    std::uint8_t u8();
    std::uint16_t u16();
    std::uint32_t u32();
    std::uint64_t u64();
    std::int64_t i64();
    double f64();
    std::string str();
    std::span<const std::byte> raw(std::size_t n);

    std::size_t remaining() const noexcept { return in_.size() - pos_; }
    /// Throws kDecode if bytes are left over.
    void expect_end() const;

private:
    std::span<const std::byte> in_;
    std::size_t pos_ = 0;
};

// ---------------------------------------------------------------------------
// Matrix blocks.

enum class ElemType : std::uint8_t { kF64 = 1, kF32 = 2 };

std::size_t elem_size(ElemType type);
std::string_view to_string(ElemType type);

struct BlockSelection {
    HandleId handle = 0;
    Stride rows;
    Stride cols;

    Index elements() const noexcept { return rows.count * cols.count; }
    friend bool operator==(const BlockSelection&, const BlockSelection&) = default;
};

/// A strided block, or a piece of one: `data` holds elements
/// [offset, offset + count) of the row-major traversal of `selection`.
struct BlockMessage {
    BlockSelection selection;
    ElemType type = ElemType::kF64;
    std::uint64_t offset = 0;
    Bytes data;

    std::size_t count() const noexcept { return data.size() / elem_size(type); }
    friend bool operator==(const BlockMessage&, const BlockMessage&) = default;
};

/// Whole block from f64 values.
BlockMessage make_block(const BlockSelection& selection, std::span<const double> values,
                        ElemType type = ElemType::kF64);
/// Element values widened to double.
std::vector<double> block_values(const BlockMessage& block);

Bytes encode_block(const BlockMessage& block);
BlockMessage decode_block(std::span<const std::byte> payload);
/// Same bytes as encode_block(make_block(selection, values, type)) with `offset`, built in one pass.
Bytes encode_block_piece(const BlockSelection& selection, ElemType type, std::uint64_t offset,
                         std::span<const double> values);

/// Splits a block into frames of at most buffer_bytes each, preserving order.
std::vector<Frame> chunk_block(const BlockMessage& block, std::size_t buffer_bytes,
                               SessionId session = 0, Command command = Command::kSendBlock);

/// Concatenates decoded pieces (in order) back into one block.
BlockMessage reassemble_block(std::span<const BlockMessage> pieces);

Bytes encode_selection(const BlockSelection& selection);
BlockSelection decode_selection(std::span<const std::byte> payload);

// ---------------------------------------------------------------------------
// Task invocation.

struct HandleRef {
    HandleId id = 0;
    friend bool operator==(const HandleRef&, const HandleRef&) = default;
};

/// Descriptor of a matrix living on the workers.
struct MatrixInfo {
    HandleId id = 0;
    Index rows = 0;
    Index cols = 0;
    DistPair layout = kVcStar;
    ElemType type = ElemType::kF64;
    friend bool operator==(const MatrixInfo&, const MatrixInfo&) = default;
};

using Value = std::variant<HandleRef, std::int64_t, double, std::string, MatrixInfo>;

enum class ValueTag : std::uint8_t { kHandle = 1, kInt = 2, kFloat = 3, kString = 4, kMatrix = 5 };

struct TaskRequest {
    LibraryId library = 0;
    std::string function;
    std::vector<Value> args;
    friend bool operator==(const TaskRequest&, const TaskRequest&) = default;
};

void write_value(ByteWriter& w, const Value& value);
Value read_value(ByteReader& r);
Bytes encode_values(std::span<const Value> values);
std::vector<Value> decode_values(std::span<const std::byte> payload);

Bytes encode_task(const TaskRequest& task);
TaskRequest decode_task(std::span<const std::byte> payload);

void write_matrix_info(ByteWriter& w, const MatrixInfo& info);
MatrixInfo read_matrix_info(ByteReader& r);

// ---------------------------------------------------------------------------
// Control messages.

struct WorkerInfo {
    Rank rank = 0;
    std::string host;
    std::uint16_t port = 0;
    SessionId session = 0;  // owner in LIST_WORKERS replies, 0 if free
    friend bool operator==(const WorkerInfo&, const WorkerInfo&) = default;
};

struct WorkerList {
    std::uint32_t grid_rows = 0;
    std::uint32_t grid_cols = 0;
    std::vector<WorkerInfo> workers;
    friend bool operator==(const WorkerList&, const WorkerList&) = default;
};

Bytes encode_worker_list(const WorkerList& list);
WorkerList decode_worker_list(std::span<const std::byte> payload);

struct CreateMatrixRequest {
    Index rows = 0;
    Index cols = 0;
    DistPair layout = kVcStar;
    ElemType type = ElemType::kF64;
};

Bytes encode_create_matrix(const CreateMatrixRequest& request);
CreateMatrixRequest decode_create_matrix(std::span<const std::byte> payload);

struct CreateMatrixReply {
    MatrixInfo info;
    std::vector<std::pair<Index, Index>> local_shapes;  // indexed by session-local rank
};

Bytes encode_create_reply(const CreateMatrixReply& reply);
CreateMatrixReply decode_create_reply(std::span<const std::byte> payload);

struct ErrorReply {
    std::uint16_t code = 0;
    std::string message;
};

Bytes encode_error(const ErrorReply& error);
ErrorReply decode_error(std::span<const std::byte> payload);

Bytes encode_u64(std::uint64_t value);
std::uint64_t decode_u64(std::span<const std::byte> payload);
Bytes encode_u32(std::uint32_t value);
std::uint32_t decode_u32(std::span<const std::byte> payload);
Bytes encode_string(std::string_view value);
std::string decode_string(std::span<const std::byte> payload);

}  // namespace alchemist
