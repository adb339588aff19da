#include "alchemist/wire.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <limits>

#include <fmt/format.h>

#include "alchemist/error.hpp"

namespace alchemist {

std::string_view to_string(Command command) {
    switch (command) {
        case Command::kHandshake: return "HANDSHAKE";
        case Command::kRequestWorkers: return "REQUEST_WORKERS";
        case Command::kLoadLibrary: return "LOAD_LIBRARY";
        case Command::kCreateMatrix: return "CREATE_MATRIX";
        case Command::kSendBlock: return "SEND_BLOCK";
        case Command::kFetchBlock: return "FETCH_BLOCK";
        case Command::kRunTask: return "RUN_TASK";
        case Command::kListWorkers: return "LIST_WORKERS";
        case Command::kCloseSession: return "CLOSE_SESSION";
        case Command::kError: return "ERROR";
        case Command::kOk: return "OK";
    }
    return "UNKNOWN";
}

namespace {

bool known_command(std::uint8_t code) {
    return code >= static_cast<std::uint8_t>(Command::kHandshake) &&
           code <= static_cast<std::uint8_t>(Command::kOk);
}

void put_le(std::byte* out, std::uint64_t v, std::size_t width) {
    for (std::size_t k = 0; k < width; ++k) out[k] = static_cast<std::byte>((v >> (8 * k)) & 0xff);
}

std::uint64_t get_le(const std::byte* in, std::size_t width) {
    std::uint64_t v = 0;
    for (std::size_t k = 0; k < width; ++k) v |= std::uint64_t(std::to_integer<std::uint8_t>(in[k])) << (8 * k);
    return v;
}

}  // namespace

void encode_header(const FrameHeader& header, std::span<std::byte, kFrameHeaderBytes> out) {
    put_le(out.data() + 0, header.version, 1);
    put_le(out.data() + 1, static_cast<std::uint8_t>(header.command), 1);
    put_le(out.data() + 2, 0, 2);
    put_le(out.data() + 4, header.session_id, 8);
    put_le(out.data() + 12, header.payload_len, 4);
}

Bytes encode_frame(const Frame& frame, std::size_t buffer_bytes) {
    const std::size_t total = kFrameHeaderBytes + frame.payload.size();
    if (total > buffer_bytes || frame.payload.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorCode::kFrameTooLarge,
                    fmt::format("{} frame of {} bytes exceeds buffer of {} bytes",
                                to_string(frame.command), total, buffer_bytes));
    }
    Bytes out(total);
    FrameHeader header{frame.version, frame.command, frame.session_id,
                       static_cast<std::uint32_t>(frame.payload.size())};
    encode_header(header, std::span<std::byte, kFrameHeaderBytes>(out.data(), kFrameHeaderBytes));
    if (!frame.payload.empty()) {
        std::memcpy(out.data() + kFrameHeaderBytes, frame.payload.data(), frame.payload.size());
    }
    return out;
}

FrameHeader decode_header(std::span<const std::byte> bytes, std::size_t buffer_bytes) {
    if (bytes.size() < kFrameHeaderBytes) {
        throw Error(ErrorCode::kIncompleteFrame,
                    fmt::format("need {} header bytes, have {}", kFrameHeaderBytes, bytes.size()));
    }
    FrameHeader header;
    header.version = static_cast<std::uint8_t>(get_le(bytes.data(), 1));
    if (header.version != kProtocolVersion) {
        throw Error(ErrorCode::kVersionMismatch,
                    fmt::format("protocol version {} (expected {})", header.version, kProtocolVersion));
    }
    const auto code = static_cast<std::uint8_t>(get_le(bytes.data() + 1, 1));
    if (!known_command(code)) {
        throw Error(ErrorCode::kUnknownCommand, fmt::format("unknown command code {}", code));
    }
    header.command = static_cast<Command>(code);
    header.session_id = get_le(bytes.data() + 4, 8);
    header.payload_len = static_cast<std::uint32_t>(get_le(bytes.data() + 12, 4));
    if (kFrameHeaderBytes + std::size_t{header.payload_len} > buffer_bytes) {
        throw Error(ErrorCode::kFrameTooLarge,
                    fmt::format("incoming payload of {} bytes exceeds buffer of {} bytes",
                                header.payload_len, buffer_bytes));
    }
    return header;
}

DecodedFrame decode_frame(std::span<const std::byte> bytes, std::size_t buffer_bytes) {
    const FrameHeader header = decode_header(bytes, buffer_bytes);
    const std::size_t total = kFrameHeaderBytes + header.payload_len;
    if (bytes.size() < total) {
        throw Error(ErrorCode::kIncompleteFrame,
                    fmt::format("frame needs {} bytes, have {}", total, bytes.size()));
    }
    DecodedFrame out;
    out.frame.version = header.version;
    out.frame.command = header.command;
    out.frame.session_id = header.session_id;
    out.frame.payload.assign(bytes.begin() + kFrameHeaderBytes, bytes.begin() + total);
    out.consumed = total;
    return out;
}

// ---------------------------------------------------------------------------

void ByteWriter::u8(std::uint8_t v) { out_.push_back(static_cast<std::byte>(v)); }

void ByteWriter::u16(std::uint16_t v) {
    const auto at = out_.size();
    out_.resize(at + 2);
    put_le(out_.data() + at, v, 2);
}

void ByteWriter::u32(std::uint32_t v) {
    const auto at = out_.size();
    out_.resize(at + 4);
    put_le(out_.data() + at, v, 4);
}

void ByteWriter::u64(std::uint64_t v) {
    const auto at = out_.size();
    out_.resize(at + 8);
    put_le(out_.data() + at, v, 8);
}

void ByteWriter::i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view v) {
    if (v.size() > std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorCode::kDecode, "string too long for the wire");
    }
    u32(static_cast<std::uint32_t>(v.size()));
    raw(std::as_bytes(std::span(v.data(), v.size())));
}

void ByteWriter::raw(std::span<const std::byte> v) { out_.insert(out_.end(), v.begin(), v.end()); }

std::span<const std::byte> ByteReader::raw(std::size_t n) {
    if (remaining() < n) {
        throw Error(ErrorCode::kDecode, fmt::format("payload truncated: need {} bytes, have {}", n, remaining()));
    }
    auto out = in_.subspan(pos_, n);
    pos_ += n;
    return out;
}

std::uint8_t ByteReader::u8() { return static_cast<std::uint8_t>(get_le(raw(1).data(), 1)); }
std::uint16_t ByteReader::u16() { return static_cast<std::uint16_t>(get_le(raw(2).data(), 2)); }
std::uint32_t ByteReader::u32() { return static_cast<std::uint32_t>(get_le(raw(4).data(), 4)); }
std::uint64_t ByteReader::u64() { return get_le(raw(8).data(), 8); }
std::int64_t ByteReader::i64() { return static_cast<std::int64_t>(u64()); }
double ByteReader::f64() { return std::bit_cast<double>(u64()); }

std::string ByteReader::str() {
    const auto len = u32();
    const auto bytes = raw(len);
    return std::string(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

void ByteReader::expect_end() const {
    if (remaining() != 0) {
        throw Error(ErrorCode::kDecode, fmt::format("{} unexpected trailing bytes", remaining()));
    }
}

// ---------------------------------------------------------------------------

std::size_t elem_size(ElemType type) {
    switch (type) {
        case ElemType::kF64: return 8;
        case ElemType::kF32: return 4;
    }
    throw Error(ErrorCode::kDecode, "unknown element type");
}

std::string_view to_string(ElemType type) { return type == ElemType::kF32 ? "f32" : "f64"; }

namespace {

ElemType read_elem_type(std::uint8_t code) {
    if (code != static_cast<std::uint8_t>(ElemType::kF64) && code != static_cast<std::uint8_t>(ElemType::kF32)) {
        throw Error(ErrorCode::kDecode, fmt::format("unknown element type {}", code));
    }
    return static_cast<ElemType>(code);
}

DistScheme read_scheme(std::uint8_t code) {
    if (code > static_cast<std::uint8_t>(DistScheme::kVR)) {
        throw Error(ErrorCode::kDecode, fmt::format("unknown distribution scheme {}", code));
    }
    return static_cast<DistScheme>(code);
}

void write_stride(ByteWriter& w, const Stride& s) {
    w.u64(s.start);
    w.u64(s.stride);
    w.u64(s.count);
}

Stride read_stride(ByteReader& r) {
    Stride s;
    s.start = r.u64();
    s.stride = r.u64();
    s.count = r.u64();
    if (s.stride == 0) throw Error(ErrorCode::kDecode, "zero stride in block selection");
    return s;
}

}  // namespace

BlockMessage make_block(const BlockSelection& selection, std::span<const double> values, ElemType type) {
    BlockMessage block;
    block.selection = selection;
    block.type = type;
    if (type == ElemType::kF64) {
        auto bytes = std::as_bytes(values);
        block.data.assign(bytes.begin(), bytes.end());
    } else {
        block.data.resize(values.size() * sizeof(float));
        for (std::size_t k = 0; k < values.size(); ++k) {
            const float f = static_cast<float>(values[k]);
            std::memcpy(block.data.data() + k * sizeof(float), &f, sizeof(float));
        }
    }
    return block;
}

std::vector<double> block_values(const BlockMessage& block) {
    std::vector<double> out(block.count());
    if (block.type == ElemType::kF64) {
        if (!out.empty()) std::memcpy(out.data(), block.data.data(), block.data.size());
    } else {
        for (std::size_t k = 0; k < out.size(); ++k) {
            float f;
            std::memcpy(&f, block.data.data() + k * sizeof(float), sizeof(float));
            out[k] = f;
        }
    }
    return out;
}

namespace {

void write_block_meta(ByteWriter& w, const BlockSelection& selection, ElemType type, std::uint64_t offset,
                      std::size_t count) {
    if (count > std::numeric_limits<std::uint32_t>::max()) {
        throw Error(ErrorCode::kFrameTooLarge, "block fragment has too many elements for one frame");
    }
    w.u64(selection.handle);
    write_stride(w, selection.rows);
    write_stride(w, selection.cols);
    w.u64(offset);
    w.u8(static_cast<std::uint8_t>(type));
    w.u8(0);
    w.u16(0);
    w.u32(static_cast<std::uint32_t>(count));
}

}  // namespace

Bytes encode_block(const BlockMessage& block) {
    ByteWriter w;
    w.bytes().reserve(kBlockMetaBytes + block.data.size());
    write_block_meta(w, block.selection, block.type, block.offset, block.count());
    w.raw(block.data);
    return w.take();
}

Bytes encode_block_piece(const BlockSelection& selection, ElemType type, std::uint64_t offset,
                         std::span<const double> values) {
    const std::size_t width = elem_size(type);
    ByteWriter w;
    w.bytes().reserve(kBlockMetaBytes + values.size() * width);
    write_block_meta(w, selection, type, offset, values.size());
    Bytes& out = w.bytes();
    const std::size_t at = out.size();
    out.resize(at + values.size() * width);
    if (type == ElemType::kF64) {
        if (!values.empty()) std::memcpy(out.data() + at, values.data(), values.size() * width);
    } else {
        for (std::size_t k = 0; k < values.size(); ++k) {
            const float f = static_cast<float>(values[k]);
            std::memcpy(out.data() + at + k * width, &f, width);
        }
    }
    return w.take();
}

BlockMessage decode_block(std::span<const std::byte> payload) {
    ByteReader r(payload);
    BlockMessage block;
    block.selection.handle = r.u64();
    block.selection.rows = read_stride(r);
    block.selection.cols = read_stride(r);
    block.offset = r.u64();
    block.type = read_elem_type(r.u8());
    r.u8();
    r.u16();
    const std::uint64_t count = r.u32();
    const std::size_t width = elem_size(block.type);
    if (r.remaining() != count * width) {
        throw Error(ErrorCode::kDecode,
                    fmt::format("block declares {} elements but carries {} bytes", count, r.remaining()));
    }
    if (block.offset + count > block.selection.elements()) {
        throw Error(ErrorCode::kDecode,
                    fmt::format("elements [{}, {}) outside a {}-element selection", block.offset,
                                block.offset + count, block.selection.elements()));
    }
    const auto data = r.raw(count * width);
    block.data.assign(data.begin(), data.end());
    return block;
}

std::vector<Frame> chunk_block(const BlockMessage& block, std::size_t buffer_bytes, SessionId session,
                               Command command) {
    const std::size_t width = elem_size(block.type);
    const std::size_t per_frame = elements_per_frame(buffer_bytes, width);
    if (per_frame == 0) {
        throw Error(ErrorCode::kInvalidBuffer,
                    fmt::format("buffer of {} bytes cannot hold block metadata and one element", buffer_bytes));
    }
    const std::size_t total = block.count();
    std::vector<Frame> frames;
    frames.reserve(total == 0 ? 1 : (total + per_frame - 1) / per_frame);
    std::size_t done = 0;
    do {
        const std::size_t take = std::min(per_frame, total - done);
        BlockMessage piece;
        piece.selection = block.selection;
        piece.type = block.type;
        piece.offset = block.offset + done;
        piece.data.assign(block.data.begin() + static_cast<std::ptrdiff_t>(done * width),
                          block.data.begin() + static_cast<std::ptrdiff_t>((done + take) * width));
        frames.push_back(Frame{kProtocolVersion, command, session, encode_block(piece)});
        done += take;
    } while (done < total);
    return frames;
}

BlockMessage reassemble_block(std::span<const BlockMessage> pieces) {
    if (pieces.empty()) throw Error(ErrorCode::kDecode, "no block pieces to reassemble");
    BlockMessage out;
    out.selection = pieces.front().selection;
    out.type = pieces.front().type;
    out.offset = pieces.front().offset;
    std::uint64_t next = out.offset;
    for (const auto& piece : pieces) {
        if (piece.selection != out.selection || piece.type != out.type || piece.offset != next) {
            throw Error(ErrorCode::kDecode, "block pieces are not a contiguous sequence");
        }
        out.data.insert(out.data.end(), piece.data.begin(), piece.data.end());
        next += piece.count();
    }
    return out;
}

Bytes encode_selection(const BlockSelection& selection) {
    ByteWriter w;
    w.u64(selection.handle);
    write_stride(w, selection.rows);
    write_stride(w, selection.cols);
    return w.take();
}

BlockSelection decode_selection(std::span<const std::byte> payload) {
    ByteReader r(payload);
    BlockSelection s;
    s.handle = r.u64();
    s.rows = read_stride(r);
    s.cols = read_stride(r);
    r.expect_end();
    return s;
}

// ---------------------------------------------------------------------------

void write_matrix_info(ByteWriter& w, const MatrixInfo& info) {
    w.u64(info.id);
    w.u64(info.rows);
    w.u64(info.cols);
    w.u8(static_cast<std::uint8_t>(info.layout.col));
    w.u8(static_cast<std::uint8_t>(info.layout.row));
    w.u8(static_cast<std::uint8_t>(info.type));
}

MatrixInfo read_matrix_info(ByteReader& r) {
    MatrixInfo info;
    info.id = r.u64();
    info.rows = r.u64();
    info.cols = r.u64();
    info.layout.col = read_scheme(r.u8());
    info.layout.row = read_scheme(r.u8());
    info.type = read_elem_type(r.u8());
    return info;
}

void write_value(ByteWriter& w, const Value& value) {
    std::visit(
        [&w](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, HandleRef>) {
                w.u8(static_cast<std::uint8_t>(ValueTag::kHandle));
                w.u64(v.id);
            } else if constexpr (std::is_same_v<T, std::int64_t>) {
                w.u8(static_cast<std::uint8_t>(ValueTag::kInt));
                w.i64(v);
            } else if constexpr (std::is_same_v<T, double>) {
                w.u8(static_cast<std::uint8_t>(ValueTag::kFloat));
                w.f64(v);
            } else if constexpr (std::is_same_v<T, std::string>) {
                w.u8(static_cast<std::uint8_t>(ValueTag::kString));
                w.str(v);
            } else {
                w.u8(static_cast<std::uint8_t>(ValueTag::kMatrix));
                write_matrix_info(w, v);
            }
        },
        value);
}

Value read_value(ByteReader& r) {
    const auto tag = r.u8();
    switch (static_cast<ValueTag>(tag)) {
        case ValueTag::kHandle: return HandleRef{r.u64()};
        case ValueTag::kInt: return r.i64();
        case ValueTag::kFloat: return r.f64();
        case ValueTag::kString: return r.str();
        case ValueTag::kMatrix: return read_matrix_info(r);
    }
    throw Error(ErrorCode::kDecode, fmt::format("unknown value tag {}", tag));
}

Bytes encode_values(std::span<const Value> values) {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(values.size()));
    for (const auto& v : values) write_value(w, v);
    return w.take();
}

namespace {

std::vector<Value> read_values(ByteReader& r) {
    const auto count = r.u32();
    std::vector<Value> out;
    // Each value takes at least 2 bytes; guards the reserve against hostile counts.
    out.reserve(std::min<std::size_t>(count, r.remaining()));
    for (std::uint32_t k = 0; k < count; ++k) out.push_back(read_value(r));
    return out;
}

}  // namespace

std::vector<Value> decode_values(std::span<const std::byte> payload) {
    ByteReader r(payload);
    auto out = read_values(r);
    r.expect_end();
    return out;
}

Bytes encode_task(const TaskRequest& task) {
    if (task.function.empty()) throw Error(ErrorCode::kBadArguments, "task function name is empty");
    ByteWriter w;
    w.u32(task.library);
    w.str(task.function);
    w.u32(static_cast<std::uint32_t>(task.args.size()));
    for (const auto& v : task.args) write_value(w, v);
    return w.take();
}

TaskRequest decode_task(std::span<const std::byte> payload) {
    ByteReader r(payload);
    TaskRequest task;
    task.library = r.u32();
    task.function = r.str();
    if (task.function.empty()) throw Error(ErrorCode::kDecode, "task function name is empty");
    task.args = read_values(r);
    r.expect_end();
    return task;
}

// ---------------------------------------------------------------------------

Bytes encode_worker_list(const WorkerList& list) {
    ByteWriter w;
    w.u32(list.grid_rows);
    w.u32(list.grid_cols);
    w.u32(static_cast<std::uint32_t>(list.workers.size()));
    for (const auto& worker : list.workers) {
        w.u32(worker.rank);
        w.str(worker.host);
        w.u16(worker.port);
        w.u64(worker.session);
    }
    return w.take();
}

WorkerList decode_worker_list(std::span<const std::byte> payload) {
    ByteReader r(payload);
    WorkerList list;
    list.grid_rows = r.u32();
    list.grid_cols = r.u32();
    const auto count = r.u32();
    for (std::uint32_t k = 0; k < count; ++k) {
        WorkerInfo info;
        info.rank = r.u32();
        info.host = r.str();
        info.port = r.u16();
        info.session = r.u64();
        list.workers.push_back(std::move(info));
    }
    r.expect_end();
    return list;
}

Bytes encode_create_matrix(const CreateMatrixRequest& request) {
    ByteWriter w;
    w.u64(request.rows);
    w.u64(request.cols);
    w.u8(static_cast<std::uint8_t>(request.layout.col));
    w.u8(static_cast<std::uint8_t>(request.layout.row));
    w.u8(static_cast<std::uint8_t>(request.type));
    return w.take();
}

CreateMatrixRequest decode_create_matrix(std::span<const std::byte> payload) {
    ByteReader r(payload);
    CreateMatrixRequest request;
    request.rows = r.u64();
    request.cols = r.u64();
    request.layout.col = read_scheme(r.u8());
    request.layout.row = read_scheme(r.u8());
    request.type = read_elem_type(r.u8());
    r.expect_end();
    return request;
}

Bytes encode_create_reply(const CreateMatrixReply& reply) {
    ByteWriter w;
    write_matrix_info(w, reply.info);
    w.u32(static_cast<std::uint32_t>(reply.local_shapes.size()));
    for (const auto& [rows, cols] : reply.local_shapes) {
        w.u64(rows);
        w.u64(cols);
    }
    return w.take();
}

CreateMatrixReply decode_create_reply(std::span<const std::byte> payload) {
    ByteReader r(payload);
    CreateMatrixReply reply;
    reply.info = read_matrix_info(r);
    const auto count = r.u32();
    for (std::uint32_t k = 0; k < count; ++k) {
        const Index rows = r.u64();
        const Index cols = r.u64();
        reply.local_shapes.emplace_back(rows, cols);
    }
    r.expect_end();
    return reply;
}

Bytes encode_error(const ErrorReply& error) {
    ByteWriter w;
    w.u16(error.code);
    w.str(error.message);
    return w.take();
}

ErrorReply decode_error(std::span<const std::byte> payload) {
    ByteReader r(payload);
    ErrorReply error;
    error.code = r.u16();
    error.message = r.str();
    r.expect_end();
    return error;
}

Bytes encode_u64(std::uint64_t value) {
    ByteWriter w;
    w.u64(value);
    return w.take();
}

std::uint64_t decode_u64(std::span<const std::byte> payload) {
    ByteReader r(payload);
    const auto v = r.u64();
    r.expect_end();
    return v;
}

Bytes encode_u32(std::uint32_t value) {
    ByteWriter w;
    w.u32(value);
    return w.take();
}

std::uint32_t decode_u32(std::span<const std::byte> payload) {
    ByteReader r(payload);
    const auto v = r.u32();
    r.expect_end();
    return v;
}

Bytes encode_string(std::string_view value) {
    ByteWriter w;
    w.str(value);
    return w.take();
}

std::string decode_string(std::span<const std::byte> payload) {
    ByteReader r(payload);
    auto v = r.str();
    r.expect_end();
    return v;
}

}  // namespace alchemist
