#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "alchemist/error.hpp"
#include "alchemist/wire.hpp"
#include "wire_gen.hpp"

using namespace alchemist;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::kInternal;
}

std::uint8_t at(const Bytes& b, std::size_t i) { return std::to_integer<std::uint8_t>(b[i]); }

}  // namespace

TEST_CASE("empty OK frame is exactly the header") {
    const Frame f{kProtocolVersion, Command::kOk, 0, {}};
    const Bytes bytes = encode_frame(f, 4096);
    CHECK(bytes.size() == 16);
    const auto decoded = decode_frame(bytes, 4096);
    CHECK(decoded.consumed == 16);
    CHECK(decoded.frame == f);
}

TEST_CASE("header byte layout") {
    Frame f{kProtocolVersion, Command::kRunTask, 0x0102030405060708ull, Bytes(3, std::byte{0xAB})};
    const Bytes b = encode_frame(f, 4096);
    REQUIRE(b.size() == 19);
    CHECK(at(b, 0) == 1);
    CHECK(at(b, 1) == 7);
    CHECK(at(b, 2) == 0);
    CHECK(at(b, 3) == 0);
    for (int k = 0; k < 8; ++k) CHECK(at(b, 4 + k) == 8 - k);
    CHECK(at(b, 12) == 3);
    CHECK(at(b, 13) == 0);
    CHECK(at(b, 14) == 0);
    CHECK(at(b, 15) == 0);
    CHECK(at(b, 16) == 0xAB);
}

TEST_CASE("command codes are stable") {
    CHECK(static_cast<int>(Command::kHandshake) == 1);
    CHECK(static_cast<int>(Command::kRequestWorkers) == 2);
    CHECK(static_cast<int>(Command::kLoadLibrary) == 3);
    CHECK(static_cast<int>(Command::kCreateMatrix) == 4);
    CHECK(static_cast<int>(Command::kSendBlock) == 5);
    CHECK(static_cast<int>(Command::kFetchBlock) == 6);
    CHECK(static_cast<int>(Command::kRunTask) == 7);
    CHECK(static_cast<int>(Command::kListWorkers) == 8);
    CHECK(static_cast<int>(Command::kCloseSession) == 9);
    CHECK(static_cast<int>(Command::kError) == 10);
    CHECK(static_cast<int>(Command::kOk) == 11);
}

TEST_CASE("decode errors") {
    Bytes b = encode_frame(Frame{kProtocolVersion, Command::kOk, 1, Bytes(10)}, 4096);
    CHECK(code_of([&] { decode_frame(std::span(b).first(15), 4096); }) == ErrorCode::kIncompleteFrame);
    CHECK(code_of([&] { decode_frame(std::span(b).first(20), 4096); }) == ErrorCode::kIncompleteFrame);
    Bytes wrong = b;
    wrong[0] = std::byte{2};
    CHECK(code_of([&] { decode_frame(wrong, 4096); }) == ErrorCode::kVersionMismatch);
    Bytes unknown = b;
    unknown[1] = std::byte{0};
    CHECK(code_of([&] { decode_frame(unknown, 4096); }) == ErrorCode::kUnknownCommand);
    unknown[1] = std::byte{12};
    CHECK(code_of([&] { decode_frame(unknown, 4096); }) == ErrorCode::kUnknownCommand);
    CHECK(code_of([&] { decode_frame(b, 20); }) == ErrorCode::kFrameTooLarge);
}

TEST_CASE("a payload as large as the buffer is too large") {
    const Frame f{kProtocolVersion, Command::kOk, 0, Bytes(4096)};
    CHECK(code_of([&] { encode_frame(f, 4096); }) == ErrorCode::kFrameTooLarge);
    const Frame fits{kProtocolVersion, Command::kOk, 0, Bytes(4096 - 16)};
    CHECK(encode_frame(fits, 4096).size() == 4096);
}

TEST_CASE("decode consumes exactly one frame from a stream") {
    const Frame a{kProtocolVersion, Command::kHandshake, 3, Bytes(5, std::byte{1})};
    const Frame b{kProtocolVersion, Command::kOk, 4, Bytes(2, std::byte{2})};
    Bytes stream = encode_frame(a, 4096);
    const Bytes tail = encode_frame(b, 4096);
    stream.insert(stream.end(), tail.begin(), tail.end());
    const auto first = decode_frame(stream, 4096);
    CHECK(first.frame == a);
    CHECK(first.consumed == 21);
    const auto second = decode_frame(std::span(stream).subspan(first.consumed), 4096);
    CHECK(second.frame == b);
}

TEST_CASE("random frames round-trip") {
    std::mt19937_64 rng(1);
    for (int k = 0; k < 1000; ++k) {
        const std::size_t buffer = 16 + 1 + rng() % 3000;
        const Frame f = wiregen::frame(rng, buffer - 16);
        const Bytes bytes = encode_frame(f, buffer);
        REQUIRE(bytes.size() <= buffer);
        const auto d = decode_frame(bytes, buffer);
        REQUIRE(d.frame == f);
        REQUIRE(d.consumed == bytes.size());
    }
}

TEST_CASE("block metadata layout") {
    BlockSelection sel{9, {1, 2, 3}, {4, 5, 6}};
    const std::vector<double> values(18, 0.5);
    BlockMessage block = make_block(sel, values);
    block.offset = 0;
    const Bytes p = encode_block(block);
    REQUIRE(p.size() == 72 + 18 * 8);
    ByteReader r(p);
    CHECK(r.u64() == 9);
    CHECK(r.u64() == 1);
    CHECK(r.u64() == 2);
    CHECK(r.u64() == 3);
    CHECK(r.u64() == 4);
    CHECK(r.u64() == 5);
    CHECK(r.u64() == 6);
    CHECK(r.u64() == 0);
    CHECK(r.u8() == 1);
    CHECK(r.u8() == 0);
    CHECK(r.u16() == 0);
    CHECK(r.u32() == 18);
    CHECK(r.f64() == 0.5);
}

TEST_CASE("f64 payloads keep bit patterns") {
    const std::vector<double> odd{-0.0, std::numeric_limits<double>::denorm_min(),
                                  std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::infinity(),
                                  1.0 / 3.0, -1e308};
    const BlockMessage block = make_block({1, {0, 1, 1}, {0, 1, 6}}, odd);
    const auto back = block_values(decode_block(encode_block(block)));
    REQUIRE(back.size() == odd.size());
    CHECK(std::memcmp(back.data(), odd.data(), odd.size() * sizeof(double)) == 0);
}

TEST_CASE("f32 blocks") {
    const std::vector<double> vals{1.5, -2.25, 3.0, 0.1};
    const BlockMessage block = make_block({2, {0, 1, 2}, {0, 1, 2}}, vals, ElemType::kF32);
    CHECK(block.data.size() == 16);
    const auto back = block_values(decode_block(encode_block(block)));
    CHECK(back[0] == 1.5);
    CHECK(back[1] == -2.25);
    CHECK(back[3] == static_cast<double>(0.1f));
}

TEST_CASE("block decode validation") {
    const BlockMessage block = make_block({1, {0, 1, 2}, {0, 1, 2}}, std::vector<double>(4, 1.0));
    Bytes p = encode_block(block);
    Bytes truncated(p.begin(), p.end() - 1);
    CHECK(code_of([&] { decode_block(truncated); }) == ErrorCode::kDecode);
    Bytes bad_type = p;
    bad_type[64] = std::byte{7};
    CHECK(code_of([&] { decode_block(bad_type); }) == ErrorCode::kDecode);
    Bytes past_end = p;
    past_end[56] = std::byte{1};  // offset 1 with 4 elements overruns a 4-element selection
    CHECK(code_of([&] { decode_block(past_end); }) == ErrorCode::kDecode);
}

TEST_CASE("chunking 250 elements with room for 100 per frame") {
    std::vector<double> v(250);
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = static_cast<double>(k);
    const BlockMessage block = make_block({5, {0, 1, 25}, {0, 1, 10}}, v);
    const std::size_t buffer = 16 + 72 + 100 * 8;
    const auto frames = chunk_block(block, buffer, 3);
    REQUIRE(frames.size() == 3);
    std::vector<BlockMessage> pieces;
    for (const auto& f : frames) {
        CHECK(encode_frame(f, buffer).size() <= buffer);
        CHECK(f.session_id == 3);
        CHECK(f.command == Command::kSendBlock);
        pieces.push_back(decode_block(f.payload));
    }
    CHECK(pieces[0].count() == 100);
    CHECK(pieces[1].count() == 100);
    CHECK(pieces[2].count() == 50);
    CHECK(pieces[2].offset == 200);
    CHECK(reassemble_block(pieces) == block);
    CHECK(chunk_block(block, 1 << 20).size() == 1);
    CHECK(code_of([&] { chunk_block(block, 88); }) == ErrorCode::kInvalidBuffer);
}

TEST_CASE("empty block is one frame") {
    const BlockMessage block = make_block({5, {0, 1, 0}, {0, 1, 0}}, {});
    const auto frames = chunk_block(block, 4096);
    REQUIRE(frames.size() == 1);
    CHECK(decode_block(frames[0].payload).count() == 0);
}

TEST_CASE("random blocks reassemble") {
    std::mt19937_64 rng(2);
    for (int k = 0; k < 500; ++k) {
        const BlockMessage block = wiregen::block(rng);
        const std::size_t w = elem_size(block.type);
        const std::size_t buffer = 88 + w * (1 + rng() % 64);
        const auto frames = chunk_block(block, buffer);
        const std::size_t per = (buffer - 88) / w;
        REQUIRE(frames.size() == std::max<std::size_t>(1, (block.count() + per - 1) / per));
        std::vector<BlockMessage> pieces;
        for (const auto& f : frames) {
            const Bytes bytes = encode_frame(f, buffer);
            REQUIRE(bytes.size() <= buffer);
            pieces.push_back(decode_block(decode_frame(bytes, buffer).frame.payload));
        }
        REQUIRE(reassemble_block(pieces) == block);
    }
}

TEST_CASE("task round trips") {
    const TaskRequest svd{1, "truncated_svd", {HandleRef{7}, std::int64_t{10}}};
    CHECK(decode_task(encode_task(svd)) == svd);
    const TaskRequest empty{1, "reset", {}};
    CHECK(decode_task(encode_task(empty)) == empty);
    CHECK(code_of([] { encode_task(TaskRequest{1, "", {}}); }) == ErrorCode::kBadArguments);

    std::mt19937_64 rng(4);
    for (int k = 0; k < 100; ++k) {
        const TaskRequest t = wiregen::task(rng);
        REQUIRE(decode_task(encode_task(t)) == t);
    }
}

TEST_CASE("value tags and layout") {
    const std::vector<Value> values{HandleRef{0x11}, std::int64_t{-2}, 1.0, std::string("ab"),
                                    MatrixInfo{3, 4, 5, kMcMr, ElemType::kF32}};
    const Bytes p = encode_values(values);
    ByteReader r(p);
    CHECK(r.u32() == 5);
    CHECK(r.u8() == 1);
    CHECK(r.u64() == 0x11);
    CHECK(r.u8() == 2);
    CHECK(r.i64() == -2);
    CHECK(r.u8() == 3);
    CHECK(r.f64() == 1.0);
    CHECK(r.u8() == 4);
    CHECK(r.str() == "ab");
    CHECK(r.u8() == 5);
    CHECK(r.u64() == 3);
    CHECK(r.u64() == 4);
    CHECK(r.u64() == 5);
    CHECK(r.u8() == static_cast<std::uint8_t>(DistScheme::kMC));
    CHECK(r.u8() == static_cast<std::uint8_t>(DistScheme::kMR));
    CHECK(r.u8() == 2);
    r.expect_end();
    CHECK(decode_values(p) == values);

    Bytes bad = p;
    bad[4] = std::byte{9};
    CHECK(code_of([&] { decode_values(bad); }) == ErrorCode::kDecode);
}

TEST_CASE("control payloads round-trip") {
    const WorkerList list{2, 2, {{0, "a", 10, 0}, {1, "b", 11, 4}, {2, "c", 12, 4}, {3, "d", 13, 0}}};
    CHECK(decode_worker_list(encode_worker_list(list)) == list);
    const CreateMatrixRequest req{7, 9, kStarVr, ElemType::kF32};
    const auto back = decode_create_matrix(encode_create_matrix(req));
    CHECK(back.rows == 7);
    CHECK(back.cols == 9);
    CHECK(back.layout == kStarVr);
    CHECK(back.type == ElemType::kF32);
    const CreateMatrixReply reply{{4, 7, 9, kStarVr, ElemType::kF32}, {{7, 5}, {7, 4}}};
    const auto rb = decode_create_reply(encode_create_reply(reply));
    CHECK(rb.info == reply.info);
    CHECK(rb.local_shapes == reply.local_shapes);
    const auto err = decode_error(encode_error({22, "out-of-workers: none left"}));
    CHECK(err.code == 22);
    CHECK(err.message == "out-of-workers: none left");
    CHECK(decode_u64(encode_u64(~0ull)) == ~0ull);
    CHECK(decode_u32(encode_u32(77)) == 77);
    CHECK(decode_string(encode_string("testlib")) == "testlib");
    CHECK(code_of([] { decode_u64(encode_u32(1)); }) == ErrorCode::kDecode);
}

TEST_CASE("piece encoder matches the block encoder") {
    std::mt19937_64 rng(8);
    for (int k = 0; k < 100; ++k) {
        BlockMessage block = wiregen::block(rng);
        const auto values = block_values(block);
        const std::size_t offset = values.empty() ? 0 : rng() % values.size();
        const std::span<const double> tail = std::span(values).subspan(offset);
        BlockMessage piece = make_block(block.selection, tail, block.type);
        piece.offset = offset;
        REQUIRE(encode_block_piece(block.selection, block.type, offset, tail) == encode_block(piece));
    }
}
