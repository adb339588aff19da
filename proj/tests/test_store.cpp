#include <doctest.h>

#include "alchemist/error.hpp"
#include "alchemist/store.hpp"

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

std::vector<double> iota(std::size_t n, double start = 0) {
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = start + static_cast<double>(k);
    return v;
}

}  // namespace

TEST_CASE("VC,STAR local block accepts its own rows only") {
    const auto grid = make_grid(3);
    const MatrixInfo info{1, 7, 4, kVcStar, ElemType::kF64};
    LocalMatrix local(info, owned_slice(grid, kVcStar, 1, 7, 4));
    CHECK(local.local_rows() == 2);  // rows 1, 4
    CHECK(local.local_cols() == 4);
    CHECK_FALSE(local.complete());

    const BlockSelection mine{1, {1, 3, 2}, {0, 1, 4}};
    CHECK(local.write(make_block(mine, iota(8))) == 8);
    CHECK(local.complete());
    CHECK(local.values() == iota(8));

    const BlockSelection theirs{1, {2, 3, 2}, {0, 1, 4}};
    CHECK(code_of([&] { local.write(make_block(theirs, iota(8))); }) == ErrorCode::kOwnershipViolation);
    const BlockSelection past{1, {1, 3, 3}, {0, 1, 4}};  // row 7 is out of range
    CHECK(code_of([&] { local.write(make_block(past, iota(12))); }) == ErrorCode::kOwnershipViolation);
    CHECK(local.write(make_block({1, {1, 3, 0}, {0, 1, 4}}, {})) == 0);
}

TEST_CASE("partial writes fill in order and reads return the selection") {
    const auto grid = make_grid(4);
    const MatrixInfo info{2, 6, 6, kMcMr, ElemType::kF64};
    const auto slice = owned_slice(grid, kMcMr, 3, 6, 6);  // grid (1,1): rows 1,3,5 cols 1,3,5
    CHECK(slice.rows == Stride{1, 2, 3});
    CHECK(slice.cols == Stride{1, 2, 3});
    LocalMatrix local(info, slice);
    const BlockSelection sel{2, slice.rows, slice.cols};
    BlockMessage whole = make_block(sel, iota(9, 10));
    const auto pieces = chunk_block(whole, 88 + 8 * 4);
    REQUIRE(pieces.size() == 3);
    std::uint64_t written = 0;
    for (const auto& f : pieces) written += local.write(decode_block(f.payload));
    CHECK(written == 9);
    CHECK(local.complete());
    const BlockMessage sub = local.read({2, {3, 2, 2}, {1, 4, 2}});  // rows 3,5 cols 1,5
    CHECK(block_values(sub) == std::vector<double>{13, 15, 16, 18});
    CHECK(code_of([&] { local.read({2, {0, 1, 1}, {1, 1, 1}}); }) == ErrorCode::kOwnershipViolation);
}

TEST_CASE("a failed write changes nothing") {
    const auto grid = make_grid(2);
    const MatrixInfo info{3, 4, 2, kVcStar, ElemType::kF64};
    LocalMatrix local(info, owned_slice(grid, kVcStar, 0, 4, 2));
    CHECK(code_of([&] { local.write(make_block({3, {0, 1, 2}, {0, 1, 2}}, iota(4))); }) ==
          ErrorCode::kOwnershipViolation);
    CHECK(local.filled() == 0);
    CHECK(code_of([&] { local.write(make_block({3, {0, 2, 2}, {0, 1, 2}}, iota(4), ElemType::kF32)); }) ==
          ErrorCode::kBadArguments);
    CHECK(local.filled() == 0);
}

TEST_CASE("f32 storage") {
    const auto grid = make_grid(1);
    const MatrixInfo info{4, 2, 2, kCircCirc, ElemType::kF32};
    LocalMatrix local(info, owned_slice(grid, kCircCirc, 0, 2, 2));
    local.write(make_block({4, {0, 1, 2}, {0, 1, 2}}, std::vector<double>{0.5, 1.5, -2, 4}, ElemType::kF32));
    CHECK(local.values() == std::vector<double>{0.5, 1.5, -2, 4});
}

TEST_CASE("assign marks complete") {
    const auto grid = make_grid(1);
    LocalMatrix local({5, 2, 3, kVcStar, ElemType::kF64}, owned_slice(grid, kVcStar, 0, 2, 3));
    local.assign(iota(6));
    CHECK(local.complete());
    CHECK(local.values() == iota(6));
}

TEST_CASE("MatrixStore keys by session and handle") {
    MatrixStore store;
    const auto grid = make_grid(1);
    const MatrixInfo a{1, 3, 3, kVcStar, ElemType::kF64};
    const MatrixInfo b{2, 2, 2, kVcStar, ElemType::kF64};
    store.create(10, a, owned_slice(grid, kVcStar, 0, 3, 3));
    store.create(10, b, owned_slice(grid, kVcStar, 0, 2, 2));
    store.create(11, MatrixInfo{3, 1, 1, kVcStar, ElemType::kF64}, owned_slice(grid, kVcStar, 0, 1, 1));
    CHECK(store.size() == 3);
    CHECK(store.elements(10) == 13);
    CHECK(store.find(11, 1) == nullptr);
    CHECK(code_of([&] { store.get(11, 1); }) == ErrorCode::kStaleHandle);
    store.erase(10, 2);
    CHECK(store.elements(10) == 9);
    store.drop_session(10);
    CHECK(store.size() == 1);
    CHECK(store.elements(10) == 0);
    CHECK(store.find(11, 3) != nullptr);
}
