// Acceptance suite: one PASS/FAIL line per criterion, with pinned tolerances
// and time limits. Exit status is non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>

#include <fmt/format.h>

#include "alchemist/bench.hpp"
#include "alchemist/client.hpp"
#include "gateway_fixture.hpp"
#include "oracles.hpp"
#include "wire_gen.hpp"

using namespace alchemist;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok && pass) {
            pass = false;
            detail = what;
        }
    }
};

constexpr double kSvdValueTol = 1e-8;
constexpr double kSvdReconstructionSlack = 1e-6;
constexpr double kSvdCrossWorkerTol = 1e-8;

int failures = 0;

void criterion(const char* name, double limit_seconds, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome out;
    try {
        out = body();
    } catch (const std::exception& e) {
        out.pass = false;
        out.detail = fmt::format("exception: {}", e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (out.pass && secs >= limit_seconds) {
        out.pass = false;
        out.detail = fmt::format("took {:.3f}s, limit {}s", secs, limit_seconds);
    }
    failures += !out.pass;
    std::printf("%s %-20s %8.3fs  %s\n", out.pass ? "PASS" : "FAIL", name, secs, out.detail.c_str());
    std::fflush(stdout);
}

template <class Table>
bool table_matches(const Table& table, DistPair pair) {
    const ProcessGrid grid = make_grid(6, 2);
    for (Index i = 0; i < 7; ++i)
        for (Index j = 0; j < 7; ++j)
            if (owner(grid, pair, i, j) + 1 != static_cast<Rank>(table[i][j])) return false;
    return true;
}

Outcome golden_layouts() {
    Outcome out;
    out.require(table_matches(oracle::kGoldenMcMr, kMcMr), "[MC,MR] table differs");
    out.require(table_matches(oracle::kGoldenMrMc, kMrMc), "[MR,MC] table differs");
    out.require(table_matches(oracle::kGoldenStarVc, kStarVc), "[STAR,VC] table differs");
    out.require(table_matches(oracle::kGoldenVcStar, kVcStar), "[VC,STAR] table differs");
    if (out.pass) out.detail = "4 tables x 49 entries";
    return out;
}

Outcome row_interleaving() {
    Outcome out;
    const ProcessGrid grid = make_grid(10);
    const Index m = 10000, n = 8;
    for (Rank k = 0; k < 10; ++k) {
        std::set<Index> rows;
        for (Index i = 0; i < m; ++i)
            if (owner(grid, kVcStar, i, 0) == k) rows.insert(i);
        out.require(rows.size() == 1000, fmt::format("rank {} owns {} rows", k, rows.size()));
        for (Index i : rows) out.require(i % 10 == k, fmt::format("rank {} owns row {}", k, i));
        const auto slice = owned_slice(grid, kVcStar, k, m, n);
        out.require(slice.rows == Stride{k, 10, 1000}, fmt::format("rank {} slice rows wrong", k));
    }
    const auto plan = plan_transfer(even_partitioning(m, 1), grid, kVcStar, m, n, 8, kDefaultBufferBytes);
    for (const auto& e : plan.entries) out.require(e.fragments == 1000, "plan fragments per worker != 1000");
    if (out.pass) out.detail = "10 ranks x 1000 rows";
    return out;
}

Outcome round_trip() {
    Outcome out;
    auto gw = fixture::gateway(6);
    std::mt19937_64 rng(0xacce);
    int transfers = 0;
    for (std::size_t p = 1; p <= 6; ++p) {
        const std::size_t buffer = (p % 2) ? kMinBufferBytes : kDefaultBufferBytes;
        auto s = ClientSession::connect("127.0.0.1", gw->driver_port(), ClientOptions{buffer});
        s.request_workers(p);
        for (DistPair pair : kLegalPairs) {
            for (int shape = 0; shape < 2; ++shape) {
                const Index m = shape == 0 ? 200 : 1 + rng() % 200;
                const Index n = shape == 0 ? 160 : 1 + rng() % 160;
                const auto a = DenseMatrix::random(m, n, rng());
                const auto back = s.fetch_matrix(s.send_matrix(a, pair));
                out.require(back.bitwise_equal(a),
                            fmt::format("{}x{} {} on {} workers differs", m, n, to_string(pair), p));
                ++transfers;
            }
        }
        s.close();
    }
    if (out.pass) out.detail = fmt::format("{} transfers bitwise equal", transfers);
    return out;
}

Outcome svd_oracle() {
    Outcome out;
    const auto a = DenseMatrix::random(200, 100, 20240);
    const std::size_t k = 10;
    const auto sigma = oracle::singular_values(a);
    const double best = oracle::best_rank_k_error(sigma, k);
    auto gw = fixture::gateway(4);
    std::vector<std::array<DenseMatrix, 3>> results;
    double worst_rel = 0, worst_ratio = 0;
    for (std::size_t p = 1; p <= 4; ++p) {
        auto s = ClientSession::connect("127.0.0.1", gw->driver_port());
        s.request_workers(p);
        s.load_library("testlib");
        const auto h = s.send_matrix(a, kVcStar);
        const auto r = s.run("testlib", "truncated_svd", {HandleRef{h.id}, static_cast<std::int64_t>(k)});
        std::array<DenseMatrix, 3> usv{s.fetch_matrix(std::get<MatrixInfo>(r[0])),
                                       s.fetch_matrix(std::get<MatrixInfo>(r[1])),
                                       s.fetch_matrix(std::get<MatrixInfo>(r[2]))};
        for (std::size_t i = 0; i < k; ++i) {
            const double rel = std::abs(usv[1].values[i] - sigma[i]) / sigma[i];
            worst_rel = std::max(worst_rel, rel);
            out.require(rel <= kSvdValueTol, fmt::format("sigma[{}] rel err {:.3e} on {} workers", i, rel, p));
        }
        const double err = oracle::reconstruction_error(a, usv[0], usv[1], usv[2]);
        worst_ratio = std::max(worst_ratio, err / best);
        out.require(err <= best * (1 + kSvdReconstructionSlack),
                    fmt::format("reconstruction {:.12e} > best {:.12e} on {} workers", err, best, p));
        results.push_back(std::move(usv));
        s.close();
    }
    double spread = 0;
    for (std::size_t p = 1; p < results.size(); ++p)
        for (std::size_t f = 0; f < 3; ++f)
            for (std::size_t e = 0; e < results[0][f].values.size(); ++e)
                spread = std::max(spread, std::abs(results[p][f].values[e] - results[0][f].values[e]));
    out.require(spread <= kSvdCrossWorkerTol, fmt::format("1-4 worker results differ by {:.3e}", spread));
    if (out.pass)
        out.detail = fmt::format("max sigma rel err {:.2e}, err/best {:.9f}, worker spread {:.2e}", worst_rel,
                                 worst_ratio, spread);
    return out;
}

Outcome fig2_scenario() {
    Outcome out;
    auto gw = fixture::gateway(9);
    auto a = ClientSession::connect("127.0.0.1", gw->driver_port());
    auto b = ClientSession::connect("127.0.0.1", gw->driver_port());
    auto c = ClientSession::connect("127.0.0.1", gw->driver_port());
    std::set<Rank> ranks;
    for (const auto& w : a.request_workers(4)) ranks.insert(w.rank);
    for (const auto& w : b.request_workers(3)) ranks.insert(w.rank);
    out.require(a.workers().size() == 4 && b.workers().size() == 3, "wrong allocation sizes");
    out.require(ranks.size() == 7, "sessions share a worker");
    const ErrorCode third = fixture::code_of([&] { c.request_workers(4); });
    out.require(third == ErrorCode::kOutOfWorkers, fmt::format("third request gave {}", to_string(third)));
    a.close();
    out.require(c.request_workers(4).size() == 4, "request after close failed");
    if (out.pass) out.detail = "4 + 3 disjoint, 4 refused, 4 granted after close";
    return out;
}

Outcome benchmark_trends() {
    Outcome out;
    bench::BenchConfig config;
    config.rows = 2000;
    config.cols = 1000;
    config.workers = 4;
    config.pairs = {kVcStar, kMcMr, kStarVc};
    config.buffer_sizes = {kMiB, 10 * kMiB, 100 * kMiB};
    config.repetitions = 10;
    config.seed = 42;
    const auto result = bench::run_bench(config);
    out.require(result.failures.empty(), "a benchmark cell failed");
    out.require(result.records.size() == 90, fmt::format("{} records", result.records.size()));

    std::map<std::pair<std::size_t, std::uint64_t>, std::uint64_t> messages, fragments;
    std::map<std::uint64_t, std::vector<double>> seconds;
    auto key = [](DistPair p) { return std::size_t(p.col) * 16 + std::size_t(p.row); };
    for (const auto& r : result.records) {
        messages[{key(r.pair), r.buffer_bytes}] = r.messages;
        fragments[{key(r.pair), r.buffer_bytes}] = r.fragments;
        seconds[r.buffer_bytes].push_back(r.seconds);
    }
    for (DistPair pair : config.pairs) {
        std::uint64_t prev = ~0ull;
        for (std::size_t b : config.buffer_sizes) {
            const auto m = messages[{key(pair), b}];
            out.require(m <= prev, fmt::format("{} messages rise at {} bytes", to_string(pair), b));
            prev = m;
        }
    }
    for (std::size_t b : config.buffer_sizes) {
        const auto vc = fragments[{key(kVcStar), b}];
        const auto mc = fragments[{key(kMcMr), b}];
        const auto sv = fragments[{key(kStarVc), b}];
        out.require(vc <= mc && mc <= sv, fmt::format("fragments {} / {} / {} out of order", vc, mc, sv));
    }
    const double small = oracle::quantile(seconds[kMiB], 0.5);
    const double large = oracle::quantile(seconds[100 * kMiB], 0.5);
    const std::string medians =
        fmt::format("median 1MB {:.4f}s vs 100MB {:.4f}s; messages {}/{}/{}", small, large,
                    messages[{key(kVcStar), kMiB}], messages[{key(kVcStar), 10 * kMiB}],
                    messages[{key(kVcStar), 100 * kMiB}]);
    out.require(small >= large, "1MB median below 100MB median: " + medians);
    if (out.pass) out.detail = medians;
    return out;
}

Outcome simulator() {
    Outcome out;
    auto gw = fixture::gateway(1);
    auto trace = [&] {
        auto s = ClientSession::connect("127.0.0.1", gw->driver_port());
        s.request_workers(1);
        s.load_library("testlib");
        std::vector<std::vector<Value>> steps{s.run("testlib", "reset", {})};
        int reached = -1;
        for (int k = 1; k <= 20 && reached < 0; ++k) {
            const auto st = s.run("testlib", "get_state", {});
            const double action = std::get<double>(st[1]) - std::get<double>(st[0]);
            steps.push_back(s.run("testlib", "step", {action}));
            if (std::get<double>(steps.back()[3]) == 0.0) reached = k;
        }
        s.close();
        return std::make_pair(reached, steps);
    };
    const auto first = trace();
    const auto second = trace();
    out.require(first.first == 10, fmt::format("score 0 reached at step {}", first.first));
    out.require(first.second == second.second, "traces differ between runs");
    if (out.pass) out.detail = "score 0 at step 10; traces identical";
    return out;
}

Outcome protocol() {
    Outcome out;
    std::mt19937_64 rng(0x9e37);
    int frames = 0;
    for (int k = 0; k < 1000; ++k) {
        const std::size_t buffer = kMinBufferBytes + rng() % 8192;
        switch (k % 3) {
            case 0: {
                const Frame f = wiregen::frame(rng, buffer - kFrameHeaderBytes);
                const Bytes bytes = encode_frame(f, buffer);
                out.require(bytes.size() <= buffer, "frame exceeds buffer");
                out.require(decode_frame(bytes, buffer).frame == f, "frame round trip differs");
                ++frames;
                break;
            }
            case 1: {
                const BlockMessage block = wiregen::block(rng);
                const std::size_t small = kBlockFrameOverhead + elem_size(block.type) * (1 + rng() % 40);
                std::vector<BlockMessage> pieces;
                for (const auto& f : chunk_block(block, small)) {
                    const Bytes bytes = encode_frame(f, small);
                    out.require(bytes.size() <= small, "block frame exceeds buffer");
                    pieces.push_back(decode_block(decode_frame(bytes, small).frame.payload));
                    ++frames;
                }
                out.require(reassemble_block(pieces) == block, "block reassembly differs");
                break;
            }
            default: {
                const TaskRequest t = wiregen::task(rng);
                const Frame f{kProtocolVersion, Command::kRunTask, rng(), encode_task(t)};
                const Bytes bytes = encode_frame(f, buffer);
                out.require(bytes.size() <= buffer, "task frame exceeds buffer");
                out.require(decode_task(decode_frame(bytes, buffer).frame.payload) == t, "task round trip differs");
                ++frames;
            }
        }
    }
    // Live traffic at the smallest buffer.
    auto gw = fixture::gateway(3);
    auto s = ClientSession::connect("127.0.0.1", gw->driver_port(), ClientOptions{kMinBufferBytes});
    s.request_workers(3);
    s.load_library("testlib");
    const auto a = DenseMatrix::random(150, 90, 3);
    const auto h = s.send_matrix(a, kMcMr);
    s.run("testlib", "truncated_svd", {HandleRef{h.id}, std::int64_t{5}});
    out.require(s.fetch_matrix(h).bitwise_equal(a), "live round trip differs");
    out.require(s.largest_frame_sent() <= s.buffer_bytes(), "client frame exceeds negotiated buffer");
    out.require(gw->largest_frame_sent() <= s.buffer_bytes(), "server frame exceeds negotiated buffer");
    if (out.pass)
        out.detail = fmt::format("1000 cases, {} frames; live max frame {} / {} bytes", frames,
                                 std::max(s.largest_frame_sent(), gw->largest_frame_sent()), s.buffer_bytes());
    return out;
}

}  // namespace

int main() {
    criterion("golden-layouts", 1, golden_layouts);
    criterion("row-interleaving", 1, row_interleaving);
    criterion("round-trip", 30, round_trip);
    criterion("svd-oracle", 30, svd_oracle);
    criterion("session-scenario", 5, fig2_scenario);
    criterion("benchmark-trends", 300, benchmark_trends);
    criterion("simulator", 1, simulator);
    criterion("protocol", 10, protocol);
    std::printf("%d of 8 criteria failed\n", failures);
    return failures == 0 ? 0 : 1;
}
