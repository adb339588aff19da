#pragma once

// Transfer-time benchmark: repeated timed sends of one seeded matrix across
// layouts and buffer sizes, with the planned message/fragment counts.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "alchemist/layout.hpp"
#include "alchemist/limits.hpp"

namespace alchemist::bench {

struct BenchConfig {
    Index rows = 2000;
    Index cols = 1000;
    std::vector<DistPair> pairs{kVcStar, kStarVc, kMcMr};
    std::vector<std::size_t> buffer_sizes{kMiB, 10 * kMiB, 100 * kMiB};
    std::size_t repetitions = 10;
    std::uint64_t seed = 42;
    std::size_t workers = 4;
    /// Pause between repetitions, seconds.
    double interval = 0.0;
    /// Row partitions of the source (emulates the client's data partitioning).
    std::size_t partitions = 1;
    /// "host:port" of a running gateway; empty spawns one in-process.
    std::optional<std::string> connect;

    void validate() const;
};

struct BenchRecord {
    DistPair pair;
    std::uint64_t buffer_bytes = 0;
    std::uint64_t rep = 0;
    double seconds = 0.0;
    std::uint64_t messages = 0;
    std::uint64_t fragments = 0;
    std::uint64_t bytes = 0;

    friend bool operator==(const BenchRecord&, const BenchRecord&) = default;
};

struct CellFailure {
    DistPair pair;
    std::uint64_t buffer_bytes = 0;
    std::string message;
};

struct BenchResult {
    std::vector<BenchRecord> records;
    std::vector<CellFailure> failures;
};

/// Runs every (pair, buffer) cell; a failing cell is reported, not fatal.
BenchResult run_bench(const BenchConfig& config,
                      const std::function<void(const BenchRecord&)>& on_record = {});

struct CellSummary {
    DistPair pair;
    std::uint64_t buffer_bytes = 0;
    std::size_t count = 0;
    // Seconds divided by the baseline cell's mean time.
    double min = 0, q1 = 0, median = 0, q3 = 0, max = 0, mean = 0;
    /// Median divided by the baseline cell's median time.
    double median_vs_baseline_median = 0;
    double median_seconds = 0;
    std::uint64_t messages = 0;
    std::uint64_t fragments = 0;
    std::uint64_t bytes = 0;
};

struct Baseline {
    DistPair pair = kVcStar;
    std::uint64_t buffer_bytes = 100 * kMiB;
};

/// Per-cell relative statistics in first-seen cell order; throws kMissingBaseline.
std::vector<CellSummary> summarize(const std::vector<BenchRecord>& records, Baseline baseline = {});

/// Linear-interpolation quantile of unsorted samples, q in [0, 1].
double quantile(std::vector<double> samples, double q);

inline constexpr std::string_view kCsvHeader = "pair,buffer_bytes,rep,seconds,messages,fragments,bytes";

void write_csv(std::ostream& out, const std::vector<BenchRecord>& records);
std::vector<BenchRecord> read_csv(std::istream& in);
void write_summary(std::ostream& out, const std::vector<CellSummary>& cells);

/// "1MB", "10 MiB", "4096", "512k"; binary multiples.
std::size_t parse_byte_size(std::string_view text);
std::vector<std::size_t> parse_byte_sizes(std::string_view list);
/// Pairs separated by ';' or whitespace, e.g. "[VC,STAR];[STAR,VC]" or "VC/STAR MC/MR".
std::vector<DistPair> parse_pairs(std::string_view list);

}  // namespace alchemist::bench
