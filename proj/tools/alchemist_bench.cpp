// alchemist-bench: transfer-time benchmark across layouts and buffer sizes.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "alchemist/bench.hpp"
#include "alchemist/error.hpp"

namespace bench = alchemist::bench;

int main(int argc, char** argv) {
    CLI::App app{"Matrix gateway transfer benchmark"};
    bench::BenchConfig config;
    std::string pairs = "[VC,STAR];[STAR,VC];[MC,MR]";
    std::string buffers = "1MB,10MB,100MB";
    std::string csv_path;
    std::string connect;
    std::string baseline_pair = "[VC,STAR]";
    std::string baseline_buffer = "100MB";
    bool no_summary = false;

    app.add_option("--rows", config.rows, "Matrix rows")->check(CLI::NonNegativeNumber);
    app.add_option("--cols", config.cols, "Matrix columns")->check(CLI::NonNegativeNumber);
    app.add_option("--workers", config.workers, "Workers requested per session")->check(CLI::PositiveNumber);
    app.add_option("--pairs", pairs, "Layouts separated by ';' or spaces, e.g. \"[VC,STAR];[MC,MR]\"");
    app.add_option("--buffers", buffers, "Buffer sizes, comma separated (e.g. 1MB,10MB,100MB)");
    app.add_option("--reps", config.repetitions, "Repetitions per cell")->check(CLI::PositiveNumber);
    app.add_option("--seed", config.seed, "Seed for the random matrix");
    app.add_option("--partitions", config.partitions, "Row partitions of the source")->check(CLI::PositiveNumber);
    app.add_option("--csv", csv_path, "Write per-repetition records here instead of stdout");
    app.add_option("--interval", config.interval, "Seconds to pause between repetitions");
    app.add_option("--connect", connect, "HOST:PORT of a running gateway (default: spawn one in-process)");
    app.add_option("--baseline-pair", baseline_pair, "Layout of the normalization cell");
    app.add_option("--baseline-buffer", baseline_buffer, "Buffer of the normalization cell");
    app.add_flag("--no-summary", no_summary, "Skip the relative summary table on stderr");
    CLI11_PARSE(app, argc, argv);

    try {
        config.pairs = bench::parse_pairs(pairs);
        config.buffer_sizes = bench::parse_byte_sizes(buffers);
        if (!connect.empty()) config.connect = connect;

        const auto result = bench::run_bench(config, [](const bench::BenchRecord& r) {
            std::fprintf(stderr, "%s buffer=%llu rep=%llu %.6fs\n", alchemist::to_string(r.pair).c_str(),
                         static_cast<unsigned long long>(r.buffer_bytes), static_cast<unsigned long long>(r.rep),
                         r.seconds);
        });
        if (csv_path.empty()) {
            bench::write_csv(std::cout, result.records);
        } else {
            std::ofstream out(csv_path);
            bench::write_csv(out, result.records);
        }
        for (const auto& f : result.failures) {
            std::fprintf(stderr, "cell %s buffer=%llu failed: %s\n", alchemist::to_string(f.pair).c_str(),
                         static_cast<unsigned long long>(f.buffer_bytes), f.message.c_str());
        }
        if (!no_summary && !result.records.empty()) {
            const bench::Baseline baseline{alchemist::parse_pair(baseline_pair),
                                           bench::parse_byte_size(baseline_buffer)};
            try {
                bench::write_summary(std::cerr, bench::summarize(result.records, baseline));
            } catch (const alchemist::Error& e) {
                std::fprintf(stderr, "summary skipped: %s\n", e.what());
            }
        }
        return result.failures.empty() ? 0 : 2;
    } catch (const alchemist::Error& e) {
        std::fprintf(stderr, "alchemist-bench: %s\n", e.what());
        return 1;
    }
}
