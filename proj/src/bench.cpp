#include "alchemist/bench.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <thread>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "alchemist/client.hpp"
#include "alchemist/error.hpp"
#include "alchemist/server.hpp"

namespace alchemist::bench {

void BenchConfig::validate() const {
    if (repetitions < 1) throw Error(ErrorCode::kBadArguments, "repetitions must be at least 1");
    if (workers < 1) throw Error(ErrorCode::kBadArguments, "workers must be at least 1");
    if (partitions < 1) throw Error(ErrorCode::kBadArguments, "partitions must be at least 1");
    if (pairs.empty() || buffer_sizes.empty()) throw Error(ErrorCode::kBadArguments, "no cells to run");
    for (const auto& p : pairs) require_legal(p);
    for (const auto b : buffer_sizes) {
        if (b < kMinBufferBytes) {
            throw Error(ErrorCode::kInvalidBuffer, fmt::format("buffer of {} bytes is below the {} byte minimum", b,
                                                               kMinBufferBytes));
        }
    }
    if (interval < 0) throw Error(ErrorCode::kBadArguments, "interval must be non-negative");
}

BenchResult run_bench(const BenchConfig& config, const std::function<void(const BenchRecord&)>& on_record) {
    config.validate();

    std::unique_ptr<Gateway> local;
    std::string host = "127.0.0.1";
    std::uint16_t port = 0;
    if (config.connect) {
        const auto colon = config.connect->rfind(':');
        if (colon == std::string::npos) {
            throw Error(ErrorCode::kConnection, fmt::format("expected HOST:PORT, got '{}'", *config.connect));
        }
        host = config.connect->substr(0, colon);
        const std::string digits = config.connect->substr(colon + 1);
        unsigned long value = 0;
        const auto [end, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
        if (ec != std::errc{} || end != digits.data() + digits.size() || value == 0 || value > 65535) {
            throw Error(ErrorCode::kConnection, fmt::format("bad port in '{}'", *config.connect));
        }
        port = static_cast<std::uint16_t>(value);
    } else {
        GatewayOptions options;
        options.num_workers = config.workers;
        options.host = host;
        options.log_to_stdout = false;
        local = Gateway::start_on_free_ports(options);
        port = local->driver_port();
    }

    const DenseMatrix matrix = DenseMatrix::random(config.rows, config.cols, config.seed);
    const RowPartitionedSource source = RowPartitionedSource::from_dense(matrix, config.partitions);
    const auto partitioning = source.ranges();

    BenchResult result;
    bool first = true;
    for (const DistPair pair : config.pairs) {
        for (const std::size_t buffer : config.buffer_sizes) {
            std::vector<BenchRecord> cell;
            try {
                for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
                    if (!first && config.interval > 0) {
                        std::this_thread::sleep_for(std::chrono::duration<double>(config.interval));
                    }
                    first = false;
                    auto session = ClientSession::connect(host, port, ClientOptions{buffer});
                    session.request_workers(config.workers);
                    const TransferPlan plan = plan_transfer(partitioning, session.grid(), pair, config.rows,
                                                            config.cols, sizeof(double), session.buffer_bytes());

                    const auto t0 = std::chrono::steady_clock::now();
                    if (config.partitions == 1) {
                        session.send_matrix(matrix, pair);
                    } else {
                        session.send_partitioned(source, pair);
                    }
                    const auto t1 = std::chrono::steady_clock::now();

                    const auto frames = session.block_frames_sent();
                    const auto sent = std::accumulate(frames.begin(), frames.end(), std::uint64_t{0});
                    if (sent != plan.total_messages) {
                        throw Error(ErrorCode::kInternal,
                                    fmt::format("sent {} block frames but the plan predicts {}", sent,
                                                plan.total_messages));
                    }
                    session.close();

                    BenchRecord record{pair,
                                       session.buffer_bytes(),
                                       rep,
                                       std::chrono::duration<double>(t1 - t0).count(),
                                       plan.total_messages,
                                       plan.total_fragments,
                                       plan.total_bytes};
                    if (on_record) on_record(record);
                    cell.push_back(record);
                }
                result.records.insert(result.records.end(), cell.begin(), cell.end());
            } catch (const std::exception& e) {
                result.failures.push_back(CellFailure{pair, buffer, e.what()});
            }
        }
    }
    return result;
}

double quantile(std::vector<double> samples, double q) {
    if (samples.empty()) throw Error(ErrorCode::kPrecondition, "quantile of an empty sample");
    std::sort(samples.begin(), samples.end());
    const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(samples.size() - 1);
    const auto lo = static_cast<std::size_t>(pos);
    const std::size_t hi = std::min(lo + 1, samples.size() - 1);
    return samples[lo] + (pos - static_cast<double>(lo)) * (samples[hi] - samples[lo]);
}

std::vector<CellSummary> summarize(const std::vector<BenchRecord>& records, Baseline baseline) {
    using Key = std::pair<std::string, std::uint64_t>;
    std::vector<Key> order;
    std::map<Key, std::vector<const BenchRecord*>> cells;
    for (const auto& r : records) {
        const Key key{to_string(r.pair), r.buffer_bytes};
        if (!cells.contains(key)) order.push_back(key);
        cells[key].push_back(&r);
    }
    const auto base = cells.find(Key{to_string(baseline.pair), baseline.buffer_bytes});
    if (base == cells.end()) {
        throw Error(ErrorCode::kMissingBaseline,
                    fmt::format("no records for baseline cell {} with {} byte buffer", to_string(baseline.pair),
                                baseline.buffer_bytes));
    }
    const auto seconds_of = [](const std::vector<const BenchRecord*>& rs) {
        std::vector<double> out;
        for (const auto* r : rs) out.push_back(r->seconds);
        return out;
    };
    const auto base_seconds = seconds_of(base->second);
    const double base_mean = std::accumulate(base_seconds.begin(), base_seconds.end(), 0.0) /
                             static_cast<double>(base_seconds.size());
    const double base_median = quantile(base_seconds, 0.5);

    std::vector<CellSummary> out;
    for (const auto& key : order) {
        const auto& rs = cells[key];
        const auto secs = seconds_of(rs);
        CellSummary c;
        c.pair = rs.front()->pair;
        c.buffer_bytes = key.second;
        c.count = secs.size();
        c.min = quantile(secs, 0.0) / base_mean;
        c.q1 = quantile(secs, 0.25) / base_mean;
        c.median_seconds = quantile(secs, 0.5);
        c.median = c.median_seconds / base_mean;
        c.q3 = quantile(secs, 0.75) / base_mean;
        c.max = quantile(secs, 1.0) / base_mean;
        c.mean = std::accumulate(secs.begin(), secs.end(), 0.0) / static_cast<double>(secs.size()) / base_mean;
        c.median_vs_baseline_median = c.median_seconds / base_median;
        c.messages = rs.front()->messages;
        c.fragments = rs.front()->fragments;
        c.bytes = rs.front()->bytes;
        out.push_back(c);
    }
    return out;
}

void write_csv(std::ostream& out, const std::vector<BenchRecord>& records) {
    out << kCsvHeader << '\n';
    for (const auto& r : records) {
        fmt::print(out, "\"{}\",{},{},{},{},{},{}\n", to_string(r.pair), r.buffer_bytes, r.rep, r.seconds,
                   r.messages, r.fragments, r.bytes);
    }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields(1);
    bool quoted = false;
    for (char ch : line) {
        if (ch == '"') {
            quoted = !quoted;
        } else if (ch == ',' && !quoted) {
            fields.emplace_back();
        } else if (ch != '\r') {
            fields.back().push_back(ch);
        }
    }
    return fields;
}

}  // namespace

std::vector<BenchRecord> read_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind(std::string(kCsvHeader), 0) != 0) {
        throw Error(ErrorCode::kDecode, "benchmark CSV is missing its header");
    }
    std::vector<BenchRecord> out;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv_line(line);
        if (f.size() != 7) throw Error(ErrorCode::kDecode, fmt::format("bad CSV row '{}'", line));
        BenchRecord r;
        r.pair = parse_pair(f[0]);
        r.buffer_bytes = std::stoull(f[1]);
        r.rep = std::stoull(f[2]);
        r.seconds = std::stod(f[3]);
        r.messages = std::stoull(f[4]);
        r.fragments = std::stoull(f[5]);
        r.bytes = std::stoull(f[6]);
        out.push_back(r);
    }
    return out;
}

void write_summary(std::ostream& out, const std::vector<CellSummary>& cells) {
    fmt::print(out, "{:<12} {:>12} {:>5} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>10} {:>10} {:>12}\n", "pair",
               "buffer", "reps", "min", "q1", "median", "q3", "max", "med/med", "messages", "fragments", "bytes");
    for (const auto& c : cells) {
        fmt::print(out, "{:<12} {:>12} {:>5} {:>8.3f} {:>8.3f} {:>8.3f} {:>8.3f} {:>8.3f} {:>8.3f} {:>10} {:>10} {:>12}\n",
                   to_string(c.pair), c.buffer_bytes, c.count, c.min, c.q1, c.median, c.q3, c.max,
                   c.median_vs_baseline_median, c.messages, c.fragments, c.bytes);
    }
}

std::size_t parse_byte_size(std::string_view text) {
    std::string t;
    for (char ch : text) {
        if (!std::isspace(static_cast<unsigned char>(ch))) t.push_back(static_cast<char>(std::toupper(ch)));
    }
    std::size_t digits = 0;
    while (digits < t.size() && std::isdigit(static_cast<unsigned char>(t[digits]))) ++digits;
    if (digits == 0) throw Error(ErrorCode::kBadArguments, fmt::format("cannot parse byte size '{}'", text));
    const std::size_t value = std::stoull(t.substr(0, digits));
    const std::string unit = t.substr(digits);
    std::size_t scale = 1;
    if (unit.empty() || unit == "B") {
        scale = 1;
    } else if (unit == "K" || unit == "KB" || unit == "KIB") {
        scale = std::size_t{1} << 10;
    } else if (unit == "M" || unit == "MB" || unit == "MIB") {
        scale = std::size_t{1} << 20;
    } else if (unit == "G" || unit == "GB" || unit == "GIB") {
        scale = std::size_t{1} << 30;
    } else {
        throw Error(ErrorCode::kBadArguments, fmt::format("unknown size unit in '{}'", text));
    }
    return value * scale;
}

std::vector<std::size_t> parse_byte_sizes(std::string_view list) {
    std::vector<std::size_t> out;
    std::size_t start = 0;
    while (start <= list.size()) {
        const auto end = std::min(list.find_first_of(",; ", start), list.size());
        if (end > start) out.push_back(parse_byte_size(list.substr(start, end - start)));
        start = end + 1;
    }
    return out;
}

std::vector<DistPair> parse_pairs(std::string_view list) {
    std::vector<DistPair> out;
    std::size_t start = 0;
    while (start <= list.size()) {
        const auto end = std::min(list.find_first_of("; \t", start), list.size());
        if (end > start) {
            out.push_back(parse_pair(list.substr(start, end - start)));
            require_legal(out.back());
        }
        start = end + 1;
    }
    return out;
}

}  // namespace alchemist::bench
