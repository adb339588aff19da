// alchemistd: the gateway daemon. Driver on START_PORT, workers on the ports after it.

#include <csignal>
#include <cstdio>
#include <thread>

#include <CLI11.hpp>

#include "alchemist/bench.hpp"
#include "alchemist/error.hpp"
#include "alchemist/server.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Matrix gateway daemon"};
    alchemist::GatewayOptions options;
    int start_port = 24960;
    std::string log_path;
    std::string address_file;
    std::string max_buffer = "100MB";

    app.add_option("-p,--port", start_port, "Driver port; worker k listens on START_PORT+1+k")
        ->check(CLI::Range(1, 65535));
    app.add_option("-n,--workers", options.num_workers, "Number of worker endpoints")->check(CLI::PositiveNumber);
    app.add_option("--log", log_path, "Append the gateway log to FILE");
    app.add_option("--max-buffer", max_buffer, "Largest message buffer a session may negotiate (e.g. 100MB)");
    app.add_option("--address-file", address_file, "Write the driver's host:port to PATH once listening");
    app.add_option("--host", options.host, "Host name advertised to clients (default: hostname)");
    app.add_flag("-v,--verbose", options.verbose, "Log every worker frame");
    CLI11_PARSE(app, argc, argv);

    options.start_port = static_cast<std::uint16_t>(start_port);
    if (!log_path.empty()) options.log_path = log_path;
    if (!address_file.empty()) options.address_file = address_file;

    // Block termination signals before any gateway thread exists; main waits for them.
    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    std::unique_ptr<alchemist::Gateway> gateway;
    try {
        options.max_buffer_bytes = alchemist::bench::parse_byte_size(max_buffer);
        gateway = alchemist::Gateway::start(options);
    } catch (const alchemist::Error& e) {
        std::fprintf(stderr, "alchemistd: %s\n", e.what());
        return 1;
    }

    int received = 0;
    sigwait(&signals, &received);
    gateway->stop();
    return 0;
}
