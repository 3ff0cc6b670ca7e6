// HTTP + WebSocket service hosting live agent sessions.
#include <csignal>
#include <filesystem>
#include <iostream>
#include <string>

#include <boost/asio/io_context.hpp>
#include <boost/asio/signal_set.hpp>
#include <CLI11.hpp>

#include "server.hpp"
#include "sessions.hpp"

namespace fs = std::filesystem;

int main(int argc, char** argv)
{
    CLI::App app{"ctem-serve: agent session service"};
    ctem::service::ServiceOptions opts;
    std::string address = "127.0.0.1";
    unsigned short port = 8080;
    int threads = 4;
    int idle_seconds = 600;
    int heartbeat_ms = 30000;

    app.add_option("--config", opts.config_path, "engine config JSON")->check(CLI::ExistingFile);
    app.add_option("--port", port, "listen port (0 picks a free one)");
    app.add_option("--address", address, "listen address");
    app.add_option("--data-dir", opts.data_dir, "where idle sessions are persisted");
    app.add_flag("--debug", opts.debug, "enable ?debug=1 state and the advance endpoint");
    app.add_option("--tick-ms", opts.tick_ms, "wall milliseconds per tick; 0 follows the wall clock")
        ->check(CLI::NonNegativeNumber);
    app.add_option("--idle-timeout", idle_seconds, "seconds before an idle session is persisted")
        ->check(CLI::PositiveNumber);
    app.add_option("--heartbeat-ms", heartbeat_ms, "WebSocket ping interval")->check(CLI::PositiveNumber);
    app.add_option("--threads", threads, "io threads")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    if (!opts.config_path.empty())
        opts.config_path = fs::absolute(opts.config_path).string();
    opts.idle_timeout = std::chrono::seconds(idle_seconds);
    opts.heartbeat = std::chrono::milliseconds(heartbeat_ms);

    try {
        fs::create_directories(opts.data_dir);
        ctem::service::SessionManager sessions(opts);
        ctem::service::Server server(sessions, address, port);
        server.start(threads);
        std::cout << "ctem-serve listening on " << address << ":" << server.port() << std::endl;

        boost::asio::io_context signals_ctx;
        boost::asio::signal_set signals(signals_ctx, SIGINT, SIGTERM);
        signals.async_wait([&](const boost::system::error_code&, int) { server.stop(); });
        signals_ctx.run();
        server.wait();
    } catch (const std::exception& e) {
        std::cerr << "ctem-serve: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
