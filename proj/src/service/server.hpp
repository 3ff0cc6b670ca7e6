#pragma once

#include <memory>
#include <string>

#include "sessions.hpp"

namespace ctem::service {

/// HTTP + WebSocket front end. Runs its own io threads.
class Server {
public:
    Server(SessionManager& sessions, const std::string& address, unsigned short port);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Bound port (useful when constructed with port 0).
    unsigned short port() const;

    void start(int threads);
    void stop();
    /// Blocks until stop() is called and the io threads have exited.
    void wait();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

} // namespace ctem::service
