#include "server.hpp"

#include <charconv>
#include <map>
#include <optional>
#include <thread>
#include <vector>

#include <boost/asio/co_spawn.hpp>
#include <boost/asio/detached.hpp>
#include <boost/asio/io_context.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/redirect_error.hpp>
#include <boost/asio/steady_timer.hpp>
#include <boost/asio/strand.hpp>
#include <boost/asio/use_awaitable.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

namespace ctem::service {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using asio::awaitable;
using asio::use_awaitable;

using Request = http::request<http::string_body>;
using Response = http::response<http::string_body>;

namespace {

constexpr std::uint16_t kCloseUnknownSession = 4404;

struct Target {
    std::vector<std::string> segments;
    std::map<std::string, std::string> query;
};

Target parse_target(std::string_view target)
{
    Target t;
    const auto q = target.find('?');
    auto path = target.substr(0, q);
    while (!path.empty()) {
        const auto slash = path.find('/');
        auto seg = path.substr(0, slash);
        if (!seg.empty())
            t.segments.emplace_back(seg);
        if (slash == std::string_view::npos)
            break;
        path.remove_prefix(slash + 1);
    }
    if (q != std::string_view::npos) {
        auto rest = target.substr(q + 1);
        while (!rest.empty()) {
            const auto amp = rest.find('&');
            const auto pair = rest.substr(0, amp);
            const auto eq = pair.find('=');
            t.query[std::string(pair.substr(0, eq))] =
                eq == std::string_view::npos ? std::string() : std::string(pair.substr(eq + 1));
            if (amp == std::string_view::npos)
                break;
            rest.remove_prefix(amp + 1);
        }
    }
    return t;
}

std::uint64_t parse_cursor(const Target& t)
{
    const auto it = t.query.find("cursor");
    if (it == t.query.end() || it->second.empty())
        return 0;
    std::uint64_t v = 0;
    const auto& s = it->second;
    const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ApiError{422, "validation-error", "cursor must be a non-negative integer", "cursor"};
    return v;
}

bool flag(const Target& t, const std::string& key)
{
    const auto it = t.query.find(key);
    return it != t.query.end() && (it->second == "1" || it->second == "true");
}

Response make_response(const Request& req, int status, const std::optional<nlohmann::json>& body)
{
    Response res{static_cast<http::status>(status), req.version()};
    res.set(http::field::server, "ctem");
    res.set(http::field::access_control_allow_origin, "*");
    res.keep_alive(req.keep_alive());
    if (body) {
        res.set(http::field::content_type, "application/json");
        res.body() = body->dump();
    }
    res.prepare_payload();
    return res;
}

Response error_response(const Request& req, const ApiError& e)
{
    nlohmann::json body{{"error", e.code}, {"message", e.message}};
    body["field"] = e.field.empty() ? nlohmann::json(nullptr) : nlohmann::json(e.field);
    return make_response(req, e.status, body);
}

nlohmann::json body_object(const Request& req)
{
    if (req.body().empty())
        return nlohmann::json::object();
    auto j = nlohmann::json::parse(req.body(), nullptr, false);
    if (j.is_discarded())
        throw ApiError{422, "validation-error", "body is not valid JSON", "<body>"};
    if (!j.is_object())
        throw ApiError{422, "validation-error", "body must be a JSON object", "<body>"};
    return j;
}

std::string required_string(const nlohmann::json& body, const std::string& key)
{
    if (!body.contains(key) || !body[key].is_string())
        throw ApiError{422, "validation-error", key + " must be a string", key};
    return body[key].get<std::string>();
}

void require_method(const Request& req, http::verb verb)
{
    if (req.method() != verb)
        throw ApiError{405, "method-not-allowed", "method not allowed", ""};
}

} // namespace

struct Server::Impl {
    Impl(SessionManager& m, const std::string& address, unsigned short port)
        : sessions(m), acceptor(ioc, tcp::endpoint(asio::ip::make_address(address), port))
    {
    }

    Response route(const Request& req);
    Response route_session(const Request& req, const Target& t);
    awaitable<void> listen();
    awaitable<void> serve(tcp::socket socket);
    awaitable<void> stream(beast::tcp_stream tcp, Request req, Target target);

    SessionManager& sessions;
    asio::io_context ioc;
    tcp::acceptor acceptor;
    std::vector<std::thread> threads;
};

Response Server::Impl::route(const Request& req)
{
    const auto t = parse_target(std::string_view(req.target().data(), req.target().size()));
    const auto& seg = t.segments;
    if (req.method() == http::verb::options)
        return make_response(req, 204, std::nullopt);
    if (seg.size() == 2 && seg[0] == "v1" && seg[1] == "healthz") {
        require_method(req, http::verb::get);
        return make_response(req, 200, nlohmann::json{{"status", "ok"}, {"version", ctem_version()}});
    }
    if (seg.size() >= 2 && seg[0] == "v1" && seg[1] == "sessions") {
        if (seg.size() == 2) {
            require_method(req, http::verb::post);
            const auto body = body_object(req);
            const auto persona = required_string(body, "persona");
            const auto s = sessions.create(persona);
            return make_response(req, 201, nlohmann::json{{"session_id", s->id()}, {"persona", s->persona_name()}});
        }
        return route_session(req, t);
    }
    throw ApiError{404, "not-found", "no such route", ""};
}

Response Server::Impl::route_session(const Request& req, const Target& t)
{
    const auto& seg = t.segments;
    const auto s = sessions.find(seg[2]);
    if (!s)
        throw ApiError{404, "not-found", "unknown session", "session_id"};
    const bool debug_allowed = sessions.options().debug;

    if (seg.size() == 3) {
        require_method(req, http::verb::get);
        return make_response(req, 200,
                             nlohmann::json{{"session_id", s->id()},
                                            {"persona", s->persona_name()},
                                            {"created_at", s->created_at()},
                                            {"last_seq", s->last_seq()}});
    }
    const auto& what = seg[3];
    if (what == "messages" && seg.size() == 4) {
        require_method(req, http::verb::post);
        const auto body = body_object(req);
        const auto text = required_string(body, "text");
        std::optional<double> hint;
        if (body.contains("sentiment_hint") && !body["sentiment_hint"].is_null()) {
            if (!body["sentiment_hint"].is_number())
                throw ApiError{422, "validation-error", "sentiment_hint must be a number", "sentiment_hint"};
            hint = body["sentiment_hint"].get<double>();
        }
        const auto id = s->post_message(text, hint);
        return make_response(req, 202, nlohmann::json{{"message_id", id}});
    }
    if (what == "state" && seg.size() == 4) {
        require_method(req, http::verb::get);
        const bool debug = flag(t, "debug");
        if (debug && !debug_allowed)
            throw ApiError{403, "forbidden", "debug state is disabled", "debug"};
        return make_response(req, 200, s->state(debug));
    }
    if (what == "timeline" && seg.size() == 4) {
        require_method(req, http::verb::get);
        return make_response(req, 200, nlohmann::json{{"posts", s->timeline()}});
    }
    if (what == "timeline" && seg.size() == 6 && seg[5] == "reactions") {
        require_method(req, http::verb::post);
        const auto body = body_object(req);
        const auto kind = required_string(body, "kind");
        std::string text;
        if (body.contains("text") && !body["text"].is_null())
            text = required_string(body, "text");
        s->post_reaction(seg[4], kind, text);
        return make_response(req, 204, std::nullopt);
    }
    if (what == "persona" && seg.size() == 4) {
        if (req.method() == http::verb::get)
            return make_response(req, 200, s->persona());
        require_method(req, http::verb::put);
        return make_response(req, 200, s->replace_persona(body_object(req)));
    }
    if (what == "events" && seg.size() == 4) {
        require_method(req, http::verb::get);
        const auto events = s->events_since(parse_cursor(t));
        return make_response(req, 200, nlohmann::json{{"events", events}, {"last_seq", s->last_seq()}});
    }
    if (what == "advance" && seg.size() == 4) {
        require_method(req, http::verb::post);
        if (!debug_allowed)
            throw ApiError{403, "forbidden", "advance is only available in debug mode", ""};
        const auto body = body_object(req);
        if (!body.contains("ticks") || !body["ticks"].is_number_integer() || body["ticks"].get<int>() < 1 ||
            body["ticks"].get<int>() > 100000)
            throw ApiError{422, "validation-error", "ticks must be an integer in [1, 100000]", "ticks"};
        try {
            s->advance(body["ticks"].get<int>());
        } catch (const api::Failure& f) {
            throw from_failure(f);
        }
        return make_response(req, 200, s->state(debug_allowed));
    }
    throw ApiError{404, "not-found", "no such route", ""};
}

awaitable<void> Server::Impl::listen()
{
    for (;;) {
        tcp::socket socket(asio::make_strand(ioc));
        boost::system::error_code ec;
        co_await acceptor.async_accept(socket, asio::redirect_error(use_awaitable, ec));
        if (ec) {
            if (ec == asio::error::operation_aborted || !acceptor.is_open())
                co_return;
            continue;
        }
        const auto ex = socket.get_executor();
        asio::co_spawn(ex, serve(std::move(socket)), asio::detached);
    }
}

awaitable<void> Server::Impl::serve(tcp::socket socket)
{
    beast::tcp_stream tcp(std::move(socket));
    beast::flat_buffer buffer;
    for (;;) {
        Request req;
        boost::system::error_code ec;
        tcp.expires_after(std::chrono::seconds(60));
        co_await http::async_read(tcp, buffer, req, asio::redirect_error(use_awaitable, ec));
        if (ec)
            co_return;

        if (websocket::is_upgrade(req)) {
            auto t = parse_target(std::string_view(req.target().data(), req.target().size()));
            const auto& seg = t.segments;
            if (seg.size() == 4 && seg[0] == "v1" && seg[1] == "sessions" && seg[3] == "stream") {
                co_await stream(std::move(tcp), std::move(req), std::move(t));
                co_return;
            }
        }

        Response res;
        try {
            res = route(req);
        } catch (const ApiError& e) {
            res = error_response(req, e);
        } catch (const api::Failure& f) {
            res = error_response(req, from_failure(f));
        } catch (const std::exception& e) {
            res = error_response(req, ApiError{500, "internal", e.what(), ""});
        }
        const bool keep = res.keep_alive();
        co_await http::async_write(tcp, res, asio::redirect_error(use_awaitable, ec));
        if (ec || !keep) {
            tcp.socket().shutdown(tcp::socket::shutdown_send, ec);
            co_return;
        }
    }
}

namespace {

// Shared between the writer (the stream coroutine) and the reader. Both run
// on the connection's strand.
struct WsConn {
    explicit WsConn(beast::tcp_stream tcp) : ws(std::move(tcp)), wake(ws.get_executor()) {}
    websocket::stream<beast::tcp_stream> ws;
    asio::steady_timer wake;
    bool dirty = false;
    bool closed = false;
};

awaitable<void> read_loop(std::shared_ptr<WsConn> conn)
{
    beast::flat_buffer buffer;
    boost::system::error_code ec;
    while (!conn->closed) {
        co_await conn->ws.async_read(buffer, asio::redirect_error(use_awaitable, ec));
        if (ec)
            break;
        buffer.consume(buffer.size());
    }
    conn->closed = true;
    conn->wake.cancel();
}

} // namespace

awaitable<void> Server::Impl::stream(beast::tcp_stream tcp, Request req, Target target)
{
    tcp.expires_never();
    auto conn = std::make_shared<WsConn>(std::move(tcp));
    conn->ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    boost::system::error_code ec;
    co_await conn->ws.async_accept(req, asio::redirect_error(use_awaitable, ec));
    if (ec)
        co_return;

    std::uint64_t cursor = 0;
    std::shared_ptr<Session> session;
    try {
        cursor = parse_cursor(target);
        session = sessions.find(target.segments[2]);
    } catch (const ApiError&) {
        co_await conn->ws.async_close(websocket::close_reason(websocket::close_code::policy_error, "bad cursor"),
                                      asio::redirect_error(use_awaitable, ec));
        co_return;
    }
    if (!session) {
        co_await conn->ws.async_close(websocket::close_reason(static_cast<websocket::close_code>(kCloseUnknownSession), "unknown session"),
                                      asio::redirect_error(use_awaitable, ec));
        co_return;
    }

    const auto ex = co_await asio::this_coro::executor;
    // Weak: the session can outlive the io_context that owns the socket.
    const auto token = session->subscribe([weak = std::weak_ptr<WsConn>(conn), ex] {
        asio::post(ex, [weak] {
            if (auto conn = weak.lock()) {
                conn->dirty = true;
                conn->wake.cancel();
            }
        });
    });
    asio::co_spawn(ex, read_loop(conn), asio::detached);

    const auto heartbeat = sessions.options().heartbeat;
    conn->dirty = true;
    while (!conn->closed) {
        if (conn->dirty) {
            conn->dirty = false;
            for (const auto& e : session->events_since(cursor)) {
                conn->ws.text(true);
                co_await conn->ws.async_write(asio::buffer(e.dump()), asio::redirect_error(use_awaitable, ec));
                if (ec)
                    break;
                cursor = e["seq"].get<std::uint64_t>();
            }
            if (ec)
                break;
            continue;
        }
        conn->wake.expires_after(heartbeat);
        co_await conn->wake.async_wait(asio::redirect_error(use_awaitable, ec));
        if (!ec && !conn->dirty && !conn->closed) {
            session->touch();
            co_await conn->ws.async_ping({}, asio::redirect_error(use_awaitable, ec));
            if (ec)
                break;
        }
        ec = {};
    }
    session->unsubscribe(token);
    conn->closed = true;
    if (conn->ws.is_open())
        co_await conn->ws.async_close(websocket::close_code::normal, asio::redirect_error(use_awaitable, ec));
}

Server::Server(SessionManager& sessions, const std::string& address, unsigned short port)
    : impl_(std::make_unique<Impl>(sessions, address, port))
{
}

Server::~Server()
{
    stop();
    wait();
}

unsigned short Server::port() const
{
    return impl_->acceptor.local_endpoint().port();
}

void Server::start(int threads)
{
    asio::co_spawn(impl_->ioc, impl_->listen(), asio::detached);
    for (int i = 0; i < std::max(1, threads); ++i)
        impl_->threads.emplace_back([this] { impl_->ioc.run(); });
}

void Server::stop()
{
    impl_->ioc.stop();
}

void Server::wait()
{
    for (auto& t : impl_->threads)
        if (t.joinable())
            t.join();
    impl_->threads.clear();
}

} // namespace ctem::service
