#include "huddle/service/server.hpp"

#include <chrono>
#include <mutex>
#include <thread>
#include <vector>

#include <boost/asio/co_spawn.hpp>
#include <boost/asio/detached.hpp>
#include <boost/asio/ip/tcp.hpp>
#include <boost/asio/redirect_error.hpp>
#include <boost/asio/signal_set.hpp>
#include <boost/asio/use_awaitable.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>
#include <spdlog/spdlog.h>

namespace huddle::service {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;
using asio::use_awaitable;

namespace {

constexpr std::size_t kBodyLimit = 1 << 20;

ApiRequest to_api(const http::request<http::string_body>& req) {
  ApiRequest r{std::string(req.method_string()), std::string(req.target()), req.body(), std::nullopt};
  if (auto it = req.find(http::field::authorization); it != req.end()) r.authorization = std::string(it->value());
  return r;
}

http::response<http::string_body> to_http(const ApiResponse& res, unsigned version, bool keep_alive) {
  http::response<http::string_body> out{static_cast<http::status>(res.status), version};
  out.set(http::field::server, "huddle");
  out.set(http::field::content_type, res.content_type);
  if (res.status == 401) out.set(http::field::www_authenticate, "Bearer");
  out.keep_alive(keep_alive);
  out.body() = res.body;
  out.prepare_payload();
  return out;
}

bool benign(const boost::system::error_code& ec) {
  return ec == http::error::end_of_stream || ec == asio::error::operation_aborted ||
         ec == websocket::error::closed || ec == asio::error::eof || ec == asio::error::connection_reset ||
         ec == beast::error::timeout;
}

asio::awaitable<void> event_socket(beast::tcp_stream stream, http::request<http::string_body> req, Api& api,
                                   MeetingId meeting) {
  websocket::stream<beast::tcp_stream> ws(std::move(stream));
  beast::get_lowest_layer(ws).expires_never();
  ws.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
  ws.read_message_max(64 * 1024);
  co_await ws.async_accept(req, use_awaitable);
  spdlog::info("event=ws_open meeting={}", meeting.value);
  beast::flat_buffer buffer;
  for (;;) {
    co_await ws.async_read(buffer, use_awaitable);
    const auto frame = beast::buffers_to_string(buffer.data());
    buffer.consume(buffer.size());
    const auto reply = api.handle_event_frame(meeting, frame);
    ws.text(true);
    co_await ws.async_write(asio::buffer(reply), use_awaitable);
  }
}

asio::awaitable<void> connection(tcp::socket socket, Api& api) {
  beast::tcp_stream stream(std::move(socket));
  beast::flat_buffer buffer;
  bool upgraded = false;
  try {
    for (;;) {
      http::request_parser<http::string_body> parser;
      parser.body_limit(kBodyLimit);
      stream.expires_after(std::chrono::seconds(60));
      co_await http::async_read(stream, buffer, parser, use_awaitable);
      auto req = parser.release();
      const auto started = std::chrono::steady_clock::now();

      if (websocket::is_upgrade(req)) {
        auto accepted = api.accept_events_socket(to_api(req));
        if (auto* meeting = std::get_if<MeetingId>(&accepted)) {
          upgraded = true;
          co_await event_socket(std::move(stream), std::move(req), api, *meeting);
          co_return;
        }
        auto out = to_http(std::get<ApiResponse>(accepted), req.version(), false);
        co_await http::async_write(stream, out, use_awaitable);
        break;
      }

      const auto res = api.handle(to_api(req));
      auto out = to_http(res, req.version(), req.keep_alive());
      co_await http::async_write(stream, out, use_awaitable);
      const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started);
      spdlog::info("event=request method={} target={} status={} ms={}", std::string(req.method_string()),
                   std::string(req.target()), res.status, ms.count());
      if (!out.keep_alive()) break;
    }
  } catch (const boost::system::system_error& e) {
    if (!benign(e.code())) spdlog::warn("event=connection_error error=\"{}\"", e.what());
  }
  if (upgraded) co_return;
  boost::system::error_code ignored;
  stream.socket().shutdown(tcp::socket::shutdown_send, ignored);
}

asio::awaitable<void> accept_loop(tcp::acceptor& acceptor, Api& api) {
  for (;;) {
    boost::system::error_code ec;
    auto socket = co_await acceptor.async_accept(asio::redirect_error(use_awaitable, ec));
    if (ec == asio::error::operation_aborted) co_return;
    if (ec) {
      spdlog::warn("event=accept_error error=\"{}\"", ec.message());
      continue;
    }
    asio::co_spawn(acceptor.get_executor(), connection(std::move(socket), api), asio::detached);
  }
}

}  // namespace

struct Server::Impl {
  Impl(Api& a, ServerOptions o) : api(a), options(std::move(o)), acceptor(ioc) {}

  Api& api;
  ServerOptions options;
  asio::io_context ioc;
  tcp::acceptor acceptor;
  std::vector<std::thread> workers;
  std::mutex mutex;
  bool started = false;
};

Server::Server(Api& api, ServerOptions options) : impl_(std::make_unique<Impl>(api, std::move(options))) {
  auto& a = impl_->acceptor;
  boost::system::error_code ec;
  const auto address = asio::ip::make_address(impl_->options.bind_address, ec);
  if (ec) fail(ErrorCode::config, "bad bind_address: " + ec.message(), "bind_address");
  const tcp::endpoint endpoint(address, impl_->options.port);
  a.open(endpoint.protocol(), ec);
  if (!ec) a.set_option(asio::socket_base::reuse_address(true), ec);
  if (!ec) a.bind(endpoint, ec);
  if (ec)
    fail(ErrorCode::config, "cannot bind " + impl_->options.bind_address + ":" +
                                std::to_string(impl_->options.port) + ": " + ec.message() + " (port busy?)",
         "port");
  a.listen(asio::socket_base::max_listen_connections, ec);
  if (ec) fail(ErrorCode::config, "listen failed: " + ec.message(), "port");
}

Server::~Server() { stop(); }

std::uint16_t Server::port() const { return impl_->acceptor.local_endpoint().port(); }

void Server::start() {
  std::lock_guard lock(impl_->mutex);
  if (impl_->started) return;
  impl_->started = true;
  asio::co_spawn(impl_->ioc, accept_loop(impl_->acceptor, impl_->api), asio::detached);
  for (int i = 0; i < std::max(1, impl_->options.threads); ++i)
    impl_->workers.emplace_back([this] { impl_->ioc.run(); });
  spdlog::info("event=listening address={} port={} threads={}", impl_->options.bind_address, port(),
               impl_->options.threads);
}

void Server::stop() {
  std::lock_guard lock(impl_->mutex);
  impl_->ioc.stop();
  for (auto& t : impl_->workers)
    if (t.joinable() && t.get_id() != std::this_thread::get_id()) t.join();
  impl_->workers.clear();
}

void Server::run_until_signal() {
  asio::signal_set signals(impl_->ioc, SIGINT, SIGTERM);
  signals.async_wait([this](const boost::system::error_code& ec, int sig) {
    if (ec) return;
    spdlog::info("event=shutdown signal={}", sig);
    impl_->ioc.stop();
  });
  start();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(impl_->mutex);
    workers.swap(impl_->workers);
  }
  for (auto& t : workers) t.join();
}

}  // namespace huddle::service
