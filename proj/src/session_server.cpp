#include <deque>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include <boost/asio/signal_set.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include "gymgrid/session.hpp"

namespace gymgrid {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

namespace {

// Non-state frames (errors, metrics) waiting per connection.
constexpr std::size_t kMaxPendingFrames = 16;

std::string mime_type(const std::filesystem::path& p) {
  const std::string ext = p.extension().string();
  if (ext == ".html") return "text/html; charset=utf-8";
  if (ext == ".js" || ext == ".mjs") return "text/javascript";
  if (ext == ".css") return "text/css";
  if (ext == ".json") return "application/json";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".png") return "image/png";
  return "application/octet-stream";
}

class WsSession;

struct Hub {
  std::set<std::shared_ptr<WsSession>> sessions;
};

class WsSession : public std::enable_shared_from_this<WsSession> {
 public:
  WsSession(tcp::socket socket, SessionCore& core, Hub& hub)
      : ws_(std::move(socket)), core_(core), hub_(hub) {}

  void run(http::request<http::string_body> req) {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->hub_.sessions.insert(self);
      self->offer(self->core_.latest());
      self->read();
    });
  }

  // Replaces any unsent state frame; slow clients only ever see the newest.
  void offer(std::shared_ptr<const Snapshot> snap) {
    if (!snap) return;
    pending_state_ = std::move(snap);
    write_next();
  }

  void close() {
    beast::error_code ec;
    beast::get_lowest_layer(ws_).socket().close(ec);
  }

 private:
  void read() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->hub_.sessions.erase(self);
        return;
      }
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      if (auto err = self->core_.handle_message(text)) self->push_frame(err->dump());
      self->read();
    });
  }

  void push_frame(std::string frame) {
    if (frames_.size() >= kMaxPendingFrames) frames_.pop_front();
    frames_.push_back(std::move(frame));
    write_next();
  }

  void write_next() {
    if (writing_) return;
    if (!frames_.empty()) {
      out_ = std::move(frames_.front());
      frames_.pop_front();
    } else if (pending_state_) {
      auto snap = std::move(pending_state_);
      pending_state_.reset();
      if (snap == last_sent_ || (last_sent_ && snap->step < last_sent_->step)) return write_next();
      last_sent_ = snap;
      out_ = snap->state.dump();
      if (snap->metrics) {
        if (frames_.size() >= kMaxPendingFrames) frames_.pop_front();
        frames_.push_back(snap->metrics->dump());
      }
    } else {
      return;
    }
    writing_ = true;
    ws_.text(true);
    ws_.async_write(net::buffer(out_), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      self->writing_ = false;
      if (ec) {
        self->hub_.sessions.erase(self);
        return;
      }
      self->write_next();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  SessionCore& core_;
  Hub& hub_;
  beast::flat_buffer buffer_;
  std::shared_ptr<const Snapshot> pending_state_;
  std::shared_ptr<const Snapshot> last_sent_;
  std::deque<std::string> frames_;
  std::string out_;
  bool writing_ = false;
};

class HttpSession : public std::enable_shared_from_this<HttpSession> {
 public:
  HttpSession(tcp::socket socket, SessionCore& core, Hub& hub, const std::filesystem::path& root)
      : stream_(std::move(socket)), core_(core), hub_(hub), root_(root) {}

  void run() { read(); }

 private:
  void read() {
    req_ = {};
    stream_.expires_after(std::chrono::seconds(30));
    http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->dispatch();
    });
  }

  void dispatch() {
    if (websocket::is_upgrade(req_)) {
      if (req_.target() == "/ws") {
        stream_.expires_never();
        std::make_shared<WsSession>(stream_.release_socket(), core_, hub_)->run(std::move(req_));
        return;
      }
    }
    send(respond());
  }

  http::response<http::string_body> make(http::status status, std::string body, const std::string& type) {
    http::response<http::string_body> res{status, req_.version()};
    res.set(http::field::server, "gymgrid");
    res.set(http::field::content_type, type);
    res.keep_alive(req_.keep_alive());
    res.body() = std::move(body);
    res.prepare_payload();
    return res;
  }

  http::response<http::string_body> error(http::status status, const std::string& msg) {
    return make(status, json{{"v", kProtocolVersion}, {"type", "error"}, {"msg", msg}}.dump(),
                "application/json");
  }

  http::response<http::string_body> respond() {
    if (req_.method() != http::verb::get && req_.method() != http::verb::head)
      return error(http::status::method_not_allowed, "only GET is supported");
    std::string target(req_.target());
    if (auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target == "/api/session") return make(http::status::ok, core_.session_state().dump(), "application/json");
    if (target.empty() || target[0] != '/' || target.find("..") != std::string::npos)
      return error(http::status::bad_request, "bad path");
    if (target == "/") target = "/index.html";
    const auto path = root_ / target.substr(1);
    std::ifstream in(path, std::ios::binary);
    if (!in || std::filesystem::is_directory(path)) return error(http::status::not_found, "not found");
    std::ostringstream body;
    body << in.rdbuf();
    return make(http::status::ok, body.str(), mime_type(path));
  }

  void send(http::response<http::string_body> res) {
    auto shared = std::make_shared<http::response<http::string_body>>(std::move(res));
    http::async_write(stream_, *shared, [self = shared_from_this(), shared](beast::error_code ec, std::size_t) {
      if (ec || !shared->keep_alive()) {
        self->stream_.socket().shutdown(tcp::socket::shutdown_send, ec);
        return;
      }
      self->read();
    });
  }

  beast::tcp_stream stream_;
  SessionCore& core_;
  Hub& hub_;
  const std::filesystem::path& root_;
  beast::flat_buffer buffer_;
  http::request<http::string_body> req_;
};

}  // namespace

struct SessionServer::Impl {
  Impl(SessionCore& c, std::filesystem::path root) : core(c), static_dir(std::move(root)), acceptor(ioc) {}

  void accept() {
    acceptor.async_accept([this](beast::error_code ec, tcp::socket socket) {
      if (!acceptor.is_open()) return;
      if (!ec) std::make_shared<HttpSession>(std::move(socket), core, hub, static_dir)->run();
      accept();
    });
  }

  SessionCore& core;
  std::filesystem::path static_dir;
  net::io_context ioc{1};
  tcp::acceptor acceptor;
  Hub hub;
  std::thread thread;
};

SessionServer::SessionServer(SessionCore& core, const std::string& address, int port,
                             std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>(core, std::move(static_dir))) {
  beast::error_code ec;
  const auto addr = net::ip::make_address(address, ec);
  if (ec) throw std::runtime_error("invalid bind address '" + address + "'");
  const tcp::endpoint ep{addr, static_cast<unsigned short>(port)};
  auto& a = impl_->acceptor;
  a.open(ep.protocol(), ec);
  if (!ec) a.set_option(net::socket_base::reuse_address(true), ec);
  if (!ec) a.bind(ep, ec);
  if (!ec) a.listen(net::socket_base::max_listen_connections, ec);
  if (ec) throw std::runtime_error("cannot listen on " + address + ":" + std::to_string(port) + ": " + ec.message());
}

SessionServer::~SessionServer() { stop(); }

int SessionServer::port() const noexcept { return impl_->acceptor.local_endpoint().port(); }

void SessionServer::start() {
  if (impl_->thread.joinable()) return;
  Impl* impl = impl_.get();
  impl->core.on_publish([impl](std::shared_ptr<const Snapshot> snap) {
    net::post(impl->ioc, [impl, snap] {
      for (const auto& s : impl->hub.sessions) s->offer(snap);
    });
  });
  impl->accept();
  impl->thread = std::thread([impl] { impl->ioc.run(); });
}

void SessionServer::stop() {
  if (!impl_ || !impl_->thread.joinable()) return;
  impl_->core.on_publish(nullptr);
  net::post(impl_->ioc, [impl = impl_.get()] {
    beast::error_code ec;
    impl->acceptor.close(ec);
    for (const auto& s : impl->hub.sessions) s->close();
    impl->hub.sessions.clear();
    impl->ioc.stop();
  });
  impl_->thread.join();
}

int serve(const SessionConfig& config) {
  SessionCore core(config);
  SessionServer server(core, config.bind_address, config.port, config.static_dir);
  server.start();
  core.start();
  std::cout << "gymgrid session (" << session_mode_name(core.mode()) << ", "
            << game_name(config.env.game) << " " << config.env.map_width << "x" << config.env.map_height
            << ") on http://" << config.bind_address << ":" << server.port() << "/" << std::endl;
  net::io_context signals_ctx;
  net::signal_set signals(signals_ctx, SIGINT, SIGTERM);
  signals.async_wait([](beast::error_code, int) {});
  signals_ctx.run();
  core.stop();
  server.stop();
  return 0;
}

}  // namespace gymgrid
