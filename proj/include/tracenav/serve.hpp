#pragma once

#include <deque>
#include <memory>
#include <string>
#include <utility>

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/websocket.hpp>

#include "tracenav/protocol.hpp"

namespace tracenav::serve {

namespace asio = boost::asio;
namespace beast = boost::beast;
namespace websocket = beast::websocket;
using tcp = asio::ip::tcp;

namespace detail {

// One websocket connection. Reads and writes strictly alternate: a message is
// read, all of its replies are written in order, then the next read starts.
class Connection : public std::enable_shared_from_this<Connection> {
 public:
  Connection(tcp::socket socket, std::shared_ptr<const protocol::GuidanceService> service)
      : ws_(std::move(socket)), service_(std::move(service)), state_(service_->open_session()) {}

  void start() {
    ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
    ws_.async_accept([self = shared_from_this()](beast::error_code ec) {
      if (ec) return;
      self->queue(self->service_->greeting(self->state_));
      self->write_next();
    });
  }

 private:
  void queue(const std::vector<protocol::json>& replies) {
    for (const auto& r : replies) outbox_.push_back(r.dump() + "\n");
  }

  void read_next() {
    ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      const std::string text = beast::buffers_to_string(self->buffer_.data());
      self->buffer_.consume(self->buffer_.size());
      self->queue(self->service_->handle_text(self->state_, text));
      self->write_next();
    });
  }

  void write_next() {
    if (outbox_.empty()) {
      read_next();
      return;
    }
    ws_.text(true);
    ws_.async_write(asio::buffer(outbox_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
      if (ec) return;
      self->outbox_.pop_front();
      self->write_next();
    });
  }

  websocket::stream<beast::tcp_stream> ws_;
  beast::flat_buffer buffer_;
  std::shared_ptr<const protocol::GuidanceService> service_;
  protocol::Session state_;
  std::deque<std::string> outbox_;
};

}  // namespace detail

// Websocket front end for a GuidanceService. Sessions are independent and
// multiplexed on the server's I/O context.
class GuidanceServer {
 public:
  GuidanceServer(std::shared_ptr<const protocol::GuidanceService> service, const std::string& host,
                 unsigned short port)
      : service_(std::move(service)), acceptor_(ioc_) {
    const tcp::endpoint endpoint(asio::ip::make_address(host), port);
    acceptor_.open(endpoint.protocol());
    acceptor_.set_option(asio::socket_base::reuse_address(true));
    acceptor_.bind(endpoint);
    acceptor_.listen(asio::socket_base::max_listen_connections);
    accept_next();
  }

  // Bound port; useful when constructed with port 0.
  unsigned short port() const { return acceptor_.local_endpoint().port(); }

  // Serves until stop() is called.
  void run() { ioc_.run(); }

  // Safe to call from any thread.
  void stop() {
    asio::post(ioc_, [this] {
      beast::error_code ignored;
      acceptor_.close(ignored);
    });
    ioc_.stop();
  }

 private:
  void accept_next() {
    acceptor_.async_accept(ioc_, [this](beast::error_code ec, tcp::socket socket) {
      if (ec) return;
      std::make_shared<detail::Connection>(std::move(socket), service_)->start();
      accept_next();
    });
  }

  std::shared_ptr<const protocol::GuidanceService> service_;
  asio::io_context ioc_;
  tcp::acceptor acceptor_;
};

}  // namespace tracenav::serve
