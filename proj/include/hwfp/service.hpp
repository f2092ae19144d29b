#pragma once

#include <atomic>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "hwfp/backend.hpp"
#include "hwfp/wire.hpp"

namespace hwfp {

/// One request frame in, exactly one reply frame (Reply or Error) out.
/// Never throws. Enrollment steps are acknowledged with an Accept/Ok reply.
Frame handle_message(Backend& backend, FrameKind kind, std::span<const std::uint8_t> body);

/// Decodes a complete frame, handles it and encodes the reply.
Bytes handle_frame_bytes(Backend& backend, std::span<const std::uint8_t> frame);

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

/// "host:port" or ":port".
Endpoint parse_endpoint(const std::string& text);
std::string format_endpoint(const Endpoint& e);

// Blocking TCP listener, one thread per connection.
class Server {
 public:
  /// Called after every successful EnrollCommit, serialised by the server.
  using CommitHook = std::function<void(const Backend&)>;

  Server(Backend& backend, Endpoint endpoint, CommitHook on_commit = {});
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  /// Binds and starts accepting; port 0 picks an ephemeral port.
  void start();
  void stop();
  std::uint16_t port() const { return port_; }

 private:
  void accept_loop();
  void serve_connection(int fd);

  Backend& backend_;
  Endpoint endpoint_;
  CommitHook on_commit_;
  std::mutex hook_mu_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread acceptor_;
  struct Conn {
    int fd;
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };
  void reap(bool all);

  std::mutex conn_mu_;
  std::list<Conn> connections_;
};

// Client side of one connection.
class Connection {
 public:
  static Connection connect(const Endpoint& endpoint);
  Connection(Connection&& other) noexcept;
  Connection& operator=(Connection&& other) noexcept;
  ~Connection();

  void send_raw(std::span<const std::uint8_t> bytes);
  /// Next frame from the peer; Io on close or timeout.
  Frame receive();
  Frame call(FrameKind kind, std::span<const std::uint8_t> body);

  /// Enrollment over the wire; throws with the server's error on refusal.
  /// upload leaves the device open so several devices can be uploaded before
  /// any commit (commit needs other devices' pairs as negatives).
  void upload(std::uint16_t device_id, Model model, std::span<const TrainingPair> pairs);
  void commit(std::uint16_t device_id);
  void enroll(std::uint16_t device_id, Model model, std::span<const TrainingPair> pairs);
  AuthResult authenticate(std::uint16_t device_id, const Request& request, const Token& token);

 private:
  explicit Connection(int fd) : fd_(fd) {}
  int fd_ = -1;
};

/// Throws an Error carrying the server's message if `reply` is an Error
/// frame; returns the decoded AuthResult otherwise.
AuthResult expect_reply(const Frame& reply);

}  // namespace hwfp
