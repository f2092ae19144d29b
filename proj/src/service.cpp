#include "hwfp/service.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

namespace hwfp {

namespace {

constexpr std::size_t kPairsPerFrame = 4000;

Frame error_frame(WireError code, const std::string& message) {
  return {FrameKind::Error, encode_error({code, message})};
}

Frame ack() { return {FrameKind::Reply, encode_reply({Decision::Accept, 0, Reason::Ok})}; }

ErrorCode error_code_for(WireError e) {
  switch (e) {
    case WireError::ProtocolOrder: return ErrorCode::ProtocolOrder;
    case WireError::UnknownDevice: return ErrorCode::UnknownDevice;
    case WireError::SealedDevice: return ErrorCode::SealedDevice;
    case WireError::Malformed: return ErrorCode::Malformed;
    case WireError::NoNegatives: return ErrorCode::NoNegatives;
    case WireError::Internal: break;
  }
  return ErrorCode::Io;
}

bool write_all(int fd, std::span<const std::uint8_t> bytes) {
  std::size_t sent = 0;
  while (sent < bytes.size()) {
    const ssize_t n = ::send(fd, bytes.data() + sent, bytes.size() - sent, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    sent += static_cast<std::size_t>(n);
  }
  return true;
}

bool read_all(int fd, std::uint8_t* out, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::recv(fd, out + got, n - got, 0);
    if (r < 0 && errno == EINTR) continue;
    if (r <= 0) return false;
    got += static_cast<std::size_t>(r);
  }
  return true;
}

void set_timeout(int fd, int seconds) {
  timeval tv{seconds, 0};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof tv);
  ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof tv);
}

sockaddr_in resolve(const Endpoint& e) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(e.port);
  if (::inet_pton(AF_INET, e.host.c_str(), &addr.sin_addr) == 1) return addr;
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(e.host.c_str(), nullptr, &hints, &res) != 0 || !res) {
    throw Error(ErrorCode::Io, "cannot resolve " + e.host);
  }
  addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
  ::freeaddrinfo(res);
  return addr;
}

}  // namespace

Frame handle_message(Backend& backend, FrameKind kind, std::span<const std::uint8_t> body) {
  try {
    switch (kind) {
      case FrameKind::EnrollBegin: {
        const auto b = decode_enroll_begin(body);
        backend.begin_enrollment(b.device_id, b.model);
        return ack();
      }
      case FrameKind::EnrollData: {
        const auto b = decode_enroll_data(body);
        backend.add_pairs(b.device_id, b.pairs);
        return ack();
      }
      case FrameKind::EnrollCommit: {
        backend.commit_enrollment(decode_enroll_commit(body));
        return ack();
      }
      case FrameKind::AuthRequest: {
        const auto b = decode_auth_request(body);
        const AuthResult r = backend.authenticate(b.device_id, b.request, b.token);
        if (r.reason == Reason::UnknownDevice) {
          return error_frame(WireError::UnknownDevice,
                             "device " + std::to_string(b.device_id) + " is not enrolled");
        }
        return {FrameKind::Reply, encode_reply(r)};
      }
      case FrameKind::Reply:
      case FrameKind::Error:
        return error_frame(WireError::ProtocolOrder, "server does not accept reply frames");
    }
    return error_frame(WireError::Malformed, "unknown frame kind");
  } catch (const Error& e) {
    return error_frame(wire_error_for(e.code()), e.what());
  } catch (const std::exception& e) {
    return error_frame(WireError::Internal, e.what());
  }
}

Bytes handle_frame_bytes(Backend& backend, std::span<const std::uint8_t> bytes) {
  Frame reply;
  try {
    const Frame f = decode_frame(bytes);
    reply = handle_message(backend, f.kind, f.body);
  } catch (const Error& e) {
    reply = error_frame(wire_error_for(e.code()), e.what());
  }
  return encode_frame(reply);
}

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) throw Error(ErrorCode::InvalidArgument, "expected host:port");
  Endpoint e;
  if (colon > 0) e.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  try {
    std::size_t used = 0;
    const unsigned long p = std::stoul(port, &used);
    if (used != port.size() || p > 65535) throw std::out_of_range("port");
    e.port = static_cast<std::uint16_t>(p);
  } catch (const std::exception&) {
    throw Error(ErrorCode::InvalidArgument, "bad port '" + port + "'");
  }
  return e;
}

std::string format_endpoint(const Endpoint& e) { return e.host + ":" + std::to_string(e.port); }

Server::Server(Backend& backend, Endpoint endpoint, CommitHook on_commit)
    : backend_(backend), endpoint_(std::move(endpoint)), on_commit_(std::move(on_commit)) {}

Server::~Server() { stop(); }

void Server::start() {
  const sockaddr_in addr = resolve(endpoint_);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::Io, std::string("socket: ") + std::strerror(errno));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(listen_fd_, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw Error(ErrorCode::Io, "cannot listen on " + format_endpoint(endpoint_) + ": " + why);
  }
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  stopping_ = false;
  acceptor_ = std::thread([this] { accept_loop(); });
}

void Server::stop() {
  if (listen_fd_ < 0) return;
  stopping_ = true;
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  reap(true);
}

void Server::reap(bool all) {
  std::lock_guard lock(conn_mu_);
  for (auto it = connections_.begin(); it != connections_.end();) {
    if (all || *it->done) {
      ::shutdown(it->fd, SHUT_RDWR);
      if (it->thread.joinable()) it->thread.join();
      ::close(it->fd);
      it = connections_.erase(it);
    } else {
      ++it;
    }
  }
}

void Server::accept_loop() {
  while (!stopping_) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int ready = ::poll(&p, 1, 100);
    reap(false);
    if (ready <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    auto done = std::make_shared<std::atomic<bool>>(false);
    std::lock_guard lock(conn_mu_);
    connections_.push_back({fd, std::thread([this, fd, done] {
                              serve_connection(fd);
                              *done = true;
                            }),
                            done});
  }
}

void Server::serve_connection(int fd) {
  std::uint8_t prefix[4];
  Bytes frame;
  while (!stopping_ && read_all(fd, prefix, 4)) {
    std::uint32_t len;
    try {
      len = frame_length(std::span<const std::uint8_t, 4>(prefix, 4));
    } catch (const Error& e) {
      // Framing is lost; report once and hang up.
      write_all(fd, encode_frame(error_frame(WireError::Malformed, e.what())));
      break;
    }
    frame.assign(prefix, prefix + 4);
    frame.resize(4 + len);
    if (!read_all(fd, frame.data() + 4, len)) break;
    Frame reply;
    try {
      const Frame f = decode_frame(frame);
      reply = handle_message(backend_, f.kind, f.body);
      if (f.kind == FrameKind::EnrollCommit && reply.kind == FrameKind::Reply && on_commit_) {
        std::lock_guard lock(hook_mu_);
        on_commit_(backend_);
      }
    } catch (const Error& e) {
      reply = error_frame(wire_error_for(e.code()), e.what());
    } catch (const std::exception& e) {
      reply = error_frame(WireError::Internal, e.what());
    }
    if (!write_all(fd, encode_frame(reply))) break;
  }
  ::shutdown(fd, SHUT_RDWR);
}

Connection Connection::connect(const Endpoint& endpoint) {
  const sockaddr_in addr = resolve(endpoint);
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error(ErrorCode::Io, std::string("socket: ") + std::strerror(errno));
  if (::connect(fd, reinterpret_cast<const sockaddr*>(&addr), sizeof addr) != 0) {
    const std::string why = std::strerror(errno);
    ::close(fd);
    throw Error(ErrorCode::Io, "cannot connect to " + format_endpoint(endpoint) + ": " + why);
  }
  const int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  set_timeout(fd, 120);
  return Connection(fd);
}

Connection::Connection(Connection&& other) noexcept : fd_(other.fd_) { other.fd_ = -1; }

Connection& Connection::operator=(Connection&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = other.fd_;
    other.fd_ = -1;
  }
  return *this;
}

Connection::~Connection() {
  if (fd_ >= 0) ::close(fd_);
}

void Connection::send_raw(std::span<const std::uint8_t> bytes) {
  if (!write_all(fd_, bytes)) throw Error(ErrorCode::Io, "connection closed while sending");
}

Frame Connection::receive() {
  std::uint8_t prefix[4];
  if (!read_all(fd_, prefix, 4)) throw Error(ErrorCode::Io, "connection closed");
  const std::uint32_t len = frame_length(std::span<const std::uint8_t, 4>(prefix, 4));
  Bytes frame(prefix, prefix + 4);
  frame.resize(4 + len);
  if (!read_all(fd_, frame.data() + 4, len)) throw Error(ErrorCode::Io, "connection closed");
  return decode_frame(frame);
}

Frame Connection::call(FrameKind kind, std::span<const std::uint8_t> body) {
  send_raw(encode_frame(kind, body));
  return receive();
}

AuthResult expect_reply(const Frame& reply) {
  if (reply.kind == FrameKind::Error) {
    const ErrorBody e = decode_error(reply.body);
    throw Error(error_code_for(e.code),
                std::string(wire_error_name(e.code)) + ": " + e.message);
  }
  if (reply.kind != FrameKind::Reply) throw Error(ErrorCode::Malformed, "unexpected frame kind");
  return decode_reply(reply.body);
}

void Connection::upload(std::uint16_t device_id, Model model,
                        std::span<const TrainingPair> pairs) {
  expect_reply(call(FrameKind::EnrollBegin, encode_enroll_begin({device_id, model})));
  for (std::size_t at = 0; at < pairs.size(); at += kPairsPerFrame) {
    const auto chunk = pairs.subspan(at, std::min(kPairsPerFrame, pairs.size() - at));
    EnrollDataBody body{device_id, {chunk.begin(), chunk.end()}};
    expect_reply(call(FrameKind::EnrollData, encode_enroll_data(body)));
  }
}

void Connection::commit(std::uint16_t device_id) {
  expect_reply(call(FrameKind::EnrollCommit, encode_enroll_commit(device_id)));
}

void Connection::enroll(std::uint16_t device_id, Model model,
                        std::span<const TrainingPair> pairs) {
  upload(device_id, model, pairs);
  commit(device_id);
}

AuthResult Connection::authenticate(std::uint16_t device_id, const Request& request,
                                    const Token& token) {
  return expect_reply(
      call(FrameKind::AuthRequest, encode_auth_request({device_id, request, token})));
}

}  // namespace hwfp
