// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

#include "lmc/runtime.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>
#include <zlib.h>

#include <cerrno>
#include <chrono>
#include <cstring>
#include <limits>
#include <thread>

#include "lmc/config.hpp"

namespace lmc {

namespace {

constexpr std::uint8_t kMagic[4] = {'R', 'S', 'P', '1'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint64_t kMaxPayload = 1u << 26;

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

[[noreturn]] void sys_error(const std::string& what) {
  throw Error(what + ": " + std::strerror(errno));
}

std::pair<std::string, std::string> split_addr(const std::string& addr) {
  const auto colon = addr.rfind(':');
  if (colon == std::string::npos || colon + 1 == addr.size())
    throw Error("address '" + addr + "' is not host:port");
  std::string host = addr.substr(0, colon);
  if (host.empty()) host = "127.0.0.1";
  return {host, addr.substr(colon + 1)};
}

addrinfo* resolve(const std::string& addr, bool passive) {
  const auto [host, port] = split_addr(addr);
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  if (int rc = getaddrinfo(host.c_str(), port.c_str(), &hints, &res); rc != 0)
    throw Error("cannot resolve '" + addr + "': " + gai_strerror(rc));
  return res;
}

// Rejects the session: tells the peer, then raises locally.
[[noreturn]] void reject(FdTransport& t, const std::string& message) {
  try {
    send_message(t, WireMessage::error(message));
  } catch (const Error&) {
    // The peer may already be gone; the local error is what matters.
  }
  throw Error("session aborted: " + message);
}

}  // namespace

std::string to_string(MessageType type) {
  switch (type) {
    case MessageType::kHello: return "HELLO";
    case MessageType::kFrame: return "FRAME";
    case MessageType::kEnd: return "END";
    case MessageType::kError: return "ERROR";
  }
  return "type " + std::to_string(static_cast<int>(type));
}

std::vector<std::uint8_t> WireMessage::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(kVersion);
  out.push_back(static_cast<std::uint8_t>(type));
  put_varint(out, payload.size());
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

WireMessage WireMessage::hello(const CodecModel& model) {
  WireMessage m{MessageType::kHello, std::vector<std::uint8_t>(16)};
  const std::uint64_t h[2] = {model.config_hash(), model.weights_hash()};
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 8; ++i)
      m.payload[8 * k + i] = static_cast<std::uint8_t>(h[k] >> (8 * i));
  return m;
}

WireMessage WireMessage::frame(const FramePacket& packet) {
  return {MessageType::kFrame, packet.serialize()};
}

WireMessage WireMessage::end() { return {MessageType::kEnd, {}}; }

WireMessage WireMessage::error(const std::string& message) {
  return {MessageType::kError,
          std::vector<std::uint8_t>(message.begin(), message.end())};
}

std::pair<std::uint64_t, std::uint64_t> WireMessage::hello_hashes() const {
  if (type != MessageType::kHello || payload.size() != 16)
    throw Error("malformed HELLO message");
  std::uint64_t h[2] = {0, 0};
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 8; ++i)
      h[k] |= static_cast<std::uint64_t>(payload[8 * k + i]) << (8 * i);
  return {h[0], h[1]};
}

std::string WireMessage::error_text() const {
  return std::string(payload.begin(), payload.end());
}

// -- FdTransport ----------------------------------------------------------------

FdTransport::FdTransport(FdTransport&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)),
      written_(other.written_),
      read_(other.read_) {}

FdTransport& FdTransport::operator=(FdTransport&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
    written_ = other.written_;
    read_ = other.read_;
  }
  return *this;
}

FdTransport::~FdTransport() { close(); }

void FdTransport::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void FdTransport::write_all(std::span<const std::uint8_t> bytes) {
  if (fd_ < 0) throw Error("transport is closed");
  std::size_t done = 0;
  while (done < bytes.size()) {
    ssize_t n = ::send(fd_, bytes.data() + done, bytes.size() - done,
                       MSG_NOSIGNAL);
    if (n < 0 && errno == ENOTSOCK)
      n = ::write(fd_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      sys_error("transport write failed");
    }
    done += static_cast<std::size_t>(n);
  }
  written_ += bytes.size();
}

bool FdTransport::read_exact(std::span<std::uint8_t> bytes) {
  if (fd_ < 0) throw Error("transport is closed");
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n = ::read(fd_, bytes.data() + done, bytes.size() - done);
    if (n < 0) {
      if (errno == EINTR) continue;
      sys_error("transport read failed");
    }
    if (n == 0) {
      if (done == 0) return false;
      throw Error("transport closed in the middle of a message");
    }
    done += static_cast<std::size_t>(n);
  }
  read_ += bytes.size();
  return true;
}

void send_message(FdTransport& transport, const WireMessage& message) {
  transport.write_all(message.serialize());
}

std::optional<WireMessage> receive_message(FdTransport& transport) {
  std::uint8_t head[6];
  if (!transport.read_exact(head)) return std::nullopt;
  if (std::memcmp(head, kMagic, 4) != 0) throw Error("bad message magic");
  if (head[4] != kVersion)
    throw Error("unsupported protocol version " + std::to_string(head[4]));
  if (head[5] > static_cast<std::uint8_t>(MessageType::kError))
    throw Error("unknown message type " + std::to_string(head[5]));
  std::uint64_t length = 0;
  for (int shift = 0;; shift += 7) {
    std::uint8_t b;
    if (shift > 63 || !transport.read_exact({&b, 1}))
      throw Error("bad message length");
    length |= static_cast<std::uint64_t>(b & 0x7f) << shift;
    if ((b & 0x80) == 0) break;
  }
  if (length > kMaxPayload)
    throw Error("message payload of " + std::to_string(length) +
                " bytes exceeds the limit");
  WireMessage m;
  m.type = static_cast<MessageType>(head[5]);
  m.payload.resize(length);
  if (length > 0 && !transport.read_exact(m.payload))
    throw Error("transport closed in the middle of a message");
  return m;
}

std::pair<FdTransport, FdTransport> socket_pair() {
  int fds[2];
  if (::socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) sys_error("socketpair");
  return {FdTransport(fds[0]), FdTransport(fds[1])};
}

// -- TCP --------------------------------------------------------------------------

TcpListener::TcpListener(const std::string& addr) {
  addrinfo* res = resolve(addr, true);
  for (addrinfo* ai = res; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    const int one = 1;
    ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 1) == 0) {
      fd_ = fd;
      break;
    }
    ::close(fd);
  }
  freeaddrinfo(res);
  if (fd_ < 0) sys_error("cannot listen on '" + addr + "'");
  sockaddr_storage ss{};
  socklen_t len = sizeof ss;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&ss), &len);
  port_ = ntohs(ss.ss_family == AF_INET6
                    ? reinterpret_cast<sockaddr_in6*>(&ss)->sin6_port
                    : reinterpret_cast<sockaddr_in*>(&ss)->sin_port);
}

TcpListener::~TcpListener() {
  if (fd_ >= 0) ::close(fd_);
}

FdTransport TcpListener::accept() {
  for (;;) {
    const int fd = ::accept(fd_, nullptr, nullptr);
    if (fd >= 0) return FdTransport(fd);
    if (errno != EINTR) sys_error("accept failed");
  }
}

FdTransport tcp_connect(const std::string& addr, int timeout_ms) {
  const auto deadline = Clock::now() + std::chrono::milliseconds(timeout_ms);
  for (;;) {
    addrinfo* res = resolve(addr, false);
    int connected = -1;
    for (addrinfo* ai = res; ai != nullptr && connected < 0; ai = ai->ai_next) {
      const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
      if (fd < 0) continue;
      if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0)
        connected = fd;
      else
        ::close(fd);
    }
    freeaddrinfo(res);
    if (connected >= 0) return FdTransport(connected);
    if (Clock::now() >= deadline) sys_error("cannot connect to '" + addr + "'");
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

// -- Sessions ---------------------------------------------------------------------

HeadResult serve_head(FdTransport& transport, const CodecModel& model,
                      std::span<const int> tokens) {
  if (tokens.size() > model.config().seq_len)
    throw Error("serve_head: sequence longer than the model context");
  const std::uint64_t written_before = transport.bytes_written();
  send_message(transport, WireMessage::hello(model));
  const auto reply = receive_message(transport);
  if (!reply) throw Error("serve_head: tail closed the connection at HELLO");
  if (reply->type == MessageType::kError)
    throw Error("serve_head: tail rejected the session: " + reply->error_text());
  if (reply->type != MessageType::kHello)
    throw Error("serve_head: expected HELLO, got " + to_string(reply->type));

  HeadResult r;
  StreamingEncoder encoder(model);
  for (int token : tokens) {
    const auto t0 = Clock::now();
    const FramePacket p = encoder.push(token);
    r.encode_ms += elapsed_ms(t0);
    r.payload_bits += 8 * (p.w_chunk.size() + p.y_chunk.size());
    send_message(transport, WireMessage::frame(p));
    ++r.frames;
  }
  send_message(transport, WireMessage::end());
  const auto done = receive_message(transport);
  if (!done) throw Error("serve_head: tail closed without acknowledging END");
  if (done->type == MessageType::kError)
    throw Error("serve_head: tail aborted: " + done->error_text());
  if (done->type != MessageType::kEnd)
    throw Error("serve_head: expected END, got " + to_string(done->type));
  r.wire_bytes = transport.bytes_written() - written_before;
  return r;
}

TailResult serve_tail(FdTransport& transport, const CodecModel& model) {
  const auto hello = receive_message(transport);
  if (!hello) throw Error("serve_tail: head closed the connection");
  if (hello->type != MessageType::kHello)
    reject(transport, "expected HELLO, got " + to_string(hello->type));
  std::pair<std::uint64_t, std::uint64_t> theirs;
  try {
    theirs = hello->hello_hashes();
  } catch (const Error& e) {
    reject(transport, e.what());
  }
  if (theirs.first != model.config_hash())
    reject(transport, "config hash mismatch: head " + hex64(theirs.first) +
                          ", tail " + hex64(model.config_hash()));
  if (theirs.second != model.weights_hash())
    reject(transport, "weights hash mismatch: head " + hex64(theirs.second) +
                          ", tail " + hex64(model.weights_hash()));
  send_message(transport, WireMessage::hello(model));

  const ModelConfig& c = model.config();
  TailResult r;
  r.decoded.y.cols = c.embed;
  r.decoded.w.cols = c.channels;
  StreamingDecoder decoder(model);
  std::size_t received = 0;
  for (;;) {
    const auto m = receive_message(transport);
    if (!m) throw Error("serve_tail: head closed the connection before END");
    if (m->type == MessageType::kEnd) break;
    if (m->type == MessageType::kError)
      throw Error("serve_tail: head aborted: " + m->error_text());
    if (m->type != MessageType::kFrame)
      reject(transport, "unexpected " + to_string(m->type) + " message");
    ++received;
    FramePacket p;
    try {
      std::size_t pos = 0;
      p = FramePacket::parse(m->payload, pos);
      if (pos != m->payload.size()) throw Error("trailing bytes in FRAME");
    } catch (const Error& e) {
      reject(transport, "frame " + std::to_string(received - 1) + ": " +
                            e.what());
    }
    if (p.index != decoder.frames())
      reject(transport, (p.index < decoder.frames() ? "duplicate" : "out-of-order") +
                            std::string(" frame ") + std::to_string(p.index) +
                            ", expected " + std::to_string(decoder.frames()));
    const auto t0 = Clock::now();
    StreamingDecoder::Frame f;
    try {
      f = decoder.push(p);
    } catch (const Error& e) {
      reject(transport, "frame " + std::to_string(p.index) + ": " + e.what());
    }
    r.decode_ms += elapsed_ms(t0);
    r.arrivals.push_back(received);
    auto& d = r.decoded;
    d.w.symbols.insert(d.w.symbols.end(), f.w.begin(), f.w.end());
    d.y.symbols.insert(d.y.symbols.end(), f.y.begin(), f.y.end());
    d.logits.insert(d.logits.end(), f.logits.begin(), f.logits.end());
  }
  r.decoded.y.rows = r.decoded.w.rows = decoder.frames();
  send_message(transport, WireMessage::end());
  return r;
}

// -- Baselines and timing ---------------------------------------------------------

LosslessResult lossless_baseline(const QuantizedLatent& y) {
  std::vector<std::uint8_t> raw;
  raw.reserve(y.symbols.size() * 2);
  for (std::int32_t v : y.symbols) {
    if (v < std::numeric_limits<std::int16_t>::min() ||
        v > std::numeric_limits<std::int16_t>::max())
      throw Error("lossless_baseline: symbol " + std::to_string(v) +
                  " does not fit in 16 bits");
    const auto u = static_cast<std::uint16_t>(static_cast<std::int16_t>(v));
    raw.push_back(static_cast<std::uint8_t>(u & 0xff));
    raw.push_back(static_cast<std::uint8_t>(u >> 8));
  }
  const auto t0 = Clock::now();
  z_stream zs{};
  if (deflateInit2(&zs, Z_BEST_COMPRESSION, Z_DEFLATED, -15, 9,
                   Z_DEFAULT_STRATEGY) != Z_OK)
    throw Error("lossless_baseline: deflateInit2 failed");
  std::vector<std::uint8_t> out(deflateBound(&zs, raw.size()) + 16);
  zs.next_in = raw.data();
  zs.avail_in = static_cast<uInt>(raw.size());
  zs.next_out = out.data();
  zs.avail_out = static_cast<uInt>(out.size());
  const int rc = deflate(&zs, Z_FINISH);
  const std::size_t produced = zs.total_out;
  deflateEnd(&zs);
  if (rc != Z_STREAM_END) throw Error("lossless_baseline: deflate failed");

  LosslessResult r;
  r.raw_bits = 8 * raw.size();
  r.compressed_bits = 8 * produced;
  if (y.rows > 0) {
    r.bpt = static_cast<double>(r.compressed_bits) / static_cast<double>(y.rows);
    r.ms_per_token = elapsed_ms(t0) / static_cast<double>(y.rows);
  }
  return r;
}

Crossover crossover_mbps(double raw_bits, double coded_bits,
                         double ms_per_token, double overhead) {
  if (!(ms_per_token >= 0.0) || !(overhead >= 0.0))
    throw Error("crossover_mbps: time and overhead must be non-negative");
  Crossover c;
  const double saved = raw_bits - coded_bits;
  if (saved <= 0.0) return c;  // coding never pays off
  if (ms_per_token == 0.0) {
    c.infinite = true;
    c.mbps = std::numeric_limits<double>::infinity();
    return c;
  }
  // bits per millisecond = kbit/s; divide by 1e3 for Mbit/s.
  c.mbps = saved * (1.0 + overhead) / ms_per_token / 1e3;
  return c;
}

TimingReport timing_report(const HeadResult& head, const TailResult& tail,
                           std::size_t embed_dim) {
  if (head.frames == 0) throw Error("timing_report: empty session");
  TimingReport r;
  const double n = static_cast<double>(head.frames);
  r.tokens = head.frames;
  r.raw_bits_per_token = 16.0 * static_cast<double>(embed_dim);
  r.coded_bits_per_token = static_cast<double>(head.payload_bits) / n;
  r.head_ms_per_token = head.encode_ms / n;
  r.tail_ms_per_token = tail.decode_ms / n;
  r.crossover = crossover_mbps(r.raw_bits_per_token, r.coded_bits_per_token,
                               r.head_ms_per_token + r.tail_ms_per_token);
  return r;
}

}  // namespace lmc
