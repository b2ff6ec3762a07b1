// Copyright 2026 The lmcodec Authors
// SPDX-License-Identifier: Apache-2.0

// Two-process split inference over a reliable byte stream.
//
// Message layout: "RSP1" | u8 version (1) | u8 type | varint length | payload.
// The head sends HELLO (little-endian u64 config hash, then u64 weights hash),
// one FRAME per token (payload = serialized FramePacket) and END. The tail
// answers HELLO with its own HELLO and END with END, and reports any protocol
// violation with ERROR (payload = UTF-8 message) before aborting.

#ifndef LMC_RUNTIME_HPP_
#define LMC_RUNTIME_HPP_

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lmc/codec.hpp"

namespace lmc {

enum class MessageType : std::uint8_t {
  kHello = 0,
  kFrame = 1,
  kEnd = 2,
  kError = 3,
};

std::string to_string(MessageType type);

struct WireMessage {
  MessageType type = MessageType::kHello;
  std::vector<std::uint8_t> payload;

  std::vector<std::uint8_t> serialize() const;
  static WireMessage hello(const CodecModel& model);
  static WireMessage frame(const FramePacket& packet);
  static WireMessage end();
  static WireMessage error(const std::string& message);
  // {config hash, weights hash}
  std::pair<std::uint64_t, std::uint64_t> hello_hashes() const;
  std::string error_text() const;
};

// Blocking byte stream over a file descriptor (socket or pipe). Owns the fd.
class FdTransport {
 public:
  FdTransport() = default;
  explicit FdTransport(int fd) : fd_(fd) {}
  FdTransport(FdTransport&& other) noexcept;
  FdTransport& operator=(FdTransport&& other) noexcept;
  FdTransport(const FdTransport&) = delete;
  FdTransport& operator=(const FdTransport&) = delete;
  ~FdTransport();

  void write_all(std::span<const std::uint8_t> bytes);
  // Reads exactly bytes.size() bytes. Returns false on end of stream before
  // the first byte; throws on a partial read or I/O error.
  bool read_exact(std::span<std::uint8_t> bytes);
  void close();
  std::uint64_t bytes_written() const { return written_; }
  std::uint64_t bytes_read() const { return read_; }

 private:
  int fd_ = -1;
  std::uint64_t written_ = 0;
  std::uint64_t read_ = 0;
};

void send_message(FdTransport& transport, const WireMessage& message);
// nullopt on a clean end of stream at a message boundary.
std::optional<WireMessage> receive_message(FdTransport& transport);

// Connected pair of local stream sockets.
std::pair<FdTransport, FdTransport> socket_pair();

// TCP on "host:port". Port 0 lets the system choose; see port().
class TcpListener {
 public:
  explicit TcpListener(const std::string& addr);
  TcpListener(const TcpListener&) = delete;
  TcpListener& operator=(const TcpListener&) = delete;
  ~TcpListener();
  std::uint16_t port() const { return port_; }
  FdTransport accept();

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

// Retries until `timeout_ms` elapses so the head may start before the tail.
FdTransport tcp_connect(const std::string& addr, int timeout_ms = 10000);

struct HeadResult {
  std::size_t frames = 0;
  std::uint64_t payload_bits = 0;  // chunk payloads only
  std::uint64_t wire_bytes = 0;    // everything written, framing included
  double encode_ms = 0.0;          // model + range coder, head side
};

// Runs f_{1,S}, h and the encoders on `tokens`, streaming one FRAME per
// token. Throws if the tail rejects the session.
HeadResult serve_head(FdTransport& transport, const CodecModel& model,
                      std::span<const int> tokens);

struct TailResult {
  DecodedSequence decoded;
  // arrivals[t] = FRAME messages received when prediction t was produced.
  std::vector<std::size_t> arrivals;
  double decode_ms = 0.0;
};

// Decodes frames as they arrive and runs the tail of the backbone. Sends
// ERROR and throws on a hash mismatch, an unexpected message or a frame out
// of order.
TailResult serve_tail(FdTransport& transport, const CodecModel& model);

struct LosslessResult {
  std::uint64_t raw_bits = 0;         // 16 bits per value
  std::uint64_t compressed_bits = 0;  // raw DEFLATE stream
  double bpt = 0.0;                   // compressed bits per row
  double ms_per_token = 0.0;
};

// DEFLATE (zlib, raw stream) over the symbols serialized row-major as
// little-endian int16. Throws if a symbol does not fit in 16 bits.
LosslessResult lossless_baseline(const QuantizedLatent& y);

struct Crossover {
  double mbps = 0.0;
  bool infinite = false;
};

inline constexpr double kProtocolOverhead = 0.09;

// Link speed below which sending coded bits plus coding time beats sending
// raw bits, both inflated by the protocol overhead:
//   coded*(1+o)/link + t < raw*(1+o)/link  <=>  link < (raw-coded)*(1+o)/t.
// Bits are per token, t in milliseconds per token.
Crossover crossover_mbps(double raw_bits, double coded_bits, double ms_per_token,
                         double overhead = kProtocolOverhead);

struct TimingReport {
  std::size_t tokens = 0;
  double raw_bits_per_token = 0.0;
  double coded_bits_per_token = 0.0;
  double head_ms_per_token = 0.0;
  double tail_ms_per_token = 0.0;
  Crossover crossover;  // uses head + tail time as the coding time
};

TimingReport timing_report(const HeadResult& head, const TailResult& tail,
                           std::size_t embed_dim);

}  // namespace lmc

#endif  // LMC_RUNTIME_HPP_
