// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <chrono>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "phraseforge/encoder.hpp"

namespace phraseforge {

// Remote encoder wire protocol. One JSON object per line over a byte stream.
//
//   request:  {"id":"req-1","texts":["...", ...]}
//   response: {"dim":64,"id":"req-1","vectors":[[...], ...]}
//
// Each response vector holds 2*dim numbers: the start features followed by the
// end features. Projection is never done remotely.

/// Bidirectional line-oriented byte stream.
class LineChannel {
 public:
  virtual ~LineChannel() = default;
  /// Writes `line` followed by '\n'.
  virtual void write_line(std::string_view line) = 0;
  /// Reads up to and excluding the next '\n'. Throws TransportError on EOF.
  virtual std::string read_line() = 0;
};

struct Endpoint {
  std::string host;
  std::uint16_t port = 0;
};

/// Accepts "host:port" or "tcp://host:port". Throws ConfigError.
Endpoint parse_endpoint(std::string_view text);

/// TCP connection with send/receive timeouts.
std::unique_ptr<LineChannel> connect_tcp(const Endpoint& endpoint,
                                         std::chrono::milliseconds timeout);

std::string encode_request(std::string_view id, std::span<const std::string> texts);

struct EncodeResponse {
  std::string id;
  std::size_t dim = 0;
  std::vector<BaseEmbedding> embeddings;
};

/// Parses one response line. Throws ProtocolError on malformed JSON, a vector
/// whose length is not 2*dim, or non-finite values.
EncodeResponse decode_response(std::string_view line);

/// Speaks the wire protocol over a channel. Not thread-safe; one client per
/// connection.
class RemoteEncoderClient {
 public:
  explicit RemoteEncoderClient(std::unique_ptr<LineChannel> channel);

  /// Sends one request per batch before reading any response, then matches
  /// responses to requests by id. Returns embeddings per batch, in batch order.
  std::vector<std::vector<BaseEmbedding>> encode_batches(
      std::span<const std::vector<std::string>> batches);

  std::vector<BaseEmbedding> encode(std::span<const std::string> texts);

  /// Dim reported by the last response, 0 before the first one.
  std::size_t last_dim() const { return last_dim_; }

 private:
  std::string next_id();

  std::unique_ptr<LineChannel> channel_;
  std::uint64_t next_request_ = 1;
  std::size_t last_dim_ = 0;
};

/// One-shot helper: connects, encodes one batch, disconnects. An empty batch
/// returns immediately without touching the network.
std::vector<BaseEmbedding> remote_encode(std::span<const std::string> texts,
                                         const Endpoint& endpoint,
                                         std::chrono::milliseconds timeout =
                                             std::chrono::milliseconds(10000));

/// EncoderProvider backed by a remote service. Splits large requests into
/// batches of `max_batch` texts that are pipelined on one connection.
class RemoteProvider final : public EncoderProvider {
 public:
  RemoteProvider(std::unique_ptr<LineChannel> channel, std::size_t dim,
                 std::size_t max_batch = 256);

  std::size_t dim() const override { return dim_; }
  std::vector<BaseEmbedding> embed(std::span<const std::string> texts) override;

 private:
  RemoteEncoderClient client_;
  std::size_t dim_;
  std::size_t max_batch_;
};

}  // namespace phraseforge
