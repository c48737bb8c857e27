// Copyright 2026 The phraseforge Authors
// SPDX-License-Identifier: Apache-2.0

#include "phraseforge/remote_encoder.hpp"

#include <netdb.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <charconv>
#include <cmath>
#include <cstring>
#include <map>

#include "json.hpp"
#include "phraseforge/errors.hpp"

namespace phraseforge {

namespace {

class TcpChannel final : public LineChannel {
 public:
  explicit TcpChannel(int fd) : fd_(fd) {}
  ~TcpChannel() override { ::close(fd_); }
  TcpChannel(const TcpChannel&) = delete;
  TcpChannel& operator=(const TcpChannel&) = delete;

  void write_line(std::string_view line) override {
    std::string buf(line);
    buf.push_back('\n');
    std::size_t sent = 0;
    while (sent < buf.size()) {
      const ssize_t n = ::send(fd_, buf.data() + sent, buf.size() - sent, MSG_NOSIGNAL);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw TransportError(std::string("send failed: ") + std::strerror(errno));
      }
      sent += static_cast<std::size_t>(n);
    }
  }

  std::string read_line() override {
    for (;;) {
      if (auto nl = pending_.find('\n'); nl != std::string::npos) {
        std::string line = pending_.substr(0, nl);
        pending_.erase(0, nl + 1);
        return line;
      }
      char chunk[65536];
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n == 0) throw TransportError("connection closed by peer");
      if (n < 0) {
        if (errno == EINTR) continue;
        if (errno == EAGAIN || errno == EWOULDBLOCK) throw TransportError("receive timed out");
        throw TransportError(std::string("recv failed: ") + std::strerror(errno));
      }
      pending_.append(chunk, static_cast<std::size_t>(n));
    }
  }

 private:
  int fd_;
  std::string pending_;
};

Eigen::VectorXd to_vector(const nlohmann::json& values, std::size_t offset, std::size_t dim) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) {
    const auto& x = values[offset + i];
    if (!x.is_number()) throw ProtocolError("vector entries must be numbers");
    const double value = x.get<double>();
    if (!std::isfinite(value)) throw ProtocolError("non-finite vector entry");
    v[static_cast<Eigen::Index>(i)] = value;
  }
  return v;
}

}  // namespace

Endpoint parse_endpoint(std::string_view text) {
  if (text.starts_with("tcp://")) text.remove_prefix(6);
  const auto colon = text.rfind(':');
  if (colon == std::string_view::npos || colon == 0 || colon + 1 == text.size()) {
    throw ConfigError("endpoint must be host:port, got '" + std::string(text) + "'");
  }
  unsigned port = 0;
  const auto port_text = text.substr(colon + 1);
  auto [ptr, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
  if (ec != std::errc() || ptr != port_text.data() + port_text.size() || port == 0 ||
      port > 65535) {
    throw ConfigError("invalid endpoint port '" + std::string(port_text) + "'");
  }
  return Endpoint{std::string(text.substr(0, colon)), static_cast<std::uint16_t>(port)};
}

std::unique_ptr<LineChannel> connect_tcp(const Endpoint& endpoint,
                                         std::chrono::milliseconds timeout) {
  addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* found = nullptr;
  const std::string port = std::to_string(endpoint.port);
  if (int rc = ::getaddrinfo(endpoint.host.c_str(), port.c_str(), &hints, &found); rc != 0) {
    throw TransportError("cannot resolve " + endpoint.host + ": " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(found, &::freeaddrinfo);

  timeval tv{};
  tv.tv_sec = static_cast<time_t>(timeout.count() / 1000);
  tv.tv_usec = static_cast<suseconds_t>((timeout.count() % 1000) * 1000);
  std::string last_error = "no address";
  for (addrinfo* ai = found; ai != nullptr; ai = ai->ai_next) {
    const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) {
      last_error = std::strerror(errno);
      continue;
    }
    ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
    ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) return std::make_unique<TcpChannel>(fd);
    last_error = std::strerror(errno);
    ::close(fd);
  }
  throw TransportError("cannot connect to " + endpoint.host + ":" + port + ": " + last_error);
}

std::string encode_request(std::string_view id, std::span<const std::string> texts) {
  nlohmann::json request = {{"id", std::string(id)},
                            {"texts", std::vector<std::string>(texts.begin(), texts.end())}};
  return request.dump();
}

EncodeResponse decode_response(std::string_view line) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("malformed response: ") + e.what());
  }
  if (!doc.is_object()) throw ProtocolError("response is not an object");
  auto id = doc.find("id");
  auto dim = doc.find("dim");
  auto vectors = doc.find("vectors");
  if (id == doc.end() || !id->is_string()) throw ProtocolError("response lacks string 'id'");
  if (dim == doc.end() || !dim->is_number_unsigned() || dim->get<std::size_t>() < 2) {
    throw ProtocolError("response lacks valid 'dim'");
  }
  if (vectors == doc.end() || !vectors->is_array()) {
    throw ProtocolError("response lacks 'vectors' array");
  }
  EncodeResponse out;
  out.id = id->get<std::string>();
  out.dim = dim->get<std::size_t>();
  out.embeddings.reserve(vectors->size());
  for (const auto& v : *vectors) {
    if (!v.is_array() || v.size() != 2 * out.dim) {
      throw ProtocolError("vector length " + std::to_string(v.is_array() ? v.size() : 0) +
                          " inconsistent with dim " + std::to_string(out.dim));
    }
    out.embeddings.push_back(BaseEmbedding{to_vector(v, 0, out.dim), to_vector(v, out.dim, out.dim)});
  }
  return out;
}

RemoteEncoderClient::RemoteEncoderClient(std::unique_ptr<LineChannel> channel)
    : channel_(std::move(channel)) {}

std::string RemoteEncoderClient::next_id() { return "req-" + std::to_string(next_request_++); }

std::vector<std::vector<BaseEmbedding>> RemoteEncoderClient::encode_batches(
    std::span<const std::vector<std::string>> batches) {
  std::vector<std::vector<BaseEmbedding>> results(batches.size());
  std::map<std::string, std::size_t> in_flight;
  for (std::size_t b = 0; b < batches.size(); ++b) {
    if (batches[b].empty()) continue;
    const std::string id = next_id();
    channel_->write_line(encode_request(id, batches[b]));
    in_flight.emplace(id, b);
  }
  std::size_t dim = 0;
  while (!in_flight.empty()) {
    auto response = decode_response(channel_->read_line());
    auto it = in_flight.find(response.id);
    if (it == in_flight.end()) throw ProtocolError("unexpected response id '" + response.id + "'");
    const std::size_t b = it->second;
    if (response.embeddings.size() != batches[b].size()) {
      throw ProtocolError("response " + response.id + " has " +
                          std::to_string(response.embeddings.size()) + " vectors for " +
                          std::to_string(batches[b].size()) + " texts");
    }
    if (dim != 0 && response.dim != dim) throw ProtocolError("dim changed between responses");
    dim = response.dim;
    results[b] = std::move(response.embeddings);
    in_flight.erase(it);
  }
  if (dim != 0) last_dim_ = dim;
  return results;
}

std::vector<BaseEmbedding> RemoteEncoderClient::encode(std::span<const std::string> texts) {
  if (texts.empty()) return {};
  std::vector<std::vector<std::string>> one{std::vector<std::string>(texts.begin(), texts.end())};
  return std::move(encode_batches(one).front());
}

std::vector<BaseEmbedding> remote_encode(std::span<const std::string> texts,
                                         const Endpoint& endpoint,
                                         std::chrono::milliseconds timeout) {
  if (texts.empty()) return {};
  RemoteEncoderClient client(connect_tcp(endpoint, timeout));
  return client.encode(texts);
}

RemoteProvider::RemoteProvider(std::unique_ptr<LineChannel> channel, std::size_t dim,
                               std::size_t max_batch)
    : client_(std::move(channel)), dim_(dim), max_batch_(max_batch) {
  if (dim < 2) throw ConfigError("remote provider dim must be >= 2");
  if (max_batch < 1) throw ConfigError("max_batch must be >= 1");
}

std::vector<BaseEmbedding> RemoteProvider::embed(std::span<const std::string> texts) {
  if (texts.empty()) return {};
  std::vector<std::vector<std::string>> batches;
  for (std::size_t i = 0; i < texts.size(); i += max_batch_) {
    const auto end = std::min(texts.size(), i + max_batch_);
    batches.emplace_back(texts.begin() + static_cast<std::ptrdiff_t>(i),
                         texts.begin() + static_cast<std::ptrdiff_t>(end));
  }
  auto results = client_.encode_batches(batches);
  if (client_.last_dim() != dim_) {
    throw ConfigError("remote encoder dim " + std::to_string(client_.last_dim()) +
                      " != configured dim " + std::to_string(dim_));
  }
  std::vector<BaseEmbedding> out;
  out.reserve(texts.size());
  for (auto& r : results) {
    for (auto& e : r) out.push_back(std::move(e));
  }
  return out;
}

}  // namespace phraseforge
