// Copyright 2026 The ThrottleKit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "throttlekit/telemetry.h"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <iostream>
#include <utility>

#include "json.hpp"

namespace throttlekit {
namespace {

using nlohmann::json;

std::optional<json> ParseDatagram(std::string_view datagram) {
  if (datagram.empty() || datagram.size() > kMaxDatagramBytes) {
    return std::nullopt;
  }
  json j = json::parse(datagram, nullptr, /*allow_exceptions=*/false);
  if (!j.is_object()) return std::nullopt;
  auto v = j.find("v");
  if (v == j.end() || !v->is_number_integer() ||
      v->get<int>() != kTelemetryWireVersion) {
    return std::nullopt;
  }
  return j;
}

std::optional<std::int64_t> NonNegativeInt(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || !it->is_number_integer()) return std::nullopt;
  auto value = it->get<std::int64_t>();
  if (value < 0) return std::nullopt;
  return value;
}

sockaddr_in ResolveIpv4(const std::string& host, int port) {
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  const std::string h = (host == "localhost" || host.empty()) ? "127.0.0.1"
                                                              : host;
  if (h == "0.0.0.0") {
    addr.sin_addr.s_addr = htonl(INADDR_ANY);
  } else if (inet_pton(AF_INET, h.c_str(), &addr.sin_addr) != 1) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_DGRAM;
    addrinfo* res = nullptr;
    if (getaddrinfo(h.c_str(), nullptr, &hints, &res) != 0 || res == nullptr) {
      throw Error("cannot resolve host " + host);
    }
    addr.sin_addr = reinterpret_cast<sockaddr_in*>(res->ai_addr)->sin_addr;
    freeaddrinfo(res);
  }
  return addr;
}

}  // namespace

std::string EncodeReport(const TelemetryReport& report) {
  json j = {{"v", kTelemetryWireVersion},
            {"id", report.client_id},
            {"win_req", report.window_requests},
            {"got_429", report.got_429},
            {"ts", report.sent_at}};
  return j.dump();
}

std::optional<TelemetryReport> DecodeReport(std::string_view datagram) {
  auto j = ParseDatagram(datagram);
  if (!j) return std::nullopt;
  TelemetryReport report;
  auto id = j->find("id");
  if (id == j->end()) return std::nullopt;
  if (id->is_string()) {
    report.client_id = id->get<std::string>();
  } else if (id->is_number_integer()) {
    report.client_id = std::to_string(id->get<std::int64_t>());
  } else {
    return std::nullopt;
  }
  auto win = NonNegativeInt(*j, "win_req");
  auto got = NonNegativeInt(*j, "got_429");
  auto ts = j->find("ts");
  if (!win || !got || ts == j->end() || !ts->is_number()) return std::nullopt;
  if (*got > *win) return std::nullopt;
  report.window_requests = *win;
  report.got_429 = *got;
  report.sent_at = ts->get<double>();
  return report;
}

std::string EncodeSnapshot(const TelemetrySnapshot& snapshot) {
  json j = {{"v", kTelemetryWireVersion},
            {"active", snapshot.active_clients},
            {"total_req", snapshot.total_requests},
            {"rep_429", snapshot.reported_429}};
  if (snapshot.limiter_rate_per_min) {
    j["limiter_rate"] = *snapshot.limiter_rate_per_min;
  }
  return j.dump();
}

std::optional<TelemetrySnapshot> DecodeSnapshot(std::string_view datagram) {
  auto j = ParseDatagram(datagram);
  if (!j) return std::nullopt;
  auto active = NonNegativeInt(*j, "active");
  auto total = NonNegativeInt(*j, "total_req");
  auto rep = NonNegativeInt(*j, "rep_429");
  if (!active || !total || !rep || *rep > *active) return std::nullopt;
  TelemetrySnapshot snapshot{*active, *total, *rep, std::nullopt};
  if (auto rate = j->find("limiter_rate"); rate != j->end()) {
    if (!rate->is_number() || rate->get<double>() <= 0) return std::nullopt;
    snapshot.limiter_rate_per_min = rate->get<double>();
  }
  return snapshot;
}

Aggregator::Aggregator(Seconds staleness_horizon,
                       std::optional<double> limiter_rate_per_min,
                       Seconds skew_tolerance)
    : horizon_(staleness_horizon),
      skew_tolerance_(skew_tolerance),
      limiter_rate_per_min_(limiter_rate_per_min) {
  if (!(horizon_ > 0)) throw ConfigError("staleness horizon must be positive");
}

bool Aggregator::Aggregate(const TelemetryReport& report, Seconds now) {
  if (report.got_429 < 0 || report.window_requests < report.got_429) {
    return false;
  }
  if (report.sent_at > now + skew_tolerance_) return false;
  Prune(now);
  auto it = latest_.find(report.client_id);
  if (it != latest_.end()) {
    if (report.sent_at < it->second.report.sent_at) return false;
    it->second = Entry{report, now};
  } else {
    latest_.emplace(report.client_id, Entry{report, now});
  }
  return true;
}

TelemetrySnapshot Aggregator::Snapshot(Seconds now) const {
  TelemetrySnapshot snapshot;
  for (const auto& [id, entry] : latest_) {
    if (!Fresh(entry, now)) continue;
    ++snapshot.active_clients;
    snapshot.total_requests += entry.report.window_requests;
    if (entry.report.got_429 > 0) ++snapshot.reported_429;
  }
  snapshot.limiter_rate_per_min = limiter_rate_per_min_;
  return snapshot;
}

void Aggregator::Prune(Seconds now) {
  std::erase_if(latest_, [&](const auto& kv) { return !Fresh(kv.second, now); });
}

std::optional<TelemetrySnapshot> EmbeddedTelemetry::Exchange(
    const TelemetryReport& report, Seconds now) {
  ++messages_;
  aggregator_.Aggregate(report, now);
  return aggregator_.Snapshot(now);
}

// --- UDP server -------------------------------------------------------------

TelemetryServer::TelemetryServer(TelemetryServerConfig config, Clock clock)
    : config_(std::move(config)),
      clock_(std::move(clock)),
      aggregator_(config_.staleness_horizon, config_.limiter_rate_per_min) {}

TelemetryServer::~TelemetryServer() { Stop(); }

void TelemetryServer::Bind() {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw Error(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr = ResolveIpv4(config_.host, config_.port);
  if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    const std::string reason = std::strerror(errno);
    ::close(fd_);
    fd_ = -1;
    throw Error("cannot bind telemetry socket " + config_.host + ":" +
                std::to_string(config_.port) + ": " + reason);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
}

void TelemetryServer::Start() {
  Bind();
  thread_ = std::thread([this] { Loop(); });
}

void TelemetryServer::Run() {
  Bind();
  Loop();
}

void TelemetryServer::Stop() {
  running_ = false;
  if (thread_.joinable()) thread_.join();
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void TelemetryServer::Loop() {
  char buf[2048];
  while (running_) {
    pollfd pfd{fd_, POLLIN, 0};
    if (::poll(&pfd, 1, 50) <= 0) continue;
    sockaddr_in peer{};
    socklen_t peer_len = sizeof(peer);
    const ssize_t n = ::recvfrom(fd_, buf, sizeof(buf), 0,
                                 reinterpret_cast<sockaddr*>(&peer), &peer_len);
    if (n <= 0) continue;
    auto report = DecodeReport(std::string_view(buf, static_cast<size_t>(n)));
    if (!report) {
      ++dropped_;
      continue;
    }
    std::string reply;
    {
      std::lock_guard lock(mu_);
      const Seconds now = clock_();
      aggregator_.Aggregate(*report, now);
      reply = EncodeSnapshot(aggregator_.Snapshot(now));
    }
    ++received_;
    if (::sendto(fd_, reply.data(), reply.size(), 0,
                 reinterpret_cast<sockaddr*>(&peer), peer_len) < 0) {
      std::cerr << "telemetry: reply failed: " << std::strerror(errno) << "\n";
    }
  }
}

TelemetrySnapshot TelemetryServer::Snapshot() const {
  std::lock_guard lock(mu_);
  return aggregator_.Snapshot(clock_());
}

void TelemetryServer::SetLimiterRate(double per_minute) {
  std::lock_guard lock(mu_);
  aggregator_.SetLimiterRate(per_minute);
}

// --- UDP client -------------------------------------------------------------

UdpTelemetryClient::UdpTelemetryClient(const std::string& host, int port,
                                       double timeout_seconds)
    : timeout_ms_(static_cast<int>(timeout_seconds * 1000)) {
  fd_ = ::socket(AF_INET, SOCK_DGRAM, 0);
  if (fd_ < 0) throw Error(std::string("socket: ") + std::strerror(errno));
  sockaddr_in addr = ResolveIpv4(host, port);
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    throw Error("cannot reach telemetry server " + host);
  }
}

UdpTelemetryClient::~UdpTelemetryClient() {
  if (fd_ >= 0) ::close(fd_);
}

std::optional<TelemetrySnapshot> UdpTelemetryClient::Exchange(
    const TelemetryReport& report, Seconds /*now*/) {
  const std::string payload = EncodeReport(report);
  ++messages_;
  if (::send(fd_, payload.data(), payload.size(), 0) < 0) return std::nullopt;
  char buf[2048];
  pollfd pfd{fd_, POLLIN, 0};
  // A late reply to an earlier timed-out exchange is accepted as current.
  if (::poll(&pfd, 1, timeout_ms_) <= 0) return std::nullopt;
  const ssize_t n = ::recv(fd_, buf, sizeof(buf), 0);
  if (n <= 0) return std::nullopt;
  return DecodeSnapshot(std::string_view(buf, static_cast<size_t>(n)));
}

}  // namespace throttlekit
