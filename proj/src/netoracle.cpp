#include "tplrecon/netoracle.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace tplrecon {

using nlohmann::json;

namespace {

constexpr std::size_t kMaxLine = 16 * 1024 * 1024;

std::string error_response(std::string_view code, std::string_view message) {
  return json{{"error", {{"code", code}, {"message", message}}}}.dump();
}

std::pair<std::string, std::uint16_t> split_address(std::string address) {
  if (address.rfind("tcp://", 0) == 0) address = address.substr(6);
  const auto colon = address.rfind(':');
  if (colon == std::string::npos) {
    throw Error(ErrorCode::kInvalidArgument, "address must be host:port, got '" + address + "'");
  }
  const std::string host = address.substr(0, colon);
  const int port = std::stoi(address.substr(colon + 1));
  if (port < 0 || port > 65535) throw Error(ErrorCode::kInvalidArgument, "port out of range");
  return {host.empty() ? "127.0.0.1" : host, static_cast<std::uint16_t>(port)};
}

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

// Reads one '\n'-terminated line (without the newline). Returns false on
// EOF or error.
bool read_line(int fd, std::string& buffer, std::string& line) {
  for (;;) {
    const auto nl = buffer.find('\n');
    if (nl != std::string::npos) {
      line.assign(buffer, 0, nl);
      buffer.erase(0, nl + 1);
      if (!line.empty() && line.back() == '\r') line.pop_back();
      return true;
    }
    if (buffer.size() > kMaxLine) return false;
    char chunk[65536];
    const ssize_t n = ::recv(fd, chunk, sizeof(chunk), 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
}

Error wire_error(const json& err) {
  const std::string code = err.value("code", std::string("UNKNOWN"));
  const std::string message = err.value("message", std::string());
  ErrorCode ec = ErrorCode::kProtocol;
  if (code == "LOCKED") ec = ErrorCode::kLockedOut;
  else if (code == "UNKNOWN_ID") ec = ErrorCode::kUnknownIdentity;
  else if (code == "BAD_DIM") ec = ErrorCode::kDimMismatch;
  else if (code == "WRONG_MODE") ec = ErrorCode::kWrongMode;
  return Error(ec, code + ": " + message);
}

json parse_response(const std::string& line) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kProtocol, std::string("malformed response: ") + e.what());
  }
}

}  // namespace

std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string encode_auth_request(std::string_view op, std::string_view claim,
                                const Template& probe) {
  std::string out;
  out.reserve(40 + claim.size() + probe.dim() * 25);
  out += "{\"op\":";
  out += json(op).dump();
  out += ",\"claim\":";
  out += json(claim).dump();
  out += ",\"template\":[";
  for (std::size_t i = 0; i < probe.dim(); ++i) {
    if (i) out += ',';
    out += format_real(probe[i]);
  }
  out += "]}";
  return out;
}

ServerConfig server_config_from_json(const std::string& text) {
  ServerConfig c;
  try {
    const json j = json::parse(text);
    c.oracle.metric = parse_metric(j.value("metric", std::string("sed")));
    c.oracle.mode = parse_mode(j.value("mode", std::string("binary")));
    if (j.contains("threshold") && !j["threshold"].is_null()) {
      c.oracle.threshold = Threshold(j["threshold"].get<double>(), c.oracle.metric);
    }
    if (j.contains("fmr") && !j["fmr"].is_null()) c.fmr = j["fmr"].get<double>();
    c.oracle.score_noise_sigma = j.value("sigma", 0.0);
    if (j.contains("query_limit") && !j["query_limit"].is_null()) {
      c.oracle.query_limit = j["query_limit"].get<std::uint64_t>();
    }
    c.oracle.noise_seed.value = j.value("noise_seed", std::uint64_t{0});
    if (j.contains("model_manifest") && !j["model_manifest"].is_null()) {
      c.model_manifest = j["model_manifest"].get<std::string>();
    }
    c.enroll_seed.value = j.value("enroll_seed", c.enroll_seed.value);
    c.calibration_pairs = j.value("calibration_pairs", c.calibration_pairs);
    c.calibration_seed.value = j.value("calibration_seed", c.calibration_seed.value);
    c.bind = j.value("bind", c.bind);
    c.open_enrollment = j.value("open_enrollment", false);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kParse, std::string("server config: ") + e.what());
  }
  return c;
}

std::shared_ptr<Oracle> build_server_oracle(ServerConfig& config) {
  std::optional<IdentityModel> model;
  if (config.model_manifest) model = load_model(*config.model_manifest);
  if (!config.oracle.threshold && config.fmr) {
    if (!model) {
      throw Error(ErrorCode::kInvalidArgument, "fmr calibration needs a model_manifest");
    }
    config.oracle.threshold = calibrate_from_model(*model, config.oracle.metric, *config.fmr,
                                                   config.calibration_pairs,
                                                   config.calibration_seed)
                                  .threshold;
  }
  auto oracle = std::make_shared<Oracle>(config.oracle);
  if (model) {
    for (std::size_t i = 0; i < model->num_identities(); ++i) {
      oracle->enroll(std::to_string(i),
                     enrollment_template(*model, i, config.oracle.metric, config.enroll_seed));
    }
  }
  return oracle;
}

OracleService::OracleService(std::shared_ptr<Oracle> oracle, bool open_enrollment)
    : oracle_(std::move(oracle)), open_enrollment_(open_enrollment) {}

std::string OracleService::handle(const std::string& line) {
  json req;
  try {
    req = json::parse(line);
  } catch (const json::exception& e) {
    return error_response("BAD_JSON", e.what());
  }
  if (!req.is_object() || !req.contains("op") || !req["op"].is_string()) {
    return error_response("BAD_REQUEST", "missing op");
  }
  const std::string op = req["op"].get<std::string>();

  if (op == "stats") return "{\"queries\":" + std::to_string(oracle_->queries()) + "}";
  if (op == "reset") {
    oracle_->reset_ledger();
    return "{\"queries\":0}";
  }
  if (op != "auth" && op != "enroll") return error_response("BAD_REQUEST", "unknown op '" + op + "'");

  std::string claim;
  if (req.contains("claim") && req["claim"].is_string()) {
    claim = req["claim"].get<std::string>();
  } else if (req.contains("claim") && req["claim"].is_number_unsigned()) {
    claim = std::to_string(req["claim"].get<std::uint64_t>());
  } else {
    return error_response("BAD_REQUEST", "missing claim");
  }
  if (!req.contains("template") || !req["template"].is_array() || req["template"].empty()) {
    return error_response("BAD_REQUEST", "missing template");
  }
  std::vector<double> values;
  values.reserve(req["template"].size());
  for (const auto& v : req["template"]) {
    if (!v.is_number()) return error_response("BAD_REQUEST", "template values must be numbers");
    values.push_back(v.get<double>());
  }

  try {
    if (op == "enroll") {
      if (!open_enrollment_) return error_response("ENROLL_CLOSED", "enrollment is closed");
      oracle_->enroll(claim, Template(std::move(values)));
      return "{\"ok\":true}";
    }
    const auto dim = oracle_->enrolled_dim(claim);
    if (!dim) return error_response("UNKNOWN_ID", "unknown identity '" + claim + "'");
    if (values.size() != *dim) {
      return error_response("BAD_DIM", "expected " + std::to_string(*dim) + " values, got " +
                                            std::to_string(values.size()));
    }
    const Template probe(std::move(values));
    if (oracle_->config().mode == OracleMode::kBinaryOnly) {
      return oracle_->authenticate_binary(claim, probe) ? "{\"match\":true}"
                                                        : "{\"match\":false}";
    }
    const MatchScore s = oracle_->authenticate_score(claim, probe);
    return "{\"score\":" + format_real(s.value) + ",\"metric\":\"" + metric_name(s.metric) +
           "\"}";
  } catch (const Error& e) {
    return error_response(error_code_name(e.code()), e.what());
  }
}

OracleServer::OracleServer(std::shared_ptr<Oracle> oracle, std::string bind,
                           bool open_enrollment)
    : service_(std::move(oracle), open_enrollment), bind_(std::move(bind)) {}

OracleServer::OracleServer(ServerConfig config)
    : service_(build_server_oracle(config), config.open_enrollment), bind_(config.bind) {}

OracleServer::~OracleServer() { stop(); }

void OracleServer::start() {
  if (running_) return;
  const auto [host, port] = split_address(bind_);
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw Error(ErrorCode::kNetwork, std::strerror(errno));
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host == "localhost" ? "127.0.0.1" : host.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw Error(ErrorCode::kInvalidArgument, "bind host must be an IPv4 address: " + host);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) < 0 ||
      ::listen(listen_fd_, 64) < 0) {
    const std::string why = std::strerror(errno);
    ::close(listen_fd_);
    throw Error(ErrorCode::kNetwork, "cannot listen on " + bind_ + ": " + why);
  }
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  running_ = true;
  acceptor_ = std::thread([this] { accept_loop(); });
}

std::string OracleServer::address() const {
  return split_address(bind_).first + ":" + std::to_string(port_);
}

void OracleServer::accept_loop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR) continue;
      if (!running_) break;
      continue;
    }
    const int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
    std::lock_guard lock(conn_mutex_);
    if (!running_) {
      ::close(fd);
      break;
    }
    conn_fds_.insert(fd);
    conn_threads_.emplace_back([this, fd] { serve_connection(fd); });
  }
}

void OracleServer::serve_connection(int fd) {
  std::string buffer;
  std::string line;
  while (read_line(fd, buffer, line)) {
    if (line.empty()) continue;
    if (!send_all(fd, service_.handle(line) + "\n")) break;
  }
  std::lock_guard lock(conn_mutex_);
  if (conn_fds_.erase(fd)) ::close(fd);
}

void OracleServer::stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  ::close(listen_fd_);
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard lock(conn_mutex_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
    threads.swap(conn_threads_);
  }
  for (auto& t : threads) t.join();
}

void OracleServer::wait() {
  while (running_) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

RemoteOracle::RemoteOracle(const std::string& address, OracleMode mode) : mode_(mode) {
  const auto [host, port] = split_address(address);
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || !res) {
    throw Error(ErrorCode::kNetwork, "cannot resolve " + host);
  }
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  const bool ok = fd_ >= 0 && ::connect(fd_, res->ai_addr, res->ai_addrlen) == 0;
  const std::string why = std::strerror(errno);
  ::freeaddrinfo(res);
  if (!ok) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::kNetwork, "cannot connect to " + address + ": " + why);
  }
  const int one = 1;
  ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
}

RemoteOracle::~RemoteOracle() {
  if (fd_ >= 0) ::close(fd_);
}

// Caller holds mutex_.
std::string RemoteOracle::round_trip(const std::string& request) {
  if (fd_ < 0) throw Error(ErrorCode::kNetwork, "connection closed");
  std::string line;
  if (!send_all(fd_, request + "\n") || !read_line(fd_, buffer_, line)) {
    ::close(fd_);
    fd_ = -1;
    throw Error(ErrorCode::kNetwork, "connection lost");
  }
  return line;
}

MatchScore RemoteOracle::authenticate_score(std::string_view claim, const Template& probe) {
  if (mode_ != OracleMode::kScoreReleasing) {
    throw Error(ErrorCode::kWrongMode, "client is in binary mode");
  }
  std::lock_guard lock(mutex_);
  const json resp = parse_response(round_trip(encode_auth_request("auth", claim, probe)));
  if (resp.contains("error")) throw wire_error(resp["error"]);
  if (!resp.contains("score")) {
    throw Error(ErrorCode::kWrongMode, "server did not release a score");
  }
  ++queries_;
  return {resp["score"].get<double>(), parse_metric(resp.value("metric", std::string("sed")))};
}

bool RemoteOracle::authenticate_binary(std::string_view claim, const Template& probe) {
  if (mode_ != OracleMode::kBinaryOnly) {
    throw Error(ErrorCode::kWrongMode, "client is in score mode");
  }
  std::lock_guard lock(mutex_);
  const json resp = parse_response(round_trip(encode_auth_request("auth", claim, probe)));
  if (resp.contains("error")) throw wire_error(resp["error"]);
  if (!resp.contains("match")) {
    throw Error(ErrorCode::kWrongMode, "server did not return a match decision");
  }
  ++queries_;
  return resp["match"].get<bool>();
}

std::uint64_t RemoteOracle::queries() const {
  std::lock_guard lock(mutex_);
  return queries_;
}

std::uint64_t RemoteOracle::server_queries() {
  std::lock_guard lock(mutex_);
  const json resp = parse_response(round_trip(R"({"op":"stats"})"));
  if (resp.contains("error")) throw wire_error(resp["error"]);
  return resp.at("queries").get<std::uint64_t>();
}

void RemoteOracle::reset_server() {
  std::lock_guard lock(mutex_);
  const json resp = parse_response(round_trip(R"({"op":"reset"})"));
  if (resp.contains("error")) throw wire_error(resp["error"]);
}

void RemoteOracle::enroll(std::string_view claim, const Template& t) {
  std::lock_guard lock(mutex_);
  const json resp = parse_response(round_trip(encode_auth_request("enroll", claim, t)));
  if (resp.contains("error")) throw wire_error(resp["error"]);
}

}  // namespace tplrecon
