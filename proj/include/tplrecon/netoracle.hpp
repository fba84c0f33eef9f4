#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "tplrecon/matcher.hpp"
#include "tplrecon/synth.hpp"

namespace tplrecon {

// Wire protocol: one JSON object per line in each direction.
//   {"op":"auth","claim":"17","template":[...]} -> {"score":x,"metric":"sed"} | {"match":b}
//   {"op":"enroll","claim":"17","template":[...]} -> {"ok":true}
//   {"op":"stats"} -> {"queries":n}
//   {"op":"reset"} -> {"queries":0}
//   failures -> {"error":{"code":"LOCKED","message":"..."}}
// Reals travel as 17-significant-digit decimals.

struct ServerConfig {
  OracleConfig oracle;
  // When the threshold is not given explicitly it is calibrated from the
  // model at this FMR.
  std::optional<double> fmr;
  std::size_t calibration_pairs = 100000;
  RngSeed calibration_seed{0};
  std::optional<std::filesystem::path> model_manifest;
  RngSeed enroll_seed{7};
  std::string bind = "127.0.0.1:0";
  bool open_enrollment = false;
};

/// Parses {metric, mode, threshold | fmr, sigma, query_limit, model_manifest,
/// bind, open_enrollment, enroll_seed, noise_seed, calibration_pairs, seed}.
ServerConfig server_config_from_json(const std::string& text);

std::string format_real(double v);
std::string encode_auth_request(std::string_view op, std::string_view claim,
                                const Template& probe);

/// Request handling without sockets; one request line in, one response out.
class OracleService {
 public:
  OracleService(std::shared_ptr<Oracle> oracle, bool open_enrollment);

  std::string handle(const std::string& line);
  Oracle& oracle() noexcept { return *oracle_; }

 private:
  std::shared_ptr<Oracle> oracle_;
  bool open_enrollment_;
};

/// Builds the oracle described by `config`, enrolling every identity of the
/// model manifest (claim = identity index) when one is given.
std::shared_ptr<Oracle> build_server_oracle(ServerConfig& config);

class OracleServer {
 public:
  OracleServer(std::shared_ptr<Oracle> oracle, std::string bind, bool open_enrollment);
  explicit OracleServer(ServerConfig config);
  ~OracleServer();

  OracleServer(const OracleServer&) = delete;
  OracleServer& operator=(const OracleServer&) = delete;

  void start();
  void stop();
  // Blocks until stop() is called from another thread.
  void wait();

  std::uint16_t port() const noexcept { return port_; }
  std::string address() const;
  Oracle& oracle() noexcept { return service_.oracle(); }

 private:
  void accept_loop();
  void serve_connection(int fd);

  OracleService service_;
  std::string bind_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  std::mutex conn_mutex_;
  std::set<int> conn_fds_;
  std::vector<std::thread> conn_threads_;
};

/// Client adapter that speaks the wire protocol and satisfies the same
/// MatchingOracle contract as the in-process Oracle.
class RemoteOracle final : public MatchingOracle {
 public:
  RemoteOracle(const std::string& address, OracleMode mode);
  ~RemoteOracle() override;

  RemoteOracle(const RemoteOracle&) = delete;
  RemoteOracle& operator=(const RemoteOracle&) = delete;

  MatchScore authenticate_score(std::string_view claim, const Template& probe) override;
  bool authenticate_binary(std::string_view claim, const Template& probe) override;
  // Attempts answered to this client.
  std::uint64_t queries() const override;

  std::uint64_t server_queries();
  void reset_server();
  void enroll(std::string_view claim, const Template& t);

 private:
  std::string round_trip(const std::string& request);

  int fd_ = -1;
  OracleMode mode_;
  std::string buffer_;
  std::uint64_t queries_ = 0;
  mutable std::mutex mutex_;
};

}  // namespace tplrecon
