#pragma once

#include <cstdint>
#include <functional>
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "steerlm/steering/generation.hpp"

namespace steerlm {

/// Error with an HTTP status and a JSON body.
class ApiError : public std::runtime_error {
 public:
  ApiError(int status, nlohmann::json body)
      : std::runtime_error(body.dump()), status_(status), body_(std::move(body)) {}
  int status() const { return status_; }
  const nlohmann::json& body() const { return body_; }

 private:
  int status_;
  nlohmann::json body_;
};

/// Read-only artifacts shared by every session. Adapter stacks are loaded on
/// first use from `adapter_paths` and never change afterwards.
struct ServiceArtifacts {
  std::shared_ptr<const TransformerLM> lm;
  std::shared_ptr<const Vocab> vocab;
  std::shared_ptr<const Discriminator> discriminator;  // optional
  std::shared_ptr<const TokenScores> token_scores;     // optional
  std::map<std::string, std::string> adapter_paths;    // "dataset:class" -> file
  std::map<std::string, std::shared_ptr<const AdapterStack>> adapters;  // preloaded
  std::map<std::string, std::string> sources;  // artifact name -> file, for /healthz
};

/// Data directory layout shared with the CLI:
///   vocab.txt lm.bin [discriminator.bin] [wd_scores.bin] [adapters/<dataset>_<class>.bin]
ServiceArtifacts load_service_artifacts(const std::string& data_dir);

/// Everything a session can change between turns.
struct SessionConfig {
  Method method = Method::kDG;
  std::string attribute;
  GenConfig gen;
  PPLMConfig pplm;
  WDConfig wd;

  nlohmann::json to_json() const;
};

/// Field names accepted in session configs (flat object).
const std::vector<std::string>& session_config_fields();

struct Session {
  std::string id;
  SessionConfig config;
  std::shared_ptr<const AdapterStack> adapters;  // bound for AD
  std::string adapter_checksum;                  // guarded by the service lock
  std::vector<std::string> history;
  std::vector<nlohmann::json> transcript;
  std::mt19937_64 rng;  // draws one seed per turn
  std::mutex turn_mutex;
};

class Service {
 public:
  explicit Service(ServiceArtifacts artifacts, std::uint64_t seed = 0);

  /// POST /sessions: {method, attribute, seed, ...config} -> {session_id, effective_config}
  nlohmann::json create_session(const nlohmann::json& body);
  /// POST /sessions/{id}/turns: {text} -> reply. 409 while another turn runs.
  nlohmann::json turn(const std::string& id, const nlohmann::json& body);
  /// PATCH /sessions/{id}/config: partial config -> effective config.
  nlohmann::json patch_config(const std::string& id, const nlohmann::json& body);
  nlohmann::json session(const std::string& id);
  nlohmann::json attributes();
  nlohmann::json healthz();

  /// Called inside a turn while the session lock is held (tests use it to
  /// hold a turn open).
  std::function<void(const std::string& session_id)> on_turn_locked;

 private:
  std::shared_ptr<Session> find(const std::string& id);
  std::shared_ptr<const AdapterStack> adapter_for(const std::string& attribute);
  /// Applies `patch` to `cfg`; throws ApiError 422 with every bad field.
  void apply(SessionConfig& cfg, const nlohmann::json& patch, bool creating);
  std::shared_ptr<const AdapterStack> bind(const SessionConfig& cfg);

  ServiceArtifacts art_;
  std::mutex mu_;  // sessions map, id counter, adapter cache
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  std::uint64_t next_id_ = 1;
  std::mt19937_64 seeds_;
};

/// JSON-over-HTTP front end. bind() returns the bound port (0 picks a free
/// one); listen() serves until stop().
class HttpServer {
 public:
  explicit HttpServer(Service& service);
  ~HttpServer();
  int bind(const std::string& host, int port);
  void listen();  // blocks
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace steerlm
