#pragma once

// Single-tile EM API: deploy an anomalous-reflection function (POST /profiles),
// read back a tile's state (GET /profiles/{id}) and analyze it.

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>

#include "metarefl/em.hpp"

namespace metarefl {

struct ServiceConfig {
  std::string host = "127.0.0.1";
  int port = 8080;  // 0 picks an ephemeral port
  std::optional<std::filesystem::path> store_dir;
  std::size_t max_body = 1 << 20;
};

// Immutable records keyed by id; optional one-file-per-record persistence.
class ProfileStore {
 public:
  struct Entry {
    std::string body;  // serialized record, returned verbatim
    ImpedanceProfile profile;
  };

  explicit ProfileStore(std::optional<std::filesystem::path> dir = std::nullopt);

  // Persists (when a directory is configured) before publishing the entry.
  void insert(const std::string& id, std::string body, ImpedanceProfile profile);
  std::shared_ptr<const Entry> find(const std::string& id) const;
  std::size_t size() const;
  std::string new_id();

 private:
  std::optional<std::filesystem::path> dir_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::shared_ptr<const Entry>> entries_;
  std::size_t counter_ = 0;
};

struct HttpReply {
  int status = 200;
  std::string body;
};

class EmService {
 public:
  explicit EmService(ServiceConfig cfg);
  ~EmService();
  EmService(const EmService&) = delete;
  EmService& operator=(const EmService&) = delete;

  HttpReply health() const;
  HttpReply create_profile(const std::string& body);
  HttpReply get_profile(const std::string& id) const;
  HttpReply analyze_profile(const std::string& id, const std::string& body) const;

  // Returns false when the socket cannot be bound.
  bool bind();
  int port() const noexcept { return port_; }
  // Blocks until stop() is called from another thread.
  void serve();
  void stop();

  const ProfileStore& store() const noexcept { return store_; }

 private:
  struct Http;
  ServiceConfig cfg_;
  ProfileStore store_;
  std::unique_ptr<Http> http_;
  int port_ = -1;
};

}  // namespace metarefl
