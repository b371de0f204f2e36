#include "metarefl/service.hpp"

#include <fmt/format.h>

#include <atomic>
#include <chrono>
#include <ctime>
#include <mutex>
#include <random>
#include <thread>

#include "metarefl/analysis.hpp"
#include "metarefl/errors.hpp"
#include "metarefl/serialize.hpp"
#include "metarefl/synthesis.hpp"

// Last: resolv.h (pulled in by httplib) defines a `_res` macro that breaks Eigen.
// httplib's default backlog of 5 drops connections under bursts of concurrent deploys.
#define CPPHTTPLIB_LISTEN_BACKLOG 128
#include "httplib.h"

namespace metarefl {

namespace fs = std::filesystem;

namespace {

HttpReply error_reply(int status, std::string_view code, const std::string& detail) {
  return {status, json{{"error", code}, {"detail", detail}}.dump()};
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(now.time_since_epoch()).count() % 1000000;
  std::tm tm{};
  gmtime_r(&t, &tm);
  return fmt::format("{:04}-{:02}-{:02}T{:02}:{:02}:{:02}.{:06}Z", tm.tm_year + 1900, tm.tm_mon + 1, tm.tm_mday,
                     tm.tm_hour, tm.tm_min, tm.tm_sec, micros);
}

HttpReply reply_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::InvalidGeometry:
    case ErrorCode::InvalidArgument:
      return error_reply(422, to_string(e.code()), e.detail());
    case ErrorCode::SchemaError:
      return error_reply(400, "BadRequest", e.detail());
    default:
      return error_reply(500, to_string(e.code()), e.detail());
  }
}

bool is_valid_id(const std::string& id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id) {
    if (!((c >= '0' && c <= '9') || (c >= 'a' && c <= 'f'))) return false;
  }
  return true;
}

// Parses a JSON object body, rejecting keys outside the allowed set.
std::optional<json> parse_body(const std::string& body, std::initializer_list<const char*> allowed,
                               HttpReply& err) {
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    err = error_reply(400, "BadRequest", std::string("malformed JSON: ") + e.what());
    return std::nullopt;
  }
  if (!j.is_object()) {
    err = error_reply(400, "BadRequest", "body must be a JSON object");
    return std::nullopt;
  }
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) {
      err = error_reply(400, "BadRequest", "unexpected key '" + key + "'");
      return std::nullopt;
    }
  }
  return j;
}

}  // namespace

ProfileStore::ProfileStore(std::optional<fs::path> dir) : dir_(std::move(dir)) {
  if (!dir_) return;
  std::error_code ec;
  fs::create_directories(*dir_, ec);
  if (ec || !fs::is_directory(*dir_)) fail(ErrorCode::IoError, "cannot create store directory " + dir_->string());
  for (const auto& item : fs::directory_iterator(*dir_)) {
    if (!item.is_regular_file() || item.path().extension() != ".json") continue;
    std::string body = read_text_file(item.path());
    json j;
    try {
      j = json::parse(body);
    } catch (const json::parse_error& e) {
      fail(ErrorCode::SchemaError, item.path().string() + ": " + e.what());
    }
    const std::string id = j.at("id").get<std::string>();
    auto entry = std::make_shared<Entry>(Entry{std::move(body), profile_from_json(j.at("profile"))});
    entries_.emplace(id, std::move(entry));
  }
}

std::string ProfileStore::new_id() {
  static thread_local std::mt19937_64 rng{std::random_device{}()};
  std::size_t n;
  {
    std::unique_lock lock(mutex_);
    n = ++counter_;
  }
  return fmt::format("{:016x}{:08x}", rng(), static_cast<std::uint32_t>(n));
}

void ProfileStore::insert(const std::string& id, std::string body, ImpedanceProfile profile) {
  auto entry = std::make_shared<const Entry>(Entry{std::move(body), std::move(profile)});
  std::unique_lock lock(mutex_);
  if (entries_.count(id)) fail(ErrorCode::InvalidArgument, "duplicate record id " + id);
  if (dir_) write_text_file(*dir_ / (id + ".json"), entry->body);
  entries_.emplace(id, std::move(entry));
}

std::shared_ptr<const ProfileStore::Entry> ProfileStore::find(const std::string& id) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(id);
  return it == entries_.end() ? nullptr : it->second;
}

std::size_t ProfileStore::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

struct EmService::Http {
  httplib::Server server;
  // httplib's stop() is a no-op until the accept loop runs, so stop() and serve()
  // hand off through these flags.
  std::atomic<bool> serving{false};
  std::atomic<bool> stop_requested{false};
};

EmService::EmService(ServiceConfig cfg)
    : cfg_(std::move(cfg)), store_(cfg_.store_dir), http_(std::make_unique<Http>()) {
  auto& svr = http_->server;
  svr.set_payload_max_length(cfg_.max_body);
  // httplib defaults to SO_REUSEPORT, which lets a second server share the port silently.
  svr.set_socket_options([](socket_t sock) {
    int yes = 1;
    setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof(yes));
  });
  const auto send = [](httplib::Response& res, const HttpReply& r) {
    res.status = r.status;
    res.set_content(r.body, "application/json");
  };
  svr.Get("/healthz", [this, send](const httplib::Request&, httplib::Response& res) { send(res, health()); });
  svr.Post("/profiles", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, create_profile(req.body));
  });
  svr.Get(R"(/profiles/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, get_profile(req.matches[1]));
  });
  svr.Post(R"(/profiles/([^/]+)/analyze)", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, analyze_profile(req.matches[1], req.body));
  });
  svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
    if (!res.body.empty()) return;
    const char* code = res.status == 413 ? "PayloadTooLarge" : res.status == 404 ? "NotFound" : "HttpError";
    res.set_content(json{{"error", code}, {"detail", httplib::status_message(res.status)}}.dump(),
                    "application/json");
  });
}

EmService::~EmService() { stop(); }

HttpReply EmService::health() const { return {200, json{{"status", "ok"}}.dump()}; }

HttpReply EmService::create_profile(const std::string& body) {
  if (body.size() > cfg_.max_body) return error_reply(413, "PayloadTooLarge", "body exceeds max_body");
  HttpReply err;
  const auto parsed = parse_body(body, {"theta_i", "theta_r", "modes", "grid_p", "optimize_target_phase"}, err);
  if (!parsed) return err;
  const json& j = *parsed;

  IncidenceSpec inc;
  SynthesisConfig cfg;
  try {
    inc.theta_i_deg = j.at("theta_i").get<double>();
    inc.theta_r_deg = j.at("theta_r").get<double>();
    cfg.m_evanescent = j.value("modes", cfg.m_evanescent);
    cfg.grid_p = j.value("grid_p", cfg.grid_p);
    cfg.optimize_target_phase = j.value("optimize_target_phase", cfg.optimize_target_phase);
  } catch (const json::exception& e) {
    return error_reply(400, "BadRequest", e.what());
  }

  SynthesisResult res;
  try {
    res = synthesize(inc, cfg);
  } catch (const Error& e) {
    return reply_for(e);
  }

  const std::string id = store_.new_id();
  json design = to_json(inc);
  design["synthesis"] = to_json(cfg);
  const json record{{"id", id},
                    {"profile", to_json(res.profile)},
                    {"design", design},
                    {"metrics",
                     {{"max_local_residual", res.max_local_residual},
                      {"reactive_impurity", res.reactive_impurity},
                      {"converged", res.converged},
                      {"iterations", res.iterations}}},
                    {"created_at", utc_timestamp()}};
  std::string text = record.dump();
  try {
    store_.insert(id, text, res.profile);
  } catch (const Error& e) {
    return error_reply(500, to_string(e.code()), e.detail());
  }
  return {201, std::move(text)};
}

HttpReply EmService::get_profile(const std::string& id) const {
  const auto entry = is_valid_id(id) ? store_.find(id) : nullptr;
  if (!entry) return error_reply(404, "NotFound", "no profile with id '" + id + "'");
  return {200, entry->body};
}

HttpReply EmService::analyze_profile(const std::string& id, const std::string& body) const {
  const auto entry = is_valid_id(id) ? store_.find(id) : nullptr;
  if (!entry) return error_reply(404, "NotFound", "no profile with id '" + id + "'");
  HttpReply err;
  const auto parsed = parse_body(body, {"theta_i", "k_factors", "dispersion", "n_orders", "colloc_factor"}, err);
  if (!parsed) return err;
  const json& j = *parsed;

  double theta_i = 0.0;
  std::optional<std::vector<double>> k_factors;
  Dispersion dispersion = Dispersion::None;
  AnalysisConfig acfg;
  try {
    theta_i = j.at("theta_i").get<double>();
    if (j.contains("k_factors")) k_factors = j.at("k_factors").get<std::vector<double>>();
    acfg.n_orders = j.value("n_orders", acfg.n_orders);
    acfg.colloc_factor = j.value("colloc_factor", acfg.colloc_factor);
    dispersion = parse_dispersion(j.value("dispersion", std::string("none")));
  } catch (const json::exception& e) {
    return error_reply(400, "BadRequest", e.what());
  } catch (const Error& e) {
    return error_reply(400, "BadRequest", e.detail());
  }

  const ImpedanceProfile profile = clamp_reactive(entry->profile);
  try {
    if (!k_factors) {
      json out = to_json(scatter(profile, theta_i, acfg));
      out["id"] = id;
      out["theta_i"] = theta_i;
      return {200, out.dump()};
    }
    json cols = json::array();
    for (const SweepColumn& c : frequency_sweep(profile, *k_factors, theta_i, dispersion, acfg)) {
      cols.push_back(to_json(c));
    }
    return {200, json{{"id", id},
                      {"theta_i", theta_i},
                      {"dispersion", std::string(to_string(dispersion))},
                      {"orders", json::array({-3, -2, -1, 0, 1, 2, 3})},
                      {"columns", cols}}
                     .dump()};
  } catch (const Error& e) {
    if (e.code() == ErrorCode::InvalidArgument) return error_reply(400, "BadRequest", e.detail());
    return reply_for(e);
  }
}

bool EmService::bind() {
  if (cfg_.port == 0) {
    port_ = http_->server.bind_to_any_port(cfg_.host);
    return port_ > 0;
  }
  if (!http_->server.bind_to_port(cfg_.host, cfg_.port)) return false;
  port_ = cfg_.port;
  return true;
}

void EmService::serve() {
  http_->serving = true;
  if (!http_->stop_requested) http_->server.listen_after_bind();
  http_->serving = false;
}

void EmService::stop() {
  if (!http_) return;
  http_->stop_requested = true;
  while (http_->serving && !http_->server.is_running()) std::this_thread::sleep_for(std::chrono::milliseconds(1));
  http_->server.stop();
}

}  // namespace metarefl
