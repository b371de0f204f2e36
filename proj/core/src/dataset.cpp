#include "metarefl/dataset.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>
#include <limits>

#include "metarefl/errors.hpp"

namespace metarefl {

namespace fs = std::filesystem;

std::vector<double> default_k_factors() {
  std::vector<double> f(11);
  for (int i = 0; i < 11; ++i) f[static_cast<std::size_t>(i)] = 0.9 + 0.02 * i;
  return f;
}

void SweepConfig::validate() const {
  if (theta_i.empty() || theta_r.empty()) fail(ErrorCode::InvalidArgument, "angle lists must be non-empty");
  if (profile_len < 16) fail(ErrorCode::InvalidArgument, "profile_len must be >= 16");
  if (m_evanescent < 0) fail(ErrorCode::InvalidArgument, "m_evanescent must be >= 0");
  if (k_factors.empty()) fail(ErrorCode::InvalidArgument, "k_factors must be non-empty");
  for (double f : k_factors) {
    if (!(f > 0.0) || !std::isfinite(f)) fail(ErrorCode::InvalidArgument, "k_factors must be positive");
  }
  analysis.validate();
}

json to_json(const SweepConfig& cfg) {
  return json{{"theta_i", cfg.theta_i},
              {"theta_r", cfg.theta_r},
              {"m_evanescent", cfg.m_evanescent},
              {"profile_len", cfg.profile_len},
              {"k_factors", cfg.k_factors},
              {"seed", cfg.seed},
              {"grid_p", cfg.grid_p},
              {"dispersion", std::string(to_string(cfg.dispersion))},
              {"n_orders", cfg.analysis.n_orders},
              {"colloc_factor", cfg.analysis.colloc_factor}};
}

SweepConfig sweep_config_from_json(const json& j) {
  try {
    SweepConfig cfg;
    cfg.theta_i = j.at("theta_i").get<std::vector<double>>();
    cfg.theta_r = j.at("theta_r").get<std::vector<double>>();
    cfg.m_evanescent = j.value("m_evanescent", cfg.m_evanescent);
    cfg.profile_len = j.value("profile_len", cfg.profile_len);
    if (j.contains("k_factors")) cfg.k_factors = j.at("k_factors").get<std::vector<double>>();
    cfg.seed = j.value("seed", std::uint64_t{0});
    cfg.grid_p = j.value("grid_p", cfg.grid_p);
    cfg.dispersion = parse_dispersion(j.value("dispersion", std::string("none")));
    cfg.analysis.n_orders = j.value("n_orders", cfg.analysis.n_orders);
    cfg.analysis.colloc_factor = j.value("colloc_factor", cfg.analysis.colloc_factor);
    if (j.contains("out_dir")) cfg.out_dir = j.at("out_dir").get<std::string>();
    return cfg;
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("sweep config: ") + e.what());
  }
}

std::string record_id(double theta_i, double theta_r, const SweepConfig& cfg) {
  std::string key = fmt::format("metarefl-record-v1|{:.17g}|{:.17g}|{}|{}|", theta_i, theta_r,
                                cfg.m_evanescent, cfg.profile_len);
  for (double f : cfg.k_factors) key += fmt::format("{:.17g},", f);
  key += fmt::format("|{}", cfg.seed);
  return sha256_hex(key).substr(0, 16);
}

ImpedanceProfile record_profile(const DatasetRecord& rec) {
  ImpedanceProfile p;
  p.period = rec.period;
  p.x = uniform_grid(rec.period, rec.reactance.size());
  p.singular.assign(rec.reactance.size(), false);
  p.z.reserve(rec.reactance.size());
  for (double x : rec.reactance) p.z.emplace_back(0.0, x);
  return p;
}

DatasetRecord build_record(double theta_i, double theta_r, const SweepConfig& cfg) {
  IncidenceSpec inc;
  inc.theta_i_deg = theta_i;
  inc.theta_r_deg = theta_r;
  SynthesisConfig scfg;
  scfg.m_evanescent = cfg.m_evanescent;
  scfg.grid_p = cfg.grid_p;
  const SynthesisResult res = synthesize(inc, scfg);

  const ImpedanceProfile coarse =
      resample_profile(clamp_reactive(res.profile), static_cast<std::size_t>(cfg.profile_len));
  DatasetRecord rec;
  rec.id = record_id(theta_i, theta_r, cfg);
  rec.theta_i = theta_i;
  rec.theta_r = theta_r;
  rec.period = res.solution.basis.period;
  rec.residual = res.max_local_residual;
  rec.converged = res.converged;
  rec.reactance.reserve(coarse.size());
  for (std::size_t i = 0; i < coarse.size(); ++i) {
    if (coarse.singular[i] || !std::isfinite(coarse.z[i].imag())) {
      fail(ErrorCode::SingularProfile, "resampled reactance has a pole at sample " + std::to_string(i));
    }
    rec.reactance.push_back(coarse.z[i].imag());
  }

  const auto cols = frequency_sweep(record_profile(rec), cfg.k_factors, theta_i, cfg.dispersion, cfg.analysis);
  rec.response.reserve(cols.size() * kResponseOrders);
  for (const SweepColumn& c : cols) {
    if (!c.valid) fail(ErrorCode::RankDeficient, "frequency sweep column failed: " + c.error);
    rec.response.insert(rec.response.end(), c.efficiencies.begin(), c.efficiencies.end());
  }
  return rec;
}

namespace {

std::string number_array(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ',';
    s += format_double(v[i]);
  }
  s += ']';
  return s;
}

const std::set<std::string>& record_keys() {
  static const std::set<std::string> keys{"id",       "theta_i",  "theta_r",  "period",
                                          "reactance", "response", "residual", "converged"};
  return keys;
}

[[noreturn]] void schema_fail(std::size_t lineno, const std::string& key, const std::string& what) {
  fail(ErrorCode::SchemaError, "line " + std::to_string(lineno) + ": key '" + key + "': " + what);
}

double number_at(const json& j, const char* key, std::size_t lineno) {
  if (!j.contains(key)) schema_fail(lineno, key, "missing");
  const json& v = j.at(key);
  if (!v.is_number()) schema_fail(lineno, key, "expected a number");
  return v.get<double>();
}

std::vector<double> array_at(const json& j, const char* key, std::size_t lineno, std::size_t expect) {
  if (!j.contains(key)) schema_fail(lineno, key, "missing");
  const json& v = j.at(key);
  if (!v.is_array()) schema_fail(lineno, key, "expected an array");
  std::vector<double> out;
  out.reserve(v.size());
  for (const json& e : v) {
    if (!e.is_number()) schema_fail(lineno, key, "expected numeric entries");
    out.push_back(e.get<double>());
  }
  if (expect && out.size() != expect) {
    schema_fail(lineno, key, "expected " + std::to_string(expect) + " entries, got " + std::to_string(out.size()));
  }
  return out;
}

}  // namespace

std::string record_to_line(const DatasetRecord& rec) {
  std::string s = "{";
  s += "\"id\":" + json(rec.id).dump();
  s += ",\"theta_i\":" + format_double(rec.theta_i);
  s += ",\"theta_r\":" + format_double(rec.theta_r);
  s += ",\"period\":" + format_double(rec.period);
  s += ",\"reactance\":" + number_array(rec.reactance);
  s += ",\"response\":" + number_array(rec.response);
  s += ",\"residual\":" + format_double(rec.residual);
  s += std::string(",\"converged\":") + (rec.converged ? "true" : "false");
  s += "}";
  return s;
}

DatasetRecord record_from_line(const std::string& line, std::size_t lineno, std::size_t k_len,
                               std::size_t response_len) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::SchemaError, "line " + std::to_string(lineno) + ": malformed record: " + e.what());
  }
  if (!j.is_object()) fail(ErrorCode::SchemaError, "line " + std::to_string(lineno) + ": record is not an object");
  for (const auto& [key, _] : j.items()) {
    if (!record_keys().count(key)) schema_fail(lineno, key, "unexpected key");
  }
  DatasetRecord rec;
  if (!j.contains("id") || !j.at("id").is_string()) schema_fail(lineno, "id", "expected a string");
  rec.id = j.at("id").get<std::string>();
  rec.theta_i = number_at(j, "theta_i", lineno);
  rec.theta_r = number_at(j, "theta_r", lineno);
  rec.period = number_at(j, "period", lineno);
  rec.reactance = array_at(j, "reactance", lineno, k_len);
  rec.response = array_at(j, "response", lineno, response_len);
  rec.residual = number_at(j, "residual", lineno);
  if (!j.contains("converged") || !j.at("converged").is_boolean()) {
    schema_fail(lineno, "converged", "expected a boolean");
  }
  rec.converged = j.at("converged").get<bool>();
  if (!(rec.period > 0.0)) schema_fail(lineno, "period", "must be positive");
  if (rec.response.size() % kResponseOrders != 0) schema_fail(lineno, "response", "length not a multiple of 7");
  return rec;
}

DatasetManifest generate_dataset(const SweepConfig& cfg, const FailureLog& log) {
  cfg.validate();
  std::error_code ec;
  fs::create_directories(cfg.out_dir, ec);
  if (ec || !fs::is_directory(cfg.out_dir)) {
    fail(ErrorCode::IoError, "cannot create output directory " + cfg.out_dir.string());
  }

  struct Point {
    double ti, tr;
  };
  std::vector<Point> points;
  std::vector<DatasetFailure> failures;
  std::set<std::pair<double, double>> seen;
  for (double ti : cfg.theta_i) {
    for (double tr : cfg.theta_r) {
      if (!seen.insert({ti, tr}).second) {
        failures.push_back({ti, tr, "duplicate parameter point"});
        continue;
      }
      points.push_back({ti, tr});
    }
  }

  std::vector<std::optional<DatasetRecord>> records(points.size());
  std::vector<std::string> errors(points.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next++; i < points.size(); i = next++) {
      try {
        records[i] = build_record(points[i].ti, points[i].tr, cfg);
      } catch (const Error& e) {
        errors[i] = e.what();
      }
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                           static_cast<unsigned>(points.size())));
  {
    std::vector<std::jthread> pool;
    for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
    worker();
  }

  std::string body;
  DatasetManifest m;
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (records[i]) {
      body += record_to_line(*records[i]);
      body += '\n';
      ++m.count;
    } else {
      failures.push_back({points[i].ti, points[i].tr, errors[i]});
    }
  }
  std::stable_sort(failures.begin(), failures.end(), [](const DatasetFailure& a, const DatasetFailure& b) {
    return std::tie(a.theta_i, a.theta_r) < std::tie(b.theta_i, b.theta_r);
  });
  if (log) {
    for (const auto& f : failures) log(f);
  }

  m.failures = failures;
  m.seed = cfg.seed;
  m.digest = sha256_hex(body);
  m.records_path = cfg.out_dir / kRecordsFile;
  m.manifest_path = cfg.out_dir / kManifestFile;

  json fj = json::array();
  for (const auto& f : failures) fj.push_back({{"theta_i", f.theta_i}, {"theta_r", f.theta_r}, {"error", f.error}});
  const json manifest{{"schema_version", 1},
                      {"count", m.count},
                      {"seed", cfg.seed},
                      {"digest", m.digest},
                      {"records_file", kRecordsFile},
                      {"config", to_json(cfg)},
                      {"failures", fj}};
  write_text_file(m.records_path, body);
  write_text_file(m.manifest_path, manifest.dump(2) + "\n");
  return m;
}

std::vector<DatasetRecord> load_dataset(const fs::path& dir) {
  const fs::path manifest_path = fs::is_directory(dir) ? dir / kManifestFile : dir;
  const fs::path base = manifest_path.parent_path();
  json manifest;
  try {
    manifest = json::parse(read_text_file(manifest_path));
  } catch (const json::parse_error& e) {
    fail(ErrorCode::SchemaError, "manifest: " + std::string(e.what()));
  }
  std::string digest, records_file;
  std::size_t k_len = 0, response_len = 0, count = 0;
  try {
    digest = manifest.at("digest").get<std::string>();
    records_file = manifest.at("records_file").get<std::string>();
    count = manifest.at("count").get<std::size_t>();
    const json& cfg = manifest.at("config");
    k_len = cfg.at("profile_len").get<std::size_t>();
    response_len = cfg.at("k_factors").size() * kResponseOrders;
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, "manifest: " + std::string(e.what()));
  }

  const std::string body = read_text_file(base / records_file);
  const std::string actual = sha256_hex(body);
  if (actual != digest) {
    fail(ErrorCode::DigestMismatch, "records digest " + actual + " does not match manifest " + digest);
  }

  std::vector<DatasetRecord> out;
  std::istringstream in(body);
  std::string line;
  std::size_t lineno = 0;
  std::set<std::string> ids;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    DatasetRecord rec = record_from_line(line, lineno, k_len, response_len);
    if (!ids.insert(rec.id).second) schema_fail(lineno, "id", "duplicate id " + rec.id);
    out.push_back(std::move(rec));
  }
  if (out.size() != count) {
    fail(ErrorCode::SchemaError, "manifest count " + std::to_string(count) + " but " +
                                     std::to_string(out.size()) + " records");
  }
  return out;
}

std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> split_dataset(
    const std::vector<DatasetRecord>& records, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    fail(ErrorCode::InvalidArgument, "train_fraction must lie in (0, 1)");
  }
  std::vector<DatasetRecord> pool;
  for (const auto& r : records) {
    if (r.converged) pool.push_back(r);
  }
  // mt19937_64 output is fully specified, unlike the std distributions.
  std::mt19937_64 rng(seed);
  const auto bounded = [&rng](std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t v;
    do {
      v = rng();
    } while (v >= limit);
    return v % n;
  };
  for (std::size_t i = pool.size(); i > 1; --i) {
    std::swap(pool[i - 1], pool[bounded(i)]);
  }
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  const double target = train_fraction * static_cast<double>(pool.size());
  std::size_t n_train = static_cast<std::size_t>(std::floor(target + u));
  n_train = std::min(n_train, pool.size());

  std::vector<DatasetRecord> train(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<DatasetRecord> val(pool.begin() + static_cast<std::ptrdiff_t>(n_train), pool.end());
  return {std::move(train), std::move(val)};
}

}  // namespace metarefl
