#include <gtest/gtest.h>

#include <filesystem>
#include <random>
#include <set>

#include "metarefl/analysis.hpp"
#include "metarefl/dataset.hpp"
#include "metarefl/errors.hpp"
#include "metarefl/serialize.hpp"

using namespace metarefl;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("metarefl_dataset_" + name);
  fs::remove_all(p);
  return p;
}

SweepConfig small_config(const fs::path& out) {
  SweepConfig cfg;
  cfg.theta_i = {0.0, 10.0, 20.0};
  cfg.theta_r = {65.0};
  cfg.m_evanescent = 6;
  cfg.profile_len = 32;
  cfg.k_factors = {0.95, 1.0, 1.05};
  cfg.seed = 42;
  cfg.out_dir = out;
  return cfg;
}

// Generated once and shared: the synthesis behind every record is the slow part.
struct Generated {
  fs::path dir;
  DatasetManifest manifest;
  std::vector<DatasetRecord> records;
};

const Generated& generated() {
  static const Generated g = [] {
    Generated out;
    out.dir = scratch("shared");
    out.manifest = generate_dataset(small_config(out.dir));
    out.records = load_dataset(out.dir);
    return out;
  }();
  return g;
}

DatasetRecord fake_record(int i) {
  DatasetRecord r;
  r.id = "rec" + std::to_string(i);
  r.theta_i = i;
  r.theta_r = 60.0;
  r.period = 1.2;
  r.reactance.assign(16, 0.5);
  r.response.assign(7, 0.0);
  r.residual = 1e-4;
  r.converged = true;
  return r;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no metarefl::Error thrown";
  return ErrorCode::InvalidArgument;
}

}  // namespace

TEST(Config, Validation) {
  SweepConfig cfg = small_config("unused");
  EXPECT_NO_THROW(cfg.validate());
  cfg.profile_len = 15;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::InvalidArgument);
  cfg = small_config("unused");
  cfg.theta_r.clear();
  EXPECT_EQ(code_of([&] { cfg.validate(); }), ErrorCode::InvalidArgument);
  EXPECT_EQ(default_k_factors().size(), 11u);
  EXPECT_DOUBLE_EQ(default_k_factors().front(), 0.9);
  EXPECT_DOUBLE_EQ(default_k_factors().back(), 1.1);
}

TEST(Config, JsonRoundTrip) {
  const SweepConfig cfg = small_config("somewhere");
  const SweepConfig back = sweep_config_from_json(to_json(cfg));
  EXPECT_EQ(back.theta_i, cfg.theta_i);
  EXPECT_EQ(back.k_factors, cfg.k_factors);
  EXPECT_EQ(back.seed, cfg.seed);
  EXPECT_EQ(back.profile_len, cfg.profile_len);
  EXPECT_EQ(code_of([] { sweep_config_from_json(json{{"theta_i", "x"}}); }), ErrorCode::SchemaError);
}

TEST(RecordId, PureFunctionOfParameters) {
  const SweepConfig a = small_config("a");
  SweepConfig b = small_config("b");
  EXPECT_EQ(record_id(0.0, 65.0, a), record_id(0.0, 65.0, b));
  b.seed = 43;
  EXPECT_NE(record_id(0.0, 65.0, a), record_id(0.0, 65.0, b));
  EXPECT_NE(record_id(0.0, 65.0, a), record_id(0.0, 66.0, a));
  EXPECT_EQ(record_id(0.0, 65.0, a).size(), 16u);
}

TEST(Generate, CountShapeAndUniqueIds) {
  const Generated& g = generated();
  EXPECT_EQ(g.manifest.count, 3u);
  EXPECT_TRUE(g.manifest.failures.empty());
  ASSERT_EQ(g.records.size(), 3u);
  std::set<std::string> ids;
  for (const auto& r : g.records) {
    EXPECT_EQ(r.reactance.size(), 32u);
    EXPECT_EQ(r.response.size(), 3u * 7u);
    EXPECT_TRUE(ids.insert(r.id).second);
  }
  EXPECT_EQ(g.records[0].theta_i, 0.0);
  EXPECT_EQ(g.records[2].theta_i, 20.0);
}

TEST(Generate, RerunIsByteIdentical) {
  const fs::path again = scratch("again");
  const DatasetManifest m = generate_dataset(small_config(again));
  EXPECT_EQ(m.digest, generated().manifest.digest);
  EXPECT_EQ(read_text_file(again / kRecordsFile), read_text_file(generated().dir / kRecordsFile));
  EXPECT_EQ(read_text_file(again / kManifestFile), read_text_file(generated().dir / kManifestFile));
  fs::remove_all(again);
}

TEST(Generate, InvalidPairIsLoggedAndSkipped) {
  const fs::path dir = scratch("invalid");
  SweepConfig cfg = small_config(dir);
  cfg.theta_i = {30.0};
  cfg.theta_r = {30.0, 70.0};
  std::vector<DatasetFailure> logged;
  const DatasetManifest m = generate_dataset(cfg, [&](const DatasetFailure& f) { logged.push_back(f); });
  EXPECT_EQ(m.count, 1u);
  ASSERT_EQ(logged.size(), 1u);
  EXPECT_EQ(logged[0].theta_r, 30.0);
  EXPECT_NE(logged[0].error.find("InvalidGeometry"), std::string::npos) << logged[0].error;
  EXPECT_EQ(load_dataset(dir).size(), 1u);
  fs::remove_all(dir);
}

TEST(Generate, UnwritableDirectoryIsIoError) {
  SweepConfig cfg = small_config("/proc/metarefl_cannot_write_here");
  EXPECT_EQ(code_of([&] { generate_dataset(cfg); }), ErrorCode::IoError);
}

TEST(Records, RegenerationReproducesReactance) {
  const SweepConfig cfg = small_config("unused");
  const DatasetRecord& stored = generated().records[1];
  const DatasetRecord fresh = build_record(stored.theta_i, stored.theta_r, cfg);
  ASSERT_EQ(fresh.reactance.size(), stored.reactance.size());
  for (std::size_t i = 0; i < fresh.reactance.size(); ++i) EXPECT_NEAR(fresh.reactance[i], stored.reactance[i], 1e-12);
}

TEST(Records, ResponseMatchesFreshSweepOfStoredReactance) {
  const SweepConfig cfg = small_config("unused");
  std::mt19937_64 gen(5);
  for (int k = 0; k < 5; ++k) {
    const DatasetRecord& rec = generated().records[gen() % generated().records.size()];
    const auto cols = frequency_sweep(record_profile(rec), cfg.k_factors, rec.theta_i, cfg.dispersion, cfg.analysis);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      for (std::size_t o = 0; o < kResponseOrders; ++o) {
        EXPECT_NEAR(cols[c].efficiencies[o], rec.response[c * kResponseOrders + o], 1e-9);
      }
    }
  }
}

TEST(Records, LineRoundTripAndKeyContract) {
  const DatasetRecord& r = generated().records[0];
  const std::string line = record_to_line(r);
  const json j = json::parse(line);
  std::set<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.insert(it.key());
  EXPECT_EQ(keys, (std::set<std::string>{"id", "theta_i", "theta_r", "period", "reactance", "response", "residual",
                                         "converged"}));
  const DatasetRecord back = record_from_line(line, 1);
  EXPECT_EQ(back.id, r.id);
  EXPECT_EQ(back.reactance, r.reactance);
  EXPECT_EQ(back.response, r.response);
  EXPECT_EQ(back.residual, r.residual);
  EXPECT_EQ(back.period, r.period);
  EXPECT_EQ(back.converged, r.converged);
}

TEST(Records, TruncatedLineNamesLineNumber) {
  const std::string line = record_to_line(fake_record(1));
  try {
    record_from_line(line.substr(0, line.size() / 2), 7);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
    EXPECT_NE(std::string(e.what()).find("line 7"), std::string::npos);
  }
  json j = json::parse(line);
  j.erase("residual");
  try {
    record_from_line(j.dump(), 3);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("residual"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos);
  }
}

TEST(Load, TruncatedFileIsSchemaError) {
  const fs::path dir = scratch("truncated");
  fs::create_directories(dir);
  fs::copy(generated().dir / kManifestFile, dir / kManifestFile);
  const std::string body = read_text_file(generated().dir / kRecordsFile);
  const std::string cut = body.substr(0, body.size() - 40);
  write_text_file(dir / kRecordsFile, cut);
  // Keep the digest consistent so the parse error is what surfaces.
  json m = json::parse(read_text_file(dir / kManifestFile));
  m["digest"] = sha256_hex(cut);
  write_text_file(dir / kManifestFile, m.dump(2));
  try {
    load_dataset(dir);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::SchemaError);
    EXPECT_NE(std::string(e.what()).find("line 3"), std::string::npos) << e.what();
  }
  fs::remove_all(dir);
}

TEST(Load, EditedDigestIsDetected) {
  const fs::path dir = scratch("digest");
  fs::create_directories(dir);
  fs::copy(generated().dir / kRecordsFile, dir / kRecordsFile);
  json m = json::parse(read_text_file(generated().dir / kManifestFile));
  m["digest"] = std::string(64, '0');
  write_text_file(dir / kManifestFile, m.dump(2));
  EXPECT_EQ(code_of([&] { load_dataset(dir); }), ErrorCode::DigestMismatch);
  fs::remove_all(dir);
}

TEST(Split, SizesDeterminismAndDisjointness) {
  std::vector<DatasetRecord> recs;
  for (int i = 0; i < 10; ++i) recs.push_back(fake_record(i));
  const auto [train, val] = split_dataset(recs, 0.8, 3);
  EXPECT_EQ(train.size(), 8u);
  EXPECT_EQ(val.size(), 2u);
  const auto [train2, val2] = split_dataset(recs, 0.8, 3);
  for (std::size_t i = 0; i < train.size(); ++i) EXPECT_EQ(train[i].id, train2[i].id);
  std::set<std::string> all;
  for (const auto& r : train) all.insert(r.id);
  for (const auto& r : val) EXPECT_TRUE(all.insert(r.id).second);
  EXPECT_EQ(all.size(), 10u);
}

TEST(Split, SingleRecordIsPlacedBySeed) {
  const std::vector<DatasetRecord> one{fake_record(0)};
  std::set<std::size_t> train_sizes;
  for (std::uint64_t seed = 0; seed < 16; ++seed) {
    const auto [t, v] = split_dataset(one, 0.5, seed);
    EXPECT_EQ(t.size() + v.size(), 1u);
    const auto [t2, v2] = split_dataset(one, 0.5, seed);
    EXPECT_EQ(t.size(), t2.size());
    train_sizes.insert(t.size());
  }
  EXPECT_EQ(train_sizes.size(), 2u);
}

TEST(Split, NonConvergedRecordsAreExcluded) {
  std::vector<DatasetRecord> recs;
  for (int i = 0; i < 6; ++i) recs.push_back(fake_record(i));
  recs[2].converged = false;
  const auto [t, v] = split_dataset(recs, 0.5, 1);
  EXPECT_EQ(t.size() + v.size(), 5u);
  for (const auto& r : t) EXPECT_NE(r.id, "rec2");
  for (const auto& r : v) EXPECT_NE(r.id, "rec2");
  EXPECT_THROW(split_dataset(recs, 1.0, 1), Error);
}
