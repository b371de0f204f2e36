#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "metarefl/analysis.hpp"
#include "metarefl/serialize.hpp"
#include "metarefl/synthesis.hpp"

namespace metarefl {

std::vector<double> default_k_factors();  // 11 points, 0.9 .. 1.1

struct SweepConfig {
  std::vector<double> theta_i;
  std::vector<double> theta_r;
  int m_evanescent = 8;
  int profile_len = 64;
  std::vector<double> k_factors = default_k_factors();
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
  int grid_p = 256;
  Dispersion dispersion = Dispersion::None;
  AnalysisConfig analysis;

  void validate() const;  // throws InvalidArgument
};

json to_json(const SweepConfig& cfg);  // out_dir is not echoed
SweepConfig sweep_config_from_json(const json& j);

struct DatasetRecord {
  std::string id;
  double theta_i = 0.0;
  double theta_r = 0.0;
  double period = 0.0;
  std::vector<double> reactance;  // Im z / eta, profile_len samples
  std::vector<double> response;   // k_factors x 7, row-major by k factor
  double residual = 0.0;
  bool converged = false;
};

inline constexpr const char* kRecordsFile = "records.jsonl";
inline constexpr const char* kManifestFile = "manifest.json";

std::string record_id(double theta_i, double theta_r, const SweepConfig& cfg);

// One synthesis + clamp + resample + frequency sweep. Throws on synthesis errors.
DatasetRecord build_record(double theta_i, double theta_r, const SweepConfig& cfg);

// Reactive profile described by a record's design vector.
ImpedanceProfile record_profile(const DatasetRecord& rec);

std::string record_to_line(const DatasetRecord& rec);
DatasetRecord record_from_line(const std::string& line, std::size_t lineno, std::size_t k_len = 0,
                               std::size_t response_len = 0);

struct DatasetFailure {
  double theta_i = 0.0;
  double theta_r = 0.0;
  std::string error;
};

struct DatasetManifest {
  std::size_t count = 0;
  std::vector<DatasetFailure> failures;
  std::uint64_t seed = 0;
  std::string digest;
  std::filesystem::path records_path;
  std::filesystem::path manifest_path;
};

using FailureLog = std::function<void(const DatasetFailure&)>;

// Records are generated concurrently and written in (theta_i, theta_r) grid order.
DatasetManifest generate_dataset(const SweepConfig& cfg, const FailureLog& log = {});

// Verifies the manifest digest, then parses every line.
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& dir);

// Deterministic shuffle of the converged records; train size is fraction * n with
// seed-dependent stochastic rounding.
std::pair<std::vector<DatasetRecord>, std::vector<DatasetRecord>> split_dataset(
    const std::vector<DatasetRecord>& records, double train_fraction, std::uint64_t seed);

}  // namespace metarefl
