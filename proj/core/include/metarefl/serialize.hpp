#pragma once

// JSON and CSV encodings shared by the dataset writer, the CLI and the HTTP service.

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "metarefl/analysis.hpp"
#include "metarefl/em.hpp"
#include "metarefl/synthesis.hpp"

namespace metarefl {

using json = nlohmann::json;

// Fixed-width scientific text with 17 significant digits.
std::string format_double(double v);

json to_json(const IncidenceSpec& inc);
json to_json(const SynthesisConfig& cfg);
json to_json(const ImpedanceProfile& profile);  // {x, re_z, im_z, singular, period}; null for singular z
json to_json(const ScatteringResult& res);
json to_json(const SweepColumn& col);

IncidenceSpec incidence_from_json(const json& j);
ImpedanceProfile profile_from_json(const json& j);

// Summary written next to a synthesized profile; contains no timing or host data.
json synthesis_summary(const IncidenceSpec& inc, const SynthesisConfig& cfg, const SynthesisResult& res);

// Profile CSV contract: header "x,re_z,im_z,singular,s_y".
void write_profile_csv(std::ostream& os, const ImpedanceProfile& profile,
                       const std::vector<double>& s_y = {});
// Period is recovered from the uniform sample spacing. Throws IoError / SchemaError.
ImpedanceProfile read_profile_csv(const std::filesystem::path& path);
ImpedanceProfile parse_profile_csv(std::istream& is, const std::string& origin = "<stream>");

std::string read_text_file(const std::filesystem::path& path);
// Writes through a temporary sibling and renames into place.
void write_text_file(const std::filesystem::path& path, const std::string& content);

std::string sha256_hex(std::string_view data);

}  // namespace metarefl
