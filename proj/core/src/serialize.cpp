#include "metarefl/serialize.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <memory>
#include <ostream>
#include <sstream>

#include "metarefl/errors.hpp"

namespace metarefl {

namespace fs = std::filesystem;

std::string format_double(double v) {
  if (!std::isfinite(v)) return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
  return fmt::format("{:.16e}", v);
}

json to_json(const IncidenceSpec& inc) {
  return json{{"theta_i", inc.theta_i_deg}, {"theta_r", inc.theta_r_deg}, {"wavelength", inc.wavelength},
              {"e0", inc.e0}, {"eta", inc.eta}};
}

json to_json(const SynthesisConfig& cfg) {
  return json{{"m_evanescent", cfg.m_evanescent},
              {"optimize_target_phase", cfg.optimize_target_phase},
              {"grid_p", cfg.grid_p},
              {"reactive_tol", cfg.reactive_tol},
              {"residual_tol", cfg.residual_tol},
              {"reactive_refinement", cfg.reactive_refinement},
              {"continuation", cfg.continuation},
              {"restarts", cfg.restarts},
              {"restart_scale", cfg.restart_scale},
              {"seed", cfg.seed},
              {"lm",
               {{"max_iter", cfg.lm.max_iter},
                {"lambda0", cfg.lm.lambda0},
                {"lambda_up", cfg.lm.lambda_up},
                {"lambda_down", cfg.lm.lambda_down},
                {"rel_tol", cfg.lm.rel_tol},
                {"step_tol", cfg.lm.step_tol}}}};
}

json to_json(const ImpedanceProfile& profile) {
  json re = json::array(), im = json::array(), sing = json::array();
  for (std::size_t i = 0; i < profile.size(); ++i) {
    if (profile.singular[i]) {
      re.push_back(nullptr);
      im.push_back(nullptr);
    } else {
      re.push_back(profile.z[i].real());
      im.push_back(profile.z[i].imag());
    }
    sing.push_back(static_cast<bool>(profile.singular[i]));
  }
  return json{{"x", profile.x}, {"re_z", re}, {"im_z", im}, {"singular", sing}, {"period", profile.period}};
}

ImpedanceProfile profile_from_json(const json& j) {
  try {
    ImpedanceProfile p;
    p.x = j.at("x").get<std::vector<double>>();
    p.period = j.at("period").get<double>();
    const json& re = j.at("re_z");
    const json& im = j.at("im_z");
    const json& sing = j.at("singular");
    if (re.size() != p.x.size() || im.size() != p.x.size() || sing.size() != p.x.size()) {
      fail(ErrorCode::SchemaError, "profile arrays differ in length");
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t i = 0; i < p.x.size(); ++i) {
      const bool s = sing[i].get<bool>();
      p.singular.push_back(s);
      p.z.push_back(s ? cplx(nan, nan) : cplx(re[i].get<double>(), im[i].get<double>()));
    }
    return p;
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("profile: ") + e.what());
  }
}

IncidenceSpec incidence_from_json(const json& j) {
  try {
    IncidenceSpec inc;
    inc.theta_i_deg = j.at("theta_i").get<double>();
    inc.theta_r_deg = j.at("theta_r").get<double>();
    inc.wavelength = j.value("wavelength", 1.0);
    inc.e0 = j.value("e0", 1.0);
    inc.eta = j.value("eta", 1.0);
    return inc;
  } catch (const json::exception& e) {
    fail(ErrorCode::SchemaError, std::string("incidence: ") + e.what());
  }
}

json to_json(const ScatteringResult& res) {
  json orders = json::array(), amps = json::array(), eff = json::array(), angles = json::array();
  for (std::size_t i = 0; i < res.basis.size(); ++i) {
    const FloquetHarmonic& h = res.basis.harmonics[i];
    orders.push_back(h.n);
    amps.push_back(json::array({res.amplitudes[i].real(), res.amplitudes[i].imag()}));
    eff.push_back(res.efficiencies[i]);
    if (h.angle_deg) {
      angles.push_back(*h.angle_deg);
    } else {
      angles.push_back(nullptr);
    }
  }
  return json{{"orders", orders},
              {"angles", angles},
              {"amplitudes", amps},
              {"efficiencies", eff},
              {"power_balance", res.power_balance},
              {"absorbed_fraction", res.absorbed_fraction},
              {"condition", res.condition},
              {"bc_residual", res.bc_residual},
              {"wavelength", res.basis.wavelength},
              {"collocation_rows", res.collocation_rows},
              {"excluded_singular", res.excluded_singular},
              {"resampled", res.resampled}};
}

json to_json(const SweepColumn& col) {
  json j{{"k_factor", col.k_factor}, {"valid", col.valid}};
  if (col.valid) {
    j["efficiencies"] = col.efficiencies;
    j["power_balance"] = col.power_balance;
  } else {
    j["error"] = col.error;
  }
  return j;
}

json synthesis_summary(const IncidenceSpec& inc, const SynthesisConfig& cfg, const SynthesisResult& res) {
  json amps = json::array();
  for (std::size_t i = 0; i < res.solution.basis.size(); ++i) {
    const cplx a = res.solution.amplitudes[i];
    if (a == cplx(0.0, 0.0)) continue;
    amps.push_back({{"n", res.solution.basis.harmonics[i].n}, {"re_a", a.real()}, {"im_a", a.imag()}});
  }
  return json{{"incidence", to_json(inc)},
              {"config", to_json(cfg)},
              {"period", res.solution.basis.period},
              {"target_order", *res.solution.basis.target_order},
              {"m_evanescent", cfg.m_evanescent},
              {"evanescent_orders", res.evanescent_orders},
              {"max_local_residual", res.max_local_residual},
              {"reactive_impurity", res.reactive_impurity},
              {"mean_power_balance", mean_power_balance(res.solution)},
              {"target_phase", res.target_phase},
              {"phase_optimized", cfg.optimize_target_phase},
              {"refined", res.refined},
              {"iterations", res.iterations},
              {"converged", res.converged},
              {"refinement_converged", res.refinement_converged},
              {"starts", res.starts},
              {"singular_samples", res.profile.size() - res.profile.usable_count()},
              {"amplitudes", amps}};
}

void write_profile_csv(std::ostream& os, const ImpedanceProfile& profile, const std::vector<double>& s_y) {
  os << "x,re_z,im_z,singular,s_y\n";
  for (std::size_t i = 0; i < profile.size(); ++i) {
    const bool s = profile.singular[i];
    os << fmt::format("{:.17g}", profile.x[i]) << ','
       << (s ? std::string("nan") : fmt::format("{:.17g}", profile.z[i].real())) << ','
       << (s ? std::string("nan") : fmt::format("{:.17g}", profile.z[i].imag())) << ',' << (s ? 1 : 0)
       << ',' << (i < s_y.size() ? fmt::format("{:.17g}", s_y[i]) : std::string("nan")) << '\n';
  }
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(cur);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& text, const std::string& origin, std::size_t lineno) {
  std::string t = text;
  while (!t.empty() && (t.back() == '\r' || t.back() == ' ')) t.pop_back();
  if (t == "nan" || t == "NaN") return std::numeric_limits<double>::quiet_NaN();
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::SchemaError, origin + ": line " + std::to_string(lineno) + ": bad number '" + text + "'");
  }
}

}  // namespace

ImpedanceProfile parse_profile_csv(std::istream& is, const std::string& origin) {
  std::string line;
  if (!std::getline(is, line)) fail(ErrorCode::SchemaError, origin + ": empty profile file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "x,re_z,im_z,singular,s_y") {
    fail(ErrorCode::SchemaError, origin + ": header must be x,re_z,im_z,singular,s_y");
  }
  ImpedanceProfile p;
  std::size_t lineno = 1;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    const auto cells = split_csv(line);
    if (cells.size() != 5) {
      fail(ErrorCode::SchemaError, origin + ": line " + std::to_string(lineno) + ": expected 5 columns");
    }
    const double x = parse_number(cells[0], origin, lineno);
    const double re = parse_number(cells[1], origin, lineno);
    const double im = parse_number(cells[2], origin, lineno);
    const double sing = parse_number(cells[3], origin, lineno);
    const bool s = sing != 0.0 || !std::isfinite(re) || !std::isfinite(im);
    p.x.push_back(x);
    p.singular.push_back(s);
    p.z.push_back(s ? cplx(nan, nan) : cplx(re, im));
  }
  if (p.x.size() < 2) fail(ErrorCode::SchemaError, origin + ": profile needs at least two samples");
  const double dx = p.x[1] - p.x[0];
  if (!(dx > 0.0)) fail(ErrorCode::SchemaError, origin + ": x must increase");
  for (std::size_t i = 1; i < p.x.size(); ++i) {
    const double expect = p.x[0] + dx * static_cast<double>(i);
    if (std::abs(p.x[i] - expect) > 1e-9 * std::max(1.0, std::abs(expect))) {
      fail(ErrorCode::SchemaError, origin + ": x must be uniformly spaced (line " + std::to_string(i + 2) + ")");
    }
  }
  // Endpoint-exclusive grid: N samples span N * dx.
  p.period = (p.x.back() - p.x.front()) * static_cast<double>(p.x.size()) / static_cast<double>(p.x.size() - 1);
  return p;
}

ImpedanceProfile read_profile_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open profile file " + path.string());
  return parse_profile_csv(in, path.string());
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) fail(ErrorCode::IoError, "read failed for " + path.string());
  return ss.str();
}

void write_text_file(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::IoError, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) fail(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) fail(ErrorCode::IoError, "cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string sha256_hex(std::string_view data) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), data.data(), data.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    fail(ErrorCode::IoError, "sha256 failed");
  }
  std::string hex;
  hex.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

}  // namespace metarefl
