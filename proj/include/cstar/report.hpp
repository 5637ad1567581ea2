// JSON verification reports — named checks with residuals — and loaders for
// the small on-disk formats the command-line front end consumes.
#pragma once

#include <cmath>
#include <ctime>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cstar/common.hpp"

namespace cstar {

/// One verified statement: the law it instantiates and the measured residual
/// against a threshold pinned by the caller.
struct CheckResult {
  std::string name;
  std::string paper_ref;  // the law or formula the check verifies
  double residual = 0.0;
  bool pass = false;
};

/// A suite run: every check must pass for the report to pass.
struct Report {
  std::string suite;
  long long seed = 0;
  std::vector<CheckResult> checks;

  bool pass() const {
    for (const CheckResult& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

/// Reports never carry NaN or infinity; non-finite residuals are replaced by
/// a finite sentinel that fails every sensible threshold.
inline double finite_residual(double r) { return std::isfinite(r) ? r : 9.9e99; }

inline CheckResult make_check(std::string name, std::string ref, double residual,
                              double threshold) {
  double r = finite_residual(residual);
  return CheckResult{std::move(name), std::move(ref), r, r <= threshold};
}

inline CheckResult make_bool_check(std::string name, std::string ref, bool ok) {
  return CheckResult{std::move(name), std::move(ref), ok ? 0.0 : 1.0, ok};
}

/// Serialization with a stable field order; the timestamp is the only field
/// that varies between identical runs.
inline nlohmann::ordered_json report_json(const Report& rep, const std::string& timestamp) {
  nlohmann::ordered_json j;
  j["suite"] = rep.suite;
  j["seed"] = rep.seed;
  nlohmann::ordered_json checks = nlohmann::ordered_json::array();
  for (const CheckResult& c : rep.checks) {
    nlohmann::ordered_json cj;
    cj["name"] = c.name;
    cj["paper_ref"] = c.paper_ref;
    cj["residual"] = finite_residual(c.residual);
    cj["pass"] = c.pass;
    checks.push_back(std::move(cj));
  }
  j["checks"] = std::move(checks);
  j["pass"] = rep.pass();
  j["timestamp"] = timestamp;
  return j;
}

inline std::string utc_timestamp() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline std::string render_report(const Report& rep, const std::string& timestamp) {
  return report_json(rep, timestamp).dump(2) + "\n";
}

/// Whole-file read; failures carry the offending path.
inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "io-error", "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  require(!in.bad(), "io-error", "cannot read " + path);
  return ss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "io-error", "cannot open " + path);
  out << text;
  out.flush();
  require(out.good(), "io-error", "cannot write " + path);
}

/// A finite covering instance as stored on disk: base size M, base bijection
/// gamma, cover size Mtilde and covering map pi (both as point lists).
struct CoveringSpec {
  int m = 0;
  std::vector<int> gamma;
  int mtilde = 0;
  std::vector<int> pi;
};

/// Parses {"M": .., "gamma": [..], "Mtilde": .., "pi": [..]}; `origin` names
/// the source (a path, usually) in error messages.
inline CoveringSpec covering_from_json(const std::string& text, const std::string& origin) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error("parse-error", origin + ": " + e.what());
  }
  CoveringSpec spec;
  try {
    spec.m = j.at("M").get<int>();
    spec.gamma = j.at("gamma").get<std::vector<int>>();
    spec.mtilde = j.at("Mtilde").get<int>();
    spec.pi = j.at("pi").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error("parse-error", origin + ": " + e.what());
  }
  return spec;
}

inline CoveringSpec load_covering(const std::string& path) {
  return covering_from_json(read_text_file(path), path);
}

}  // namespace cstar
