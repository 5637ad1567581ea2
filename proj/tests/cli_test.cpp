// End-to-end checks of the command-line front end: report schema, exit
// codes, determinism modulo the timestamp, and the on-disk input formats.
#include <sys/wait.h>

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "cstar/report.hpp"

using nlohmann::json;

namespace {

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct RunResult {
  int code = -1;
  std::string out;
  std::string err;
};

// Runs a full shell command with stdout/stderr captured; scratch files live
// in the test's working directory.
RunResult run_cmd(const std::string& cmd) {
  static int counter = 0;
  std::string tag = std::to_string(counter++);
  std::string out_path = "cli_scratch_out_" + tag;
  std::string err_path = "cli_scratch_err_" + tag;
  int status = std::system((cmd + " > " + out_path + " 2> " + err_path).c_str());
  RunResult r;
  if (status >= 0 && WIFEXITED(status)) r.code = WEXITSTATUS(status);
  r.out = slurp(out_path);
  r.err = slurp(err_path);
  std::remove(out_path.c_str());
  std::remove(err_path.c_str());
  return r;
}

RunResult run_cli(const std::string& args) {
  return run_cmd(std::string("\"") + CSTAR_CLI_PATH + "\" " + args);
}

std::string data_file(const std::string& name) {
  return std::string(CSTAR_DATA_DIR) + "/" + name;
}

// Validates the report schema and returns the parsed document.
json check_schema(const RunResult& r, const std::string& suite) {
  json doc = json::parse(r.out);
  CHECK(doc.at("suite").get<std::string>() == suite);
  CHECK(doc.at("seed").is_number_integer());
  CHECK(doc.at("pass").is_boolean());
  CHECK(doc.at("timestamp").is_string());
  REQUIRE(doc.at("checks").is_array());
  for (const json& c : doc["checks"]) {
    CHECK(c.at("name").is_string());
    CHECK(c.at("paper_ref").is_string());
    CHECK_FALSE(c.at("paper_ref").get<std::string>().empty());
    REQUIRE(c.at("residual").is_number());
    CHECK(std::isfinite(c.at("residual").get<double>()));
    CHECK(c.at("pass").is_boolean());
  }
  return doc;
}

bool has_check(const json& doc, const std::string& name) {
  for (const json& c : doc["checks"])
    if (c["name"].get<std::string>() == name) return true;
  return false;
}

std::string strip_timestamp(const std::string& text) {
  std::istringstream in(text);
  std::ostringstream out;
  std::string line;
  while (std::getline(in, line))
    if (line.find("\"timestamp\"") == std::string::npos) out << line << "\n";
  return out.str();
}

}  // namespace

TEST_CASE("every named suite runs clean and keeps the report schema") {
  struct Case {
    std::string suite;
    std::string extra;
  };
  for (const Case& c : {Case{"ksgns", ""}, Case{"quesadilla", ""}, Case{"fock", "--depth 2"},
                        Case{"subproduct", ""}, Case{"bihilb", "--depth 2"},
                        Case{"graph-kappa", "--depth 2"}, Case{"covering", ""}}) {
    INFO("suite " << c.suite);
    RunResult r = run_cli("verify --suite " + c.suite + " --seed 42 --tol 1e-9 " + c.extra);
    REQUIRE(r.code == 0);
    json doc = check_schema(r, c.suite);
    CHECK(doc["pass"].get<bool>());
    CHECK(doc["seed"].get<long long>() == 42);
    CHECK_FALSE(doc["checks"].empty());
  }
}

TEST_CASE("the fock and ksgns verbs run their suites directly") {
  RunResult f = run_cli("fock --seed 5 --depth 2");
  REQUIRE(f.code == 0);
  CHECK(check_schema(f, "fock")["seed"].get<long long>() == 5);
  RunResult k = run_cli("ksgns --seed 6");
  REQUIRE(k.code == 0);
  CHECK(check_schema(k, "ksgns")["seed"].get<long long>() == 6);
}

TEST_CASE("identical configurations reproduce the report byte for byte") {
  std::string args = "verify --suite quesadilla --seed 7 --tol 1e-9";
  RunResult a = run_cli(args);
  RunResult b = run_cli(args);
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(strip_timestamp(a.out) == strip_timestamp(b.out));

  RunResult c = run_cli("verify --suite quesadilla --seed 8 --tol 1e-9");
  CHECK(strip_timestamp(a.out) != strip_timestamp(c.out));  // the seed is live
}

TEST_CASE("the json flag writes exactly what lands on stdout") {
  std::string path = "cli_scratch_report.json";
  RunResult r = run_cli("verify --suite covering --json " + path);
  REQUIRE(r.code == 0);
  CHECK(slurp(path) == r.out);
  std::remove(path.c_str());
}

TEST_CASE("the graph verb reports the identification checks from graph files") {
  RunResult r = run_cli("graph kappa --graph " + data_file("o2.graph") + " --subgraph " +
                        data_file("o1.graph") + " --depth 2");
  REQUIRE(r.code == 0);
  json doc = check_schema(r, "graph-kappa");
  CHECK(doc["pass"].get<bool>());
  for (const char* name :
       {"diagonal-inner-products", "mismatched-source-vanishing", "reduced-isometry-all-pairs",
        "tail-balancing-identification", "termwise-map-hits-generators",
        "reduced-map-onto-reduced-generators", "left-action-case-formula",
        "generator-adjoint-convention"})
    CHECK(has_check(doc, name));
}

TEST_CASE("the covering verb reports the degree of the double cover") {
  RunResult r = run_cli("bihilb covering --cover " + data_file("double_cover.json"));
  REQUIRE(r.code == 0);
  json doc = check_schema(r, "covering");
  CHECK(doc["pass"].get<bool>());
  CHECK(has_check(doc, "watatani-index-equals-2"));
  CHECK(has_check(doc, "conjugated-module-has-the-fibre-product-dimension"));
}

TEST_CASE("usage problems and file problems exit with distinct codes") {
  RunResult unknown = run_cli("verify --suite nonsense");
  CHECK(unknown.code == 2);
  CHECK(unknown.err.find("usage-error") != std::string::npos);
  CHECK(unknown.err.find("nonsense") != std::string::npos);

  RunResult depth = run_cli("verify --suite ksgns --depth 0");
  CHECK(depth.code == 2);
  CHECK(depth.err.find("usage-error") != std::string::npos);

  RunResult missing = run_cli("graph kappa --graph no_such.graph --subgraph also_missing");
  CHECK(missing.code == 3);
  CHECK(missing.err.find("io-error") != std::string::npos);
  CHECK(missing.err.find("no_such.graph") != std::string::npos);

  std::ofstream("cli_scratch_bad.json") << "{\"M\": 3, \"gamma\": [1, 2, 0]}";
  RunResult bad = run_cli("bihilb covering --cover cli_scratch_bad.json");
  CHECK(bad.code == 3);
  CHECK(bad.err.find("parse-error") != std::string::npos);
  CHECK(bad.err.find("cli_scratch_bad.json") != std::string::npos);
  std::remove("cli_scratch_bad.json");

  std::ofstream("cli_scratch_bad.graph") << "vertex v\nedge\n";
  RunResult badg = run_cli("graph kappa --graph cli_scratch_bad.graph --subgraph " +
                           data_file("o1.graph"));
  CHECK(badg.code == 3);
  CHECK(badg.err.find("parse-error") != std::string::npos);
  CHECK(badg.err.find("cli_scratch_bad.graph") != std::string::npos);
  std::remove("cli_scratch_bad.graph");

  RunResult noargs = run_cli("verify");
  CHECK(noargs.code == 2);
}

TEST_CASE("the tolerance environment variable sets the default") {
  RunResult ok = run_cmd(std::string("CSTAR_TOL=1e-6 \"") + CSTAR_CLI_PATH +
                         "\" verify --suite ksgns");
  CHECK(ok.code == 0);

  RunResult bad = run_cmd(std::string("CSTAR_TOL=frogs \"") + CSTAR_CLI_PATH +
                          "\" verify --suite ksgns");
  CHECK(bad.code == 2);
  CHECK(bad.err.find("usage-error") != std::string::npos);
}

TEST_CASE("report serialization keeps field order and never emits NaN") {
  cstar::Report empty{"demo", 1, {}};
  nlohmann::ordered_json j = cstar::report_json(empty, "T");
  CHECK(j["pass"].get<bool>());
  CHECK(j["checks"].empty());
  std::string dumped = j.dump();
  CHECK(dumped.find("\"suite\"") < dumped.find("\"seed\""));
  CHECK(dumped.find("\"seed\"") < dumped.find("\"checks\""));
  CHECK(dumped.find("\"checks\"") < dumped.find("\"pass\""));
  CHECK(dumped.find("\"pass\"") < dumped.find("\"timestamp\""));

  cstar::Report nan_rep{"demo", 1, {}};
  nan_rep.checks.push_back(
      cstar::make_check("impossible", "a check with a non-finite residual",
                        std::numeric_limits<double>::quiet_NaN(), 1e-9));
  nlohmann::ordered_json jn = cstar::report_json(nan_rep, "T");
  CHECK(jn["checks"][0]["residual"].get<double>() == 9.9e99);
  CHECK_FALSE(jn["checks"][0]["pass"].get<bool>());
  CHECK_FALSE(jn["pass"].get<bool>());
  CHECK(jn.dump().find("nan") == std::string::npos);

  cstar::Report inf_rep{"demo", 2, {}};
  inf_rep.checks.push_back(cstar::make_check(
      "diverged", "a check with an infinite residual",
      std::numeric_limits<double>::infinity(), 1e-9));
  CHECK(cstar::report_json(inf_rep, "T")["checks"][0]["residual"].get<double>() == 9.9e99);
}

TEST_CASE("covering descriptions parse strictly") {
  cstar::CoveringSpec spec = cstar::covering_from_json(
      R"({"M": 3, "gamma": [1, 2, 0], "Mtilde": 6, "pi": [0, 0, 1, 1, 2, 2]})", "inline");
  CHECK(spec.m == 3);
  CHECK(spec.gamma == std::vector<int>{1, 2, 0});
  CHECK(spec.mtilde == 6);
  CHECK(spec.pi == std::vector<int>{0, 0, 1, 1, 2, 2});

  try {
    cstar::covering_from_json("{not json", "inline");
    FAIL("expected throw");
  } catch (const cstar::Error& e) {
    CHECK(e.kind() == "parse-error");
  }
  try {
    cstar::covering_from_json(R"({"M": 3, "gamma": "not a list", "Mtilde": 1, "pi": []})",
                              "inline");
    FAIL("expected throw");
  } catch (const cstar::Error& e) {
    CHECK(e.kind() == "parse-error");
  }
  try {
    cstar::load_covering("definitely_missing_file.json");
    FAIL("expected throw");
  } catch (const cstar::Error& e) {
    CHECK(e.kind() == "io-error");
    CHECK(std::string(e.what()).find("definitely_missing_file.json") != std::string::npos);
  }
}
