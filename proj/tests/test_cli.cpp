#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "lblab/io.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
  int code = -1;
  std::string output;
};

// Run the tool through the shell and capture exit code plus combined output.
CliResult run_cli(const std::string& args) {
  std::string cmd = std::string(LBLAB_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CliResult res;
  char buf[4096];
  while (std::size_t got = std::fread(buf, 1, sizeof buf, pipe))
    res.output.append(buf, got);
  int status = pclose(pipe);
  res.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return res;
}

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("lblab_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

std::string slurp(const fs::path& p) { return lblab::io::read_file(p.string()); }

const char* kScanConfig = R"({
  "schema_version": "1",
  "name": "scan1",
  "beta": 1.0,
  "potential": {"preset": "single_cosine", "dim": 1, "amplitude": 0.3},
  "modes": [1, -1],
  "re_omega": {"min": -2.0, "max": 2.0, "count": 5},
  "im_omega": [0.1, 1.0],
  "threshold": 0.5
})";

}  // namespace

TEST_CASE("cli reports its version") {
  auto res = run_cli("--version");
  REQUIRE(res.code == 0);
  REQUIRE(res.output.find("0.1.0") != std::string::npos);
}

TEST_CASE("cli usage errors exit with the schema code") {
  REQUIRE(run_cli("").code == 2);                      // missing subcommand
  REQUIRE(run_cli("no-such-command").code == 2);       // unknown subcommand
  REQUIRE(run_cli("dispersion-scan").code == 2);       // missing required --config
}

TEST_CASE("cli distinguishes io, schema, and numerical failures") {
  auto dir = fresh_dir("errs");

  // Nonexistent config file: I/O.
  auto res = run_cli("dispersion-scan --config " + (dir / "nope.json").string());
  REQUIRE(res.code == 4);

  // Unparseable JSON: schema.
  write_text(dir / "broken.json", "{not json");
  REQUIRE(run_cli("dispersion-scan --config " + (dir / "broken.json").string()).code == 2);

  // Wrong schema version: schema.
  write_text(dir / "vers.json", R"({"schema_version": "9", "beta": 1.0})");
  REQUIRE(run_cli("dispersion-scan --config " + (dir / "vers.json").string()).code == 2);

  // Missing required keys: schema.
  write_text(dir / "nokeys.json", R"({"beta": 1.0})");
  REQUIRE(run_cli("dispersion-scan --config " + (dir / "nokeys.json").string()).code == 2);

  // Stochastic commands insist on a seed: schema.
  write_text(dir / "gibbs.json", R"({
    "beta": 1.0, "N": 4,
    "potential": {"preset": "single_cosine", "dim": 1, "amplitude": 0.2}})");
  auto noseed = run_cli("gibbs-sample --config " + (dir / "gibbs.json").string() +
                        " --out " + dir.string());
  REQUIRE(noseed.code == 2);
  REQUIRE(noseed.output.find("seed") != std::string::npos);

  // Unstable explicit time step: numerical.
  write_text(dir / "blowup.json", R"({
    "beta": 1.0,
    "potential": {"preset": "single_cosine", "dim": 1, "amplitude": 0.5},
    "grid": {"n": 64}, "T": 1.0, "dt": 0.2, "scheme": "explicit_euler",
    "initial": {"type": "cosine", "eps": 0.2}})");
  REQUIRE(run_cli("fp-evolve --config " + (dir / "blowup.json").string() +
                  " --out " + dir.string())
              .code == 3);
}

TEST_CASE("dispersion scan writes verifiable, reproducible artifacts") {
  auto dir1 = fresh_dir("scan_a");
  auto dir2 = fresh_dir("scan_b");
  write_text(dir1 / "cfg.json", kScanConfig);
  write_text(dir2 / "cfg.json", kScanConfig);

  auto r1 = run_cli("dispersion-scan --config " + (dir1 / "cfg.json").string() +
                    " --out " + dir1.string());
  REQUIRE(r1.code == 0);
  auto r2 = run_cli("dispersion-scan --config " + (dir2 / "cfg.json").string() +
                    " --out " + dir2.string());
  REQUIRE(r2.code == 0);

  // Expected artifacts exist.
  REQUIRE(fs::exists(dir1 / "scan1.csv"));
  REQUIRE(fs::exists(dir1 / "scan1.summary.json"));
  REQUIRE(fs::exists(dir1 / "scan1.manifest.json"));

  // CSV: name row, unit row, then 2 modes x 2 im x 5 re rows.
  std::string csv = slurp(dir1 / "scan1.csv");
  std::size_t lines = 0;
  for (char c : csv) lines += (c == '\n');
  REQUIRE(lines == 22);

  // Byte-identical across reruns (including the g17 float formatting).
  REQUIRE(csv == slurp(dir2 / "scan1.csv"));
  REQUIRE(slurp(dir1 / "scan1.summary.json") == slurp(dir2 / "scan1.summary.json"));

  // Manifest: schema, config echo, and hashes that match the files on disk.
  json man = json::parse(slurp(dir1 / "scan1.manifest.json"));
  REQUIRE(man.at("schema_version") == "1");
  REQUIRE(man.at("command") == "dispersion-scan");
  REQUIRE(man.at("config").at("beta") == 1.0);
  REQUIRE(man.at("outputs").size() == 2);
  for (const auto& out : man.at("outputs")) {
    std::string bytes = slurp(dir1 / out.at("file").get<std::string>());
    REQUIRE(lblab::io::hash_hex(bytes) == out.at("data_hash").get<std::string>());
  }
  json man2 = json::parse(slurp(dir2 / "scan1.manifest.json"));
  REQUIRE(man.at("outputs") == man2.at("outputs"));
  REQUIRE(man.at("config_hash") == man2.at("config_hash"));
}

TEST_CASE("report verifies manifests and flags inconsistencies") {
  auto dir = fresh_dir("report_src");
  write_text(dir / "cfg.json", kScanConfig);
  REQUIRE(run_cli("dispersion-scan --config " + (dir / "cfg.json").string() +
                  " --out " + dir.string())
              .code == 0);

  auto rep = fresh_dir("report_out");
  auto ok = run_cli("report " + (dir / "scan1.manifest.json").string() + " --out " +
                    rep.string());
  REQUIRE(ok.code == 0);
  json rj = json::parse(slurp(rep / "report.json"));
  REQUIRE(rj.at("status") == "pass");
  REQUIRE(rj.at("beta_consistent") == true);
  REQUIRE(rj.at("artifacts").size() == 1);
  REQUIRE(rj.at("artifacts")[0].at("verified") == true);
  REQUIRE(rj.at("artifacts")[0].at("outputs")[1].contains("summary"));
  std::string md = slurp(rep / "report.md");
  REQUIRE(md.find("status: **pass**") != std::string::npos);

  // Tampering with any listed artifact must be caught.
  std::ofstream(dir / "scan1.csv", std::ios::app) << "tampered\n";
  auto bad = run_cli("report " + (dir / "scan1.manifest.json").string() + " --out " +
                     rep.string());
  REQUIRE(bad.code == 2);
  REQUIRE(bad.output.find("mismatch") != std::string::npos);
}

TEST_CASE("report flags disagreeing temperatures across inputs") {
  auto d1 = fresh_dir("beta_a");
  auto d2 = fresh_dir("beta_b");
  write_text(d1 / "cfg.json", kScanConfig);
  std::string other = kScanConfig;
  auto pos = other.find("\"beta\": 1.0");
  REQUIRE(pos != std::string::npos);
  other.replace(pos, 11, "\"beta\": 2.0");
  write_text(d2 / "cfg.json", other);
  REQUIRE(run_cli("dispersion-scan --config " + (d1 / "cfg.json").string() +
                  " --out " + d1.string())
              .code == 0);
  REQUIRE(run_cli("dispersion-scan --config " + (d2 / "cfg.json").string() +
                  " --out " + d2.string())
              .code == 0);

  auto rep = fresh_dir("beta_rep");
  auto res = run_cli("report " + (d1 / "scan1.manifest.json").string() + " " +
                     (d2 / "scan1.manifest.json").string() + " --out " + rep.string());
  REQUIRE(res.code == 0);
  json rj = json::parse(slurp(rep / "report.json"));
  REQUIRE(rj.at("status") == "flagged");
  REQUIRE(rj.at("beta_consistent") == false);
}

TEST_CASE("walk enumeration artifact carries the exact catalogue") {
  auto dir = fresh_dir("walks");
  auto res = run_cli("walks n=2 --out " + dir.string());
  REQUIRE(res.code == 0);
  json wj = json::parse(slurp(dir / "walks.json"));
  REQUIRE(wj.at("n") == 2);
  REQUIRE(wj.at("counts").at("returning") == 9);
  REQUIRE(wj.at("counts").at("escaping") == 7);
  REQUIRE(wj.at("lmin") == 3);
  REQUIRE(wj.at("lmax") == 6);
  for (const auto& w : wj.at("returning")) {
    REQUIRE(w.at("gamma") == 2);
    REQUIRE(w.at("sigma").size() == w.at("ell").get<std::size_t>());
    REQUIRE(w.at("word").size() == w.at("sigma").size());
  }

  // Order one, positional without the n= prefix: the three-walk catalogue.
  auto dir1 = fresh_dir("walks1");
  REQUIRE(run_cli("walks 1 --out " + dir1.string()).code == 0);
  json w1 = json::parse(slurp(dir1 / "walks.json"));
  REQUIRE(w1.at("returning").size() == 2);
  REQUIRE(w1.at("escaping").size() == 1);
  REQUIRE(w1.at("escaping")[0].at("sigma") == json::array({1, 1}));
}

TEST_CASE("output directory falls back to the environment default") {
  auto dir = fresh_dir("envout");
  std::string cmd = "env LBLAB_OUT_DIR=" + dir.string() + " " +
                    std::string(LBLAB_CLI_PATH) + " walks 1 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[512];
  while (std::fread(buf, 1, sizeof buf, pipe) > 0) {
  }
  REQUIRE(pclose(pipe) == 0);
  REQUIRE(fs::exists(dir / "walks.json"));
  REQUIRE(fs::exists(dir / "walks.manifest.json"));
}

TEST_CASE("seed flag overrides the config seed") {
  auto dir = fresh_dir("seedover");
  write_text(dir / "cfg.json", R"({
    "beta": 2.0, "N": 3, "samples": 2, "seed": 5,
    "potential": {"preset": "single_cosine", "dim": 1, "amplitude": 0.2}})");
  REQUIRE(run_cli("gibbs-sample --config " + (dir / "cfg.json").string() +
                  " --seed 9 --out " + dir.string())
              .code == 0);
  json man = json::parse(slurp(dir / "gibbs-sample.manifest.json"));
  REQUIRE(man.at("seed") == 9);
  REQUIRE(man.at("config").at("seed") == 5);

  // CSV rows: 2 header lines + samples * (N + 1) particles.
  std::string csv = slurp(dir / "gibbs-sample.csv");
  std::size_t lines = 0;
  for (char c : csv) lines += (c == '\n');
  REQUIRE(lines == 2 + 2 * 4);
}
