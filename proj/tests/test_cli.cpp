#include <doctest.h>

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "../tools/cli.hpp"
#include "dewm/estimators.hpp"
#include "dewm/milp.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "dewm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = dewm::cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct TempDir {
  fs::path path;
  TempDir() {
    path = fs::temp_directory_path() / ("dewm_cli_" + std::to_string(std::rand()) + std::to_string(reinterpret_cast<std::uintptr_t>(this)));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

}  // namespace

TEST_CASE("simulate then estimate then evaluate") {
  TempDir dir;
  const std::string data = dir / "d.csv";
  REQUIRE(run({"simulate", "--dgp", "1", "--n", "150", "--seed", "3", "--out", data}).code == 0);
  CHECK(slurp(data).rfind("id,", 0) == 0);

  const std::string fit = dir / "fit.txt";
  auto r = run({"estimate", "--data", data, "--method", "backward", "--class", "table1", "--out", fit});
  REQUIRE(r.code == 0);
  const std::string first = slurp(fit);
  CHECK(first.find("metrics") != std::string::npos);

  // Same inputs, same bytes.
  r = run({"estimate", "--data", data, "--method", "backward", "--class", "table1"});
  CHECK(r.code == 0);
  CHECK(r.out == first);

  r = run({"evaluate", "--dtr", fit, "--dgp", "1", "--n-eval", "2000", "--seed", "2"});
  CHECK(r.code == 0);
  CHECK(r.out.find("\"oracle_welfare\"") != std::string::npos);
  r = run({"evaluate", "--dtr", fit, "--data", data});
  CHECK(r.code == 0);
  CHECK(r.out.find("\"welfare\"") != std::string::npos);
  CHECK(run({"evaluate", "--dtr", fit, "--data", data, "--dgp", "1"}).code != 0);

  r = run({"estimate", "--data", data, "--method", "qlearning", "--class", "table1"});
  CHECK(r.code == 0);
  r = run({"estimate", "--data", data, "--method", "simultaneous", "--class", "table1", "--restarts", "2"});
  CHECK(r.code == 0);
}

TEST_CASE("help lists the subcommand flags") {
  const auto r = run({"estimate", "--help"});
  CHECK(r.code == 0);
  for (const char* flag : {"--data", "--method", "--gamma", "--class", "--budget", "--propensity", "--demean"})
    CHECK(r.out.find(flag) != std::string::npos);
}

TEST_CASE("bad invocations exit nonzero") {
  CHECK(run({}).code != 0);
  CHECK(run({"estimate", "--method", "backward"}).code != 0);
  CHECK(run({"estimate", "--data", "/nonexistent.csv", "--method", "backward"}).code == 1);
  TempDir dir;
  std::ofstream(dir / "bad.csv") << "id,d1,y1\na,2,0.5\n";
  const auto bad = run({"estimate", "--data", dir / "bad.csv", "--method", "backward"});
  CHECK(bad.code == 2);
  CHECK(bad.err.find("error") != std::string::npos);
  CHECK(run({"simulate", "--dgp", "9", "--n", "10"}).code != 0);
  CHECK(run({"simulate", "--n", "-4"}).code != 0);
  CHECK(run({"frobnicate"}).code != 0);
}

TEST_CASE("export-milp writes a readable budget model") {
  TempDir dir;
  const std::string data = dir / "d.csv";
  REQUIRE(run({"simulate", "--dgp", "2", "--n", "8", "--seed", "5", "--out", data}).code == 0);
  const std::string lp = dir / "m.lp";
  auto r = run({"export-milp", "--data", data, "--method", "simultaneous", "--class", "table1", "--budget", "K=0.5,0.5",
                "C=0.4", "--out", lp});
  REQUIRE(r.code == 0);
  std::ifstream in(lp);
  const auto model = dewm::read_lp(in);
  REQUIRE_FALSE(model.rows.empty());
  CHECK(model.rows.back().name == "budget_1");
  CHECK(model.rows.back().rhs > 0.4);  // default alpha_n added

  r = run({"export-milp", "--data", data, "--method", "backward", "--class", "table1", "--step", "2"});
  CHECK(r.code == 0);
  CHECK(r.out.find("step 2") != std::string::npos);
}

TEST_CASE("simulate is deterministic") {
  const auto a = run({"simulate", "--dgp", "3", "--n", "20", "--seed", "8"});
  const auto b = run({"simulate", "--dgp", "3", "--n", "20", "--seed", "8"});
  CHECK(a.code == 0);
  CHECK(a.out == b.out);
}
