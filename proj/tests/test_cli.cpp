#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "gcfem/cli.hpp"
#include "gcfem/io.hpp"

using namespace gcfem;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
  std::string err;
};

Run cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path work_dir() {
  const fs::path dir = fs::temp_directory_path() / "gcfem_test_cli";
  fs::create_directories(dir);
  return dir;
}

std::string path(const std::string& name) { return (work_dir() / name).string(); }

int count_lines(const std::string& s) {
  int n = 0;
  for (char c : s) n += c == '\n';
  return n;
}

}  // namespace

TEST_CASE("help for every subcommand lists flags with defaults") {
  const Run top = cli({"--help"});
  CHECK(top.code == 0);
  for (const char* sub : {"mesh", "solve", "apriori", "aposteriori"}) CHECK(top.out.find(sub) != std::string::npos);

  const Run mesh = cli({"mesh", "--help"});
  CHECK(mesh.code == 0);
  for (const char* flag : {"--level", "--radius", "--out"}) CHECK(mesh.out.find(flag) != std::string::npos);

  const Run solve = cli({"solve", "--help"});
  CHECK(solve.code == 0);
  for (const char* flag : {"--mesh", "--disk-level", "--C", "--tau", "--eps-stop", "--max-iter", "--out",
                           "--dump-fields", "--dump-indicators", "--verbose", "--config"})
    CHECK(solve.out.find(flag) != std::string::npos);
  CHECK(solve.out.find("[0.0001]") != std::string::npos);
  CHECK(solve.out.find("[10000]") != std::string::npos);

  for (const char* sub : {"apriori", "aposteriori"}) {
    const Run study = cli({sub, "--help"});
    CHECK(study.code == 0);
    for (const char* flag : {"--C", "--r", "--levels", "--tau", "--eps-stop", "--max-iter", "--out", "--jobs",
                             "--config"})
      CHECK(study.out.find(flag) != std::string::npos);
    CHECK(study.out.find("[1:5]") != std::string::npos);
    CHECK(study.out.find("[1e-08]") != std::string::npos);
  }
}

TEST_CASE("usage errors exit with 1") {
  CHECK(cli({}).code == 1);
  CHECK(cli({"frobnicate"}).code == 1);
  const Run neg = cli({"solve", "--C", "-1"});
  CHECK(neg.code == 1);
  CHECK_FALSE(neg.err.empty());
  CHECK(cli({"solve", "--disk-level", "9"}).code == 1);
  CHECK(cli({"solve", "--disk-level", "1", "--mesh", "m.txt"}).code == 1);
  CHECK(cli({"mesh", "--level", "2"}).code == 1);
  CHECK(cli({"apriori", "--levels", "3:1"}).code == 1);
  CHECK(cli({"apriori", "--levels", "0:7"}).code == 1);
  CHECK(cli({"apriori", "--levels", "a"}).code == 1);
  CHECK(cli({"apriori", "--jobs", "0"}).code == 1);
}

TEST_CASE("mesh then solve on the written mesh") {
  const Run m = cli({"mesh", "--level", "1", "--out", path("disk1.txt")});
  REQUIRE(m.code == 0);
  CHECK(m.out.find("vertices") != std::string::npos);
  const Run s = cli({"solve", "--mesh", path("disk1.txt"), "--C", "2", "--eps-stop", "1e-8", "--out",
                     path("rep_mesh.json")});
  CHECK(s.code == 0);
  const auto j = nlohmann::json::parse(read_file(path("rep_mesh.json")));
  CHECK(j["iterations"].get<int>() >= 1);
}

TEST_CASE("solve report and strong duality") {
  const Run s = cli({"solve", "--disk-level", "2", "--C", "2", "--eps-stop", "1e-8", "--out", path("rep.json"),
                     "--dump-fields", path("fields.csv"), "--dump-indicators", path("ind.csv")});
  REQUIRE(s.code == 0);
  const auto j = nlohmann::json::parse(read_file(path("rep.json")));
  for (const char* key : {"iterations", "residual_norm", "dual_energy", "primal_energy", "duality_gap"})
    CHECK(j.contains(key));
  CHECK(j["dual_energy"].contains("final"));
  CHECK(j["dual_energy"]["history"].size() == j["iterations"].get<size_t>() + 1);
  const double I = j["primal_energy"].get<double>();
  CHECK(std::abs(j["duality_gap"].get<double>()) <= 1e-8 * (1.0 + std::abs(I)));

  const std::string fields = read_file(path("fields.csv"));
  CHECK(fields.rfind("kind,index,value\n", 0) == 0);
  for (const char* kind : {"\ncr,", "\nrt,", "\np0s,", "\np0vx,", "\np0vy,"})
    CHECK(fields.find(kind) != std::string::npos);
  const std::string ind = read_file(path("ind.csv"));
  CHECK(ind.rfind("element,eta_sq_contribution\n", 0) == 0);
  CHECK(count_lines(ind) == 865);

  // identical invocations give identical bytes
  REQUIRE(cli({"solve", "--disk-level", "2", "--C", "2", "--eps-stop", "1e-8", "--out", path("rep2.json")}).code == 0);
  CHECK(read_file(path("rep.json")) == read_file(path("rep2.json")));
}

TEST_CASE("verbose logs every iteration") {
  const Run s = cli({"solve", "--disk-level", "1", "--C", "10", "--tau", "1000", "--eps-stop", "1e-6", "--verbose",
                     "--out", path("rep_v.json")});
  REQUIRE(s.code == 0);
  const auto j = nlohmann::json::parse(read_file(path("rep_v.json")));
  CHECK(count_lines(s.err) == j["iterations"].get<int>());
  CHECK(s.err.rfind("iter 1 residual ", 0) == 0);
}

TEST_CASE("non-convergence exits with 2 and still reports") {
  const Run s = cli({"solve", "--disk-level", "1", "--max-iter", "2", "--eps-stop", "1e-12", "--out",
                     path("rep_nc.json")});
  CHECK(s.code == 2);
  CHECK(s.err.find("error:") != std::string::npos);
  const auto j = nlohmann::json::parse(read_file(path("rep_nc.json")));
  CHECK_FALSE(j["converged"].get<bool>());
  CHECK(j["iterations"].get<int>() == 2);

  CHECK(cli({"apriori", "--levels", "1", "--max-iter", "1", "--eps-stop", "1e-12"}).code == 2);
}

TEST_CASE("I/O errors exit with 3") {
  CHECK(cli({"solve", "--mesh", path("missing.txt")}).code == 3);
  std::ofstream(path("bad_mesh.txt")) << "3 1 3\n0 0\n";
  CHECK(cli({"solve", "--mesh", path("bad_mesh.txt")}).code == 3);
  std::ofstream(path("bad.json")) << "{ \"levels\": [1, }";
  CHECK(cli({"apriori", "--config", path("bad.json")}).code == 3);
  CHECK(cli({"mesh", "--level", "0", "--out", path("no_such_dir/m.txt")}).code == 3);
}

TEST_CASE("studies write CSV and merge config with flags") {
  const Run a = cli({"apriori", "--C", "10", "--levels", "1:2", "--tau", "1000", "--out", path("table.csv")});
  REQUIRE(a.code == 0);
  const std::string csv = read_file(path("table.csv"));
  CHECK(count_lines(csv) == 3);
  CHECK(csv.rfind("level,h,N,e_tot,e_gap,eoc_tot,eoc_gap,identity_gap\n1,", 0) == 0);

  std::ofstream(path("cfg.json")) << R"({"case": {"C": 2.5}, "levels": [0, 1, 2], "flow": {"tau": 1000},
    "study": "apriori", "out": ")" + path("from_config.csv") + "\"}";
  const Run c = cli({"aposteriori", "--config", path("cfg.json"), "--levels", "1,2", "--jobs", "2"});
  REQUIRE(c.code == 0);
  const std::string merged = read_file(path("from_config.csv"));
  CHECK(count_lines(merged) == 3);
  CHECK(merged.find("\n1,") != std::string::npos);
  CHECK(merged.find("\n0,") == std::string::npos);

  const Run stdout_run = cli({"apriori", "--C", "2", "--levels", "1", "--tau", "1000"});
  CHECK(stdout_run.code == 0);
  CHECK(stdout_run.out.rfind("level,h,N", 0) == 0);
}
