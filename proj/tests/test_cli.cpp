#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "test_util.hpp"

namespace {

namespace fs = std::filesystem;

struct CliResult {
  int exit_code;
  std::string output;  // stdout + stderr
};

CliResult run_cli(const std::string& args) {
  static int counter = 0;
  const fs::path log = fs::temp_directory_path() / ("dopf_cli_" + std::to_string(counter++));
  const std::string command =
      std::string(DOPF_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(command.c_str());
  std::ifstream in(log);
  std::stringstream buffer;
  buffer << in.rdbuf();
  fs::remove(log);
  return {WEXITSTATUS(raw), buffer.str()};
}

std::string fixture(const std::string& name) { return dopf::test::fixture_path(name); }

}  // namespace

TEST_CASE("cli solve: converges on a fixture with exit 0") {
  const auto result = run_cli("solve --input " + fixture("two_bus") + " --eps-rel 1e-4");
  CHECK(result.exit_code == 0);
  CHECK(result.output.find("\"status\": \"converged\"") != std::string::npos);
}

TEST_CASE("cli solve: iteration limit has its own exit code and a full trace") {
  const fs::path trace = fs::temp_directory_path() / "dopf_trace_test.csv";
  const auto result = run_cli("solve --input " + fixture("two_bus") +
                              " --eps-rel 1e-9 --max-iter 10 --trace " + trace.string());
  CHECK(result.exit_code == 5);
  std::ifstream in(trace);
  int lines = 0;
  std::string line;
  std::getline(in, line);
  CHECK(line == "t,pres,dres,eps_prim,eps_dual,objective");
  while (std::getline(in, line))
    if (!line.empty()) ++lines;
  CHECK(lines == 10);
  fs::remove(trace);
}

TEST_CASE("cli solve: a missing input names the path and fails") {
  const auto result = run_cli("solve --input /no/such/feeder.json");
  CHECK(result.exit_code == 2);
  CHECK(result.output.find("/no/such/feeder.json") != std::string::npos);
}

TEST_CASE("cli validate: clean fixture passes, dangling reference fails") {
  CHECK(run_cli("validate --input " + fixture("four_bus_delta")).exit_code == 0);

  const fs::path bad = fs::temp_directory_path() / "dopf_bad_feeder.json";
  {
    std::ofstream out(bad);
    out << R"({"base": 1.0,
      "buses": [{"id": "sub", "phases": [1], "w_lo": [1.0], "w_hi": [1.0]}],
      "generators": [{"id": "g1", "bus": "b9", "phases": [1],
                      "p_lo": [0.0], "p_hi": [1.0], "q_lo": [-1.0], "q_hi": [1.0]}],
      "lines": [], "loads": []})";
  }
  const auto result = run_cli("validate --input " + bad.string());
  CHECK(result.exit_code == 2);
  CHECK(result.output.find("b9") != std::string::npos);
  fs::remove(bad);
}

TEST_CASE("cli validate --oracle reports the exact objective") {
  const auto result = run_cli("validate --input " + fixture("two_bus") + " --oracle");
  CHECK(result.exit_code == 0);
  CHECK(result.output.find("\"objective\": 0.0998003992") != std::string::npos);
}

TEST_CASE("cli inspect: reports graph and subsystem statistics") {
  const auto two = run_cli("inspect --input " + fixture("two_bus"));
  CHECK(two.exit_code == 0);
  CHECK(two.output.find("\"components\": 2") != std::string::npos);

  const auto one = run_cli("inspect --input " + fixture("single_bus"));
  CHECK(one.exit_code == 0);
  CHECK(one.output.find("\"components\": 1") != std::string::npos);
}

TEST_CASE("cli inspect: debug dumps land on disk") {
  const fs::path lp = fs::temp_directory_path() / "dopf_lp_dump.txt";
  const fs::path subs = fs::temp_directory_path() / "dopf_subs_dump.txt";
  const auto result = run_cli("inspect --input " + fixture("two_bus") + " --dump-lp " +
                              lp.string() + " --dump-subsystems " + subs.string());
  CHECK(result.exit_code == 0);
  {
    std::ifstream in(lp);
    std::string line;
    std::getline(in, line);
    CHECK(line == "# rows cols");
    std::getline(in, line);
    CHECK(line == "11 12");
  }
  {
    std::ifstream in(subs);
    std::string line;
    std::getline(in, line);
    CHECK(line == "subsystems 2");
  }
  fs::remove(lp);
  fs::remove(subs);
}

TEST_CASE("cli solve: solution dump is keyed by variable") {
  const fs::path solution = fs::temp_directory_path() / "dopf_solution.txt";
  const auto result = run_cli("solve --input " + fixture("two_bus") + " --eps-rel 1e-4" +
                              " --solution " + solution.string());
  CHECK(result.exit_code == 0);
  std::ifstream in(solution);
  std::string line;
  int lines = 0;
  bool found_gen = false;
  while (std::getline(in, line)) {
    if (!line.empty()) ++lines;
    found_gen |= line.rfind("p_gen:g1:1 ", 0) == 0;
  }
  CHECK(lines == 12);  // one line per variable
  CHECK(found_gen);
  fs::remove(solution);
}

TEST_CASE("cli solve: validation failures exit with the validation code") {
  const fs::path bad = fs::temp_directory_path() / "dopf_disconnected.json";
  {
    std::ofstream out(bad);
    out << R"({"base": 1.0,
      "buses": [
        {"id": "a", "phases": [1], "w_lo": [0.81], "w_hi": [1.21]},
        {"id": "b", "phases": [1], "w_lo": [0.81], "w_hi": [1.21]}],
      "generators": [{"id": "g1", "bus": "a", "phases": [1],
                      "p_lo": [0.0], "p_hi": [1.0], "q_lo": [-1.0], "q_hi": [1.0]}],
      "lines": [], "loads": []})";
  }
  CHECK(run_cli("solve --input " + bad.string()).exit_code == 3);
  fs::remove(bad);
}
