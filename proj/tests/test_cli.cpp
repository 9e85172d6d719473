#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qrambench/benchmark.hpp"
#include "qrambench/cli.hpp"
#include "qrambench/data_table.hpp"

using namespace qrambench;
using json = nlohmann::json;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "qrambench");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::filesystem::path tmp(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    std::vector<std::string> cells;
    std::stringstream ls(line);
    std::string c;
    while (std::getline(ls, c, ',')) cells.push_back(c);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("list parsing") {
    CHECK(parse_uint_list("6..10:2") == std::vector<std::uint32_t>{6, 8, 10});
    CHECK(parse_uint_list("3,5,8") == std::vector<std::uint32_t>{3, 5, 8});
    CHECK_THROWS_AS(parse_uint_list("a..3"), ConfigError);
    CHECK(parse_double_list("1e-6,1e-5") == std::vector<double>{1e-6, 1e-5});
  }

  TEST_CASE("noiseless query with a table file") {
    const TreeShape shape(3, 1);
    Rng rng(1);
    const auto path = tmp("qrambench_cli_table.csv");
    DataTable::random(shape, rng).save(path);
    const Result r = run({"query", "--n", "3", "--epsilon", "0", "--input", "uniform", "--table", path.string(),
                          "--seed", "1", "--shots", "10"});
    REQUIRE(r.code == kExitOk);
    const json j = json::parse(r.out);
    CHECK(j["schema_version"] == kSchemaVersion);
    CHECK(j["fidelity"]["mean"] == 1.0);
    std::filesystem::remove(path);
  }

  TEST_CASE("query output is deterministic and mode independent") {
    const std::vector<std::string> args{"query", "--n", "8", "--epsilon", "1e-3", "--shots", "1000", "--seed", "7",
                                        "--mode", "pruned", "--branches", "16"};
    const Result a = run(args), b = run(args);
    REQUIRE(a.code == kExitOk);
    CHECK(a.out == b.out);
    auto full_args = args;
    full_args[10] = "full";
    const Result c = run(full_args);
    REQUIRE(c.code == kExitOk);
    CHECK(json::parse(a.out)["fidelity"] == json::parse(c.out)["fidelity"]);
  }

  TEST_CASE("config files: seeds required, flags override, unknown keys rejected") {
    const auto cfg = tmp("qrambench_cli_cfg.json");
    {
      std::ofstream(cfg) << R"({"n": 3, "epsilon": 0.01, "shots": 50})";
    }
    CHECK(run({"query", "--config", cfg.string()}).code == kExitConfig);
    {
      std::ofstream(cfg) << R"({"n": 3, "epsilon": 0.01, "shots": 50, "seed": 4})";
    }
    const Result a = run({"query", "--config", cfg.string()});
    REQUIRE(a.code == kExitOk);
    CHECK(json::parse(a.out)["config"]["n"] == 3);
    const Result b = run({"query", "--config", cfg.string(), "--n", "4"});
    REQUIRE(b.code == kExitOk);
    CHECK(json::parse(b.out)["config"]["n"] == 4);
    {
      std::ofstream(cfg) << R"({"n": 3, "seed": 4, "bogus": 1})";
    }
    CHECK(run({"query", "--config", cfg.string()}).code == kExitConfig);
    std::filesystem::remove(cfg);
  }

  TEST_CASE("flag mode generates and echoes a seed") {
    const Result r = run({"query", "--n", "2", "--shots", "5", "--epsilon", "0.01"});
    REQUIRE(r.code == kExitOk);
    CHECK(json::parse(r.out)["config"]["seed_generated"] == true);
  }

  TEST_CASE("config errors") {
    CHECK(run({"query", "--n", "3", "--table", "/nonexistent/t.csv", "--seed", "1"}).code == kExitConfig);
    CHECK(run({"query", "--mode", "sideways", "--seed", "1"}).code == kExitConfig);
    CHECK(run({"query", "--no-such-flag"}).code == kExitConfig);
    CHECK(run({"ef", "--T", "0", "--seed", "1"}).code == kExitConfig);
    CHECK(run({}).code == kExitConfig);
  }

  TEST_CASE("ef identity ratio is about two") {
    const Result r = run({"ef", "--op", "identity", "--epsilon", "1e-3", "--T", "1", "--seed", "3", "--shots",
                          "20000"});
    REQUIRE(r.code == kExitOk);
    const auto rows = csv_rows(r.out);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0] == std::vector<std::string>{"n", "epsilon", "T", "F0", "FT", "ratio", "PS", "bound_worst",
                                              "bound_original", "bound_refined", "shots", "seed"});
    CHECK(std::stod(rows[1][5]) == doctest::Approx(2.0).epsilon(0.1));
  }

  TEST_CASE("ef qram sweep") {
    const Result r = run({"ef", "--op", "qram", "--n", "2", "--epsilon", "1e-3", "--T", "1..2", "--seed", "3",
                          "--inputs", "10", "--shots", "100"});
    REQUIRE(r.code == kExitOk);
    CHECK(csv_rows(r.out).size() == 3);
  }

  TEST_CASE("bench emits regions consistent with the classifier") {
    const auto summary = tmp("qrambench_cli_bench.json");
    const Result r = run({"bench", "--n", "4..6", "--p", "1e-4,1e-2", "--branches", "full", "--shots", "3",
                          "--repetitions", "1", "--seed", "2", "--summary", summary.string()});
    REQUIRE(r.code == kExitOk);
    const auto rows = csv_rows(r.out);
    REQUIRE(rows.size() > 1);
    const auto& h = rows[0];
    const auto col = [&](const std::string& name) {
      return static_cast<std::size_t>(std::find(h.begin(), h.end(), name) - h.begin());
    };
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto n = static_cast<std::uint32_t>(std::stoul(rows[i][col("n")]));
      const double p = std::stod(rows[i][col("epsilon")]);
      CHECK(rows[i][col("region")] == to_string(classify_region(n, p)));
    }
    std::ifstream in(summary);
    const json j = json::parse(in);
    CHECK(j["schema_version"] == kSchemaVersion);
    CHECK(j["region_thresholds"]["upper"] == 256.0);
    CHECK(j["mode_ratios"].size() == 6);
    std::filesystem::remove(summary);
  }

  TEST_CASE("fit from a CSV curve") {
    const auto path = tmp("qrambench_cli_curve.csv");
    {
      std::ofstream out(path);
      out << "n,infidelity\n";
      for (int n = 1; n <= 15; ++n) out << n << ',' << 0.001 * std::pow(n, 1.9) << '\n';
    }
    const Result r = run({"fit", "--input", path.string()});
    REQUIRE(r.code == kExitOk);
    const json j = json::parse(r.out);
    CHECK(j["schema_version"] == kSchemaVersion);
    CHECK(j["eps_max_original"] == 0.125);
    CHECK(j["eps_max_refined"] == 0.25);
    CHECK(j["exponent"].get<double>() == doctest::Approx(1.9));
    CHECK(j["n_max_refined"].get<int>() >= j["n_max_original"].get<int>());
    std::filesystem::remove(path);
    CHECK(run({"fit"}).code == kExitConfig);
  }

  TEST_CASE("validate passes") {
    const Result r = run({"validate"});
    CHECK(r.code == kExitOk);
    const json j = json::parse(r.out);
    CHECK(j["passed"] == true);
    CHECK(j["schema_version"] == kSchemaVersion);
  }
}
