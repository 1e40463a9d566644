#include "mcrd/cli.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

using namespace mcrd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const char* kBenchmark = R"(seed = 3

[reaction]
kind = cubic_linear

[problem]
M = 0
D = 1
N = 1
k = 2
eps = 0.04, 0.02, 0.01

[wave]
Z = 20
n_z = 4096
)";

fs::path scratch(const std::string& name) {
  const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
  fs::path p = fs::temp_directory_path() / "mcrd_cli_tests" / (std::string(info->name()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

fs::path write_config(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.ini";
  std::ofstream(p) << text;
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run_cli(std::vector<std::string> args) {
  std::vector<const char*> argv{"mcrd"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  return cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
}

int run_cli(const std::string& cmd, const fs::path& cfg, const fs::path& out, std::vector<std::string> extra = {}) {
  std::vector<std::string> args{cmd, "--config", cfg.string(), "--out", out.string()};
  args.insert(args.end(), extra.begin(), extra.end());
  return run_cli(args);
}

std::vector<std::vector<double>> read_csv(const fs::path& p, std::vector<std::string>& header) {
  std::ifstream in(p);
  std::string line;
  std::getline(in, line);
  header.clear();
  std::stringstream hs(line);
  for (std::string h; std::getline(hs, h, ',');) header.push_back(h);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    std::vector<double> row;
    std::stringstream ls(line);
    for (std::string x; std::getline(ls, x, ',');) row.push_back(std::stod(x));
    rows.push_back(row);
  }
  return rows;
}

}  // namespace

TEST(Config, SectionsAndDottedKeysAgree) {
  const auto a = cli::parse_config("[problem]\nM = 0.25\nN = 2\neps = 0.05 0.02 0.01\n");
  const auto b = cli::parse_config("problem.M = 0.25\nproblem.N = 2\nproblem.eps = 0.05, 0.02, 0.01\n");
  EXPECT_EQ(a.M, b.M);
  EXPECT_EQ(a.N, b.N);
  EXPECT_EQ(a.eps_list, b.eps_list);
  EXPECT_EQ(a.eps_list.size(), 3u);
}

TEST(Config, PolynomialTerms) {
  const auto c = cli::parse_config("[reaction]\nkind = polynomial\nterms = 1 0 1; 3 0 -1; 0 1 2\n");
  ASSERT_EQ(c.terms.size(), 3u);
  EXPECT_EQ(c.terms[1].p, 3);
  EXPECT_EQ(c.terms[1].c, -1.0);
  EXPECT_EQ(c.reaction().f(0.5, 0.1), 0.5 - 0.125 + 0.2);
}

TEST(Config, RejectsBadInput) {
  auto code = [](const std::string& text) {
    try {
      cli::validate(cli::parse_config(text));
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(code("[reaction]\nkind = mori\ngamma = 9\n").find("reaction.delta"), std::string::npos);
  EXPECT_NE(code("[reaction]\nkind = mori\ndelta = 1\n").find("reaction.gamma"), std::string::npos);
  EXPECT_NE(code("[reaction]\nkind = polynomial\n").find("reaction.terms"), std::string::npos);
  EXPECT_NE(code("colour = blue\n").find("unknown key"), std::string::npos);
  EXPECT_NE(code("problem.k = -1\n").find("problem.k"), std::string::npos);
  EXPECT_NE(code("problem.k = 1.5\n").find("integer"), std::string::npos);
  EXPECT_NE(code("problem.eps = 0.01 0.02\n").find("descending"), std::string::npos);
  EXPECT_NE(code("problem.eps = 0.02 -0.01\n").find("> 0"), std::string::npos);
  EXPECT_NE(code("problem.D = abc\n").find("not a"), std::string::npos);
  EXPECT_NE(code("grid.nodes_per_eps = 10\n").find("nodes_per_eps"), std::string::npos);
  EXPECT_NE(code("solve.continuation = maybe\n").find("boolean"), std::string::npos);
  EXPECT_EQ(code(kBenchmark), "");
}

TEST(Cli, AnalyzeReportsBenchmarkStructure) {
  const auto dir = scratch("out");
  ASSERT_EQ(run_cli("analyze", write_config(dir, kBenchmark), dir), 0);
  const auto j = json::parse(slurp(dir / "analyze.json"));
  EXPECT_EQ(j["schema_version"], cli::kSchemaVersion);
  EXPECT_EQ(j["status"], "ok");
  const auto& r = j["result"];
  EXPECT_LE(std::abs(r["v_star"].get<double>()), 1e-10);
  EXPECT_NEAR(r["J_prime"].get<double>(), 2.0, 1e-8);
  const double w = 2.0 / (3.0 * std::sqrt(3.0));
  EXPECT_NEAR(r["window"][0].get<double>(), -w, 1e-10);
  EXPECT_NEAR(r["window"][1].get<double>(), w, 1e-10);
  EXPECT_NEAR(r["R_star"].get<double>(), 0.5, 1e-12);
}

TEST(Cli, SweepOrderTable) {
  const auto dir = scratch("out");
  ASSERT_EQ(run_cli("sweep", write_config(dir, kBenchmark), dir, {"--k", "2"}), 0);
  const auto j = json::parse(slurp(dir / "sweep.json"));
  const auto& orders = j["result"]["orders"];
  ASSERT_EQ(orders.size(), 3u);
  for (const auto& o : orders) EXPECT_GE(o["slope"].get<double>(), o["k"].get<int>() + 0.7);
  EXPECT_GE(orders[2]["slope"].get<double>(), 2.7);
  std::vector<std::string> header;
  const auto rows = read_csv(dir / "order.csv", header);
  EXPECT_EQ(header, (std::vector<std::string>{"k", "eps", "residual_inf", "mean_defect", "mass_defect"}));
  EXPECT_EQ(rows.size(), 9u);
  const std::string svg = slurp(dir / "order.svg");
  std::size_t count = 0;
  for (std::size_t pos = 0; (pos = svg.find("<polyline", pos)) != std::string::npos; ++pos) ++count;
  EXPECT_EQ(count, 3u);
}

TEST(Cli, MissingMoriParameterExitsWithValidationCode) {
  const auto dir = scratch("out");
  ASSERT_EQ(run_cli("analyze", write_config(dir, "[reaction]\nkind = mori\ndelta = 1\n"), dir), 2);
  const auto j = json::parse(slurp(dir / "error.json"));
  EXPECT_EQ(j["status"], "error");
  EXPECT_EQ(j["error"]["code"], "ConfigInvalid");
  EXPECT_NE(j["error"]["message"].get<std::string>().find("reaction.gamma"), std::string::npos);
  // Nothing besides the error report.
  EXPECT_EQ(std::distance(fs::directory_iterator(dir), fs::directory_iterator()), 2);
}

TEST(Cli, MassOutsideIntervalIsValidationError) {
  const auto dir = scratch("out");
  EXPECT_EQ(run_cli("expand", write_config(dir, "problem.M = 1.2\n"), dir), 2);
  EXPECT_EQ(json::parse(slurp(dir / "error.json"))["error"]["code"], "MassOutOfRange");
}

TEST(Cli, NumericalFailureExitsThree) {
  const auto dir = scratch("out");
  const std::string cfg = std::string(kBenchmark) + "\n[solve]\nmax_iter = 1\n";
  EXPECT_EQ(run_cli("solve", write_config(dir, cfg), dir, {"--k", "0"}), 3);
  const auto j = json::parse(slurp(dir / "error.json"));
  EXPECT_EQ(j["error"]["code"], "NoConvergence");
  EXPECT_EQ(j["exit_code"], 3);
  EXPECT_FALSE(fs::exists(dir / "solve.json"));
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run_cli({}), 2);
  EXPECT_EQ(run_cli({"bogus"}), 2);
  EXPECT_EQ(run_cli({"analyze"}), 2);
  EXPECT_EQ(run_cli({"--help"}), 0);
  const auto dir = scratch("out");
  EXPECT_EQ(run_cli("analyze", dir / "does_not_exist.ini", dir), 2);
}

TEST(Cli, ReportsAreByteIdentical) {
  const auto a = scratch("a"), b = scratch("b");
  const auto cfg = write_config(a, kBenchmark);
  ASSERT_EQ(run_cli("spectrum", cfg, a), 0);
  ASSERT_EQ(run_cli("spectrum", cfg, b), 0);
  for (const auto& entry : fs::directory_iterator(a)) {
    if (entry.path().filename() == "run.ini") continue;
    EXPECT_EQ(slurp(entry.path()), slurp(b / entry.path().filename())) << entry.path();
  }
}

TEST(Cli, FloatsUseFixedFormat) {
  const auto dir = scratch("out");
  ASSERT_EQ(run_cli("wave", write_config(dir, kBenchmark), dir), 0);
  const std::string text = slurp(dir / "wave.json");
  const std::regex num(R"(:\s*(-?[0-9][0-9.eE+-]*)[,\n])");
  int floats = 0;
  for (auto it = std::sregex_iterator(text.begin(), text.end(), num); it != std::sregex_iterator(); ++it) {
    const std::string s = (*it)[1];
    if (s.find('.') == std::string::npos) continue;
    ++floats;
    EXPECT_TRUE(std::regex_match(s, std::regex(R"(-?[0-9]\.[0-9]{12}e[+-][0-9]{2,3})"))) << s;
  }
  EXPECT_GT(floats, 5);
  const auto j = json::parse(text)["result"];
  EXPECT_LE(j["tanh_error"].get<double>(), 1e-6);
  EXPECT_LE(std::abs(j["c"].get<double>()), 1e-8);
}

TEST(Cli, ProfileCsvRoundTrips) {
  const auto dir = scratch("out");
  ASSERT_EQ(run_cli("residual", write_config(dir, kBenchmark), dir), 0);
  const auto j = json::parse(slurp(dir / "residual.json"))["result"];
  const auto eq = find_vstar(BistableReaction::cubic_linear());
  WaveOptions wo;
  wo.Z = 20.0;
  const auto e = build_expansion(eq, solve_profile(eq, eq.v_star, wo), 0.0, 1.0, 1, 2);
  for (const auto& row : j["rows"]) {
    std::vector<std::string> header;
    const auto rows = read_csv(dir / row["csv"].get<std::string>(), header);
    EXPECT_EQ(header, (std::vector<std::string>{"r", "u", "v", "residual", "region"}));
    ASSERT_EQ(static_cast<int>(rows.size()), row["nodes"].get<int>());
    const auto s = assemble(e, row["eps"].get<double>());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      EXPECT_NEAR(rows[i][0], s.grid.r(i), 1e-12);
      EXPECT_NEAR(rows[i][1], s.u(i), 1e-12);
      EXPECT_NEAR(rows[i][2], s.v(i), 1e-12);
      EXPECT_EQ(static_cast<int>(rows[i][4]), static_cast<int>(s.region[i]));
    }
  }
  const std::string svg = slurp(dir / "u_vs_r.svg");
  EXPECT_EQ(svg.find("<svg"), 0u);
  EXPECT_EQ(svg.find("href"), std::string::npos);
  std::size_t count = 0;
  for (std::size_t pos = 0; (pos = svg.find("<polyline", pos)) != std::string::npos; ++pos) ++count;
  EXPECT_EQ(count, 3u);
}

TEST(Cli, MirroredFlagSwapsBranches) {
  const auto dir = scratch("out");
  const std::string cfg = "[problem]\nM = 0.2\nN = 2\nk = 2\neps = 0.02\n[wave]\nZ = 20\n";
  ASSERT_EQ(run_cli("solve", write_config(dir, cfg), dir, {"--mirrored"}), 0);
  const auto j = json::parse(slurp(dir / "solve.json"));
  EXPECT_TRUE(j["config"]["mirrored"].get<bool>());
  const auto& row = j["result"]["rows"][0];
  EXPECT_NEAR(row["u0"].get<double>(), -1.0, 0.05);
  EXPECT_NEAR(row["u1"].get<double>(), 1.0, 0.05);
  EXPECT_LE(row["res_final"].get<double>(), 1e-11);
}

TEST(Cli, InstalledBinaryExitCodes) {
  const char* bin = std::getenv("MCRD_CLI");
  if (!bin) GTEST_SKIP() << "MCRD_CLI not set";
  const auto dir = scratch("out");
  const auto good = write_config(dir, kBenchmark);
  const std::string base = std::string(bin) + " analyze --out " + dir.string() + " --config ";
  EXPECT_EQ(WEXITSTATUS(std::system((base + good.string() + " > /dev/null").c_str())), 0);
  std::ofstream(dir / "bad.ini") << "[reaction]\nkind = mori\ngamma = 9\n";
  EXPECT_EQ(WEXITSTATUS(std::system((base + (dir / "bad.ini").string() + " 2> /dev/null").c_str())), 2);
}
