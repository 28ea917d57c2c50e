#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "hustat/cli.hpp"

using namespace hustat;

namespace {

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args) {
  args.insert(args.begin(), "hustat");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ============================================================================
// plan / decompose / hypothesis
// ============================================================================

TEST(Cli, PlanPrintsClosedForm) {
  const auto r = run({"plan", "--theorem", "T3", "--p", "1.5", "--delta", "0.25"});
  ASSERT_EQ(r.code, 0) << r.err;
  const auto j = Json::parse(r.out);
  EXPECT_NEAR(j["a"].get<double>(), 11.0 / 18.0, 1e-12);
  EXPECT_NEAR(j["b"].get<double>(), 4.0 / 9.0, 1e-12);
  EXPECT_TRUE(j.contains("gamma"));
}

TEST(Cli, PlanRegionErrorIsConfigError) {
  EXPECT_EQ(run({"plan", "--theorem", "T3", "--p", "1.5", "--delta", "1.0"}).code, 2);
}

TEST(Cli, DecomposeCardinalitiesSumToPairs) {
  const auto r = run({"decompose", "--n", "5", "--q", "1"});
  ASSERT_EQ(r.code, 0) << r.err;
  std::istringstream in(r.out);
  std::string line;
  long sum = 0, total = -1;
  while (std::getline(in, line)) {
    if (line.rfind("family,total,", 0) == 0) {
      total = std::stol(line.substr(13));
    } else if (line.rfind("family,", 0) == 0) {
      sum += std::stol(line.substr(line.rfind(',') + 1));
    }
  }
  EXPECT_EQ(sum, 10);
  EXPECT_EQ(total, 10);
  EXPECT_NE(r.out.find("term,slack,"), std::string::npos);
}

TEST(Cli, HypothesisExitCodes) {
  EXPECT_EQ(run({"hypothesis", "--theorem", "T4", "--p", "1.5", "--delta", "1", "--eta", "0.1", "--tail",
                 "polynomial:4"})
                .code,
            0);
  const auto fail = run({"hypothesis", "--theorem", "T4", "--p", "1.5", "--delta", "1", "--eta", "0.1", "--tail",
                         "polynomial:2"});
  EXPECT_EQ(fail.code, 1);
  EXPECT_NE(fail.err.find("beta(k)"), std::string::npos);
  EXPECT_EQ(run({"hypothesis", "--theorem", "FCLT", "--tail", "geometric:0.5"}).code, 0);
}

// ============================================================================
// Errors
// ============================================================================

TEST(Cli, MissingConfigIsExit2) { EXPECT_EQ(run({"fclt", "--config", "missing.toml"}).code, 2); }

TEST(Cli, UnknownFlagIsExit2WithUsage) {
  const auto r = run({"plan", "--bogus", "1"});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
}

TEST(Cli, NoSubcommandIsExit2) { EXPECT_EQ(run({}).code, 2); }

TEST(Cli, BadSeedIsExit2) { EXPECT_EQ(run({"simulate", "--seed", "-4"}).code, 2); }

TEST(Cli, HypothesisFailureInsideExperimentIsExit1) {
  const std::string dir = std::string(HUSTAT_TEST_TMP) + "/cli_hyp";
  std::filesystem::create_directories(dir);
  const std::string cfg = dir + "/periodic.toml";
  std::ofstream(cfg) << "[model]\nkind = \"markov\"\ntransition = \"0,1;1,0\"\n";
  EXPECT_EQ(run({"fclt", "--config", cfg, "--out", dir}).code, 1);
}

// ============================================================================
// Reports and determinism
// ============================================================================

TEST(Cli, SameSeedSameFiles) {
  const std::string base = std::string(HUSTAT_TEST_TMP) + "/cli_det";
  std::filesystem::remove_all(base);
  const std::string cfg = base + ".toml";
  std::filesystem::create_directories(std::filesystem::path(cfg).parent_path());
  std::ofstream(cfg) << "[run]\nreplications = 30\n[fclt]\nreference_paths = 50\n";
  for (const std::string sub : {"fclt", "slln", "bound", "simulate"}) {
    std::vector<std::string> args{sub, "--config", cfg, "--seed", "11", "--threads", "2"};
    if (sub == "fclt" || sub == "simulate") args.insert(args.end(), {"--n", "120"});
    if (sub == "slln") args.insert(args.end(), {"--n", "40", "80"});
    if (sub == "bound") args.insert(args.end(), {"--n", "48"});
    auto a_args = args, b_args = args;
    a_args.insert(a_args.end(), {"--out", base + "/a"});
    b_args.insert(b_args.end(), {"--out", base + "/b"});
    const auto a = run(a_args), b = run(b_args);
    ASSERT_EQ(a.code, 0) << sub << ": " << a.err;
    ASSERT_EQ(b.code, 0) << sub << ": " << b.err;
    EXPECT_EQ(a.out, b.out) << sub;
  }
  std::size_t files = 0;
  for (const auto& entry : std::filesystem::directory_iterator(base + "/a")) {
    const auto other = base + "/b/" + entry.path().filename().string();
    EXPECT_EQ(slurp(entry.path().string()), slurp(other)) << entry.path();
    EXPECT_NE(entry.path().filename().string().find("seed11"), std::string::npos);
    ++files;
  }
  EXPECT_EQ(files, 8u);
}

TEST(Cli, FlagsOverrideConfig) {
  const std::string dir = std::string(HUSTAT_TEST_TMP) + "/cli_override";
  std::filesystem::create_directories(dir);
  const std::string cfg = dir + "/c.toml";
  std::ofstream(cfg) << "[run]\nn = [50]\nreplications = 3\nseed = 1\n";
  const auto r = run({"simulate", "--config", cfg, "--n", "20", "--out", dir});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(Json::parse(r.out)["n"].get<long>(), 20);
}

// ============================================================================
// Help text
// ============================================================================

TEST(Cli, HelpMatchesGolden) {
  const std::string golden = std::string(HUSTAT_GOLDEN_DIR) + "/help.txt";
  std::string text;
  for (const std::string sub : {"", "simulate", "fclt", "slln", "bound", "decompose", "plan", "hypothesis"}) {
    const auto r = sub.empty() ? run({"--help"}) : run({sub, "--help"});
    EXPECT_EQ(r.code, 0);
    text += r.out;
  }
  if (std::getenv("HUSTAT_UPDATE_GOLDEN")) std::ofstream(golden, std::ios::binary) << text;
  EXPECT_EQ(text, slurp(golden));
}
