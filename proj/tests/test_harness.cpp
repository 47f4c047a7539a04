#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "kkm/harness.hpp"

using namespace kkm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::path(testing::TempDir()) / ("kkm_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunConfig base(const fs::path& out) {
  RunConfig cfg;
  cfg.n = 32;
  cfg.d = 3;
  cfg.k = 4;
  cfg.iters = 6;
  cfg.seed = 5;
  cfg.out = out;
  return cfg;
}

}  // namespace

TEST(Config, Precedence) {
  const auto dir = scratch("config");
  {
    std::ofstream f(dir / "run.cfg");
    f << "# comment\nk = 3\nn=48\nalgo=2d\n\nkernel=polynomial  # trailing\n";
  }
  const auto cfg = resolve_config({{"config", (dir / "run.cfg").string()}, {"k", "4"}});
  EXPECT_EQ(cfg.k, 4u);
  EXPECT_EQ(cfg.n, 48u);
  EXPECT_EQ(cfg.algo, "2d");
  EXPECT_EQ(cfg.kernel, "polynomial");
  EXPECT_EQ(cfg.iters, 20u);
}

TEST(Config, Errors) {
  EXPECT_THROW(resolve_config({{"bogus", "1"}}), UsageError);
  EXPECT_THROW(resolve_config({{"k", "x"}}), UsageError);
  EXPECT_THROW(resolve_config({{"k", "0"}}), UsageError);
  EXPECT_THROW(resolve_config({{"algo", "3d"}}), UsageError);
  EXPECT_THROW(resolve_config({{"kernel", "rbf"}}), UsageError);
  EXPECT_THROW(resolve_config({{"precision", "f16"}}), UsageError);
  EXPECT_THROW(resolve_config({{"config", "/nonexistent/kkm.cfg"}}), UsageError);
}

TEST(Config, Lists) {
  const auto cfg = resolve_config({{"algos", "1d,2d"}, {"rank-list", "1,4,16"}});
  EXPECT_EQ(cfg.algos, (std::vector<std::string>{"1d", "2d"}));
  EXPECT_EQ(cfg.rank_list, (std::vector<int>{1, 4, 16}));
  EXPECT_EQ(resolve_config({{"algos", "all"}}).algos.size(), 4u);
}

TEST(Csv, TraceFormat) {
  ClusterTrace t;
  t.iterations.push_back({{0, 1}, -2.5, 1});
  t.iterations.push_back({{0, 0}, 0.1, 0});
  std::ostringstream os;
  write_trace_csv(os, t);
  EXPECT_EQ(os.str(), "iteration,shifted_objective,changed_points\n1,-2.5,1\n2,0.10000000000000001,0\n");
}

TEST(Run, WritesOutputsAndIsByteIdentical) {
  const auto dir = scratch("run");
  for (std::string algo : {"seq", "window", "1d", "h1d", "1.5d", "2d"}) {
    auto cfg = base(dir / (algo + "_a"));
    cfg.algo = algo;
    cfg.ranks = (algo == "seq" || algo == "window") ? 1 : 4;
    cfg.block = 5;
    std::ostringstream log;
    ASSERT_EQ(cmd_run(cfg, log), 0);
    cfg.out = dir / (algo + "_b");
    ASSERT_EQ(cmd_run(cfg, log), 0);
    for (const char* f : {"assignments.csv", "trace.csv", "ledger.csv"}) {
      const auto a = slurp(dir / (algo + "_a") / f);
      EXPECT_FALSE(a.empty()) << algo << " " << f;
      EXPECT_EQ(a, slurp(dir / (algo + "_b") / f)) << algo << " " << f;
    }
  }
  EXPECT_EQ(slurp(dir / "seq_a" / "assignments.csv"), slurp(dir / "2d_a" / "assignments.csv"));
  EXPECT_EQ(slurp(dir / "seq_a" / "ledger.csv"), "phase,rank,messages,words\n");
}

TEST(Run, SingleRankMatchesSequential) {
  const auto dir = scratch("p1");
  auto cfg = base(dir / "seq");
  std::ostringstream log;
  cmd_run(cfg, log);
  for (std::string algo : {"1d", "h1d", "1.5d", "2d"}) {
    cfg.algo = algo;
    cfg.out = dir / algo;
    cmd_run(cfg, log);
    EXPECT_EQ(slurp(dir / algo / "trace.csv"), slurp(dir / "seq" / "trace.csv")) << algo;
  }
}

TEST(Run, DivisibilityBeforeCompute) {
  const auto dir = scratch("div");
  auto cfg = base(dir / "x");
  cfg.algo = "2d";
  cfg.ranks = 3;
  std::ostringstream log;
  EXPECT_THROW(cmd_run(cfg, log), DivisibilityError);
  EXPECT_FALSE(fs::exists(dir / "x"));
}

TEST(Run, ReadsLibsvmFile) {
  const auto dir = scratch("libsvm");
  auto cfg = base(dir);
  cfg.gen = "blobs";
  std::ostringstream log;
  cmd_gen(cfg, log);
  auto from_file = base(dir / "file");
  from_file.data = dir / "blobs.libsvm";
  cmd_run(from_file, log);
  auto direct = base(dir / "direct");
  cmd_run(direct, log);
  EXPECT_EQ(slurp(dir / "file" / "trace.csv"), slurp(dir / "direct" / "trace.csv"));
}

TEST(Verify, PassSkipAndFault) {
  auto cfg = base("unused");
  cfg.rank_list = {1, 4, 16};
  const auto data = load_data(cfg);
  int skips = 0;
  for (const auto& row : verify(cfg, data.points)) {
    if (row.status == VerifyRow::Status::skip) {
      ++skips;
      EXPECT_EQ(row.ranks, 16);
      EXPECT_NE(row.algo, "1d");
    } else {
      EXPECT_EQ(row.status, VerifyRow::Status::pass) << row.algo << " P=" << row.ranks << " " << row.detail;
    }
  }
  EXPECT_EQ(skips, 0);

  cfg.k = 3;
  cfg.inject_skip_e_reduce = true;
  const auto faulty = verify(cfg, data.points);
  for (const auto& row : faulty) {
    if (row.ranks == 1) {
      EXPECT_EQ(row.status, VerifyRow::Status::pass);
    } else if (row.algo == "1d" && row.ranks != 16) {
      EXPECT_EQ(row.status, VerifyRow::Status::fail);
      EXPECT_EQ(row.detail.rfind("iteration 1:", 0), 0u) << row.detail;
    } else if (row.algo != "1d") {
      EXPECT_EQ(row.status, VerifyRow::Status::skip) << row.algo << " P=" << row.ranks;
    }
  }
  std::ostringstream log;
  EXPECT_EQ(cmd_verify(cfg, log), 1);
  EXPECT_NE(log.str().find("verify: FAIL"), std::string::npos);
}

TEST(Verify, FaultFailsEveryScheduleAtFirstIteration) {
  auto cfg = base("unused");
  cfg.rank_list = {4};
  cfg.inject_skip_e_reduce = true;
  for (const auto& row : verify(cfg, load_data(cfg).points)) {
    EXPECT_EQ(row.status, VerifyRow::Status::fail) << row.algo;
    EXPECT_EQ(row.detail.rfind("iteration 1:", 0), 0u) << row.detail;
  }
}

TEST(Bench, UpdateRowsAndPredictions) {
  auto cfg = base("unused");
  cfg.n = 64;
  cfg.rank_list = {4, 16};
  const auto rows = bench(cfg, load_data(cfg).points);
  ASSERT_FALSE(rows.empty());
  for (const auto& r : rows) {
    if (r.phase == "update") {
      if (r.algo == "2d")
        EXPECT_GT(r.measured_max_rank_words, 0.0);
      else
        EXPECT_EQ(r.measured_max_rank_words, 0.0) << r.algo;
    }
    if (r.algo == "1d" && r.phase == "E") EXPECT_EQ(r.predicted_words, 64.0);
  }
}

TEST(Predict, Csv) {
  auto cfg = base("unused");
  cfg.n = 1024;
  cfg.d = 16;
  cfg.k = 16;
  cfg.algos = {"1.5d"};
  cfg.rank_list = {16};
  std::ostringstream os;
  cmd_predict(cfg, os);
  EXPECT_EQ(os.str().rfind("algorithm,phase,n,d,k,P,latency,words\n", 0), 0u);
  EXPECT_NE(os.str().find("1.5d,E,1024,16,16,16,4,4352\n"), std::string::npos) << os.str();
  EXPECT_NE(os.str().find("1.5d,update,1024,16,16,16,0,0\n"), std::string::npos);
}

#ifdef KKM_CLI_PATH
namespace {
int cli(const std::string& args) {
  const std::string cmd = std::string(KKM_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}
}  // namespace

TEST(Cli, ExitCodes) {
  const auto out = scratch("cli").string();
  EXPECT_EQ(cli("run --n 16 --k 2 --algo 1.5d --ranks 4 --out " + out), 0);
  EXPECT_TRUE(fs::exists(fs::path(out) / "ledger.csv"));
  EXPECT_EQ(cli("verify --n 16 --k 2 --rank-list 1,4 --out " + out), 0);
  EXPECT_EQ(cli("verify --n 16 --k 2 --rank-list 4 --inject-fault skip-e-reduce --out " + out), 1);
  EXPECT_EQ(cli("run --algo 3d --out " + out), 2);
  EXPECT_EQ(cli("run --n 16 --algo 2d --ranks 3 --out " + out), 2);
  EXPECT_EQ(cli("run --no-such-flag"), 2);
  EXPECT_EQ(cli("run --data /nonexistent.libsvm --out " + out), 2);
  EXPECT_EQ(cli("predict --algos 1d --rank-list 4"), 0);
  EXPECT_EQ(cli("--help"), 0);
}
#endif
