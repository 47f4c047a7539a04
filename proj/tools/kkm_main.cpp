// kkm: run, verify, benchmark and model distributed Kernel K-means.
//
//   kkm run     --gen blobs --n 256 --d 8 --k 4 --algo 1.5d --ranks 4
//   kkm verify  --gen rings --n 64 --kernel polynomial --algos all --rank-list 1,4,16
//   kkm bench   --n 1600 --d 16 --k 16 --rank-list 4,16 --out out
//   kkm predict --n 1024 --d 8 --k 16 --rank-list 4,16,64
//   kkm gen     --gen rings --n 64 --d 2 --k 2 --out data
//
// Exit codes: 0 success, 1 verification failure or runtime error,
// 2 usage or parse error.

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "kkm/harness.hpp"
#include "kkm/libsvm.hpp"

namespace {

struct Flag {
  const char* name;
  const char* help;
};

constexpr Flag kFlags[] = {
    {"config", "flat key=value config file (CLI flags override it)"},
    {"data", "libSVM input file"},
    {"gen", "synthetic dataset when no --data: blobs|rings"},
    {"n", "synthetic point count"},
    {"d", "synthetic dimension"},
    {"n-limit", "sample at most this many points"},
    {"d-limit", "sample at most this many features"},
    {"k", "number of clusters"},
    {"kernel", "linear|polynomial"},
    {"gamma", "polynomial kernel gamma"},
    {"c", "polynomial kernel offset"},
    {"degree", "polynomial kernel degree"},
    {"algo", "seq|window|1d|h1d|1.5d|2d"},
    {"ranks", "virtual rank count P"},
    {"iters", "iterations"},
    {"seed", "seed for data generation and sampling"},
    {"block", "sliding-window block rows b"},
    {"precision", "f32|f64"},
    {"out", "output directory"},
    {"algos", "comma list for verify/bench/predict, or 'all'"},
    {"rank-list", "comma list of P for verify/bench/predict"},
    {"scheduler", "threads|serialized"},
    {"stop-on-no-change", "stop once no point changes (true|false)"},
};

void add_flags(CLI::App* sub, std::map<std::string, std::string>& settings) {
  for (const auto& f : kFlags) {
    const std::string name = f.name;
    sub->add_option_function<std::string>(
        "--" + name,
        [&settings, name](const std::string& v) { settings[name] = v; },
        f.help);
  }
  sub->add_option_function<std::string>(
         "--inject-fault",
         [&settings](const std::string& v) { settings["inject-fault"] = v; })
      ->group("");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed Kernel K-means on a simulated rank fabric"};
  app.require_subcommand(1);
  std::map<std::string, std::string> settings;

  auto* run = app.add_subcommand("run", "cluster and write assignments, trace and ledger CSVs");
  auto* verify = app.add_subcommand("verify", "compare distributed schedules with the sequential oracle");
  auto* bench = app.add_subcommand("bench", "ledger words vs cost-model predictions");
  auto* predict = app.add_subcommand("predict", "cost-model table");
  auto* gen = app.add_subcommand("gen", "write a synthetic dataset in libSVM format");
  for (auto* sub : {run, verify, bench, predict, gen}) add_flags(sub, settings);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    const auto cfg = kkm::resolve_config(settings);
    if (run->parsed()) return kkm::cmd_run(cfg, std::cout);
    if (verify->parsed()) return kkm::cmd_verify(cfg, std::cout);
    if (bench->parsed()) return kkm::cmd_bench(cfg, std::cout);
    if (predict->parsed()) return kkm::cmd_predict(cfg, std::cout);
    return kkm::cmd_gen(cfg, std::cout);
  } catch (const kkm::UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return 2;
  } catch (const kkm::DivisibilityError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return 2;
  } catch (const kkm::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
