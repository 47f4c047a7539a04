#pragma once

// Experiment orchestration behind the CLI: configuration, data loading and
// the run / verify / bench / predict / gen commands. Every command is a pure
// function of its configuration and inputs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "kkm/distributed.hpp"
#include "kkm/fabric.hpp"
#include "kkm/linalg.hpp"
#include "kkm/sequential.hpp"

namespace kkm {

/// Bad flag, config key or value. The CLI maps it to exit code 2.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Precision { f32, f64 };

struct RunConfig {
  std::optional<std::filesystem::path> data;  // libSVM file
  std::string gen = "blobs";                  // synthetic kind without data
  std::size_t n = 64;
  std::size_t d = 2;
  std::optional<std::size_t> n_limit;
  std::optional<std::size_t> d_limit;
  std::size_t k = 2;
  std::string kernel = "linear";
  double gamma = 1.0;
  double c = 1.0;
  unsigned degree = 2;
  std::string algo = "seq";
  int ranks = 1;
  std::size_t iters = 20;
  std::uint64_t seed = 1;
  std::optional<std::size_t> block;
  Precision precision = Precision::f64;
  std::filesystem::path out = "out";
  std::vector<std::string> algos = {"1d", "h1d", "1.5d", "2d"};
  std::vector<int> rank_list = {1, 4};
  fabric::Scheduler scheduler = fabric::Scheduler::threads;
  bool stop_on_no_change = false;
  bool inject_skip_e_reduce = false;

  /// Keys are the long flag names without dashes, e.g. "n-limit".
  void apply_setting(std::string_view key, std::string_view value);
  /// Flat `key=value` lines; '#' starts a comment.
  void apply_file(const std::filesystem::path& path);
  void validate() const;

  KernelSpec kernel_spec() const;
  FitConfig fit_config() const;
};

/// Defaults, then the config file named by settings["config"] if any, then
/// every other setting.
RunConfig resolve_config(const std::map<std::string, std::string>& settings);

struct LoadedData {
  DenseMatrix<double> points;
  std::optional<Assignments> truth;
};

LoadedData load_data(const RunConfig& cfg);

struct RunOutputs {
  ClusterTrace trace;
  fabric::CommLedger ledger;  // empty for seq and window
};

/// Runs `algo` ("seq", "window" or a distributed name) at the configured
/// precision. Throws DivisibilityError before any compute.
RunOutputs execute(const RunConfig& cfg, std::string_view algo, int ranks,
                   const DenseMatrix<double>& points);

void write_assignments_csv(std::ostream& os, const Assignments& cl);
void write_trace_csv(std::ostream& os, const ClusterTrace& trace);

struct VerifyRow {
  std::string algo;
  int ranks = 0;
  enum class Status { pass, fail, skip } status = Status::pass;
  std::string detail;
};

/// Compares every (algo, P) of cfg.algos x cfg.rank_list against fit_full.
std::vector<VerifyRow> verify(const RunConfig& cfg,
                              const DenseMatrix<double>& points);

/// Empty if the traces agree, otherwise "iteration t: ..." (1-based).
std::string compare_traces(const ClusterTrace& oracle,
                           const ClusterTrace& candidate,
                           double objective_rtol = 1e-4);

struct BenchRow {
  std::string algo;
  std::string phase;  // cost-model phase
  int ranks = 0;
  std::size_t n = 0, d = 0, k = 0;
  double measured_max_rank_words = 0.0;
  double measured_total_words = 0.0;
  double predicted_words = 0.0;
  double ratio = 0.0;
};

/// Ledger words per cost-model phase, loop phases per iteration, for every
/// feasible (algo, P). Iterations always run to cfg.iters.
std::vector<BenchRow> bench(const RunConfig& cfg,
                            const DenseMatrix<double>& points);

int cmd_run(const RunConfig& cfg, std::ostream& log);
int cmd_verify(const RunConfig& cfg, std::ostream& log);
int cmd_bench(const RunConfig& cfg, std::ostream& log);
int cmd_predict(const RunConfig& cfg, std::ostream& out);
int cmd_gen(const RunConfig& cfg, std::ostream& log);

}  // namespace kkm
