#include "kkm/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>

#include "kkm/cost_model.hpp"
#include "kkm/libsvm.hpp"
#include "kkm/metrics.hpp"
#include "kkm/synthetic.hpp"

namespace kkm {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
DenseMatrix<T> convert(const DenseMatrix<double>& m) {
  if constexpr (std::is_same_v<T, double>) {
    return m;
  } else {
    std::vector<T> data(m.data().begin(), m.data().end());
    return DenseMatrix<T>(m.rows(), m.cols(), std::move(data));
  }
}

template <typename T>
RunOutputs execute_typed(const RunConfig& cfg, std::string_view algo,
                         int ranks, const DenseMatrix<double>& points) {
  auto fit = cfg.fit_config();
  if (algo == "seq") return {fit_full(convert<T>(points), fit), {}};
  if (algo == "window") {
    if (!fit.window_block) throw UsageError("algo window needs --block");
    return {fit_sliding_window(convert<T>(points), fit), {}};
  }
  const auto parsed = parse_algorithm(algo);
  if (!parsed) throw UsageError("unknown algo '" + std::string(algo) + "'");
  require_divisible(*parsed, points.rows(), cfg.k, ranks);
  DistOptions opts;
  opts.scheduler = cfg.scheduler;
  opts.skip_e_reduce = cfg.inject_skip_e_reduce;
  auto res = run_clustering(*parsed, convert<T>(points), fit, ranks, opts);
  return {std::move(res.trace), std::move(res.ledger)};
}

std::vector<std::string_view> ledger_phases(CostPhase p) {
  switch (p) {
    case CostPhase::K: return {phase::k_compute};
    case CostPhase::redistribute: return {phase::k_redistribute};
    case CostPhase::E: return {phase::v_exchange, phase::e_reduce, phase::c_allreduce};
    case CostPhase::update: return {phase::assign_update};
  }
  return {};
}

std::vector<CostPhase> cost_phases(Algorithm a) {
  if (a == Algorithm::hybrid_1d) {
    return {CostPhase::K, CostPhase::redistribute, CostPhase::E, CostPhase::update};
  }
  return {CostPhase::K, CostPhase::E, CostPhase::update};
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create " + dir.string() + ": " + ec.message());
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  return os;
}

}  // namespace

LoadedData load_data(const RunConfig& cfg) {
  LoadedData out;
  if (cfg.data) {
    LibsvmOptions opts;
    opts.d_limit = cfg.d_limit;
    opts.n_limit = cfg.n_limit;
    opts.seed = cfg.seed;
    if (!std::filesystem::is_regular_file(*cfg.data)) {
      throw UsageError("data file not found: " + cfg.data->string());
    }
    auto ds = load_libsvm(*cfg.data, opts);
    out.points = std::move(ds.points);
    const std::set<double> distinct(ds.labels.begin(), ds.labels.end());
    Assignments truth;
    truth.reserve(ds.labels.size());
    for (double l : ds.labels) {
      truth.push_back(static_cast<ClusterId>(std::distance(distinct.begin(), distinct.find(l))));
    }
    out.truth = std::move(truth);
    return out;
  }
  const auto kind = parse_synthetic_kind(cfg.gen);
  if (!kind) throw UsageError("gen must be blobs or rings");
  auto gen = generate_synthetic(*kind, cfg.n_limit ? std::min(cfg.n, *cfg.n_limit) : cfg.n,
                                cfg.d_limit ? std::min(cfg.d, *cfg.d_limit) : cfg.d,
                                cfg.k, cfg.seed);
  out.points = std::move(gen.points);
  out.truth = std::move(gen.truth);
  return out;
}

RunOutputs execute(const RunConfig& cfg, std::string_view algo, int ranks,
                   const DenseMatrix<double>& points) {
  return cfg.precision == Precision::f32
             ? execute_typed<float>(cfg, algo, ranks, points)
             : execute_typed<double>(cfg, algo, ranks, points);
}

void write_assignments_csv(std::ostream& os, const Assignments& cl) {
  os << "point,cluster\n";
  for (std::size_t j = 0; j < cl.size(); ++j) os << j << ',' << cl[j] << '\n';
}

void write_trace_csv(std::ostream& os, const ClusterTrace& trace) {
  os << "iteration,shifted_objective,changed_points\n";
  for (std::size_t t = 0; t < trace.iterations.size(); ++t) {
    const auto& it = trace.iterations[t];
    os << t + 1 << ',' << fmt_double(it.shifted_objective) << ','
       << it.changed_points << '\n';
  }
}

std::string compare_traces(const ClusterTrace& oracle,
                           const ClusterTrace& candidate,
                           double objective_rtol) {
  const std::size_t common =
      std::min(oracle.iterations.size(), candidate.iterations.size());
  for (std::size_t t = 0; t < common; ++t) {
    const auto& a = oracle.iterations[t];
    const auto& b = candidate.iterations[t];
    const std::string at = "iteration " + std::to_string(t + 1) + ": ";
    if (a.assignments != b.assignments) {
      std::size_t diff = 0;
      for (std::size_t j = 0; j < std::min(a.assignments.size(), b.assignments.size()); ++j) {
        if (a.assignments[j] != b.assignments[j]) ++diff;
      }
      return at + std::to_string(diff) + " assignments differ";
    }
    const double scale = std::max(std::abs(a.shifted_objective), std::abs(b.shifted_objective));
    if (std::abs(a.shifted_objective - b.shifted_objective) > objective_rtol * scale) {
      return at + "objective " + fmt_double(b.shifted_objective) + " vs " +
             fmt_double(a.shifted_objective);
    }
  }
  if (oracle.iterations.size() != candidate.iterations.size()) {
    return "iteration " + std::to_string(common + 1) + ": ran " +
           std::to_string(candidate.iterations.size()) + " iterations, oracle " +
           std::to_string(oracle.iterations.size());
  }
  return {};
}

std::vector<VerifyRow> verify(const RunConfig& cfg,
                              const DenseMatrix<double>& points) {
  const auto oracle = execute(cfg, "seq", 1, points).trace;
  std::vector<VerifyRow> rows;
  for (const auto& algo : cfg.algos) {
    for (int p : cfg.rank_list) {
      VerifyRow row{algo, p, VerifyRow::Status::pass, {}};
      if (const auto a = parse_algorithm(algo)) {
        if (auto why = divisibility_problem(*a, points.rows(), cfg.k, p)) {
          row.status = VerifyRow::Status::skip;
          row.detail = *why;
          rows.push_back(std::move(row));
          continue;
        }
      }
      const auto got = execute(cfg, algo, p, points).trace;
      row.detail = compare_traces(oracle, got);
      if (!row.detail.empty()) row.status = VerifyRow::Status::fail;
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

std::vector<BenchRow> bench(const RunConfig& base,
                            const DenseMatrix<double>& points) {
  RunConfig cfg = base;
  cfg.stop_on_no_change = false;
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  std::vector<BenchRow> rows;
  for (const auto& name : cfg.algos) {
    const auto algo = parse_algorithm(name);
    if (!algo) continue;
    for (int p : cfg.rank_list) {
      if (divisibility_problem(*algo, n, cfg.k, p)) continue;
      const auto out = execute(cfg, name, p, points);
      const double iters = static_cast<double>(out.trace.iterations_run());
      for (CostPhase cp : cost_phases(*algo)) {
        const bool per_iteration = cp == CostPhase::E || cp == CostPhase::update;
        const double norm = per_iteration ? iters : 1.0;
        double max_rank = 0.0, total = 0.0;
        for (int r = 0; r < p; ++r) {
          double words = 0.0;
          for (auto ph : ledger_phases(cp)) {
            words += static_cast<double>(out.ledger.phase_rank(ph, r).words);
          }
          max_rank = std::max(max_rank, words / norm);
          total += words / norm;
        }
        BenchRow row{name, std::string(to_string(cp)), p, n, d, cfg.k,
                     max_rank, total, 0.0, 0.0};
        row.predicted_words = predict(*algo, cp, n, d, cfg.k, p).words;
        if (row.predicted_words > 0.0) {
          row.ratio = max_rank / row.predicted_words;
        } else {
          row.ratio = max_rank == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

int cmd_run(const RunConfig& cfg, std::ostream& log) {
  const auto data = load_data(cfg);
  if (const auto a = parse_algorithm(cfg.algo)) {
    require_divisible(*a, data.points.rows(), cfg.k, cfg.ranks);
  }
  const auto out = execute(cfg, cfg.algo, cfg.ranks, data.points);
  ensure_dir(cfg.out);
  {
    auto os = open_out(cfg.out / "assignments.csv");
    write_assignments_csv(os, out.trace.final_assignments());
  }
  {
    auto os = open_out(cfg.out / "trace.csv");
    write_trace_csv(os, out.trace);
  }
  {
    auto os = open_out(cfg.out / "ledger.csv");
    out.ledger.write_csv(os);
  }
  const auto& last = out.trace.iterations.back();
  log << cfg.algo << " P=" << cfg.ranks << " n=" << data.points.rows()
      << " d=" << data.points.cols() << " k=" << cfg.k
      << " iterations=" << out.trace.iterations_run()
      << " objective=" << fmt_double(last.shifted_objective);
  if (data.truth) {
    log << " ari=" << adjusted_rand_index(*data.truth, last.assignments);
  }
  log << '\n';
  return 0;
}

int cmd_verify(const RunConfig& cfg, std::ostream& log) {
  const auto data = load_data(cfg);
  bool ok = true;
  for (const auto& row : verify(cfg, data.points)) {
    const char* tag = row.status == VerifyRow::Status::pass   ? "PASS"
                      : row.status == VerifyRow::Status::fail ? "FAIL"
                                                              : "SKIP";
    log << tag << ' ' << row.algo << " P=" << row.ranks;
    if (!row.detail.empty()) log << ": " << row.detail;
    log << '\n';
    if (row.status == VerifyRow::Status::fail) ok = false;
  }
  log << (ok ? "verify: PASS\n" : "verify: FAIL\n");
  return ok ? 0 : 1;
}

int cmd_bench(const RunConfig& cfg, std::ostream& log) {
  const auto data = load_data(cfg);
  const auto rows = bench(cfg, data.points);
  ensure_dir(cfg.out);
  auto os = open_out(cfg.out / "bench.csv");
  os << "algorithm,phase,P,n,d,k,measured_max_rank_words,"
        "measured_total_words,predicted_words,ratio\n";
  for (const auto& r : rows) {
    os << r.algo << ',' << r.phase << ',' << r.ranks << ',' << r.n << ','
       << r.d << ',' << r.k << ',' << fmt_double(r.measured_max_rank_words)
       << ',' << fmt_double(r.measured_total_words) << ','
       << fmt_double(r.predicted_words) << ',' << fmt_double(r.ratio) << '\n';
  }
  log << "wrote " << rows.size() << " rows to "
      << (cfg.out / "bench.csv").string() << '\n';
  return 0;
}

int cmd_predict(const RunConfig& cfg, std::ostream& out) {
  out << "algorithm,phase,n,d,k,P,latency,words\n";
  for (const auto& name : cfg.algos) {
    const auto algo = parse_algorithm(name);
    if (!algo) continue;
    for (int p : cfg.rank_list) {
      for (CostPhase cp : cost_phases(*algo)) {
        CostTerms t;
        try {
          t = predict(*algo, cp, cfg.n, cfg.d, cfg.k, p);
        } catch (const CostModelError&) {
          continue;
        }
        out << name << ',' << to_string(cp) << ',' << cfg.n << ',' << cfg.d
            << ',' << cfg.k << ',' << p << ',' << fmt_double(t.latency)
            << ',' << fmt_double(t.words) << '\n';
      }
    }
  }
  return 0;
}

int cmd_gen(const RunConfig& cfg, std::ostream& log) {
  const auto kind = parse_synthetic_kind(cfg.gen);
  if (!kind) throw UsageError("gen must be blobs or rings");
  const auto gen = generate_synthetic(*kind, cfg.n, cfg.d, cfg.k, cfg.seed);
  std::vector<double> labels(gen.truth.begin(), gen.truth.end());
  ensure_dir(cfg.out);
  const auto path = cfg.out / (cfg.gen + ".libsvm");
  auto os = open_out(path);
  write_libsvm(os, gen.points, labels);
  log << "wrote " << path.string() << '\n';
  return 0;
}

}  // namespace kkm
