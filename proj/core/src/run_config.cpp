#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>

#include "kkm/harness.hpp"
#include "kkm/synthetic.hpp"

namespace kkm {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename N>
N parse_number(std::string_view key, std::string_view v) {
  N out{};
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw UsageError("invalid value '" + std::string(v) + "' for " +
                     std::string(key));
  }
  return out;
}

std::size_t parse_count(std::string_view key, std::string_view v) {
  return parse_number<std::size_t>(key, v);
}

std::vector<std::string> split_list(std::string_view v) {
  std::vector<std::string> out;
  while (!v.empty()) {
    const auto comma = v.find(',');
    const auto item = trim(v.substr(0, comma));
    if (!item.empty()) out.emplace_back(item);
    if (comma == std::string_view::npos) break;
    v.remove_prefix(comma + 1);
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw UsageError("invalid boolean '" + std::string(v) + "' for " +
                   std::string(key));
}

bool known_algo(std::string_view a) {
  return a == "seq" || a == "window" || parse_algorithm(a).has_value();
}

}  // namespace

void RunConfig::apply_setting(std::string_view key, std::string_view value) {
  value = trim(value);
  using Setter = std::function<void(RunConfig&, std::string_view)>;
  static const std::map<std::string, Setter, std::less<>> setters = {
      {"data", [](RunConfig& c, std::string_view v) { c.data = std::filesystem::path(v); }},
      {"gen", [](RunConfig& c, std::string_view v) { c.gen = v; }},
      {"n", [](RunConfig& c, std::string_view v) { c.n = parse_count("n", v); }},
      {"d", [](RunConfig& c, std::string_view v) { c.d = parse_count("d", v); }},
      {"n-limit", [](RunConfig& c, std::string_view v) { c.n_limit = parse_count("n-limit", v); }},
      {"d-limit", [](RunConfig& c, std::string_view v) { c.d_limit = parse_count("d-limit", v); }},
      {"k", [](RunConfig& c, std::string_view v) { c.k = parse_count("k", v); }},
      {"kernel", [](RunConfig& c, std::string_view v) { c.kernel = v; }},
      {"gamma", [](RunConfig& c, std::string_view v) { c.gamma = parse_number<double>("gamma", v); }},
      {"c", [](RunConfig& c, std::string_view v) { c.c = parse_number<double>("c", v); }},
      {"degree", [](RunConfig& c, std::string_view v) { c.degree = parse_number<unsigned>("degree", v); }},
      {"algo", [](RunConfig& c, std::string_view v) { c.algo = v; }},
      {"ranks", [](RunConfig& c, std::string_view v) { c.ranks = parse_number<int>("ranks", v); }},
      {"iters", [](RunConfig& c, std::string_view v) { c.iters = parse_count("iters", v); }},
      {"seed", [](RunConfig& c, std::string_view v) { c.seed = parse_number<std::uint64_t>("seed", v); }},
      {"block", [](RunConfig& c, std::string_view v) { c.block = parse_count("block", v); }},
      {"precision", [](RunConfig& c, std::string_view v) {
         if (v == "f32") c.precision = Precision::f32;
         else if (v == "f64") c.precision = Precision::f64;
         else throw UsageError("precision must be f32 or f64");
       }},
      {"out", [](RunConfig& c, std::string_view v) { c.out = std::filesystem::path(v); }},
      {"algos", [](RunConfig& c, std::string_view v) {
         c.algos = v == "all" ? std::vector<std::string>{"1d", "h1d", "1.5d", "2d"}
                              : split_list(v);
       }},
      {"rank-list", [](RunConfig& c, std::string_view v) {
         c.rank_list.clear();
         for (const auto& item : split_list(v)) {
           c.rank_list.push_back(parse_number<int>("rank-list", item));
         }
       }},
      {"scheduler", [](RunConfig& c, std::string_view v) {
         if (v == "threads") c.scheduler = fabric::Scheduler::threads;
         else if (v == "serialized") c.scheduler = fabric::Scheduler::serialized;
         else throw UsageError("scheduler must be threads or serialized");
       }},
      {"stop-on-no-change", [](RunConfig& c, std::string_view v) {
         c.stop_on_no_change = parse_bool("stop-on-no-change", v);
       }},
      {"inject-fault", [](RunConfig& c, std::string_view v) {
         if (v == "skip-e-reduce") c.inject_skip_e_reduce = true;
         else if (v == "none") c.inject_skip_e_reduce = false;
         else throw UsageError("unknown fault '" + std::string(v) + "'");
       }},
  };
  const auto it = setters.find(key);
  if (it == setters.end()) {
    throw UsageError("unknown setting '" + std::string(key) + "'");
  }
  it->second(*this, value);
}

void RunConfig::apply_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read config " + path.string());
  std::string line;
  for (std::size_t no = 1; std::getline(in, line); ++no) {
    std::string_view view = line;
    if (auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError(path.string() + ":" + std::to_string(no) +
                       ": expected key=value");
    }
    apply_setting(trim(view.substr(0, eq)), view.substr(eq + 1));
  }
}

void RunConfig::validate() const {
  if (k < 1) throw UsageError("k must be >= 1");
  if (iters < 1) throw UsageError("iters must be >= 1");
  if (ranks < 1) throw UsageError("ranks must be >= 1");
  if (kernel != "linear" && kernel != "polynomial") {
    throw UsageError("kernel must be linear or polynomial");
  }
  if (!data && !parse_synthetic_kind(gen)) {
    throw UsageError("gen must be blobs or rings");
  }
  if (!known_algo(algo)) throw UsageError("unknown algo '" + algo + "'");
  for (const auto& a : algos) {
    if (!known_algo(a)) throw UsageError("unknown algo '" + a + "'");
  }
  if (std::any_of(rank_list.begin(), rank_list.end(), [](int p) { return p < 1; })) {
    throw UsageError("rank-list entries must be >= 1");
  }
  if (block && *block == 0) throw UsageError("block must be >= 1");
}

KernelSpec RunConfig::kernel_spec() const {
  return kernel == "polynomial" ? KernelSpec::polynomial(gamma, c, degree)
                                : KernelSpec::linear();
}

FitConfig RunConfig::fit_config() const {
  FitConfig f;
  f.k = k;
  f.max_iterations = iters;
  f.kernel = kernel_spec();
  f.stop_on_no_change = stop_on_no_change;
  f.window_block = block;
  return f;
}

RunConfig resolve_config(const std::map<std::string, std::string>& settings) {
  RunConfig cfg;
  if (auto it = settings.find("config"); it != settings.end()) {
    cfg.apply_file(it->second);
  }
  for (const auto& [key, value] : settings) {
    if (key != "config") cfg.apply_setting(key, value);
  }
  cfg.validate();
  return cfg;
}

}  // namespace kkm
