#include "kkm/libsvm.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string_view>

namespace kkm {

ParseError::ParseError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what),
      line_(line) {}

namespace {

struct SparseRow {
  double label = 0.0;
  std::vector<std::pair<std::size_t, double>> entries;  // 0-based index
};

double parse_double(std::string_view tok, std::size_t line) {
  double v = 0.0;
  const auto* end = tok.data() + tok.size();
  const auto* begin = tok.data();
  if (tok.size() > 1 && tok.front() == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end) {
    throw ParseError(line, "malformed number '" + std::string(tok) + "'");
  }
  if (!std::isfinite(v)) {
    throw ParseError(line, "non-finite value '" + std::string(tok) + "'");
  }
  return v;
}

SparseRow parse_line(std::string_view text, std::size_t line) {
  SparseRow row;
  bool have_label = false;
  std::size_t prev = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    while (pos < text.size() && (text[pos] == ' ' || text[pos] == '\t')) ++pos;
    if (pos >= text.size()) break;
    std::size_t end = pos;
    while (end < text.size() && text[end] != ' ' && text[end] != '\t') ++end;
    const auto tok = text.substr(pos, end - pos);
    pos = end;
    if (!have_label) {
      row.label = parse_double(tok, line);
      have_label = true;
      continue;
    }
    const auto colon = tok.find(':');
    if (colon == std::string_view::npos || colon == 0) {
      throw ParseError(line, "malformed token '" + std::string(tok) + "'");
    }
    std::size_t idx = 0;
    const auto key = tok.substr(0, colon);
    auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), idx);
    if (ec != std::errc() || ptr != key.data() + key.size() || idx == 0) {
      throw ParseError(line, "malformed index '" + std::string(key) + "'");
    }
    if (idx <= prev) {
      throw ParseError(line, "non-increasing index " + std::to_string(idx));
    }
    prev = idx;
    row.entries.emplace_back(idx - 1, parse_double(tok.substr(colon + 1), line));
  }
  return row;
}

}  // namespace

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count,
                                        std::uint64_t seed) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  if (count >= n) return all;
  std::vector<std::size_t> out;
  out.reserve(count);
  std::mt19937_64 rng(seed);
  std::sample(all.begin(), all.end(), std::back_inserter(out), count, rng);
  return out;
}

Dataset parse_libsvm(std::istream& in, const LibsvmOptions& opts) {
  std::vector<SparseRow> rows;
  std::vector<std::size_t> line_of;
  std::size_t dim = 0;
  std::string text;
  for (std::size_t line = 1; std::getline(in, text); ++line) {
    std::string_view view = text;
    if (auto hash = view.find('#'); hash != std::string_view::npos) {
      view = view.substr(0, hash);
    }
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (view.find_first_not_of(" \t") == std::string_view::npos) continue;
    auto row = parse_line(view, line);
    if (!row.entries.empty()) {
      const std::size_t top = row.entries.back().first + 1;
      if (opts.dimension && top > *opts.dimension) {
        throw ParseError(line, "index " + std::to_string(top) +
                                   " exceeds dimension " +
                                   std::to_string(*opts.dimension));
      }
      dim = std::max(dim, top);
    }
    rows.push_back(std::move(row));
    line_of.push_back(line);
  }
  if (opts.dimension) dim = *opts.dimension;
  if (rows.empty()) return {};

  const auto keep_rows = sample_indices(rows.size(), opts.n_limit.value_or(rows.size()), opts.seed);
  const auto keep_cols = sample_indices(dim, opts.d_limit.value_or(dim), opts.seed + 1);
  std::vector<std::ptrdiff_t> col_map(dim, -1);
  for (std::size_t c = 0; c < keep_cols.size(); ++c) {
    col_map[keep_cols[c]] = static_cast<std::ptrdiff_t>(c);
  }

  Dataset out;
  out.points = DenseMatrix<double>(keep_rows.size(), keep_cols.size());
  out.labels.reserve(keep_rows.size());
  for (std::size_t r = 0; r < keep_rows.size(); ++r) {
    const auto& row = rows[keep_rows[r]];
    out.labels.push_back(row.label);
    for (const auto& [idx, val] : row.entries) {
      if (col_map[idx] >= 0) out.points(r, static_cast<std::size_t>(col_map[idx])) = val;
    }
  }
  return out;
}

Dataset load_libsvm(const std::filesystem::path& path,
                    const LibsvmOptions& opts) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return parse_libsvm(in, opts);
}

void write_libsvm(std::ostream& out, const DenseMatrix<double>& points,
                  std::span<const double> labels) {
  if (labels.size() != points.rows()) {
    throw DimensionError("write_libsvm: label count != rows");
  }
  char buf[64];
  for (std::size_t r = 0; r < points.rows(); ++r) {
    std::snprintf(buf, sizeof buf, "%.17g", labels[r]);
    out << buf;
    for (std::size_t c = 0; c < points.cols(); ++c) {
      const double v = points(r, c);
      if (v == 0.0 && !std::signbit(v)) continue;
      std::snprintf(buf, sizeof buf, " %zu:%.17g", c + 1, v);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace kkm
