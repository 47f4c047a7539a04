#pragma once

// libSVM text format: one point per line, `label idx:val idx:val ...` with
// 1-based, strictly increasing feature indices. Absent features are 0.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "kkm/linalg.hpp"

namespace kkm {

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

struct LibsvmOptions {
  /// Declared feature count; indices beyond it are errors. When unset the
  /// dimension is the largest index seen.
  std::optional<std::size_t> dimension;
  /// Keep a seeded uniform sample of this many feature columns.
  std::optional<std::size_t> d_limit;
  /// Keep a seeded uniform sample of this many rows (file order preserved).
  std::optional<std::size_t> n_limit;
  std::uint64_t seed = 0;
};

struct Dataset {
  DenseMatrix<double> points;
  std::vector<double> labels;  // as written in the file
};

Dataset parse_libsvm(std::istream& in, const LibsvmOptions& opts = {});
Dataset load_libsvm(const std::filesystem::path& path,
                    const LibsvmOptions& opts = {});

/// Writes every nonzero with %.17g, so parsing it back is bit-exact given the
/// same dimension.
void write_libsvm(std::ostream& out, const DenseMatrix<double>& points,
                  std::span<const double> labels);

/// Sorted uniform sample of `count` indices from [0, n); all of them if
/// count >= n.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count,
                                        std::uint64_t seed);

}  // namespace kkm
