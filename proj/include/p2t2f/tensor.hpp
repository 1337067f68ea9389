#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "p2t2f/error.hpp"

namespace p2t2f {

using index_t = std::uint32_t;

// One observed cell. Indices are zero-based in memory; the text formats
// carry one-based indices and convert on the way in and out.
struct Entry {
  index_t i = 0;
  index_t j = 0;
  index_t k = 0;
  double value = 0.0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

struct Dims {
  std::size_t I = 0;  // users (split mode)
  std::size_t J = 0;  // items
  std::size_t K = 0;  // time slices

  friend bool operator==(const Dims&, const Dims&) = default;
};

// Sparse third-order tensor in coordinate form.
struct SparseTemporalTensor {
  Dims dims;
  std::vector<Entry> entries;

  std::size_t nnz() const noexcept { return entries.size(); }
};

struct Violation {
  enum class Kind { OutOfRange, Duplicate };
  Kind kind;
  std::size_t entry;  // position in the entry list
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;
  bool ok() const noexcept { return violations.empty(); }
};

namespace detail {

inline std::uint64_t cell_key(const Dims& d, const Entry& e) {
  return (static_cast<std::uint64_t>(e.i) * d.J + e.j) * d.K + e.k;
}

}  // namespace detail

inline ValidationReport validate_tensor(const SparseTemporalTensor& t) {
  ValidationReport report;
  const Dims& d = t.dims;
  if (d.I == 0 || d.J == 0 || d.K == 0) {
    report.violations.push_back(
        {Violation::Kind::OutOfRange, 0, "dimensions must be positive"});
    return report;
  }
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(t.entries.size());
  for (std::size_t n = 0; n < t.entries.size(); ++n) {
    const Entry& e = t.entries[n];
    if (e.i >= d.I || e.j >= d.J || e.k >= d.K) {
      report.violations.push_back(
          {Violation::Kind::OutOfRange, n,
           "entry " + std::to_string(n + 1) + " index (" + std::to_string(e.i + 1) +
               "," + std::to_string(e.j + 1) + "," + std::to_string(e.k + 1) +
               ") outside dims"});
      continue;
    }
    if (!seen.insert(detail::cell_key(d, e)).second) {
      report.violations.push_back(
          {Violation::Kind::Duplicate, n,
           "entry " + std::to_string(n + 1) + " duplicates cell (" +
               std::to_string(e.i + 1) + "," + std::to_string(e.j + 1) + "," +
               std::to_string(e.k + 1) + ")"});
    }
  }
  return report;
}

// Throws InvalidArgument carrying the first violation.
inline void require_valid(const SparseTemporalTensor& t) {
  auto report = validate_tensor(t);
  if (!report.ok()) throw InvalidArgument("invalid tensor: " + report.violations.front().message);
}

// A row slab of the mode-1 split. Rows [row_begin, row_end) of the global
// tensor, stored with local row indices (global = local + row_begin).
struct PartitionBlock {
  std::size_t row_begin = 0;
  std::size_t row_end = 0;
  SparseTemporalTensor subtensor;

  std::size_t rows() const noexcept { return row_end - row_begin; }
  std::size_t row_offset() const noexcept { return row_begin; }
};

struct TensorPartition {
  Dims global_dims;
  std::vector<PartitionBlock> blocks;

  std::size_t workers() const noexcept { return blocks.size(); }
};

// Block p (zero-based) owns rows [floor(p*I/P), floor((p+1)*I/P)).
inline std::size_t split_boundary(std::size_t p, std::size_t I, std::size_t P) {
  return static_cast<std::size_t>((static_cast<unsigned __int128>(p) * I) / P);
}

inline TensorPartition split_tensor(const SparseTemporalTensor& t, std::size_t P) {
  const std::size_t I = t.dims.I;
  if (P < 1 || P > I)
    throw InvalidPartition("split_tensor: need 1 <= P <= I (P=" + std::to_string(P) +
                           ", I=" + std::to_string(I) + ")");
  TensorPartition part;
  part.global_dims = t.dims;
  part.blocks.resize(P);
  // owner[i] = block owning global row i
  std::vector<std::uint32_t> owner(I);
  for (std::size_t p = 0; p < P; ++p) {
    auto& b = part.blocks[p];
    b.row_begin = split_boundary(p, I, P);
    b.row_end = split_boundary(p + 1, I, P);
    b.subtensor.dims = {b.rows(), t.dims.J, t.dims.K};
    std::fill(owner.begin() + b.row_begin, owner.begin() + b.row_end,
              static_cast<std::uint32_t>(p));
  }
  std::vector<std::size_t> counts(P, 0);
  for (const Entry& e : t.entries) {
    if (e.i >= I) throw InvalidArgument("split_tensor: row index out of range");
    ++counts[owner[e.i]];
  }
  for (std::size_t p = 0; p < P; ++p) part.blocks[p].subtensor.entries.reserve(counts[p]);
  for (const Entry& e : t.entries) {
    auto& b = part.blocks[owner[e.i]];
    Entry local = e;
    local.i = static_cast<index_t>(e.i - b.row_begin);
    b.subtensor.entries.push_back(local);
  }
  return part;
}

// Inverse of split_tensor: restores global row indices, block order.
inline SparseTemporalTensor merge_partition(const TensorPartition& part) {
  SparseTemporalTensor t;
  t.dims = part.global_dims;
  for (const auto& b : part.blocks) {
    for (Entry e : b.subtensor.entries) {
      e.i = static_cast<index_t>(e.i + b.row_begin);
      t.entries.push_back(e);
    }
  }
  return t;
}

}  // namespace p2t2f
