#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <string_view>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <variant>
#include <vector>

#include "p2t2f/error.hpp"
#include "p2t2f/matrix.hpp"
#include "p2t2f/tensor.hpp"

namespace p2t2f {

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t')) ++pos;
    if (pos >= s.size()) break;
    std::size_t end = pos;
    while (end < s.size() && s[end] != ' ' && s[end] != '\t') ++end;
    out.push_back(s.substr(pos, end - pos));
    pos = end;
  }
  return out;
}

inline std::vector<std::string_view> split_char(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  for (;;) {
    const auto next = s.find(sep, pos);
    out.push_back(trim(s.substr(pos, next - pos)));
    if (next == std::string_view::npos) break;
    pos = next + 1;
  }
  return out;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc{} && ptr == end;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return in;
}

inline std::ofstream open_output(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Plain-text COO: "dims I J K" first, then "i j k value" per line with
// one-based indices. Anything after '#' and blank lines are skipped.

inline SparseTemporalTensor read_coo(std::istream& in) {
  SparseTemporalTensor t;
  bool have_dims = false;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto s = detail::trim(std::string_view(line).substr(0, line.find('#')));
    if (s.empty()) continue;
    const auto f = detail::split_ws(s);
    if (!have_dims) {
      std::size_t I = 0, J = 0, K = 0;
      if (f.size() != 4 || f[0] != "dims" || !detail::parse_number(f[1], I) ||
          !detail::parse_number(f[2], J) || !detail::parse_number(f[3], K))
        throw ParseError("expected header 'dims I J K'", lineno);
      if (I == 0 || J == 0 || K == 0) throw ParseError("dims must be positive", lineno);
      t.dims = {I, J, K};
      have_dims = true;
      continue;
    }
    std::uint64_t i = 0, j = 0, k = 0;
    double v = 0.0;
    if (f.size() != 4 || !detail::parse_number(f[0], i) || !detail::parse_number(f[1], j) ||
        !detail::parse_number(f[2], k) || !detail::parse_number(f[3], v))
      throw ParseError("expected 'i j k value'", lineno);
    if (i == 0 || j == 0 || k == 0) throw ParseError("indices are one-based", lineno);
    if (i > std::numeric_limits<index_t>::max() || j > std::numeric_limits<index_t>::max() ||
        k > std::numeric_limits<index_t>::max())
      throw ParseError("index too large", lineno);
    t.entries.push_back({static_cast<index_t>(i - 1), static_cast<index_t>(j - 1),
                         static_cast<index_t>(k - 1), v});
  }
  if (!have_dims) throw ParseError("missing 'dims I J K' header", lineno);
  return t;
}

inline SparseTemporalTensor read_coo(const std::string& path) {
  auto in = detail::open_input(path);
  return read_coo(in);
}

inline void write_coo(std::ostream& out, const SparseTemporalTensor& t) {
  out << "dims " << t.dims.I << ' ' << t.dims.J << ' ' << t.dims.K << '\n';
  out << std::setprecision(17);
  for (const Entry& e : t.entries)
    out << e.i + 1 << ' ' << e.j + 1 << ' ' << e.k + 1 << ' ' << e.value << '\n';
}

inline void write_coo(const std::string& path, const SparseTemporalTensor& t) {
  auto out = detail::open_output(path);
  write_coo(out, t);
}

// ---------------------------------------------------------------------------
// Factor matrices: "rows cols" then one row per line, 17 significant digits.

inline void write_matrix(std::ostream& out, const Matrix& m) {
  out << m.rows() << ' ' << m.cols() << '\n';
  out << std::setprecision(17);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out << (c ? " " : "") << row[c];
    out << '\n';
  }
}

inline void write_matrix(const std::string& path, const Matrix& m) {
  auto out = detail::open_output(path);
  write_matrix(out, m);
}

inline Matrix read_matrix(std::istream& in) {
  std::size_t rows = 0, cols = 0;
  if (!(in >> rows >> cols)) throw ParseError("expected 'rows cols'", 1);
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (!(in >> m(r, c))) throw ParseError("truncated matrix", r + 2);
  return m;
}

inline Matrix read_matrix(const std::string& path) {
  auto in = detail::open_input(path);
  return read_matrix(in);
}

// ---------------------------------------------------------------------------
// Ratings ingestion.

struct CalendarMonth {};
struct FixedWidth {
  std::int64_t seconds = 86400 * 30;
};
using TimeBinning = std::variant<CalendarMonth, FixedWidth>;

enum class DuplicatePolicy { Reject, Mean };

struct RatingsConfig {
  std::size_t min_ratings_per_user = 20;
  TimeBinning time_binning = CalendarMonth{};
  double test_fraction = 0.10;
  std::uint64_t split_seed = 0;
  DuplicatePolicy duplicate_policy = DuplicatePolicy::Reject;
  bool temporal_holdout = false;  // hold out the latest entries instead of a random draw

  void validate() const {
    detail::require(test_fraction > 0 && test_fraction < 1,
                    "ratings config: test_fraction must lie in (0,1)");
    if (const auto* fw = std::get_if<FixedWidth>(&time_binning))
      detail::require(fw->seconds > 0, "ratings config: bin width must be positive");
  }
};

// Dense index -> original identifier, one vector per mode.
struct IndexMaps {
  std::vector<std::string> users;
  std::vector<std::string> items;
  std::vector<std::string> times;  // "YYYY-MM" for calendar months, bin start otherwise
};

struct LoadedRatings {
  SparseTemporalTensor tensor;
  IndexMaps maps;
};

// Months since 1970-01 of the UTC calendar month containing `unix_seconds`.
inline std::int64_t utc_month_index(std::int64_t unix_seconds) {
  using namespace std::chrono;
  const auto day = floor<days>(sys_seconds{seconds{unix_seconds}});
  const year_month_day ymd{day};
  return (static_cast<int>(ymd.year()) - 1970) * 12 +
         static_cast<std::int64_t>(static_cast<unsigned>(ymd.month())) - 1;
}

inline std::string month_label(std::int64_t month_index) {
  const std::int64_t y = 1970 + (month_index >= 0 ? month_index / 12 : (month_index - 11) / 12);
  const std::int64_t m = month_index - (y - 1970) * 12 + 1;
  std::ostringstream os;
  os << std::setfill('0') << std::setw(4) << y << '-' << std::setw(2) << m;
  return os.str();
}

namespace detail {

struct RawRating {
  std::string user;
  std::string item;
  double rating;
  std::int64_t timestamp;
  std::size_t line;
};

inline std::vector<RawRating> read_ratings_csv(std::istream& in) {
  std::vector<RawRating> rows;
  std::string line;
  std::size_t lineno = 0;
  bool first = true;
  while (std::getline(in, line)) {
    ++lineno;
    const auto s = trim(line);
    if (s.empty() || s.front() == '#') continue;
    const auto f = split_char(s, ',');
    double rating = 0.0;
    std::int64_t ts = 0;
    const bool numeric = f.size() >= 4 && parse_number(f[2], rating) && parse_number(f[3], ts);
    if (first) {
      first = false;
      if (!numeric && f.size() >= 4) continue;  // header row
    }
    if (f.size() != 4 || !numeric || f[0].empty() || f[1].empty())
      throw ParseError("expected 'userId,movieId,rating,timestamp'", lineno);
    if (!std::isfinite(rating)) throw ParseError("non-finite rating", lineno);
    rows.push_back({std::string(f[0]), std::string(f[1]), rating, ts, lineno});
  }
  return rows;
}

}  // namespace detail

// Users with fewer than min_ratings_per_user ratings are dropped once, before
// indexing. Users and items are indexed in order of first appearance; the
// time index counts bins from the earliest surviving timestamp's bin.
inline LoadedRatings load_ratings(std::istream& in, const RatingsConfig& cfg) {
  cfg.validate();
  auto rows = detail::read_ratings_csv(in);

  std::unordered_map<std::string, std::size_t> per_user;
  for (const auto& r : rows) ++per_user[r.user];
  std::erase_if(rows, [&](const detail::RawRating& r) {
    return per_user[r.user] < cfg.min_ratings_per_user;
  });
  if (rows.empty()) throw Error("load_ratings: no ratings left after filtering");

  const bool monthly = std::holds_alternative<CalendarMonth>(cfg.time_binning);
  const std::int64_t width = monthly ? 0 : std::get<FixedWidth>(cfg.time_binning).seconds;
  auto bin_of = [&](std::int64_t ts) {
    if (monthly) return utc_month_index(ts);
    const std::int64_t q = ts / width;
    return (ts % width != 0 && ts < 0) ? q - 1 : q;
  };
  std::int64_t first_bin = std::numeric_limits<std::int64_t>::max();
  std::int64_t last_bin = std::numeric_limits<std::int64_t>::min();
  for (const auto& r : rows) {
    const auto b = bin_of(r.timestamp);
    first_bin = std::min(first_bin, b);
    last_bin = std::max(last_bin, b);
  }

  LoadedRatings out;
  std::unordered_map<std::string, index_t> user_idx, item_idx;
  auto intern = [](std::unordered_map<std::string, index_t>& idx,
                   std::vector<std::string>& names, const std::string& key) {
    auto [it, fresh] = idx.try_emplace(key, static_cast<index_t>(names.size()));
    if (fresh) names.push_back(key);
    return it->second;
  };

  struct Acc {
    double sum;
    std::size_t count;
    std::size_t first_line;
  };
  std::map<std::tuple<index_t, index_t, index_t>, std::size_t> cell_pos;  // -> entries position
  std::vector<Acc> acc;
  const std::size_t K = static_cast<std::size_t>(last_bin - first_bin + 1);
  for (const auto& r : rows) {
    Entry e;
    e.i = intern(user_idx, out.maps.users, r.user);
    e.j = intern(item_idx, out.maps.items, r.item);
    e.k = static_cast<index_t>(bin_of(r.timestamp) - first_bin);
    e.value = r.rating;
    auto [it, fresh] = cell_pos.try_emplace({e.i, e.j, e.k}, out.tensor.entries.size());
    if (fresh) {
      out.tensor.entries.push_back(e);
      acc.push_back({r.rating, 1, r.line});
    } else if (cfg.duplicate_policy == DuplicatePolicy::Reject) {
      throw ParseError("duplicate (user, item, time bin) also on line " +
                           std::to_string(acc[it->second].first_line),
                       r.line);
    } else {
      acc[it->second].sum += r.rating;
      ++acc[it->second].count;
    }
  }
  for (std::size_t n = 0; n < acc.size(); ++n)
    if (acc[n].count > 1) out.tensor.entries[n].value = acc[n].sum / acc[n].count;

  out.tensor.dims = {out.maps.users.size(), out.maps.items.size(), K};
  out.maps.times.reserve(K);
  for (std::int64_t b = first_bin; b <= last_bin; ++b)
    out.maps.times.push_back(monthly ? month_label(b) : std::to_string(b * width));
  return out;
}

inline LoadedRatings load_ratings(const std::string& path, const RatingsConfig& cfg) {
  auto in = detail::open_input(path);
  return load_ratings(in, cfg);
}

// Two-column CSV "original_id,index" with one-based indices.
inline void write_index_map(std::ostream& out, const std::vector<std::string>& names) {
  out << "original_id,index\n";
  for (std::size_t n = 0; n < names.size(); ++n) out << names[n] << ',' << n + 1 << '\n';
}

inline void write_index_map(const std::string& path, const std::vector<std::string>& names) {
  auto out = detail::open_output(path);
  write_index_map(out, names);
}

// ---------------------------------------------------------------------------

// Uniform random (or latest-first, with temporal_holdout) partition of the
// entries. round(fraction * n) entries go to test; both halves keep the
// input's relative order and dims.
inline std::pair<SparseTemporalTensor, SparseTemporalTensor> train_test_split(
    const SparseTemporalTensor& t, const RatingsConfig& cfg) {
  cfg.validate();
  const std::size_t n = t.nnz();
  if (n < 2) throw InvalidArgument("train_test_split: need at least two entries");
  const auto n_test = static_cast<std::size_t>(std::llround(cfg.test_fraction * n));
  if (n_test == 0 || n_test >= n)
    throw InvalidArgument("train_test_split: fraction leaves train or test empty");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (cfg.temporal_holdout) {
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return t.entries[a].k > t.entries[b].k;
    });
  } else {
    std::mt19937_64 rng(cfg.split_seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<char> is_test(n, 0);
  for (std::size_t m = 0; m < n_test; ++m) is_test[order[m]] = 1;

  std::pair<SparseTemporalTensor, SparseTemporalTensor> out;
  out.first.dims = out.second.dims = t.dims;
  out.first.entries.reserve(n - n_test);
  out.second.entries.reserve(n_test);
  for (std::size_t m = 0; m < n; ++m)
    (is_test[m] ? out.second : out.first).entries.push_back(t.entries[m]);
  return out;
}

struct DatasetSummary {
  std::size_t I = 0, J = 0, K = 0;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  double density = 0.0;
  double rating_min = 0.0;
  double rating_max = 0.0;
};

inline DatasetSummary dataset_summary(const SparseTemporalTensor& train,
                                      const SparseTemporalTensor& test) {
  detail::require_shape(test.entries.empty() || train.dims == test.dims,
                        "dataset_summary: dims differ");
  DatasetSummary s;
  s.I = train.dims.I;
  s.J = train.dims.J;
  s.K = train.dims.K;
  s.train_count = train.nnz();
  s.test_count = test.nnz();
  const double cells = static_cast<double>(s.I) * s.J * s.K;
  s.density = cells > 0 ? (s.train_count + s.test_count) / cells : 0.0;
  bool any = false;
  for (const auto* t : {&train, &test})
    for (const Entry& e : t->entries) {
      s.rating_min = any ? std::min(s.rating_min, e.value) : e.value;
      s.rating_max = any ? std::max(s.rating_max, e.value) : e.value;
      any = true;
    }
  return s;
}

}  // namespace p2t2f
