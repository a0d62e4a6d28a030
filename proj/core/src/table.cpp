#include "dgpsi/table.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "dgpsi/errors.hpp"
#include "dgpsi/random.hpp"
#include "format.hpp"

namespace dgpsi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      return out;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
}

bool parse_double(std::string_view s, double& out) {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size() && std::isfinite(out);
}

bool parse_int(std::string_view s, int& out) {
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), out);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

Eigen::Index ObservationTable::column_index(std::string_view name) const {
  for (std::size_t c = 0; c < names.size(); ++c)
    if (names[c] == name) return static_cast<Eigen::Index>(c);
  throw LookupError("no column named '" + std::string(name) + "'");
}

Eigen::Index ObservationTable::output_index() const {
  Eigen::Index found = -1;
  for (std::size_t c = 0; c < roles.size(); ++c) {
    if (roles[c] == ColumnRole::Output) {
      if (found >= 0) throw ConsistencyError("table has more than one output column");
      found = static_cast<Eigen::Index>(c);
    }
  }
  if (found < 0) throw ConsistencyError("table has no output column");
  return found;
}

std::vector<Eigen::Index> ObservationTable::covariate_indices() const {
  std::vector<Eigen::Index> out;
  for (std::size_t c = 0; c < roles.size(); ++c)
    if (roles[c] == ColumnRole::Covariate) out.push_back(static_cast<Eigen::Index>(c));
  return out;
}

Eigen::Index ObservationTable::observed_count(Eigen::Index col) const {
  return observed.col(col).count();
}

void ObservationTable::validate() const {
  const Eigen::Index n = times.size();
  if (static_cast<Eigen::Index>(hours.size()) != n || values.rows() != n || observed.rows() != n)
    throw ConsistencyError("table: row counts disagree");
  if (values.cols() != observed.cols() || static_cast<Eigen::Index>(names.size()) != values.cols() ||
      roles.size() != names.size())
    throw ConsistencyError("table: column counts disagree");
  for (Eigen::Index i = 1; i < n; ++i)
    if (!(hours[static_cast<std::size_t>(i)] > hours[static_cast<std::size_t>(i - 1)]))
      throw ConsistencyError("table: times must be strictly increasing");
  output_index();
}

double parse_timestamp(std::string_view text, std::size_t line) {
  text = trim(text);
  double numeric;
  if (parse_double(text, numeric)) return numeric;

  // YYYY-MM-DD[T ]HH:MM[:SS[.fff]][Z]
  auto fail = [&]() -> double {
    throw ParseError("unrecognised timestamp '" + std::string(text) + "'", line);
  };
  if (text.size() < 16 || text[4] != '-' || text[7] != '-' || (text[10] != 'T' && text[10] != ' ') ||
      text[13] != ':')
    return fail();
  int year, month, day, hour, minute;
  if (!parse_int(text.substr(0, 4), year) || !parse_int(text.substr(5, 2), month) ||
      !parse_int(text.substr(8, 2), day) || !parse_int(text.substr(11, 2), hour) ||
      !parse_int(text.substr(14, 2), minute))
    return fail();
  double seconds = 0.0;
  std::string_view rest = text.substr(16);
  if (!rest.empty() && rest.back() == 'Z') rest.remove_suffix(1);
  if (!rest.empty()) {
    if (rest.front() != ':' || !parse_double(rest.substr(1), seconds) || seconds < 0.0 ||
        seconds >= 61.0)
      return fail();
  }
  const std::chrono::year_month_day ymd{std::chrono::year{year},
                                        std::chrono::month{static_cast<unsigned>(month)},
                                        std::chrono::day{static_cast<unsigned>(day)}};
  if (!ymd.ok() || hour < 0 || hour > 23 || minute < 0 || minute > 59) return fail();
  const auto days = std::chrono::sys_days{ymd}.time_since_epoch().count();
  return static_cast<double>(days) * 24.0 + hour + minute / 60.0 + seconds / 3600.0;
}

RawTable parse_csv(std::istream& in, const SchemaConfig& schema) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string_view> header;
  std::string header_line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header_line = line;
      break;
    }
  }
  if (header_line.empty()) throw ParseError("missing header", line_no == 0 ? 1 : line_no);
  header = split(header_line);
  if (header.front() != schema.time_column)
    throw SchemaError("first column must be '" + schema.time_column + "', found '" +
                      std::string(header.front()) + "'");

  std::vector<std::string> names;
  for (std::size_t c = 1; c < header.size(); ++c) names.emplace_back(header[c]);
  {
    std::set<std::string> seen;
    for (const auto& n : names)
      if (n.empty() || !seen.insert(n).second)
        throw SchemaError("empty or duplicate column name '" + n + "'");
  }
  if (!schema.columns.empty()) {
    for (const auto& want : schema.columns)
      if (std::find(names.begin(), names.end(), want) == names.end())
        throw SchemaError("declared column '" + want + "' is missing from the header");
    for (const auto& have : names)
      if (std::find(schema.columns.begin(), schema.columns.end(), have) == schema.columns.end())
        throw SchemaError("unknown column '" + have + "'");
  }
  if (!schema.output.empty() && std::find(names.begin(), names.end(), schema.output) == names.end())
    throw SchemaError("output column '" + schema.output + "' is missing from the header");

  struct Row {
    double hour;
    std::vector<double> v;
  };
  std::vector<Row> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto fields = split(line);
    if (fields.size() != header.size()) {
      std::ostringstream os;
      os << "expected " << header.size() << " fields, found " << fields.size();
      throw ParseError(os.str(), line_no);
    }
    Row r{parse_timestamp(fields[0], line_no), std::vector<double>(names.size(), kNaN)};
    for (std::size_t c = 1; c < fields.size(); ++c) {
      if (fields[c].empty()) continue;
      double v;
      if (!parse_double(fields[c], v))
        throw ParseError("bad number '" + std::string(fields[c]) + "' in column '" + names[c - 1] + "'",
                         line_no);
      r.v[c - 1] = v;
    }
    rows.push_back(std::move(r));
  }
  std::stable_sort(rows.begin(), rows.end(),
                   [](const Row& a, const Row& b) { return a.hour < b.hour; });

  RawTable out;
  out.names = std::move(names);
  out.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(out.names.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.hours.push_back(rows[i].hour);
    for (std::size_t c = 0; c < rows[i].v.size(); ++c)
      out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = rows[i].v[c];
  }
  return out;
}

RawTable ingest_csv(const std::filesystem::path& path, const SchemaConfig& schema) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'");
  return parse_csv(in, schema);
}

void write_csv(const RawTable& raw, std::ostream& out, std::string_view time_column) {
  out << time_column;
  for (const auto& n : raw.names) out << ',' << n;
  out << '\n';
  for (std::size_t i = 0; i < raw.hours.size(); ++i) {
    out << detail::format_double(raw.hours[i]);
    for (Eigen::Index c = 0; c < raw.values.cols(); ++c)
      out << ',' << detail::format_double(raw.values(static_cast<Eigen::Index>(i), c));
    out << '\n';
  }
}

ObservationTable discretise_hourly(const RawTable& raw, std::string_view output_column) {
  if (raw.hours.empty()) throw EmptyWindowError("discretise_hourly: window has no rows");
  const double first = std::floor(*std::min_element(raw.hours.begin(), raw.hours.end()));
  const double last = std::floor(*std::max_element(raw.hours.begin(), raw.hours.end()));
  const auto buckets = static_cast<Eigen::Index>(last - first) + 1;
  const auto cols = static_cast<Eigen::Index>(raw.names.size());

  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(buckets, cols);
  Eigen::MatrixXi count = Eigen::MatrixXi::Zero(buckets, cols);
  for (std::size_t i = 0; i < raw.hours.size(); ++i) {
    const auto b = static_cast<Eigen::Index>(std::floor(raw.hours[i]) - first);
    for (Eigen::Index c = 0; c < cols; ++c) {
      const double v = raw.values(static_cast<Eigen::Index>(i), c);
      if (std::isnan(v)) continue;
      sum(b, c) += v;
      count(b, c) += 1;
    }
  }

  ObservationTable t;
  t.names = raw.names;
  t.roles.assign(raw.names.size(), ColumnRole::Covariate);
  for (std::size_t c = 0; c < raw.names.size(); ++c)
    if (raw.names[c] == output_column) t.roles[c] = ColumnRole::Output;
  t.values.resize(buckets, cols);
  t.observed.resize(buckets, cols);
  t.times.resize(buckets);
  for (Eigen::Index b = 0; b < buckets; ++b) {
    t.hours.push_back(first + static_cast<double>(b));
    t.times[b] = buckets == 1 ? 0.0 : static_cast<double>(b) / static_cast<double>(buckets - 1);
    for (Eigen::Index c = 0; c < cols; ++c) {
      const bool seen = count(b, c) > 0;
      t.observed(b, c) = seen;
      t.values(b, c) = seen ? sum(b, c) / count(b, c) : kNaN;
    }
  }
  return t;
}

ObservationTable StandardisationRecord::apply(const ObservationTable& table) const {
  ObservationTable out = table;
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      if (out.observed(i, c)) out.values(i, c) = to_standard(c, out.values(i, c));
  return out;
}

ObservationTable StandardisationRecord::invert(const ObservationTable& table) const {
  ObservationTable out = table;
  for (Eigen::Index c = 0; c < out.cols(); ++c)
    for (Eigen::Index i = 0; i < out.rows(); ++i)
      if (out.observed(i, c)) out.values(i, c) = to_original(c, out.values(i, c));
  return out;
}

std::pair<ObservationTable, StandardisationRecord> standardise(const ObservationTable& table) {
  StandardisationRecord rec;
  rec.names = table.names;
  rec.mean.resize(table.cols());
  rec.sd.resize(table.cols());
  for (Eigen::Index c = 0; c < table.cols(); ++c) {
    double s = 0.0;
    Eigen::Index n = 0;
    for (Eigen::Index i = 0; i < table.rows(); ++i)
      if (table.observed(i, c)) {
        s += table.values(i, c);
        ++n;
      }
    if (n < 2)
      throw DegenerateColumnError("standardise: column '" + table.names[static_cast<std::size_t>(c)] +
                                  "' has fewer than two observed values");
    const double mean = s / static_cast<double>(n);
    double ss = 0.0;
    for (Eigen::Index i = 0; i < table.rows(); ++i)
      if (table.observed(i, c)) ss += (table.values(i, c) - mean) * (table.values(i, c) - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(sd > 0.0))
      throw DegenerateColumnError("standardise: column '" + table.names[static_cast<std::size_t>(c)] +
                                  "' has zero standard deviation");
    rec.mean[c] = mean;
    rec.sd[c] = sd;
  }
  return {rec.apply(table), rec};
}

std::string_view to_string(MaskUnit unit) {
  switch (unit) {
    case MaskUnit::Cell:
      return "cell";
    case MaskUnit::Row:
      return "row";
    case MaskUnit::Interval:
      return "interval";
  }
  return "cell";
}

MaskUnit mask_unit_from_string(std::string_view name) {
  if (name == "cell") return MaskUnit::Cell;
  if (name == "row") return MaskUnit::Row;
  if (name == "interval") return MaskUnit::Interval;
  throw ContractViolation("unknown mask unit '" + std::string(name) + "'");
}

namespace {

// First k entries of a seeded Fisher-Yates shuffle.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, std::size_t k, Rng& rng) {
  for (std::size_t i = 0; i < k && i + 1 < pool.size(); ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.index(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

std::vector<Eigen::Index> target_columns(const ObservationTable& table,
                                         const std::vector<std::string>& targets) {
  std::vector<Eigen::Index> cols;
  for (const auto& name : targets) cols.push_back(table.column_index(name));
  return cols;
}

}  // namespace

MaskPlan make_mask_plan(const ObservationTable& table, double proportion,
                        const std::vector<std::string>& targets, std::uint64_t seed, MaskUnit unit) {
  if (!(proportion >= 0.0) || !(proportion < 1.0))
    throw ContractViolation("make_mask_plan: proportion must be in [0, 1)");
  if (unit == MaskUnit::Interval)
    throw ContractViolation("make_mask_plan: use make_interval_mask_plan for interval masking");
  MaskPlan plan;
  plan.proportion = proportion;
  plan.targets = targets;
  plan.seed = seed;
  plan.unit = unit;
  const auto cols = target_columns(table, targets);

  if (unit == MaskUnit::Cell) {
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const Eigen::Index c = cols[k];
      std::vector<Eigen::Index> rows;
      for (Eigen::Index i = 0; i < table.rows(); ++i)
        if (table.observed(i, c)) rows.push_back(i);
      const auto count = static_cast<std::size_t>(std::llround(proportion * static_cast<double>(rows.size())));
      Rng rng(derive_seed(seed, "mask.column", static_cast<std::uint64_t>(c)));
      for (Eigen::Index r : sample_without_replacement(std::move(rows), count, rng))
        plan.masked_cells.push_back({r, c});
    }
  } else {
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
      bool any = false;
      for (Eigen::Index c : cols) any = any || table.observed(i, c);
      if (any) rows.push_back(i);
    }
    const auto count = static_cast<std::size_t>(std::llround(proportion * static_cast<double>(rows.size())));
    Rng rng(derive_seed(seed, "mask.rows"));
    for (Eigen::Index r : sample_without_replacement(std::move(rows), count, rng))
      for (Eigen::Index c : cols)
        if (table.observed(r, c)) plan.masked_cells.push_back({r, c});
  }
  std::sort(plan.masked_cells.begin(), plan.masked_cells.end());
  return plan;
}

MaskPlan make_interval_mask_plan(const ObservationTable& table,
                                 std::vector<std::pair<double, double>> intervals,
                                 const std::vector<std::string>& targets) {
  MaskPlan plan;
  plan.unit = MaskUnit::Interval;
  plan.targets = targets;
  plan.intervals = std::move(intervals);
  const auto cols = target_columns(table, targets);
  for (Eigen::Index i = 0; i < table.rows(); ++i) {
    const double t = table.times[i];
    bool inside = false;
    for (const auto& [lo, hi] : plan.intervals) inside = inside || (t >= lo && t <= hi);
    if (!inside) continue;
    for (Eigen::Index c : cols)
      if (table.observed(i, c)) plan.masked_cells.push_back({i, c});
  }
  std::sort(plan.masked_cells.begin(), plan.masked_cells.end());
  Eigen::Index total = 0;
  for (Eigen::Index c : cols) total += table.observed_count(c);
  plan.proportion = total > 0 ? static_cast<double>(plan.masked_cells.size()) / static_cast<double>(total) : 0.0;
  return plan;
}

ObservationTable apply_mask(const ObservationTable& table, const MaskPlan& plan) {
  ObservationTable out = table;
  for (const Cell& cell : plan.masked_cells) {
    if (cell.row < 0 || cell.row >= table.rows() || cell.col < 0 || cell.col >= table.cols())
      throw ConsistencyError("apply_mask: planned cell is outside the table");
    if (!table.observed(cell.row, cell.col))
      throw ConsistencyError("apply_mask: planned cell is not observed");
    out.observed(cell.row, cell.col) = false;
    out.values(cell.row, cell.col) = kNaN;
  }
  return out;
}

}  // namespace dgpsi
