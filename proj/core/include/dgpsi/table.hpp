#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dgpsi/types.hpp"

namespace dgpsi {

enum class ColumnRole { Output, Covariate };

/// Timestamped rows as read from disk. Missing values are NaN.
struct RawTable {
  std::vector<std::string> names;  // variables, excluding the time column
  std::vector<double> hours;       // timestamps in hours
  Eigen::MatrixXd values;          // rows x names.size()
};

struct SchemaConfig {
  std::string time_column = "time";
  /// Declared variable columns. Empty accepts whatever the header lists.
  std::vector<std::string> columns;
  std::string output;
};

/// Hourly grid of observations with an explicit mask.
struct ObservationTable {
  Eigen::VectorXd times;       // scaled to [0, 1]
  std::vector<double> hours;   // start hour of each bucket (original units)
  std::vector<std::string> names;
  std::vector<ColumnRole> roles;
  Eigen::MatrixXd values;      // NaN where not observed
  BoolMatrix observed;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
  /// Throws LookupError for an unknown name.
  Eigen::Index column_index(std::string_view name) const;
  /// Index of the single output column; throws ConsistencyError otherwise.
  Eigen::Index output_index() const;
  std::vector<Eigen::Index> covariate_indices() const;
  Eigen::Index observed_count(Eigen::Index col) const;
  void validate() const;
};

/// Parses `time,<var1>,...` CSV. Empty fields are missing; timestamps are
/// numeric hours or ISO-8601 (`YYYY-MM-DD[T ]HH:MM[:SS[.f]][Z]`). Rows are
/// sorted by time; duplicate timestamps are kept.
RawTable parse_csv(std::istream& in, const SchemaConfig& schema);
RawTable ingest_csv(const std::filesystem::path& path, const SchemaConfig& schema);

/// Writes `time,<names...>` with numeric-hour timestamps; NaN is an empty field.
void write_csv(const RawTable& raw, std::ostream& out, std::string_view time_column = "time");

/// Timestamp in hours. Numeric strings are taken as hours directly; ISO-8601
/// dates are hours since 1970-01-01T00:00Z. Throws ParseError with `line`.
double parse_timestamp(std::string_view text, std::size_t line);

/// One row per hour bucket from the first to the last observation; bucket
/// values are arithmetic means per column, empty buckets are missing. Time
/// is then scaled affinely onto [0, 1] (a single bucket maps to 0).
ObservationTable discretise_hourly(const RawTable& raw, std::string_view output_column);

/// Per-column z-score parameters computed on observed cells only, using
/// the sample (n - 1) standard deviation.
struct StandardisationRecord {
  std::vector<std::string> names;
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;

  ObservationTable apply(const ObservationTable& table) const;
  ObservationTable invert(const ObservationTable& table) const;
  double to_original(Eigen::Index col, double z) const { return mean[col] + sd[col] * z; }
  double to_standard(Eigen::Index col, double x) const { return (x - mean[col]) / sd[col]; }
};

std::pair<ObservationTable, StandardisationRecord> standardise(const ObservationTable& table);

struct Cell {
  Eigen::Index row = 0;
  Eigen::Index col = 0;
  friend bool operator==(const Cell&, const Cell&) = default;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

enum class MaskUnit { Cell, Row, Interval };

std::string_view to_string(MaskUnit unit);
MaskUnit mask_unit_from_string(std::string_view name);

struct MaskPlan {
  double proportion = 0.0;
  std::vector<std::string> targets;
  std::uint64_t seed = 0;
  MaskUnit unit = MaskUnit::Cell;
  std::vector<std::pair<double, double>> intervals;  // scaled time, inclusive
  std::vector<Cell> masked_cells;                    // sorted
};

/// Random masking. For MaskUnit::Cell each target column independently loses
/// round(proportion * observed_count) uniformly chosen observed cells. For
/// MaskUnit::Row, round(proportion * rows_with_any_target) rows are chosen
/// and every observed target cell in them is masked.
MaskPlan make_mask_plan(const ObservationTable& table, double proportion,
                        const std::vector<std::string>& targets, std::uint64_t seed,
                        MaskUnit unit = MaskUnit::Cell);

/// Masks every observed target cell whose scaled time lies in an interval.
MaskPlan make_interval_mask_plan(const ObservationTable& table,
                                 std::vector<std::pair<double, double>> intervals,
                                 const std::vector<std::string>& targets);

/// Flags the planned cells missing. Throws ConsistencyError if a planned cell
/// is out of range or not observed.
ObservationTable apply_mask(const ObservationTable& table, const MaskPlan& plan);

}  // namespace dgpsi
