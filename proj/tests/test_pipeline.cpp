#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dgpsi/errors.hpp"
#include "dgpsi/experiment.hpp"
#include "dgpsi/synthetic.hpp"
#include "dgpsi/table.hpp"

using namespace dgpsi;

namespace {

RawTable parse(const std::string& text, SchemaConfig schema = {"time", {}, ""}) {
  std::istringstream in(text);
  return parse_csv(in, schema);
}

}  // namespace

TEST(Ingest, WellFormedFile) {
  const RawTable r = parse("time,pH,lactate\n0,7.40,1.1\n1.5,7.38,\n2,,1.3\n");
  ASSERT_EQ(r.hours.size(), 3u);
  EXPECT_EQ(r.names, (std::vector<std::string>{"pH", "lactate"}));
  EXPECT_TRUE(std::isnan(r.values(1, 1)));
  EXPECT_EQ(r.values(2, 1), 1.3);
}

TEST(Ingest, ShuffledRowsAreSorted) {
  const RawTable r = parse("time,x\n3,30\n1,10\n2,20\n1,11\n");
  EXPECT_EQ(r.hours, (std::vector<double>{1, 1, 2, 3}));
  EXPECT_EQ(r.values(0, 0), 10.0);
  EXPECT_EQ(r.values(1, 0), 11.0);  // duplicates keep input order
}

TEST(Ingest, IsoTimestamps) {
  const RawTable r = parse("time,x\n2024-03-01T10:30:00Z,1\n2024-03-01 12:00,2\n");
  EXPECT_DOUBLE_EQ(r.hours[1] - r.hours[0], 1.5);
}

TEST(Ingest, MissingDeclaredColumnNamed) {
  try {
    parse("time,pH,SID\n0,7.4,40\n", {"time", {"pH", "SID", "lactate"}, "pH"});
    FAIL();
  } catch (const SchemaError& e) {
    EXPECT_NE(std::string(e.what()).find("lactate"), std::string::npos);
  }
  EXPECT_THROW(parse("time,pH,foo\n0,7.4,1\n", {"time", {"pH"}, "pH"}), SchemaError);
}

TEST(Ingest, MalformedRowReportsLine) {
  try {
    parse("time,x\n0,1\n1,abc\n");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
  EXPECT_THROW(parse("time,x\n0,1,2\n"), ParseError);
}

TEST(Discretise, MeansWithinHour) {
  const RawTable r = parse("time,pH\n0.1,7.38\n0.7,7.42\n2.2,7.30\n");
  const ObservationTable t = discretise_hourly(r, "pH");
  ASSERT_EQ(t.rows(), 3);
  EXPECT_NEAR(t.values(0, 0), 7.40, 1e-12);
  EXPECT_FALSE(t.observed(1, 0));
  EXPECT_TRUE(std::isnan(t.values(1, 0)));
  EXPECT_EQ(t.times[0], 0.0);
  EXPECT_EQ(t.times[1], 0.5);
  EXPECT_EQ(t.times[2], 1.0);
  EXPECT_EQ(t.output_index(), 0);
}

TEST(Discretise, PerColumnAggregation) {
  const RawTable r = parse("time,a,b\n0.1,1,\n0.5,3,10\n");
  const ObservationTable t = discretise_hourly(r, "a");
  EXPECT_EQ(t.values(0, 0), 2.0);
  EXPECT_EQ(t.values(0, 1), 10.0);
}

TEST(Discretise, SingleHourAndEmpty) {
  const ObservationTable t = discretise_hourly(parse("time,x\n4.2,1\n4.9,3\n"), "x");
  ASSERT_EQ(t.rows(), 1);
  EXPECT_EQ(t.times[0], 0.0);
  EXPECT_THROW(discretise_hourly(parse("time,x\n"), "x"), EmptyWindowError);
}

TEST(Standardise, SampleSdConvention) {
  const ObservationTable t = discretise_hourly(parse("time,x\n0,1\n1,3\n"), "x");
  const auto [z, rec] = standardise(t);
  // Sample sd of {1, 3} is sqrt(2), so the z-scores are -+1/sqrt(2).
  EXPECT_NEAR(z.values(0, 0), -1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_NEAR(z.values(1, 0), 1.0 / std::sqrt(2.0), 1e-12);
  EXPECT_EQ(rec.mean[0], 2.0);
  EXPECT_NEAR(rec.sd[0], std::sqrt(2.0), 1e-15);
}

TEST(Standardise, RoundTripAndObservedOnly) {
  Rng rng(1);
  auto w = generate_synthetic_window(SyntheticConfig{}, rng);
  const auto [z, rec] = standardise(w.table);
  const ObservationTable back = rec.invert(z);
  for (Eigen::Index c = 0; c < z.cols(); ++c)
    for (Eigen::Index i = 0; i < z.rows(); ++i)
      if (z.observed(i, c)) EXPECT_NEAR(back.values(i, c), w.table.values(i, c), 1e-12 * std::abs(w.table.values(i, c)) + 1e-12);
  // Changing an unobserved cell does not move the statistics.
  ObservationTable t2 = w.table;
  for (Eigen::Index i = 0; i < t2.rows(); ++i)
    if (!t2.observed(i, 3)) t2.values(i, 3) = 1e6;
  EXPECT_EQ(standardise(t2).second.mean, rec.mean);
}

TEST(Standardise, DegenerateColumn) {
  EXPECT_THROW(standardise(discretise_hourly(parse("time,x\n0,5\n1,5\n"), "x")), DegenerateColumnError);
  EXPECT_THROW(standardise(discretise_hourly(parse("time,x\n0,5\n1,\n"), "x")), DegenerateColumnError);
}

TEST(Mask, ProportionZeroIsIdentity) {
  Rng rng(2);
  const auto w = generate_synthetic_window(SyntheticConfig{}, rng);
  const MaskPlan p = make_mask_plan(w.table, 0.0, {"pH"}, 5);
  EXPECT_TRUE(p.masked_cells.empty());
  EXPECT_TRUE((apply_mask(w.table, p).observed == w.table.observed).all());
}

TEST(Mask, RoundingRuleAndDeterminism) {
  ObservationTable t;
  t.names = {"x"};
  t.roles = {ColumnRole::Output};
  t.values = Eigen::MatrixXd::Ones(100, 1);
  t.observed = BoolMatrix::Constant(100, 1, true);
  t.times = Eigen::VectorXd::LinSpaced(100, 0, 1);
  for (int i = 0; i < 100; ++i) t.hours.push_back(i);
  const MaskPlan a = make_mask_plan(t, 0.10, {"x"}, 9);
  const MaskPlan b = make_mask_plan(t, 0.10, {"x"}, 9);
  EXPECT_EQ(a.masked_cells.size(), 10u);
  EXPECT_EQ(a.masked_cells, b.masked_cells);
  EXPECT_TRUE(std::is_sorted(a.masked_cells.begin(), a.masked_cells.end()));
  const ObservationTable m = apply_mask(t, a);
  EXPECT_EQ(m.observed.count(), 90);
  EXPECT_NE(make_mask_plan(t, 0.10, {"x"}, 10).masked_cells, a.masked_cells);
}

TEST(Mask, PerColumnCountsAndRowUnit) {
  Rng rng(3);
  const auto w = generate_synthetic_window(SyntheticConfig{}, rng);
  const std::vector<std::string> cov{"pCO2", "SID", "lactate"};
  const MaskPlan p = make_mask_plan(w.table, 0.2, cov, 1);
  for (const auto& name : cov) {
    const auto c = w.table.column_index(name);
    const auto n = std::count_if(p.masked_cells.begin(), p.masked_cells.end(), [&](const Cell& x) { return x.col == c; });
    EXPECT_EQ(n, std::lround(0.2 * static_cast<double>(w.table.observed_count(c))));
  }
  for (const Cell& c : p.masked_cells) EXPECT_TRUE(w.table.observed(c.row, c.col));
  const MaskPlan rows = make_mask_plan(w.table, 0.2, cov, 1, MaskUnit::Row);
  for (const Cell& c : rows.masked_cells)
    for (const auto& name : cov) {
      const auto k = w.table.column_index(name);
      if (w.table.observed(c.row, k))
        EXPECT_TRUE(std::binary_search(rows.masked_cells.begin(), rows.masked_cells.end(), Cell{c.row, k}));
    }
}

TEST(Mask, MismatchedPlanIsConsistencyError) {
  Rng rng(4);
  const auto w = generate_synthetic_window(SyntheticConfig{}, rng);
  MaskPlan p = make_mask_plan(w.table, 0.1, {"pH"}, 1);
  p.masked_cells.push_back({w.table.rows() + 5, 0});
  EXPECT_THROW(apply_mask(w.table, p), ConsistencyError);
}

TEST(Mask, IntervalPlanCoversIntervals) {
  Rng rng(5);
  const auto w = generate_synthetic_window(SyntheticConfig{}, rng);
  const MaskPlan p = make_interval_mask_plan(w.table, {{0.2, 0.3}}, {"lactate"});
  const auto c = w.table.column_index("lactate");
  for (Eigen::Index i = 0; i < w.table.rows(); ++i) {
    const bool inside = w.table.times[i] >= 0.2 && w.table.times[i] <= 0.3;
    const bool masked = std::binary_search(p.masked_cells.begin(), p.masked_cells.end(), Cell{i, c});
    EXPECT_EQ(masked, inside && w.table.observed(i, c));
  }
}

TEST(Synthetic, NoiselessLinearReadoutIsExact) {
  SyntheticConfig c;
  c.readout = Readout::Linear;
  c.noise_ph = c.noise_pco2 = c.noise_sid = c.noise_lactate = 0.0;
  c.sub_hourly_offsets = false;
  Rng rng(6);
  const auto w = generate_synthetic_window(c, rng);
  for (Eigen::Index i = 0; i < w.table.rows(); ++i) {
    if (!w.table.observed(i, 0)) continue;
    const double expected = synthetic_readout(c, w.latent(i, 0), w.latent(i, 1), w.latent(i, 2));
    EXPECT_NEAR(w.table.values(i, 0), expected, 1e-12);
    EXPECT_NEAR(expected, c.ph_base + c.ph_amplitude * (-c.weight_c * w.latent(i, 0) + c.weight_s * w.latent(i, 1) -
                                                       c.weight_l * w.latent(i, 2)),
                1e-12);
  }
}

TEST(Synthetic, ReadoutDirections) {
  const SyntheticConfig c;
  EXPECT_LT(synthetic_readout(c, 0.1, 0, 0), synthetic_readout(c, 0, 0, 0));
  EXPECT_GT(synthetic_readout(c, 0, 0.1, 0), synthetic_readout(c, 0, 0, 0));
  EXPECT_LT(synthetic_readout(c, 0, 0, 0.1), synthetic_readout(c, 0, 0, 0));
}

TEST(Synthetic, SameSeedSameWindow) {
  Rng a(7), b(7);
  const auto wa = generate_synthetic_window(SyntheticConfig{}, a);
  const auto wb = generate_synthetic_window(SyntheticConfig{}, b);
  EXPECT_EQ(wa.raw.hours, wb.raw.hours);
  EXPECT_TRUE((wa.table.observed == wb.table.observed).all());
  for (Eigen::Index i = 0; i < wa.table.rows(); ++i)
    for (Eigen::Index c = 0; c < wa.table.cols(); ++c)
      if (wa.table.observed(i, c)) EXPECT_EQ(wa.table.values(i, c), wb.table.values(i, c));
}

TEST(Synthetic, LengthsUniformOverRange) {
  const SyntheticConfig c;
  Rng rng(8);
  std::vector<int> counts(static_cast<std::size_t>(c.max_length - c.min_length + 1), 0);
  const int draws = 1000;
  double sum = 0.0;
  for (int k = 0; k < draws; ++k) {
    auto w = generate_synthetic_window(c, rng);
    const auto len = static_cast<int>(w.table.rows());
    ASSERT_GE(len, c.min_length);
    ASSERT_LE(len, c.max_length);
    sum += len;
    ++counts[static_cast<std::size_t>(len - c.min_length)];
  }
  // Mean of the discrete uniform and a coarse quartile check.
  const double mid = 0.5 * (c.min_length + c.max_length);
  const double sd = std::sqrt((std::pow(c.max_length - c.min_length + 1, 2) - 1) / 12.0 / draws);
  EXPECT_NEAR(sum / draws, mid, 4 * sd);
  int low = 0;
  for (int k = 0; k < static_cast<int>(counts.size()) / 4; ++k) low += counts[static_cast<std::size_t>(k)];
  EXPECT_NEAR(low / static_cast<double>(draws), 0.25, 0.05);
}

TEST(Synthetic, WrittenCsvReingests) {
  Rng rng(9);
  const auto w = generate_synthetic_window(SyntheticConfig{}, rng);
  std::ostringstream os;
  write_csv(w.raw, os);
  std::istringstream is(os.str());
  const RawTable back = parse_csv(is, {"time", synthetic_columns(), "pH"});
  EXPECT_EQ(back.hours, w.raw.hours);
  const ObservationTable t = discretise_hourly(back, "pH");
  EXPECT_TRUE((t.observed == w.table.observed).all());
}

TEST(Mae, Examples) {
  Eigen::MatrixXd truth(2, 2), est(2, 2);
  truth << 1.0, 2.0, 3.0, 4.0;
  est = truth;
  EXPECT_EQ(evaluate_mae(truth, est, {{0, 0}, {1, 1}}), 0.0);
  est(0, 0) = 0.6;
  EXPECT_NEAR(evaluate_mae(truth, est, {{0, 0}}), 0.4, 1e-15);
  est(0, 0) = 1.1;
  est(1, 1) = 3.7;
  EXPECT_NEAR(evaluate_mae(truth, est, {{0, 0}, {1, 1}}), 0.2, 1e-15);
  est(1, 1) = std::nan("");
  EXPECT_THROW(evaluate_mae(truth, est, {{0, 0}, {1, 1}}), IncompleteResultError);
}

TEST(Summary, StandardErrorAcrossWindows) {
  const MethodSummary s = summarise(Method::Gp, 0.1, {1.0, 2.0, 3.0});
  EXPECT_DOUBLE_EQ(s.mean_mae, 2.0);
  EXPECT_DOUBLE_EQ(s.standard_error, 1.0 / std::sqrt(3.0));
  EXPECT_EQ(s.windows, 3);
}
