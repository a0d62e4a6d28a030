#include "dgpsi/baselines.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>

#include "dgpsi/errors.hpp"
#include "dgpsi/random.hpp"

namespace dgpsi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd untouched_variance(const ObservationTable& t) {
  return Eigen::MatrixXd::Constant(t.rows(), t.cols(), kNaN);
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::Locf: return "locf";
    case Method::Mice: return "mice";
    case Method::Gp: return "gp";
    case Method::Lgp: return "lgp";
    case Method::Dgp: return "dgp";
  }
  return "?";
}

Method method_from_string(std::string_view name) {
  for (Method m : {Method::Locf, Method::Mice, Method::Gp, Method::Lgp, Method::Dgp})
    if (to_string(m) == name) return m;
  throw LookupError("unknown method '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------

ImputationMethodResult locf_impute(const ObservationTable& table, const std::vector<std::string>& variables) {
  ImputationMethodResult out{table, std::nullopt, Method::Locf, {}};
  for (const auto& name : variables) {
    const Eigen::Index c = table.column_index(name);
    Eigen::Index first = -1;
    for (Eigen::Index i = 0; i < table.rows(); ++i)
      if (table.observed(i, c)) {
        first = i;
        break;
      }
    if (first < 0) throw EmptyColumnError("locf: column '" + name + "' has no observed values");
    double last = table.values(first, c);
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
      if (table.observed(i, c))
        last = table.values(i, c);
      else
        out.filled.values(i, c) = last;
    }
  }
  out.metadata["leading_gap"] = "backfill";
  return out;
}

ImputationMethodResult locf_impute(const ObservationTable& table, const std::string& variable) {
  return locf_impute(table, std::vector<std::string>{variable});
}

// ---------------------------------------------------------------------------

void MiceConfig::validate() const {
  if (imputations < 1) throw ContractViolation("MiceConfig: imputations must be >= 1");
  if (cycles < 1) throw ContractViolation("MiceConfig: cycles must be >= 1");
}

namespace {

struct RegressionDraw {
  Eigen::VectorXd beta;
  double sigma = 0.0;
  bool ridge = false;
};

// Posterior draw of (beta, sigma) under a flat prior for y ~ N(X beta, sigma^2).
RegressionDraw draw_regression(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, Rng& rng) {
  const Eigen::Index n = X.rows(), k = X.cols();
  Eigen::MatrixXd XtX = X.transpose() * X;
  RegressionDraw d;
  Eigen::LLT<Eigen::MatrixXd> llt(XtX);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-12) {
    const double lambda = 1e-5 * std::max(XtX.trace() / static_cast<double>(k), 1e-12);
    XtX.diagonal().array() += lambda;
    llt.compute(XtX);
    d.ridge = true;
  }
  const Eigen::VectorXd beta_hat = llt.solve(X.transpose() * y);
  const double rss = (y - X * beta_hat).squaredNorm();
  const int dof = static_cast<int>(std::max<Eigen::Index>(n - k, 1));
  const double chi = std::max(rng.chi_square(dof), 1e-12);
  d.sigma = std::sqrt(std::max(rss, 1e-300) / chi);
  // beta* = beta_hat + sigma * L^{-T} z, where XtX = L L^T.
  Eigen::VectorXd z(k);
  for (Eigen::Index i = 0; i < k; ++i) z[i] = rng.normal();
  const Eigen::MatrixXd L = llt.matrixL();
  d.beta = beta_hat + d.sigma * L.transpose().triangularView<Eigen::Upper>().solve(z);
  return d;
}

}  // namespace

ImputationMethodResult mice_impute(const ObservationTable& table, const MiceConfig& config) {
  config.validate();
  std::vector<Eigen::Index> cols;
  if (config.columns.empty()) {
    for (Eigen::Index c = 0; c < table.cols(); ++c) cols.push_back(c);
  } else {
    for (const auto& name : config.columns) cols.push_back(table.column_index(name));
  }
  const Eigen::Index n = table.rows();
  const auto V = static_cast<Eigen::Index>(cols.size());
  const Eigen::Index offset = config.include_time ? 1 : 0;
  const Eigen::Index width = V + offset;
  if (width < 2) throw ContractViolation("mice: need at least two columns");

  ImputationMethodResult out{table, untouched_variance(table), Method::Mice, {}};
  for (Eigen::Index v = 0; v < V; ++v)
    for (Eigen::Index i = 0; i < n; ++i)
      if (table.observed(i, cols[static_cast<std::size_t>(v)])) (*out.variance)(i, cols[static_cast<std::size_t>(v)]) = 0.0;

  long missing = 0;
  for (Eigen::Index v = 0; v < V; ++v) {
    const Eigen::Index c = cols[static_cast<std::size_t>(v)];
    const Eigen::Index obs = table.observed_count(c);
    if (obs < 3) throw ContractViolation("mice: column '" + table.names[static_cast<std::size_t>(c)] + "' needs >= 3 observed values");
    missing += n - obs;
  }
  out.metadata = {{"m", config.imputations}, {"cycles", config.cycles}, {"include_time", config.include_time}};
  if (missing == 0) {
    out.metadata["cycles_run"] = 0;
    out.metadata["ridge_fallbacks"] = 0;
    return out;
  }

  // Working matrix: [time?] then the selected columns, in table order.
  Eigen::MatrixXd base(n, width);
  BoolMatrix obs(n, width);
  if (config.include_time) {
    base.col(0) = table.times;
    obs.col(0).setConstant(true);
  }
  for (Eigen::Index v = 0; v < V; ++v) {
    const Eigen::Index c = cols[static_cast<std::size_t>(v)];
    double mean = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (table.observed(i, c)) mean += table.values(i, c);
    mean /= static_cast<double>(table.observed_count(c));
    for (Eigen::Index i = 0; i < n; ++i) {
      obs(i, v + offset) = table.observed(i, c);
      base(i, v + offset) = table.observed(i, c) ? table.values(i, c) : mean;
    }
  }

  long ridge_fallbacks = 0;
  Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(n, width), sum_sq = Eigen::MatrixXd::Zero(n, width);
  for (int m = 0; m < config.imputations; ++m) {
    Rng rng(derive_seed(config.seed, "mice.imputation", static_cast<std::uint64_t>(m)));
    Eigen::MatrixXd Z = base;
    for (int cycle = 0; cycle < config.cycles; ++cycle) {
      for (Eigen::Index j = offset; j < width; ++j) {
        const Eigen::Index n_obs = obs.col(j).count();
        if (n_obs == n) continue;
        Eigen::MatrixXd Xo(n_obs, width), Xm(n - n_obs, width);
        Eigen::VectorXd yo(n_obs);
        Eigen::Index a = 0, b = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
          Eigen::RowVectorXd row(width);
          row[0] = 1.0;
          Eigen::Index k = 1;
          for (Eigen::Index q = 0; q < width; ++q)
            if (q != j) row[k++] = Z(i, q);
          if (obs(i, j)) {
            Xo.row(a) = row;
            yo[a++] = Z(i, j);
          } else {
            Xm.row(b++) = row;
          }
        }
        const RegressionDraw d = draw_regression(Xo, yo, rng);
        if (d.ridge) ++ridge_fallbacks;
        b = 0;
        for (Eigen::Index i = 0; i < n; ++i)
          if (!obs(i, j)) Z(i, j) = Xm.row(b++).dot(d.beta) + d.sigma * rng.normal();
      }
    }
    sum += Z;
    sum_sq += Z.cwiseProduct(Z);
  }

  const double m = static_cast<double>(config.imputations);
  for (Eigen::Index v = 0; v < V; ++v) {
    const Eigen::Index c = cols[static_cast<std::size_t>(v)];
    for (Eigen::Index i = 0; i < n; ++i) {
      if (table.observed(i, c)) continue;
      const double mean = sum(i, v + offset) / m;
      out.filled.values(i, c) = mean;
      const double var = config.imputations > 1 ? (sum_sq(i, v + offset) - m * mean * mean) / (m - 1.0) : 0.0;
      (*out.variance)(i, c) = std::max(var, 0.0);
    }
  }
  out.metadata["cycles_run"] = config.cycles;
  out.metadata["ridge_fallbacks"] = ridge_fallbacks;
  return out;
}

// ---------------------------------------------------------------------------

ImputationMethodResult independent_gp_impute(const ObservationTable& table,
                                             const std::vector<std::string>& variables, const FitConfig& config) {
  ImputationMethodResult out{table, untouched_variance(table), Method::Gp, {}};
  nlohmann::json fits = nlohmann::json::object();
  for (std::size_t v = 0; v < variables.size(); ++v) {
    const Eigen::Index c = table.column_index(variables[v]);
    std::vector<Eigen::Index> rows;
    for (Eigen::Index i = 0; i < table.rows(); ++i)
      if (table.observed(i, c)) rows.push_back(i);
    if (rows.size() < 2) throw ContractViolation("gp: column '" + variables[v] + "' needs >= 2 observed values");
    Eigen::MatrixXd X(static_cast<Eigen::Index>(rows.size()), 1);
    Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t k = 0; k < rows.size(); ++k) {
      X(static_cast<Eigen::Index>(k), 0) = table.times[rows[k]];
      y[static_cast<Eigen::Index>(k)] = table.values(rows[k], c);
    }
    FitConfig cfg = config;
    cfg.seed = derive_seed(config.seed, "gp.column", v);
    const FittedGP gp = fit_gp(X, y, cfg);
    for (Eigen::Index i = 0; i < table.rows(); ++i) {
      if (table.observed(i, c)) {
        (*out.variance)(i, c) = 0.0;
        continue;
      }
      Eigen::VectorXd x0(1);
      x0[0] = table.times[i];
      const PredictiveGaussian p = gp.predict(x0);
      out.filled.values(i, c) = p.mean;
      (*out.variance)(i, c) = p.variance;
    }
    fits[variables[v]] = {{"lengthscale", gp.hyper().kernel.lengthscales[0]},
                          {"scale", gp.hyper().scale},
                          {"nugget", gp.hyper().nugget},
                          {"training_size", rows.size()}};
  }
  out.metadata["fits"] = fits;
  return out;
}

ImputationMethodResult independent_gp_impute(const ObservationTable& table, const std::string& variable,
                                             const FitConfig& config) {
  return independent_gp_impute(table, std::vector<std::string>{variable}, config);
}

}  // namespace dgpsi
