#include "dgpsi/synthetic.hpp"

#include <cmath>
#include <limits>

#include "dgpsi/errors.hpp"
#include "dgpsi/kernel.hpp"

namespace dgpsi {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::VectorXd draw_se_path(const std::vector<double>& t, double lengthscale, Rng& rng) {
  const auto n = static_cast<Eigen::Index>(t.size());
  Eigen::MatrixXd K(n, n);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) {
      const double d = (t[static_cast<std::size_t>(i)] - t[static_cast<std::size_t>(j)]) / lengthscale;
      K(i, j) = std::exp(-d * d);
    }
  K.diagonal().array() += 1e-8;
  const Eigen::MatrixXd L = cholesky_with_jitter(K);
  Eigen::VectorXd z(n);
  for (Eigen::Index i = 0; i < n; ++i) z[i] = rng.normal();
  return L * z;
}

}  // namespace

void SyntheticConfig::validate() const {
  if (min_length < 1 || max_length < min_length)
    throw ContractViolation("SyntheticConfig: need 1 <= min_length <= max_length");
  if (!(panel_probability > 0.0 && panel_probability <= 1.0))
    throw ContractViolation("SyntheticConfig: panel_probability must lie in (0, 1]");
  if (!(lactate_dropout >= 0.0 && lactate_dropout < 1.0))
    throw ContractViolation("SyntheticConfig: lactate_dropout must lie in [0, 1)");
  if (!(lengthscale_c > 0.0 && lengthscale_s > 0.0 && lengthscale_l > 0.0))
    throw ContractViolation("SyntheticConfig: lengthscales must be positive");
  if (noise_ph < 0.0 || noise_pco2 < 0.0 || noise_sid < 0.0 || noise_lactate < 0.0)
    throw ContractViolation("SyntheticConfig: noise levels must be non-negative");
}

nlohmann::json synthetic_config_to_json(const SyntheticConfig& c) {
  return {{"min_length", c.min_length},       {"max_length", c.max_length},
          {"panel_probability", c.panel_probability},
          {"lactate_dropout", c.lactate_dropout},
          {"sub_hourly_offsets", c.sub_hourly_offsets},
          {"lengthscale_c", c.lengthscale_c}, {"lengthscale_s", c.lengthscale_s},
          {"lengthscale_l", c.lengthscale_l},
          {"readout", c.readout == Readout::Tanh ? "tanh" : "linear"},
          {"ph_base", c.ph_base},             {"ph_amplitude", c.ph_amplitude},
          {"weight_c", c.weight_c},           {"weight_s", c.weight_s},
          {"weight_l", c.weight_l},           {"noise_ph", c.noise_ph},
          {"noise_pco2", c.noise_pco2},       {"noise_sid", c.noise_sid},
          {"noise_lactate", c.noise_lactate}};
}

SyntheticConfig synthetic_config_from_json(const nlohmann::json& j, SyntheticConfig c) {
  c.min_length = j.value("min_length", c.min_length);
  c.max_length = j.value("max_length", c.max_length);
  c.panel_probability = j.value("panel_probability", c.panel_probability);
  c.lactate_dropout = j.value("lactate_dropout", c.lactate_dropout);
  c.sub_hourly_offsets = j.value("sub_hourly_offsets", c.sub_hourly_offsets);
  c.lengthscale_c = j.value("lengthscale_c", c.lengthscale_c);
  c.lengthscale_s = j.value("lengthscale_s", c.lengthscale_s);
  c.lengthscale_l = j.value("lengthscale_l", c.lengthscale_l);
  if (j.contains("readout")) {
    const auto r = j.at("readout").get<std::string>();
    if (r == "tanh")
      c.readout = Readout::Tanh;
    else if (r == "linear")
      c.readout = Readout::Linear;
    else
      throw SchemaError("unknown readout '" + r + "'");
  }
  c.ph_base = j.value("ph_base", c.ph_base);
  c.ph_amplitude = j.value("ph_amplitude", c.ph_amplitude);
  c.weight_c = j.value("weight_c", c.weight_c);
  c.weight_s = j.value("weight_s", c.weight_s);
  c.weight_l = j.value("weight_l", c.weight_l);
  c.noise_ph = j.value("noise_ph", c.noise_ph);
  c.noise_pco2 = j.value("noise_pco2", c.noise_pco2);
  c.noise_sid = j.value("noise_sid", c.noise_sid);
  c.noise_lactate = j.value("noise_lactate", c.noise_lactate);
  c.validate();
  return c;
}

const std::vector<std::string>& synthetic_columns() {
  static const std::vector<std::string> names{"pH", "pCO2", "SID", "lactate"};
  return names;
}

double synthetic_readout(const SyntheticConfig& config, double c, double s, double l) {
  const double z = -config.weight_c * c + config.weight_s * s - config.weight_l * l;
  return config.ph_base + config.ph_amplitude * (config.readout == Readout::Tanh ? std::tanh(z) : z);
}

SyntheticWindow generate_synthetic_window(const SyntheticConfig& config, Rng& rng) {
  config.validate();
  const int length = config.min_length +
                     static_cast<int>(rng.index(static_cast<std::uint64_t>(config.max_length - config.min_length + 1)));

  std::vector<double> times;
  std::vector<int> hour_of;
  for (int h = 0; h < length; ++h) {
    const bool forced = h == 0 || h == length - 1;
    const double u = rng.uniform();
    const double offset = config.sub_hourly_offsets ? 0.9 * rng.uniform() : 0.0;
    if (forced || u < config.panel_probability) {
      // The first panel sits on the hour so bucket 0 starts at admission.
      times.push_back(h + (h == 0 ? 0.0 : offset));
      hour_of.push_back(h);
    }
  }
  const Eigen::VectorXd c = draw_se_path(times, config.lengthscale_c, rng);
  const Eigen::VectorXd s = draw_se_path(times, config.lengthscale_s, rng);
  const Eigen::VectorXd l = draw_se_path(times, config.lengthscale_l, rng);

  const auto m = static_cast<Eigen::Index>(times.size());
  SyntheticWindow w;
  w.raw.names = synthetic_columns();
  w.raw.hours = times;
  w.raw.values.resize(m, 4);
  Eigen::MatrixXd clean(m, 4);
  for (Eigen::Index i = 0; i < m; ++i) {
    clean(i, 0) = synthetic_readout(config, c[i], s[i], l[i]);
    clean(i, 1) = 42.0 + 7.0 * c[i];
    clean(i, 2) = 36.0 + 3.0 * s[i];
    clean(i, 3) = 1.5 + 0.8 * l[i];
    w.raw.values(i, 0) = clean(i, 0) + config.noise_ph * rng.normal();
    w.raw.values(i, 1) = clean(i, 1) + config.noise_pco2 * rng.normal();
    w.raw.values(i, 2) = clean(i, 2) + config.noise_sid * rng.normal();
    const double lac = clean(i, 3) + config.noise_lactate * rng.normal();
    w.raw.values(i, 3) = rng.uniform() < config.lactate_dropout ? kNaN : lac;
  }
  // A column needs at least two observations to be standardised downstream.
  if (m >= 2 && (!w.raw.values.col(3).array().isNaN()).count() < 2) {
    w.raw.values(0, 3) = clean(0, 3);
    w.raw.values(m - 1, 3) = clean(m - 1, 3);
  }

  w.table = discretise_hourly(w.raw, "pH");
  const Eigen::Index rows = w.table.rows();
  w.latent = Eigen::MatrixXd::Constant(rows, 3, kNaN);
  w.noiseless = Eigen::MatrixXd::Constant(rows, 4, kNaN);
  for (Eigen::Index i = 0; i < m; ++i) {
    const auto b = static_cast<Eigen::Index>(hour_of[static_cast<std::size_t>(i)]);
    w.latent.row(b) << c[i], s[i], l[i];
    w.noiseless.row(b) = clean.row(i);
  }
  return w;
}

std::vector<SyntheticWindow> generate_synthetic_windows(const SyntheticConfig& config, int count,
                                                        std::uint64_t seed) {
  std::vector<SyntheticWindow> out;
  for (int w = 0; w < count; ++w) {
    Rng rng(derive_seed(seed, "synthetic.window", static_cast<std::uint64_t>(w)));
    out.push_back(generate_synthetic_window(config, rng));
  }
  return out;
}

}  // namespace dgpsi
