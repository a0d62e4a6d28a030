#pragma once

// Synthetic acid-base admission windows. Three smooth latent trajectories
// (CO2-like c, SID-like s, lactate-like l) are drawn from unit-variance SE
// GPs in hours; the output is
//
//     pH = ph_base + ph_amplitude * g(-w_c c + w_s s - w_l l) + noise
//
// with g = tanh or the identity. Covariates are affine maps of the latents
// plus noise, in clinical units.

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

#include "dgpsi/random.hpp"
#include "dgpsi/table.hpp"

namespace dgpsi {

enum class Readout { Tanh, Linear };

struct SyntheticConfig {
  int min_length = 19;  // hours
  int max_length = 115;
  double panel_probability = 0.75;  // chance that an hour has a blood-gas panel
  double lactate_dropout = 0.15;    // extra chance lactate is absent from a panel
  bool sub_hourly_offsets = true;   // measurement time jitter within the hour

  double lengthscale_c = 6.0;  // hours
  double lengthscale_s = 10.0;
  double lengthscale_l = 8.0;

  Readout readout = Readout::Tanh;
  double ph_base = 7.38;
  double ph_amplitude = 0.06;
  double weight_c = 0.9;
  double weight_s = 0.6;
  double weight_l = 0.5;

  double noise_ph = 0.004;
  double noise_pco2 = 0.8;
  double noise_sid = 0.4;
  double noise_lactate = 0.08;

  void validate() const;
};

nlohmann::json synthetic_config_to_json(const SyntheticConfig& c);
SyntheticConfig synthetic_config_from_json(const nlohmann::json& j, SyntheticConfig base = {});

/// Column order of generated tables.
const std::vector<std::string>& synthetic_columns();  // pH, pCO2, SID, lactate

double synthetic_readout(const SyntheticConfig& config, double c, double s, double l);

struct SyntheticWindow {
  RawTable raw;              // one row per panel, hours from admission
  ObservationTable table;    // hourly grid, original units; the evaluation truth
  Eigen::MatrixXd latent;    // table rows x 3 (c, s, l) at each bucket's panel; NaN without a panel
  Eigen::MatrixXd noiseless; // table rows x 4 noise-free column values; NaN without a panel
};

SyntheticWindow generate_synthetic_window(const SyntheticConfig& config, Rng& rng);

/// Window w uses the stream derive_seed(seed, "synthetic.window", w).
std::vector<SyntheticWindow> generate_synthetic_windows(const SyntheticConfig& config, int count,
                                                        std::uint64_t seed);

}  // namespace dgpsi
