#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "dgpsi/dgp_si.hpp"
#include "dgpsi/errors.hpp"
#include "oracles.hpp"

using namespace dgpsi;

namespace {

LayerArchitecture arch_for(int P) {
  LayerArchitecture a;
  a.input_dims = 1;
  for (int p = 0; p < P; ++p) a.latent_nodes.push_back({"w" + std::to_string(p), KernelFamily::SquaredExponential});
  a.output_node = {"y", KernelFamily::SquaredExponential};
  return a;
}

SEMConfig quick_sem(std::uint64_t seed) {
  SEMConfig c;
  c.iterations = 30;
  c.burn_in = 15;
  c.ess_sweeps = 3;
  c.imputations = 8;
  c.imputation_sweeps = 3;
  c.mstep_iterations = 5;
  c.seed = seed;
  return c;
}

// Two smooth latents and a nonlinear output on N time points.
SemData two_layer_data(int N, double missing, Rng& rng) {
  SemData d;
  d.X.resize(N, 1);
  d.latent.resize(N, 2);
  d.y.resize(N);
  d.observed = BoolMatrix::Constant(N, 2, true);
  const double ph = rng.uniform(0.0, 3.0);
  for (int i = 0; i < N; ++i) {
    const double t = i / (N - 1.0);
    d.X(i, 0) = t;
    d.latent(i, 0) = std::sin(5.0 * t + ph) + 0.03 * rng.normal();
    d.latent(i, 1) = std::cos(3.0 * t - ph) + 0.03 * rng.normal();
    d.y[i] = std::tanh(1.2 * d.latent(i, 0) - 0.8 * d.latent(i, 1)) + 0.02 * rng.normal();
  }
  for (int p = 0; p < 2; ++p)
    for (int i = 1; i < N - 1; ++i)
      if (rng.uniform() < missing) d.observed(i, p) = false;
  return d;
}

}  // namespace

TEST(MixComponents, SingleComponentIsIdentity) {
  const PredictiveGaussian c{0.37, 0.12, false};
  const auto m = mix_components(std::vector<PredictiveGaussian>{c});
  EXPECT_EQ(m.mean, c.mean);
  EXPECT_EQ(m.variance, c.variance);
}

TEST(MixComponents, SymmetricPairAddsSpread) {
  const double a = 0.8, v = 0.3;
  const auto m = mix_components(std::vector<PredictiveGaussian>{{a, v, false}, {-a, v, false}});
  EXPECT_NEAR(m.mean, 0.0, 1e-15);
  EXPECT_NEAR(m.variance, v + a * a, 1e-15);
}

TEST(MixComponents, EmptyIsContractViolation) {
  EXPECT_THROW(mix_components(std::vector<PredictiveGaussian>{}), ContractViolation);
}

TEST(LatentSampler, DecoupledOutputGivesConditionalPrior) {
  // One missing cell in column 0; the output ignores column 0 (huge
  // lengthscale), so draws follow the first-layer conditional Gaussian.
  const int N = 8;
  SemData d;
  d.X.resize(N, 1);
  d.latent.resize(N, 2);
  d.y.resize(N);
  d.observed = BoolMatrix::Constant(N, 2, true);
  for (int i = 0; i < N; ++i) {
    d.X(i, 0) = i / (N - 1.0);
    d.latent(i, 0) = std::sin(3 * d.X(i, 0));
    d.latent(i, 1) = std::cos(2 * d.X(i, 0));
    d.y[i] = d.latent(i, 1);
  }
  d.observed(3, 0) = false;
  d.latent(3, 0) = 0.0;
  const GPHyperparams h0{{KernelFamily::SquaredExponential, Eigen::VectorXd::Constant(1, 0.3)}, 0.8, 0.01};
  Eigen::VectorXd ls2(2);
  ls2 << 1e8, 0.7;
  const GPHyperparams h2{{KernelFamily::SquaredExponential, ls2}, 1.0, 0.01};

  // Conditional Gaussian of cell 3 given the other cells of column 0.
  const Eigen::MatrixXd K = h0.scale * build_correlation(h0.kernel, h0.nugget, d.X).values();
  std::vector<int> o;
  for (int i = 0; i < N; ++i)
    if (i != 3) o.push_back(i);
  Eigen::MatrixXd Koo(N - 1, N - 1);
  Eigen::VectorXd kmo(N - 1), wo(N - 1);
  for (int a = 0; a < N - 1; ++a) {
    kmo[a] = K(3, o[static_cast<std::size_t>(a)]);
    wo[a] = d.latent(o[static_cast<std::size_t>(a)], 0);
    for (int b = 0; b < N - 1; ++b) Koo(a, b) = K(o[static_cast<std::size_t>(a)], o[static_cast<std::size_t>(b)]);
  }
  const Eigen::VectorXd sol = Koo.ldlt().solve(kmo);
  const double cmean = sol.dot(wo);
  const double cvar = K(3, 3) - sol.dot(kmo);

  LatentSampler sampler(d, {h0, h0}, h2);
  Rng rng(1);
  oracle::Moments m;
  for (int i = 0; i < 200; ++i) sampler.sweep(rng);
  for (int i = 0; i < 20000; ++i) {
    for (int k = 0; k < 3; ++k) sampler.update_column(0, rng);
    m.add(sampler.values()(3, 0));
  }
  EXPECT_NEAR(m.mean, cmean, 0.03 * std::max(std::abs(cmean), std::sqrt(cvar)));
  EXPECT_NEAR(m.variance(), cvar, 0.03 * cvar);
}

TEST(LatentSampler, ObservedEntriesNeverChange) {
  Rng rng(2);
  const SemData d = two_layer_data(20, 0.3, rng);
  SemData start = d;
  for (int p = 0; p < 2; ++p)
    for (int i = 0; i < 20; ++i)
      if (!d.observed(i, p)) start.latent(i, p) = 0.0;
  const GPHyperparams h{{KernelFamily::SquaredExponential, Eigen::VectorXd::Constant(1, 0.2)}, 1.0, 0.01};
  GPHyperparams h2{{KernelFamily::SquaredExponential, Eigen::VectorXd::Constant(2, 1.0)}, 1.0, 0.01};
  LatentSampler s(start, {h, h}, h2);
  Rng r(3);
  Eigen::MatrixXd first;
  for (int it = 0; it < 30; ++it) {
    const LayerImputation imp = impute_latents(s, r, it);
    if (it == 0) first = imp.values;
    for (int p = 0; p < 2; ++p)
      for (int i = 0; i < 20; ++i)
        if (d.observed(i, p)) EXPECT_EQ(imp.values(i, p), d.latent(i, p));
    EXPECT_EQ(imp.draw_index, it);
  }
  EXPECT_NE((s.values() - first).norm(), 0.0);
}

TEST(LatentSampler, NoFreeCellsLeavesLikelihoodUntouched) {
  Rng rng(4);
  const SemData d = two_layer_data(12, 0.0, rng);
  const GPHyperparams h{{KernelFamily::SquaredExponential, Eigen::VectorXd::Constant(1, 0.2)}, 1.0, 0.01};
  GPHyperparams h2{{KernelFamily::SquaredExponential, Eigen::VectorXd::Constant(2, 1.0)}, 1.0, 0.01};
  LatentSampler s(d, {h, h}, h2);
  Rng r(5);
  const LayerImputation imp = impute_latents(s, r);
  EXPECT_EQ(imp.values, d.latent);
  EXPECT_EQ(s.likelihood_evaluations(), 0);
}

TEST(TrainSem, FullyObservedReducesToDirectFits) {
  Rng rng(6);
  const SemData d = two_layer_data(18, 0.0, rng);
  const auto arch = arch_for(2);
  const SEMConfig c = quick_sem(42);
  const DGPSIEmulator em = train_sem(d, arch, c);
  for (std::size_t p = 0; p < 2; ++p) {
    const FittedGP direct = fit_gp(d.X, d.latent.col(static_cast<Eigen::Index>(p)), sem_node_fit_config(c, arch, p));
    EXPECT_EQ(em.hyperparams()[p].kernel.lengthscales, direct.hyper().kernel.lengthscales);
    EXPECT_EQ(em.hyperparams()[p].scale, direct.hyper().scale);
    EXPECT_EQ(em.hyperparams()[p].nugget, direct.hyper().nugget);
  }
  const FittedGP out = fit_gp(d.latent, d.y, sem_node_fit_config(c, arch, 2));
  EXPECT_EQ(em.hyperparams()[2].kernel.lengthscales, out.hyper().kernel.lengthscales);
  EXPECT_EQ(em.hyperparams()[2].scale, out.hyper().scale);
  EXPECT_EQ(em.diagnostics.free_cells, 0u);
}

TEST(TrainSem, EmulatorInvariantsAndDeterminism) {
  Rng rng(7);
  const SemData d = two_layer_data(20, 0.25, rng);
  const auto arch = arch_for(2);
  const DGPSIEmulator a = train_sem(d, arch, quick_sem(3));
  const DGPSIEmulator b = train_sem(d, arch, quick_sem(3));
  EXPECT_EQ(dgp_manifest(a).dump(), dgp_manifest(b).dump());
  ASSERT_EQ(a.size(), 8u);
  ASSERT_EQ(a.linked().size(), 8u);
  bool varies = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a.linked()[i].latent_values(), a.imputations()[i].values);
    if (i > 0 && a.imputations()[i].values != a.imputations()[0].values) varies = true;
    for (int p = 0; p < 2; ++p)
      for (int r = 0; r < 20; ++r)
        if (d.observed(r, p)) EXPECT_EQ(a.imputations()[i].values(r, p), d.latent(r, p));
  }
  EXPECT_TRUE(varies);
}

TEST(TrainSem, ThreadCountDoesNotChangeResults) {
  Rng rng(8);
  const SemData d = two_layer_data(16, 0.25, rng);
  SEMConfig c1 = quick_sem(9), c4 = quick_sem(9);
  c4.threads = 4;
  const DGPSIEmulator a = train_sem(d, arch_for(2), c1);
  const DGPSIEmulator b = train_sem(d, arch_for(2), c4);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.imputations()[i].values, b.imputations()[i].values);
}

TEST(TrainSem, TooFewObservedLatentCellsIsSemError) {
  Rng rng(9);
  SemData d = two_layer_data(10, 0.0, rng);
  d.observed.col(1).setConstant(false);
  d.observed(0, 1) = true;
  try {
    train_sem(d, arch_for(2), quick_sem(1));
    FAIL() << "expected SemError";
  } catch (const SemError& e) {
    EXPECT_EQ(e.node(), "w1");
  }
}

TEST(PredictEnsemble, MixtureIdentitiesHold) {
  Rng rng(10);
  const SemData d = two_layer_data(20, 0.3, rng);
  const DGPSIEmulator em = train_sem(d, arch_for(2), quick_sem(11));
  for (double t : {0.05, 0.33, 0.71, 1.2}) {
    const auto e = predict_ensemble(em, Eigen::VectorXd::Constant(1, t));
    ASSERT_EQ(e.components.size(), em.size());
    double mean = 0.0, second = 0.0;
    for (const auto& c : e.components) {
      mean += c.mean;
      second += c.mean * c.mean + c.variance;
    }
    mean /= static_cast<double>(em.size());
    second /= static_cast<double>(em.size());
    EXPECT_NEAR(e.mixture.mean, mean, 1e-12);
    EXPECT_NEAR(e.mixture.variance, second - mean * mean, 1e-12);
  }
}

TEST(ImputeCovariates, ObservedCellReproducedWithinNuggetScale) {
  Rng rng(12);
  const SemData d = two_layer_data(20, 0.3, rng);
  const DGPSIEmulator em = train_sem(d, arch_for(2), quick_sem(13));
  for (int i = 0; i < 20; ++i) {
    if (!d.observed(i, 0)) continue;
    Eigen::MatrixXd q(1, 1);
    q(0, 0) = d.X(i, 0);
    const auto e = impute_covariates(em, q, "w0").front();
    const auto& h = em.hyperparams()[0];
    EXPECT_NEAR(e.mixture.mean, d.latent(i, 0), 3 * std::sqrt(h.scale * h.nugget) + 1e-9);
  }
  EXPECT_THROW(impute_covariates(em, Eigen::MatrixXd::Zero(1, 1), "missing"), LookupError);
}

TEST(TrainSem, MoreImputationsStabiliseMixtureMean) {
  Rng rng(14);
  const SemData d = two_layer_data(16, 0.35, rng);
  auto spread = [&](int nimp) {
    oracle::Moments m;
    for (std::uint64_t s = 0; s < 10; ++s) {
      SEMConfig c = quick_sem(100 + s);
      c.imputations = nimp;
      const DGPSIEmulator em = train_sem(d, arch_for(2), c);
      m.add(predict_ensemble(em, Eigen::VectorXd::Constant(1, 0.5)).mixture.mean);
    }
    return m.variance();
  };
  EXPECT_LE(spread(50), spread(5));
}

TEST(TrainSem, ZeroMaskingCoversTrainingOutputs) {
  Rng rng(15);
  const SemData d = two_layer_data(20, 0.0, rng);
  const DGPSIEmulator em = train_sem(d, arch_for(2), quick_sem(16));
  int inside = 0;
  for (int i = 0; i < 20; ++i) {
    const auto e = predict_ensemble(em, d.X.row(i).transpose()).mixture;
    if (std::abs(e.mean - d.y[i]) <= 3 * std::sqrt(e.variance) + 1e-12) ++inside;
  }
  EXPECT_GE(inside, 19);
}

TEST(TrainSem, BeatsCompleteCaseLgpOnHeldOutLatents) {
  int wins = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(500 + seed);
    SemData d = two_layer_data(30, 0.0, rng);
    const Eigen::MatrixXd truth = d.latent;
    // Mask 20% of each latent column, keeping the endpoints.
    for (int p = 0; p < 2; ++p) {
      int masked = 0;
      while (masked < 6) {
        const auto i = static_cast<Eigen::Index>(1 + rng.index(28));
        if (d.observed(i, p)) {
          d.observed(i, p) = false;
          d.latent(i, p) = 0.0;
          ++masked;
        }
      }
    }
    SEMConfig c;
    c.seed = seed;
    const DGPSIEmulator em = train_sem(d, arch_for(2), c);
    const LinkedEmulator lgp =
        fit_sequential_lgp(d.X, d.latent, d.observed, d.y, BoolVector::Constant(30, true), arch_for(2), c.fit);
    double dgp_err = 0.0, lgp_err = 0.0;
    for (int p = 0; p < 2; ++p)
      for (int i = 0; i < 30; ++i) {
        if (d.observed(i, p)) continue;
        Eigen::MatrixXd q(1, 1);
        q(0, 0) = d.X(i, 0);
        dgp_err += std::abs(impute_covariates(em, q, "w" + std::to_string(p)).front().mixture.mean - truth(i, p));
        lgp_err += std::abs(lgp.first_layer()[static_cast<std::size_t>(p)].predict(q.row(0).transpose()).mean - truth(i, p));
      }
    if (dgp_err <= lgp_err) ++wins;
  }
  EXPECT_GE(wins, 7);
}

TEST(Serialisation, SaveLoadRoundTrip) {
  Rng rng(17);
  const SemData d = two_layer_data(15, 0.3, rng);
  const DGPSIEmulator em = train_sem(d, arch_for(2), quick_sem(18));
  const auto dir = std::filesystem::temp_directory_path() / "dgpsi_test_emulator";
  std::filesystem::remove_all(dir);
  save_emulator(em, dir);
  const DGPSIEmulator back = load_emulator(dir);
  EXPECT_EQ(back.size(), em.size());
  for (std::size_t i = 0; i < em.size(); ++i) EXPECT_EQ(back.imputations()[i].values, em.imputations()[i].values);
  for (double t : {0.2, 0.8}) {
    const auto a = predict_ensemble(em, Eigen::VectorXd::Constant(1, t)).mixture;
    const auto b = predict_ensemble(back, Eigen::VectorXd::Constant(1, t)).mixture;
    EXPECT_EQ(a.mean, b.mean);
    EXPECT_EQ(a.variance, b.variance);
  }
  std::filesystem::remove_all(dir);
}

TEST(SemConfig, Validation) {
  SEMConfig c;
  c.burn_in = c.iterations + 1;
  EXPECT_THROW(c.validate(), ContractViolation);
  c = SEMConfig{};
  c.imputations = 0;
  EXPECT_THROW(c.validate(), ContractViolation);
  const SEMConfig round = sem_config_from_json(sem_config_to_json(quick_sem(5)));
  EXPECT_EQ(round.iterations, 30);
  EXPECT_EQ(round.seed, 5u);
}

TEST(LatentSampler, DecoupledLayerMatchesSingleGpInterpolation) {
  Rng rng(19);
  SemData d = two_layer_data(25, 0.0, rng);
  const Eigen::MatrixXd truth = d.latent;
  std::vector<int> hidden{4, 5, 11, 17, 18, 20};
  for (int i : hidden) {
    d.observed(i, 0) = false;
    d.latent(i, 0) = 0.0;
  }
  const GPHyperparams h0{{KernelFamily::SquaredExponential, Eigen::VectorXd::Constant(1, 0.15)}, 0.6, 1e-3};
  const GPHyperparams h2{{KernelFamily::SquaredExponential, Eigen::VectorXd::Constant(2, 1e8)}, 1.0, 0.01};
  LatentSampler s(d, {h0, h0}, h2);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(25);
  const int draws = 2000;
  for (int k = 0; k < draws; ++k) {
    s.update_column(0, rng);
    mean += s.values().col(0);
  }
  mean /= draws;

  std::vector<Eigen::Index> obs;
  for (Eigen::Index i = 0; i < 25; ++i)
    if (d.observed(i, 0)) obs.push_back(i);
  Eigen::MatrixXd Xo(static_cast<Eigen::Index>(obs.size()), 1);
  Eigen::VectorXd yo(static_cast<Eigen::Index>(obs.size()));
  for (std::size_t k = 0; k < obs.size(); ++k) {
    Xo(static_cast<Eigen::Index>(k), 0) = d.X(obs[k], 0);
    yo[static_cast<Eigen::Index>(k)] = d.latent(obs[k], 0);
  }
  const FittedGP single({Xo, yo}, h0);
  double mae_ess = 0.0, mae_gp = 0.0;
  for (int i : hidden) {
    mae_ess += std::abs(mean[i] - truth(i, 0));
    mae_gp += std::abs(single.predict(d.X.row(i).transpose()).mean - truth(i, 0));
  }
  EXPECT_LE(std::abs(mae_ess - mae_gp), 0.05 * mae_gp);
}
