#include <gtest/gtest.h>

#include <cmath>

#include "dgpsi/errors.hpp"
#include "dgpsi/linked_gp.hpp"
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

GPHyperparams hyper(const Eigen::VectorXd& ls, double scale, double nugget) {
  return {{KernelFamily::SquaredExponential, ls}, scale, nugget};
}

// Random two-layer system with N training rows and P latents; latent
// values come from smooth functions of the input so the system is sensible.
LinkedEmulator random_system(int N, int P, Rng& rng) {
  Eigen::MatrixXd X(N, 1);
  for (int i = 0; i < N; ++i) X(i, 0) = (i + rng.uniform(0.0, 0.8)) / N;
  Eigen::MatrixXd W(N, P);
  std::vector<FittedGP> first;
  for (int p = 0; p < P; ++p) {
    const double a = rng.uniform(1.0, 4.0), b = rng.uniform(0.0, 3.0);
    for (int i = 0; i < N; ++i) W(i, p) = std::sin(a * X(i, 0) + b) + 0.05 * rng.normal();
    first.emplace_back(TrainingSet{X, W.col(p)},
                       hyper(Eigen::VectorXd::Constant(1, rng.uniform(0.15, 0.5)), rng.uniform(0.3, 1.5),
                             rng.uniform(1e-3, 0.05)));
  }
  Eigen::VectorXd y(N);
  for (int i = 0; i < N; ++i) y[i] = std::tanh(W.row(i).sum()) + 0.02 * rng.normal();
  const Eigen::VectorXd ls = oracle::uniform_matrix(P, 1, 0.5, 2.0, rng).col(0);
  FittedGP second({W, y}, hyper(ls, rng.uniform(0.5, 1.5), rng.uniform(1e-3, 0.05)));
  return LinkedEmulator(arch_for(P), std::move(first), std::move(second));
}

}  // namespace

TEST(LinkPredict, DegenerateLatentsCollapseToPlugIn) {
  Rng rng(1);
  const LinkedEmulator em = random_system(10, 2, rng);
  std::vector<PredictiveGaussian> preds(2);
  Eigen::VectorXd m(2);
  m << 0.3, -0.2;
  for (int p = 0; p < 2; ++p) preds[static_cast<std::size_t>(p)] = {m[p], 0.0, false};
  const auto linked = em.linked_second_layer().propagate(preds);
  const auto direct = em.second_layer().predict(m);
  EXPECT_NEAR(linked.mean, direct.mean, 1e-10);
  EXPECT_NEAR(linked.variance, direct.variance, 1e-10);
}

TEST(LinkPredict, DegenerateLimitIsMonotone) {
  Rng rng(2);
  const LinkedEmulator em = random_system(12, 2, rng);
  std::vector<double> sup;
  for (double v : {1e-2, 1e-4, 1e-6}) {
    Rng xs(3);
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      Eigen::VectorXd m(2);
      m << xs.uniform(-1, 1), xs.uniform(-1, 1);
      std::vector<PredictiveGaussian> preds{{m[0], v, false}, {m[1], v, false}};
      const auto a = em.linked_second_layer().propagate(preds);
      const auto b = em.second_layer().predict(m);
      worst = std::max({worst, std::abs(a.mean - b.mean), std::abs(a.variance - b.variance)});
    }
    sup.push_back(worst);
  }
  EXPECT_GT(sup[0], sup[1]);
  EXPECT_GT(sup[1], sup[2]);
  EXPECT_LT(sup[2], 1e-4);
}

TEST(LinkPredict, SingleTrainingPointHandCase) {
  const double w1 = 0.4, y1 = 1.7, eta = 0.2, l = 0.9, m = 0.1, v = 0.3;
  LayerArchitecture a = arch_for(1);
  std::vector<FittedGP> first{FittedGP({Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Constant(1, w1)},
                                       hyper(Eigen::VectorXd::Constant(1, 1.0), 1.0, 0.0))};
  FittedGP second({Eigen::MatrixXd::Constant(1, 1, w1), Eigen::VectorXd::Constant(1, y1)},
                  hyper(Eigen::VectorXd::Constant(1, l), 1.0, eta));
  const LinkedEmulator em(a, std::move(first), std::move(second));
  std::vector<PredictiveGaussian> preds{{m, v, false}};
  const auto out = em.linked_second_layer().propagate(preds);
  EXPECT_NEAR(out.mean, expect_k(KernelFamily::SquaredExponential, l, m, v, w1) * y1 / (1 + eta), 1e-14);
}

TEST(AssembleI, DeltaEqualsKernelRowAndFactorises) {
  Rng rng(4);
  const LinkedEmulator em = random_system(9, 2, rng);
  Eigen::VectorXd m(2);
  m << 0.2, -0.5;
  std::vector<PredictiveGaussian> delta{{m[0], 0.0, false}, {m[1], 0.0, false}};
  const Eigen::VectorXd I0 = assemble_I(em, delta);
  const Eigen::VectorXd r = kernel_row(em.second_layer().hyper().kernel, em.latent_values(), m);
  EXPECT_LE((I0 - r).cwiseAbs().maxCoeff(), 1e-14);

  std::vector<PredictiveGaussian> preds{{0.2, 0.3, false}, {-0.5, 0.1, false}};
  const Eigen::VectorXd I = assemble_I(em, preds);
  const auto& ls = em.second_layer().hyper().kernel.lengthscales;
  for (Eigen::Index i = 0; i < I.size(); ++i) {
    const double f0 = expect_k(KernelFamily::SquaredExponential, ls[0], 0.2, 0.3, em.latent_values()(i, 0));
    const double f1 = expect_k(KernelFamily::SquaredExponential, ls[1], -0.5, 0.1, em.latent_values()(i, 1));
    EXPECT_NEAR(I[i], f0 * f1, 1e-15);
    EXPECT_GT(I[i], 0.0);
    EXPECT_LE(I[i], 1.0);
  }
}

TEST(AssembleJ, SymmetricJensenAndDeltaOuterProduct) {
  Rng rng(5);
  const LinkedEmulator em = random_system(9, 3, rng);
  std::vector<PredictiveGaussian> preds{{0.2, 0.3, false}, {-0.5, 0.1, false}, {0.0, 0.6, false}};
  const Eigen::MatrixXd J = assemble_J(em, preds);
  const Eigen::VectorXd I = assemble_I(em, preds);
  EXPECT_LE((J - J.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  for (Eigen::Index i = 0; i < J.rows(); ++i) EXPECT_GE(J(i, i), I[i] * I[i]);
  // Collapsed exponent agrees with the per-dimension product of expect_kk.
  const auto& ls = em.second_layer().hyper().kernel.lengthscales;
  const auto& W = em.latent_values();
  for (Eigen::Index i = 0; i < J.rows(); ++i)
    for (Eigen::Index j = 0; j < J.cols(); ++j) {
      double prod = 1.0;
      for (int p = 0; p < 3; ++p)
        prod *= expect_kk(KernelFamily::SquaredExponential, ls[p], preds[static_cast<std::size_t>(p)].mean,
                          preds[static_cast<std::size_t>(p)].variance, W(i, p), W(j, p));
      EXPECT_NEAR(J(i, j), prod, 1e-14);
    }

  std::vector<PredictiveGaussian> delta{{0.2, 0.0, false}, {-0.5, 0.0, false}, {0.0, 0.0, false}};
  const Eigen::VectorXd r = assemble_I(em, delta);
  EXPECT_LE((assemble_J(em, delta) - r * r.transpose()).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(AssembleIJ, MatchMonteCarlo) {
  Rng rng(6);
  const LinkedEmulator em = random_system(6, 2, rng);
  std::vector<PredictiveGaussian> preds{{0.1, 0.2, false}, {-0.3, 0.15, false}};
  const Eigen::VectorXd I = assemble_I(em, preds);
  const Eigen::MatrixXd J = assemble_J(em, preds);
  const auto& spec = em.second_layer().hyper().kernel;
  const Eigen::MatrixXd& W = em.latent_values();
  std::vector<oracle::Moments> mi(6);
  std::vector<oracle::Moments> mj(36);
  Rng mc(60);
  Eigen::VectorXd w(2);
  for (int s = 0; s < 1000000; ++s) {
    w << 0.1 + std::sqrt(0.2) * mc.normal(), -0.3 + std::sqrt(0.15) * mc.normal();
    const Eigen::VectorXd r = kernel_row(spec, W, w);
    for (int i = 0; i < 6; ++i) {
      mi[static_cast<std::size_t>(i)].add(r[i]);
      for (int j = 0; j < 6; ++j) mj[static_cast<std::size_t>(i * 6 + j)].add(r[i] * r[j]);
    }
  }
  for (int i = 0; i < 6; ++i) {
    EXPECT_NEAR(I[i], mi[static_cast<std::size_t>(i)].mean, 3 * mi[static_cast<std::size_t>(i)].standard_error() + 1e-12);
    for (int j = 0; j < 6; ++j) {
      const auto& m = mj[static_cast<std::size_t>(i * 6 + j)];
      EXPECT_NEAR(J(i, j), m.mean, 3 * m.standard_error() + 1e-12);
    }
  }
}

TEST(LinkPredict, MatchesMonteCarloPropagation) {
  Rng rng(7);
  const LinkedEmulator em = random_system(8, 2, rng);
  Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, 0.43);
  ClampStats stats;
  const auto lp = link_predict(em, x0, &stats);
  Rng mc(70);
  const auto o = oracle::mc_propagate(em.second_layer(), em.latent_predictions(x0), 1000000, mc);
  EXPECT_NEAR(lp.mean, o.mean, 3 * o.mean_se);
  EXPECT_NEAR(lp.variance, o.variance, 0.01 * o.variance);
  EXPECT_EQ(stats.predictions, 1u);
}

TEST(LinkPredict, VarianceNonNegativeOnRandomSystems) {
  Rng rng(8);
  ClampStats stats;
  for (int t = 0; t < 30; ++t) {
    const LinkedEmulator em = random_system(10, 1 + static_cast<int>(rng.index(3)), rng);
    for (int k = 0; k < 20; ++k) {
      const auto p = link_predict(em, Eigen::VectorXd::Constant(1, rng.uniform(-0.2, 1.2)), &stats);
      EXPECT_GE(p.variance, 0.0);
    }
  }
  EXPECT_EQ(stats.predictions, 600u);
  EXPECT_EQ(stats.clamped, 0u);
}

// Three layers x -> a -> b -> y evaluated by linking twice: the Gaussian
// moments of b from the first link feed the second.
TEST(LinkPredict, IteratedThreeLayerChainMatchesMonteCarlo) {
  Rng rng(9);
  const int N = 12;
  Eigen::MatrixXd X(N, 1), A(N, 1), B(N, 1);
  Eigen::VectorXd y(N);
  for (int i = 0; i < N; ++i) {
    X(i, 0) = i / (N - 1.0);
    A(i, 0) = std::sin(2.0 * X(i, 0));
    B(i, 0) = 0.8 * A(i, 0) + 0.1 * std::sin(3.0 * A(i, 0));
    y[i] = 0.5 * B(i, 0) + 0.1 * B(i, 0) * B(i, 0);
  }
  const auto h = [](double l, double s) { return hyper(Eigen::VectorXd::Constant(1, l), s, 1e-4); };
  const FittedGP g1({X, A.col(0)}, h(0.6, 0.5));
  const FittedGP g2({A, B.col(0)}, h(1.5, 0.5));
  const FittedGP g3({B, y}, h(1.5, 0.3));
  const LinkedEmulator first(arch_for(1), {g1}, g2);
  const LinkedLayer last(g3);

  Rng mc(90);
  for (double x : {0.25, 0.6}) {
    const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(1, x);
    const PredictiveGaussian b = link_predict(first, x0);
    std::vector<PredictiveGaussian> bin{b};
    const PredictiveGaussian iterated = last.propagate(bin);

    oracle::Moments mu;
    double s2 = 0.0;
    const auto a = g1.predict(x0);
    const long S = 1000000;
    for (long s = 0; s < S; ++s) {
      const double av = a.mean + std::sqrt(a.variance) * mc.normal();
      const auto bp = g2.predict(Eigen::VectorXd::Constant(1, av));
      const double bv = bp.mean + std::sqrt(bp.variance) * mc.normal();
      const auto yp = g3.predict(Eigen::VectorXd::Constant(1, bv));
      mu.add(yp.mean);
      s2 += yp.variance;
    }
    const double var = s2 / S + mu.variance();
    EXPECT_NEAR(iterated.mean, mu.mean, 3 * mu.standard_error()) << "x0 = " << x;
    EXPECT_NEAR(iterated.variance, var, 0.01 * var) << "x0 = " << x;
  }
}

TEST(LinkedLayer, MaternSecondLayerNotImplemented) {
  FittedGP g({Eigen::MatrixXd::Zero(2, 1) + Eigen::MatrixXd::Identity(2, 1), Eigen::VectorXd::Ones(2)},
             {{KernelFamily::Matern25, Eigen::VectorXd::Ones(1)}, 1.0, 0.01});
  EXPECT_THROW(LinkedLayer{g}, NotImplementedError);
}

TEST(FitSequential, CompleteCaseSizesRecorded) {
  Rng rng(10);
  const int N = 20;
  Eigen::MatrixXd X(N, 1), W(N, 2);
  Eigen::VectorXd y(N);
  BoolMatrix obs = BoolMatrix::Constant(N, 2, true);
  for (int i = 0; i < N; ++i) {
    X(i, 0) = i / (N - 1.0);
    W(i, 0) = std::sin(3 * X(i, 0));
    W(i, 1) = std::cos(2 * X(i, 0));
    y[i] = W(i, 0) - W(i, 1);
    if (i % 2 == 1) obs(i, 1) = false;
  }
  const BoolVector yobs = BoolVector::Constant(N, true);
  const LinkedEmulator em = fit_sequential_lgp(X, W, obs, y, yobs, arch_for(2), FitConfig{});
  ASSERT_EQ(em.fit_info.first_layer_sizes.size(), 2u);
  EXPECT_EQ(em.fit_info.first_layer_sizes[0], 20);
  EXPECT_EQ(em.fit_info.first_layer_sizes[1], 10);
  EXPECT_EQ(em.fit_info.second_layer_size, 10);
  const auto manifest = emulator_manifest(em);
  EXPECT_NE(manifest.dump().find("training_size"), std::string::npos);
  const auto p = link_predict(em, Eigen::VectorXd::Constant(1, 0.37));
  EXPECT_TRUE(std::isfinite(p.mean));
  EXPECT_TRUE(std::isfinite(p.variance));
}

TEST(FitSequential, FullyObservedEqualsDirectFits) {
  const int N = 15;
  Eigen::MatrixXd X(N, 1), W(N, 1);
  Eigen::VectorXd y(N);
  for (int i = 0; i < N; ++i) {
    X(i, 0) = i / (N - 1.0);
    W(i, 0) = std::sin(4 * X(i, 0));
    y[i] = W(i, 0) * W(i, 0);
  }
  FitConfig c;
  c.seed = 5;
  const LinkedEmulator em =
      fit_sequential_lgp(X, W, BoolMatrix::Constant(N, 1, true), y, BoolVector::Constant(N, true), arch_for(1), c);
  FitConfig c1 = c, c2 = c;
  c1.seed = derive_seed(5, "lgp.first", 0);
  c2.seed = derive_seed(5, "lgp.second");
  EXPECT_EQ(em.first_layer()[0].hyper().kernel.lengthscales, fit_gp(X, W.col(0), c1).hyper().kernel.lengthscales);
  EXPECT_EQ(em.second_layer().hyper().scale, fit_gp(W, y, c2).hyper().scale);
}

TEST(FitSequential, TooFewCompleteRows) {
  Eigen::MatrixXd X(4, 1), W(4, 2);
  X << 0, 1, 2, 3;
  W << 0.1, 0.2, 0.3, 0.1, 0.5, 0.7, 0.2, 0.9;
  BoolMatrix obs(4, 2);
  obs << true, false, false, true, true, false, false, true;
  Eigen::VectorXd y(4);
  y << 0.1, 0.4, -0.2, 0.3;
  EXPECT_THROW(fit_sequential_lgp(X, W, obs, y, BoolVector::Constant(4, true), arch_for(2), FitConfig{}),
               SequentialFitError);
}

TEST(Architecture, DuplicateNamesAndLookup) {
  LayerArchitecture a = arch_for(2);
  EXPECT_EQ(a.latent_index("w1"), 1u);
  EXPECT_THROW(a.latent_index("nope"), LookupError);
  a.latent_nodes[1].name = "w0";
  EXPECT_THROW(a.validate(), ContractViolation);
  const auto j = architecture_to_json(arch_for(3));
  EXPECT_EQ(architecture_from_json(j).latent_count(), 3u);
}
