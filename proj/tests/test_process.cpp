#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "robustrisk/pde.hpp"
#include "robustrisk/process.hpp"
#include "robustrisk/terminal.hpp"

using namespace robustrisk;

namespace {

constexpr double kSigma = 0.2;

PathBatch gaussian_paths(std::size_t n, std::size_t steps, std::uint64_t seed) {
    return simulate_paths(arithmetic_bm(0.0, kSigma, 0.0), TimeGrid(1.0, steps), n, seed, 8);
}

RegressionConfig degree(int d, Estimator e = Estimator::automatic) {
    RegressionConfig cfg;
    cfg.degree = d;
    cfg.estimator = e;
    return cfg;
}

double column_mean(const ProcessPanel& p, const std::vector<double>& arr, std::size_t k) {
    std::vector<double> v(p.n_paths);
    for (std::size_t i = 0; i < p.n_paths; ++i)
        v[i] = arr[p.idx(i, k)];
    return pairwise_sum(v) / static_cast<double>(v.size());
}

double column_se(const ProcessPanel& p, const std::vector<double>& arr, std::size_t k) {
    std::vector<double> v(p.n_paths);
    for (std::size_t i = 0; i < p.n_paths; ++i)
        v[i] = arr[p.idx(i, k)];
    return standard_error(v);
}

} // namespace

TEST(Regression, RecoversExactPolynomial) {
    Eigen::MatrixXd x(200, 2);
    Eigen::VectorXd y(200);
    for (int i = 0; i < 200; ++i) {
        const double a = std::sin(0.37 * i), b = std::cos(1.3 * i) * 2.0 + 1.0;
        x(i, 0) = a;
        x(i, 1) = b;
        y[i] = 1.5 - 2.0 * a + 0.5 * a * b + 3.0 * b * b;
    }
    const PolynomialRegression reg(x, 2);
    EXPECT_EQ(reg.n_basis(), 6);
    const auto fit = reg.fit(y);
    EXPECT_LT((fit.fitted - y).cwiseAbs().maxCoeff(), 1e-10);
    EXPECT_NEAR(fit.r2, 1.0, 1e-12);
    EXPECT_FALSE(reg.rank_deficient());
}

TEST(Regression, DropsConstantFeatures) {
    Eigen::MatrixXd x(50, 2);
    for (int i = 0; i < 50; ++i) {
        x(i, 0) = i;
        x(i, 1) = 4.0;
    }
    const PolynomialRegression reg(x, 2);
    EXPECT_EQ(reg.n_basis(), 3);
}

TEST(Regression, LeverageSumsToBasisSize) {
    Eigen::MatrixXd x(100, 1);
    for (int i = 0; i < 100; ++i)
        x(i, 0) = std::exp(0.01 * i);
    const PolynomialRegression reg(x, 3);
    EXPECT_NEAR(reg.leverage().sum(), 4.0, 1e-8);
}

TEST(Regression, CollinearFeaturesFallBackToRidge) {
    Eigen::MatrixXd x(80, 2);
    for (int i = 0; i < 80; ++i) {
        x(i, 0) = 0.1 * i;
        x(i, 1) = 0.2 * i + 1.0;
    }
    const PolynomialRegression reg(x, 1);
    EXPECT_TRUE(reg.rank_deficient());
    EXPECT_GT(reg.ridge_used(), 0.0);
    Eigen::VectorXd y = x.col(0) * 3.0;
    EXPECT_LT((reg.fit(y).fitted - y).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Regression, CoefficientStandardErrorsForSimpleLine) {
    // y = a + b x + noise with known residual variance: compare with the
    // textbook formula se(b) = s / sqrt(sum (x - xbar)^2), in standardized units.
    const int n = 400;
    Eigen::MatrixXd x(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = i;
        y[i] = 2.0 + 0.01 * i + ((i * 7919) % 13 - 6.0) * 0.1;
    }
    const auto fit = PolynomialRegression(x, 1).fit(y);
    const double s = std::sqrt(fit.residual_var);
    EXPECT_NEAR(fit.se_coef[0], s / std::sqrt(static_cast<double>(n)), 1e-12);
    EXPECT_NEAR(fit.se_coef[1], s / std::sqrt(static_cast<double>(n)), 1e-12);
}

TEST(Process, TerminalPinningIsExact) {
    const auto paths = gaussian_paths(3000, 10, 1);
    for (auto e : {Estimator::log_recursion, Estimator::terminal_projection}) {
        const auto p = estimate_conditional_processes(paths, losses::terminal_identity(),
                                                      divergences::kl(), 1.0, degree(1, e));
        const std::size_t last = p.n_nodes() - 1;
        for (std::size_t i = 0; i < p.n_paths; ++i) {
            const double l = paths.at(i, last);
            EXPECT_EQ(p.U[p.idx(i, last)], l);
            EXPECT_EQ(p.V[p.idx(i, last)], l);
            EXPECT_EQ(p.eta[p.idx(i, last)], 0.0);
        }
    }
}

TEST(Process, ConstantLossIsAFixedPoint) {
    const auto paths = gaussian_paths(500, 6, 2);
    const LossSpec constant{"k", TerminalLoss{[](std::span<const double>) { return 0.3; }}};
    for (const auto& div : {divergences::kl(), divergences::chi_squared()}) {
        const auto p = estimate_conditional_processes(paths, constant, div, 2.0, degree(2));
        for (std::size_t q = 0; q < p.U.size(); ++q) {
            EXPECT_NEAR(p.Z[q], 1.0, 1e-12) << div.name;
            EXPECT_NEAR(p.U[q], 0.3, 1e-12) << div.name;
            EXPECT_NEAR(p.V[q], 0.3, 1e-12) << div.name;
            EXPECT_NEAR(p.eta[q], 0.0, 1e-11) << div.name;
        }
        const auto chk = martingale_residual_check(p, paths, constant);
        for (const auto& r : chk.nodes) {
            EXPECT_LE(r.Z.max_abs_coef, 1e-12);
            EXPECT_LE(r.W.max_abs_coef, 1e-12);
        }
        EXPECT_TRUE(chk.martingale_ok());
    }
}

TEST(Process, SingleStepNodeZeroEqualsMeasure) {
    const auto paths = gaussian_paths(20000, 1, 3);
    const auto sample = LossSample::monte_carlo(terminal_losses(losses::terminal_identity(), paths));
    for (const auto& div : {divergences::kl(), divergences::chi_squared()}) {
        const auto m = measure_at_zero(sample, div, 1.5);
        const auto p = estimate_conditional_processes(paths, losses::terminal_identity(), div, 1.5,
                                                      degree(2));
        for (std::size_t i = 0; i < 5; ++i) {
            EXPECT_NEAR(p.U[p.idx(i, 0)], m.U0, 1e-12) << div.name;
            EXPECT_NEAR(p.V[p.idx(i, 0)], m.V0, 1e-12) << div.name;
            EXPECT_NEAR(p.eta[p.idx(i, 0)], m.eta0, 1e-11) << div.name;
        }
        EXPECT_EQ(p.c, m.c);
    }
}

TEST(Process, GaussianKlReproducesClosedFormWithinThreeSe) {
    const auto paths = gaussian_paths(20000, 50, 4);
    const double theta = 1.0;
    const auto p = estimate_conditional_processes(paths, losses::terminal_identity(), divergences::kl(),
                                                  theta, degree(1));
    EXPECT_EQ(p.estimator, Estimator::log_recursion);
    for (std::size_t k = 0; k + 1 < p.n_nodes(); ++k) {
        double su = 0.0, sv = 0.0;
        for (std::size_t i = 0; i < p.n_paths; ++i) {
            const auto o = oracle::gaussian_kl(0.0, kSigma, 1.0 - p.grid.node(k), theta, paths.at(i, k));
            su += std::pow(p.U[p.idx(i, k)] - o.U, 2);
            sv += std::pow(p.V[p.idx(i, k)] - o.V, 2);
        }
        const double n = static_cast<double>(p.n_paths);
        EXPECT_LE(std::sqrt(su / n), 3.0 * p.nodes[k].rms_se_U) << "node " << k;
        EXPECT_LE(std::sqrt(sv / n), 3.0 * p.nodes[k].rms_se_V) << "node " << k;
    }
}

TEST(Process, ScaledKlUsesReducedTilt) {
    // For f = d x ln x the Gaussian worst case tilts by theta / d.
    const auto paths = gaussian_paths(20000, 20, 5);
    const double d = 2.0, theta = 1.0;
    const auto p = estimate_conditional_processes(paths, losses::terminal_identity(),
                                                  divergences::scaled_kl(d), theta, degree(1));
    const double expect_v0 = kSigma * kSigma * theta / d;
    EXPECT_NEAR(column_mean(p, p.V, 0), expect_v0, 4.0 * p.nodes[0].rms_se_V);
}

TEST(Process, TowerPropertyAndBudgetSign) {
    const auto paths = gaussian_paths(20000, 20, 6);
    const auto p = estimate_conditional_processes(paths, losses::terminal_identity(), divergences::kl(),
                                                  1.0, degree(2));
    const std::size_t last = p.n_nodes() - 1;
    const double w_t = column_mean(p, p.W, last);
    for (std::size_t k = 0; k <= last; ++k) {
        EXPECT_NEAR(column_mean(p, p.Z, k), 1.0, 4.0 * column_se(p, p.Z, last) + 1e-12) << k;
        EXPECT_NEAR(column_mean(p, p.W, k), w_t, 4.0 * column_se(p, p.W, last) + 1e-12) << k;
        for (std::size_t i = 0; i < p.n_paths; ++i)
            EXPECT_GE(p.eta[p.idx(i, k)], -4.0 * p.nodes[k].rms_se_V - 1e-12);
    }
    EXPECT_EQ(p.masked_fraction(), 0.0);
}

TEST(Process, ProjectionPreservesMeansPerNode) {
    // A least-squares fit with an intercept reproduces the sample mean of the
    // regressand, so the tower property holds to rounding for the projection.
    const auto paths = gaussian_paths(5000, 10, 6);
    const auto p = estimate_conditional_processes(paths, losses::terminal_identity(), divergences::kl(),
                                                  1.0, degree(2, Estimator::terminal_projection));
    const std::size_t last = p.n_nodes() - 1;
    for (std::size_t k = 0; k < last; ++k) {
        EXPECT_NEAR(column_mean(p, p.Z, k), column_mean(p, p.Z, last), 1e-12);
        EXPECT_NEAR(column_mean(p, p.W, k), column_mean(p, p.W, last), 1e-12);
    }
}

TEST(Process, MartingaleResidualsAndInjectedFault) {
    const auto paths = gaussian_paths(20000, 50, 7);
    const auto loss = losses::terminal_identity();
    const auto p = estimate_conditional_processes(paths, loss, divergences::kl(), 1.0, degree(1));
    const auto chk = martingale_residual_check(p, paths, loss);
    EXPECT_TRUE(chk.martingale_ok()) << chk.max_t_stat;
    EXPECT_TRUE(chk.supermartingale_ok()) << chk.max_suboptimal_z;
    EXPECT_EQ(chk.nodes.size(), 50u);

    const auto bad = martingale_residual_check(inject_fault(p, 25, 0.1), paths, loss);
    EXPECT_FALSE(bad.martingale_ok());
    EXPECT_GT(bad.nodes[24].Z.max_t_stat, 4.0);
    EXPECT_GT(bad.nodes[25].Z.max_t_stat, 4.0);
    EXPECT_LE(bad.nodes[10].Z.max_t_stat, 4.0);
}

TEST(Process, NestedMonteCarloOracleForChiSquared) {
    // Z(t) = E[z(l) | X(t)] by brute-force inner simulation at one node,
    // compared with the degree-3 single-pass projection on the same points.
    const auto div = divergences::chi_squared();
    const double theta = 10.0;
    const std::size_t steps = 20, k = 10, n_outer = 200, n_inner = 2000;
    const auto paths = gaussian_paths(20000, steps, 3);
    const auto p = estimate_conditional_processes(paths, losses::terminal_identity(), div, theta,
                                                  degree(3));
    EXPECT_EQ(p.estimator, Estimator::terminal_projection);
    double diff2 = 0.0, se2 = 0.0;
    for (std::size_t i = 0; i < n_outer; ++i) {
        const auto inner = simulate_paths(arithmetic_bm(0.0, kSigma, paths.at(i, k)),
                                          TimeGrid(1.0 - p.grid.node(k), steps - k), n_inner, 1000 + i);
        std::vector<double> z(n_inner);
        for (std::size_t j = 0; j < n_inner; ++j)
            z[j] = z_of_loss(div, theta, p.c, inner.at(j, steps - k));
        const double m = pairwise_sum(z) / static_cast<double>(n_inner);
        diff2 += std::pow(p.Z[p.idx(i, k)] - m, 2);
        se2 += std::pow(standard_error(z), 2);
    }
    EXPECT_LE(std::sqrt(diff2 / n_outer), 3.0 * std::sqrt(se2 / n_outer));
}

TEST(Process, LogRecursionRejectsGeneralDivergence) {
    const auto paths = gaussian_paths(100, 2, 1);
    EXPECT_THROW(estimate_conditional_processes(paths, losses::terminal_identity(),
                                                divergences::chi_squared(), 1.0,
                                                degree(1, Estimator::log_recursion)),
                 ArgumentError);
    EXPECT_THROW(estimate_conditional_processes(paths, losses::terminal_identity(), divergences::kl(),
                                                0.0),
                 ArgumentError);
}

TEST(Process, PathDependentLossUsesRunningFeatures) {
    const auto loss = losses::asian_integral(1.0);
    const auto f = default_features(loss);
    ASSERT_EQ(f.size(), 2u);
    EXPECT_EQ(f[1], Feature::running_h1);
    EXPECT_EQ(default_features(losses::running_max())[1], Feature::running_max);

    const auto paths = gaussian_paths(10000, 20, 9);
    const auto p = estimate_conditional_processes(paths, loss, divergences::kl(), 1.0, degree(2));
    // The Asian average of Brownian motion is Gaussian with variance sigma^2 T / 3.
    const auto o = oracle::gaussian_kl(0.0, kSigma / std::sqrt(3.0), 1.0, 1.0);
    EXPECT_NEAR(p.V[p.idx(0, 0)], o.V, 4.0 * p.nodes[0].rms_se_V + 0.002);
    EXPECT_TRUE(martingale_residual_check(p, paths, loss).martingale_ok());
}

TEST(Girsanov, ZeroThetaRecoversNominal) {
    const auto model = arithmetic_bm(0.3, 0.2, 0.0);
    const ValueGradient grad = [](double, std::span<const double>, std::span<double> o) { o[0] = 1.0; };
    const auto r = girsanov_resimulate(model, TimeGrid(1.0, 50), divergences::kl(), 0.0, grad,
                                       losses::terminal_identity(), 20000, 5, 0.3, 0.0, 8);
    EXPECT_TRUE(r.consistent()) << r.gap;
    EXPECT_FALSE(r.note.empty());
}

TEST(Girsanov, ArithmeticDriftAdjustmentMatchesV0) {
    const double mu = 0.05, theta = 1.0;
    const auto model = arithmetic_bm(mu, kSigma, 0.0);
    const TimeGrid grid(1.0, 50);
    const auto nominal = simulate_paths(model, grid, 50000, 11, 8);
    const auto m = measure_at_zero(
        LossSample::monte_carlo(terminal_losses(losses::terminal_identity(), nominal)),
        divergences::kl(), theta);
    const ValueGradient grad = [](double, std::span<const double>, std::span<double> o) { o[0] = 1.0; };
    const auto r = girsanov_resimulate(model, grid, divergences::kl(), theta, grad,
                                       losses::terminal_identity(), 50000, 12, m.V0, m.std_err_V0, 8);
    EXPECT_TRUE(r.consistent()) << r.gap << " vs " << r.combined_se;
    EXPECT_NEAR(r.adjusted_mean, mu + theta * kSigma * kSigma, 4.0 * r.adjusted_se);
}

TEST(Girsanov, RejectsNonKlDivergence) {
    const ValueGradient grad = [](double, std::span<const double>, std::span<double> o) { o[0] = 1.0; };
    EXPECT_THROW(girsanov_resimulate(arithmetic_bm(0, 1, 0), TimeGrid(1.0, 2), divergences::chi_squared(),
                                     1.0, grad, losses::terminal_identity(), 10, 1, 0.0, 0.0),
                 ArgumentError);
}
