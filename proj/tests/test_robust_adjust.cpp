#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "interfere/robust_adjust.hpp"

using namespace interfere;

namespace {

Eigen::VectorXd ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd d(x.rows(), x.cols() + 1);
    d.col(0).setOnes();
    d.rightCols(x.cols()) = x;
    return d.householderQr().solve(y);
}

Eigen::VectorXd ols_residuals(const Eigen::VectorXd& y, const Eigen::MatrixXd& x) {
    Eigen::MatrixXd d(x.rows(), x.cols() + 1);
    d.col(0).setOnes();
    d.rightCols(x.cols()) = x;
    return y - d * ols(y, x);
}

struct Dataset {
    std::vector<TrialRecord> trials;
    CovariateMatrix cov;
};

// B blocks of `len` trials with random assignment; response = tau*z +
// nuisance_gain * covariate column 0 + N(0,1); `p` independent covariates.
Dataset make_data(std::mt19937_64& rng, std::size_t B, std::size_t len, double tau, double nuisance_gain, int p) {
    std::normal_distribution<double> g;
    Dataset d;
    d.cov.values.resize(static_cast<Eigen::Index>(B * len), p);
    for (int j = 0; j < p; ++j) d.cov.names.push_back("c" + std::to_string(j));
    for (std::size_t b = 0; b < B; ++b) {
        std::vector<int> z(len, 0);
        std::fill(z.begin(), z.begin() + static_cast<std::ptrdiff_t>(len / 3), 1);
        std::shuffle(z.begin(), z.end(), rng);
        for (std::size_t i = 0; i < len; ++i) {
            const auto row = static_cast<Eigen::Index>(d.trials.size());
            for (int j = 0; j < p; ++j) d.cov.values(row, j) = g(rng);
            const double y = tau * z[i] + nuisance_gain * d.cov.values(row, 0) + g(rng);
            d.trials.push_back({"b" + std::to_string(b), i, z[i], y});
        }
    }
    return d;
}

}  // namespace

TEST(HuberFit, BoundedNoiseEqualsOls) {
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 300;
    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 3; ++j) x(i, j) = g(rng);
        const double noise = (i % 2 ? 0.1 : -0.1) * (1.0 + 0.2 * u(rng));
        y(i) = 0.5 + 1.5 * x(i, 0) - 2.0 * x(i, 1) + 0.25 * x(i, 2) + noise;
    }
    const RobustFit fit = huber_fit(y, x);
    EXPECT_TRUE(fit.converged);
    EXPECT_EQ(fit.weights.minCoeff(), 1.0);
    const Eigen::VectorXd ref = ols(y, x);
    for (int j = 0; j < 4; ++j) EXPECT_NEAR(fit.coefficients(j), ref(j), 1e-6 * std::max(1.0, std::abs(ref(j))));
}

// With Gaussian errors some residuals exceed 1.345 scale units and are
// downweighted, so the fit is close to, not equal to, least squares.
TEST(HuberFit, GaussianNoiseCloseToOls) {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> g;
    const int n = 2000;
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = g(rng);
        x(i, 1) = g(rng);
        y(i) = 1.0 + 2.0 * x(i, 0) - x(i, 1) + g(rng);
    }
    const RobustFit fit = huber_fit(y, x);
    EXPECT_TRUE(fit.converged);
    const Eigen::VectorXd ref = ols(y, x);
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(fit.coefficients(j), ref(j), 0.02);
    EXPECT_NEAR(fit.scale, 1.0, 0.06);
}

TEST(HuberFit, ExactLinearData) {
    Eigen::MatrixXd x(20, 2);
    Eigen::VectorXd y(20);
    for (int i = 0; i < 20; ++i) {
        x(i, 0) = i;
        x(i, 1) = (i * 7) % 5;
        y(i) = 3.0 - 0.5 * x(i, 0) + 2.0 * x(i, 1);
    }
    const RobustFit fit = huber_fit(y, x);
    EXPECT_TRUE(fit.converged);
    EXPECT_NEAR(fit.coefficients(0), 3.0, 1e-10);
    EXPECT_NEAR(fit.coefficients(1), -0.5, 1e-10);
    EXPECT_NEAR(fit.coefficients(2), 2.0, 1e-10);
    EXPECT_LT(fit.residuals.cwiseAbs().maxCoeff(), 1e-10);
}

TEST(HuberFit, ResistsGrossOutliers) {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g;
    const int n = 1000;
    Eigen::MatrixXd x(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = g(rng);
        y(i) = 1.0 + 2.0 * x(i, 0) + 0.2 * g(rng);
    }
    // 10% of points, all with positive x, shifted up by 50.
    int moved = 0;
    for (int i = 0; i < n && moved < n / 10; ++i)
        if (x(i, 0) > 0.0) {
            y(i) += 50.0;
            ++moved;
        }
    const RobustFit fit = huber_fit(y, x);
    EXPECT_TRUE(fit.converged);
    EXPECT_NEAR(fit.coefficients(1), 2.0, 0.05);
    EXPECT_GT(std::abs(ols(y, x)(1) - 2.0), 0.2);
}

TEST(HuberFit, RankDeficiencyAndPreconditions) {
    Eigen::MatrixXd x(10, 2);
    Eigen::VectorXd y(10);
    for (int i = 0; i < 10; ++i) {
        x(i, 0) = i;
        x(i, 1) = 4.0;  // zero variance, collinear with the intercept
        y(i) = i * i;
    }
    EXPECT_THROW(huber_fit(y, x), RankDeficientError);
    x.col(1) = 2.0 * x.col(0);
    EXPECT_THROW(huber_fit(y, x), RankDeficientError);
    EXPECT_THROW(huber_fit(y.head(3), x.topRows(3)), std::invalid_argument);
    EXPECT_THROW(huber_fit(y.head(9), x), std::invalid_argument);
    HuberOptions bad;
    bad.tuning = 0.0;
    x.col(1) = y;
    EXPECT_THROW(huber_fit(y, x, bad), std::invalid_argument);
}

TEST(HuberFit, WeightedResidualMeanIsZero) {
    std::mt19937_64 rng(4);
    std::student_t_distribution<double> t(2.0);
    const int n = 500;
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = t(rng);
        x(i, 1) = t(rng);
        y(i) = x(i, 0) + t(rng);
    }
    const RobustFit fit = huber_fit(y, x);
    EXPECT_TRUE(fit.converged);
    EXPECT_LT(fit.weights.minCoeff(), 1.0);
    EXPECT_NEAR(fit.weights.dot(fit.residuals) / fit.weights.sum(), 0.0, 1e-8);
}

TEST(HuberFit, ResidualsInvariantUnderAffineRescaling) {
    std::mt19937_64 rng(5);
    std::student_t_distribution<double> t(3.0);
    const int n = 400;
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = t(rng);
        x(i, 1) = t(rng);
        y(i) = 0.3 * x(i, 0) - x(i, 1) + t(rng);
    }
    Eigen::MatrixXd x2 = x;
    x2.col(0) = 10.0 * x.col(0).array() + 3.0;
    x2.col(1) = -0.01 * x.col(1).array() - 7.0;
    const RobustFit a = huber_fit(y, x), b = huber_fit(y, x2);
    EXPECT_LT((a.residuals - b.residuals).cwiseAbs().maxCoeff(), 1e-7);
    EXPECT_NEAR(b.coefficients(1), a.coefficients(1) / 10.0, 1e-8);
    EXPECT_NEAR(b.coefficients(2), a.coefficients(2) / -0.01, 1e-5);
}

TEST(HuberFit, NonConvergenceIsFlagged) {
    std::mt19937_64 rng(6);
    std::cauchy_distribution<double> c;
    const int n = 200;
    Eigen::MatrixXd x(n, 1);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
        x(i, 0) = c(rng);
        y(i) = x(i, 0) + c(rng);
    }
    HuberOptions one;
    one.max_iter = 1;
    const RobustFit fit = huber_fit(y, x, one);
    EXPECT_FALSE(fit.converged);
    EXPECT_EQ(fit.iterations, 1);
}

TEST(AdjustedInference, LargeTuningEqualsOlsResiduals) {
    std::mt19937_64 rng(7);
    Dataset d = make_data(rng, 12, 30, 0.5, 1.0, 3);
    HuberOptions huge;
    huge.tuning = 1e12;
    const AdjustedInference adj = adjusted_inference(d.trials, d.cov, {}, Direction::Elevation, huge);
    Eigen::VectorXd y(static_cast<Eigen::Index>(d.trials.size()));
    for (std::size_t i = 0; i < d.trials.size(); ++i) y(static_cast<Eigen::Index>(i)) = d.trials[i].response;
    const Eigen::VectorXd e = ols_residuals(y, d.cov.values);
    auto trials = d.trials;
    for (std::size_t i = 0; i < trials.size(); ++i) trials[i].response = e(static_cast<Eigen::Index>(i));
    const InferenceReport ref = test_no_effect(trials, {});
    EXPECT_NEAR(adj.report.T_obs, ref.T_obs, 1e-9);
    EXPECT_NEAR(adj.report.deviate, ref.deviate, 1e-9);
    EXPECT_NEAR(adj.report.p_value, ref.p_value, 1e-9);
    for (std::size_t i = 0; i < trials.size(); ++i)
        EXPECT_NEAR(adj.residual_trials[i].response, trials[i].response, 1e-9);
}

TEST(AdjustedInference, IrrelevantCovariatesChangeLittle) {
    std::mt19937_64 rng(8);
    double total = 0.0;
    const int reps = 40;
    for (int rep = 0; rep < reps; ++rep) {
        Dataset d = make_data(rng, 40, 30, 0.3, 0.0, 6);
        const double plain = test_no_effect(d.trials, {}).deviate;
        const double adj = adjusted_inference(d.trials, d.cov, {}).report.deviate;
        total += std::abs(adj - plain);
    }
    EXPECT_LT(total / reps, 0.3);
}

TEST(AdjustedInference, StrongNuisanceGainsPower) {
    std::mt19937_64 rng(9);
    int plain = 0, adjusted = 0;
    const int reps = 100;
    for (int rep = 0; rep < reps; ++rep) {
        Dataset d = make_data(rng, 10, 30, 0.5, 3.0, 2);
        if (test_no_effect(d.trials, {}).p_value <= 0.05) ++plain;
        if (adjusted_inference(d.trials, d.cov, {}).report.p_value <= 0.05) ++adjusted;
    }
    EXPECT_GT(adjusted, plain + 20);
}

TEST(AdjustedInference, PerBlockFitsAndErrors) {
    std::mt19937_64 rng(10);
    Dataset d = make_data(rng, 5, 30, 0.5, 1.0, 2);
    EXPECT_EQ(adjusted_inference(d.trials, d.cov, {}).fits.size(), 1u);
    const AdjustedInference per = adjusted_inference(d.trials, d.cov, {}, Direction::Elevation, {}, true);
    EXPECT_EQ(per.fits.size(), 5u);
    HuberOptions one;
    one.max_iter = 1;
    d.trials[0].response += 1000.0;
    const AdjustedInference flagged = adjusted_inference(d.trials, d.cov, {}, Direction::Elevation, one);
    ASSERT_FALSE(flagged.report.warnings.empty());
    EXPECT_NE(flagged.report.warnings.front().find("converge"), std::string::npos);

    CovariateMatrix short_cov = d.cov;
    short_cov.values.conservativeResize(10, Eigen::NoChange);
    EXPECT_THROW(adjusted_inference(d.trials, short_cov, {}), std::invalid_argument);
    CovariateMatrix flat = d.cov;
    flat.values.col(1).setConstant(2.0);
    EXPECT_THROW(adjusted_inference(d.trials, flat, {}), RankDeficientError);
}
