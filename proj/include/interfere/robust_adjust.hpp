#pragma once

// Huber M-estimation covariance adjustment. Trial responses are regressed on
// nuisance covariates (treatment excluded) and the inference runs on the
// residuals.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "interfere/inference.hpp"
#include "interfere/types.hpp"

namespace interfere {

struct CovariateMatrix {
    std::vector<std::string> names;
    Eigen::MatrixXd values;  // one row per trial, one column per covariate
};

struct HuberOptions {
    double tuning = 1.345;
    double tol = 1e-8;
    int max_iter = 50;
};

struct RobustFit {
    Eigen::VectorXd coefficients;  // intercept first, then one per covariate column
    double scale = 0.0;            // MAD / 0.6745 of the final residuals
    int iterations = 0;
    bool converged = false;
    Eigen::VectorXd residuals;
    Eigen::VectorXd weights;  // weights of the final weighted least-squares solve
};

namespace detail {

inline Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd design(x.rows(), x.cols() + 1);
    design.col(0).setOnes();
    design.rightCols(x.cols()) = x;
    return design;
}

inline Eigen::VectorXd weighted_ls(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& w) {
    const Eigen::VectorXd sw = w.array().sqrt();
    const Eigen::MatrixXd a = sw.asDiagonal() * design;
    const Eigen::VectorXd b = sw.asDiagonal() * y;
    return a.colPivHouseholderQr().solve(b);
}

inline double mad_scale(const Eigen::VectorXd& resid) {
    std::vector<double> a(static_cast<std::size_t>(resid.size()));
    for (Eigen::Index i = 0; i < resid.size(); ++i) a[static_cast<std::size_t>(i)] = std::abs(resid(i));
    const std::size_t mid = a.size() / 2;
    std::nth_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid), a.end());
    double med = a[mid];
    if (a.size() % 2 == 0) {
        const double lo = *std::max_element(a.begin(), a.begin() + static_cast<std::ptrdiff_t>(mid));
        med = 0.5 * (med + lo);
    }
    return med / 0.6745;
}

}  // namespace detail

/// Huber regression by iteratively reweighted least squares, started from
/// ordinary least squares. Weights are min(1, tuning * scale / |e|) with the
/// scale re-estimated from the residuals at each iteration.
inline RobustFit huber_fit(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const HuberOptions& opt = {}) {
    if (x.rows() != y.size()) throw std::invalid_argument("huber_fit: row count does not match response length");
    if (x.cols() < 1) throw std::invalid_argument("huber_fit: need at least one covariate");
    if (!(x.rows() > x.cols() + 1)) throw std::invalid_argument("huber_fit: need more rows than covariates + 1");
    if (!(opt.tuning > 0.0)) throw std::invalid_argument("huber_fit: tuning constant must be positive");

    const Eigen::MatrixXd design = detail::with_intercept(x);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design.rows(), design.cols());
    qr.setThreshold(1e-10);  // relative to the largest pivot
    qr.compute(design);
    if (qr.rank() < design.cols())
        throw RankDeficientError("huber_fit: covariates are collinear (rank " + std::to_string(qr.rank()) + " of " +
                                 std::to_string(design.cols()) + " including intercept)");

    RobustFit fit;
    fit.weights = Eigen::VectorXd::Ones(y.size());
    fit.coefficients = detail::weighted_ls(design, y, fit.weights);
    const double y_scale = std::max(1.0, y.cwiseAbs().maxCoeff());

    for (int iter = 1; iter <= opt.max_iter; ++iter) {
        fit.iterations = iter;
        const Eigen::VectorXd resid = y - design * fit.coefficients;
        const double scale = detail::mad_scale(resid);
        if (scale <= 1e-14 * y_scale) {
            fit.converged = true;  // exact fit
            break;
        }
        Eigen::VectorXd w(y.size());
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            const double a = std::abs(resid(i));
            w(i) = a <= opt.tuning * scale ? 1.0 : opt.tuning * scale / a;
        }
        const Eigen::VectorXd next = detail::weighted_ls(design, y, w);
        const double change = (next - fit.coefficients).cwiseAbs().maxCoeff();
        fit.coefficients = next;
        fit.weights = w;
        if (change < opt.tol) {
            fit.converged = true;
            break;
        }
    }
    fit.residuals = y - design * fit.coefficients;
    fit.scale = detail::mad_scale(fit.residuals);
    return fit;
}

struct AdjustedInference {
    InferenceReport report;
    std::vector<RobustFit> fits;  // one pooled fit, or one per block
    std::vector<TrialRecord> residual_trials;
};

/// Replaces each response by its Huber residual on `covariates` (rows aligned
/// with `trials`) and runs the test on the residuals. With `per_block`, a
/// separate regression is fitted in each block.
inline AdjustedInference adjusted_inference(std::span<const TrialRecord> trials, const CovariateMatrix& covariates,
                                            const TestOptions& opt, Direction dir = Direction::Elevation,
                                            const HuberOptions& huber = {}, bool per_block = false) {
    if (covariates.values.rows() != static_cast<Eigen::Index>(trials.size()))
        throw std::invalid_argument("adjusted_inference: covariate rows do not match trial count");

    AdjustedInference out;
    out.residual_trials.assign(trials.begin(), trials.end());

    auto fit_rows = [&](const std::vector<Eigen::Index>& rows) {
        Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
        Eigen::MatrixXd x(static_cast<Eigen::Index>(rows.size()), covariates.values.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            y(static_cast<Eigen::Index>(i)) = trials[static_cast<std::size_t>(rows[i])].response;
            x.row(static_cast<Eigen::Index>(i)) = covariates.values.row(rows[i]);
        }
        RobustFit fit = huber_fit(y, x, huber);
        for (std::size_t i = 0; i < rows.size(); ++i)
            out.residual_trials[static_cast<std::size_t>(rows[i])].response = fit.residuals(static_cast<Eigen::Index>(i));
        out.fits.push_back(std::move(fit));
    };

    if (per_block) {
        std::map<std::string, std::vector<Eigen::Index>> rows_by_block;
        for (std::size_t i = 0; i < trials.size(); ++i) rows_by_block[trials[i].block_id].push_back(static_cast<Eigen::Index>(i));
        for (const auto& [id, rows] : rows_by_block) fit_rows(rows);
    } else {
        std::vector<Eigen::Index> rows(trials.size());
        for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<Eigen::Index>(i);
        fit_rows(rows);
    }
    for (const RobustFit& f : out.fits)
        if (!f.converged) out.report.warnings.push_back("Huber fit did not converge");

    auto warnings = std::move(out.report.warnings);
    out.report = run_test(out.residual_trials, opt, dir);
    out.report.warnings.insert(out.report.warnings.begin(), warnings.begin(), warnings.end());
    return out;
}

}  // namespace interfere
