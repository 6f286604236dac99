#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Dense>

#include "robustrisk/error.hpp"

namespace robustrisk {

/// Result of projecting one regressand onto a node basis.
struct LeastSquaresFit {
    Eigen::VectorXd coef;
    Eigen::VectorXd fitted;
    Eigen::VectorXd se_coef;
    double residual_var = 0.0;
    double r2 = 1.0;
};

/// Cross-sectional least squares on polynomial features: the conditional
/// expectation estimator used at every time node. Features are centred and
/// scaled; features that are constant across the sample are dropped, so a
/// node where every path sits at the same state regresses onto constants.
class PolynomialRegression {
  public:
    /// `features` is n x m. Monomials of total degree <= `degree` are used.
    PolynomialRegression(const Eigen::MatrixXd& features, int degree, double ridge = 0.0)
        : ridge_(ridge) {
        if (degree < 0)
            throw ArgumentError("PolynomialRegression: degree must be >= 0");
        if (ridge < 0.0)
            throw ArgumentError("PolynomialRegression: ridge must be >= 0");
        const Eigen::Index n = features.rows();
        if (n == 0)
            throw ArgumentError("PolynomialRegression: no observations");

        std::vector<Eigen::VectorXd> cols;
        for (Eigen::Index j = 0; j < features.cols(); ++j) {
            const Eigen::VectorXd col = features.col(j);
            const double mean = col.mean();
            const double sd = std::sqrt((col.array() - mean).square().mean());
            if (!(sd > 1e-12 * std::max(1.0, std::abs(mean))))
                continue;
            cols.push_back((col.array() - mean) / sd);
        }

        std::vector<std::vector<int>> exps;
        std::vector<int> cur(cols.size(), 0);
        enumerate(0, degree, cur, exps);

        basis_.resize(n, static_cast<Eigen::Index>(exps.size()));
        for (std::size_t b = 0; b < exps.size(); ++b) {
            Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
            for (std::size_t j = 0; j < cols.size(); ++j)
                for (int p = 0; p < exps[b][j]; ++p)
                    v.array() *= cols[j].array();
            basis_.col(static_cast<Eigen::Index>(b)) = v;
        }

        const Eigen::Index p = basis_.cols();
        gram_ = basis_.transpose() * basis_;
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(gram_);
        qr.setThreshold(1e-12);
        rank_deficient_ = qr.rank() < p || n <= p;
        double lambda = ridge_;
        if (rank_deficient_ && lambda == 0.0)
            lambda = 1e-8 * gram_.trace() / static_cast<double>(p);
        Eigen::MatrixXd reg = gram_;
        // intercept is never penalized
        for (Eigen::Index j = 1; j < p; ++j)
            reg(j, j) += lambda;
        ridge_used_ = lambda;
        solver_.compute(reg);
        gram_inv_ = solver_.solve(Eigen::MatrixXd::Identity(p, p));
    }

    Eigen::Index n_obs() const { return basis_.rows(); }
    Eigen::Index n_basis() const { return basis_.cols(); }
    bool rank_deficient() const { return rank_deficient_; }
    double ridge_used() const { return ridge_used_; }
    const Eigen::MatrixXd& basis() const { return basis_; }

    LeastSquaresFit fit(const Eigen::VectorXd& y) const {
        if (y.size() != basis_.rows())
            throw ArgumentError("PolynomialRegression::fit: regressand length mismatch");
        LeastSquaresFit out;
        out.coef = solver_.solve(basis_.transpose() * y);
        out.fitted = basis_ * out.coef;
        const Eigen::VectorXd resid = y - out.fitted;
        const double rss = resid.squaredNorm();
        const double tss = (y.array() - y.mean()).square().sum();
        const Eigen::Index dof = std::max<Eigen::Index>(1, basis_.rows() - basis_.cols());
        out.residual_var = rss / static_cast<double>(dof);
        out.r2 = tss > 0.0 ? 1.0 - rss / tss : 1.0;
        out.se_coef = (out.residual_var * gram_inv_.diagonal().array()).sqrt();
        return out;
    }

    /// Residual covariance of two fits of this basis (dof-corrected).
    double residual_cov(const Eigen::VectorXd& y1, const LeastSquaresFit& f1,
                        const Eigen::VectorXd& y2, const LeastSquaresFit& f2) const {
        const Eigen::Index dof = std::max<Eigen::Index>(1, basis_.rows() - basis_.cols());
        return (y1 - f1.fitted).dot(y2 - f2.fitted) / static_cast<double>(dof);
    }

    /// h_i = phi_i' (Phi' Phi)^{-1} phi_i; variance of a fitted value is h_i s^2.
    Eigen::VectorXd leverage() const {
        return (basis_ * gram_inv_).cwiseProduct(basis_).rowwise().sum();
    }

  private:
    static void enumerate(std::size_t j, int remaining, std::vector<int>& cur,
                          std::vector<std::vector<int>>& out) {
        if (j == cur.size()) {
            out.push_back(cur);
            return;
        }
        for (int p = 0; p <= remaining; ++p) {
            cur[j] = p;
            enumerate(j + 1, remaining - p, cur, out);
        }
        cur[j] = 0;
    }

    double ridge_;
    double ridge_used_ = 0.0;
    bool rank_deficient_ = false;
    Eigen::MatrixXd basis_;
    Eigen::MatrixXd gram_;
    Eigen::MatrixXd gram_inv_;
    Eigen::LDLT<Eigen::MatrixXd> solver_;
};

} // namespace robustrisk
