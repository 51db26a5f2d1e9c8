#pragma once

#include <Eigen/Dense>
#include <vector>

namespace stratlearn::glm {

inline double logistic(double t) {
    if (t >= 0.0) {
        const double e = std::exp(-t);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(t);
    return e / (1.0 + e);
}

// Scores are kept strictly inside (0,1); the raw link can round to 0/1 in
// floating point for |t| > ~37.
inline double logistic_open(double t) {
    constexpr double eps = 1e-15;
    const double p = logistic(t);
    return p < eps ? eps : (p > 1.0 - eps ? 1.0 - eps : p);
}

struct LogisticFit {
    Eigen::VectorXd beta;                 // [intercept, slopes...]
    bool converged = false;
    int iterations = 0;
    bool degenerate = false;              // all labels one class
    std::vector<double> objective_path;   // penalized log-likelihood per iteration
};

// Maximizes sum_i w_i [y_i log p_i + (1-y_i) log(1-p_i)] - (lambda/2)||slopes||^2
// by iteratively reweighted least squares with step halving, so the penalized
// log-likelihood is non-decreasing across iterations. The intercept is not
// penalized. Weights may be null (treated as 1).
LogisticFit fit_logistic_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const Eigen::VectorXd* w, double lambda, int max_iter,
                              double tol);

// Minimizes sum_i w_i (y_i - b0 - x_i.beta)^2 + lambda ||beta||^2 in closed
// form; intercept unpenalized. Returns [intercept, slopes...].
Eigen::VectorXd fit_ridge_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                        const Eigen::VectorXd* w, double lambda);

// Penalized binomial log-likelihood of [intercept, slopes] on (X, y, w).
double penalized_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd* w, double lambda,
                        const Eigen::VectorXd& beta);

}  // namespace stratlearn::glm
