#include "stratlearn/glm.hpp"

#include <cmath>

#include "stratlearn/errors.hpp"

namespace stratlearn::glm {

namespace {

Eigen::VectorXd linear_predictor(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta) {
    return (X * beta.tail(X.cols())).array() + beta[0];
}

}  // namespace

double penalized_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd* w, double lambda,
                        const Eigen::VectorXd& beta) {
    const Eigen::VectorXd eta = linear_predictor(X, beta);
    double ll = 0.0;
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double wi = w ? (*w)[i] : 1.0;
        // log p and log(1-p) written via the stable softplus form
        const double t = eta[i];
        const double log1pexp = t > 30.0 ? t : std::log1p(std::exp(t));
        ll += wi * (y[i] * t - log1pexp);
    }
    ll -= 0.5 * lambda * beta.tail(X.cols()).squaredNorm();
    return ll;
}

LogisticFit fit_logistic_irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                              const Eigen::VectorXd* w, double lambda, int max_iter,
                              double tol) {
    const Eigen::Index n = X.rows(), p = X.cols();
    if (n == 0) throw DataError("logistic fit on empty data");
    if (y.size() != n) throw DataError("label length mismatch in logistic fit");
    if (w && w->size() != n) throw DataError("weight length mismatch in logistic fit");

    LogisticFit fit;
    fit.beta = Eigen::VectorXd::Zero(p + 1);

    // Degenerate one-class data: the unpenalized intercept diverges; return a
    // constant predictor at the clipped class rate instead.
    double wsum = 0.0, wpos = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double wi = w ? (*w)[i] : 1.0;
        wsum += wi;
        wpos += wi * y[i];
    }
    if (wsum <= 0.0) throw DataError("logistic fit: all weights are zero");
    const double rate = wpos / wsum;
    if (rate <= 0.0 || rate >= 1.0) {
        const double r = rate <= 0.0 ? 1e-12 : 1.0 - 1e-12;
        fit.beta[0] = std::log(r / (1.0 - r));
        fit.degenerate = true;
        fit.converged = true;
        return fit;
    }
    fit.beta[0] = std::log(rate / (1.0 - rate));

    double obj = penalized_loglik(X, y, w, lambda, fit.beta);
    fit.objective_path.push_back(obj);

    Eigen::MatrixXd Xa(n, p + 1);
    Xa.col(0).setOnes();
    Xa.rightCols(p) = X;
    Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p + 1, lambda);
    penalty[0] = 0.0;

    for (int it = 1; it <= max_iter; ++it) {
        const Eigen::VectorXd eta = linear_predictor(X, fit.beta);
        Eigen::VectorXd mu(n), wk(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            mu[i] = logistic(eta[i]);
            const double wi = w ? (*w)[i] : 1.0;
            wk[i] = std::max(wi * mu[i] * (1.0 - mu[i]), 1e-12);
        }

        // Newton step on the penalized likelihood
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(p + 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double wi = w ? (*w)[i] : 1.0;
            grad += wi * (y[i] - mu[i]) * Xa.row(i).transpose();
        }
        grad -= penalty.asDiagonal() * fit.beta;

        Eigen::MatrixXd H = Xa.transpose() * wk.asDiagonal() * Xa;
        H += penalty.asDiagonal();
        const Eigen::VectorXd step = H.ldlt().solve(grad);

        // Step halving keeps the penalized log-likelihood non-decreasing.
        double scale = 1.0;
        Eigen::VectorXd cand;
        double cand_obj = obj;
        for (int half = 0; half < 30; ++half) {
            cand = fit.beta + scale * step;
            cand_obj = penalized_loglik(X, y, w, lambda, cand);
            if (std::isfinite(cand_obj) && cand_obj >= obj) break;
            scale *= 0.5;
        }
        if (!std::isfinite(cand_obj) || cand_obj < obj) {
            // no uphill step found; report as converged at the current point
            fit.iterations = it;
            fit.converged = true;
            break;
        }

        double rel = 0.0;
        for (Eigen::Index j = 0; j < p + 1; ++j) {
            const double denom = std::max(1.0, std::abs(cand[j]));
            rel = std::max(rel, std::abs(cand[j] - fit.beta[j]) / denom);
        }
        fit.beta = cand;
        obj = cand_obj;
        fit.objective_path.push_back(obj);
        fit.iterations = it;
        if (rel < tol) {
            fit.converged = true;
            break;
        }
    }
    return fit;
}

Eigen::VectorXd fit_ridge_least_squares(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                        const Eigen::VectorXd* w, double lambda) {
    const Eigen::Index n = X.rows(), p = X.cols();
    if (n == 0) throw DataError("least-squares fit on empty data");
    if (y.size() != n) throw DataError("label length mismatch in least-squares fit");
    if (w && w->size() != n) throw DataError("weight length mismatch in least-squares fit");

    Eigen::MatrixXd Xa(n, p + 1);
    Xa.col(0).setOnes();
    Xa.rightCols(p) = X;

    Eigen::MatrixXd A;
    Eigen::VectorXd b;
    if (w) {
        A = Xa.transpose() * w->asDiagonal() * Xa;
        b = Xa.transpose() * w->asDiagonal() * y;
    } else {
        A = Xa.transpose() * Xa;
        b = Xa.transpose() * y;
    }
    for (Eigen::Index j = 1; j < p + 1; ++j) A(j, j) += lambda;

    const Eigen::VectorXd beta = A.ldlt().solve(b);
    if (!beta.allFinite()) throw NumericalError("singular normal equations in least-squares fit");
    return beta;
}

}  // namespace stratlearn::glm
