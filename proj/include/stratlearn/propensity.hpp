#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "stratlearn/dataset.hpp"

namespace stratlearn {

// e(x) = P(s=1 | x) fitted by ridge-penalized logistic regression on the
// pooled source+target rows, main effects only.
struct PropensityModel {
    double intercept = 0.0;
    Eigen::VectorXd coefficients;
    double ridge_lambda = 0.0;
    bool converged = false;
    int iterations = 0;
    bool separation_warning = false;
    std::vector<double> loglik_path;   // penalized log-likelihood, non-decreasing
    std::vector<std::string> column_names;

    std::string to_text() const;
    static PropensityModel from_text(const std::string& text);
};

struct PropensityOptions {
    double ridge_lambda = 1e-6;
    int max_iter = 100;
    double tol = 1e-8;
    double separation_cap = 100.0;   // |coefficient| beyond this flags near-separation
};

PropensityModel fit_propensity(const Dataset& d, const PropensityOptions& opt = {});

// Elementwise logistic(intercept + X * coefficients), strictly inside (0,1).
Eigen::VectorXd predict_propensity(const PropensityModel& m, const Eigen::MatrixXd& X);

}  // namespace stratlearn
