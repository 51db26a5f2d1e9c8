#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace stratlearn {

enum class WeightMethod { ips, kliep, ulsif, nn };

std::string to_string(WeightMethod m);

// Importance weights w(x) ~ p_T(x)/p_S(x) over source rows, in dataset order
// of the source subset.
struct WeightVector {
    Eigen::VectorXd w;
    WeightMethod method = WeightMethod::ips;
    struct Hyper {
        double sigma = 0.0;
        double lambda = 0.0;
        int n_centers = 0;
        int k_neighbors = 0;
    } hyperparams;
    bool fit_ok = true;
    std::string note;
};

// w_i = (n_S/n_T) (1/e_i - 1) from propensity scores on source rows.
WeightVector ips_weights(const Eigen::VectorXd& source_scores, Eigen::Index n_source,
                         Eigen::Index n_target);

// Gaussian kernel exp(-||x-c||^2 / (2 sigma^2)); shared by KLIEP and uLSIF.
Eigen::MatrixXd gaussian_kernel(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centers,
                                double sigma);

// Log-spaced bandwidth grid around the median pairwise distance heuristic.
std::vector<double> median_distance_sigma_grid(const Eigen::MatrixXd& X_S,
                                               const Eigen::MatrixXd& X_T,
                                               int count = 10);

// Kernel-model density-ratio fit maximizing the mean log weight on target
// points subject to alpha >= 0 and (1/n_S) sum_source w = 1, by projected
// gradient ascent; sigma picked by likelihood cross-validation on targets.
WeightVector kliep_weights(const Eigen::MatrixXd& X_S, const Eigen::MatrixXd& X_T,
                           const std::vector<double>& sigma_grid, int n_centers,
                           std::uint64_t seed);

// Least-squares density-ratio fit alpha = (H + lambda I)^{-1} h with negative
// coefficients clipped to zero; (sigma, lambda) by leave-one-out CV.
WeightVector ulsif_weights(const Eigen::MatrixXd& X_S, const Eigen::MatrixXd& X_T,
                           const std::vector<double>& sigma_grid,
                           const std::vector<double>& lambda_grid, int n_centers,
                           std::uint64_t seed);

// w_i = (n_S/n_T) * (#targets claiming source i among their k nearest source
// points) / k.
WeightVector nn_weights(const Eigen::MatrixXd& X_S, const Eigen::MatrixXd& X_T,
                        int k_neighbors);

// p_i proportional to w_i p(s=0) + p(s=1) with group probabilities estimated
// by sample fractions; normalized to sum to one.
Eigen::VectorXd sampling_probabilities(const WeightVector& w, Eigen::Index n_source,
                                       Eigen::Index n_target);

}  // namespace stratlearn
