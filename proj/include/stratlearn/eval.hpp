#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace stratlearn {

enum class Metric { auc, mse, logloss, cde_target_risk };

std::string to_string(Metric m);

// Mann-Whitney AUC: fraction of positive-negative pairs ranked correctly,
// ties counted one half. Equals the trapezoid area under the ROC curve.
double auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels);

// (fpr, tpr) at every distinct score threshold plus the endpoints.
std::vector<std::pair<double, double>> roc_curve(const Eigen::VectorXd& scores,
                                                 const Eigen::VectorXd& labels);

double mse(const Eigen::VectorXd& pred, const Eigen::VectorXd& y);

double metric_value(Metric m, const Eigen::VectorXd& scores, const Eigen::VectorXd& labels);

struct BootstrapResult {
    double se = 0.0;
    int used = 0;      // replicates that produced a defined metric
    int skipped = 0;   // replicates abandoned after the retry cap
};

// Standard deviation of the metric over n_boot seeded row resamples.
// Resamples on which the metric is undefined (single-class AUC) are redrawn
// up to 10 times, then skipped.
BootstrapResult bootstrap_se(Metric m, const Eigen::VectorXd& scores,
                             const Eigen::VectorXd& labels, int n_boot, std::uint64_t seed);

// Replicate r draws its row indices from a generator seeded by
// derive_seed(seed, seeds::bootstrap, r * 16 + retry); exposed so reference
// re-implementations can share the resampling rule.
std::vector<Eigen::Index> bootstrap_indices(Eigen::Index n, std::uint64_t seed, int replicate,
                                            int retry = 0);

struct PairedBootstrap {
    double diff = 0.0;       // mean_a - mean_b on the full sample
    double se = 0.0;         // bootstrap SE of the difference
    int used = 0;
    int skipped = 0;
};

// Paired comparison of two methods on the same evaluation rows: each
// replicate resamples rows once and evaluates both metrics on it.
PairedBootstrap paired_bootstrap_diff(Metric m, const Eigen::VectorXd& scores_a,
                                      const Eigen::VectorXd& scores_b,
                                      const Eigen::VectorXd& labels, int n_boot,
                                      std::uint64_t seed);

// Same machinery for statistics that are means of per-row contributions
// (the conditional-density target risk).
PairedBootstrap paired_bootstrap_mean_diff(const Eigen::VectorXd& contrib_a,
                                           const Eigen::VectorXd& contrib_b, int n_boot,
                                           std::uint64_t seed);
BootstrapResult bootstrap_se_mean(const Eigen::VectorXd& contrib, int n_boot,
                                  std::uint64_t seed);

struct EvalReport {
    Metric metric = Metric::mse;
    double value = 0.0;
    double bootstrap_se = 0.0;
    int n_boot = 0;
    Eigen::Index n = 0;
    std::vector<std::pair<double, double>> roc_points;   // auc only

    std::string to_json() const;
    std::string roc_csv() const;
};

EvalReport evaluate(Metric m, const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                    int n_boot, std::uint64_t seed);

}  // namespace stratlearn
