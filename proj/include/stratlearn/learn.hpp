#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "stratlearn/dataset.hpp"
#include "stratlearn/strata.hpp"

namespace stratlearn {

enum class LearnerKind { logistic_classifier, least_squares, knn_regressor };
enum class LossKind { logloss, squared };

std::string to_string(LearnerKind k);
std::string to_string(LossKind k);

struct LearnerSpec {
    LearnerKind kind = LearnerKind::least_squares;
    double ridge_lambda = 1e-10;
    int k_neighbors = 5;

    std::string label() const;
};

// A fitted learner. Linear models keep [intercept, slopes]; the k-NN
// regressor keeps its training rows (zero-weight rows are excluded at fit
// time so they can never influence predictions).
struct Learner {
    LearnerSpec spec;
    Eigen::VectorXd beta;
    Eigen::MatrixXd train_X;
    Eigen::VectorXd train_y;
    Eigen::VectorXd train_w;
    bool fitted = false;
    bool degenerate = false;
    std::string warning;

    Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;
};

Learner fit(const LearnerSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
            const Eigen::VectorXd* w, std::uint64_t seed);

struct RiskEstimate {
    double value = 0.0;
    LossKind loss_kind = LossKind::squared;
    bool weighted = false;
    Eigen::Index n = 0;
    bool clipped = false;   // log-loss hit the (eps, 1-eps) guard
};

// (1/n) sum_i w_i loss(pred_i, y_i); weights default to one.
RiskEstimate empirical_risk(const Eigen::VectorXd& pred, const Eigen::VectorXd& y,
                            LossKind loss, const Eigen::VectorXd* w = nullptr);

struct CvResult {
    struct Entry {
        LearnerSpec spec;
        double risk;
    };
    std::size_t best_index = 0;
    std::vector<Entry> table;

    const LearnerSpec& best() const { return table[best_index].spec; }
    std::string to_csv() const;
};

// Seeded k-fold selection over the spec grid; held-out losses are weighted
// when w is given (importance-weighted CV). Ties keep the first grid entry.
CvResult cross_validate(const std::vector<LearnerSpec>& grid, const Eigen::MatrixXd& X,
                        const Eigen::VectorXd& y, int folds, LossKind loss,
                        const Eigen::VectorXd* w, std::uint64_t seed);

// Fold ids used by cross_validate: a seeded shuffle of row indices dealt
// round-robin. Exposed so runs can be reproduced outside the CV loop.
std::vector<int> fold_assignment(Eigen::Index n, int folds, std::uint64_t seed,
                                 std::uint64_t reshuffle = 0);

// Draws n_draws rows with replacement under p and fits the learner
// unweighted on the resample.
Learner importance_sampled_fit(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y, const Eigen::VectorXd& p,
                               Eigen::Index n_draws, std::uint64_t seed);

struct StratFitResult {
    struct StratumFit {
        int stratum = 0;
        CvResult cv;
        Learner model;
        Eigen::Index pool_size = 0;
    };
    std::vector<StratumFit> strata;
    Eigen::VectorXd predictions;                       // per original row; NaN off-target
    std::vector<Eigen::Index> predicted_rows;          // original indices of target rows
    std::vector<Eigen::VectorXd> source_pred_by_stratum;
    std::vector<Eigen::VectorXd> target_pred_by_stratum;
};

// Per stratum: uniform-weight CV on the merged source pool, fit, and predict
// the stratum's target rows. Per-stratum seeds derive from the master seed by
// stratum index, so strata are independent of evaluation order.
StratFitResult stratlearn_fit_predict(const std::vector<LearnerSpec>& grid, const Dataset& d,
                                      const StrataAssignment& a, int folds, LossKind loss,
                                      std::uint64_t seed, Eigen::Index min_train = 2);

}  // namespace stratlearn
