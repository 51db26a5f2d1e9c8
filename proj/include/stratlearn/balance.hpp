#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "stratlearn/dataset.hpp"
#include "stratlearn/strata.hpp"

namespace stratlearn {

// |mean_S - mean_T| / sqrt((var_S + var_T)/2), sample variances. When the
// pooled variance is zero: 0 for equal means, +inf otherwise.
double smd(const Eigen::VectorXd& source_col, const Eigen::VectorXd& target_col);

// Two-sample Kolmogorov-Smirnov statistic: sup |ECDF_S - ECDF_T| over the
// pooled sample points.
double ks_statistic(const Eigen::VectorXd& source_col, const Eigen::VectorXd& target_col);

// Two-sided Fisher exact p-value for the 2x2 table [[a,b],[c,d]]:
// probability-mass ordering over all tables with the observed margins,
// evaluated through log-factorials.
double fisher_exact_2x2(long a, long b, long c, long d);

struct BalanceReport {
    // stratum 0 denotes the raw (unstratified) comparison
    struct Cell {
        int stratum;
        std::string covariate;
        double smd;
        double ks;
    };
    struct Aggregate {
        int stratum;
        Eigen::Index source_count;
        Eigen::Index target_count;
        bool sufficient;          // both sides at or above the reporting minimum
        double smd_mean, smd_sd;
        double ks_mean, ks_sd;
    };
    std::vector<Cell> cells;
    std::vector<Aggregate> aggregates;

    const Aggregate* aggregate(int stratum) const;
    std::string to_csv() const;
    std::string to_json() const;
};

BalanceReport balance_report(const Dataset& d, const StrataAssignment& a,
                             Eigen::Index min_per_side = 20);

struct OutcomeBalance {
    struct Row {
        int stratum;
        Eigen::Index source_n, target_n;
        Eigen::Index source_pos, target_pos;
        double source_prop, target_prop;
        double p_value;           // NaN when untested
        bool tested;
    };
    std::vector<Row> rows;
    std::string to_csv() const;
};

// Thresholded predicted-label proportions per stratum with a Fisher exact
// test of source/target independence. Strata with an empty side are reported
// untested.
OutcomeBalance predicted_outcome_balance(
    const std::vector<Eigen::VectorXd>& pred_source_by_stratum,
    const std::vector<Eigen::VectorXd>& pred_target_by_stratum, double threshold = 0.5);

}  // namespace stratlearn
