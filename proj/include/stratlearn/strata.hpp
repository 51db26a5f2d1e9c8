#pragma once

#include <string>
#include <vector>

#include "stratlearn/dataset.hpp"

namespace stratlearn {

// Quantile strata over pooled propensity scores. Stratum 1 holds the rows
// with the highest scores; stratum j covers the half-open score interval
// (q_{k-j}, q_{k-j+1}] where q_l is the l/k empirical quantile, q_0=0, q_k=1.
struct StrataAssignment {
    int k = 0;
    std::vector<double> boundaries;          // q_1..q_{k-1}, ascending
    std::vector<int> stratum_of;             // per row, values in 1..k
    std::vector<std::vector<int>> merge_map; // merge_map[j-1]: source strata training stratum j
    std::vector<int> deficient;              // strata whose merged pool stayed under min_source

    // Trivial assignment placing every row in one stratum (the k=1 reduction).
    static StrataAssignment single(std::size_t n);

    std::vector<Eigen::Index> rows_in(int stratum) const;
    std::vector<Eigen::Index> rows_in(int stratum, const std::vector<std::uint8_t>& s,
                                      std::uint8_t group) const;
    // Source rows pooled over merge_map[stratum].
    std::vector<Eigen::Index> merged_source_rows(int stratum,
                                                 const std::vector<std::uint8_t>& s) const;
    Eigen::Index source_count(int stratum, const std::vector<std::uint8_t>& s) const;
};

StrataAssignment stratify(const std::vector<double>& scores,
                          const std::vector<std::uint8_t>& s, int k);

// Extends each under-populated stratum's training pool with adjacent strata
// toward stratum 1 until the pooled source count reaches min_source or
// stratum 1 is included. Target rows never move.
StrataAssignment merge_small_strata(const StrataAssignment& a,
                                    const std::vector<std::uint8_t>& s,
                                    Eigen::Index min_source);

struct StrataReport {
    struct Row {
        int stratum;
        Eigen::Index source_count;
        Eigen::Index target_count;
        double source_label_mean;       // NaN when no labeled source rows
        double target_label_mean;       // NaN when target labels unavailable
        bool target_labels_available;
        std::vector<int> merged_from;
    };
    std::vector<Row> rows;

    std::string to_csv() const;
    std::string to_json() const;
};

StrataReport strata_report(const StrataAssignment& a, const Dataset& d);

}  // namespace stratlearn
