#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace stratlearn {

// Covariate matrix with optional labels and a source/target indicator.
// Rows are immutable after construction; shift-aware operations require both
// groups to be present (s has at least one 1 and one 0).
struct Dataset {
    Eigen::MatrixXd X;                       // n x F covariates
    Eigen::VectorXd y;                       // labels; valid only where y_present
    std::vector<std::uint8_t> y_present;     // per-row label availability
    std::vector<std::uint8_t> s;             // 1 = source, 0 = target
    std::vector<std::string> column_names;   // length F
    bool has_labels = false;

    Eigen::Index n() const { return X.rows(); }
    Eigen::Index f() const { return X.cols(); }

    Eigen::Index n_source() const;
    Eigen::Index n_target() const;
    std::vector<Eigen::Index> source_rows() const;
    std::vector<Eigen::Index> target_rows() const;

    Eigen::MatrixXd rows(const std::vector<Eigen::Index>& idx) const;
    Eigen::VectorXd labels(const std::vector<Eigen::Index>& idx) const;

    // Throws DataError when a structural invariant is violated.
    void validate(bool require_both_groups) const;
};

struct CsvLoadReport {
    struct RejectedRow {
        std::size_t row;         // 1-based data row (header excluded)
        std::string reason;
    };
    std::vector<RejectedRow> rejected;
};

// Reads a headered CSV of decimal numerics. The label column may have empty
// cells on target rows (missing label); the indicator column must be 0/1.
// Rows containing a non-finite covariate are dropped and reported.
Dataset load_csv(const std::string& path,
                 const std::optional<std::string>& label_column,
                 const std::optional<std::string>& indicator_column,
                 CsvLoadReport* report = nullptr);

void write_csv(const Dataset& d, const std::string& path,
               const std::string& label_name = "y",
               const std::string& indicator_name = "s");

// Per-column affine transform record; suffices to replay the exact transform
// on new rows. Constant columns are passed through and flagged.
struct StandardizeRecord {
    std::vector<std::string> columns;
    std::vector<double> mean;
    std::vector<double> scale;               // 1.0 for flagged columns
    std::vector<std::uint8_t> constant;

    Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
    std::string to_text() const;
    static StandardizeRecord from_text(const std::string& text);
};

std::pair<Dataset, StandardizeRecord> standardize(const Dataset& d);

struct ShiftSpec {
    double beta_a = 13.0;
    double beta_b = 4.0;
    Eigen::Index shift_column = 0;
    std::uint64_t seed = 0;
};

// Beta density on (0,1); used by the rejection-sampling shift simulator.
double beta_pdf(double x, double a, double b);

// Acceptance probability f_B(a,b)(u) / max f_B(a,b): the max is analytic at
// the mode (a-1)/(a+b-2) when a,b > 1, otherwise taken over the evaluated
// points. `u` are values already rescaled into [0,1].
Eigen::VectorXd beta_acceptance(const Eigen::VectorXd& u, double a, double b);

// Reassigns each row to target (s=0) with probability proportional to the
// beta density at the min-max rescaled shift column. Labels and row order
// are preserved; only s changes.
Dataset simulate_shift(const Dataset& d, const ShiftSpec& spec);

}  // namespace stratlearn
