#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "stratlearn/dataset.hpp"
#include "stratlearn/strata.hpp"

namespace stratlearn {

// Per-query conditional densities tabulated on an equally spaced grid over
// the unit interval. Every row integrates to one under the trapezoid rule.
struct DensityGrid {
    int grid_size = 201;
    Eigen::MatrixXd values;   // n_query x grid_size, nonnegative

    double point(int i) const { return static_cast<double>(i) / (grid_size - 1); }
    double spacing() const { return 1.0 / (grid_size - 1); }

    double row_integral(Eigen::Index row) const;
    double row_square_integral(Eigen::Index row) const;
    // density at z by linear interpolation between grid nodes
    double interpolate(Eigen::Index row, double z) const;
};

enum class CdeKind { hist_nn, ker_nn, series };

std::string to_string(CdeKind k);

struct CdeSpec {
    CdeKind kind = CdeKind::ker_nn;
    int n_neighbors = 25;
    int n_bins = 20;          // hist_nn
    double bandwidth = 0.05;  // ker_nn
    int n_terms = 10;         // series: constant + (n_terms-1) cosine terms

    std::string label() const;
};

class DensityModel {
  public:
    virtual ~DensityModel() = default;
    virtual DensityGrid predict(const Eigen::MatrixXd& queries) const = 0;
    virtual int grid_size() const = 0;
};

// Nearest-neighbor conditional density estimator over responses rescaled to
// [0,1]: a histogram, a Gaussian kernel sum, or a truncated cosine expansion
// built from each query's N nearest training rows. Densities are clipped at
// zero and renormalized on the grid.
class CdeEstimator : public DensityModel {
  public:
    CdeEstimator() = default;
    CdeEstimator(const CdeSpec& spec, Eigen::MatrixXd X, Eigen::VectorXd z,
                 int grid_size = 201);

    DensityGrid predict(const Eigen::MatrixXd& queries) const override;
    int grid_size() const override { return grid_size_; }
    const CdeSpec& spec() const { return spec_; }
    bool fitted() const { return fitted_; }

  private:
    CdeSpec spec_;
    Eigen::MatrixXd X_;
    Eigen::VectorXd z_;
    int grid_size_ = 201;
    bool fitted_ = false;
};

// Convex combination sum_k alpha_k f_k over estimators sharing one grid.
class CombModel : public DensityModel {
  public:
    CombModel(std::vector<const DensityModel*> components, Eigen::VectorXd alpha);
    DensityGrid predict(const Eigen::MatrixXd& queries) const override;
    int grid_size() const override;
    const Eigen::VectorXd& alpha() const { return alpha_; }

  private:
    std::vector<const DensityModel*> components_;
    Eigen::VectorXd alpha_;
};

// min-max record taking responses to [0,1] and back
struct ZRescale {
    double lo = 0.0, hi = 1.0;
    static ZRescale fit(const Eigen::VectorXd& z);
    Eigen::VectorXd to_unit(const Eigen::VectorXd& z) const;
    double to_unit(double z) const { return (z - lo) / (hi - lo); }
};

struct FitCdeResult {
    CdeEstimator estimator;
    CdeSpec chosen;
    struct Entry {
        CdeSpec spec;
        double risk;
    };
    std::vector<Entry> cv_table;
};

// Hyperparameter selection by seeded k-fold minimization of the L2 density
// risk: both risk terms on held-out rows when risk_weights is null; with
// weights, the quadratic term runs over quad_rows (unlabeled covariates) and
// the weighted linear term over held-out labeled rows.
FitCdeResult fit_cde(CdeKind kind, const Eigen::MatrixXd& X, const Eigen::VectorXd& z,
                     const std::vector<CdeSpec>& grid, int folds,
                     const Eigen::VectorXd* risk_weights, std::uint64_t seed,
                     const Eigen::MatrixXd* quad_rows = nullptr, int grid_size = 201);

// Per-row contributions r_i = int f^2(.|x_i) - 2 w_i f(z_i|x_i); their mean
// is the generalized risk (may be negative).
Eigen::VectorXd risk_contributions(const DensityModel& model, const Eigen::MatrixXd& X,
                                   const Eigen::VectorXd& z,
                                   const Eigen::VectorXd* weights = nullptr);

double generalized_risk(const DensityModel& model, const Eigen::MatrixXd& X,
                        const Eigen::VectorXd& z, const Eigen::VectorXd* weights = nullptr);

// Two-sample form: quadratic term averaged over unlabeled rows, weighted
// linear term over labeled rows.
double generalized_risk_shift(const DensityModel& model, const Eigen::MatrixXd& X_quad,
                              const Eigen::MatrixXd& X_lab, const Eigen::VectorXd& z_lab,
                              const Eigen::VectorXd& w);

// Target-side evaluation risk; equals generalized_risk at unit weights on
// the target rows. Never used for model selection.
double target_risk_cde(const DensityModel& model, const Eigen::MatrixXd& X_T,
                       const Eigen::VectorXd& z_T);

struct CombWeights {
    Eigen::VectorXd alpha;   // simplex: alpha >= 0, sum = 1
    double risk = 0.0;
    int iterations = 0;
};

// Minimizes the (optionally weighted) generalized risk of the convex
// combination over the simplex by projected gradient from the uniform start.
CombWeights fit_comb(const std::vector<const DensityModel*>& components,
                     const Eigen::MatrixXd& X, const Eigen::VectorXd& z,
                     const Eigen::VectorXd* weights = nullptr);

// Two-sample variant matching generalized_risk_shift.
CombWeights fit_comb_shift(const std::vector<const DensityModel*>& components,
                           const Eigen::MatrixXd& X_quad, const Eigen::MatrixXd& X_lab,
                           const Eigen::VectorXd& z_lab, const Eigen::VectorXd& w);

// Euclidean projection onto the probability simplex.
Eigen::VectorXd project_simplex(const Eigen::VectorXd& v);

struct CdeConfig {
    std::vector<CdeKind> kinds = {CdeKind::ker_nn, CdeKind::series};
    bool comb = true;
    std::vector<int> neighbor_grid = {10, 25, 50};
    std::vector<int> bin_grid = {8, 15, 25};
    std::vector<double> bandwidth_grid = {0.02, 0.05, 0.1};
    std::vector<int> terms_grid = {5, 10, 20};
    int grid_size = 201;

    std::vector<CdeSpec> spec_grid(CdeKind kind) const;
};

struct StratCdeResult {
    struct StratumInfo {
        int stratum = 0;
        std::vector<CdeSpec> chosen;   // one per configured kind
        Eigen::VectorXd alpha;         // comb weights; single 1 when comb is off
    };
    std::vector<StratumInfo> strata;
    std::vector<Eigen::Index> target_rows;   // ascending original row ids
    Eigen::MatrixXd densities;               // |target_rows| x grid_size
    int grid_size = 201;
};

// Per stratum: fit each configured kind on the merged source rows by the
// unweighted risk, combine with per-stratum simplex weights when comb is on,
// and predict the stratum's target rows.
StratCdeResult stratlearn_cde(const CdeConfig& cfg, const Dataset& d,
                              const StrataAssignment& a, int folds, std::uint64_t seed);

// Importance-weighted global fit (one stratum, weighted risk with the
// quadratic term over target covariates).
StratCdeResult weighted_cde(const CdeConfig& cfg, const Dataset& d,
                            const Eigen::VectorXd& source_weights, int folds,
                            std::uint64_t seed);

}  // namespace stratlearn
