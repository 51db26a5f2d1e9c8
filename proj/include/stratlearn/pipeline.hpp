#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "stratlearn/cdens.hpp"
#include "stratlearn/dataset.hpp"
#include "stratlearn/eval.hpp"
#include "stratlearn/learn.hpp"
#include "stratlearn/propensity.hpp"

namespace stratlearn {

enum class MethodKind { stratlearn, biased, ips, kliep, ulsif, nn };
enum class ModeKind { none, weighted_erm, iwcv, importance_sampling, iwcv_plus_sampling };
enum class TaskKind { classification, regression, cde };

std::string to_string(MethodKind m);
std::string to_string(ModeKind m);
std::string to_string(TaskKind t);

struct WeightsConfig {
    int n_centers = 100;
    int k_neighbors = 10;
    std::vector<double> sigma_grid;    // empty: median-distance heuristic
    std::vector<double> lambda_grid = {1e-3, 1e-2, 1e-1, 1.0, 10.0};
};

struct ShiftConfig {
    double beta_a = 13.0;
    double beta_b = 4.0;
    std::string shift_column;
};

// Full run description; parsed strictly (unknown keys rejected) and
// serializable back to the same resolved document.
struct RunConfig {
    std::string input;
    std::optional<std::string> label_column;
    std::optional<std::string> indicator_column;
    TaskKind task = TaskKind::regression;
    MethodKind method = MethodKind::stratlearn;
    ModeKind mode = ModeKind::none;
    std::uint64_t seed = 0;
    int k = 5;
    Eigen::Index min_source = 40;
    int folds = 10;
    bool standardize = true;
    LossKind loss = LossKind::squared;
    Metric metric = Metric::mse;
    int n_boot = 400;
    PropensityOptions propensity;
    std::vector<LearnerSpec> learner_grid;
    CdeConfig cde;
    WeightsConfig weights;
    std::optional<ShiftConfig> shift;
    std::string output;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig from_file(const std::string& path);
    nlohmann::json to_json() const;

    void validate() const;
};

enum class Stage { propensity, stratify, weights, balance, train, predict, evaluate };

// Rejection-shift simulation: writes the shifted dataset and a manifest.
void cmd_simulate(const RunConfig& cfg, const std::string& outdir);

// Figure-style end-to-end flow: propensity, strata, balance, method-specific
// training, prediction, and (when target labels exist) evaluation. `until`
// stops after the named stage for the stage-wise subcommands.
void cmd_pipeline(const RunConfig& cfg, const std::string& outdir,
                  Stage until = Stage::evaluate);

// Comparison table over completed run directories sharing one evaluation set.
void cmd_compare(const std::vector<std::string>& run_dirs, int n_boot, std::uint64_t seed,
                 const std::string& out_path);

// 64-bit FNV-1a over a file's bytes; recorded in manifests.
std::string file_hash(const std::string& path);

}  // namespace stratlearn
