#include "stratlearn/pipeline.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "stratlearn/balance.hpp"
#include "stratlearn/errors.hpp"
#include "stratlearn/rng.hpp"
#include "stratlearn/strata.hpp"
#include "stratlearn/weights.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace stratlearn {

std::string to_string(MethodKind m) {
    switch (m) {
        case MethodKind::stratlearn: return "stratlearn";
        case MethodKind::biased: return "biased";
        case MethodKind::ips: return "ips";
        case MethodKind::kliep: return "kliep";
        case MethodKind::ulsif: return "ulsif";
        case MethodKind::nn: return "nn";
    }
    return "?";
}

std::string to_string(ModeKind m) {
    switch (m) {
        case ModeKind::none: return "none";
        case ModeKind::weighted_erm: return "weighted_erm";
        case ModeKind::iwcv: return "iwcv";
        case ModeKind::importance_sampling: return "importance_sampling";
        case ModeKind::iwcv_plus_sampling: return "iwcv_plus_sampling";
    }
    return "?";
}

std::string to_string(TaskKind t) {
    switch (t) {
        case TaskKind::classification: return "classification";
        case TaskKind::regression: return "regression";
        case TaskKind::cde: return "cde";
    }
    return "?";
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [key, value] : j.items()) {
        (void)value;
        if (!allowed.count(key))
            throw ConfigError("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
T get_or(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError("bad value for '" + key + "': " + e.what());
    }
}

MethodKind parse_method(const std::string& s) {
    if (s == "stratlearn") return MethodKind::stratlearn;
    if (s == "biased") return MethodKind::biased;
    if (s == "ips") return MethodKind::ips;
    if (s == "kliep") return MethodKind::kliep;
    if (s == "ulsif") return MethodKind::ulsif;
    if (s == "nn") return MethodKind::nn;
    throw ConfigError("unknown method '" + s + "'");
}

ModeKind parse_mode(const std::string& s) {
    if (s == "none") return ModeKind::none;
    if (s == "weighted_erm") return ModeKind::weighted_erm;
    if (s == "iwcv") return ModeKind::iwcv;
    if (s == "importance_sampling") return ModeKind::importance_sampling;
    if (s == "iwcv_plus_sampling") return ModeKind::iwcv_plus_sampling;
    throw ConfigError("unknown mode '" + s + "'");
}

TaskKind parse_task(const std::string& s) {
    if (s == "classification") return TaskKind::classification;
    if (s == "regression") return TaskKind::regression;
    if (s == "cde") return TaskKind::cde;
    throw ConfigError("unknown task '" + s + "'");
}

LearnerKind parse_learner_kind(const std::string& s) {
    if (s == "logistic") return LearnerKind::logistic_classifier;
    if (s == "least_squares") return LearnerKind::least_squares;
    if (s == "knn") return LearnerKind::knn_regressor;
    throw ConfigError("unknown learner kind '" + s + "'");
}

CdeKind parse_cde_kind(const std::string& s) {
    if (s == "hist_nn") return CdeKind::hist_nn;
    if (s == "ker_nn") return CdeKind::ker_nn;
    if (s == "series") return CdeKind::series;
    throw ConfigError("unknown density estimator kind '" + s + "'");
}

LossKind parse_loss(const std::string& s) {
    if (s == "logloss") return LossKind::logloss;
    if (s == "squared") return LossKind::squared;
    throw ConfigError("unknown loss '" + s + "'");
}

Metric parse_metric(const std::string& s) {
    if (s == "auc") return Metric::auc;
    if (s == "mse") return Metric::mse;
    if (s == "logloss") return Metric::logloss;
    if (s == "cde_target_risk") return Metric::cde_target_risk;
    throw ConfigError("unknown metric '" + s + "'");
}

void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << content;
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    check_keys(j, {"input", "label_column", "indicator_column", "task", "method", "mode",
                   "seed", "k", "min_source", "folds", "standardize", "loss", "metric",
                   "n_boot", "propensity", "learner_grid", "cde", "weights", "shift",
                   "output"},
               "config");
    RunConfig c;
    if (!j.contains("input")) throw ConfigError("config requires 'input'");
    c.input = j.at("input").get<std::string>();
    if (j.contains("label_column")) c.label_column = j.at("label_column").get<std::string>();
    if (j.contains("indicator_column"))
        c.indicator_column = j.at("indicator_column").get<std::string>();
    c.task = parse_task(get_or<std::string>(j, "task", "regression"));
    c.method = parse_method(get_or<std::string>(j, "method", "stratlearn"));
    c.mode = parse_mode(get_or<std::string>(j, "mode", "none"));
    c.seed = get_or<std::uint64_t>(j, "seed", 0);
    c.k = get_or<int>(j, "k", 5);
    c.min_source = get_or<Eigen::Index>(j, "min_source", 40);
    c.folds = get_or<int>(j, "folds", 10);
    c.standardize = get_or<bool>(j, "standardize", true);
    c.loss = parse_loss(get_or<std::string>(
        j, "loss", c.task == TaskKind::classification ? "logloss" : "squared"));
    c.metric = parse_metric(get_or<std::string>(
        j, "metric",
        c.task == TaskKind::classification
            ? "auc"
            : (c.task == TaskKind::cde ? "cde_target_risk" : "mse")));
    c.n_boot = get_or<int>(j, "n_boot", 400);

    if (j.contains("propensity")) {
        const auto& p = j.at("propensity");
        check_keys(p, {"ridge_lambda", "max_iter", "tol"}, "propensity");
        c.propensity.ridge_lambda = get_or<double>(p, "ridge_lambda", 1e-6);
        c.propensity.max_iter = get_or<int>(p, "max_iter", 100);
        c.propensity.tol = get_or<double>(p, "tol", 1e-8);
    }

    if (j.contains("learner_grid")) {
        for (const auto& e : j.at("learner_grid")) {
            check_keys(e, {"kind", "ridge_lambda", "k_neighbors"}, "learner_grid entry");
            LearnerSpec s;
            s.kind = parse_learner_kind(e.at("kind").get<std::string>());
            s.ridge_lambda = get_or<double>(e, "ridge_lambda", 1e-10);
            s.k_neighbors = get_or<int>(e, "k_neighbors", 5);
            c.learner_grid.push_back(s);
        }
    }
    if (c.learner_grid.empty()) {
        if (c.task == TaskKind::classification) {
            for (double l : {1e-6, 1e-3, 1e-1}) {
                LearnerSpec s;
                s.kind = LearnerKind::logistic_classifier;
                s.ridge_lambda = l;
                c.learner_grid.push_back(s);
            }
        } else {
            for (double l : {1e-8, 1e-2}) {
                LearnerSpec s;
                s.kind = LearnerKind::least_squares;
                s.ridge_lambda = l;
                c.learner_grid.push_back(s);
            }
            for (int kk : {5, 25}) {
                LearnerSpec s;
                s.kind = LearnerKind::knn_regressor;
                s.k_neighbors = kk;
                c.learner_grid.push_back(s);
            }
        }
    }

    if (j.contains("cde")) {
        const auto& e = j.at("cde");
        check_keys(e, {"kinds", "comb", "neighbor_grid", "bin_grid", "bandwidth_grid",
                       "terms_grid", "grid_size"},
                   "cde");
        if (e.contains("kinds")) {
            c.cde.kinds.clear();
            for (const auto& kk : e.at("kinds"))
                c.cde.kinds.push_back(parse_cde_kind(kk.get<std::string>()));
        }
        c.cde.comb = get_or<bool>(e, "comb", c.cde.comb);
        c.cde.neighbor_grid = get_or<std::vector<int>>(e, "neighbor_grid", c.cde.neighbor_grid);
        c.cde.bin_grid = get_or<std::vector<int>>(e, "bin_grid", c.cde.bin_grid);
        c.cde.bandwidth_grid =
            get_or<std::vector<double>>(e, "bandwidth_grid", c.cde.bandwidth_grid);
        c.cde.terms_grid = get_or<std::vector<int>>(e, "terms_grid", c.cde.terms_grid);
        c.cde.grid_size = get_or<int>(e, "grid_size", c.cde.grid_size);
    }

    if (j.contains("weights")) {
        const auto& e = j.at("weights");
        check_keys(e, {"n_centers", "k_neighbors", "sigma_grid", "lambda_grid"}, "weights");
        c.weights.n_centers = get_or<int>(e, "n_centers", 100);
        c.weights.k_neighbors = get_or<int>(e, "k_neighbors", 10);
        c.weights.sigma_grid = get_or<std::vector<double>>(e, "sigma_grid", {});
        c.weights.lambda_grid =
            get_or<std::vector<double>>(e, "lambda_grid", c.weights.lambda_grid);
    }

    if (j.contains("shift")) {
        const auto& e = j.at("shift");
        check_keys(e, {"beta_a", "beta_b", "shift_column"}, "shift");
        ShiftConfig s;
        s.beta_a = get_or<double>(e, "beta_a", 13.0);
        s.beta_b = get_or<double>(e, "beta_b", 4.0);
        if (!e.contains("shift_column")) throw ConfigError("shift requires 'shift_column'");
        s.shift_column = e.at("shift_column").get<std::string>();
        c.shift = s;
    }

    c.output = get_or<std::string>(j, "output", "");
    c.validate();
    return c;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error: " + std::string(e.what()));
    }
    return from_json(j);
}

json RunConfig::to_json() const {
    json j;
    j["input"] = input;
    if (label_column) j["label_column"] = *label_column;
    if (indicator_column) j["indicator_column"] = *indicator_column;
    j["task"] = stratlearn::to_string(task);
    j["method"] = stratlearn::to_string(method);
    j["mode"] = stratlearn::to_string(mode);
    j["seed"] = seed;
    j["k"] = k;
    j["min_source"] = min_source;
    j["folds"] = folds;
    j["standardize"] = standardize;
    j["loss"] = stratlearn::to_string(loss);
    j["metric"] = stratlearn::to_string(metric);
    j["n_boot"] = n_boot;
    j["propensity"] = {{"ridge_lambda", propensity.ridge_lambda},
                       {"max_iter", propensity.max_iter},
                       {"tol", propensity.tol}};
    j["learner_grid"] = json::array();
    for (const auto& s : learner_grid) {
        json e;
        e["kind"] = stratlearn::to_string(s.kind);
        e["ridge_lambda"] = s.ridge_lambda;
        e["k_neighbors"] = s.k_neighbors;
        j["learner_grid"].push_back(e);
    }
    json cj;
    cj["kinds"] = json::array();
    for (auto kk : cde.kinds) cj["kinds"].push_back(stratlearn::to_string(kk));
    cj["comb"] = cde.comb;
    cj["neighbor_grid"] = cde.neighbor_grid;
    cj["bin_grid"] = cde.bin_grid;
    cj["bandwidth_grid"] = cde.bandwidth_grid;
    cj["terms_grid"] = cde.terms_grid;
    cj["grid_size"] = cde.grid_size;
    j["cde"] = cj;
    j["weights"] = {{"n_centers", weights.n_centers},
                    {"k_neighbors", weights.k_neighbors},
                    {"sigma_grid", weights.sigma_grid},
                    {"lambda_grid", weights.lambda_grid}};
    if (shift)
        j["shift"] = {{"beta_a", shift->beta_a},
                      {"beta_b", shift->beta_b},
                      {"shift_column", shift->shift_column}};
    j["output"] = output;
    return j;
}

void RunConfig::validate() const {
    if (input.empty()) throw ConfigError("config requires 'input'");
    if (k < 1) throw ConfigError("k must be at least 1");
    if (folds < 2) throw ConfigError("folds must be at least 2");
    if (min_source < 1) throw ConfigError("min_source must be at least 1");
    if (n_boot < 2) throw ConfigError("n_boot must be at least 2");
    const bool weighting = method == MethodKind::ips || method == MethodKind::kliep ||
                           method == MethodKind::ulsif || method == MethodKind::nn;
    if (weighting && mode == ModeKind::none)
        throw ConfigError("weighting methods require a mode");
    if (!weighting && mode != ModeKind::none)
        throw ConfigError("method '" + stratlearn::to_string(method) + "' takes no mode");
    if (task == TaskKind::cde && weighting && mode != ModeKind::weighted_erm)
        throw ConfigError("cde task supports weighting methods in weighted_erm mode only");
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open file for hashing: " + path);
    std::uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 15];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0) {
        for (std::streamsize i = 0; i < in.gcount(); ++i) {
            h ^= static_cast<unsigned char>(buf[i]);
            h *= 0x100000001b3ull;
        }
        if (!in) break;
    }
    std::ostringstream os;
    os << "fnv1a:" << std::hex << h;
    return os.str();
}

void cmd_simulate(const RunConfig& cfg, const std::string& outdir) {
    if (!cfg.shift) throw ConfigError("simulate requires a 'shift' section");
    fs::create_directories(outdir);

    CsvLoadReport lr;
    Dataset d = load_csv(cfg.input, cfg.label_column, cfg.indicator_column, &lr);

    Eigen::Index col = -1;
    for (Eigen::Index jcol = 0; jcol < d.f(); ++jcol)
        if (d.column_names[static_cast<std::size_t>(jcol)] == cfg.shift->shift_column)
            col = jcol;
    if (col < 0)
        throw ConfigError("shift column '" + cfg.shift->shift_column + "' not found");

    ShiftSpec sp;
    sp.beta_a = cfg.shift->beta_a;
    sp.beta_b = cfg.shift->beta_b;
    sp.shift_column = col;
    sp.seed = cfg.seed;
    const Dataset shifted = simulate_shift(d, sp);

    const std::string data_path = (fs::path(outdir) / "simulated.csv").string();
    write_csv(shifted, data_path, cfg.label_column.value_or("y"), "s");

    json manifest;
    manifest["command"] = "simulate";
    manifest["config"] = cfg.to_json();
    manifest["input_hash"] = file_hash(cfg.input);
    manifest["seed"] = cfg.seed;
    manifest["beta_a"] = cfg.shift->beta_a;
    manifest["beta_b"] = cfg.shift->beta_b;
    manifest["n_source"] = shifted.n_source();
    manifest["n_target"] = shifted.n_target();
    manifest["rejected_rows"] = lr.rejected.size();
    write_text((fs::path(outdir) / "manifest.json").string(), manifest.dump(2) + "\n");
}

namespace {

struct LearnOutputs {
    Eigen::VectorXd predictions;                       // per row, NaN off-target
    std::vector<Eigen::VectorXd> src_pred_by_stratum;  // split over quantile strata
    std::vector<Eigen::VectorXd> tgt_pred_by_stratum;
    std::string cv_csv;
};

LearnOutputs run_learn_method(const RunConfig& cfg, const Dataset& d,
                              const StrataAssignment& a, const WeightVector* wv) {
    LearnOutputs out;
    std::ostringstream cv;
    cv.precision(17);
    cv << "stratum,spec,risk,selected\n";

    if (cfg.method == MethodKind::stratlearn || cfg.method == MethodKind::biased) {
        StrataAssignment single_holder;
        const StrataAssignment* ap = &a;
        if (cfg.method == MethodKind::biased) {
            single_holder = StrataAssignment::single(static_cast<std::size_t>(d.n()));
            ap = &single_holder;
        }
        const StratFitResult res = stratlearn_fit_predict(cfg.learner_grid, d, *ap, cfg.folds,
                                                          cfg.loss, cfg.seed);
        out.predictions = res.predictions;
        for (const auto& sf : res.strata)
            for (std::size_t g = 0; g < sf.cv.table.size(); ++g)
                cv << sf.stratum << "," << sf.cv.table[g].spec.label() << ","
                   << sf.cv.table[g].risk << "," << (g == sf.cv.best_index ? 1 : 0) << "\n";

        if (cfg.method == MethodKind::stratlearn) {
            out.src_pred_by_stratum = res.source_pred_by_stratum;
            out.tgt_pred_by_stratum = res.target_pred_by_stratum;
        } else {
            const Learner& model = res.strata.front().model;
            out.src_pred_by_stratum.resize(static_cast<std::size_t>(a.k));
            out.tgt_pred_by_stratum.resize(static_cast<std::size_t>(a.k));
            for (int j = 1; j <= a.k; ++j) {
                const auto sr = a.rows_in(j, d.s, 1);
                const auto tr = a.rows_in(j, d.s, 0);
                if (!sr.empty())
                    out.src_pred_by_stratum[static_cast<std::size_t>(j - 1)] =
                        model.predict(d.rows(sr));
                if (!tr.empty())
                    out.tgt_pred_by_stratum[static_cast<std::size_t>(j - 1)] =
                        model.predict(d.rows(tr));
            }
        }
        out.cv_csv = cv.str();
        return out;
    }

    // weighting methods: one global model with mode-specific CV and fit
    if (!wv) throw DataError("weighting method without computed weights");
    const auto src = d.source_rows();
    const Eigen::MatrixXd X_S = d.rows(src);
    const Eigen::VectorXd y_S = d.labels(src);
    const Eigen::Index n_S = X_S.rows();

    const bool cv_weighted = cfg.mode == ModeKind::iwcv ||
                             cfg.mode == ModeKind::iwcv_plus_sampling ||
                             cfg.mode == ModeKind::weighted_erm;
    const CvResult cvres =
        cross_validate(cfg.learner_grid, X_S, y_S, cfg.folds, cfg.loss,
                       cv_weighted ? &wv->w : nullptr, derive_seed(cfg.seed, seeds::cv, 1));
    for (std::size_t g = 0; g < cvres.table.size(); ++g)
        cv << 1 << "," << cvres.table[g].spec.label() << "," << cvres.table[g].risk << ","
           << (g == cvres.best_index ? 1 : 0) << "\n";

    Learner model;
    const std::uint64_t fit_seed = derive_seed(cfg.seed, seeds::fit, 1);
    switch (cfg.mode) {
        case ModeKind::iwcv:
            model = fit(cvres.best(), X_S, y_S, nullptr, fit_seed);
            break;
        case ModeKind::weighted_erm:
            model = fit(cvres.best(), X_S, y_S, &wv->w, fit_seed);
            break;
        case ModeKind::importance_sampling:
        case ModeKind::iwcv_plus_sampling: {
            const Eigen::VectorXd p = sampling_probabilities(*wv, n_S, d.n_target());
            model = importance_sampled_fit(cvres.best(), X_S, y_S, p, n_S, fit_seed);
            break;
        }
        case ModeKind::none:
            throw ConfigError("weighting method requires a mode");
    }

    out.predictions =
        Eigen::VectorXd::Constant(d.n(), std::numeric_limits<double>::quiet_NaN());
    const auto tgt = d.target_rows();
    if (!tgt.empty()) {
        const Eigen::VectorXd pt = model.predict(d.rows(tgt));
        for (std::size_t i = 0; i < tgt.size(); ++i)
            out.predictions[tgt[i]] = pt[static_cast<Eigen::Index>(i)];
    }
    out.src_pred_by_stratum.resize(static_cast<std::size_t>(a.k));
    out.tgt_pred_by_stratum.resize(static_cast<std::size_t>(a.k));
    for (int j = 1; j <= a.k; ++j) {
        const auto sr = a.rows_in(j, d.s, 1);
        const auto tr = a.rows_in(j, d.s, 0);
        if (!sr.empty())
            out.src_pred_by_stratum[static_cast<std::size_t>(j - 1)] =
                model.predict(d.rows(sr));
        if (!tr.empty())
            out.tgt_pred_by_stratum[static_cast<std::size_t>(j - 1)] =
                model.predict(d.rows(tr));
    }
    out.cv_csv = cv.str();
    return out;
}

}  // namespace

void cmd_pipeline(const RunConfig& cfg, const std::string& outdir, Stage until) {
    cfg.validate();
    fs::create_directories(outdir);
    const fs::path out(outdir);

    json manifest;
    manifest["command"] = "pipeline";
    manifest["config"] = cfg.to_json();
    manifest["seed"] = cfg.seed;
    manifest["input_hash"] = file_hash(cfg.input);
    json run_info = json::object();
    std::vector<std::string> artifacts;
    auto emit = [&](const std::string& name, const std::string& content) {
        write_text((out / name).string(), content);
        artifacts.push_back(name);
    };
    auto finish = [&]() {
        manifest["run_info"] = run_info;
        std::sort(artifacts.begin(), artifacts.end());
        manifest["artifacts"] = artifacts;
        write_text((out / "manifest.json").string(), manifest.dump(2) + "\n");
    };

    // --- load and standardize ---
    CsvLoadReport lr;
    Dataset d = load_csv(cfg.input, cfg.label_column, cfg.indicator_column, &lr);
    d.validate(/*require_both_groups=*/true);
    run_info["rejected_rows"] = lr.rejected.size();
    run_info["n_source"] = d.n_source();
    run_info["n_target"] = d.n_target();
    if (cfg.standardize) {
        auto [ds, rec] = standardize(d);
        d = std::move(ds);
        emit("standardize.txt", rec.to_text());
    }

    // --- propensity ---
    const PropensityModel pm = fit_propensity(d, cfg.propensity);
    const Eigen::VectorXd scores = predict_propensity(pm, d.X);
    emit("propensity.txt", pm.to_text());
    {
        std::ostringstream os;
        os.precision(17);
        os << "row,s,score\n";
        for (Eigen::Index i = 0; i < d.n(); ++i)
            os << i << "," << int(d.s[i]) << "," << scores[i] << "\n";
        emit("scores.csv", os.str());
    }
    run_info["propensity_converged"] = pm.converged;
    run_info["propensity_iterations"] = pm.iterations;
    run_info["separation_warning"] = pm.separation_warning;
    if (until == Stage::propensity) return finish();

    // --- stratify + merge ---
    StrataAssignment a;
    if (cfg.k == 1) {
        a = StrataAssignment::single(static_cast<std::size_t>(d.n()));
    } else {
        const std::vector<double> sv(scores.data(), scores.data() + scores.size());
        a = stratify(sv, d.s, cfg.k);
        a = merge_small_strata(a, d.s, cfg.min_source);
    }
    {
        std::ostringstream os;
        os.precision(17);
        os << "row,s,score,stratum\n";
        for (Eigen::Index i = 0; i < d.n(); ++i)
            os << i << "," << int(d.s[i]) << "," << scores[i] << ","
               << a.stratum_of[static_cast<std::size_t>(i)] << "\n";
        emit("strata.csv", os.str());
    }
    const StrataReport srep = strata_report(a, d);
    emit("strata_report.csv", srep.to_csv());
    emit("strata_report.json", srep.to_json() + "\n");
    if (!a.deficient.empty()) run_info["deficient_strata"] = a.deficient;
    if (until == Stage::stratify) return finish();

    // --- importance weights (weighting methods only) ---
    const bool weighting = cfg.method == MethodKind::ips || cfg.method == MethodKind::kliep ||
                           cfg.method == MethodKind::ulsif || cfg.method == MethodKind::nn;
    WeightVector wv;
    if (weighting) {
        const auto src = d.source_rows();
        const Eigen::MatrixXd X_S = d.rows(src);
        const Eigen::MatrixXd X_T = d.rows(d.target_rows());
        switch (cfg.method) {
            case MethodKind::ips: {
                Eigen::VectorXd es(static_cast<Eigen::Index>(src.size()));
                for (std::size_t i = 0; i < src.size(); ++i)
                    es[static_cast<Eigen::Index>(i)] = scores[src[i]];
                wv = ips_weights(es, d.n_source(), d.n_target());
                break;
            }
            case MethodKind::kliep: {
                const auto grid = cfg.weights.sigma_grid.empty()
                                      ? median_distance_sigma_grid(X_S, X_T)
                                      : cfg.weights.sigma_grid;
                wv = kliep_weights(X_S, X_T, grid, cfg.weights.n_centers, cfg.seed);
                if (!wv.fit_ok)
                    throw NumericalError("kliep failed to fit importance weights");
                break;
            }
            case MethodKind::ulsif: {
                const auto grid = cfg.weights.sigma_grid.empty()
                                      ? median_distance_sigma_grid(X_S, X_T)
                                      : cfg.weights.sigma_grid;
                wv = ulsif_weights(X_S, X_T, grid, cfg.weights.lambda_grid,
                                   cfg.weights.n_centers, cfg.seed);
                break;
            }
            case MethodKind::nn:
                wv = nn_weights(X_S, X_T, cfg.weights.k_neighbors);
                break;
            default: break;
        }
        {
            std::ostringstream os;
            os.precision(17);
            os << "source_row,weight\n";
            for (std::size_t i = 0; i < src.size(); ++i)
                os << src[i] << "," << wv.w[static_cast<Eigen::Index>(i)] << "\n";
            emit("weights.csv", os.str());
        }
        run_info["weight_method"] = to_string(wv.method);
        run_info["weight_sigma"] = wv.hyperparams.sigma;
        run_info["weight_lambda"] = wv.hyperparams.lambda;
        run_info["weight_n_centers"] = wv.hyperparams.n_centers;
        run_info["weight_k_neighbors"] = wv.hyperparams.k_neighbors;
    } else if (until == Stage::weights) {
        throw ConfigError("method '" + to_string(cfg.method) + "' has no importance weights");
    }
    if (until == Stage::weights) return finish();

    // --- covariate balance ---
    const BalanceReport brep = balance_report(d, a);
    emit("balance_report.csv", brep.to_csv());
    emit("balance_report.json", brep.to_json() + "\n");
    if (until == Stage::balance) return finish();

    // --- train / predict / evaluate ---
    if (cfg.task == TaskKind::cde) {
        if (!d.has_labels) throw DataError("cde task requires a label column");
        const auto src = d.source_rows();
        const ZRescale zr = ZRescale::fit(d.labels(src));
        Dataset d01 = d;
        for (Eigen::Index i = 0; i < d.n(); ++i)
            if (d.y_present[i]) d01.y[i] = std::clamp(zr.to_unit(d.y[i]), 0.0, 1.0);
        run_info["z_lo"] = zr.lo;
        run_info["z_hi"] = zr.hi;

        StratCdeResult cres;
        if (cfg.method == MethodKind::stratlearn) {
            cres = stratlearn_cde(cfg.cde, d01, a, cfg.folds, cfg.seed);
        } else if (cfg.method == MethodKind::biased) {
            cres = stratlearn_cde(cfg.cde, d01,
                                  StrataAssignment::single(static_cast<std::size_t>(d.n())),
                                  cfg.folds, cfg.seed);
        } else {
            cres = weighted_cde(cfg.cde, d01, wv.w, cfg.folds, cfg.seed);
        }

        {
            std::ostringstream os;
            os.precision(17);
            os << "stratum,kind,chosen,alpha\n";
            for (const auto& si : cres.strata)
                for (std::size_t kk = 0; kk < si.chosen.size(); ++kk)
                    os << si.stratum << "," << to_string(si.chosen[kk].kind) << ","
                       << si.chosen[kk].label() << ","
                       << (kk < static_cast<std::size_t>(si.alpha.size())
                               ? fmt(si.alpha[static_cast<Eigen::Index>(kk)])
                               : "1")
                       << "\n";
            emit("cv_report.csv", os.str());
        }
        if (until == Stage::train) return finish();

        {
            std::ostringstream os;
            os.precision(17);
            os << "row,grid_index,value\n";
            for (std::size_t r = 0; r < cres.target_rows.size(); ++r)
                for (int b = 0; b < cres.grid_size; ++b)
                    os << cres.target_rows[r] << "," << b << ","
                       << cres.densities(static_cast<Eigen::Index>(r), b) << "\n";
            emit("densities.csv", os.str());
        }
        {
            json dj;
            dj["grid_size"] = cres.grid_size;
            dj["z_lo"] = zr.lo;
            dj["z_hi"] = zr.hi;
            dj["rows"] = json::array();
            for (auto r : cres.target_rows) dj["rows"].push_back(r);
            dj["values"] = json::array();
            for (std::size_t r = 0; r < cres.target_rows.size(); ++r) {
                json row = json::array();
                for (int b = 0; b < cres.grid_size; ++b)
                    row.push_back(cres.densities(static_cast<Eigen::Index>(r), b));
                dj["values"].push_back(row);
            }
            emit("densities.json", dj.dump() + "\n");
        }
        if (until == Stage::predict) return finish();

        std::vector<Eigen::Index> eval_pos;
        for (std::size_t r = 0; r < cres.target_rows.size(); ++r)
            if (d.y_present[cres.target_rows[r]])
                eval_pos.push_back(static_cast<Eigen::Index>(r));
        if (!eval_pos.empty()) {
            DensityGrid g;
            g.grid_size = cres.grid_size;
            g.values.resize(static_cast<Eigen::Index>(eval_pos.size()), cres.grid_size);
            Eigen::VectorXd contrib(static_cast<Eigen::Index>(eval_pos.size()));
            std::ostringstream os;
            os.precision(17);
            os << "row,contribution\n";
            for (std::size_t i = 0; i < eval_pos.size(); ++i) {
                const Eigen::Index r = eval_pos[i];
                const Eigen::Index row_id = cres.target_rows[static_cast<std::size_t>(r)];
                g.values.row(static_cast<Eigen::Index>(i)) = cres.densities.row(r);
                contrib[static_cast<Eigen::Index>(i)] =
                    g.row_square_integral(static_cast<Eigen::Index>(i)) -
                    2.0 * g.interpolate(static_cast<Eigen::Index>(i), d01.y[row_id]);
                os << row_id << "," << contrib[static_cast<Eigen::Index>(i)] << "\n";
            }
            emit("eval_data.csv", os.str());
            EvalReport rep;
            rep.metric = Metric::cde_target_risk;
            rep.n = contrib.size();
            rep.value = contrib.mean();
            rep.n_boot = cfg.n_boot;
            rep.bootstrap_se = bootstrap_se_mean(contrib, cfg.n_boot, cfg.seed).se;
            emit("eval_report.json", rep.to_json() + "\n");
        }
        return finish();
    }

    if (!d.has_labels) throw DataError("training requires a label column");
    const LearnOutputs lo = run_learn_method(cfg, d, a, weighting ? &wv : nullptr);
    emit("cv_report.csv", lo.cv_csv);
    if (until == Stage::train) return finish();

    {
        std::ostringstream os;
        os.precision(17);
        os << "row,stratum,prediction\n";
        for (Eigen::Index i = 0; i < d.n(); ++i) {
            if (d.s[i] != 0) continue;
            os << i << "," << a.stratum_of[static_cast<std::size_t>(i)] << ","
               << lo.predictions[i] << "\n";
        }
        emit("predictions.csv", os.str());
    }
    if (cfg.task == TaskKind::classification) {
        const OutcomeBalance ob =
            predicted_outcome_balance(lo.src_pred_by_stratum, lo.tgt_pred_by_stratum, 0.5);
        emit("outcome_balance.csv", ob.to_csv());
    }
    if (until == Stage::predict) return finish();

    std::vector<Eigen::Index> eval_rows;
    for (Eigen::Index i = 0; i < d.n(); ++i)
        if (d.s[i] == 0 && d.y_present[i]) eval_rows.push_back(i);
    if (!eval_rows.empty()) {
        Eigen::VectorXd pred(static_cast<Eigen::Index>(eval_rows.size()));
        Eigen::VectorXd lab(static_cast<Eigen::Index>(eval_rows.size()));
        std::ostringstream os;
        os.precision(17);
        os << "row,label,prediction\n";
        for (std::size_t i = 0; i < eval_rows.size(); ++i) {
            pred[static_cast<Eigen::Index>(i)] = lo.predictions[eval_rows[i]];
            lab[static_cast<Eigen::Index>(i)] = d.y[eval_rows[i]];
            os << eval_rows[i] << "," << lab[static_cast<Eigen::Index>(i)] << ","
               << pred[static_cast<Eigen::Index>(i)] << "\n";
        }
        emit("eval_data.csv", os.str());
        const EvalReport rep = evaluate(cfg.metric, pred, lab, cfg.n_boot, cfg.seed);
        emit("eval_report.json", rep.to_json() + "\n");
        if (cfg.metric == Metric::auc) emit("roc.csv", rep.roc_csv());
    }
    finish();
}

namespace {

struct CompareRun {
    std::string label;
    Metric metric = Metric::mse;
    std::vector<long> rows;
    Eigen::VectorXd labels;
    Eigen::VectorXd values;
    bool is_cde = false;
};

CompareRun read_run(const std::string& dir) {
    CompareRun run;
    {
        std::ifstream in(fs::path(dir) / "manifest.json");
        if (!in) throw DataError("missing manifest.json in " + dir);
        json m;
        in >> m;
        const auto& c = m.at("config");
        run.label = c.at("method").get<std::string>();
        const std::string mode = c.at("mode").get<std::string>();
        if (mode != "none") run.label += ":" + mode;
        run.metric = parse_metric(c.at("metric").get<std::string>());
    }
    std::ifstream in(fs::path(dir) / "eval_data.csv");
    if (!in) throw DataError("missing eval_data.csv in " + dir + " (run not evaluated?)");
    std::string header;
    std::getline(in, header);
    run.is_cde = header == "row,contribution";
    std::vector<double> labs, vals;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string cell;
        std::getline(ls, cell, ',');
        run.rows.push_back(std::stol(cell));
        if (run.is_cde) {
            std::getline(ls, cell, ',');
            vals.push_back(std::stod(cell));
        } else {
            std::getline(ls, cell, ',');
            labs.push_back(std::stod(cell));
            std::getline(ls, cell, ',');
            vals.push_back(std::stod(cell));
        }
    }
    run.values =
        Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
    if (!run.is_cde)
        run.labels =
            Eigen::Map<Eigen::VectorXd>(labs.data(), static_cast<Eigen::Index>(labs.size()));
    return run;
}

}  // namespace

void cmd_compare(const std::vector<std::string>& run_dirs, int n_boot, std::uint64_t seed,
                 const std::string& out_path) {
    if (run_dirs.size() < 2) throw ConfigError("compare needs at least 2 run directories");
    std::vector<CompareRun> runs;
    for (const auto& dir : run_dirs) runs.push_back(read_run(dir));
    for (std::size_t r = 1; r < runs.size(); ++r) {
        if (runs[r].rows != runs[0].rows)
            throw DataError("evaluation row sets differ between " + run_dirs[0] + " and " +
                            run_dirs[r]);
        if (runs[r].is_cde != runs[0].is_cde)
            throw DataError("cannot compare density and learner runs");
        if (!runs[r].is_cde && runs[r].labels != runs[0].labels)
            throw DataError("evaluation labels differ between runs");
        if (runs[r].metric != runs[0].metric) throw DataError("runs use different metrics");
    }

    std::ostringstream os;
    os.precision(17);
    os << "method,metric,value,se,n_boot\n";
    for (const auto& run : runs) {
        double value, se;
        if (run.is_cde) {
            value = run.values.mean();
            se = bootstrap_se_mean(run.values, n_boot, seed).se;
        } else {
            value = metric_value(run.metric, run.values, run.labels);
            se = bootstrap_se(run.metric, run.values, run.labels, n_boot, seed).se;
        }
        os << run.label << "," << to_string(run.metric) << "," << value << "," << se << ","
           << n_boot << "\n";
    }
    write_text(out_path, os.str());

    std::ostringstream ps;
    ps.precision(17);
    ps << "method_a,method_b,diff,diff_se\n";
    for (std::size_t i = 0; i < runs.size(); ++i) {
        for (std::size_t j = i + 1; j < runs.size(); ++j) {
            PairedBootstrap pb;
            if (runs[i].is_cde) {
                pb = paired_bootstrap_mean_diff(runs[i].values, runs[j].values, n_boot, seed);
            } else {
                pb = paired_bootstrap_diff(runs[i].metric, runs[i].values, runs[j].values,
                                           runs[i].labels, n_boot, seed);
            }
            ps << runs[i].label << "," << runs[j].label << "," << pb.diff << "," << pb.se
               << "\n";
        }
    }
    const fs::path pairs = fs::path(out_path).parent_path() /
                           (fs::path(out_path).stem().string() + "_pairs.csv");
    write_text(pairs.string(), ps.str());
}

}  // namespace stratlearn
