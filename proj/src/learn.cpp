#include "stratlearn/learn.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include "stratlearn/errors.hpp"
#include "stratlearn/glm.hpp"
#include "stratlearn/rng.hpp"

namespace stratlearn {

std::string to_string(LearnerKind k) {
    switch (k) {
        case LearnerKind::logistic_classifier: return "logistic";
        case LearnerKind::least_squares: return "least_squares";
        case LearnerKind::knn_regressor: return "knn";
    }
    return "?";
}

std::string to_string(LossKind k) {
    return k == LossKind::logloss ? "logloss" : "squared";
}

std::string LearnerSpec::label() const {
    std::ostringstream os;
    os << to_string(kind);
    if (kind == LearnerKind::knn_regressor) os << "(k=" << k_neighbors << ")";
    else os << "(lambda=" << ridge_lambda << ")";
    return os.str();
}

Eigen::VectorXd Learner::predict(const Eigen::MatrixXd& X) const {
    if (!fitted) throw DataError("predict on an unfitted learner");
    switch (spec.kind) {
        case LearnerKind::least_squares:
            return (X * beta.tail(X.cols())).array() + beta[0];
        case LearnerKind::logistic_classifier: {
            if (X.cols() != beta.size() - 1)
                throw DataError("learner prediction column mismatch");
            Eigen::VectorXd eta = (X * beta.tail(X.cols())).array() + beta[0];
            for (Eigen::Index i = 0; i < eta.size(); ++i)
                eta[i] = glm::logistic_open(eta[i]);
            return eta;
        }
        case LearnerKind::knn_regressor: {
            if (X.cols() != train_X.cols())
                throw DataError("learner prediction column mismatch");
            const int k =
                static_cast<int>(std::min<Eigen::Index>(spec.k_neighbors, train_X.rows()));
            Eigen::VectorXd out(X.rows());
            std::vector<std::pair<double, Eigen::Index>> dist(
                static_cast<std::size_t>(train_X.rows()));
            for (Eigen::Index q = 0; q < X.rows(); ++q) {
                for (Eigen::Index i = 0; i < train_X.rows(); ++i)
                    dist[static_cast<std::size_t>(i)] = {
                        (train_X.row(i) - X.row(q)).squaredNorm(), i};
                std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
                double num = 0.0, den = 0.0;
                for (int j = 0; j < k; ++j) {
                    const Eigen::Index i = dist[static_cast<std::size_t>(j)].second;
                    num += train_w[i] * train_y[i];
                    den += train_w[i];
                }
                out[q] = num / den;
            }
            return out;
        }
    }
    throw DataError("unknown learner kind");
}

Learner fit(const LearnerSpec& spec, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
            const Eigen::VectorXd* w, std::uint64_t seed) {
    (void)seed;   // all current learners are deterministic; kept for interface stability
    if (X.rows() == 0) throw DataError("fit on empty data");
    if (y.size() != X.rows()) throw DataError("label length mismatch in fit");
    if (w && w->size() != X.rows()) throw DataError("weight length mismatch in fit");
    if (w && (!w->allFinite() || w->minCoeff() < 0.0))
        throw DataError("fit weights must be finite and nonnegative");

    Learner l;
    l.spec = spec;
    switch (spec.kind) {
        case LearnerKind::least_squares: {
            const double lambda = std::max(spec.ridge_lambda, 1e-10);
            l.beta = glm::fit_ridge_least_squares(X, y, w, lambda);
            break;
        }
        case LearnerKind::logistic_classifier: {
            for (Eigen::Index i = 0; i < y.size(); ++i)
                if (y[i] != 0.0 && y[i] != 1.0)
                    throw DataError("logistic learner requires binary labels");
            const auto fit = glm::fit_logistic_irls(X, y, w, std::max(spec.ridge_lambda, 0.0),
                                                    200, 1e-10);
            l.beta = fit.beta;
            if (fit.degenerate) {
                l.degenerate = true;
                l.warning = "all labels in one class; constant predictor";
            }
            break;
        }
        case LearnerKind::knn_regressor: {
            if (spec.k_neighbors < 1) throw ConfigError("k_neighbors must be positive");
            std::vector<Eigen::Index> keep;
            for (Eigen::Index i = 0; i < X.rows(); ++i)
                if (!w || (*w)[i] > 0.0) keep.push_back(i);
            if (keep.empty()) throw DataError("knn fit: all rows have zero weight");
            l.train_X.resize(static_cast<Eigen::Index>(keep.size()), X.cols());
            l.train_y.resize(static_cast<Eigen::Index>(keep.size()));
            l.train_w.resize(static_cast<Eigen::Index>(keep.size()));
            for (std::size_t i = 0; i < keep.size(); ++i) {
                l.train_X.row(static_cast<Eigen::Index>(i)) = X.row(keep[i]);
                l.train_y[static_cast<Eigen::Index>(i)] = y[keep[i]];
                l.train_w[static_cast<Eigen::Index>(i)] = w ? (*w)[keep[i]] : 1.0;
            }
            if (spec.k_neighbors > l.train_X.rows())
                l.warning = "k_neighbors capped at training size";
            break;
        }
    }
    l.fitted = true;
    return l;
}

RiskEstimate empirical_risk(const Eigen::VectorXd& pred, const Eigen::VectorXd& y,
                            LossKind loss, const Eigen::VectorXd* w) {
    if (pred.size() != y.size()) throw DataError("prediction/label length mismatch");
    if (w && w->size() != y.size()) throw DataError("weight length mismatch");
    constexpr double eps = 1e-12;

    RiskEstimate r;
    r.loss_kind = loss;
    r.weighted = w != nullptr;
    r.n = y.size();
    double total = 0.0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
        const double wi = w ? (*w)[i] : 1.0;
        double li;
        if (loss == LossKind::squared) {
            const double e = pred[i] - y[i];
            li = e * e;
        } else {
            double p = pred[i];
            if (p < eps || p > 1.0 - eps) {
                p = std::clamp(p, eps, 1.0 - eps);
                r.clipped = true;
            }
            li = -(y[i] * std::log(p) + (1.0 - y[i]) * std::log1p(-p));
        }
        total += wi * li;
    }
    r.value = total / static_cast<double>(y.size());
    if (!std::isfinite(r.value)) throw NumericalError("empirical risk is non-finite");
    return r;
}

std::string CvResult::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "spec,risk,selected\n";
    for (std::size_t i = 0; i < table.size(); ++i)
        os << table[i].spec.label() << "," << table[i].risk << ","
           << (i == best_index ? 1 : 0) << "\n";
    return os.str();
}

std::vector<int> fold_assignment(Eigen::Index n, int folds, std::uint64_t seed,
                                 std::uint64_t reshuffle) {
    std::vector<std::size_t> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(seed, seeds::cv, reshuffle));
    rng.shuffle(perm);
    std::vector<int> fold(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < perm.size(); ++i)
        fold[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));
    return fold;
}

namespace {

bool folds_have_both_classes(const Eigen::VectorXd& y, const std::vector<int>& fold,
                             int folds) {
    for (int f = 0; f < folds; ++f) {
        bool pos = false, neg = false;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            if (fold[static_cast<std::size_t>(i)] != f) {   // training part of fold f
                if (y[i] == 1.0) pos = true;
                else neg = true;
            }
        }
        if (!pos || !neg) return false;
    }
    return true;
}

}  // namespace

CvResult cross_validate(const std::vector<LearnerSpec>& grid, const Eigen::MatrixXd& X,
                        const Eigen::VectorXd& y, int folds, LossKind loss,
                        const Eigen::VectorXd* w, std::uint64_t seed) {
    if (grid.empty()) throw ConfigError("empty hyperparameter grid");
    if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
    if (X.rows() < folds) throw DataError("fewer rows than folds");

    std::vector<int> fold = fold_assignment(X.rows(), folds, seed);
    const bool any_logistic =
        std::any_of(grid.begin(), grid.end(), [](const LearnerSpec& s) {
            return s.kind == LearnerKind::logistic_classifier;
        });
    if (any_logistic && !folds_have_both_classes(y, fold, folds)) {
        fold = fold_assignment(X.rows(), folds, seed, 1);
        if (!folds_have_both_classes(y, fold, folds))
            throw DataError("a training fold has a single class after reshuffle");
    }

    CvResult result;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < grid.size(); ++g) {
        double mean_risk = 0.0;
        int used = 0;
        for (int f = 0; f < folds; ++f) {
            std::vector<Eigen::Index> tr, te;
            for (Eigen::Index i = 0; i < X.rows(); ++i)
                (fold[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
            if (te.empty() || tr.empty()) continue;

            Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(tr.size()), X.cols());
            Eigen::VectorXd ytr(static_cast<Eigen::Index>(tr.size()));
            Eigen::VectorXd wtr(static_cast<Eigen::Index>(tr.size()));
            for (std::size_t i = 0; i < tr.size(); ++i) {
                Xtr.row(static_cast<Eigen::Index>(i)) = X.row(tr[i]);
                ytr[static_cast<Eigen::Index>(i)] = y[tr[i]];
                if (w) wtr[static_cast<Eigen::Index>(i)] = (*w)[tr[i]];
            }
            Eigen::MatrixXd Xte(static_cast<Eigen::Index>(te.size()), X.cols());
            Eigen::VectorXd yte(static_cast<Eigen::Index>(te.size()));
            Eigen::VectorXd wte(static_cast<Eigen::Index>(te.size()));
            for (std::size_t i = 0; i < te.size(); ++i) {
                Xte.row(static_cast<Eigen::Index>(i)) = X.row(te[i]);
                yte[static_cast<Eigen::Index>(i)] = y[te[i]];
                if (w) wte[static_cast<Eigen::Index>(i)] = (*w)[te[i]];
            }

            // training rows keep their own weights under IWCV; the learner
            // itself is fit unweighted when no weights are supplied
            const Learner model =
                fit(grid[g], Xtr, ytr, w ? &wtr : nullptr,
                    derive_seed(seed, seeds::fit, g * static_cast<std::size_t>(folds) +
                                                      static_cast<std::size_t>(f)));
            const Eigen::VectorXd pred = model.predict(Xte);
            mean_risk += empirical_risk(pred, yte, loss, w ? &wte : nullptr).value;
            ++used;
        }
        if (used == 0) throw DataError("cross-validation produced no usable folds");
        mean_risk /= used;
        result.table.push_back({grid[g], mean_risk});
        if (mean_risk < best) {
            best = mean_risk;
            result.best_index = g;
        }
    }
    return result;
}

Learner importance_sampled_fit(const LearnerSpec& spec, const Eigen::MatrixXd& X,
                               const Eigen::VectorXd& y, const Eigen::VectorXd& p,
                               Eigen::Index n_draws, std::uint64_t seed) {
    if (n_draws < 1) throw ConfigError("n_draws must be at least 1");
    if (p.size() != X.rows()) throw DataError("probability length mismatch");
    if (std::abs(p.sum() - 1.0) > 1e-8)
        throw DataError("sampling probabilities must sum to one");
    if (p.minCoeff() < 0.0) throw DataError("sampling probabilities must be nonnegative");

    Eigen::VectorXd cum(p.size());
    double acc = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        acc += p[i];
        cum[i] = acc;
    }
    cum[p.size() - 1] = 1.0;

    Rng rng(derive_seed(seed, seeds::resample));
    Eigen::MatrixXd Xr(n_draws, X.cols());
    Eigen::VectorXd yr(n_draws);
    std::set<Eigen::Index> distinct;
    for (Eigen::Index dIdx = 0; dIdx < n_draws; ++dIdx) {
        const double u = rng.uniform();
        const Eigen::Index row = static_cast<Eigen::Index>(
            std::lower_bound(cum.data(), cum.data() + cum.size(), u) - cum.data());
        Xr.row(dIdx) = X.row(row);
        yr[dIdx] = y[row];
        distinct.insert(row);
    }
    Learner l = fit(spec, Xr, yr, nullptr, derive_seed(seed, seeds::fit));
    if (distinct.size() <= 1) {
        l.degenerate = true;
        l.warning = "importance resample collapsed to a single row";
    }
    return l;
}

StratFitResult stratlearn_fit_predict(const std::vector<LearnerSpec>& grid, const Dataset& d,
                                      const StrataAssignment& a, int folds, LossKind loss,
                                      std::uint64_t seed, Eigen::Index min_train) {
    if (static_cast<Eigen::Index>(a.stratum_of.size()) != d.n())
        throw DataError("strata assignment does not match dataset");

    StratFitResult out;
    out.predictions =
        Eigen::VectorXd::Constant(d.n(), std::numeric_limits<double>::quiet_NaN());
    out.source_pred_by_stratum.resize(static_cast<std::size_t>(a.k));
    out.target_pred_by_stratum.resize(static_cast<std::size_t>(a.k));

    for (int j = 1; j <= a.k; ++j) {
        const auto pool = a.merged_source_rows(j, d.s);
        if (static_cast<Eigen::Index>(pool.size()) < std::max<Eigen::Index>(min_train, 1))
            throw DataError("stratum " + std::to_string(j) + " training pool has " +
                            std::to_string(pool.size()) + " source rows; need at least " +
                            std::to_string(std::max<Eigen::Index>(min_train, 1)));

        const Eigen::MatrixXd Xp = d.rows(pool);
        const Eigen::VectorXd yp = d.labels(pool);
        for (std::size_t i = 0; i < pool.size(); ++i)
            if (!d.y_present[pool[i]])
                throw DataError("unlabeled source row in stratum " + std::to_string(j));

        const std::uint64_t cv_seed = derive_seed(seed, seeds::cv, static_cast<std::uint64_t>(j));
        const std::uint64_t fit_seed = derive_seed(seed, seeds::fit, static_cast<std::uint64_t>(j));

        StratFitResult::StratumFit sf;
        sf.stratum = j;
        sf.pool_size = static_cast<Eigen::Index>(pool.size());
        const int eff_folds = static_cast<int>(
            std::min<Eigen::Index>(folds, static_cast<Eigen::Index>(pool.size())));
        if (grid.size() == 1 || eff_folds < 2) {
            sf.cv.table.push_back({grid.front(), std::nan("")});
            sf.cv.best_index = 0;
        } else {
            sf.cv = cross_validate(grid, Xp, yp, eff_folds, loss, nullptr, cv_seed);
        }
        sf.model = fit(sf.cv.best(), Xp, yp, nullptr, fit_seed);

        const auto tgt = a.rows_in(j, d.s, 0);
        if (!tgt.empty()) {
            const Eigen::VectorXd pred = sf.model.predict(d.rows(tgt));
            for (std::size_t i = 0; i < tgt.size(); ++i) {
                out.predictions[tgt[i]] = pred[static_cast<Eigen::Index>(i)];
                out.predicted_rows.push_back(tgt[i]);
            }
            out.target_pred_by_stratum[static_cast<std::size_t>(j - 1)] = pred;
        }
        const auto own_src = a.rows_in(j, d.s, 1);
        if (!own_src.empty()) {
            out.source_pred_by_stratum[static_cast<std::size_t>(j - 1)] =
                sf.model.predict(d.rows(own_src));
        }
        out.strata.push_back(std::move(sf));
    }
    std::sort(out.predicted_rows.begin(), out.predicted_rows.end());
    return out;
}

}  // namespace stratlearn
