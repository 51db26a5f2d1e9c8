#include "stratlearn/weights.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "stratlearn/errors.hpp"
#include "stratlearn/rng.hpp"

namespace stratlearn {

std::string to_string(WeightMethod m) {
    switch (m) {
        case WeightMethod::ips: return "ips";
        case WeightMethod::kliep: return "kliep";
        case WeightMethod::ulsif: return "ulsif";
        case WeightMethod::nn: return "nn";
    }
    return "?";
}

WeightVector ips_weights(const Eigen::VectorXd& source_scores, Eigen::Index n_source,
                         Eigen::Index n_target) {
    if (n_source < 1 || n_target < 1) throw DataError("ips_weights needs both groups");
    WeightVector out;
    out.method = WeightMethod::ips;
    out.w.resize(source_scores.size());
    const double ratio = static_cast<double>(n_source) / static_cast<double>(n_target);
    for (Eigen::Index i = 0; i < source_scores.size(); ++i) {
        const double e = source_scores[i];
        if (!(e > 0.0 && e < 1.0))
            throw DataError("propensity score outside (0,1) at source row " + std::to_string(i));
        out.w[i] = ratio * (1.0 / e - 1.0);
    }
    return out;
}

Eigen::MatrixXd gaussian_kernel(const Eigen::MatrixXd& X, const Eigen::MatrixXd& centers,
                                double sigma) {
    const double inv = 1.0 / (2.0 * sigma * sigma);
    Eigen::MatrixXd K(X.rows(), centers.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        for (Eigen::Index l = 0; l < centers.rows(); ++l) {
            K(i, l) = std::exp(-(X.row(i) - centers.row(l)).squaredNorm() * inv);
        }
    }
    return K;
}

std::vector<double> median_distance_sigma_grid(const Eigen::MatrixXd& X_S,
                                               const Eigen::MatrixXd& X_T, int count) {
    // median over a deterministic subsample of pooled pairwise distances
    std::vector<double> dists;
    const Eigen::Index ns = X_S.rows(), nt = X_T.rows();
    const Eigen::Index n = ns + nt;
    auto row = [&](Eigen::Index i) -> Eigen::RowVectorXd {
        return i < ns ? X_S.row(i) : X_T.row(i - ns);
    };
    const Eigen::Index stride = std::max<Eigen::Index>(1, n * (n - 1) / 2 / 2000);
    Eigen::Index c = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j, ++c) {
            if (c % stride) continue;
            const double dd = (row(i) - row(j)).norm();
            if (dd > 0.0) dists.push_back(dd);
        }
    }
    double med = 1.0;
    if (!dists.empty()) {
        std::nth_element(dists.begin(), dists.begin() + dists.size() / 2, dists.end());
        med = dists[dists.size() / 2];
    }
    std::vector<double> grid(static_cast<std::size_t>(count));
    for (int g = 0; g < count; ++g) {
        // log-spaced over [med/5, med*5]
        const double t = count == 1 ? 0.5 : static_cast<double>(g) / (count - 1);
        grid[static_cast<std::size_t>(g)] = med / 5.0 * std::pow(25.0, t);
    }
    return grid;
}

namespace {

Eigen::MatrixXd pick_centers(const Eigen::MatrixXd& X_T, int n_centers, std::uint64_t seed) {
    Rng rng(derive_seed(seed, seeds::centers));
    const auto idx = rng.sample_without_replacement(static_cast<std::size_t>(X_T.rows()),
                                                    static_cast<std::size_t>(n_centers));
    Eigen::MatrixXd C(static_cast<Eigen::Index>(idx.size()), X_T.cols());
    for (std::size_t i = 0; i < idx.size(); ++i)
        C.row(static_cast<Eigen::Index>(i)) = X_T.row(static_cast<Eigen::Index>(idx[i]));
    return C;
}

struct KliepFit {
    Eigen::VectorXd alpha;
    double objective = -std::numeric_limits<double>::infinity();
    bool ok = false;
};

// Maximize (1/n_fit) sum log(K_fit alpha) over {alpha >= 0, b . alpha = 1}.
// Gaussian kernels keep K strictly positive, so feasibility is maintained by
// clipping and rescaling onto the constraint after each ascent step.
KliepFit kliep_optimize(const Eigen::MatrixXd& K_fit, const Eigen::VectorXd& b,
                        int max_iter = 500, double tol = 1e-7) {
    KliepFit fit;
    const Eigen::Index m = K_fit.cols();
    const double n_fit = static_cast<double>(K_fit.rows());

    Eigen::VectorXd alpha = Eigen::VectorXd::Ones(m);
    const double b_dot = b.dot(alpha);
    if (b_dot <= 0.0) return fit;
    alpha /= b_dot;

    auto objective = [&](const Eigen::VectorXd& a, Eigen::VectorXd& ratios) {
        ratios = K_fit * a;
        double obj = 0.0;
        for (Eigen::Index i = 0; i < ratios.size(); ++i) {
            if (ratios[i] <= 0.0) return -std::numeric_limits<double>::infinity();
            obj += std::log(ratios[i]);
        }
        return obj / n_fit;
    };

    Eigen::VectorXd ratios;
    double obj = objective(alpha, ratios);
    if (!std::isfinite(obj)) return fit;

    double step = 1.0;
    for (int it = 0; it < max_iter; ++it) {
        const Eigen::VectorXd grad = K_fit.transpose() * ratios.cwiseInverse() / n_fit;
        bool improved = false;
        double new_obj = obj;
        Eigen::VectorXd cand, cand_ratios;
        for (int bt = 0; bt < 20; ++bt) {
            cand = (alpha + step * grad).cwiseMax(0.0);
            const double scale = b.dot(cand);
            if (scale > 0.0) {
                cand /= scale;
                new_obj = objective(cand, cand_ratios);
                if (std::isfinite(new_obj) && new_obj > obj) {
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if (!improved) break;
        alpha = cand;
        ratios = cand_ratios;
        step *= 2.0;
        const double delta = new_obj - obj;
        obj = new_obj;
        if (delta < tol) break;
    }
    fit.alpha = alpha;
    fit.objective = obj;
    fit.ok = std::isfinite(obj);
    return fit;
}

}  // namespace

WeightVector kliep_weights(const Eigen::MatrixXd& X_S, const Eigen::MatrixXd& X_T,
                           const std::vector<double>& sigma_grid, int n_centers,
                           std::uint64_t seed) {
    if (X_S.rows() < 1 || X_T.rows() < 1) throw DataError("kliep_weights needs both groups");
    if (n_centers < 1) throw ConfigError("n_centers must be positive");
    if (sigma_grid.empty()) throw ConfigError("sigma grid is empty");
    n_centers = static_cast<int>(std::min<Eigen::Index>(n_centers, X_T.rows()));

    const Eigen::MatrixXd C = pick_centers(X_T, n_centers, seed);
    const double n_S = static_cast<double>(X_S.rows());
    const Eigen::Index n_T = X_T.rows();

    // likelihood cross-validation over sigma on target points
    const int folds = static_cast<int>(std::min<Eigen::Index>(5, n_T));
    std::vector<std::size_t> perm(static_cast<std::size_t>(n_T));
    std::iota(perm.begin(), perm.end(), 0);
    Rng cv_rng(derive_seed(seed, seeds::sigma_cv));
    cv_rng.shuffle(perm);

    double best_sigma = sigma_grid.front();
    double best_score = -std::numeric_limits<double>::infinity();
    for (double sigma : sigma_grid) {
        if (sigma <= 0.0) throw ConfigError("sigma must be positive");
        const Eigen::MatrixXd K_T = gaussian_kernel(X_T, C, sigma);
        const Eigen::VectorXd b = gaussian_kernel(X_S, C, sigma).colwise().sum() / n_S;
        double score = 0.0;
        bool valid = true;
        for (int f = 0; f < folds && valid; ++f) {
            std::vector<Eigen::Index> train, held;
            for (std::size_t i = 0; i < perm.size(); ++i) {
                (static_cast<int>(i % static_cast<std::size_t>(folds)) == f ? held : train)
                    .push_back(static_cast<Eigen::Index>(perm[i]));
            }
            if (train.empty() || held.empty()) continue;
            Eigen::MatrixXd K_train(static_cast<Eigen::Index>(train.size()), C.rows());
            for (std::size_t i = 0; i < train.size(); ++i)
                K_train.row(static_cast<Eigen::Index>(i)) = K_T.row(train[i]);
            const KliepFit fit = kliep_optimize(K_train, b);
            if (!fit.ok) {
                valid = false;
                break;
            }
            double held_ll = 0.0;
            for (Eigen::Index i : held) {
                const double v = K_T.row(i).dot(fit.alpha);
                if (v <= 0.0) {
                    valid = false;
                    break;
                }
                held_ll += std::log(v);
            }
            score += held_ll / static_cast<double>(held.size());
        }
        if (valid && score > best_score) {
            best_score = score;
            best_sigma = sigma;
        }
    }

    const Eigen::MatrixXd K_T = gaussian_kernel(X_T, C, best_sigma);
    const Eigen::VectorXd b = gaussian_kernel(X_S, C, best_sigma).colwise().sum() / n_S;
    const KliepFit fit = kliep_optimize(K_T, b);

    WeightVector out;
    out.method = WeightMethod::kliep;
    out.hyperparams.sigma = best_sigma;
    out.hyperparams.n_centers = n_centers;
    if (!fit.ok) {
        out.fit_ok = false;
        out.note = "kliep optimizer failed to reach a finite objective";
        out.w = Eigen::VectorXd::Ones(X_S.rows());
        return out;
    }
    out.w = gaussian_kernel(X_S, C, best_sigma) * fit.alpha;
    // b . alpha = 1 makes the mean exactly one up to a final rescale
    const double mean = out.w.mean();
    if (mean > 0.0) out.w /= mean;
    return out;
}

WeightVector ulsif_weights(const Eigen::MatrixXd& X_S, const Eigen::MatrixXd& X_T,
                           const std::vector<double>& sigma_grid,
                           const std::vector<double>& lambda_grid, int n_centers,
                           std::uint64_t seed) {
    if (X_S.rows() < 1 || X_T.rows() < 1) throw DataError("ulsif_weights needs both groups");
    if (n_centers < 1) throw ConfigError("n_centers must be positive");
    if (sigma_grid.empty() || lambda_grid.empty()) throw ConfigError("empty hyperparameter grid");
    for (double l : lambda_grid)
        if (l <= 0.0) throw ConfigError("ulsif lambda grid must be strictly positive");
    n_centers = static_cast<int>(std::min<Eigen::Index>(n_centers, X_T.rows()));

    const Eigen::MatrixXd C = pick_centers(X_T, n_centers, seed);
    const Eigen::Index n_S = X_S.rows(), n_T = X_T.rows();
    const Eigen::Index n_loo = std::min(n_S, n_T);
    const Eigen::Index m = C.rows();

    double best_sigma = sigma_grid.front(), best_lambda = lambda_grid.front();
    double best_score = std::numeric_limits<double>::infinity();
    const bool do_loocv = sigma_grid.size() > 1 || lambda_grid.size() > 1;

    for (double sigma : sigma_grid) {
        if (sigma <= 0.0) throw ConfigError("sigma must be positive");
        const Eigen::MatrixXd K_S = gaussian_kernel(X_S, C, sigma);
        const Eigen::MatrixXd K_T = gaussian_kernel(X_T, C, sigma);
        const Eigen::MatrixXd H = K_S.transpose() * K_S / static_cast<double>(n_S);
        const Eigen::VectorXd h = K_T.colwise().mean();
        if (!do_loocv) break;

        // closed-form leave-one-out over paired held-out source/target points
        const Eigen::MatrixXd Ks_n = K_S.topRows(n_loo).transpose();  // m x n_loo
        const Eigen::MatrixXd Kt_n = K_T.topRows(n_loo).transpose();
        for (double lambda : lambda_grid) {
            Eigen::MatrixXd B = H;
            B.diagonal().array() += lambda * static_cast<double>(n_S - 1) / n_S;
            const Eigen::LDLT<Eigen::MatrixXd> solver(B);
            const Eigen::VectorXd beta = solver.solve(h);
            const Eigen::MatrixXd BinvKs = solver.solve(Ks_n);  // m x n_loo
            const Eigen::ArrayXd denom =
                static_cast<double>(n_S) -
                (Ks_n.array() * BinvKs.array()).colwise().sum().transpose();
            const Eigen::ArrayXd diag0 =
                (beta.transpose() * Ks_n).array().transpose() / denom;
            Eigen::MatrixXd B0 = beta.replicate(1, n_loo) + BinvKs * diag0.matrix().asDiagonal();
            const Eigen::ArrayXd diag1 =
                (Kt_n.array() * BinvKs.array()).colwise().sum().transpose() / denom;
            Eigen::MatrixXd B1 = solver.solve(Kt_n) + BinvKs * diag1.matrix().asDiagonal();
            Eigen::MatrixXd B2 = (static_cast<double>(n_S - 1) /
                                  (static_cast<double>(n_S) * std::max<double>(1.0, static_cast<double>(n_T - 1)))) *
                                 (static_cast<double>(n_T) * B0 - B1);
            B2 = B2.cwiseMax(0.0);
            const Eigen::ArrayXd w_s = (Ks_n.array() * B2.array()).colwise().sum();
            const Eigen::ArrayXd w_t = (Kt_n.array() * B2.array()).colwise().sum();
            const double score = (w_s.square().mean()) / 2.0 - w_t.mean();
            if (std::isfinite(score) && score < best_score) {
                best_score = score;
                best_sigma = sigma;
                best_lambda = lambda;
            }
        }
    }

    const Eigen::MatrixXd K_S = gaussian_kernel(X_S, C, best_sigma);
    const Eigen::MatrixXd H = K_S.transpose() * K_S / static_cast<double>(n_S);
    const Eigen::VectorXd h = gaussian_kernel(X_T, C, best_sigma).colwise().mean();
    Eigen::MatrixXd A = H;
    A.diagonal().array() += best_lambda;
    Eigen::VectorXd alpha = A.ldlt().solve(h);
    if (!alpha.allFinite())
        throw NumericalError("ulsif linear system produced non-finite coefficients");
    alpha = alpha.cwiseMax(0.0);

    WeightVector out;
    out.method = WeightMethod::ulsif;
    out.hyperparams.sigma = best_sigma;
    out.hyperparams.lambda = best_lambda;
    out.hyperparams.n_centers = static_cast<int>(m);
    out.w = K_S * alpha;
    return out;
}

WeightVector nn_weights(const Eigen::MatrixXd& X_S, const Eigen::MatrixXd& X_T,
                        int k_neighbors) {
    const Eigen::Index n_S = X_S.rows(), n_T = X_T.rows();
    if (n_S < 1 || n_T < 1) throw DataError("nn_weights needs both groups");
    if (k_neighbors < 1) throw ConfigError("k_neighbors must be at least 1");
    const int k = static_cast<int>(std::min<Eigen::Index>(k_neighbors, n_S));

    Eigen::VectorXd claims = Eigen::VectorXd::Zero(n_S);
    std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n_S));
    for (Eigen::Index t = 0; t < n_T; ++t) {
        for (Eigen::Index i = 0; i < n_S; ++i)
            dist[static_cast<std::size_t>(i)] = {(X_S.row(i) - X_T.row(t)).squaredNorm(), i};
        std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
        for (int j = 0; j < k; ++j) claims[dist[static_cast<std::size_t>(j)].second] += 1.0;
    }

    WeightVector out;
    out.method = WeightMethod::nn;
    out.hyperparams.k_neighbors = k;
    out.w = claims * (static_cast<double>(n_S) / static_cast<double>(n_T) / k);
    return out;
}

Eigen::VectorXd sampling_probabilities(const WeightVector& wv, Eigen::Index n_source,
                                       Eigen::Index n_target) {
    if (!wv.w.allFinite() || wv.w.minCoeff() < 0.0)
        throw DataError("weights must be finite and nonnegative");
    const double n = static_cast<double>(n_source + n_target);
    const double p_target = static_cast<double>(n_target) / n;
    const double p_source = static_cast<double>(n_source) / n;
    Eigen::VectorXd p = wv.w.array() * p_target + p_source;
    const double total = p.sum();
    if (!(total > 0.0)) throw NumericalError("sampling probabilities sum to zero");
    return p / total;
}

}  // namespace stratlearn
