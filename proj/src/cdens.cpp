#include "stratlearn/cdens.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "stratlearn/errors.hpp"
#include "stratlearn/rng.hpp"

namespace stratlearn {

namespace {

double trapz(const Eigen::VectorXd& v, double spacing) {
    const Eigen::Index b = v.size();
    return spacing * (v.sum() - 0.5 * (v[0] + v[b - 1]));
}

// First max_n training indices by distance for every query row; ties broken
// by training index.
std::vector<std::vector<int>> neighbor_orders(const Eigen::MatrixXd& train_X,
                                              const Eigen::MatrixXd& query_X, int max_n) {
    const Eigen::Index nt = train_X.rows();
    const int keep = static_cast<int>(std::min<Eigen::Index>(max_n, nt));
    std::vector<std::vector<int>> out(static_cast<std::size_t>(query_X.rows()));
    std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(nt));
    for (Eigen::Index q = 0; q < query_X.rows(); ++q) {
        for (Eigen::Index i = 0; i < nt; ++i)
            dist[static_cast<std::size_t>(i)] = {
                (train_X.row(i) - query_X.row(q)).squaredNorm(), static_cast<int>(i)};
        std::partial_sort(dist.begin(), dist.begin() + keep, dist.end());
        auto& o = out[static_cast<std::size_t>(q)];
        o.resize(static_cast<std::size_t>(keep));
        for (int j = 0; j < keep; ++j) o[static_cast<std::size_t>(j)] = dist[static_cast<std::size_t>(j)].second;
    }
    return out;
}

// Precomputed per-training-row tables reused across queries.
struct DensityTables {
    CdeSpec spec;
    int grid_size;
    Eigen::MatrixXd kernel;    // ker_nn: n_train x B, kernel value at each node
    std::vector<int> bin_of;   // hist_nn: node bin per training row
    Eigen::MatrixXd phi;       // series: n_train x J basis values at z_i
    Eigen::MatrixXd cos_grid;  // series: J x B basis values at grid nodes
};

DensityTables make_tables(const CdeSpec& spec, const Eigen::VectorXd& z, int grid_size) {
    DensityTables t;
    t.spec = spec;
    t.grid_size = grid_size;
    const Eigen::Index n = z.size();
    switch (spec.kind) {
        case CdeKind::ker_nn: {
            const double h = spec.bandwidth;
            const double norm = 1.0 / (h * std::sqrt(2.0 * M_PI));
            t.kernel.resize(n, grid_size);
            for (Eigen::Index i = 0; i < n; ++i) {
                for (int b = 0; b < grid_size; ++b) {
                    const double u = (static_cast<double>(b) / (grid_size - 1) - z[i]) / h;
                    t.kernel(i, b) = norm * std::exp(-0.5 * u * u);
                }
            }
            break;
        }
        case CdeKind::hist_nn: {
            t.bin_of.resize(static_cast<std::size_t>(n));
            for (Eigen::Index i = 0; i < n; ++i) {
                int b = static_cast<int>(z[i] * spec.n_bins);
                t.bin_of[static_cast<std::size_t>(i)] = std::clamp(b, 0, spec.n_bins - 1);
            }
            break;
        }
        case CdeKind::series: {
            const int J = spec.n_terms;
            t.phi.resize(n, J);
            for (Eigen::Index i = 0; i < n; ++i) {
                t.phi(i, 0) = 1.0;
                for (int j = 1; j < J; ++j)
                    t.phi(i, j) = std::sqrt(2.0) * std::cos(M_PI * j * z[i]);
            }
            t.cos_grid.resize(J, grid_size);
            for (int b = 0; b < grid_size; ++b) {
                const double tb = static_cast<double>(b) / (grid_size - 1);
                t.cos_grid(0, b) = 1.0;
                for (int j = 1; j < J; ++j)
                    t.cos_grid(j, b) = std::sqrt(2.0) * std::cos(M_PI * j * tb);
            }
            break;
        }
    }
    return t;
}

// Density over the grid for one query, from its neighbor order. Clips
// negatives and renormalizes to unit trapezoid mass.
Eigen::VectorXd density_row(const DensityTables& t, const std::vector<int>& order) {
    const int n_use =
        static_cast<int>(std::min<std::size_t>(order.size(),
                                               static_cast<std::size_t>(t.spec.n_neighbors)));
    const int B = t.grid_size;
    const double spacing = 1.0 / (B - 1);
    Eigen::VectorXd v = Eigen::VectorXd::Zero(B);

    switch (t.spec.kind) {
        case CdeKind::ker_nn: {
            for (int j = 0; j < n_use; ++j) v += t.kernel.row(order[static_cast<std::size_t>(j)]);
            v /= n_use;
            break;
        }
        case CdeKind::hist_nn: {
            Eigen::VectorXd counts = Eigen::VectorXd::Zero(t.spec.n_bins);
            for (int j = 0; j < n_use; ++j)
                counts[t.bin_of[static_cast<std::size_t>(order[static_cast<std::size_t>(j)])]] += 1.0;
            counts *= static_cast<double>(t.spec.n_bins) / n_use;   // counts/(N*width)
            for (int b = 0; b < B; ++b) {
                const double tb = static_cast<double>(b) / (B - 1);
                const int bin = std::clamp(static_cast<int>(tb * t.spec.n_bins), 0,
                                           t.spec.n_bins - 1);
                v[b] = counts[bin];
            }
            break;
        }
        case CdeKind::series: {
            Eigen::VectorXd beta = Eigen::VectorXd::Zero(t.phi.cols());
            for (int j = 0; j < n_use; ++j)
                beta += t.phi.row(order[static_cast<std::size_t>(j)]);
            beta /= n_use;
            v = t.cos_grid.transpose() * beta;
            break;
        }
    }

    v = v.cwiseMax(0.0);
    const double mass = trapz(v, spacing);
    if (mass > 1e-12) {
        v /= mass;
    } else {
        v.setOnes();   // degenerate estimate; fall back to the uniform density
    }
    return v;
}

}  // namespace

double DensityGrid::row_integral(Eigen::Index row) const {
    return trapz(values.row(row), spacing());
}

double DensityGrid::row_square_integral(Eigen::Index row) const {
    const Eigen::VectorXd sq = values.row(row).array().square();
    return trapz(sq, spacing());
}

double DensityGrid::interpolate(Eigen::Index row, double z) const {
    if (z <= 0.0) return values(row, 0);
    if (z >= 1.0) return values(row, grid_size - 1);
    const double pos = z * (grid_size - 1);
    const int lo = static_cast<int>(pos);
    const double frac = pos - lo;
    return values(row, lo) * (1.0 - frac) + values(row, lo + 1) * frac;
}

std::string to_string(CdeKind k) {
    switch (k) {
        case CdeKind::hist_nn: return "hist_nn";
        case CdeKind::ker_nn: return "ker_nn";
        case CdeKind::series: return "series";
    }
    return "?";
}

std::string CdeSpec::label() const {
    std::ostringstream os;
    os << to_string(kind) << "(N=" << n_neighbors;
    switch (kind) {
        case CdeKind::hist_nn: os << ",bins=" << n_bins; break;
        case CdeKind::ker_nn: os << ",h=" << bandwidth; break;
        case CdeKind::series: os << ",J=" << n_terms; break;
    }
    os << ")";
    return os.str();
}

CdeEstimator::CdeEstimator(const CdeSpec& spec, Eigen::MatrixXd X, Eigen::VectorXd z,
                           int grid_size)
    : spec_(spec), X_(std::move(X)), z_(std::move(z)), grid_size_(grid_size) {
    if (X_.rows() == 0) throw DataError("density estimator fit on empty data");
    if (z_.size() != X_.rows()) throw DataError("response length mismatch");
    if (z_.minCoeff() < 0.0 || z_.maxCoeff() > 1.0)
        throw DataError("responses must be rescaled into [0,1]");
    if (spec_.n_neighbors < 1) throw ConfigError("n_neighbors must be positive");
    fitted_ = true;
}

DensityGrid CdeEstimator::predict(const Eigen::MatrixXd& queries) const {
    if (!fitted_) throw DataError("predict on an unfitted density estimator");
    if (queries.cols() != X_.cols()) throw DataError("query column mismatch");
    const DensityTables tables = make_tables(spec_, z_, grid_size_);
    const auto orders = neighbor_orders(X_, queries, spec_.n_neighbors);
    DensityGrid g;
    g.grid_size = grid_size_;
    g.values.resize(queries.rows(), grid_size_);
    for (Eigen::Index q = 0; q < queries.rows(); ++q)
        g.values.row(q) = density_row(tables, orders[static_cast<std::size_t>(q)]);
    return g;
}

CombModel::CombModel(std::vector<const DensityModel*> components, Eigen::VectorXd alpha)
    : components_(std::move(components)), alpha_(std::move(alpha)) {
    if (components_.empty() || alpha_.size() != static_cast<Eigen::Index>(components_.size()))
        throw ConfigError("comb model needs one weight per component");
    for (std::size_t i = 1; i < components_.size(); ++i)
        if (components_[i]->grid_size() != components_[0]->grid_size())
            throw ConfigError("comb components must share one grid");
}

int CombModel::grid_size() const { return components_[0]->grid_size(); }

DensityGrid CombModel::predict(const Eigen::MatrixXd& queries) const {
    DensityGrid g = components_[0]->predict(queries);
    g.values *= alpha_[0];
    for (std::size_t k = 1; k < components_.size(); ++k) {
        g.values += alpha_[static_cast<Eigen::Index>(k)] * components_[k]->predict(queries).values;
    }
    return g;
}

ZRescale ZRescale::fit(const Eigen::VectorXd& z) {
    ZRescale r;
    r.lo = z.minCoeff();
    r.hi = z.maxCoeff();
    if (r.hi <= r.lo) throw DataError("response is constant; cannot rescale");
    return r;
}

Eigen::VectorXd ZRescale::to_unit(const Eigen::VectorXd& z) const {
    return ((z.array() - lo) / (hi - lo)).cwiseMax(0.0).cwiseMin(1.0);
}

std::vector<CdeSpec> CdeConfig::spec_grid(CdeKind kind) const {
    std::vector<CdeSpec> out;
    for (int n : neighbor_grid) {
        switch (kind) {
            case CdeKind::hist_nn:
                for (int b : bin_grid) {
                    CdeSpec s;
                    s.kind = kind;
                    s.n_neighbors = n;
                    s.n_bins = b;
                    out.push_back(s);
                }
                break;
            case CdeKind::ker_nn:
                for (double h : bandwidth_grid) {
                    CdeSpec s;
                    s.kind = kind;
                    s.n_neighbors = n;
                    s.bandwidth = h;
                    out.push_back(s);
                }
                break;
            case CdeKind::series:
                for (int j : terms_grid) {
                    CdeSpec s;
                    s.kind = kind;
                    s.n_neighbors = n;
                    s.n_terms = j;
                    out.push_back(s);
                }
                break;
        }
    }
    return out;
}

FitCdeResult fit_cde(CdeKind kind, const Eigen::MatrixXd& X, const Eigen::VectorXd& z,
                     const std::vector<CdeSpec>& grid, int folds,
                     const Eigen::VectorXd* risk_weights, std::uint64_t seed,
                     const Eigen::MatrixXd* quad_rows, int grid_size) {
    if (grid.empty()) throw ConfigError("empty density spec grid");
    if (X.rows() < folds || folds < 2) throw DataError("need folds >= 2 and n >= folds");
    if (risk_weights && risk_weights->size() != X.rows())
        throw DataError("risk weight length mismatch");
    for (const auto& s : grid)
        if (s.kind != kind) throw ConfigError("spec grid contains a different kind");

    int max_n = 1;
    for (const auto& s : grid) max_n = std::max(max_n, s.n_neighbors);

    // seeded fold ids: shuffled indices dealt round-robin
    std::vector<std::size_t> perm(static_cast<std::size_t>(X.rows()));
    std::iota(perm.begin(), perm.end(), 0);
    Rng rng(derive_seed(seed, seeds::cv));
    rng.shuffle(perm);
    std::vector<int> fold(static_cast<std::size_t>(X.rows()));
    for (std::size_t i = 0; i < perm.size(); ++i)
        fold[perm[i]] = static_cast<int>(i % static_cast<std::size_t>(folds));

    std::vector<double> risks(grid.size(), 0.0);
    for (int f = 0; f < folds; ++f) {
        std::vector<Eigen::Index> tr, te;
        for (Eigen::Index i = 0; i < X.rows(); ++i)
            (fold[static_cast<std::size_t>(i)] == f ? te : tr).push_back(i);
        if (tr.empty() || te.empty()) continue;

        Eigen::MatrixXd Xtr(static_cast<Eigen::Index>(tr.size()), X.cols());
        Eigen::VectorXd ztr(static_cast<Eigen::Index>(tr.size()));
        for (std::size_t i = 0; i < tr.size(); ++i) {
            Xtr.row(static_cast<Eigen::Index>(i)) = X.row(tr[i]);
            ztr[static_cast<Eigen::Index>(i)] = z[tr[i]];
        }
        Eigen::MatrixXd Xte(static_cast<Eigen::Index>(te.size()), X.cols());
        Eigen::VectorXd zte(static_cast<Eigen::Index>(te.size()));
        Eigen::VectorXd wte(static_cast<Eigen::Index>(te.size()));
        for (std::size_t i = 0; i < te.size(); ++i) {
            Xte.row(static_cast<Eigen::Index>(i)) = X.row(te[i]);
            zte[static_cast<Eigen::Index>(i)] = z[te[i]];
            if (risk_weights) wte[static_cast<Eigen::Index>(i)] = (*risk_weights)[te[i]];
        }

        const auto held_orders = neighbor_orders(Xtr, Xte, max_n);
        std::vector<std::vector<int>> quad_orders;
        if (risk_weights && quad_rows) quad_orders = neighbor_orders(Xtr, *quad_rows, max_n);

        for (std::size_t g = 0; g < grid.size(); ++g) {
            const DensityTables tables = make_tables(grid[g], ztr, grid_size);
            const double spacing = 1.0 / (grid_size - 1);

            double lin = 0.0, quad = 0.0;
            DensityGrid tmp;
            tmp.grid_size = grid_size;
            tmp.values.resize(1, grid_size);
            for (std::size_t q = 0; q < te.size(); ++q) {
                tmp.values.row(0) = density_row(tables, held_orders[q]);
                const double fz = tmp.interpolate(0, zte[static_cast<Eigen::Index>(q)]);
                lin += (risk_weights ? wte[static_cast<Eigen::Index>(q)] : 1.0) * fz;
                if (!(risk_weights && quad_rows))
                    quad += trapz(tmp.values.row(0).array().square(), spacing);
            }
            lin /= static_cast<double>(te.size());

            if (risk_weights && quad_rows) {
                for (const auto& o : quad_orders) {
                    tmp.values.row(0) = density_row(tables, o);
                    quad += trapz(tmp.values.row(0).array().square(), spacing);
                }
                quad /= static_cast<double>(quad_orders.size());
            } else {
                quad /= static_cast<double>(te.size());
            }
            risks[g] += quad - 2.0 * lin;
        }
    }

    FitCdeResult out;
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_idx = 0;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        risks[g] /= folds;
        out.cv_table.push_back({grid[g], risks[g]});
        if (risks[g] < best) {
            best = risks[g];
            best_idx = g;
        }
    }
    out.chosen = grid[best_idx];
    // cap the neighbor count at the full training size
    out.chosen.n_neighbors =
        static_cast<int>(std::min<Eigen::Index>(out.chosen.n_neighbors, X.rows()));
    out.estimator = CdeEstimator(out.chosen, X, z, grid_size);
    return out;
}

Eigen::VectorXd risk_contributions(const DensityModel& model, const Eigen::MatrixXd& X,
                                   const Eigen::VectorXd& z, const Eigen::VectorXd* weights) {
    if (z.size() != X.rows()) throw DataError("response length mismatch");
    if (weights && weights->size() != X.rows()) throw DataError("weight length mismatch");
    const DensityGrid g = model.predict(X);
    Eigen::VectorXd r(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
        const double w = weights ? (*weights)[i] : 1.0;
        r[i] = g.row_square_integral(i) - 2.0 * w * g.interpolate(i, z[i]);
    }
    return r;
}

double generalized_risk(const DensityModel& model, const Eigen::MatrixXd& X,
                        const Eigen::VectorXd& z, const Eigen::VectorXd* weights) {
    return risk_contributions(model, X, z, weights).mean();
}

double generalized_risk_shift(const DensityModel& model, const Eigen::MatrixXd& X_quad,
                              const Eigen::MatrixXd& X_lab, const Eigen::VectorXd& z_lab,
                              const Eigen::VectorXd& w) {
    if (z_lab.size() != X_lab.rows() || w.size() != X_lab.rows())
        throw DataError("labeled row bookkeeping mismatch");
    const DensityGrid gq = model.predict(X_quad);
    double quad = 0.0;
    for (Eigen::Index i = 0; i < X_quad.rows(); ++i) quad += gq.row_square_integral(i);
    quad /= static_cast<double>(X_quad.rows());

    const DensityGrid gl = model.predict(X_lab);
    double lin = 0.0;
    for (Eigen::Index i = 0; i < X_lab.rows(); ++i) lin += w[i] * gl.interpolate(i, z_lab[i]);
    lin /= static_cast<double>(X_lab.rows());
    return quad - 2.0 * lin;
}

double target_risk_cde(const DensityModel& model, const Eigen::MatrixXd& X_T,
                       const Eigen::VectorXd& z_T) {
    return generalized_risk(model, X_T, z_T, nullptr);
}

Eigen::VectorXd project_simplex(const Eigen::VectorXd& v) {
    const Eigen::Index p = v.size();
    std::vector<double> u(v.data(), v.data() + p);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cssv = 0.0, theta = 0.0;
    int rho = 0;
    for (Eigen::Index i = 0; i < p; ++i) {
        cssv += u[static_cast<std::size_t>(i)];
        const double t = (cssv - 1.0) / static_cast<double>(i + 1);
        if (u[static_cast<std::size_t>(i)] - t > 0.0) {
            rho = static_cast<int>(i + 1);
            theta = t;
        }
    }
    (void)rho;
    Eigen::VectorXd out = (v.array() - theta).cwiseMax(0.0);
    const double s = out.sum();
    if (s > 0.0) out /= s;   // absorb rounding so the constraints hold exactly
    return out;
}

namespace {

CombWeights comb_from_moments(const Eigen::MatrixXd& M, const Eigen::VectorXd& b) {
    if (!M.allFinite() || !b.allFinite())
        throw NumericalError("comb optimization received non-finite moments");
    const Eigen::Index p = b.size();
    auto objective = [&](const Eigen::VectorXd& a) {
        return a.dot(M * a) - 2.0 * b.dot(a);
    };

    Eigen::VectorXd alpha = Eigen::VectorXd::Constant(p, 1.0 / static_cast<double>(p));
    double obj = objective(alpha);
    double step = 1.0 / std::max(1.0, 2.0 * M.cwiseAbs().rowwise().sum().maxCoeff());

    CombWeights out;
    for (int it = 0; it < 5000; ++it) {
        const Eigen::VectorXd grad = 2.0 * (M * alpha - b);
        bool improved = false;
        Eigen::VectorXd cand;
        double cand_obj = obj;
        double s = step;
        for (int bt = 0; bt < 30; ++bt) {
            cand = project_simplex(alpha - s * grad);
            cand_obj = objective(cand);
            if (cand_obj < obj) {
                improved = true;
                break;
            }
            s *= 0.5;
        }
        out.iterations = it + 1;
        if (!improved) break;
        const double delta = obj - cand_obj;
        alpha = cand;
        obj = cand_obj;
        step = std::min(s * 2.0, 1e6);
        if (delta < 1e-9) break;
    }

    // feasible vertices are cheap certificates; keep the descent point on ties
    for (Eigen::Index k = 0; k < p; ++k) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
        e[k] = 1.0;
        const double vo = objective(e);
        if (vo < obj) {
            obj = vo;
            alpha = e;
        }
    }
    out.alpha = alpha;
    out.risk = obj;
    return out;
}

// M_{kl} = mean_i int f_k f_l over quad rows; b_k = mean_i w_i f_k(z_i|x_i).
CombWeights comb_fit_impl(const std::vector<const DensityModel*>& components,
                          const Eigen::MatrixXd& X_quad, const Eigen::MatrixXd& X_lab,
                          const Eigen::VectorXd& z_lab, const Eigen::VectorXd* w) {
    if (components.size() < 2) throw ConfigError("comb needs at least 2 estimators");
    const Eigen::Index p = static_cast<Eigen::Index>(components.size());
    const int B = components[0]->grid_size();
    const double spacing = 1.0 / (B - 1);

    std::vector<DensityGrid> quad_grids, lab_grids;
    const bool shared = X_quad.rows() == X_lab.rows() && X_quad.data() == X_lab.data();
    for (const auto* c : components) {
        if (c->grid_size() != B) throw ConfigError("comb components must share one grid");
        quad_grids.push_back(c->predict(X_quad));
        if (!shared) lab_grids.push_back(c->predict(X_lab));
    }
    const auto& lab_ref = shared ? quad_grids : lab_grids;

    Eigen::MatrixXd M(p, p);
    for (Eigen::Index k = 0; k < p; ++k) {
        for (Eigen::Index l = k; l < p; ++l) {
            double acc = 0.0;
            for (Eigen::Index i = 0; i < X_quad.rows(); ++i) {
                const Eigen::VectorXd prod =
                    quad_grids[static_cast<std::size_t>(k)].values.row(i).cwiseProduct(
                        quad_grids[static_cast<std::size_t>(l)].values.row(i));
                acc += trapz(prod, spacing);
            }
            M(k, l) = M(l, k) = acc / static_cast<double>(X_quad.rows());
        }
    }
    Eigen::VectorXd b(p);
    for (Eigen::Index k = 0; k < p; ++k) {
        double acc = 0.0;
        for (Eigen::Index i = 0; i < X_lab.rows(); ++i) {
            const double wi = w ? (*w)[i] : 1.0;
            acc += wi * lab_ref[static_cast<std::size_t>(k)].interpolate(i, z_lab[i]);
        }
        b[k] = acc / static_cast<double>(X_lab.rows());
    }
    return comb_from_moments(M, b);
}

}  // namespace

CombWeights fit_comb(const std::vector<const DensityModel*>& components,
                     const Eigen::MatrixXd& X, const Eigen::VectorXd& z,
                     const Eigen::VectorXd* weights) {
    if (weights && weights->size() != X.rows()) throw DataError("weight length mismatch");
    return comb_fit_impl(components, X, X, z, weights);
}

CombWeights fit_comb_shift(const std::vector<const DensityModel*>& components,
                           const Eigen::MatrixXd& X_quad, const Eigen::MatrixXd& X_lab,
                           const Eigen::VectorXd& z_lab, const Eigen::VectorXd& w) {
    if (w.size() != X_lab.rows()) throw DataError("weight length mismatch");
    return comb_fit_impl(components, X_quad, X_lab, z_lab, &w);
}

namespace {

StratCdeResult cde_over_assignment(const CdeConfig& cfg, const Dataset& d,
                                   const StrataAssignment& a, int folds, std::uint64_t seed,
                                   const Eigen::VectorXd* source_weights) {
    if (cfg.kinds.empty()) throw ConfigError("no density estimator kinds configured");
    if (cfg.comb && cfg.kinds.size() < 2)
        throw ConfigError("comb needs at least two estimator kinds");

    StratCdeResult out;
    out.grid_size = cfg.grid_size;
    out.target_rows = d.target_rows();
    out.densities.resize(static_cast<Eigen::Index>(out.target_rows.size()), cfg.grid_size);

    std::vector<Eigen::Index> row_pos(static_cast<std::size_t>(d.n()),
                                      static_cast<Eigen::Index>(-1));
    for (std::size_t i = 0; i < out.target_rows.size(); ++i)
        row_pos[static_cast<std::size_t>(out.target_rows[i])] = static_cast<Eigen::Index>(i);

    // weights are indexed by position within the source-row subset
    std::vector<Eigen::Index> src_pos(static_cast<std::size_t>(d.n()),
                                      static_cast<Eigen::Index>(-1));
    {
        const auto src = d.source_rows();
        for (std::size_t i = 0; i < src.size(); ++i)
            src_pos[static_cast<std::size_t>(src[i])] = static_cast<Eigen::Index>(i);
    }

    const Eigen::MatrixXd X_target_all = d.rows(out.target_rows);

    for (int j = 1; j <= a.k; ++j) {
        const auto pool = a.merged_source_rows(j, d.s);
        if (pool.empty())
            throw DataError("stratum " + std::to_string(j) + " has no source data to fit");
        const Eigen::MatrixXd Xp = d.rows(pool);
        const Eigen::VectorXd zp = d.labels(pool);

        Eigen::VectorXd wp;
        if (source_weights) {
            wp.resize(static_cast<Eigen::Index>(pool.size()));
            for (std::size_t i = 0; i < pool.size(); ++i)
                wp[static_cast<Eigen::Index>(i)] =
                    (*source_weights)[src_pos[static_cast<std::size_t>(pool[i])]];
        }

        const int eff_folds = static_cast<int>(
            std::min<Eigen::Index>(folds, static_cast<Eigen::Index>(pool.size())));
        if (eff_folds < 2)
            throw DataError("stratum " + std::to_string(j) + " has too few rows for CV");

        const std::uint64_t stratum_seed =
            derive_seed(seed, seeds::cv, static_cast<std::uint64_t>(j));

        StratCdeResult::StratumInfo info;
        info.stratum = j;
        std::vector<CdeEstimator> fitted;
        fitted.reserve(cfg.kinds.size());
        for (std::size_t ki = 0; ki < cfg.kinds.size(); ++ki) {
            const auto grid = cfg.spec_grid(cfg.kinds[ki]);
            FitCdeResult fr = fit_cde(cfg.kinds[ki], Xp, zp, grid, eff_folds,
                                      source_weights ? &wp : nullptr,
                                      derive_seed(stratum_seed, ki),
                                      source_weights ? &X_target_all : nullptr,
                                      cfg.grid_size);
            info.chosen.push_back(fr.chosen);
            fitted.push_back(std::move(fr.estimator));
        }

        const auto tgt = a.rows_in(j, d.s, 0);
        Eigen::MatrixXd Xt;
        if (!tgt.empty()) Xt = d.rows(tgt);

        if (cfg.comb) {
            std::vector<const DensityModel*> comps;
            for (const auto& e : fitted) comps.push_back(&e);
            CombWeights cw;
            if (source_weights) {
                cw = fit_comb_shift(comps, X_target_all, Xp, zp, wp);
            } else {
                cw = fit_comb(comps, Xp, zp, nullptr);
            }
            info.alpha = cw.alpha;
            if (!tgt.empty()) {
                const CombModel comb(comps, cw.alpha);
                const DensityGrid g = comb.predict(Xt);
                for (std::size_t i = 0; i < tgt.size(); ++i)
                    out.densities.row(row_pos[static_cast<std::size_t>(tgt[i])]) =
                        g.values.row(static_cast<Eigen::Index>(i));
            }
        } else {
            info.alpha = Eigen::VectorXd::Ones(1);
            if (!tgt.empty()) {
                const DensityGrid g = fitted.front().predict(Xt);
                for (std::size_t i = 0; i < tgt.size(); ++i)
                    out.densities.row(row_pos[static_cast<std::size_t>(tgt[i])]) =
                        g.values.row(static_cast<Eigen::Index>(i));
            }
        }
        out.strata.push_back(std::move(info));
    }
    return out;
}

}  // namespace

StratCdeResult stratlearn_cde(const CdeConfig& cfg, const Dataset& d,
                              const StrataAssignment& a, int folds, std::uint64_t seed) {
    return cde_over_assignment(cfg, d, a, folds, seed, nullptr);
}

StratCdeResult weighted_cde(const CdeConfig& cfg, const Dataset& d,
                            const Eigen::VectorXd& source_weights, int folds,
                            std::uint64_t seed) {
    if (source_weights.size() != d.n_source())
        throw DataError("source weight length mismatch");
    const StrataAssignment single = StrataAssignment::single(static_cast<std::size_t>(d.n()));
    return cde_over_assignment(cfg, d, single, folds, seed, &source_weights);
}

}  // namespace stratlearn
