#include "stratlearn/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "stratlearn/errors.hpp"
#include "stratlearn/learn.hpp"
#include "stratlearn/rng.hpp"

namespace stratlearn {

std::string to_string(Metric m) {
    switch (m) {
        case Metric::auc: return "auc";
        case Metric::mse: return "mse";
        case Metric::logloss: return "logloss";
        case Metric::cde_target_risk: return "cde_target_risk";
    }
    return "?";
}

double auc(const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
    if (scores.size() != labels.size()) throw DataError("auc length mismatch");
    const Eigen::Index n = scores.size();
    Eigen::Index n_pos = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        if (labels[i] != 0.0 && labels[i] != 1.0) throw DataError("auc labels must be binary");
        n_pos += labels[i] == 1.0;
    }
    const Eigen::Index n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("auc needs both classes");

    // midrank formulation; sums of integers and halves stay exact
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return scores[a] < scores[b]; });

    double rank_sum_pos = 0.0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t t = i; t < j; ++t)
            if (labels[order[t]] == 1.0) rank_sum_pos += midrank;
        i = j;
    }
    const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
    return (rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn);
}

std::vector<std::pair<double, double>> roc_curve(const Eigen::VectorXd& scores,
                                                 const Eigen::VectorXd& labels) {
    if (scores.size() != labels.size()) throw DataError("roc length mismatch");
    const Eigen::Index n = scores.size();
    Eigen::Index n_pos = 0;
    for (Eigen::Index i = 0; i < n; ++i) n_pos += labels[i] == 1.0;
    const Eigen::Index n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) throw DataError("roc needs both classes");

    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](Eigen::Index a, Eigen::Index b) { return scores[a] > scores[b]; });

    std::vector<std::pair<double, double>> pts;
    pts.emplace_back(0.0, 0.0);
    Eigen::Index tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        for (std::size_t t = i; t < j; ++t) {
            if (labels[order[t]] == 1.0) ++tp;
            else ++fp;
        }
        pts.emplace_back(static_cast<double>(fp) / static_cast<double>(n_neg),
                         static_cast<double>(tp) / static_cast<double>(n_pos));
        i = j;
    }
    return pts;
}

double mse(const Eigen::VectorXd& pred, const Eigen::VectorXd& y) {
    if (pred.size() != y.size()) throw DataError("mse length mismatch");
    if (pred.size() == 0) throw DataError("mse on empty vectors");
    return (pred - y).squaredNorm() / static_cast<double>(pred.size());
}

double metric_value(Metric m, const Eigen::VectorXd& scores, const Eigen::VectorXd& labels) {
    switch (m) {
        case Metric::auc: return auc(scores, labels);
        case Metric::mse: return mse(scores, labels);
        case Metric::logloss:
            return empirical_risk(scores, labels, LossKind::logloss).value;
        case Metric::cde_target_risk:
            // per-row contributions are passed through `scores`
            return scores.mean();
    }
    throw ConfigError("unknown metric");
}

std::vector<Eigen::Index> bootstrap_indices(Eigen::Index n, std::uint64_t seed, int replicate,
                                            int retry) {
    Rng rng(derive_seed(seed, seeds::bootstrap,
                        static_cast<std::uint64_t>(replicate) * 16 +
                            static_cast<std::uint64_t>(retry)));
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
    for (auto& v : idx) v = static_cast<Eigen::Index>(rng.below(static_cast<std::size_t>(n)));
    return idx;
}

namespace {

bool metric_defined(Metric m, const Eigen::VectorXd& labels) {
    if (m != Metric::auc) return true;
    bool pos = false, neg = false;
    for (Eigen::Index i = 0; i < labels.size(); ++i)
        (labels[i] == 1.0 ? pos : neg) = true;
    return pos && neg;
}

double sd(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

template <typename Fn>
void run_replicates(Eigen::Index n, int n_boot, std::uint64_t seed, Metric m,
                    const Eigen::VectorXd& labels, int& used, int& skipped, Fn&& apply) {
    for (int r = 0; r < n_boot; ++r) {
        bool done = false;
        for (int retry = 0; retry < 10 && !done; ++retry) {
            const auto idx = bootstrap_indices(n, seed, r, retry);
            Eigen::VectorXd lab(n);
            for (Eigen::Index i = 0; i < n; ++i) lab[i] = labels[idx[static_cast<std::size_t>(i)]];
            if (!metric_defined(m, lab)) continue;
            apply(idx, lab);
            done = true;
        }
        if (done) ++used;
        else ++skipped;
    }
}

}  // namespace

BootstrapResult bootstrap_se(Metric m, const Eigen::VectorXd& scores,
                             const Eigen::VectorXd& labels, int n_boot, std::uint64_t seed) {
    if (n_boot < 2) throw ConfigError("bootstrap needs n_boot >= 2");
    if (scores.size() != labels.size()) throw DataError("bootstrap length mismatch");
    const Eigen::Index n = scores.size();

    std::vector<double> vals;
    BootstrapResult out;
    run_replicates(n, n_boot, seed, m, labels, out.used, out.skipped,
                   [&](const std::vector<Eigen::Index>& idx, const Eigen::VectorXd& lab) {
                       Eigen::VectorXd sc(n);
                       for (Eigen::Index i = 0; i < n; ++i)
                           sc[i] = scores[idx[static_cast<std::size_t>(i)]];
                       vals.push_back(metric_value(m, sc, lab));
                   });
    if (out.used == 0) throw NumericalError("metric undefined on every bootstrap resample");
    out.se = sd(vals);
    return out;
}

BootstrapResult bootstrap_se_mean(const Eigen::VectorXd& contrib, int n_boot,
                                  std::uint64_t seed) {
    Eigen::VectorXd dummy = Eigen::VectorXd::Zero(contrib.size());
    return bootstrap_se(Metric::cde_target_risk, contrib, dummy, n_boot, seed);
}

PairedBootstrap paired_bootstrap_diff(Metric m, const Eigen::VectorXd& scores_a,
                                      const Eigen::VectorXd& scores_b,
                                      const Eigen::VectorXd& labels, int n_boot,
                                      std::uint64_t seed) {
    if (scores_a.size() != scores_b.size() || scores_a.size() != labels.size())
        throw DataError("paired bootstrap length mismatch");
    if (n_boot < 2) throw ConfigError("bootstrap needs n_boot >= 2");
    const Eigen::Index n = labels.size();

    PairedBootstrap out;
    out.diff = metric_value(m, scores_a, labels) - metric_value(m, scores_b, labels);
    std::vector<double> diffs;
    run_replicates(n, n_boot, seed, m, labels, out.used, out.skipped,
                   [&](const std::vector<Eigen::Index>& idx, const Eigen::VectorXd& lab) {
                       Eigen::VectorXd sa(n), sb(n);
                       for (Eigen::Index i = 0; i < n; ++i) {
                           sa[i] = scores_a[idx[static_cast<std::size_t>(i)]];
                           sb[i] = scores_b[idx[static_cast<std::size_t>(i)]];
                       }
                       diffs.push_back(metric_value(m, sa, lab) - metric_value(m, sb, lab));
                   });
    if (out.used == 0) throw NumericalError("metric undefined on every bootstrap resample");
    out.se = sd(diffs);
    return out;
}

PairedBootstrap paired_bootstrap_mean_diff(const Eigen::VectorXd& contrib_a,
                                           const Eigen::VectorXd& contrib_b, int n_boot,
                                           std::uint64_t seed) {
    Eigen::VectorXd dummy = Eigen::VectorXd::Zero(contrib_a.size());
    return paired_bootstrap_diff(Metric::cde_target_risk, contrib_a, contrib_b, dummy, n_boot,
                                 seed);
}

EvalReport evaluate(Metric m, const Eigen::VectorXd& scores, const Eigen::VectorXd& labels,
                    int n_boot, std::uint64_t seed) {
    EvalReport rep;
    rep.metric = m;
    rep.n = scores.size();
    rep.value = metric_value(m, scores, labels);
    rep.n_boot = n_boot;
    rep.bootstrap_se = bootstrap_se(m, scores, labels, n_boot, seed).se;
    if (m == Metric::auc) rep.roc_points = roc_curve(scores, labels);
    return rep;
}

std::string EvalReport::to_json() const {
    std::ostringstream os;
    os.precision(17);
    os << "{\"metric\":\"" << stratlearn::to_string(metric) << "\",\"value\":" << value
       << ",\"bootstrap_se\":" << bootstrap_se << ",\"n_boot\":" << n_boot << ",\"n\":" << n
       << "}";
    return os.str();
}

std::string EvalReport::roc_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "fpr,tpr\n";
    for (const auto& [fpr, tpr] : roc_points) os << fpr << "," << tpr << "\n";
    return os.str();
}

}  // namespace stratlearn
