#include "stratlearn/balance.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "stratlearn/errors.hpp"

namespace stratlearn {

namespace {

double sample_var(const Eigen::VectorXd& v) {
    if (v.size() < 2) return 0.0;
    const double m = v.mean();
    return (v.array() - m).square().sum() / static_cast<double>(v.size() - 1);
}

double log_factorial(long n) { return std::lgamma(static_cast<double>(n) + 1.0); }

}  // namespace

double smd(const Eigen::VectorXd& source_col, const Eigen::VectorXd& target_col) {
    if (source_col.size() == 0 || target_col.size() == 0)
        throw DataError("smd needs nonempty vectors");
    const double ms = source_col.mean(), mt = target_col.mean();
    const double pooled = (sample_var(source_col) + sample_var(target_col)) / 2.0;
    if (pooled <= 0.0) {
        return ms == mt ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return std::abs(ms - mt) / std::sqrt(pooled);
}

double ks_statistic(const Eigen::VectorXd& source_col, const Eigen::VectorXd& target_col) {
    const Eigen::Index ns = source_col.size(), nt = target_col.size();
    if (ns == 0 || nt == 0) throw DataError("ks_statistic needs nonempty vectors");

    std::vector<double> a(source_col.data(), source_col.data() + ns);
    std::vector<double> b(target_col.data(), target_col.data() + nt);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());

    // walk the merged order; evaluate both ECDFs just after each pooled point
    double sup = 0.0;
    std::size_t i = 0, j = 0;
    while (i < a.size() || j < b.size()) {
        const double t = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
        while (i < a.size() && a[i] <= t) ++i;
        while (j < b.size() && b[j] <= t) ++j;
        const double fs = static_cast<double>(i) / static_cast<double>(ns);
        const double ft = static_cast<double>(j) / static_cast<double>(nt);
        sup = std::max(sup, std::abs(fs - ft));
    }
    return sup;
}

double fisher_exact_2x2(long a, long b, long c, long d) {
    if (a < 0 || b < 0 || c < 0 || d < 0) throw DataError("fisher table counts must be >= 0");
    const long r1 = a + b, r2 = c + d, c1 = a + c, c2 = b + d;
    const long n = r1 + r2;
    if (n == 0) throw DataError("fisher test on an all-zero table");

    // log P(x) for top-left cell x with the observed margins
    const double log_denom = log_factorial(n) - log_factorial(c1) - log_factorial(c2);
    auto log_prob = [&](long x) {
        const long bx = r1 - x, cx = c1 - x, dx = r2 - c1 + x;
        return log_factorial(r1) - log_factorial(x) - log_factorial(bx) +
               log_factorial(r2) - log_factorial(cx) - log_factorial(dx) - log_denom;
    };

    const long lo = std::max(0L, c1 - r2);
    const long hi = std::min(r1, c1);
    const double log_obs = log_prob(a);
    // relative tolerance absorbs last-ulp noise in lgamma between equal tables
    const double cutoff = log_obs + 1e-7;

    double p = 0.0;
    for (long x = lo; x <= hi; ++x) {
        const double lp = log_prob(x);
        if (lp <= cutoff) p += std::exp(lp);
    }
    return std::min(p, 1.0);
}

BalanceReport balance_report(const Dataset& d, const StrataAssignment& a,
                             Eigen::Index min_per_side) {
    BalanceReport rep;
    const auto src_all = d.source_rows();
    const auto tgt_all = d.target_rows();

    auto add_block = [&](int stratum, const std::vector<Eigen::Index>& src,
                         const std::vector<Eigen::Index>& tgt) {
        BalanceReport::Aggregate agg;
        agg.stratum = stratum;
        agg.source_count = static_cast<Eigen::Index>(src.size());
        agg.target_count = static_cast<Eigen::Index>(tgt.size());
        agg.sufficient = agg.source_count >= min_per_side && agg.target_count >= min_per_side;
        agg.smd_mean = agg.smd_sd = agg.ks_mean = agg.ks_sd = std::nan("");
        if (agg.sufficient) {
            Eigen::VectorXd smds(d.f()), kss(d.f());
            for (Eigen::Index j = 0; j < d.f(); ++j) {
                Eigen::VectorXd vs(static_cast<Eigen::Index>(src.size()));
                Eigen::VectorXd vt(static_cast<Eigen::Index>(tgt.size()));
                for (std::size_t i = 0; i < src.size(); ++i)
                    vs[static_cast<Eigen::Index>(i)] = d.X(src[i], j);
                for (std::size_t i = 0; i < tgt.size(); ++i)
                    vt[static_cast<Eigen::Index>(i)] = d.X(tgt[i], j);
                smds[j] = smd(vs, vt);
                kss[j] = ks_statistic(vs, vt);
                rep.cells.push_back({stratum, d.column_names[static_cast<std::size_t>(j)],
                                     smds[j], kss[j]});
            }
            agg.smd_mean = smds.mean();
            agg.ks_mean = kss.mean();
            agg.smd_sd = std::sqrt(sample_var(smds));
            agg.ks_sd = std::sqrt(sample_var(kss));
        }
        rep.aggregates.push_back(agg);
    };

    add_block(0, src_all, tgt_all);
    for (int j = 1; j <= a.k; ++j) {
        add_block(j, a.rows_in(j, d.s, 1), a.rows_in(j, d.s, 0));
    }
    return rep;
}

const BalanceReport::Aggregate* BalanceReport::aggregate(int stratum) const {
    for (const auto& a : aggregates)
        if (a.stratum == stratum) return &a;
    return nullptr;
}

std::string BalanceReport::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "stratum,covariate,smd,ks\n";
    for (const auto& c : cells)
        os << c.stratum << "," << c.covariate << "," << c.smd << "," << c.ks << "\n";
    return os.str();
}

std::string BalanceReport::to_json() const {
    std::ostringstream os;
    os.precision(17);
    auto num = [&](double v) -> std::string {
        if (std::isnan(v)) return "null";
        std::ostringstream t;
        t.precision(17);
        t << v;
        return t.str();
    };
    os << "{\"aggregates\":[";
    for (std::size_t i = 0; i < aggregates.size(); ++i) {
        const auto& a = aggregates[i];
        if (i) os << ",";
        os << "{\"stratum\":" << a.stratum << ",\"source_count\":" << a.source_count
           << ",\"target_count\":" << a.target_count
           << ",\"sufficient\":" << (a.sufficient ? "true" : "false")
           << ",\"smd_mean\":" << num(a.smd_mean) << ",\"smd_sd\":" << num(a.smd_sd)
           << ",\"ks_mean\":" << num(a.ks_mean) << ",\"ks_sd\":" << num(a.ks_sd) << "}";
    }
    os << "]}";
    return os.str();
}

OutcomeBalance predicted_outcome_balance(
    const std::vector<Eigen::VectorXd>& pred_source_by_stratum,
    const std::vector<Eigen::VectorXd>& pred_target_by_stratum, double threshold) {
    if (pred_source_by_stratum.size() != pred_target_by_stratum.size())
        throw DataError("per-stratum prediction lists differ in length");
    if (!(threshold > 0.0 && threshold < 1.0))
        throw ConfigError("threshold must lie in (0,1)");

    OutcomeBalance out;
    for (std::size_t j = 0; j < pred_source_by_stratum.size(); ++j) {
        const auto& ps = pred_source_by_stratum[j];
        const auto& pt = pred_target_by_stratum[j];
        OutcomeBalance::Row r;
        r.stratum = static_cast<int>(j + 1);
        r.source_n = ps.size();
        r.target_n = pt.size();
        r.source_pos = (ps.array() > threshold).count();
        r.target_pos = (pt.array() > threshold).count();
        r.source_prop = r.source_n > 0 ? static_cast<double>(r.source_pos) / r.source_n
                                       : std::nan("");
        r.target_prop = r.target_n > 0 ? static_cast<double>(r.target_pos) / r.target_n
                                       : std::nan("");
        r.tested = r.source_n > 0 && r.target_n > 0;
        r.p_value = r.tested ? fisher_exact_2x2(r.source_pos, r.source_n - r.source_pos,
                                                r.target_pos, r.target_n - r.target_pos)
                             : std::nan("");
        out.rows.push_back(r);
    }
    return out;
}

std::string OutcomeBalance::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "stratum,source_n,source_positive,source_prop,target_n,target_positive,"
          "target_prop,fisher_p,tested\n";
    for (const auto& r : rows) {
        os << r.stratum << "," << r.source_n << "," << r.source_pos << ",";
        if (std::isnan(r.source_prop)) os << "";
        else os << r.source_prop;
        os << "," << r.target_n << "," << r.target_pos << ",";
        if (std::isnan(r.target_prop)) os << "";
        else os << r.target_prop;
        os << ",";
        if (!r.tested) os << "";
        else os << r.p_value;
        os << "," << int(r.tested) << "\n";
    }
    return os.str();
}

}  // namespace stratlearn
