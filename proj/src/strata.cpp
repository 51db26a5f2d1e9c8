#include "stratlearn/strata.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "stratlearn/errors.hpp"

namespace stratlearn {

StrataAssignment StrataAssignment::single(std::size_t n) {
    StrataAssignment a;
    a.k = 1;
    a.stratum_of.assign(n, 1);
    a.merge_map = {{1}};
    return a;
}

std::vector<Eigen::Index> StrataAssignment::rows_in(int stratum) const {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < stratum_of.size(); ++i)
        if (stratum_of[i] == stratum) out.push_back(static_cast<Eigen::Index>(i));
    return out;
}

std::vector<Eigen::Index> StrataAssignment::rows_in(int stratum,
                                                    const std::vector<std::uint8_t>& s,
                                                    std::uint8_t group) const {
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < stratum_of.size(); ++i)
        if (stratum_of[i] == stratum && s[i] == group)
            out.push_back(static_cast<Eigen::Index>(i));
    return out;
}

std::vector<Eigen::Index> StrataAssignment::merged_source_rows(
    int stratum, const std::vector<std::uint8_t>& s) const {
    const auto& pool = merge_map[static_cast<std::size_t>(stratum - 1)];
    std::vector<Eigen::Index> out;
    for (std::size_t i = 0; i < stratum_of.size(); ++i) {
        if (s[i] != 1) continue;
        if (std::find(pool.begin(), pool.end(), stratum_of[i]) != pool.end())
            out.push_back(static_cast<Eigen::Index>(i));
    }
    return out;
}

Eigen::Index StrataAssignment::source_count(int stratum,
                                            const std::vector<std::uint8_t>& s) const {
    Eigen::Index c = 0;
    for (std::size_t i = 0; i < stratum_of.size(); ++i)
        if (stratum_of[i] == stratum && s[i] == 1) ++c;
    return c;
}

StrataAssignment stratify(const std::vector<double>& scores,
                          const std::vector<std::uint8_t>& s, int k) {
    const std::size_t n = scores.size();
    if (k < 2) throw ConfigError("stratification needs k >= 2");
    if (n < static_cast<std::size_t>(k)) throw DataError("fewer rows than strata");
    if (s.size() != n) throw DataError("indicator length mismatch in stratify");
    for (double e : scores)
        if (!(e > 0.0 && e < 1.0))
            throw DataError("propensity scores must lie strictly inside (0,1)");

    std::vector<double> sorted = scores;
    std::sort(sorted.begin(), sorted.end());
    {
        std::set<double> distinct(sorted.begin(), sorted.end());
        if (distinct.size() < static_cast<std::size_t>(k))
            throw DataError("degenerate stratification: fewer than k distinct score values");
    }

    StrataAssignment a;
    a.k = k;
    a.boundaries.resize(static_cast<std::size_t>(k - 1));
    for (int j = 1; j < k; ++j) {
        // inverse-ECDF (right-continuous) quantile: the ceil(n*j/k)'th order statistic
        const std::size_t rank =
            static_cast<std::size_t>(std::ceil(static_cast<double>(n) * j / k));
        a.boundaries[static_cast<std::size_t>(j - 1)] = sorted[rank - 1];
    }

    a.stratum_of.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        int below = 0;
        for (double q : a.boundaries)
            if (q < scores[i]) ++below;
        a.stratum_of[i] = k - below;
    }

    a.merge_map.resize(static_cast<std::size_t>(k));
    for (int j = 1; j <= k; ++j) a.merge_map[static_cast<std::size_t>(j - 1)] = {j};
    return a;
}

StrataAssignment merge_small_strata(const StrataAssignment& a,
                                    const std::vector<std::uint8_t>& s,
                                    Eigen::Index min_source) {
    if (min_source < 1) throw ConfigError("min_source must be at least 1");
    if (s.size() != a.stratum_of.size())
        throw DataError("indicator length mismatch in merge_small_strata");

    std::vector<Eigen::Index> counts(static_cast<std::size_t>(a.k), 0);
    Eigen::Index total = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == 1) {
            ++counts[static_cast<std::size_t>(a.stratum_of[i] - 1)];
            ++total;
        }
    }
    if (total < min_source)
        throw DataError("total source count " + std::to_string(total) +
                        " is below min_source " + std::to_string(min_source) +
                        "; cannot train anywhere");

    StrataAssignment out = a;
    out.deficient.clear();
    for (int j = 1; j <= a.k; ++j) {
        std::vector<int> pool = {j};
        Eigen::Index pooled = counts[static_cast<std::size_t>(j - 1)];
        int lo = j;
        while (pooled < min_source && lo > 1) {
            --lo;
            pool.push_back(lo);
            pooled += counts[static_cast<std::size_t>(lo - 1)];
        }
        std::sort(pool.begin(), pool.end());
        out.merge_map[static_cast<std::size_t>(j - 1)] = pool;
        if (pooled < min_source) out.deficient.push_back(j);
    }
    return out;
}

StrataReport strata_report(const StrataAssignment& a, const Dataset& d) {
    StrataReport rep;
    bool target_labels = false;
    if (d.has_labels) {
        for (Eigen::Index i = 0; i < d.n(); ++i)
            if (d.s[i] == 0 && d.y_present[i]) target_labels = true;
    }
    for (int j = 1; j <= a.k; ++j) {
        StrataReport::Row r;
        r.stratum = j;
        r.source_count = 0;
        r.target_count = 0;
        r.target_labels_available = target_labels;
        r.merged_from = a.merge_map[static_cast<std::size_t>(j - 1)];
        double ssum = 0.0, tsum = 0.0;
        Eigen::Index slab = 0, tlab = 0;
        for (Eigen::Index i = 0; i < d.n(); ++i) {
            if (a.stratum_of[static_cast<std::size_t>(i)] != j) continue;
            if (d.s[i] == 1) {
                ++r.source_count;
                if (d.has_labels && d.y_present[i]) {
                    ssum += d.y[i];
                    ++slab;
                }
            } else {
                ++r.target_count;
                if (d.has_labels && d.y_present[i]) {
                    tsum += d.y[i];
                    ++tlab;
                }
            }
        }
        r.source_label_mean = slab > 0 ? ssum / slab : std::nan("");
        r.target_label_mean = tlab > 0 ? tsum / tlab : std::nan("");
        rep.rows.push_back(std::move(r));
    }
    return rep;
}

std::string StrataReport::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "stratum,source_count,target_count,source_label_mean,target_label_mean,merged_from\n";
    for (const auto& r : rows) {
        os << r.stratum << "," << r.source_count << "," << r.target_count << ",";
        if (std::isnan(r.source_label_mean)) os << "";
        else os << r.source_label_mean;
        os << ",";
        if (!r.target_labels_available || std::isnan(r.target_label_mean)) os << "";
        else os << r.target_label_mean;
        os << ",";
        for (std::size_t i = 0; i < r.merged_from.size(); ++i) {
            if (i) os << "+";
            os << r.merged_from[i];
        }
        os << "\n";
    }
    return os.str();
}

std::string StrataReport::to_json() const {
    std::ostringstream os;
    os.precision(17);
    os << "[";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        if (i) os << ",";
        os << "{\"stratum\":" << r.stratum << ",\"source_count\":" << r.source_count
           << ",\"target_count\":" << r.target_count;
        os << ",\"source_label_mean\":";
        if (std::isnan(r.source_label_mean)) os << "null";
        else os << r.source_label_mean;
        os << ",\"target_label_mean\":";
        if (!r.target_labels_available || std::isnan(r.target_label_mean)) os << "null";
        else os << r.target_label_mean;
        os << ",\"merged_from\":[";
        for (std::size_t m = 0; m < r.merged_from.size(); ++m) {
            if (m) os << ",";
            os << r.merged_from[m];
        }
        os << "]}";
    }
    os << "]";
    return os.str();
}

}  // namespace stratlearn
