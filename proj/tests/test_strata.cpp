#include <doctest.h>

#include <algorithm>
#include <set>

#include "oracles.hpp"
#include "stratlearn/errors.hpp"
#include "stratlearn/rng.hpp"
#include "stratlearn/strata.hpp"
#include "synth.hpp"

using namespace stratlearn;

TEST_CASE("evenly spread scores split into equal strata with top scores in stratum 1") {
    std::vector<double> scores;
    for (int i = 0; i < 10; ++i) scores.push_back(0.05 + 0.1 * i);
    std::vector<std::uint8_t> s(10, 1);
    s[0] = s[1] = 0;

    const StrataAssignment a = stratify(scores, s, 5);
    std::vector<int> counts(5, 0);
    for (int st : a.stratum_of) ++counts[static_cast<std::size_t>(st - 1)];
    for (int c : counts) CHECK(c == 2);
    // stratum 1 holds the two highest scores, 0.95 and 0.85
    CHECK(a.stratum_of[9] == 1);
    CHECK(a.stratum_of[8] == 1);
    CHECK(a.stratum_of[0] == 5);
}

TEST_CASE("identical scores are a degenerate stratification") {
    std::vector<double> scores(20, 0.4);
    std::vector<std::uint8_t> s(20, 1);
    s[0] = 0;
    CHECK_THROWS_AS(stratify(scores, s, 5), DataError);
}

TEST_CASE("stratify agrees with the sort-then-chunk oracle off boundary ties") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        Rng rng(seed);
        const int n = 137;
        const int k = 2 + static_cast<int>(rng.below(6));
        std::vector<double> scores(n);
        for (auto& v : scores) v = 0.01 + 0.98 * rng.uniform();
        std::vector<std::uint8_t> s(n, 1);
        s[0] = 0;

        const StrataAssignment a = stratify(scores, s, k);
        const auto oracle = oracles::stratify_sort_chunk(scores, k);
        const auto tied = oracles::boundary_tied(scores, k);
        for (int i = 0; i < n; ++i) {
            if (tied[static_cast<std::size_t>(i)]) continue;
            CHECK(a.stratum_of[static_cast<std::size_t>(i)] ==
                  oracle[static_cast<std::size_t>(i)]);
        }
    }
}

TEST_CASE("stratify partition and orientation invariants") {
    Rng rng(42);
    const int n = 500, k = 5;
    std::vector<double> scores(n);
    for (auto& v : scores) v = 0.01 + 0.98 * rng.uniform();
    std::vector<std::uint8_t> s(n);
    for (auto& v : s) v = rng.uniform() < 0.5 ? 1 : 0;

    const StrataAssignment a = stratify(scores, s, k);
    std::size_t total = 0;
    double prev_mean = 2.0;
    for (int j = 1; j <= k; ++j) {
        const auto rows = a.rows_in(j);
        total += rows.size();
        double m = 0.0;
        for (auto r : rows) m += scores[static_cast<std::size_t>(r)];
        m /= static_cast<double>(rows.size());
        CHECK(m < prev_mean);   // mean score strictly decreasing in stratum index
        prev_mean = m;
    }
    CHECK(total == static_cast<std::size_t>(n));
}

TEST_CASE("no shift keeps per-stratum source fractions near the global fraction") {
    for (std::uint64_t seed : {10u, 11u, 12u}) {
        Rng rng(seed);
        const int n = 2000, k = 5;
        std::vector<double> scores(n);
        for (auto& v : scores) v = 0.01 + 0.98 * rng.uniform();
        std::vector<std::uint8_t> s(n);
        for (auto& v : s) v = rng.uniform() < 0.5 ? 1 : 0;
        const double global = static_cast<double>(std::count(s.begin(), s.end(), 1)) / n;

        const StrataAssignment a = stratify(scores, s, k);
        for (int j = 1; j <= k; ++j) {
            const auto rows = a.rows_in(j);
            double frac = 0.0;
            for (auto r : rows) frac += s[static_cast<std::size_t>(r)];
            frac /= static_cast<double>(rows.size());
            const double se =
                std::sqrt(global * (1.0 - global) / static_cast<double>(rows.size()));
            CHECK(std::abs(frac - global) < 3.0 * se + 1e-12);
        }
    }
}

namespace {

// scores/s with prescribed per-stratum source counts (k=5, 100 rows/stratum)
void build_counts_fixture(const std::vector<int>& src_counts, std::vector<double>& scores,
                          std::vector<std::uint8_t>& s) {
    scores.clear();
    s.clear();
    const int per = 100;
    for (int j = 0; j < 5; ++j) {
        // stratum 5-j occupies the score band [0.1+0.15j, 0.1+0.15j+0.1]
        for (int i = 0; i < per; ++i) {
            scores.push_back(0.1 + 0.15 * j + 0.001 * i);
            const int stratum_idx = 4 - j;   // 0-based from stratum 1
            s.push_back(i < src_counts[static_cast<std::size_t>(stratum_idx)] ? 1 : 0);
        }
    }
}

}  // namespace

TEST_CASE("small strata merge toward stratum 1 until the pool is large enough") {
    std::vector<double> scores;
    std::vector<std::uint8_t> s;
    build_counts_fixture({90, 60, 13, 7, 4}, scores, s);
    const StrataAssignment a = stratify(scores, s, 5);

    // confirm the fixture produced the intended source counts
    for (int j = 1; j <= 5; ++j) {
        const Eigen::Index c = a.source_count(j, s);
        const std::vector<Eigen::Index> expect = {90, 60, 13, 7, 4};
        CHECK(c == expect[static_cast<std::size_t>(j - 1)]);
    }

    const StrataAssignment m = merge_small_strata(a, s, 40);
    CHECK(m.merge_map[0] == std::vector<int>{1});
    CHECK(m.merge_map[1] == std::vector<int>{2});
    // strata 3..5 are deficient and extend toward stratum 1; all pick up stratum 2
    CHECK(m.merge_map[2] == std::vector<int>{2, 3});
    CHECK(m.merge_map[3] == std::vector<int>{2, 3, 4});
    CHECK(m.merge_map[4] == std::vector<int>{2, 3, 4, 5});
    CHECK(m.deficient.empty());
    // merging never moves rows between strata
    CHECK(m.stratum_of == a.stratum_of);
}

TEST_CASE("merge is the identity when every stratum is large enough") {
    std::vector<double> scores;
    std::vector<std::uint8_t> s;
    build_counts_fixture({50, 50, 50, 50, 50}, scores, s);
    const StrataAssignment a = stratify(scores, s, 5);
    const StrataAssignment m = merge_small_strata(a, s, 40);
    for (int j = 1; j <= 5; ++j)
        CHECK(m.merge_map[static_cast<std::size_t>(j - 1)] == std::vector<int>{j});

    const StrataAssignment m1 = merge_small_strata(a, s, 1);
    for (int j = 1; j <= 5; ++j)
        CHECK(m1.merge_map[static_cast<std::size_t>(j - 1)] == std::vector<int>{j});
}

TEST_CASE("merge fails when the total source count cannot support training") {
    std::vector<double> scores;
    std::vector<std::uint8_t> s;
    build_counts_fixture({3, 2, 1, 1, 1}, scores, s);
    const StrataAssignment a = stratify(scores, s, 5);
    CHECK_THROWS_AS(merge_small_strata(a, s, 40), DataError);
}

TEST_CASE("a deficient stratum 1 is flagged, not silently patched") {
    std::vector<double> scores;
    std::vector<std::uint8_t> s;
    build_counts_fixture({4, 90, 90, 90, 90}, scores, s);
    const StrataAssignment a = stratify(scores, s, 5);
    const StrataAssignment m = merge_small_strata(a, s, 40);
    CHECK(m.deficient == std::vector<int>{1});
    CHECK(m.merge_map[0] == std::vector<int>{1});
}

TEST_CASE("strata report counts and label summaries") {
    Dataset d = synth::classification_task(400, 3, 21);
    for (Eigen::Index i = 0; i < d.n(); ++i) d.s[static_cast<std::size_t>(i)] = i % 2;
    Rng rng(5);
    std::vector<double> scores(400);
    for (auto& v : scores) v = 0.01 + 0.98 * rng.uniform();
    const StrataAssignment a = stratify(scores, d.s, 5);

    const StrataReport rep = strata_report(a, d);
    Eigen::Index total = 0;
    for (const auto& r : rep.rows) total += r.source_count + r.target_count;
    CHECK(total == d.n());
    for (const auto& r : rep.rows) CHECK(r.target_labels_available);

    // strip target labels: summaries become unavailable
    Dataset d2 = d;
    for (Eigen::Index i = 0; i < d2.n(); ++i)
        if (d2.s[static_cast<std::size_t>(i)] == 0) d2.y_present[static_cast<std::size_t>(i)] = 0;
    const StrataReport rep2 = strata_report(a, d2);
    for (const auto& r : rep2.rows) {
        CHECK_FALSE(r.target_labels_available);
        CHECK(r.source_count + r.target_count > 0);
    }
    const std::string csv = rep2.to_csv();
    CHECK(csv.find("stratum,") == 0);
}

TEST_CASE("stratify rejects scores outside the open unit interval") {
    std::vector<double> scores = {0.2, 0.4, 1.0, 0.6};
    std::vector<std::uint8_t> s = {1, 1, 0, 0};
    CHECK_THROWS_AS(stratify(scores, s, 2), DataError);
}
