#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stratlearn/balance.hpp"
#include "stratlearn/errors.hpp"
#include "stratlearn/propensity.hpp"
#include "stratlearn/rng.hpp"
#include "stratlearn/strata.hpp"
#include "synth.hpp"

using namespace stratlearn;

TEST_CASE("smd basics") {
    Eigen::VectorXd a(4), b(4);
    a << 1, 2, 3, 4;
    b = a;
    CHECK(smd(a, b) == 0.0);

    // means 1 and 0, both variances 1
    Eigen::VectorXd s(3), t(3);
    s << 0, 1, 2;
    t << -1, 0, 1;
    CHECK(smd(s, t) == doctest::Approx(1.0).epsilon(1e-12));

    // zero pooled variance: equal means give 0, unequal give +inf
    Eigen::VectorXd c1 = Eigen::VectorXd::Constant(3, 5.0);
    Eigen::VectorXd c2 = Eigen::VectorXd::Constant(3, 5.0);
    CHECK(smd(c1, c2) == 0.0);
    c2.setConstant(6.0);
    CHECK(std::isinf(smd(c1, c2)));

    CHECK_THROWS_AS(smd(Eigen::VectorXd(), a), DataError);
}

TEST_CASE("smd is invariant under a common affine rescaling") {
    Rng rng(3);
    Eigen::VectorXd a(50), b(60);
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = rng.normal();
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.normal() + 0.3;
    const double base = smd(a, b);
    const double scaled = smd(3.7 * a.array() - 2.0, 3.7 * b.array() - 2.0);
    CHECK(std::abs(base - scaled) < 1e-10);
}

TEST_CASE("ks statistic basics and brute-force agreement") {
    Eigen::VectorXd a(4), b(4);
    a << 1, 2, 3, 4;
    b = a;
    CHECK(ks_statistic(a, b) == 0.0);

    Eigen::VectorXd lo(2), hi(2);
    lo << 1, 2;
    hi << 3, 4;
    CHECK(ks_statistic(lo, hi) == 1.0);

    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        Rng rng(seed);
        Eigen::VectorXd s(20), t(20);
        for (Eigen::Index i = 0; i < 20; ++i) {
            s[i] = rng.normal();
            t[i] = rng.normal() * 1.2 + 0.1;
        }
        CHECK(ks_statistic(s, t) == oracles::ks_bruteforce(s, t));
    }
}

TEST_CASE("ks is invariant under strictly monotone transforms") {
    Rng rng(9);
    Eigen::VectorXd a(40), b(35);
    for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = rng.normal();
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.normal() + 0.5;
    const double base = ks_statistic(a, b);
    auto warp = [](const Eigen::VectorXd& v) {
        Eigen::VectorXd out = v;
        for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = std::exp(v[i]) + v[i];
        return out;
    };
    CHECK(ks_statistic(warp(a), warp(b)) == base);
}

TEST_CASE("fisher exact two-sided values") {
    CHECK(fisher_exact_2x2(1, 1, 1, 1) == doctest::Approx(1.0).epsilon(1e-12));
    // 2 / C(20,10), frozen from the exhaustive enumeration
    CHECK(fisher_exact_2x2(10, 0, 0, 10) ==
          doctest::Approx(1.082508822446903e-05).epsilon(1e-9));
    CHECK(fisher_exact_2x2(10, 0, 0, 10) ==
          doctest::Approx(oracles::fisher_enumerate(10, 0, 0, 10)).epsilon(1e-12));
    CHECK_THROWS_AS(fisher_exact_2x2(0, 0, 0, 0), DataError);
}

TEST_CASE("fisher exact matches published stratum diagnostics") {
    // predicted-label 2x2 tables with their reported two-sided p-values
    CHECK(fisher_exact_2x2(518, 440, 1853, 1453) == doctest::Approx(0.284).epsilon(2e-3));
    CHECK(fisher_exact_2x2(28, 92, 1040, 3104) == doctest::Approx(0.749).epsilon(2e-3));
    CHECK(fisher_exact_2x2(414, 510, 1106, 2234) ==
          doctest::Approx(8.4e-11).epsilon(0.05));
}

TEST_CASE("fisher exact agrees with full enumeration on small margins") {
    for (long a = 0; a <= 6; ++a)
        for (long b = 0; b <= 6; ++b)
            for (long c = 0; c <= 6; ++c)
                for (long d = 0; d <= 6; ++d) {
                    if (a + b + c + d == 0) continue;
                    const double got = fisher_exact_2x2(a, b, c, d);
                    const double want = oracles::fisher_enumerate(a, b, c, d);
                    CHECK(std::abs(got - want) < 1e-10);
                }
}

TEST_CASE("fisher exact is invariant under transposing the table") {
    Rng rng(17);
    for (int rep = 0; rep < 50; ++rep) {
        const long a = static_cast<long>(rng.below(15));
        const long b = static_cast<long>(rng.below(15));
        const long c = static_cast<long>(rng.below(15));
        const long d = static_cast<long>(rng.below(15));
        if (a + b + c + d == 0) continue;
        CHECK(fisher_exact_2x2(a, b, c, d) ==
              doctest::Approx(fisher_exact_2x2(a, c, b, d)).epsilon(1e-10));
    }
}

TEST_CASE("balance report improves within strata under a correct propensity model") {
    int improved = 0;
    const int n_seeds = 10;
    for (int seed = 0; seed < n_seeds; ++seed) {
        Dataset d = synth::regression_task(3000, 5, 100 + seed);
        d = synth::apply_shift(d, 13, 4, 200 + seed);
        auto [sd, rec] = standardize(d);
        const PropensityModel pm = fit_propensity(sd);
        const Eigen::VectorXd scores = predict_propensity(pm, sd.X);
        const std::vector<double> sv(scores.data(), scores.data() + scores.size());
        StrataAssignment a = stratify(sv, sd.s, 5);

        const BalanceReport rep = balance_report(sd, a);
        const auto* raw = rep.aggregate(0);
        REQUIRE(raw != nullptr);
        REQUIRE(raw->sufficient);
        double acc = 0.0;
        int cnt = 0;
        for (int j = 1; j <= 5; ++j) {
            const auto* agg = rep.aggregate(j);
            if (agg && agg->sufficient) {
                acc += agg->smd_mean;
                ++cnt;
            }
        }
        REQUIRE(cnt > 0);
        if (acc / cnt < raw->smd_mean) ++improved;
    }
    CHECK(improved == n_seeds);
}

TEST_CASE("balance report flags thin strata as insufficient") {
    Dataset d = synth::regression_task(60, 3, 1);
    for (Eigen::Index i = 0; i < d.n(); ++i) d.s[static_cast<std::size_t>(i)] = i < 50 ? 1 : 0;
    Rng rng(2);
    std::vector<double> scores(60);
    for (auto& v : scores) v = 0.01 + 0.98 * rng.uniform();
    const StrataAssignment a = stratify(scores, d.s, 5);
    const BalanceReport rep = balance_report(d, a, 20);
    // with 10 target rows total, every stratum is short on the target side
    for (int j = 1; j <= 5; ++j) {
        const auto* agg = rep.aggregate(j);
        REQUIRE(agg != nullptr);
        CHECK_FALSE(agg->sufficient);
    }
    CHECK(rep.aggregate(0)->sufficient == false);   // only 10 target rows overall
}

TEST_CASE("predicted outcome balance proportions and test") {
    Eigen::VectorXd same(10);
    same << 0.9, 0.8, 0.2, 0.4, 0.7, 0.1, 0.6, 0.3, 0.55, 0.45;
    const OutcomeBalance ob = predicted_outcome_balance({same}, {same}, 0.5);
    REQUIRE(ob.rows.size() == 1);
    CHECK(ob.rows[0].source_prop == ob.rows[0].target_prop);
    CHECK(ob.rows[0].p_value == doctest::Approx(1.0).epsilon(1e-12));

    Eigen::VectorXd ones = Eigen::VectorXd::Constant(10, 0.9);
    Eigen::VectorXd zeros = Eigen::VectorXd::Constant(10, 0.1);
    const OutcomeBalance split = predicted_outcome_balance({ones}, {zeros}, 0.5);
    CHECK(split.rows[0].p_value == doctest::Approx(1.082508822446903e-05).epsilon(1e-9));

    const OutcomeBalance empty = predicted_outcome_balance({ones}, {Eigen::VectorXd()}, 0.5);
    CHECK_FALSE(empty.rows[0].tested);
}
