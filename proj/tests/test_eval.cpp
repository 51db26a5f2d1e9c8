#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stratlearn/errors.hpp"
#include "stratlearn/eval.hpp"
#include "stratlearn/rng.hpp"

using namespace stratlearn;

TEST_CASE("auc on the fixed fixtures") {
    Eigen::VectorXd s(4), perfect(4), mixed(4);
    s << 0.9, 0.8, 0.4, 0.2;
    perfect << 1, 1, 0, 0;
    mixed << 1, 0, 1, 0;
    CHECK(auc(s, perfect) == 1.0);
    CHECK(auc(s, mixed) == 0.75);

    Eigen::VectorXd flat = Eigen::VectorXd::Constant(4, 0.3);
    CHECK(auc(flat, mixed) == 0.5);

    Eigen::VectorXd one_class = Eigen::VectorXd::Ones(4);
    CHECK_THROWS_AS(auc(s, one_class), DataError);
}

TEST_CASE("auc equals the exhaustive pairwise count on random fixtures") {
    Rng rng(2024);
    for (int rep = 0; rep < 100; ++rep) {
        const Eigen::Index n = 5 + static_cast<Eigen::Index>(rng.below(40));
        Eigen::VectorXd scores(n), labels(n);
        bool pos = false, neg = false;
        for (Eigen::Index i = 0; i < n; ++i) {
            // coarse scores induce plenty of ties
            scores[i] = std::floor(rng.uniform() * 8.0) / 8.0;
            labels[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
            (labels[i] == 1.0 ? pos : neg) = true;
        }
        if (!pos) labels[0] = 1.0;
        if (!neg) labels[n - 1] = 0.0;
        CHECK(auc(scores, labels) == oracles::auc_pairwise(scores, labels));
    }
}

TEST_CASE("auc invariances") {
    Rng rng(5);
    Eigen::VectorXd scores(30), labels(30);
    for (Eigen::Index i = 0; i < 30; ++i) {
        scores[i] = rng.uniform();
        labels[i] = i % 3 == 0 ? 1.0 : 0.0;
    }
    const double base = auc(scores, labels);

    Eigen::VectorXd warped(30);
    for (Eigen::Index i = 0; i < 30; ++i) warped[i] = std::exp(3.0 * scores[i]) + 1.0;
    CHECK(auc(warped, labels) == base);

    CHECK(auc(-scores, labels) == doctest::Approx(1.0 - base).epsilon(1e-15));
}

TEST_CASE("roc curve endpoints, reversal, and trapezoid area") {
    Eigen::VectorXd s(4), y(4);
    s << 0.9, 0.8, 0.4, 0.2;
    y << 1, 1, 0, 0;
    const auto pts = roc_curve(s, y);
    REQUIRE(pts.size() == 5);
    CHECK(pts.front() == std::pair<double, double>{0.0, 0.0});
    CHECK(pts[2] == std::pair<double, double>{0.0, 1.0});
    CHECK(pts.back() == std::pair<double, double>{1.0, 1.0});

    auto area = [](const std::vector<std::pair<double, double>>& p) {
        double acc = 0.0;
        for (std::size_t i = 1; i < p.size(); ++i)
            acc += (p[i].first - p[i - 1].first) * (p[i].second + p[i - 1].second) / 2.0;
        return acc;
    };
    Rng rng(8);
    for (int rep = 0; rep < 20; ++rep) {
        Eigen::VectorXd scores(25), labels(25);
        for (Eigen::Index i = 0; i < 25; ++i) {
            scores[i] = std::floor(rng.uniform() * 6.0) / 6.0;
            labels[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
        }
        labels[0] = 1.0;
        labels[1] = 0.0;
        const auto curve = roc_curve(scores, labels);
        CHECK(std::abs(area(curve) - auc(scores, labels)) < 1e-12);
        // monotone nondecreasing in both coordinates
        for (std::size_t i = 1; i < curve.size(); ++i) {
            CHECK(curve[i].first >= curve[i - 1].first);
            CHECK(curve[i].second >= curve[i - 1].second);
        }
    }
}

TEST_CASE("roc points match a per-threshold confusion-matrix oracle") {
    Eigen::VectorXd s(6), y(6);
    s << 0.9, 0.7, 0.7, 0.5, 0.3, 0.1;
    y << 1, 0, 1, 1, 0, 0;
    const auto pts = roc_curve(s, y);

    // oracle: enumerate thresholds at distinct scores; predict positive when
    // score >= threshold
    std::vector<double> thresholds = {0.9, 0.7, 0.5, 0.3, 0.1};
    std::vector<std::pair<double, double>> expect = {{0.0, 0.0}};
    for (double th : thresholds) {
        double tp = 0, fp = 0, pos = 0, neg = 0;
        for (Eigen::Index i = 0; i < 6; ++i) {
            if (y[i] == 1.0) ++pos;
            else ++neg;
            if (s[i] >= th) (y[i] == 1.0 ? tp : fp) += 1;
        }
        expect.push_back({fp / neg, tp / pos});
    }
    REQUIRE(pts.size() == expect.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        CHECK(pts[i].first == doctest::Approx(expect[i].first).epsilon(1e-15));
        CHECK(pts[i].second == doctest::Approx(expect[i].second).epsilon(1e-15));
    }
}

TEST_CASE("mse basics") {
    Eigen::VectorXd a(3), b(3);
    a << 1, 2, 3;
    CHECK(mse(a, a) == 0.0);
    b << 2, 2, 5;
    CHECK(mse(a, b) == doctest::Approx((1.0 + 0.0 + 4.0) / 3.0).epsilon(1e-15));
}

TEST_CASE("bootstrap se matches an independent re-implementation sharing the seed rule") {
    Rng rng(55);
    const Eigen::Index n = 50;
    Eigen::VectorXd scores(n), labels(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        scores[i] = rng.uniform();
        labels[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    }
    labels[0] = 1.0;
    labels[1] = 0.0;

    const int n_boot = 100;
    const std::uint64_t seed = 9;
    const BootstrapResult got = bootstrap_se(Metric::auc, scores, labels, n_boot, seed);

    // reference: same published resampling rule, independent statistic code
    std::vector<double> vals;
    for (int r = 0; r < n_boot; ++r) {
        for (int retry = 0; retry < 10; ++retry) {
            const auto idx = bootstrap_indices(n, seed, r, retry);
            Eigen::VectorXd sc(n), lb(n);
            for (Eigen::Index i = 0; i < n; ++i) {
                sc[i] = scores[idx[static_cast<std::size_t>(i)]];
                lb[i] = labels[idx[static_cast<std::size_t>(i)]];
            }
            bool pos = false, neg = false;
            for (Eigen::Index i = 0; i < n; ++i) (lb[i] == 1.0 ? pos : neg) = true;
            if (!pos || !neg) continue;
            vals.push_back(oracles::auc_pairwise(sc, lb));
            break;
        }
    }
    double mean = 0.0;
    for (double v : vals) mean += v;
    mean /= static_cast<double>(vals.size());
    double acc = 0.0;
    for (double v : vals) acc += (v - mean) * (v - mean);
    const double want = std::sqrt(acc / static_cast<double>(vals.size() - 1));
    CHECK(std::abs(got.se - want) < 1e-12);
    CHECK(got.used == static_cast<int>(vals.size()));
}

TEST_CASE("bootstrap is deterministic and near zero for a constant metric") {
    Eigen::VectorXd scores(200), labels(200);
    for (Eigen::Index i = 0; i < 200; ++i) {
        scores[i] = i < 100 ? 0.9 : 0.1;
        labels[i] = i < 100 ? 1.0 : 0.0;
    }
    const BootstrapResult a = bootstrap_se(Metric::auc, scores, labels, 400, 3);
    const BootstrapResult b = bootstrap_se(Metric::auc, scores, labels, 400, 3);
    CHECK(a.se == b.se);
    CHECK(a.se < 1e-12);   // perfectly separated: every resample has AUC 1
}

TEST_CASE("paired bootstrap of identical methods is exactly zero") {
    Rng rng(4);
    Eigen::VectorXd scores(80), labels(80);
    for (Eigen::Index i = 0; i < 80; ++i) {
        scores[i] = rng.uniform();
        labels[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
    }
    labels[0] = 1.0;
    labels[1] = 0.0;
    const PairedBootstrap pb =
        paired_bootstrap_diff(Metric::auc, scores, scores, labels, 200, 5);
    CHECK(pb.diff == 0.0);
    CHECK(pb.se == 0.0);
}

TEST_CASE("evaluate produces a full report") {
    Eigen::VectorXd scores(100), labels(100);
    Rng rng(12);
    for (Eigen::Index i = 0; i < 100; ++i) {
        labels[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
        scores[i] = 0.3 * labels[i] + 0.7 * rng.uniform();
    }
    labels[0] = 1.0;
    labels[1] = 0.0;
    const EvalReport rep = evaluate(Metric::auc, scores, labels, 50, 1);
    CHECK(rep.value > 0.5);
    CHECK(rep.bootstrap_se > 0.0);
    CHECK_FALSE(rep.roc_points.empty());
    CHECK(rep.to_json().find("\"auc\"") != std::string::npos);
}
