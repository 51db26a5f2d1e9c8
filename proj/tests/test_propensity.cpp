#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "stratlearn/errors.hpp"
#include "stratlearn/propensity.hpp"
#include "stratlearn/rng.hpp"
#include "synth.hpp"

using namespace stratlearn;

TEST_CASE("no shift drives slopes to zero and scores to the source fraction") {
    Dataset d = synth::gaussian_no_shift(10000, 5, 31, 0.5);
    PropensityOptions opt;
    opt.ridge_lambda = 1e-4;
    const PropensityModel m = fit_propensity(d, opt);
    CHECK(m.converged);
    CHECK(m.coefficients.cwiseAbs().maxCoeff() < 0.1);

    const double frac = static_cast<double>(d.n_source()) / static_cast<double>(d.n());
    const Eigen::VectorXd e = predict_propensity(m, d.X);
    CHECK(std::abs(e.mean() - frac) < 0.02);
}

TEST_CASE("separable 1-D fit at lambda=1 matches a generic optimizer of the same objective") {
    Dataset d;
    const int n = 20;
    d.X.resize(n, 1);
    d.s.resize(n);
    for (int i = 0; i < n; ++i) {
        d.X(i, 0) = i < n / 2 ? -1.0 - 0.1 * i : 1.0 + 0.1 * (i - n / 2);
        d.s[static_cast<std::size_t>(i)] = i < n / 2 ? 0 : 1;
    }
    d.y = Eigen::VectorXd::Zero(n);
    d.y_present.assign(n, 1);
    d.column_names = {"x0"};

    PropensityOptions opt;
    opt.ridge_lambda = 1.0;
    const PropensityModel m = fit_propensity(d, opt);

    Eigen::VectorXd sv(n);
    for (int i = 0; i < n; ++i) sv[i] = d.s[static_cast<std::size_t>(i)];
    const Eigen::VectorXd oracle =
        oracles::logistic_gradient_ascent(d.X, sv, nullptr, 1.0, 400000, 0.5);
    CHECK(std::abs(m.intercept - oracle[0]) < 1e-6);
    CHECK(std::abs(m.coefficients[0] - oracle[1]) < 1e-6);
}

TEST_CASE("a constant covariate leaves the intercept-only source rate") {
    Dataset d;
    const int n = 40;
    d.X = Eigen::MatrixXd::Constant(n, 1, 5.0);
    d.s.assign(n, 0);
    for (int i = 0; i < 25; ++i) d.s[static_cast<std::size_t>(i)] = 1;
    d.y = Eigen::VectorXd::Zero(n);
    d.y_present.assign(n, 1);
    d.column_names = {"c"};

    const PropensityModel m = fit_propensity(d);
    const Eigen::VectorXd e = predict_propensity(m, d.X);
    const double rate = 25.0 / 40.0;
    for (Eigen::Index i = 0; i < e.size(); ++i)
        CHECK(e[i] == doctest::Approx(rate).epsilon(1e-10));
}

TEST_CASE("prediction link behavior") {
    PropensityModel m;
    m.intercept = 0.0;
    m.coefficients = Eigen::VectorXd::Zero(2);

    Eigen::MatrixXd X(3, 2);
    X << 1, 2, -5, 3, 0, 0;
    const Eigen::VectorXd e = predict_propensity(m, X);
    for (Eigen::Index i = 0; i < 3; ++i) CHECK(e[i] == 0.5);

    m.coefficients << 10.0, 0.0;
    Eigen::MatrixXd huge(1, 2);
    huge << 1e6, 0.0;
    const Eigen::VectorXd p = predict_propensity(m, huge);
    CHECK(p[0] < 1.0);
    CHECK(p[0] > 0.999);

    Eigen::MatrixXd wrong(2, 3);
    CHECK_THROWS_AS(predict_propensity(m, wrong), DataError);
}

TEST_CASE("permuting rows permutes scores identically") {
    Dataset d = synth::gaussian_no_shift(200, 3, 7);
    const PropensityModel m = fit_propensity(d);
    const Eigen::VectorXd e = predict_propensity(m, d.X);

    std::vector<Eigen::Index> perm(200);
    for (Eigen::Index i = 0; i < 200; ++i) perm[static_cast<std::size_t>(i)] = 199 - i;
    Eigen::MatrixXd Xp(200, 3);
    for (Eigen::Index i = 0; i < 200; ++i) Xp.row(i) = d.X.row(perm[static_cast<std::size_t>(i)]);
    const Eigen::VectorXd ep = predict_propensity(m, Xp);
    for (Eigen::Index i = 0; i < 200; ++i)
        CHECK(ep[i] == e[perm[static_cast<std::size_t>(i)]]);
}

TEST_CASE("penalized log-likelihood is non-decreasing across IRLS iterations") {
    Dataset d = synth::gaussian_no_shift(400, 4, 13, 0.4);
    // induce real structure so the path has several steps
    for (Eigen::Index i = 0; i < d.n(); ++i)
        d.s[static_cast<std::size_t>(i)] = d.X(i, 0) + 0.3 * d.X(i, 1) > 0 ? 1 : 0;
    const PropensityModel m = fit_propensity(d);
    REQUIRE(m.loglik_path.size() > 2);
    for (std::size_t i = 1; i < m.loglik_path.size(); ++i)
        CHECK(m.loglik_path[i] >= m.loglik_path[i - 1] - 1e-12);
}

TEST_CASE("scores at lambda=0 are invariant under invertible affine reparameterization") {
    Dataset d = synth::gaussian_no_shift(300, 2, 23, 0.5);
    for (Eigen::Index i = 0; i < d.n(); ++i)
        d.s[static_cast<std::size_t>(i)] =
            d.X(i, 0) - d.X(i, 1) + 0.2 > 0 ? 1 : (i % 3 == 0 ? 1 : 0);
    PropensityOptions opt;
    opt.ridge_lambda = 0.0;
    opt.tol = 1e-12;
    const PropensityModel m1 = fit_propensity(d, opt);
    const Eigen::VectorXd e1 = predict_propensity(m1, d.X);

    // x -> A x + b with invertible A
    Eigen::MatrixXd A(2, 2);
    A << 2.0, 0.5, -1.0, 1.5;
    Dataset d2 = d;
    d2.X = (d.X * A.transpose()).rowwise() + Eigen::RowVector2d(1.0, -2.0);
    const PropensityModel m2 = fit_propensity(d2, opt);
    const Eigen::VectorXd e2 = predict_propensity(m2, d2.X);
    CHECK((e1 - e2).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("near separation is reported as a warning, not an error") {
    Dataset d;
    const int n = 30;
    d.X.resize(n, 1);
    d.s.resize(n);
    for (int i = 0; i < n; ++i) {
        d.X(i, 0) = i < n / 2 ? -1.0 : 1.0;
        d.s[static_cast<std::size_t>(i)] = i < n / 2 ? 0 : 1;
    }
    d.X(0, 0) = -1.001;   // keep two distinct values per side
    d.y = Eigen::VectorXd::Zero(n);
    d.y_present.assign(n, 1);
    d.column_names = {"x0"};

    PropensityOptions opt;
    opt.ridge_lambda = 1e-10;
    opt.max_iter = 200;
    const PropensityModel m = fit_propensity(d, opt);
    CHECK(m.separation_warning);
    const Eigen::VectorXd e = predict_propensity(m, d.X);
    for (Eigen::Index i = 0; i < e.size(); ++i) {
        CHECK(e[i] > 0.0);
        CHECK(e[i] < 1.0);
    }
}

TEST_CASE("model round-trips through its text form") {
    Dataset d = synth::gaussian_no_shift(100, 3, 77);
    const PropensityModel m = fit_propensity(d);
    const PropensityModel back = PropensityModel::from_text(m.to_text());
    CHECK(back.intercept == m.intercept);
    CHECK(back.coefficients == m.coefficients);
    CHECK(back.converged == m.converged);
}

TEST_CASE("fit requires both groups") {
    Dataset d = synth::gaussian_no_shift(50, 2, 3);
    for (auto& v : d.s) v = 1;
    CHECK_THROWS_AS(fit_propensity(d), DataError);
}
