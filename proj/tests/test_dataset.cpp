#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "stratlearn/dataset.hpp"
#include "stratlearn/errors.hpp"
#include "synth.hpp"

using namespace stratlearn;
namespace fs = std::filesystem;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const auto path = fs::temp_directory_path() / name;
    std::ofstream out(path);
    out << content;
    return path.string();
}

}  // namespace

TEST_CASE("load_csv maps columns and counts") {
    const auto p = write_temp("ds_basic.csv", "x1,x2,y,s\n1,2,0,1\n3,4,1,0\n5,6,1,1\n");
    const Dataset d = load_csv(p, std::string("y"), std::string("s"));
    CHECK(d.n() == 3);
    CHECK(d.f() == 2);
    CHECK(d.column_names == std::vector<std::string>{"x1", "x2"});
    CHECK(d.s == std::vector<std::uint8_t>{1, 0, 1});
    CHECK(d.y[1] == 1.0);
}

TEST_CASE("load_csv rejects a non-binary indicator with row and column") {
    const auto p = write_temp("ds_badind.csv", "x1,y,s\n1,0,1\n2,1,2\n");
    try {
        load_csv(p, std::string("y"), std::string("s"));
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("row 2") != std::string::npos);
        CHECK(msg.find("'s'") != std::string::npos);
    }
}

TEST_CASE("load_csv allows missing labels on target rows only") {
    const auto ok = write_temp("ds_missy.csv", "x1,y,s\n1,0.5,1\n2,,0\n3,,0\n");
    const Dataset d = load_csv(ok, std::string("y"), std::string("s"));
    CHECK(d.y_present == std::vector<std::uint8_t>{1, 0, 0});

    const auto bad = write_temp("ds_missy_src.csv", "x1,y,s\n1,,1\n2,0.5,0\n");
    CHECK_THROWS_AS(load_csv(bad, std::string("y"), std::string("s")), DataError);
}

TEST_CASE("load_csv error cases") {
    CHECK_THROWS_AS(load_csv("/nonexistent/file.csv", {}, {}), DataError);
    const auto dup = write_temp("ds_dup.csv", "x1,x1,s\n1,2,1\n");
    CHECK_THROWS_AS(load_csv(dup, {}, std::string("s")), DataError);
    const auto nonnum = write_temp("ds_nonnum.csv", "x1,s\nabc,1\n");
    CHECK_THROWS_AS(load_csv(nonnum, {}, std::string("s")), DataError);
}

TEST_CASE("load_csv drops non-finite covariate rows with a report") {
    const auto p = write_temp("ds_nan.csv", "x1,s\n1,1\nnan,1\n3,0\ninf,0\n4,0\n");
    CsvLoadReport rep;
    const Dataset d = load_csv(p, {}, std::string("s"), &rep);
    CHECK(d.n() == 3);
    REQUIRE(rep.rejected.size() == 2);
    CHECK(rep.rejected[0].row == 2);
    CHECK(rep.rejected[1].row == 4);
}

TEST_CASE("standardize normalizes and records the transform") {
    Dataset d;
    d.X.resize(3, 2);
    d.X << 1, 5, 2, 5, 3, 5;
    d.y = Eigen::VectorXd::Zero(3);
    d.y_present.assign(3, 1);
    d.s = {1, 1, 0};
    d.column_names = {"a", "b"};

    auto [sd, rec] = standardize(d);
    CHECK(std::abs(sd.X.col(0).mean()) < 1e-10);
    const double var = (sd.X.col(0).array() - sd.X.col(0).mean()).square().sum() / 2.0;
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-10);

    // constant column passes through, flagged
    CHECK(rec.constant[1] == 1);
    CHECK(sd.X.col(1) == d.X.col(1));

    // the record replays the identical transform
    CHECK(rec.apply(d.X) == sd.X);

    // idempotent on already-standardized data
    auto [sd2, rec2] = standardize(sd);
    CHECK((sd2.X.col(0) - sd.X.col(0)).cwiseAbs().maxCoeff() < 1e-10);
    (void)rec2;

    // record round-trips through its text form
    const StandardizeRecord back = StandardizeRecord::from_text(rec.to_text());
    CHECK(back.apply(d.X) == sd.X);
}

TEST_CASE("standardize rejects empty input") {
    Dataset d;
    CHECK_THROWS_AS(standardize(d), DataError);
}

TEST_CASE("beta acceptance peaks at the analytic mode") {
    Eigen::VectorXd u(3);
    u << 0.0, 0.8, 1.0;   // mode of Beta(13,4) is 12/15 = 0.8
    const Eigen::VectorXd acc = beta_acceptance(u, 13.0, 4.0);
    CHECK(acc[1] == 1.0);
    CHECK(acc[0] < 1.0);
    CHECK(acc[2] < 1.0);
}

TEST_CASE("simulate_shift is deterministic and preserves rows") {
    Dataset d = synth::regression_task(500, 3, 7);
    ShiftSpec sp;
    sp.beta_a = 13;
    sp.beta_b = 4;
    sp.shift_column = 0;
    sp.seed = 11;
    const Dataset a = simulate_shift(d, sp);
    const Dataset b = simulate_shift(d, sp);
    CHECK(a.s == b.s);
    CHECK(a.X == d.X);
    CHECK(a.y == d.y);
    CHECK(a.n_target() > 0);
    CHECK(a.n_source() > 0);
}

TEST_CASE("simulate_shift validates parameters") {
    Dataset d = synth::regression_task(10, 2, 3);
    ShiftSpec sp;
    sp.beta_a = -1;
    sp.shift_column = 0;
    CHECK_THROWS_AS(simulate_shift(d, sp), ConfigError);
    sp.beta_a = 2;
    sp.beta_b = 0.0;
    CHECK_THROWS_AS(simulate_shift(d, sp), ConfigError);
    sp.beta_b = 2;
    sp.shift_column = 5;
    CHECK_THROWS_AS(simulate_shift(d, sp), ConfigError);

    Dataset tiny = synth::regression_task(1, 2, 3);
    sp.shift_column = 0;
    CHECK_THROWS_AS(simulate_shift(tiny, sp), DataError);
}

TEST_CASE("shift acceptance matches the closed-form beta density at the mode") {
    // 1e5 rows exactly at the mode (plus anchors pinning the rescale to [0,1])
    const Eigen::Index n = 100000;
    Dataset d;
    d.X.resize(n + 2, 1);
    d.X(0, 0) = 0.0;
    d.X(1, 0) = 1.0;
    for (Eigen::Index i = 0; i < n; ++i) d.X(i + 2, 0) = 0.55;
    d.y = Eigen::VectorXd::Zero(n + 2);
    d.y_present.assign(static_cast<std::size_t>(n + 2), 1);
    d.s.assign(static_cast<std::size_t>(n + 2), 1);
    d.column_names = {"x0"};
    d.has_labels = true;

    ShiftSpec sp;
    sp.beta_a = 13;
    sp.beta_b = 4;
    sp.shift_column = 0;
    sp.seed = 99;
    const Dataset out = simulate_shift(d, sp);

    const double p = beta_pdf(0.55, 13, 4) / beta_pdf(0.8, 13, 4);
    Eigen::Index hits = 0;
    for (Eigen::Index i = 0; i < n; ++i) hits += out.s[static_cast<std::size_t>(i + 2)] == 0;
    const double frac = static_cast<double>(hits) / static_cast<double>(n);
    const double se = std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    CHECK(std::abs(frac - p) < 3.0 * se);
}

TEST_CASE("dataset csv round-trip") {
    Dataset d = synth::regression_task(20, 2, 5);
    d.s[3] = 0;
    d.y_present[3] = 0;
    const auto p = (fs::temp_directory_path() / "ds_roundtrip.csv").string();
    write_csv(d, p);
    const Dataset back = load_csv(p, std::string("y"), std::string("s"));
    CHECK(back.n() == d.n());
    CHECK(back.s == d.s);
    CHECK((back.X - d.X).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.y_present == d.y_present);
}
