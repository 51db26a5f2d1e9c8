#pragma once

// Synthetic-data generators shared by the unit and acceptance suites.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "stratlearn/dataset.hpp"
#include "stratlearn/rng.hpp"

namespace synth {

// Standard-normal covariates, no labels, indicator split uniformly at random.
inline stratlearn::Dataset gaussian_no_shift(Eigen::Index n, Eigen::Index f,
                                             std::uint64_t seed,
                                             double source_fraction = 0.5) {
    stratlearn::Rng rng(seed);
    stratlearn::Dataset d;
    d.X.resize(n, f);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < f; ++j) d.X(i, j) = rng.normal();
    d.y = Eigen::VectorXd::Zero(n);
    d.y_present.assign(static_cast<std::size_t>(n), 1);
    d.s.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        d.s[static_cast<std::size_t>(i)] = rng.uniform() < source_fraction ? 1 : 0;
    d.column_names.clear();
    for (Eigen::Index j = 0; j < f; ++j) d.column_names.push_back("x" + std::to_string(j));
    d.has_labels = false;
    return d;
}

// Regression task whose response is a smooth nonlinear curve in the first
// covariate; the remaining covariates are pure noise.
inline stratlearn::Dataset regression_task(Eigen::Index n, Eigen::Index f,
                                           std::uint64_t seed, double noise_sd = 0.1) {
    stratlearn::Rng rng(seed);
    stratlearn::Dataset d;
    d.X.resize(n, f);
    d.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < f; ++j) d.X(i, j) = rng.normal();
        const double u = d.X(i, 0);
        d.y[i] = std::sin(1.8 * u) + 0.6 * u * u + noise_sd * rng.normal();
    }
    d.y_present.assign(static_cast<std::size_t>(n), 1);
    d.s.assign(static_cast<std::size_t>(n), 1);
    d.column_names.clear();
    for (Eigen::Index j = 0; j < f; ++j) d.column_names.push_back("x" + std::to_string(j));
    d.has_labels = true;
    return d;
}

// Binary task with a non-monotone class probability in the first covariate,
// so a single global logistic fit ranks target rows poorly.
inline stratlearn::Dataset classification_task(Eigen::Index n, Eigen::Index f,
                                               std::uint64_t seed) {
    stratlearn::Rng rng(seed);
    stratlearn::Dataset d;
    d.X.resize(n, f);
    d.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < f; ++j) d.X(i, j) = rng.normal();
        const double u = d.X(i, 0);
        const double eta = 3.0 * std::sin(2.2 * u) + 0.5 * d.X(i, std::min<Eigen::Index>(1, f - 1));
        const double p = 1.0 / (1.0 + std::exp(-eta));
        d.y[i] = rng.uniform() < p ? 1.0 : 0.0;
    }
    d.y_present.assign(static_cast<std::size_t>(n), 1);
    d.s.assign(static_cast<std::size_t>(n), 1);
    d.column_names.clear();
    for (Eigen::Index j = 0; j < f; ++j) d.column_names.push_back("x" + std::to_string(j));
    d.has_labels = true;
    return d;
}

// Conditional-density task: z | x is Gaussian with a nonlinear mean in the
// informative covariates; extra columns are independent noise.
inline stratlearn::Dataset cde_task(Eigen::Index n, Eigen::Index informative,
                                    Eigen::Index noise, std::uint64_t seed,
                                    double noise_sd = 0.15) {
    stratlearn::Rng rng(seed);
    stratlearn::Dataset d;
    const Eigen::Index f = informative + noise;
    d.X.resize(n, f);
    d.y.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < f; ++j) d.X(i, j) = rng.normal();
        double mean = std::sin(1.5 * d.X(i, 0));
        for (Eigen::Index j = 1; j < informative; ++j)
            mean += 0.3 * d.X(i, j) / static_cast<double>(j + 1);
        d.y[i] = mean + noise_sd * rng.normal();
    }
    d.y_present.assign(static_cast<std::size_t>(n), 1);
    d.s.assign(static_cast<std::size_t>(n), 1);
    d.column_names.clear();
    for (Eigen::Index j = 0; j < f; ++j) d.column_names.push_back("x" + std::to_string(j));
    d.has_labels = true;
    return d;
}

// Applies the beta rejection shift on column 0 with the given parameters.
inline stratlearn::Dataset apply_shift(const stratlearn::Dataset& d, double a, double b,
                                       std::uint64_t seed) {
    stratlearn::ShiftSpec sp;
    sp.beta_a = a;
    sp.beta_b = b;
    sp.shift_column = 0;
    sp.seed = seed;
    return stratlearn::simulate_shift(d, sp);
}

}  // namespace synth
