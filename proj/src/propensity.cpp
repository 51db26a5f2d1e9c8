#include "stratlearn/propensity.hpp"

#include <cmath>
#include <sstream>

#include "stratlearn/errors.hpp"
#include "stratlearn/glm.hpp"

namespace stratlearn {

std::string PropensityModel::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "ridge_lambda " << ridge_lambda << "\n";
    os << "converged " << int(converged) << "\n";
    os << "iterations " << iterations << "\n";
    os << "separation_warning " << int(separation_warning) << "\n";
    os << "intercept " << intercept << "\n";
    for (Eigen::Index j = 0; j < coefficients.size(); ++j) {
        const std::string name =
            j < static_cast<Eigen::Index>(column_names.size()) ? column_names[j]
                                                               : "x" + std::to_string(j);
        os << "coef " << name << " " << coefficients[j] << "\n";
    }
    return os.str();
}

PropensityModel PropensityModel::from_text(const std::string& text) {
    PropensityModel m;
    std::istringstream is(text);
    std::string key;
    std::vector<double> coefs;
    while (is >> key) {
        if (key == "ridge_lambda") is >> m.ridge_lambda;
        else if (key == "converged") { int v; is >> v; m.converged = v != 0; }
        else if (key == "iterations") is >> m.iterations;
        else if (key == "separation_warning") { int v; is >> v; m.separation_warning = v != 0; }
        else if (key == "intercept") is >> m.intercept;
        else if (key == "coef") {
            std::string name; double v;
            is >> name >> v;
            m.column_names.push_back(name);
            coefs.push_back(v);
        } else {
            throw DataError("unknown key in propensity model text: " + key);
        }
    }
    m.coefficients = Eigen::Map<Eigen::VectorXd>(coefs.data(), static_cast<Eigen::Index>(coefs.size()));
    return m;
}

PropensityModel fit_propensity(const Dataset& d, const PropensityOptions& opt) {
    d.validate(/*require_both_groups=*/true);
    if (opt.ridge_lambda < 0.0) throw ConfigError("ridge_lambda must be nonnegative");
    if (opt.max_iter < 1) throw ConfigError("max_iter must be positive");
    if (opt.tol <= 0.0) throw ConfigError("tol must be positive");

    Eigen::VectorXd sv(d.n());
    for (Eigen::Index i = 0; i < d.n(); ++i) sv[i] = static_cast<double>(d.s[i]);

    const glm::LogisticFit fit =
        glm::fit_logistic_irls(d.X, sv, nullptr, opt.ridge_lambda, opt.max_iter, opt.tol);

    PropensityModel m;
    m.intercept = fit.beta[0];
    m.coefficients = fit.beta.tail(d.f());
    m.ridge_lambda = opt.ridge_lambda;
    m.converged = fit.converged;
    m.iterations = fit.iterations;
    m.loglik_path = fit.objective_path;
    m.column_names = d.column_names;
    m.separation_warning = m.coefficients.size() > 0 &&
                           m.coefficients.cwiseAbs().maxCoeff() > opt.separation_cap;
    return m;
}

Eigen::VectorXd predict_propensity(const PropensityModel& m, const Eigen::MatrixXd& X) {
    if (X.cols() != m.coefficients.size())
        throw DataError("propensity prediction: expected " +
                        std::to_string(m.coefficients.size()) + " columns, got " +
                        std::to_string(X.cols()));
    Eigen::VectorXd scores(X.rows());
    const Eigen::VectorXd eta = (X * m.coefficients).array() + m.intercept;
    for (Eigen::Index i = 0; i < X.rows(); ++i) scores[i] = glm::logistic_open(eta[i]);
    return scores;
}

}  // namespace stratlearn
