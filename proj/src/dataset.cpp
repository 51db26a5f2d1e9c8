#include "stratlearn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "stratlearn/errors.hpp"
#include "stratlearn/rng.hpp"

namespace stratlearn {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field += c;
        }
    }
    out.push_back(field);
    return out;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    const char* begin = t.data();
    const char* end = begin + t.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc() || ptr != end) {
        // from_chars rejects "inf"/"nan" spellings on some libstdc++
        // versions; fall back to strtod for those.
        char* sp = nullptr;
        out = std::strtod(t.c_str(), &sp);
        return sp == t.c_str() + t.size() && sp != t.c_str();
    }
    return true;
}

}  // namespace

Eigen::Index Dataset::n_source() const {
    return static_cast<Eigen::Index>(std::count(s.begin(), s.end(), 1));
}

Eigen::Index Dataset::n_target() const {
    return static_cast<Eigen::Index>(s.size()) - n_source();
}

std::vector<Eigen::Index> Dataset::source_rows() const {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] == 1) idx.push_back(static_cast<Eigen::Index>(i));
    return idx;
}

std::vector<Eigen::Index> Dataset::target_rows() const {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < s.size(); ++i)
        if (s[i] == 0) idx.push_back(static_cast<Eigen::Index>(i));
    return idx;
}

Eigen::MatrixXd Dataset::rows(const std::vector<Eigen::Index>& idx) const {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
    return out;
}

Eigen::VectorXd Dataset::labels(const std::vector<Eigen::Index>& idx) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out[static_cast<Eigen::Index>(i)] = y[idx[i]];
    return out;
}

void Dataset::validate(bool require_both_groups) const {
    if (n() < 1 || f() < 1) throw DataError("dataset is empty");
    if (static_cast<Eigen::Index>(s.size()) != n() ||
        static_cast<Eigen::Index>(y_present.size()) != n() || y.size() != n())
        throw DataError("dataset row bookkeeping is inconsistent");
    if (!X.allFinite()) throw DataError("dataset contains non-finite covariates");
    if (has_labels) {
        for (Eigen::Index i = 0; i < n(); ++i) {
            if (s[i] == 1 && !y_present[i])
                throw DataError("label missing on source row " + std::to_string(i));
        }
    }
    if (require_both_groups) {
        const Eigen::Index ns = n_source();
        if (ns == 0 || ns == n())
            throw DataError("operation requires both source (s=1) and target (s=0) rows");
    }
}

Dataset load_csv(const std::string& path, const std::optional<std::string>& label_column,
                 const std::optional<std::string>& indicator_column, CsvLoadReport* report) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open file: " + path);

    std::string line;
    if (!std::getline(in, line)) throw DataError("empty file: " + path);
    std::vector<std::string> header = split_csv_line(line);
    for (auto& h : header) h = trim(h);

    {
        std::set<std::string> seen;
        for (const auto& h : header)
            if (!seen.insert(h).second)
                throw DataError("duplicate column name '" + h + "' in " + path);
    }

    auto find_col = [&](const std::string& name) -> int {
        for (std::size_t j = 0; j < header.size(); ++j)
            if (header[j] == name) return static_cast<int>(j);
        return -1;
    };

    int label_idx = -1, ind_idx = -1;
    if (label_column) {
        label_idx = find_col(*label_column);
        if (label_idx < 0) throw DataError("label column '" + *label_column + "' not found");
    }
    if (indicator_column) {
        ind_idx = find_col(*indicator_column);
        if (ind_idx < 0)
            throw DataError("indicator column '" + *indicator_column + "' not found");
    }

    std::vector<int> cov_cols;
    std::vector<std::string> cov_names;
    for (std::size_t j = 0; j < header.size(); ++j) {
        if (static_cast<int>(j) == label_idx || static_cast<int>(j) == ind_idx) continue;
        cov_cols.push_back(static_cast<int>(j));
        cov_names.push_back(header[j]);
    }
    if (cov_cols.empty()) throw DataError("no covariate columns in " + path);

    std::vector<std::vector<double>> rows;
    std::vector<double> ys;
    std::vector<std::uint8_t> y_present, svec;
    CsvLoadReport local_report;
    std::size_t row_no = 0;

    while (std::getline(in, line)) {
        ++row_no;
        if (trim(line).empty()) continue;
        std::vector<std::string> cells = split_csv_line(line);
        if (cells.size() != header.size())
            throw DataError("row " + std::to_string(row_no) + ": expected " +
                            std::to_string(header.size()) + " cells, got " +
                            std::to_string(cells.size()));

        std::vector<double> xr(cov_cols.size());
        bool finite = true;
        for (std::size_t c = 0; c < cov_cols.size(); ++c) {
            double v;
            if (!parse_double(cells[cov_cols[c]], v))
                throw DataError("row " + std::to_string(row_no) + ", column '" +
                                cov_names[c] + "': non-numeric cell '" +
                                trim(cells[cov_cols[c]]) + "'");
            if (!std::isfinite(v)) finite = false;
            xr[c] = v;
        }
        if (!finite) {
            local_report.rejected.push_back({row_no, "non-finite covariate"});
            continue;
        }

        double yv = std::numeric_limits<double>::quiet_NaN();
        std::uint8_t yp = 0;
        if (label_idx >= 0) {
            const std::string cell = trim(cells[label_idx]);
            if (!cell.empty()) {
                if (!parse_double(cell, yv) || !std::isfinite(yv))
                    throw DataError("row " + std::to_string(row_no) + ", column '" +
                                    header[label_idx] + "': bad label '" + cell + "'");
                yp = 1;
            }
        }

        std::uint8_t sv = 1;
        if (ind_idx >= 0) {
            double iv;
            const std::string cell = trim(cells[ind_idx]);
            if (!parse_double(cell, iv) || (iv != 0.0 && iv != 1.0))
                throw DataError("row " + std::to_string(row_no) + ", column '" +
                                header[ind_idx] + "': indicator must be 0 or 1, got '" +
                                cell + "'");
            sv = static_cast<std::uint8_t>(iv);
        }

        rows.push_back(std::move(xr));
        ys.push_back(yv);
        y_present.push_back(yp);
        svec.push_back(sv);
    }
    if (rows.empty()) throw DataError("no usable data rows in " + path);

    Dataset d;
    d.X.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(cov_cols.size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j)
            d.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    d.y = Eigen::Map<Eigen::VectorXd>(ys.data(), static_cast<Eigen::Index>(ys.size()));
    d.y_present = std::move(y_present);
    d.s = std::move(svec);
    d.column_names = std::move(cov_names);
    d.has_labels = label_idx >= 0;

    if (d.has_labels && ind_idx >= 0) {
        for (Eigen::Index i = 0; i < d.n(); ++i)
            if (d.s[i] == 1 && !d.y_present[i])
                throw DataError("row " + std::to_string(i + 1) +
                                ": label missing on a source (s=1) row");
    }
    if (report) *report = std::move(local_report);
    return d;
}

void write_csv(const Dataset& d, const std::string& path, const std::string& label_name,
               const std::string& indicator_name) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write file: " + path);
    out.precision(17);
    for (Eigen::Index j = 0; j < d.f(); ++j) out << d.column_names[j] << ",";
    if (d.has_labels) out << label_name << ",";
    out << indicator_name << "\n";
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        for (Eigen::Index j = 0; j < d.f(); ++j) out << d.X(i, j) << ",";
        if (d.has_labels) {
            if (d.y_present[i]) out << d.y[i];
            out << ",";
        }
        out << int(d.s[i]) << "\n";
    }
}

Eigen::MatrixXd StandardizeRecord::apply(const Eigen::MatrixXd& X) const {
    if (X.cols() != static_cast<Eigen::Index>(mean.size()))
        throw DataError("standardize record column count mismatch");
    Eigen::MatrixXd out = X;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        if (constant[j]) continue;
        out.col(j) = (X.col(j).array() - mean[j]) / scale[j];
    }
    return out;
}

std::string StandardizeRecord::to_text() const {
    std::ostringstream os;
    os.precision(17);
    for (std::size_t j = 0; j < columns.size(); ++j) {
        os << columns[j] << " mean=" << mean[j] << " scale=" << scale[j]
           << " constant=" << int(constant[j]) << "\n";
    }
    return os.str();
}

StandardizeRecord StandardizeRecord::from_text(const std::string& text) {
    StandardizeRecord r;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (trim(line).empty()) continue;
        std::istringstream ls(line);
        std::string name, mkv, skv, ckv;
        if (!(ls >> name >> mkv >> skv >> ckv))
            throw DataError("malformed standardize record line: " + line);
        auto val = [&](const std::string& kv) {
            auto pos = kv.find('=');
            if (pos == std::string::npos) throw DataError("malformed record field: " + kv);
            return std::stod(kv.substr(pos + 1));
        };
        r.columns.push_back(name);
        r.mean.push_back(val(mkv));
        r.scale.push_back(val(skv));
        r.constant.push_back(static_cast<std::uint8_t>(val(ckv) != 0.0));
    }
    return r;
}

std::pair<Dataset, StandardizeRecord> standardize(const Dataset& d) {
    if (d.n() < 1) throw DataError("cannot standardize an empty dataset");
    StandardizeRecord rec;
    rec.columns = d.column_names;
    rec.mean.resize(d.f());
    rec.scale.resize(d.f());
    rec.constant.resize(d.f());

    const double n = static_cast<double>(d.n());
    for (Eigen::Index j = 0; j < d.f(); ++j) {
        const double m = d.X.col(j).mean();
        double var = 0.0;
        if (d.n() > 1) var = (d.X.col(j).array() - m).square().sum() / (n - 1.0);
        rec.mean[j] = m;
        if (var > 0.0) {
            rec.scale[j] = std::sqrt(var);
            rec.constant[j] = 0;
        } else {
            rec.scale[j] = 1.0;
            rec.constant[j] = 1;
        }
    }

    Dataset out = d;
    out.X = rec.apply(d.X);
    return {std::move(out), std::move(rec)};
}

double beta_pdf(double x, double a, double b) {
    if (a <= 0.0 || b <= 0.0) throw NumericalError("beta parameters must be positive");
    if (x < 0.0 || x > 1.0) return 0.0;
    const double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    if (x == 0.0) return a < 1.0 ? std::numeric_limits<double>::infinity()
                                 : (a == 1.0 ? std::exp(-log_beta) : 0.0);
    if (x == 1.0) return b < 1.0 ? std::numeric_limits<double>::infinity()
                                 : (b == 1.0 ? std::exp(-log_beta) : 0.0);
    return std::exp((a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) - log_beta);
}

Eigen::VectorXd beta_acceptance(const Eigen::VectorXd& u, double a, double b) {
    if (a <= 0.0 || b <= 0.0) throw NumericalError("beta parameters must be positive");
    Eigen::VectorXd dens(u.size());
    for (Eigen::Index i = 0; i < u.size(); ++i) dens[i] = beta_pdf(u[i], a, b);

    double peak;
    if (a > 1.0 && b > 1.0) {
        peak = beta_pdf((a - 1.0) / (a + b - 2.0), a, b);
    } else {
        peak = dens.maxCoeff();
    }
    if (!std::isfinite(peak) || peak <= 0.0)
        throw NumericalError("beta density is unbounded on the evaluated points");
    return dens / peak;
}

Dataset simulate_shift(const Dataset& d, const ShiftSpec& spec) {
    if (spec.beta_a <= 0.0 || spec.beta_b <= 0.0)
        throw ConfigError("shift beta parameters must be positive");
    if (d.n() < 2) throw DataError("shift simulation needs at least 2 rows");
    if (spec.shift_column < 0 || spec.shift_column >= d.f())
        throw ConfigError("shift column index out of range");
    if (d.has_labels) {
        for (Eigen::Index i = 0; i < d.n(); ++i)
            if (!d.y_present[i]) throw DataError("shift simulation expects all rows labeled");
    }

    const Eigen::VectorXd col = d.X.col(spec.shift_column);
    const double lo = col.minCoeff(), hi = col.maxCoeff();
    if (hi <= lo) throw DataError("shift column is constant; cannot rescale");
    const Eigen::VectorXd u = (col.array() - lo) / (hi - lo);
    const Eigen::VectorXd accept = beta_acceptance(u, spec.beta_a, spec.beta_b);

    Dataset out = d;
    Rng rng(derive_seed(spec.seed, seeds::simulate));
    for (Eigen::Index i = 0; i < d.n(); ++i) {
        out.s[i] = rng.uniform() < accept[i] ? 0 : 1;
    }
    return out;
}

}  // namespace stratlearn
