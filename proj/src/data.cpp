#include "mace/data.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

namespace mace {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    std::stringstream ss(line);
    while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

bool is_missing_token(const std::string& s) {
    return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "na";
}

// parses a double; returns false on garbage, sets missing flag on NA tokens
bool parse_cell(const std::string& s, double& out, bool& missing) {
    missing = false;
    if (is_missing_token(s)) {
        missing = true;
        return true;
    }
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(begin, end, out);
    if (ec != std::errc() || ptr != end) return false;
    if (!std::isfinite(out)) missing = true;  // explicit inf/nan literals
    return true;
}

void check_dates(const std::vector<std::string>& dates) {
    for (std::size_t i = 0; i < dates.size(); ++i) {
        if (dates[i].empty())
            throw DataError("malformed date at data row " + std::to_string(i + 1));
        if (i > 0 && !(dates[i - 1] < dates[i]))
            throw DataError("dates not strictly increasing at data row " +
                            std::to_string(i + 1) + " ('" + dates[i - 1] + "' then '" +
                            dates[i] + "')");
    }
}

void check_unique(const std::vector<std::string>& names, const char* what) {
    std::unordered_set<std::string> seen;
    for (const auto& n : names)
        if (!seen.insert(n).second)
            throw DataError(std::string("duplicate ") + what + " name '" + n + "'");
}

struct RawTable {
    std::vector<std::string> dates;
    std::vector<std::string> columns;
    MatrixXd values;
};

RawTable load_table(const std::string& path, const IngestOptions& opt, LoadReport* report) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw DataError("'" + path + "': empty file");
    auto header = split_csv_line(line);
    if (header.size() < static_cast<std::size_t>(opt.min_columns) + 1)
        throw DataError("'" + path + "': need at least " + std::to_string(opt.min_columns) +
                        " value columns");
    std::vector<std::string> columns(header.begin() + 1, header.end());
    const std::size_t ncol = columns.size();

    std::vector<std::string> dates;
    std::vector<std::vector<double>> rows;
    std::vector<bool> complete;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (trim(line).empty()) continue;
        auto cells = split_csv_line(line);
        if (cells.size() != ncol + 1)
            throw DataError("'" + path + "' line " + std::to_string(lineno) + ": expected " +
                            std::to_string(ncol + 1) + " cells, got " +
                            std::to_string(cells.size()));
        dates.push_back(cells[0]);
        std::vector<double> row(ncol);
        bool row_complete = true;
        for (std::size_t j = 0; j < ncol; ++j) {
            double v = 0.0;
            bool missing = false;
            if (!parse_cell(cells[j + 1], v, missing))
                throw DataError("'" + path + "' line " + std::to_string(lineno) +
                                ", column '" + columns[j] + "': non-numeric cell '" +
                                cells[j + 1] + "'");
            if (missing) {
                if (opt.missing == MissingPolicy::Reject)
                    throw DataError("'" + path + "' line " + std::to_string(lineno) +
                                    ", column '" + columns[j] + "': missing value");
                row_complete = false;
                v = std::nan("");
            }
            row[j] = v;
        }
        rows.push_back(std::move(row));
        complete.push_back(row_complete);
    }
    if (rows.empty()) throw DataError("'" + path + "': no data rows");

    // TruncateSuffix keeps the longest run of complete rows at the end
    std::size_t start = 0;
    if (opt.missing == MissingPolicy::TruncateSuffix) {
        start = rows.size();
        while (start > 0 && complete[start - 1]) --start;
        if (start == rows.size())
            throw DataError("'" + path + "': last row has missing values, nothing to keep");
    }
    if (report) {
        report->rows_dropped = start;
        report->rows_kept = rows.size() - start;
    }

    RawTable t;
    t.columns = std::move(columns);
    t.dates.assign(dates.begin() + static_cast<std::ptrdiff_t>(start), dates.end());
    t.values.resize(static_cast<Eigen::Index>(rows.size() - start),
                    static_cast<Eigen::Index>(ncol));
    for (std::size_t i = start; i < rows.size(); ++i)
        for (std::size_t j = 0; j < ncol; ++j)
            t.values(static_cast<Eigen::Index>(i - start), static_cast<Eigen::Index>(j)) =
                rows[i][j];
    check_dates(t.dates);
    return t;
}

}  // namespace

void ReturnsPanel::validate() const {
    if (values.rows() != static_cast<Eigen::Index>(dates.size()))
        throw DataError("panel: date axis length mismatch");
    if (values.cols() != static_cast<Eigen::Index>(assets.size()))
        throw DataError("panel: asset axis length mismatch");
    if (values.cols() < 2) throw DataError("panel: need at least 2 assets");
    check_dates(dates);
    check_unique(assets, "asset");
    if (!values.allFinite()) throw DataError("panel: non-finite value");
}

void FeatureMatrix::validate() const {
    if (values.rows() != static_cast<Eigen::Index>(dates.size()))
        throw DataError("features: date axis length mismatch");
    if (values.cols() != static_cast<Eigen::Index>(names.size()))
        throw DataError("features: name axis length mismatch");
    if (values.cols() < 1) throw DataError("features: need at least 1 column");
    check_dates(dates);
    check_unique(names, "feature");
    if (!values.allFinite()) throw DataError("features: non-finite value");
}

ReturnsPanel load_returns_csv(const std::string& path, const IngestOptions& opt,
                              LoadReport* report) {
    IngestOptions o = opt;
    if (o.min_columns < 2) o.min_columns = 2;
    RawTable t = load_table(path, o, report);
    ReturnsPanel p;
    p.dates = std::move(t.dates);
    p.assets = std::move(t.columns);
    p.values = std::move(t.values);
    p.validate();
    return p;
}

FeatureMatrix load_features_csv(const std::string& path, const IngestOptions& opt,
                                LoadReport* report) {
    IngestOptions o = opt;
    o.min_columns = 1;
    RawTable t = load_table(path, o, report);
    FeatureMatrix f;
    f.dates = std::move(t.dates);
    f.names = std::move(t.columns);
    f.values = std::move(t.values);
    f.validate();
    return f;
}

FeatureMatrix build_lags(const VectorXd& series, const std::vector<std::string>& dates,
                         int max_lag, const std::string& name_prefix) {
    const Eigen::Index T = series.size();
    if (max_lag < 1) throw std::invalid_argument("build_lags: max_lag must be >= 1");
    if (T <= max_lag)
        throw DataError("build_lags: series length " + std::to_string(T) +
                        " does not exceed max_lag " + std::to_string(max_lag));
    if (!dates.empty() && static_cast<Eigen::Index>(dates.size()) != T)
        throw DataError("build_lags: date axis length mismatch");

    FeatureMatrix out;
    out.values.resize(T - max_lag, max_lag);
    for (Eigen::Index i = 0; i < T - max_lag; ++i) {
        const Eigen::Index t = i + max_lag;
        for (int p = 1; p <= max_lag; ++p) out.values(i, p - 1) = series(t - p);
    }
    out.names.reserve(max_lag);
    for (int p = 1; p <= max_lag; ++p)
        out.names.push_back(name_prefix + "_" + std::to_string(p));
    if (!dates.empty()) {
        out.dates.assign(dates.begin() + max_lag, dates.end());
    } else {
        char buf[24];
        for (Eigen::Index i = 0; i < T - max_lag; ++i) {
            std::snprintf(buf, sizeof(buf), "t%010lld", static_cast<long long>(i + max_lag));
            out.dates.emplace_back(buf);
        }
    }
    out.validate();
    return out;
}

FeatureMatrix marx_transform(const FeatureMatrix& lags) {
    const Eigen::Index T = lags.rows(), P = lags.cols();
    if (P < 1) throw std::invalid_argument("marx_transform: empty lag matrix");
    FeatureMatrix out;
    out.dates = lags.dates;
    out.values.resize(T, P);
    VectorXd running = VectorXd::Zero(T);
    for (Eigen::Index p = 0; p < P; ++p) {
        running += lags.values.col(p);
        out.values.col(p) = running / static_cast<double>(p + 1);
    }
    out.names.reserve(P);
    for (Eigen::Index p = 1; p <= P; ++p) out.names.push_back("marx_" + std::to_string(p));
    out.validate();
    return out;
}

VectorXd first_difference(const VectorXd& series) {
    if (series.size() < 2)
        throw std::invalid_argument("first_difference: need >= 2 observations");
    return series.tail(series.size() - 1) - series.head(series.size() - 1);
}

FeatureMatrix lag_features(const VectorXd& series, const std::vector<std::string>& dates,
                           int max_lag, bool use_marx) {
    FeatureMatrix lags = build_lags(series, dates, max_lag);
    return use_marx ? marx_transform(lags) : lags;
}

}  // namespace mace
