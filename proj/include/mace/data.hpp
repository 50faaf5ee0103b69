#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mace/common.hpp"

namespace mace {

// Dates are opaque ordered tokens: the library never parses calendars, it
// only requires strict increase under lexicographic comparison (ISO dates
// and zero-padded integer indices both satisfy this).

struct ReturnsPanel {
    std::vector<std::string> dates;   // length T, strictly increasing
    std::vector<std::string> assets;  // length N, unique
    MatrixXd values;                  // T x N, all finite

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
    void validate() const;  // throws DataError on any invariant violation
};

struct FeatureMatrix {
    std::vector<std::string> dates;  // length T, strictly increasing
    std::vector<std::string> names;  // length K, unique
    MatrixXd values;                 // T x K, all finite

    Eigen::Index rows() const { return values.rows(); }
    Eigen::Index cols() const { return values.cols(); }
    void validate() const;
};

enum class MissingPolicy { Reject, TruncateSuffix };

struct IngestOptions {
    MissingPolicy missing = MissingPolicy::Reject;
    // minimum number of value columns; returns panels need >= 2
    int min_columns = 2;
};

struct LoadReport {
    std::size_t rows_dropped = 0;  // leading rows removed under TruncateSuffix
    std::size_t rows_kept = 0;
};

// First column is the date axis; remaining columns are numeric values.
// Empty cells and the tokens NA/NaN/nan count as missing and are governed
// by the missing policy; any other non-numeric cell is an error.
ReturnsPanel load_returns_csv(const std::string& path, const IngestOptions& opt = {},
                              LoadReport* report = nullptr);

// Same format, but a single value column is allowed.
FeatureMatrix load_features_csv(const std::string& path, const IngestOptions& opt = {},
                                LoadReport* report = nullptr);

// Lag design from a single series. Row i of the output sits at original
// index t = i + max_lag and column p (1-based) holds series[t - p]; the
// date axis is trimmed to the last T - max_lag dates. Every entry is a
// function of strictly earlier observations than its own row date.
FeatureMatrix build_lags(const VectorXd& series, const std::vector<std::string>& dates,
                         int max_lag, const std::string& name_prefix = "lag");

// MARX rotation of a lag design: column p becomes the mean of lag columns
// 1..p (one-sided moving averages of increasing length). Spans the same
// column space as the raw lags.
FeatureMatrix marx_transform(const FeatureMatrix& lags);

// out[t] = series[t+1] - series[t], dates trimmed to the last T-1
VectorXd first_difference(const VectorXd& series);

// convenience: lag design then optional MARX rotation
FeatureMatrix lag_features(const VectorXd& series, const std::vector<std::string>& dates,
                           int max_lag, bool use_marx);

}  // namespace mace
