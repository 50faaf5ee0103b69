// Deterministic synthetic market data for demos, docs, and the bundled
// datasets under data/. Normals come from raw mt19937_64 bits through a
// Box-Muller transform, so the same seed reproduces the same file on any
// conforming toolchain (std::normal_distribution is not portable).

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <Eigen/Dense>

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

class Gauss {
public:
    explicit Gauss(std::uint64_t seed) : rng_(seed) {}

    double uniform() {  // in (0, 1), from the standardized bit stream
        return (static_cast<double>(rng_() >> 11) + 0.5) * 0x1.0p-53;
    }

    double operator()() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double r = std::sqrt(-2.0 * std::log(uniform()));
        const double a = 2.0 * M_PI * uniform();
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    std::mt19937_64 rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// === date axes ===

bool is_leap(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

int days_in_month(int y, int m) {
    static const int d[12] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    return m == 2 && is_leap(y) ? 29 : d[m - 1];
}

// weekday of a date (0 = Monday), via a day count from 2000-01-03 (a Monday)
int weekday(int y, int m, int d) {
    long long days = 0;
    for (int yy = 2000; yy < y; ++yy) days += is_leap(yy) ? 366 : 365;
    for (int mm = 1; mm < m; ++mm) days += days_in_month(y, mm);
    days += d - 3;
    return static_cast<int>(((days % 7) + 7) % 7);
}

std::vector<std::string> business_dates(Index n, int y, int m, int d) {
    std::vector<std::string> out;
    char buf[16];
    while (static_cast<Index>(out.size()) < n) {
        if (weekday(y, m, d) < 5) {
            std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", y, m, d);
            out.emplace_back(buf);
        }
        if (++d > days_in_month(y, m)) {
            d = 1;
            if (++m > 12) { m = 1; ++y; }
        }
    }
    return out;
}

std::vector<std::string> month_dates(Index n, int y, int m) {
    std::vector<std::string> out;
    char buf[16];
    for (Index i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof(buf), "%04d-%02d", y, m);
        out.emplace_back(buf);
        if (++m > 12) { m = 1; ++y; }
    }
    return out;
}

// === building blocks ===

MatrixXd orthonormal_basis(Index n, Gauss& g) {
    MatrixXd G(n, n);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) G(i, j) = g();
    Eigen::HouseholderQR<MatrixXd> qr(G);
    MatrixXd Q = qr.householderQ();
    if (Q.col(0).sum() < 0.0) Q.col(0) = -Q.col(0);
    return Q;
}

VectorXd risk_free_path(Index T, double base, double sd, Gauss& g) {
    VectorXd rf(T);
    double level = 0.0;
    for (Index t = 0; t < T; ++t) {
        level = 0.99 * level + sd * g();
        rf(t) = std::max(0.0, base + level);
    }
    return rf;
}

void write_csv(const std::string& path, const std::vector<std::string>& dates,
               const std::vector<std::string>& columns, const MatrixXd& values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        std::fprintf(stderr, "cannot write '%s'\n", path.c_str());
        std::exit(3);
    }
    out << "date";
    for (const auto& c : columns) out << "," << c;
    out << "\n";
    char buf[40];
    for (Index t = 0; t < values.rows(); ++t) {
        out << dates[static_cast<std::size_t>(t)];
        for (Index j = 0; j < values.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", values(t, j));
            out << "," << buf;
        }
        out << "\n";
    }
}

std::vector<std::string> asset_names(Index n) {
    std::vector<std::string> names;
    char buf[16];
    for (Index j = 0; j < n; ++j) {
        std::snprintf(buf, sizeof(buf), "a%02d", static_cast<int>(j));
        names.emplace_back(buf);
    }
    return names;
}

// appends index (equal-weight book plus tracking noise) and risk-free columns
MatrixXd with_market_columns(const MatrixXd& R, double rf_base, Gauss& g) {
    const Index T = R.rows();
    MatrixXd out(T, R.cols() + 2);
    out.leftCols(R.cols()) = R;
    const double track_sd = 0.05 * std::sqrt(R.array().square().mean());
    for (Index t = 0; t < T; ++t)
        out(t, R.cols()) = R.row(t).mean() + track_sd * g();
    out.col(R.cols() + 1) = risk_free_path(T, rf_base, rf_base * 0.02, g);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthetic return panels with a planted learnable portfolio"};

    std::string type = "planted", out_path, features_path;
    Index T = 1200, N = 20, K = 6;
    std::uint64_t seed = 1;
    double phi = -0.45;
    Index regime_len = 150;
    app.add_option("--type", type, "planted | null | monthly")->required();
    app.add_option("--rows", T, "number of periods");
    app.add_option("--assets", N, "number of assets");
    app.add_option("--factors", K, "observable features (monthly type)");
    app.add_option("--seed", seed, "generator seed");
    app.add_option("--phi", phi, "hidden-series AR(1) inside high-vol regimes");
    app.add_option("--regime-len", regime_len, "periods per volatility regime");
    app.add_option("--out", out_path, "returns CSV path")->required();
    app.add_option("--features-out", features_path,
                   "features CSV path (monthly type)");
    CLI11_PARSE(app, argc, argv);

    Gauss g(seed);
    std::vector<std::string> columns = asset_names(N);
    columns.push_back("index");
    columns.push_back("rf");

    if (type == "planted" || type == "null") {
        // hidden direction: two-regime AR(1) (null: regimes without the AR
        // term still modulate volatility, but nothing is predictable)
        MatrixXd Q = orthonormal_basis(N, g);
        VectorXd z(T);
        double prev = 0.0;
        for (Index t = 0; t < T; ++t) {
            const bool high = (t / regime_len) % 2 == 0;
            const double ar = (type == "planted" && high) ? phi : 0.0;
            const double sd = high ? 3.0 : 1.0;
            prev = ar * prev + sd * g();
            z(t) = prev;
        }
        MatrixXd C(T, N);
        C.col(0) = z;
        for (Index j = 1; j < N; ++j)
            for (Index t = 0; t < T; ++t) C(t, j) = g();
        const MatrixXd R = 0.01 * C * Q.transpose();
        write_csv(out_path, business_dates(T, 2012, 1, 2), columns,
                  with_market_columns(R, 0.00012, g));
    } else if (type == "monthly") {
        // observable persistent factors; the hidden direction loads on their
        // lags, so the panel is predictable from the features file
        MatrixXd X(T, K);
        for (Index k = 0; k < K; ++k) {
            const double rho = 0.55 + 0.4 * static_cast<double>(k) /
                                          static_cast<double>(std::max<Index>(K - 1, 1));
            double prev = 0.0;
            for (Index t = 0; t < T; ++t) {
                prev = rho * prev + std::sqrt(1.0 - rho * rho) * g();
                X(t, k) = prev;
            }
        }
        VectorXd beta(K);
        for (Index k = 0; k < K; ++k) beta(k) = (k % 2 == 0 ? 1.0 : -0.7) /
                                                std::sqrt(static_cast<double>(K));
        MatrixXd Q = orthonormal_basis(N, g);
        VectorXd z(T);
        for (Index t = 0; t < T; ++t) {
            const double signal = t == 0 ? 0.0 : 1.2 * beta.dot(X.row(t - 1));
            z(t) = signal + g();
        }
        MatrixXd C(T, N);
        C.col(0) = z;
        for (Index j = 1; j < N; ++j)
            for (Index t = 0; t < T; ++t) C(t, j) = g();
        const MatrixXd R = 0.03 * C * Q.transpose();
        const std::vector<std::string> dates = month_dates(T, 1965, 1);
        write_csv(out_path, dates, columns, with_market_columns(R, 0.003, g));
        if (!features_path.empty()) {
            std::vector<std::string> fnames;
            for (Index k = 0; k < K; ++k) fnames.push_back("x" + std::to_string(k));
            write_csv(features_path, dates, fnames, X);
        }
    } else {
        std::fprintf(stderr, "unknown --type '%s'\n", type.c_str());
        return 2;
    }
    return 0;
}
