#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "mace/common.hpp"
#include "mace/data.hpp"

namespace testutil {

using mace::MatrixXd;
using mace::VectorXd;

inline std::vector<std::string> make_dates(Eigen::Index n, Eigen::Index start = 0) {
    std::vector<std::string> d;
    d.reserve(static_cast<std::size_t>(n));
    char buf[16];
    for (Eigen::Index i = 0; i < n; ++i) {
        std::snprintf(buf, sizeof(buf), "d%08lld", static_cast<long long>(start + i));
        d.emplace_back(buf);
    }
    return d;
}

inline mace::ReturnsPanel make_panel(const MatrixXd& values) {
    mace::ReturnsPanel p;
    p.values = values;
    p.dates = make_dates(values.rows());
    for (Eigen::Index j = 0; j < values.cols(); ++j)
        p.assets.push_back("a" + std::to_string(j));
    p.validate();
    return p;
}

inline MatrixXd gaussian_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t seed,
                                double sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, sd);
    MatrixXd m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = n(rng);
    return m;
}

inline VectorXd ar1_series(Eigen::Index n, double phi, std::uint64_t seed,
                           double noise_sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> eps(0.0, noise_sd);
    VectorXd z(n);
    double prev = 0.0;
    for (Eigen::Index t = 0; t < n; ++t) {
        prev = phi * prev + eps(rng);
        z(t) = prev;
    }
    return z;
}

// RAII temp file that feeds CSV fixtures to the loaders
class TempFile {
public:
    explicit TempFile(const std::string& contents) {
        static int counter = 0;
        path_ = (std::filesystem::temp_directory_path() /
                 ("mace_test_" + std::to_string(::getpid()) + "_" +
                  std::to_string(counter++) + ".csv"))
                    .string();
        std::ofstream out(path_);
        out << contents;
    }
    ~TempFile() { std::error_code ec; std::filesystem::remove(path_, ec); }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

// Planted-predictability panel: one hidden unit-ish-variance direction
// follows a two-regime AR(1) (phi_high inside high-volatility stretches,
// phi 0 elsewhere); all orthogonal directions are white noise.
struct PlantedDgp {
    mace::ReturnsPanel panel;
    VectorXd w_star;   // hidden combination (unit norm)
    VectorXd z_star;   // hidden series
};

inline PlantedDgp planted_panel(Eigen::Index T, Eigen::Index N, double phi_high,
                                std::uint64_t seed, Eigen::Index regime_len = 150,
                                double sigma_high = 3.0, double sigma_low = 1.0,
                                double noise_sd = 1.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> norm(0.0, 1.0);

    // random orthonormal basis via QR of a Gaussian matrix
    MatrixXd G(N, N);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j < N; ++j) G(i, j) = norm(rng);
    Eigen::HouseholderQR<MatrixXd> qr(G);
    MatrixXd Q = qr.householderQ();
    VectorXd w_star = Q.col(0);
    if (w_star.sum() < 0.0) {  // fix the sign for readability
        w_star = -w_star;
        Q.col(0) = w_star;
    }

    // two-regime AR(1) with alternating volatility blocks
    VectorXd z(T);
    double prev = 0.0;
    for (Eigen::Index t = 0; t < T; ++t) {
        const bool high = (t / regime_len) % 2 == 0;
        const double phi = high ? phi_high : 0.0;
        const double sd = high ? sigma_high : sigma_low;
        prev = phi * prev + sd * norm(rng);
        z(t) = prev;
    }

    MatrixXd C(T, N);
    C.col(0) = z;
    for (Eigen::Index j = 1; j < N; ++j)
        for (Eigen::Index t = 0; t < T; ++t) C(t, j) = noise_sd * norm(rng);

    PlantedDgp out;
    out.panel = make_panel(0.01 * C * Q.transpose());  // return-like magnitudes
    out.w_star = w_star;
    out.z_star = z;
    return out;
}

}  // namespace testutil
