#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// === error classes ===
// Each class maps to a distinct CLI exit code; the library itself only throws.

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

struct FitError : std::runtime_error {
    explicit FitError(const std::string& msg) : std::runtime_error(msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// malformed or incompatible saved artifacts (wrong version, shape mismatch)
struct ArtifactError : std::runtime_error {
    explicit ArtifactError(const std::string& msg) : std::runtime_error(msg) {}
};

// === deterministic seed derivation ===
// splitmix64: stable stream splitting so that per-tree / per-iteration /
// per-member RNGs depend only on (master seed, index), never on thread
// scheduling or on how many other streams exist.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                                 std::uint64_t index = 0) {
    return splitmix64(splitmix64(master) ^
                      splitmix64(stream * 0x9e3779b97f4a7c15ULL + index + 1));
}

// === small numeric helpers ===

inline double mean_of(const VectorXd& v) {
    if (v.size() == 0) throw std::invalid_argument("mean of empty vector");
    return v.mean();
}

// sample variance, n-1 divisor
inline double sample_variance(const VectorXd& v) {
    const Eigen::Index n = v.size();
    if (n < 2) throw std::invalid_argument("sample variance needs >= 2 observations");
    const double m = v.mean();
    return (v.array() - m).square().sum() / static_cast<double>(n - 1);
}

inline double sample_std(const VectorXd& v) { return std::sqrt(sample_variance(v)); }

inline double pearson_corr(const VectorXd& a, const VectorXd& b) {
    if (a.size() != b.size() || a.size() < 2)
        throw std::invalid_argument("pearson_corr: size mismatch or < 2 observations");
    const double ma = a.mean(), mb = b.mean();
    const VectorXd da = a.array() - ma, db = b.array() - mb;
    const double denom = std::sqrt(da.squaredNorm() * db.squaredNorm());
    if (denom == 0.0) throw std::invalid_argument("pearson_corr: zero variance input");
    return da.dot(db) / denom;
}

// FNV-1a 64-bit, used for output manifests
inline std::uint64_t fnv1a64(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace mace
