#include "mace/ridge.hpp"

#include <cmath>

namespace mace {

namespace {

struct GramSystem {
    MatrixXd G;      // D'KD with D = [1 X] or X
    VectorXd b;      // D'Ky
    bool intercept;  // coordinate 0 is the unpenalized intercept
    Eigen::Index n;  // columns of D
};

GramSystem build_gram(const MatrixXd& X, const VectorXd& y, const RidgeConfig& cfg,
                      const VectorXd& k) {
    const Eigen::Index T = X.rows();
    if (y.size() != T) throw std::invalid_argument("ridge: X/y row mismatch");
    if (k.size() != 0 && k.size() != T)
        throw std::invalid_argument("ridge: obs_weights length mismatch");
    if (T < 2) throw std::invalid_argument("ridge: need at least 2 rows");
    if (!X.allFinite() || !y.allFinite())
        throw std::invalid_argument("ridge: non-finite input");
    if (k.size() != 0 && (!(k.array() >= 0.0).all() || k.sum() <= 0.0))
        throw std::invalid_argument("ridge: obs_weights must be nonnegative, not all zero");

    GramSystem s;
    s.intercept = cfg.intercept;
    MatrixXd D;
    if (cfg.intercept) {
        D.resize(T, X.cols() + 1);
        D.col(0).setOnes();
        D.rightCols(X.cols()) = X;
    } else {
        D = X;
    }
    s.n = D.cols();
    if (k.size() == 0) {
        s.G = D.transpose() * D;
        s.b = D.transpose() * y;
    } else {
        MatrixXd KD = D.array().colwise() * k.array();
        s.G = D.transpose() * KD;
        s.b = KD.transpose() * y;
    }
    return s;
}

// penalty mask: zero on the intercept coordinate
VectorXd penalty_diag(const GramSystem& s, double lambda) {
    VectorXd d = VectorXd::Constant(s.n, lambda);
    if (s.intercept) d(0) = 0.0;
    return d;
}

RidgeSolution unconstrained_solve(const GramSystem& s, double lambda) {
    MatrixXd A = s.G;
    A.diagonal() += penalty_diag(s, lambda);
    if (lambda == 0.0) {
        // only an unpenalized solve can be singular; a consistent singular
        // system would otherwise slip through the residual check below
        Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
        qr.setThreshold(1e-10);
        if (qr.rank() < A.cols())
            throw FitError("ridge: singular system (collinear columns at lambda = 0); "
                           "use a positive lambda");
    }
    Eigen::LDLT<MatrixXd> ldlt(A);
    VectorXd theta = ldlt.solve(s.b);
    const double resid = (A * theta - s.b).cwiseAbs().maxCoeff();
    const double scale = std::max(1.0, s.b.cwiseAbs().maxCoeff());
    if (!theta.allFinite() || resid > 1e-6 * scale)
        throw FitError("ridge: normal equations solve failed; "
                       "use a larger lambda");
    RidgeSolution sol;
    if (s.intercept) {
        sol.intercept = theta(0);
        sol.w = theta.tail(s.n - 1);
    } else {
        sol.w = theta;
    }
    return sol;
}

RidgeSolution nonneg_solve(const GramSystem& s, double lambda, const RidgeConfig& cfg) {
    MatrixXd A = s.G;
    A.diagonal() += penalty_diag(s, lambda);
    for (Eigen::Index j = 0; j < s.n; ++j)
        if (A(j, j) <= 0.0)
            throw FitError("ridge: zero-variance column in nonneg solve");

    VectorXd theta = VectorXd::Zero(s.n);
    int sweep = 0;
    for (; sweep < cfg.cd_max_iter; ++sweep) {
        double max_delta = 0.0;
        for (Eigen::Index j = 0; j < s.n; ++j) {
            const double g = s.b(j) - A.row(j).dot(theta) + A(j, j) * theta(j);
            double nj = g / A(j, j);
            const bool clip = !(s.intercept && j == 0);
            if (clip && nj < 0.0) nj = 0.0;
            max_delta = std::max(max_delta, std::fabs(nj - theta(j)));
            theta(j) = nj;
        }
        if (max_delta < cfg.cd_tol) {
            ++sweep;
            break;
        }
    }

    // KKT certificate: grad_j = 2 (A theta - b)_j; free coordinates need a
    // vanishing gradient, clipped-at-zero coordinates a nonnegative one
    const VectorXd grad = 2.0 * (A * theta - s.b);
    const double scale = std::max(1.0, s.b.cwiseAbs().maxCoeff());
    double worst = 0.0;
    for (Eigen::Index j = 0; j < s.n; ++j) {
        const bool free_coord = (s.intercept && j == 0) || theta(j) > 0.0;
        const double viol = free_coord ? std::fabs(grad(j)) : std::max(0.0, -grad(j));
        worst = std::max(worst, viol / scale);
    }
    if (worst > 1e-4)
        throw FitError("ridge: nonneg coordinate descent failed KKT certification");

    RidgeSolution sol;
    if (s.intercept) {
        sol.intercept = theta(0);
        sol.w = theta.tail(s.n - 1);
    } else {
        sol.w = theta;
    }
    sol.kkt_residual = worst;
    sol.iterations = sweep;
    return sol;
}

double r2_from_gram(const MatrixXd& X, const VectorXd& y, const RidgeSolution& sol,
                    const VectorXd& k) {
    VectorXd fitted = X * sol.w;
    fitted.array() += sol.intercept;
    VectorXd e = y - fitted;
    double ssr, sst;
    if (k.size() == 0) {
        ssr = e.squaredNorm();
        const double ybar = y.mean();
        sst = (y.array() - ybar).square().sum();
    } else {
        ssr = (k.array() * e.array().square()).sum();
        const double ybar = (k.array() * y.array()).sum() / k.sum();
        sst = (k.array() * (y.array() - ybar).square()).sum();
    }
    if (sst <= 0.0) throw FitError("ridge: degenerate target (zero variance)");
    return 1.0 - ssr / sst;
}

}  // namespace

void RidgeConfig::validate() const {
    if (!(target_r2 > 0.0 && target_r2 < 1.0))
        throw ConfigError("ridge: target_r2 must be in (0, 1)");
    if (!(lambda_min > 0.0) || !(lambda_max > lambda_min))
        throw ConfigError("ridge: need 0 < lambda_min < lambda_max");
    if (!(r2_tol > 0.0)) throw ConfigError("ridge: r2_tol must be positive");
    if (cd_max_iter < 1) throw ConfigError("ridge: cd_max_iter must be >= 1");
}

RidgeSolution solve_ridge(const MatrixXd& X, const VectorXd& y, double lambda,
                          const RidgeConfig& cfg, const VectorXd& obs_weights) {
    if (lambda < 0.0) throw std::invalid_argument("ridge: lambda must be >= 0");
    const GramSystem s = build_gram(X, y, cfg, obs_weights);
    return cfg.nonneg ? nonneg_solve(s, lambda, cfg) : unconstrained_solve(s, lambda);
}

double ridge_r2(const MatrixXd& X, const VectorXd& y, const RidgeSolution& sol,
                const VectorXd& obs_weights) {
    return r2_from_gram(X, y, sol, obs_weights);
}

CalibrationResult calibrate_lambda(const MatrixXd& X, const VectorXd& y,
                                   const RidgeConfig& cfg, const VectorXd& obs_weights) {
    cfg.validate();
    const GramSystem s = build_gram(X, y, cfg, obs_weights);
    auto solve_at = [&](double lambda) {
        return cfg.nonneg ? nonneg_solve(s, lambda, cfg) : unconstrained_solve(s, lambda);
    };
    auto r2_at = [&](const RidgeSolution& sol) {
        return r2_from_gram(X, y, sol, obs_weights);
    };

    CalibrationResult out;
    RidgeSolution lo_sol = solve_at(cfg.lambda_min);
    const double r_hi = r2_at(lo_sol);  // largest attainable R^2
    if (r_hi < cfg.target_r2 - cfg.r2_tol) {
        out.lambda = cfg.lambda_min;
        out.solution = std::move(lo_sol);
        out.attained_r2 = r_hi;
        out.target_attained = false;
        return out;
    }
    RidgeSolution hi_sol = solve_at(cfg.lambda_max);
    const double r_lo = r2_at(hi_sol);
    if (r_lo > cfg.target_r2 + cfg.r2_tol) {
        out.lambda = cfg.lambda_max;
        out.solution = std::move(hi_sol);
        out.attained_r2 = r_lo;
        out.target_attained = false;
        return out;
    }

    double lo = cfg.lambda_min, hi = cfg.lambda_max;
    for (int it = 0; it < 300; ++it) {
        const double mid = std::exp(0.5 * (std::log(lo) + std::log(hi)));
        RidgeSolution sol = solve_at(mid);
        const double r = r2_at(sol);
        if (std::fabs(r - cfg.target_r2) <= cfg.r2_tol || hi / lo < 1.0 + 1e-14) {
            out.lambda = mid;
            out.solution = std::move(sol);
            out.attained_r2 = r;
            out.target_attained = std::fabs(r - cfg.target_r2) <= cfg.r2_tol;
            return out;
        }
        if (r > cfg.target_r2)
            lo = mid;
        else
            hi = mid;
    }
    throw FitError("ridge: lambda calibration failed to converge");
}

WeightVector normalize_variance(const VectorXd& w, const MatrixXd& R) {
    if (R.cols() != w.size())
        throw std::invalid_argument("normalize_variance: weight/panel width mismatch");
    const VectorXd p = R * w;
    const double sd = sample_std(p);
    if (!(sd > 1e-12))
        throw FitError("normalize_variance: portfolio variance is numerically zero");
    WeightVector out;
    out.w = w / sd;
    out.scale_applied = 1.0 / sd;
    return out;
}

VectorXd rescale_budget(const VectorXd& w) {
    const double s = w.sum();
    if (std::fabs(s) < 1e-10)
        throw FitError("rescale_budget: weights sum to ~0, budget scaling undefined");
    return w / s;
}

VectorXd min_variance_weights(const MatrixXd& R, double delta) {
    if (R.rows() < 2 || R.cols() < 2)
        throw std::invalid_argument("min_variance_weights: need T >= 2, N >= 2");
    if (delta < 0.0 || delta > 1.0)
        throw std::invalid_argument("min_variance_weights: delta must be in [0, 1]");
    const Eigen::Index N = R.cols();
    const Eigen::Index T = R.rows();
    MatrixXd centered = R.rowwise() - R.colwise().mean();
    MatrixXd cov = centered.transpose() * centered / static_cast<double>(T - 1);

    double d = delta;
    for (int attempt = 0; attempt < 12; ++attempt) {
        MatrixXd shrunk = (1.0 - d) * cov;
        shrunk.diagonal() += d * cov.diagonal();
        Eigen::LDLT<MatrixXd> ldlt(shrunk);
        if (ldlt.info() == Eigen::Success) {
            VectorXd w = ldlt.solve(VectorXd::Ones(N));
            const double resid =
                (shrunk * w - VectorXd::Ones(N)).cwiseAbs().maxCoeff();
            if (w.allFinite() && resid < 1e-8 && std::fabs(w.sum()) > 1e-12)
                return w / w.sum();
        }
        d = std::min(1.0, std::max(2.0 * d, 0.01));
    }
    throw FitError("min_variance_weights: covariance stayed singular after shrinkage");
}

}  // namespace mace
