#pragma once

// Small damped least-squares solver used by the curve fits. Jacobians are
// taken by central differences, so models only need to supply residuals.

#include <cmath>
#include <functional>
#include <limits>

#include <Eigen/Dense>

namespace nvodmr::detail {

struct LmOptions {
    int max_iterations = 200;
    double initial_damping = 1e-3;
    double relative_tolerance = 1e-12;
};

struct LmResult {
    Eigen::VectorXd params;
    double cost = std::numeric_limits<double>::infinity();  ///< 0.5 * |r|^2
    int iterations = 0;
    bool converged = false;
};

using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

inline Eigen::MatrixXd numeric_jacobian(const ResidualFn& residual, const Eigen::VectorXd& p,
                                        const Eigen::VectorXd& r0) {
    Eigen::MatrixXd jac(r0.size(), p.size());
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double step = 1e-6 * std::max(std::abs(p[k]), 1e-6);
        Eigen::VectorXd hi = p, lo = p;
        hi[k] += step;
        lo[k] -= step;
        jac.col(k) = (residual(hi) - residual(lo)) / (2.0 * step);
    }
    return jac;
}

inline LmResult levenberg_marquardt(const ResidualFn& residual, Eigen::VectorXd p,
                                    const LmOptions& opt = {}) {
    LmResult out;
    Eigen::VectorXd r = residual(p);
    double cost = 0.5 * r.squaredNorm();
    if (!std::isfinite(cost)) {
        out.params = p;
        return out;
    }
    double lambda = opt.initial_damping;

    for (int it = 0; it < opt.max_iterations; ++it) {
        out.iterations = it + 1;
        const Eigen::MatrixXd jac = numeric_jacobian(residual, p, r);
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd grad = jac.transpose() * r;

        bool improved = false;
        for (int attempt = 0; attempt < 30; ++attempt) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-300);
            const Eigen::VectorXd delta = a.ldlt().solve(-grad);
            const Eigen::VectorXd trial = p + delta;
            const Eigen::VectorXd r_trial = residual(trial);
            const double trial_cost = 0.5 * r_trial.squaredNorm();
            if (std::isfinite(trial_cost) && trial_cost < cost) {
                const double gain = (cost - trial_cost) / std::max(cost, 1e-300);
                const double step_rel = delta.norm() / std::max(p.norm(), 1e-300);
                p = trial;
                r = r_trial;
                cost = trial_cost;
                lambda = std::max(lambda / 3.0, 1e-15);
                improved = true;
                if (gain < opt.relative_tolerance || step_rel < opt.relative_tolerance) {
                    out.converged = true;
                }
                break;
            }
            lambda *= 4.0;
        }
        if (!improved) {
            // No descent direction left: at a (local) minimum to working precision.
            out.converged = true;
        }
        if (out.converged) {
            break;
        }
    }
    out.params = p;
    out.cost = cost;
    return out;
}

}  // namespace nvodmr::detail
