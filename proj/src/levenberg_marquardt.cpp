#include "latticeloc/levenberg_marquardt.hpp"

#include <algorithm>
#include <cmath>

namespace latticeloc {

LmResult levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd start, const LmOptions& options,
                             const ProjectFn& project) {
    const Eigen::Index np = start.size();
    if (project) project(start);

    Eigen::VectorXd r;
    Eigen::MatrixXd jac;
    fn(start, r, &jac);

    LmResult result;
    result.params = start;
    result.initial_cost = r.squaredNorm();
    result.cost = result.initial_cost;
    if (result.cost <= options.cost_floor || np == 0) {
        result.converged = true;
        return result;
    }

    double lambda = options.initial_lambda;
    Eigen::VectorXd trial_r;
    int accepted = 0;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        result.iterations = iter + 1;
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd grad = jac.transpose() * r;
        Eigen::VectorXd diag = jtj.diagonal();
        const double diag_floor = std::max(diag.maxCoeff(), 1.0) * 1e-15;
        for (Eigen::Index i = 0; i < np; ++i) diag[i] = std::max(diag[i], diag_floor);

        bool stepped = false;
        Eigen::VectorXd trial;
        double trial_cost = 0.0;
        while (lambda <= options.max_lambda) {
            Eigen::MatrixXd a = jtj;
            a.diagonal() += lambda * diag;
            const Eigen::VectorXd delta = a.ldlt().solve(-grad);
            trial = result.params + delta;
            if (project) project(trial);
            fn(trial, trial_r, nullptr);
            trial_cost = trial_r.squaredNorm();
            if (std::isfinite(trial_cost) && trial_cost < result.cost) {
                stepped = true;
                break;
            }
            lambda *= options.lambda_factor;
        }

        if (!stepped) {
            // Damping exhausted. Starting point not improvable and not stationary: give up.
            // Stationary means the residual is orthogonal to the Jacobian range up to roundoff.
            const bool stationary =
                result.cost <= options.cost_floor || grad.norm() <= 1e-8 * jac.norm() * r.norm();
            if (accepted == 0 && !stationary) {
                result.diverged = true;
                result.converged = false;
            } else {
                result.converged = true;
            }
            return result;
        }

        ++accepted;
        const double used_lambda = lambda;
        const Eigen::VectorXd step = trial - result.params;
        const double decrease = (result.cost - trial_cost) / result.cost;
        result.params = trial;
        result.cost = trial_cost;
        lambda = std::max(lambda / options.lambda_factor, 1e-12);

        double max_step = 0.0;
        if (options.step_params.empty()) {
            max_step = step.cwiseAbs().maxCoeff();
        } else {
            for (Eigen::Index i : options.step_params) max_step = std::max(max_step, std::abs(step[i]));
        }
        // Heavily damped steps are short and gain little without being near a minimum.
        const bool near_gauss_newton = used_lambda <= options.converge_max_lambda;
        if (result.cost <= options.cost_floor || (near_gauss_newton && (decrease < options.cost_rtol || max_step < options.step_tol))) {
            result.converged = true;
            return result;
        }
        fn(result.params, r, &jac);
    }
    return result;
}

}  // namespace latticeloc
