#pragma once

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace latticeloc {

struct LmOptions {
    int max_iterations = 50;
    /// Stop when an accepted step lowers the cost by less than this fraction.
    double cost_rtol = 1e-10;
    /// Stop when every tested component of an accepted step is below this.
    double step_tol = 1e-6;
    /// Parameter indices checked against step_tol; empty means all.
    std::vector<Eigen::Index> step_params;
    double initial_lambda = 1e-3;
    double lambda_factor = 10.0;
    double max_lambda = 1e16;
    /// Convergence tests only count for steps taken at damping <= this.
    double converge_max_lambda = 1.0;
    /// Costs at or below this are roundoff and count as a minimum.
    double cost_floor = 0.0;
};

struct LmResult {
    Eigen::VectorXd params;
    double initial_cost = 0.0;  // sum of squared residuals
    double cost = 0.0;
    int iterations = 0;
    bool converged = false;
    /// No damped step lowered the cost from the starting point.
    bool diverged = false;
};

/// Fills residuals and, when the pointer is non-null, the Jacobian d r / d p.
using ResidualFn = std::function<void(const Eigen::VectorXd& params, Eigen::VectorXd& residuals,
                                      Eigen::MatrixXd* jacobian)>;
/// Maps a trial point back into the feasible set (bounds).
using ProjectFn = std::function<void(Eigen::VectorXd& params)>;

LmResult levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd start, const LmOptions& options = {},
                             const ProjectFn& project = {});

}  // namespace latticeloc
