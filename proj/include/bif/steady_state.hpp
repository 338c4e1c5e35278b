#pragma once

#include <optional>

#include "bif/gp.hpp"

namespace bif {

struct NewtonOptions {
    double tol = 1e-9;      // residual tolerance in normalized output units
    int max_iters = 50;
    int max_halvings = 30;
    double cond_limit = 1e12;
    /// Treat the surrogate as a one-step map h and solve h(x) - x = 0;
    /// root Jacobians subtract the identity on state columns.
    bool map_mode = false;
};

struct NewtonResult {
    enum class Status { Converged, MaxIterations, SingularJacobian };
    Status status = Status::MaxIterations;
    Vector x;
    double p = 0.0;
    double residual_norm = 0.0;  // normalized infinity norm at the final iterate
    int iterations = 0;

    bool ok() const { return status == Status::Converged; }
};

/// Which joint coordinates were free unknowns in the root solve.
enum class SteadyStateMode { FixedParam, FixedState };

struct SteadyStateDist {
    SteadyStateMode mode = SteadyStateMode::FixedParam;
    int fixed_state_index = -1;  // anchor coordinate for FixedState; -1 otherwise
    Vector x;                    // full branch point
    double p = 0.0;
    std::vector<int> free_idx;   // joint indices (0..n-1 states, n = parameter)
    Vector mean_free;            // root over the free coordinates
    Matrix cov;                  // n x n covariance over the free coordinates
    Matrix root_jacobian;        // d f_mean / d free coords at the root (cached)

    /// Scalar parameter variance on the fixed-state (fold) path.
    double param_variance() const;
    /// Index of the parameter within free_idx, or -1.
    int param_free_position() const;
};

/// Damped Newton on the predictive mean in x at fixed p.
NewtonResult newton_solve(const TrainedSurrogate& gp, const Vector& x0, double p,
                          const NewtonOptions& options = {});

/// 1D: scalar Newton on p at fixed x.
NewtonResult newton_solve_for_param(const TrainedSurrogate& gp, double x, double p0,
                                    const NewtonOptions& options = {});

/// nD fold path: fixes state component `branch_index` and solves the
/// remaining state components plus the parameter.
NewtonResult newton_solve_branch(const TrainedSurrogate& gp, int branch_index, double s,
                                 const Vector& x0, double p0, const NewtonOptions& options = {});

/// First-order root distribution at fixed parameter: cov = J^-1 Sigma J^-T.
SteadyStateDist steady_dist_fixed_param(const TrainedSurrogate& gp, const Vector& x_root,
                                        double p, bool map_mode = false);

/// 1D fixed-state: variance = (d f_mean / d p)^-2 sigma^2.
SteadyStateDist steady_dist_fixed_state(const TrainedSurrogate& gp, double x, double p_root,
                                        bool map_mode = false);

/// nD fixed-state-component: joint root distribution over (x_{-i}, p).
SteadyStateDist steady_dist_branch(const TrainedSurrogate& gp, int branch_index,
                                   const Vector& x_root, double p_root, bool map_mode = false);

}  // namespace bif
