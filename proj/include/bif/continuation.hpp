#pragma once

#include <optional>

#include "bif/systems.hpp"

namespace bif {

/// Branch continuation on the true equations. Reference values for
/// convergence reporting come from here, never from a learned model.

struct BranchPoint {
    double s = 0.0;  // branch coordinate (state component)
    Vector x;
    double p = 0.0;
    double critical_eig = 0.0;  // signed eigenvalue closest to zero
};

struct FoldResult {
    double s = 0.0;
    Vector x;
    double p = 0.0;
};

/// Newton on the true system for the non-branch state components and the
/// parameter at a fixed branch-variable value.
std::optional<BranchPoint> true_branch_solve(const SystemSpec& spec, int branch_index, double s,
                                             const Vector& x0, double p0, double tol = 1e-11);

/// Sweeps the branch variable over [s_lo, s_hi], locating the fold by the
/// sign change of dp/ds, refined by bisection to the given resolution in p.
std::optional<FoldResult> continuation_fold(const SystemSpec& spec, int branch_index, double s_lo,
                                            double s_hi, int n_steps, const Vector& x_init,
                                            double p_init, double p_resolution = 1e-5);

/// Sweeps the parameter, solving steady states, locating the Hopf point by
/// the sign change of the least-|Re| eigenvalue real part.
std::optional<double> continuation_hopf(const SystemSpec& spec, double p_lo, double p_hi,
                                        int n_steps, const Vector& x_init,
                                        double p_resolution = 1e-7);

/// Budworm grid oracle: minimizes |dr/dx| of the analytic branch
/// r(x) = x / ((1+x^2)(1-x/k)) on a dense grid over [x_lo, x_hi].
FoldResult budworm_fold_grid_oracle(double k, double x_lo, double x_hi, int n_grid = 1000000);

// --- Full FitzHugh-Nagumo (402-ODE) branch machinery ---

struct FhnBranch {
    std::vector<double> eps;     // parameter along the branch
    std::vector<Vector> states;  // full 402-dim steady states
    double eps_fold = 0.0;       // maximum of eps along the branch
    int fold_index = 0;
};

/// Traces the front branch of the full discretized system through its fold
/// using mean-u bordered continuation; starts from a time-stepped front.
FhnBranch trace_fhn_branch(const FhnGrid& grid, double eps_start, double eps_min,
                           double mean_u_step = 2e-3);

/// Fold of the full system in eps, refined to the given resolution.
double fhn_full_fold(const FhnGrid& grid, double eps_resolution = 1e-6);

/// Picks n snapshots spread along the branch restricted to eps >= eps_min.
std::vector<Vector> select_fhn_snapshots(const FhnBranch& branch, int n, double eps_min);

}  // namespace bif
