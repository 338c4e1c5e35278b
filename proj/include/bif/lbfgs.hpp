#pragma once

#include <functional>

#include "bif/common.hpp"

namespace bif {

struct LbfgsOptions {
    int max_iters = 200;
    int history = 8;
    double grad_tol = 1e-5;
    /// Stop after two consecutive steps improving f by less than
    /// f_tol * (1 + |f|); likelihood ridges are flat enough that grinding
    /// to the gradient tolerance buys nothing.
    double f_tol = 1e-7;
    /// Stop when a whole window of iterations improved f by less than
    /// window_tol * (1 + |f|); catches slow ridge crawls.
    int window_iters = 15;
    double window_tol = 1e-5;
    double initial_step = 1.0;
    int max_backtracks = 40;
};

struct LbfgsResult {
    Vector x;
    double f = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Objective: returns f(x); fills *grad when grad != nullptr. Line-search
/// probes pass nullptr, so cheap value-only evaluation pays off.
using LbfgsObjective = std::function<double(const Vector&, Vector*)>;

/// Minimizes with limited-memory BFGS and Armijo backtracking. The
/// objective may return +inf to reject a point (the line search backs
/// off). Returns the best point seen, never worse than f(x0).
LbfgsResult lbfgs_minimize(const LbfgsObjective& objective, const Vector& x0,
                           const LbfgsOptions& options = {});

}  // namespace bif
