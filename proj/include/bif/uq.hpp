#pragma once

#include <complex>

#include "bif/steady_state.hpp"

namespace bif {

struct ScalarDist {
    double mean = 0.0;
    double variance = 0.0;
    bool clamped = false;  // a tiny negative variance was rounded up to zero
};

/// Noncentral Gaussian moments: E[X^2] and Var(X^2).
ScalarDist square_moments(const ScalarDist& d);

struct JacobianDist {
    Matrix mean;  // n x n state Jacobian of the predictive mean at the root
    /// Flattened rank-4 covariance: row = flat(i1, j1), col = flat(i2, j2)
    /// with row-major flat(i, j) = i*n + j, entry Cov(J_{i1 j1}, J_{i2 j2}).
    Matrix cov4;
    bool clamped = false;

    int n() const { return static_cast<int>(mean.rows()); }
    double cov(int i1, int j1, int i2, int j2) const {
        return cov4(i1 * n() + j1, i2 * n() + j2);
    }
};

enum class CriticalityMode { FoldOde, HopfOde, FoldMap, NeimarkSacker };

struct CriticalEig {
    int index = -1;
    std::complex<double> value;
    ComplexVector left;   // v_L, normalized so conj(v_L)^T v_R = 1
    ComplexVector right;  // v_R, unit norm, deterministic phase
};

struct EigenDist {
    ScalarDist value;    // Re(lambda) (Hopf), lambda (real fold), or the map shift
    int eig_index = -1;
    ComplexVector left, right;
    ScalarDist squared;
    bool complex_fold = false;  // fold criterion selected a complex pair off-fold
};

/// Distribution of the 1D state derivative at the fixed-state root.
ScalarDist derivative_dist_1d(const TrainedSurrogate& gp, double x, const SteadyStateDist& ss);

/// Element-wise Jacobian covariance at a steady-state distribution; valid
/// for both the fixed-parameter and the fixed-state-component paths.
JacobianDist jacobian_dist(const TrainedSurrogate& gp, const SteadyStateDist& ss,
                           bool map_mode = false);

/// Full eigendecomposition with left/right eigenvectors, selecting the
/// criticality-critical eigenvalue for the given mode.
CriticalEig select_critical_eig(const Matrix& j, CriticalityMode mode);

/// First-order (Lancaster) eigenvalue statistics from the Jacobian
/// distribution; `value` holds the criticality quantity for the mode.
EigenDist eigen_dist(const JacobianDist& jd, CriticalityMode mode);

/// Trace statistics: mean = sum of diagonal, variance from cov4.
ScalarDist trace_dist(const JacobianDist& jd);

/// Criterion value used to pick an eigenvalue under the given mode.
double criticality_of(const std::complex<double>& lambda, CriticalityMode mode);

}  // namespace bif
