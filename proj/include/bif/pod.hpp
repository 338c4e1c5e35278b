#pragma once

#include <string>
#include <vector>

#include "bif/common.hpp"

namespace bif {

/// Quadratic (total degree 2) map from leading to trailing POD coefficients,
/// fit by minimum-norm least squares over the snapshot coefficients.
struct SlavingMap {
    int n_lead = 0;
    Matrix weights;  // n_features x n_trail
    double fit_residual = 0.0;

    Vector eval(const Vector& lead) const;
    /// d(trail)/d(lead), n_trail x n_lead.
    Matrix jacobian(const Vector& lead) const;
    static Vector features(const Vector& lead);
    static int n_features(int n_lead);
};

struct PodModel {
    Matrix basis;          // full_dim x n_modes, orthonormal columns
    Vector mean_snapshot;  // full_dim
    int n_leading = 4;
    int n_trailing = 4;
    SlavingMap slaving;
    double reconstruction_residual = 0.0;  // relative 8-mode residual on snapshots
    Matrix snapshot_lead_coeffs;           // n_snapshots x n_leading (diagnostics)

    int full_dim() const { return static_cast<int>(basis.rows()); }
    int n_modes() const { return static_cast<int>(basis.cols()); }

    /// Leading coefficients -> full state (slaved trailing coefficients).
    Vector lift(const Vector& lead) const;
    /// Full state -> leading coefficients.
    Vector project(const Vector& full) const;
    /// Projects a full-space tangent vector onto the leading modes.
    Vector project_tangent(const Vector& full_tangent) const;
    /// d(lift)/d(lead), full_dim x n_leading.
    Matrix lift_jacobian(const Vector& lead) const;
};

/// SVD of the mean-centered snapshot matrix; throws on rank deficiency.
PodModel build_pod(const std::vector<Vector>& snapshots, int n_modes, int n_leading = 4);

std::vector<Vector> load_snapshots_csv(const std::string& path);
void save_snapshots_csv(const std::string& path, const std::vector<Vector>& snapshots);

}  // namespace bif
