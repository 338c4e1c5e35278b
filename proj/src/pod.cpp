#include "bif/pod.hpp"

#include <fstream>
#include <sstream>

namespace bif {

int SlavingMap::n_features(int n_lead) { return 1 + n_lead + n_lead * (n_lead + 1) / 2; }

Vector SlavingMap::features(const Vector& lead) {
    const int m = static_cast<int>(lead.size());
    Vector f(n_features(m));
    int k = 0;
    f[k++] = 1.0;
    for (int i = 0; i < m; ++i) f[k++] = lead[i];
    for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) f[k++] = lead[i] * lead[j];
    return f;
}

Vector SlavingMap::eval(const Vector& lead) const {
    return weights.transpose() * features(lead);
}

Matrix SlavingMap::jacobian(const Vector& lead) const {
    const int m = static_cast<int>(lead.size());
    const int n_trail = static_cast<int>(weights.cols());
    Matrix dfeat = Matrix::Zero(n_features(m), m);
    int k = 1;
    for (int i = 0; i < m; ++i) dfeat(k++, i) = 1.0;
    for (int i = 0; i < m; ++i)
        for (int j = i; j < m; ++j) {
            dfeat(k, i) += lead[j];
            dfeat(k, j) += lead[i];
            ++k;
        }
    Matrix out(n_trail, m);
    for (int t = 0; t < n_trail; ++t) out.row(t) = weights.col(t).transpose() * dfeat;
    return out;
}

Vector PodModel::lift(const Vector& lead) const {
    const Vector trail = slaving.eval(lead);
    return mean_snapshot + basis.leftCols(n_leading) * lead + basis.rightCols(n_trailing) * trail;
}

Vector PodModel::project(const Vector& full) const {
    return basis.leftCols(n_leading).transpose() * (full - mean_snapshot);
}

Vector PodModel::project_tangent(const Vector& full_tangent) const {
    return basis.leftCols(n_leading).transpose() * full_tangent;
}

Matrix PodModel::lift_jacobian(const Vector& lead) const {
    return basis.leftCols(n_leading) + basis.rightCols(n_trailing) * slaving.jacobian(lead);
}

PodModel build_pod(const std::vector<Vector>& snapshots, int n_modes, int n_leading) {
    const int n_snap = static_cast<int>(snapshots.size());
    if (n_snap < n_modes)
        throw DimensionError("build_pod: need at least n_modes snapshots, got " +
                             std::to_string(n_snap));
    const Eigen::Index full_dim = snapshots[0].size();
    for (const auto& s : snapshots)
        if (s.size() != full_dim) throw DimensionError("build_pod: snapshot dimension mismatch");

    Matrix a(full_dim, n_snap);
    for (int j = 0; j < n_snap; ++j) a.col(j) = snapshots[j];
    Vector mean = a.rowwise().mean();
    a.colwise() -= mean;

    Eigen::BDCSVD<Matrix> svd(a, Eigen::ComputeThinU);
    const Vector sv = svd.singularValues();
    const double tol = sv[0] * 1e-12 * std::max<double>(full_dim, n_snap);
    int rank = 0;
    for (int i = 0; i < sv.size(); ++i)
        if (sv[i] > tol) ++rank;
    if (rank < n_modes)
        throw NumericsError("build_pod: snapshot rank " + std::to_string(rank) +
                            " below requested " + std::to_string(n_modes) + " modes");

    Matrix basis = svd.matrixU().leftCols(n_modes);
    // Deterministic sign: largest-magnitude entry of each mode positive.
    for (int m = 0; m < n_modes; ++m) {
        Eigen::Index imax;
        basis.col(m).cwiseAbs().maxCoeff(&imax);
        if (basis(imax, m) < 0.0) basis.col(m) = -basis.col(m);
    }

    PodModel model;
    model.basis = basis;
    model.mean_snapshot = mean;
    model.n_leading = n_leading;
    model.n_trailing = n_modes - n_leading;

    const Matrix coeffs = basis.transpose() * a;  // n_modes x n_snap
    model.reconstruction_residual = (a - basis * coeffs).norm() / a.norm();

    const Matrix lead = coeffs.topRows(n_leading).transpose();      // n_snap x n_lead
    const Matrix trail = coeffs.bottomRows(model.n_trailing).transpose();
    Matrix feats(n_snap, SlavingMap::n_features(n_leading));
    for (int i = 0; i < n_snap; ++i)
        feats.row(i) = SlavingMap::features(lead.row(i).transpose()).transpose();

    SlavingMap slav;
    slav.n_lead = n_leading;
    // Minimum-norm least squares; with 10 snapshots the degree-2 feature
    // set is underdetermined and this picks the smallest-weight solution.
    slav.weights = feats.bdcSvd(Eigen::ComputeThinU | Eigen::ComputeThinV).solve(trail);
    const double trail_norm = std::max(trail.norm(), 1e-300);
    slav.fit_residual = (feats * slav.weights - trail).norm() / trail_norm;
    model.slaving = std::move(slav);
    model.snapshot_lead_coeffs = lead;
    return model;
}

std::vector<Vector> load_snapshots_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open snapshot CSV: " + path);
    std::vector<Vector> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::stod(cell));
        Vector v(row.size());
        for (std::size_t i = 0; i < row.size(); ++i) v[i] = row[i];
        out.push_back(std::move(v));
    }
    return out;
}

void save_snapshots_csv(const std::string& path, const std::vector<Vector>& snapshots) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write snapshot CSV: " + path);
    out.precision(17);
    for (const auto& s : snapshots) {
        for (Eigen::Index i = 0; i < s.size(); ++i) {
            if (i) out << ',';
            out << s[i];
        }
        out << '\n';
    }
}

}  // namespace bif
