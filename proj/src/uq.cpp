#include "bif/uq.hpp"

namespace bif {

namespace {

double clamp_variance(double v, double scale, bool& clamped) {
    if (v >= 0.0) return v;
    if (v >= -1e-12 * std::max(1.0, scale)) {
        clamped = true;
        return 0.0;
    }
    throw NumericsError("variance formula produced " + std::to_string(v) +
                        ", beyond the rounding clamp threshold");
}

}  // namespace

ScalarDist square_moments(const ScalarDist& d) {
    if (d.variance < 0.0) throw NumericsError("square_moments: negative input variance");
    ScalarDist out;
    out.mean = d.mean * d.mean + d.variance;
    out.variance = 2.0 * d.variance * (d.variance + 2.0 * d.mean * d.mean);
    out.clamped = d.clamped;
    return out;
}

ScalarDist derivative_dist_1d(const TrainedSurrogate& gp, double x, const SteadyStateDist& ss) {
    if (gp.state_dim != 1) throw DimensionError("derivative_dist_1d: requires a 1D system");
    if (ss.mode != SteadyStateMode::FixedState)
        throw DimensionError("derivative_dist_1d: needs a fixed-state steady distribution");
    const double p_star = ss.p;
    const Vector xv = Vector::Constant(1, x);

    const Matrix jac = predict_mean_jacobian(gp, xv, p_star);  // 1 x 2
    const double mean = jac(0, 0);
    const double dfdp = ss.root_jacobian(0, 0);
    const double mixed = predict_mean_mixed_second(gp, xv, p_star)[0](0, 1);
    const StdGradient sg = predict_std_gradient(gp, xv, p_star);
    const double dsigma_dx = sg.grad(0, 0);
    const double sigma_star = std::sqrt(std::max(ss.cov(0, 0), 0.0));

    const double sgn = dfdp >= 0.0 ? 1.0 : -1.0;
    const double bracket = mixed * sigma_star - sgn * dsigma_dx;
    return {mean, bracket * bracket, false};
}

JacobianDist jacobian_dist(const TrainedSurrogate& gp, const SteadyStateDist& ss, bool) {
    const int n = gp.state_dim;
    const int m = static_cast<int>(ss.free_idx.size());
    const Vector& x = ss.x;
    const double p = ss.p;

    JacobianDist out;
    out.mean = predict_mean_jacobian(gp, x, p).leftCols(n);

    const std::vector<Matrix> second = predict_mean_mixed_second(gp, x, p);
    const StdGradient sg = predict_std_gradient(gp, x, p);
    const Vector sigma = predict(gp, x, p).std();
    const Matrix ginv = ss.root_jacobian.fullPivLu().inverse();

    // H(i, j, k) = d^2 mean_i / (d x_j d free_k); D(i, j) = d sigma_i / d x_j.
    auto h = [&](int i, int j, int k) { return second[i](j, ss.free_idx[k]); };
    const Matrix d_sigma = sg.grad.leftCols(n);

    const int n2 = n * n;
    out.cov4.resize(n2, n2);
    for (int i1 = 0; i1 < n; ++i1)
        for (int j1 = 0; j1 < n; ++j1)
            for (int i2 = 0; i2 < n; ++i2)
                for (int j2 = 0; j2 < n; ++j2) {
                    double acc = 0.0;
                    for (int k1 = 0; k1 < m; ++k1)
                        for (int k2 = 0; k2 < m; ++k2)
                            acc += h(i1, j1, k1) * h(i2, j2, k2) * ss.cov(k1, k2);
                    if (i1 == i2) acc += d_sigma(i1, j1) * d_sigma(i2, j2);
                    double cross1 = 0.0, cross2 = 0.0;
                    for (int k = 0; k < m; ++k) {
                        cross1 += h(i1, j1, k) * ginv(k, i2);
                        cross2 += h(i2, j2, k) * ginv(k, i1);
                    }
                    acc -= cross1 * sigma[i2] * d_sigma(i2, j2);
                    acc -= cross2 * sigma[i1] * d_sigma(i1, j1);
                    out.cov4(i1 * n + j1, i2 * n + j2) = acc;
                }
    out.cov4 = 0.5 * (out.cov4 + out.cov4.transpose()).eval();

    const double scale = out.cov4.cwiseAbs().maxCoeff();
    for (int q = 0; q < n2; ++q)
        out.cov4(q, q) = clamp_variance(out.cov4(q, q), scale, out.clamped);
    return out;
}

double criticality_of(const std::complex<double>& lambda, CriticalityMode mode) {
    switch (mode) {
        case CriticalityMode::FoldOde: return std::abs(lambda);
        case CriticalityMode::HopfOde: return std::abs(lambda.real());
        case CriticalityMode::FoldMap: return std::abs(lambda - std::complex<double>(1.0, 0.0));
        case CriticalityMode::NeimarkSacker: return std::abs(std::norm(lambda) - 1.0);
    }
    return 0.0;
}

CriticalEig select_critical_eig(const Matrix& j, CriticalityMode mode) {
    const int n = static_cast<int>(j.rows());
    if (!j.allFinite()) throw NumericsError("select_critical_eig: non-finite Jacobian");

    Eigen::EigenSolver<Matrix> es(j);
    if (es.info() != Eigen::Success)
        throw NumericsError("select_critical_eig: eigensolver failed");

    int best = 0;
    for (int k = 1; k < n; ++k)
        if (criticality_of(es.eigenvalues()[k], mode) <
            criticality_of(es.eigenvalues()[best], mode))
            best = k;

    std::complex<double> lambda = es.eigenvalues()[best];
    ComplexVector v_r = es.eigenvectors().col(best);
    if (lambda.imag() < 0.0) {
        // Real matrix: the conjugate is also a pair; report the +i member.
        lambda = std::conj(lambda);
        v_r = v_r.conjugate();
        for (int k = 0; k < n; ++k)
            if (std::abs(es.eigenvalues()[k] - lambda) < 1e-12 * std::max(1.0, std::abs(lambda)))
                best = k;
    }

    v_r.normalize();
    Eigen::Index imax;
    v_r.cwiseAbs().maxCoeff(&imax);
    v_r *= std::conj(v_r[imax]) / std::abs(v_r[imax]);  // deterministic phase

    // conj(v_L) is the eigenvector of J^T at the same eigenvalue.
    Eigen::EigenSolver<Matrix> est(j.transpose());
    if (est.info() != Eigen::Success)
        throw NumericsError("select_critical_eig: transpose eigensolver failed");
    int match = 0;
    for (int k = 1; k < n; ++k)
        if (std::abs(est.eigenvalues()[k] - lambda) < std::abs(est.eigenvalues()[match] - lambda))
            match = k;
    ComplexVector w = est.eigenvectors().col(match);
    w.normalize();

    const std::complex<double> pairing = w.transpose() * v_r;
    if (std::abs(pairing) < 1e-10)
        throw DefectiveEigenError("select_critical_eig: eigenvalue " + std::to_string(best) +
                                  " is numerically defective (|vL^H vR| = " +
                                  std::to_string(std::abs(pairing)) + ")");
    w /= pairing;  // conj(v_L)^T v_R = 1, real positive

    CriticalEig out;
    out.index = best;
    out.value = lambda;
    out.right = v_r;
    out.left = w.conjugate();
    return out;
}

EigenDist eigen_dist(const JacobianDist& jd, CriticalityMode mode) {
    const int n = jd.n();
    const CriticalEig sel = select_critical_eig(jd.mean, mode);
    const ComplexVector vl_bar = sel.left.conjugate();
    const std::complex<double> d = vl_bar.transpose() * sel.right;
    const double d2 = std::norm(d);

    ComplexVector v_aux(n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) v_aux[i * n + j] = vl_bar[i] * sel.right[j];

    const std::complex<double> shift =
        mode == CriticalityMode::FoldMap ? std::complex<double>(1.0, 0.0)
                                         : std::complex<double>(0.0, 0.0);
    const std::complex<double> mu = sel.value - shift;

    EigenDist out;
    out.eig_index = sel.index;
    out.left = sel.left;
    out.right = sel.right;

    Vector z(n * n);
    const bool fold_like = mode == CriticalityMode::FoldOde || mode == CriticalityMode::FoldMap;
    const bool lambda_real = std::abs(sel.value.imag()) <= 1e-9 * std::max(1.0, std::abs(sel.value));
    if (mode == CriticalityMode::HopfOde || (fold_like && lambda_real)) {
        // Re-part sensitivity; for a real fold eigenvalue this is the
        // plain Lancaster fold formula.
        for (int q = 0; q < n * n; ++q) z[q] = (v_aux[q] * std::conj(d)).real();
        out.value.mean = fold_like ? mu.real() : sel.value.real();
    } else if (mode == CriticalityMode::NeimarkSacker) {
        for (int q = 0; q < n * n; ++q)
            z[q] = 2.0 * (std::conj(sel.value) * v_aux[q] * std::conj(d)).real();
        out.value.mean = std::norm(sel.value) - 1.0;
    } else {
        // Fold criterion landed on a complex pair (off-fold region):
        // track |mu| by the delta method.
        const double amu = std::abs(mu);
        for (int q = 0; q < n * n; ++q)
            z[q] = (std::conj(mu) * v_aux[q] * std::conj(d)).real() / amu;
        out.value.mean = amu;
        out.complex_fold = true;
    }

    double var = z.dot(jd.cov4 * z) / (d2 * d2);
    bool clamped = jd.clamped;
    var = clamp_variance(var, z.squaredNorm() * jd.cov4.cwiseAbs().maxCoeff() / (d2 * d2),
                         clamped);
    out.value.variance = var;
    out.value.clamped = clamped;
    out.squared = square_moments(out.value);
    return out;
}

ScalarDist trace_dist(const JacobianDist& jd) {
    const int n = jd.n();
    ScalarDist out;
    out.mean = jd.mean.trace();
    double var = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) var += jd.cov(i, i, j, j);
    out.clamped = jd.clamped;
    out.variance = clamp_variance(var, jd.cov4.cwiseAbs().maxCoeff() * n * n, out.clamped);
    return out;
}

}  // namespace bif
