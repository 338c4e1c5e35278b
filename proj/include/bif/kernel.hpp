#pragma once

#include "bif/common.hpp"

namespace bif {

// Squared-exponential ARD kernel and its input derivatives. All free
// functions; callers hold (signal_variance, lengthscales) themselves.

inline double se_ard(const Vector& a, const Vector& b, double signal_variance,
                     const Vector& lengthscales) {
    double q = 0.0;
    for (int k = 0; k < a.size(); ++k) {
        const double d = (a[k] - b[k]) / lengthscales[k];
        q += d * d;
    }
    return signal_variance * std::exp(-0.5 * q);
}

/// Gram matrix between row-wise point sets.
inline Matrix se_ard_gram(const Matrix& pa, const Matrix& pb, double signal_variance,
                          const Vector& lengthscales) {
    Matrix out(pa.rows(), pb.rows());
    for (Eigen::Index i = 0; i < pa.rows(); ++i)
        for (Eigen::Index j = 0; j < pb.rows(); ++j)
            out(i, j) = se_ard(pa.row(i).transpose(), pb.row(j).transpose(), signal_variance,
                               lengthscales);
    return out;
}

/// d k(q, b) / d q_a = -k * (q_a - b_a) / l_a^2.
inline Vector se_ard_grad(const Vector& q, const Vector& b, double kval,
                          const Vector& lengthscales) {
    Vector g(q.size());
    for (int a = 0; a < q.size(); ++a)
        g[a] = -kval * (q[a] - b[a]) / (lengthscales[a] * lengthscales[a]);
    return g;
}

/// d^2 k(q, b) / d q_a d q_b = k * (D_a D_b / (l_a^2 l_b^2) - delta_ab / l_a^2).
inline Matrix se_ard_hess(const Vector& q, const Vector& b, double kval,
                          const Vector& lengthscales) {
    const int d = static_cast<int>(q.size());
    Matrix h(d, d);
    for (int a = 0; a < d; ++a) {
        const double la2 = lengthscales[a] * lengthscales[a];
        const double da = (q[a] - b[a]) / la2;
        for (int c = 0; c < d; ++c) {
            const double lc2 = lengthscales[c] * lengthscales[c];
            const double dc = (q[c] - b[c]) / lc2;
            h(a, c) = kval * (da * dc - (a == c ? 1.0 / la2 : 0.0));
        }
    }
    return h;
}

}  // namespace bif
