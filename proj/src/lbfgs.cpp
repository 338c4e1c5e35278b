#include "bif/lbfgs.hpp"

#include <deque>

namespace bif {

LbfgsResult lbfgs_minimize(const LbfgsObjective& objective, const Vector& x0,
                           const LbfgsOptions& options) {
    const int n = static_cast<int>(x0.size());
    Vector x = x0, grad(n);
    double f = objective(x, &grad);

    LbfgsResult best{x, f, 0, false};
    if (!std::isfinite(f)) return best;

    std::deque<Vector> s_hist, y_hist;
    std::deque<double> rho_hist;
    std::deque<double> f_window;
    int stagnant = 0;

    for (int iter = 0; iter < options.max_iters; ++iter) {
        if (grad.lpNorm<Eigen::Infinity>() < options.grad_tol) {
            best.converged = true;
            break;
        }

        // Two-loop recursion.
        Vector q = grad;
        std::vector<double> alphas(s_hist.size());
        for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
            alphas[i] = rho_hist[i] * s_hist[i].dot(q);
            q -= alphas[i] * y_hist[i];
        }
        if (!s_hist.empty()) {
            const Vector& s = s_hist.back();
            const Vector& y = y_hist.back();
            q *= s.dot(y) / y.squaredNorm();
        }
        for (std::size_t i = 0; i < s_hist.size(); ++i) {
            const double beta = rho_hist[i] * y_hist[i].dot(q);
            q += (alphas[i] - beta) * s_hist[i];
        }
        Vector direction = -q;
        double dg = direction.dot(grad);
        if (!(dg < 0.0)) {  // fall back to steepest descent
            direction = -grad;
            dg = -grad.squaredNorm();
        }

        // Armijo backtracking on value-only evaluations.
        double step = options.initial_step;
        Vector x_new;
        double f_new = std::numeric_limits<double>::infinity();
        bool accepted = false;
        for (int bt = 0; bt < options.max_backtracks; ++bt) {
            x_new = x + step * direction;
            f_new = objective(x_new, nullptr);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * dg) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;

        Vector grad_new(n);
        objective(x_new, &grad_new);

        Vector s = x_new - x;
        Vector y = grad_new - grad;
        const double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
            s_hist.push_back(std::move(s));
            y_hist.push_back(std::move(y));
            rho_hist.push_back(1.0 / sy);
            if (static_cast<int>(s_hist.size()) > options.history) {
                s_hist.pop_front();
                y_hist.pop_front();
                rho_hist.pop_front();
            }
        }
        stagnant = (f - f_new) < options.f_tol * (1.0 + std::abs(f)) ? stagnant + 1 : 0;
        f_window.push_back(f);
        if (static_cast<int>(f_window.size()) > options.window_iters) f_window.pop_front();
        x = x_new;
        f = f_new;
        grad = grad_new;
        best.iterations = iter + 1;
        if (f < best.f) {
            best.f = f;
            best.x = x;
        }
        if (stagnant >= 2 ||
            (static_cast<int>(f_window.size()) == options.window_iters &&
             f_window.front() - f < options.window_tol * (1.0 + std::abs(f)))) {
            best.converged = true;
            break;
        }
    }
    return best;
}

}  // namespace bif
