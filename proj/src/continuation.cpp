#include "bif/continuation.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

namespace bif {

namespace {

/// Newton for the true system over (x_{-branch}, p) at fixed branch value.
std::optional<BranchPoint> solve_true(const SystemSpec& spec, int branch_index, double s,
                                      Vector x, double p, double tol, int max_iters = 60) {
    const int n = spec.state_dim;
    x[branch_index] = s;
    std::vector<int> free_idx;
    for (int i = 0; i < n; ++i)
        if (i != branch_index) free_idx.push_back(i);

    for (int it = 0; it < max_iters; ++it) {
        Vector f;
        try {
            f = eval_vector_field(spec, x, p);
        } catch (const NumericsError&) {
            return std::nullopt;
        }
        if (f.lpNorm<Eigen::Infinity>() < tol) {
            BranchPoint bp;
            bp.s = s;
            bp.x = x;
            bp.p = p;
            const Matrix j = true_state_jacobian(spec, x, p);
            Eigen::EigenSolver<Matrix> es(j);
            double best = std::numeric_limits<double>::infinity();
            for (int k = 0; k < n; ++k) {
                const auto lam = es.eigenvalues()[k];
                if (std::abs(lam) < std::abs(best) &&
                    std::abs(lam.imag()) < 1e-8 * std::max(1.0, std::abs(lam)))
                    best = lam.real();
            }
            bp.critical_eig = best;
            return bp;
        }

        Matrix g(n, n);
        for (std::size_t k = 0; k < free_idx.size(); ++k) {
            Vector xp = x, xm = x;
            const double h = 1e-7 * std::max(1.0, std::abs(x[free_idx[k]]));
            xp[free_idx[k]] += h;
            xm[free_idx[k]] -= h;
            g.col(k) = (eval_vector_field(spec, xp, p) - eval_vector_field(spec, xm, p)) / (2 * h);
        }
        {
            const double h = 1e-7 * std::max(1.0, std::abs(p));
            g.col(n - 1) =
                (eval_vector_field(spec, x, p + h) - eval_vector_field(spec, x, p - h)) / (2 * h);
        }
        Eigen::FullPivLU<Matrix> lu(g);
        if (!lu.isInvertible()) return std::nullopt;
        const Vector dq = lu.solve(-f);
        double scale = 1.0;
        const double f0 = f.lpNorm<Eigen::Infinity>();
        bool ok = false;
        for (int h = 0; h < 40; ++h) {
            Vector x_try = x;
            double p_try = p;
            for (std::size_t k = 0; k < free_idx.size(); ++k)
                x_try[free_idx[k]] += scale * dq[k];
            p_try += scale * dq[n - 1];
            try {
                if (eval_vector_field(spec, x_try, p_try).lpNorm<Eigen::Infinity>() < f0) {
                    x = x_try;
                    p = p_try;
                    ok = true;
                    break;
                }
            } catch (const NumericsError&) {
            }
            scale *= 0.5;
        }
        if (!ok) return std::nullopt;
    }
    return std::nullopt;
}

}  // namespace

std::optional<BranchPoint> true_branch_solve(const SystemSpec& spec, int branch_index, double s,
                                             const Vector& x0, double p0, double tol) {
    return solve_true(spec, branch_index, s, x0, p0, tol);
}

std::optional<FoldResult> continuation_fold(const SystemSpec& spec, int branch_index, double s_lo,
                                            double s_hi, int n_steps, const Vector& x_init,
                                            double p_init, double p_resolution) {
    const Vector grid = linspace(s_lo, s_hi, n_steps);
    std::vector<std::optional<BranchPoint>> pts(n_steps);

    // Walk outward from the grid point nearest the initial guess so the
    // Newton warm starts stay on the branch.
    int start = 0;
    double dist = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_steps; ++i)
        if (std::abs(grid[i] - x_init[branch_index]) < dist) {
            dist = std::abs(grid[i] - x_init[branch_index]);
            start = i;
        }
    for (int dir : {1, -1}) {
        Vector x = x_init;
        double p = p_init;
        for (int i = start; i >= 0 && i < n_steps; i += dir) {
            if (dir == -1 && i == start) continue;
            auto bp = solve_true(spec, branch_index, grid[i], x, p, 1e-11);
            if (!bp) break;
            x = bp->x;
            p = bp->p;
            pts[i] = std::move(bp);
        }
    }

    // Fold: p(s) has an interior extremum where dp/ds changes sign; refine
    // it by golden-section on p over the bracketing cell.
    std::optional<FoldResult> best;
    for (int i = 1; i + 1 < n_steps; ++i) {
        if (!pts[i - 1] || !pts[i] || !pts[i + 1]) continue;
        const double dl = pts[i]->p - pts[i - 1]->p;
        const double dr = pts[i + 1]->p - pts[i]->p;
        if (dl == 0.0 || dr == 0.0 || (dl > 0) == (dr > 0)) continue;

        const double sign = dl > 0 ? 1.0 : -1.0;  // maximize p when rising into the turn
        BranchPoint seed = *pts[i];
        auto p_at = [&](double sq) -> std::optional<double> {
            auto bp = solve_true(spec, branch_index, sq, seed.x, seed.p, 1e-11);
            if (!bp) return std::nullopt;
            seed = *bp;
            return sign * bp->p;
        };

        const double phi = 0.6180339887498949;
        double a = grid[i - 1], b = grid[i + 1];
        double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
        auto f1 = p_at(x1), f2 = p_at(x2);
        if (!f1 || !f2) continue;
        for (int it = 0; it < 200; ++it) {
            if (std::abs(*f1 - *f2) < p_resolution * 0.01 && (b - a) < p_resolution) break;
            if (*f1 >= *f2) {
                b = x2;
                x2 = x1;
                f2 = f1;
                x1 = b - phi * (b - a);
                f1 = p_at(x1);
            } else {
                a = x1;
                x1 = x2;
                f1 = f2;
                x2 = a + phi * (b - a);
                f2 = p_at(x2);
            }
            if (!f1 || !f2) break;
        }
        auto bp = solve_true(spec, branch_index, 0.5 * (a + b), seed.x, seed.p, 1e-11);
        if (!bp) continue;
        FoldResult fr;
        fr.s = bp->s;
        fr.x = bp->x;
        fr.p = bp->p;
        best = fr;
    }
    return best;
}

std::optional<double> continuation_hopf(const SystemSpec& spec, double p_lo, double p_hi,
                                        int n_steps, const Vector& x_init, double p_resolution) {
    const int n = spec.state_dim;
    auto solve_x = [&](double p, Vector x) -> std::optional<Vector> {
        for (int it = 0; it < 60; ++it) {
            const Vector f = eval_vector_field(spec, x, p);
            if (f.lpNorm<Eigen::Infinity>() < 1e-12) return x;
            const Matrix j = true_state_jacobian(spec, x, p);
            Eigen::FullPivLU<Matrix> lu(j);
            if (!lu.isInvertible()) return std::nullopt;
            x += lu.solve(-f);
        }
        return std::nullopt;
    };
    auto min_re = [&](const Vector& x, double p) {
        const Matrix j = true_state_jacobian(spec, x, p);
        Eigen::EigenSolver<Matrix> es(j);
        double best = std::numeric_limits<double>::infinity();
        for (int k = 0; k < n; ++k)
            if (std::abs(es.eigenvalues()[k].real()) < std::abs(best))
                best = es.eigenvalues()[k].real();
        return best;
    };

    const Vector grid = linspace(p_lo, p_hi, n_steps);
    Vector x = x_init;
    std::optional<double> prev_re;
    double prev_p = 0.0;
    Vector prev_x;
    for (int i = 0; i < n_steps; ++i) {
        auto xs = solve_x(grid[i], x);
        if (!xs) continue;
        x = *xs;
        const double re = min_re(x, grid[i]);
        if (prev_re && (*prev_re > 0) != (re > 0)) {
            double a = prev_p, b = grid[i];
            Vector xa = prev_x;
            double fa = *prev_re;
            while (b - a > p_resolution) {
                const double m = 0.5 * (a + b);
                auto xm = solve_x(m, xa);
                if (!xm) break;
                const double fm = min_re(*xm, m);
                if ((fm > 0) == (fa > 0)) {
                    a = m;
                    xa = *xm;
                    fa = fm;
                } else {
                    b = m;
                }
            }
            return 0.5 * (a + b);
        }
        prev_re = re;
        prev_p = grid[i];
        prev_x = x;
    }
    return std::nullopt;
}

FoldResult budworm_fold_grid_oracle(double k, double x_lo, double x_hi, int n_grid) {
    // r(x) = x / ((1+x^2)(1 - x/k)); fold at dr/dx = 0.
    auto r_of = [&](double x) { return x / ((1.0 + x * x) * (1.0 - x / k)); };
    auto dr_of = [&](double x) {
        const double h = (x_hi - x_lo) / (8.0 * n_grid);
        return (r_of(x + h) - r_of(x - h)) / (2.0 * h);
    };
    double best_x = x_lo;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n_grid; ++i) {
        const double x = x_lo + (x_hi - x_lo) * (i + 0.5) / n_grid;
        const double d = std::abs(dr_of(x));
        if (d < best) {
            best = d;
            best_x = x;
        }
    }
    FoldResult out;
    out.s = best_x;
    out.x = Vector::Constant(1, best_x);
    out.p = r_of(best_x);
    return out;
}

// --- Full FitzHugh-Nagumo branch ---

namespace {

using SpMat = Eigen::SparseMatrix<double>;

SpMat fhn_sparse_jacobian(const FhnGrid& grid, const Vector& y, double eps) {
    const int m = grid.nodes;
    const double inv_dx2 = 1.0 / (grid.dx * grid.dx);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(8 * m);
    auto lap_rows = [&](int row0, double coef) {
        for (int i = 0; i < m; ++i) {
            trip.emplace_back(row0 + i, row0 + i, -2.0 * coef * inv_dx2);
            if (i == 0)
                trip.emplace_back(row0, row0 + 1, 2.0 * coef * inv_dx2);
            else if (i == m - 1)
                trip.emplace_back(row0 + m - 1, row0 + m - 2, 2.0 * coef * inv_dx2);
            else {
                trip.emplace_back(row0 + i, row0 + i - 1, coef * inv_dx2);
                trip.emplace_back(row0 + i, row0 + i + 1, coef * inv_dx2);
            }
        }
    };
    lap_rows(0, grid.du);
    lap_rows(m, grid.dv);
    for (int i = 0; i < m; ++i) {
        trip.emplace_back(i, i, 1.0 - 3.0 * y[i] * y[i]);
        trip.emplace_back(i, m + i, -1.0);
        trip.emplace_back(m + i, i, eps);
        trip.emplace_back(m + i, m + i, -eps * grid.alpha1);
    }
    SpMat j(2 * m, 2 * m);
    j.setFromTriplets(trip.begin(), trip.end());
    return j;
}

Vector fhn_drhs_deps(const FhnGrid& grid, const Vector& y) {
    const int m = grid.nodes;
    Vector out = Vector::Zero(2 * m);
    for (int i = 0; i < m; ++i)
        out[m + i] = y[i] - grid.alpha1 * y[m + i] - grid.alpha0;
    return out;
}

/// Bordered Newton: rhs(y, eps) = 0 with mean(u) pinned to s.
bool fhn_bordered_newton(const FhnGrid& grid, Vector& y, double& eps, double s, double tol = 1e-11,
                         int max_iters = 60) {
    const int m = grid.nodes;
    for (int it = 0; it < max_iters; ++it) {
        const Vector f = grid.rhs(y, eps);
        const double g = y.head(m).mean() - s;
        if (std::max(f.lpNorm<Eigen::Infinity>(), std::abs(g)) < tol) return true;

        Eigen::SparseLU<SpMat> lu;
        lu.compute(fhn_sparse_jacobian(grid, y, eps));
        if (lu.info() != Eigen::Success) return false;
        const Vector w1 = lu.solve(-f);
        const Vector w2 = lu.solve(fhn_drhs_deps(grid, y));
        const double cw1 = w1.head(m).mean();
        const double cw2 = w2.head(m).mean();
        if (std::abs(cw2) < 1e-300) return false;
        const double de = (cw1 + g) / cw2;
        y += w1 - de * w2;
        eps += de;
    }
    return false;
}

Vector fhn_timestep_to_front(const FhnGrid& grid, double eps) {
    const int m = grid.nodes;
    Vector y(2 * m);
    for (int i = 0; i < m; ++i) {
        const double x = i * grid.dx;
        y[i] = std::tanh(x - 0.5 * grid.length);
        y[m + i] = (y[i] - grid.alpha0) / grid.alpha1;
    }
    const double dt = 5e-4;
    for (int step = 0; step < 300000; ++step) y += dt * grid.rhs(y, eps);
    // Newton polish at fixed eps.
    for (int it = 0; it < 50; ++it) {
        const Vector f = grid.rhs(y, eps);
        if (f.lpNorm<Eigen::Infinity>() < 1e-12) break;
        Eigen::SparseLU<SpMat> lu;
        lu.compute(fhn_sparse_jacobian(grid, y, eps));
        if (lu.info() != Eigen::Success) break;
        y += lu.solve(-f);
    }
    return y;
}

}  // namespace

FhnBranch trace_fhn_branch(const FhnGrid& grid, double eps_start, double eps_min,
                           double mean_u_step) {
    const int m = grid.nodes;
    Vector y = fhn_timestep_to_front(grid, eps_start);
    double eps = eps_start;
    double s = y.head(m).mean();

    FhnBranch branch;
    branch.eps.push_back(eps);
    branch.states.push_back(y);

    // Decreasing mean(u) walks toward and around the fold.
    double ds = -mean_u_step;
    int guard = 0;
    while (guard++ < 6000) {
        Vector y2 = y;
        double e2 = eps;
        if (!fhn_bordered_newton(grid, y2, e2, s + ds)) {
            ds *= 0.5;
            if (std::abs(ds) < 1e-9) break;
            continue;
        }
        y = y2;
        eps = e2;
        s += ds;
        branch.eps.push_back(eps);
        branch.states.push_back(y);
        if (eps < eps_min && branch.eps.size() > 30) break;
    }

    branch.fold_index = 0;
    for (std::size_t i = 0; i < branch.eps.size(); ++i)
        if (branch.eps[i] > branch.eps[branch.fold_index])
            branch.fold_index = static_cast<int>(i);
    branch.eps_fold = branch.eps[branch.fold_index];
    return branch;
}

double fhn_full_fold(const FhnGrid& grid, double eps_resolution) {
    FhnBranch branch = trace_fhn_branch(grid, 0.5, 0.45);
    const int m = grid.nodes;
    const int k = branch.fold_index;
    Vector y = branch.states[k];
    double eps = branch.eps[k];
    double s = y.head(m).mean();

    // Golden-section maximization of eps(s) around the coarse fold.
    const double phi = 0.6180339887498949;
    double span = 4e-3;
    double a = s - span, b = s + span;
    auto eps_at = [&](double sq) {
        Vector yy = y;
        double ee = eps;
        if (!fhn_bordered_newton(grid, yy, ee, sq)) return -1.0;
        return ee;
    };
    double x1 = b - phi * (b - a), x2 = a + phi * (b - a);
    double f1 = eps_at(x1), f2 = eps_at(x2);
    for (int it = 0; it < 80; ++it) {
        if (std::abs(std::max(f1, f2) - std::min(f1, f2)) < eps_resolution * 0.01 &&
            b - a < 1e-9)
            break;
        if (f1 >= f2) {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - phi * (b - a);
            f1 = eps_at(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + phi * (b - a);
            f2 = eps_at(x2);
        }
    }
    return std::max(f1, f2);
}

std::vector<Vector> select_fhn_snapshots(const FhnBranch& branch, int n, double eps_min) {
    std::vector<int> eligible;
    for (std::size_t i = 0; i < branch.eps.size(); ++i)
        if (branch.eps[i] >= eps_min) eligible.push_back(static_cast<int>(i));
    if (static_cast<int>(eligible.size()) < n)
        throw NumericsError("select_fhn_snapshots: branch too short for requested snapshots");
    std::vector<Vector> out;
    for (int k = 0; k < n; ++k) {
        const double pos = static_cast<double>(k) * (eligible.size() - 1) / (n - 1);
        out.push_back(branch.states[eligible[static_cast<int>(std::round(pos))]]);
    }
    return out;
}

}  // namespace bif
