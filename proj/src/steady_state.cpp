#include "bif/steady_state.hpp"

namespace bif {

namespace {

/// Joint coordinates: 0..n-1 are state components, index n is the parameter.
struct JointPoint {
    Vector x;
    double p;

    double& coord(int idx, int n) { return idx < n ? x[idx] : p; }
};

struct Residual {
    Vector value;
    Vector eval_floor;
    double norm = 0.0;  // normalized infinity norm

    /// Every component is either under tolerance or at the evaluation's
    /// floating-point noise floor.
    bool converged(const Vector& out_scale, double tol) const {
        for (Eigen::Index c = 0; c < value.size(); ++c)
            if (std::abs(value[c]) > std::max(tol * out_scale[c], eval_floor[c])) return false;
        return true;
    }
};

Residual residual(const TrainedSurrogate& gp, const Vector& x, double p, bool map_mode) {
    MeanEval me = predict_mean_floor(gp, x, p);
    Residual r;
    r.value = std::move(me.mean);
    if (map_mode) r.value -= x;
    r.eval_floor = std::move(me.eval_floor);
    r.norm = r.value.cwiseQuotient(gp.out_scale).lpNorm<Eigen::Infinity>();
    return r;
}

Matrix free_jacobian(const TrainedSurrogate& gp, const Vector& x, double p,
                     const std::vector<int>& free_idx, bool map_mode) {
    const int n = gp.state_dim;
    Matrix full = predict_mean_jacobian(gp, x, p);  // n x (n+1)
    if (map_mode) full.leftCols(n).diagonal().array() -= 1.0;
    Matrix g(n, free_idx.size());
    for (std::size_t k = 0; k < free_idx.size(); ++k) g.col(k) = full.col(free_idx[k]);
    return g;
}

NewtonResult newton_free(const TrainedSurrogate& gp, Vector x, double p,
                         const std::vector<int>& free_idx, const NewtonOptions& options) {
    const int n = gp.state_dim;
    NewtonResult out;
    out.x = x;
    out.p = p;

    Residual r = residual(gp, x, p, options.map_mode);
    for (int iter = 0; iter <= options.max_iters; ++iter) {
        out.x = x;
        out.p = p;
        out.residual_norm = r.norm;
        out.iterations = iter;
        if (r.converged(gp.out_scale, options.tol)) {
            out.status = NewtonResult::Status::Converged;
            return out;
        }
        if (iter == options.max_iters) break;

        const Matrix g = free_jacobian(gp, x, p, free_idx, options.map_mode);
        if (condition_number(g) > options.cond_limit) {
            out.status = NewtonResult::Status::SingularJacobian;
            return out;
        }
        const Vector dq = g.fullPivLu().solve(-r.value);

        double scale = 1.0;
        bool improved = false;
        for (int h = 0; h <= options.max_halvings; ++h) {
            Vector x_try = x;
            double p_try = p;
            JointPoint pt{x_try, p_try};
            for (std::size_t k = 0; k < free_idx.size(); ++k)
                pt.coord(free_idx[k], n) += scale * dq[k];
            Residual r_try = residual(gp, pt.x, pt.p, options.map_mode);
            if (std::isfinite(r_try.norm) &&
                (r_try.norm < r.norm || r_try.converged(gp.out_scale, options.tol))) {
                x = pt.x;
                p = pt.p;
                r = std::move(r_try);
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) break;  // stalled; report MaxIterations with the last iterate
    }
    out.status = NewtonResult::Status::MaxIterations;
    return out;
}

std::vector<int> all_state_indices(int n) {
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    return idx;
}

std::vector<int> branch_free_indices(int n, int branch_index) {
    std::vector<int> idx;
    for (int i = 0; i < n; ++i)
        if (i != branch_index) idx.push_back(i);
    idx.push_back(n);  // parameter
    return idx;
}

Matrix propagate_cov(const TrainedSurrogate& gp, const Vector& x, double p, const Matrix& g,
                     const char* where) {
    const double cond = condition_number(g);
    if (cond > 1e12)
        throw SingularJacobianError(std::string(where) + ": root Jacobian condition " +
                                        std::to_string(cond) + " exceeds 1e12",
                                    cond);
    const Matrix ginv = g.fullPivLu().inverse();
    const Matrix sigma = predict(gp, x, p).cov();
    return ginv * sigma * ginv.transpose();
}

}  // namespace

double SteadyStateDist::param_variance() const {
    const int pos = param_free_position();
    if (pos < 0) throw DimensionError("SteadyStateDist: parameter was not a free coordinate");
    return cov(pos, pos);
}

int SteadyStateDist::param_free_position() const {
    for (std::size_t k = 0; k < free_idx.size(); ++k)
        if (free_idx[k] == static_cast<int>(x.size())) return static_cast<int>(k);
    return -1;
}

NewtonResult newton_solve(const TrainedSurrogate& gp, const Vector& x0, double p,
                          const NewtonOptions& options) {
    if (x0.size() != gp.state_dim) throw DimensionError("newton_solve: state dimension mismatch");
    return newton_free(gp, x0, p, all_state_indices(gp.state_dim), options);
}

NewtonResult newton_solve_for_param(const TrainedSurrogate& gp, double x, double p0,
                                    const NewtonOptions& options) {
    if (gp.state_dim != 1)
        throw DimensionError("newton_solve_for_param: requires a 1D system");
    return newton_free(gp, Vector::Constant(1, x), p0, {1}, options);
}

NewtonResult newton_solve_branch(const TrainedSurrogate& gp, int branch_index, double s,
                                 const Vector& x0, double p0, const NewtonOptions& options) {
    if (branch_index < 0 || branch_index >= gp.state_dim)
        throw DimensionError("newton_solve_branch: branch index out of range");
    Vector x = x0;
    x[branch_index] = s;
    return newton_free(gp, x, p0, branch_free_indices(gp.state_dim, branch_index), options);
}

SteadyStateDist steady_dist_fixed_param(const TrainedSurrogate& gp, const Vector& x_root,
                                        double p, bool map_mode) {
    SteadyStateDist out;
    out.mode = SteadyStateMode::FixedParam;
    out.x = x_root;
    out.p = p;
    out.free_idx = all_state_indices(gp.state_dim);
    out.mean_free = x_root;
    out.root_jacobian = free_jacobian(gp, x_root, p, out.free_idx, map_mode);
    out.cov = propagate_cov(gp, x_root, p, out.root_jacobian, "steady_dist_fixed_param");
    return out;
}

SteadyStateDist steady_dist_fixed_state(const TrainedSurrogate& gp, double x, double p_root,
                                        bool map_mode) {
    if (gp.state_dim != 1)
        throw DimensionError("steady_dist_fixed_state: requires a 1D system");
    SteadyStateDist out;
    out.mode = SteadyStateMode::FixedState;
    out.fixed_state_index = 0;
    out.x = Vector::Constant(1, x);
    out.p = p_root;
    out.free_idx = {1};
    out.mean_free = Vector::Constant(1, p_root);
    out.root_jacobian = free_jacobian(gp, out.x, p_root, out.free_idx, map_mode);
    const double dfdp = out.root_jacobian(0, 0);
    if (std::abs(dfdp) < 1e-10)
        throw SingularJacobianError("steady_dist_fixed_state: |df/dp| below 1e-10",
                                    std::abs(dfdp));
    const double sigma2 = predict(gp, out.x, p_root).variance[0];
    out.cov = Matrix::Constant(1, 1, sigma2 / (dfdp * dfdp));
    return out;
}

SteadyStateDist steady_dist_branch(const TrainedSurrogate& gp, int branch_index,
                                   const Vector& x_root, double p_root, bool map_mode) {
    if (gp.state_dim == 1) return steady_dist_fixed_state(gp, x_root[0], p_root, map_mode);
    SteadyStateDist out;
    out.mode = SteadyStateMode::FixedState;
    out.fixed_state_index = branch_index;
    out.x = x_root;
    out.p = p_root;
    out.free_idx = branch_free_indices(gp.state_dim, branch_index);
    out.mean_free.resize(out.free_idx.size());
    for (std::size_t k = 0; k < out.free_idx.size(); ++k)
        out.mean_free[k] =
            out.free_idx[k] < gp.state_dim ? x_root[out.free_idx[k]] : p_root;
    out.root_jacobian = free_jacobian(gp, x_root, p_root, out.free_idx, map_mode);
    out.cov = propagate_cov(gp, x_root, p_root, out.root_jacobian, "steady_dist_branch");
    return out;
}

}  // namespace bif
