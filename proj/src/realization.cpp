#include "bif/realization.hpp"

#include <algorithm>

namespace bif {

namespace {

/// Uniform Catmull-Rom weights and their u-derivatives for u in [0, 1].
void catmull_rom(double u, double w[4], double dw[4]) {
    const double u2 = u * u, u3 = u2 * u;
    w[0] = 0.5 * (-u3 + 2.0 * u2 - u);
    w[1] = 0.5 * (3.0 * u3 - 5.0 * u2 + 2.0);
    w[2] = 0.5 * (-3.0 * u3 + 4.0 * u2 + u);
    w[3] = 0.5 * (u3 - u2);
    dw[0] = 0.5 * (-3.0 * u2 + 4.0 * u - 1.0);
    dw[1] = 0.5 * (9.0 * u2 - 10.0 * u);
    dw[2] = 0.5 * (-9.0 * u2 + 8.0 * u + 1.0);
    dw[3] = 0.5 * (3.0 * u2 - 2.0 * u);
}

}  // namespace

StencilRealization::StencilRealization(const TrainedSurrogate* gp, const std::vector<Vector>& axes,
                                       std::vector<int> active_dims, Vector center_joint,
                                       Matrix deviations)
    : gp_(gp),
      axes_(axes),
      active_(std::move(active_dims)),
      center_(std::move(center_joint)),
      dev_(std::move(deviations)) {
    strides_.assign(active_.size(), 1);
    for (int a = static_cast<int>(active_.size()) - 2; a >= 0; --a)
        strides_[a] = strides_[a + 1] * static_cast<int>(axes_[a + 1].size());
}

bool StencilRealization::in_hull(const Vector& joint) const {
    for (std::size_t a = 0; a < active_.size(); ++a) {
        const Vector& ax = axes_[a];
        const double t = joint[active_[a]];
        if (t < ax[1] || t > ax[ax.size() - 2]) return false;
    }
    return true;
}

Vector StencilRealization::clamp_to_hull(const Vector& joint) const {
    Vector out = center_;
    for (std::size_t a = 0; a < active_.size(); ++a) {
        const Vector& ax = axes_[a];
        const double lo = ax[1], hi = ax[ax.size() - 2];
        out[active_[a]] = std::min(std::max(joint[active_[a]], lo), hi);
    }
    return out;
}

double StencilRealization::interp_component(int component, const std::vector<double>& t,
                                            std::vector<double>* grad) const {
    const int m = static_cast<int>(active_.size());
    std::vector<int> cell(m);
    std::vector<std::array<double, 4>> w(m), dw(m);
    std::vector<double> inv_h(m);
    for (int a = 0; a < m; ++a) {
        const Vector& ax = axes_[a];
        const int n_nodes = static_cast<int>(ax.size());
        const double h = ax[1] - ax[0];
        inv_h[a] = 1.0 / h;
        // Valid cells keep the 4-node neighborhood inside the stencil.
        int i = static_cast<int>(std::floor((t[a] - ax[0]) * inv_h[a]));
        i = std::min(std::max(i, 1), n_nodes - 3);
        cell[a] = i;
        const double u = (t[a] - ax[i]) * inv_h[a];
        catmull_rom(u, w[a].data(), dw[a].data());
    }

    double value = 0.0;
    if (grad) grad->assign(m, 0.0);
    const int total = 1 << (2 * m);  // 4^m local nodes
    for (int code = 0; code < total; ++code) {
        int idx = 0;
        double weight = 1.0;
        int c = code;
        for (int a = 0; a < m; ++a) {
            const int o = c & 3;
            c >>= 2;
            idx += (cell[a] - 1 + o) * strides_[a];
            weight *= w[a][o];
        }
        const double y = dev_(idx, component);
        value += weight * y;
        if (grad) {
            c = code;
            for (int a = 0; a < m; ++a) {
                const int o = c & 3;
                c >>= 2;
                double gw = dw[a][o] * inv_h[a];
                int c2 = code;
                for (int b = 0; b < m; ++b) {
                    const int ob = c2 & 3;
                    c2 >>= 2;
                    if (b != a) gw *= w[b][ob];
                }
                (*grad)[a] += gw * y;
            }
        }
    }
    return value;
}

Vector StencilRealization::value(const Vector& joint, Vector* eval_floor) const {
    const int n = gp_->state_dim;
    MeanEval me = predict_mean_floor(*gp_, joint.head(n), joint[n]);
    if (eval_floor) *eval_floor = me.eval_floor;
    Vector out = std::move(me.mean);
    std::vector<double> t(active_.size());
    for (std::size_t a = 0; a < active_.size(); ++a) t[a] = joint[active_[a]];
    for (int c = 0; c < n; ++c) out[c] += interp_component(c, t, nullptr);
    return out;
}

Matrix StencilRealization::jacobian(const Vector& joint) const {
    const int n = gp_->state_dim;
    Matrix out = predict_mean_jacobian(*gp_, joint.head(n), joint[n]);
    std::vector<double> t(active_.size());
    for (std::size_t a = 0; a < active_.size(); ++a) t[a] = joint[active_[a]];
    std::vector<double> grad;
    for (int c = 0; c < n; ++c) {
        interp_component(c, t, &grad);
        for (std::size_t a = 0; a < active_.size(); ++a) out(c, active_[a]) += grad[a];
    }
    return out;
}

StencilSampler::StencilSampler(const TrainedSurrogate& gp, const Vector& x_center,
                               double p_center, std::vector<int> active_dims,
                               const std::vector<double>& domain_widths,
                               const StencilOptions& options)
    : gp_(gp), active_(std::move(active_dims)) {
    const int n = gp.state_dim;
    center_.resize(n + 1);
    center_.head(n) = x_center;
    center_[n] = p_center;

    const int m = static_cast<int>(active_.size());
    // 7^m joint draws get expensive past 3 active dims; shrink the radius
    // there (quadratic accuracy is still adequate for the oracle role).
    const int radius = m >= 4 ? 2 : options.radius;
    const int n_per_dim = 2 * radius + 1;

    axes_.resize(m);
    for (int a = 0; a < m; ++a) {
        const int dim = active_[a];
        double len_min = std::numeric_limits<double>::infinity();
        for (const auto& comp : gp.components)
            len_min = std::min(len_min, comp.hp.lengthscales[dim] * gp.in_scale[dim]);
        double step = options.step_fraction * len_min;
        const double width = domain_widths.at(dim);
        step = std::min(step, options.max_halfwidth_fraction * width / radius);
        step = std::max(step, 1e-9 * std::max(1.0, std::abs(center_[dim])));
        axes_[a] = linspace(center_[dim] - radius * step, center_[dim] + radius * step,
                            n_per_dim);
    }

    int total = 1;
    for (int a = 0; a < m; ++a) total *= n_per_dim;

    Matrix query(total, n + 1);
    std::vector<int> strides(m, 1);
    for (int a = m - 2; a >= 0; --a) strides[a] = strides[a + 1] * n_per_dim;
    for (int idx = 0; idx < total; ++idx) {
        Vector joint = center_;
        int rem = idx;
        for (int a = 0; a < m; ++a) {
            joint[active_[a]] = axes_[a][rem / strides[a]];
            rem %= strides[a];
        }
        query.row(idx) = gp.normalize_input(joint.head(n), joint[n]).transpose();
    }

    node_mean_.resize(total, n);
    chol_.resize(n);
    out_scale_.resize(n);
    for (int c = 0; c < n; ++c) {
        Vector mean;
        Matrix cov;
        joint_posterior(gp, c, query, mean, cov);
        chol_[c] = jittered_cholesky(cov, 1e-12, 1e-6);
        node_mean_.col(c) = gp.out_shift[c] + gp.out_scale[c] * mean.array();
        out_scale_[c] = gp.out_scale[c];
    }
}

StencilRealization StencilSampler::draw(std::uint64_t seed) const {
    const int n = gp_.state_dim;
    const int total = n_nodes();
    Rng rng(seed);
    Matrix dev(total, n);
    for (int c = 0; c < n; ++c) {
        const Vector z = rng.normal_vector(total);
        dev.col(c) = out_scale_[c] * (chol_[c] * z).array();
    }
    return StencilRealization(&gp_, axes_, active_, center_, std::move(dev));
}

StencilRealization StencilSampler::mean_realization() const {
    return StencilRealization(&gp_, axes_, active_, center_,
                              Matrix::Zero(n_nodes(), gp_.state_dim));
}

NewtonResult newton_on_realization(const StencilRealization& real, const TrainedSurrogate& gp,
                                   const std::vector<int>& free_idx, const Vector& x0, double p0,
                                   const NewtonOptions& options) {
    const int n = gp.state_dim;
    Vector joint(n + 1);
    joint.head(n) = x0;
    joint[n] = p0;
    joint = real.clamp_to_hull(joint);

    struct Res {
        Vector value, floor;
        double norm;
    };
    auto resid = [&](const Vector& jt) {
        Res r;
        r.value = real.value(jt, &r.floor);
        if (options.map_mode) r.value -= jt.head(n);
        r.norm = r.value.cwiseQuotient(gp.out_scale).lpNorm<Eigen::Infinity>();
        return r;
    };
    auto converged = [&](const Res& r) {
        for (int c = 0; c < n; ++c)
            if (std::abs(r.value[c]) > std::max(options.tol * gp.out_scale[c], r.floor[c]))
                return false;
        return true;
    };

    NewtonResult out;
    Res r = resid(joint);
    for (int iter = 0; iter <= options.max_iters; ++iter) {
        out.x = joint.head(n);
        out.p = joint[n];
        out.residual_norm = r.norm;
        out.iterations = iter;
        if (converged(r)) {
            out.status = NewtonResult::Status::Converged;
            return out;
        }
        if (iter == options.max_iters) break;

        Matrix full = real.jacobian(joint);
        if (options.map_mode) full.leftCols(n).diagonal().array() -= 1.0;
        Matrix g(n, free_idx.size());
        for (std::size_t k = 0; k < free_idx.size(); ++k) g.col(k) = full.col(free_idx[k]);
        if (condition_number(g) > options.cond_limit) {
            out.status = NewtonResult::Status::SingularJacobian;
            return out;
        }
        const Vector dq = g.fullPivLu().solve(-r.value);

        double scale = 1.0;
        bool improved = false;
        for (int h = 0; h <= options.max_halvings; ++h) {
            Vector trial = joint;
            for (std::size_t k = 0; k < free_idx.size(); ++k)
                trial[free_idx[k]] += scale * dq[k];
            trial = real.clamp_to_hull(trial);
            Res r_try = resid(trial);
            if (std::isfinite(r_try.norm) && (r_try.norm < r.norm || converged(r_try))) {
                joint = trial;
                r = std::move(r_try);
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) break;
    }
    out.status = NewtonResult::Status::MaxIterations;
    return out;
}

}  // namespace bif
