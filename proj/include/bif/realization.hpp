#pragma once

#include "bif/steady_state.hpp"
#include "bif/uq.hpp"

namespace bif {

/// One GP posterior draw restricted to a tensor stencil around a branch
/// point, represented as the analytic predictive mean plus a Catmull-Rom
/// interpolated deviation field. Finite-dimensional, differentiable and
/// reproducible; this is what Monte Carlo realization solving runs on.
class StencilRealization {
public:
    /// Deviation values at the stencil nodes, one column per output.
    StencilRealization(const TrainedSurrogate* gp, const std::vector<Vector>& axes,
                       std::vector<int> active_dims, Vector center_joint, Matrix deviations);

    /// Realization value at joint input u = (x, p); optionally reports the
    /// floating-point evaluation floor of the underlying mean.
    Vector value(const Vector& joint, Vector* eval_floor = nullptr) const;
    /// d value / d u for all joint dimensions (zero deviation gradient on
    /// inactive dimensions).
    Matrix jacobian(const Vector& joint) const;

    /// Projects a joint point onto the stencil hull (with a small inset).
    Vector clamp_to_hull(const Vector& joint) const;
    bool in_hull(const Vector& joint) const;

    const std::vector<int>& active_dims() const { return active_; }

private:
    double interp_component(int component, const std::vector<double>& t,
                            std::vector<double>* grad) const;

    const TrainedSurrogate* gp_;
    std::vector<Vector> axes_;   // node coordinates per active dim
    std::vector<int> active_;    // joint dims the stencil spans
    Vector center_;              // joint point; inactive dims stay here
    Matrix dev_;                 // n_nodes x n_out deviation field
    std::vector<int> strides_;
};

struct StencilOptions {
    int radius = 3;              // nodes each side of the center
    double step_fraction = 0.5;  // step = fraction * lengthscale, capped below
    double max_halfwidth_fraction = 0.5;  // cap: halfwidth <= fraction * domain width
};

/// Shared factorization for drawing many realizations on one stencil.
class StencilSampler {
public:
    StencilSampler(const TrainedSurrogate& gp, const Vector& x_center, double p_center,
                   std::vector<int> active_dims, const std::vector<double>& domain_widths,
                   const StencilOptions& options = {});

    StencilRealization draw(std::uint64_t seed) const;
    /// The zero-deviation realization (the predictive mean on the stencil).
    StencilRealization mean_realization() const;

    int n_nodes() const { return static_cast<int>(node_mean_.rows()); }

private:
    const TrainedSurrogate& gp_;
    std::vector<Vector> axes_;
    std::vector<int> active_;
    Vector center_;
    Matrix node_mean_;                // n_nodes x n_out, physical units
    std::vector<Matrix> chol_;        // per output, posterior covariance factor
    std::vector<double> out_scale_;   // physical scale per output
};

/// Newton on a stencil realization over the given free joint coordinates,
/// with the same damping policy as the surrogate-mean solver.
NewtonResult newton_on_realization(const StencilRealization& real, const TrainedSurrogate& gp,
                                   const std::vector<int>& free_idx, const Vector& x0, double p0,
                                   const NewtonOptions& options = {});

}  // namespace bif
