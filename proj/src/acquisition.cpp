#include "bif/acquisition.hpp"

#include <algorithm>

namespace bif {

bool is_map_kind(BifKind kind) {
    return kind == BifKind::FoldMap || kind == BifKind::NeimarkSacker;
}

bool kind_uses_state_branch(BifKind kind) {
    return kind != BifKind::HopfEig && kind != BifKind::HopfTrace;
}

CriticalityMode criticality_mode(BifKind kind) {
    switch (kind) {
        case BifKind::Fold1D:
        case BifKind::FoldND: return CriticalityMode::FoldOde;
        case BifKind::HopfEig:
        case BifKind::HopfTrace: return CriticalityMode::HopfOde;
        case BifKind::FoldMap: return CriticalityMode::FoldMap;
        case BifKind::NeimarkSacker: return CriticalityMode::NeimarkSacker;
    }
    return CriticalityMode::FoldOde;
}

ProblemGeometry ProblemGeometry::from_spec(const SystemSpec& spec) {
    ProblemGeometry g;
    g.state_dim = spec.state_dim;
    g.branch = spec.branch_variable;
    g.state_box = spec.state_box;
    g.param_range = spec.bif_param_range;
    return g;
}

std::vector<double> ProblemGeometry::joint_widths() const {
    std::vector<double> w;
    for (const auto& iv : state_box.dims) w.push_back(iv.width());
    w.push_back(param_range.width());
    return w;
}

namespace {

NewtonOptions newton_options_for(BifKind kind) {
    NewtonOptions o;
    o.map_mode = is_map_kind(kind);
    return o;
}

/// Signed criticality value of a Jacobian sample; shared by the Monte
/// Carlo acquisition and the MC oracles so both paths score identically.
double jacobian_criticality_value(const Matrix& j, BifKind kind) {
    if (kind == BifKind::HopfTrace) return j.trace();
    const CriticalityMode mode = criticality_mode(kind);
    Eigen::EigenSolver<Matrix> es(j);
    int best = 0;
    for (int k = 1; k < j.rows(); ++k)
        if (criticality_of(es.eigenvalues()[k], mode) <
            criticality_of(es.eigenvalues()[best], mode))
            best = k;
    const std::complex<double> lambda = es.eigenvalues()[best];
    switch (mode) {
        case CriticalityMode::HopfOde: return lambda.real();
        case CriticalityMode::NeimarkSacker: return std::norm(lambda) - 1.0;
        case CriticalityMode::FoldOde:
        case CriticalityMode::FoldMap: {
            const std::complex<double> mu =
                mode == CriticalityMode::FoldMap ? lambda - 1.0 : lambda;
            const bool real_eig = std::abs(lambda.imag()) <= 1e-9 * std::max(1.0, std::abs(lambda));
            return real_eig ? mu.real() : std::abs(mu);
        }
    }
    return 0.0;
}

struct SolvedBranch {
    NewtonResult root;
    std::optional<SteadyStateDist> dist;
};

SolvedBranch solve_branch_at(const TrainedSurrogate& gp, BifKind kind,
                             const ProblemGeometry& geom, double s, const WarmStart& warm) {
    const NewtonOptions opts = newton_options_for(kind);
    SolvedBranch out;
    if (!kind_uses_state_branch(kind)) {
        out.root = newton_solve(gp, warm.x, s, opts);
        if (out.root.ok())
            out.dist = steady_dist_fixed_param(gp, out.root.x, s, opts.map_mode);
    } else if (gp.state_dim == 1) {
        out.root = newton_solve_for_param(gp, s, warm.p, opts);
        if (out.root.ok())
            out.dist = steady_dist_fixed_state(gp, s, out.root.p, opts.map_mode);
    } else {
        const int bi = geom.branch.index;
        out.root = newton_solve_branch(gp, bi, s, warm.x, warm.p, opts);
        if (out.root.ok())
            out.dist = steady_dist_branch(gp, bi, out.root.x, out.root.p, opts.map_mode);
    }
    return out;
}

}  // namespace

namespace {

/// The closed-form propagation is a small-uncertainty asymptotic; once the
/// root distribution is wider than the search domain itself the numbers
/// are meaningless and the point must not compete in the argmin.
bool steady_dist_reliable(const SteadyStateDist& ss, const ProblemGeometry& geom) {
    const int n = static_cast<int>(ss.x.size());
    for (std::size_t k = 0; k < ss.free_idx.size(); ++k) {
        const int idx = ss.free_idx[k];
        const double width =
            idx < n ? geom.state_box.dims[idx].width() : geom.param_range.width();
        if (!(std::sqrt(std::max(ss.cov(k, k), 0.0)) <= width)) return false;
    }
    return true;
}

}  // namespace

AcquisitionEvaluation eval_acq(const TrainedSurrogate& gp, const AcquisitionSpec& spec,
                               const ProblemGeometry& geom, double s, const WarmStart& warm) {
    AcquisitionEvaluation ev;
    ev.location = s;

    SolvedBranch solved = solve_branch_at(gp, spec.kind, geom, s, warm);
    if (!solved.root.ok()) {
        ev.flags |= kAcqNewtonFailed;
        return ev;
    }
    const SteadyStateDist& ss = *solved.dist;
    if (!steady_dist_reliable(ss, geom)) {
        ev.flags |= kAcqUnreliable | kAcqNewtonFailed;
        return ev;
    }

    ScalarDist crit;
    if (spec.kind == BifKind::Fold1D ||
        (gp.state_dim == 1 && spec.kind == BifKind::FoldMap)) {
        crit = derivative_dist_1d(gp, s, ss);
        if (spec.kind == BifKind::FoldMap) crit.mean -= 1.0;
    } else if (spec.kind == BifKind::HopfTrace) {
        crit = trace_dist(jacobian_dist(gp, ss));
    } else {
        const EigenDist ed = eigen_dist(jacobian_dist(gp, ss), criticality_mode(spec.kind));
        crit = ed.value;
        if (ed.complex_fold) ev.flags |= kAcqComplexFold;
    }

    if (predict_std_gradient(gp, ss.x, ss.p).floored) ev.flags |= kAcqStdFloor;
    if (crit.clamped) ev.flags |= kAcqClamped;

    ev.objective = square_moments(crit);
    ev.lcb = ev.objective.mean - spec.beta * std::sqrt(std::max(ev.objective.variance, 0.0));
    ev.steady = ss;
    ev.criticality_mean = crit.mean;
    ev.criticality_variance = crit.variance;
    return ev;
}

MinimizeResult minimize_acq(const TrainedSurrogate& gp, const AcquisitionSpec& spec,
                            const ProblemGeometry& geom, const WarmStart& warm) {
    if (spec.candidate_grid.size() == 0)
        throw DimensionError("minimize_acq: empty candidate grid");

    MinimizeResult out;
    WarmStart chain = warm;
    auto evaluate = [&](double s, std::uint64_t tag) {
        if (spec.mc_samples > 0)
            return mc_acquisition(gp, spec, geom, s, chain, spec.mc_samples,
                                  derive_seed(spec.mc_seed, tag));
        return eval_acq(gp, spec, geom, s, chain);
    };

    int best_idx = -1;
    for (int i = 0; i < spec.candidate_grid.size(); ++i) {
        AcquisitionEvaluation ev = evaluate(spec.candidate_grid[i], static_cast<std::uint64_t>(i));
        if (ev.steady) chain = {ev.steady->x, ev.steady->p};
        if (!(ev.flags & kAcqNewtonFailed) &&
            (best_idx < 0 || ev.lcb < out.best.lcb)) {
            best_idx = i;
            out.best = std::move(ev);
        }
    }
    if (best_idx < 0) {
        out.status = MinimizeResult::Status::AllNewtonFailed;
        return out;
    }
    out.status = MinimizeResult::Status::Ok;
    out.location = out.best.location;

    if (spec.refine && spec.candidate_grid.size() > 1) {
        const int last = static_cast<int>(spec.candidate_grid.size()) - 1;
        double lo = spec.candidate_grid[std::max(best_idx - 1, 0)];
        double hi = spec.candidate_grid[std::min(best_idx + 1, last)];
        chain = {out.best.steady->x, out.best.steady->p};

        const double phi = 0.6180339887498949;
        double a = lo, b = hi;
        double x1 = b - phi * (b - a);
        double x2 = a + phi * (b - a);
        AcquisitionEvaluation e1 = evaluate(x1, 1000001);
        AcquisitionEvaluation e2 = evaluate(x2, 1000002);
        for (int it = 0; it < spec.refine_iters; ++it) {
            const double f1 = (e1.flags & kAcqNewtonFailed)
                                  ? std::numeric_limits<double>::infinity()
                                  : e1.lcb;
            const double f2 = (e2.flags & kAcqNewtonFailed)
                                  ? std::numeric_limits<double>::infinity()
                                  : e2.lcb;
            if (f1 <= f2) {
                b = x2;
                x2 = x1;
                e2 = e1;
                x1 = b - phi * (b - a);
                e1 = evaluate(x1, 1000003 + static_cast<std::uint64_t>(it));
            } else {
                a = x1;
                x1 = x2;
                e1 = e2;
                x2 = a + phi * (b - a);
                e2 = evaluate(x2, 1000003 + static_cast<std::uint64_t>(it));
            }
        }
        for (const auto* cand : {&e1, &e2}) {
            if (!(cand->flags & kAcqNewtonFailed) && cand->lcb < out.best.lcb) {
                out.best = *cand;
                out.location = cand->location;
            }
        }
    }
    return out;
}

std::pair<Vector, double> uncertainty_sampling(
    const TrainedSurrogate& gp, const std::vector<std::pair<Vector, double>>& grid) {
    if (grid.empty()) throw DimensionError("uncertainty_sampling: empty grid");
    std::size_t best = 0;
    double best_var = -1.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double total = predict(gp, grid[i].first, grid[i].second).variance.sum();
        if (total > best_var) {
            best_var = total;
            best = i;
        }
    }
    return grid[best];
}

std::vector<std::pair<Vector, double>> halton_grid(const ProblemGeometry& geom, int n_points) {
    static constexpr int primes[] = {2, 3, 5, 7, 11, 13, 17};
    const int d = geom.state_dim + 1;
    auto halton = [](int index, int base) {
        double f = 1.0, r = 0.0;
        int i = index;
        while (i > 0) {
            f /= base;
            r += f * (i % base);
            i /= base;
        }
        return r;
    };
    std::vector<std::pair<Vector, double>> out;
    out.reserve(n_points);
    for (int k = 0; k < n_points; ++k) {
        Vector x(geom.state_dim);
        for (int a = 0; a < geom.state_dim; ++a) {
            const Interval& iv = geom.state_box.dims[a];
            x[a] = iv.lo + iv.width() * halton(k + 1, primes[a % 7]);
        }
        const double p =
            geom.param_range.lo + geom.param_range.width() * halton(k + 1, primes[geom.state_dim % 7]);
        out.emplace_back(std::move(x), p);
    }
    return out;
}

AcquisitionEvaluation mc_acquisition(const TrainedSurrogate& gp, const AcquisitionSpec& spec,
                                     const ProblemGeometry& geom, double s, const WarmStart& warm,
                                     int n_samples, std::uint64_t seed) {
    if (n_samples < 2) throw DimensionError("mc_acquisition: need at least 2 samples");

    AcquisitionEvaluation ev;
    ev.location = s;
    SolvedBranch solved = solve_branch_at(gp, spec.kind, geom, s, warm);
    if (!solved.root.ok()) {
        ev.flags |= kAcqNewtonFailed;
        return ev;
    }
    const SteadyStateDist& ss = *solved.dist;
    if (!steady_dist_reliable(ss, geom)) {
        ev.flags |= kAcqUnreliable | kAcqNewtonFailed;
        return ev;
    }
    const int n = gp.state_dim;

    // Stencil spans the free solve coordinates plus the state directions
    // the Jacobian needs; for every kind that is free + states.
    std::vector<int> active;
    for (int a = 0; a < n; ++a) active.push_back(a);
    if (ss.param_free_position() >= 0) active.push_back(n);
    StencilSampler sampler(gp, ss.x, ss.p, active, geom.joint_widths());

    NewtonOptions nopt = newton_options_for(spec.kind);
    std::vector<double> values;
    values.reserve(n_samples);
    int failures = 0;
    for (int r = 0; r < n_samples; ++r) {
        const StencilRealization real = sampler.draw(derive_seed(seed, r));
        const NewtonResult root =
            newton_on_realization(real, gp, ss.free_idx, ss.x, ss.p, nopt);
        if (!root.ok()) {
            ++failures;
            continue;
        }
        Vector joint(n + 1);
        joint.head(n) = root.x;
        joint[n] = root.p;
        const Matrix j_state = real.jacobian(joint).leftCols(n);
        if (spec.kind == BifKind::Fold1D ||
            (n == 1 && spec.kind == BifKind::FoldMap)) {
            double c = j_state(0, 0);
            if (spec.kind == BifKind::FoldMap) c -= 1.0;
            values.push_back(c);
        } else {
            values.push_back(jacobian_criticality_value(j_state, spec.kind));
        }
    }
    if (failures * 2 > n_samples)
        throw McDegenerateError("mc_acquisition: " + std::to_string(failures) + " of " +
                                std::to_string(n_samples) + " realization solves failed");

    const int n_ok = static_cast<int>(values.size());
    double mean_c = 0.0, mean_sq = 0.0;
    for (double v : values) {
        mean_c += v;
        mean_sq += v * v;
    }
    mean_c /= n_ok;
    mean_sq /= n_ok;
    double var_c = 0.0, var_sq = 0.0;
    for (double v : values) {
        var_c += (v - mean_c) * (v - mean_c);
        var_sq += (v * v - mean_sq) * (v * v - mean_sq);
    }
    var_c /= std::max(n_ok - 1, 1);
    var_sq /= std::max(n_ok - 1, 1);

    ev.objective = {mean_sq, var_sq, false};
    ev.lcb = mean_sq - spec.beta * std::sqrt(var_sq);
    ev.steady = ss;
    ev.criticality_mean = mean_c;
    ev.criticality_variance = var_c;
    return ev;
}

}  // namespace bif
