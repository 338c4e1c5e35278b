#include "bif/bo.hpp"

#include <atomic>
#include <chrono>
#include <thread>

namespace bif {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::vector<std::pair<Vector, double>> latin_hypercube(const ProblemGeometry& geom, int n,
                                                       Rng& rng) {
    const int d = geom.state_dim + 1;
    std::vector<std::vector<int>> perms(d);
    for (int k = 0; k < d; ++k) {
        perms[k].resize(n);
        for (int i = 0; i < n; ++i) perms[k][i] = i;
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(rng.uniform_index(i + 1));
            std::swap(perms[k][i], perms[k][j]);
        }
    }
    std::vector<std::pair<Vector, double>> out;
    for (int i = 0; i < n; ++i) {
        Vector x(geom.state_dim);
        for (int k = 0; k < geom.state_dim; ++k) {
            const Interval& iv = geom.state_box.dims[k];
            x[k] = iv.lo + iv.width() * (perms[k][i] + rng.uniform()) / n;
        }
        const double p = geom.param_range.lo +
                         geom.param_range.width() * (perms[geom.state_dim][i] + rng.uniform()) / n;
        out.emplace_back(std::move(x), p);
    }
    return out;
}

std::vector<std::pair<Vector, double>> uniform_design(const ProblemGeometry& geom, int n,
                                                      Rng& rng) {
    std::vector<std::pair<Vector, double>> out;
    for (int i = 0; i < n; ++i) {
        Vector x(geom.state_dim);
        for (int k = 0; k < geom.state_dim; ++k)
            x[k] = rng.uniform(geom.state_box.dims[k].lo, geom.state_box.dims[k].hi);
        out.emplace_back(std::move(x), rng.uniform(geom.param_range.lo, geom.param_range.hi));
    }
    return out;
}

/// Square root of a PSD covariance via eigendecomposition with clipped
/// negative eigenvalues (the root covariance often sits near singular).
Matrix psd_sqrt(const Matrix& cov) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
    return es.eigenvectors() *
           es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
           es.eigenvectors().transpose();
}

struct SamplePoint {
    Vector x;
    double p;
    bool clamped = false;
};

/// Draws the new observation location from the steady-state distribution,
/// truncated to the search domain (up to 10 redraws, then clamp).
SamplePoint draw_sample_point(const SteadyStateDist& ss, const ProblemGeometry& geom,
                              RealizationSampling mode, double location, BifKind kind, Rng& rng) {
    SamplePoint out{ss.x, ss.p, false};
    if (mode == RealizationSampling::MeanOnly) return out;

    // Exploration floor on the drawn state coordinates: once the root
    // distribution collapses, raw draws stop informing the surrogate's
    // local Jacobian and the criticality estimate stalls. The parameter
    // coordinate is never floored (its draw is the bifurcation estimate).
    const int n_free = static_cast<int>(ss.free_idx.size());
    Matrix cov = ss.cov;
    for (int k = 0; k < n_free; ++k) {
        const int idx = ss.free_idx[k];
        if (idx >= static_cast<int>(ss.x.size())) continue;
        const double floor = 0.02 * geom.state_box.dims[idx].width();
        cov(k, k) += floor * floor;
    }
    const Matrix sqrt_cov = psd_sqrt(cov);
    const int n = static_cast<int>(ss.x.size());
    for (int attempt = 0; attempt < 10; ++attempt) {
        const Vector draw = ss.mean_free + sqrt_cov * rng.normal_vector(n_free);
        Vector x = ss.x;
        double p = ss.p;
        bool inside = true;
        for (int k = 0; k < n_free; ++k) {
            const int idx = ss.free_idx[k];
            if (idx < n) {
                x[idx] = draw[k];
                inside = inside && geom.state_box.dims[idx].contains(draw[k]);
            } else {
                p = draw[k];
                inside = inside && geom.param_range.contains(draw[k]);
            }
        }
        out.x = x;
        out.p = p;
        if (inside) return out;
    }
    out.x = geom.state_box.clamp(out.x);
    out.p = geom.param_range.clamp(out.p);
    // Pin the branch coordinate: the draw only moves the free coordinates.
    if (kind_uses_state_branch(kind) && geom.branch.is_state())
        out.x[geom.branch.index] = location;
    out.clamped = true;
    return out;
}

}  // namespace

void BOConfig::validate() const {
    system.validate();
    if (budget < 1) throw DimensionError("BOConfig: budget must be >= 1");
    if (!(conv_tol > 0.0)) throw DimensionError("BOConfig: conv_tol must be > 0");
    if (n_initial < 2) throw DimensionError("BOConfig: n_initial must be >= 2");
    if (mc_samples != 0 && mc_samples < 2)
        throw DimensionError("BOConfig: mc_samples must be 0 (analytic) or >= 2");
    if (noise_sigma < 0.0) throw DimensionError("BOConfig: noise_sigma must be >= 0");
    const bool state_branch = kind_uses_state_branch(bif_kind);
    if (state_branch && !system.branch_variable.is_state())
        throw DimensionError("BOConfig: fold/map kinds need a state branch variable");
    if (!state_branch && system.branch_variable.is_state())
        throw DimensionError("BOConfig: Hopf kinds need the parameter as branch variable");
    if (bif_kind == BifKind::Fold1D && system.state_dim != 1)
        throw DimensionError("BOConfig: Fold1D requires a 1D system");
    if (bif_kind == BifKind::FoldND && system.state_dim < 2)
        throw DimensionError("BOConfig: FoldND requires n >= 2");
    if (initial_design == InitialDesign::Fixed &&
        static_cast<int>(fixed_design.size()) != n_initial)
        throw DimensionError("BOConfig: fixed design size must equal n_initial");
}

BOTrace run_bo(const BOConfig& config) {
    config.validate();
    const SystemSpec& sys = config.system;
    const ProblemGeometry geom = ProblemGeometry::from_spec(sys);

    Rng design_rng(derive_seed(config.seed, 1));
    Rng obs_rng(derive_seed(config.seed, 2));
    Rng draw_rng(derive_seed(config.seed, 3));

    BOTrace trace;
    ObservationDataset data;
    data.state_dim = sys.state_dim;
    data.noise_sigma = config.noise_sigma;

    std::vector<std::pair<Vector, double>> design;
    switch (config.initial_design) {
        case InitialDesign::LatinHypercube:
            design = latin_hypercube(geom, config.n_initial, design_rng);
            break;
        case InitialDesign::UniformRandom:
            design = uniform_design(geom, config.n_initial, design_rng);
            break;
        case InitialDesign::Fixed: design = config.fixed_design; break;
    }
    for (const auto& [x, p] : design) {
        Observation obs = observe(sys, x, p, config.noise_sigma, obs_rng);
        trace.initial_design.push_back(obs);
        data.add(std::move(obs));
    }

    Vector x_old = design.back().first;
    double p_old = design.back().second;
    double delta = std::numeric_limits<double>::infinity();

    // Warm start: dataset point with the smallest observed |g|.
    WarmStart warm;
    {
        int best = 0;
        for (int i = 1; i < data.size(); ++i)
            if (data.observations[i].value.norm() < data.observations[best].value.norm())
                best = i;
        warm.x = data.observations[best].state;
        warm.p = data.observations[best].param;
    }

    const Interval branch_range = kind_uses_state_branch(config.bif_kind)
                                      ? sys.state_box.dims[sys.branch_variable.index]
                                      : sys.bif_param_range;

    int iter = 0;
    try {
        while (iter < config.budget && (iter < config.min_iterations || delta > config.conv_tol)) {
            const auto t_iter = Clock::now();
            BOIterationRecord rec;
            rec.index = iter + 1;

            FitOptions fit_opts = config.fit;
            fit_opts.seed = derive_seed(config.seed, 100 + iter);
            TrainedSurrogate gp = fit(data, fit_opts);

            AcquisitionSpec acq;
            acq.kind = config.bif_kind;
            acq.beta = config.beta;
            acq.candidate_grid = linspace(branch_range.lo, branch_range.hi, config.grid_size);
            acq.refine = config.refine;
            acq.mc_samples = config.mc_samples;
            acq.mc_seed = derive_seed(config.seed, 5000 + iter);

            const auto t_acq = Clock::now();
            const MinimizeResult min_res = minimize_acq(gp, acq, geom, warm);
            rec.acq_wall_ms = ms_since(t_acq);

            Vector x_new;
            double p_new = 0.0;
            if (min_res.status == MinimizeResult::Status::AllNewtonFailed) {
                const auto grid = halton_grid(geom, 512);
                auto [xu, pu] = uncertainty_sampling(gp, grid);
                x_new = xu;
                p_new = pu;
                rec.fallback_used = true;
                rec.acq_flags = kAcqNewtonFailed;
                rec.lcb = std::numeric_limits<double>::infinity();
                rec.criticality_mean = std::numeric_limits<double>::quiet_NaN();
                rec.criticality_variance = std::numeric_limits<double>::quiet_NaN();
            } else {
                const AcquisitionEvaluation& ev = min_res.best;
                SamplePoint pt = draw_sample_point(*ev.steady, geom, config.realization_sampling,
                                                   min_res.location, config.bif_kind, draw_rng);
                x_new = pt.x;
                p_new = pt.p;
                rec.acq_flags = ev.flags | (pt.clamped ? kAcqClamped : 0u);
                rec.lcb = ev.lcb;
                rec.criticality_mean = ev.criticality_mean;
                rec.criticality_variance = ev.criticality_variance;
                warm = {ev.steady->x, ev.steady->p};
            }

            Observation obs = observe(sys, x_new, p_new, config.noise_sigma, obs_rng);
            rec.x = x_new;
            rec.p = p_new;
            rec.observed = obs.value;
            data.add(std::move(obs));

            delta = std::sqrt((p_new - p_old) * (p_new - p_old) + (x_new - x_old).squaredNorm());
            rec.delta = delta;
            x_old = x_new;
            p_old = p_new;

            rec.wall_ms = ms_since(t_iter);
            trace.iterations.push_back(std::move(rec));
            ++iter;
        }
    } catch (const std::exception& e) {
        trace.failed = true;
        trace.failure_message = e.what();
        return trace;
    }

    trace.result.x_b = x_old;
    trace.result.p_b = p_old;
    trace.result.converged = delta <= config.conv_tol;
    trace.result.iterations_used = iter;
    if (!trace.iterations.empty()) {
        trace.result.criticality_mean = trace.iterations.back().criticality_mean;
        trace.result.criticality_variance = trace.iterations.back().criticality_variance;
    }
    return trace;
}

std::vector<std::uint64_t> derive_run_seeds(std::uint64_t master, int n_runs) {
    std::vector<std::uint64_t> seeds(n_runs);
    for (int r = 0; r < n_runs; ++r) seeds[r] = derive_seed(master, 0xE000 + r);
    return seeds;
}

EnsembleSummary run_ensemble(const BOConfig& config, int n_runs,
                             const std::vector<std::uint64_t>& seeds,
                             std::optional<double> p_reference, int jobs) {
    if (static_cast<int>(seeds.size()) != n_runs)
        throw DimensionError("run_ensemble: seeds size must equal n_runs");
    for (std::size_t i = 0; i < seeds.size(); ++i)
        for (std::size_t j = i + 1; j < seeds.size(); ++j)
            if (seeds[i] == seeds[j]) throw DimensionError("run_ensemble: seeds must be distinct");

    EnsembleSummary out;
    out.seeds = seeds;
    out.traces.resize(n_runs);

    std::atomic<int> next{0};
    auto worker = [&] {
        for (;;) {
            const int r = next.fetch_add(1);
            if (r >= n_runs) return;
            BOConfig run_cfg = config;
            run_cfg.seed = seeds[r];
            out.traces[r] = run_bo(run_cfg);
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (const auto& tr : out.traces)
        if (tr.failed) ++out.n_failed;
    if (out.n_failed == n_runs)
        throw NumericsError("run_ensemble: every run failed (" +
                            out.traces.front().failure_message + ")");

    if (p_reference) {
        auto quantile = [](std::vector<double> v, double q) {
            std::sort(v.begin(), v.end());
            const double pos = q * (v.size() - 1);
            const std::size_t lo = static_cast<std::size_t>(pos);
            const std::size_t hi = std::min(lo + 1, v.size() - 1);
            return v[lo] + (pos - lo) * (v[hi] - v[lo]);
        };
        std::vector<double> finals;
        for (int t = 1; t <= config.budget; ++t) {
            std::vector<double> errs;
            for (const auto& tr : out.traces) {
                if (tr.failed || tr.iterations.empty()) continue;
                const int idx = std::min<int>(t, static_cast<int>(tr.iterations.size())) - 1;
                errs.push_back(std::abs(tr.iterations[idx].p - *p_reference));
            }
            if (errs.empty()) break;
            out.median_abs_err.push_back(quantile(errs, 0.5));
            out.q25_abs_err.push_back(quantile(errs, 0.25));
            out.q75_abs_err.push_back(quantile(errs, 0.75));
        }
        for (const auto& tr : out.traces)
            if (!tr.failed && !tr.iterations.empty())
                finals.push_back(std::abs(tr.result.p_b - *p_reference));
        if (!finals.empty()) out.median_final_abs_err = quantile(finals, 0.5);
    }
    return out;
}

}  // namespace bif
