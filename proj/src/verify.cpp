#include "bif/verify.hpp"

#include <atomic>
#include <cstdio>
#include <thread>

#include "bif/acquisition.hpp"
#include "bif/realization.hpp"

namespace bif {

namespace {

constexpr std::uint64_t kSuiteSeed = 0xACCE57ULL;

// --- synthetic fitted instances -------------------------------------------

struct Instance2D {
    TrainedSurrogate gp;
    Vector x_root;  // root of the predictive mean at p0
    double p0 = 0.0;
};

/// True field with root path x*(p) = c + d (p - p0), Jacobian A at the
/// root; fit a GP to noisy samples and Newton to the mean root.
Instance2D make_instance_2d(std::uint64_t seed, bool complex_pair) {
    Rng rng(seed);
    Matrix a(2, 2);
    if (complex_pair) {
        const double alpha = rng.uniform(-0.4, 0.4);
        const double omega = rng.uniform(0.8, 1.6);
        Matrix t(2, 2);
        t << 1.0, rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 1.0;
        Matrix a0(2, 2);
        a0 << alpha, -omega, omega, alpha;
        a = t * a0 * t.inverse();
    } else {
        a << rng.uniform(0.8, 1.6), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
            rng.uniform(-1.6, -0.8);
    }
    Vector c = rng.normal_vector(2) * 0.2;
    Vector d = rng.normal_vector(2) * 0.3;
    Matrix quad(2, 2);
    quad << rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
        rng.uniform(-0.3, 0.3);
    const double p0 = rng.uniform(-0.2, 0.2);

    auto field = [&](const Vector& x, double p) -> Vector {
        const Vector dx = x - (c + d * (p - p0));
        return a * dx + quad * dx.cwiseProduct(dx);
    };

    const double sigma_obs = 5e-3;
    ObservationDataset data;
    data.state_dim = 2;
    data.noise_sigma = sigma_obs;
    for (int i = 0; i < 42; ++i) {
        Observation obs;
        obs.state = c + Vector{{rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8)}};
        obs.param = p0 + rng.uniform(-0.5, 0.5);
        obs.value = field(obs.state, obs.param);
        for (int k = 0; k < 2; ++k) obs.value[k] += sigma_obs * rng.normal();
        obs.noise_sigma = sigma_obs;
        data.add(std::move(obs));
    }
    FitOptions fo;
    fo.seed = derive_seed(seed, 77);
    Instance2D inst;
    inst.gp = fit(data, fo);
    inst.p0 = p0;
    const NewtonResult root = newton_solve(inst.gp, c, p0);
    if (!root.ok()) throw NumericsError("make_instance_2d: mean root solve failed");
    inst.x_root = root.x;
    return inst;
}

struct Instance1D {
    TrainedSurrogate gp;
    double x_fix = 0.0;
    double p_root = 0.0;
};

/// 1D field u(x) - v(p) with v strictly increasing, so every fixed x has a
/// unique root in p.
Instance1D make_instance_1d(std::uint64_t seed) {
    Rng rng(seed);
    const double c1 = rng.uniform(-1.0, 1.0);
    const double c2 = rng.uniform(-0.8, 0.8);
    const double c3 = rng.uniform(-0.5, 0.5);
    const double slope = rng.uniform(0.7, 1.5);
    auto field = [&](double x, double p) {
        return c1 * x + c2 * x * x + c3 * x * x * x - slope * p - 0.2 * std::sin(p);
    };
    const double sigma_obs = 5e-3;
    ObservationDataset data;
    data.state_dim = 1;
    data.noise_sigma = sigma_obs;
    for (int i = 0; i < 30; ++i) {
        Observation obs;
        obs.state = Vector::Constant(1, rng.uniform(-1.0, 1.0));
        obs.param = rng.uniform(-1.0, 1.0);
        obs.value =
            Vector::Constant(1, field(obs.state[0], obs.param) + sigma_obs * rng.normal());
        obs.noise_sigma = sigma_obs;
        data.add(std::move(obs));
    }
    FitOptions fo;
    fo.seed = derive_seed(seed, 78);
    Instance1D inst;
    inst.gp = fit(data, fo);
    inst.x_fix = rng.uniform(-0.4, 0.4);
    const NewtonResult root = newton_solve_for_param(inst.gp, inst.x_fix, 0.0);
    if (!root.ok()) throw NumericsError("make_instance_1d: parameter root solve failed");
    inst.p_root = root.p;
    return inst;
}

std::vector<double> default_widths(int n) { return std::vector<double>(n + 1, 4.0); }

/// Realization pass shared by the steady-state / Jacobian / trace oracles:
/// roots and state Jacobians of R stencil realizations.
struct RealizationStats {
    Matrix roots;               // n_ok x n_free
    std::vector<Matrix> jacobians;  // state Jacobians at the roots
    int failures = 0;
};

RealizationStats realization_pass(const TrainedSurrogate& gp, const SteadyStateDist& ss,
                                  int n_samples, std::uint64_t seed) {
    const int n = gp.state_dim;
    std::vector<int> active;
    for (int k = 0; k < n; ++k) active.push_back(k);
    if (ss.param_free_position() >= 0) active.push_back(n);
    StencilOptions sopt;
    sopt.step_fraction = 0.35;
    StencilSampler sampler(gp, ss.x, ss.p, active, default_widths(n), sopt);

    RealizationStats out;
    const int m = static_cast<int>(ss.free_idx.size());
    out.roots.resize(n_samples, m);
    int ok = 0;
    for (int r = 0; r < n_samples; ++r) {
        const StencilRealization real = sampler.draw(derive_seed(seed, r));
        const NewtonResult root = newton_on_realization(real, gp, ss.free_idx, ss.x, ss.p);
        if (!root.ok()) {
            ++out.failures;
            continue;
        }
        Vector joint(n + 1);
        joint.head(n) = root.x;
        joint[n] = root.p;
        for (int k = 0; k < m; ++k)
            out.roots(ok, k) = ss.free_idx[k] < n ? root.x[ss.free_idx[k]] : root.p;
        out.jacobians.push_back(real.jacobian(joint).leftCols(n));
        ++ok;
    }
    out.roots.conservativeResize(ok, m);
    return out;
}

Matrix empirical_cov(const Matrix& samples) {
    const Vector mean = samples.colwise().mean();
    Matrix centered = samples.rowwise() - mean.transpose();
    return centered.transpose() * centered / (samples.rows() - 1);
}

PropertyResult bounded(const std::string& name, double measured, double bound,
                       const std::string& detail = "") {
    PropertyResult out;
    out.name = name;
    out.measured = measured;
    out.bound = bound;
    out.passed = measured < bound;
    out.detail = detail;
    return out;
}

// --- individual properties --------------------------------------------------

PropertyResult property_square_moments() {
    Rng rng(derive_seed(kSuiteSeed, 1));
    double worst = 0.0;
    for (int i = 0; i < 20; ++i) {
        ScalarDist d{rng.uniform(-3.0, 3.0), rng.uniform(0.01, 4.0), false};
        const ScalarDist sq = square_moments(d);
        const int n = 1000000;
        double m = 0.0, m2 = 0.0;
        Rng draw(derive_seed(kSuiteSeed, 100 + i));
        const double sd = std::sqrt(d.variance);
        std::vector<double> xs(n);
        for (int k = 0; k < n; ++k) {
            const double x = d.mean + sd * draw.normal();
            xs[k] = x * x;
            m += xs[k];
        }
        m /= n;
        for (int k = 0; k < n; ++k) m2 += (xs[k] - m) * (xs[k] - m);
        m2 /= (n - 1);
        // Standard errors of the sample mean and sample variance.
        const double se_mean = std::sqrt(m2 / n);
        const double fourth = 3.0 * m2 * m2;  // rough; only sets the scale
        const double se_var = std::sqrt((fourth + 2.0 * m2 * m2) / n);
        worst = std::max(worst, std::abs(sq.mean - m) / (3.0 * se_mean));
        worst = std::max(worst, std::abs(sq.variance - m2) / (3.0 * se_var));
    }
    return bounded("square-moments", worst, 1.0, "worst |analytic-MC| / (3 SE)");
}

PropertyResult property_steady_fixed_param() {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        Instance2D inst = make_instance_2d(derive_seed(kSuiteSeed, 200 + i), i % 2 == 0);
        const SteadyStateDist ss = steady_dist_fixed_param(inst.gp, inst.x_root, inst.p0);
        RealizationStats stats =
            realization_pass(inst.gp, ss, 10000, derive_seed(kSuiteSeed, 300 + i));
        const Matrix emp = empirical_cov(stats.roots);
        worst = std::max(worst, (emp - ss.cov).norm() / ss.cov.norm());
    }
    return bounded("steady-state-fixed-param", worst, 0.15, "rel Frobenius, 10 instances");
}

PropertyResult property_steady_fixed_state() {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        Instance1D inst = make_instance_1d(derive_seed(kSuiteSeed, 400 + i));
        const SteadyStateDist ss =
            steady_dist_fixed_state(inst.gp, inst.x_fix, inst.p_root);
        RealizationStats stats =
            realization_pass(inst.gp, ss, 10000, derive_seed(kSuiteSeed, 500 + i));
        const double emp = empirical_cov(stats.roots)(0, 0);
        worst = std::max(worst, std::abs(emp - ss.param_variance()) / ss.param_variance());
    }
    return bounded("steady-state-fixed-state", worst, 0.15, "rel variance, 10 instances");
}

double derivative_variance_mutant(const TrainedSurrogate& gp, double x,
                                  const SteadyStateDist& ss) {
    // Deliberate sign flip of the bracket coupling; the oracle must reject it.
    const Vector xv = Vector::Constant(1, x);
    const double dfdp = ss.root_jacobian(0, 0);
    const double mixed = predict_mean_mixed_second(gp, xv, ss.p)[0](0, 1);
    const double dsdx = predict_std_gradient(gp, xv, ss.p).grad(0, 0);
    const double sigma_star = std::sqrt(std::max(ss.cov(0, 0), 0.0));
    const double sgn = dfdp >= 0.0 ? 1.0 : -1.0;
    const double bracket = mixed * sigma_star + sgn * dsdx;
    return bracket * bracket;
}

PropertyResult property_derivative_1d(bool mutated = false) {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        Instance1D inst = make_instance_1d(derive_seed(kSuiteSeed, 600 + i));
        const SteadyStateDist ss =
            steady_dist_fixed_state(inst.gp, inst.x_fix, inst.p_root);
        const ScalarDist d = derivative_dist_1d(inst.gp, inst.x_fix, ss);
        const double analytic_var =
            mutated ? derivative_variance_mutant(inst.gp, inst.x_fix, ss) : d.variance;

        RealizationStats stats =
            realization_pass(inst.gp, ss, 10000, derive_seed(kSuiteSeed, 700 + i));
        double mean = 0.0;
        std::vector<double> ds;
        for (const auto& j : stats.jacobians) ds.push_back(j(0, 0));
        for (double v : ds) mean += v;
        mean /= ds.size();
        double var = 0.0;
        for (double v : ds) var += (v - mean) * (v - mean);
        var /= (ds.size() - 1);

        worst = std::max(worst, std::abs(mean - d.mean) /
                                    std::max(std::abs(d.mean), 10.0 * std::sqrt(var)));
        worst = std::max(worst, std::abs(var - analytic_var) / var);
    }
    return bounded(mutated ? "derivative-1d-mutant" : "derivative-1d", worst, 0.15,
                   "rel mean/variance, 10 instances");
}

PropertyResult property_jacobian_cov4() {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        Instance2D inst = make_instance_2d(derive_seed(kSuiteSeed, 800 + i), i % 2 == 1);
        const SteadyStateDist ss = steady_dist_fixed_param(inst.gp, inst.x_root, inst.p0);
        const JacobianDist jd = jacobian_dist(inst.gp, ss);
        RealizationStats stats =
            realization_pass(inst.gp, ss, 10000, derive_seed(kSuiteSeed, 900 + i));
        const int n = 2;
        Matrix flat(stats.jacobians.size(), n * n);
        for (std::size_t r = 0; r < stats.jacobians.size(); ++r)
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) flat(r, a * n + b) = stats.jacobians[r](a, b);
        const Matrix emp = empirical_cov(flat);
        worst = std::max(worst, (emp - jd.cov4).norm() / jd.cov4.norm());
    }
    return bounded("jacobian-cov4", worst, 0.20, "rel Frobenius, 10 instances");
}

PropertyResult property_eigen_re() {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        const bool complex_pair = i % 2 == 0;
        Instance2D inst = make_instance_2d(derive_seed(kSuiteSeed, 1000 + i), complex_pair);
        const SteadyStateDist ss = steady_dist_fixed_param(inst.gp, inst.x_root, inst.p0);
        const JacobianDist jd = jacobian_dist(inst.gp, ss);
        const CriticalityMode mode =
            complex_pair ? CriticalityMode::HopfOde : CriticalityMode::FoldOde;
        const EigenDist ed = eigen_dist(jd, mode);

        // Oracle: perturb J_mean with draws from cov4 and re-select the
        // tracked eigenvalue each draw.
        Eigen::SelfAdjointEigenSolver<Matrix> es(jd.cov4);
        const Matrix sqrt_cov =
            es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
        Rng rng(derive_seed(kSuiteSeed, 1100 + i));
        const int n = jd.n();
        const int n_draws = 100000;
        double mean = 0.0;
        std::vector<double> vals(n_draws);
        for (int r = 0; r < n_draws; ++r) {
            const Vector dj = sqrt_cov * rng.normal_vector(n * n);
            Matrix j = jd.mean;
            for (int a = 0; a < n; ++a)
                for (int b = 0; b < n; ++b) j(a, b) += dj[a * n + b];
            Eigen::EigenSolver<Matrix> esd(j);
            int best = 0;
            for (int k = 1; k < n; ++k)
                if (criticality_of(esd.eigenvalues()[k], mode) <
                    criticality_of(esd.eigenvalues()[best], mode))
                    best = k;
            const auto lam = esd.eigenvalues()[best];
            vals[r] = mode == CriticalityMode::HopfOde
                          ? lam.real()
                          : (std::abs(lam.imag()) < 1e-9 ? lam.real() : std::abs(lam));
            mean += vals[r];
        }
        mean /= n_draws;
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        var /= (n_draws - 1);
        worst = std::max(worst, std::abs(var - ed.value.variance) / var);
    }
    return bounded("eigen-re-variance", worst, 0.10, "rel variance, 10 instances");
}

PropertyResult property_trace() {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        Instance2D inst = make_instance_2d(derive_seed(kSuiteSeed, 1200 + i), true);
        const SteadyStateDist ss = steady_dist_fixed_param(inst.gp, inst.x_root, inst.p0);
        const JacobianDist jd = jacobian_dist(inst.gp, ss);
        const ScalarDist td = trace_dist(jd);
        RealizationStats stats =
            realization_pass(inst.gp, ss, 10000, derive_seed(kSuiteSeed, 1300 + i));
        double mean = 0.0;
        std::vector<double> ts;
        for (const auto& j : stats.jacobians) ts.push_back(j.trace());
        for (double v : ts) mean += v;
        mean /= ts.size();
        double var = 0.0;
        for (double v : ts) var += (v - mean) * (v - mean);
        var /= (ts.size() - 1);
        worst = std::max(worst, std::abs(var - td.variance) / var);
    }
    return bounded("trace-variance", worst, 0.10, "rel variance, 10 instances");
}

PropertyResult property_acq_agreement() {
    double worst = 0.0;
    for (int i = 0; i < 10; ++i) {
        const bool hopf = i % 2 == 0;
        Instance2D inst = make_instance_2d(derive_seed(kSuiteSeed, 1400 + i), hopf);
        ProblemGeometry geom;
        geom.state_dim = 2;
        geom.branch = hopf ? BranchVariable::parameter() : BranchVariable::state(0);
        geom.state_box = {{{-3.0, 3.0}, {-3.0, 3.0}}};
        geom.param_range = {-1.5, 1.5};
        AcquisitionSpec spec;
        spec.kind = hopf ? BifKind::HopfEig : BifKind::FoldND;
        spec.beta = 0.0;
        WarmStart warm{inst.x_root, inst.p0};
        const double s = hopf ? inst.p0 : inst.x_root[0];

        const AcquisitionEvaluation analytic = eval_acq(inst.gp, spec, geom, s, warm);
        const int n_mc = 10000;
        const AcquisitionEvaluation mc = mc_acquisition(inst.gp, spec, geom, s, warm, n_mc,
                                                        derive_seed(kSuiteSeed, 1500 + i));
        // Mean agreement in MC standard errors; variance via bootstrap scale.
        const double se_mean = std::sqrt(mc.objective.variance / n_mc);
        worst = std::max(worst, std::abs(analytic.objective.mean - mc.objective.mean) /
                                    (3.0 * se_mean));
        const double se_var = mc.objective.variance * std::sqrt(2.0 / n_mc) *
                              3.0;  // ~3 SE of a variance estimate
        worst = std::max(worst,
                         std::abs(analytic.objective.variance - mc.objective.variance) /
                             (3.0 * se_var));
    }
    return bounded("acquisition-mc-agreement", worst, 1.0, "worst gap / (3 SE), 10 instances");
}

PropertyResult property_gp_derivatives_fd() {
    double worst = 0.0;
    Rng rng(derive_seed(kSuiteSeed, 1600));
    for (int i = 0; i < 100; ++i) {
        const int n = 1 + static_cast<int>(rng.uniform_index(2));
        const int n_obs = 6 + static_cast<int>(rng.uniform_index(18));
        ObservationDataset data;
        data.state_dim = n;
        data.noise_sigma = 1e-3;
        for (int k = 0; k < n_obs; ++k) {
            Observation obs;
            obs.state = rng.normal_vector(n);
            obs.param = rng.normal();
            obs.value = rng.normal_vector(n);
            obs.noise_sigma = data.noise_sigma;
            data.add(std::move(obs));
        }
        FitOptions fo;
        fo.seed = derive_seed(kSuiteSeed, 1700 + i);
        fo.n_starts = 2;
        fo.max_iters = 60;
        const TrainedSurrogate gp = fit(data, fo);

        const Vector x = rng.normal_vector(n) * 0.5;
        const double p = 0.5 * rng.normal();
        auto tol = [](double v) { return std::max(1e-5, 1e-3 * std::abs(v)); };

        const Matrix jac = predict_mean_jacobian(gp, x, p);
        const auto second = predict_mean_mixed_second(gp, x, p);
        const StdGradient sg = predict_std_gradient(gp, x, p);

        auto score = [&](double analytic, double fd) {
            worst = std::max(worst, std::abs(analytic - fd) / tol(fd));
        };
        for (int a = 0; a < n + 1; ++a) {
            const double h1 = 1e-5;
            Vector xp = x, xm = x;
            double pp = p, pm = p;
            if (a < n) {
                xp[a] += h1;
                xm[a] -= h1;
            } else {
                pp += h1;
                pm -= h1;
            }
            const PredictiveDist fp = predict(gp, xp, pp);
            const PredictiveDist fm = predict(gp, xm, pm);
            for (int c = 0; c < n; ++c) {
                score(jac(c, a), (fp.mean[c] - fm.mean[c]) / (2.0 * h1));
                if (fp.std()[c] > 1e-10 && fm.std()[c] > 1e-10)
                    score(sg.grad(c, a), (fp.std()[c] - fm.std()[c]) / (2.0 * h1));
            }
            // Mixed second derivatives against FD of the analytic gradient.
            const double h2 = 1e-4;
            xp = xm = x;
            pp = pm = p;
            if (a < n) {
                xp[a] += h2;
                xm[a] -= h2;
            } else {
                pp += h2;
                pm -= h2;
            }
            const Matrix jp = predict_mean_jacobian(gp, xp, pp);
            const Matrix jm = predict_mean_jacobian(gp, xm, pm);
            for (int c = 0; c < n; ++c)
                for (int b = 0; b < n + 1; ++b)
                    score(second[c](a, b), (jp(c, b) - jm(c, b)) / (2.0 * h2));
        }
    }
    return bounded("gp-derivatives-fd", worst, 1.0,
                   "worst gap / max(1e-5, 1e-3 |value|), 100 instances");
}

PropertyResult property_mutation() {
    const PropertyResult correct = property_derivative_1d(false);
    const PropertyResult mutant = property_derivative_1d(true);
    PropertyResult out;
    out.name = "mutation-derivative-sign";
    out.passed = correct.passed && !mutant.passed;
    out.measured = mutant.measured;
    out.bound = mutant.bound;
    out.detail = "sign-flipped variance bracket must fail the oracle (correct=" +
                 std::string(correct.passed ? "pass" : "FAIL") + ", mutant measured " +
                 std::to_string(mutant.measured) + ")";
    return out;
}

}  // namespace

std::vector<VerifyProperty> verify_suite(const std::string& filter) {
    std::vector<VerifyProperty> all = {
        {"square-moments", property_square_moments},
        {"steady-state-fixed-param", property_steady_fixed_param},
        {"steady-state-fixed-state", property_steady_fixed_state},
        {"derivative-1d", [] { return property_derivative_1d(false); }},
        {"jacobian-cov4", property_jacobian_cov4},
        {"eigen-re-variance", property_eigen_re},
        {"trace-variance", property_trace},
        {"acquisition-mc-agreement", property_acq_agreement},
        {"gp-derivatives-fd", property_gp_derivatives_fd},
        {"mutation-derivative-sign", property_mutation},
    };
    if (filter.empty()) return all;
    std::vector<VerifyProperty> kept;
    for (auto& p : all)
        if (p.name.find(filter) != std::string::npos) kept.push_back(std::move(p));
    return kept;
}

int run_verify(const std::string& filter, int jobs, bool quiet,
               std::vector<PropertyResult>* results) {
    std::vector<VerifyProperty> suite = verify_suite(filter);
    if (suite.empty()) {
        std::fprintf(stderr, "verify: no properties match filter '%s'\n", filter.c_str());
        return 1;
    }
    std::vector<PropertyResult> res(suite.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= suite.size()) return;
            try {
                res[i] = suite[i].run();
            } catch (const std::exception& e) {
                res[i].name = suite[i].name;
                res[i].passed = false;
                res[i].detail = std::string("exception: ") + e.what();
            }
        }
    };
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    int failures = 0;
    for (const auto& r : res) {
        if (!r.passed) ++failures;
        if (!quiet)
            std::printf("[%s] %-28s measured %.4g  bound %.4g  %s\n", r.passed ? "PASS" : "FAIL",
                        r.name.c_str(), r.measured, r.bound, r.detail.c_str());
    }
    if (results) *results = res;
    return failures == 0 ? 0 : 1;
}

}  // namespace bif
