#include "bif/systems.hpp"

#include <algorithm>
#include <cmath>

namespace bif {

void SystemSpec::validate() const {
    const int expected = [&] {
        switch (id) {
            case SystemId::Budworm: return 1;
            case SystemId::Brusselator: return 2;
            case SystemId::Cstr: return 2;
            case SystemId::Epileptor: return 4;
            case SystemId::FhnPodReduced: return 4;
        }
        return 0;
    }();
    if (state_dim != expected)
        throw DimensionError("SystemSpec: state_dim " + std::to_string(state_dim) +
                             " does not match system " + to_string(id));
    if (!(bif_param_range.width() > 0.0))
        throw DimensionError("SystemSpec: empty bif_param_range");
    if (state_box.size() != state_dim)
        throw DimensionError("SystemSpec: state_box must have exactly state_dim intervals");
    if (branch_variable.is_state() &&
        (branch_variable.index < 0 || branch_variable.index >= state_dim))
        throw DimensionError("SystemSpec: branch state index out of range");
    if (id == SystemId::FhnPodReduced && !pod)
        throw DimensionError("SystemSpec: FhnPodReduced requires a PodModel");
}

double SystemSpec::fixed(const std::string& name) const {
    auto it = fixed_params.find(name);
    if (it == fixed_params.end())
        throw DimensionError("SystemSpec: missing fixed parameter '" + name + "'");
    return it->second;
}

void ObservationDataset::add(Observation obs) {
    if (obs.state.size() != state_dim || obs.value.size() != state_dim)
        throw DimensionError("ObservationDataset: observation dimension mismatch");
    observations.push_back(std::move(obs));
}

Matrix ObservationDataset::inputs() const {
    Matrix in(size(), state_dim + 1);
    for (int i = 0; i < size(); ++i) {
        in.row(i).head(state_dim) = observations[i].state.transpose();
        in(i, state_dim) = observations[i].param;
    }
    return in;
}

Matrix ObservationDataset::targets() const {
    Matrix t(size(), state_dim);
    for (int i = 0; i < size(); ++i) t.row(i) = observations[i].value.transpose();
    return t;
}

Vector FhnGrid::rhs(const Vector& y, double eps) const {
    const int m = nodes;
    if (y.size() != 2 * m) throw DimensionError("FhnGrid::rhs: state dimension mismatch");
    const auto u = y.head(m);
    const auto v = y.tail(m);
    Vector out(2 * m);
    const double inv_dx2 = 1.0 / (dx * dx);
    auto lap = [&](const auto& w, int i) {
        if (i == 0) return 2.0 * (w[1] - w[0]) * inv_dx2;
        if (i == m - 1) return 2.0 * (w[m - 2] - w[m - 1]) * inv_dx2;
        return (w[i + 1] - 2.0 * w[i] + w[i - 1]) * inv_dx2;
    };
    for (int i = 0; i < m; ++i) {
        out[i] = du * lap(u, i) + u[i] - u[i] * u[i] * u[i] - v[i];
        out[m + i] = dv * lap(v, i) + eps * (u[i] - alpha1 * v[i] - alpha0);
    }
    return out;
}

Matrix FhnGrid::jacobian(const Vector& y, double eps) const {
    const int m = nodes;
    Matrix j = Matrix::Zero(2 * m, 2 * m);
    const double inv_dx2 = 1.0 / (dx * dx);
    auto add_lap = [&](int row0, double coef) {
        for (int i = 0; i < m; ++i) {
            j(row0 + i, row0 + i) += -2.0 * coef * inv_dx2;
            if (i == 0)
                j(row0, row0 + 1) += 2.0 * coef * inv_dx2;
            else if (i == m - 1)
                j(row0 + m - 1, row0 + m - 2) += 2.0 * coef * inv_dx2;
            else {
                j(row0 + i, row0 + i - 1) += coef * inv_dx2;
                j(row0 + i, row0 + i + 1) += coef * inv_dx2;
            }
        }
    };
    add_lap(0, du);
    add_lap(m, dv);
    for (int i = 0; i < m; ++i) {
        j(i, i) += 1.0 - 3.0 * y[i] * y[i];
        j(i, m + i) += -1.0;
        j(m + i, i) += eps;
        j(m + i, m + i) += -eps * alpha1;
    }
    return j;
}

FhnGrid discretize_fhn(double du, double dv, double alpha1, double alpha0, double /*eps*/,
                       double dx, double length) {
    if (!(dx > 0.0) || !(length > 0.0))
        throw DimensionError("discretize_fhn: dx and L must be positive");
    const double ratio = length / dx;
    if (std::abs(ratio - std::round(ratio)) > 1e-9 * ratio)
        throw DimensionError("discretize_fhn: dx does not divide L");
    FhnGrid grid;
    grid.du = du;
    grid.dv = dv;
    grid.alpha1 = alpha1;
    grid.alpha0 = alpha0;
    grid.dx = dx;
    grid.length = length;
    grid.nodes = static_cast<int>(std::round(ratio)) + 1;
    return grid;
}

namespace {

void check_finite(const Vector& f, const SystemSpec& spec) {
    for (Eigen::Index i = 0; i < f.size(); ++i)
        if (!std::isfinite(f[i]))
            throw NumericsError("eval_vector_field(" + to_string(spec.id) +
                                "): non-finite component " + std::to_string(i));
}

EpileptorParams epileptor_params(const SystemSpec& spec) {
    EpileptorParams p;
    p.i_ext1 = spec.fixed("I_ext1");
    p.c1 = spec.fixed("c1");
    p.d1 = spec.fixed("d1");
    p.i_ext2 = spec.fixed("I_ext2");
    p.tau2 = spec.fixed("tau2");
    p.a = spec.fixed("a");
    p.b = spec.fixed("b");
    p.m = spec.fixed("m");
    p.a2 = spec.fixed("a2");
    return p;
}

FhnGrid fhn_grid_from(const SystemSpec& spec) {
    return discretize_fhn(spec.fixed("D_u"), spec.fixed("D_v"), spec.fixed("alpha1"),
                          spec.fixed("alpha0"), 0.0, spec.fixed("dx"), spec.fixed("L"));
}

}  // namespace

Vector eval_vector_field(const SystemSpec& spec, const Vector& x, double p) {
    if (x.size() != spec.state_dim)
        throw DimensionError("eval_vector_field: state dimension mismatch (" +
                             std::to_string(x.size()) + " vs " + std::to_string(spec.state_dim) +
                             ")");
    if (!std::isfinite(p)) throw NumericsError("eval_vector_field: non-finite parameter");

    Vector f;
    switch (spec.id) {
        case SystemId::Budworm: {
            f = Vector::Constant(1, budworm_rhs(x[0], p, spec.fixed("k")));
            break;
        }
        case SystemId::Brusselator: {
            f = brusselator_rhs<double>({x[0], x[1]}, spec.fixed("a"), p);
            break;
        }
        case SystemId::Cstr: {
            // exp(x2) grows fast; refuse evaluations far outside the search
            // box instead of returning a saturated or infinite rate.
            const Interval& x2_box = spec.state_box.dims[1];
            const double margin = x2_box.width();
            if (x[1] > x2_box.hi + margin || x[1] < x2_box.lo - margin)
                throw NumericsError(
                    "eval_vector_field(cstr): component 1 (x2) outside the evaluable domain");
            f = cstr_rhs<double>({x[0], x[1]}, p, spec.fixed("B"), spec.fixed("beta"),
                                 spec.fixed("T_c"));
            break;
        }
        case SystemId::Epileptor: {
            f = epileptor_rhs<double>({x[0], x[1], x[2], x[3]}, p, epileptor_params(spec));
            break;
        }
        case SystemId::FhnPodReduced: {
            const PodModel& pod = *spec.pod;
            const FhnGrid grid = fhn_grid_from(spec);
            const Vector full = pod.lift(x);
            f = pod.project_tangent(grid.rhs(full, p));
            break;
        }
    }
    check_finite(f, spec);
    return f;
}

Matrix true_state_jacobian(const SystemSpec& spec, const Vector& x, double p, double fd_step) {
    const int n = spec.state_dim;
    Matrix j(n, n);
    for (int k = 0; k < n; ++k) {
        Vector xp = x, xm = x;
        const double h = fd_step * std::max(1.0, std::abs(x[k]));
        xp[k] += h;
        xm[k] -= h;
        j.col(k) = (eval_vector_field(spec, xp, p) - eval_vector_field(spec, xm, p)) / (2.0 * h);
    }
    return j;
}

Observation observe(const SystemSpec& spec, const Vector& x, double p, double sigma, Rng& rng) {
    if (sigma < 0.0) throw DimensionError("observe: sigma must be nonnegative");
    Observation obs;
    obs.state = x;
    obs.param = p;
    obs.noise_sigma = sigma;
    obs.value = eval_vector_field(spec, x, p);
    if (sigma > 0.0)
        for (Eigen::Index i = 0; i < obs.value.size(); ++i) obs.value[i] += sigma * rng.normal();
    return obs;
}

Vector euler_rhs_from_stepper(const std::function<Vector(const Vector&, double)>& stepper,
                              const Vector& x, double p, double dt) {
    if (!(dt > 0.0)) throw DimensionError("euler_rhs_from_stepper: dt must be positive");
    return (stepper(x, p) - x) / dt;
}

double map_criticality(const ComplexVector& eigs, MapCriticality kind) {
    if (eigs.size() == 0) throw DimensionError("map_criticality: empty eigenvalue list");
    double best = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < eigs.size(); ++i) {
        const double c = kind == MapCriticality::FoldMap
                             ? std::abs(eigs[i] - std::complex<double>(1.0, 0.0))
                             : std::abs(std::norm(eigs[i]) - 1.0);
        best = std::min(best, c);
    }
    return best;
}

SystemSpec make_system(SystemId id, const std::string& fhn_snapshot_csv) {
    SystemSpec spec;
    spec.id = id;
    switch (id) {
        case SystemId::Budworm:
            spec.state_dim = 1;
            spec.fixed_params = {{"k", 15.0}};
            spec.bif_param_name = "r";
            spec.bif_param_range = {0.15, 0.45};
            spec.state_box = {{{4.0, 11.0}}};
            spec.branch_variable = BranchVariable::state(0);
            break;
        case SystemId::Brusselator:
            spec.state_dim = 2;
            spec.fixed_params = {{"a", 1.5}};
            spec.bif_param_name = "b";
            spec.bif_param_range = {2.2, 4.2};
            spec.state_box = {{{0.5, 2.5}, {0.8, 3.5}}};
            spec.branch_variable = BranchVariable::parameter();
            break;
        case SystemId::Cstr:
            spec.state_dim = 2;
            spec.fixed_params = {{"B", 10.0}, {"beta", 0.1}, {"T_c", -0.04}};
            spec.bif_param_name = "Da";
            spec.bif_param_range = {0.01, 0.08};
            spec.state_box = {{{0.03, 0.36}, {0.2, 3.4}}};
            spec.branch_variable = BranchVariable::state(0);
            break;
        case SystemId::Epileptor:
            spec.state_dim = 4;
            spec.fixed_params = {{"I_ext1", 3.1}, {"c1", 1.0},  {"d1", 5.0},
                                 {"I_ext2", 0.45}, {"tau2", 10.0}, {"a", 1.0},
                                 {"b", 3.0},       {"m", 0.5},     {"a2", 6.0}};
            spec.bif_param_name = "z";
            spec.bif_param_range = {2.0, 4.5};
            spec.state_box = {{{-2.0, -0.6}, {-21.0, 0.0}, {-0.4, 0.0}, {-0.1, 0.6}}};
            spec.branch_variable = BranchVariable::state(0);
            break;
        case SystemId::FhnPodReduced: {
            spec.state_dim = 4;
            spec.fixed_params = {{"D_u", 1.0}, {"D_v", 4.0}, {"alpha1", 2.0},
                                 {"alpha0", -0.03}, {"dx", 0.1}, {"L", 20.0}};
            spec.bif_param_name = "eps";
            spec.bif_param_range = {0.6, 1.2};
            spec.state_box = {{{-2.0, 2.0}, {-0.35, 0.3}, {-0.06, 0.06}, {-0.012, 0.012}}};
            spec.branch_variable = BranchVariable::state(0);
            if (!fhn_snapshot_csv.empty()) {
                auto snaps = load_snapshots_csv(fhn_snapshot_csv);
                spec.pod = std::make_shared<PodModel>(build_pod(snaps, 8, 4));
            }
            break;
        }
    }
    return spec;
}

SystemId system_id_from_string(const std::string& name) {
    if (name == "budworm") return SystemId::Budworm;
    if (name == "brusselator") return SystemId::Brusselator;
    if (name == "cstr") return SystemId::Cstr;
    if (name == "epileptor") return SystemId::Epileptor;
    if (name == "fhn_pod") return SystemId::FhnPodReduced;
    throw DimensionError("unknown system id: " + name);
}

std::string to_string(SystemId id) {
    switch (id) {
        case SystemId::Budworm: return "budworm";
        case SystemId::Brusselator: return "brusselator";
        case SystemId::Cstr: return "cstr";
        case SystemId::Epileptor: return "epileptor";
        case SystemId::FhnPodReduced: return "fhn_pod";
    }
    return "?";
}

}  // namespace bif
