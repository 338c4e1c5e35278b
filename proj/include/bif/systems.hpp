#pragma once

#include <complex>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "bif/common.hpp"
#include "bif/pod.hpp"

namespace bif {

enum class SystemId { Budworm, Brusselator, Cstr, Epileptor, FhnPodReduced };

struct BranchVariable {
    enum class Kind { State, Parameter };
    Kind kind = Kind::Parameter;
    int index = -1;  // state component index when kind == State

    static BranchVariable parameter() { return {Kind::Parameter, -1}; }
    static BranchVariable state(int i) { return {Kind::State, i}; }
    bool is_state() const { return kind == Kind::State; }
};

/// One benchmark problem: equations, fixed parameters and the search domain.
struct SystemSpec {
    SystemId id = SystemId::Budworm;
    int state_dim = 1;
    std::map<std::string, double> fixed_params;
    std::string bif_param_name;
    Interval bif_param_range;
    Box state_box;
    BranchVariable branch_variable;
    /// Only for FhnPodReduced: the reduction carrying basis + slaving map.
    std::shared_ptr<const PodModel> pod;

    void validate() const;
    double fixed(const std::string& name) const;
};

struct Observation {
    Vector state;
    double param = 0.0;
    Vector value;
    double noise_sigma = 0.0;
};

struct ObservationDataset {
    int state_dim = 0;
    double noise_sigma = 0.0;
    std::vector<Observation> observations;

    int size() const { return static_cast<int>(observations.size()); }
    void add(Observation obs);
    /// N x (n+1) joint inputs, parameter in the last column.
    Matrix inputs() const;
    /// N x n observed vector-field values.
    Matrix targets() const;
};

// --- Raw vector fields, templated on scalar so tests can run them with
// complex-step or higher precision. Parameters are passed explicitly.

template <typename Scalar>
Scalar budworm_rhs(Scalar x, Scalar r, Scalar k) {
    return r * x * (Scalar(1) - x / k) - x * x / (Scalar(1) + x * x);
}

template <typename Scalar>
Eigen::Vector2<Scalar> brusselator_rhs(const Eigen::Vector2<Scalar>& s, Scalar a, Scalar b) {
    const Scalar x = s[0], y = s[1];
    return {a + x * x * y - b * x - x, b * x - x * x * y};
}

template <typename Scalar>
Eigen::Vector2<Scalar> cstr_rhs(const Eigen::Vector2<Scalar>& s, Scalar da, Scalar b_heat,
                                Scalar beta, Scalar t_c) {
    using std::exp;
    const Scalar x1 = s[0], x2 = s[1];
    const Scalar rate = da * exp(x2) * (Scalar(1) - x1);
    return {-x1 + rate, -x2 + b_heat * rate + beta * (t_c - x2)};
}

struct EpileptorParams {
    double i_ext1 = 3.1, c1 = 1.0, d1 = 5.0, i_ext2 = 0.45, tau2 = 10.0;
    double a = 1.0, b = 3.0, m = 0.5, a2 = 6.0;
};

template <typename Scalar>
Eigen::Vector4<Scalar> epileptor_rhs(const Eigen::Vector4<Scalar>& s, Scalar z,
                                     const EpileptorParams& p) {
    const Scalar x1 = s[0], y1 = s[1], x2 = s[2], y2 = s[3];
    // Piecewise f1, f2 as published; C0 joins are intentional.
    Scalar f1;
    if (x1 < Scalar(0)) {
        f1 = Scalar(p.a) * x1 * x1 * x1 - Scalar(p.b) * x1 * x1;
    } else {
        const Scalar q = z - Scalar(4);
        f1 = -(Scalar(p.m) - x2 + Scalar(0.6) * q * q * q * q) * x1;
    }
    const Scalar f2 = (x2 < Scalar(-0.25)) ? Scalar(0) : Scalar(p.a2) * (x2 + Scalar(0.25));
    return {y1 - f1 - z + Scalar(p.i_ext1),
            Scalar(p.c1) - Scalar(p.d1) * x1 * x1 - y1,
            -y2 + x2 - x2 * x2 * x2 + Scalar(p.i_ext2) - Scalar(0.3) * (z - Scalar(3.5)),
            (f2 - y2) / Scalar(p.tau2)};
}

/// Finite-difference FitzHugh-Nagumo reaction-diffusion system on [0, L]
/// with homogeneous Neumann boundaries (mirrored ghost nodes).
struct FhnGrid {
    double du = 1.0, dv = 4.0, alpha1 = 2.0, alpha0 = -0.03;
    double dx = 0.1, length = 20.0;
    int nodes = 201;  // per field; total dimension is 2*nodes

    int dim() const { return 2 * nodes; }
    Vector rhs(const Vector& y, double eps) const;
    /// Dense Jacobian; the system is small enough (402) that dense solves
    /// in tests are fine, the continuation oracle uses the sparse variant.
    Matrix jacobian(const Vector& y, double eps) const;
};

/// Builds the grid, checking that dx divides L.
FhnGrid discretize_fhn(double du, double dv, double alpha1, double alpha0, double eps_unused,
                       double dx, double length);

// --- SystemSpec-level operations ---

/// Evaluates the benchmark vector field f(x; p).
Vector eval_vector_field(const SystemSpec& spec, const Vector& x, double p);

/// Analytic state Jacobian of the true system (continuation oracle support).
Matrix true_state_jacobian(const SystemSpec& spec, const Vector& x, double p, double fd_step = 1e-6);

/// Noisy observation g = f + eps, eps ~ N(0, sigma^2 I) drawn from rng.
Observation observe(const SystemSpec& spec, const Vector& x, double p, double sigma, Rng& rng);

/// Euler vector-field estimate from a one-step state map.
Vector euler_rhs_from_stepper(const std::function<Vector(const Vector&, double)>& stepper,
                              const Vector& x, double p, double dt);

enum class MapCriticality { FoldMap, NeimarkSacker };

/// min_i |lambda_i - 1| (FoldMap) or min_i | |lambda_i|^2 - 1 | (NeimarkSacker).
double map_criticality(const ComplexVector& eigs, MapCriticality kind);

/// Built-in benchmark spec with the shipped default domain. FhnPodReduced
/// requires a snapshot CSV path to assemble the reduction.
SystemSpec make_system(SystemId id, const std::string& fhn_snapshot_csv = "");

SystemId system_id_from_string(const std::string& name);
std::string to_string(SystemId id);

}  // namespace bif
