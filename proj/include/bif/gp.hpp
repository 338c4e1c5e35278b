#pragma once

#include <optional>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "bif/common.hpp"
#include "bif/systems.hpp"

namespace bif {

struct KernelHyperparams {
    double signal_variance = 1.0;
    Vector lengthscales;         // one per joint input dimension (ARD)
    double noise_variance = 0.0;  // in the same (normalized) units as the targets
};

struct FitOptions {
    int n_starts = 5;
    int max_iters = 200;
    std::uint64_t seed = 0;
    bool learn_noise = false;
    double learned_noise_floor = 1e-10;
    double jitter_start = 1e-12;
    double jitter_max = 1e-6;
};

/// One independent GP per output component over the joint input (x, p).
/// Inputs are normalized to zero mean / unit range per dimension, outputs to
/// zero mean / unit variance per component; every public quantity is
/// reported in physical units with the chain rule applied.
struct TrainedSurrogate {
    struct Component {
        KernelHyperparams hp;
        Matrix chol;        // lower Cholesky factor of K + noise_variance I (+jitter)
        Vector alpha;       // (K + noise I)^-1 y  (normalized targets)
        Vector y_norm;
        double log_marginal = 0.0;
        double jitter_used = 0.0;
    };

    int state_dim = 0;  // n; joint input dimension is n+1
    Matrix train_norm;  // N x (n+1), normalized inputs
    Vector in_shift, in_scale;    // n+1
    Vector out_shift, out_scale;  // n
    double noise_sigma = 0.0;     // physical observation noise used at fit time
    std::vector<Component> components;

    int input_dim() const { return state_dim + 1; }
    int n_train() const { return static_cast<int>(train_norm.rows()); }
    Vector normalize_input(const Vector& x, double p) const;
};

struct PredictiveDist {
    Vector mean;      // n
    Vector variance;  // n, diagonal multi-output model
    Vector std() const { return variance.cwiseMax(0.0).cwiseSqrt(); }
    Matrix cov() const { return variance.cwiseMax(0.0).asDiagonal(); }
    /// Cholesky factor of the diagonal covariance.
    Matrix chol() const { return std().asDiagonal(); }
};

struct StdGradient {
    Matrix grad;     // n x (n+1)
    bool floored = false;  // some component was below the sigma floor
};

TrainedSurrogate fit(const ObservationDataset& data, const FitOptions& options);

PredictiveDist predict(const TrainedSurrogate& gp, const Vector& x, double p);

/// Predictive mean plus a per-component bound on its floating-point
/// evaluation noise (the mean is a heavily cancelling sum on low-noise
/// fits; root solvers converge to max(tol, floor)).
struct MeanEval {
    Vector mean;
    Vector eval_floor;
};
MeanEval predict_mean_floor(const TrainedSurrogate& gp, const Vector& x, double p);

/// d mean_c / d (x, p): n x (n+1), exact kernel differentiation.
Matrix predict_mean_jacobian(const TrainedSurrogate& gp, const Vector& x, double p);

/// d^2 mean_c / d u_a d u_b for the joint input u = (x, p); one symmetric
/// (n+1)x(n+1) matrix per output component.
std::vector<Matrix> predict_mean_mixed_second(const TrainedSurrogate& gp, const Vector& x,
                                              double p);

/// d sigma_c / d (x, p); components with sigma below 1e-12 get a zero row
/// and raise the floored flag.
StdGradient predict_std_gradient(const TrainedSurrogate& gp, const Vector& x, double p);

/// Joint posterior draw over a list of (x, p) points, full cross-covariance
/// per output component. Returns n_points x n in physical units.
Matrix sample_realization(const TrainedSurrogate& gp,
                          const std::vector<std::pair<Vector, double>>& points,
                          std::uint64_t seed);

/// Joint posterior mean/covariance over a point list for one output
/// component (normalized units); building block for realization sampling.
void joint_posterior(const TrainedSurrogate& gp, int component, const Matrix& query_norm,
                     Vector& mean, Matrix& cov);

/// Factorize a covariance with the trace-scaled escalating jitter policy.
Matrix jittered_cholesky(const Matrix& cov, double jitter_start, double jitter_max,
                         double* jitter_used = nullptr);

double log_marginal_likelihood(const TrainedSurrogate& gp, int component);

nlohmann::json gp_to_json(const TrainedSurrogate& gp);
TrainedSurrogate gp_from_json(const nlohmann::json& j);

}  // namespace bif
