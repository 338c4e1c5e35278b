#pragma once

#include <optional>

#include "bif/acquisition.hpp"

namespace bif {

enum class InitialDesign { LatinHypercube, UniformRandom, Fixed };
enum class RealizationSampling { MeanOnly, GaussianDraw };

struct BOConfig {
    SystemSpec system;
    BifKind bif_kind = BifKind::HopfEig;
    double beta = 2.0;
    int grid_size = 101;
    bool refine = true;
    int mc_samples = 0;  // > 0: Monte Carlo acquisition with this sample size
    int n_initial = 5;
    InitialDesign initial_design = InitialDesign::LatinHypercube;
    std::vector<std::pair<Vector, double>> fixed_design;
    int budget = 40;
    double conv_tol = 1e-4;
    int min_iterations = 0;  // convergence guard; 0 keeps the verbatim loop
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
    RealizationSampling realization_sampling = RealizationSampling::GaussianDraw;
    FitOptions fit;

    void validate() const;
};

struct BOIterationRecord {
    int index = 0;
    Vector x;
    double p = 0.0;
    Vector observed;
    double delta = std::numeric_limits<double>::infinity();
    double lcb = std::numeric_limits<double>::infinity();
    double criticality_mean = 0.0;
    double criticality_variance = 0.0;
    std::uint32_t acq_flags = 0;
    bool fallback_used = false;
    double acq_wall_ms = 0.0;
    double wall_ms = 0.0;
};

struct BOResult {
    Vector x_b;
    double p_b = 0.0;
    double criticality_mean = 0.0;
    double criticality_variance = 0.0;
    bool converged = false;
    int iterations_used = 0;
};

struct BOTrace {
    std::vector<BOIterationRecord> iterations;
    std::vector<Observation> initial_design;
    BOResult result;
    bool failed = false;
    std::string failure_message;
};

BOTrace run_bo(const BOConfig& config);

struct EnsembleSummary {
    std::vector<BOTrace> traces;
    std::vector<std::uint64_t> seeds;
    /// Per-iteration |p - p_ref| quantiles across runs (carry-forward past
    /// early convergence); empty without a reference.
    std::vector<double> median_abs_err, q25_abs_err, q75_abs_err;
    double median_final_abs_err = std::numeric_limits<double>::quiet_NaN();
    int n_failed = 0;
};

EnsembleSummary run_ensemble(const BOConfig& config, int n_runs,
                             const std::vector<std::uint64_t>& seeds,
                             std::optional<double> p_reference, int jobs = 1);

/// Seeds derived from a master seed, distinct by construction.
std::vector<std::uint64_t> derive_run_seeds(std::uint64_t master, int n_runs);

}  // namespace bif
