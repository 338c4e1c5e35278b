#pragma once

#include <optional>

#include "bif/realization.hpp"
#include "bif/systems.hpp"
#include "bif/uq.hpp"

namespace bif {

enum class BifKind { Fold1D, FoldND, HopfEig, HopfTrace, FoldMap, NeimarkSacker };

bool is_map_kind(BifKind kind);
/// Branch-variable convention for the kind: Hopf kinds run over the
/// parameter, fold kinds over a state component.
bool kind_uses_state_branch(BifKind kind);
CriticalityMode criticality_mode(BifKind kind);

struct AcquisitionSpec {
    BifKind kind = BifKind::HopfEig;
    double beta = 2.0;
    Vector candidate_grid;  // sorted independent-variable values
    bool refine = true;
    int refine_iters = 20;
    int mc_samples = 0;     // > 0 switches to the Monte Carlo acquisition
    std::uint64_t mc_seed = 0;
};

/// Geometry the acquisition pipeline needs from the problem definition.
struct ProblemGeometry {
    int state_dim = 1;
    BranchVariable branch;
    Box state_box;
    Interval param_range;

    static ProblemGeometry from_spec(const SystemSpec& spec);
    /// Widths of every joint dimension (states then parameter).
    std::vector<double> joint_widths() const;
};

enum AcqFlags : std::uint32_t {
    kAcqNewtonFailed = 1u << 0,
    kAcqStdFloor = 1u << 1,
    kAcqClamped = 1u << 2,
    kAcqComplexFold = 1u << 3,
    /// Root found, but its propagated distribution spills beyond the
    /// search domain; the small-uncertainty propagation is meaningless
    /// there, so the point counts as not-reliably-solved.
    kAcqUnreliable = 1u << 4,
};

struct AcquisitionEvaluation {
    double location = 0.0;
    ScalarDist objective;  // squared-criticality statistics
    double lcb = std::numeric_limits<double>::infinity();
    std::uint32_t flags = 0;
    std::optional<SteadyStateDist> steady;  // present when Newton converged
    double criticality_mean = 0.0;          // signed, pre-squaring
    double criticality_variance = 0.0;
};

struct WarmStart {
    Vector x;
    double p = 0.0;
};

AcquisitionEvaluation eval_acq(const TrainedSurrogate& gp, const AcquisitionSpec& spec,
                               const ProblemGeometry& geom, double s, const WarmStart& warm);

struct MinimizeResult {
    enum class Status { Ok, AllNewtonFailed };
    Status status = Status::AllNewtonFailed;
    double location = 0.0;
    AcquisitionEvaluation best;
};

/// Grid scan with a sequential Newton warm-start chain, then optional
/// golden-section refinement in the surrounding cell. Ties break toward
/// the smaller location.
MinimizeResult minimize_acq(const TrainedSurrogate& gp, const AcquisitionSpec& spec,
                            const ProblemGeometry& geom, const WarmStart& warm);

/// Argmax of total predictive variance over the grid; ties toward the
/// smallest index.
std::pair<Vector, double> uncertainty_sampling(const TrainedSurrogate& gp,
                                               const std::vector<std::pair<Vector, double>>& grid);

/// Deterministic Halton point set over state box x parameter range, used
/// as the fallback grid.
std::vector<std::pair<Vector, double>> halton_grid(const ProblemGeometry& geom, int n_points);

/// Monte Carlo acquisition (realization solving on a local stencil).
AcquisitionEvaluation mc_acquisition(const TrainedSurrogate& gp, const AcquisitionSpec& spec,
                                     const ProblemGeometry& geom, double s, const WarmStart& warm,
                                     int n_samples, std::uint64_t seed);

}  // namespace bif
