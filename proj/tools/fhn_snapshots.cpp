// Regenerates data/fhn_snapshots.csv: traces the front branch of the full
// discretized FitzHugh-Nagumo system through its fold and writes 10 steady
// states spread along it.

#include <cstdio>

#include "bif/continuation.hpp"
#include "bif/pod.hpp"

int main(int argc, char** argv) {
    const std::string out = argc > 1 ? argv[1] : "data/fhn_snapshots.csv";
    const bif::FhnGrid grid = bif::discretize_fhn(1.0, 4.0, 2.0, -0.03, 0.0, 0.1, 20.0);
    const bif::FhnBranch branch = bif::trace_fhn_branch(grid, 0.5, 0.45);
    std::printf("branch: %zu points, eps fold approx %.8f\n", branch.eps.size(),
                branch.eps_fold);
    const auto snaps = bif::select_fhn_snapshots(branch, 10, 0.6);
    bif::save_snapshots_csv(out, snaps);
    std::printf("wrote %zu snapshots to %s\n", snaps.size(), out.c_str());
    return 0;
}
