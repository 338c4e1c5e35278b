#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "bif/bo.hpp"

namespace bif {

struct Reference {
    double p_ref = 0.0;
    std::optional<Vector> x_ref;
    std::string provenance;
};

struct ExperimentConfig {
    BOConfig bo;
    int n_runs = 1;
    std::vector<std::uint64_t> seeds;  // empty: derived from bo.seed
    std::filesystem::path output_dir;
    std::optional<Reference> reference;
    std::vector<int> comparison;  // MC sample sizes for cmd_compare
    bool report_bifurcation_diagram = false;
    std::filesystem::path config_dir;  // directory of the config file (relative paths)

    void validate() const;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        std::optional<std::uint64_t> seed_override = {});

nlohmann::json resolved_config_json(const ExperimentConfig& config);

/// Trace CSV: iter, x..., p, g..., delta, lcb, fallback, wall_ms.
void write_trace_csv(const std::filesystem::path& path, const BOTrace& trace, int state_dim);

/// Summary JSON for a run or ensemble; timestamps live only in `metadata`.
nlohmann::json summary_json(const ExperimentConfig& config, const EnsembleSummary& ensemble,
                            bool seed_overridden);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// Minimal structural JSON-Schema check (type / required / properties /
/// items / enum subset) for the shipped summary schema.
bool validate_against_schema(const nlohmann::json& doc, const nlohmann::json& schema,
                             std::string* error = nullptr);

std::string format_double(double v);

}  // namespace bif
