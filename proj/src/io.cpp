#include "bif/io.hpp"

#include <chrono>
#include <cstdio>
#include <fstream>

#include <nlohmann/json.hpp>

namespace bif {

using nlohmann::json;

namespace {

BifKind bif_kind_from_string(const std::string& s) {
    if (s == "fold_1d") return BifKind::Fold1D;
    if (s == "fold_nd") return BifKind::FoldND;
    if (s == "hopf_eig") return BifKind::HopfEig;
    if (s == "hopf_trace") return BifKind::HopfTrace;
    if (s == "fold_map") return BifKind::FoldMap;
    if (s == "neimark_sacker") return BifKind::NeimarkSacker;
    throw ConfigError("unknown bif_kind: " + s);
}

std::string to_string(BifKind k) {
    switch (k) {
        case BifKind::Fold1D: return "fold_1d";
        case BifKind::FoldND: return "fold_nd";
        case BifKind::HopfEig: return "hopf_eig";
        case BifKind::HopfTrace: return "hopf_trace";
        case BifKind::FoldMap: return "fold_map";
        case BifKind::NeimarkSacker: return "neimark_sacker";
    }
    return "?";
}

Vector vector_from(const json& a) {
    Vector v(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) v[i] = a[i].get<double>();
    return v;
}

std::vector<double> to_std(const Vector& v) {
    return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace

void ExperimentConfig::validate() const {
    bo.validate();
    if (n_runs < 1) throw ConfigError("n_runs must be >= 1");
    if (!seeds.empty() && static_cast<int>(seeds.size()) != n_runs)
        throw ConfigError("seeds list must match n_runs");
    for (int c : comparison)
        if (c < 2) throw ConfigError("comparison sample sizes must be >= 2");
    if (output_dir.empty()) throw ConfigError("output_dir is required");
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path,
                                        std::optional<std::uint64_t> seed_override) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }

    ExperimentConfig cfg;
    cfg.config_dir = path.parent_path();
    try {
        const json& sj = j.at("system");
        const SystemId id = system_id_from_string(sj.at("id").get<std::string>());
        std::string snapshots;
        if (sj.contains("snapshots_csv")) {
            std::filesystem::path sp = sj.at("snapshots_csv").get<std::string>();
            if (sp.is_relative()) sp = cfg.config_dir / sp;
            snapshots = sp.string();
        }
        SystemSpec spec = make_system(id, snapshots);
        if (sj.contains("fixed_params"))
            for (auto& [k, v] : sj.at("fixed_params").items()) spec.fixed_params[k] = v;
        if (sj.contains("bif_param_range")) {
            spec.bif_param_range.lo = sj.at("bif_param_range")[0].get<double>();
            spec.bif_param_range.hi = sj.at("bif_param_range")[1].get<double>();
        }
        if (sj.contains("state_box")) {
            spec.state_box.dims.clear();
            for (const auto& iv : sj.at("state_box"))
                spec.state_box.dims.push_back({iv[0].get<double>(), iv[1].get<double>()});
        }
        if (sj.contains("branch_variable")) {
            const json& bv = sj.at("branch_variable");
            if (bv.at("type") == "parameter")
                spec.branch_variable = BranchVariable::parameter();
            else
                spec.branch_variable = BranchVariable::state(bv.at("index").get<int>());
        }
        cfg.bo.system = std::move(spec);

        cfg.bo.bif_kind = bif_kind_from_string(j.at("bif_kind").get<std::string>());
        if (j.contains("acquisition")) {
            const json& aj = j.at("acquisition");
            cfg.bo.beta = aj.value("beta", 2.0);
            cfg.bo.grid_size = aj.value("grid_size", 101);
            cfg.bo.refine = aj.value("refine", true);
            cfg.bo.mc_samples = aj.value("mc_samples", 0);
        }
        cfg.bo.noise_sigma = j.value("noise_sigma", 0.0);
        cfg.bo.n_initial = j.value("n_initial", 5);
        if (j.contains("initial_design")) {
            const std::string d = j.at("initial_design").get<std::string>();
            if (d == "latin_hypercube")
                cfg.bo.initial_design = InitialDesign::LatinHypercube;
            else if (d == "uniform_random")
                cfg.bo.initial_design = InitialDesign::UniformRandom;
            else
                throw ConfigError("unknown initial_design: " + d);
        }
        cfg.bo.budget = j.value("budget", 40);
        cfg.bo.conv_tol = j.value("conv_tol", 1e-4);
        cfg.bo.min_iterations = j.value("min_iterations", 0);
        if (j.contains("realization_sampling")) {
            const std::string r = j.at("realization_sampling").get<std::string>();
            if (r == "gaussian_draw")
                cfg.bo.realization_sampling = RealizationSampling::GaussianDraw;
            else if (r == "mean_only")
                cfg.bo.realization_sampling = RealizationSampling::MeanOnly;
            else
                throw ConfigError("unknown realization_sampling: " + r);
        }
        cfg.bo.seed = j.value("seed", 0u);
        if (seed_override) cfg.bo.seed = *seed_override;

        cfg.n_runs = j.value("n_runs", 1);
        if (j.contains("seeds") && !seed_override)
            for (const auto& s : j.at("seeds")) cfg.seeds.push_back(s.get<std::uint64_t>());

        std::filesystem::path out = j.at("output_dir").get<std::string>();
        cfg.output_dir = out.is_relative() ? cfg.config_dir / out : out;

        if (j.contains("reference")) {
            Reference ref;
            ref.p_ref = j.at("reference").at("p_ref").get<double>();
            if (j.at("reference").contains("x_ref"))
                ref.x_ref = vector_from(j.at("reference").at("x_ref"));
            ref.provenance = j.at("reference").value("provenance", "");
            cfg.reference = std::move(ref);
        }
        if (j.contains("comparison"))
            for (const auto& c : j.at("comparison")) cfg.comparison.push_back(c.get<int>());
        cfg.report_bifurcation_diagram = j.value("report_bifurcation_diagram", false);
    } catch (const json::exception& e) {
        throw ConfigError("config field error in " + path.string() + ": " + e.what());
    }
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw ConfigError("invalid config " + path.string() + ": " + e.what());
    }
    return cfg;
}

json resolved_config_json(const ExperimentConfig& cfg) {
    json j;
    const SystemSpec& s = cfg.bo.system;
    j["system"]["id"] = bif::to_string(s.id);
    j["system"]["fixed_params"] = s.fixed_params;
    j["system"]["bif_param"] = s.bif_param_name;
    j["system"]["bif_param_range"] = {s.bif_param_range.lo, s.bif_param_range.hi};
    json box = json::array();
    for (const auto& iv : s.state_box.dims) box.push_back({iv.lo, iv.hi});
    j["system"]["state_box"] = box;
    j["system"]["branch_variable"] =
        s.branch_variable.is_state()
            ? json{{"type", "state"}, {"index", s.branch_variable.index}}
            : json{{"type", "parameter"}};
    j["bif_kind"] = to_string(cfg.bo.bif_kind);
    j["acquisition"] = {{"beta", cfg.bo.beta},
                        {"grid_size", cfg.bo.grid_size},
                        {"refine", cfg.bo.refine},
                        {"mc_samples", cfg.bo.mc_samples}};
    j["noise_sigma"] = cfg.bo.noise_sigma;
    j["n_initial"] = cfg.bo.n_initial;
    j["budget"] = cfg.bo.budget;
    j["conv_tol"] = cfg.bo.conv_tol;
    j["min_iterations"] = cfg.bo.min_iterations;
    j["seed"] = cfg.bo.seed;
    j["n_runs"] = cfg.n_runs;
    j["output_dir"] = cfg.output_dir.string();
    if (cfg.reference) {
        j["reference"]["p_ref"] = cfg.reference->p_ref;
        if (cfg.reference->x_ref) j["reference"]["x_ref"] = to_std(*cfg.reference->x_ref);
        j["reference"]["provenance"] = cfg.reference->provenance;
    }
    if (!cfg.comparison.empty()) j["comparison"] = cfg.comparison;
    return j;
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

void write_trace_csv(const std::filesystem::path& path, const BOTrace& trace, int state_dim) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write trace CSV: " + path.string());
    out << "iter";
    for (int k = 0; k < state_dim; ++k) out << ",x" << k;
    out << ",p";
    for (int k = 0; k < state_dim; ++k) out << ",g" << k;
    out << ",delta,lcb,fallback,wall_ms\n";
    for (const auto& it : trace.iterations) {
        out << it.index;
        for (int k = 0; k < state_dim; ++k) out << ',' << format_double(it.x[k]);
        out << ',' << format_double(it.p);
        for (int k = 0; k < state_dim; ++k) out << ',' << format_double(it.observed[k]);
        out << ',' << format_double(it.delta) << ',' << format_double(it.lcb) << ','
            << (it.fallback_used ? 1 : 0) << ',' << format_double(it.wall_ms) << '\n';
    }
}

json summary_json(const ExperimentConfig& cfg, const EnsembleSummary& ens, bool seed_overridden) {
    json j;
    j["schema_version"] = 1;
    j["config"] = resolved_config_json(cfg);

    json runs = json::array();
    for (std::size_t r = 0; r < ens.traces.size(); ++r) {
        const BOTrace& tr = ens.traces[r];
        json rj;
        rj["seed"] = ens.seeds[r];
        rj["failed"] = tr.failed;
        if (tr.failed) {
            rj["failure"] = tr.failure_message;
        } else {
            rj["result"] = {{"x_b", to_std(tr.result.x_b)},
                            {"p_b", tr.result.p_b},
                            {"criticality_mean", tr.result.criticality_mean},
                            {"criticality_variance", tr.result.criticality_variance},
                            {"converged", tr.result.converged},
                            {"iterations_used", tr.result.iterations_used}};
            if (cfg.reference)
                rj["abs_param_error"] = std::abs(tr.result.p_b - cfg.reference->p_ref);
        }
        runs.push_back(std::move(rj));
    }
    j["runs"] = std::move(runs);

    if (ens.traces.size() == 1 && !ens.traces[0].failed) {
        j["result"] = j["runs"][0]["result"];
        if (cfg.reference) j["abs_param_error"] = j["runs"][0]["abs_param_error"];
    }
    if (cfg.reference) {
        j["summary"]["median_final_abs_param_error"] = ens.median_final_abs_err;
        j["summary"]["per_iteration_median_abs_error"] = ens.median_abs_err;
        j["summary"]["per_iteration_q25_abs_error"] = ens.q25_abs_err;
        j["summary"]["per_iteration_q75_abs_error"] = ens.q75_abs_err;
        j["summary"]["reference_provenance"] = cfg.reference->provenance;
    }
    j["summary"]["n_failed"] = ens.n_failed;

    const auto now = std::chrono::system_clock::now().time_since_epoch();
    j["metadata"] = {
        {"timestamp_ms", std::chrono::duration_cast<std::chrono::milliseconds>(now).count()},
        {"seed_override", seed_overridden}};
    return j;
}

void write_json(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write JSON: " + path.string());
    out << j.dump(2) << '\n';
}

bool validate_against_schema(const json& doc, const json& schema, std::string* error) {
    auto fail = [&](const std::string& msg) {
        if (error) *error = msg;
        return false;
    };
    if (schema.contains("type")) {
        const std::string t = schema.at("type").get<std::string>();
        const bool ok = (t == "object" && doc.is_object()) || (t == "array" && doc.is_array()) ||
                        (t == "string" && doc.is_string()) ||
                        (t == "number" && doc.is_number()) ||
                        (t == "integer" && doc.is_number_integer()) ||
                        (t == "boolean" && doc.is_boolean()) || (t == "null" && doc.is_null());
        if (!ok) return fail("expected type " + t + ", got " + std::string(doc.type_name()));
    }
    if (schema.contains("enum")) {
        bool found = false;
        for (const auto& v : schema.at("enum")) found = found || v == doc;
        if (!found) return fail("value not in enum");
    }
    if (schema.contains("required"))
        for (const auto& key : schema.at("required"))
            if (!doc.contains(key.get<std::string>()))
                return fail("missing required key: " + key.get<std::string>());
    if (schema.contains("properties") && doc.is_object())
        for (auto& [key, sub] : schema.at("properties").items())
            if (doc.contains(key)) {
                std::string suberr;
                if (!validate_against_schema(doc.at(key), sub, &suberr))
                    return fail(key + ": " + suberr);
            }
    if (schema.contains("items") && doc.is_array())
        for (const auto& item : doc) {
            std::string suberr;
            if (!validate_against_schema(item, schema.at("items"), &suberr))
                return fail("item: " + suberr);
        }
    return true;
}

}  // namespace bif
