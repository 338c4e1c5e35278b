#include <cstdlib>
#include <filesystem>
#include <iostream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "bif/continuation.hpp"
#include "bif/io.hpp"
#include "bif/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::optional<std::uint64_t> seed_override_from_env() {
    const char* env = std::getenv("BIFHUNTER_SEED_OVERRIDE");
    if (!env || !*env) return {};
    return static_cast<std::uint64_t>(std::strtoull(env, nullptr, 10));
}

std::vector<std::uint64_t> resolve_seeds(const bif::ExperimentConfig& cfg) {
    if (!cfg.seeds.empty()) return cfg.seeds;
    if (cfg.n_runs == 1) return {cfg.bo.seed};
    return bif::derive_run_seeds(cfg.bo.seed, cfg.n_runs);
}

int cmd_run(const std::string& config_path, bool dry_run, int jobs) {
    const auto seed_override = seed_override_from_env();
    bif::ExperimentConfig cfg;
    try {
        cfg = bif::load_experiment_config(config_path, seed_override);
    } catch (const std::exception& e) {
        std::cerr << "bifhunter run: " << e.what() << "\n";
        return 2;
    }
    if (dry_run) {
        std::cout << bif::resolved_config_json(cfg).dump(2) << "\n";
        return 0;
    }
    try {
        fs::create_directories(cfg.output_dir);
        const auto seeds = resolve_seeds(cfg);
        std::optional<double> p_ref;
        if (cfg.reference) p_ref = cfg.reference->p_ref;
        bif::EnsembleSummary ens =
            bif::run_ensemble(cfg.bo, cfg.n_runs, seeds, p_ref, jobs);
        for (std::size_t r = 0; r < ens.traces.size(); ++r)
            bif::write_trace_csv(cfg.output_dir / ("trace_" + std::to_string(r) + ".csv"),
                                 ens.traces[r], cfg.bo.system.state_dim);
        bif::write_json(cfg.output_dir / "summary.json",
                        bif::summary_json(cfg, ens, seed_override.has_value()));
    } catch (const std::exception& e) {
        std::cerr << "bifhunter run: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

int cmd_compare(const std::string& config_path, bool dry_run, int jobs) {
    const auto seed_override = seed_override_from_env();
    bif::ExperimentConfig cfg;
    try {
        cfg = bif::load_experiment_config(config_path, seed_override);
        if (cfg.comparison.empty())
            throw bif::ConfigError("compare requires a nonempty 'comparison' list");
    } catch (const std::exception& e) {
        std::cerr << "bifhunter compare: " << e.what() << "\n";
        return 2;
    }
    if (dry_run) {
        std::cout << bif::resolved_config_json(cfg).dump(2) << "\n";
        return 0;
    }
    try {
        fs::create_directories(cfg.output_dir);
        const auto seeds = resolve_seeds(cfg);
        std::optional<double> p_ref;
        if (cfg.reference) p_ref = cfg.reference->p_ref;

        struct MethodRun {
            std::string name;
            int mc_samples;
            bif::EnsembleSummary ens;
        };
        std::vector<MethodRun> methods;
        methods.push_back({"analytic", 0, {}});
        for (int sz : cfg.comparison) methods.push_back({"mc" + std::to_string(sz), sz, {}});

        for (auto& m : methods) {
            bif::BOConfig bo = cfg.bo;
            bo.mc_samples = m.mc_samples;
            m.ens = bif::run_ensemble(bo, cfg.n_runs, seeds, p_ref, jobs);
            for (std::size_t r = 0; r < m.ens.traces.size(); ++r)
                bif::write_trace_csv(
                    cfg.output_dir / ("trace_" + m.name + "_" + std::to_string(r) + ".csv"),
                    m.ens.traces[r], cfg.bo.system.state_dim);
        }

        std::ofstream conv(cfg.output_dir / "convergence.csv");
        conv << "method,iter,median_abs_err,q25_abs_err,q75_abs_err\n";
        for (const auto& m : methods)
            for (std::size_t t = 0; t < m.ens.median_abs_err.size(); ++t)
                conv << m.name << ',' << (t + 1) << ','
                     << bif::format_double(m.ens.median_abs_err[t]) << ','
                     << bif::format_double(m.ens.q25_abs_err[t]) << ','
                     << bif::format_double(m.ens.q75_abs_err[t]) << '\n';
        conv.close();

        // Per-iteration acquisition wall time statistics per method.
        std::ofstream timing(cfg.output_dir / "acq_timing.csv");
        timing << "method,iter,median_acq_ms,mean_acq_ms\n";
        std::map<std::string, double> mean_acq_ms;
        for (const auto& m : methods) {
            double total = 0.0;
            int count = 0;
            for (int t = 0; t < cfg.bo.budget; ++t) {
                std::vector<double> ms;
                for (const auto& tr : m.ens.traces)
                    if (!tr.failed && t < static_cast<int>(tr.iterations.size()))
                        ms.push_back(tr.iterations[t].acq_wall_ms);
                if (ms.empty()) break;
                std::sort(ms.begin(), ms.end());
                const double med = ms[ms.size() / 2];
                double mean = 0.0;
                for (double v : ms) mean += v;
                mean /= ms.size();
                total += mean * ms.size();
                count += static_cast<int>(ms.size());
                timing << m.name << ',' << (t + 1) << ',' << bif::format_double(med) << ','
                       << bif::format_double(mean) << '\n';
            }
            mean_acq_ms[m.name] = count ? total / count : 0.0;
        }
        timing.close();

        json j = bif::summary_json(cfg, methods.front().ens, seed_override.has_value());
        json cmpj;
        for (const auto& m : methods) {
            cmpj[m.name]["median_final_abs_param_error"] = m.ens.median_final_abs_err;
            cmpj[m.name]["mean_acq_ms"] = mean_acq_ms[m.name];
            cmpj[m.name]["n_failed"] = m.ens.n_failed;
        }
        if (methods.size() > 1 && mean_acq_ms["analytic"] > 0.0) {
            const auto& last = methods.back();
            cmpj["speedup_vs_" + last.name] =
                mean_acq_ms[last.name] / mean_acq_ms["analytic"];
        }
        j["comparison"] = std::move(cmpj);
        bif::write_json(cfg.output_dir / "summary.json", j);
    } catch (const std::exception& e) {
        std::cerr << "bifhunter compare: " << e.what() << "\n";
        return 3;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Active bifurcation detection with Bayesian optimization"};
    app.require_subcommand(1);

    std::string config_path;
    bool dry_run = false;
    int jobs = 1;
    std::string filter;

    auto* run = app.add_subcommand("run", "Run a single experiment or ensemble from a config");
    run->add_option("config", config_path, "JSON experiment config")->required();
    run->add_flag("--dry-run", dry_run, "Validate and print the resolved config only");
    run->add_option("--jobs", jobs, "Parallel ensemble workers");

    auto* compare = app.add_subcommand(
        "compare", "Run analytic vs Monte Carlo acquisition ensembles on matched seeds");
    compare->add_option("config", config_path, "JSON experiment config")->required();
    compare->add_flag("--dry-run", dry_run, "Validate and print the resolved config only");
    compare->add_option("--jobs", jobs, "Parallel ensemble workers");

    auto* verify = app.add_subcommand("verify", "Run the Monte Carlo oracle-agreement suite");
    verify->add_option("--filter", filter, "Only properties whose name contains this substring");
    verify->add_option("--jobs", jobs, "Parallel property workers");
    verify->add_flag("--dry-run", dry_run, "List matching properties without running");

    CLI11_PARSE(app, argc, argv);

    if (run->parsed()) return cmd_run(config_path, dry_run, jobs);
    if (compare->parsed()) return cmd_compare(config_path, dry_run, jobs);
    if (verify->parsed()) {
        if (dry_run) {
            for (const auto& p : bif::verify_suite(filter)) std::cout << p.name << "\n";
            return 0;
        }
        return bif::run_verify(filter, jobs);
    }
    return 0;
}
