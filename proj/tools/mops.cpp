// Experiment runner for the MoPS split-model training simulator.
//
//   mops run    --config cfg.json [--seed N] [--out DIR] [--metrics-every K]
//               [--dump-datasets]
//   mops sweep  --config cfg.json --axis T --values 250,500,1000 [--seeds N]
//               [--rate-schedule] [--out DIR]
//   mops rates  --config cfg.json --values 250,500,1000,2000 [--seeds N] [--out DIR]
//   mops verify [--out DIR] [--generate]
//
// MOPS_THREADS caps worker parallelism for sweeps and verification.
#include <CLI11.hpp>

#include "mops/verify.hpp"

using namespace mops;

namespace {

std::vector<std::string> split_values(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : csv) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

void print_summary(const RunSummary& s) {
    std::printf("T=%d algorithm=%s scheme=%s seed=%llu\n", s.cfg.rounds,
                to_string(s.cfg.algorithm), to_string(s.cfg.scheme),
                static_cast<unsigned long long>(s.cfg.seed));
    std::printf("  avg: o=%.6g g=%.6g c=%.6g | final: o=%.6g g=%.6g c=%.6g\n", s.avg_o, s.avg_g,
                s.avg_c, s.final_o, s.final_g, s.final_c);
    std::printf("  flops/agent=%lld flops/ctrl=%lld inference/agent=%lld bytes=%lld\n",
                s.flops_agent, s.flops_ctrl, s.flops_inference_agent, s.bytes);
}

int run_command(const std::string& config_path, long long seed_override, const std::string& out,
                int metrics_every, bool dump_datasets) {
    TrainConfig cfg = load_config(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    if (metrics_every > 0) cfg.metrics_every = metrics_every;
    RunSummary s = cmd_run(cfg, out);
    if (dump_datasets) {
        SessionContext ctx = SessionContext::build(cfg);
        for (size_t i = 0; i < ctx.datasets.size(); ++i) {
            std::ofstream csv(fs::path(out) / ("dataset_agent" + std::to_string(i) + ".csv"));
            dataset_to_csv(csv, ctx.datasets[i]);
        }
    }
    print_summary(s);
    std::printf("wrote %s\n", s.csv_path.string().c_str());
    return 0;
}

int sweep_command(const std::string& config_path, long long seed_override,
                  const std::string& axis, const std::string& values, int seeds,
                  bool rate_schedule, const std::string& out, int metrics_every) {
    TrainConfig cfg = load_config(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    if (metrics_every > 0) cfg.metrics_every = metrics_every;
    SweepAxis sweep{axis, split_values(values)};
    SweepResult res = cmd_sweep(cfg, sweep, seeds, rate_schedule, out);
    std::printf("sweep axis=%s values=%zu seeds=%d -> %zu runs\n", axis.c_str(),
                sweep.values.size(), seeds, res.runs.size());
    for (const auto& agg : res.summary["aggregates"])
        std::printf("  %s=%s avg_o=%.6g avg_g=%.6g avg_c=%.6g\n", axis.c_str(),
                    agg["value"].get<std::string>().c_str(), agg["avg_o_err"].get<double>(),
                    agg["avg_g_err"].get<double>(), agg["avg_c_err"].get<double>());
    if (res.summary.contains("slope_avg_o_err"))
        std::printf("  slope(avg_o vs T)=%.4f\n", res.summary["slope_avg_o_err"].get<double>());
    return 0;
}

int verify_command(const std::string& out, bool generate) {
    std::vector<CheckResult> results = run_acceptance(out, generate);
    int failed = 0;
    for (const auto& r : results) {
        std::printf("%-5s %s  %s\n", r.id.c_str(), r.pass ? "PASS" : "FAIL", r.detail.c_str());
        if (!r.pass) ++failed;
    }
    std::printf("%d/%zu checks passed\n", static_cast<int>(results.size()) - failed,
                results.size());
    return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"MoPS multi-agent split-model training simulator"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", axis, values;
    long long seed = -1;
    int seeds = 1, metrics_every = -1;
    bool rate_schedule = false, generate = false, dump_datasets = false;

    auto* run = app.add_subcommand("run", "execute one training run");
    run->add_option("--config", config_path)->required();
    run->add_option("--seed", seed);
    run->add_option("--out", out_dir);
    run->add_option("--metrics-every", metrics_every);
    run->add_flag("--dump-datasets", dump_datasets);

    auto* sweep = app.add_subcommand("sweep", "run a parameter sweep");
    sweep->add_option("--config", config_path)->required();
    sweep->add_option("--axis", axis)->required();
    sweep->add_option("--values", values)->required();
    sweep->add_option("--seeds", seeds);
    sweep->add_option("--seed", seed);
    sweep->add_option("--out", out_dir);
    sweep->add_option("--metrics-every", metrics_every);
    sweep->add_flag("--rate-schedule", rate_schedule);

    auto* rates = app.add_subcommand("rates", "T-sweep with beta = c*T^{-1/2} and slope report");
    rates->add_option("--config", config_path)->required();
    rates->add_option("--values", values)->required();
    rates->add_option("--seeds", seeds);
    rates->add_option("--seed", seed);
    rates->add_option("--out", out_dir);
    rates->add_option("--metrics-every", metrics_every);

    auto* verify = app.add_subcommand("verify", "evaluate the acceptance checks");
    verify->add_option("--out", out_dir);
    verify->add_flag("--generate", generate,
                     "compute missing measurement bundles instead of failing");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(run))
            return run_command(config_path, seed, out_dir, metrics_every, dump_datasets);
        if (app.got_subcommand(sweep))
            return sweep_command(config_path, seed, axis, values, seeds, rate_schedule, out_dir,
                                 metrics_every);
        if (app.got_subcommand(rates))
            return sweep_command(config_path, seed, "T", values, seeds, /*rate_schedule=*/true,
                                 out_dir, metrics_every);
        if (app.got_subcommand(verify)) return verify_command(out_dir, generate);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const MissingArtifact& e) {
        std::fprintf(stderr, "%s (rerun with --generate)\n", e.what());
        return 2;
    } catch (const CorruptArtifact& e) {
        std::fprintf(stderr, "corrupt artifact: %s\n", e.what());
        return 2;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
