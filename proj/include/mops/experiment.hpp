#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mops/metrics.hpp"

namespace mops {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr int kSummarySchemaVersion = 1;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline Scheme scheme_from_string(const std::string& s) {
    if (s == "none") return Scheme::none;
    if (s == "share_top") return Scheme::share_top;
    if (s == "share_deep") return Scheme::share_deep;
    throw ConfigError("unknown scheme: " + s);
}

inline Algorithm algorithm_from_string(const std::string& s) {
    if (s == "static") return Algorithm::static_weighting;
    if (s == "dynamic") return Algorithm::dynamic_weighting;
    throw ConfigError("unknown algorithm: " + s);
}

inline Modality modality_from_string(const std::string& s) {
    if (s == "demand") return Modality::demand;
    if (s == "csi") return Modality::csi;
    if (s == "traffic") return Modality::traffic;
    throw ConfigError("unknown modality: " + s);
}

// Config JSON with explicit keys; unknown keys are rejected so typos fail
// loudly. Defaults follow the hyperparameter table: T=1000, beta=5e-4,
// eta=0.1.
inline TrainConfig parse_config(const json& j) {
    static const std::vector<std::string> known = {
        "algorithm", "scheme", "T", "beta", "eta", "gamma_init", "seed", "task",
        "n_agents", "metrics_every", "n_pop_factor", "harness", "weight_grads"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(known.begin(), known.end(), it.key()) == known.end())
            throw ConfigError("unknown config key: " + it.key());

    TrainConfig cfg;
    try {
        cfg.algorithm = algorithm_from_string(j.value("algorithm", "static"));
        cfg.scheme = scheme_from_string(j.value("scheme", "share_top"));
        cfg.rounds = j.value("T", 1000);
        cfg.beta = j.value("beta", 5e-4);
        cfg.eta = j.value("eta", 0.1);
        cfg.seed = j.value("seed", 1ull);
        cfg.metrics_every = j.value("metrics_every", 10);
        cfg.n_pop_factor = j.value("n_pop_factor", 50);
        cfg.mode = j.value("harness", "single") == std::string("threaded")
                       ? HarnessMode::multi_thread
                       : HarnessMode::single_thread;
        cfg.weight_grads_full = j.value("weight_grads", "shared") == std::string("full");

        json task = j.value("task", json::object());
        std::string modality = task.value("modality", "mixed");
        if (modality == "toy") {
            ToyTaskSpec toy;
            toy.sigma = task.value("sigma", 0.1);
            if (task.contains("w0")) toy.w0 = task["w0"].get<Vec>();
            cfg.task = toy;
        } else {
            SeriesTaskSpec series;
            int n = j.value("n_agents", 3);
            if (modality == "mixed") {
                if (n != 3) throw ConfigError("mixed task requires n_agents=3");
                series.modalities = {Modality::demand, Modality::csi, Modality::traffic};
            } else {
                series.modalities.assign(static_cast<size_t>(n), modality_from_string(modality));
            }
            series.train_size = task.value("train_size", 500);
            series.noise_override = task.value("noise", -1.0);
            cfg.task = series;
        }
        if (j.contains("gamma_init") && !j["gamma_init"].is_string())
            cfg.gamma_init = j["gamma_init"].get<Vec>();
        cfg.validate();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    return cfg;
}

inline TrainConfig load_config(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

inline json config_to_json(const TrainConfig& cfg) {
    json j;
    j["algorithm"] = to_string(cfg.algorithm);
    j["scheme"] = to_string(cfg.scheme);
    j["T"] = cfg.rounds;
    j["beta"] = cfg.beta;
    j["eta"] = cfg.eta;
    j["seed"] = cfg.seed;
    j["metrics_every"] = cfg.metrics_every;
    j["n_pop_factor"] = cfg.n_pop_factor;
    j["harness"] = cfg.mode == HarnessMode::multi_thread ? "threaded" : "single";
    if (!cfg.gamma_init.empty()) j["gamma_init"] = cfg.gamma_init;
    if (const auto* toy = std::get_if<ToyTaskSpec>(&cfg.task)) {
        j["task"] = {{"modality", "toy"}, {"sigma", toy->sigma}, {"w0", toy->w0}};
    } else {
        const auto& s = std::get<SeriesTaskSpec>(cfg.task);
        bool mixed = s.modalities.size() == 3 && s.modalities[0] == Modality::demand &&
                     s.modalities[1] == Modality::csi && s.modalities[2] == Modality::traffic;
        j["task"] = {{"modality", mixed ? "mixed" : to_string(s.modalities[0])},
                     {"train_size", s.train_size}};
        if (s.noise_override >= 0.0) j["task"]["noise"] = s.noise_override;
        j["n_agents"] = s.modalities.size();
    }
    return j;
}

// Aggregates of one trajectory used in summaries and fits.
struct RunSummary {
    TrainConfig cfg;
    double avg_o = 0.0, avg_g = 0.0, avg_c = 0.0;
    double final_o = 0.0, final_g = 0.0, final_c = 0.0;
    std::vector<double> final_o_agent;
    double tail_avg_c = 0.0;  // mean C-error over the last 200 rounds' records
    Vec final_gamma;
    long long flops_agent = 0, flops_ctrl = 0, bytes = 0;
    long long flops_inference_agent = 0;
    fs::path csv_path;
};

inline RunSummary summarize(const TrainConfig& cfg, const RunResult& res) {
    RunSummary s;
    s.cfg = cfg;
    const auto& tr = res.trajectory;
    if (tr.empty()) throw ContractViolation("summarize: empty trajectory");
    double tail_cutoff = static_cast<double>(cfg.rounds) - 200.0;
    int tail_n = 0;
    for (const auto& r : tr) {
        s.avg_o += r.o_err;
        s.avg_g += r.g_err;
        s.avg_c += r.c_err;
        if (r.round >= tail_cutoff) {
            s.tail_avg_c += r.c_err;
            ++tail_n;
        }
    }
    s.avg_o /= static_cast<double>(tr.size());
    s.avg_g /= static_cast<double>(tr.size());
    s.avg_c /= static_cast<double>(tr.size());
    if (tail_n > 0) s.tail_avg_c /= tail_n;
    const auto& last = tr.back();
    s.final_o = last.o_err;
    s.final_g = last.g_err;
    s.final_c = last.c_err;
    s.final_o_agent = last.o_err_agent;
    s.final_gamma = last.gamma;
    s.flops_agent = last.flops_agent;
    s.flops_ctrl = last.flops_ctrl;
    s.bytes = last.bytes;
    if (!res.state.ctx.toy)
        s.flops_inference_agent = flops(res.state.ctx.agent_specs[0], Part::full, Phase::inference);
    return s;
}

inline json summary_to_json(const RunSummary& s) {
    json j;
    j["config"] = config_to_json(s.cfg);
    j["avg_o_err"] = s.avg_o;
    j["avg_g_err"] = s.avg_g;
    j["avg_c_err"] = s.avg_c;
    j["tail_avg_c_err"] = s.tail_avg_c;
    j["final_o_err"] = s.final_o;
    j["final_g_err"] = s.final_g;
    j["final_c_err"] = s.final_c;
    j["final_o_err_per_agent"] = s.final_o_agent;
    j["final_gamma"] = s.final_gamma;
    j["flops_agent"] = s.flops_agent;
    j["flops_ctrl"] = s.flops_ctrl;
    j["flops_inference_agent"] = s.flops_inference_agent;
    j["bytes"] = s.bytes;
    if (!s.csv_path.empty()) j["csv"] = s.csv_path.string();
    return j;
}

// Executes one training run and writes metrics.csv + summary.json.
inline RunSummary cmd_run(const TrainConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    RunResult res = run_training(cfg);
    RunSummary s = summarize(cfg, res);
    s.csv_path = out_dir / "metrics.csv";
    {
        std::ofstream csv(s.csv_path, std::ios::binary);
        write_metrics_csv(csv, res.trajectory, cfg.n_agents());
    }
    json j = summary_to_json(s);
    j["schema_version"] = kSummarySchemaVersion;
    std::ofstream out(out_dir / "summary.json");
    out << j.dump(2) << "\n";
    return s;
}

inline size_t worker_threads() {
    if (const char* env = std::getenv("MOPS_THREADS")) {
        long v = std::atol(env);
        if (v >= 1) return static_cast<size_t>(v);
    }
    unsigned hw = std::thread::hardware_concurrency();
    return hw == 0 ? 4 : hw;
}

// Runs fn(i) for i in [0, n) on a bounded worker pool. Each job owns its
// outputs, so execution order cannot affect results.
template <class Fn>
void parallel_for(size_t n, Fn&& fn) {
    size_t workers = std::min(worker_threads(), std::max<size_t>(n, 1));
    if (workers <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct SweepAxis {
    std::string name;  // T, beta, eta, D, scheme, algorithm
    std::vector<std::string> values;
};

inline TrainConfig apply_axis(TrainConfig cfg, const std::string& axis, const std::string& value) {
    if (axis == "T")
        cfg.rounds = std::stoi(value);
    else if (axis == "beta")
        cfg.beta = std::stod(value);
    else if (axis == "eta")
        cfg.eta = std::stod(value);
    else if (axis == "D") {
        auto* s = std::get_if<SeriesTaskSpec>(&cfg.task);
        if (!s) throw ConfigError("sweep axis D requires a time-series task");
        s->train_size = std::stoi(value);
    } else if (axis == "scheme")
        cfg.scheme = scheme_from_string(value);
    else if (axis == "algorithm")
        cfg.algorithm = algorithm_from_string(value);
    else
        throw ConfigError("unknown sweep axis: " + axis);
    return cfg;
}

struct SweepResult {
    std::vector<RunSummary> runs;  // value-major, seed-minor
    json summary;
};

// One run per (value, seed). Under --rate-schedule with axis=T, beta is the
// config beta scaled by T^{-1/2}.
inline SweepResult cmd_sweep(const TrainConfig& base, const SweepAxis& axis, int seeds,
                             bool rate_schedule, const fs::path& out_dir) {
    if (axis.values.empty()) throw ConfigError("sweep: no axis values");
    if (seeds < 1) throw ConfigError("sweep: seeds must be >= 1");
    fs::create_directories(out_dir);

    struct Job {
        TrainConfig cfg;
        fs::path dir;
        size_t value_idx;
    };
    std::vector<Job> jobs;
    for (size_t vi = 0; vi < axis.values.size(); ++vi) {
        for (int s = 0; s < seeds; ++s) {
            TrainConfig cfg = apply_axis(base, axis.name, axis.values[vi]);
            cfg.seed = base.seed + static_cast<uint64_t>(s);
            if (rate_schedule && axis.name == "T")
                cfg.beta = base.beta / std::sqrt(static_cast<double>(cfg.rounds));
            fs::path dir = out_dir / (axis.name + "_" + axis.values[vi] + "_seed" +
                                      std::to_string(cfg.seed));
            jobs.push_back({std::move(cfg), std::move(dir), vi});
        }
    }
    std::vector<RunSummary> runs(jobs.size());
    parallel_for(jobs.size(), [&](size_t i) { runs[i] = cmd_run(jobs[i].cfg, jobs[i].dir); });

    json summary;
    summary["schema_version"] = kSummarySchemaVersion;
    summary["axis"] = axis.name;
    summary["values"] = axis.values;
    summary["seeds"] = seeds;
    summary["runs"] = json::array();
    for (const auto& r : runs) summary["runs"].push_back(summary_to_json(r));

    // Seed-averaged aggregates per axis value.
    json agg = json::array();
    std::vector<std::pair<double, double>> o_series, g_series, c_series;
    for (size_t vi = 0; vi < axis.values.size(); ++vi) {
        double o = 0, g = 0, c = 0, finals_o = 0;
        for (size_t i = 0; i < jobs.size(); ++i) {
            if (jobs[i].value_idx != vi) continue;
            o += runs[i].avg_o;
            g += runs[i].avg_g;
            c += runs[i].avg_c;
            finals_o += runs[i].final_o;
        }
        o /= seeds;
        g /= seeds;
        c /= seeds;
        finals_o /= seeds;
        agg.push_back({{"value", axis.values[vi]},
                       {"avg_o_err", o},
                       {"avg_g_err", g},
                       {"avg_c_err", c},
                       {"final_o_err", finals_o}});
        if (axis.name == "T") {
            double t = std::stod(axis.values[vi]);
            if (o > 0.0) o_series.emplace_back(t, o);
            if (g > 0.0) g_series.emplace_back(t, g);
            if (c > 0.0) c_series.emplace_back(t, c);
        }
    }
    summary["aggregates"] = agg;
    if (axis.name == "T" && o_series.size() >= 4) {
        summary["slope_avg_o_err"] = fit_rate_slope(o_series);
        if (g_series.size() >= 4) summary["slope_avg_g_err"] = fit_rate_slope(g_series);
        if (c_series.size() >= 4) summary["slope_avg_c_err"] = fit_rate_slope(c_series);
    }
    std::ofstream out(out_dir / "sweep_summary.json");
    out << summary.dump(2) << "\n";
    return SweepResult{std::move(runs), std::move(summary)};
}

}  // namespace mops
