#pragma once

#include <chrono>
#include <cmath>

#include "mops/experiment.hpp"
#include "mops/finite_diff.hpp"

namespace mops {

// Acceptance battery. Each check computes (or loads) a small JSON bundle of
// measurements under the artifact directory and evaluates its thresholds, so
// `verify` can re-judge previously generated artifacts without recomputing.
struct CheckResult {
    std::string id;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

struct MissingArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct CorruptArtifact : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail_verify {

inline json load_or_compute(const fs::path& dir, const std::string& name, bool generate,
                            const std::function<json()>& compute) {
    fs::path file = dir / (name + ".json");
    if (fs::exists(file)) {
        std::ifstream in(file);
        json j;
        try {
            in >> j;
        } catch (const json::exception& e) {
            throw CorruptArtifact(name + ": " + e.what());
        }
        if (!j.is_object() || !j.contains("measurements"))
            throw CorruptArtifact(name + ": missing measurements");
        return j;
    }
    if (!generate) throw MissingArtifact("missing artifact: " + file.string());
    json j;
    j["id"] = name;
    j["measurements"] = compute();
    fs::create_directories(dir);
    std::ofstream out(file);
    out << j.dump(2) << "\n";
    return j;
}

inline double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
    auto ranks = [](const std::vector<double>& v) {
        std::vector<size_t> idx(v.size());
        for (size_t i = 0; i < v.size(); ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        for (size_t i = 0; i < v.size(); ++i) r[idx[i]] = static_cast<double>(i);
        return r;
    };
    std::vector<double> rx = ranks(xs), ry = ranks(ys);
    double mx = 0, my = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(rx.size());
    my /= static_cast<double>(ry.size());
    double num = 0, dx = 0, dy = 0;
    for (size_t i = 0; i < rx.size(); ++i) {
        num += (rx[i] - mx) * (ry[i] - my);
        dx += (rx[i] - mx) * (rx[i] - mx);
        dy += (ry[i] - my) * (ry[i] - my);
    }
    return num / std::sqrt(dx * dy);
}

// Exact one-sided sign test: P[Binomial(n, 1/2) >= wins].
inline double sign_test_p(int wins, int n) {
    double p = 0.0;
    for (int k = wins; k <= n; ++k) {
        double logc = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
        p += std::exp(logc - n * std::log(2.0));
    }
    return std::min(p, 1.0);
}

inline TrainConfig toy_base(Algorithm alg, int rounds, double beta, double eta, uint64_t seed,
                            Vec gamma = {}) {
    TrainConfig cfg;
    cfg.algorithm = alg;
    cfg.rounds = rounds;
    cfg.beta = beta;
    cfg.eta = eta;
    cfg.seed = seed;
    cfg.gamma_init = std::move(gamma);
    cfg.task = ToyTaskSpec{0.1, {0.0, 0.0}};
    cfg.metrics_every = 1;
    return cfg;
}

struct ToyAverages {
    double avg_o = 0.0;
    double tail_avg_c = 0.0;
    double avg_c = 0.0;
};

inline ToyAverages toy_averages(const TrainConfig& cfg) {
    RunResult res = run_training(cfg);
    RunSummary s = summarize(cfg, res);
    return {s.avg_o, s.tail_avg_c, s.avg_c};
}

template <class Fn>
json timed(Fn&& fn, double* seconds) {
    auto start = std::chrono::steady_clock::now();
    json out = fn();
    *seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

}  // namespace detail_verify

// AC1: chained E/G-interface gradients equal monolithic backprop bit-exactly
// and match central finite differences within 1e-5 relative.
inline CheckResult check_split_gradients(const fs::path& dir, bool generate) {
    using namespace detail_verify;
    double secs = 0.0;
    json bundle = load_or_compute(dir, "ac1", generate, [&] {
        return timed(
            [&]() -> json {
                Rng rng(100, 70);
                int exact_mismatches = 0;
                double max_rel = 0.0;
                const Scheme schemes[] = {Scheme::none, Scheme::share_top, Scheme::share_deep};
                for (int it = 0; it < 102; ++it) {
                    ModelSpec spec = default_model_spec();
                    spec.boundary = scheme_boundary(spec, schemes[it % 3]);
                    ParamVector params = init_params(spec, rng);
                    Vec x(15), y(5);
                    for (auto& v : x) v = rng.uniform(-1.0, 1.0);
                    for (auto& v : y) v = rng.uniform(-1.0, 1.0);

                    ForwardCache full_cache;
                    Vec out = forward(spec, params, Part::full, x, &full_cache);
                    auto [loss, lgrad] = mse_loss_and_grad(out, y);
                    (void)loss;
                    BackwardResult mono = backward(spec, params, full_cache, lgrad, Part::full);

                    ForwardCache agent_cache, shared_cache;
                    Vec z = forward(spec, params, Part::agent, x, &agent_cache);
                    Vec out2 = spec.boundary == static_cast<int>(spec.layers.size())
                                   ? z
                                   : forward(spec, params, Part::shared, z, &shared_cache);
                    auto [loss2, lgrad2] = mse_loss_and_grad(out2, y);
                    (void)loss2;
                    Vec chained;
                    if (spec.boundary == static_cast<int>(spec.layers.size())) {
                        chained = backward(spec, params, agent_cache, lgrad2, Part::agent)
                                      .param_grads;
                    } else {
                        BackwardResult sh =
                            backward(spec, params, shared_cache, lgrad2, Part::shared);
                        BackwardResult ag =
                            backward(spec, params, agent_cache, sh.input_grad, Part::agent);
                        chained = ag.param_grads;
                        chained.insert(chained.end(), sh.param_grads.begin(),
                                       sh.param_grads.end());
                    }
                    if (out != out2 || chained != mono.param_grads) ++exact_mismatches;

                    Vec fd = finite_diff_grad(
                        [&](const Vec& p) {
                            Vec o = forward(spec, ParamVector{p}, Part::full, x);
                            return mse_loss_and_grad(o, y).first;
                        },
                        params.values, 1e-5);
                    double num = 0.0, den = 0.0;
                    for (size_t k = 0; k < fd.size(); ++k) {
                        double d = fd[k] - mono.param_grads[k];
                        num += d * d;
                        den += fd[k] * fd[k];
                    }
                    max_rel = std::max(max_rel,
                                       std::sqrt(num) / std::max(std::sqrt(den), 1e-12));
                }
                return json{{"cases", 102},
                            {"exact_mismatches", exact_mismatches},
                            {"max_fd_rel_err", max_rel}};
            },
            &secs);
    });
    const json& m = bundle["measurements"];
    double rel = m.at("max_fd_rel_err");
    int mismatches = m.at("exact_mismatches");
    bool pass = mismatches == 0 && rel <= 1e-5 && (secs == 0.0 || secs < 10.0);
    char buf[160];
    std::snprintf(buf, sizeof buf, "cases=%d exact_mismatches=%d max_fd_rel_err=%.3g (tol 1e-5)",
                  static_cast<int>(m.at("cases")), mismatches, rel);
    return {"AC1", pass, buf, secs};
}

// AC2: solver norm matches a 1e-3-step grid brute force within 1e-3.
inline CheckResult check_min_norm_oracle(const fs::path& dir, bool generate) {
    using namespace detail_verify;
    double secs = 0.0;
    json bundle = load_or_compute(dir, "ac2", generate, [&] {
        return timed(
            [&]() -> json {
                Rng rng(200, 71);
                double max_diff = 0.0;
                for (int it = 0; it < 50; ++it) {
                    size_t n = it % 2 == 0 ? 2 : 3;
                    size_t dim = 2 + rng.uniform_index(3);
                    std::vector<Vec> grads(n, Vec(dim));
                    for (auto& g : grads)
                        for (auto& v : g) v = rng.uniform(-1.0, 1.0);
                    MinNormResult res = min_norm_weights(grads);

                    auto value = [&](const Vec& w) {
                        Vec s(dim, 0.0);
                        for (size_t i = 0; i < n; ++i) axpy(w[i], grads[i], s);
                        return norm2(s);
                    };
                    double best = 1e300;
                    const double step = 1e-3;
                    if (n == 2) {
                        for (double a = 0.0; a <= 1.0 + 1e-12; a += step)
                            best = std::min(best, value({a, 1.0 - a}));
                    } else {
                        for (double a = 0.0; a <= 1.0 + 1e-12; a += step)
                            for (double b = 0.0; a + b <= 1.0 + 1e-12; b += step)
                                best = std::min(best, value({a, b, 1.0 - a - b}));
                    }
                    max_diff = std::max(max_diff, std::abs(res.norm - best));
                }
                return json{{"sets", 50}, {"max_norm_diff", max_diff}};
            },
            &secs);
    });
    double diff = bundle["measurements"].at("max_norm_diff");
    bool pass = diff <= 1e-3 && (secs == 0.0 || secs < 30.0);
    char buf[120];
    std::snprintf(buf, sizeof buf, "sets=50 max_norm_diff=%.3g (tol 1e-3)", diff);
    return {"AC2", pass, buf, secs};
}

// AC3: adversarial static weighting keeps the C-error large while dynamic
// weighting cuts its tail average by at least half.
inline CheckResult check_conflict_resolution(const fs::path& dir, bool generate) {
    using namespace detail_verify;
    double secs = 0.0;
    json bundle = load_or_compute(dir, "ac3", generate, [&] {
        return timed(
            [&]() -> json {
                TrainConfig stat = toy_base(Algorithm::static_weighting, 1000, 5e-4, 0.1, 1,
                                            {1.0, 0.0, 0.0});
                TrainConfig dyn = stat;
                dyn.algorithm = Algorithm::dynamic_weighting;
                double c_static = toy_averages(stat).tail_avg_c;
                double c_dynamic = toy_averages(dyn).tail_avg_c;
                return json{{"static_tail_avg_c", c_static},
                            {"dynamic_tail_avg_c", c_dynamic}};
            },
            &secs);
    });
    const json& m = bundle["measurements"];
    double cs = m.at("static_tail_avg_c"), cd = m.at("dynamic_tail_avg_c");
    double reduction = cs > 0.0 ? 1.0 - cd / cs : 0.0;
    bool pass = cs >= 0.5 && reduction >= 0.5 && (secs == 0.0 || secs < 60.0);
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "static_tail_c=%.4f (>=0.5) dynamic_tail_c=%.4f reduction=%.1f%% (>=50%%)", cs,
                  cd, 100.0 * reduction);
    return {"AC3", pass, buf, secs};
}

// AC4: fitted log-log slope of the time-averaged O-error against T under
// beta = 0.5 T^{-1/2} lies in [-0.45, -0.10].
inline CheckResult check_o_rate(const fs::path& dir, bool generate) {
    using namespace detail_verify;
    double secs = 0.0;
    json bundle = load_or_compute(dir, "ac4", generate, [&] {
        return timed(
            [&]() -> json {
                const std::vector<int> Ts = {250, 500, 1000, 2000, 4000};
                const int seeds = 10;
                std::vector<double> mean_o(Ts.size(), 0.0);
                struct Job {
                    size_t ti;
                    uint64_t seed;
                };
                std::vector<Job> jobs;
                for (size_t ti = 0; ti < Ts.size(); ++ti)
                    for (int s = 0; s < seeds; ++s)
                        jobs.push_back({ti, static_cast<uint64_t>(1 + s)});
                std::vector<double> results(jobs.size());
                parallel_for(jobs.size(), [&](size_t i) {
                    int T = Ts[jobs[i].ti];
                    TrainConfig cfg =
                        toy_base(Algorithm::static_weighting, T,
                                 0.5 / std::sqrt(static_cast<double>(T)), 0.0, jobs[i].seed);
                    results[i] = toy_averages(cfg).avg_o;
                });
                for (size_t i = 0; i < jobs.size(); ++i)
                    mean_o[jobs[i].ti] += results[i] / seeds;
                std::vector<std::pair<double, double>> series;
                for (size_t ti = 0; ti < Ts.size(); ++ti)
                    series.emplace_back(static_cast<double>(Ts[ti]), mean_o[ti]);
                return json{{"T", Ts}, {"mean_avg_o", mean_o},
                            {"slope", fit_rate_slope(series)}};
            },
            &secs);
    });
    double slope = bundle["measurements"].at("slope");
    bool pass = slope >= -0.45 && slope <= -0.10 && (secs == 0.0 || secs < 300.0);
    char buf[120];
    std::snprintf(buf, sizeof buf, "slope=%.3f (range [-0.45,-0.10])", slope);
    return {"AC4", pass, buf, secs};
}

// AC5: G-error grows with T, shrinks with D, and tracks sqrt(T/D) within a
// factor of 3 across the grid (csi task, seed-averaged curves).
inline CheckResult check_g_shape(const fs::path& dir, bool generate) {
    using namespace detail_verify;
    double secs = 0.0;
    json bundle = load_or_compute(dir, "ac5", generate, [&] {
        return timed(
            [&]() -> json {
                const std::vector<int> Ts = {100, 300, 1000};
                const std::vector<int> Ds = {200, 800, 3200};
                const int seeds = 10;
                auto make_cfg = [&](int T, int D, uint64_t seed, int cadence) {
                    TrainConfig cfg;
                    cfg.algorithm = Algorithm::static_weighting;
                    cfg.scheme = Scheme::share_top;
                    cfg.rounds = T;
                    cfg.beta = 0.01;
                    cfg.seed = seed;
                    cfg.task = SeriesTaskSpec{{Modality::csi, Modality::csi, Modality::csi}, D, -1.0};
                    cfg.metrics_every = cadence;
                    cfg.n_pop_factor = 10;
                    return cfg;
                };
                struct Job {
                    bool t_axis;
                    size_t idx;
                    uint64_t seed;
                };
                std::vector<Job> jobs;
                for (size_t i = 0; i < Ts.size(); ++i)
                    for (int s = 0; s < seeds; ++s) jobs.push_back({true, i, static_cast<uint64_t>(1 + s)});
                for (size_t i = 0; i < Ds.size(); ++i)
                    for (int s = 0; s < seeds; ++s) jobs.push_back({false, i, static_cast<uint64_t>(1 + s)});
                std::vector<double> results(jobs.size());
                parallel_for(jobs.size(), [&](size_t k) {
                    const Job& job = jobs[k];
                    TrainConfig cfg =
                        job.t_axis
                            ? make_cfg(Ts[job.idx], 500, job.seed, std::max(1, Ts[job.idx] / 20))
                            : make_cfg(500, Ds[job.idx], job.seed, 25);
                    RunResult res = run_training(cfg);
                    results[k] = summarize(cfg, res).avg_g;
                });
                std::vector<double> gT(Ts.size(), 0.0), gD(Ds.size(), 0.0);
                for (size_t k = 0; k < jobs.size(); ++k) {
                    if (jobs[k].t_axis)
                        gT[jobs[k].idx] += results[k] / seeds;
                    else
                        gD[jobs[k].idx] += results[k] / seeds;
                }
                return json{{"T", Ts}, {"D", Ds}, {"g_vs_T", gT}, {"g_vs_D", gD}};
            },
            &secs);
    });
    const json& m = bundle["measurements"];
    std::vector<double> ts, ds, gT = m.at("g_vs_T"), gD = m.at("g_vs_D");
    for (int t : m.at("T").get<std::vector<int>>()) ts.push_back(t);
    for (int d : m.at("D").get<std::vector<int>>()) ds.push_back(d);
    double sp_t = detail_verify::spearman(ts, gT);
    double sp_d = detail_verify::spearman(ds, gD);
    double rmin = 1e300, rmax = 0.0;
    for (size_t i = 0; i < ts.size(); ++i) {
        double r = gT[i] / std::sqrt(ts[i] / (3.0 * 500.0));
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
    }
    for (size_t i = 0; i < ds.size(); ++i) {
        double r = gD[i] / std::sqrt(500.0 / (3.0 * ds[i]));
        rmin = std::min(rmin, r);
        rmax = std::max(rmax, r);
    }
    double spread = rmax / rmin;
    bool pass = sp_t >= 0.8 && sp_d <= -0.8 && spread < 3.0 && (secs == 0.0 || secs < 600.0);
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "spearman_T=%.2f (>=0.8) spearman_D=%.2f (<=-0.8) ratio_spread=%.2f (<3)", sp_t,
                  sp_d, spread);
    return {"AC5", pass, buf, secs};
}

// AC6: the dynamic algorithm's O-error excess stays within twice the
// evaluated extra bound term 3*sqrt(eta*mu_l^4/2), mu_l fitted from sweeps.
inline CheckResult check_dynamic_overhead(const fs::path& dir, bool generate) {
    using namespace detail_verify;
    double secs = 0.0;
    json bundle = load_or_compute(dir, "ac6", generate, [&] {
        return timed(
            [&]() -> json {
                const int seeds = 3;
                // fit bundle: static O over (T, beta); dynamic C over (eta, beta)
                std::vector<RunPoint> points;
                std::vector<TrainConfig> cfgs;
                std::vector<RunPoint> protos;
                for (int T : {500, 1000, 2000}) {
                    for (double beta : {2.5e-4, 5e-4, 1e-3}) {
                        RunPoint p;
                        p.T = T;
                        p.beta = beta;
                        p.algorithm = Algorithm::static_weighting;
                        protos.push_back(p);
                        cfgs.push_back(toy_base(Algorithm::static_weighting, T, beta, 0.0, 1,
                                                {1.0, 0.0, 0.0}));
                    }
                }
                for (double eta : {0.05, 0.1, 0.2, 0.5, 1.0}) {
                    for (double beta : {2.5e-4, 1e-3}) {
                        RunPoint p;
                        p.T = 1000;
                        p.beta = beta;
                        p.eta = eta;
                        p.algorithm = Algorithm::dynamic_weighting;
                        protos.push_back(p);
                        cfgs.push_back(toy_base(Algorithm::dynamic_weighting, 1000, beta, eta, 1,
                                                {1.0, 0.0, 0.0}));
                    }
                }
                std::vector<double> sum_o(cfgs.size(), 0.0), sum_c(cfgs.size(), 0.0);
                struct Job {
                    size_t ci;
                    int seed;
                };
                std::vector<Job> jobs;
                for (size_t ci = 0; ci < cfgs.size(); ++ci)
                    for (int s = 0; s < seeds; ++s) jobs.push_back({ci, s});
                std::vector<std::pair<double, double>> results(jobs.size());
                parallel_for(jobs.size(), [&](size_t k) {
                    TrainConfig cfg = cfgs[jobs[k].ci];
                    cfg.seed = static_cast<uint64_t>(1 + jobs[k].seed);
                    ToyAverages avg = toy_averages(cfg);
                    results[k] = {avg.avg_o, avg.avg_c};
                });
                for (size_t k = 0; k < jobs.size(); ++k) {
                    sum_o[jobs[k].ci] += results[k].first / seeds;
                    sum_c[jobs[k].ci] += results[k].second / seeds;
                }
                for (size_t ci = 0; ci < cfgs.size(); ++ci) {
                    if (protos[ci].algorithm == Algorithm::static_weighting)
                        protos[ci].avg_o = sum_o[ci];
                    else
                        protos[ci].avg_c = sum_c[ci];
                    points.push_back(protos[ci]);
                }
                FitResult fit = fit_constants(points);

                // matched pair at the defaults
                const double eta_used = 0.1;
                double o_static = 0.0, o_dynamic = 0.0;
                for (int s = 0; s < seeds; ++s) {
                    TrainConfig stat = toy_base(Algorithm::static_weighting, 1000, 5e-4, eta_used,
                                                static_cast<uint64_t>(10 + s));
                    TrainConfig dyn = stat;
                    dyn.algorithm = Algorithm::dynamic_weighting;
                    o_static += toy_averages(stat).avg_o / seeds;
                    o_dynamic += toy_averages(dyn).avg_o / seeds;
                }
                return json{{"mu_l", fit.constants.mu_l},
                            {"eta", eta_used},
                            {"o_static", o_static},
                            {"o_dynamic", o_dynamic}};
            },
            &secs);
    });
    const json& m = bundle["measurements"];
    double mu_l = m.at("mu_l"), eta = m.at("eta");
    double excess = static_cast<double>(m.at("o_dynamic")) - static_cast<double>(m.at("o_static"));
    double term = 3.0 * std::sqrt(eta * std::pow(mu_l, 4) / 2.0);
    bool pass = excess <= 2.0 * term && (secs == 0.0 || secs < 120.0);
    char buf[160];
    std::snprintf(buf, sizeof buf, "excess=%.4f bound_term=%.4f (2x tolerance: %.4f) mu_l=%.3f",
                  excess, term, 2.0 * term, mu_l);
    return {"AC6", pass, buf, secs};
}

// AC7: per-agent training flops order share_top < share_deep < none, the
// analytic counter equals the instrumented one, and inference costs less
// than one training round.
inline CheckResult check_resource_accounting(const fs::path& dir, bool generate) {
    using namespace detail_verify;
    double secs = 0.0;
    json bundle = load_or_compute(dir, "ac7", generate, [&] {
        return timed(
            [&]() -> json {
                json out;
                const int T = 5;
                std::map<std::string, long long> per_round;
                bool instrumented_ok = true;
                for (Scheme scheme : {Scheme::none, Scheme::share_top, Scheme::share_deep}) {
                    TrainConfig cfg;
                    cfg.scheme = scheme;
                    cfg.rounds = T;
                    cfg.beta = 1e-3;
                    cfg.seed = 5;
                    cfg.task = SeriesTaskSpec{{Modality::demand, Modality::csi, Modality::traffic},
                                              40, -1.0};
                    cfg.metrics_every = T;
                    cfg.n_pop_factor = 1;
                    SessionContext ctx = SessionContext::build(cfg);
                    SessionOutput sess = run_session(ctx);

                    long long fwd = flops(ctx.agent_specs[0], Part::full, Phase::forward);
                    long long bwd = flops(ctx.agent_specs[0], Part::full, Phase::backward);
                    // T forwards, T-1 local updates (round 0 has no gradient yet)
                    long long analytic = T * fwd + (T - 1) * bwd;
                    if (analytic != sess.flops_agent[0]) instrumented_ok = false;

                    long long sh_fwd = flops(ctx.shared_spec, Part::full, Phase::forward);
                    long long sh_bwd = flops(ctx.shared_spec, Part::full, Phase::backward);
                    long long ctrl_analytic = 3LL * T * (sh_fwd + sh_bwd);
                    if (ctrl_analytic != sess.flops_ctrl) instrumented_ok = false;

                    per_round[to_string(scheme)] = fwd + bwd;
                    out["inference_" + std::string(to_string(scheme))] =
                        flops(ctx.agent_specs[0], Part::full, Phase::inference);
                }
                out["train_round_none"] = per_round["none"];
                out["train_round_share_top"] = per_round["share_top"];
                out["train_round_share_deep"] = per_round["share_deep"];
                out["instrumented_matches"] = instrumented_ok;
                return out;
            },
            &secs);
    });
    const json& m = bundle["measurements"];
    long long none = m.at("train_round_none"), top = m.at("train_round_share_top"),
              deep = m.at("train_round_share_deep");
    bool instrumented = m.at("instrumented_matches");
    long long inf_top = m.at("inference_share_top");
    bool order = top < deep && deep < none;
    bool inf_below = inf_top < top;
    double pct = 100.0 * static_cast<double>(inf_top) / static_cast<double>(top);
    bool pass = order && instrumented && inf_below;
    char buf[220];
    std::snprintf(buf, sizeof buf,
                  "train flops/round: top=%lld < deep=%lld < none=%lld; instrumented=%s; "
                  "inference=%.1f%% of training round",
                  top, deep, none, instrumented ? "exact" : "MISMATCH", pct);
    return {"AC7", pass, buf, secs};
}

// AC8: partial sharing beats no sharing on the mixed-modality setup with a
// sign test over paired seeds.
inline CheckResult check_sharing_helps(const fs::path& dir, bool generate) {
    using namespace detail_verify;
    double secs = 0.0;
    json bundle = load_or_compute(dir, "ac8", generate, [&] {
        return timed(
            [&]() -> json {
                const int seeds = 10;
                auto make_cfg = [&](Scheme scheme, uint64_t seed) {
                    TrainConfig cfg;
                    cfg.scheme = scheme;
                    cfg.rounds = 1000;
                    cfg.beta = 0.03;
                    cfg.seed = seed;
                    cfg.task = SeriesTaskSpec{{Modality::demand, Modality::csi, Modality::traffic},
                                              500, -1.0};
                    cfg.metrics_every = 250;
                    cfg.n_pop_factor = 2;
                    return cfg;
                };
                std::vector<double> top(seeds), none(seeds);
                parallel_for(static_cast<size_t>(2 * seeds), [&](size_t k) {
                    bool is_top = k < static_cast<size_t>(seeds);
                    uint64_t seed = 1 + (k % seeds);
                    TrainConfig cfg = make_cfg(is_top ? Scheme::share_top : Scheme::none, seed);
                    RunResult res = run_training(cfg);
                    RunSummary s = summarize(cfg, res);
                    double mean = 0.0;
                    for (double v : s.final_o_agent) mean += v / s.final_o_agent.size();
                    (is_top ? top : none)[k % seeds] = mean;
                });
                return json{{"share_top", top}, {"none", none}};
            },
            &secs);
    });
    const json& m = bundle["measurements"];
    std::vector<double> top = m.at("share_top"), none = m.at("none");
    int wins = 0;
    double mean_improvement = 0.0;
    for (size_t i = 0; i < top.size(); ++i) {
        if (top[i] < none[i]) ++wins;
        mean_improvement += (none[i] - top[i]) / static_cast<double>(top.size());
    }
    double p = detail_verify::sign_test_p(wins, static_cast<int>(top.size()));
    bool pass = mean_improvement > 0.0 && p < 0.1;
    char buf[160];
    std::snprintf(buf, sizeof buf, "wins=%d/%d sign_test_p=%.4f (<0.1) mean_improvement=%.4f",
                  wins, static_cast<int>(top.size()), p, mean_improvement);
    return {"AC8", pass, buf, secs};
}

// AC9: golden byte vectors, fuzzed round trip, and exact per-round byte
// accounting across algorithms and tasks.
inline CheckResult check_protocol_conformance(const fs::path& dir, bool generate) {
    using namespace detail_verify;
    double secs = 0.0;
    json bundle = load_or_compute(dir, "ac9", generate, [&] {
        return timed(
            [&]() -> json {
                auto hex = [](const std::vector<uint8_t>& b) {
                    std::string s;
                    char t[3];
                    for (uint8_t v : b) {
                        std::snprintf(t, sizeof t, "%02x", v);
                        s += t;
                    }
                    return s;
                };
                // canonical frames, frozen from the wire-format definition
                bool golden_ok =
                    hex(encode(GradientRecord{1, 0, {1.0}})) ==
                        "4d4f505301020100000000000c00000001000000000000000000f03f" &&
                    hex(encode(WeightsRecord{3, 12, {0.25, 0.75}})) ==
                        "4d4f5053010303000c0000001400000002000000000000000000d03f000000000000e83f" &&
                    hex(encode(ControlRecord{5, 0, 0, {1000.0}})) ==
                        "4d4f505301040500000000000d00000000010000000000000000408f40";

                Rng rng(900, 72);
                int roundtrip_failures = 0;
                for (int it = 0; it < 10000; ++it) {
                    Vec z(rng.uniform_index(20)), y(rng.uniform_index(8));
                    for (auto& v : z) v = rng.uniform(-100.0, 100.0);
                    for (auto& v : y) v = rng.uniform(-100.0, 100.0);
                    EmbeddingRecord rec{static_cast<uint16_t>(rng.uniform_index(1000)),
                                        static_cast<uint32_t>(rng.uniform_index(1u << 30)),
                                        static_cast<SampleTag>(rng.uniform_index(3)), z, y};
                    auto back = std::get<EmbeddingRecord>(decode(encode(RoundMessage{rec})));
                    if (back.z != rec.z || back.y != rec.y || back.agent_id != rec.agent_id ||
                        back.round != rec.round || back.tag != rec.tag)
                        ++roundtrip_failures;
                }

                // byte accounting on live sessions
                bool bytes_ok = true;
                for (Algorithm alg :
                     {Algorithm::static_weighting, Algorithm::dynamic_weighting}) {
                    for (int task_kind = 0; task_kind < 2; ++task_kind) {
                        TrainConfig cfg;
                        cfg.algorithm = alg;
                        cfg.rounds = 6;
                        cfg.beta = 1e-3;
                        cfg.seed = 3;
                        cfg.metrics_every = 3;
                        if (task_kind == 0) {
                            cfg.task = ToyTaskSpec{0.1, {0.0, 0.0}};
                        } else {
                            cfg.scheme = Scheme::share_top;
                            cfg.task = SeriesTaskSpec{
                                {Modality::demand, Modality::csi, Modality::traffic}, 30, -1.0};
                            cfg.n_pop_factor = 1;
                        }
                        SessionContext ctx = SessionContext::build(cfg);
                        SessionOutput sess = run_session(ctx);
                        size_t emb = alg == Algorithm::dynamic_weighting ? 3 : 1;
                        uint64_t expect = 0;
                        for (size_t i = 0; i < ctx.n_agents(); ++i) {
                            size_t e = static_cast<size_t>(ctx.embedding_dim(i));
                            size_t p = task_kind == 0 ? 0 : 5;
                            expect += 6 * emb * embedding_message_bytes(e, p);
                            expect += 6 * gradient_message_bytes(e);
                            expect += control_message_bytes(1) + weights_message_bytes(3);
                        }
                        if (sess.bytes_total != expect) bytes_ok = false;
                    }
                }
                return json{{"golden_ok", golden_ok},
                            {"roundtrip_failures", roundtrip_failures},
                            {"byte_accounting_exact", bytes_ok}};
            },
            &secs);
    });
    const json& m = bundle["measurements"];
    bool pass = m.at("golden_ok") && m.at("roundtrip_failures") == 0 &&
                m.at("byte_accounting_exact");
    char buf[160];
    std::snprintf(buf, sizeof buf, "golden=%s roundtrip_failures=%d byte_accounting=%s",
                  m.at("golden_ok").get<bool>() ? "ok" : "FAIL",
                  m.at("roundtrip_failures").get<int>(),
                  m.at("byte_accounting_exact").get<bool>() ? "exact" : "FAIL");
    return {"AC9", pass, buf, secs};
}

// AC10: byte-identical metrics CSVs across harness modes.
inline CheckResult check_determinism(const fs::path& dir, bool generate) {
    using namespace detail_verify;
    double secs = 0.0;
    json bundle = load_or_compute(dir, "ac10", generate, [&] {
        return timed(
            [&]() -> json {
                bool identical = true;
                for (int kind = 0; kind < 2; ++kind) {
                    TrainConfig cfg;
                    cfg.algorithm = Algorithm::dynamic_weighting;
                    cfg.rounds = kind == 0 ? 60 : 25;
                    cfg.beta = 1e-3;
                    cfg.eta = 0.1;
                    cfg.seed = 12;
                    cfg.metrics_every = 5;
                    if (kind == 0) {
                        cfg.task = ToyTaskSpec{0.1, {0.0, 0.0}};
                    } else {
                        cfg.task = SeriesTaskSpec{
                            {Modality::demand, Modality::csi, Modality::traffic}, 50, -1.0};
                        cfg.n_pop_factor = 2;
                    }
                    TrainConfig threaded = cfg;
                    threaded.mode = HarnessMode::multi_thread;
                    RunResult a = run_training(cfg);
                    RunResult b = run_training(threaded);
                    std::ostringstream sa, sb;
                    write_metrics_csv(sa, a.trajectory, cfg.n_agents());
                    write_metrics_csv(sb, b.trajectory, cfg.n_agents());
                    if (sa.str() != sb.str()) identical = false;
                }
                return json{{"csv_identical", identical}};
            },
            &secs);
    });
    bool pass = bundle["measurements"].at("csv_identical");
    return {"AC10", pass,
            pass ? "single- and multi-threaded CSVs byte-identical" : "CSV mismatch", secs};
}

inline std::vector<CheckResult> run_acceptance(const fs::path& dir, bool generate) {
    std::vector<CheckResult> results;
    results.push_back(check_split_gradients(dir, generate));
    results.push_back(check_min_norm_oracle(dir, generate));
    results.push_back(check_conflict_resolution(dir, generate));
    results.push_back(check_o_rate(dir, generate));
    results.push_back(check_g_shape(dir, generate));
    results.push_back(check_dynamic_overhead(dir, generate));
    results.push_back(check_resource_accounting(dir, generate));
    results.push_back(check_sharing_helps(dir, generate));
    results.push_back(check_protocol_conformance(dir, generate));
    results.push_back(check_determinism(dir, generate));
    return results;
}

}  // namespace mops
