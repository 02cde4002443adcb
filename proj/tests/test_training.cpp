#include <catch2/catch_amalgamated.hpp>

#include "mops/metrics.hpp"
#include "mops/training.hpp"

using namespace mops;

namespace {

TrainConfig toy_config(Algorithm alg, int rounds, double beta = 5e-4, double eta = 0.1) {
    TrainConfig cfg;
    cfg.algorithm = alg;
    cfg.rounds = rounds;
    cfg.beta = beta;
    cfg.eta = eta;
    cfg.seed = 11;
    cfg.task = ToyTaskSpec{0.1, {0.0, 0.0}};
    cfg.metrics_every = 1;
    return cfg;
}

TrainConfig series_config(Scheme scheme, int rounds, uint64_t seed = 4) {
    TrainConfig cfg;
    cfg.scheme = scheme;
    cfg.rounds = rounds;
    cfg.beta = 5e-4;
    cfg.seed = seed;
    cfg.task = SeriesTaskSpec{{Modality::demand, Modality::csi, Modality::traffic}, 60, -1.0};
    cfg.metrics_every = 5;
    cfg.n_pop_factor = 2;
    return cfg;
}

}  // namespace

TEST_CASE("scheme none equals a monolithic SGD reference step for step") {
    TrainConfig cfg;
    cfg.scheme = Scheme::none;
    cfg.rounds = 40;
    cfg.beta = 1e-2;
    cfg.seed = 21;
    cfg.task = SeriesTaskSpec{{Modality::csi}, 80, -1.0};
    cfg.metrics_every = 1;
    cfg.n_pop_factor = 1;

    SessionContext ctx = SessionContext::build(cfg);
    SessionOutput out = run_session(ctx);

    // Monolithic reference: plain SGD where round t applies the full-model
    // gradient of round t-1's sample at round t-1's parameters.
    ModelSpec spec = ctx.full_specs[0];
    ParamVector params = ParamVector::zeros(spec);
    Rng init(cfg.seed, stream::agent_init);
    init_params_range(spec, 0, static_cast<int>(spec.layers.size()), init, params);
    Rng sampler(cfg.seed, stream::agent_sampler);
    const Dataset& data = ctx.datasets[0];

    Vec pending;
    size_t snap = 0;
    for (int t = 0; t < cfg.rounds; ++t) {
        if (t > 0) axpy(-cfg.beta, pending, params.values);
        size_t j = sampler.uniform_index(data.xs.size());
        ForwardCache cache;
        Vec outv = forward(spec, params, Part::full, data.xs[j], &cache);
        auto [loss, lgrad] = mse_loss_and_grad(outv, data.ys[j]);
        (void)loss;
        pending = backward(spec, params, cache, lgrad, Part::full).param_grads;
        REQUIRE(out.per_agent_snaps[0][snap].round == t);
        REQUIRE(out.per_agent_snaps[0][snap].params == params.values);
        ++snap;
    }
}

TEST_CASE("round zero skips the local update") {
    TrainConfig cfg = series_config(Scheme::share_top, 1);
    cfg.metrics_every = 1;
    SessionContext ctx = SessionContext::build(cfg);
    SessionOutput out = run_session(ctx);

    ParamVector expect = ParamVector::zeros(ctx.agent_specs[0]);
    Rng init(cfg.seed, stream::agent_init);
    init_params_range(ctx.agent_specs[0], 0, static_cast<int>(ctx.agent_specs[0].layers.size()),
                      init, expect);
    CHECK(out.per_agent_snaps[0][0].params == expect.values);
    CHECK(out.ctrl_snaps.size() == 1);  // T=1: trajectory length 1
}

TEST_CASE("static weighting keeps gamma exactly fixed") {
    TrainConfig cfg = toy_config(Algorithm::static_weighting, 50);
    cfg.gamma_init = {0.2, 0.3, 0.5};
    SessionOutput out = run_session(SessionContext::build(cfg));
    for (const auto& snap : out.ctrl_snaps) REQUIRE(snap.gamma == cfg.gamma_init);
}

TEST_CASE("weight update projection example") {
    // Pre-projection (0.4, 0.5) from gamma=(0.5, 0.5), eta=0.1, inner
    // products (1, 0); projected onto the simplex.
    auto w = project_simplex({0.4, 0.5});
    CHECK(w[0] == Catch::Approx(0.45).margin(1e-12));
    CHECK(w[1] == Catch::Approx(0.55).margin(1e-12));
}

TEST_CASE("identical losses keep dynamic weights uniform") {
    TrainConfig cfg;
    cfg.algorithm = Algorithm::dynamic_weighting;
    cfg.scheme = Scheme::share_top;
    cfg.rounds = 50;
    cfg.beta = 1e-3;
    cfg.eta = 0.5;
    cfg.seed = 33;
    cfg.task = SeriesTaskSpec{{Modality::csi, Modality::csi, Modality::csi}, 40, -1.0};
    SessionContext ctx = SessionContext::build(cfg);

    Transport net;
    net.register_endpoint(detail_train::ctrl_endpoint());
    for (size_t i = 0; i < 3; ++i) net.register_endpoint(detail_train::agent_endpoint(i));
    detail_train::ControllerActor ctrl(ctx, net);

    Rng rng(5, 77);
    for (int t = 0; t < 50; ++t) {
        Vec z(16), y(5);
        for (auto& v : z) v = rng.uniform(-1.0, 1.0);
        for (auto& v : y) v = rng.uniform(-1.0, 1.0);
        for (uint16_t i = 0; i < 3; ++i) {
            for (SampleTag tag : {SampleTag::primary, SampleTag::extra1, SampleTag::extra2}) {
                EmbeddingRecord rec{i, static_cast<uint32_t>(t), tag, z, y};
                net.send(detail_train::agent_endpoint(i), detail_train::ctrl_endpoint(),
                         encode(RoundMessage{rec}));
            }
        }
        ctrl.process_round(t);
        for (size_t i = 0; i < 3; ++i) net.recv(detail_train::agent_endpoint(i));
        for (double g : ctrl.gamma().values()) REQUIRE(g == Catch::Approx(1.0 / 3).margin(1e-9));
    }
}

TEST_CASE("dynamic weighting escapes an adversarial vertex on the toy task") {
    TrainConfig stat = toy_config(Algorithm::static_weighting, 300);
    stat.gamma_init = {1.0, 0.0, 0.0};
    TrainConfig dyn = stat;
    dyn.algorithm = Algorithm::dynamic_weighting;

    SessionOutput s = run_session(SessionContext::build(stat));
    SessionOutput d = run_session(SessionContext::build(dyn));
    CHECK(s.ctrl_snaps.back().gamma == Vec{1.0, 0.0, 0.0});
    CHECK(d.ctrl_snaps.back().gamma[0] < 0.9);  // weight moved off the vertex
}

TEST_CASE("agent emits one record under static and three under dynamic") {
    for (Algorithm alg : {Algorithm::static_weighting, Algorithm::dynamic_weighting}) {
        TrainConfig cfg = series_config(Scheme::share_top, 1);
        cfg.algorithm = alg;
        SessionContext ctx = SessionContext::build(cfg);
        Transport net;
        net.register_endpoint(detail_train::ctrl_endpoint());
        for (size_t i = 0; i < 3; ++i) net.register_endpoint(detail_train::agent_endpoint(i));
        detail_train::AgentActor agent(ctx, 0, net);
        agent.begin_round(0);

        std::vector<EmbeddingRecord> got;
        size_t expected = alg == Algorithm::dynamic_weighting ? 3 : 1;
        for (size_t k = 0; k < expected; ++k)
            got.push_back(std::get<EmbeddingRecord>(decode(net.recv(detail_train::ctrl_endpoint()))));
        CHECK(got.size() == expected);
        CHECK(got[0].tag == SampleTag::primary);
        if (expected == 3) {
            CHECK(got[1].tag == SampleTag::extra1);
            CHECK(got[2].tag == SampleTag::extra2);
            CHECK(got[0].z != got[1].z);  // disjoint PRNG positions
            CHECK(got[1].z != got[2].z);
        }

        // emitted z equals the agent-part forward recomputed offline
        ParamVector params = ParamVector::zeros(ctx.agent_specs[0]);
        Rng init(cfg.seed, stream::agent_init);
        init_params_range(ctx.agent_specs[0], 0,
                          static_cast<int>(ctx.agent_specs[0].layers.size()), init, params);
        Rng sampler(cfg.seed, stream::agent_sampler);
        size_t j = sampler.uniform_index(ctx.datasets[0].xs.size());
        Vec z = forward(ctx.agent_specs[0], params, Part::full, ctx.datasets[0].xs[j]);
        CHECK(got[0].z == z);
        CHECK(got[0].y == ctx.datasets[0].ys[j]);
    }
}

TEST_CASE("agent rejects a boundary gradient from the wrong round") {
    TrainConfig cfg = series_config(Scheme::share_top, 2);
    SessionContext ctx = SessionContext::build(cfg);
    Transport net;
    net.register_endpoint(detail_train::ctrl_endpoint());
    for (size_t i = 0; i < 3; ++i) net.register_endpoint(detail_train::agent_endpoint(i));
    detail_train::AgentActor agent(ctx, 0, net);
    agent.begin_round(0);

    GradientRecord g{0, 5, Vec(16, 0.0)};  // round 5 instead of 0
    net.send(detail_train::ctrl_endpoint(), detail_train::agent_endpoint(0),
             encode(RoundMessage{g}));
    CHECK_THROWS_AS(agent.end_round(0), ContractViolation);

    GradientRecord wrong_width{0, 0, Vec(3, 0.0)};
    net.send(detail_train::ctrl_endpoint(), detail_train::agent_endpoint(0),
             encode(RoundMessage{wrong_width}));
    CHECK_THROWS_AS(agent.end_round(0), ContractViolation);
}

TEST_CASE("controller enforces the round barrier") {
    TrainConfig cfg = series_config(Scheme::share_top, 2);
    SessionContext ctx = SessionContext::build(cfg);
    Transport net;
    net.register_endpoint(detail_train::ctrl_endpoint());
    for (size_t i = 0; i < 3; ++i) net.register_endpoint(detail_train::agent_endpoint(i));
    detail_train::ControllerActor ctrl(ctx, net);

    // a record two rounds ahead violates the barrier
    EmbeddingRecord ahead{0, 2, SampleTag::primary, Vec(16, 0.0), Vec(5, 0.0)};
    net.send(detail_train::agent_endpoint(0), detail_train::ctrl_endpoint(),
             encode(RoundMessage{ahead}));
    CHECK_THROWS_AS(ctrl.process_round(0), BarrierViolation);

    // duplicates within a round are rejected
    detail_train::ControllerActor ctrl2(ctx, net);
    EmbeddingRecord dup{1, 0, SampleTag::primary, Vec(16, 0.0), Vec(5, 0.0)};
    net.send(detail_train::agent_endpoint(1), detail_train::ctrl_endpoint(),
             encode(RoundMessage{dup}));
    net.send(detail_train::agent_endpoint(1), detail_train::ctrl_endpoint(),
             encode(RoundMessage{dup}));
    CHECK_THROWS_AS(ctrl2.process_round(0), BarrierViolation);
}

TEST_CASE("trajectories are deterministic and mode-independent") {
    for (bool toy : {true, false}) {
        TrainConfig cfg = toy ? toy_config(Algorithm::dynamic_weighting, 30)
                              : series_config(Scheme::share_deep, 12);
        if (!toy) cfg.algorithm = Algorithm::dynamic_weighting;

        RunResult a = run_training(cfg);
        RunResult b = run_training(cfg);
        TrainConfig threaded = cfg;
        threaded.mode = HarnessMode::multi_thread;
        RunResult c = run_training(threaded);

        std::ostringstream sa, sb, sc;
        write_metrics_csv(sa, a.trajectory, cfg.n_agents());
        write_metrics_csv(sb, b.trajectory, cfg.n_agents());
        write_metrics_csv(sc, c.trajectory, cfg.n_agents());
        REQUIRE(sa.str() == sb.str());
        REQUIRE(sa.str() == sc.str());
        REQUIRE(a.state.shared_params == c.state.shared_params);
        for (size_t i = 0; i < cfg.n_agents(); ++i)
            REQUIRE(a.state.agent_params[i] == c.state.agent_params[i]);
    }
}

TEST_CASE("metrics cadence does not perturb the trajectory") {
    TrainConfig a = series_config(Scheme::share_top, 10);
    a.metrics_every = 1;
    TrainConfig b = a;
    b.metrics_every = 1000;
    RunResult ra = run_training(a);
    RunResult rb = run_training(b);
    REQUIRE(ra.state.shared_params == rb.state.shared_params);
    for (size_t i = 0; i < 3; ++i) REQUIRE(ra.state.agent_params[i] == rb.state.agent_params[i]);
    CHECK(rb.trajectory.size() == 2);  // rounds 0 and 9
}

TEST_CASE("per-round byte accounting matches the analytic formula") {
    for (Algorithm alg : {Algorithm::static_weighting, Algorithm::dynamic_weighting}) {
        for (bool toy : {true, false}) {
            TrainConfig cfg = toy ? toy_config(alg, 7) : series_config(Scheme::share_top, 7);
            cfg.algorithm = alg;
            SessionContext ctx = SessionContext::build(cfg);
            SessionOutput out = run_session(ctx);

            const size_t n = ctx.n_agents();
            const size_t T = static_cast<size_t>(cfg.rounds);
            size_t emb_per_round = alg == Algorithm::dynamic_weighting ? 3 : 1;
            uint64_t expect = 0;
            for (size_t i = 0; i < n; ++i) {
                size_t e = static_cast<size_t>(ctx.embedding_dim(i));
                size_t p = toy ? 0 : 5;
                expect += T * emb_per_round * embedding_message_bytes(e, p);  // E-interface
                expect += T * gradient_message_bytes(e);                      // G-interface
                expect += control_message_bytes(1);                           // session start
                expect += weights_message_bytes(n);                           // final broadcast
            }
            CHECK(out.bytes_total == expect);
        }
    }
}

TEST_CASE("numeric failures carry the round index") {
    TrainConfig cfg = toy_config(Algorithm::static_weighting, 5, 1e60);
    bool threw = false;
    try {
        run_training(cfg);
    } catch (const NumericError& e) {
        threw = true;
        CHECK(std::string(e.what()).find("round ") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("collaborative inference leaves parameters untouched") {
    TrainConfig cfg = series_config(Scheme::share_top, 5);
    RunResult res = run_training(cfg);
    TrainedState state = res.state;
    Vec shared_before = state.shared_params;
    std::vector<Vec> agents_before = state.agent_params;

    std::vector<Vec> inputs;
    for (size_t i = 0; i < 3; ++i) inputs.push_back(res.state.ctx.datasets[i].xs[0]);
    std::vector<Vec> outputs = collaborative_inference(state, inputs);
    REQUIRE(outputs.size() == 3);
    CHECK(state.shared_params == shared_before);
    CHECK(state.agent_params == agents_before);

    // output equals the full-model forward of the concatenated parameters
    for (size_t i = 0; i < 3; ++i) {
        ParamVector concat{state.agent_params[i]};
        concat.values.insert(concat.values.end(), state.shared_params.begin(),
                             state.shared_params.end());
        Vec full = forward(state.ctx.full_specs[i], concat, Part::full, inputs[i]);
        REQUIRE(outputs[i] == full);
    }
}

TEST_CASE("scheme none inference is entirely local") {
    TrainConfig cfg = series_config(Scheme::none, 3);
    RunResult res = run_training(cfg);
    CHECK(res.state.shared_params.empty());
    std::vector<Vec> inputs;
    for (size_t i = 0; i < 3; ++i) inputs.push_back(res.state.ctx.datasets[i].xs[1]);
    std::vector<Vec> outputs = collaborative_inference(res.state, inputs);
    for (size_t i = 0; i < 3; ++i) {
        Vec local = forward(res.state.ctx.agent_specs[i], ParamVector{res.state.agent_params[i]},
                            Part::full, inputs[i]);
        REQUIRE(outputs[i] == local);
    }
}

TEST_CASE("weight simplex invariant holds through a dynamic run") {
    TrainConfig cfg = toy_config(Algorithm::dynamic_weighting, 200, 5e-4, 0.5);
    SessionOutput out = run_session(SessionContext::build(cfg));
    for (const auto& snap : out.ctrl_snaps) {
        double sum = 0.0;
        for (double g : snap.gamma) {
            REQUIRE(g >= 0.0);
            sum += g;
        }
        REQUIRE(std::abs(sum - 1.0) <= 1e-12);
    }
}

TEST_CASE("weight_grads=full runs and differs from the shared-only rule") {
    TrainConfig cfg = series_config(Scheme::share_top, 10);
    cfg.algorithm = Algorithm::dynamic_weighting;
    cfg.eta = 0.5;
    RunResult shared_only = run_training(cfg);
    cfg.weight_grads_full = true;
    RunResult full = run_training(cfg);
    CHECK(shared_only.state.gamma.values() != full.state.gamma.values());

    cfg.mode = HarnessMode::multi_thread;
    CHECK_THROWS_AS(SessionContext::build(cfg), std::invalid_argument);
}
