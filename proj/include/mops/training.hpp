#pragma once

#include <array>
#include <exception>
#include <functional>
#include <memory>
#include <optional>
#include <thread>
#include <variant>

#include "mops/model.hpp"
#include "mops/protocol.hpp"
#include "mops/simplex.hpp"
#include "mops/tasks.hpp"

namespace mops {

enum class Algorithm { static_weighting, dynamic_weighting };
enum class HarnessMode { single_thread, multi_thread };

inline const char* to_string(Algorithm a) {
    return a == Algorithm::static_weighting ? "static" : "dynamic";
}

// Toy task: quadratic objectives live entirely on the controller (the whole
// parameter point is shared); agents contribute noise samples.
struct ToyTaskSpec {
    double sigma = 0.1;
    Vec w0 = {0.0, 0.0};
};

struct SeriesTaskSpec {
    std::vector<Modality> modalities;  // one per agent
    int train_size = 500;
    double noise_override = -1.0;
};

using TaskSpec = std::variant<ToyTaskSpec, SeriesTaskSpec>;

struct TrainConfig {
    Algorithm algorithm = Algorithm::static_weighting;
    Scheme scheme = Scheme::share_top;
    int rounds = 1000;
    double beta = 5e-4;
    double eta = 0.1;
    Vec gamma_init;  // empty: uniform
    uint64_t seed = 1;
    TaskSpec task = SeriesTaskSpec{{Modality::demand, Modality::csi, Modality::traffic}, 500, -1.0};
    int metrics_every = 10;
    int n_pop_factor = 50;
    bool weight_grads_full = false;
    HarnessMode mode = HarnessMode::single_thread;

    size_t n_agents() const {
        if (const auto* s = std::get_if<SeriesTaskSpec>(&task)) return s->modalities.size();
        return 3;
    }

    void validate() const {
        if (rounds < 1) throw std::invalid_argument("TrainConfig: rounds must be >= 1");
        if (!(beta > 0.0)) throw std::invalid_argument("TrainConfig: beta must be positive");
        if (!(eta >= 0.0)) throw std::invalid_argument("TrainConfig: eta must be nonnegative");
        if (!gamma_init.empty() && gamma_init.size() != n_agents())
            throw std::invalid_argument("TrainConfig: gamma_init size mismatch");
        if (!gamma_init.empty()) {
            WeightSimplex check{gamma_init};  // enforces the simplex invariant
            (void)check;
        }
        if (weight_grads_full && mode != HarnessMode::single_thread)
            throw std::invalid_argument("TrainConfig: weight_grads=full requires the single-thread harness");
    }
};

inline bool metrics_round(const TrainConfig& cfg, int t) {
    return t % cfg.metrics_every == 0 || t == cfg.rounds - 1;
}

namespace detail_train {

struct AgentSnap {
    int round;
    Vec params;
    long long flops;
    uint64_t bytes;
};

struct CtrlSnap {
    int round;
    Vec shared_params;
    Vec gamma;
    long long flops;
    uint64_t bytes;
};

inline std::string agent_endpoint(size_t i) { return "agent" + std::to_string(i); }
inline const char* ctrl_endpoint() { return "ctrl"; }

}  // namespace detail_train

// Immutable per-session context shared by actors, metrics, and inference.
struct SessionContext {
    TrainConfig cfg;
    bool toy = false;
    ToyObjectiveSet toy_set;

    // Model-task members (empty for toy sessions).
    std::vector<ModelSpec> full_specs;   // per agent
    std::vector<ModelSpec> agent_specs;  // layers [0, boundary)
    ModelSpec shared_spec;               // layers [boundary, n)
    std::vector<Dataset> datasets;
    std::vector<Dataset> population;

    size_t n_agents() const { return cfg.n_agents(); }
    int boundary() const { return toy ? 0 : agent_specs.empty() ? 0 : static_cast<int>(agent_specs[0].layers.size()); }

    // Width of the E-interface embedding (the agent part's output, or the
    // model input when the agent part is empty).
    int embedding_dim(size_t agent) const {
        if (toy) return 2;
        int d = agent_specs[agent].output_dim(Part::full);
        return d >= 0 ? d : full_specs[agent].input_dim(Part::full);
    }

    static SessionContext build(const TrainConfig& cfg) {
        cfg.validate();
        SessionContext ctx;
        ctx.cfg = cfg;
        if (const auto* toy = std::get_if<ToyTaskSpec>(&cfg.task)) {
            ctx.toy = true;
            ctx.toy_set = ToyObjectiveSet::default_symmetric(toy->sigma);
            if (toy->w0.size() != 2) throw std::invalid_argument("ToyTaskSpec: w0 must be 2-dimensional");
            return ctx;
        }
        const auto& spec = std::get<SeriesTaskSpec>(cfg.task);
        if (spec.modalities.empty()) throw std::invalid_argument("SeriesTaskSpec: no agents");
        ModelSpec base = default_model_spec();
        for (size_t i = 0; i < spec.modalities.size(); ++i) {
            auto [agent_spec, shared_spec] = split_model(base, cfg.scheme);
            ModelSpec full = base;
            full.boundary = scheme_boundary(base, cfg.scheme);
            ctx.full_specs.push_back(full);
            ctx.agent_specs.push_back(agent_spec);
            ctx.shared_spec = shared_spec;

            TimeSeriesTask task;
            task.modality = spec.modalities[i];
            task.train_size = spec.train_size;
            task.noise_override = spec.noise_override;
            task.seed = cfg.seed * 1000 + i;
            ctx.datasets.push_back(gen_timeseries(task));
            size_t pop_n = static_cast<size_t>(cfg.n_pop_factor) * static_cast<size_t>(spec.train_size);
            ctx.population.push_back(population_sample(task, ctx.datasets.back(), std::max<size_t>(pop_n, 1)));
        }
        return ctx;
    }
};

namespace detail_train {

// Controller-side evaluation of one agent's loss on the shared part:
// returns shared-parameter gradients plus the boundary gradient that the
// G-interface ships back.
struct SharedEval {
    double loss;
    Vec shared_grad;
    Vec boundary_grad;
};

inline SharedEval eval_shared(const SessionContext& ctx, const Vec& shared_params, size_t agent,
                              const Vec& z, const Vec& y, FlopCounter* fc) {
    if (ctx.toy) {
        const Vec w = shared_params;
        Vec g = ctx.toy_set.noiseless_grad(agent, w);
        g[0] += ctx.toy_set.noise_sigma * z[0];
        g[1] += ctx.toy_set.noise_sigma * z[1];
        double loss = ctx.toy_set.stochastic_loss(agent, w, z);
        if (!std::isfinite(loss) || !all_finite(g)) throw NumericError("eval_shared: non-finite loss");
        return SharedEval{loss, std::move(g),
                          {ctx.toy_set.noise_sigma * w[0], ctx.toy_set.noise_sigma * w[1]}};
    }
    const ModelSpec& spec = ctx.shared_spec;
    ParamVector params{shared_params};
    if (spec.layers.empty()) {
        // Scheme 1: no shared layers; the boundary gradient is the loss
        // gradient at the model output.
        auto [loss, grad] = mse_loss_and_grad(z, y);
        if (!std::isfinite(loss)) throw NumericError("eval_shared: non-finite loss");
        return SharedEval{loss, {}, std::move(grad)};
    }
    ForwardCache cache;
    Vec out = forward(spec, params, Part::full, z, &cache, fc);
    auto [loss, lgrad] = mse_loss_and_grad(out, y);
    if (!std::isfinite(loss)) throw NumericError("eval_shared: non-finite loss");
    BackwardResult back = backward(spec, params, cache, lgrad, Part::full, fc);
    return SharedEval{loss, std::move(back.param_grads), std::move(back.input_grad)};
}

class AgentActor {
  public:
    AgentActor(const SessionContext& ctx, size_t id, Transport& net)
        : ctx_(ctx),
          id_(id),
          net_(net),
          sampler_(ctx.cfg.seed, stream::agent_sampler + id) {
        if (!ctx_.toy) {
            const ModelSpec& spec = ctx_.agent_specs[id_];
            params_ = ParamVector::zeros(spec);
            Rng init(ctx_.cfg.seed, stream::agent_init + id_);
            init_params_range(spec, 0, static_cast<int>(spec.layers.size()), init, params_);
        }
    }

    void setup() {
        auto msg = decode(net_.recv(agent_endpoint(id_)));
        const auto* c = std::get_if<ControlRecord>(&msg);
        if (!c || c->code != 0) throw ContractViolation("agent: expected session-start control");
        if (!c->aux.empty() && static_cast<int>(c->aux[0]) != ctx_.cfg.rounds)
            throw ContractViolation("agent: round count mismatch in control message");
    }

    // Step (1) local update from the previous round's boundary gradient,
    // then step (2) embedding upload for round t.
    void begin_round(int t) {
        if (t > 0) local_update(t);
        auto [x, y] = draw_sample();
        Vec z = agent_forward(x, &cache_);
        cache_.tag = t;
        emit(t, SampleTag::primary, z, y);
        if (ctx_.cfg.algorithm == Algorithm::dynamic_weighting) {
            extra_samples_.clear();
            for (SampleTag tag : {SampleTag::extra1, SampleTag::extra2}) {
                auto [xe, ye] = draw_sample();
                Vec ze = agent_forward(xe, nullptr);
                if (ctx_.cfg.weight_grads_full) extra_samples_.emplace_back(xe, ye);
                emit(t, tag, ze, ye);
            }
        }
        if (metrics_round(ctx_.cfg, t)) {
            snaps_.push_back(AgentSnap{t, params_.values, flops_.flops,
                                       net_.bytes_sent_by(agent_endpoint(id_))});
        }
    }

    // Step (4) receive the boundary gradient for round t over the G-interface.
    void end_round(int t) {
        auto msg = decode(net_.recv(agent_endpoint(id_)));
        const auto* g = std::get_if<GradientRecord>(&msg);
        if (!g) throw ContractViolation("agent: expected gradient record");
        if (static_cast<int>(g->round) != t)
            throw ContractViolation("agent: boundary gradient round mismatch");
        if (static_cast<int>(g->g_boundary.size()) != ctx_.embedding_dim(id_))
            throw ContractViolation("agent: boundary gradient width mismatch");
        boundary_grad_ = g->g_boundary;
    }

    void teardown() {
        auto msg = decode(net_.recv(agent_endpoint(id_)));
        if (!std::holds_alternative<WeightsRecord>(msg))
            throw ContractViolation("agent: expected final weights broadcast");
    }

    const ParamVector& params() const { return params_; }
    const std::vector<AgentSnap>& snapshots() const { return snaps_; }
    long long flop_count() const { return flops_.flops; }
    const std::vector<std::pair<Vec, Vec>>& extra_samples() const { return extra_samples_; }

  private:
    void local_update(int t) {
        if (ctx_.toy || ctx_.agent_specs[id_].layers.empty()) return;
        if (!boundary_grad_) throw ContractViolation("agent: missing boundary gradient");
        const ModelSpec& spec = ctx_.agent_specs[id_];
        BackwardResult back =
            backward(spec, params_, cache_, *boundary_grad_, Part::full, &flops_, t - 1);
        axpy(-ctx_.cfg.beta, back.param_grads, params_.values);
    }

    std::pair<Vec, Vec> draw_sample() {
        if (ctx_.toy) return {sampler_.gaussian_vec(2), Vec{}};
        const Dataset& d = ctx_.datasets[id_];
        size_t j = sampler_.uniform_index(d.xs.size());
        return {d.xs[j], d.ys[j]};
    }

    Vec agent_forward(const Vec& x, ForwardCache* cache) {
        if (ctx_.toy || ctx_.agent_specs[id_].layers.empty()) {
            if (cache) {
                cache->first_layer = cache->last_layer = 0;
                cache->inputs.clear();
            }
            return x;  // empty agent part: identity
        }
        return forward(ctx_.agent_specs[id_], params_, Part::full, x, cache, &flops_);
    }

    void emit(int t, SampleTag tag, Vec z, Vec y) {
        EmbeddingRecord rec;
        rec.agent_id = static_cast<uint16_t>(id_);
        rec.round = static_cast<uint32_t>(t);
        rec.tag = tag;
        rec.z = std::move(z);
        rec.y = std::move(y);
        net_.send(agent_endpoint(id_), ctrl_endpoint(), encode(RoundMessage{std::move(rec)}));
    }

    const SessionContext& ctx_;
    size_t id_;
    Transport& net_;
    Rng sampler_;
    ParamVector params_;
    ForwardCache cache_;
    std::optional<Vec> boundary_grad_;
    FlopCounter flops_;
    std::vector<AgentSnap> snaps_;
    std::vector<std::pair<Vec, Vec>> extra_samples_;  // only kept under weight_grads=full
};

class ControllerActor {
  public:
    ControllerActor(const SessionContext& ctx, Transport& net) : ctx_(ctx), net_(net) {
        const size_t n = ctx.n_agents();
        gamma_ = ctx.cfg.gamma_init.empty() ? WeightSimplex::uniform(n)
                                            : WeightSimplex(ctx.cfg.gamma_init);
        if (ctx.toy) {
            shared_params_ = std::get<ToyTaskSpec>(ctx.cfg.task).w0;
        } else {
            ParamVector p = ParamVector::zeros(ctx.shared_spec);
            Rng init(ctx.cfg.seed, stream::shared_init);
            init_params_range(ctx.shared_spec, 0, static_cast<int>(ctx.shared_spec.layers.size()),
                              init, p);
            shared_params_ = std::move(p.values);
        }
    }

    void setup() {
        for (size_t i = 0; i < ctx_.n_agents(); ++i) {
            ControlRecord c;
            c.agent_id = static_cast<uint16_t>(i);
            c.round = 0;
            c.code = 0;
            c.aux = {static_cast<double>(ctx_.cfg.rounds)};
            net_.send(ctrl_endpoint(), agent_endpoint(i), encode(RoundMessage{c}));
        }
    }

    // Steps (3) and, under dynamic weighting, the Eq-style coefficient
    // update, followed by step (4) gradient distribution.
    void process_round(int t) {
        collect_round(t);
        if (ctx_.cfg.algorithm == Algorithm::dynamic_weighting) update_weights(t);

        const size_t n = ctx_.n_agents();
        std::vector<Vec> boundary(n);
        Vec update(shared_params_.size(), 0.0);
        for (size_t i = 0; i < n; ++i) {
            const EmbeddingRecord& rec = slot(i, SampleTag::primary);
            SharedEval ev = eval_shared(ctx_, shared_params_, i, rec.z, rec.y, &flops_);
            if (!ev.shared_grad.empty()) axpy(gamma_[i], ev.shared_grad, update);
            boundary[i] = std::move(ev.boundary_grad);
        }
        axpy(-ctx_.cfg.beta, update, shared_params_);

        for (size_t i = 0; i < n; ++i) {
            GradientRecord g;
            g.agent_id = static_cast<uint16_t>(i);
            g.round = static_cast<uint32_t>(t);
            g.g_boundary = std::move(boundary[i]);
            net_.send(ctrl_endpoint(), agent_endpoint(i), encode(RoundMessage{std::move(g)}));
        }
        if (metrics_round(ctx_.cfg, t)) {
            snaps_.push_back(CtrlSnap{t, shared_params_, gamma_.values(), flops_.flops,
                                      net_.bytes_sent_by(ctrl_endpoint())});
        }
        records_.assign(ctx_.n_agents() * 3, std::nullopt);
    }

    void teardown() {
        for (size_t i = 0; i < ctx_.n_agents(); ++i) {
            WeightsRecord w;
            w.agent_id = static_cast<uint16_t>(i);
            w.round = static_cast<uint32_t>(ctx_.cfg.rounds);
            w.weights = gamma_.values();
            net_.send(ctrl_endpoint(), agent_endpoint(i), encode(RoundMessage{w}));
        }
    }

    const Vec& shared_params() const { return shared_params_; }
    const WeightSimplex& gamma() const { return gamma_; }
    const std::vector<CtrlSnap>& snapshots() const { return snaps_; }
    long long flop_count() const { return flops_.flops; }

    // God-view hook for the weight_grads=full sensitivity mode; installed by
    // the single-thread driver only.
    std::function<double(size_t agent, const Vec& gamma)> full_grad_correction;

  private:
    const EmbeddingRecord& slot(size_t agent, SampleTag tag) const {
        const auto& r = records_[agent * 3 + static_cast<size_t>(tag)];
        if (!r) throw BarrierViolation("controller: missing agent record");
        return *r;
    }

    void collect_round(int t) {
        records_.assign(ctx_.n_agents() * 3, std::nullopt);
        const size_t expected =
            ctx_.n_agents() * (ctx_.cfg.algorithm == Algorithm::dynamic_weighting ? 3 : 1);
        size_t have = 0;
        auto accept = [&](EmbeddingRecord&& rec) {
            if (rec.agent_id >= ctx_.n_agents())
                throw BarrierViolation("controller: record from unknown agent");
            if (static_cast<int>(rec.z.size()) != ctx_.embedding_dim(rec.agent_id))
                throw ContractViolation("controller: embedding width mismatch");
            auto& cell = records_[rec.agent_id * 3 + static_cast<size_t>(rec.tag)];
            if (cell) throw BarrierViolation("controller: duplicate record in round");
            cell = std::move(rec);
            ++have;
        };
        while (!stash_.empty() && have < expected) {
            EmbeddingRecord rec = std::move(stash_.front());
            stash_.pop_front();
            if (static_cast<int>(rec.round) != t)
                throw BarrierViolation("controller: stashed record from wrong round");
            accept(std::move(rec));
        }
        while (have < expected) {
            auto msg = decode(net_.recv(ctrl_endpoint()));
            auto* rec = std::get_if<EmbeddingRecord>(&msg);
            if (!rec) throw BarrierViolation("controller: unexpected message type in round");
            if (static_cast<int>(rec->round) == t + 1) {
                stash_.push_back(std::move(*rec));  // never consumed before round t completes
                continue;
            }
            if (static_cast<int>(rec->round) != t)
                throw BarrierViolation("controller: record round out of window");
            accept(std::move(*rec));
        }
    }

    // Dynamic-weighting coefficient update: per agent, the inner product of
    // the shared-parameter gradient on sample d_(1) with the gamma-weighted
    // combination of gradients on sample d_(2), then a simplex projection.
    void update_weights(int t) {
        (void)t;
        const size_t n = ctx_.n_agents();
        std::vector<Vec> g1(n), g2(n);
        for (size_t i = 0; i < n; ++i) {
            g1[i] = eval_shared(ctx_, shared_params_, i, slot(i, SampleTag::extra1).z,
                                slot(i, SampleTag::extra1).y, &flops_)
                        .shared_grad;
            g2[i] = eval_shared(ctx_, shared_params_, i, slot(i, SampleTag::extra2).z,
                                slot(i, SampleTag::extra2).y, &flops_)
                        .shared_grad;
        }
        Vec combined(shared_params_.size(), 0.0);
        for (size_t j = 0; j < n; ++j)
            if (!g2[j].empty()) axpy(gamma_[j], g2[j], combined);
        Vec next(n);
        for (size_t i = 0; i < n; ++i) {
            double q = g1[i].empty() ? 0.0 : dot(g1[i], combined);
            if (full_grad_correction) q += full_grad_correction(i, gamma_.values());
            next[i] = gamma_[i] - ctx_.cfg.eta * q;
        }
        gamma_ = project_simplex(next);
    }

    const SessionContext& ctx_;
    Transport& net_;
    Vec shared_params_;
    WeightSimplex gamma_;
    FlopCounter flops_;
    std::vector<std::optional<EmbeddingRecord>> records_;
    std::deque<EmbeddingRecord> stash_;
    std::vector<CtrlSnap> snaps_;
};

}  // namespace detail_train

// Final state of a training session, enough to run inference and metrics.
struct TrainedState {
    SessionContext ctx;
    Vec shared_params;
    std::vector<Vec> agent_params;
    WeightSimplex gamma;
};

struct SessionOutput {
    TrainedState state;
    std::vector<detail_train::CtrlSnap> ctrl_snaps;
    std::vector<std::vector<detail_train::AgentSnap>> per_agent_snaps;
    long long flops_ctrl = 0;
    std::vector<long long> flops_agent;
    uint64_t bytes_total = 0;
};

// Runs the coordination rounds. The single-thread scheduler and the
// threaded harness execute identical per-actor sequences, so their results
// are bit-identical.
inline SessionOutput run_session(const SessionContext& ctx) {
    const size_t n = ctx.n_agents();
    Transport net;
    net.register_endpoint(detail_train::ctrl_endpoint());
    for (size_t i = 0; i < n; ++i) net.register_endpoint(detail_train::agent_endpoint(i));

    detail_train::ControllerActor ctrl(ctx, net);
    std::vector<std::unique_ptr<detail_train::AgentActor>> agents;
    for (size_t i = 0; i < n; ++i)
        agents.push_back(std::make_unique<detail_train::AgentActor>(ctx, i, net));

    if (ctx.cfg.weight_grads_full && !ctx.toy) {
        // Sensitivity-study mode: adds the agent-part gradient term
        // gamma_i * <g_own(d1), g_own(d2)> to the weight-update inner
        // product. Computed out-of-band by the simulator, which is why this
        // mode is restricted to the single-thread harness.
        ctrl.full_grad_correction = [&](size_t i, const Vec& gamma) -> double {
            const auto& samples = agents[i]->extra_samples();
            if (samples.size() != 2)
                throw ContractViolation("weight_grads=full: missing extra samples");
            const ModelSpec& spec = ctx.agent_specs[i];
            if (spec.layers.empty()) return 0.0;
            std::array<Vec, 2> own;
            for (size_t k = 0; k < 2; ++k) {
                ForwardCache cache;
                Vec z = forward(spec, agents[i]->params(), Part::full, samples[k].first, &cache);
                auto ev = detail_train::eval_shared(ctx, ctrl.shared_params(), i, z,
                                                    samples[k].second, nullptr);
                own[k] = backward(spec, agents[i]->params(), cache, ev.boundary_grad, Part::full)
                             .param_grads;
            }
            return gamma[i] * dot(own[0], own[1]);
        };
    }

    auto with_round = [](int t, auto&& fn) {
        try {
            fn();
        } catch (const NumericError& e) {
            throw NumericError("round " + std::to_string(t) + ": " + e.what());
        }
    };

    auto drive_single = [&] {
        ctrl.setup();
        for (size_t i = 0; i < n; ++i) agents[i]->setup();
        for (int t = 0; t < ctx.cfg.rounds; ++t) {
            with_round(t, [&] {
                for (size_t i = 0; i < n; ++i) agents[i]->begin_round(t);
                ctrl.process_round(t);
                for (size_t i = 0; i < n; ++i) agents[i]->end_round(t);
            });
        }
        ctrl.teardown();
        for (size_t i = 0; i < n; ++i) agents[i]->teardown();
    };

    auto drive_threaded = [&] {
        std::vector<std::exception_ptr> errors(n + 1);
        auto agent_main = [&](size_t i) {
            try {
                agents[i]->setup();
                for (int t = 0; t < ctx.cfg.rounds; ++t) {
                    with_round(t, [&] {
                        agents[i]->begin_round(t);
                        agents[i]->end_round(t);
                    });
                }
                agents[i]->teardown();
            } catch (...) {
                errors[i + 1] = std::current_exception();
                net.close_all();
            }
        };
        auto ctrl_main = [&] {
            try {
                ctrl.setup();
                for (int t = 0; t < ctx.cfg.rounds; ++t)
                    with_round(t, [&] { ctrl.process_round(t); });
                ctrl.teardown();
            } catch (...) {
                errors[0] = std::current_exception();
                net.close_all();
            }
        };
        std::vector<std::thread> threads;
        threads.emplace_back(ctrl_main);
        for (size_t i = 0; i < n; ++i) threads.emplace_back(agent_main, i);
        for (auto& th : threads) th.join();
        for (auto& e : errors)
            if (e) std::rethrow_exception(e);
    };

    if (ctx.cfg.mode == HarnessMode::single_thread)
        drive_single();
    else
        drive_threaded();

    SessionOutput out;
    out.state.ctx = ctx;
    out.state.shared_params = ctrl.shared_params();
    out.state.gamma = ctrl.gamma();
    out.ctrl_snaps = ctrl.snapshots();
    out.flops_ctrl = ctrl.flop_count();
    uint64_t bytes = net.bytes_sent_by(detail_train::ctrl_endpoint());
    for (size_t i = 0; i < n; ++i) {
        out.state.agent_params.push_back(agents[i]->params().values);
        out.per_agent_snaps.push_back(agents[i]->snapshots());
        out.flops_agent.push_back(agents[i]->flop_count());
        bytes += net.bytes_sent_by(detail_train::agent_endpoint(i));
    }
    out.bytes_total = bytes;
    return out;
}

// Inference: agent-part forward at the agent, shared-part forward at the
// controller; parameters are immutable throughout.
inline std::vector<Vec> collaborative_inference(const TrainedState& state,
                                                const std::vector<Vec>& inputs) {
    if (state.ctx.toy)
        throw std::invalid_argument("collaborative_inference: undefined for the toy task");
    if (inputs.size() != state.ctx.n_agents())
        throw std::invalid_argument("collaborative_inference: one input per agent required");
    std::vector<Vec> outputs;
    for (size_t i = 0; i < inputs.size(); ++i) {
        const ModelSpec& aspec = state.ctx.agent_specs[i];
        Vec z = aspec.layers.empty()
                    ? inputs[i]
                    : forward(aspec, ParamVector{state.ctx.toy ? Vec{} : state.agent_params[i]},
                              Part::full, inputs[i]);
        outputs.push_back(state.ctx.shared_spec.layers.empty()
                              ? z
                              : forward(state.ctx.shared_spec, ParamVector{state.shared_params},
                                        Part::full, z));
    }
    return outputs;
}

}  // namespace mops
