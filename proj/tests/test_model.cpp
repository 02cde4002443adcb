#include <catch2/catch_amalgamated.hpp>

#include "mops/finite_diff.hpp"
#include "mops/model.hpp"
#include "mops/tasks.hpp"

using namespace mops;

namespace {

ModelSpec tiny_spec(int in, int hidden, int out, Activation act) {
    ModelSpec spec;
    spec.layers = {LayerSpec::dense(in, hidden), LayerSpec::activation(act, hidden),
                   LayerSpec::dense(hidden, out)};
    spec.boundary = 0;
    spec.validate();
    return spec;
}

double loss_at(const ModelSpec& spec, const Vec& params, const Vec& x, const Vec& y) {
    Vec out = forward(spec, ParamVector{params}, Part::full, x);
    return mse_loss_and_grad(out, y).first;
}

}  // namespace

TEST_CASE("forward on hand-checked layers") {
    ModelSpec one;
    one.layers = {LayerSpec::dense(1, 1)};
    one.validate();

    ParamVector zero = ParamVector::zeros(one);
    CHECK(forward(one, zero, Part::full, {3.0}) == Vec{0.0});

    ParamVector wb{{2.0, 1.0}};  // w=2, b=1
    CHECK(forward(one, wb, Part::full, {3.0}) == Vec{7.0});

    CHECK_THROWS_AS(forward(one, wb, Part::full, {1.0, 2.0}), std::invalid_argument);

    ParamVector inf_w{{1e308, 1e308}};
    CHECK_THROWS_AS(forward(one, inf_w, Part::full, {1e300}), NumericError);
}

TEST_CASE("split forward composes to the full forward bit-exactly") {
    Rng rng(5, 1);
    ModelSpec spec = default_model_spec();
    for (Scheme scheme : {Scheme::none, Scheme::share_top, Scheme::share_deep}) {
        spec.boundary = scheme_boundary(spec, scheme);
        ParamVector params = init_params(spec, rng);
        for (int it = 0; it < 5; ++it) {
            Vec x(15);
            for (auto& v : x) v = rng.uniform(-1.0, 1.0);
            Vec full = forward(spec, params, Part::full, x);
            Vec z = forward(spec, params, Part::agent, x);
            Vec composed = spec.boundary == static_cast<int>(spec.layers.size())
                               ? z
                               : forward(spec, params, Part::shared, z);
            REQUIRE(full == composed);
        }
    }
}

TEST_CASE("backward on a hand chain rule") {
    ModelSpec one;
    one.layers = {LayerSpec::dense(1, 1)};
    one.validate();
    ParamVector wb{{2.0, 1.0}};
    ForwardCache cache;
    forward(one, wb, Part::full, {3.0}, &cache);
    BackwardResult res = backward(one, wb, cache, {1.0}, Part::full);
    CHECK(res.param_grads == Vec{3.0, 1.0});  // dw, db
    CHECK(res.input_grad == Vec{2.0});

    BackwardResult zero = backward(one, wb, cache, {0.0}, Part::full);
    CHECK(zero.param_grads == Vec{0.0, 0.0});
    CHECK(zero.input_grad == Vec{0.0});
}

TEST_CASE("stale cache is rejected") {
    ModelSpec spec = tiny_spec(2, 3, 1, Activation::tanh_act);
    Rng rng(9, 0);
    ParamVector params = init_params(spec, rng);
    ForwardCache cache;
    forward(spec, params, Part::full, {0.1, -0.2}, &cache);
    cache.tag = 4;
    CHECK_NOTHROW(backward(spec, params, cache, {1.0}, Part::full, nullptr, 4));
    CHECK_THROWS_AS(backward(spec, params, cache, {1.0}, Part::full, nullptr, 5),
                    ContractViolation);
    // cache from the wrong part
    ForwardCache agent_cache;
    spec.boundary = 2;
    forward(spec, params, Part::agent, {0.1, -0.2}, &agent_cache);
    CHECK_THROWS_AS(backward(spec, params, agent_cache, {1.0}, Part::full), ContractViolation);
}

TEST_CASE("analytic gradients match finite differences") {
    Rng rng(21, 4);
    for (int it = 0; it < 100; ++it) {
        int in = 2 + static_cast<int>(rng.uniform_index(3));
        int hidden = 2 + static_cast<int>(rng.uniform_index(4));
        int out = 1 + static_cast<int>(rng.uniform_index(3));
        Activation act = it % 2 == 0 ? Activation::tanh_act : Activation::relu;
        ModelSpec spec = tiny_spec(in, hidden, out, act);
        ParamVector params = init_params(spec, rng);
        Vec x(static_cast<size_t>(in)), y(static_cast<size_t>(out));
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);
        for (auto& v : y) v = rng.uniform(-1.0, 1.0);

        ForwardCache cache;
        Vec pred = forward(spec, params, Part::full, x, &cache);
        auto [loss, lgrad] = mse_loss_and_grad(pred, y);
        (void)loss;
        BackwardResult res = backward(spec, params, cache, lgrad, Part::full);

        Vec fd = finite_diff_grad(
            [&](const Vec& p) { return loss_at(spec, p, x, y); }, params.values, 1e-5);
        double num = 0.0, den = 0.0;
        for (size_t k = 0; k < fd.size(); ++k) {
            num += (fd[k] - res.param_grads[k]) * (fd[k] - res.param_grads[k]);
            den += fd[k] * fd[k];
        }
        REQUIRE(std::sqrt(num) <= 1e-5 * std::max(std::sqrt(den), 1e-8));
    }
}

TEST_CASE("mse loss and gradient") {
    auto [l0, g0] = mse_loss_and_grad({1.0, 2.0}, {1.0, 2.0});
    CHECK(l0 == 0.0);
    CHECK(g0 == Vec{0.0, 0.0});

    auto [l1, g1] = mse_loss_and_grad({1.0, 1.0}, {0.0, 0.0});
    CHECK(l1 == Catch::Approx(1.0));
    CHECK(g1[0] == Catch::Approx(1.0));
    CHECK(g1[1] == Catch::Approx(1.0));

    CHECK_THROWS_AS(mse_loss_and_grad({1.0}, {1.0, 2.0}), std::invalid_argument);

    Rng rng(3, 3);
    Vec p(6), y(6);
    for (auto& v : p) v = rng.uniform(-2.0, 2.0);
    for (auto& v : y) v = rng.uniform(-2.0, 2.0);
    auto [loss, grad] = mse_loss_and_grad(p, y);
    (void)loss;
    Vec fd = finite_diff_grad([&](const Vec& q) { return mse_loss_and_grad(q, y).first; }, p, 1e-6);
    for (size_t k = 0; k < p.size(); ++k) CHECK(grad[k] == Catch::Approx(fd[k]).margin(1e-6));
}

TEST_CASE("scheme boundaries on the default model") {
    ModelSpec spec = default_model_spec();
    CHECK(scheme_boundary(spec, Scheme::none) == 6);
    CHECK(scheme_boundary(spec, Scheme::share_top) == 3);
    CHECK(scheme_boundary(spec, Scheme::share_deep) == 5);

    auto [agent_top, shared_top] = split_model(spec, Scheme::share_top);
    CHECK(agent_top.layers.size() == 3);
    CHECK(shared_top.layers.size() == 3);
    CHECK(agent_top.output_dim(Part::full) == 16);  // E-interface width

    // 4 dense layers, embedding block 0: agent keeps exactly one layer.
    ModelSpec four;
    four.layers = {LayerSpec::dense(8, 8), LayerSpec::dense(8, 8), LayerSpec::dense(8, 8),
                   LayerSpec::dense(8, 4)};
    four.validate();
    auto [a4, s4] = split_model(four, Scheme::share_top);
    CHECK(a4.layers.size() == 1);
    CHECK(s4.layers.size() == 3);

    auto [an, sn] = split_model(four, Scheme::none);
    CHECK(an.layers.size() == 4);
    CHECK(sn.layers.empty());

    // parameter counts of the parts always sum to the full count
    for (Scheme scheme : {Scheme::none, Scheme::share_top, Scheme::share_deep}) {
        auto [a, s] = split_model(spec, scheme);
        CHECK(a.param_count() + s.param_count() == spec.param_count());
        std::vector<LayerSpec> rejoined = a.layers;
        rejoined.insert(rejoined.end(), s.layers.begin(), s.layers.end());
        CHECK(rejoined.size() == spec.layers.size());
    }

    ModelSpec two;
    two.layers = {LayerSpec::dense(4, 4), LayerSpec::dense(4, 2)};
    two.validate();
    CHECK_THROWS_AS(split_model(two, Scheme::share_deep), std::invalid_argument);
}

TEST_CASE("flops formula and instrumented counter agree") {
    ModelSpec ten;
    ten.layers = {LayerSpec::dense(10, 5)};
    ten.validate();
    CHECK(flops(ten, Part::full, Phase::forward) == 100);
    CHECK(flops(ten, Part::full, Phase::backward) == 200);
    CHECK(flops(ten, Part::full, Phase::inference) == 100);

    Rng rng(31, 8);
    for (int it = 0; it < 20; ++it) {
        int in = 1 + static_cast<int>(rng.uniform_index(6));
        int hidden = 1 + static_cast<int>(rng.uniform_index(8));
        int out = 1 + static_cast<int>(rng.uniform_index(4));
        ModelSpec spec = tiny_spec(in, hidden, out, Activation::tanh_act);
        spec.boundary = 2;
        ParamVector params = init_params(spec, rng);
        Vec x(static_cast<size_t>(in));
        for (auto& v : x) v = rng.uniform(-1.0, 1.0);

        for (Part part : {Part::full, Part::agent}) {
            FlopCounter fwd;
            ForwardCache cache;
            Vec z = forward(spec, params, part, x, &cache, &fwd);
            CHECK(fwd.flops == flops(spec, part, Phase::forward));
            FlopCounter bwd;
            Vec up(z.size(), 1.0);
            backward(spec, params, cache, up, part, &bwd);
            CHECK(bwd.flops == flops(spec, part, Phase::backward));
        }
        CHECK(flops(spec, Part::full, Phase::forward) ==
              flops(spec, Part::agent, Phase::forward) + flops(spec, Part::shared, Phase::forward));
    }
}

TEST_CASE("initialization is bounded and reproducible") {
    ModelSpec spec = default_model_spec();
    Rng a(77, stream::agent_init), b(77, stream::agent_init);
    ParamVector p1 = init_params(spec, a);
    ParamVector p2 = init_params(spec, b);
    REQUIRE(p1.values == p2.values);

    double bound = 1.0 / std::sqrt(15.0) + 1e-12;
    for (long long k = 0; k < spec.layers[0].param_count(); ++k)
        CHECK(std::abs(p1.values[static_cast<size_t>(k)]) <= bound);
}
