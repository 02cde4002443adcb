#pragma once

#include <cstdio>
#include <ostream>

#include "mops/simplex.hpp"
#include "mops/training.hpp"

namespace mops {

// Joint optimization error ||sum_i gamma_i grad_i||; optionally emits the
// per-agent gradient norms.
inline double o_error(const std::vector<Vec>& grads, const WeightSimplex& gamma,
                      std::vector<double>* per_agent = nullptr) {
    if (grads.size() != gamma.size()) throw std::invalid_argument("o_error: size mismatch");
    if (grads.empty()) throw std::invalid_argument("o_error: no gradients");
    Vec sum(grads[0].size(), 0.0);
    if (per_agent) per_agent->clear();
    for (size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].size() != sum.size()) throw std::invalid_argument("o_error: dimension mismatch");
        axpy(gamma[i], grads[i], sum);
        if (per_agent) per_agent->push_back(norm2(grads[i]));
    }
    return norm2(sum);
}

// Gradient-level generalization gap ||sum_i gamma_i (train_i - pop_i)||.
inline double g_error(const std::vector<Vec>& train_grads, const std::vector<Vec>& pop_grads,
                      const WeightSimplex& gamma) {
    if (train_grads.size() != pop_grads.size() || train_grads.size() != gamma.size())
        throw std::invalid_argument("g_error: mismatched agent sets");
    std::vector<Vec> diff(train_grads.size());
    for (size_t i = 0; i < diff.size(); ++i) {
        if (train_grads[i].size() != pop_grads[i].size())
            throw std::invalid_argument("g_error: dimension mismatch");
        diff[i] = train_grads[i];
        axpy(-1.0, pop_grads[i], diff[i]);
    }
    return o_error(diff, gamma);
}

// Conflict error ||sum_i (gamma_i - gamma*_i) grad_i|| with gamma* the
// min-norm weights at the current gradients.
inline double c_error(const std::vector<Vec>& grads, const WeightSimplex& gamma,
                      Vec* gamma_star_out = nullptr) {
    MinNormResult mn = min_norm_weights(grads);
    if (gamma.size() != mn.weights.size()) throw std::invalid_argument("c_error: size mismatch");
    Vec sum(grads[0].size(), 0.0);
    for (size_t i = 0; i < grads.size(); ++i) axpy(gamma[i] - mn.weights[i], grads[i], sum);
    if (gamma_star_out) *gamma_star_out = mn.weights.values();
    return norm2(sum);
}

struct BoundConstants {
    double c_init = 0.0;        // initial suboptimality
    double mu_g = 0.0;          // gradient Lipschitz constant
    double mu_l = 0.0;          // loss Lipschitz constant
    double grad_bound = 0.0;    // G
    double grad_variance = 0.0; // V
    double samples = 0.0;       // D context used when fitting
};

enum class BoundKind { o_static, o_dynamic, g_bound, c_dynamic };

// Closed-form bound curves, exactly as printed.
inline double bound_curve(BoundKind kind, const BoundConstants& c, double T, double beta,
                          double eta, double D) {
    auto require_nonneg = [](double v, const char* what) {
        if (!(v >= 0.0)) throw std::invalid_argument(std::string("bound_curve: negative ") + what);
    };
    require_nonneg(c.c_init, "c_init");
    require_nonneg(c.mu_g, "mu_g");
    require_nonneg(c.mu_l, "mu_l");
    require_nonneg(c.grad_bound, "G");
    require_nonneg(c.grad_variance, "V");
    require_nonneg(beta, "beta");
    require_nonneg(eta, "eta");
    if (!(T > 0.0)) throw std::invalid_argument("bound_curve: T must be positive");

    switch (kind) {
        case BoundKind::o_static:
            if (!(beta * T > 0.0)) throw std::invalid_argument("bound_curve: beta*T must be positive");
            return std::sqrt(c.c_init / (beta * T)) + std::sqrt(beta * c.mu_g * c.mu_l * c.mu_l / 2.0);
        case BoundKind::o_dynamic:
            if (!(beta * T > 0.0)) throw std::invalid_argument("bound_curve: beta*T must be positive");
            return std::sqrt(c.c_init / (beta * T)) +
                   3.0 * std::sqrt(eta * std::pow(c.mu_l, 4) / 2.0) +
                   std::sqrt(beta * c.mu_g * c.mu_l * c.mu_l / 2.0);
        case BoundKind::g_bound:
            if (!(D > 0.0)) throw std::invalid_argument("bound_curve: D must be positive");
            return 8.0 * c.grad_bound * std::sqrt(T / D) + std::sqrt(c.grad_variance / D);
        case BoundKind::c_dynamic:
            if (!(eta * T > 0.0)) throw std::invalid_argument("bound_curve: eta*T must be positive");
            return 4.0 / (eta * T) + 6.0 * std::sqrt(3.0 * c.mu_g * c.mu_l * c.mu_l * beta / eta) +
                   3.0 * eta * std::pow(c.mu_l, 4);
    }
    throw std::invalid_argument("bound_curve: unknown kind");
}

// One observed trajectory summary used for constant fitting.
struct RunPoint {
    double T = 0, beta = 0, eta = 0, D = 0;
    Algorithm algorithm = Algorithm::static_weighting;
    double avg_o = -1.0;  // negative: not observed
    double avg_g = -1.0;
    double avg_c = -1.0;
};

struct FitResult {
    BoundConstants constants;
    double residual_o = 0.0;
    double residual_c = 0.0;
    double residual_g = 0.0;
};

namespace detail_fit {

// Nonnegative least squares on two basis columns; tiny and exact enough for
// the bound fits (active-set over the three sign patterns).
inline std::pair<Vec, double> nnls2(const std::vector<std::array<double, 2>>& basis, const Vec& y) {
    auto residual = [&](double a, double b) {
        double r = 0.0;
        for (size_t i = 0; i < y.size(); ++i) {
            double d = y[i] - a * basis[i][0] - b * basis[i][1];
            r += d * d;
        }
        return r;
    };
    double b00 = 0, b01 = 0, b11 = 0, c0 = 0, c1 = 0;
    for (size_t i = 0; i < y.size(); ++i) {
        b00 += basis[i][0] * basis[i][0];
        b01 += basis[i][0] * basis[i][1];
        b11 += basis[i][1] * basis[i][1];
        c0 += basis[i][0] * y[i];
        c1 += basis[i][1] * y[i];
    }
    double det = b00 * b11 - b01 * b01;
    if (std::abs(det) > 1e-14 * std::max(1.0, b00 * b11)) {
        double a = (c0 * b11 - c1 * b01) / det;
        double b = (b00 * c1 - b01 * c0) / det;
        if (a >= 0.0 && b >= 0.0) return {{a, b}, residual(a, b)};
    }
    double a_only = b00 > 0.0 ? std::max(c0 / b00, 0.0) : 0.0;
    double b_only = b11 > 0.0 ? std::max(c1 / b11, 0.0) : 0.0;
    double ra = residual(a_only, 0.0), rb = residual(0.0, b_only);
    if (ra <= rb) return {{a_only, 0.0}, ra};
    return {{0.0, b_only}, rb};
}

inline bool rank2(const std::vector<std::array<double, 2>>& basis) {
    if (basis.size() < 2) return false;
    double best = 0.0;
    for (size_t i = 0; i < basis.size(); ++i)
        for (size_t j = i + 1; j < basis.size(); ++j)
            best = std::max(best, std::abs(basis[i][0] * basis[j][1] - basis[i][1] * basis[j][0]));
    return best > 1e-12;
}

}  // namespace detail_fit

// Least-squares fit of the bound expressions to observed average errors.
// Static-O runs determine c_init and mu_g*mu_l^2; dynamic-C runs determine
// mu_l (and thereby split the product); G observations determine G and V.
inline FitResult fit_constants(const std::vector<RunPoint>& runs) {
    if (runs.size() < 3) throw std::invalid_argument("fit_constants: need at least 3 trajectories");
    FitResult out;

    std::vector<std::array<double, 2>> ob, cb, gb;
    Vec oy, cy, gy;
    for (const auto& r : runs) {
        if (!(r.T > 0.0)) throw std::invalid_argument("fit_constants: nonpositive T");
        if (r.algorithm == Algorithm::static_weighting && r.avg_o >= 0.0 && r.beta > 0.0) {
            ob.push_back({1.0 / std::sqrt(r.beta * r.T), std::sqrt(r.beta)});
            oy.push_back(r.avg_o);
        }
        if (r.algorithm == Algorithm::dynamic_weighting && r.avg_c >= 0.0 && r.eta > 0.0) {
            cb.push_back({std::sqrt(r.beta / r.eta), r.eta});
            cy.push_back(r.avg_c - 4.0 / (r.eta * r.T));
        }
        if (r.avg_g >= 0.0 && r.D > 0.0) {
            gb.push_back({std::sqrt(r.T / r.D), std::sqrt(1.0 / r.D)});
            gy.push_back(r.avg_g);
        }
        out.constants.samples = std::max(out.constants.samples, r.D);
    }
    if (ob.empty() && cb.empty() && gb.empty())
        throw std::invalid_argument("fit_constants: no usable observations");

    double mug_mul2 = 0.0;
    if (!ob.empty()) {
        if (!detail_fit::rank2(ob)) throw std::invalid_argument("fit_constants: O-fit under-determined");
        auto [coef, res] = detail_fit::nnls2(ob, oy);
        out.constants.c_init = coef[0] * coef[0];
        mug_mul2 = 2.0 * coef[1] * coef[1];
        out.residual_o = res;
    }
    if (!cb.empty()) {
        if (!detail_fit::rank2(cb)) throw std::invalid_argument("fit_constants: C-fit under-determined");
        auto [coef, res] = detail_fit::nnls2(cb, cy);
        out.constants.mu_l = std::pow(coef[1] / 3.0, 0.25);
        if (out.constants.mu_l > 0.0) {
            out.constants.mu_g = !ob.empty()
                                     ? mug_mul2 / (out.constants.mu_l * out.constants.mu_l)
                                     : std::pow(coef[0] / 6.0, 2) /
                                           (3.0 * out.constants.mu_l * out.constants.mu_l);
        }
        out.residual_c = res;
    } else if (!ob.empty()) {
        // No dynamic-C data: report the product through mu_g with mu_l = 1.
        out.constants.mu_l = mug_mul2 > 0.0 ? 1.0 : 0.0;
        out.constants.mu_g = mug_mul2;
    }
    if (!gb.empty()) {
        if (!detail_fit::rank2(gb)) throw std::invalid_argument("fit_constants: G-fit under-determined");
        auto [coef, res] = detail_fit::nnls2(gb, gy);
        out.constants.grad_bound = coef[0] / 8.0;
        out.constants.grad_variance = coef[1] * coef[1];
        out.residual_g = res;
    }
    return out;
}

// Log-log least-squares slope of error against T.
inline double fit_rate_slope(const std::vector<std::pair<double, double>>& series) {
    if (series.size() < 4) throw std::invalid_argument("fit_rate_slope: need at least 4 points");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [t, e] : series) {
        if (!(t > 0.0) || !(e > 0.0))
            throw std::invalid_argument("fit_rate_slope: nonpositive value");
        double x = std::log(t), y = std::log(e);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    double n = static_cast<double>(series.size());
    double denom = n * sxx - sx * sx;
    if (std::abs(denom) < 1e-12) throw std::invalid_argument("fit_rate_slope: degenerate abscissa");
    return (n * sxy - sx * sy) / denom;
}

// Per-round error record; the CSV columns are fixed:
// round,o_err,g_err,c_err,min_norm,gamma_0..gamma_{n-1},flops_agent,flops_ctrl,bytes
struct MetricsRecord {
    int round = 0;
    double o_err = 0.0;
    double g_err = 0.0;
    double c_err = 0.0;
    double min_norm = 0.0;
    std::vector<double> o_err_agent;
    Vec gamma;
    long long flops_agent = 0;
    long long flops_ctrl = 0;
    long long bytes = 0;
};

inline void write_metrics_csv(std::ostream& os, const std::vector<MetricsRecord>& records,
                              size_t n_agents) {
    os << "round,o_err,g_err,c_err,min_norm";
    for (size_t i = 0; i < n_agents; ++i) os << ",gamma_" << i;
    os << ",flops_agent,flops_ctrl,bytes\n";
    char buf[32];
    auto num = [&](double v) {
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
    };
    for (const auto& r : records) {
        os << r.round << ",";
        num(r.o_err);
        os << ",";
        num(r.g_err);
        os << ",";
        num(r.c_err);
        os << ",";
        num(r.min_norm);
        for (double g : r.gamma) {
            os << ",";
            num(g);
        }
        os << "," << r.flops_agent << "," << r.flops_ctrl << "," << r.bytes << "\n";
    }
}

// Computes the full-batch joint gradient of agent i at the snapshot
// parameters, embedded into the joint space [shared | agent_0 | agent_1 ...].
class MetricsEngine {
  public:
    explicit MetricsEngine(const SessionContext& ctx) : ctx_(ctx) {
        shared_dim_ = ctx.toy ? 2 : static_cast<size_t>(ctx.shared_spec.param_count());
        agent_offsets_.assign(ctx.n_agents(), 0);
        size_t off = shared_dim_;
        for (size_t i = 0; i < ctx.n_agents(); ++i) {
            agent_offsets_[i] = off;
            off += ctx.toy ? 0 : static_cast<size_t>(ctx.agent_specs[i].param_count());
        }
        joint_dim_ = off;
    }

    size_t joint_dim() const { return joint_dim_; }

    // Full-batch gradient over the given dataset (train or population).
    // Streams samples through a preallocated workspace; the arithmetic and
    // its order are identical to per-sample forward/backward + accumulate.
    Vec joint_gradient(size_t agent, const Vec& shared_params, const Vec& agent_params,
                       bool population) const {
        Vec joint(joint_dim_, 0.0);
        if (ctx_.toy) {
            // Full-batch toy gradient is the noiseless quadratic gradient;
            // the population gradient coincides with it.
            Vec g = ctx_.toy_set.noiseless_grad(agent, shared_params);
            joint[0] = g[0];
            joint[1] = g[1];
            return joint;
        }
        const Dataset& data = population ? ctx_.population[agent] : ctx_.datasets[agent];
        const ModelSpec& spec = ctx_.full_specs[agent];
        Vec params = agent_params;
        params.insert(params.end(), shared_params.begin(), shared_params.end());
        Vec acc(static_cast<size_t>(spec.param_count()), 0.0);

        const int n_layers = static_cast<int>(spec.layers.size());
        std::vector<Vec> inputs(static_cast<size_t>(n_layers));
        for (int k = 0; k < n_layers; ++k)
            inputs[static_cast<size_t>(k)].resize(static_cast<size_t>(spec.layers[k].in_dim));
        std::vector<long long> offsets(static_cast<size_t>(n_layers));
        for (int k = 0; k < n_layers; ++k) offsets[static_cast<size_t>(k)] = spec.layer_offset(k);
        Vec act, next, g;

        for (size_t s = 0; s < data.xs.size(); ++s) {
            act = data.xs[s];
            for (int k = 0; k < n_layers; ++k) {
                const auto& l = spec.layers[static_cast<size_t>(k)];
                inputs[static_cast<size_t>(k)] = act;
                if (l.kind == LayerSpec::Kind::dense) {
                    next.assign(static_cast<size_t>(l.out_dim), 0.0);
                    const double* w = params.data() + offsets[static_cast<size_t>(k)];
                    const double* b = w + static_cast<long long>(l.in_dim) * l.out_dim;
                    for (int o = 0; o < l.out_dim; ++o) {
                        double sum = b[o];
                        const double* row = w + static_cast<long long>(o) * l.in_dim;
                        for (int i = 0; i < l.in_dim; ++i) sum += row[i] * act[static_cast<size_t>(i)];
                        next[static_cast<size_t>(o)] = sum;
                    }
                    std::swap(act, next);
                } else if (l.act == Activation::tanh_act) {
                    for (auto& x : act) x = std::tanh(x);
                } else if (l.act == Activation::relu) {
                    for (auto& x : act) x = x > 0.0 ? x : 0.0;
                }
            }
            const Vec& y = data.ys[s];
            g.resize(act.size());
            const double dim = static_cast<double>(y.size());
            for (size_t i = 0; i < y.size(); ++i) g[i] = 2.0 * (act[i] - y[i]) / dim;

            for (int k = n_layers - 1; k >= 0; --k) {
                const auto& l = spec.layers[static_cast<size_t>(k)];
                const Vec& a_in = inputs[static_cast<size_t>(k)];
                if (l.kind == LayerSpec::Kind::activation) {
                    if (l.act == Activation::tanh_act) {
                        for (int i = 0; i < l.in_dim; ++i) {
                            double t = std::tanh(a_in[static_cast<size_t>(i)]);
                            g[static_cast<size_t>(i)] *= 1.0 - t * t;
                        }
                    } else if (l.act == Activation::relu) {
                        for (int i = 0; i < l.in_dim; ++i)
                            if (!(a_in[static_cast<size_t>(i)] > 0.0)) g[static_cast<size_t>(i)] = 0.0;
                    }
                    continue;
                }
                double* dw = acc.data() + offsets[static_cast<size_t>(k)];
                double* db = dw + static_cast<long long>(l.in_dim) * l.out_dim;
                const double* w = params.data() + offsets[static_cast<size_t>(k)];
                if (k > 0) {
                    next.assign(static_cast<size_t>(l.in_dim), 0.0);
                    for (int o = 0; o < l.out_dim; ++o) {
                        const double go = g[static_cast<size_t>(o)];
                        double* dwrow = dw + static_cast<long long>(o) * l.in_dim;
                        const double* wrow = w + static_cast<long long>(o) * l.in_dim;
                        for (int i = 0; i < l.in_dim; ++i) {
                            dwrow[i] += go * a_in[static_cast<size_t>(i)];
                            next[static_cast<size_t>(i)] += wrow[i] * go;
                        }
                        db[o] += go;
                    }
                    std::swap(g, next);
                } else {
                    // input gradient of the first layer is never used
                    for (int o = 0; o < l.out_dim; ++o) {
                        const double go = g[static_cast<size_t>(o)];
                        double* dwrow = dw + static_cast<long long>(o) * l.in_dim;
                        for (int i = 0; i < l.in_dim; ++i)
                            dwrow[i] += go * a_in[static_cast<size_t>(i)];
                        db[o] += go;
                    }
                }
            }
        }
        double inv = 1.0 / static_cast<double>(data.xs.size());
        const size_t own = static_cast<size_t>(ctx_.agent_specs[agent].param_count());
        for (size_t k = 0; k < own; ++k) joint[agent_offsets_[agent] + k] = acc[k] * inv;
        for (size_t k = own; k < acc.size(); ++k) joint[k - own] = acc[k] * inv;
        return joint;
    }

    MetricsRecord evaluate(int round, const Vec& shared_params, const std::vector<Vec>& agent_params,
                           const WeightSimplex& gamma) const {
        const size_t n = ctx_.n_agents();
        std::vector<Vec> train(n), pop(n);
        for (size_t i = 0; i < n; ++i) {
            train[i] = joint_gradient(i, shared_params, agent_params[i], false);
            pop[i] = ctx_.toy ? train[i] : joint_gradient(i, shared_params, agent_params[i], true);
        }
        MetricsRecord rec;
        rec.round = round;
        rec.o_err = o_error(train, gamma, &rec.o_err_agent);
        rec.g_err = ctx_.toy ? 0.0 : g_error(train, pop, gamma);
        MinNormResult mn = min_norm_weights(train);
        rec.min_norm = mn.norm;
        Vec diff(joint_dim_, 0.0);
        for (size_t i = 0; i < n; ++i) axpy(gamma[i] - mn.weights[i], train[i], diff);
        rec.c_err = norm2(diff);
        rec.gamma = gamma.values();
        return rec;
    }

  private:
    const SessionContext& ctx_;
    size_t shared_dim_ = 0;
    size_t joint_dim_ = 0;
    std::vector<size_t> agent_offsets_;
};

// Joins the per-actor snapshots round by round and evaluates the metrics.
// Pure post-processing: the trajectory never depends on it.
inline std::vector<MetricsRecord> compute_trajectory(const SessionOutput& out) {
    const SessionContext& ctx = out.state.ctx;
    MetricsEngine engine(ctx);
    std::vector<MetricsRecord> records;
    const size_t rounds = out.ctrl_snaps.size();
    for (size_t k = 0; k < rounds; ++k) {
        const auto& cs = out.ctrl_snaps[k];
        std::vector<Vec> agent_params;
        long long flops_agent0 = 0;
        long long bytes = static_cast<long long>(cs.bytes);
        for (size_t i = 0; i < ctx.n_agents(); ++i) {
            const auto& as = out.per_agent_snaps[i][k];
            if (as.round != cs.round) throw ContractViolation("compute_trajectory: snapshot skew");
            agent_params.push_back(as.params);
            if (i == 0) flops_agent0 = as.flops;
            bytes += static_cast<long long>(as.bytes);
        }
        MetricsRecord rec =
            engine.evaluate(cs.round, cs.shared_params, agent_params, WeightSimplex(cs.gamma));
        rec.flops_agent = flops_agent0;
        rec.flops_ctrl = cs.flops;
        rec.bytes = bytes;
        records.push_back(std::move(rec));
    }
    return records;
}

// Full run: build the context, execute the rounds, evaluate the trajectory.
struct RunResult {
    std::vector<MetricsRecord> trajectory;
    TrainedState state;
    long long flops_ctrl = 0;
    std::vector<long long> flops_agent;
    uint64_t bytes_total = 0;
};

inline RunResult run_training(const TrainConfig& cfg) {
    SessionContext ctx = SessionContext::build(cfg);
    SessionOutput out = run_session(ctx);
    RunResult res;
    res.trajectory = compute_trajectory(out);
    res.state = std::move(out.state);
    res.flops_ctrl = out.flops_ctrl;
    res.flops_agent = std::move(out.flops_agent);
    res.bytes_total = out.bytes_total;
    return res;
}

}  // namespace mops
