#pragma once

#include <array>
#include <cmath>
#include <ostream>

#include "mops/common.hpp"
#include "mops/rng.hpp"

namespace mops {

// PRNG stream ids. Every consumer of randomness owns one stream so that
// runs are reproducible and draws never interleave across purposes.
namespace stream {
inline constexpr uint64_t shared_init = 1;
inline constexpr uint64_t agent_init = 100;    // + agent id
inline constexpr uint64_t agent_sampler = 200; // + agent id
inline constexpr uint64_t task_params = 300;   // + agent id
inline constexpr uint64_t task_train = 400;    // + agent id
inline constexpr uint64_t task_pop = 500;      // + agent id
}  // namespace stream

// Per-agent quadratic objectives with an analytic Pareto structure:
// loss_i(w, d) = (w - c_i)^T A_i (w - c_i) + sigma * d^T w, so the
// stochastic gradient is 2 A_i (w - c_i) + sigma * d with d ~ N(0, I),
// and the full-batch loss/gradient are the noiseless values.
struct ToyObjectiveSet {
    struct Objective {
        std::array<double, 2> center;
        std::array<double, 4> curvature;  // row-major 2x2, must be SPD
    };
    std::vector<Objective> agents;
    double noise_sigma = 0.1;

    void validate() const {
        for (const auto& o : agents) {
            const auto& a = o.curvature;
            if (std::abs(a[1] - a[2]) > 1e-12 || a[0] <= 0.0 || a[0] * a[3] - a[1] * a[2] <= 0.0)
                throw std::invalid_argument("ToyObjectiveSet: curvature not SPD");
        }
    }

    // c = {(1,0), (-0.5,0.866), (-0.5,-0.866)}, A_i = I: the uniform-weight
    // stationary point is the centroid (0, 0).
    static ToyObjectiveSet default_symmetric(double sigma = 0.1) {
        ToyObjectiveSet set;
        set.noise_sigma = sigma;
        set.agents = {
            {{1.0, 0.0}, {1.0, 0.0, 0.0, 1.0}},
            {{-0.5, 0.866}, {1.0, 0.0, 0.0, 1.0}},
            {{-0.5, -0.866}, {1.0, 0.0, 0.0, 1.0}},
        };
        return set;
    }

    Vec noiseless_grad(size_t i, const Vec& w) const {
        const auto& o = agents.at(i);
        return {2.0 * (o.curvature[0] * (w[0] - o.center[0]) + o.curvature[1] * (w[1] - o.center[1])),
                2.0 * (o.curvature[2] * (w[0] - o.center[0]) + o.curvature[3] * (w[1] - o.center[1]))};
    }

    double noiseless_loss(size_t i, const Vec& w) const {
        const auto& o = agents.at(i);
        double dx = w[0] - o.center[0], dy = w[1] - o.center[1];
        return o.curvature[0] * dx * dx + (o.curvature[1] + o.curvature[2]) * dx * dy +
               o.curvature[3] * dy * dy;
    }

    double stochastic_loss(size_t i, const Vec& w, const Vec& d) const {
        return noiseless_loss(i, w) + noise_sigma * (d[0] * w[0] + d[1] * w[1]);
    }

    Vec stochastic_grad(size_t i, const Vec& w, const Vec& d) const {
        Vec g = noiseless_grad(i, w);
        g[0] += noise_sigma * d[0];
        g[1] += noise_sigma * d[1];
        return g;
    }
};

enum class Modality { demand, csi, traffic };

inline const char* to_string(Modality m) {
    switch (m) {
        case Modality::demand: return "demand";
        case Modality::csi: return "csi";
        case Modality::traffic: return "traffic";
    }
    return "?";
}

// One synthetic prediction subtask. The seed fixes the task identity; for
// csi that includes the three sinusoid frequencies (one per band, so no two
// components beat against each other at horizons beyond the training split).
// Phases and measurement noise belong to the realization streams.
struct TimeSeriesTask {
    Modality modality = Modality::csi;
    int window_in = 15;
    int window_out = 5;
    int train_size = 500;
    uint64_t seed = 1;
    double noise_override = -1.0;  // < 0: modality default

    double noise_level() const {
        if (noise_override >= 0.0) return noise_override;
        switch (modality) {
            case Modality::demand: return 0.02;
            case Modality::csi: return 0.1;
            case Modality::traffic: return 0.05;
        }
        return 0.0;
    }
};

struct Dataset {
    std::vector<Vec> xs;
    std::vector<Vec> ys;
    double mean = 0.0;
    double stddev = 1.0;  // training-split statistics used for standardization
};

namespace detail_tasks {

struct CsiParams {
    std::array<double, 3> freq;
};

inline CsiParams csi_params(const TimeSeriesTask& task) {
    // One frequency per band keeps the components from beating against each
    // other at horizons beyond the training split; the slow band starts at
    // 0.024 so even a 200-window split covers several periods.
    Rng rng(task.seed, stream::task_params);
    static constexpr std::array<std::pair<double, double>, 3> kBands = {{
        {0.024, 0.068}, {0.076, 0.134}, {0.142, 0.200}}};
    CsiParams p{};
    for (size_t b = 0; b < 3; ++b) p.freq[b] = rng.uniform(kBands[b].first, kBands[b].second);
    return p;
}

inline Vec raw_series(const TimeSeriesTask& task, size_t len, uint64_t stream_id) {
    Rng rng(task.seed, stream_id);
    const double noise = task.noise_level();
    Vec s(len);
    switch (task.modality) {
        case Modality::demand: {
            // Piecewise-constant level, switch probability 0.05 per step.
            double level = rng.uniform();
            for (size_t t = 0; t < len; ++t) {
                if (rng.uniform() < 0.05) level = rng.uniform();
                s[t] = level + noise * rng.gaussian();
            }
            break;
        }
        case Modality::csi: {
            auto p = csi_params(task);
            static constexpr std::array<double, 3> kAmp = {1.0, 0.5, 0.25};
            std::array<double, 3> phase;
            for (auto& ph : phase) ph = rng.uniform(0.0, 2.0 * M_PI);
            for (size_t t = 0; t < len; ++t) {
                double v = 0.0;
                for (size_t k = 0; k < 3; ++k)
                    v += kAmp[k] * std::sin(2.0 * M_PI * p.freq[k] * static_cast<double>(t) + phase[k]);
                s[t] = v + noise * rng.gaussian();
            }
            break;
        }
        case Modality::traffic: {
            // AR(2) with coefficients (1.5, -0.6) plus a period-100 diurnal
            // sinusoid; 100-step burn-in discarded.
            const size_t burn = 100;
            Vec a(len + burn, 0.0);
            for (size_t t = 2; t < a.size(); ++t)
                a[t] = 1.5 * a[t - 1] - 0.6 * a[t - 2] + noise * rng.gaussian();
            for (size_t t = 0; t < len; ++t)
                s[t] = a[t + burn] + std::sin(2.0 * M_PI * static_cast<double>(t) / 100.0);
            break;
        }
    }
    return s;
}

inline Dataset cut_windows(const Vec& s, const TimeSeriesTask& task, double mean, double sd) {
    const size_t span = static_cast<size_t>(task.window_in + task.window_out);
    if (s.size() < span) throw std::invalid_argument("gen_timeseries: series shorter than window span");
    Dataset d;
    d.mean = mean;
    d.stddev = sd;
    const size_t n = s.size() - span + 1;
    d.xs.reserve(n);
    d.ys.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        Vec x(static_cast<size_t>(task.window_in)), y(static_cast<size_t>(task.window_out));
        for (int k = 0; k < task.window_in; ++k) x[static_cast<size_t>(k)] = (s[i + static_cast<size_t>(k)] - mean) / sd;
        for (int k = 0; k < task.window_out; ++k)
            y[static_cast<size_t>(k)] = (s[i + static_cast<size_t>(task.window_in + k)] - mean) / sd;
        d.xs.push_back(std::move(x));
        d.ys.push_back(std::move(y));
    }
    return d;
}

}  // namespace detail_tasks

// Training split: `train_size` windows cut with stride 1, standardized to
// zero mean / unit variance over the split's raw samples.
inline Dataset gen_timeseries(const TimeSeriesTask& task) {
    if (task.train_size < 1) throw std::invalid_argument("gen_timeseries: train_size < 1");
    const size_t len = static_cast<size_t>(task.train_size + task.window_in + task.window_out - 1);
    Vec s = detail_tasks::raw_series(task, len, stream::task_train);
    double mean = 0.0;
    for (double x : s) mean += x;
    mean /= static_cast<double>(s.size());
    double var = 0.0;
    for (double x : s) var += (x - mean) * (x - mean);
    var /= static_cast<double>(s.size());
    double sd = std::sqrt(var);
    if (!(sd > 0.0)) sd = 1.0;
    return detail_tasks::cut_windows(s, task, mean, sd);
}

// Fresh windows from the same generator on an independent stream; the
// training split's statistics are reused for standardization.
inline Dataset population_sample(const TimeSeriesTask& task, const Dataset& train, size_t n) {
    if (n < 1) throw std::invalid_argument("population_sample: n < 1");
    const size_t len = n + static_cast<size_t>(task.window_in + task.window_out) - 1;
    Vec s = detail_tasks::raw_series(task, len, stream::task_pop);
    return detail_tasks::cut_windows(s, task, train.mean, train.stddev);
}

inline void dataset_to_csv(std::ostream& os, const Dataset& d) {
    for (size_t i = 0; i < d.xs.size(); ++i) {
        for (size_t k = 0; k < d.xs[i].size(); ++k) os << (k ? "," : "") << d.xs[i][k];
        for (double v : d.ys[i]) os << "," << v;
        os << "\n";
    }
}

}  // namespace mops
