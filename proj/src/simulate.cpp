#include "qdl/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <random>
#include <string>
#include <thread>
#include <vector>

namespace qdl {

namespace {

/// splitmix64 step, used to decorrelate per-path generator seeds.
std::uint64_t splitmix64(std::uint64_t& s) {
    s += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = s;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

struct PathRng {
    std::mt19937_64 gen;
    std::normal_distribution<double> normal{0.0, 1.0};
    bool negate = false;

    PathRng(std::uint64_t seed, std::uint64_t stream, bool neg) : negate(neg) {
        std::uint64_t s = seed ^ (0xd1342543de82ef95ULL * (stream + 1));
        const std::uint64_t a = splitmix64(s);
        const std::uint64_t b = splitmix64(s);
        std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                          static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
        gen.seed(seq);
    }

    double gauss() {
        const double z = normal(gen);
        return negate ? -z : z;
    }

    /// Exponential sojourn; shared (not negated) between antithetic twins.
    double sojourn(double lambda) {
        if (!(lambda > 0.0)) return std::numeric_limits<double>::infinity();
        std::exponential_distribution<double> exp_dist(lambda);
        return exp_dist(gen);
    }
};

std::size_t thread_count() {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("QDL_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
    }
    return n;
}

} // namespace

PathResult simulate_path(const ModelParams& params, const DividendPolicy& policy,
                         const SimConfig& cfg, std::uint64_t stream, bool negate) {
    if (cfg.x0 < 0.0)
        throw Error(ErrorCode::InvalidStart, "initial surplus must be nonnegative");
    if (cfg.regime0 >= params.n_regimes())
        throw Error(ErrorCode::InvalidStart, "initial regime out of range");
    if (params.n_regimes() != 2)
        throw Error(ErrorCode::RegimeCountUnsupported, "simulator implements the 2-regime chain");
    if (!(cfg.dt > 0.0))
        throw Error(ErrorCode::InvalidInput, "step size must be positive");

    const double horizon = (cfg.horizon > 0.0) ? cfg.horizon : 20.0 / params.delta;
    const double delta = params.delta;
    PathRng rng(cfg.seed, stream, negate);

    PathResult res;
    double x = cfg.x0;
    std::size_t i = cfg.regime0;
    double t = 0.0;
    double t_switch = rng.sojourn(params.regimes[i].lambda_out);

    // Running discount e^{-delta t}, advanced multiplicatively so the hot
    // loop avoids exp() for the common full-size step.
    double disc = 1.0;
    const double decay0 = std::exp(-delta * cfg.dt);
    const double sqrt_dt0 = std::sqrt(cfg.dt);

    while (t < horizon) {
        // Impulse check first (including at t = 0).
        const PolicyBand& band = policy.bands[i];
        if (x >= band.upper_threshold) {
            const double xi = x - band.lower_threshold;
            res.payoff += disc * (xi - params.fixed_cost);
            res.n_impulses += 1;
            x = band.lower_threshold;
        }

        const double dt = std::min({cfg.dt, t_switch - t, horizon - t});
        if (!(dt > 0.0)) {
            // Regime switch exactly now.
            i = 1 - i;
            t_switch = t + rng.sojourn(params.regimes[i].lambda_out);
            continue;
        }

        const bool full_step = (dt == cfg.dt);
        const double decay = full_step ? decay0 : std::exp(-delta * dt);
        const double u = policy.rate(x, i);
        if (u > 0.0)
            res.payoff += u * disc * (1.0 - decay) / delta; // exact rate integral

        const auto& reg = params.regimes[i];
        x += (reg.mu - u) * dt + reg.sigma * (full_step ? sqrt_dt0 : std::sqrt(dt)) * rng.gauss();
        t += dt;
        disc *= decay;

        if (x < 0.0) {
            res.ruined = true;
            res.ruin_time = t;
            return res;
        }
        if (t >= t_switch) {
            i = 1 - i;
            t_switch = t + rng.sojourn(params.regimes[i].lambda_out);
        }
    }
    return res;
}

SimEstimate estimate_value(const ModelParams& params, const DividendPolicy& policy,
                           const SimConfig& cfg) {
    validate(params);
    validate_policy(policy, params);
    if (cfg.n_paths == 0)
        throw Error(ErrorCode::InvalidInput, "n_paths must be positive");

    // With antithetic pairing the independent sample is the pair average.
    const std::size_t n_samples = cfg.antithetic ? (cfg.n_paths + 1) / 2 : cfg.n_paths;

    std::vector<double> sample(n_samples);
    std::vector<double> ruin(n_samples);
    std::vector<double> impulses(n_samples);

    auto run_sample = [&](std::size_t s) {
        if (cfg.antithetic) {
            const PathResult a = simulate_path(params, policy, cfg, s, false);
            const bool have_twin = 2 * s + 1 < cfg.n_paths;
            if (have_twin) {
                const PathResult b = simulate_path(params, policy, cfg, s, true);
                sample[s] = 0.5 * (a.payoff + b.payoff);
                ruin[s] = 0.5 * (static_cast<double>(a.ruined) + static_cast<double>(b.ruined));
                impulses[s] =
                    0.5 * static_cast<double>(a.n_impulses + b.n_impulses);
            } else {
                sample[s] = a.payoff;
                ruin[s] = static_cast<double>(a.ruined);
                impulses[s] = static_cast<double>(a.n_impulses);
            }
        } else {
            const PathResult a = simulate_path(params, policy, cfg, s, false);
            sample[s] = a.payoff;
            ruin[s] = static_cast<double>(a.ruined);
            impulses[s] = static_cast<double>(a.n_impulses);
        }
    };

    const std::size_t n_threads = std::min(thread_count(), n_samples);
    if (n_threads <= 1) {
        for (std::size_t s = 0; s < n_samples; ++s) run_sample(s);
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (std::size_t w = 0; w < n_threads; ++w)
            pool.emplace_back([&, w]() {
                for (std::size_t s = w; s < n_samples; s += n_threads) run_sample(s);
            });
        for (auto& th : pool) th.join();
    }

    SimEstimate est;
    est.n_samples = n_samples;
    double sum = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) sum += sample[s];
    est.mean = sum / static_cast<double>(n_samples);
    double ss = 0.0, rsum = 0.0, isum = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const double d = sample[s] - est.mean;
        ss += d * d;
        rsum += ruin[s];
        isum += impulses[s];
    }
    est.std_error = (n_samples > 1)
                        ? std::sqrt(ss / (static_cast<double>(n_samples) *
                                          static_cast<double>(n_samples - 1)))
                        : 0.0;
    est.ruin_fraction = rsum / static_cast<double>(n_samples);
    est.mean_impulses = isum / static_cast<double>(n_samples);
    return est;
}

} // namespace qdl
