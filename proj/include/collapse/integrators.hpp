#pragma once

// Trajectory-level evolution of pure grid states:
//
//   ito-nonlinear  Euler-Maruyama for the norm-preserving collapse equation
//   ito-linear     Euler-Maruyama for the linear unitary unraveling
//   stratonovich   Heun for the same linear equation in Stratonovich form
//   wong-zakai     RK4 for the ODE driven by mollified noise
//
// plus ensemble averaging with per-trajectory seeds.
//
// In the Ito schemes the Hamiltonian phase exp(-i h dt) is applied exactly and
// only the noise-driven part takes the Euler-Maruyama form. H is diagonal and
// commutes with every channel, so this is Euler-Maruyama in the interaction
// picture; it keeps the O(h^2 dt) norm drift of a plain Euler treatment of
// -iH out of the weak error.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "collapse/core.hpp"
#include "collapse/error.hpp"
#include "collapse/master_eq.hpp"
#include "collapse/models.hpp"
#include "collapse/noise.hpp"
#include "collapse/rng.hpp"

namespace collapse {

enum class IntegratorKind { ito_nonlinear, ito_linear, stratonovich, wong_zakai };

inline std::string to_string(IntegratorKind kind) {
    switch (kind) {
        case IntegratorKind::ito_nonlinear: return "ito-nonlinear";
        case IntegratorKind::ito_linear: return "ito-linear";
        case IntegratorKind::stratonovich: return "stratonovich";
        case IntegratorKind::wong_zakai: return "wong-zakai";
    }
    return "?";
}

inline IntegratorKind parse_integrator_kind(const std::string& name) {
    for (auto kind : {IntegratorKind::ito_nonlinear, IntegratorKind::ito_linear, IntegratorKind::stratonovich,
                      IntegratorKind::wong_zakai})
        if (name == to_string(kind)) return kind;
    throw Error(ErrorKind::invalid_parameter, "unknown integrator '" + name + "'");
}

struct IntegratorSpec {
    IntegratorKind kind = IntegratorKind::ito_nonlinear;
    double dt = 1e-3;
    bool renormalize = true;
    std::optional<Mollifier> mollifier;

    void validate() const {
        require(std::isfinite(dt) && dt > 0.0, ErrorKind::invalid_parameter, "integrator dt must be > 0");
        require(mollifier.has_value() == (kind == IntegratorKind::wong_zakai), ErrorKind::invalid_parameter,
                "a mollifier is required by, and only by, the wong-zakai integrator");
        if (mollifier) mollifier->validate();
    }
};

namespace detail {

inline void check_norm_change(double before, double after) {
    require(std::isfinite(after) && std::abs(after / before - 1.0) <= 0.1, ErrorKind::norm_divergence,
            "norm changed from " + std::to_string(before) + " to " + std::to_string(after) +
                " in one step; reduce dt");
}

}  // namespace detail

/// Step kernels for one model and one step size; per-entry phases and channel
/// sums are precomputed once and shared read-only across trajectories.
class Propagator {
public:
    Propagator(const CollapseModel& model, double dt)
        : model_(&model), dt_(dt), root_coupling_(std::sqrt(model.effective_coupling())) {
        require(std::isfinite(dt) && dt > 0.0, ErrorKind::invalid_parameter, "integrator dt must be > 0");
        const std::size_t n = model.grid.entries();
        phase_.resize(n);
        square_sum_.assign(n, 0.0);
        for (std::size_t e = 0; e < n; ++e) {
            phase_[e] = std::exp(complex(0.0, -model.hamiltonian[e] * dt));
            for (const auto& ch : model.channels) square_sum_[e] += ch[e] * ch[e];
        }
        noise_.resize(n);
    }

    const CollapseModel& model() const noexcept { return *model_; }
    double dt() const noexcept { return dt_; }

    /// d phi = [-iH dt + sqrt(l) sum (A_i - <A_i>) dW_i - (l/2) sum (A_i - <A_i>)^2 dt] phi
    void ito_nonlinear(GridState& s, std::span<const double> dW, bool renormalize) const {
        check_noise(dW);
        const auto& channels = model_->channels;
        const double coupling = model_->effective_coupling();
        const double before = s.norm_squared();
        require(before > 0.0, ErrorKind::invariant_violation, "zero state");
        means_.assign(channels.size(), 0.0);
        for (std::size_t c = 0; c < channels.size(); ++c) {
            double m = 0.0;
            for (std::size_t e = 0; e < s.amplitudes.size(); ++e) m += channels[c][e] * std::norm(s.amplitudes[e]);
            means_[c] = m * s.grid.spacing / before;
        }
        for (std::size_t e = 0; e < s.amplitudes.size(); ++e) {
            double drift = 0.0, diffusion = 0.0;
            for (std::size_t c = 0; c < channels.size(); ++c) {
                const double d = channels[c][e] - means_[c];
                drift += d * d;
                diffusion += d * dW[c];
            }
            s.amplitudes[e] *= phase_[e] * (1.0 - 0.5 * coupling * drift * dt_ + root_coupling_ * diffusion);
        }
        const double after = s.norm_squared();
        detail::check_norm_change(before, after);
        if (renormalize) {
            const double inv = std::sqrt(before / after);
            for (auto& a : s.amplitudes) a *= inv;
        }
    }

    /// d phi = [-iH dt + i sqrt(l) sum A_i dW_i - (l/2) sum A_i^2 dt] phi
    void ito_linear(GridState& s, std::span<const double> dW) const {
        check_noise(dW);
        const double coupling = model_->effective_coupling();
        const double before = s.norm_squared();
        channel_sums(dW);
        for (std::size_t e = 0; e < s.amplitudes.size(); ++e)
            s.amplitudes[e] *= phase_[e] * complex(1.0 - 0.5 * coupling * square_sum_[e] * dt_,
                                                   root_coupling_ * noise_[e]);
        detail::check_norm_change(before, s.norm_squared());
    }

    /// Heun step of d phi = [-iH dt + i sqrt(l) sum A_i o dW_i] phi. For a
    /// diagonal generator g the predictor-corrector pair reduces to
    /// phi * (1 + g + g^2 / 2).
    void stratonovich(GridState& s, std::span<const double> dW) const {
        check_noise(dW);
        const double before = s.norm_squared();
        channel_sums(dW);
        for (std::size_t e = 0; e < s.amplitudes.size(); ++e) {
            const complex g(0.0, root_coupling_ * noise_[e] - model_->hamiltonian[e] * dt_);
            const complex predictor = s.amplitudes[e] * (1.0 + g);
            s.amplitudes[e] += 0.5 * (g * s.amplitudes[e] + g * predictor);
        }
        detail::check_norm_change(before, s.norm_squared());
    }

    void step(IntegratorKind kind, GridState& s, std::span<const double> dW, bool renormalize) const {
        switch (kind) {
            case IntegratorKind::ito_nonlinear: ito_nonlinear(s, dW, renormalize); return;
            case IntegratorKind::ito_linear: ito_linear(s, dW); return;
            case IntegratorKind::stratonovich: stratonovich(s, dW); return;
            case IntegratorKind::wong_zakai: break;
        }
        throw Error(ErrorKind::invalid_parameter, "wong-zakai is not a single-increment scheme");
    }

private:
    void check_noise(std::span<const double> dW) const {
        require(dW.size() == model_->n_channels(), ErrorKind::invalid_parameter,
                "expected one increment per channel");
    }

    void channel_sums(std::span<const double> dW) const {
        std::fill(noise_.begin(), noise_.end(), 0.0);
        const auto& channels = model_->channels;
        for (std::size_t c = 0; c < channels.size(); ++c) {
            const double w = dW[c];
            if (w == 0.0) continue;
            for (std::size_t e = 0; e < noise_.size(); ++e) noise_[e] += channels[c][e] * w;
        }
    }

    const CollapseModel* model_;
    double dt_;
    double root_coupling_;
    std::vector<complex> phase_;
    std::vector<double> square_sum_;
    // scratch; a Propagator is used by one thread at a time
    mutable std::vector<double> noise_;
    mutable std::vector<double> means_;
};

inline void step_ito_nonlinear(GridState& state, const CollapseModel& model, std::span<const double> dW, double dt,
                               bool renormalize = true) {
    Propagator(model, dt).ito_nonlinear(state, dW, renormalize);
}

inline void step_ito_linear(GridState& state, const CollapseModel& model, std::span<const double> dW, double dt) {
    Propagator(model, dt).ito_linear(state, dW);
}

inline void step_stratonovich(GridState& state, const CollapseModel& model, std::span<const double> dW, double dt) {
    Propagator(model, dt).stratonovich(state, dW);
}

/// Runs `count` increments of `path` starting at increment `first`.
inline void integrate_on_path(GridState& state, const Propagator& prop, IntegratorKind kind, const NoisePath& path,
                              std::size_t first, std::size_t count, bool renormalize = true) {
    require(first + count <= path.n_steps, ErrorKind::invalid_parameter, "noise path too short");
    require(std::abs(path.dt - prop.dt()) <= 1e-12 * prop.dt(), ErrorKind::invalid_parameter,
            "noise path step differs from integrator dt");
    for (std::size_t k = first; k < first + count; ++k) prop.step(kind, state, path.step(k), renormalize);
}

/// RK4 for d phi/dt = [-iH + i sqrt(l) sum A_i dW^eps_i(t)] phi. RK4 step k uses
/// noise samples 2k, 2k+1 (midpoint) and 2k+2, so the step is twice the noise
/// grid spacing.
inline void advance_wong_zakai(GridState& state, const CollapseModel& model, const MollifiedNoise& noise,
                               std::size_t first_step, std::size_t n_steps) {
    require(noise.n_channels() == model.n_channels(), ErrorKind::invalid_parameter, "noise channel count mismatch");
    require(noise.grid.spacing <= 0.25 * noise.mollifier.eps * (1.0 + 1e-12), ErrorKind::under_resolved,
            "noise grid spacing exceeds eps/4");
    require(2 * (first_step + n_steps) < noise.grid.count, ErrorKind::invalid_parameter, "mollified noise too short");
    const double h = 2.0 * noise.grid.spacing;
    const double root = std::sqrt(model.effective_coupling());
    const std::size_t n = state.amplitudes.size();
    std::array<std::vector<double>, 3> drive;
    for (auto& d : drive) d.resize(n);
    for (std::size_t k = first_step; k < first_step + n_steps; ++k) {
        for (int q = 0; q < 3; ++q) {
            std::fill(drive[q].begin(), drive[q].end(), 0.0);
            const auto xi = noise.sample(2 * k + q);
            for (std::size_t c = 0; c < model.channels.size(); ++c) {
                if (xi[c] == 0.0) continue;
                for (std::size_t e = 0; e < n; ++e) drive[q][e] += model.channels[c][e] * xi[c];
            }
        }
        const double before = state.norm_squared();
        for (std::size_t e = 0; e < n; ++e) {
            const double he = model.hamiltonian[e];
            const complex g1(0.0, root * drive[0][e] - he);
            const complex g2(0.0, root * drive[1][e] - he);
            const complex g3(0.0, root * drive[2][e] - he);
            const complex y = state.amplitudes[e];
            const complex k1 = g1 * y;
            const complex k2 = g2 * (y + 0.5 * h * k1);
            const complex k3 = g2 * (y + 0.5 * h * k2);
            const complex k4 = g3 * (y + h * k3);
            state.amplitudes[e] = y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        detail::check_norm_change(before, state.norm_squared());
    }
}

/// States after every RK4 step over the whole noise grid (initial state first).
inline std::vector<GridState> integrate_wong_zakai(const GridState& state0, const CollapseModel& model,
                                                   const MollifiedNoise& noise) {
    require(noise.grid.count >= 3 && noise.grid.count % 2 == 1, ErrorKind::invalid_parameter,
            "wong-zakai noise grid needs an odd sample count >= 3");
    std::vector<GridState> out{state0};
    GridState s = state0;
    const std::size_t steps = (noise.grid.count - 1) / 2;
    out.reserve(steps + 1);
    for (std::size_t k = 0; k < steps; ++k) {
        advance_wong_zakai(s, model, noise, k, 1);
        out.push_back(s);
    }
    return out;
}

/// Wiener path feeding mollified noise on [0, t_end]: increments of step
/// noise_dt cover [-support_hi, t_end - support_lo] so dW^eps is the full
/// two-sided convolution at every sampled time.
inline NoisePath sample_wiener_for_mollifier(std::uint64_t seed, const Mollifier& m, double noise_dt, double t_end,
                                             std::size_t n_channels) {
    const auto [lo, hi] = m.support();
    const auto before = static_cast<std::size_t>(std::ceil(std::max(hi, 0.0) / noise_dt));
    const auto inner = static_cast<std::size_t>(std::llround(t_end / noise_dt));
    const auto after = static_cast<std::size_t>(std::ceil(std::max(-lo, 0.0) / noise_dt)) + 1;
    return sample_wiener(seed, noise_dt, before + inner + after, n_channels,
                         -static_cast<double>(before) * noise_dt);
}

/// Observables of one pure state.
struct Observables {
    double p_m0 = 0.0;
    double p_m0bar = 0.0;
    double pop_h = 0.0;
    double pop_l = 0.0;
    double norm = 0.0;
    BlockTraces traces{};

    double probability(Internal s) const noexcept {
        switch (s) {
            case Internal::M0: return p_m0;
            case Internal::M0bar: return p_m0bar;
            case Internal::MH: return pop_h;
            case Internal::ML: return pop_l;
        }
        return 0.0;
    }
};

inline Observables observe(const GridState& s) {
    Observables o;
    complex hl{};
    for (std::size_t i = 0; i < s.grid.n_points; ++i) {
        const complex h = s.at(i, Mass::H), l = s.at(i, Mass::L);
        o.pop_h += std::norm(h);
        o.pop_l += std::norm(l);
        hl += h * std::conj(l);
    }
    const double dx = s.grid.spacing;
    o.pop_h *= dx;
    o.pop_l *= dx;
    hl *= dx;
    o.norm = o.pop_h + o.pop_l;
    o.p_m0 = 0.5 * o.norm + hl.real();
    o.p_m0bar = 0.5 * o.norm - hl.real();
    o.traces = {{{o.pop_h, hl}, {std::conj(hl), o.pop_l}}};
    return o;
}

/// Streaming mean/variance/extrema; merge() is Chan's pairwise update.
struct RunningStats {
    std::size_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;
    double min = std::numeric_limits<double>::infinity();
    double max = -std::numeric_limits<double>::infinity();

    void add(double x) noexcept {
        ++count;
        const double d = x - mean;
        mean += d / static_cast<double>(count);
        m2 += d * (x - mean);
        min = std::min(min, x);
        max = std::max(max, x);
    }

    void merge(const RunningStats& o) noexcept {
        if (o.count == 0) return;
        if (count == 0) {
            *this = o;
            return;
        }
        const double n = static_cast<double>(count + o.count);
        const double d = o.mean - mean;
        mean += d * static_cast<double>(o.count) / n;
        m2 += o.m2 + d * d * static_cast<double>(count) * static_cast<double>(o.count) / n;
        count += o.count;
        min = std::min(min, o.min);
        max = std::max(max, o.max);
    }

    double variance() const noexcept { return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0; }
    double std_error() const noexcept { return count > 1 ? std::sqrt(variance() / static_cast<double>(count)) : 0.0; }
};

struct ObservableStats {
    RunningStats p_m0, p_m0bar, pop_h, pop_l, norm;
    BlockTraces trace_sum{};

    void add(const Observables& o) {
        p_m0.add(o.p_m0);
        p_m0bar.add(o.p_m0bar);
        pop_h.add(o.pop_h);
        pop_l.add(o.pop_l);
        norm.add(o.norm);
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) trace_sum[a][b] += o.traces[a][b];
    }

    void merge(const ObservableStats& o) {
        p_m0.merge(o.p_m0);
        p_m0bar.merge(o.p_m0bar);
        pop_h.merge(o.pop_h);
        pop_l.merge(o.pop_l);
        norm.merge(o.norm);
        for (int a = 0; a < 2; ++a)
            for (int b = 0; b < 2; ++b) trace_sum[a][b] += o.trace_sum[a][b];
    }

    const RunningStats& of(Internal s) const noexcept {
        switch (s) {
            case Internal::M0: return p_m0;
            case Internal::M0bar: return p_m0bar;
            case Internal::MH: return pop_h;
            case Internal::ML: return pop_l;
        }
        return p_m0;
    }
};

/// Ensemble-averaged projections of |phi_t><phi_t| at the sample times; the
/// full density matrix is never materialized.
struct EnsembleResult {
    IntegratorKind kind = IntegratorKind::ito_nonlinear;
    std::vector<double> times;
    std::vector<ObservableStats> stats;
    std::size_t n_traj = 0;
    double dt = 0.0;

    /// Mean block traces, the position-traced mean density.
    BlockTraces mean_traces(std::size_t k) const {
        BlockTraces t = stats[k].trace_sum;
        for (auto& row : t)
            for (auto& v : row) v /= static_cast<double>(n_traj);
        return t;
    }

    TransitionRecord record(Internal initial) const {
        TransitionRecord rec;
        rec.source = "ensemble-" + to_string(kind);
        for (std::size_t k = 0; k < times.size(); ++k) {
            const auto& same = stats[k].of(initial);
            const auto& other = stats[k].of(partner(initial));
            rec.push(times[k], same.mean, other.mean, same.std_error(), other.std_error());
        }
        return rec;
    }
};

/// Uniform sampling of [0, t_max] at n_samples + 1 times, each a whole number
/// of integrator steps no longer than the requested dt.
struct SampleSchedule {
    std::vector<double> times;
    std::size_t steps_per_sample = 0;
    double dt = 0.0;

    static SampleSchedule uniform(double t_max, std::size_t n_samples, double dt_max) {
        require(std::isfinite(t_max) && t_max > 0.0, ErrorKind::invalid_parameter, "t_max must be > 0");
        require(n_samples >= 1, ErrorKind::invalid_parameter, "need at least one sample time");
        require(std::isfinite(dt_max) && dt_max > 0.0, ErrorKind::invalid_parameter, "dt must be > 0");
        SampleSchedule s;
        const double interval = t_max / static_cast<double>(n_samples);
        s.steps_per_sample = static_cast<std::size_t>(std::ceil(interval / dt_max - 1e-9));
        s.dt = interval / static_cast<double>(s.steps_per_sample);
        for (std::size_t k = 0; k <= n_samples; ++k) s.times.push_back(interval * static_cast<double>(k));
        return s;
    }

    std::size_t total_steps() const noexcept { return steps_per_sample * (times.size() - 1); }
};

/// One trajectory with its own seed; observables at every sample time.
inline std::vector<Observables> simulate_trajectory(const CollapseModel& model, const IntegratorSpec& spec,
                                                    const Propagator& prop, const GridState& initial,
                                                    const SampleSchedule& schedule, std::uint64_t seed) {
    std::vector<Observables> out;
    out.reserve(schedule.times.size());
    GridState s = initial;
    out.push_back(observe(s));
    const std::size_t n_samples = schedule.times.size() - 1;
    if (spec.kind == IntegratorKind::wong_zakai) {
        const double noise_dt = 0.5 * schedule.dt;
        const double t_end = schedule.times.back();
        const NoisePath path = sample_wiener_for_mollifier(seed, *spec.mollifier, noise_dt, t_end, model.n_channels());
        const MollifiedNoise noise =
            mollify(path, *spec.mollifier, TimeGrid{0.0, noise_dt, 2 * schedule.total_steps() + 1});
        for (std::size_t k = 0; k < n_samples; ++k) {
            advance_wong_zakai(s, model, noise, k * schedule.steps_per_sample, schedule.steps_per_sample);
            out.push_back(observe(s));
        }
        return out;
    }
    const NoisePath path = sample_wiener(seed, schedule.dt, schedule.total_steps(), model.n_channels());
    for (std::size_t k = 0; k < n_samples; ++k) {
        integrate_on_path(s, prop, spec.kind, path, k * schedule.steps_per_sample, schedule.steps_per_sample,
                          spec.renormalize);
        out.push_back(observe(s));
    }
    return out;
}

/// Worker count from COLLAPSE_WORKERS, else the machine's parallelism.
inline unsigned default_workers() {
    if (const char* env = std::getenv("COLLAPSE_WORKERS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs n_traj independent trajectories; trajectory j uses derive_seed(seed, j).
///
/// Trajectories are reduced in fixed chunks of 16 and the chunks merged in
/// index order, so the result is bit-identical for any worker count.
inline EnsembleResult run_ensemble(const CollapseModel& model, const IntegratorSpec& spec, const GridState& initial,
                                   double t_max, std::size_t n_samples, std::size_t n_traj, std::uint64_t seed,
                                   unsigned workers = 0) {
    spec.validate();
    require(n_traj >= 1, ErrorKind::invalid_parameter, "n_traj must be >= 1");
    require(initial.grid == model.grid, ErrorKind::invalid_parameter, "initial state lives on a different grid");
    const SampleSchedule schedule = SampleSchedule::uniform(t_max, n_samples, spec.dt);
    if (spec.kind == IntegratorKind::wong_zakai)
        require(0.5 * schedule.dt <= 0.25 * spec.mollifier->eps * (1.0 + 1e-12), ErrorKind::under_resolved,
                "wong-zakai needs dt <= eps/2 so its noise grid resolves the mollifier");

    constexpr std::size_t chunk = 16;
    const std::size_t n_chunks = (n_traj + chunk - 1) / chunk;
    std::vector<std::vector<ObservableStats>> partial(n_chunks);
    std::atomic<std::size_t> next{0};
    std::mutex failure_mutex;
    std::size_t failed_index = std::numeric_limits<std::size_t>::max();
    std::exception_ptr failure;

    auto worker = [&] {
        const Propagator prop(model, schedule.dt);
        for (std::size_t c = next++; c < n_chunks; c = next++) {
            std::vector<ObservableStats> acc(schedule.times.size());
            const std::size_t end = std::min(n_traj, (c + 1) * chunk);
            for (std::size_t j = c * chunk; j < end; ++j) {
                try {
                    const auto obs = simulate_trajectory(model, spec, prop, initial, schedule, derive_seed(seed, j));
                    for (std::size_t k = 0; k < obs.size(); ++k) acc[k].add(obs[k]);
                } catch (const Error& e) {
                    std::lock_guard lock(failure_mutex);
                    if (j < failed_index) {
                        failed_index = j;
                        failure = std::make_exception_ptr(Error(e.kind(), "trajectory " + std::to_string(j) + ": " + e.detail()));
                    }
                    return;
                }
            }
            partial[c] = std::move(acc);
        }
    };

    const unsigned n_workers =
        static_cast<unsigned>(std::min<std::size_t>(workers == 0 ? default_workers() : workers, n_chunks));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < n_workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);

    EnsembleResult result{spec.kind, schedule.times, std::vector<ObservableStats>(schedule.times.size()), n_traj,
                          schedule.dt};
    for (const auto& acc : partial)
        for (std::size_t k = 0; k < acc.size(); ++k) result.stats[k].merge(acc[k]);
    return result;
}

}  // namespace collapse
