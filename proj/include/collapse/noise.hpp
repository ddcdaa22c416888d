#pragma once

// Wiener paths, mollified (regularized) white noise and the autocorrelation
// integral I^eps(t) = int_0^t E[dW^eps_t dW^eps_s] ds.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss.hpp>

#include "collapse/error.hpp"
#include "collapse/rng.hpp"

namespace collapse {

/// Gaussian increments dW[step][channel] of independent Wiener processes on
/// [t0, t0 + n_steps * dt].
struct NoisePath {
    std::uint64_t seed = 0;
    double dt = 0.0;
    double t0 = 0.0;
    std::size_t n_steps = 0;
    std::size_t n_channels = 0;
    std::vector<double> increments;

    double at(std::size_t step, std::size_t channel) const noexcept {
        return increments[step * n_channels + channel];
    }
    std::span<const double> step(std::size_t k) const noexcept {
        return {increments.data() + k * n_channels, n_channels};
    }
    /// Midpoint of the interval carrying increment k.
    double midpoint(std::size_t k) const noexcept { return t0 + (static_cast<double>(k) + 0.5) * dt; }
    double t_end() const noexcept { return t0 + static_cast<double>(n_steps) * dt; }
};

inline NoisePath sample_wiener(std::uint64_t seed, double dt, std::size_t n_steps, std::size_t n_channels,
                               double t0 = 0.0) {
    require(std::isfinite(dt) && dt > 0.0, ErrorKind::invalid_parameter, "noise dt must be > 0");
    require(n_steps >= 1, ErrorKind::invalid_parameter, "noise path needs n_steps >= 1");
    require(n_channels >= 1, ErrorKind::invalid_parameter, "noise path needs n_channels >= 1");
    NoisePath path{seed, dt, t0, n_steps, n_channels, {}};
    path.increments.resize(n_steps * n_channels);
    CounterRng rng(seed);
    const double scale = std::sqrt(dt);
    for (auto& w : path.increments) w = scale * rng.normal();
    return path;
}

enum class MollifierKind { gaussian, box, asymmetric_exponential, asymmetric_triangle };

inline std::string to_string(MollifierKind kind) {
    switch (kind) {
        case MollifierKind::gaussian: return "gaussian";
        case MollifierKind::box: return "box";
        case MollifierKind::asymmetric_exponential: return "asymmetric-exponential";
        case MollifierKind::asymmetric_triangle: return "asymmetric-triangle";
    }
    return "?";
}

inline MollifierKind parse_mollifier_kind(const std::string& name) {
    for (auto kind : {MollifierKind::gaussian, MollifierKind::box, MollifierKind::asymmetric_exponential,
                      MollifierKind::asymmetric_triangle})
        if (name == to_string(kind)) return kind;
    throw Error(ErrorKind::invalid_parameter, "unknown mollifier '" + name + "'");
}

/// Nonnegative unit-mass kernel of width eps approximating a Dirac delta.
///
///   gaussian                standard deviation eps
///   box                     uniform on [-eps/2, eps/2)
///   asymmetric-exponential  exp(-s/eps)/eps on s >= 0 (causal)
///   asymmetric-triangle     rises on [-eps/2, 0], falls on [0, eps]
///
/// The two asymmetric kernels have no reflection symmetry; the limit of
/// I^eps does not need one.
struct Mollifier {
    MollifierKind kind = MollifierKind::gaussian;
    double eps = 0.0;

    void validate() const {
        require(std::isfinite(eps) && eps > 0.0, ErrorKind::invalid_parameter, "mollifier eps must be > 0");
    }

    double density(double s) const noexcept {
        switch (kind) {
            case MollifierKind::gaussian:
                return std::exp(-0.5 * (s / eps) * (s / eps)) / (eps * std::sqrt(2.0 * std::numbers::pi));
            case MollifierKind::box:
                return (s >= -0.5 * eps && s < 0.5 * eps) ? 1.0 / eps : 0.0;
            case MollifierKind::asymmetric_exponential:
                return s >= 0.0 ? std::exp(-s / eps) / eps : 0.0;
            case MollifierKind::asymmetric_triangle: {
                const double peak = 4.0 / (3.0 * eps);
                if (s < -0.5 * eps || s > eps) return 0.0;
                return s <= 0.0 ? peak * (s + 0.5 * eps) / (0.5 * eps) : peak * (eps - s) / eps;
            }
        }
        return 0.0;
    }

    /// Cumulative distribution F(s) = int_{-inf}^s density.
    double cdf(double s) const noexcept {
        switch (kind) {
            case MollifierKind::gaussian:
                return 0.5 * std::erfc(-s / (eps * std::numbers::sqrt2));
            case MollifierKind::box:
                return std::clamp(s / eps + 0.5, 0.0, 1.0);
            case MollifierKind::asymmetric_exponential:
                return s > 0.0 ? -std::expm1(-s / eps) : 0.0;
            case MollifierKind::asymmetric_triangle: {
                const double peak = 4.0 / (3.0 * eps);
                if (s <= -0.5 * eps) return 0.0;
                if (s >= eps) return 1.0;
                if (s <= 0.0) return peak * (s + 0.5 * eps) * (s + 0.5 * eps) / eps;
                return 1.0 / 3.0 + peak * (s - 0.5 * s * s / eps);
            }
        }
        return 0.0;
    }

    double mass(double a, double b) const noexcept { return cdf(b) - cdf(a); }

    /// Interval outside of which the kernel is zero (or below 1e-17 of its peak).
    std::pair<double, double> support() const noexcept {
        switch (kind) {
            case MollifierKind::gaussian: return {-12.0 * eps, 12.0 * eps};
            case MollifierKind::box: return {-0.5 * eps, 0.5 * eps};
            case MollifierKind::asymmetric_exponential: return {0.0, 40.0 * eps};
            case MollifierKind::asymmetric_triangle: return {-0.5 * eps, eps};
        }
        return {0.0, 0.0};
    }

    /// Points where the kernel or its derivative jumps, support ends included.
    std::vector<double> breakpoints() const {
        const auto [lo, hi] = support();
        switch (kind) {
            case MollifierKind::gaussian: return {lo, hi};
            case MollifierKind::box: return {lo, hi};
            case MollifierKind::asymmetric_exponential: return {lo, hi};
            case MollifierKind::asymmetric_triangle: return {lo, 0.0, hi};
        }
        return {lo, hi};
    }
};

/// Uniform time grid start + k * spacing, k < count.
struct TimeGrid {
    double start = 0.0;
    double spacing = 0.0;
    std::size_t count = 0;

    double at(std::size_t k) const noexcept { return start + static_cast<double>(k) * spacing; }
};

/// dW^eps(t) = sum_k density(t - t_k) dW_k sampled on a time grid.
struct MollifiedNoise {
    NoisePath base;
    Mollifier mollifier;
    TimeGrid grid;
    std::vector<double> samples;  // [sample][channel]

    std::size_t n_channels() const noexcept { return base.n_channels; }
    double at(std::size_t k, std::size_t channel) const noexcept { return samples[k * base.n_channels + channel]; }
    std::span<const double> sample(std::size_t k) const noexcept {
        return {samples.data() + k * base.n_channels, base.n_channels};
    }
};

namespace detail {

/// Index range [first, last) of increments whose midpoints lie in [a, b].
inline std::pair<std::size_t, std::size_t> increments_within(const NoisePath& path, double a, double b) {
    const double lo = std::ceil((a - path.t0) / path.dt - 0.5);
    const double hi = std::floor((b - path.t0) / path.dt - 0.5);
    const double n = static_cast<double>(path.n_steps);
    const auto first = static_cast<std::size_t>(std::clamp(lo, 0.0, n));
    const auto last = static_cast<std::size_t>(std::clamp(hi + 1.0, 0.0, n));
    return {first, std::max(first, last)};
}

}  // namespace detail

inline MollifiedNoise mollify(const NoisePath& path, const Mollifier& m, const TimeGrid& grid) {
    m.validate();
    require(grid.count >= 1 && grid.spacing > 0.0, ErrorKind::invalid_parameter, "empty mollification grid");
    require(grid.spacing <= 0.25 * m.eps * (1.0 + 1e-12), ErrorKind::under_resolved,
            "time grid spacing exceeds eps/4");
    require(path.dt <= 0.25 * m.eps * (1.0 + 1e-12), ErrorKind::under_resolved,
            "Wiener increments coarser than eps/4");
    MollifiedNoise out{path, m, grid, std::vector<double>(grid.count * path.n_channels, 0.0)};
    const auto [lo, hi] = m.support();
    const double shift = (grid.start - path.t0) / path.dt;
    if (std::abs(grid.spacing / path.dt - 1.0) < 1e-12 && std::abs(shift - std::round(shift)) < 1e-9) {
        // Aligned grids: t_k - midpoint(j) = (s0 + k - j - 1/2) dt, so one weight table serves every sample.
        const auto s0 = static_cast<std::ptrdiff_t>(std::llround(shift));
        const auto d_lo = static_cast<std::ptrdiff_t>(std::ceil(lo / path.dt + 0.5));
        const auto d_hi = static_cast<std::ptrdiff_t>(std::floor(hi / path.dt + 0.5));
        std::vector<double> weight(static_cast<std::size_t>(d_hi - d_lo + 1));
        for (std::ptrdiff_t d = d_lo; d <= d_hi; ++d)
            weight[static_cast<std::size_t>(d - d_lo)] = m.density((static_cast<double>(d) - 0.5) * path.dt);
        const auto n_steps = static_cast<std::ptrdiff_t>(path.n_steps);
        for (std::size_t k = 0; k < grid.count; ++k) {
            double* row = out.samples.data() + k * path.n_channels;
            const std::ptrdiff_t base = s0 + static_cast<std::ptrdiff_t>(k);
            const std::ptrdiff_t j_first = std::max<std::ptrdiff_t>(0, base - d_hi);
            const std::ptrdiff_t j_last = std::min<std::ptrdiff_t>(n_steps - 1, base - d_lo);
            for (std::ptrdiff_t j = j_first; j <= j_last; ++j) {
                const double w = weight[static_cast<std::size_t>(base - j - d_lo)];
                if (w == 0.0) continue;
                const double* dw = path.increments.data() + static_cast<std::size_t>(j) * path.n_channels;
                for (std::size_t c = 0; c < path.n_channels; ++c) row[c] += w * dw[c];
            }
        }
        return out;
    }
    for (std::size_t k = 0; k < grid.count; ++k) {
        const double t = grid.at(k);
        const auto [first, last] = detail::increments_within(path, t - hi, t - lo);
        double* row = out.samples.data() + k * path.n_channels;
        for (std::size_t j = first; j < last; ++j) {
            const double w = m.density(t - path.midpoint(j));
            if (w == 0.0) continue;
            for (std::size_t c = 0; c < path.n_channels; ++c) row[c] += w * path.at(j, c);
        }
    }
    return out;
}

/// int_a^b dW^eps_c(t) dt, evaluated exactly through the kernel CDF.
inline double integrated_noise(const NoisePath& path, const Mollifier& m, std::size_t channel, double a,
                               double b) {
    const auto [lo, hi] = m.support();
    const auto [first, last] = detail::increments_within(path, a - hi, b - lo);
    double s = 0.0;
    for (std::size_t j = first; j < last; ++j) {
        const double tj = path.midpoint(j);
        s += m.mass(a - tj, b - tj) * path.at(j, channel);
    }
    return s;
}

namespace detail {

/// Composite Gauss-Legendre over [a, b] split at `cuts`, every piece no longer
/// than `max_piece`.
template <unsigned Order, class F>
double piecewise_gauss(F&& f, double a, double b, std::vector<double> cuts, double max_piece) {
    if (!(b > a)) return 0.0;
    cuts.push_back(a);
    cuts.push_back(b);
    std::sort(cuts.begin(), cuts.end());
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < cuts.size(); ++k) {
        const double lo = std::max(a, cuts[k]);
        const double hi = std::min(b, cuts[k + 1]);
        if (!(hi > lo)) continue;
        const auto pieces = static_cast<std::size_t>(std::ceil((hi - lo) / max_piece - 1e-9));
        const double h = (hi - lo) / static_cast<double>(std::max<std::size_t>(pieces, 1));
        for (std::size_t p = 0; p < std::max<std::size_t>(pieces, 1); ++p) {
            const double x0 = lo + static_cast<double>(p) * h;
            total += boost::math::quadrature::gauss<double, Order>::integrate(f, x0, x0 + h);
        }
    }
    return total;
}

/// Kernel autocorrelation C(tau) = int dv density(v) density(v + tau).
template <unsigned Order>
double kernel_autocorrelation(const Mollifier& m, double tau) {
    const auto [lo, hi] = m.support();
    const double a = std::max(lo, lo - tau);
    const double b = std::min(hi, hi - tau);
    if (!(b > a)) return 0.0;
    std::vector<double> cuts;
    for (double p : m.breakpoints()) {
        cuts.push_back(p);
        cuts.push_back(p - tau);
    }
    return piecewise_gauss<Order>([&](double v) { return m.density(v) * m.density(v + tau); }, a, b, cuts,
                                  0.5 * m.eps);
}

template <unsigned Order>
double i_epsilon_rule(const Mollifier& m, double t) {
    const auto [lo, hi] = m.support();
    const double width = hi - lo;
    const double a = std::max(-t, -width);
    const double b = std::min(t, width);
    std::vector<double> cuts;
    const auto bp = m.breakpoints();
    for (double p : bp)
        for (double q : bp) cuts.push_back(p - q);
    return 0.5 * piecewise_gauss<Order>([&](double tau) { return kernel_autocorrelation<Order>(m, tau); }, a, b,
                                        cuts, 0.5 * m.eps);
}

}  // namespace detail

/// I^eps(t) = (1/2) int_{-t}^{t} ds int du density(s + u) density(u).
///
/// This is the Ito-isometry reduction of the double integral
/// int_0^t ds int du density(t - u) density(s - u); the inner
/// autocorrelation is always even, so the value tends to 1/2 for any
/// unit-mass kernel as eps/t -> 0.
inline double i_epsilon_quadrature(const Mollifier& m, double t) {
    m.validate();
    require(std::isfinite(t) && t > 0.0, ErrorKind::invalid_parameter, "I^eps needs t > 0");
    const double fine = detail::i_epsilon_rule<20>(m, t);
    const double coarse = detail::i_epsilon_rule<10>(m, t);
    require(std::isfinite(fine) && std::abs(fine - coarse) <= 1e-10, ErrorKind::quadrature_failure,
            "I^eps quadrature did not converge (" + std::to_string(fine) + " vs " + std::to_string(coarse) + ")");
    return fine;
}

struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
};

/// Monte Carlo estimate of E[dW^eps_t * int_0^t dW^eps_s ds] over sampled paths.
///
/// Each path is resolved at eps/16 on the window that feeds both factors; the
/// time integral is taken exactly through the kernel CDF, so the estimator's
/// expectation is a midpoint rule for I^eps.
inline Estimate i_epsilon_monte_carlo(const Mollifier& m, double t, std::size_t n_paths, std::uint64_t seed) {
    m.validate();
    require(std::isfinite(t) && t > 0.0, ErrorKind::invalid_parameter, "I^eps needs t > 0");
    require(n_paths >= 100, ErrorKind::invalid_parameter, "I^eps Monte Carlo needs n_paths >= 100");
    const auto [lo, hi] = m.support();
    const auto inner = static_cast<std::size_t>(std::ceil(16.0 * t / m.eps - 1e-9));
    const double dt = t / static_cast<double>(inner);
    const auto before = static_cast<std::size_t>(std::ceil(std::max(hi, 0.0) / dt));
    const auto after = static_cast<std::size_t>(std::ceil(std::max(-lo, 0.0) / dt));
    const std::size_t n_steps = before + inner + after;
    const double t0 = -static_cast<double>(before) * dt;

    std::vector<double> at_t(n_steps), over_window(n_steps);
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double tk = t0 + (static_cast<double>(k) + 0.5) * dt;
        at_t[k] = m.density(t - tk);
        over_window[k] = m.mass(-tk, t - tk);
    }

    double mean = 0.0, m2 = 0.0;
    for (std::size_t p = 0; p < n_paths; ++p) {
        const NoisePath path = sample_wiener(derive_seed(seed, p), dt, n_steps, 1, t0);
        double a = 0.0, b = 0.0;
        for (std::size_t k = 0; k < n_steps; ++k) {
            a += at_t[k] * path.increments[k];
            b += over_window[k] * path.increments[k];
        }
        const double x = a * b;
        const double delta = x - mean;
        mean += delta / static_cast<double>(p + 1);
        m2 += delta * (x - mean);
    }
    const double var = m2 / static_cast<double>(n_paths - 1);
    return {mean, std::sqrt(var / static_cast<double>(n_paths))};
}

/// theta(0) = 1 - I, for reporting.
inline double theta0_from_i(double i_eps) noexcept { return 1.0 - i_eps; }

}  // namespace collapse
