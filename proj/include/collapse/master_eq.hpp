#pragma once

// Evolution of the averaged density matrix
//
//   d rho / dt = -i [H, rho] - (lambda / 2) sum_i [A_i, [A_i, rho]],
//
// its closed-form solutions for the diagonal QMUPL and CSL models, the Dyson
// expansion of the interaction-picture propagator and the transition
// probabilities <out| rho_t |out>.
//
// Every generator here is diagonal in (position, mass), so each entry
// rho^{mu nu}(x, y) evolves by its own scalar exponential.

#include <array>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <string>
#include <vector>

#include "collapse/core.hpp"
#include "collapse/error.hpp"
#include "collapse/models.hpp"

namespace collapse {

/// Traces of the four mass blocks over position: T^{mu nu} = int rho^{mu nu}(x, x) dx.
using BlockTraces = std::array<std::array<complex, 2>, 2>;

inline BlockTraces block_traces(const DensityBlocks& rho) {
    BlockTraces t{};
    const std::size_t n = rho.grid.n_points;
    for (int mu = 0; mu < 2; ++mu)
        for (int nu = 0; nu < 2; ++nu) {
            complex s{};
            for (std::size_t i = 0; i < n; ++i) s += rho.blocks[mu][nu][i * n + i];
            t[mu][nu] = s * rho.grid.spacing;
        }
    return t;
}

/// Block traces of the isotropic product state in `dim` dimensions, given the
/// traces of one coordinate.
///
/// For a separable initial state psi(x) (x) c the coherence trace of one
/// coordinate is c_mu conj(c_nu) e^{-i(m_mu - m_nu)t} F, with F >= 0 the
/// position-damping factor, and every extra coordinate multiplies in another
/// F. Populations carry F = 1.
inline BlockTraces lift_separable(const BlockTraces& one, int dim) {
    require(dim == 1 || dim == 3, ErrorKind::invalid_parameter, "dim must be 1 or 3");
    BlockTraces out = one;
    if (dim == 1) return out;
    for (int mu = 0; mu < 2; ++mu)
        for (int nu = 0; nu < 2; ++nu) {
            if (mu == nu) continue;
            const double scale = std::sqrt(one[mu][mu].real() * one[nu][nu].real());
            if (scale <= 0.0) continue;
            const double damping = std::abs(one[mu][nu]) / scale;
            out[mu][nu] = one[mu][nu] * std::pow(damping, dim - 1);
        }
    return out;
}

/// <out| T |out> with |out> expressed in the mass basis.
inline double transition_probability(const BlockTraces& t, Internal out) {
    const FlavorVector c = flavor_to_mass(out);
    complex s{};
    for (Mass mu : {Mass::H, Mass::L})
        for (Mass nu : {Mass::H, Mass::L}) s += std::conj(c[mu]) * t[index_of(mu)][index_of(nu)] * c[nu];
    return s.real();
}

inline double transition_probability(const DensityBlocks& rho, Internal out, int dim = 1) {
    rho.validate(1e-8);
    return transition_probability(lift_separable(block_traces(rho), dim), out);
}

namespace detail {

/// rho(mu, nu, i, j) *= factor(mu, nu, i, j) on one entry of every Hermitian
/// pair, with the partner set to the conjugate; Hermiticity holds exactly.
template <class Factor>
void scale_hermitian(DensityBlocks& rho, Factor&& factor) {
    const std::size_t n = rho.grid.n_points;
    for (int mu = 0; mu < 2; ++mu)
        for (int nu = mu; nu < 2; ++nu)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = (mu == nu ? i : 0); j < n; ++j) {
                    complex& v = rho.blocks[mu][nu][i * n + j];
                    v *= factor(mu, nu, i, j);
                    rho.blocks[nu][mu][j * n + i] = std::conj(v);
                }
}

}  // namespace detail

/// Per-entry rates of the diagonal Lindblad generator built from a model:
/// rate(a, b) = -i (h_a - h_b) - (coupling * measure / 2) sum_i (A_i(a) - A_i(b))^2.
class DiagonalGenerator {
public:
    explicit DiagonalGenerator(const CollapseModel& model) : grid_(model.grid), rates_(model.grid) {
        const std::size_t n = grid_.n_points;
        const double half = 0.5 * model.effective_coupling();
        for (int mu = 0; mu < 2; ++mu)
            for (int nu = 0; nu < 2; ++nu)
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const std::size_t a = 2 * i + mu, b = 2 * j + nu;
                        double decay = 0.0;
                        for (const auto& ch : model.channels) {
                            const double d = ch[a] - ch[b];
                            decay += d * d;
                        }
                        rates_.blocks[mu][nu][i * n + j] =
                            complex(-half * decay, -(model.hamiltonian[a] - model.hamiltonian[b]));
                    }
    }

    complex rate(Mass mu, Mass nu, std::size_t i, std::size_t j) const noexcept { return rates_.at(mu, nu, i, j); }
    const Grid& grid() const noexcept { return grid_; }

    /// Integrates with steps no longer than dt; each step multiplies every
    /// entry by exp(rate * h).
    DensityBlocks evolve(const DensityBlocks& rho0, double t, double dt) const {
        require(rho0.grid == grid_, ErrorKind::invariant_violation, "density blocks live on a different grid");
        rho0.validate();
        require(std::isfinite(t) && t >= 0.0, ErrorKind::invalid_parameter, "evolution time must be >= 0");
        require(std::isfinite(dt) && dt > 0.0, ErrorKind::invalid_parameter, "dt must be > 0");
        DensityBlocks rho = rho0;
        if (t == 0.0) return rho;
        const auto steps = static_cast<std::size_t>(std::ceil(t / dt - 1e-12));
        const double h = t / static_cast<double>(steps);
        DensityBlocks step_factor(grid_);
        for (int mu = 0; mu < 2; ++mu)
            for (int nu = 0; nu < 2; ++nu)
                for (std::size_t k = 0; k < rates_.blocks[mu][nu].size(); ++k)
                    step_factor.blocks[mu][nu][k] = std::exp(rates_.blocks[mu][nu][k] * h);
        for (std::size_t s = 0; s < steps; ++s)
            detail::scale_hermitian(rho, [&](int mu, int nu, std::size_t i, std::size_t j) {
                return step_factor.blocks[mu][nu][i * grid_.n_points + j];
            });
        return rho;
    }

private:
    Grid grid_;
    DensityBlocks rates_;
};

inline DensityBlocks evolve_me_numeric(const DensityBlocks& rho0, const CollapseModel& model, double t, double dt) {
    return DiagonalGenerator(model).evolve(rho0, t, dt);
}

/// rho^{mu nu}(x, y, t) = exp[-i(m_mu - m_nu) t - lambda |m_mu x - m_nu y|^2 t / (2 m0^2)] rho^{mu nu}(x, y, 0)
inline DensityBlocks evolve_me_qmupl_exact(const DensityBlocks& rho0, const ModelParams& params, double t) {
    params.validate();
    rho0.validate();
    DensityBlocks rho = rho0;
    const Grid& g = rho.grid;
    const std::array<double, 2> m{params.mH, params.mL};
    const double c = params.lambda * t / (2.0 * params.m0 * params.m0);
    detail::scale_hermitian(rho, [&](int mu, int nu, std::size_t i, std::size_t j) {
        const double d = m[mu] * g.x(i) - m[nu] * g.x(j);
        return std::exp(complex(-c * d * d, -(m[mu] - m[nu]) * t));
    });
    return rho;
}

/// Entrywise solution of the CSL equation on the 1-D grid with the continuum
/// smearing autoconvolution.
inline DensityBlocks evolve_me_csl_exact(const DensityBlocks& rho0, const ModelParams& params, double t) {
    params.validate();
    rho0.validate();
    DensityBlocks rho = rho0;
    const Grid& g = rho.grid;
    const std::array<double, 2> m{params.mH, params.mL};
    const double c = params.gamma * t / (2.0 * params.m0 * params.m0);
    const double gg0 = smearing_autoconvolution(0.0, params.rC);
    detail::scale_hermitian(rho, [&](int mu, int nu, std::size_t i, std::size_t j) {
        const double ggxy = smearing_autoconvolution(g.x(i) - g.x(j), params.rC);
        const double rate = c * ((m[mu] * m[mu] + m[nu] * m[nu]) * gg0 - 2.0 * m[mu] * m[nu] * ggxy);
        return std::exp(complex(-rate, -(m[mu] - m[nu]) * t));
    });
    return rho;
}

struct FlavorProbabilities {
    double p_same = 0.0;
    double p_other = 0.0;
};

/// Algebraic damping (1 + lambda alpha dm^2 t / (2 m0^2))^{-dim/2}; one factor
/// of exponent -1/2 per spatial coordinate.
inline double qmupl_envelope(const ModelParams& p, double t) {
    return std::pow(1.0 + p.lambda * p.alpha * p.dm() * p.dm() * t / (2.0 * p.m0 * p.m0), -0.5 * p.dim);
}

inline double csl_envelope(const ModelParams& p, double t) {
    const double gg0 = smearing_autoconvolution(0.0, p.rC, p.dim);
    return std::exp(-p.gamma * p.dm() * p.dm() * gg0 * t / (2.0 * p.m0 * p.m0));
}

inline FlavorProbabilities flavor_probabilities_from_envelope(double dm, double t, double envelope) {
    const double swing = 0.5 * std::cos(dm * t) * envelope;
    return {0.5 + swing, 0.5 - swing};
}

inline FlavorProbabilities qmupl_flavor_probabilities(const ModelParams& p, double t) {
    p.validate();
    return flavor_probabilities_from_envelope(p.dm(), t, qmupl_envelope(p, t));
}

/// Independent of the initial spatial profile.
inline FlavorProbabilities csl_flavor_probabilities(const ModelParams& p, double t) {
    p.validate();
    return flavor_probabilities_from_envelope(p.dm(), t, csl_envelope(p, t));
}

struct MassTransitions {
    double hh = 1.0;
    double hl = 0.0;
    double ll = 1.0;
    double lh = 0.0;
};

/// Both models leave the mass populations untouched, pathwise and on average.
inline MassTransitions mass_transition_probabilities(ModelKind) { return {}; }

/// Left/right multiplication weights, A^L rho = A rho and A^R rho = rho A.
struct SuperoperatorKernel {
    std::vector<DiagonalOperator> left;
    std::vector<DiagonalOperator> right;
    double coupling = 0.0;
    double measure = 1.0;
    Grid grid;
};

inline SuperoperatorKernel make_kernel(const CollapseModel& model) {
    return {model.channels, model.channels, model.coupling, model.channel_measure, model.grid};
}

inline DensityBlocks to_interaction_picture(const DensityBlocks& rho, const DiagonalOperator& h, double t) {
    DensityBlocks out = rho;
    detail::scale_hermitian(out, [&](int mu, int nu, std::size_t i, std::size_t j) {
        return std::exp(complex(0.0, (h[2 * i + mu] - h[2 * j + nu]) * t));
    });
    return out;
}

inline DensityBlocks to_schrodinger_picture(const DensityBlocks& rho, const DiagonalOperator& h, double t) {
    return to_interaction_picture(rho, h, -t);
}

/// Truncated Dyson series sum_{n <= order} (coupling t)^n / n! D^n rho(0) of
/// the interaction-picture propagator, with
/// D = measure * sum_i [A^L_i A^R_i - (A^L_i A^L_i + A^R_i A^R_i) / 2].
///
/// The channels commute with H, so the interaction-picture generator is time
/// independent and the time-ordered integrals collapse to t^n / n!.
inline DensityBlocks dyson_expand(const SuperoperatorKernel& kernel, const DensityBlocks& rho0, double t, int order) {
    require(order >= 0 && order <= 2, ErrorKind::unsupported_order,
            "Dyson order " + std::to_string(order) + " not in {0, 1, 2}");
    require(rho0.grid == kernel.grid, ErrorKind::invariant_violation, "density blocks live on a different grid");
    require(kernel.left.size() == kernel.right.size(), ErrorKind::invariant_violation, "unpaired kernel channels");
    rho0.validate();
    const std::size_t n = kernel.grid.n_points;
    DensityBlocks generator(kernel.grid);
    for (int mu = 0; mu < 2; ++mu)
        for (int nu = 0; nu < 2; ++nu)
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t a = 2 * i + mu, b = 2 * j + nu;
                    double d = 0.0;
                    for (std::size_t c = 0; c < kernel.left.size(); ++c) {
                        const double l = kernel.left[c][a], r = kernel.right[c][b];
                        d += l * r - 0.5 * (l * l + r * r);
                    }
                    generator.blocks[mu][nu][i * n + j] = d * kernel.measure;
                }

    DensityBlocks result = rho0;
    DensityBlocks term = rho0;
    const double lt = kernel.coupling * t;
    for (int k = 1; k <= order; ++k) {
        detail::scale_hermitian(term, [&](int mu, int nu, std::size_t i, std::size_t j) {
            return generator.blocks[mu][nu][i * n + j] * (lt / k);
        });
        for (int mu = 0; mu < 2; ++mu)
            for (int nu = 0; nu < 2; ++nu)
                for (std::size_t e = 0; e < result.blocks[mu][nu].size(); ++e)
                    result.blocks[mu][nu][e] += term.blocks[mu][nu][e];
    }
    return result;
}

/// Time series of transition probabilities out of one initial state.
struct TransitionRecord {
    std::vector<double> times;
    std::vector<double> p_same;
    std::vector<double> p_other;
    std::vector<double> stderr_same;
    std::vector<double> stderr_other;
    std::string source;

    std::size_t size() const noexcept { return times.size(); }

    void push(double t, double same, double other, double err_same = 0.0, double err_other = 0.0) {
        times.push_back(t);
        p_same.push_back(same);
        p_other.push_back(other);
        stderr_same.push_back(err_same);
        stderr_other.push_back(err_other);
    }
};

/// Spontaneous decay put in by hand: both probabilities (and errors) scaled by e^{-width t}.
inline void apply_decay_width(TransitionRecord& record, double width) {
    require(std::isfinite(width) && width >= 0.0, ErrorKind::invalid_parameter, "decay width must be >= 0");
    for (std::size_t k = 0; k < record.size(); ++k) {
        const double f = std::exp(-width * record.times[k]);
        record.p_same[k] *= f;
        record.p_other[k] *= f;
        record.stderr_same[k] *= f;
        record.stderr_other[k] *= f;
    }
}

inline TransitionRecord closed_form_record(ModelKind kind, const ModelParams& params, const std::vector<double>& times) {
    TransitionRecord rec;
    rec.source = "exact-closed-form";
    for (double t : times) {
        const auto p = kind == ModelKind::qmupl ? qmupl_flavor_probabilities(params, t) : csl_flavor_probabilities(params, t);
        rec.push(t, p.p_same, p.p_other);
    }
    return rec;
}

/// Grid master-equation run from psi_alpha (x) |initial>, sampled at `times`
/// (nondecreasing). QMUPL results in dim 3 use the product structure of the
/// separable state; CSL is only simulated in one dimension.
inline TransitionRecord me_record(ModelKind kind, const ModelParams& params, const Grid& grid,
                                  const std::vector<double>& times, double dt, Internal initial = Internal::M0) {
    require(kind == ModelKind::qmupl || params.dim == 1, ErrorKind::invalid_parameter,
            "the CSL grid master equation is one-dimensional; use dim=1");
    const CollapseModel model = build_model(kind, params, grid);
    const DiagonalGenerator gen(model);
    DensityBlocks rho = DensityBlocks::from_pure(make_gaussian_state(params, grid, initial));
    TransitionRecord rec;
    rec.source = "me-numeric";
    double now = 0.0;
    for (double t : times) {
        require(t >= now, ErrorKind::invalid_parameter, "sample times must be nondecreasing");
        rho = gen.evolve(rho, t - now, dt);
        now = t;
        const BlockTraces traces = lift_separable(block_traces(rho), params.dim);
        rec.push(t, transition_probability(traces, initial), transition_probability(traces, partner(initial)));
    }
    return rec;
}

}  // namespace collapse
