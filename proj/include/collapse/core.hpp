#pragma once

// Domain types shared by every module: physical parameters, the position
// grid, pure grid states and the block-decomposed density matrix.
//
// Units are natural (hbar = 1). Internal (mass) index 0 is the heavy state
// M_H, index 1 the light state M_L. Grid-resolved arrays use the interleaved
// layout entry(i, mu) = 2 * i + mu.

#include <array>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <vector>

#include "collapse/error.hpp"

namespace collapse {

using complex = std::complex<double>;

enum class Mass : int { H = 0, L = 1 };

constexpr int index_of(Mass m) noexcept { return static_cast<int>(m); }

/// Internal states of the two-level meson: the flavor pair and the mass pair.
enum class Internal { M0, M0bar, MH, ML };

inline std::string to_string(Internal s) {
    switch (s) {
        case Internal::M0: return "M0";
        case Internal::M0bar: return "M0bar";
        case Internal::MH: return "MH";
        case Internal::ML: return "ML";
    }
    return "?";
}

inline Internal partner(Internal s) noexcept {
    switch (s) {
        case Internal::M0: return Internal::M0bar;
        case Internal::M0bar: return Internal::M0;
        case Internal::MH: return Internal::ML;
        case Internal::ML: return Internal::MH;
    }
    return s;
}

struct ModelParams {
    double m0 = 1.0;
    double mH = 1.5;
    double mL = 0.5;
    double lambda = 0.0;  // QMUPL coupling, 1/(length^2 time)
    double gamma = 0.0;   // CSL coupling
    double rC = 0.5;      // CSL smearing length
    double alpha = 1.0;   // initial Gaussian width parameter, length^2
    int dim = 1;

    double dm() const noexcept { return mH - mL; }
    double mass(Mass m) const noexcept { return m == Mass::H ? mH : mL; }

    void validate() const {
        auto finite = [](double v) { return std::isfinite(v); };
        require(finite(m0) && m0 > 0.0, ErrorKind::invalid_parameter, "m0 must be > 0");
        require(finite(mH) && finite(mL) && mH > mL, ErrorKind::invalid_parameter,
                "mH must exceed mL (dm > 0)");
        require(finite(lambda) && lambda >= 0.0, ErrorKind::invalid_parameter, "lambda must be >= 0");
        require(finite(gamma) && gamma >= 0.0, ErrorKind::invalid_parameter, "gamma must be >= 0");
        require(finite(rC) && rC > 0.0, ErrorKind::invalid_parameter, "rC must be > 0");
        require(finite(alpha) && alpha > 0.0, ErrorKind::invalid_parameter, "alpha must be > 0");
        require(dim == 1 || dim == 3, ErrorKind::invalid_parameter, "dim must be 1 or 3");
    }
};

/// Uniform quadrature mesh x_i = origin + i * spacing. The Hamiltonian has no
/// kinetic term, so points never couple and no boundary condition exists.
struct Grid {
    std::size_t n_points = 0;
    double spacing = 0.0;
    double origin = 0.0;

    static Grid centered(std::size_t n, double spacing) {
        return Grid{n, spacing, -0.5 * static_cast<double>(n - 1) * spacing};
    }

    double x(std::size_t i) const noexcept { return origin + static_cast<double>(i) * spacing; }
    double extent() const noexcept { return static_cast<double>(n_points) * spacing; }
    std::size_t entries() const noexcept { return 2 * n_points; }

    void validate() const {
        require(n_points >= 2, ErrorKind::invalid_parameter, "grid needs n_points >= 2");
        require(std::isfinite(spacing) && spacing > 0.0, ErrorKind::invalid_parameter,
                "grid spacing must be > 0");
        require(std::isfinite(origin), ErrorKind::invalid_parameter, "grid origin must be finite");
    }

    bool operator==(const Grid&) const = default;
};

/// Grid resolves a Gaussian of parameter alpha: covers 8 sqrt(alpha) and has
/// spacing at most sqrt(alpha) / 4.
inline void check_resolves(const Grid& grid, double alpha) {
    grid.validate();
    const double width = std::sqrt(alpha);
    require(grid.extent() >= 8.0 * width, ErrorKind::grid_too_coarse,
            "grid extent " + std::to_string(grid.extent()) + " < 8 sqrt(alpha)");
    require(grid.spacing <= 0.25 * width * (1.0 + 1e-12), ErrorKind::grid_too_coarse,
            "grid spacing " + std::to_string(grid.spacing) + " > sqrt(alpha)/4");
}

struct FlavorVector {
    complex cH;
    complex cL;

    double norm_squared() const noexcept { return std::norm(cH) + std::norm(cL); }
    complex operator[](Mass m) const noexcept { return m == Mass::H ? cH : cL; }
};

/// <a|b> in the mass basis.
inline complex overlap(const FlavorVector& a, const FlavorVector& b) noexcept {
    return std::conj(a.cH) * b.cH + std::conj(a.cL) * b.cL;
}

/// Mass-basis components: M0 = (H + L)/sqrt2, M0bar = (H - L)/sqrt2; mass
/// labels map to the basis vectors.
inline FlavorVector flavor_to_mass(Internal s) noexcept {
    const double r = 1.0 / std::sqrt(2.0);
    switch (s) {
        case Internal::M0: return {r, r};
        case Internal::M0bar: return {r, -r};
        case Internal::MH: return {1.0, 0.0};
        case Internal::ML: return {0.0, 1.0};
    }
    return {0.0, 0.0};
}

/// Pure state on the grid; amplitudes use the interleaved (point, mass) layout.
struct GridState {
    Grid grid;
    std::vector<complex> amplitudes;

    explicit GridState(const Grid& g) : grid(g), amplitudes(g.entries(), complex{}) {}

    complex& at(std::size_t i, Mass m) noexcept { return amplitudes[2 * i + index_of(m)]; }
    const complex& at(std::size_t i, Mass m) const noexcept { return amplitudes[2 * i + index_of(m)]; }

    double norm_squared() const noexcept {
        double s = 0.0;
        for (const auto& a : amplitudes) s += std::norm(a);
        return s * grid.spacing;
    }

    double mass_population(Mass m) const noexcept {
        double s = 0.0;
        for (std::size_t i = 0; i < grid.n_points; ++i) s += std::norm(at(i, m));
        return s * grid.spacing;
    }

    void normalize() {
        const double n = norm_squared();
        require(n > 0.0 && std::isfinite(n), ErrorKind::invariant_violation, "cannot normalize zero state");
        const double inv = 1.0 / std::sqrt(n);
        for (auto& a : amplitudes) a *= inv;
    }
};

/// Gaussian position profile psi(x) ~ exp(-x^2 / (2 alpha)) (density variance
/// alpha/2 per coordinate), normalized on the grid and tensored with the
/// internal state.
inline GridState make_gaussian_state(const ModelParams& params, const Grid& grid, Internal internal) {
    params.validate();
    check_resolves(grid, params.alpha);
    GridState state(grid);
    const FlavorVector c = flavor_to_mass(internal);
    for (std::size_t i = 0; i < grid.n_points; ++i) {
        const double x = grid.x(i);
        const double psi = std::exp(-x * x / (2.0 * params.alpha));
        state.at(i, Mass::H) = psi * c.cH;
        state.at(i, Mass::L) = psi * c.cL;
    }
    state.normalize();
    return state;
}

/// Density matrix blocks rho^{mu nu}(x_i, x_j); each block is row-major in (i, j).
struct DensityBlocks {
    Grid grid;
    std::array<std::array<std::vector<complex>, 2>, 2> blocks;

    explicit DensityBlocks(const Grid& g) : grid(g) {
        for (auto& row : blocks)
            for (auto& b : row) b.assign(g.n_points * g.n_points, complex{});
    }

    complex& at(Mass mu, Mass nu, std::size_t i, std::size_t j) noexcept {
        return blocks[index_of(mu)][index_of(nu)][i * grid.n_points + j];
    }
    const complex& at(Mass mu, Mass nu, std::size_t i, std::size_t j) const noexcept {
        return blocks[index_of(mu)][index_of(nu)][i * grid.n_points + j];
    }

    /// |phi><phi| as a kernel rho(x, y) = phi(x) conj(phi(y)); trace() applies
    /// the grid measure.
    static DensityBlocks from_pure(const GridState& s) {
        DensityBlocks rho(s.grid);
        const std::size_t n = s.grid.n_points;
        for (int mu = 0; mu < 2; ++mu)
            for (int nu = 0; nu < 2; ++nu)
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        rho.blocks[mu][nu][i * n + j] =
                            s.amplitudes[2 * i + mu] * std::conj(s.amplitudes[2 * j + nu]);
        return rho;
    }

    double trace() const noexcept {
        double s = 0.0;
        for (int mu = 0; mu < 2; ++mu)
            for (std::size_t i = 0; i < grid.n_points; ++i)
                s += blocks[mu][mu][i * grid.n_points + i].real();
        return s * grid.spacing;
    }

    /// max |rho^{mu nu}(x,y) - conj(rho^{nu mu}(y,x))|
    double hermiticity_defect() const noexcept {
        const std::size_t n = grid.n_points;
        double worst = 0.0;
        for (int mu = 0; mu < 2; ++mu)
            for (int nu = 0; nu < 2; ++nu)
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        worst = std::max(worst, std::abs(blocks[mu][nu][i * n + j] -
                                                         std::conj(blocks[nu][mu][j * n + i])));
        return worst;
    }

    double max_abs() const noexcept {
        double worst = 0.0;
        for (const auto& row : blocks)
            for (const auto& b : row)
                for (const auto& v : b) worst = std::max(worst, std::abs(v));
        return worst;
    }

    void validate(double tolerance = 1e-9) const {
        grid.validate();
        for (const auto& row : blocks)
            for (const auto& b : row)
                require(b.size() == grid.n_points * grid.n_points, ErrorKind::invariant_violation,
                        "density block has wrong size");
        const double scale = std::max(1.0, max_abs());
        require(hermiticity_defect() <= tolerance * scale, ErrorKind::invariant_violation,
                "density matrix is not Hermitian");
        require(std::abs(trace() - 1.0) <= tolerance, ErrorKind::invariant_violation,
                "density matrix trace " + std::to_string(trace()) + " != 1");
    }
};

/// Spacing-weighted Frobenius distance, comparable across grid refinements.
inline double distance(const DensityBlocks& a, const DensityBlocks& b) {
    require(a.grid == b.grid, ErrorKind::invariant_violation, "density blocks live on different grids");
    double s = 0.0;
    for (int mu = 0; mu < 2; ++mu)
        for (int nu = 0; nu < 2; ++nu)
            for (std::size_t k = 0; k < a.blocks[mu][nu].size(); ++k)
                s += std::norm(a.blocks[mu][nu][k] - b.blocks[mu][nu][k]);
    return std::sqrt(s) * a.grid.spacing;
}

}  // namespace collapse
