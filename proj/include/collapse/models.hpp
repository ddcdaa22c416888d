#pragma once

// Hamiltonian and collapse channels of the QMUPL and CSL models on a 1-D
// position grid. Every operator is diagonal in the (position, mass) basis,
// so each is stored as its diagonal in the interleaved layout 2 * i + mu.

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "collapse/core.hpp"
#include "collapse/error.hpp"

namespace collapse {

enum class ModelKind { qmupl, csl };

inline std::string to_string(ModelKind kind) { return kind == ModelKind::qmupl ? "qmupl" : "csl"; }

inline ModelKind parse_model_kind(const std::string& name) {
    if (name == "qmupl") return ModelKind::qmupl;
    if (name == "csl") return ModelKind::csl;
    throw Error(ErrorKind::invalid_parameter, "unknown model '" + name + "'");
}

struct DiagonalOperator {
    std::vector<double> diag;

    double operator[](std::size_t e) const noexcept { return diag[e]; }
    std::size_t size() const noexcept { return diag.size(); }
};

/// Channel i enters the dynamics with weight coupling * channel_measure.
/// QMUPL has one channel per coordinate (measure 1); CSL has one channel per
/// noise-field grid point and the measure is the grid spacing, the discrete
/// stand-in for the continuous channel index.
struct CollapseModel {
    ModelKind label = ModelKind::qmupl;
    Grid grid;
    DiagonalOperator hamiltonian;
    std::vector<DiagonalOperator> channels;
    double coupling = 0.0;
    double channel_measure = 1.0;

    double effective_coupling() const noexcept { return coupling * channel_measure; }
    std::size_t n_channels() const noexcept { return channels.size(); }
};

inline DiagonalOperator build_hamiltonian(const ModelParams& params, const Grid& grid) {
    params.validate();
    grid.validate();
    DiagonalOperator h{std::vector<double>(grid.entries())};
    for (std::size_t i = 0; i < grid.n_points; ++i) {
        h.diag[2 * i + index_of(Mass::H)] = params.mH;
        h.diag[2 * i + index_of(Mass::L)] = params.mL;
    }
    return h;
}

/// A = q (x) diag(mH, mL) / m0 on the simulated coordinate.
inline CollapseModel build_qmupl(const ModelParams& params, const Grid& grid) {
    CollapseModel model{ModelKind::qmupl, grid, build_hamiltonian(params, grid), {}, params.lambda, 1.0};
    DiagonalOperator a{std::vector<double>(grid.entries())};
    for (std::size_t i = 0; i < grid.n_points; ++i)
        for (Mass m : {Mass::H, Mass::L}) a.diag[2 * i + index_of(m)] = grid.x(i) * params.mass(m) / params.m0;
    model.channels.push_back(std::move(a));
    return model;
}

/// L1-normalized Gaussian smearing of variance rC^2 in `dim` dimensions.
inline double smearing(double r, double rC, int dim = 1) noexcept {
    const double var = rC * rC;
    return std::pow(2.0 * std::numbers::pi * var, -0.5 * dim) * std::exp(-0.5 * r * r / var);
}

/// (g * g)(r): convolution doubles the variance.
inline double smearing_autoconvolution(double r, double rC, int dim = 1) noexcept {
    const double var = 2.0 * rC * rC;
    return std::pow(2.0 * std::numbers::pi * var, -0.5 * dim) * std::exp(-0.5 * r * r / var);
}

/// A_x = g(x - q) (x) diag(mH, mL) / m0 for every noise point x on the grid.
inline CollapseModel build_csl(const ModelParams& params, const Grid& grid) {
    params.validate();
    grid.validate();
    require(grid.spacing <= 0.25 * params.rC * (1.0 + 1e-12), ErrorKind::under_resolved,
            "grid spacing exceeds rC/4; smearing not resolved");
    CollapseModel model{ModelKind::csl, grid, build_hamiltonian(params, grid), {}, params.gamma, grid.spacing};
    model.channels.reserve(grid.n_points);
    for (std::size_t k = 0; k < grid.n_points; ++k) {
        DiagonalOperator a{std::vector<double>(grid.entries())};
        for (std::size_t i = 0; i < grid.n_points; ++i) {
            const double g = smearing(grid.x(k) - grid.x(i), params.rC);
            for (Mass m : {Mass::H, Mass::L}) a.diag[2 * i + index_of(m)] = g * params.mass(m) / params.m0;
        }
        model.channels.push_back(std::move(a));
    }
    return model;
}

inline CollapseModel build_model(ModelKind kind, const ModelParams& params, const Grid& grid) {
    return kind == ModelKind::qmupl ? build_qmupl(params, grid) : build_csl(params, grid);
}

/// Discrete channel sum spacing * sum_x A_x(y) A_x(y') for grid points y, y'
/// in mass sector m, i.e. the smearing overlap times (m / m0)^2.
inline double discrete_smearing_overlap(const CollapseModel& csl, std::size_t i, std::size_t j, Mass m = Mass::H) {
    double s = 0.0;
    const std::size_t ei = 2 * i + index_of(m), ej = 2 * j + index_of(m);
    for (const auto& a : csl.channels) s += a[ei] * a[ej];
    return s * csl.channel_measure;
}

}  // namespace collapse
