#pragma once

// Command-line front end: flags and an optional flat key = value config file
// (flags win) are folded into an ExperimentConfig and handed to run_experiment.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "collapse/experiment.hpp"

namespace collapse {

namespace detail {

template <class Parse>
auto parse_name(Parse parse, const std::string& key, const std::string& value) {
    try {
        return parse(value);
    } catch (const Error& e) {
        throw Error(ErrorKind::config, key + ": " + e.detail());
    }
}

}  // namespace detail

inline int cli_main(std::vector<std::string> args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Collapse-model flavor oscillation experiments", "collapse-sim"};
    app.set_version_flag("--version", kVersion);
    app.set_config("--config", "", "flat key = value file; command-line flags override it");
    app.allow_config_extras(false);
    app.require_subcommand(1);
    app.fallthrough();

    ExperimentConfig c;
    std::string model = "qmupl", integrator = "ito-nonlinear", mollifier = "gaussian", initial = "M0";
    double ml = c.params.mL, dm = c.params.dm();

    app.add_option("--model", model, "qmupl or csl")->capture_default_str();
    app.add_option("--dm", dm, "mass splitting mH - mL")->capture_default_str();
    app.add_option("--m0", c.params.m0, "reference mass")->capture_default_str();
    app.add_option("--ml", ml, "light mass mL")->capture_default_str();
    app.add_option("--lambda", c.params.lambda, "QMUPL coupling")->capture_default_str();
    app.add_option("--gamma", c.params.gamma, "CSL coupling")->capture_default_str();
    app.add_option("--rc", c.params.rC, "CSL smearing length")->capture_default_str();
    app.add_option("--alpha", c.params.alpha, "initial packet width parameter")->capture_default_str();
    app.add_option("--dim", c.params.dim, "spatial dimension (1 or 3)")->capture_default_str();
    app.add_option("--initial", initial, "M0, M0bar, MH or ML")->capture_default_str();
    app.add_option("--npoints", c.n_points, "grid points (0: automatic)")->capture_default_str();
    app.add_option("--spacing", c.spacing, "grid spacing (0: automatic)")->capture_default_str();
    app.add_option("--tmax", c.t_max, "final time")->capture_default_str();
    app.add_option("--samples", c.samples, "number of sample intervals")->capture_default_str();
    app.add_option("--ntraj", c.n_traj, "trajectories / Monte Carlo paths")->capture_default_str();
    app.add_option("--seed", c.seed, "master seed")->capture_default_str();
    app.add_option("--dt", c.dt, "SDE step")->capture_default_str();
    app.add_option("--me-dt", c.me_dt, "master-equation step")->capture_default_str();
    app.add_option("--integrator", integrator, "ito-nonlinear, ito-linear, stratonovich or wong-zakai")
        ->capture_default_str();
    app.add_option("--renormalize", c.renormalize, "renormalize nonlinear Ito steps")->capture_default_str();
    app.add_option("--mollifier", mollifier, "gaussian, box, asymmetric-exponential or asymmetric-triangle")
        ->capture_default_str();
    app.add_option("--eps", c.eps, "mollifier widths (comma separated)")->delimiter(',');
    app.add_option("--order", c.order, "Dyson truncation order")->capture_default_str();
    app.add_option("--decay-width", c.decay_width, "optional exp(-width t) weak-decay factor")->capture_default_str();
    app.add_option("--out", c.out, "output path ('-' for stdout)")->capture_default_str();
    app.add_option("--format", c.format, "csv or json")->capture_default_str();

    app.add_subcommand("exact", "closed-form flavor probabilities");
    app.add_subcommand("me", "grid master-equation evolution");
    app.add_subcommand("ensemble", "stochastic trajectory ensemble");
    app.add_subcommand("dyson", "truncated Dyson series of the master equation");
    app.add_subcommand("theta-check", "noise autocorrelation integral sweep over eps");
    app.add_subcommand("compare", "exact vs master equation vs ensemble with 3-sigma verdicts");

    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        c.run = parse_run_mode(app.get_subcommands().front()->get_name());
        c.model = detail::parse_name(parse_model_kind, "model", model);
        c.integrator = detail::parse_name(parse_integrator_kind, "integrator", integrator);
        c.mollifier = detail::parse_name(parse_mollifier_kind, "mollifier", mollifier);
        c.initial = detail::parse_name(parse_internal, "initial", initial);
        c.params.mL = ml;
        c.params.mH = ml + dm;
        require(dm > 0.0, ErrorKind::config, "dm must be > 0");
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return run_experiment(c, out, err);
}

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
    return cli_main(std::vector<std::string>(argv, argv + argc), out, err);
}

}  // namespace collapse
