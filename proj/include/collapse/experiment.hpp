#pragma once

// Experiment runner behind the command-line tool: resolves a configuration,
// dispatches one of the run modes and renders the result as CSV or JSON with
// the resolved configuration embedded.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <json.hpp>

#include "collapse/core.hpp"
#include "collapse/error.hpp"
#include "collapse/integrators.hpp"
#include "collapse/master_eq.hpp"
#include "collapse/models.hpp"
#include "collapse/noise.hpp"

namespace collapse {

inline constexpr const char* kVersion = "0.1.0";

enum class RunMode { exact, me, ensemble, dyson, theta_check, compare };

inline std::string to_string(RunMode mode) {
    switch (mode) {
        case RunMode::exact: return "exact";
        case RunMode::me: return "me";
        case RunMode::ensemble: return "ensemble";
        case RunMode::dyson: return "dyson";
        case RunMode::theta_check: return "theta-check";
        case RunMode::compare: return "compare";
    }
    return "?";
}

inline RunMode parse_run_mode(const std::string& name) {
    for (auto m : {RunMode::exact, RunMode::me, RunMode::ensemble, RunMode::dyson, RunMode::theta_check,
                   RunMode::compare})
        if (name == to_string(m)) return m;
    throw Error(ErrorKind::config, "unknown run mode '" + name + "'");
}

inline Internal parse_internal(const std::string& name) {
    for (auto s : {Internal::M0, Internal::M0bar, Internal::MH, Internal::ML})
        if (name == to_string(s)) return s;
    throw Error(ErrorKind::config, "unknown initial state '" + name + "' (M0, M0bar, MH, ML)");
}

struct ExperimentConfig {
    RunMode run = RunMode::exact;
    ModelKind model = ModelKind::qmupl;
    ModelParams params{1.0, 1.5, 0.5, 0.2, 0.0, 0.5, 1.0, 1};
    Internal initial = Internal::M0;

    std::size_t n_points = 0;  // 0: derived from alpha (and rC for CSL)
    double spacing = 0.0;      // 0: derived

    IntegratorKind integrator = IntegratorKind::ito_nonlinear;
    double dt = 1e-3;
    bool renormalize = true;
    MollifierKind mollifier = MollifierKind::gaussian;
    std::vector<double> eps;  // empty: wong-zakai uses t_max/40, theta-check sweeps t/{10,30,100}

    double t_max = 2.0 * std::numbers::pi;
    std::size_t samples = 20;
    std::size_t n_traj = 1000;
    std::uint64_t seed = 1;
    int order = 2;
    double me_dt = 0.01;
    double decay_width = 0.0;

    std::string out = "-";
    std::string format = "csv";
    unsigned workers = 0;

    Grid grid() const {
        const double width = std::sqrt(params.alpha);
        double h = spacing > 0.0 ? spacing : width / 8.0;
        if (spacing <= 0.0 && model == ModelKind::csl) h = std::min(h, params.rC / 4.0);
        std::size_t n = n_points;
        if (n == 0) {
            n = static_cast<std::size_t>(std::ceil(16.0 * width / h - 1e-9));
            n = std::max<std::size_t>(64, n + n % 2);
        }
        return Grid::centered(n, h);
    }

    double wong_zakai_eps() const { return eps.empty() ? t_max / 40.0 : eps.front(); }

    IntegratorSpec integrator_spec() const {
        IntegratorSpec spec{integrator, dt, renormalize, std::nullopt};
        if (integrator == IntegratorKind::wong_zakai) spec.mollifier = Mollifier{mollifier, wong_zakai_eps()};
        return spec;
    }

    /// Re-checks every module invariant the run depends on; failures are
    /// configuration errors naming the offending key.
    void validate() const {
        try {
            params.validate();
        } catch (const Error& e) {
            throw Error(ErrorKind::config, e.detail());
        }
        auto check = [](bool ok, const std::string& what) { require(ok, ErrorKind::config, what); };
        check(std::isfinite(t_max) && t_max > 0.0, "tmax must be > 0");
        check(samples >= 1, "samples must be >= 1");
        check(format == "csv" || format == "json", "format must be csv or json");
        check(std::isfinite(dt) && dt > 0.0, "dt must be > 0");
        check(std::isfinite(me_dt) && me_dt > 0.0, "me-dt must be > 0");
        check(std::isfinite(decay_width) && decay_width >= 0.0, "decay-width must be >= 0");
        check(spacing >= 0.0 && std::isfinite(spacing), "spacing must be >= 0");
        for (double e : eps) check(std::isfinite(e) && e > 0.0, "eps values must be > 0");
        if (run == RunMode::dyson) check(order >= 0 && order <= 2, "order must be 0, 1 or 2");
        if (run == RunMode::ensemble || run == RunMode::compare) {
            check(n_traj >= 1, "ntraj must be >= 1");
            check(params.dim == 1, "trajectory ensembles are simulated in one dimension; use dim=1");
        }
        if (run == RunMode::theta_check) check(n_traj >= 100, "theta-check Monte Carlo needs ntraj >= 100");
        if (run == RunMode::me || run == RunMode::compare || run == RunMode::dyson)
            check(model == ModelKind::qmupl || params.dim == 1,
                  "the CSL grid master equation is one-dimensional; use dim=1");
        if (run != RunMode::exact && run != RunMode::theta_check) {
            const Grid g = grid();
            try {
                check_resolves(g, params.alpha);
                if (model == ModelKind::csl)
                    require(g.spacing <= 0.25 * params.rC * (1.0 + 1e-12), ErrorKind::under_resolved,
                            "spacing exceeds rc/4");
            } catch (const Error& e) {
                throw Error(ErrorKind::config, std::string("grid (npoints/spacing): ") + e.detail());
            }
        }
    }

    /// Every setting as key/value text, in a fixed order.
    std::vector<std::pair<std::string, std::string>> resolved() const;
};

namespace detail {

inline std::string format_number(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

inline std::vector<std::pair<std::string, std::string>> ExperimentConfig::resolved() const {
    using detail::format_number;
    const Grid g = grid();
    std::string eps_list;
    for (double e : eps) eps_list += (eps_list.empty() ? "" : ",") + format_number(e);
    return {
        {"run", to_string(run)},
        {"model", to_string(model)},
        {"m0", format_number(params.m0)},
        {"ml", format_number(params.mL)},
        {"dm", format_number(params.dm())},
        {"lambda", format_number(params.lambda)},
        {"gamma", format_number(params.gamma)},
        {"rc", format_number(params.rC)},
        {"alpha", format_number(params.alpha)},
        {"dim", std::to_string(params.dim)},
        {"initial", to_string(initial)},
        {"npoints", std::to_string(g.n_points)},
        {"spacing", format_number(g.spacing)},
        {"integrator", to_string(integrator)},
        {"dt", format_number(dt)},
        {"renormalize", renormalize ? "true" : "false"},
        {"mollifier", to_string(mollifier)},
        {"eps", eps_list},
        {"tmax", format_number(t_max)},
        {"samples", std::to_string(samples)},
        {"ntraj", std::to_string(n_traj)},
        {"seed", std::to_string(seed)},
        {"order", std::to_string(order)},
        {"me-dt", format_number(me_dt)},
        {"decay-width", format_number(decay_width)},
        {"format", format},
    };
}

using Cell = std::variant<double, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

struct ExperimentOutput {
    Table table;
    bool pass = true;
    std::string summary;
};

inline Table to_table(const TransitionRecord& rec) {
    Table t{{"time", "p_same", "p_other", "stderr_same", "stderr_other", "source"}, {}};
    for (std::size_t k = 0; k < rec.size(); ++k)
        t.rows.push_back({rec.times[k], rec.p_same[k], rec.p_other[k], rec.stderr_same[k], rec.stderr_other[k],
                          rec.source});
    return t;
}

inline std::vector<double> sample_times(const ExperimentConfig& c) {
    std::vector<double> times;
    for (std::size_t k = 0; k <= c.samples; ++k)
        times.push_back(c.t_max * static_cast<double>(k) / static_cast<double>(c.samples));
    return times;
}

inline EnsembleResult run_config_ensemble(const ExperimentConfig& c) {
    const Grid g = c.grid();
    const CollapseModel model = build_model(c.model, c.params, g);
    const GridState initial = make_gaussian_state(c.params, g, c.initial);
    return run_ensemble(model, c.integrator_spec(), initial, c.t_max, c.samples, c.n_traj, c.seed, c.workers);
}

inline TransitionRecord dyson_record(const ExperimentConfig& c, const std::vector<double>& times) {
    const Grid g = c.grid();
    const CollapseModel model = build_model(c.model, c.params, g);
    const SuperoperatorKernel kernel = make_kernel(model);
    const DensityBlocks rho0 = DensityBlocks::from_pure(make_gaussian_state(c.params, g, c.initial));
    TransitionRecord rec;
    rec.source = "dyson-" + std::to_string(c.order);
    for (double t : times) {
        const DensityBlocks rho = to_schrodinger_picture(dyson_expand(kernel, rho0, t, c.order), model.hamiltonian, t);
        const BlockTraces traces = lift_separable(block_traces(rho), c.params.dim);
        rec.push(t, transition_probability(traces, c.initial), transition_probability(traces, partner(c.initial)));
    }
    return rec;
}

inline TransitionRecord exact_record(const ExperimentConfig& c, const std::vector<double>& times) {
    if (c.initial == Internal::MH || c.initial == Internal::ML) {
        TransitionRecord rec;
        rec.source = "exact-closed-form";
        const MassTransitions m = mass_transition_probabilities(c.model);
        for (double t : times) rec.push(t, c.initial == Internal::MH ? m.hh : m.ll, c.initial == Internal::MH ? m.hl : m.lh);
        return rec;
    }
    return closed_form_record(c.model, c.params, times);
}

inline Table theta_check_table(const ExperimentConfig& c) {
    const double t = c.t_max;
    std::vector<double> eps = c.eps;
    if (eps.empty()) eps = {t / 10.0, t / 30.0, t / 100.0};
    Table table{{"eps", "mollifier", "i_quadrature", "theta0", "i_monte_carlo", "mc_stderr"}, {}};
    for (std::size_t k = 0; k < eps.size(); ++k) {
        const Mollifier m{c.mollifier, eps[k]};
        const double quad = i_epsilon_quadrature(m, t);
        const Estimate mc = i_epsilon_monte_carlo(m, t, c.n_traj, derive_seed(c.seed, k));
        table.rows.push_back({eps[k], to_string(c.mollifier), quad, theta0_from_i(quad), mc.value, mc.std_error});
    }
    return table;
}

/// Exact closed form, grid master equation and trajectory ensemble on one
/// time grid. The ensemble passes where it sits within 3 standard errors of
/// the exact value (plus 1e-12 absolute slack, which also floors the standard
/// error in z); the master equation must agree to 1e-6.
inline ExperimentOutput compare_runs(const ExperimentConfig& c) {
    const EnsembleResult ens = run_config_ensemble(c);
    TransitionRecord ens_rec = ens.record(c.initial);
    TransitionRecord exact = exact_record(c, ens.times);
    TransitionRecord me = me_record(c.model, c.params, c.grid(), ens.times, c.me_dt, c.initial);
    if (c.decay_width > 0.0)
        for (auto* r : {&ens_rec, &exact, &me}) apply_decay_width(*r, c.decay_width);

    ExperimentOutput out;
    out.table.columns = {"time", "p_exact", "p_me", "p_ensemble", "stderr", "z",
                         "p_exact_other", "p_ensemble_other", "stderr_other", "z_other", "verdict"};
    double worst = 0.0;
    for (std::size_t k = 0; k < ens.times.size(); ++k) {
        auto z_score = [](double resid, double err) { return resid / std::max(err, 1e-12); };
        const double r_same = ens_rec.p_same[k] - exact.p_same[k];
        const double r_other = ens_rec.p_other[k] - exact.p_other[k];
        const bool ok_same = std::abs(r_same) <= 3.0 * ens_rec.stderr_same[k] + 1e-12;
        const bool ok_other = std::abs(r_other) <= 3.0 * ens_rec.stderr_other[k] + 1e-12;
        const bool ok_me = std::abs(me.p_same[k] - exact.p_same[k]) <= 1e-6;
        const bool ok = ok_same && ok_other && ok_me;
        out.pass = out.pass && ok;
        const double z1 = z_score(r_same, ens_rec.stderr_same[k]);
        const double z2 = z_score(r_other, ens_rec.stderr_other[k]);
        worst = std::max({worst, std::abs(z1), std::abs(z2)});
        out.table.rows.push_back({ens.times[k], exact.p_same[k], me.p_same[k], ens_rec.p_same[k],
                                  ens_rec.stderr_same[k], z1, exact.p_other[k], ens_rec.p_other[k],
                                  ens_rec.stderr_other[k], z2, std::string(ok ? "PASS" : "FAIL")});
    }
    out.summary = std::string("compare: ") + (out.pass ? "PASS" : "FAIL") + " (max |z| = " +
                  detail::format_number(worst) + ", " + std::to_string(c.n_traj) + " trajectories, " +
                  to_string(c.integrator) + ")";
    return out;
}

inline ExperimentOutput execute(const ExperimentConfig& c) {
    c.validate();
    ExperimentOutput out;
    const auto times = sample_times(c);
    auto finish = [&](TransitionRecord rec) {
        if (c.decay_width > 0.0) apply_decay_width(rec, c.decay_width);
        out.table = to_table(rec);
        out.summary = to_string(c.run) + ": " + std::to_string(rec.size()) + " rows (" + rec.source + ")";
    };
    switch (c.run) {
        case RunMode::exact: finish(exact_record(c, times)); break;
        case RunMode::me: finish(me_record(c.model, c.params, c.grid(), times, c.me_dt, c.initial)); break;
        case RunMode::ensemble: finish(run_config_ensemble(c).record(c.initial)); break;
        case RunMode::dyson: finish(dyson_record(c, times)); break;
        case RunMode::theta_check:
            out.table = theta_check_table(c);
            out.summary = "theta-check: " + std::to_string(out.table.rows.size()) + " rows";
            break;
        case RunMode::compare: out = compare_runs(c); break;
    }
    return out;
}

inline void write_table(std::ostream& os, const ExperimentConfig& c, const Table& table) {
    const auto config = c.resolved();
    if (c.format == "json") {
        nlohmann::ordered_json doc;
        doc["version"] = kVersion;
        doc["config"] = nlohmann::ordered_json::object();
        for (const auto& [k, v] : config) doc["config"][k] = v;
        doc["columns"] = table.columns;
        doc["rows"] = nlohmann::ordered_json::array();
        for (const auto& row : table.rows) {
            auto jr = nlohmann::ordered_json::array();
            for (const auto& cell : row) std::visit([&](const auto& v) { jr.push_back(v); }, cell);
            doc["rows"].push_back(std::move(jr));
        }
        os << doc.dump(2) << '\n';
        return;
    }
    os << "# collapse-sim " << kVersion << '\n';
    for (const auto& [k, v] : config) os << "# " << k << " = " << v << '\n';
    for (std::size_t i = 0; i < table.columns.size(); ++i) os << (i ? "," : "") << table.columns[i];
    os << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            if (i) os << ',';
            if (const double* d = std::get_if<double>(&row[i]))
                os << detail::format_number(*d);
            else
                os << std::get<std::string>(row[i]);
        }
        os << '\n';
    }
}

/// Exit statuses of a run.
enum ExitStatus : int { kExitPass = 0, kExitNumerical = 1, kExitConfig = 2 };

/// Runs the experiment and writes its table to c.out ("-" is `stdout_stream`).
/// Returns 0 on success (and, for compare, only if every verdict passes),
/// 1 on numerical failure, 2 on configuration errors.
inline int run_experiment(const ExperimentConfig& c, std::ostream& stdout_stream, std::ostream& log) {
    ExperimentOutput out;
    try {
        out = execute(c);
    } catch (const Error& e) {
        log << "error: " << e.what() << '\n';
        return e.kind() == ErrorKind::config ? kExitConfig : kExitNumerical;
    }
    if (c.out == "-") {
        write_table(stdout_stream, c, out.table);
    } else {
        std::ofstream file(c.out, std::ios::binary);
        if (!file) {
            log << "error: cannot open output file '" << c.out << "'\n";
            return kExitConfig;
        }
        write_table(file, c, out.table);
    }
    log << out.summary << '\n';
    return out.pass ? kExitPass : kExitNumerical;
}

}  // namespace collapse
