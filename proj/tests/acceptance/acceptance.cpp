// Acceptance runs; one PASS/FAIL line per criterion.
//
//   acceptance            all criteria
//   acceptance --only N   criterion N (8 re-runs 1-7 and audits their conservation records)

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include "collapse/collapse.hpp"

using namespace collapse;

namespace {

constexpr double kPi = std::numbers::pi;

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

/// Conservation record of one run, audited by criterion 8.
struct Audit {
    std::string run;
    bool ok = true;
    std::string failure;

    void expect(bool condition, const std::string& what) {
        if (!condition && ok) {
            ok = false;
            failure = what;
        }
    }
};

std::vector<Audit> g_audits;

struct Verdict {
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool condition, const std::string& note) {
        pass = pass && condition;
        notes.push_back(std::string(condition ? "" : "!") + note);
    }
};

double relative_error(double value, double exact) {
    const double d = std::abs(value - exact);
    return std::abs(exact) > 1e-9 ? d / std::abs(exact) : d;
}

/// Least-squares slope of y against x.
double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sx += x[k];
        sy += y[k];
        sxx += x[k] * x[k];
        sxy += x[k] * y[k];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

std::vector<double> uniform_times(double t_max, std::size_t count) {
    std::vector<double> t;
    for (std::size_t k = 0; k < count; ++k) t.push_back(t_max * static_cast<double>(k) / static_cast<double>(count - 1));
    return t;
}

/// Audits one density matrix: unit trace, exact Hermiticity, complementary probabilities.
void audit_density(Audit& a, const DensityBlocks& rho, const BlockTraces& traces, Internal initial, double t) {
    const std::string at = " at t=" + fmt(t);
    a.expect(std::abs(rho.trace() - 1.0) <= 1e-12, "trace " + fmt(rho.trace() - 1.0) + at);
    a.expect(rho.hermiticity_defect() == 0.0, "hermiticity defect " + fmt(rho.hermiticity_defect()) + at);
    const double sum = transition_probability(traces, initial) + transition_probability(traces, partner(initial));
    a.expect(std::abs(sum - 1.0) <= 1e-12, "p_same + p_other - 1 = " + fmt(sum - 1.0) + at);
}

struct MeSeries {
    std::vector<double> times;
    std::vector<double> p_same;
    std::vector<double> p_other;
    std::vector<double> envelope;
};

/// Grid master equation from psi_alpha (x) |initial> with every sample audited.
MeSeries me_series(const std::string& name, ModelKind kind, const ModelParams& p, const Grid& grid,
                   const std::vector<double>& times, double dt, Internal initial = Internal::M0) {
    const CollapseModel model = build_model(kind, p, grid);
    const DiagonalGenerator gen(model);
    DensityBlocks rho = DensityBlocks::from_pure(make_gaussian_state(p, grid, initial));
    Audit audit{name, true, {}};
    MeSeries out;
    double now = 0.0;
    for (double t : times) {
        rho = gen.evolve(rho, t - now, dt);
        now = t;
        const BlockTraces one = block_traces(rho);
        const BlockTraces traces = lift_separable(one, p.dim);
        audit_density(audit, rho, traces, initial, t);
        for (Mass m : {Mass::H, Mass::L}) {
            const double pop = traces[index_of(m)][index_of(m)].real();
            audit.expect(std::abs(pop - std::norm(flavor_to_mass(initial)[m])) <= 1e-12, "mass population drift");
        }
        out.times.push_back(t);
        out.p_same.push_back(transition_probability(traces, initial));
        out.p_other.push_back(transition_probability(traces, partner(initial)));
        out.envelope.push_back(2.0 * std::abs(traces[0][1]));
    }
    g_audits.push_back(audit);
    return out;
}

void audit_closed_form(const std::string& name, ModelKind kind, const ModelParams& p, const std::vector<double>& times) {
    Audit audit{name, true, {}};
    for (double t : times) {
        const auto q = kind == ModelKind::qmupl ? qmupl_flavor_probabilities(p, t) : csl_flavor_probabilities(p, t);
        audit.expect(std::abs(q.p_same + q.p_other - 1.0) <= 1e-15, "closed form p_same + p_other != 1");
        audit.expect(q.p_same >= 0.0 && q.p_other >= 0.0, "negative closed-form probability");
    }
    g_audits.push_back(audit);
}

/// Ensemble conservation: normalized trajectories keep unit norm pathwise,
/// unnormalized ones keep it on average within the combined standard error;
/// mean mass populations stay at their initial values within 3 sigma.
void audit_ensemble(const std::string& name, const EnsembleResult& r, const IntegratorSpec& spec, Internal initial) {
    Audit audit{name, true, {}};
    const bool pathwise = spec.kind == IntegratorKind::ito_nonlinear && spec.renormalize;
    const FlavorVector c = flavor_to_mass(initial);
    for (std::size_t k = 0; k < r.times.size(); ++k) {
        const auto& s = r.stats[k];
        const std::string at = " at t=" + fmt(r.times[k]);
        const auto& same = s.of(initial);
        const auto& other = s.of(partner(initial));
        const double combined = std::hypot(same.std_error(), other.std_error());
        const double sum = same.mean + other.mean;
        if (pathwise) {
            audit.expect(s.norm.max - 1.0 <= 1e-12 && 1.0 - s.norm.min <= 1e-12, "trajectory norm drift" + at);
            audit.expect(std::abs(sum - 1.0) <= 1e-12, "p_same + p_other - 1 = " + fmt(sum - 1.0) + at);
        } else {
            audit.expect(std::abs(s.norm.mean - 1.0) <= 3.0 * combined + 1e-12,
                         "mean trace - 1 = " + fmt(s.norm.mean - 1.0) + " vs combined stderr " + fmt(combined) + at);
            audit.expect(std::abs(sum - 1.0) <= 3.0 * combined + 1e-12,
                         "p_same + p_other - 1 = " + fmt(sum - 1.0) + at);
        }
        audit.expect(std::abs(s.pop_h.mean - std::norm(c.cH)) <= 3.0 * s.pop_h.std_error() + 1e-12,
                     "mean H population moved by " + fmt(s.pop_h.mean - std::norm(c.cH)) + at);
        audit.expect(std::abs(s.pop_l.mean - std::norm(c.cL)) <= 3.0 * s.pop_l.std_error() + 1e-12,
                     "mean L population moved by " + fmt(s.pop_l.mean - std::norm(c.cL)) + at);
        const auto mt = r.mean_traces(k);
        audit.expect(std::abs(mt[0][1] - std::conj(mt[1][0])) == 0.0, "mean density not Hermitian" + at);
    }
    g_audits.push_back(audit);
}

ModelParams base_params() {
    ModelParams p;
    p.m0 = 1.0;
    p.mL = 0.5;
    p.mH = 1.5;
    p.alpha = 1.0;
    p.lambda = 0.2;
    return p;
}

// 1. Closed-form QMUPL reproduction in three dimensions.
Verdict criterion_1() {
    Verdict v;
    ModelParams p = base_params();
    p.dim = 3;
    const Grid grid = Grid::centered(128, 0.125);
    const auto times = uniform_times(4.0 * kPi, 20);
    const MeSeries coarse = me_series("c1 me dt=0.01", ModelKind::qmupl, p, grid, times, 0.01);
    const MeSeries fine = me_series("c1 me dt=0.005", ModelKind::qmupl, p, grid, times, 0.005);
    audit_closed_form("c1 closed form", ModelKind::qmupl, p, times);
    double worst = 0.0, refinement = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        const auto q = qmupl_flavor_probabilities(p, times[k]);
        worst = std::max({worst, relative_error(fine.p_same[k], q.p_same), relative_error(fine.p_other[k], q.p_other)});
        refinement = std::max(refinement, std::abs(fine.p_same[k] - coarse.p_same[k]));
    }
    v.check(refinement <= 1e-6, "dt halving changes p by " + fmt(refinement));
    v.check(worst < 1e-3, "max relative error " + fmt(worst));
    return v;
}

// 2. Envelope exponents and the dim-3 product structure.
Verdict criterion_2() {
    Verdict v;
    ModelParams p = base_params();
    std::vector<double> lx, l1, l3;
    for (int k = 1; k <= 200; ++k) {
        const double t = 0.5 * k;
        lx.push_back(std::log1p(0.1 * t));
        p.dim = 1;
        l1.push_back(std::log(qmupl_envelope(p, t)));
        p.dim = 3;
        l3.push_back(std::log(qmupl_envelope(p, t)));
    }
    const double s1 = fit_slope(lx, l1), s3 = fit_slope(lx, l3);
    v.check(std::abs(s3 + 1.5) <= 0.01, "dim-3 slope " + fmt(s3));
    v.check(std::abs(s1 + 0.5) <= 0.01, "dim-1 slope " + fmt(s1));

    const Grid grid = Grid::centered(128, 0.125);
    const auto times = uniform_times(100.0, 26);
    p.dim = 1;
    const MeSeries one = me_series("c2 me dim=1", ModelKind::qmupl, p, grid, times, 0.1);
    audit_closed_form("c2 closed form dim=1", ModelKind::qmupl, p, times);
    p.dim = 3;
    const MeSeries three = me_series("c2 me dim=3", ModelKind::qmupl, p, grid, times, 0.1);
    audit_closed_form("c2 closed form dim=3", ModelKind::qmupl, p, times);
    double worst = 0.0;
    std::vector<double> gx, g3;
    for (std::size_t k = 0; k < times.size(); ++k) {
        worst = std::max(worst, std::abs(three.envelope[k] - std::pow(one.envelope[k], 3)));
        if (times[k] > 0.0) {
            gx.push_back(std::log1p(0.1 * times[k]));
            g3.push_back(std::log(three.envelope[k]));
        }
    }
    v.check(worst <= 1e-6, "dim-3 grid envelope vs cube of dim-1 " + fmt(worst));
    double closed = 0.0;
    p.dim = 1;
    for (std::size_t k = 0; k < times.size(); ++k)
        closed = std::max(closed, std::abs(three.envelope[k] - std::pow(qmupl_envelope(p, times[k]), 3)));
    v.check(closed <= 1e-6, "dim-3 grid envelope vs cube of dim-1 closed form " + fmt(closed));
    const double sg = fit_slope(gx, g3);
    v.check(std::abs(sg + 1.5) <= 0.01, "dim-3 grid slope " + fmt(sg));
    return v;
}

// 3. CSL flavor probabilities do not depend on the initial width.
Verdict criterion_3() {
    Verdict v;
    ModelParams p = base_params();
    p.lambda = 0.0;
    p.gamma = 0.35;
    p.rC = 0.5;
    const Grid grid = Grid::centered(256, 0.125);
    const auto times = uniform_times(4.0 * kPi, 20);
    const MeSeries narrow = me_series("c3 me alpha", ModelKind::csl, p, grid, times, 0.05);
    ModelParams wide = p;
    wide.alpha = 4.0 * p.alpha;
    const MeSeries broad = me_series("c3 me 4 alpha", ModelKind::csl, wide, grid, times, 0.05);
    audit_closed_form("c3 closed form", ModelKind::csl, p, times);
    double spread = 0.0, worst = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        spread = std::max({spread, std::abs(narrow.p_same[k] - broad.p_same[k]),
                           std::abs(narrow.p_other[k] - broad.p_other[k])});
        const auto q = csl_flavor_probabilities(p, times[k]);
        for (const MeSeries* s : {&narrow, &broad})
            worst = std::max({worst, relative_error(s->p_same[k], q.p_same), relative_error(s->p_other[k], q.p_other)});
    }
    v.check(spread <= 1e-8, "alpha vs 4 alpha " + fmt(spread));
    v.check(worst < 1e-3, "max relative error vs closed form " + fmt(worst));
    return v;
}

// 4. Three integrators against the exact probabilities; mass eigenstates never mix.
Verdict criterion_4() {
    Verdict v;
    const ModelParams p = base_params();
    const Grid grid = Grid::centered(64, 0.25);
    const CollapseModel model = build_qmupl(p, grid);
    const GridState m0 = make_gaussian_state(p, grid, Internal::M0);
    std::uint64_t stream = 0;
    for (IntegratorKind kind : {IntegratorKind::ito_nonlinear, IntegratorKind::ito_linear, IntegratorKind::stratonovich}) {
        const IntegratorSpec spec{kind, 1e-3 / p.dm(), true, std::nullopt};
        // independent noise per scheme
        const EnsembleResult r = run_ensemble(model, spec, m0, 2.0 * kPi, 10, 10000, derive_seed(20261014, ++stream));
        audit_ensemble("c4 " + to_string(kind), r, spec, Internal::M0);
        double worst = 0.0;
        for (std::size_t k = 1; k < r.times.size(); ++k) {
            const auto q = qmupl_flavor_probabilities(p, r.times[k]);
            const auto& s = r.stats[k];
            worst = std::max({worst, std::abs(s.p_m0.mean - q.p_same) / s.p_m0.std_error(),
                              std::abs(s.p_m0bar.mean - q.p_other) / s.p_m0bar.std_error()});
        }
        v.check(worst <= 3.0, to_string(kind) + " max |z| " + fmt(worst));

        double mixing = 0.0;
        for (Internal eigen : {Internal::MH, Internal::ML}) {
            const EnsembleResult e =
                run_ensemble(model, spec, make_gaussian_state(p, grid, eigen), 2.0 * kPi, 10, 500, 4041);
            audit_ensemble("c4 " + to_string(kind) + " " + to_string(eigen), e, spec, eigen);
            for (const auto& s : e.stats) mixing = std::max(mixing, eigen == Internal::MH ? s.pop_l.max : s.pop_h.max);
        }
        v.check(mixing < 1e-12, to_string(kind) + " mass mixing " + fmt(mixing));
    }
    return v;
}

// 5. I^eps tends to 1/2 for every kernel shape.
Verdict criterion_5() {
    Verdict v;
    const double t = 1.0;
    std::uint64_t seed = 5005;
    for (MollifierKind kind : {MollifierKind::gaussian, MollifierKind::box, MollifierKind::asymmetric_exponential,
                               MollifierKind::asymmetric_triangle}) {
        const Mollifier m{kind, t / 100.0};
        const double quad = i_epsilon_quadrature(m, t);
        v.check(std::abs(quad - 0.5) <= 1e-3, to_string(kind) + " I=" + fmt(quad));
        const Estimate mc = i_epsilon_monte_carlo(m, t, 10000, seed++);
        v.check(std::abs(mc.value - quad) <= 3.0 * mc.std_error,
                to_string(kind) + " mc z=" + fmt((mc.value - quad) / mc.std_error));
    }
    return v;
}

double state_distance(const GridState& a, const GridState& b) {
    double s = 0.0;
    for (std::size_t e = 0; e < a.amplitudes.size(); ++e) s += std::norm(a.amplitudes[e] - b.amplitudes[e]);
    return std::sqrt(s * a.grid.spacing);
}

// 6. Mollified dynamics approach the Stratonovich solution.
Verdict criterion_6() {
    Verdict v;
    const ModelParams p = base_params();
    const Grid grid = Grid::centered(64, 0.25);
    const CollapseModel model = build_qmupl(p, grid);
    const GridState m0 = make_gaussian_state(p, grid, Internal::M0);
    const double T = kPi;
    const std::vector<double> eps{T / 10.0, T / 20.0, T / 40.0};
    const double noise_dt = eps.back() / 16.0;
    const auto inner = static_cast<std::size_t>(std::llround(T / noise_dt));
    const Mollifier widest{MollifierKind::gaussian, eps.front()};

    std::size_t monotone = 0;
    const std::size_t n_paths = 100;
    for (std::size_t j = 0; j < n_paths; ++j) {
        const NoisePath path = sample_wiener_for_mollifier(derive_seed(6006, j), widest, noise_dt, T, 1);
        const std::size_t first = static_cast<std::size_t>(std::llround(-path.t0 / noise_dt));
        GridState strat = m0;
        integrate_on_path(strat, Propagator(model, noise_dt), IntegratorKind::stratonovich, path, first, inner);
        std::vector<double> d;
        for (double e : eps) {
            const Mollifier m{MollifierKind::gaussian, e};
            const MollifiedNoise noise = mollify(path, m, TimeGrid{0.0, noise_dt, inner + 1});
            d.push_back(state_distance(integrate_wong_zakai(m0, model, noise).back(), strat));
        }
        if (d[1] < d[0] && d[2] < d[1]) ++monotone;
    }
    const double fraction = static_cast<double>(monotone) / static_cast<double>(n_paths);
    v.check(fraction >= 0.9, "monotone on " + fmt(100.0 * fraction) + "% of paths");

    const IntegratorSpec spec{IntegratorKind::wong_zakai, eps.back() / 8.0, true, Mollifier{MollifierKind::gaussian, eps.back()}};
    const EnsembleResult r = run_ensemble(model, spec, m0, T, 1, 10000, 20261015);
    audit_ensemble("c6 wong-zakai", r, spec, Internal::M0);
    const auto q = qmupl_flavor_probabilities(p, T);
    const auto& s = r.stats.back();
    const double z_same = (s.p_m0.mean - q.p_same) / s.p_m0.std_error();
    const double z_other = (s.p_m0bar.mean - q.p_other) / s.p_m0bar.std_error();
    v.check(std::abs(z_same) <= 3.0 && std::abs(z_other) <= 3.0,
            "ensemble z " + fmt(z_same) + "/" + fmt(z_other));
    return v;
}

// 7. Truncation errors of the Dyson series.
Verdict criterion_7() {
    Verdict v;
    const Grid grid = Grid::centered(64, 0.25);
    const double t = kPi;
    for (ModelKind kind : {ModelKind::qmupl, ModelKind::csl}) {
        std::vector<double> ll, e1, e2;
        Audit audit{"c7 dyson " + to_string(kind), true, {}};
        for (double coupling : {0.01, 0.005, 0.0025}) {
            ModelParams p = base_params();
            p.lambda = kind == ModelKind::qmupl ? coupling : 0.0;
            p.gamma = kind == ModelKind::csl ? coupling : 0.0;
            p.rC = 1.0;
            const CollapseModel model = build_model(kind, p, grid);
            const DensityBlocks rho0 = DensityBlocks::from_pure(make_gaussian_state(p, grid, Internal::M0));
            const DensityBlocks exact = kind == ModelKind::qmupl ? evolve_me_qmupl_exact(rho0, p, t)
                                                                 : evolve_me_csl_exact(rho0, p, t);
            const DensityBlocks exact_ip = to_interaction_picture(exact, model.hamiltonian, t);
            const SuperoperatorKernel kernel = make_kernel(model);
            ll.push_back(std::log(coupling * t));
            for (int order : {1, 2}) {
                const DensityBlocks approx = dyson_expand(kernel, rho0, t, order);
                (order == 1 ? e1 : e2).push_back(std::log(distance(approx, exact_ip)));
                const DensityBlocks back = to_schrodinger_picture(approx, model.hamiltonian, t);
                audit_density(audit, back, block_traces(back), Internal::M0, t);
            }
            audit_density(audit, exact, block_traces(exact), Internal::M0, t);
        }
        g_audits.push_back(audit);
        const double s1 = fit_slope(ll, e1), s2 = fit_slope(ll, e2);
        v.check(std::abs(s1 - 2.0) <= 0.2, to_string(kind) + " order-1 slope " + fmt(s1));
        v.check(std::abs(s2 - 3.0) <= 0.2, to_string(kind) + " order-2 slope " + fmt(s2));
    }
    return v;
}

const std::vector<std::function<Verdict()>> kCriteria{criterion_1, criterion_2, criterion_3, criterion_4,
                                                      criterion_5, criterion_6, criterion_7};

// 8. Conservation audit over every run of criteria 1-7.
Verdict criterion_8(const std::vector<Verdict>& earlier) {
    (void)earlier;
    Verdict v;
    std::size_t failed = 0;
    for (const Audit& a : g_audits)
        if (!a.ok) {
            ++failed;
            v.check(false, a.run + ": " + a.failure);
        }
    v.check(failed == 0, std::to_string(g_audits.size() - failed) + "/" + std::to_string(g_audits.size()) + " runs conserve");
    return v;
}

void report(int n, const Verdict& v, double seconds) {
    std::string line = "criterion " + std::to_string(n) + ": " + (v.pass ? "PASS" : "FAIL") + " (";
    for (std::size_t k = 0; k < v.notes.size(); ++k) line += (k ? "; " : "") + v.notes[k];
    line += "; " + fmt(seconds) + " s)";
    std::cout << line << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    int only = 0;
    if (argc == 3 && std::string(argv[1]) == "--only") only = std::atoi(argv[2]);
    if (argc != 1 && (only < 1 || only > 8)) {
        std::cerr << "usage: acceptance [--only N]  (N in 1..8)\n";
        return 2;
    }
    bool all_pass = true;
    std::vector<Verdict> verdicts;
    for (int n = 1; n <= 7; ++n) {
        if (only != 0 && only != 8 && only != n) continue;
        const auto start = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = kCriteria[n - 1]();
        } catch (const std::exception& e) {
            v.check(false, std::string("error: ") + e.what());
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        verdicts.push_back(v);
        if (only != 8) {
            report(n, v, seconds);
            all_pass = all_pass && v.pass;
        }
    }
    if (only == 0 || only == 8) {
        const Verdict v = criterion_8(verdicts);
        report(8, v, 0.0);
        all_pass = all_pass && v.pass;
    }
    return all_pass ? 0 : 1;
}
