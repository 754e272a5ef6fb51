#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "breathers/breather.hpp"
#include "breathers/config.hpp"
#include "breathers/experiments.hpp"
#include "breathers/fit.hpp"
#include "breathers/integrator.hpp"
#include "breathers/linear_propagator.hpp"
#include "breathers/normal_form.hpp"

using namespace breathers;
namespace fs = std::filesystem;

namespace {

struct Common {
    std::string config_path;
    std::vector<std::string> overrides;
    unsigned seed = 1;
    std::string out_dir = ".";
    int threads = 1;
};

Config load_config(const Common& c) {
    Config cfg = c.config_path.empty() ? Config() : Config::load(c.config_path);
    for (const auto& kv : c.overrides) {
        auto pos = kv.find('=');
        if (pos == std::string::npos) throw std::invalid_argument("--set expects key=value, got " + kv);
        auto trim = [](std::string s) {
            s.erase(0, s.find_first_not_of(" \t"));
            s.erase(s.find_last_not_of(" \t") + 1);
            return s;
        };
        cfg.set(trim(kv.substr(0, pos)), trim(kv.substr(pos + 1)));
    }
    return cfg;
}

std::ofstream open_out(const Common& c, const std::string& name) {
    fs::create_directories(c.out_dir);
    std::ofstream os(fs::path(c.out_dir) / name);
    if (!os) throw std::runtime_error("cannot write " + name);
    return os;
}

class Checks {
public:
    void add(const std::string& name, bool ok, const std::string& detail) {
        std::cout << (ok ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
        all_ &= ok;
    }
    int code() const { return all_ ? 0 : 1; }

private:
    bool all_ = true;
};

std::string fmt(double v) {
    std::ostringstream s;
    s << std::setprecision(6) << v;
    return s.str();
}

double fit_slope(const std::vector<double>& x, const std::vector<double>& y) { return fit_loglog(x, y).slope; }

int cmd_breather_find(const Common& c) {
    Config cfg = load_config(c);
    PotentialSpec V = parse_potential(cfg.get("potential", std::string("8:1")), 8);
    const double I = cfg.get("I", 0.4), eps = cfg.get("eps", 0.05);
    const int N = cfg.get("N", 64);
    BreatherOptions opt;
    opt.dt = cfg.get("dt", opt.dt);
    opt.dt_jacobian = cfg.get("dt_jacobian", opt.dt_jacobian);
    opt.tol = cfg.get("tol", opt.tol);
    ActionAngleChart chart(V, cfg.get("chart_I_lo", 0.5 * I), cfg.get("chart_I_hi", 1.5 * I), 256);
    Breather seed = anti_continuum_seed(chart, I, N, opt);
    Breather b = continue_breather(seed, eps, cfg.get("eps_step", 0.01), opt);
    auto os = open_out(c, "breather.csv");
    write_breather_csv(os, b);
    FloquetReport fr = floquet_spectrum(b);
    auto fs_ = open_out(c, "floquet.csv");
    fs_ << "re,im,abs\n" << std::setprecision(17);
    for (const auto& l : fr.eigenvalues) fs_ << l.real() << ',' << l.imag() << ',' << std::abs(l) << '\n';
    Checks ck;
    ck.add("defect", b.defect < opt.tol, fmt(b.defect) + " after " + std::to_string(b.newton_steps) + " Newton steps");
    double min_r2 = cfg.get("min_r2", 0.99);
    ck.add("localization", !b.loc.degenerate && b.loc.r2 > min_r2,
           "beta_hat " + fmt(b.loc.beta_hat) + ", R^2 " + fmt(b.loc.r2));
    std::cout << "T " << fmt(b.T) << ", I_label " << fmt(b.I_label) << ", d_+ " << fmt(distance_to_unperturbed(b))
              << ", Floquet excess " << fmt(fr.max_excess) << '\n';
    return ck.code();
}

LatticeState make_datum(const Config& cfg, int N) {
    std::string d = cfg.get("datum", std::string("compact_skew"));
    if (d == "compact_skew") return compact_skew_datum(N);
    if (d == "impulse") {
        LatticeState x(N, true);
        x.q[x.index(1)] = 1.0;
        x.q[x.index(-1)] = -1.0;
        return x;
    }
    if (d.rfind("file:", 0) == 0) {
        std::ifstream is(d.substr(5));
        if (!is) throw std::runtime_error("cannot read datum " + d.substr(5));
        return resize_lattice(read_state_csv(is), N);
    }
    throw std::invalid_argument("unknown datum: " + d);
}

int cmd_propagate(const Common& c) {
    Config cfg = load_config(c);
    const int N = cfg.get("N", 1024);
    const double eps = cfg.get("eps", 0.1), t = cfg.get("t", 100.0);
    std::string mode = cfg.get("mode", std::string("whole"));
    LatticeState x0 = make_datum(cfg, N);
    Checks ck;
    LatticeState x;
    if (mode == "whole") {
        x = propagate_whole_chain(x0, t, eps);
        double e0 = hamiltonian(x0, PotentialSpec::zero(), eps), e1 = hamiltonian(x, PotentialSpec::zero(), eps);
        ck.add("energy", std::abs(e1 - e0) <= 1e-10 * std::abs(e0), "relative change " + fmt(std::abs(e1 - e0) / e0));
    } else if (mode == "half") {
        x = propagate_HL(x0, t, eps);
        double e0 = modified_energy(x0, eps), e1 = modified_energy(x, eps);
        ck.add("energy", std::abs(e1 - e0) <= 1e-10 * std::abs(e0), "relative change " + fmt(std::abs(e1 - e0) / e0));
    } else {
        throw std::invalid_argument("mode must be whole or half");
    }
    auto os = open_out(c, "propagated.csv");
    write_state_csv(os, x);
    return ck.code();
}

int cmd_decay_fit(const Common& c) {
    Config cfg = load_config(c);
    const int N = cfg.get("N", 8192);
    const double eps = cfg.get("eps", 0.1);
    std::string which = cfg.get("norm", std::string("linf"));
    NormSpec metric;
    double lo = 10.0, hi = 300.0, slope_lo = -0.40, slope_hi = -0.28;
    if (which == "linf") {
        metric = {kInf, WeightSpec::none()};
    } else if (which == "l2w") {
        metric = {2.0, WeightSpec::poly(-cfg.get("s", 3.0))};
        lo = 5.0;
        hi = 100.0;
        slope_lo = -1.70;
        slope_hi = -1.30;
    } else {
        throw std::invalid_argument("norm must be linf or l2w");
    }
    lo = cfg.get("eps_t_lo", lo);
    hi = cfg.get("eps_t_hi", hi);
    slope_lo = cfg.get("slope_lo", slope_lo);
    slope_hi = cfg.get("slope_hi", slope_hi);
    auto grid = geomspace(lo, hi, cfg.get("n_samples", 40));
    DecayFit f = measure_decay(make_datum(cfg, N), eps, metric, grid);
    auto os = open_out(c, "decay.csv");
    os << "eps_t,norm\n" << std::setprecision(17);
    for (size_t i = 0; i < f.eps_t.size(); ++i) os << f.eps_t[i] << ',' << f.norms[i] << '\n';
    Checks ck;
    ck.add("slope", f.slope >= slope_lo && f.slope <= slope_hi,
           fmt(f.slope) + " in [" + fmt(slope_lo) + ", " + fmt(slope_hi) + "], R^2 " + fmt(f.r2));
    return ck.code();
}

int cmd_vdc_check(const Common& c) {
    Config cfg = load_config(c);
    const double eps = cfg.get("eps", 0.1);
    auto lambda = geomspace(cfg.get("lambda_lo", 100.0), cfg.get("lambda_hi", 1e4), cfg.get("n_lambda", 9));
    VdcResult r = van_der_corput_check(eps, lambda);
    auto os = open_out(c, "vdc.csv");
    os << "lambda,sup_I1,rho_I1,sup_I2,rho_I2\n" << std::setprecision(17);
    for (size_t i = 0; i < r.lambda.size(); ++i)
        os << r.lambda[i] << ',' << r.sup_I1[i] << ',' << r.rho_I1[i] << ',' << r.sup_I2[i] << ',' << r.rho_I2[i] << '\n';
    const double tol = cfg.get("tol", 0.05);
    Checks ck;
    ck.add("I1 slope", std::abs(r.slope_I1 + 0.5) <= tol, fmt(r.slope_I1) + " vs -1/2");
    ck.add("I2 slope", std::abs(r.slope_I2 + 1.0 / 3.0) <= tol, fmt(r.slope_I2) + " vs -1/3");
    return ck.code();
}

int cmd_resolvent_check(const Common& c) {
    Config cfg = load_config(c);
    const int N = cfg.get("N", 256);
    const cplx nut(cfg.get("nut_re", 2.0), cfg.get("nut_im", 0.5));
    const int interior = cfg.get("interior", N / 2);
    Eigen::MatrixXcd A = truncated_minus_laplacian(N, nut);
    Eigen::MatrixXcd G = A.inverse();
    double err = 0.0;
    for (int j = -interior; j <= interior; ++j)
        for (int k = -interior; k <= interior; ++k)
            err = std::max(err, std::abs(G(j + N, k + N) - resolvent_kernel(nut, j, k)));
    Checks ck;
    ck.add("kernel vs dense", err < cfg.get("tol", 1e-6), "max error " + fmt(err));

    Eigen::VectorXd q = Eigen::VectorXd::Zero(3);
    q << -1.0, 0.0, 1.0;
    auto nuts = geomspace(cfg.get("puiseux_lo", 1e-4), cfg.get("puiseux_hi", 1e-1), cfg.get("puiseux_n", 13));
    PuiseuxResult p = puiseux_leading_check(q, nuts);
    auto os = open_out(c, "resolvent.csv");
    os << "nut,puiseux_error\n" << std::setprecision(17);
    for (size_t i = 0; i < p.nut.size(); ++i) os << p.nut[i] << ',' << p.error[i] << '\n';
    ck.add("Puiseux slope", std::abs(p.slope - 0.5) <= 0.1, fmt(p.slope) + " vs 1/2");
    std::vector<double> mus = {1e-3, 1e-4, 1e-5};
    auto la = limiting_absorption_check(cfg.get("la_nut", 1.0), q, mus);
    bool dec = la[0] > la[1] && la[1] > la[2];
    ck.add("limiting absorption", dec, "Cauchy differences " + fmt(la[0]) + ", " + fmt(la[1]) + ", " + fmt(la[2]));
    return ck.code();
}

int cmd_normal_form(const Common& c) {
    Config cfg = load_config(c);
    PotentialSpec V = parse_potential(cfg.get("potential", std::string("8:1")), 8);
    NormalFormConfig nf;
    nf.D = cfg.get("D", nf.D);
    nf.M = cfg.get("M", nf.M);
    nf.N = cfg.get("N", nf.N);
    nf.nI = cfg.get("nI", nf.nI);
    nf.I_lo = cfg.get("I_lo", nf.I_lo);
    nf.I_hi = cfg.get("I_hi", nf.I_hi);
    nf.r_max = cfg.get("r_max", nf.r_max);
    nf.lie_order = cfg.get("lie_order", nf.lie_order);
    nf.divisor_floor = cfg.get("divisor_floor", nf.divisor_floor);
    auto epss = cfg.get_list("eps", {0.0125, 0.025, 0.05, 0.1});
    ActionAngleChart chart(V, 0.5 * nf.I_lo, 1.5 * nf.I_hi, 256);
    std::vector<NormalFormResult> runs;
    for (double e : epss) {
        runs.push_back(normalize(build_initial(chart, e, nf), nf));
        std::ostringstream name;
        name << "normal_form_eps" << e << ".csv";
        auto os = open_out(c, name.str());
        write_normalization_csv(os, runs.back());
    }
    Checks ck;
    for (const auto& r : runs)
        ck.add("cohomological residual eps=" + fmt(r.eps),
               std::all_of(r.steps.begin() + 1, r.steps.end(),
                           [](const StepReport& s) { return s.cohomological_residual < 1e-10; }),
               "max over steps below 1e-10");
    if (runs.size() >= 2) {
        std::vector<double> r1, r2, inv;
        for (const auto& r : runs) {
            r1.push_back(r.steps[1].deg0_norm);
            inv.push_back(r.steps[1].invariant_defect);
            if (r.steps.size() > 2) r2.push_back(r.steps[2].residual_norm);
        }
        double s1 = fit_slope(epss, r1), si = fit_slope(epss, inv);
        ck.add("R_1 slope", std::abs(s1 - 1.0) <= 0.15, fmt(s1) + " vs 1");
        if (r2.size() == epss.size()) {
            double s2 = fit_slope(epss, r2);
            ck.add("R_2 slope", std::abs(s2 - 1.5) <= 0.15, fmt(s2) + " vs 3/2");
        }
        ck.add("invariant defect slope", si >= 1.5, fmt(si) + " >= 1.5");
    }
    return ck.code();
}

int cmd_stability(const Common& c) {
    Config cfg = load_config(c);
    if (!cfg.has("seed")) cfg.set("seed", std::to_string(c.seed));
    ExperimentConfig ex = experiment_config_from(cfg);
    ex.validate();
    auto factors = cfg.get_list("mu_factors", {1.0});
    Breather b = stability_breather(ex);
    BreatherFamily fam = BreatherFamily::build(b, ex.family_width, ex.family_nodes, ex.harmonics);
    std::vector<StabilityRecord> recs(factors.size());
    std::vector<std::future<void>> jobs;
    size_t next = 0;
    auto run_one = [&](size_t i) {
        ExperimentConfig e = ex;
        e.mu = ex.mu_value() * factors[i];
        recs[i] = run_stability(e, b, fam);
    };
    while (next < factors.size()) {
        jobs.clear();
        for (int t = 0; t < std::max(1, c.threads) && next < factors.size(); ++t, ++next)
            jobs.push_back(std::async(std::launch::async, run_one, next));
        for (auto& j : jobs) j.get();
    }
    Checks ck;
    for (size_t i = 0; i < recs.size(); ++i) {
        const auto& r = recs[i];
        ExperimentConfig e = ex;
        e.mu = r.mu;
        std::ostringstream name;
        name << "stability_mu" << r.mu;
        auto os = open_out(c, name.str() + ".csv");
        write_stability_csv(os, r);
        auto ss = open_out(c, name.str() + "_summary.csv");
        write_stability_summary(ss, r, e);
        std::string tag = " (mu=" + fmt(r.mu) + ")";
        ck.add("residual bound" + tag, r.max_residual_ratio <= 5.0, "max |xi|/mu " + fmt(r.max_residual_ratio));
        double bound = 10.0 * r.mu * r.mu / std::sqrt(ex.eps);
        ck.add("drift bound" + tag, r.drift() <= bound, fmt(r.drift()) + " <= " + fmt(bound));
        ck.add("energy" + tag, r.energy_drift < 1e-7, "relative drift " + fmt(r.energy_drift));
    }
    for (size_t i = 0; i < recs.size(); ++i)
        for (size_t j = 0; j < recs.size(); ++j) {
            if (std::abs(factors[j] - 0.5 * factors[i]) > 1e-12) continue;
            double dr = recs[i].drift() / recs[j].drift();
            double nr = recs[i].spacetime[0] / recs[j].spacetime[0];
            ck.add("drift ratio", std::abs(dr / 4.0 - 1.0) <= 0.30, fmt(dr) + " vs 4");
            ck.add("space-time ratio", std::abs(nr / 2.0 - 1.0) <= 0.25, fmt(nr) + " vs 2");
        }
    return ck.code();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete breathers: construction, normal form, dispersive estimates, stability"};
    Common common;
    app.add_option("--seed", common.seed, "random seed");
    app.add_option("--out-dir", common.out_dir, "output directory");
    app.add_option("--threads", common.threads, "concurrent runs in parameter sweeps")->check(CLI::PositiveNumber);
    auto add_cfg = [&](CLI::App* s) {
        s->add_option("-c,--config", common.config_path, "key = value config file");
        s->add_option("--set", common.overrides, "override a config key (key=value)");
    };
    auto* breather = app.add_subcommand("breather", "breather construction");
    auto* find = breather->add_subcommand("find", "continue a breather from the anti-continuum limit");
    add_cfg(find);
    breather->require_subcommand(1);
    auto* propagate = app.add_subcommand("propagate", "exact linear flow");
    auto* decay = app.add_subcommand("decay-fit", "dispersive decay slope");
    auto* vdc = app.add_subcommand("vdc-check", "oscillatory integral decay");
    auto* resolvent = app.add_subcommand("resolvent-check", "resolvent kernel and expansions");
    auto* nform = app.add_subcommand("normal-form", "normalization steps and residual scaling");
    auto* stab = app.add_subcommand("stability", "perturbed breather evolution");
    for (auto* s : {propagate, decay, vdc, resolvent, nform, stab}) add_cfg(s);
    app.require_subcommand(1);
    CLI11_PARSE(app, argc, argv);
    try {
        if (*find) return cmd_breather_find(common);
        if (*propagate) return cmd_propagate(common);
        if (*decay) return cmd_decay_fit(common);
        if (*vdc) return cmd_vdc_check(common);
        if (*resolvent) return cmd_resolvent_check(common);
        if (*nform) return cmd_normal_form(common);
        if (*stab) return cmd_stability(common);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 2;
}
