#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <doctest.h>

#include "breathers/config.hpp"
#include "breathers/experiments.hpp"
#include "breathers/integrator.hpp"

using namespace breathers;
using doctest::Approx;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.N = 128;
    c.eps_T = 5.0;
    c.family_N = 32;
    c.family_nodes = 7;
    return c;
}

struct Setup {
    Breather b;
    BreatherFamily fam;
};

const Setup& setup() {
    static const Setup s = [] {
        ExperimentConfig c = small_config();
        Setup out;
        out.b = stability_breather(c);
        out.fam = BreatherFamily::build(out.b, c.family_width, c.family_nodes, c.harmonics);
        return out;
    }();
    return s;
}

}  // namespace

TEST_CASE("config validation") {
    ExperimentConfig c;
    CHECK(c.mu_value() == Approx(std::pow(0.05, 0.6)));
    CHECK(c.horizon() == Approx(2000.0));
    CHECK_NOTHROW(c.validate());
    ExperimentConfig big = c;
    big.mu = 1.01 * c.mu_value();
    CHECK_THROWS(big.validate());
    ExperimentConfig d = c;
    d.delta = 0.5;
    CHECK_THROWS(d.validate());
    ExperimentConfig n = c;
    n.N = 400;
    CHECK_THROWS(n.validate());
    ExperimentConfig p = c;
    p.norms = {{6.0, 14.0}};
    CHECK_THROWS(p.validate());

    std::istringstream is("eps = 0.04\nmu = 0.01\nnorm_q = 7, inf\nnorm_r = 14, 2\nprojection = symplectic\n");
    ExperimentConfig e = experiment_config_from(Config::parse(is));
    CHECK(e.eps == 0.04);
    CHECK(e.mu_value() == 0.01);
    REQUIRE(e.norms.size() == 2);
    CHECK(std::isinf(e.norms[1].q_exp));
    CHECK(e.projection == Projection::symplectic);
}

TEST_CASE("breather family") {
    const Setup& s = setup();
    const BreatherFamily& fam = s.fam;
    CHECK(fam.T_lo() < s.b.T);
    CHECK(fam.T_hi() > s.b.T);
    Eigen::VectorXd x = fam.point(s.b.T, 0.0);
    CHECK((x - s.b.x0.flat()).norm() < 1e-8);
    CHECK(fam.action(s.b.T) == Approx(s.b.I_label).epsilon(1e-8));
    // the family point flows into itself along the phase
    Eigen::VectorXd y = fam.point(s.b.T, 1.0);
    LatticeState z = flow(s.b.x0, s.b.V, s.b.eps, s.b.T / (2 * std::numbers::pi), 0.0015);
    CHECK((y - z.flat()).norm() < 1e-8);
    Eigen::VectorXd dT, dphi;
    fam.point(s.b.T, 0.3, &dT, &dphi);
    const double h = 1e-5;
    CHECK((dT - (fam.point(s.b.T + h, 0.3) - fam.point(s.b.T - h, 0.3)) / (2 * h)).norm() < 1e-6 * dT.norm());
    CHECK((dphi - (fam.point(s.b.T, 0.3 + h) - fam.point(s.b.T, 0.3 - h)) / (2 * h)).norm() < 1e-6 * dphi.norm());
    CHECK(std::isfinite(fam.dT_dI(s.b.T)));
}

TEST_CASE("perturbation") {
    const Setup& s = setup();
    LatticeState x0 = perturb(s.b, s.fam, 0.0, PerturbShape::localized, 1, 128);
    CHECK(norm(x0 - resize_lattice(s.b.x0, 128), 2.0) == 0.0);
    const double mu = 0.05;
    LatticeState a = perturb(s.b, s.fam, mu, PerturbShape::localized, 1, 128);
    LatticeState c = perturb(s.b, s.fam, mu, PerturbShape::localized, 2, 128);
    LatticeState base = resize_lattice(s.b.x0, 128);
    CHECK(norm(a - base, 2.0) == Approx(mu).epsilon(1e-14));
    CHECK(norm(c - base, 2.0) == Approx(mu).epsilon(1e-14));
    CHECK(norm(a - c, 2.0) > 0.01 * mu);
    Eigen::VectorXd g = gradient(base, s.b.V, s.b.eps).flat();
    CHECK(std::abs(g.dot((a - base).flat())) < 1e-12 * g.norm() * mu);
    LatticeState w = perturb(s.b, s.fam, mu, PerturbShape::spread, 1, 128);
    CHECK(std::abs(w.q_at(100) - base.q_at(100)) + std::abs(w.p_at(100) - base.p_at(100)) > 0.0);
    CHECK(a.q_at(100) == base.q_at(100));
    CHECK_THROWS(perturb(s.b, s.fam, -1.0, PerturbShape::localized, 1, 128));
}

TEST_CASE("modulation tracking") {
    const Setup& s = setup();
    LatticeState on = resize_lattice(s.b.x0, 128);
    for (Projection p : {Projection::l2, Projection::symplectic}) {
        Modulation m = track_modulation(on, s.fam, nullptr, p);
        CHECK(m.I_bar == Approx(s.b.I_label).epsilon(1e-8));
        CHECK(m.residual_l2 < 1e-8);
    }
    // phase equivariance
    Modulation m0 = track_modulation(on, s.fam);
    LatticeState later = flow(on, s.b.V, s.b.eps, 0.7, 0.0015);
    Modulation m1 = track_modulation(later, s.fam);
    CHECK(std::abs(std::remainder(m1.phase - m0.phase - 2 * std::numbers::pi * 0.7 / s.b.T, 2 * std::numbers::pi)) < 1e-7);
    CHECK(m1.I_bar == Approx(m0.I_bar).epsilon(1e-8));

    const double mu = 0.01;
    LatticeState k = perturb(s.b, s.fam, mu, PerturbShape::localized, 3, 128);
    Modulation mk = track_modulation(k, s.fam);
    CHECK(mk.residual_l2 <= mu * (1 + 1e-9));
    CHECK(std::abs(mk.I_bar - s.b.I_label) < 10 * mu * mu);
    Modulation ms = track_modulation(k, s.fam, &mk, Projection::symplectic);
    CHECK(std::abs(ms.I_bar - s.b.I_label) < 10 * mu * mu);
}

TEST_CASE("stability run without perturbation") {
    const Setup& s = setup();
    ExperimentConfig c = small_config();
    c.mu = 0.0;
    StabilityRecord r = run_stability(c, s.b, s.fam);
    CHECK(r.t.size() == 101);
    for (double d : r.dist[0]) CHECK(d < 1e-7);
    CHECK(r.drift() < 1e-7);
    CHECK(r.energy_drift < 1e-7);
    for (size_t i = 1; i < r.t.size(); ++i) CHECK(r.t[i] > r.t[i - 1]);
}

TEST_CASE("stability run and report") {
    const Setup& s = setup();
    ExperimentConfig c = small_config();
    c.mu = 0.5 * c.mu_value();
    c.norms = {{7.0, 14.0}, {kInf, 2.0}};
    StabilityRecord r = run_stability(c, s.b, s.fam);
    CHECK(r.max_residual_ratio < 5.0);
    CHECK(r.energy_drift < 1e-7);
    CHECK(r.spacetime[1] == Approx(*std::max_element(r.residual_l2.begin(), r.residual_l2.end())).epsilon(1e-12));
    CHECK(r.cauchy.size() == 5);
    CHECK(r.local_L2 > 0.0);
    for (double v : r.I_bar) CHECK(std::isfinite(v));

    std::stringstream ss;
    write_stability_csv(ss, r);
    StabilityRecord back = read_stability_csv(ss);
    REQUIRE(back.t.size() == r.t.size());
    for (size_t i = 0; i < r.t.size(); ++i) {
        CHECK(back.I_bar[i] == r.I_bar[i]);
        CHECK(back.dist[0][i] == r.dist[0][i]);
    }
    CHECK(std::isinf(back.norms[1].q_exp));
    double offline = slow_time_norm(back.t, back.dist[0], 7.0, c.eps);
    CHECK(offline == Approx(r.spacetime[0]).epsilon(1e-12));

    std::stringstream sum;
    write_stability_summary(sum, r, c);
    CHECK(sum.str().find("drift_over_mu2_sqrteps") != std::string::npos);

    StabilityRecord empty;
    empty.norms = {{7.0, 14.0}};
    empty.dist.assign(1, {});
    std::stringstream es;
    write_stability_csv(es, empty);
    CHECK(es.str() == "t,I_bar,phase,residual_l2,dist_7_14\n");
    StabilityRecord eb = read_stability_csv(es);
    CHECK(eb.t.empty());
    CHECK(eb.norms.size() == 1);
}

TEST_CASE("slow time norm") {
    std::vector<double> t = {0.0, 1.0, 2.0, 3.0}, f = {2.0, 2.0, 2.0, 2.0};
    CHECK(slow_time_norm(t, f, 7.0, 0.1) == Approx(2.0 * std::pow(0.3, 1.0 / 7.0)));
    CHECK(slow_time_norm(t, f, kInf, 0.1) == 2.0);
    CHECK(slow_time_norm(t, f, 2.0, 0.1, 1.0, 3.0) == Approx(2.0 * std::sqrt(0.2)));
    CHECK(slow_time_norm({}, {}, 2.0, 0.1) == 0.0);
}
