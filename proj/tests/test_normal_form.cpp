#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <doctest.h>

#include "breathers/breather.hpp"
#include "breathers/fit.hpp"
#include "breathers/integrator.hpp"
#include "breathers/normal_form.hpp"

using namespace breathers;
using doctest::Approx;

namespace {

constexpr int kN = 2;
constexpr int kD = 6;

std::shared_ptr<const NFGrid> grid() {
    static auto g = NFGrid::make(0.35, 0.45, 12, 32);
    return g;
}

// modes |n| <= band, each a quadratic polynomial in I
FourierCoef random_coef(std::mt19937_64& rng, int band, double scale = 1.0, int I_degree = 2) {
    const NFGrid& g = *grid();
    std::normal_distribution<double> nd(0.0, scale);
    FourierCoef c = FourierCoef::zero(g);
    c.band = band;
    for (int n = -band; n <= band; ++n) {
        cplx a[3] = {{nd(rng), nd(rng)}, {nd(rng), nd(rng)}, {nd(rng), nd(rng)}};
        for (int j = 0; j < g.nI; ++j) {
            double x = (g.nodes[j] - 0.4) / 0.05;
            cplx v = a[0];
            if (I_degree >= 1) v += a[1] * x;
            if (I_degree >= 2) v += a[2] * x * x;
            c.c(j, n + g.M) = v;
        }
    }
    return c;
}

Monomial random_monomial(std::mt19937_64& rng, int degree) {
    std::uniform_int_distribution<int> var(0, 4 * kN - 1);
    Monomial m;
    for (int i = 0; i < degree; ++i) m.push_back(static_cast<std::uint8_t>(var(rng)));
    std::sort(m.begin(), m.end());
    return m;
}

GradedHamiltonian random_hamiltonian(std::mt19937_64& rng, int max_degree, int n_terms) {
    GradedHamiltonian h(grid(), kN, kD);
    std::uniform_int_distribution<int> deg(0, max_degree), band(0, 2);
    for (int i = 0; i < n_terms; ++i) h.add(random_monomial(rng, deg(rng)), random_coef(rng, band(rng)));
    return h;
}

double scale_of(const GradedHamiltonian& a, const GradedHamiltonian& b, const GradedHamiltonian& c) {
    return std::max({1.0, a.majorant() * b.majorant() * c.majorant()});
}

const ActionAngleChart& chart() {
    static const ActionAngleChart c(PotentialSpec::monomial(8), 0.175, 0.675, 256);
    return c;
}

}  // namespace

TEST_CASE("grid differentiation and interpolation") {
    auto g = grid();
    Eigen::VectorXd f = g->nodes.array().pow(5);
    Eigen::VectorXd df = 5.0 * g->nodes.array().pow(4);
    CHECK((g->D * f - df).cwiseAbs().maxCoeff() < 1e-10);
    CHECK(g->interp(0.4123) * f == Approx(std::pow(0.4123, 5)).epsilon(1e-13));
    CHECK(g->nodes[0] == Approx(0.35));
    CHECK(g->nodes[11] == Approx(0.45));
}

TEST_CASE("band-limited product") {
    const NFGrid& g = *grid();
    FourierCoef a = FourierCoef::zero(g), b = FourierCoef::zero(g);
    a.band = b.band = 1;
    a.c.col(g.M + 1).setConstant(0.5);
    a.c.col(g.M - 1).setConstant(0.5);
    b.c.col(g.M + 1).setConstant(cplx(0.0, -0.5));
    b.c.col(g.M - 1).setConstant(cplx(0.0, 0.5));
    double dropped = 0.0;
    FourierCoef p = multiply(a, b, g.M, &dropped);
    // cos(a) sin(a) = sin(2a) / 2
    for (double al : {0.0, 0.7, 2.1}) CHECK(std::abs(p.eval(g, 0.4, al) - 0.5 * std::sin(2 * al)) < 1e-15);
    CHECK(dropped == 0.0);
    CHECK(p.band == 2);
}

TEST_CASE("Poisson bracket conventions") {
    auto g = grid();
    GradedHamiltonian I = nf_action(g, kN, kD);
    FourierCoef e = FourierCoef::zero(*g);
    e.band = 1;
    e.c.col(g->M + 1).setConstant(1.0);
    GradedHamiltonian ea = nf_function(g, kN, kD, e);
    // {I, e^{i alpha}} = i e^{i alpha}, i.e. {I, alpha} = 1
    GradedHamiltonian b = poisson_bracket(I, ea);
    GradedHamiltonian expect = ea;
    expect *= cplx(0.0, 1.0);
    CHECK((b - expect).majorant() < 1e-12);

    GradedHamiltonian zw(g, kN, kD), z(g, kN, kD);
    zw.add({var_z(1), var_w(1)}, FourierCoef::constant(*g, 1.0));
    z.add({var_z(1)}, FourierCoef::constant(*g, 1.0));
    GradedHamiltonian r = poisson_bracket(zw, z);
    GradedHamiltonian iz = z;
    iz *= cplx(0.0, 1.0);
    CHECK((r - iz).majorant() < 1e-15);

    // p_k plays the role of I and q_k that of alpha: {p_k, q_k} = 1
    GradedHamiltonian qp = poisson_bracket(nf_p(g, kN, kD, 1), nf_q(g, kN, kD, 1));
    const FourierCoef* c = qp.find({});
    REQUIRE(c != nullptr);
    CHECK(std::abs(c->c(0, g->M) - 1.0) < 1e-15);
}

TEST_CASE("Poisson antisymmetry and Jacobi") {
    std::mt19937_64 rng(42);
    double worst_anti = 0.0, worst_jac = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        auto f = random_hamiltonian(rng, 2, 3), g = random_hamiltonian(rng, 2, 3), h = random_hamiltonian(rng, 2, 3);
        worst_anti = std::max(worst_anti, (poisson_bracket(f, g) + poisson_bracket(g, f)).majorant() /
                                              std::max(1.0, f.majorant() * g.majorant()));
        auto j = poisson_bracket(f, poisson_bracket(g, h)) + poisson_bracket(g, poisson_bracket(h, f)) +
                 poisson_bracket(h, poisson_bracket(f, g));
        worst_jac = std::max(worst_jac, j.majorant() / scale_of(f, g, h));
        CHECK(j.dropped == 0.0);
    }
    CHECK(worst_anti < 1e-10);
    CHECK(worst_jac < 1e-10);
}

TEST_CASE("Leibniz rule") {
    std::mt19937_64 rng(7);
    auto f = random_hamiltonian(rng, 1, 3), g = random_hamiltonian(rng, 1, 3), h = random_hamiltonian(rng, 2, 3);
    auto lhs = poisson_bracket(multiply(f, g), h);
    auto rhs = multiply(poisson_bracket(f, h), g) + multiply(f, poisson_bracket(g, h));
    CHECK((lhs - rhs).majorant() < 1e-10 * scale_of(f, g, h));
}

TEST_CASE("grade splitting") {
    auto g = grid();
    GradedHamiltonian zw(g, kN, kD);
    for (int s = 0; s < 2 * kN; ++s) zw.add({var_z(s), var_w(s)}, FourierCoef::constant(*g, 1.0));
    Parts p = split_parts(zw);
    CHECK(p.f0.terms.empty());
    CHECK(p.f1.terms.empty());
    CHECK((p.f2 - zw).majorant() == 0.0);

    Eigen::VectorXd vals = g->nodes.array().square();
    GradedHamiltonian fI = nf_function(g, kN, kD, FourierCoef::of_I(*g, vals));
    Parts q = split_parts(fI);
    CHECK((q.f0 - fI).majorant() == 0.0);
    CHECK((q.mean.c - FourierCoef::of_I(*g, vals).c).norm() == 0.0);
    CHECK(q.f2.terms.empty());

    NormalFormConfig cfg;
    InitialDecomposition init = build_initial(chart(), 0.05, cfg);
    Parts r = split_parts(init.R1);
    CHECK((r.f1 - init.R1).majorant() == 0.0);
    CHECK(r.f0.terms.empty());
    CHECK(r.f2.terms.empty());
}

TEST_CASE("cohomological equation") {
    auto g = grid();
    const double w = 1.3;
    Eigen::VectorXd hs = w * g->nodes, omega = Eigen::VectorXd::Constant(g->nI, w);
    FourierCoef cosa = FourierCoef::zero(*g);
    cosa.band = 1;
    cosa.c.col(g->M + 1).setConstant(0.5);
    cosa.c.col(g->M - 1).setConstant(0.5);
    GradedHamiltonian Psi = nf_function(g, kN, kD, cosa);
    GradedHamiltonian chi = solve_cohomological(omega, Psi);
    for (double al : {0.0, 0.4, 2.5})
        CHECK(std::abs(chi.evaluate(0.4, al, Eigen::VectorXcd::Zero(4), Eigen::VectorXcd::Zero(4)) -
                       std::sin(al) / w) < 1e-14);

    GradedHamiltonian none = solve_cohomological(omega, GradedHamiltonian(g, kN, kD));
    CHECK(none.terms.empty());

    std::mt19937_64 rng(11);
    double worst = 0.0, mind = 0.0;
    for (int t = 0; t < 100; ++t) {
        GradedHamiltonian P(g, kN, kD);
        FourierCoef c0 = random_coef(rng, 5);
        c0.c.col(g->M).setZero();
        P.add({}, c0);
        for (int s = 0; s < 2 * kN; ++s) {
            P.add({var_z(s)}, random_coef(rng, 5));
            P.add({var_w(s)}, random_coef(rng, 5));
        }
        GradedHamiltonian x = solve_cohomological(omega, P, 1e-3, &mind);
        worst = std::max(worst, cohomological_residual(hs, x, P).majorant() / P.majorant());
    }
    CHECK(worst < 1e-10);
    CHECK(mind > 0.0);

    GradedHamiltonian mean = nf_function(g, kN, kD, FourierCoef::constant(*g, 1.0));
    CHECK_THROWS_AS(solve_cohomological(omega, mean), std::invalid_argument);
    GradedHamiltonian quad(g, kN, kD);
    quad.add({var_z(0), var_z(1)}, FourierCoef::constant(*g, 1.0));
    CHECK_THROWS_AS(solve_cohomological(omega, quad), std::invalid_argument);
    // n omega - 1 = 0 at omega = 1/2, n = 2
    GradedHamiltonian res(g, kN, kD);
    FourierCoef c2 = FourierCoef::zero(*g);
    c2.band = 2;
    c2.c.col(g->M + 2).setConstant(1.0);
    res.add({var_w(0)}, c2);
    CHECK_THROWS_AS(solve_cohomological(Eigen::VectorXd::Constant(g->nI, 0.5), res), ResonanceError);
}

TEST_CASE("Lie transform") {
    auto g = grid();
    std::mt19937_64 rng(3);
    auto H = random_hamiltonian(rng, 2, 4);
    LieResult id = lie_transform(H, GradedHamiltonian(g, kN, kD), 8);
    CHECK((id.H - H).majorant() == 0.0);
    CHECK(id.remainder == 0.0);

    FourierCoef c = random_coef(rng, 2, 0.1, 0);
    GradedHamiltonian chi = nf_function(g, kN, kD, c);
    GradedHamiltonian I = nf_action(g, kN, kD);
    LieResult one = lie_transform(I, chi, 1);
    // with {I, alpha} = 1 the first term is {chi, I} = -d_alpha chi
    GradedHamiltonian expect = I - nf_function(g, kN, kD, c.d_alpha());
    // exact up to the round-off of the spectral d/dI
    CHECK((one.H - expect).majorant() < 1e-12);
    CHECK(one.remainder < 1e-9);
    GradedHamiltonian quad(g, kN, kD);
    quad.add({var_z(0), var_w(0)}, FourierCoef::constant(*g, 1.0));
    CHECK_THROWS(lie_transform(I, quad, 2));
}

TEST_CASE("Lie transform is canonical") {
    auto g = grid();
    std::mt19937_64 rng(5);
    GradedHamiltonian chi = nf_function(g, kN, kD, random_coef(rng, 1, 0.002, 1));
    for (int s = 0; s < 2 * kN; ++s) {
        FourierCoef a = FourierCoef::constant(*g, cplx(0.02 * (s + 1), -0.01));
        chi.add({var_z(s)}, a);
        chi.add({var_w(s)}, a.conj_reflect());
    }
    double worst = 0.0;
    for (int t = 0; t < 5; ++t) {
        auto f = random_hamiltonian(rng, 2, 3), h = random_hamiltonian(rng, 2, 3);
        auto lhs = poisson_bracket(lie_transform(f, chi, 14).H, lie_transform(h, chi, 14).H);
        auto rhs = lie_transform(poisson_bracket(f, h), chi, 14).H;
        worst = std::max(worst, (lhs - rhs).majorant() / std::max(1.0, f.majorant() * h.majorant()));
    }
    CHECK(worst < 1e-8);
}

TEST_CASE("initial decomposition") {
    NormalFormConfig cfg;
    InitialDecomposition init = build_initial(chart(), 0.05, cfg);
    CHECK(init.q0_tail < 1e-12);
    CHECK(init.full.reality_defect() < 1e-12);
    const NFGrid& g = init.full.grid();
    CHECK(init.q0.eval(g, 0.4, 0.0).real() ==
          Approx(turning_points(PotentialSpec::monomial(8), chart().h0(0.4)).second).epsilon(1e-10));
    // R0 is a square of q0, so it carries at most twice its bandwidth
    const FourierCoef* r0 = init.R0.find({});
    REQUIRE(r0 != nullptr);
    CHECK(r0->band <= 2 * init.q0.band);
    for (const auto& [m, c] : init.R0.terms) CHECK(m.empty());
    for (const auto& [m, c] : init.R1.terms) CHECK(m.size() == 1);
    CHECK(init.hs0[4] == Approx(chart().h0(g.nodes[4])).epsilon(1e-12));

    ActionAngleChart harmonic(PotentialSpec::zero(), 0.175, 0.675, 128);
    InitialDecomposition h = build_initial(harmonic, 0.05, cfg);
    for (int n = -cfg.M; n <= cfg.M; ++n) {
        double m = h.q0.mode(n).cwiseAbs().maxCoeff();
        if (std::abs(n) == 1)
            CHECK(m > 0.1);
        else
            CHECK(m < 1e-12);
    }
    for (const auto& [mono, c] : h.R1.terms)
        for (int n = -cfg.M; n <= cfg.M; ++n)
            if (std::abs(n) != 1) CHECK(c.mode(n).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("normalization at zero coupling") {
    NormalFormConfig cfg;
    NormalFormResult res = normalize(build_initial(chart(), 0.0, cfg), cfg);
    for (const auto& s : res.steps) CHECK(s.invariant_defect == 0.0);
    ActionAngleChart wide(PotentialSpec::monomial(8), 0.2, 0.6, 256);
    LatticeState x = reconstruct_breather_from_nf(res, wide, 0.4, 0.0, 8);
    Breather seed = anti_continuum_seed(wide, 0.4, 8);
    CHECK(norm(x - seed.x0, 2.0) < 1e-12);
    CHECK(normalized_frequency(res, 0.4) == Approx(wide.omega0(0.4)).epsilon(1e-8));
}

TEST_CASE("normalization steps") {
    NormalFormConfig cfg;
    std::vector<double> eps = {0.0125, 0.025, 0.05, 0.1}, shift;
    for (double e : eps) {
        NormalFormResult res = normalize(build_initial(chart(), e, cfg), cfg);
        REQUIRE(res.steps.size() == 3);
        CHECK(res.steps[1].cohomological_residual < 1e-10);
        CHECK(res.steps[2].cohomological_residual < 1e-10);
        CHECK(res.steps[2].deg0_norm < res.steps[1].deg0_norm);
        CHECK(res.steps[1].deg1_norm < res.steps[0].deg1_norm);
        CHECK(res.H.reality_defect() < 1e-9);
        double worst = 0.0;
        for (double a : {0.0, 1.0, 2.0, 3.0, 4.0, 5.0}) {
            auto [I0, a0] = transformed_action_angle(res, 0.4, a);
            worst = std::max(worst, std::abs(std::remainder(a0 - a, 2 * std::numbers::pi)));
        }
        shift.push_back(worst);
        std::stringstream ss;
        write_normalization_csv(ss, res);
        std::string line;
        int rows = 0;
        while (std::getline(ss, line)) ++rows;
        CHECK(rows == 4);
    }
    CHECK(fit_loglog(eps, shift).slope >= 0.5);
}
