#include <cmath>
#include <complex>
#include <numbers>
#include <sstream>

#include <doctest.h>

#include "breathers/breather.hpp"
#include "breathers/integrator.hpp"

using namespace breathers;
using doctest::Approx;

namespace {

const ActionAngleChart& chart() {
    static const ActionAngleChart c(PotentialSpec::monomial(8), 0.2, 0.6, 256);
    return c;
}

const Breather& seed16() {
    static const Breather b = anti_continuum_seed(chart(), 0.4, 16);
    return b;
}

double off_center_ratio(const Breather& b) {
    double a0 = 0.0, a1 = 0.0;
    for (const auto& s : b.orbit) {
        a0 = std::max(a0, std::abs(s.q_at(0)));
        a1 = std::max(a1, std::abs(s.q_at(1)));
    }
    return a1 / a0;
}

}  // namespace

TEST_CASE("anti-continuum seed") {
    const Breather& b = seed16();
    // period quadrature at 40 digits
    CHECK(b.T == Approx(4.5050096734891623027).epsilon(1e-10));
    CHECK(b.eps == 0.0);
    for (int k = -16; k <= 16; ++k) {
        if (k == 0) continue;
        CHECK(b.x0.q_at(k) == 0.0);
        CHECK(b.x0.p_at(k) == 0.0);
    }
    LatticeState y = flow(b.x0, b.V, 0.0, b.T, 0.0015);
    CHECK(norm(y - b.x0, 2.0) < 1e-9);
    for (int k = 1; k <= 16; ++k) CHECK(y.q_at(k) == 0.0);
    CHECK(b.loc.degenerate);
    CHECK(distance_to_unperturbed(b) == Approx(0.0).epsilon(1e-12));

    ActionAngleChart harmonic(PotentialSpec::zero(), 0.2, 0.6, 64);
    Breather h = anti_continuum_seed(harmonic, 0.4, 4);
    CHECK(h.T == Approx(2 * std::numbers::pi).epsilon(1e-12));
    CHECK(nonresonance_margin(harmonic, 0.2, 0.6, 64) == Approx(0.0).epsilon(1e-12));
}

TEST_CASE("decoupled Floquet spectrum") {
    const Breather& b = seed16();
    FloquetReport fr = floquet_spectrum(b);
    // Jordan pair at 1, split by the square root of the period error
    CHECK(std::abs(fr.trivial[0] - 1.0) < 5e-3);
    CHECK(std::abs(fr.trivial[1] - 1.0) < 5e-3);
    const std::complex<double> rot = std::exp(std::complex<double>(0.0, b.T));
    int near = 0;
    for (const auto& l : fr.eigenvalues)
        if (std::min(std::abs(l - rot), std::abs(l - std::conj(rot))) < 1e-8) ++near;
    CHECK(near == 64);
    CHECK(fr.reciprocity < 1e-8);
    CHECK(fr.symplectic_defect < 1e-10);
}

TEST_CASE("continuation returns the seed at zero coupling") {
    Breather b = continue_breather(seed16(), 0.0, 0.01);
    CHECK(norm(b.x0 - seed16().x0, 2.0) == 0.0);
    CHECK_THROWS(continue_breather(seed16(), 0.02, 0.0));
}

TEST_CASE("breather at eps = 0.05 on 64 sites") {
    ActionAngleChart c(PotentialSpec::monomial(8), 0.2, 0.6, 256);
    Breather b = continue_breather(anti_continuum_seed(c, 0.4, 64), 0.05, 0.01);
    CHECK(b.defect < 1e-10);
    CHECK(b.newton_steps <= 8);
    CHECK(b.T == Approx(4.5050096734891623027).epsilon(1e-10));
    CHECK(b.x0.p_at(0) == Approx(0.0).epsilon(1e-12));
    CHECK(b.loc.r2 > 0.99);
    for (int k = 1; k <= 64; ++k) CHECK(b.x0.q_at(k) == Approx(b.x0.q_at(-k)).epsilon(1e-9));
    FloquetReport fr = floquet_spectrum(b);
    CHECK(fr.max_excess < 1e-6);
    CHECK(fr.reciprocity < 1e-8);
    CHECK(std::isfinite(distance_to_unperturbed(b, {2.0, WeightSpec::expo(1, 0.5 * b.loc.beta_hat)})));
    std::stringstream ss;
    write_breather_csv(ss, b);
    std::string header;
    std::getline(ss, header);
    CHECK(header.rfind("# I_label=", 0) == 0);
    CHECK(read_state_csv(ss).N == 64);
}

TEST_CASE("coupling response and localization") {
    std::vector<double> ratio, beta;
    Breather cur = seed16();
    for (double e : {0.02, 0.04, 0.08}) {
        cur = continue_breather(cur, e, 0.01);
        ratio.push_back(off_center_ratio(cur));
        beta.push_back(cur.loc.beta_hat);
        CHECK(cur.loc.r2 > 0.99);
    }
    CHECK(ratio[1] / ratio[0] == Approx(2.0).epsilon(0.1));
    CHECK(beta[0] > beta[1]);
    CHECK(beta[1] > beta[2]);
}

TEST_CASE("polish rejects a state without site 0") {
    CHECK_THROWS(polish_breather(LatticeState(4, false), PotentialSpec::monomial(8), 0.05, 4.5));
}
